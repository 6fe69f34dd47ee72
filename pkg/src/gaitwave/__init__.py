"""Cross-band Wi-Fi CSI gait identification benchmark toolkit."""

__version__ = "0.1.0"
