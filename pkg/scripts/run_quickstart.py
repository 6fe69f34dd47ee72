#!/usr/bin/env python3
"""Run the shipped quickstart experiment: two small TCNs on synthetic data.

Equivalent to `gaitwave run configs/quickstart.json`; extra CLI flags are
passed through (e.g. --jobs 2, --resume).
"""

import sys
from pathlib import Path

from gaitwave.cli import entrypoint

if __name__ == "__main__":
    config = Path(__file__).resolve().parent.parent / "configs" / "quickstart.json"
    sys.exit(entrypoint(["run", str(config), *sys.argv[1:]]))
