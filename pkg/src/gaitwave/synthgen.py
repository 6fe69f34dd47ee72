"""Deterministic synthetic gait-CSI generator with a nearest-template oracle.

Each class is a fixed harmonic series: a fundamental "cadence" frequency plus
integer harmonics, with per-channel amplitudes and phases drawn once from the
seed. This is deliberately not a channel-physics simulator — it exists to give
the rest of the pipeline a dataset whose ground truth is known in closed form.

The oracle (``build_templates`` / ``oracle_classify``) is a brute-force
nearest-neighbour over noiseless magnitude spectra and shares no code with the
neural models, so it can arbitrate whether a dataset is separable at all.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .csi_data import (
    BAND_CHANNELS,
    BANDS,
    CsiRecording,
    DatasetManifest,
    ManifestEntry,
    save_manifest,
    write_recording,
)
from .errors import SpecError

MIN_CLASS_FREQ_GAP_HZ = 0.05
CLIP_WARN_FRACTION = 0.01


class ClippingWarning(UserWarning):
    """More than CLIP_WARN_FRACTION of generated samples were clipped at 0."""


@dataclass(frozen=True)
class SynthSpec:
    """Parameters of one synthetic dataset (single band)."""

    num_classes: int = 5
    sessions_per_class: int = 2
    duration_s: float = 60.0
    rate_hz: float = 10.0
    num_channels: int = 30
    band: str = "mmwave"
    gait_freq_range: tuple[float, float] = (0.6, 1.8)
    harmonic_count: int = 2
    noise_std: float = 0.1
    signal_amplitude: float = 1.0
    background_level: tuple[float, ...] | float = 3.0
    seed: int = 0

    def __post_init__(self):
        if self.num_classes < 2:
            raise SpecError(f"need at least 2 classes, got {self.num_classes}")
        if self.sessions_per_class < 1:
            raise SpecError("sessions_per_class must be >= 1")
        if self.duration_s <= 0 or self.rate_hz <= 0:
            raise SpecError("duration_s and rate_hz must be positive")
        if self.band not in BANDS:
            raise SpecError(f"unknown band {self.band!r}")
        if self.num_channels not in BAND_CHANNELS[self.band]:
            raise SpecError(
                f"band {self.band!r} implies {BAND_CHANNELS[self.band]} channels, "
                f"got {self.num_channels}"
            )
        lo, hi = self.gait_freq_range
        if not 0 < lo <= hi:
            raise SpecError(f"bad gait_freq_range {self.gait_freq_range}")
        if hi >= self.rate_hz / 2:
            raise SpecError(
                f"max gait frequency {hi} Hz is not below Nyquist ({self.rate_hz / 2} Hz)"
            )
        gap = (hi - lo) / (self.num_classes - 1)
        if gap < MIN_CLASS_FREQ_GAP_HZ:
            raise SpecError(
                f"class frequencies would be {gap:.4f} Hz apart; "
                f"need >= {MIN_CLASS_FREQ_GAP_HZ} Hz"
            )
        if self.harmonic_count < 1:
            raise SpecError("harmonic_count must be >= 1")
        if self.noise_std < 0 or self.signal_amplitude < 0:
            raise SpecError("noise_std and signal_amplitude must be >= 0")
        bg = np.broadcast_to(
            np.asarray(self.background_level, dtype=np.float64), (self.num_channels,)
        )
        if bg.min() < 0:
            raise SpecError("background_level must be >= 0")

    @property
    def num_samples(self) -> int:
        n = round(self.duration_s * self.rate_hz)
        if n < 1:
            raise SpecError("spec yields an empty recording")
        return n

    def background_array(self) -> np.ndarray:
        return np.broadcast_to(
            np.asarray(self.background_level, dtype=np.float64), (self.num_channels,)
        ).copy()


@dataclass(frozen=True)
class ClassSignature:
    """Ground-truth generative parameters for one class."""

    label: int
    frequency_hz: float
    amplitudes: np.ndarray = field(repr=False)  # [C x H]
    phases: np.ndarray = field(repr=False)  # [C x H]


def class_frequencies(spec: SynthSpec) -> np.ndarray:
    lo, hi = spec.gait_freq_range
    return np.linspace(lo, hi, spec.num_classes)


def class_signatures(spec: SynthSpec) -> list[ClassSignature]:
    """Draw each class's amplitude/phase profile once, deterministically.

    Harmonic h gets amplitude ~ U(0.5, 1.0) * signal_amplitude / h, so the
    fundamental dominates and the series decays like a crude cadence spectrum.
    """
    rng = np.random.default_rng([spec.seed, 1])
    freqs = class_frequencies(spec)
    sigs = []
    for k in range(spec.num_classes):
        shape = (spec.num_channels, spec.harmonic_count)
        base = rng.uniform(0.5, 1.0, size=shape) * spec.signal_amplitude
        decay = 1.0 / np.arange(1, spec.harmonic_count + 1, dtype=np.float64)
        amplitudes = base * decay[None, :]
        phases = rng.uniform(0.0, 2.0 * math.pi, size=shape)
        sigs.append(
            ClassSignature(label=k, frequency_hz=float(freqs[k]),
                           amplitudes=amplitudes, phases=phases)
        )
    return sigs


def class_signal(sig: ClassSignature, num_samples: int, rate_hz: float,
                 start_index: int = 0) -> np.ndarray:
    """Noiseless, background-free [T x C] harmonic signal for one class."""
    t = (np.arange(num_samples, dtype=np.float64) + start_index)[:, None, None] / rate_hz
    h = np.arange(1, sig.amplitudes.shape[1] + 1, dtype=np.float64)[None, None, :]
    arg = 2.0 * math.pi * h * sig.frequency_hz * t + sig.phases[None, :, :]
    return (sig.amplitudes[None, :, :] * np.sin(arg)).sum(axis=2)


def _clip_nonnegative(samples: np.ndarray, context: str) -> np.ndarray:
    clipped = np.count_nonzero(samples < 0)
    if clipped > CLIP_WARN_FRACTION * samples.size:
        warnings.warn(
            f"{context}: {clipped / samples.size:.1%} of samples clipped at 0 "
            f"(limit {CLIP_WARN_FRACTION:.0%}); amplitudes exceed the background floor",
            ClippingWarning,
            stacklevel=3,
        )
    return np.maximum(samples, 0.0)


def generate(spec: SynthSpec, out_dir: str | Path) -> DatasetManifest:
    """Write one recording per (class, session) plus a background recording.

    Files land in ``out_dir`` in the canonical format together with
    ``manifest.json``; the manifest is also returned. Bit-identical across
    runs for a fixed spec.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    background = spec.background_array()
    entries = []

    for sig in class_signatures(spec):
        clean = background[None, :] + class_signal(sig, spec.num_samples, spec.rate_hz)
        for sess in range(spec.sessions_per_class):
            noise_rng = np.random.default_rng([spec.seed, 2, sig.label, sess])
            noisy = clean + noise_rng.normal(0.0, spec.noise_std, size=clean.shape)
            session_id = f"{spec.band}-c{sig.label:02d}-s{sess:02d}"
            rec = CsiRecording(
                samples=_clip_nonnegative(noisy, session_id).astype(np.float32),
                rate_hz=spec.rate_hz,
                band=spec.band,
                session_id=session_id,
                person_label=sig.label,
            )
            path = out_dir / f"{session_id}.csi"
            write_recording(rec, path)
            entries.append(ManifestEntry(path=path.name, band=spec.band,
                                         rate_hz=spec.rate_hz, person_label=sig.label,
                                         is_background=False))

    bg_rng = np.random.default_rng([spec.seed, 3])
    bg_samples = background[None, :] + bg_rng.normal(
        0.0, spec.noise_std, size=(spec.num_samples, spec.num_channels)
    )
    bg_id = f"{spec.band}-background"
    bg_rec = CsiRecording(samples=_clip_nonnegative(bg_samples, bg_id).astype(np.float32),
                          rate_hz=spec.rate_hz, band=spec.band, session_id=bg_id,
                          person_label=None)
    write_recording(bg_rec, out_dir / f"{bg_id}.csi")
    entries.append(ManifestEntry(path=f"{bg_id}.csi", band=spec.band, rate_hz=spec.rate_hz,
                                 person_label=None, is_background=True))

    manifest = DatasetManifest(entries=tuple(entries), num_classes=spec.num_classes)
    save_manifest(manifest, out_dir / "manifest.json")
    return manifest


# ------------------------------------------------------------------- oracle

def build_templates(spec: SynthSpec, window_length: int) -> np.ndarray:
    """[K x F] channel-averaged magnitude spectra of the noiseless class signals."""
    templates = []
    for sig in class_signatures(spec):
        clean = class_signal(sig, window_length, spec.rate_hz)
        mag = np.abs(np.fft.rfft(clean, axis=0))
        templates.append(mag.mean(axis=1))
    return np.stack(templates)


def oracle_classify(samples: np.ndarray, templates: np.ndarray,
                    background: np.ndarray | None = None) -> int:
    """Nearest class by Euclidean distance in channel-averaged spectrum space.

    ``samples`` is one [L x C] window; pass the per-channel ``background``
    profile to remove the static floor before the FFT (templates are built
    from background-free signals). Ties break toward the lowest class index.
    """
    x = np.asarray(samples, dtype=np.float64)
    if background is not None:
        x = x - np.asarray(background, dtype=np.float64)[None, :]
    mag = np.abs(np.fft.rfft(x, axis=0)).mean(axis=1)
    if mag.shape[0] != templates.shape[1]:
        raise ValueError(
            f"window spectrum has {mag.shape[0]} bins, templates have {templates.shape[1]}"
        )
    dists = np.linalg.norm(templates - mag[None, :], axis=1)
    return int(np.argmin(dists))


def dominant_bin_ratio(samples: np.ndarray) -> float:
    """Peak-to-median power of the channel-averaged spectrum (DC excluded).

    White noise stays below ~2; any class periodicity pushes this far higher,
    so it doubles as a "is there a planted signal?" detector.
    """
    power = np.abs(np.fft.rfft(np.asarray(samples, dtype=np.float64), axis=0)) ** 2
    avg = power.mean(axis=1)[1:]  # drop DC: the background floor lives there
    if avg.size == 0:
        return 0.0
    med = float(np.median(avg))
    peak = float(avg.max())
    if med == 0.0:
        return 0.0 if peak == 0.0 else math.inf
    return peak / med


# ------------------------------------------------------------ serialization

def spec_from_dict(doc: dict) -> SynthSpec:
    known = set(SynthSpec.__dataclass_fields__)
    unknown = set(doc) - known
    if unknown:
        raise SpecError(f"unknown synth spec fields: {sorted(unknown)}")
    doc = dict(doc)
    if "gait_freq_range" in doc:
        doc["gait_freq_range"] = tuple(doc["gait_freq_range"])
    if isinstance(doc.get("background_level"), list):
        doc["background_level"] = tuple(doc["background_level"])
    return SynthSpec(**doc)


def load_spec(path: str | Path) -> SynthSpec:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SpecError(f"synth spec {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise SpecError(f"synth spec {path} must be a JSON object")
    return spec_from_dict(doc)
