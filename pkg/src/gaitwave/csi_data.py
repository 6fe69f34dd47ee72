"""Canonical CSI storage, ingestion, downsampling, segmentation and splitting.

On-disk recording format: one UTF-8 JSON header line terminated by ``\\n``
with keys ``{version: 1, t, c, rate_hz, band, session_id, person_label}``,
followed immediately by ``t*c`` little-endian IEEE-754 float32 values in
row-major (time-major) order.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, StratificationError, TruncationError

BANDS = ("sub6", "mmwave")
# Channel counts implied by the capture hardware: 52 OFDM subcarriers at
# sub-6 GHz, 30 antenna elements per 60 GHz device pair (60 when the two
# pairs are concatenated).
BAND_CHANNELS = {"sub6": (52,), "mmwave": (30, 60)}

FORMAT_VERSION = 1


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class CsiRecording:
    """A [T x C] array of CSI amplitudes with capture metadata.

    ``person_label`` is None for background (no-person) recordings.
    """

    samples: np.ndarray
    rate_hz: float
    band: str
    session_id: str
    person_label: int | None = None

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float32)
        if samples.ndim != 2 or samples.shape[0] < 1 or samples.shape[1] < 1:
            raise ValueError(f"samples must be a [T x C] array with T,C >= 1, got shape {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("amplitudes must be finite")
        if samples.min() < 0:
            raise ValueError("amplitudes must be non-negative")
        if self.band not in BANDS:
            raise ValueError(f"unknown band {self.band!r}, expected one of {BANDS}")
        if samples.shape[1] not in BAND_CHANNELS[self.band]:
            raise ValueError(
                f"band {self.band!r} implies {BAND_CHANNELS[self.band]} channels, got {samples.shape[1]}"
            )
        if self.rate_hz <= 0:
            raise ValueError("rate_hz must be positive")
        if self.person_label is not None and self.person_label < 0:
            raise ValueError("person_label must be >= 0 or None")
        object.__setattr__(self, "samples", _freeze(samples))

    @property
    def num_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def num_channels(self) -> int:
        return self.samples.shape[1]

    @property
    def is_background(self) -> bool:
        return self.person_label is None


@dataclass(frozen=True, eq=False)
class Window:
    """A fixed-length labeled segment of a recording, the model input unit."""

    samples: np.ndarray  # [L x C]
    label: int
    source_session: str
    start_index: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float32)
        if samples.ndim != 2:
            raise ValueError(f"window samples must be 2-D, got shape {samples.shape}")
        object.__setattr__(self, "samples", _freeze(samples))

    @property
    def length(self) -> int:
        return self.samples.shape[0]

    @property
    def num_channels(self) -> int:
        return self.samples.shape[1]


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    band: str
    rate_hz: float
    person_label: int | None
    is_background: bool


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple[ManifestEntry, ...]
    num_classes: int

    def __post_init__(self):
        if self.num_classes < 1:
            raise ValueError("num_classes must be >= 1")
        for e in self.entries:
            if e.band not in BANDS:
                raise ValueError(f"manifest entry {e.path!r} has unknown band {e.band!r}")
            if not e.is_background:
                if e.person_label is None or not (0 <= e.person_label < self.num_classes):
                    raise ValueError(
                        f"manifest entry {e.path!r} has label {e.person_label} outside [0, {self.num_classes})"
                    )
        object.__setattr__(self, "entries", tuple(self.entries))

    def band_entries(self, band: str, background: bool | None = None) -> list[ManifestEntry]:
        out = [e for e in self.entries if e.band == band]
        if background is not None:
            out = [e for e in out if e.is_background == background]
        return out


@dataclass(frozen=True)
class SplitAssignment:
    """Disjoint, exhaustive train/val/test index lists over a window list."""

    train: tuple[int, ...]
    val: tuple[int, ...]
    test: tuple[int, ...]
    seed: int
    ratios: tuple[float, float, float]


def write_recording(rec: CsiRecording, path: str | Path) -> None:
    """Write a recording in the canonical header-line + float32 payload format."""
    header = {
        "version": FORMAT_VERSION,
        "t": rec.num_samples,
        "c": rec.num_channels,
        "rate_hz": rec.rate_hz,
        "band": rec.band,
        "session_id": rec.session_id,
        "person_label": rec.person_label,
    }
    line = json.dumps(header, sort_keys=True, separators=(",", ":")) + "\n"
    payload = rec.samples.astype("<f4").tobytes(order="C")
    with open(path, "wb") as f:
        f.write(line.encode("utf-8"))
        f.write(payload)


def read_recording(path: str | Path) -> CsiRecording:
    """Read a canonical recording file.

    Raises FormatError for a missing/corrupt header and TruncationError when
    the payload byte count disagrees with the header-declared T*C.
    """
    with open(path, "rb") as f:
        line = f.readline()
        payload = f.read()
    if not line.endswith(b"\n"):
        raise FormatError(f"{path}: missing header line terminator")
    try:
        header = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: corrupt header: {exc}") from exc
    if not isinstance(header, dict) or header.get("version") != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported or missing format version")
    try:
        t, c = int(header["t"]), int(header["c"])
        rate_hz = float(header["rate_hz"])
        band = header["band"]
        session_id = header["session_id"]
        person_label = header["person_label"]
    except KeyError as exc:
        raise FormatError(f"{path}: header missing key {exc}") from exc
    expected = t * c * 4
    if len(payload) != expected:
        raise TruncationError(f"{path}: payload is {len(payload)} bytes, header declares {expected}")
    samples = np.frombuffer(payload, dtype="<f4").reshape(t, c)
    return CsiRecording(
        samples=samples,
        rate_hz=rate_hz,
        band=band,
        session_id=session_id,
        person_label=None if person_label is None else int(person_label),
    )


def save_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    doc = {
        "version": FORMAT_VERSION,
        "num_classes": manifest.num_classes,
        "entries": [
            {
                "path": e.path,
                "band": e.band,
                "rate_hz": e.rate_hz,
                "person_label": e.person_label,
                "is_background": e.is_background,
            }
            for e in manifest.entries
        ],
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n", encoding="utf-8")


def load_manifest(path: str | Path) -> DatasetManifest:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        entries = tuple(
            ManifestEntry(
                path=e["path"],
                band=e["band"],
                rate_hz=float(e["rate_hz"]),
                person_label=None if e["person_label"] is None else int(e["person_label"]),
                is_background=bool(e["is_background"]),
            )
            for e in doc["entries"]
        )
        return DatasetManifest(entries=entries, num_classes=int(doc["num_classes"]))
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: corrupt manifest: {exc}") from exc


def downsample(rec: CsiRecording, target_hz: float, method: str = "mean") -> CsiRecording:
    """Reduce the sampling rate by an integer factor f = rate_hz / target_hz.

    ``method="mean"`` replaces each block of f consecutive samples with its
    mean (acts as an anti-alias filter); ``method="stride"`` keeps every f-th
    sample. Trailing samples not filling a block are dropped.
    """
    if target_hz <= 0:
        raise ValueError("target_hz must be positive")
    factor = rec.rate_hz / target_hz
    f = int(round(factor))
    if f < 1 or abs(factor - f) > 1e-9:
        raise ValueError(f"rate {rec.rate_hz} Hz is not an integer multiple of target {target_hz} Hz")
    if method not in ("mean", "stride"):
        raise ValueError(f"unknown downsampling method {method!r}")
    if f == 1:
        out = rec.samples
    else:
        n_out = rec.num_samples // f
        trimmed = rec.samples[: n_out * f]
        if method == "mean":
            out = trimmed.reshape(n_out, f, rec.num_channels).mean(axis=1)
        else:
            out = trimmed[::f]
    return CsiRecording(
        samples=out,
        rate_hz=target_hz,
        band=rec.band,
        session_id=rec.session_id,
        person_label=rec.person_label,
    )


def segment(rec: CsiRecording, window_seconds: float) -> list[Window]:
    """Cut a labeled recording into consecutive non-overlapping windows.

    The trailing remainder shorter than one window is dropped. Returns an
    empty list (with a warning) when the recording is shorter than one window.
    """
    if rec.person_label is None:
        raise ValueError("cannot segment a background recording: person_label is None")
    if window_seconds <= 0:
        raise ValueError("window_seconds must be positive")
    length = int(round(window_seconds * rec.rate_hz))
    if length < 1:
        raise ValueError(f"window of {window_seconds} s at {rec.rate_hz} Hz is empty")
    count = rec.num_samples // length
    if count == 0:
        warnings.warn(
            f"recording {rec.session_id!r} has {rec.num_samples} samples, "
            f"shorter than one {length}-sample window; no windows produced",
            stacklevel=2,
        )
        return []
    return [
        Window(
            samples=rec.samples[i * length : (i + 1) * length],
            label=rec.person_label,
            source_session=rec.session_id,
            start_index=i * length,
        )
        for i in range(count)
    ]


def make_splits(
    windows: list[Window],
    ratios: tuple[float, float, float] = (0.7, 0.15, 0.15),
    seed: int = 0,
) -> SplitAssignment:
    """Stratified per-class random split into train/val/test index lists.

    Within each class the windows are shuffled by a seeded generator, then
    partitioned with floor(ratio*n) sizes for train and val; the remainder
    goes to test. Deterministic for a fixed seed.
    """
    if len(ratios) != 3 or any(r < 0 for r in ratios):
        raise ValueError("ratios must be three non-negative fractions")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {sum(ratios)}")
    if not windows:
        raise ValueError("no windows to split")

    by_class: dict[int, list[int]] = {}
    for i, w in enumerate(windows):
        by_class.setdefault(w.label, []).append(i)

    rng = np.random.default_rng(seed)
    train: list[int] = []
    val: list[int] = []
    test: list[int] = []
    for label in sorted(by_class):
        idx = np.array(by_class[label])
        if len(idx) < 3:
            raise StratificationError(
                f"class {label} has only {len(idx)} window(s); need at least 3 to stratify"
            )
        rng.shuffle(idx)
        n = len(idx)
        # epsilon guards against 0.7*n landing a hair below the exact integer
        n_train = int(ratios[0] * n + 1e-9)
        n_val = int(ratios[1] * n + 1e-9)
        train.extend(idx[:n_train].tolist())
        val.extend(idx[n_train : n_train + n_val].tolist())
        test.extend(idx[n_train + n_val :].tolist())
    return SplitAssignment(
        train=tuple(train), val=tuple(val), test=tuple(test), seed=seed, ratios=tuple(ratios)
    )
