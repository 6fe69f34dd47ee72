"""Cross-band comparison runs, aggregate significance counts, learning curves.

Three studies built on the training layer:

* ``run_comparison`` trains every (model config, band setting) pair and
  assembles per-row accuracy stats with a best-of-the-10-Hz-bands flag.
* ``aggregate`` tallies how often the mmWave band beats each sub-6 GHz band,
  with the one-standard-deviation significance rule, over selectable scopes.
* ``learning_curve`` retrains on nested, stratified subsets of the training
  split against a frozen test set.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .csi_data import DatasetManifest, downsample, make_splits, read_recording, segment
from .errors import ConfigError, StratificationError
from .models import ModelConfig, build_model, config_string, count_params
from .preprocess import (
    MixupParams,
    SmoothingParams,
    compute_background,
    compute_channel_stats,
    standardize_array,
    subtract_background,
)
from .training import (
    AccuracyStat,
    RunRecord,
    SplitData,
    TrainSettings,
    prepare_split_data,
    repeat_runs,
)

# The three measurement settings compared throughout: the sub-6 GHz link
# sampled at its native 200 Hz and downsampled to 10 Hz, and the mmWave link
# at its native 10 Hz.
BAND_SETTING_NAMES = ("sub6_10hz", "sub6_200hz", "mmwave_10hz")

_BAND_SOURCE = {
    "sub6_10hz": ("sub6", 10.0),
    "sub6_200hz": ("sub6", 200.0),
    "mmwave_10hz": ("mmwave", 10.0),
}

BAND_LABELS = {
    "sub6_10hz": "sub-6 GHz @ 10 Hz",
    "sub6_200hz": "sub-6 GHz @ 200 Hz",
    "mmwave_10hz": "mmWave @ 10 Hz",
}

# Aggregation scopes: everything, everything minus the plain LSTM baseline,
# and everything minus all recurrent families.
SCOPES = ("all", "excl_lstm_humanfi", "excl_all_lstm")

_SCOPE_EXCLUDES = {
    "all": frozenset(),
    "excl_lstm_humanfi": frozenset({"lstm_humanfi"}),
    "excl_all_lstm": frozenset(
        {"lstm_humanfi", "cnn_bilstm_temporal_attn", "cnn_bilstm_dual_attn"}
    ),
}

# Rendered in Markdown tables for a band with no results.
ABSENT_MARKER = "—"

DEFAULT_FRACTIONS = (0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1)

# The training split is 70% of the dataset, so a curve fraction f uses
# f / TOP_FRACTION of the training split and f of the whole dataset.
TOP_FRACTION = 0.7


@dataclass(frozen=True)
class BandSetting:
    """One measurement setting plus its preprocessing switch."""

    name: str
    background_subtraction: bool = False

    def __post_init__(self):
        if self.name not in BAND_SETTING_NAMES:
            raise ConfigError(
                f"unknown band setting {self.name!r}; expected one of {BAND_SETTING_NAMES}"
            )

    @property
    def source_band(self) -> str:
        return _BAND_SOURCE[self.name][0]

    @property
    def rate_hz(self) -> float:
        return _BAND_SOURCE[self.name][1]


@dataclass
class ComparisonRow:
    """One model configuration's results across all three band settings."""

    family: str
    config_label: str
    num_params: int
    stats: dict  # band setting name -> AccuracyStat | None
    flagged_band: str | None
    records: dict = field(default_factory=dict)  # band setting name -> [RunRecord]

    def __post_init__(self):
        if set(self.stats) != set(BAND_SETTING_NAMES):
            raise ValueError(
                f"row needs exactly the stats {BAND_SETTING_NAMES}, got {sorted(self.stats)}"
            )
        if self.flagged_band not in (None, "sub6_10hz", "mmwave_10hz"):
            raise ValueError(f"flag must name a 10 Hz band, got {self.flagged_band!r}")
        if self.num_params < 1:
            raise ValueError("num_params must be positive")

    def to_dict(self) -> dict:
        return {
            "model": self.family,
            "configuration": self.config_label,
            "num_params": self.num_params,
            "stats": {
                name: (None if s is None else s.to_dict())
                for name, s in self.stats.items()
            },
            "flagged_band": self.flagged_band,
            "records": {
                name: [r.to_dict() for r in recs]
                for name, recs in sorted(self.records.items())
            },
        }


@dataclass(frozen=True)
class AggregateSummary:
    """Band-vs-band tallies over one scope of comparison rows."""

    scope: str
    total_configs: int
    avg_accuracy: dict  # band setting name -> mean of per-row means
    count_better_than_low: int  # mmwave mean > sub6@10Hz mean
    count_better_than_high: int  # mmwave mean > sub6@200Hz mean
    count_sig_better_low: int
    count_sig_better_high: int

    def __post_init__(self):
        if self.scope not in SCOPES:
            raise ValueError(f"unknown scope {self.scope!r}")
        for name, value in (
            ("count_better_than_low", self.count_better_than_low),
            ("count_better_than_high", self.count_better_than_high),
            ("count_sig_better_low", self.count_sig_better_low),
            ("count_sig_better_high", self.count_sig_better_high),
        ):
            if not (0 <= value <= self.total_configs):
                raise ValueError(f"{name}={value} outside [0, {self.total_configs}]")
        for name, value in self.avg_accuracy.items():
            if not (0.0 <= value <= 1.0):
                raise ValueError(f"average accuracy for {name} is {value}, outside [0, 1]")

    def to_dict(self) -> dict:
        return {
            "scope": self.scope,
            "total_configs": self.total_configs,
            "avg_accuracy": dict(self.avg_accuracy),
            "count_better_than_low": self.count_better_than_low,
            "count_better_than_high": self.count_better_than_high,
            "count_sig_better_low": self.count_sig_better_low,
            "count_sig_better_high": self.count_sig_better_high,
        }


@dataclass(frozen=True)
class CurvePoint:
    fraction: float
    stat: AccuracyStat
    num_train: int

    def to_dict(self) -> dict:
        return {
            "fraction": self.fraction,
            "stat": self.stat.to_dict(),
            "num_train": self.num_train,
        }


def significantly_better(a: AccuracyStat, b: AccuracyStat) -> bool:
    """One-standard-deviation separation: mean(a) - std(a) > mean(b) + std(b)."""
    return (a.mean - a.std) > (b.mean + b.std)


def settings_for_config(cfg: ModelConfig, settings: TrainSettings) -> TrainSettings:
    """Bind augmentation to the model config's flags.

    The config is the authority on augmentation (its label carries "+mixup" /
    "+smooth"), so both fields are overwritten rather than merged.
    """
    return dataclasses.replace(
        settings,
        mixup=MixupParams() if cfg.mixup else None,
        smoothing=SmoothingParams() if cfg.smoothing else None,
    )


def flag_band(stats: Mapping[str, AccuracyStat | None]) -> str | None:
    """Pick the better of the two 10 Hz settings by mean accuracy.

    Ties favor sub6_10hz (the cheaper link). Returns None when neither 10 Hz
    band has results.
    """
    low = stats.get("sub6_10hz")
    mm = stats.get("mmwave_10hz")
    if low is None and mm is None:
        return None
    if mm is None:
        return "sub6_10hz"
    if low is None:
        return "mmwave_10hz"
    return "mmwave_10hz" if mm.mean > low.mean else "sub6_10hz"


def build_comparison_row(cfg: ModelConfig, stats: Mapping[str, AccuracyStat | None],
                         records: Mapping[str, list] | None = None) -> ComparisonRow:
    """Assemble a row; bands absent from ``stats`` become explicit None markers.

    The parameter count is taken from the config as declared (its own
    input_channels), i.e. the row's nominal size; per-band models may differ
    slightly in their input stem.
    """
    full = {name: stats.get(name) for name in BAND_SETTING_NAMES}
    return ComparisonRow(
        family=cfg.family,
        config_label=config_string(cfg),
        num_params=count_params(build_model(cfg)),
        stats=full,
        flagged_band=flag_band(full),
        records=dict(records or {}),
    )


def run_comparison(
    configs: Sequence[ModelConfig],
    bands: Sequence[BandSetting],
    data_by_band: Mapping[str, SplitData],
    settings: TrainSettings,
) -> list[ComparisonRow]:
    """Train every config on every band setting and assemble comparison rows.

    ``data_by_band`` maps band setting names to prepared splits. A band with
    no entry yields a None stat in the row (explicit absent marker) instead of
    failing the whole sweep. Each config's input_channels is adapted to the
    band's channel count, mirroring how the same architecture is re-instantiated
    per link.
    """
    rows = []
    for cfg in configs:
        run_settings = settings_for_config(cfg, settings)
        stats: dict[str, AccuracyStat | None] = {}
        records: dict[str, list[RunRecord]] = {}
        for band in bands:
            data = data_by_band.get(band.name)
            if data is None:
                continue
            band_cfg = dataclasses.replace(cfg, input_channels=data.x_train.shape[2])
            stat, recs = repeat_runs(band_cfg, data, run_settings)
            stats[band.name] = stat
            records[band.name] = recs
        rows.append(build_comparison_row(cfg, stats, records))
    return rows


def aggregate(rows: Sequence[ComparisonRow], scope: str) -> AggregateSummary:
    """Tally mmWave-vs-sub6 outcomes over the rows kept by ``scope``."""
    if scope not in SCOPES:
        raise ConfigError(f"unknown scope {scope!r}; expected one of {SCOPES}")
    excluded = _SCOPE_EXCLUDES[scope]
    kept = [r for r in rows if r.family not in excluded]
    if not kept:
        raise ValueError(f"no rows left in scope {scope!r}")
    for r in kept:
        for name in BAND_SETTING_NAMES:
            if r.stats[name] is None:
                raise ValueError(
                    f"row {r.config_label!r} has no {name} result; aggregation "
                    "needs all three bands"
                )

    # sorting before the mean makes the average (not just the counts)
    # invariant under row reordering
    avg = {
        name: float(np.mean(np.sort([r.stats[name].mean for r in kept])))
        for name in BAND_SETTING_NAMES
    }
    better_low = better_high = sig_low = sig_high = 0
    for r in kept:
        low, high, mm = (r.stats[n] for n in BAND_SETTING_NAMES)
        better_low += mm.mean > low.mean
        better_high += mm.mean > high.mean
        sig_low += significantly_better(mm, low)
        sig_high += significantly_better(mm, high)
    return AggregateSummary(
        scope=scope,
        total_configs=len(kept),
        avg_accuracy=avg,
        count_better_than_low=better_low,
        count_better_than_high=better_high,
        count_sig_better_low=sig_low,
        count_sig_better_high=sig_high,
    )


# ---------------------------------------------------------------------------
# band data preparation


def _at_rate(rec, rate_hz: float):
    if abs(rec.rate_hz - rate_hz) < 1e-9:
        return rec
    if rec.rate_hz < rate_hz:
        raise ConfigError(
            f"recording {rec.session_id!r} at {rec.rate_hz:g} Hz cannot serve a "
            f"{rate_hz:g} Hz band setting"
        )
    return downsample(rec, rate_hz)


def prepare_band_data(
    manifest: DatasetManifest,
    base_dir: str | Path,
    setting: BandSetting,
    window_seconds: float = 5.0,
    split_seed: int = 0,
    ratios: tuple[float, float, float] = (0.7, 0.15, 0.15),
    standardize: bool = True,
) -> SplitData:
    """Load, rate-adapt, window and split one band setting's recordings.

    sub6_10hz is derived from the 200 Hz sub-6 recordings by factor-20 block
    averaging. With background subtraction on, the band's background recording
    is put through the same rate adaptation before its per-channel profile is
    removed from every window.
    """
    base = Path(base_dir)
    entries = manifest.band_entries(setting.source_band, background=False)
    if not entries:
        raise ConfigError(
            f"manifest has no {setting.source_band!r} recordings for band "
            f"setting {setting.name!r}"
        )
    profile = None
    if setting.background_subtraction:
        bg_entries = manifest.band_entries(setting.source_band, background=True)
        if not bg_entries:
            raise ConfigError(
                f"band setting {setting.name!r} requires background subtraction "
                f"but the manifest has no {setting.source_band!r} background recording"
            )
        bg_rec = _at_rate(read_recording(base / bg_entries[0].path), setting.rate_hz)
        profile = compute_background(bg_rec)

    windows = []
    for entry in entries:
        rec = _at_rate(read_recording(base / entry.path), setting.rate_hz)
        ws = segment(rec, window_seconds)
        if profile is not None:
            ws = [subtract_background(w, profile) for w in ws]
        windows.extend(ws)
    assignment = make_splits(windows, ratios=ratios, seed=split_seed)
    return prepare_split_data(windows, assignment, manifest.num_classes,
                              standardize=standardize)


# ---------------------------------------------------------------------------
# learning curve


def subsample_indices(y: np.ndarray, fraction: float, seed: int) -> np.ndarray:
    """Stratified nested subsample of training rows.

    Per class, a seeded permutation is drawn once and a prefix of
    round(fraction / 0.7 * class_count) rows is kept, so smaller fractions are
    subsets of larger ones for the same seed. The selection is returned sorted,
    which makes fraction 0.7 the identity (original row order preserved).
    """
    if not (0.0 < fraction <= TOP_FRACTION + 1e-12):
        raise ConfigError(f"fraction {fraction:g} outside (0, {TOP_FRACTION}]")
    picked = []
    for label in sorted({int(v) for v in y}):
        cls_idx = np.flatnonzero(y == label)
        perm = np.random.default_rng([seed, label]).permutation(cls_idx)
        n_take = int(round(fraction / TOP_FRACTION * len(perm)))
        if n_take < 1:
            raise StratificationError(
                f"fraction {fraction:g} leaves class {label} with no training windows"
            )
        picked.append(perm[:n_take])
    return np.sort(np.concatenate(picked))


def learning_curve(
    cfg: ModelConfig,
    data: SplitData,
    settings: TrainSettings,
    fractions: Iterable[float] | None = None,
    standardize: bool = True,
) -> list[CurvePoint]:
    """Retrain on shrinking training subsets against a frozen test set.

    ``data`` must hold unstandardized splits: channel statistics are recomputed
    from each training subset so validation/test never leak into them. The
    validation and test splits themselves are fixed across fractions.
    """
    if data.channel_stats is not None:
        raise ConfigError(
            "learning_curve needs unstandardized splits; channel statistics are "
            "recomputed per training subset"
        )
    fractions = DEFAULT_FRACTIONS if fractions is None else tuple(fractions)
    if not fractions:
        raise ConfigError("no fractions given")
    run_settings = settings_for_config(cfg, settings)
    points = []
    for f in fractions:
        idx = subsample_indices(data.y_train, f, settings.seed)
        x_sub, y_sub = data.x_train[idx], data.y_train[idx]
        x_val, x_test = data.x_val, data.x_test
        if standardize:
            stats = compute_channel_stats(x_sub)
            x_sub = standardize_array(x_sub, stats)
            x_val = standardize_array(x_val, stats)
            x_test = standardize_array(x_test, stats)
        sub = SplitData(x_sub, y_sub, x_val, data.y_val, x_test, data.y_test,
                        num_classes=data.num_classes)
        stat, _ = repeat_runs(cfg, sub, run_settings)
        points.append(CurvePoint(fraction=float(f), stat=stat, num_train=len(idx)))
    return points


def reference_curve_config(input_channels: int, num_classes: int) -> ModelConfig:
    """The TCN configuration used for the learning-curve study."""
    return ModelConfig(
        family="tcn",
        input_channels=input_channels,
        num_classes=num_classes,
        channel_list=(64, 128, 128),
        kernel_size=2,
        dropout=0.5,
        mixup=True,
    )


# ---------------------------------------------------------------------------
# (de)serialization


def _stat_from_dict(doc) -> AccuracyStat | None:
    if doc is None:
        return None
    return AccuracyStat(mean=doc["mean"], std=doc["std"], n=doc["n"])


def row_from_dict(doc: dict) -> ComparisonRow:
    """Inverse of ComparisonRow.to_dict (used to rebuild tables from results)."""
    return ComparisonRow(
        family=doc["model"],
        config_label=doc["configuration"],
        num_params=doc["num_params"],
        stats={name: _stat_from_dict(doc["stats"][name]) for name in BAND_SETTING_NAMES},
        flagged_band=doc["flagged_band"],
        records={
            name: [RunRecord(**r) for r in recs]
            for name, recs in doc.get("records", {}).items()
        },
    )


def curve_point_from_dict(doc: dict) -> CurvePoint:
    stat = _stat_from_dict(doc["stat"])
    if stat is None:
        raise ValueError("curve point has no accuracy stat")
    return CurvePoint(fraction=doc["fraction"], stat=stat, num_train=doc["num_train"])


# ---------------------------------------------------------------------------
# emission


def comparison_to_csv(rows: Sequence[ComparisonRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = ["model", "configuration", "params"]
    for name in BAND_SETTING_NAMES:
        header += [f"{name}_mean", f"{name}_std", f"{name}_n"]
    header.append("flag")
    w.writerow(header)
    for r in rows:
        cells: list = [r.family, r.config_label, r.num_params]
        for name in BAND_SETTING_NAMES:
            s = r.stats[name]
            if s is None:
                cells += ["", "", ""]
            else:
                cells += [f"{s.mean:.6f}", f"{s.std:.6f}", s.n]
        cells.append(r.flagged_band or "")
        w.writerow(cells)
    return buf.getvalue()


def _stat_cell(s: AccuracyStat | None, bold: bool) -> str:
    if s is None:
        return ABSENT_MARKER
    cell = f"{s.mean:.3f} ± {s.std:.3f}"
    return f"**{cell}**" if bold else cell


def comparison_to_markdown(rows: Sequence[ComparisonRow]) -> str:
    head = ["Model", "Configuration", "#Params"]
    head += [BAND_LABELS[name] for name in BAND_SETTING_NAMES]
    head.append("Best @ 10 Hz")
    lines = [
        "| " + " | ".join(head) + " |",
        "|" + "|".join("---" for _ in head) + "|",
    ]
    for r in rows:
        cells = [r.family, r.config_label, f"{r.num_params:,}"]
        cells += [
            _stat_cell(r.stats[name], bold=(name == r.flagged_band))
            for name in BAND_SETTING_NAMES
        ]
        cells.append(BAND_LABELS[r.flagged_band] if r.flagged_band else ABSENT_MARKER)
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def aggregate_to_json(summaries: Sequence[AggregateSummary]) -> str:
    doc = {"scopes": {s.scope: s.to_dict() for s in summaries}}
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def aggregate_to_markdown(summaries: Sequence[AggregateSummary]) -> str:
    head = ["Scope", "Configs"]
    head += [f"avg {BAND_LABELS[name]}" for name in BAND_SETTING_NAMES]
    head += ["mmWave > sub-6 @10 Hz", "mmWave ≫ sub-6 @10 Hz",
             "mmWave > sub-6 @200 Hz", "mmWave ≫ sub-6 @200 Hz"]
    lines = [
        "| " + " | ".join(head) + " |",
        "|" + "|".join("---" for _ in head) + "|",
    ]
    for s in summaries:
        cells = [s.scope, str(s.total_configs)]
        cells += [f"{s.avg_accuracy[name]:.3f}" for name in BAND_SETTING_NAMES]
        cells += [
            f"{s.count_better_than_low}/{s.total_configs}",
            f"{s.count_sig_better_low}/{s.total_configs}",
            f"{s.count_better_than_high}/{s.total_configs}",
            f"{s.count_sig_better_high}/{s.total_configs}",
        ]
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def curve_to_csv(points: Sequence[CurvePoint]) -> str:
    lines = ["fraction,mean,std"]
    for p in points:
        lines.append(f"{p.fraction:g},{p.stat.mean:.6f},{p.stat.std:.6f}")
    return "\n".join(lines) + "\n"
