"""Experiment configuration files: schema, validation, path resolution.

A config JSON drives a full run: where the data comes from (a prebuilt
manifest or synthesis specs), which band settings to compare, the model list,
training settings, and an optional learning-curve section. Validation is
strict — unknown keys are rejected so typos fail fast instead of silently
falling back to defaults.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError, SpecError
from .experiments import BAND_SETTING_NAMES, BandSetting
from .models import ModelConfig
from .synthgen import SynthSpec, load_spec, spec_from_dict
from .training import TrainSettings

_TOP_LEVEL_KEYS = {
    "dataset", "bands", "background_subtraction", "standardize",
    "window_seconds", "split_seed", "models", "train", "learning_curve",
    "out_dir",
}


@dataclass(frozen=True)
class CurveSection:
    model: ModelConfig
    band: str = "mmwave_10hz"
    fractions: tuple | None = None

    def __post_init__(self):
        if self.band not in BAND_SETTING_NAMES:
            raise ConfigError(f"learning_curve band {self.band!r} is not one of "
                              f"{BAND_SETTING_NAMES}")


@dataclass(frozen=True)
class ExperimentConfig:
    out_dir: Path
    models: tuple  # of ModelConfig
    bands: tuple  # of BandSetting
    train: TrainSettings
    manifest_path: Path | None = None
    synth_specs: tuple = ()  # of SynthSpec
    standardize: bool = True
    window_seconds: float = 5.0
    split_seed: int = 0
    curve: CurveSection | None = None

    def __post_init__(self):
        if not self.models:
            raise ConfigError("config lists no model configs")
        if not self.bands:
            raise ConfigError("config lists no band settings")
        if (self.manifest_path is None) == (not self.synth_specs):
            raise ConfigError("dataset must be exactly one of 'manifest' or 'synth'")
        if self.window_seconds <= 0:
            raise ConfigError("window_seconds must be positive")

    def band_setting(self, name: str) -> BandSetting:
        """The configured setting for ``name``; defaults subtraction off."""
        for b in self.bands:
            if b.name == name:
                return b
        return BandSetting(name)


def _parse_bands(doc, default_subtraction: bool) -> tuple:
    bands = []
    for item in doc:
        if isinstance(item, str):
            bands.append(BandSetting(item, background_subtraction=default_subtraction))
        elif isinstance(item, dict):
            extra = set(item) - {"name", "background_subtraction"}
            if extra:
                raise ConfigError(f"unknown band setting keys: {sorted(extra)}")
            bands.append(BandSetting(
                item["name"],
                background_subtraction=item.get("background_subtraction",
                                                default_subtraction),
            ))
        else:
            raise ConfigError(f"band entries must be names or objects, got {item!r}")
    if len({b.name for b in bands}) != len(bands):
        raise ConfigError("duplicate band settings in config")
    return tuple(bands)


def _parse_dataset(doc, config_dir: Path):
    if not isinstance(doc, dict):
        raise ConfigError("'dataset' must be an object")
    keys = set(doc)
    if keys == {"manifest"}:
        path = (config_dir / doc["manifest"]).resolve()
        if not path.is_file():
            raise ConfigError(f"manifest {str(path)!r} does not exist")
        return path, ()
    if keys == {"synth"}:
        items = doc["synth"]
        if not isinstance(items, list) or not items:
            raise ConfigError("'dataset.synth' must be a non-empty list of specs")
        specs = []
        for item in items:
            if isinstance(item, str):
                spec_path = (config_dir / item).resolve()
                if not spec_path.is_file():
                    raise ConfigError(f"synth spec {str(spec_path)!r} does not exist")
                specs.append(load_spec(spec_path))
            elif isinstance(item, dict):
                specs.append(spec_from_dict(item))
            else:
                raise ConfigError("synth entries must be file paths or spec objects")
        return None, tuple(specs)
    raise ConfigError("'dataset' must have exactly one of the keys 'manifest' or 'synth'")


def load_experiment_config(path: str | Path) -> ExperimentConfig:
    """Parse and validate an experiment config; all errors become ConfigError."""
    path = Path(path)
    try:
        raw = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {str(path)!r}: {exc}") from exc
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {str(path)!r} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"config {str(path)!r} must hold a JSON object")
    unknown = set(doc) - _TOP_LEVEL_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for key in ("dataset", "bands", "models", "train", "out_dir"):
        if key not in doc:
            raise ConfigError(f"config is missing required key {key!r}")

    config_dir = path.resolve().parent
    try:
        manifest_path, synth_specs = _parse_dataset(doc["dataset"], config_dir)
        bands = _parse_bands(doc["bands"], bool(doc.get("background_subtraction", False)))
        models = tuple(ModelConfig.from_dict(m) for m in doc["models"])
        train = TrainSettings.from_dict(doc["train"])
        curve = None
        if doc.get("learning_curve") is not None:
            section = dict(doc["learning_curve"])
            extra = set(section) - {"model", "band", "fractions"}
            if extra:
                raise ConfigError(f"unknown learning_curve keys: {sorted(extra)}")
            if "model" not in section:
                raise ConfigError("learning_curve needs a 'model' config")
            curve = CurveSection(
                model=ModelConfig.from_dict(section["model"]),
                band=section.get("band", "mmwave_10hz"),
                fractions=(None if section.get("fractions") is None
                           else tuple(section["fractions"])),
            )
        cfg = ExperimentConfig(
            out_dir=Path(doc["out_dir"]),
            models=models,
            bands=bands,
            train=train,
            manifest_path=manifest_path,
            synth_specs=synth_specs,
            standardize=bool(doc.get("standardize", True)),
            window_seconds=float(doc.get("window_seconds", 5.0)),
            split_seed=int(doc.get("split_seed", 0)),
            curve=curve,
        )
    except (ValueError, TypeError, KeyError, SpecError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid config {str(path)!r}: {exc}") from exc

    if cfg.synth_specs:
        classes = {s.num_classes for s in cfg.synth_specs}
        if len(classes) > 1:
            raise ConfigError(f"synth specs disagree on num_classes: {sorted(classes)}")
        k = classes.pop()
        for m in cfg.models:
            if m.num_classes != k:
                raise ConfigError(
                    f"model {m.family!r} declares {m.num_classes} classes but the "
                    f"dataset has {k}"
                )
        if cfg.curve is not None and cfg.curve.model.num_classes != k:
            raise ConfigError("learning_curve model num_classes does not match dataset")
    return cfg
