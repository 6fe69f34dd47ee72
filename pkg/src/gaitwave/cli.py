"""Command-line surface: ``gaitwave synth``, ``gaitwave run``, ``gaitwave report``.

Exit codes: 0 success, 1 training failure (partial results are still written),
2 validation error, 3 refused overwrite. Every command is deterministic for a
fixed config and seed; no output file contains timestamps or absolute paths.

``GAITWAVE_OUT`` overrides the output directory named by a run config.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from multiprocessing import get_context
from pathlib import Path

from .csi_data import DatasetManifest, ManifestEntry, save_manifest
from .errors import ConfigError, GaitwaveError, TrainingFailure
from .expconfig import ExperimentConfig, load_experiment_config
from .experiments import (
    BAND_SETTING_NAMES,
    SCOPES,
    aggregate,
    aggregate_to_json,
    aggregate_to_markdown,
    build_comparison_row,
    comparison_to_csv,
    comparison_to_markdown,
    curve_point_from_dict,
    curve_to_csv,
    learning_curve,
    prepare_band_data,
    row_from_dict,
)
from .models import ModelConfig, config_string
from .synthgen import generate, load_spec
from .training import SplitData, TrainSettings, repeat_runs

EXIT_OK = 0
EXIT_TRAINING = 1
EXIT_VALIDATION = 2
EXIT_REFUSED = 3


def _fail(message: str, code: int) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


# ---------------------------------------------------------------------------
# synth


def cmd_synth(spec_path: str, out_dir: str, force: bool = False) -> int:
    try:
        spec = load_spec(spec_path)
    except GaitwaveError as exc:
        return _fail(str(exc), EXIT_VALIDATION)
    out = Path(out_dir)
    if (out / "manifest.json").exists() and not force:
        return _fail(
            f"{out_dir!r} already holds a dataset (manifest.json); rerun with "
            "--force to overwrite",
            EXIT_REFUSED,
        )
    manifest = generate(spec, out)
    windows_per_class = spec.sessions_per_class * (spec.num_samples // int(round(5 * spec.rate_hz)))
    print(f"wrote {len(manifest.entries)} recordings to {out_dir}")
    print(f"  band {spec.band}, {spec.num_channels} channels at {spec.rate_hz:g} Hz")
    print(f"  {spec.num_classes} classes x {spec.sessions_per_class} session(s), "
          f"{spec.duration_s:g} s each ({windows_per_class} five-second windows per class)")
    print(f"  background recording: {manifest.band_entries(spec.band, background=True)[0].path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# run


def job_key(model_doc: dict, band_name: str, background_subtraction: bool,
            standardize: bool, train_doc: dict) -> str:
    """Stable job identity: digest of everything that determines the result."""
    blob = json.dumps(
        {
            "model": model_doc,
            "band": band_name,
            "background_subtraction": background_subtraction,
            "standardize": standardize,
            "train": train_doc,
        },
        sort_keys=True,
        separators=(",", ":"),
    )
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def _execute_job(payload: dict) -> dict:
    """Train one (model config, band) job. Runs in a worker process when --jobs > 1."""
    cfg = ModelConfig.from_dict(payload["model"])
    settings = TrainSettings.from_dict(payload["train"])
    data = SplitData(
        x_train=payload["x_train"], y_train=payload["y_train"],
        x_val=payload["x_val"], y_val=payload["y_val"],
        x_test=payload["x_test"], y_test=payload["y_test"],
        num_classes=payload["num_classes"],
    )
    band_cfg = dataclasses.replace(cfg, input_channels=int(data.x_train.shape[2]))
    stat, records = repeat_runs(band_cfg, data, settings)
    return {
        "key": payload["key"],
        "band": payload["band"],
        "model": payload["model"],
        "stat": stat.to_dict(),
        "records": [r.to_dict() for r in records],
    }


def _synthesize_dataset(config: ExperimentConfig, out: Path):
    """Generate the configured synth specs under out/data and merge manifests."""
    data_dir = out / "data"
    entries = []
    num_classes = config.synth_specs[0].num_classes
    for i, spec in enumerate(config.synth_specs):
        sub = f"{i:02d}-{spec.band}"
        sub_manifest = generate(spec, data_dir / sub)
        for e in sub_manifest.entries:
            entries.append(ManifestEntry(
                path=f"{sub}/{e.path}",
                band=e.band,
                rate_hz=e.rate_hz,
                person_label=e.person_label,
                is_background=e.is_background,
            ))
    manifest = DatasetManifest(entries=tuple(entries), num_classes=num_classes)
    save_manifest(manifest, data_dir / "manifest.json")
    return manifest, data_dir


def _load_or_run_jobs(config: ExperimentConfig, data_by_band: dict, out: Path,
                      jobs: int, resume: bool):
    """Execute (or resume) every (model, band) job; returns results and failures.

    Results are keyed by (model index, band name); merging is independent of
    execution order, so parallel workers and the serial path emit identical
    artifacts.
    """
    jobs_dir = out / "jobs"
    jobs_dir.mkdir(parents=True, exist_ok=True)
    train_doc = config.train.to_dict()

    pending = []  # (model_idx, band_name, key, payload)
    done: dict[tuple[int, str], dict] = {}
    status: dict[tuple[int, str], str] = {}
    for mi, model in enumerate(config.models):
        model_doc = model.to_dict()
        for band in config.bands:
            key = job_key(model_doc, band.name, band.background_subtraction,
                          config.standardize, train_doc)
            job_path = jobs_dir / f"{key}.json"
            if resume and job_path.exists():
                try:
                    doc = json.loads(job_path.read_text(encoding="utf-8"))
                    if doc.get("key") != key:
                        raise ValueError("job file key mismatch")
                    done[(mi, band.name)] = doc
                    status[(mi, band.name)] = f"skipped (resume: jobs/{key}.json)"
                    continue
                except (ValueError, KeyError) as exc:
                    print(f"note: ignoring unreadable job file {job_path.name}: {exc}")
            data = data_by_band[band.name]
            payload = {
                "key": key,
                "band": band.name,
                "model": model_doc,
                "train": train_doc,
                "x_train": data.x_train, "y_train": data.y_train,
                "x_val": data.x_val, "y_val": data.y_val,
                "x_test": data.x_test, "y_test": data.y_test,
                "num_classes": data.num_classes,
            }
            pending.append((mi, band.name, key, payload))

    def record(mi, band_name, result):
        done[(mi, band_name)] = result
        status[(mi, band_name)] = "trained"
        # resumed jobs never get rewritten; only fresh work touches disk
        job_path = jobs_dir / f"{result['key']}.json"
        job_path.write_text(json.dumps(result, sort_keys=True, indent=2) + "\n",
                            encoding="utf-8")

    failures: list[str] = []
    if jobs <= 1 or len(pending) <= 1:
        for mi, band_name, key, payload in pending:
            try:
                record(mi, band_name, _execute_job(payload))
            except TrainingFailure as exc:
                failures.append(f"{config.models[mi].family} on {band_name}: {exc}")
                status[(mi, band_name)] = f"FAILED ({exc})"
    else:
        ctx = get_context("spawn")
        with ProcessPoolExecutor(max_workers=jobs, mp_context=ctx) as pool:
            futures = {
                pool.submit(_execute_job, payload): (mi, band_name)
                for mi, band_name, _, payload in pending
            }
            for fut, (mi, band_name) in futures.items():
                try:
                    record(mi, band_name, fut.result())
                except TrainingFailure as exc:
                    failures.append(f"{config.models[mi].family} on {band_name}: {exc}")
                    status[(mi, band_name)] = f"FAILED ({exc})"

    # deterministic per-job log, independent of execution order
    for mi, model in enumerate(config.models):
        for band in config.bands:
            line = status.get((mi, band.name))
            if line is None:
                continue
            print(f"[{config_string(model)}] {band.name}: {line}")
    return done, failures


def _assemble_rows(config: ExperimentConfig, done: dict):
    from .training import AccuracyStat, RunRecord  # local to keep module surface lean

    rows = []
    for mi, model in enumerate(config.models):
        stats = {}
        records = {}
        for band in config.bands:
            result = done.get((mi, band.name))
            if result is None:
                continue
            stats[band.name] = AccuracyStat(**result["stat"])
            records[band.name] = [RunRecord(**r) for r in result["records"]]
        rows.append(build_comparison_row(model, stats, records))
    return rows


def _aggregate_scopes(rows, scopes=SCOPES):
    summaries = []
    for scope in scopes:
        try:
            summaries.append(aggregate(rows, scope))
        except ValueError:
            continue  # scope empty or rows incomplete: skip rather than fail
    return summaries


def _write_artifacts(out: Path, rows, summaries, curve_doc) -> None:
    results = {
        "comparison": [r.to_dict() for r in rows],
        "aggregate": ({"scopes": {s.scope: s.to_dict() for s in summaries}}
                      if summaries else None),
        "learning_curve": curve_doc,
    }
    (out / "results.json").write_text(
        json.dumps(results, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    (out / "comparison.csv").write_text(comparison_to_csv(rows), encoding="utf-8")
    (out / "comparison.md").write_text(comparison_to_markdown(rows), encoding="utf-8")
    if summaries:
        (out / "aggregate.json").write_text(aggregate_to_json(summaries), encoding="utf-8")
        (out / "aggregate.md").write_text(aggregate_to_markdown(summaries), encoding="utf-8")
    if curve_doc is not None:
        points = [curve_point_from_dict(p) for p in curve_doc["points"]]
        (out / "curve.csv").write_text(curve_to_csv(points), encoding="utf-8")


def cmd_run(config_path: str, jobs: int = 1, seed: int | None = None,
            resume: bool = False) -> int:
    try:
        config = load_experiment_config(config_path)
    except ConfigError as exc:
        return _fail(str(exc), EXIT_VALIDATION)
    if seed is not None:
        config = dataclasses.replace(
            config, train=dataclasses.replace(config.train, seed=seed))

    out = Path(os.environ.get("GAITWAVE_OUT") or config.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    try:
        if config.synth_specs:
            manifest, base_dir = _synthesize_dataset(config, out)
        else:
            from .csi_data import load_manifest
            manifest = load_manifest(config.manifest_path)
            base_dir = config.manifest_path.parent
        data_by_band = {
            band.name: prepare_band_data(
                manifest, base_dir, band,
                window_seconds=config.window_seconds,
                split_seed=config.split_seed,
                standardize=config.standardize,
            )
            for band in config.bands
        }
    except GaitwaveError as exc:
        return _fail(str(exc), EXIT_VALIDATION)

    done, failures = _load_or_run_jobs(config, data_by_band, out, jobs, resume)
    rows = _assemble_rows(config, done)
    summaries = _aggregate_scopes(rows) if not failures else []

    curve_doc = None
    if config.curve is not None and not failures:
        band = config.band_setting(config.curve.band)
        try:
            curve_data = prepare_band_data(
                manifest, base_dir, band,
                window_seconds=config.window_seconds,
                split_seed=config.split_seed,
                standardize=False,
            )
            points = learning_curve(config.curve.model, curve_data, config.train,
                                    fractions=config.curve.fractions,
                                    standardize=config.standardize)
            curve_doc = {
                "band": band.name,
                "model": config.curve.model.to_dict(),
                "points": [p.to_dict() for p in points],
            }
        except TrainingFailure as exc:
            failures.append(f"learning curve: {exc}")
        except GaitwaveError as exc:
            _write_artifacts(out, rows, summaries, None)
            return _fail(str(exc), EXIT_VALIDATION)

    _write_artifacts(out, rows, summaries, curve_doc)
    print()
    print(comparison_to_markdown(rows), end="")
    if summaries:
        print()
        print(aggregate_to_markdown(summaries), end="")
    if curve_doc is not None:
        print()
        print(curve_to_csv([curve_point_from_dict(p) for p in curve_doc["points"]]),
              end="")
    if failures:
        for f in failures:
            print(f"training failure: {f}", file=sys.stderr)
        print(f"partial results written to {out}", file=sys.stderr)
        return EXIT_TRAINING
    print(f"\nresults written to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# report


def cmd_report(results_dir: str, exclude_lstm: bool = False,
               exclude_lstm_humanfi: bool = False) -> int:
    out = Path(results_dir)
    results_path = out / "results.json"
    if not results_path.is_file():
        return _fail(f"no results.json in {results_dir!r}", EXIT_VALIDATION)
    original = results_path.read_bytes()
    try:
        doc = json.loads(original.decode("utf-8"))
        rows = [row_from_dict(r) for r in doc["comparison"]]
        curve_doc = doc.get("learning_curve")
        if curve_doc is not None:
            curve_points = [curve_point_from_dict(p) for p in curve_doc["points"]]
    except (ValueError, KeyError, TypeError) as exc:
        return _fail(f"malformed results file {str(results_path)!r}: {exc}",
                     EXIT_VALIDATION)
    if not rows:
        return _fail(f"results file {str(results_path)!r} holds no comparison rows",
                     EXIT_VALIDATION)

    if exclude_lstm:
        scopes = ("excl_all_lstm",)
    elif exclude_lstm_humanfi:
        scopes = ("excl_lstm_humanfi",)
    else:
        scopes = SCOPES
    summaries = _aggregate_scopes(rows, scopes)

    (out / "comparison.csv").write_text(comparison_to_csv(rows), encoding="utf-8")
    (out / "comparison.md").write_text(comparison_to_markdown(rows), encoding="utf-8")
    if summaries:
        (out / "aggregate.json").write_text(aggregate_to_json(summaries), encoding="utf-8")
        (out / "aggregate.md").write_text(aggregate_to_markdown(summaries), encoding="utf-8")
    if curve_doc is not None:
        (out / "curve.csv").write_text(curve_to_csv(curve_points), encoding="utf-8")

    print(comparison_to_markdown(rows), end="")
    if summaries:
        print()
        print(aggregate_to_markdown(summaries), end="")
    assert results_path.read_bytes() == original  # report never mutates results
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gaitwave",
        description="Benchmark gait identification models on CSI amplitude data.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate a synthetic dataset from a spec")
    p_synth.add_argument("spec", help="path to a generator spec JSON")
    p_synth.add_argument("out_dir", help="directory to write recordings + manifest")
    p_synth.add_argument("--force", action="store_true",
                         help="overwrite an existing dataset")

    p_run = sub.add_parser("run", help="run the experiments in a config file")
    p_run.add_argument("config", help="path to an experiment config JSON")
    p_run.add_argument("--jobs", type=int, default=1,
                       help="worker processes for training jobs (default 1)")
    p_run.add_argument("--seed", type=int, default=None,
                       help="override the config's base training seed")
    p_run.add_argument("--resume", action="store_true",
                       help="skip jobs whose result file already exists")

    p_report = sub.add_parser("report", help="regenerate tables from results.json")
    p_report.add_argument("results_dir", help="directory holding results.json")
    scope = p_report.add_mutually_exclusive_group()
    scope.add_argument("--exclude-lstm", action="store_true",
                       help="aggregate only over non-recurrent families")
    scope.add_argument("--exclude-lstm-humanfi", action="store_true",
                       help="aggregate without the plain LSTM baseline")
    return parser


def entrypoint(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "synth":
        return cmd_synth(args.spec, args.out_dir, force=args.force)
    if args.command == "run":
        if args.jobs < 1:
            return _fail("--jobs must be >= 1", EXIT_VALIDATION)
        return cmd_run(args.config, jobs=args.jobs, seed=args.seed,
                       resume=args.resume)
    if args.command == "report":
        return cmd_report(args.results_dir, exclude_lstm=args.exclude_lstm,
                          exclude_lstm_humanfi=args.exclude_lstm_humanfi)
    raise AssertionError(f"unhandled command {args.command!r}")


if __name__ == "__main__":
    sys.exit(entrypoint())
