"""CLI tests: exit codes, artifacts, resume, determinism, config validation."""

import contextlib
import io
import json
import os

import pytest

import gaitwave.cli as cli
from gaitwave.cli import (
    EXIT_OK,
    EXIT_REFUSED,
    EXIT_TRAINING,
    EXIT_VALIDATION,
    entrypoint,
    job_key,
)
from gaitwave.errors import ConfigError, TrainingFailure
from gaitwave.expconfig import load_experiment_config

SUB6_SPEC = {
    "num_classes": 2, "sessions_per_class": 1, "duration_s": 35.0,
    "rate_hz": 200.0, "num_channels": 52, "band": "sub6",
    "noise_std": 0.1, "seed": 51,
}
MMWAVE_SPEC = {
    "num_classes": 2, "sessions_per_class": 1, "duration_s": 35.0,
    "rate_hz": 10.0, "num_channels": 30, "band": "mmwave",
    "noise_std": 0.1, "seed": 50,
}


def tiny_config_doc(out_dir):
    return {
        "dataset": {"synth": [SUB6_SPEC, MMWAVE_SPEC]},
        "bands": ["sub6_10hz", "sub6_200hz", "mmwave_10hz"],
        "models": [{"family": "tcn", "input_channels": 52, "num_classes": 2,
                    "channel_list": [4], "kernel_size": 2}],
        "train": {"epochs": 2, "batch_size": 8, "repeats": 1, "seed": 0},
        "learning_curve": {
            "band": "mmwave_10hz",
            "fractions": [0.7, 0.35],
            "model": {"family": "tcn", "input_channels": 30, "num_classes": 2,
                      "channel_list": [4], "kernel_size": 2},
        },
        "out_dir": str(out_dir),
    }


def write_config(path, doc):
    path.write_text(json.dumps(doc, indent=2), encoding="utf-8")
    return path


def run_quiet(args):
    buf = io.StringIO()
    with contextlib.redirect_stdout(buf):
        code = entrypoint(args)
    return code, buf.getvalue()


@pytest.fixture(scope="module")
def completed_run(tmp_path_factory):
    base = tmp_path_factory.mktemp("clirun")
    out = base / "results"
    config_path = write_config(base / "config.json", tiny_config_doc(out))
    code, stdout = run_quiet(["run", str(config_path)])
    assert code == EXIT_OK
    return config_path, out, stdout


# ---------------------------------------------------------------------------
# synth


class TestSynthCommand:
    def _spec_file(self, tmp_path, **overrides):
        doc = dict(MMWAVE_SPEC, **overrides)
        return write_config(tmp_path / "spec.json", doc)

    def test_valid_spec(self, tmp_path, capsys):
        spec = self._spec_file(tmp_path)
        assert entrypoint(["synth", str(spec), str(tmp_path / "data")]) == EXIT_OK
        captured = capsys.readouterr()
        assert "2 classes" in captured.out
        manifest = json.loads((tmp_path / "data" / "manifest.json").read_text())
        assert manifest["num_classes"] == 2
        labels = [e["person_label"] for e in manifest["entries"]
                  if not e["is_background"]]
        assert sorted(labels) == [0, 1]
        assert sum(e["is_background"] for e in manifest["entries"]) == 1

    def test_equal_frequency_range_rejected(self, tmp_path, capsys):
        spec = self._spec_file(tmp_path, gait_freq_range=[1.0, 1.0])
        assert entrypoint(["synth", str(spec), str(tmp_path / "data")]) == EXIT_VALIDATION
        assert "error:" in capsys.readouterr().err

    def test_bad_json_rejected(self, tmp_path, capsys):
        spec = tmp_path / "broken.json"
        spec.write_text("{ not json")
        assert entrypoint(["synth", str(spec), str(tmp_path / "data")]) == EXIT_VALIDATION

    def test_refuses_overwrite_without_force(self, tmp_path, capsys):
        spec = self._spec_file(tmp_path)
        out = tmp_path / "data"
        assert entrypoint(["synth", str(spec), str(out)]) == EXIT_OK
        assert entrypoint(["synth", str(spec), str(out)]) == EXIT_REFUSED
        assert "--force" in capsys.readouterr().err
        assert entrypoint(["synth", str(spec), str(out), "--force"]) == EXIT_OK


# ---------------------------------------------------------------------------
# run


class TestRunCommand:
    def test_artifacts_written(self, completed_run):
        _, out, stdout = completed_run
        for name in ("results.json", "comparison.csv", "comparison.md",
                     "aggregate.json", "aggregate.md", "curve.csv"):
            assert (out / name).is_file(), name
        assert len(list((out / "jobs").glob("*.json"))) == 3
        assert "| Model |" in stdout
        assert "results written" in stdout

    def test_results_content(self, completed_run):
        _, out, _ = completed_run
        doc = json.loads((out / "results.json").read_text())
        assert len(doc["comparison"]) == 1
        row = doc["comparison"][0]
        assert all(row["stats"][name] is not None
                   for name in ("sub6_10hz", "sub6_200hz", "mmwave_10hz"))
        assert set(doc["aggregate"]["scopes"]) == {"all", "excl_lstm_humanfi",
                                                   "excl_all_lstm"}
        assert [p["fraction"] for p in doc["learning_curve"]["points"]] == [0.7, 0.35]

    def test_rerun_is_byte_identical(self, completed_run, tmp_path, monkeypatch):
        config_path, out, _ = completed_run
        monkeypatch.setenv("GAITWAVE_OUT", str(tmp_path / "elsewhere"))
        code, _ = run_quiet(["run", str(config_path)])
        assert code == EXIT_OK
        # the env override redirected all outputs
        assert (tmp_path / "elsewhere" / "results.json").is_file()
        assert ((tmp_path / "elsewhere" / "results.json").read_bytes()
                == (out / "results.json").read_bytes())

    def test_resume_skips_completed_jobs(self, completed_run, capsys):
        config_path, out, _ = completed_run
        before = {p.name: p.stat().st_mtime_ns for p in (out / "jobs").glob("*.json")}
        results_before = (out / "results.json").read_bytes()
        assert entrypoint(["run", str(config_path), "--resume"]) == EXIT_OK
        assert "skipped (resume" in capsys.readouterr().out
        after = {p.name: p.stat().st_mtime_ns for p in (out / "jobs").glob("*.json")}
        assert after == before  # job files untouched
        assert (out / "results.json").read_bytes() == results_before

    def test_resume_recomputes_missing_job(self, completed_run, capsys):
        config_path, out, _ = completed_run
        victim = sorted((out / "jobs").glob("*.json"))[0]
        content = victim.read_bytes()
        victim.unlink()
        assert entrypoint(["run", str(config_path), "--resume"]) == EXIT_OK
        stdout = capsys.readouterr().out
        assert "skipped (resume" in stdout and "trained" in stdout
        assert victim.read_bytes() == content  # recomputed identically

    def test_missing_manifest_rejected(self, tmp_path, capsys):
        doc = tiny_config_doc(tmp_path / "out")
        doc["dataset"] = {"manifest": "nowhere/manifest.json"}
        config = write_config(tmp_path / "config.json", doc)
        assert entrypoint(["run", str(config)]) == EXIT_VALIDATION
        assert "does not exist" in capsys.readouterr().err

    def test_training_failure_writes_partial_results(self, tmp_path, monkeypatch,
                                                     capsys):
        real = cli.repeat_runs
        calls = []

        def flaky(cfg, data, settings):
            if calls:
                raise TrainingFailure("loss became non-finite", epoch=1)
            calls.append(1)
            return real(cfg, data, settings)

        monkeypatch.setattr(cli, "repeat_runs", flaky)
        out = tmp_path / "out"
        config = write_config(tmp_path / "config.json", tiny_config_doc(out))
        assert entrypoint(["run", str(config)]) == EXIT_TRAINING
        err = capsys.readouterr().err
        assert "training failure" in err and "partial results" in err
        doc = json.loads((out / "results.json").read_text())
        stats = doc["comparison"][0]["stats"]
        assert sum(s is not None for s in stats.values()) == 1
        assert doc["aggregate"] is None
        assert doc["learning_curve"] is None
        assert not (out / "aggregate.json").exists()

    def test_seed_override_changes_job_identity(self, completed_run, tmp_path,
                                                monkeypatch):
        config_path, out, _ = completed_run
        monkeypatch.setenv("GAITWAVE_OUT", str(tmp_path / "seeded"))
        code, _ = run_quiet(["run", str(config_path), "--seed", "1"])
        assert code == EXIT_OK
        original = {p.name for p in (out / "jobs").glob("*.json")}
        seeded = {p.name for p in (tmp_path / "seeded" / "jobs").glob("*.json")}
        assert original.isdisjoint(seeded)

    def test_parallel_workers_match_serial(self, completed_run, tmp_path,
                                           monkeypatch):
        config_path, out, _ = completed_run
        monkeypatch.setenv("GAITWAVE_OUT", str(tmp_path / "par"))
        code, _ = run_quiet(["run", str(config_path), "--jobs", "2"])
        assert code == EXIT_OK
        assert ((tmp_path / "par" / "results.json").read_bytes()
                == (out / "results.json").read_bytes())

    def test_bad_jobs_value(self, capsys):
        assert entrypoint(["run", "whatever.json", "--jobs", "0"]) == EXIT_VALIDATION


# ---------------------------------------------------------------------------
# report


class TestReportCommand:
    def test_regenerates_identical_tables(self, completed_run):
        _, out, _ = completed_run
        names = ("comparison.csv", "comparison.md", "aggregate.json",
                 "aggregate.md", "curve.csv")
        originals = {n: (out / n).read_bytes() for n in names}
        results_before = (out / "results.json").read_bytes()
        for n in names:
            (out / n).unlink()
        code, stdout = run_quiet(["report", str(out)])
        assert code == EXIT_OK
        for n in names:
            assert (out / n).read_bytes() == originals[n], n
        assert (out / "results.json").read_bytes() == results_before
        assert "| Model |" in stdout

    def test_exclude_lstm_scope(self, completed_run):
        _, out, _ = completed_run
        code, _ = run_quiet(["report", str(out), "--exclude-lstm"])
        assert code == EXIT_OK
        doc = json.loads((out / "aggregate.json").read_text())
        assert set(doc["scopes"]) == {"excl_all_lstm"}
        # restore the full aggregate files for any later test
        code, _ = run_quiet(["report", str(out)])
        assert code == EXIT_OK

    def test_exclude_lstm_humanfi_scope(self, completed_run):
        _, out, _ = completed_run
        code, _ = run_quiet(["report", str(out), "--exclude-lstm-humanfi"])
        assert code == EXIT_OK
        doc = json.loads((out / "aggregate.json").read_text())
        assert set(doc["scopes"]) == {"excl_lstm_humanfi"}
        run_quiet(["report", str(out)])

    def test_scope_flags_mutually_exclusive(self, completed_run):
        _, out, _ = completed_run
        with pytest.raises(SystemExit):
            entrypoint(["report", str(out), "--exclude-lstm",
                        "--exclude-lstm-humanfi"])

    def test_empty_dir_rejected(self, tmp_path, capsys):
        assert entrypoint(["report", str(tmp_path)]) == EXIT_VALIDATION
        assert "results.json" in capsys.readouterr().err

    def test_malformed_results_rejected(self, tmp_path, capsys):
        (tmp_path / "results.json").write_text("{ nope")
        assert entrypoint(["report", str(tmp_path)]) == EXIT_VALIDATION
        assert "results.json" in capsys.readouterr().err

    def test_empty_comparison_rejected(self, tmp_path, capsys):
        (tmp_path / "results.json").write_text(
            json.dumps({"comparison": [], "aggregate": None, "learning_curve": None}))
        assert entrypoint(["report", str(tmp_path)]) == EXIT_VALIDATION


# ---------------------------------------------------------------------------
# job identity


class TestJobKey:
    BASE = dict(
        model_doc={"family": "tcn", "channel_list": [4]},
        band_name="mmwave_10hz",
        background_subtraction=False,
        standardize=True,
        train_doc={"seed": 0, "epochs": 10},
    )

    def test_deterministic(self):
        assert job_key(**self.BASE) == job_key(**self.BASE)
        assert len(job_key(**self.BASE)) == 16

    def test_sensitive_to_every_component(self):
        base = job_key(**self.BASE)
        variants = [
            dict(self.BASE, model_doc={"family": "tcn", "channel_list": [8]}),
            dict(self.BASE, band_name="sub6_10hz"),
            dict(self.BASE, background_subtraction=True),
            dict(self.BASE, standardize=False),
            dict(self.BASE, train_doc={"seed": 1, "epochs": 10}),
        ]
        keys = {job_key(**v) for v in variants}
        assert base not in keys
        assert len(keys) == len(variants)


# ---------------------------------------------------------------------------
# config loading


class TestConfigLoader:
    def _load(self, tmp_path, doc):
        return load_experiment_config(write_config(tmp_path / "c.json", doc))

    def test_valid_config_parses(self, tmp_path):
        cfg = self._load(tmp_path, tiny_config_doc(tmp_path / "out"))
        assert len(cfg.models) == 1
        assert len(cfg.bands) == 3
        assert cfg.synth_specs[0].band == "sub6"
        assert cfg.train.epochs == 2
        assert cfg.curve is not None and cfg.curve.fractions == (0.7, 0.35)

    def test_per_band_subtraction_override(self, tmp_path):
        doc = tiny_config_doc(tmp_path / "out")
        doc["background_subtraction"] = False
        doc["bands"] = [{"name": "mmwave_10hz", "background_subtraction": True},
                        "sub6_10hz"]
        cfg = self._load(tmp_path, doc)
        assert cfg.band_setting("mmwave_10hz").background_subtraction is True
        assert cfg.band_setting("sub6_10hz").background_subtraction is False

    def test_not_json(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text("{ nope")
        with pytest.raises(ConfigError, match="not valid JSON"):
            load_experiment_config(path)

    def test_non_object(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text("[1, 2]")
        with pytest.raises(ConfigError, match="JSON object"):
            load_experiment_config(path)

    def test_unknown_top_level_key(self, tmp_path):
        doc = tiny_config_doc(tmp_path / "out")
        doc["modles"] = doc.pop("models")
        with pytest.raises(ConfigError, match="unknown config keys"):
            self._load(tmp_path, doc)

    def test_missing_required_key(self, tmp_path):
        doc = tiny_config_doc(tmp_path / "out")
        del doc["train"]
        with pytest.raises(ConfigError, match="missing required key"):
            self._load(tmp_path, doc)

    def test_dataset_requires_exactly_one_source(self, tmp_path):
        doc = tiny_config_doc(tmp_path / "out")
        doc["dataset"] = {"manifest": "m.json", "synth": [MMWAVE_SPEC]}
        with pytest.raises(ConfigError, match="exactly one"):
            self._load(tmp_path, doc)

    def test_empty_models_rejected(self, tmp_path):
        doc = tiny_config_doc(tmp_path / "out")
        doc["models"] = []
        with pytest.raises(ConfigError, match="no model configs"):
            self._load(tmp_path, doc)

    def test_unknown_band_rejected(self, tmp_path):
        doc = tiny_config_doc(tmp_path / "out")
        doc["bands"] = ["sub6_10hz", "sub6_50hz"]
        with pytest.raises(ConfigError, match="sub6_50hz"):
            self._load(tmp_path, doc)

    def test_duplicate_bands_rejected(self, tmp_path):
        doc = tiny_config_doc(tmp_path / "out")
        doc["bands"] = ["sub6_10hz", {"name": "sub6_10hz"}]
        with pytest.raises(ConfigError, match="duplicate band"):
            self._load(tmp_path, doc)

    def test_synth_spec_error_wrapped(self, tmp_path):
        doc = tiny_config_doc(tmp_path / "out")
        doc["dataset"] = {"synth": [dict(MMWAVE_SPEC, nose_std=0.5)]}
        with pytest.raises(ConfigError, match="nose_std"):
            self._load(tmp_path, doc)

    def test_train_unknown_key_wrapped(self, tmp_path):
        doc = tiny_config_doc(tmp_path / "out")
        doc["train"] = {"epochz": 3}
        with pytest.raises(ConfigError, match="epochz"):
            self._load(tmp_path, doc)

    def test_model_class_count_must_match_dataset(self, tmp_path):
        doc = tiny_config_doc(tmp_path / "out")
        doc["models"][0]["num_classes"] = 7
        with pytest.raises(ConfigError, match="7 classes"):
            self._load(tmp_path, doc)

    def test_synth_specs_must_agree_on_classes(self, tmp_path):
        doc = tiny_config_doc(tmp_path / "out")
        doc["dataset"]["synth"][1] = dict(MMWAVE_SPEC, num_classes=4)
        with pytest.raises(ConfigError, match="disagree"):
            self._load(tmp_path, doc)

    def test_curve_requires_model(self, tmp_path):
        doc = tiny_config_doc(tmp_path / "out")
        doc["learning_curve"] = {"band": "mmwave_10hz"}
        with pytest.raises(ConfigError, match="model"):
            self._load(tmp_path, doc)

    def test_curve_unknown_key(self, tmp_path):
        doc = tiny_config_doc(tmp_path / "out")
        doc["learning_curve"]["fracs"] = [0.5]
        with pytest.raises(ConfigError, match="fracs"):
            self._load(tmp_path, doc)

    def test_curve_bad_band(self, tmp_path):
        doc = tiny_config_doc(tmp_path / "out")
        doc["learning_curve"]["band"] = "terahertz"
        with pytest.raises(ConfigError, match="terahertz"):
            self._load(tmp_path, doc)


# ---------------------------------------------------------------------------
# parser basics


class TestParser:
    def test_help_exits_zero(self):
        with pytest.raises(SystemExit) as exc:
            entrypoint(["--help"])
        assert exc.value.code == 0

    def test_no_arguments_is_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            entrypoint([])
        assert exc.value.code == 2

    def test_unknown_command(self):
        with pytest.raises(SystemExit) as exc:
            entrypoint(["train"])
        assert exc.value.code == 2
