"""Tests for the synthetic generator and its nearest-template oracle."""

import dataclasses
import json
import warnings

import numpy as np
import pytest

from gaitwave.csi_data import load_manifest, read_recording, segment
from gaitwave.errors import SpecError
from gaitwave.preprocess import compute_background
from gaitwave.synthgen import (
    ClippingWarning,
    SynthSpec,
    build_templates,
    class_frequencies,
    class_signal,
    class_signatures,
    dominant_bin_ratio,
    generate,
    load_spec,
    oracle_classify,
    spec_from_dict,
)

QUICK = SynthSpec(num_classes=3, sessions_per_class=1, duration_s=20.0, rate_hz=10.0,
                  num_channels=30, band="mmwave", seed=0)


# ------------------------------------------------------------ spec validation

@pytest.mark.parametrize("kwargs", [
    dict(num_classes=1),
    dict(sessions_per_class=0),
    dict(duration_s=0.0),
    dict(band="wifi7"),
    dict(num_channels=31),  # mmwave implies 30 or 60
    dict(band="sub6", num_channels=30),  # sub6 implies 52
    dict(gait_freq_range=(2.0, 1.0)),
    dict(gait_freq_range=(0.0, 1.0)),
    dict(gait_freq_range=(1.0, 6.0)),  # above Nyquist at 10 Hz
    dict(harmonic_count=0),
    dict(noise_std=-0.1),
    dict(background_level=-1.0),
])
def test_spec_rejects_invalid(kwargs):
    with pytest.raises(SpecError):
        SynthSpec(**kwargs)


def test_spec_rejects_crowded_class_frequencies():
    # (1.1 - 1.0) / 4 = 0.025 Hz between classes: too close to separate
    with pytest.raises(SpecError, match="0.05"):
        SynthSpec(num_classes=5, gait_freq_range=(1.0, 1.1))


def test_class_frequencies_evenly_spaced():
    freqs = class_frequencies(SynthSpec(num_classes=5, gait_freq_range=(0.6, 1.8)))
    np.testing.assert_allclose(freqs, [0.6, 0.9, 1.2, 1.5, 1.8], rtol=1e-12)
    assert np.diff(freqs).min() >= 0.05


# ----------------------------------------------------------------- generation

def test_generate_layout_and_manifest(tmp_path):
    manifest = generate(QUICK, tmp_path)
    files = sorted(p.name for p in tmp_path.glob("*.csi"))
    assert len(files) == 3 * 1 + 1  # one per (class, session) plus background
    assert "mmwave-background.csi" in files
    labeled = [e for e in manifest.entries if not e.is_background]
    assert sorted(e.person_label for e in labeled) == [0, 1, 2]
    assert all(e.band == "mmwave" and e.rate_hz == 10.0 for e in manifest.entries)
    reloaded = load_manifest(tmp_path / "manifest.json")
    assert reloaded == manifest


def test_generate_is_bit_identical_across_runs(tmp_path):
    generate(QUICK, tmp_path / "a")
    generate(QUICK, tmp_path / "b")
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert names == sorted(p.name for p in (tmp_path / "b").iterdir())
    for name in names:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_generate_seed_changes_output(tmp_path):
    generate(QUICK, tmp_path / "a")
    generate(dataclasses.replace(QUICK, seed=1), tmp_path / "b")
    a = read_recording(tmp_path / "a" / "mmwave-c00-s00.csi")
    b = read_recording(tmp_path / "b" / "mmwave-c00-s00.csi")
    assert not np.array_equal(a.samples, b.samples)


def test_degenerate_spec_yields_pure_background(tmp_path):
    spec = SynthSpec(num_classes=2, sessions_per_class=1, duration_s=5.0,
                     noise_std=0.0, signal_amplitude=0.0, background_level=3.0)
    generate(spec, tmp_path)
    for path in tmp_path.glob("*.csi"):
        rec = read_recording(path)
        np.testing.assert_array_equal(rec.samples, np.full(rec.samples.shape, 3.0,
                                                           dtype=np.float32))


def test_generated_amplitudes_finite_nonnegative(tmp_path):
    generate(QUICK, tmp_path)
    for path in tmp_path.glob("*.csi"):
        rec = read_recording(path)
        assert np.all(np.isfinite(rec.samples))
        assert rec.samples.min() >= 0.0


def test_clipping_emits_warning_when_floor_too_low(tmp_path):
    # no background floor: roughly half of each sinusoid dips below zero
    spec = SynthSpec(num_classes=2, sessions_per_class=1, duration_s=5.0,
                     background_level=0.0)
    with pytest.warns(ClippingWarning):
        generate(spec, tmp_path)


def test_defaults_do_not_clip(tmp_path):
    with warnings.catch_warnings():
        warnings.simplefilter("error", ClippingWarning)
        generate(QUICK, tmp_path)


def test_background_recording_matches_spec_profile(tmp_path):
    spec = SynthSpec(num_classes=2, sessions_per_class=1, duration_s=5.0, noise_std=0.0,
                     background_level=tuple(2.0 + 0.01 * i for i in range(30)))
    generate(spec, tmp_path)
    rec = read_recording(tmp_path / "mmwave-background.csi")
    profile = compute_background(rec)
    np.testing.assert_allclose(profile.mean_amplitude, spec.background_array(), atol=1e-6)


# ------------------------------------------------------------------ signatures

def test_signatures_deterministic_and_distinct():
    a = class_signatures(QUICK)
    b = class_signatures(QUICK)
    for s1, s2 in zip(a, b):
        np.testing.assert_array_equal(s1.amplitudes, s2.amplitudes)
        np.testing.assert_array_equal(s1.phases, s2.phases)
    assert not np.array_equal(a[0].amplitudes, a[1].amplitudes)


def test_class_signal_start_index_is_a_time_shift():
    sig = class_signatures(QUICK)[1]
    full = class_signal(sig, 100, QUICK.rate_hz)
    tail = class_signal(sig, 50, QUICK.rate_hz, start_index=50)
    np.testing.assert_allclose(tail, full[50:], rtol=1e-10, atol=1e-12)


def test_harmonic_amplitudes_decay():
    spec = SynthSpec(harmonic_count=4)
    for sig in class_signatures(spec):
        assert sig.amplitudes.shape == (30, 4)
        # mean amplitude per harmonic: the 1/h decay must dominate the draw jitter
        means = sig.amplitudes.mean(axis=0)
        assert np.all(np.diff(means) < 0)


# ---------------------------------------------------------------------- oracle

def test_oracle_noiseless_windows_classified_exactly(tmp_path):
    spec = SynthSpec(num_classes=5, sessions_per_class=1, duration_s=30.0, noise_std=0.0)
    manifest = generate(spec, tmp_path)
    templates = build_templates(spec, 50)
    background = spec.background_array()
    for entry in manifest.entries:
        if entry.is_background:
            continue
        rec = read_recording(tmp_path / entry.path)
        for w in segment(rec, 5.0):
            assert oracle_classify(w.samples, templates, background=background) == w.label


def test_oracle_accuracy_at_ten_percent_noise(tmp_path):
    spec = SynthSpec(num_classes=5, sessions_per_class=2, duration_s=60.0,
                     noise_std=0.1 * 1.0, seed=0)
    manifest = generate(spec, tmp_path)
    templates = build_templates(spec, 50)
    background = spec.background_array()
    correct = total = 0
    for entry in manifest.entries:
        if entry.is_background:
            continue
        rec = read_recording(tmp_path / entry.path)
        for w in segment(rec, 5.0):
            correct += oracle_classify(w.samples, templates, background=background) == w.label
            total += 1
    assert total == 120
    assert correct / total >= 0.99


def test_oracle_accuracy_monotone_in_noise(tmp_path):
    accs = []
    for i, noise in enumerate((0.05, 0.5, 2.0)):
        spec = SynthSpec(num_classes=5, sessions_per_class=1, duration_s=30.0,
                         noise_std=noise, seed=0)
        out = tmp_path / str(i)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ClippingWarning)
            manifest = generate(spec, out)
        templates = build_templates(spec, 50)
        background = spec.background_array()
        correct = total = 0
        for entry in manifest.entries:
            if entry.is_background:
                continue
            rec = read_recording(out / entry.path)
            for w in segment(rec, 5.0):
                correct += oracle_classify(w.samples, templates, background=background) == w.label
                total += 1
        accs.append(correct / total)
    assert accs[0] >= accs[1] >= accs[2]
    assert accs[0] >= 0.99


def test_oracle_on_pure_noise_is_chance_level():
    # predictions carry no information about random labels, so accuracy must
    # sit within 3 binomial sigmas of 1/K
    spec = SynthSpec(num_classes=5)
    templates = build_templates(spec, 50)
    rng = np.random.default_rng(123)
    n = 1200
    labels = rng.integers(0, 5, size=n)
    hits = sum(
        oracle_classify(rng.normal(0.0, 0.1, size=(50, 30)), templates) == labels[i]
        for i in range(n)
    )
    p = 1.0 / 5.0
    sigma = (p * (1 - p) / n) ** 0.5
    assert abs(hits / n - p) <= 3 * sigma


def test_oracle_tie_breaks_to_lowest_index():
    # identical templates at indices 1 and 2 tie on every input; if those two
    # beat template 0, the winner must be index 1
    far = np.full(26, 100.0)
    near = np.ones(26)
    templates = np.stack([far, near, near])
    assert oracle_classify(np.zeros((50, 30)), templates) == 1
    assert oracle_classify(np.zeros((50, 30)), np.stack([near, near])) == 0


def test_oracle_window_length_mismatch():
    templates = build_templates(QUICK, 50)
    with pytest.raises(ValueError, match="bins"):
        oracle_classify(np.zeros((40, 30)), templates)


# ------------------------------------------------------------ spectral checks

def test_background_recording_has_no_periodicity(tmp_path):
    generate(SynthSpec(seed=0), tmp_path)
    rec = read_recording(tmp_path / "mmwave-background.csi")
    assert dominant_bin_ratio(rec.samples) < 2.0


def test_class_recording_shows_planted_periodicity(tmp_path):
    generate(SynthSpec(seed=0), tmp_path)
    rec = read_recording(tmp_path / "mmwave-c00-s00.csi")
    assert dominant_bin_ratio(rec.samples) > 100.0


def test_dominant_bin_ratio_degenerate_inputs():
    assert dominant_bin_ratio(np.full((100, 4), 2.0)) == 0.0
    assert dominant_bin_ratio(np.zeros((100, 4))) == 0.0


# --------------------------------------------------------------- serialization

def test_spec_json_round_trip(tmp_path):
    doc = {"num_classes": 4, "sessions_per_class": 1, "duration_s": 12.0,
           "rate_hz": 10.0, "num_channels": 30, "band": "mmwave",
           "gait_freq_range": [0.5, 1.7], "harmonic_count": 2, "noise_std": 0.05,
           "background_level": [1.0] * 30, "seed": 11}
    path = tmp_path / "spec.json"
    path.write_text(json.dumps(doc), encoding="utf-8")
    spec = load_spec(path)
    assert spec.num_classes == 4
    assert spec.gait_freq_range == (0.5, 1.7)
    assert spec.background_array().shape == (30,)
    assert spec.seed == 11


def test_spec_from_dict_rejects_unknown_fields():
    with pytest.raises(SpecError, match="unknown"):
        spec_from_dict({"num_classes": 3, "bogus_knob": 1})


def test_load_spec_rejects_invalid_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(SpecError, match="JSON"):
        load_spec(path)
    path.write_text("[1, 2]", encoding="utf-8")
    with pytest.raises(SpecError, match="object"):
        load_spec(path)
