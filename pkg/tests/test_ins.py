import numpy as np
import pytest

from nrse import ins
from nrse.signal_core import SampledSignal

from conftest import FS


def test_surrogates_preserve_magnitude_spectrum(rng):
    x = rng.standard_normal(4096)
    surr = ins.make_surrogates(x, 8, seed=3)
    ref = np.abs(np.fft.rfft(x))
    for s in surr:
        assert np.max(np.abs(np.abs(np.fft.rfft(s)) - ref)) <= 1e-8 * ref.max()


def test_surrogates_are_real_and_distinct(rng):
    x = rng.standard_normal(2048)
    surr = ins.make_surrogates(x, 4, seed=0)
    assert surr.dtype.kind == "f"
    assert surr.shape == (4, 2048)
    assert not np.allclose(surr[0], surr[1])


def test_surrogates_deterministic(rng):
    x = rng.standard_normal(1024)
    a = ins.make_surrogates(x, 3, seed=42)
    b = ins.make_surrogates(x, 3, seed=42)
    assert np.array_equal(a, b)


def test_hermite_tapers_orthonormal():
    tapers = ins.hermite_tapers(256, 5)
    assert tapers.shape == (5, 256)
    gram = tapers @ tapers.T
    assert np.max(np.abs(gram - np.eye(5))) <= 1e-8


def test_multitaper_averaging_reduces_variance(rng):
    # the PSD estimate of white noise should fluctuate less across frames
    # when several orthogonal tapers are averaged
    x = rng.standard_normal(FS)
    s1 = ins.multitaper_spectrogram(x, 512, n_tapers=1)
    s5 = ins.multitaper_spectrogram(x, 512, n_tapers=5)
    v1 = np.var(s1 / s1.mean(), axis=0).mean()
    v5 = np.var(s5 / s5.mean(), axis=0).mean()
    assert v5 < v1


def test_white_noise_mostly_stationary():
    hits = []
    for seed in range(5):
        rng = np.random.default_rng(seed)
        prof = ins.compute_ins(rng.standard_normal(FS), n_surrogates=30, seed=seed)
        hits.append(np.mean(prof.values <= prof.gammas))
    assert np.mean(hits) >= 0.9


def test_burst_is_non_stationary():
    rng = np.random.default_rng(3)
    x = np.zeros(FS)
    x[: FS // 8] = rng.standard_normal(FS // 8)
    prof = ins.compute_ins(x, n_surrogates=30, seed=11)
    mid = (prof.scales >= 0.02) & (prof.scales <= 0.3)
    assert np.all(prof.values[mid] > prof.gammas[mid])


def test_compute_ins_deterministic(rng):
    x = rng.standard_normal(FS // 2)
    a = ins.compute_ins(x, n_surrogates=10, seed=5)
    b = ins.compute_ins(x, n_surrogates=10, seed=5)
    assert np.array_equal(a.values, b.values)
    assert np.array_equal(a.gammas, b.gammas)


def test_compute_ins_accepts_sampled_signal(rng):
    x = rng.standard_normal(FS // 2)
    a = ins.compute_ins(SampledSignal(x, FS), n_surrogates=5, seed=1)
    b = ins.compute_ins(x, n_surrogates=5, seed=1)
    assert np.array_equal(a.values, b.values)


def test_profile_lookup_and_csv(tmp_path, rng):
    prof = ins.compute_ins(rng.standard_normal(FS // 2), n_surrogates=5, seed=2)
    s = float(prof.scales[0])
    assert prof.is_stationary(s) == (prof.values[0] <= prof.gammas[0])
    with pytest.raises(ValueError):
        prof.is_stationary(0.12345)
    out = tmp_path / "prof.csv"
    prof.to_csv(out)
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "scale,ins,gamma"
    assert len(lines) == 1 + len(prof.scales)


def test_overlong_scales_are_dropped(rng):
    # a 0.5-signal-length window cannot hold three half-overlapped frames
    # of itself; such scales must vanish rather than crash
    lengths = ins.valid_window_lengths(1600, (0.01, 0.5, 0.9), 5)
    assert all(w <= 800 for _, w in lengths)
    x = rng.standard_normal(1600)
    prof = ins.compute_ins(x, scales=(0.1, 0.9), n_surrogates=5, seed=0)
    assert prof.scales.max() <= 0.5
