import numpy as np
import pytest

from nrse import corpus, hnh
from nrse.signal_core import FrameSpec, SampledSignal, frame_signal

from conftest import FS, make_tone


def _rel_err(a, b):
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))


# ---------------------------------------------------------------- gain law

def test_absorption_hits_level_exactly_at_full_deviation():
    p = hnh.HnhParams()
    d = np.arange(0.0, 1.001, 0.1)
    for delta in d:
        a, level = hnh.absorption_gain(d, float(delta), p.level_init, p)
        assert a[-1] == level


def test_absorption_monotone_in_deviation():
    p = hnh.HnhParams()
    d = np.arange(0.0, 1.001, 0.1)
    for delta in d:
        a, _ = hnh.absorption_gain(d, float(delta), p.level_init, p)
        assert np.all(np.diff(a) >= 0.0)
        assert np.all((a > 0.0) & (a <= 1.0))


def test_transient_branch_saturates_at_its_ceiling():
    p = hnh.HnhParams(delta_threshold=0.5, max_gain_transient=0.45)
    a, _ = hnh.absorption_gain(np.array([0.0, 0.5, 1.0]), 0.9, 0.3, p)
    assert np.all(a <= p.max_gain_transient + 1e-12)
    assert np.all(np.diff(a) >= 0.0)


def test_harmonic_beats_non_harmonic_for_positive_change():
    p = hnh.HnhParams()
    d = np.arange(0.0, 1.001, 0.1)
    for delta in np.arange(0.1, 1.001, 0.1):
        a, _ = hnh.absorption_gain(d, float(delta), p.level_init, p)
        gh = hnh.harmonic_gain(a, np.ones(d.size, bool), float(delta), p)
        gn = hnh.harmonic_gain(a, np.zeros(d.size, bool), float(delta), p)
        assert np.all(gh > gn)
        assert np.all((gh > 0.0) & (gh <= 1.0))
        assert np.all((gn > 0.0) & (gn <= 1.0))


def test_gains_respect_floor_and_ceiling():
    p = hnh.HnhParams(gain_floor=0.25)
    g = hnh.harmonic_gain(np.array([1e-5, 0.5, 1.0]), np.array([True, True, True]), 1.0, p)
    assert g.min() >= 0.25
    assert g.max() <= 1.0


# ----------------------------------------------------------- group change

def test_delta_ins_hand_value():
    assert hnh.delta_ins(np.array([0.0, 4.0]), np.array([3.0, 0.0])) == pytest.approx(5.0 / 7.0)


def test_delta_ins_bounds_and_edges(rng):
    assert hnh.delta_ins(np.array([1.0, 2.0]), None) == 0.0
    v = rng.uniform(0, 10, 6)
    assert hnh.delta_ins(v, v) == 0.0
    for _ in range(50):
        a, b = rng.uniform(0, 5, 4), rng.uniform(0, 5, 4)
        assert 0.0 <= hnh.delta_ins(a, b) <= 1.0
    with pytest.raises(ValueError):
        hnh.delta_ins(np.ones(3), np.ones(4))


def test_segment_groups_tiles_everything():
    groups = hnh.segment_groups(21, 8)
    assert groups == [(0, 8), (8, 16), (16, 21)]
    with pytest.raises(ValueError):
        hnh.segment_groups(5, 8)


# ---------------------------------------------------------- classification

def test_classify_voiced_versus_fricative():
    fs = FS
    n = 8 * 512
    t = np.arange(n) / fs
    voiced = 0.5 * np.sin(2 * np.pi * 150 * t)
    rng = np.random.default_rng(1)
    fric = 0.5 * np.diff(rng.standard_normal(n + 1))  # differenced noise: dense crossings
    spec = FrameSpec(512, 256, "hamming")
    flags_v = hnh.classify_frames(frame_signal(SampledSignal(voiced, fs), spec),
                                  0.35 * 512, -30.0)
    flags_f = hnh.classify_frames(frame_signal(SampledSignal(fric, fs), spec),
                                  0.35 * 512, -30.0)
    assert flags_v.mean() > 0.9
    assert flags_f.mean() < 0.1


def test_classify_silence_fails_energy_gate():
    fs = FS
    t = np.arange(8 * 512) / fs
    x = 0.5 * np.sin(2 * np.pi * 150 * t)
    x[: 4 * 512] *= 1e-4  # first half far below the gate
    flags = hnh.classify_frames(frame_signal(SampledSignal(x, fs)), 0.35 * 512, -30.0)
    n_half = len(flags) // 2
    assert flags[: n_half - 1].mean() < 0.2
    assert flags[n_half + 1:].mean() > 0.8


def test_classify_accepts_substitute_crossings():
    fs = FS
    rng = np.random.default_rng(2)
    x = SampledSignal(rng.standard_normal(8 * 512), fs)
    fr = frame_signal(x)
    forced = hnh.classify_frames(fr, 0.35 * 512, -30.0, zc=np.zeros(fr.n_frames))
    assert forced.mean() > 0.5  # crossing gate passes everywhere once zc is zeroed


# ----------------------------------------------------------------- pipeline

def test_unity_bypass_reproduces_input(utterance):
    out = hnh.enhance(utterance, hnh.HnhParams(absorption_override=1.0))
    assert _rel_err(out.samples, utterance.samples) <= 1e-10


def test_override_gains_are_clamped(utterance):
    p = hnh.HnhParams(absorption_override=0.01, gain_floor=0.1)
    out = hnh.enhance(utterance, p)
    assert len(out.samples) == len(utterance.samples)
    assert out.power() > 0


def test_enhance_is_deterministic(utterance):
    a = hnh.enhance(utterance, hnh.HnhParams(seed=7))
    b = hnh.enhance(utterance, hnh.HnhParams(seed=7))
    assert np.array_equal(a.samples, b.samples)


def test_enhance_preserves_length_and_level(utterance, rir_long):
    mix = corpus.synth_white_noise(len(utterance.samples), FS, seed=9)
    from nrse.signal_core import mix_at_snr, convolve_rir
    noisy = mix_at_snr(convolve_rir(utterance, rir_long), mix, 0.0)
    out = hnh.enhance(noisy)
    assert len(out.samples) == len(noisy.samples)
    assert out.power() == pytest.approx(noisy.power(), rel=1e-9)


def test_debug_csv_dumps_per_frame_rows(tmp_path, utterance):
    path = tmp_path / "trace.csv"
    hnh.enhance(utterance, hnh.HnhParams(), debug_csv=path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "frame,group,harmonic,delta,deviation,absorption,gain"
    spec = FrameSpec.for_rate(FS, 32.0, 0.5, "hamming")
    n_frames = frame_signal(utterance, spec).n_frames
    assert len(lines) == 1 + n_frames


def test_param_validation():
    with pytest.raises(ValueError):
        hnh.HnhParams(gain_floor=0.0)
    with pytest.raises(ValueError):
        hnh.HnhParams(group_memory=1.5)
    with pytest.raises(ValueError):
        hnh.HnhParams(level_init=-0.1)
    with pytest.raises(ValueError):
        hnh.HnhParams(steepness=0.0)
