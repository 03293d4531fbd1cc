import numpy as np
import pytest

from nrse import corpus, mask
from nrse.signal_core import FrameSpec, SampledSignal, convolve_rir, mix_at_snr, stft

from conftest import FS, make_tone


def _rel_err(a, b):
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))


def test_mel_layout_edges_cover_band():
    layout = mask.BandLayout.mel(21, FS)
    edges = np.asarray(layout.edges_hz)
    assert layout.n_bands == 21
    assert np.all(np.diff(edges) > 0)
    assert edges[0] == pytest.approx(0.0, abs=1.0)
    assert edges[-1] == pytest.approx(FS / 2, rel=0.01)


def test_bin_edges_partition_the_spectrum():
    layout = mask.BandLayout.mel(21, FS)
    be = layout.bin_edges(FS, 512)
    assert be[0] == 0
    assert be[-1] == 512 // 2 + 1
    assert np.all(np.diff(be) >= 1)  # every band owns at least one bin


def test_irm_matches_elementwise_comparison(rng):
    srr_db = rng.uniform(-40, 40, size=(500, 21))
    m = mask.irm(srr_db, threshold_db=-6.0)
    assert np.array_equal(m.bits.astype(bool), srr_db > -6.0)


def test_irm_edge_is_strict():
    srr_db = np.full((3, 21), -6.0)
    m = mask.irm(srr_db, threshold_db=-6.0)
    assert not m.bits.any()


def test_srr_matches_band_energy_oracle(rng):
    # tone in one band of the direct path, independent noise in another band
    # of the residual; SRR must match a direct per-band energy computation
    spec = FrameSpec(512, 512, "rectangular")
    layout = mask.BandLayout.mel(21, FS)
    n = 8 * 512
    direct = make_tone(400.0, n)
    residual = make_tone(3000.0, n, amp=0.2)
    mixture = SampledSignal(direct.samples + residual.samples, FS)

    srr_db = mask.srr(direct, mixture, layout, spec)

    edges = layout.bin_edges(FS, 512)
    gd = np.abs(stft(direct, spec).values) ** 2
    gr = np.abs(stft(SampledSignal(mixture.samples - direct.samples, FS), spec).values) ** 2
    for j in range(21):
        ed = gd[:, edges[j]:edges[j + 1]].sum(axis=1)
        er = gr[:, edges[j]:edges[j + 1]].sum(axis=1)
        expect = 10.0 * np.log10(ed / (er + 1e-30))
        expect = np.clip(expect, -100.0, 100.0)
        assert np.max(np.abs(srr_db[:, j] - expect)) <= 0.1


def test_apply_all_ones_mask_is_identity(rng):
    x = SampledSignal(rng.standard_normal(FS // 2), FS)
    for spec in (FrameSpec(512, 512, "rectangular"), FrameSpec(512, 256, "hamming")):
        g = stft(x, spec)
        layout = mask.BandLayout.mel(21, FS)
        ones = mask.TFMask(np.ones((g.n_frames, 21), np.uint8), -6.0, layout)
        y = mask.apply_mask(x, ones, spec)
        assert _rel_err(y.samples, x.samples) <= 1e-10


def test_mask_attenuates_rejected_band():
    # keep only content below 1 kHz on a 500 Hz + 3 kHz two-tone
    n = 16 * 512
    two = SampledSignal(make_tone(500.0, n).samples + make_tone(3000.0, n).samples, FS)
    spec = FrameSpec(512, 512, "rectangular")
    layout = mask.BandLayout.mel(21, FS)
    g = stft(two, spec)
    edges = np.asarray(layout.edges_hz)
    keep = np.array([edges[j + 1] <= 1000.0 for j in range(21)], dtype=np.uint8)
    bits = np.tile(keep, (g.n_frames, 1))
    y = mask.apply_mask(two, mask.TFMask(bits, -6.0, layout), spec)

    gy = np.abs(stft(y, spec).values) ** 2
    freqs = g.bin_freqs()
    hi = np.abs(freqs - 3000.0) < 100.0
    before = (np.abs(g.values) ** 2)[:, hi].sum()
    after = gy[:, hi].sum()
    assert 10.0 * np.log10(before / (after + 1e-30)) >= 30.0


def test_masked_energy_never_grows(rng):
    x = SampledSignal(rng.standard_normal(FS // 2), FS)
    spec = FrameSpec(512, 512, "rectangular")
    g = stft(x, spec)
    layout = mask.BandLayout.mel(21, FS)
    bits = (rng.uniform(size=(g.n_frames, 21)) > 0.4).astype(np.uint8)
    y = mask.apply_mask(x, mask.TFMask(bits, -6.0, layout), spec)
    assert y.power() <= x.power() * (1.0 + 1e-9)


def test_ideal_mask_keeps_direct_dominated_cells(utterance, rir_long):
    noise = corpus.synth_white_noise(len(utterance.samples), FS, seed=5)
    mixture = mix_at_snr(convolve_rir(utterance, rir_long), noise, 0.0)
    spec = FrameSpec(512, 512, "rectangular")
    m = mask.ideal_mask(utterance, rir_long, mixture, -6.0, spec=spec)
    assert 0.0 < m.density() < 1.0
    assert m.n_frames == stft(mixture, spec).n_frames


def test_ideal_mask_on_clean_anechoic_input(utterance):
    delta = SampledSignal(np.array([1.0]), FS)
    spec = FrameSpec(512, 512, "rectangular")
    m = mask.ideal_mask(utterance, delta, utterance, -6.0, spec=spec)
    # zero residual: every cell with direct energy survives
    layout = m.layout
    edges = layout.bin_edges(FS, 512)
    e = np.abs(stft(utterance, spec).values) ** 2
    for j in range(layout.n_bands):
        band = e[:, edges[j]:edges[j + 1]].sum(axis=1)
        assert np.all(m.bits[band > 1e-12, j] == 1)


def test_mask_save_load_round_trip(tmp_path, rng):
    layout = mask.BandLayout.mel(21, FS)
    bits = (rng.uniform(size=(40, 21)) > 0.5).astype(np.uint8)
    m = mask.TFMask(bits, -6.0, layout)
    path = tmp_path / "m.npz"
    m.save(path)
    m2 = mask.TFMask.load(path)
    assert np.array_equal(m.bits, m2.bits)
    assert m2.threshold_db == -6.0
    assert m2.layout.n_bands == 21
