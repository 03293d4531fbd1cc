"""Objective intelligibility and reverberation-energy metrics.

stoi:    short-time envelope correlation over one-third-octave bands,
         following the published constants (10 kHz, 15 bands from 150 Hz,
         384 ms segments, 40 dB silence gate, -15 dB clip).
asii_st: band-importance-weighted audibility from clean vs residual
         energies on critical bands.
srmr:    speech-to-reverberation modulation energy ratio over a gammatone
         front end and an 8-band modulation filterbank.
"""
from __future__ import annotations

import math
import shlex
import subprocess
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.fft import rfft
from scipy.signal import butter, fftconvolve, hilbert, resample_poly, sosfilt

from .signal_core import FrameSpec, SampledSignal, frame_signal

_EPS = np.finfo(np.float64).eps

# ---------------------------------------------------------------------------
# STOI
# ---------------------------------------------------------------------------

_STOI_FS = 10000
_STOI_FRAME = 256
_STOI_HOP = 128
_STOI_NFFT = 512
_STOI_NBANDS = 15
_STOI_MINFREQ = 150.0
_STOI_SEG = 30          # frames per short-time segment (384 ms)
_STOI_DYN_RANGE = 40.0  # silence gate below the loudest frame, dB
_STOI_BETA = -15.0      # SDR clip, dB


def _stoi_window() -> np.ndarray:
    return np.hanning(_STOI_FRAME + 2)[1:-1]


@lru_cache(maxsize=1)
def _third_octave_matrix() -> np.ndarray:
    """Boolean band matrix (15, 257) grouping FFT bins into 1/3-octave bands."""
    f = np.linspace(0, _STOI_FS, _STOI_NFFT + 1)[: _STOI_NFFT // 2 + 1]
    k = np.arange(_STOI_NBANDS, dtype=np.float64)
    lo = _STOI_MINFREQ * 2.0 ** ((2 * k - 1) / 6.0)
    hi = _STOI_MINFREQ * 2.0 ** ((2 * k + 1) / 6.0)
    obm = np.zeros((_STOI_NBANDS, f.size))
    for i in range(_STOI_NBANDS):
        a = int(np.argmin(np.square(f - lo[i])))
        b = int(np.argmin(np.square(f - hi[i])))
        obm[i, a:b] = 1.0
    return obm


def _to_rate(sig: SampledSignal, rate: int) -> np.ndarray:
    if sig.sample_rate == rate:
        return sig.samples
    g = math.gcd(rate, sig.sample_rate)
    return resample_poly(sig.samples, rate // g, sig.sample_rate // g)


def _remove_silent_frames(x: np.ndarray, y: np.ndarray):
    w = _stoi_window()
    starts = range(0, x.size - _STOI_FRAME, _STOI_HOP)
    xf = np.array([w * x[i:i + _STOI_FRAME] for i in starts])
    yf = np.array([w * y[i:i + _STOI_FRAME] for i in starts])
    if not xf.size:
        raise ValueError("input shorter than one analysis frame")
    energies = 20.0 * np.log10(np.linalg.norm(xf, axis=1) + _EPS)
    keep = energies > energies.max() - _STOI_DYN_RANGE
    xf, yf = xf[keep], yf[keep]
    if not xf.size:
        raise ValueError("no frames above the silence gate")

    def ola(frames):
        out = np.zeros((frames.shape[0] - 1) * _STOI_HOP + _STOI_FRAME)
        for i, fr in enumerate(frames):
            out[i * _STOI_HOP:i * _STOI_HOP + _STOI_FRAME] += fr
        return out

    return ola(xf), ola(yf)


def _band_envelopes(x: np.ndarray) -> np.ndarray:
    w = _stoi_window()
    starts = range(0, x.size - _STOI_FRAME, _STOI_HOP)
    frames = np.array([w * x[i:i + _STOI_FRAME] for i in starts])
    if not frames.size:
        raise ValueError("signal too short after silence removal")
    spec = rfft(frames, n=_STOI_NFFT, axis=1)
    return np.sqrt(_third_octave_matrix() @ (np.abs(spec.T) ** 2))  # (bands, frames)


def stoi(clean: SampledSignal, processed: SampledSignal) -> float:
    """Short-time objective intelligibility of ``processed`` given ``clean``."""
    if clean.sample_rate != processed.sample_rate:
        raise ValueError("sample rates differ")
    if len(clean) != len(processed):
        raise ValueError(f"length mismatch: {len(clean)} vs {len(processed)}")
    x = _to_rate(clean, _STOI_FS)
    y = _to_rate(processed, _STOI_FS)
    x, y = _remove_silent_frames(x, y)
    xb = _band_envelopes(x)
    yb = _band_envelopes(y)
    if xb.shape[1] < _STOI_SEG:
        raise ValueError("too little active speech for a short-time segment")
    clip = 10.0 ** (-_STOI_BETA / 20.0)
    total = 0.0
    count = 0
    for m in range(_STOI_SEG, xb.shape[1] + 1):
        xs = xb[:, m - _STOI_SEG:m]
        ys = yb[:, m - _STOI_SEG:m]
        alpha = np.linalg.norm(xs, axis=1, keepdims=True) / (
            np.linalg.norm(ys, axis=1, keepdims=True) + _EPS)
        yp = np.minimum(alpha * ys, xs * (1.0 + clip))
        xs = xs - xs.mean(axis=1, keepdims=True)
        yp = yp - yp.mean(axis=1, keepdims=True)
        xs = xs / (np.linalg.norm(xs, axis=1, keepdims=True) + _EPS)
        yp = yp / (np.linalg.norm(yp, axis=1, keepdims=True) + _EPS)
        total += float(np.sum(xs * yp))
        count += _STOI_NBANDS
    return total / count


# ---------------------------------------------------------------------------
# ASII_ST
# ---------------------------------------------------------------------------

# Critical bands (Hz) and speech importance profile; the last band is clipped
# to Nyquist at analysis time and the importance vector is renormalized.
CRITICAL_BAND_EDGES_HZ = (
    100, 200, 300, 400, 510, 630, 770, 920, 1080, 1270, 1480, 1720,
    2000, 2320, 2700, 3150, 3700, 4400, 5300, 6400, 7700, 9500,
)
CRITICAL_BAND_IMPORTANCE = (
    0.0103, 0.0261, 0.0419, 0.0577, 0.0577, 0.0577, 0.0577, 0.0577,
    0.0577, 0.0577, 0.0577, 0.0577, 0.0577, 0.0577, 0.0577, 0.0577,
    0.0577, 0.0460, 0.0343, 0.0226, 0.0110,
)


def band_importance() -> np.ndarray:
    w = np.asarray(CRITICAL_BAND_IMPORTANCE, dtype=np.float64)
    return w / w.sum()


def asii_from_band_snr(snr, weights=None) -> float:
    """Audibility score from a (frames, bands) linear SNR matrix.

    Each cell maps to snr/(1+snr) (infinite SNR maps to 1); rows are
    averaged with the band weights, which must sum to 1.
    """
    s = np.asarray(snr, dtype=np.float64)
    if s.ndim != 2:
        raise ValueError("snr matrix must be 2-D (frames x bands)")
    w = band_importance() if weights is None else np.asarray(weights, dtype=np.float64)
    if w.size != s.shape[1]:
        raise ValueError(f"{w.size} weights for {s.shape[1]} bands")
    if not math.isclose(float(w.sum()), 1.0, rel_tol=1e-6):
        raise ValueError("band weights must sum to 1")
    with np.errstate(invalid="ignore"):
        d = np.where(np.isinf(s), 1.0, s / (1.0 + s))
    d = np.nan_to_num(d, nan=1.0)  # 0/0 cells carry no distortion
    return float(np.mean(d @ w))


def _critical_band_edges(sample_rate: int, frame_len: int) -> np.ndarray:
    nyq = sample_rate / 2.0
    hz = [h for h in CRITICAL_BAND_EDGES_HZ if h < nyq] + [nyq]
    hz_per_bin = sample_rate / frame_len
    edges = np.round(np.asarray(hz) / hz_per_bin).astype(int)
    for i in range(1, len(edges)):
        edges[i] = max(edges[i], edges[i - 1] + 1)
    return np.minimum(edges, frame_len // 2 + 1)


def asii_st(clean: SampledSignal, processed: SampledSignal, weights=None,
            spec: FrameSpec | None = None) -> float:
    """Weighted audibility of ``processed`` against the clean reference.

    The distortion term is the residual (processed - clean); per-cell
    audibility is E_clean/(E_clean+E_residual), which equals snr/(1+snr).
    """
    if clean.sample_rate != processed.sample_rate:
        raise ValueError("sample rates differ")
    if len(clean) != len(processed):
        raise ValueError(f"length mismatch: {len(clean)} vs {len(processed)}")
    spec = spec or FrameSpec.for_rate(clean.sample_rate)
    edges = _critical_band_edges(clean.sample_rate, spec.frame_len)
    n_bands = len(edges) - 1
    if weights is None:
        w = band_importance()[:n_bands]
        w = w / w.sum()
    else:
        w = np.asarray(weights, dtype=np.float64)

    residual = SampledSignal(processed.samples - clean.samples, clean.sample_rate)
    spec_c = rfft(frame_signal(clean, spec).frames, axis=1)
    spec_r = rfft(frame_signal(residual, spec).frames, axis=1)

    def bands(v):
        p = np.abs(v) ** 2
        return np.stack([p[:, edges[j]:edges[j + 1]].sum(axis=1) for j in range(n_bands)], axis=1)

    e_c = bands(spec_c)
    e_r = bands(spec_r)
    tot = e_c + e_r
    d = np.where(tot > 0.0, e_c / np.where(tot > 0.0, tot, 1.0), 1.0)
    return float(np.mean(d @ (w / w.sum())))


# ---------------------------------------------------------------------------
# SRMR
# ---------------------------------------------------------------------------

_SRMR_N_CHANNELS = 23
_SRMR_LOW_HZ = 125.0
_SRMR_ENV_FS = 1000
_SRMR_MOD_CENTERS = tuple(4.0 * 32.0 ** (k / 7.0) for k in range(8))
_SRMR_WIN_S = 0.256
_SRMR_HOP_S = 0.064
_SRMR_CUM_FRACTION = 0.90


def _erb_number(f):
    return 21.4 * np.log10(1.0 + 0.00437 * np.asarray(f, dtype=np.float64))


def _erb_to_hz(e):
    return (10.0 ** (np.asarray(e, dtype=np.float64) / 21.4) - 1.0) / 0.00437


@lru_cache(maxsize=4)
def _gammatone_bank(fs: int) -> np.ndarray:
    """(channels, taps) FIR gammatone bank, each peak-normalized."""
    hi = 0.85 * fs / 2.0
    cfs = _erb_to_hz(np.linspace(float(_erb_number(_SRMR_LOW_HZ)),
                                 float(_erb_number(hi)), _SRMR_N_CHANNELS))
    taps = int(round(0.128 * fs))
    t = np.arange(taps) / fs
    bank = np.empty((_SRMR_N_CHANNELS, taps))
    for i, fc in enumerate(cfs):
        erb = 24.7 * (4.37 * fc / 1000.0 + 1.0)
        g = t ** 3 * np.exp(-2.0 * np.pi * 1.019 * erb * t) * np.cos(2.0 * np.pi * fc * t)
        peak = np.max(np.abs(rfft(g, n=4 * taps)))
        bank[i] = g / peak
    return bank


@lru_cache(maxsize=4)
def _modulation_bank(env_fs: int):
    sos = []
    for fc in _SRMR_MOD_CENTERS:
        lo = fc * 0.75
        hi = min(fc * 1.25, env_fs / 2.0 * 0.999)
        sos.append(butter(2, [lo, hi], btype="bandpass", fs=env_fs, output="sos"))
    return tuple(sos)


def srmr(x: SampledSignal) -> float:
    """Ratio of low to high modulation-band energy of the cochlear envelopes.

    Higher means crisper syllabic modulation (cleaner, less reverberant
    speech). Scale-invariant by construction.
    """
    fs = x.sample_rate
    if len(x) < int(0.3 * fs):
        raise ValueError("signal too short for modulation analysis")
    g = math.gcd(_SRMR_ENV_FS, fs)
    bank = _gammatone_bank(fs)
    win = int(round(_SRMR_WIN_S * _SRMR_ENV_FS))
    hop = int(round(_SRMR_HOP_S * _SRMR_ENV_FS))
    n_bands = len(_SRMR_MOD_CENTERS)
    energies = np.zeros(n_bands)
    sos_bank = _modulation_bank(_SRMR_ENV_FS)
    for ch in range(bank.shape[0]):
        band = fftconvolve(x.samples, bank[ch], mode="same")
        env = np.abs(hilbert(band))
        env = resample_poly(env, _SRMR_ENV_FS // g, fs // g)
        for j, sos in enumerate(sos_bank):
            m = sosfilt(sos, env)
            p = m ** 2
            if p.size <= win:
                energies[j] += float(p.sum())
            else:
                starts = np.arange(0, p.size - win + 1, hop)
                c = np.concatenate(([0.0], np.cumsum(p)))
                wins = c[starts + win] - c[starts]
                energies[j] += float(wins.mean())
    total = float(energies.sum())
    if total <= 0.0:
        raise ValueError("no modulation energy (all-silent input?)")
    cum = np.cumsum(energies) / total
    k_star = n_bands
    for k in range(5, n_bands + 1):
        if cum[k - 1] >= _SRMR_CUM_FRACTION:
            k_star = k
            break
    num = float(energies[:4].sum())
    den = float(energies[4:k_star].sum()) + 1e-12 * total
    return num / den


# ---------------------------------------------------------------------------
# external metric plug-in
# ---------------------------------------------------------------------------


@dataclass
class ExternalMetricResult:
    score: float | None
    status: str  # ok | failed | timeout
    detail: str = ""


def external_metric(cmd: str, clean_path, processed_path,
                    timeout_s: float = 60.0) -> ExternalMetricResult:
    """Run ``cmd <clean> <processed>`` and parse one float from stdout.

    ``cmd`` may embed ``{clean}``/``{processed}`` placeholders; otherwise the
    two paths are appended. Nonzero exit, unparsable output and timeouts are
    reported in ``status`` rather than raised.
    """
    if "{clean}" in cmd or "{processed}" in cmd:
        argv = shlex.split(cmd.format(clean=str(clean_path), processed=str(processed_path)))
    else:
        argv = shlex.split(cmd) + [str(clean_path), str(processed_path)]
    try:
        proc = subprocess.run(argv, capture_output=True, text=True, timeout=timeout_s)
    except subprocess.TimeoutExpired:
        return ExternalMetricResult(None, "timeout", f"no result within {timeout_s}s")
    except OSError as e:
        return ExternalMetricResult(None, "failed", str(e))
    if proc.returncode != 0:
        return ExternalMetricResult(None, "failed",
                                    f"exit {proc.returncode}: {proc.stderr.strip()[:200]}")
    for tok in proc.stdout.split():
        try:
            return ExternalMetricResult(float(tok), "ok")
        except ValueError:
            continue
    return ExternalMetricResult(None, "failed", f"no float on stdout: {proc.stdout[:200]!r}")


@dataclass
class MetricReport:
    """Scores of one (utterance, method) pair under one condition."""

    utterance: str
    method: str
    rir: str
    noise: str
    snr_db: float
    measured_snr_db: float
    stoi: float | None = None
    asii: float | None = None
    srmr: float | None = None
    external: float | None = None
