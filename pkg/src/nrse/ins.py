"""Surrogate-based stationarity index.

Compares the time variation of local multitaper spectra against an ensemble
of phase-randomized surrogates of the same signal. The index is ~1 for
stationary signals; the surrogate ensemble also calibrates a per-scale
decision threshold so "is this stationary at scale s?" has a yes/no answer.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.fft import irfft, rfft
from scipy.stats import gamma as gamma_dist

from .signal_core import SampledSignal

DEFAULT_SCALES = (0.01, 0.02, 0.05, 0.1, 0.2, 0.3, 0.5)

_EPS = 1e-12


@lru_cache(maxsize=64)
def hermite_tapers(n: int, k: int, half_width: float = 6.0) -> np.ndarray:
    """First ``k`` Hermite functions sampled on ``n`` points, unit-norm rows.

    Gaussian-windowed Hermite polynomials on t in [-half_width, half_width];
    nearly orthogonal for the lengths used here.
    """
    if n < 2 * k:
        raise ValueError(f"taper length {n} too short for {k} tapers")
    t = np.linspace(-half_width, half_width, n)
    h = np.empty((k, n))
    p_prev = np.ones(n)
    p = 2.0 * t
    g = np.exp(-t ** 2 / 2.0)
    for j in range(k):
        poly = p_prev if j == 0 else p
        taper = poly * g
        h[j] = taper / np.linalg.norm(taper)
        if j >= 1:
            p_prev, p = p, 2.0 * t * p - 2.0 * (j + 1 - 1) * p_prev
    return h


def multitaper_spectrogram(x: np.ndarray | SampledSignal, window_len: int,
                           n_tapers: int = 5, hop: int | None = None) -> np.ndarray:
    """Taper-averaged power spectrogram, shape (n_frames, n_bins)."""
    samples = x.samples if isinstance(x, SampledSignal) else np.asarray(x, dtype=np.float64)
    out = _batch_spectrograms(samples[None, :], window_len, n_tapers, hop)
    return out[0]


def _frame_starts(n: int, window_len: int, hop: int) -> np.ndarray:
    if n < 2 * window_len:
        raise ValueError(f"signal of {n} samples too short for windows of {window_len}")
    return np.arange(0, n - window_len + 1, hop)


def _batch_spectrograms(signals: np.ndarray, window_len: int, n_tapers: int,
                        hop: int | None) -> np.ndarray:
    """(M, N) signals -> (M, n_frames, n_bins) multitaper power spectra."""
    hop = hop or max(1, window_len // 2)
    starts = _frame_starts(signals.shape[1], window_len, hop)
    idx = starts[:, None] + np.arange(window_len)[None, :]
    frames = signals[:, idx]  # (M, n_frames, window_len)
    tapers = hermite_tapers(window_len, n_tapers)
    power = None
    for tap in tapers:
        spec = np.abs(rfft(frames * tap[None, None, :], axis=2)) ** 2
        power = spec if power is None else power + spec
    return power / n_tapers


def _distance_variance(power: np.ndarray) -> np.ndarray:
    """Variance over frames of the symmetric KL distance to the mean spectrum.

    ``power``: (M, n_frames, n_bins) nonnegative. Spectra are normalized to
    unit sum so the distance sees shape, not level.
    """
    tot = power.sum(axis=2, keepdims=True)
    # eps floor: an all-silent frame degrades to a uniform spectrum instead of 0/0
    p = (power + _EPS) / (tot + _EPS * power.shape[2])
    q = p.mean(axis=1, keepdims=True)
    q = q / q.sum(axis=2, keepdims=True)
    d = np.sum((p - q) * (np.log(p) - np.log(q)), axis=2)  # (M, n_frames)
    return d.var(axis=1)


def make_surrogates(x: SampledSignal | np.ndarray, n_surrogates: int,
                    seed: int | np.random.Generator = 0) -> np.ndarray:
    """Phase-randomized copies preserving the magnitude spectrum, (n, N) real.

    Interior rfft bins get i.i.d. uniform phases; DC and Nyquist keep their
    magnitude with zero phase so the inverse transform is exactly real.
    """
    samples = x.samples if isinstance(x, SampledSignal) else np.asarray(x, dtype=np.float64)
    if samples.size < 4:
        raise ValueError("signal too short for phase randomization")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    mag = np.abs(rfft(samples))
    n = samples.size
    n_bins = mag.size
    lo, hi = 1, n_bins - 1 if n % 2 == 0 else n_bins
    phases = rng.uniform(-np.pi, np.pi, size=(n_surrogates, hi - lo))
    spectra = np.tile(mag, (n_surrogates, 1)).astype(np.complex128)
    spectra[:, lo:hi] = mag[lo:hi] * np.exp(1j * phases)
    return irfft(spectra, n=n, axis=1)


@dataclass
class InsProfile:
    """Stationarity index and calibrated threshold per analysis scale."""

    scales: np.ndarray
    values: np.ndarray
    gammas: np.ndarray
    n_surrogates: int
    n_tapers: int
    seed: int
    target_variance: np.ndarray | None = None
    surrogate_variances: np.ndarray | None = None  # (n_scales, n_surrogates)

    def _scale_index(self, scale: float) -> int:
        hits = np.where(np.isclose(self.scales, scale, rtol=1e-9, atol=1e-12))[0]
        if not hits.size:
            raise ValueError(f"scale {scale} not in profile (have {list(self.scales)})")
        return int(hits[0])

    def is_stationary(self, scale: float) -> bool:
        i = self._scale_index(scale)
        return bool(self.values[i] <= self.gammas[i])

    def max_value(self) -> float:
        return float(np.max(self.values))

    def to_csv(self, path) -> None:
        with open(path, "w") as f:
            f.write("scale,ins,gamma\n")
            for s, v, g in zip(self.scales, self.values, self.gammas):
                f.write(f"{s:.6f},{v:.6f},{g:.6f}\n")


def valid_window_lengths(n: int, scales, n_tapers: int) -> list[tuple[float, int]]:
    """(scale, window_len) pairs that leave at least 3 analysis frames."""
    out = []
    min_len = max(32, 4 * n_tapers)
    for s in scales:
        w = int(round(s * n))
        if min_len <= w <= n // 2:
            out.append((float(s), w))
    return out


def compute_ins(x: SampledSignal | np.ndarray, scales=DEFAULT_SCALES,
                n_surrogates: int = 50, n_tapers: int = 5,
                seed=0, confidence: float = 0.95) -> InsProfile:
    """Stationarity index of a signal across relative window scales.

    For each scale the local-spectrum distance variance of the signal is
    referenced to the same statistic over ``n_surrogates`` phase-randomized
    surrogates; the threshold is the square-rooted ``confidence`` quantile of
    a moment-matched Gamma fit to the normalized surrogate ensemble.
    """
    samples = x.samples if isinstance(x, SampledSignal) else np.asarray(x, dtype=np.float64)
    if not np.any(samples):
        raise ValueError("all-zero signal has no stationarity index")
    pairs = valid_window_lengths(samples.size, scales, n_tapers)
    if not pairs:
        raise ValueError(f"no usable scales for a {samples.size}-sample signal: {list(scales)}")
    rng = np.random.default_rng(seed)
    surrogates = make_surrogates(samples, n_surrogates, rng)
    stack = np.vstack([samples[None, :], surrogates])

    used, values, gammas, th1s, th0s = [], [], [], [], []
    for s, w in pairs:
        power = _batch_spectrograms(stack, w, n_tapers, hop=None)
        theta = _distance_variance(power)
        theta1, theta0 = theta[0], theta[1:]
        m0 = float(theta0.mean())
        if m0 <= 0.0:
            raise ValueError("surrogate ensemble degenerate (zero distance variance)")
        ratios = theta0 / m0
        var = float(ratios.var(ddof=1)) if n_surrogates > 1 else 0.0
        if var > 0.0:
            thr = float(gamma_dist.ppf(confidence, 1.0 / var, scale=var))
        else:
            thr = 1.0
        used.append(s)
        values.append(math.sqrt(theta1 / m0))
        gammas.append(math.sqrt(thr))
        th1s.append(theta1)
        th0s.append(theta0)
    seed_repr = seed if isinstance(seed, int) else -1
    return InsProfile(scales=np.asarray(used), values=np.asarray(values),
                      gammas=np.asarray(gammas), n_surrogates=n_surrogates,
                      n_tapers=n_tapers, seed=seed_repr,
                      target_variance=np.asarray(th1s),
                      surrogate_variances=np.asarray(th0s))
