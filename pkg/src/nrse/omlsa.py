"""Log-spectral-amplitude gain with mask-driven presence priors.

A minimum-statistics tracker provides the noise floor; the decision-directed
recursion smooths the a priori SNR; each cell's speech-absence prior and
gain floor come from a binary mask, so masked-in cells keep a gentle floor
and masked-out cells are pushed toward a deep one.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import minimum_filter1d
from scipy.special import exp1

from .mask import TFMask
from .signal_core import FrameSpec, SampledSignal, istft, stft

_V_FLOOR = 1e-10
_LAMBDA_FLOOR = 1e-20


@dataclass
class LsaConfig:
    """Priors, floors and tracker constants for the spectral enhancer."""

    q_present: float = 0.02      # speech-absence prior when the mask keeps a cell
    q_absent: float = 0.98       # ... and when it drops the cell
    floor_present_db: float = -12.0
    floor_absent_db: float = -15.0
    dd_alpha: float = 0.92       # decision-directed smoothing
    snr_floor: float = 10.0 ** (-25.0 / 10.0)
    gamma_max: float = 1e4
    smooth_alpha: float = 0.85   # periodogram smoothing for the tracker
    min_window_s: float = 1.0    # sliding-minimum span
    bias: float = 1.66           # minimum-statistics bias compensation
    frame_ms: float = 32.0
    overlap: float = 0.5
    window: str = "hamming"

    def __post_init__(self):
        if not (0.0 <= self.q_present <= self.q_absent <= 1.0):
            raise ValueError("need 0 <= q_present <= q_absent <= 1")
        if self.floor_present_db < self.floor_absent_db:
            raise ValueError("the masked-in floor must not be deeper than the masked-out floor")
        if not (0.0 <= self.dd_alpha < 1.0):
            raise ValueError("dd_alpha must be in [0, 1)")

    @property
    def floor_present(self) -> float:
        return 10.0 ** (self.floor_present_db / 20.0)

    @property
    def floor_absent(self) -> float:
        return 10.0 ** (self.floor_absent_db / 20.0)


def lsa_gain(snr_prior, snr_post):
    """Short-time log-spectral-amplitude gain, capped at unity.

    Vectorized over arrays; the integrand argument is floored to keep the
    exponential integral finite on silent cells.
    """
    xi = np.asarray(snr_prior, dtype=np.float64)
    gam = np.asarray(snr_post, dtype=np.float64)
    ratio = xi / (1.0 + xi)
    v = np.maximum(ratio * gam, _V_FLOOR)
    g = ratio * np.exp(0.5 * exp1(v))
    return np.minimum(g, 1.0)


def combined_gain(g_speech, presence, g_min):
    """Geometric blend of the speech gain and the floor by presence prob."""
    g_speech = np.maximum(np.asarray(g_speech, dtype=np.float64), g_min)
    return g_speech ** presence * np.asarray(g_min) ** (1.0 - presence)


def mask_priors(bit, cfg: LsaConfig):
    """(speech-absence prior, linear gain floor) for a mask bit."""
    bit = np.asarray(bit)
    q = np.where(bit == 1, cfg.q_present, cfg.q_absent)
    g_min = np.where(bit == 1, cfg.floor_present, cfg.floor_absent)
    return q, g_min


def track_noise_psd(power: np.ndarray, cfg: LsaConfig, frames_per_second: float) -> np.ndarray:
    """Two-pass minimum-statistics noise PSD, shape like ``power``.

    Pass one smooths the periodogram along time; pass two takes a sliding
    window minimum and compensates its low bias with a fixed factor.
    """
    smoothed = np.empty_like(power)
    acc = power[0]
    smoothed[0] = acc
    for l in range(1, power.shape[0]):
        acc = cfg.smooth_alpha * acc + (1.0 - cfg.smooth_alpha) * power[l]
        smoothed[l] = acc
    span = max(3, int(round(cfg.min_window_s * frames_per_second)))
    span = min(span, power.shape[0])
    floor = minimum_filter1d(smoothed, size=span, axis=0, mode="nearest")
    return np.maximum(cfg.bias * floor, _LAMBDA_FLOOR)


def irmo_enhance(x: SampledSignal, mask: TFMask,
                 cfg: LsaConfig | None = None) -> SampledSignal:
    """Spectral gain enhancement steered by a binary band mask."""
    cfg = cfg or LsaConfig()
    spec = FrameSpec.for_rate(x.sample_rate, cfg.frame_ms, cfg.overlap, cfg.window)
    grid = stft(x, spec)
    if mask.n_frames != grid.n_frames:
        raise ValueError(f"mask rows ({mask.n_frames}) != STFT frames ({grid.n_frames})")

    edges = mask.layout.bin_edges(x.sample_rate, spec.frame_len)
    bits = np.zeros((grid.n_frames, grid.n_bins), dtype=np.uint8)
    for j in range(mask.layout.n_bands):
        bits[:, edges[j]:edges[j + 1]] = mask.bits[:, j:j + 1]

    power = np.abs(grid.values) ** 2
    lam = track_noise_psd(power, cfg, x.sample_rate / spec.hop)
    q, g_min = mask_priors(bits, cfg)
    presence = 1.0 - q

    gains = np.empty_like(power)
    prev_power = None
    prev_gain = None
    for l in range(power.shape[0]):
        gamma_post = np.clip(power[l] / lam[l], 1e-8, cfg.gamma_max)
        instant = np.maximum(gamma_post - 1.0, 0.0)
        if prev_gain is None:
            xi = np.maximum(instant, cfg.snr_floor)
        else:
            xi = (cfg.dd_alpha * (prev_gain ** 2) * prev_power / lam[l]
                  + (1.0 - cfg.dd_alpha) * instant)
            xi = np.maximum(xi, cfg.snr_floor)
        g_speech = lsa_gain(xi, gamma_post)
        gains[l] = combined_gain(g_speech, presence[l], g_min[l])
        prev_gain = gains[l]
        prev_power = power[l]

    grid.values = grid.values * gains
    return istft(grid)
