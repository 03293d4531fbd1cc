"""Order-statistic noise estimation and time-domain attenuation.

Each frame's sorted magnitudes are scanned for the boundary separating
noise-only samples from signal-bearing ones; the noise sigma follows from
the mean magnitude below the boundary. Supra-boundary samples are pulled
toward zero by a sigma-sized step, the rest are scaled down. The composite
variant takes the boundary from a time-frequency mask instead of the scan
and finishes by applying the mask.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mask import TFMask, apply_mask
from .signal_core import FrameSpec, SampledSignal

# mean |x| of a zero-mean Gaussian is sigma*sqrt(2/pi); invert to get sigma
MEAN_ABS_TO_SIGMA = math.sqrt(math.pi / 2.0)


@dataclass
class DateConfig:
    """Controls for the sorted-magnitude boundary scan."""

    min_snr: float = 4.0        # design SNR the detector is tuned for
    confidence: float = 0.95    # lower-bound confidence for the scan start
    alpha: float = 1.0          # supra-boundary subtraction strength
    beta: float = 0.2           # sub-boundary scale factor
    frame_ms: float = 32.0

    def __post_init__(self):
        if self.min_snr <= 0:
            raise ValueError("min_snr must be positive")
        if not (0.0 < self.confidence < 1.0):
            raise ValueError("confidence must be in (0, 1)")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("attenuation factors must be nonnegative")


def detection_threshold(min_snr: float) -> float:
    """Normalized decision level for signals at least ``min_snr`` above noise."""
    r = float(min_snr)
    if r <= 0:
        raise ValueError("min_snr must be positive")
    return r / 2.0 + math.log1p(math.sqrt(max(0.0, -math.expm1(-r * r)))) / r


def adjustment_factor(threshold: float) -> float:
    """Scan constant: threshold times the Gaussian mean-abs-to-sigma ratio."""
    return float(threshold) * math.gamma(0.5) / (math.sqrt(2.0) * math.gamma(1.0))


def scan_start(n: int, confidence: float) -> int:
    """Smallest candidate boundary the scan may settle on, clamped to [1, n]."""
    t = n / 2.0 - n / math.sqrt(4.0 * n * (1.0 - confidence))
    return int(min(max(math.floor(t), 1), n))


@dataclass
class FrameNoiseEstimate:
    """Noise sigma for one frame plus the boundary the scan settled on."""

    sigma: float
    split_index: int     # 1-based count of samples treated as noise-only
    split_amp: float     # magnitude at the boundary
    threshold: float     # detection threshold used by the scan
    scan_constant: float


def date_estimate(frame: np.ndarray, cfg: DateConfig | None = None) -> FrameNoiseEstimate:
    """Estimate the noise sigma of one frame from its sorted magnitudes.

    Scans candidate boundaries from the confidence-derived start upward and
    accepts the first one bracketed by its neighbours; without a bracket the
    start index is kept. The running scan level is the adjusted mean of the
    magnitudes below the candidate.
    """
    cfg = cfg or DateConfig()
    y = np.sort(np.abs(np.asarray(frame, dtype=np.float64)))
    n = y.size
    if n < 4:
        raise ValueError(f"frame of {n} samples is too short for a boundary scan")
    xi = detection_threshold(cfg.min_snr)
    c = adjustment_factor(xi)
    t0 = scan_start(n, cfg.confidence)
    prefix = np.cumsum(y)
    b = _first_bracketed(y, prefix, c, t0)
    sigma = MEAN_ABS_TO_SIGMA * prefix[b - 1] / b
    return FrameNoiseEstimate(sigma=float(sigma), split_index=int(b),
                              split_amp=float(y[b - 1]), threshold=xi,
                              scan_constant=c)


def _first_bracketed(y: np.ndarray, prefix: np.ndarray, c: float, t0: int) -> int:
    n = y.size
    t = np.arange(t0, n + 1)              # 1-based candidate boundaries
    level = c * prefix[t - 1] / t
    lower = np.where(t >= 2, y[np.maximum(t - 2, 0)], 0.0)   # y_{t-1}, 0 for t=1
    upper = np.where(t <= n - 1, y[np.minimum(t, n - 1)], np.inf)  # y_{t+1}, inf at t=n
    ok = (lower <= level) & (level <= upper)
    hits = np.nonzero(ok)[0]
    return int(t[hits[0]]) if hits.size else t0


def noise_sigma_for_count(frame: np.ndarray, count: int) -> FrameNoiseEstimate:
    """Sigma from a caller-supplied noise-only sample count (no scan)."""
    y = np.sort(np.abs(np.asarray(frame, dtype=np.float64)))
    b = int(min(max(count, 1), y.size))
    sigma = MEAN_ABS_TO_SIGMA * float(np.mean(y[:b]))
    return FrameNoiseEstimate(sigma=sigma, split_index=b, split_amp=float(y[b - 1]),
                              threshold=float("nan"), scan_constant=float("nan"))


def attenuate(frame: np.ndarray, est: FrameNoiseEstimate,
              alpha: float = 1.0, beta: float = 0.2) -> np.ndarray:
    """Shrink supra-boundary samples by alpha*sigma (sign kept, floored at
    zero); scale everything at or below the boundary by beta."""
    y = np.asarray(frame, dtype=np.float64)
    mag = np.abs(y)
    supra = mag > est.split_amp
    shrunk = np.sign(y) * np.maximum(mag - alpha * est.sigma, 0.0)
    return np.where(supra, shrunk, beta * y)


def irmn_enhance(x: SampledSignal, mask: TFMask,
                 cfg: DateConfig | None = None, debug_csv=None) -> SampledSignal:
    """Mask-guided attenuation on non-overlapping frames, then the mask.

    The fraction of masked-out bands in a frame's row sets how many sorted
    samples count as noise; frames that the mask deems all-speech are left
    nearly untouched, frames deemed all-noise use every sample for sigma.
    With ``debug_csv`` the per-frame boundary and sigma are dumped.
    """
    cfg = cfg or DateConfig()
    frame_len = int(round(cfg.frame_ms * 1e-3 * x.sample_rate))
    spec = FrameSpec(frame_len=frame_len, hop=frame_len, window="rectangular")
    n = len(x)
    n_frames = math.ceil(n / frame_len)
    if mask.n_frames != n_frames:
        raise ValueError(f"mask rows ({mask.n_frames}) != frames ({n_frames})")
    padded = np.zeros(n_frames * frame_len)
    padded[:n] = x.samples
    out = np.empty_like(padded)
    rows = []
    for l in range(n_frames):
        fr = padded[l * frame_len:(l + 1) * frame_len]
        absent = 1.0 - float(np.mean(mask.bits[l]))
        count = max(1, int(math.floor(frame_len * absent)))
        est = noise_sigma_for_count(fr, count)
        out[l * frame_len:(l + 1) * frame_len] = attenuate(fr, est, cfg.alpha, cfg.beta)
        if debug_csv is not None:
            rows.append(f"{l},{absent:.6f},{est.split_index},{est.sigma:.8f},{est.split_amp:.8f}\n")
    if debug_csv is not None:
        with open(debug_csv, "w") as f:
            f.write("frame,absent_fraction,boundary,sigma,boundary_amp\n")
            f.writelines(rows)
    attenuated = SampledSignal(out[:n], x.sample_rate)
    return apply_mask(attenuated, mask, spec)
