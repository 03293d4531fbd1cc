"""Binary time-frequency masks from direct-to-residual energy ratios.

Band energies are grouped on a mel-spaced layout over the STFT bins; a cell
passes when the direct (early) component dominates the residual by more than
a threshold. Masks serialize to a small header plus packed bits.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .signal_core import FrameSpec, SampledSignal, istft, stft

SRR_CAP_DB = 100.0
_EPS = 1e-30


def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@dataclass(frozen=True)
class BandLayout:
    """Contiguous frequency bands given by their edge frequencies in Hz."""

    edges_hz: tuple

    @property
    def n_bands(self) -> int:
        return len(self.edges_hz) - 1

    @staticmethod
    def mel(n_bands: int, sample_rate: int) -> "BandLayout":
        """Mel-spaced edges from DC to Nyquist."""
        if n_bands < 1:
            raise ValueError("need at least one band")
        mels = np.linspace(0.0, float(_hz_to_mel(sample_rate / 2)), n_bands + 1)
        return BandLayout(edges_hz=tuple(float(h) for h in _mel_to_hz(mels)))

    def bin_edges(self, sample_rate: int, frame_len: int) -> np.ndarray:
        """Band edges as rfft bin indices, strictly increasing, covering all bins."""
        n_bins = frame_len // 2 + 1
        if n_bins < self.n_bands + 1:
            raise ValueError(f"{self.n_bands} bands need more than {n_bins} bins")
        hz_per_bin = sample_rate / frame_len
        edges = np.round(np.asarray(self.edges_hz) / hz_per_bin).astype(int)
        edges[0], edges[-1] = 0, n_bins
        for i in range(1, len(edges)):  # force distinct edges at the low end
            edges[i] = max(edges[i], edges[i - 1] + 1)
        edges = np.minimum(edges, n_bins)
        if len(set(edges.tolist())) != len(edges):
            raise ValueError("band layout collapses at this FFT resolution")
        return edges


@dataclass
class TFMask:
    """Binary (n_frames, n_bands) mask with the layout it was built on."""

    bits: np.ndarray
    threshold_db: float
    layout: BandLayout

    def __post_init__(self):
        b = np.asarray(self.bits)
        if b.ndim != 2:
            raise ValueError("mask bits must be 2-D (frames x bands)")
        if not np.isin(b, (0, 1)).all():
            raise ValueError("mask bits must be 0/1")
        self.bits = b.astype(np.uint8)
        if self.bits.shape[1] != self.layout.n_bands:
            raise ValueError(f"{self.bits.shape[1]} mask columns vs {self.layout.n_bands} bands")

    @property
    def n_frames(self) -> int:
        return self.bits.shape[0]

    def density(self) -> float:
        return float(self.bits.mean()) if self.bits.size else 0.0

    def save(self, path) -> None:
        header = (f"NRSEMASK 1 {self.bits.shape[0]} {self.bits.shape[1]} "
                  f"{self.threshold_db!r} "
                  + ",".join(repr(e) for e in self.layout.edges_hz) + "\n")
        with open(path, "wb") as f:
            f.write(header.encode("ascii"))
            f.write(np.packbits(self.bits.reshape(-1)).tobytes())

    @staticmethod
    def load(path) -> "TFMask":
        with open(path, "rb") as f:
            header = f.readline().decode("ascii").split()
            if len(header) != 6 or header[0] != "NRSEMASK" or header[1] != "1":
                raise ValueError(f"{path}: not a mask file")
            n_frames, n_bands = int(header[2]), int(header[3])
            threshold = float(header[4])
            edges = tuple(float(v) for v in header[5].split(","))
            raw = np.frombuffer(f.read(), dtype=np.uint8)
        bits = np.unpackbits(raw)[: n_frames * n_bands].reshape(n_frames, n_bands)
        return TFMask(bits=bits, threshold_db=threshold, layout=BandLayout(edges))


def band_energies(grid_values: np.ndarray, edges: np.ndarray) -> np.ndarray:
    """Sum |X|^2 over the bins of each band; (n_frames, n_bands)."""
    power = np.abs(grid_values) ** 2
    out = np.empty((power.shape[0], len(edges) - 1))
    for j in range(len(edges) - 1):
        out[:, j] = power[:, edges[j]:edges[j + 1]].sum(axis=1)
    return out


def srr(direct: SampledSignal, mixture: SampledSignal,
        layout: BandLayout | None = None,
        spec: FrameSpec | None = None) -> np.ndarray:
    """Direct-to-residual ratio per (frame, band) in dB, clipped to +/-100.

    The residual is mixture minus direct, so a mixture equal to its direct
    part pegs every cell at the +100 dB cap.
    """
    if direct.sample_rate != mixture.sample_rate:
        raise ValueError("direct and mixture sample rates differ")
    if len(direct) != len(mixture):
        raise ValueError(f"length mismatch: direct {len(direct)} vs mixture {len(mixture)}")
    spec = spec or FrameSpec.for_rate(direct.sample_rate)
    layout = layout or BandLayout.mel(21, direct.sample_rate)
    residual = SampledSignal(mixture.samples - direct.samples, direct.sample_rate)
    edges = layout.bin_edges(direct.sample_rate, spec.frame_len)
    e_dir = band_energies(stft(direct, spec).values, edges)
    e_res = band_energies(stft(residual, spec).values, edges)
    with np.errstate(divide="ignore"):
        ratio_db = 10.0 * np.log10(e_dir / (e_res + _EPS))
    return np.clip(np.nan_to_num(ratio_db, nan=-SRR_CAP_DB, neginf=-SRR_CAP_DB,
                                 posinf=SRR_CAP_DB), -SRR_CAP_DB, SRR_CAP_DB)


def irm(srr_db: np.ndarray, threshold_db: float = -6.0,
        layout: BandLayout | None = None) -> TFMask:
    """Keep cells whose ratio strictly exceeds the threshold."""
    srr_db = np.asarray(srr_db, dtype=np.float64)
    layout = layout or BandLayout(edges_hz=tuple(range(srr_db.shape[1] + 1)))
    bits = (srr_db > threshold_db).astype(np.uint8)
    return TFMask(bits=bits, threshold_db=float(threshold_db), layout=layout)


def ideal_mask(clean: SampledSignal, rir: SampledSignal, mixture: SampledSignal,
               threshold_db: float = -6.0, layout: BandLayout | None = None,
               spec: FrameSpec | None = None,
               early_ms: float = 50.0) -> TFMask:
    """Oracle mask from the early (direct) image of the clean source.

    The direct reference is clean convolved with the impulse response
    truncated ``early_ms`` after its main peak, trimmed to the mixture length.
    """
    from .signal_core import convolve_rir  # local to avoid cycle at import time

    layout = layout or BandLayout.mel(21, mixture.sample_rate)
    peak = int(np.argmax(np.abs(rir.samples)))
    cut = min(len(rir), peak + int(round(early_ms * 1e-3 * rir.sample_rate)))
    early = SampledSignal(rir.samples[:cut], rir.sample_rate)
    direct = convolve_rir(clean, early)
    d = np.zeros(len(mixture))
    m = min(len(mixture), len(direct))
    d[:m] = direct.samples[:m]
    ratios = srr(SampledSignal(d, mixture.sample_rate), mixture, layout, spec)
    return irm(ratios, threshold_db, layout)


def apply_mask(x: SampledSignal, mask: TFMask,
               spec: FrameSpec | None = None) -> SampledSignal:
    """Zero the masked-out bands of a signal's STFT and resynthesize."""
    spec = spec or FrameSpec.for_rate(x.sample_rate)
    grid = stft(x, spec)
    if mask.n_frames != grid.n_frames:
        raise ValueError(f"mask has {mask.n_frames} frames, signal has {grid.n_frames}")
    edges = mask.layout.bin_edges(x.sample_rate, spec.frame_len)
    gains = np.zeros((grid.n_frames, grid.n_bins))
    for j in range(mask.layout.n_bands):
        gains[:, edges[j]:edges[j + 1]] = mask.bits[:, j:j + 1]
    grid.values = grid.values * gains
    return istft(grid)
