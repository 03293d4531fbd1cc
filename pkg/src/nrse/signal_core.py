"""Time-domain plumbing shared by every enhancer and metric.

WAV I/O, framing with per-frame energy/zero-crossing stats, windowed
overlap-add resynthesis, STFT/ISTFT, RIR convolution and SNR-calibrated
mixing. Everything is float64 internally; signals are mono.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.fft import irfft, rfft
from scipy.io import wavfile
from scipy.signal import fftconvolve, get_window, resample_poly

ENERGY_FLOOR = 1e-12  # keeps log-energy of digital silence at -120 dB


@dataclass
class SampledSignal:
    """A mono waveform with its sample rate.

    Samples are stored as a 1-D float64 array, nominally in [-1, 1] but not
    clipped; values must be finite.
    """

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=np.float64)
        if x.ndim != 1:
            raise ValueError(f"expected a 1-D mono signal, got shape {x.shape}")
        if int(self.sample_rate) <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if x.size and not np.all(np.isfinite(x)):
            raise ValueError("signal contains non-finite samples")
        self.samples = x
        self.sample_rate = int(self.sample_rate)

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def power(self) -> float:
        """Mean squared sample value."""
        if not self.samples.size:
            return 0.0
        return float(np.mean(self.samples ** 2))


@dataclass(frozen=True)
class FrameSpec:
    """Analysis framing: frame length, hop and window, all in samples."""

    frame_len: int = 512
    hop: int = 256
    window: str = "hamming"

    def __post_init__(self):
        if self.frame_len <= 0 or self.hop <= 0:
            raise ValueError("frame_len and hop must be positive")
        if self.hop > self.frame_len:
            raise ValueError("hop larger than frame_len leaves gaps")

    def window_array(self) -> np.ndarray:
        return _window_array(self.window, self.frame_len)

    @property
    def n_bins(self) -> int:
        return self.frame_len // 2 + 1

    @staticmethod
    def for_rate(sample_rate: int, frame_ms: float = 32.0, overlap: float = 0.5,
                 window: str = "hamming") -> "FrameSpec":
        """Framing for a target frame duration (default 32 ms, half overlap)."""
        n = int(round(frame_ms * 1e-3 * sample_rate))
        hop = max(1, int(round(n * (1.0 - overlap))))
        return FrameSpec(frame_len=n, hop=hop, window=window)


@lru_cache(maxsize=32)
def _window_array(name: str, n: int) -> np.ndarray:
    alias = {"rectangular": "boxcar", "rect": "boxcar"}
    w = get_window(alias.get(name, name), n, fftbins=True)
    return np.asarray(w, dtype=np.float64)


@dataclass
class FrameSequence:
    """Windowed analysis frames plus per-frame energy and zero-crossing stats.

    ``frames`` holds window-multiplied samples (n_frames, frame_len). ``en_db``
    is 10*log10 of the windowed frame energy (floored so silence reads
    -120 dB); ``zc`` counts sign changes of the *unwindowed* samples so the
    window cannot suppress crossings.
    """

    frames: np.ndarray
    spec: FrameSpec
    sample_rate: int
    orig_len: int
    en_db: np.ndarray
    zc: np.ndarray

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]


def _zero_crossings(raw: np.ndarray) -> np.ndarray:
    """Sign changes per frame, exact zeros dropped (negation-invariant)."""
    out = np.zeros(raw.shape[0], dtype=np.int64)
    for i, fr in enumerate(raw):
        s = np.sign(fr)
        s = s[s != 0]
        if s.size > 1:
            out[i] = int(np.count_nonzero(s[1:] != s[:-1]))
    return out


def frame_signal(x: SampledSignal, spec: FrameSpec | None = None) -> FrameSequence:
    """Slice a signal into hopped frames and window them.

    The tail is zero-padded so every input sample falls inside at least one
    frame; ``orig_len`` remembers the true length for resynthesis.
    """
    spec = spec or FrameSpec.for_rate(x.sample_rate)
    n = len(x)
    if n < spec.frame_len:
        raise ValueError(f"signal of {n} samples is shorter than one frame ({spec.frame_len})")
    n_frames = 1 + math.ceil(max(n - spec.frame_len, 0) / spec.hop)
    padded = np.zeros((n_frames - 1) * spec.hop + spec.frame_len, dtype=np.float64)
    padded[:n] = x.samples
    idx = np.arange(spec.frame_len)[None, :] + spec.hop * np.arange(n_frames)[:, None]
    raw = padded[idx]
    win = spec.window_array()
    frames = raw * win[None, :]
    en_db = 10.0 * np.log10(np.sum(frames ** 2, axis=1) + ENERGY_FLOOR)
    return FrameSequence(frames=frames, spec=spec, sample_rate=x.sample_rate,
                         orig_len=n, en_db=en_db, zc=_zero_crossings(raw))


def _ola(frames: np.ndarray, spec: FrameSpec, sample_rate: int, orig_len: int,
         gains: np.ndarray | None = None) -> SampledSignal:
    """Overlap-add windowed frames back to a signal.

    Divides by the accumulated window sum per output sample, which makes
    analysis-windowed round trips exact for any window that keeps the
    accumulated sum positive (Hamming, rectangular, ...).
    """
    n_frames = frames.shape[0]
    if gains is not None:
        gains = np.asarray(gains, dtype=np.float64)
        if gains.shape != (n_frames,):
            raise ValueError(f"need one gain per frame, got {gains.shape} for {n_frames} frames")
        frames = frames * gains[:, None]
    total = (n_frames - 1) * spec.hop + spec.frame_len
    acc = np.zeros(total)
    wsum = np.zeros(total)
    win = spec.window_array()
    for l in range(n_frames):
        sl = slice(l * spec.hop, l * spec.hop + spec.frame_len)
        acc[sl] += frames[l]
        wsum[sl] += win
    out = np.where(wsum > 1e-8, acc / np.where(wsum > 1e-8, wsum, 1.0), 0.0)
    return SampledSignal(out[:orig_len], sample_rate)


def overlap_add(fr: FrameSequence, gains: np.ndarray | None = None) -> SampledSignal:
    """Resynthesize from (optionally per-frame weighted) analysis frames."""
    return _ola(fr.frames, fr.spec, fr.sample_rate, fr.orig_len, gains)


@dataclass
class TFGrid:
    """Complex short-time spectra on a regular (frame, bin) grid."""

    values: np.ndarray  # (n_frames, n_bins) complex
    spec: FrameSpec
    sample_rate: int
    orig_len: int

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]

    @property
    def n_bins(self) -> int:
        return self.values.shape[1]

    def bin_freqs(self) -> np.ndarray:
        return np.arange(self.n_bins) * self.sample_rate / self.spec.frame_len


def stft(x: SampledSignal, spec: FrameSpec | None = None) -> TFGrid:
    fr = frame_signal(x, spec)
    values = rfft(fr.frames, axis=1)
    return TFGrid(values=values, spec=fr.spec, sample_rate=fr.sample_rate,
                  orig_len=fr.orig_len)


def istft(grid: TFGrid) -> SampledSignal:
    frames = irfft(grid.values, n=grid.spec.frame_len, axis=1)
    return _ola(frames, grid.spec, grid.sample_rate, grid.orig_len)


def convolve_rir(x: SampledSignal, rir: SampledSignal) -> SampledSignal:
    """Full linear convolution of a signal with a room impulse response."""
    if x.sample_rate != rir.sample_rate:
        raise ValueError(f"sample rates differ: {x.sample_rate} vs {rir.sample_rate}")
    if not len(x) or not len(rir):
        raise ValueError("cannot convolve an empty signal")
    y = fftconvolve(x.samples, rir.samples, mode="full")
    return SampledSignal(y, x.sample_rate)


def mix_at_snr(reverberant: SampledSignal, noise: SampledSignal, snr_db: float,
               loop_noise: bool = True, noise_offset: int = 0) -> SampledSignal:
    """Add noise scaled so the reverberant-to-noise power ratio is ``snr_db``.

    The noise is tiled when shorter than the target (or a ValueError is
    raised with ``loop_noise=False``), then cut to length starting at
    ``noise_offset`` samples.
    """
    if reverberant.sample_rate != noise.sample_rate:
        raise ValueError("reverberant and noise sample rates differ")
    n = len(reverberant)
    w = noise.samples
    if noise_offset:
        w = np.roll(w, -int(noise_offset))
    if w.size < n:
        if not loop_noise:
            raise ValueError(f"noise ({w.size}) shorter than target ({n}) and looping disabled")
        w = np.tile(w, math.ceil(n / w.size))
    w = w[:n]
    p_sig = reverberant.power()
    p_noise = float(np.mean(w ** 2))
    if p_noise <= 0.0:
        raise ValueError("noise signal has zero power")
    if p_sig <= 0.0:
        raise ValueError("reverberant signal has zero power")
    scale = math.sqrt(p_sig / (p_noise * 10.0 ** (snr_db / 10.0)))
    return SampledSignal(reverberant.samples + scale * w, reverberant.sample_rate)


def measured_snr_db(reverberant: SampledSignal, mixture: SampledSignal) -> float:
    """SNR realized in a mixture, recovered from the additive residual."""
    w = mixture.samples - reverberant.samples
    p_noise = float(np.mean(w ** 2))
    if p_noise <= 0.0:
        return float("inf")
    return 10.0 * math.log10(reverberant.power() / p_noise)


def load_wav(path, resample_to: int | None = None) -> SampledSignal:
    """Read a RIFF WAV (PCM or IEEE float); stereo is downmixed by averaging.

    ``resample_to`` applies a polyphase rate change after decoding.
    """
    rate, data = wavfile.read(path)
    if data.size == 0:
        raise ValueError(f"{path}: empty audio stream")
    if data.ndim == 2:
        data = data.mean(axis=1)
    if data.dtype == np.int16:
        x = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        x = data.astype(np.float64) / 2147483648.0
    elif data.dtype == np.uint8:
        x = (data.astype(np.float64) - 128.0) / 128.0
    else:  # float32/float64 streams are already in [-1, 1] by convention
        x = data.astype(np.float64)
    sig = SampledSignal(x, rate)
    if resample_to is not None and resample_to != rate:
        g = math.gcd(int(resample_to), int(rate))
        y = resample_poly(sig.samples, resample_to // g, rate // g)
        sig = SampledSignal(y, resample_to)
    return sig


def write_wav(path, sig: SampledSignal, subtype: str = "pcm16") -> None:
    """Write a mono WAV as 16-bit PCM (default) or 32-bit IEEE float."""
    if subtype == "pcm16":
        q = np.clip(np.round(sig.samples * 32768.0), -32768, 32767).astype(np.int16)
        wavfile.write(path, sig.sample_rate, q)
    elif subtype == "float32":
        wavfile.write(path, sig.sample_rate, sig.samples.astype(np.float32))
    else:
        raise ValueError(f"unsupported subtype {subtype!r} (use 'pcm16' or 'float32')")
