"""Deterministic synthetic test material.

Speech-like utterances (drifting harmonic bursts with syllabic amplitude
modulation, fricative-ish noise bursts and real silences), exponentially
decaying room responses, and white/babble-style noise beds. Everything is
seeded, so a corpus regenerates bit-identically.
"""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .signal_core import SampledSignal, write_wav

DEFAULT_FS = 16000


def _raised_cosine_ramps(n: int, ramp: int) -> np.ndarray:
    env = np.ones(n)
    r = min(ramp, n // 2)
    if r > 0:
        up = 0.5 - 0.5 * np.cos(np.pi * np.arange(r) / r)
        env[:r] = up
        env[-r:] = up[::-1]
    return env


def _voiced_burst(rng: np.random.Generator, n: int, fs: int) -> np.ndarray:
    t = np.arange(n) / fs
    f0 = rng.uniform(100.0, 220.0)
    drift = 1.0 + rng.uniform(-0.04, 0.04) * (t / max(t[-1], 1e-9))
    phase0 = rng.uniform(0, 2 * np.pi)
    n_harm = min(int(3800.0 / f0), 24)
    x = np.zeros(n)
    for h in range(1, n_harm + 1):
        f = h * f0
        # crude spectral tilt with two formant-like bumps
        amp = h ** -1.2 * (1.0 + 1.5 * math.exp(-((f - 500.0) / 250.0) ** 2)
                           + 1.0 * math.exp(-((f - 1500.0) / 500.0) ** 2))
        amp *= rng.uniform(0.7, 1.3)
        x += amp * np.sin(2 * np.pi * h * f0 * t * drift + h * phase0)
    am = 1.0 + 0.35 * np.sin(2 * np.pi * rng.uniform(3.0, 7.0) * t + rng.uniform(0, 2 * np.pi))
    x *= am * _raised_cosine_ramps(n, int(0.02 * fs))
    return x / (np.max(np.abs(x)) + 1e-12)


def _fricative_burst(rng: np.random.Generator, n: int, fs: int) -> np.ndarray:
    noise = rng.standard_normal(n)
    # high-tilted noise: difference filter pushes energy toward 2-6 kHz
    shaped = lfilter([1.0, -0.95], [1.0], noise)
    shaped *= _raised_cosine_ramps(n, int(0.01 * fs))
    return 0.35 * shaped / (np.max(np.abs(shaped)) + 1e-12)


def synth_utterance(seed: int, fs: int = DEFAULT_FS,
                    duration_s: float | None = None) -> SampledSignal:
    """One speech-like utterance; opens and closes with silence.

    Sentence-like prosody: mostly continuous voiced runs broken by short
    articulation gaps, an occasional fricative, and a longer phrase pause
    every few segments.
    """
    rng = np.random.default_rng([0x5EED, seed])
    dur = duration_s if duration_s is not None else rng.uniform(1.7, 2.3)
    n = int(round(dur * fs))
    x = np.zeros(n)
    pos = int(rng.uniform(0.08, 0.14) * fs)  # leading silence
    since_pause = 0
    while pos < n - int(0.25 * fs):
        kind = rng.uniform()
        if kind < 0.8:
            seg = int(rng.uniform(0.2, 0.45) * fs)
            seg = min(seg, n - pos)
            x[pos:pos + seg] += _voiced_burst(rng, seg, fs) * rng.uniform(0.6, 1.0)
        else:
            seg = int(rng.uniform(0.06, 0.12) * fs)
            seg = min(seg, n - pos)
            x[pos:pos + seg] += _fricative_burst(rng, seg, fs)
        pos += seg
        since_pause += 1
        if since_pause >= rng.integers(2, 4):
            pos += int(rng.uniform(0.1, 0.25) * fs)   # phrase pause
            since_pause = 0
        else:
            pos += int(rng.uniform(0.015, 0.05) * fs)  # articulation gap
    peak = np.max(np.abs(x))
    if peak > 0:
        x *= 0.4 / peak
    return SampledSignal(x, fs)


def synth_rir(t60_s: float, fs: int = DEFAULT_FS, seed: int = 0,
              direct_to_late_db: float = 0.0) -> SampledSignal:
    """Exponentially decaying impulse response with a unit direct path.

    Early reflections are sparse signed impulses inside 45 ms; the late tail
    is white noise under a 60-dB-per-t60 decay envelope, scaled to the
    requested direct(+early)-to-late energy ratio.
    """
    if t60_s <= 0:
        raise ValueError("t60 must be positive")
    rng = np.random.default_rng([0x2113, seed, int(t60_s * 1000)])
    n = int(round(t60_s * fs))
    h = np.zeros(n)
    h[0] = 1.0
    split = int(0.05 * fs)
    for _ in range(6):
        pos = int(rng.uniform(0.005, 0.045) * fs)
        h[pos] += rng.choice([-1.0, 1.0]) * rng.uniform(0.15, 0.45)
    t = np.arange(n - split) / fs
    tail = rng.standard_normal(n - split) * 10.0 ** (-3.0 * (t + split / fs) / t60_s)
    e_early = float(np.sum(h[:split] ** 2))
    e_tail = float(np.sum(tail ** 2))
    if e_tail > 0:
        tail *= math.sqrt(e_early / (e_tail * 10.0 ** (direct_to_late_db / 10.0)))
    h[split:] = tail
    return SampledSignal(h, fs)


def synth_white_noise(n: int, fs: int = DEFAULT_FS, seed: int = 0) -> SampledSignal:
    rng = np.random.default_rng([0xA0, seed])
    return SampledSignal(rng.standard_normal(n) * 0.1, fs)


def synth_babble_noise(n: int, fs: int = DEFAULT_FS, seed: int = 0,
                       n_talkers: int = 6) -> SampledSignal:
    """Babble-ish bed: several speech-shaped streams with syllabic AM.

    Per-stream modulation is shallow; summing the streams flattens the
    composite envelope further, the way real multi-talker babble behaves.
    """
    rng = np.random.default_rng([0xBABB1E, seed])
    t = np.arange(n) / fs
    x = np.zeros(n)
    for _ in range(n_talkers):
        stream = lfilter([1.0], [1.0, -0.92], rng.standard_normal(n))  # ~1/f tilt
        rate = rng.uniform(2.0, 5.0)
        am = 0.75 + 0.25 * np.cos(2 * np.pi * rate * t + rng.uniform(0, 2 * np.pi))
        x += stream * am
    x *= 0.1 / (np.std(x) + 1e-12)
    return SampledSignal(x, fs)


def default_rirs(fs: int = DEFAULT_FS, seed: int = 0) -> dict:
    """The two stock rooms: a drier office-like decay and a long stairway-like one."""
    return {
        "room_a": synth_rir(0.79, fs, seed, direct_to_late_db=0.0),
        "room_b": synth_rir(1.1, fs, seed, direct_to_late_db=-2.0),
    }


def make_corpus(out_dir, n_utterances: int = 20, fs: int = DEFAULT_FS,
                seed: int = 0, noise_s: float = 12.0) -> dict:
    """Write utterances, rooms and noise beds under ``out_dir``; returns paths."""
    out = Path(out_dir)
    (out / "clean").mkdir(parents=True, exist_ok=True)
    (out / "rir").mkdir(exist_ok=True)
    (out / "noise").mkdir(exist_ok=True)
    paths = {"clean": [], "rir": {}, "noise": {}}
    for i in range(n_utterances):
        sig = synth_utterance(seed * 1000 + i, fs)
        p = out / "clean" / f"utt{i:03d}.wav"
        write_wav(p, sig, subtype="float32")
        paths["clean"].append(p)
    for name, rir in default_rirs(fs, seed).items():
        p = out / "rir" / f"{name}.wav"
        write_wav(p, rir, subtype="float32")
        paths["rir"][name] = p
    n_noise = int(noise_s * fs)
    for name, sig in (("white", synth_white_noise(n_noise, fs, seed)),
                      ("babble", synth_babble_noise(n_noise, fs, seed))):
        p = out / "noise" / f"{name}.wav"
        write_wav(p, sig, subtype="float32")
        paths["noise"][name] = p
    return paths
