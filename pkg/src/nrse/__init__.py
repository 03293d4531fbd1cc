"""Time-domain enhancement of noisy reverberant speech, with the
supporting pieces: a surrogate-based non-stationarity index, oracle
time-frequency masks, composite mask-driven enhancers, and objective
intelligibility/quality metrics.
"""

from .signal_core import (SampledSignal, FrameSpec, frame_signal, overlap_add,
                          stft, istft, convolve_rir, mix_at_snr,
                          measured_snr_db, load_wav, write_wav)
from .ins import compute_ins, make_surrogates, hermite_tapers, InsProfile
from .hnh import HnhParams, enhance
from .mask import BandLayout, TFMask, ideal_mask, apply_mask, srr, irm
from .nnese import DateConfig, date_estimate, attenuate, irmn_enhance
from .omlsa import LsaConfig, irmo_enhance
from .metrics import stoi, asii_st, srmr, external_metric, MetricReport
from .harness import Scenario, run_scenario, calibrate_snr_for_stoi, report

__version__ = "0.1.0"

__all__ = [
    "SampledSignal", "FrameSpec", "frame_signal", "overlap_add", "stft",
    "istft", "convolve_rir", "mix_at_snr", "measured_snr_db", "load_wav",
    "write_wav", "compute_ins", "make_surrogates", "hermite_tapers",
    "InsProfile", "HnhParams", "enhance", "BandLayout", "TFMask",
    "ideal_mask", "apply_mask", "srr", "irm", "DateConfig", "date_estimate",
    "attenuate", "irmn_enhance", "LsaConfig", "irmo_enhance", "stoi",
    "asii_st", "srmr", "external_metric", "MetricReport", "Scenario",
    "run_scenario", "calibrate_snr_for_stoi", "report", "__version__",
]
