"""Batch degradation -> enhancement -> scoring runs.

A scenario is one (room, noise bed) pair evaluated over an SNR grid (or over
SNR points calibrated to hit target intelligibility scores) for a set of
methods. Runs are fully seeded; every CSV the harness writes is
timestamp-free and formatted with fixed precision so identical configs
produce identical bytes.
"""
from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import hnh as hnh_mod
from . import metrics as metrics_mod
from .mask import BandLayout, ideal_mask
from .nnese import DateConfig, irmn_enhance
from .omlsa import LsaConfig, irmo_enhance
from .signal_core import (FrameSpec, SampledSignal, convolve_rir, load_wav,
                          measured_snr_db, mix_at_snr, write_wav)

KNOWN_METHODS = ("unp", "hnh", "irmn", "irmo")


class ConfigError(ValueError):
    """Scenario file is malformed or inconsistent."""


@dataclass
class Scenario:
    """Declarative description of one batch run."""

    clean_dir: str
    rir_path: str
    noise_path: str
    output_dir: str
    snr_grid: list = field(default_factory=list)       # dB points, xor stoi_targets
    stoi_targets: list = field(default_factory=list)
    methods: list = field(default_factory=lambda: list(KNOWN_METHODS))
    seed: int = 0
    max_utterances: int = 0        # 0 = all
    mask_threshold_db: float = -6.0
    mask_bands: int = 21
    external_cmd: str = ""         # optional plug-in metric
    calibration_utterances: int = 10
    hnh: dict = field(default_factory=dict)    # HnhParams overrides
    date: dict = field(default_factory=dict)   # DateConfig overrides
    lsa: dict = field(default_factory=dict)    # LsaConfig overrides

    def validate(self) -> None:
        if bool(self.snr_grid) == bool(self.stoi_targets):
            raise ConfigError("exactly one of snr_grid / stoi_targets must be set")
        unknown = [m for m in self.methods if m not in KNOWN_METHODS]
        if unknown:
            raise ConfigError(f"unknown methods {unknown}; choose from {KNOWN_METHODS}")
        if not self.methods:
            raise ConfigError("no methods selected")

    @staticmethod
    def from_file(path) -> "Scenario":
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read scenario {path}: {e}") from e
        known = {f for f in Scenario.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown scenario keys: {sorted(unknown)}")
        sc = Scenario(**raw)
        sc.validate()
        return sc

    def to_dict(self) -> dict:
        return asdict(self)

    def param_hash(self) -> str:
        # identifies the experiment, not its destination
        d = self.to_dict()
        d.pop("output_dir", None)
        blob = json.dumps(d, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class CalibrationResult:
    snr_db: float
    achieved_stoi: float
    converged: bool
    iterations: int


def calibrate_snr_for_stoi(cleans, rir: SampledSignal, noise: SampledSignal,
                           stoi_target: float, tol: float = 0.005,
                           max_iter: int = 20,
                           lo: float = -20.0, hi: float = 20.0) -> CalibrationResult:
    """Bisect the mixing SNR until mean intelligibility hits the target.

    ``cleans`` is a sequence of clean signals used as the calibration set.
    Intelligibility is monotone in SNR, so plain bisection converges; if the
    target lies outside what the bracket can reach, the nearer boundary is
    returned with ``converged=False``.
    """
    cleans = list(cleans)
    if not cleans:
        raise ValueError("empty calibration set")

    def mean_stoi(snr_db: float) -> float:
        vals = []
        for i, c in enumerate(cleans):
            mix = _degrade(c, rir, noise, snr_db, noise_offset=i * 4099)
            vals.append(metrics_mod.stoi(c, mix))
        return float(np.mean(vals))

    s_lo, s_hi = mean_stoi(lo), mean_stoi(hi)
    if stoi_target <= s_lo:
        return CalibrationResult(lo, s_lo, abs(s_lo - stoi_target) <= tol, 0)
    if stoi_target >= s_hi:
        return CalibrationResult(hi, s_hi, abs(s_hi - stoi_target) <= tol, 0)
    a, b = lo, hi
    mid, s_mid = a, s_lo
    for it in range(1, max_iter + 1):
        mid = 0.5 * (a + b)
        s_mid = mean_stoi(mid)
        if abs(s_mid - stoi_target) <= tol:
            return CalibrationResult(mid, s_mid, True, it)
        if s_mid < stoi_target:
            a = mid
        else:
            b = mid
    return CalibrationResult(mid, s_mid, abs(s_mid - stoi_target) <= tol, max_iter)


def _degrade(clean: SampledSignal, rir: SampledSignal, noise: SampledSignal,
             snr_db: float, noise_offset: int = 0) -> SampledSignal:
    rev = convolve_rir(clean, rir)
    rev = SampledSignal(rev.samples[:len(clean)], clean.sample_rate)
    return mix_at_snr(rev, noise, snr_db, noise_offset=noise_offset)


def _reverberant(clean: SampledSignal, rir: SampledSignal) -> SampledSignal:
    rev = convolve_rir(clean, rir)
    return SampledSignal(rev.samples[:len(clean)], clean.sample_rate)


def enhance_with_method(method: str, mixture: SampledSignal, clean: SampledSignal,
                        rir: SampledSignal, sc: Scenario) -> SampledSignal:
    layout = BandLayout.mel(sc.mask_bands, mixture.sample_rate)
    if method == "unp":
        return mixture
    if method == "hnh":
        params = hnh_mod.HnhParams(seed=sc.seed, **sc.hnh)
        return hnh_mod.enhance(mixture, params)
    if method == "irmn":
        cfg = DateConfig(**sc.date)
        frame_len = int(round(cfg.frame_ms * 1e-3 * mixture.sample_rate))
        spec = FrameSpec(frame_len=frame_len, hop=frame_len, window="rectangular")
        m = ideal_mask(clean, rir, mixture, sc.mask_threshold_db, layout, spec)
        return irmn_enhance(mixture, m, cfg)
    if method == "irmo":
        cfg = LsaConfig(**sc.lsa)
        spec = FrameSpec.for_rate(mixture.sample_rate, cfg.frame_ms, cfg.overlap, cfg.window)
        m = ideal_mask(clean, rir, mixture, sc.mask_threshold_db, layout, spec)
        return irmo_enhance(mixture, m, cfg)
    raise ConfigError(f"unknown method {method!r}")


@dataclass
class RunResult:
    records: list
    tables: dict
    failures: list
    output_dir: str
    snr_points: list


def _fmt(v) -> str:
    if v is None:
        return ""
    return f"{v:.6f}"


def run_scenario(sc: Scenario, write_audio: bool = True,
                 progress=None) -> RunResult:
    """Execute a scenario and persist records, tables and enhanced audio."""
    sc.validate()
    out = Path(sc.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    clean_paths = sorted(Path(sc.clean_dir).glob("*.wav"))
    if not clean_paths:
        raise ConfigError(f"no wav files under {sc.clean_dir}")
    if sc.max_utterances:
        clean_paths = clean_paths[: sc.max_utterances]
    cleans = [load_wav(p) for p in clean_paths]
    rir = load_wav(sc.rir_path)
    noise = load_wav(sc.noise_path)

    snr_points = list(sc.snr_grid)
    calibrations = []
    if sc.stoi_targets:
        subset = cleans[: max(1, sc.calibration_utterances)]
        for target in sc.stoi_targets:
            cal = calibrate_snr_for_stoi(subset, rir, noise, target)
            calibrations.append({"target": target, "snr_db": cal.snr_db,
                                 "achieved_stoi": cal.achieved_stoi,
                                 "converged": cal.converged})
            snr_points.append(round(cal.snr_db, 3))

    started = time.time()
    records: list[metrics_mod.MetricReport] = []
    failures = []
    rir_name = Path(sc.rir_path).stem
    noise_name = Path(sc.noise_path).stem
    if write_audio:
        (out / "enhanced").mkdir(exist_ok=True)

    for snr_db in snr_points:
        for ui, (path, clean) in enumerate(zip(clean_paths, cleans)):
            utt = path.stem
            try:
                rev = _reverberant(clean, rir)
                mixture = mix_at_snr(rev, noise, snr_db, noise_offset=ui * 4099)
                msnr = measured_snr_db(rev, mixture)
                for method in sc.methods:
                    enhanced = enhance_with_method(method, mixture, clean, rir, sc)
                    rec = metrics_mod.MetricReport(
                        utterance=utt, method=method, rir=rir_name,
                        noise=noise_name, snr_db=float(snr_db),
                        measured_snr_db=msnr,
                        stoi=metrics_mod.stoi(clean, enhanced),
                        asii=metrics_mod.asii_st(clean, enhanced),
                        srmr=metrics_mod.srmr(enhanced))
                    if sc.external_cmd:
                        import tempfile
                        with tempfile.TemporaryDirectory() as td:
                            cp = Path(td) / "clean.wav"
                            pp = Path(td) / "proc.wav"
                            write_wav(cp, clean, "float32")
                            write_wav(pp, enhanced, "float32")
                            ext = metrics_mod.external_metric(sc.external_cmd, cp, pp)
                        rec.external = ext.score
                    records.append(rec)
                    if write_audio:
                        name = f"{utt}__{method}__snr{snr_db:+.1f}.wav"
                        write_wav(out / "enhanced" / name, enhanced, "float32")
                    if progress:
                        progress(f"{utt} {method} snr={snr_db:+.1f} done")
            except Exception as e:  # keep the batch alive, report at the end
                failures.append({"utterance": utt, "snr_db": snr_db, "error": str(e)})

    tables = _write_outputs(sc, records, failures, calibrations, snr_points,
                            started, out)
    return RunResult(records=records, tables=tables, failures=failures,
                     output_dir=str(out), snr_points=snr_points)


def _write_outputs(sc: Scenario, records, failures, calibrations, snr_points,
                   started: float, out: Path) -> dict:
    cfg = sc.to_dict()
    cfg["param_hash"] = sc.param_hash()
    (out / "config.json").write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n")

    header = ("utterance,method,rir,noise,snr_db,measured_snr_db,"
              "stoi,asii_st,srmr,external,param_hash\n")
    with open(out / "records.csv", "w") as f:
        f.write(header)
        for r in records:
            f.write(",".join([r.utterance, r.method, r.rir, r.noise,
                              f"{r.snr_db:+.3f}", f"{r.measured_snr_db:+.6f}",
                              _fmt(r.stoi), _fmt(r.asii), _fmt(r.srmr),
                              _fmt(r.external), sc.param_hash()]) + "\n")

    meta = {"records": [asdict(r) for r in records], "failures": failures,
            "calibrations": calibrations,
            "started_unix": started, "elapsed_s": time.time() - started}
    (out / "run_meta.json").write_text(json.dumps(meta, indent=2, default=float) + "\n")

    tables = {}
    for metric, scale in (("stoi", 100.0), ("asii_st", 100.0), ("srmr", 1.0)):
        attr = {"stoi": "stoi", "asii_st": "asii", "srmr": "srmr"}[metric]
        lines = ["snr_db," + ",".join(sc.methods)]
        grid = sorted(set(snr_points))
        col_means = {m: [] for m in sc.methods}
        for snr_db in grid:
            row = [f"{snr_db:+.3f}"]
            for m in sc.methods:
                vals = [getattr(r, attr) for r in records
                        if r.method == m and r.snr_db == float(snr_db)
                        and getattr(r, attr) is not None]
                mean = scale * float(np.mean(vals)) if vals else float("nan")
                col_means[m].append(mean)
                row.append(f"{mean:.3f}")
            lines.append(",".join(row))
        avg_row = ["Average"]
        for m in sc.methods:
            vals = [v for v in col_means[m] if not math.isnan(v)]
            avg_row.append(f"{float(np.mean(vals)):.3f}" if vals else "nan")
        lines.append(",".join(avg_row))
        text = "\n".join(lines) + "\n"
        (out / f"table_{metric}.csv").write_text(text)
        tables[metric] = text
    return tables


def report(run_dir) -> dict:
    """Summarize a finished run: markdown digest plus plot-friendly columns."""
    run = Path(run_dir)
    rec_file = run / "records.csv"
    if not rec_file.exists():
        raise ConfigError(f"{run_dir} has no records.csv")
    rows = []
    with open(rec_file) as f:
        header = f.readline().strip().split(",")
        for line in f:
            parts = line.rstrip("\n").split(",")
            rows.append(dict(zip(header, parts)))
    if not rows:
        raise ConfigError("records.csv is empty")

    methods = sorted({r["method"] for r in rows},
                     key=lambda m: KNOWN_METHODS.index(m) if m in KNOWN_METHODS else 99)
    summary = {}
    for metric in ("stoi", "asii_st", "srmr"):
        per_method = {}
        for m in methods:
            vals = [float(r[metric]) for r in rows if r["method"] == m and r[metric]]
            per_method[m] = float(np.mean(vals)) if vals else None
        summary[metric] = per_method

    lines = ["# Run summary", "",
             f"records: {len(rows)}  methods: {', '.join(methods)}", "",
             "| metric | " + " | ".join(methods) + " |",
             "|---" * (len(methods) + 1) + "|"]
    for metric, per_method in summary.items():
        cells = []
        for m in methods:
            v = per_method[m]
            cells.append("-" if v is None else f"{v:.4f}")
        lines.append(f"| {metric} | " + " | ".join(cells) + " |")
    if "unp" in methods:
        lines += ["", "## Delta vs unprocessed", ""]
        for metric, per_method in summary.items():
            base = per_method.get("unp")
            if base is None:
                continue
            deltas = [f"{m}: {per_method[m] - base:+.4f}" for m in methods
                      if m != "unp" and per_method[m] is not None]
            lines.append(f"- {metric}: " + ", ".join(deltas))
    (run / "summary.md").write_text("\n".join(lines) + "\n")

    box_dir = run / "boxdata"
    box_dir.mkdir(exist_ok=True)
    for metric in ("stoi", "asii_st", "srmr"):
        for m in methods:
            vals = [r[metric] for r in rows if r["method"] == m and r[metric]]
            (box_dir / f"{metric}_{m}.dat").write_text(
                "\n".join(vals) + ("\n" if vals else ""))
    return summary
