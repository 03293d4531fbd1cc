import json
from pathlib import Path

import numpy as np
import pytest

from nrse import cli, corpus
from nrse.harness import (CalibrationResult, ConfigError, Scenario,
                          calibrate_snr_for_stoi, report, run_scenario)
from nrse.signal_core import load_wav, write_wav

from conftest import FS


def _scenario_dict(**overrides) -> dict:
    d = {"clean_dir": "clean", "rir_path": "rir.wav", "noise_path": "noise.wav",
         "output_dir": "out", "snr_grid": [0.0], "methods": ["unp", "hnh"]}
    d.update(overrides)
    return d


# ------------------------------------------------------------ configuration

def test_scenario_from_file_round_trip(tmp_path):
    cfg = tmp_path / "sc.json"
    cfg.write_text(json.dumps(_scenario_dict(seed=3, mask_bands=18)))
    sc = Scenario.from_file(cfg)
    assert sc.methods == ["unp", "hnh"]
    assert sc.seed == 3
    assert sc.mask_bands == 18


@pytest.mark.parametrize("mutate", [
    {"typo_key": 1},
    {"snr_grid": [0.0], "stoi_targets": [0.5]},
    {"snr_grid": []},
    {"methods": ["unp", "wiener"]},
    {"methods": []},
])
def test_scenario_rejects_bad_config(tmp_path, mutate):
    cfg = tmp_path / "sc.json"
    cfg.write_text(json.dumps(_scenario_dict(**mutate)))
    with pytest.raises(ConfigError):
        Scenario.from_file(cfg)


def test_scenario_rejects_bad_json(tmp_path):
    cfg = tmp_path / "sc.json"
    cfg.write_text("{not json")
    with pytest.raises(ConfigError):
        Scenario.from_file(cfg)
    with pytest.raises(ConfigError):
        Scenario.from_file(tmp_path / "missing.json")


def test_param_hash_ignores_output_dir():
    a = Scenario(**_scenario_dict(output_dir="runs/a"))
    b = Scenario(**_scenario_dict(output_dir="runs/b"))
    c = Scenario(**_scenario_dict(seed=1))
    assert a.param_hash() == b.param_hash()
    assert a.param_hash() != c.param_hash()
    assert len(a.param_hash()) == 16
    int(a.param_hash(), 16)  # hex digest prefix


# ------------------------------------------------------------- batch runs

@pytest.fixture(scope="module")
def assets(tmp_path_factory):
    """Two clean utterances plus a short room and a noise bed on disk."""
    root = tmp_path_factory.mktemp("assets")
    clean_dir = root / "clean"
    clean_dir.mkdir()
    for i in range(2):
        write_wav(clean_dir / f"utt{i:03d}.wav", corpus.synth_utterance(i, FS, 2.0))
    write_wav(root / "rir.wav", corpus.synth_rir(0.3, FS, 0, 0.0))
    write_wav(root / "noise.wav",
              corpus.synth_white_noise(3 * FS, FS, seed=42))
    return root


def _make_scenario(assets, out_dir, **overrides) -> Scenario:
    d = _scenario_dict(clean_dir=str(assets / "clean"),
                       rir_path=str(assets / "rir.wav"),
                       noise_path=str(assets / "noise.wav"),
                       output_dir=str(out_dir), **overrides)
    return Scenario(**d)


@pytest.fixture(scope="module")
def tiny_run(assets, tmp_path_factory):
    out = tmp_path_factory.mktemp("run_a")
    sc = _make_scenario(assets, out)
    return sc, run_scenario(sc)


def test_run_produces_one_record_per_cell(tiny_run):
    _, res = tiny_run
    assert len(res.records) == 2 * 2 * 1  # utterances x methods x snrs
    assert not res.failures
    methods = {r.method for r in res.records}
    assert methods == {"unp", "hnh"}
    for r in res.records:
        assert 0.0 <= r.stoi <= 1.0
        assert r.srmr > 0.0


def test_run_writes_records_csv(tiny_run):
    sc, res = tiny_run
    lines = (Path(res.output_dir) / "records.csv").read_text().splitlines()
    assert lines[0] == ("utterance,method,rir,noise,snr_db,measured_snr_db,"
                        "stoi,asii_st,srmr,external,param_hash")
    assert len(lines) == 1 + len(res.records)
    assert all(line.endswith(sc.param_hash()) for line in lines[1:])


def test_run_writes_tables_with_average_row(tiny_run):
    _, res = tiny_run
    table = res.tables["stoi"].splitlines()
    assert table[0] == "snr_db,unp,hnh"
    assert table[-1].startswith("Average,")
    # one grid row + the average
    assert len(table) == 3


def test_run_writes_enhanced_audio(tiny_run):
    _, res = tiny_run
    wavs = sorted((Path(res.output_dir) / "enhanced").glob("*.wav"))
    assert len(wavs) == len(res.records)
    sig = load_wav(wavs[0])
    assert sig.sample_rate == FS
    assert np.all(np.isfinite(sig.samples))


def test_run_respects_max_utterances(assets, tmp_path):
    sc = _make_scenario(assets, tmp_path / "out", methods=["unp"],
                        max_utterances=1)
    res = run_scenario(sc, write_audio=False)
    assert len(res.records) == 1
    assert res.records[0].utterance == "utt000"


def test_runs_are_reproducible(assets, tiny_run, tmp_path):
    _, first = tiny_run
    sc = _make_scenario(assets, tmp_path / "again")
    res = run_scenario(sc)
    a = (Path(first.output_dir) / "records.csv").read_bytes()
    b = (Path(res.output_dir) / "records.csv").read_bytes()
    assert a == b


def test_records_measured_snr_matches_nominal(tiny_run):
    _, res = tiny_run
    for r in res.records:
        assert abs(r.measured_snr_db - r.snr_db) <= 0.01


def test_report_summarizes_run(tiny_run):
    _, res = tiny_run
    summary = report(res.output_dir)
    assert set(summary) == {"stoi", "asii_st", "srmr"}
    assert set(summary["stoi"]) == {"unp", "hnh"}
    assert all(0.0 < v <= 1.0 for v in summary["stoi"].values())
    run = Path(res.output_dir)
    assert (run / "summary.md").exists()
    dat = (run / "boxdata" / "stoi_unp.dat").read_text().split()
    assert len(dat) == 2  # one value per utterance


def test_report_requires_records(tmp_path):
    with pytest.raises(ConfigError):
        report(tmp_path)


# ------------------------------------------------------------- calibration

def test_calibration_converges_to_target(utterances):
    rir = corpus.synth_rir(0.3, FS, 0, 0.0)
    noise = corpus.synth_white_noise(3 * FS, FS, seed=5)
    cal = calibrate_snr_for_stoi(utterances[:2], rir, noise, 0.45)
    assert isinstance(cal, CalibrationResult)
    assert cal.converged
    assert abs(cal.achieved_stoi - 0.45) <= 0.005
    assert -20.0 < cal.snr_db < 20.0


def test_calibration_clamps_unreachable_targets(utterances):
    rir = corpus.synth_rir(0.3, FS, 0, 0.0)
    noise = corpus.synth_white_noise(3 * FS, FS, seed=5)
    hi = calibrate_snr_for_stoi(utterances[:1], rir, noise, 0.999)
    assert hi.snr_db == 20.0 and not hi.converged
    lo = calibrate_snr_for_stoi(utterances[:1], rir, noise, 0.01)
    assert lo.snr_db == -20.0 and not lo.converged


def test_calibration_rejects_empty_set():
    rir = corpus.synth_rir(0.3, FS, 0, 0.0)
    noise = corpus.synth_white_noise(FS, FS, seed=5)
    with pytest.raises(ValueError):
        calibrate_snr_for_stoi([], rir, noise, 0.5)


# --------------------------------------------------------------------- cli

def test_cli_rejects_broken_config(tmp_path, capsys):
    cfg = tmp_path / "sc.json"
    cfg.write_text(json.dumps(_scenario_dict(typo_key=1)))
    assert cli.main(["run", "--config", str(cfg)]) == 2
    assert "config error" in capsys.readouterr().err


def test_cli_reports_missing_file_as_error(tmp_path):
    assert cli.main(["evaluate", "--clean", str(tmp_path / "a.wav"),
                     "--processed", str(tmp_path / "b.wav")]) == 1


def test_cli_evaluate_identical_files(tmp_path, utterance, capsys):
    wav = tmp_path / "u.wav"
    write_wav(wav, utterance)
    rc = cli.main(["evaluate", "--clean", str(wav), "--processed", str(wav),
                   "--json"])
    assert rc == 0
    scores = json.loads(capsys.readouterr().out)
    assert scores["stoi"] == pytest.approx(1.0, abs=1e-6)
    assert scores["asii_st"] == pytest.approx(1.0, abs=1e-6)


def test_cli_unknown_command_exits_2(capsys):
    assert cli.main(["frobnicate"]) == 2


def test_cli_ins_prints_profile(tmp_path, capsys):
    wav = tmp_path / "n.wav"
    write_wav(wav, corpus.synth_white_noise(FS, FS, seed=1))
    rc = cli.main(["ins", "--input", str(wav), "--surrogates", "8"])
    assert rc == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "scale_s,ins,gamma,stationary"
    assert len(out) > 1
    assert all(len(line.split(",")) == 4 for line in out[1:])
