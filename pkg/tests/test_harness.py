import json
from pathlib import Path

import numpy as np
import pytest

from cfaging import cli
from cfaging.harness import (EXPERIMENTS, HarnessError, compare, csv_text, emit, experiment_fig1, experiment_fig2,
                             experiment_fig3, load_config, preset, rerun, run_system, run_velocity_sweep,
                             save_config)
from cfaging.results import ExperimentResult
from cfaging.scenario import ConfigError, ScenarioConfig, desk_config

ROOT = Path(__file__).resolve().parents[1]
GOLDEN = Path(__file__).parent / "data" / "golden_fig1"


def golden_bundle(threads=1):
    return experiment_fig1(scale="desk", seed=11, threads=threads, speeds_kmh=(100.0,), drops=2, trials=2,
                           probe_times=[9, 64, 256])


def tiny():
    return desk_config(M=8, K=3, pilot_len=3, frame_len=64)


def write_json(tmp_path, data):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(data))
    return p


def test_paper_defaults_file():
    cfg = load_config(ROOT / "configs" / "paper.json")
    assert (cfg.K, cfg.M, cfg.N, cfg.frame_len, cfg.pilot_len) == (16, 256, 1, 1024, 16)
    assert cfg.bandwidth_hz == 5e6 and cfg.carrier_hz == 5e9
    snr = 10 * np.log10(np.asarray(cfg.data_energy) / cfg.noise_power)
    assert np.allclose(snr, 20.0) and np.allclose(cfg.pilot_energy, cfg.data_energy)
    assert load_config(ROOT / "configs" / "desk.json") == preset("desk")


def test_config_rejections(tmp_path):
    base = json.loads((ROOT / "configs" / "desk.json").read_text())
    with pytest.raises(ConfigError, match="delta"):
        load_config(write_json(tmp_path, {**base, "delta": 1.5}))
    with pytest.raises(ConfigError, match="pathloss"):
        load_config(write_json(tmp_path, {k: v for k, v in base.items() if k != "pathloss"}))
    with pytest.raises(ConfigError, match="colour"):
        load_config(write_json(tmp_path, {**base, "colour": "red"}))
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    with pytest.raises(HarnessError):
        preset("huge")


def test_save_load_round_trip(tmp_path):
    cfg = tiny().with_speed_kmh(70)
    save_config(cfg, tmp_path / "c.json")
    assert load_config(tmp_path / "c.json") == cfg


def test_csv_schema():
    res = run_system("mc", tiny(), 1, 1, [4, 32, 64], seed=0)
    rows = csv_text(res).splitlines()
    assert rows[0].split(",")[0] == "time_index" and rows[0].split(",")[-1] == "mean_sinr_db"
    assert all(len(r.split(",")) == 2 + 3 for r in rows)
    assert len(rows) == 4


def test_flagged_points_are_kept():
    res = ExperimentResult("mc", "time_index", [5, 6], np.array([[1.0, 0.0], [2.0, 3.0]]))
    assert res.flagged == [5]
    assert "-inf" in csv_text(res).splitlines()[1]


def test_golden_fig1(tmp_path):
    emit(golden_bundle(), tmp_path)
    for ref in sorted(GOLDEN.glob("*.csv")):
        assert (tmp_path / ref.name).read_bytes() == ref.read_bytes(), ref.name


def test_thread_count_does_not_change_bytes(tmp_path):
    emit(golden_bundle(threads=1), tmp_path / "a")
    emit(golden_bundle(threads=2), tmp_path / "b")
    for f in sorted((tmp_path / "a").glob("*.csv")):
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()


def test_sidecar_round_trip_and_rerun(tmp_path):
    emit(golden_bundle(), tmp_path)
    for meta_path in sorted(tmp_path.glob("*.json")):
        meta = json.loads(meta_path.read_text())
        assert ScenarioConfig.from_dict(meta["config"]).to_dict() == meta["config"]
        again = rerun(meta)
        assert csv_text(again) == (tmp_path / meta["csv"]).read_text()


def test_velocity_sweep_rerun(tmp_path):
    res = run_velocity_sweep("cellular", tiny(), [0, 200], 1, 2, seed=3)
    emit({"sweep": res}, tmp_path)
    meta = json.loads((tmp_path / "sweep.json").read_text())
    assert meta["axis_name"] == "velocity_kmh"
    assert csv_text(rerun(meta)) == (tmp_path / "sweep.csv").read_text()


def test_lf_line_endings(tmp_path):
    emit(golden_bundle(), tmp_path)
    for f in tmp_path.iterdir():
        assert b"\r" not in f.read_bytes()


def test_compare_report():
    cfg = tiny().with_speed_kmh(100)
    mc = run_system("mc", cfg, 2, 4, [4, 64], seed=0)
    de = run_system("detequiv", cfg, 2, 0, [4, 64], seed=0)
    rep = compare(mc, de, 0.5)
    assert rep["axis"] == [4, 64] and len(rep["gap_db"]) == 2
    assert rep["ok"] == (rep["max_abs_gap_db"] <= 0.5)


def test_unknown_system():
    with pytest.raises(HarnessError):
        run_system("macro", tiny(), 1, 1)


def test_fig2_bundle():
    b = experiment_fig2(tiny(), scale="desk", ap_counts=(8, 16), deltas=(0.0, 0.5), systems=("detequiv",),
                        drops=2, probe_times=[4, 64])
    assert sorted(b) == ["fig2_detequiv_M16_delta0", "fig2_detequiv_M16_delta0p5",
                         "fig2_detequiv_M8_delta0", "fig2_detequiv_M8_delta0p5"]
    assert b["fig2_detequiv_M8_delta0p5"].metadata["delta"] == 0.5
    assert b["fig2_detequiv_M8_delta0"].metadata["config"]["mean_speeds"][0] == pytest.approx(300 / 3.6)


def test_fig3_bundle_and_monotonicity_flags():
    b = experiment_fig3(tiny(), scale="desk", speeds_kmh=(0.0, 150.0, 300.0), deltas=(0.0,), drops=2, trials=2)
    assert sorted(b) == ["fig3_cellular", "fig3_detequiv_delta0", "fig3_smallcell"]
    for res in b.values():
        assert res.axis_name == "velocity_kmh" and res.sinr.shape == (3, 3)
        assert not res.flagged
        # Jakes decorrelation is not monotone in speed; report rises instead of asserting them away
        rises = np.flatnonzero(np.diff(res.mean_sinr) > 0)
        if rises.size:
            print(f"{res.engine}: SINR rises between grid points {rises.tolist()}")
    assert set(EXPERIMENTS) == {"fig1", "fig2", "fig3"}


def test_cli_success_and_outputs(tmp_path, capsys):
    code = cli.run(["simulate", "--system", "cellular", "--drops", "1", "--trials", "1",
                    "--probe-times", "9,256", "--out", str(tmp_path)])
    assert code == 0
    assert (tmp_path / "cellular.csv").exists() and (tmp_path / "cellular.json").exists()
    assert cli.run(["detequiv", "--drops", "1", "--probe-times", "9"]) == 0
    assert "detequiv" in capsys.readouterr().out


def test_cli_errors(tmp_path, capsys):
    assert cli.run(["simulate", "--config", str(tmp_path / "nope.json")]) == 2
    assert "error [config]" in capsys.readouterr().err
    bad = write_json(tmp_path, {"M": 4})
    assert cli.run(["detequiv", "--config", str(bad)]) == 2
    with pytest.raises(SystemExit):
        cli.run(["sweep", "fig9"])


def test_cli_compare_exit_codes(tmp_path):
    cfg = tiny().with_speed_kmh(100)
    save_config(cfg, tmp_path / "c.json")
    args = ["compare", "--config", str(tmp_path / "c.json"), "--drops", "1", "--trials", "2", "--probe-times", "4,64"]
    assert cli.run(args + ["--tolerance-db", "100"]) == 0
    assert cli.run(args + ["--tolerance-db", "0"]) == 3
