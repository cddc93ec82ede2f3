import dataclasses

import numpy as np
import pytest

from cfaging.baselines import (BaselineConfig, cellular_config, drop_cellular, run_cellular_mc, run_smallcell_mc,
                               serving_aps, smallcell_config, smallcell_sinr)
from cfaging.channel import estimate_all, evolve_block
from cfaging.numerics import RngStream
from cfaging.results import to_db
from cfaging.scenario import CorrelationProfile, ScenarioConfig, desk_config, drop_uniform, make_deployment
from cfaging.uplink import conditional_covariance, conditional_sinr_all, effective_channels, run_monte_carlo


def small():
    return desk_config(M=8, N=2, K=3, pilot_len=3, frame_len=64)


def test_config_modes():
    cfg = small().with_speed_kmh(50)
    c = cellular_config(cfg)
    assert (c.M, c.N, c.delta) == (1, 16, 0.0)
    assert smallcell_config(cfg).N == 1
    with pytest.raises(ValueError):
        BaselineConfig("macro", 4)


def test_cellular_is_the_single_ap_engine():
    cfg = dataclasses.replace(small().with_speed_kmh(90), delta=0.4)
    a = run_cellular_mc(cfg, 3, 2, seed=4)
    b = run_monte_carlo(cellular_config(cfg), 3, 2, seed=4, deployer=drop_cellular)
    assert np.array_equal(a.sinr, b.sinr)
    assert a.engine == "cellular" and a.metadata["base_config"] == cfg.to_dict()


def test_cellular_geometry_shares_user_drops():
    cfg = small()
    cf = drop_uniform(cfg, RngStream(9, (0, 2)))
    cell = drop_cellular(cellular_config(cfg), RngStream(9, (0, 2)))
    assert np.array_equal(cf.ue_pos, cell.ue_pos)
    assert cell.ap_pos[0] == 0.5 + 0.5j
    v = np.asarray(cfg.mean_speeds)
    assert np.allclose(cell.v_rel, v[None, :])


def test_static_baselines_are_flat():
    cfg = small()
    for run in (run_cellular_mc, run_smallcell_mc):
        r = run(cfg, 2, 2, seed=1)
        assert np.ptp(r.sinr, axis=0).max() == 0.0


def test_serving_ap_tie_break():
    cfg = ScenarioConfig(M=3, K=2, pilot_len=2)
    dep = make_deployment(cfg, [0.2, 0.4, 0.8], [0.3, 0.79])
    assert serving_aps(dep).tolist() == [0, 2]


def test_smallcell_single_ap_equals_single_antenna_cellular():
    cfg = ScenarioConfig(M=1, K=1, pilot_len=1, frame_len=32)
    dep = make_deployment(cfg, [0.5 + 0.5j], [0.3 + 0.2j], [[40.0]])
    prof = CorrelationProfile.from_deployment(cfg, dep)
    est = estimate_all(cfg, dep, prof, evolve_block(prof, RngStream(2), [1], 1, anchor=1), RngStream(3))
    eff = effective_channels(dep, est, prof, cfg, 20)
    assert smallcell_sinr(eff, dep) == pytest.approx(conditional_sinr_all(eff, conditional_covariance(eff)).sinr,
                                                     rel=1e-15)


def test_shared_serving_ap_users_interfere():
    cfg = ScenarioConfig(M=2, K=2, pilot_len=2, frame_len=32)
    dep = make_deployment(cfg, [0.0, 1.0], [0.1, 0.12])
    prof = CorrelationProfile.from_deployment(cfg, dep)
    est = estimate_all(cfg, dep, prof, evolve_block(prof, RngStream(4), [1, 2], 1, anchor=2), RngStream(5))
    eff = effective_channels(dep, est, prof, cfg, 10)
    s = smallcell_sinr(eff, dep)
    assert np.all(np.isfinite(s)) and np.all(s > 0)
    alone = make_deployment(ScenarioConfig(M=2, K=1, pilot_len=2), [0.0, 1.0], [0.1])
    assert serving_aps(alone)[0] == serving_aps(dep)[0] == 0


def test_smallcell_metadata():
    r = run_smallcell_mc(small(), 1, 1, seed=0)
    assert r.engine == "smallcell" and "power_assumption" in r.metadata


def desk_gap_runs(seeds):
    cfg = desk_config(K=4, pilot_len=4).with_speed_kmh(30)
    out = []
    for seed in seeds:
        out.append([float(to_db(f(cfg, 20, 10, [256], seed).mean_sinr[-1]))
                    for f in (run_monte_carlo, run_cellular_mc, run_smallcell_mc)])
    return np.array(out)


def test_desk_cell_free_beats_small_cells():
    r = desk_gap_runs(range(3))
    assert np.all(r[:, 0] > r[:, 2]) and np.all(r[:, 1] > r[:, 2])


@pytest.mark.xfail(strict=True, reason="at desk scale the centred BS usually wins the linear mean; "
                                       "ordering only emerges at full scale (see acceptance criterion 4)")
def test_desk_cell_free_beats_cellular():
    r = desk_gap_runs(range(5))
    assert r[:, 0].mean() > r[:, 1].mean()
