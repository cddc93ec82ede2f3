"""Cellular massive MIMO and small-cell baselines under the same aging model."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .numerics import RngStream
from .results import ExperimentResult
from .scenario import Deployment, ScenarioConfig, _uniform_points, make_deployment
from .uplink import EffectiveChannels, conditional_covariance, conditional_sinr_all, run_monte_carlo


@dataclass(frozen=True)
class BaselineConfig:
    mode: str  # "cellular" | "smallcell"
    antennas: int

    def __post_init__(self):
        if self.mode not in ("cellular", "smallcell"):
            raise ValueError(f"unknown baseline mode {self.mode!r}")


def cellular_config(cfg: ScenarioConfig) -> ScenarioConfig:
    """One BS carrying the whole antenna budget M*N; speed spread is moot."""
    return replace(cfg, M=1, N=cfg.M * cfg.N, delta=0.0)


def smallcell_config(cfg: ScenarioConfig) -> ScenarioConfig:
    return replace(cfg, N=1)


def drop_cellular(cfg: ScenarioConfig, rng: RngStream) -> Deployment:
    """Same UE positions as :func:`drop_uniform` on the same stream; BS at the centre."""
    gen = rng.generator()
    ue = _uniform_points(gen, cfg.K, cfg.area_side)
    centre = np.full(cfg.M, 0.5 * cfg.area_side * (1 + 1j))
    return make_deployment(cfg, centre, ue)


def serving_aps(dep: Deployment) -> np.ndarray:
    """Nearest AP per UE; ties go to the lowest AP index."""
    return np.argmin(np.abs(dep.ap_pos[:, None] - dep.ue_pos[None, :]), axis=0)


def restrict_to_ap(eff: EffectiveChannels, m: int) -> EffectiveChannels:
    N = eff.n_antennas
    sl = slice(m * N, (m + 1) * N)
    return EffectiveChannels(eff.g_hat[sl], eff.psi[m:m + 1], eff.est_err[m:m + 1], eff.aging[m:m + 1],
                             eff.noise_power, N, eff.time)


def smallcell_sinr(eff: EffectiveChannels, dep: Deployment) -> np.ndarray:
    """Each UE decoded with local MMSE at its serving AP only."""
    serving = serving_aps(dep)
    out = np.empty(dep.K)
    for m in np.unique(serving):
        local = restrict_to_ap(eff, int(m))
        sinr = conditional_sinr_all(local, conditional_covariance(local)).sinr
        users = serving == m
        out[users] = np.nan_to_num(sinr[users], nan=0.0)
    return out


def run_cellular_mc(cfg: ScenarioConfig, drops: int, trials: int, probe_times=None, seed: int = 0,
                    threads: int = 1) -> ExperimentResult:
    ccfg = cellular_config(cfg)
    res = run_monte_carlo(ccfg, drops, trials, probe_times, seed, threads, deployer=drop_cellular,
                          engine="cellular")
    res.metadata["base_config"] = cfg.to_dict()
    return res


def run_smallcell_mc(cfg: ScenarioConfig, drops: int, trials: int, probe_times=None, seed: int = 0,
                     threads: int = 1) -> ExperimentResult:
    from .scenario import drop_uniform

    scfg = smallcell_config(cfg)
    res = run_monte_carlo(scfg, drops, trials, probe_times, seed, threads, deployer=drop_uniform,
                          engine="smallcell", sinr_fn=smallcell_sinr)
    res.metadata["base_config"] = cfg.to_dict()
    res.metadata["power_assumption"] = "same per-UE pilot/data energies as the cell-free system"
    return res
