"""Monte Carlo uplink engine: centralized MMSE combining of aged estimates."""
from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg as sla

from .channel import EstimateSet, estimate_all, evolve_block
from .numerics import RngStream, cholesky_factor
from .results import ExperimentResult, SinrBreakdown
from .scenario import CorrelationProfile, Deployment, ScenarioConfig, drop_uniform


@dataclass(frozen=True)
class EffectiveChannels:
    """Known part of the channel at data time ``n`` and per-AP disturbance levels.

    ``g_hat`` has shape (M*N, K) with AP ``m`` occupying rows ``m*N:(m+1)*N``.
    ``psi = est_err + aging + N0`` per AP.
    """

    g_hat: np.ndarray
    psi: np.ndarray
    est_err: np.ndarray  # sum_l E_l beta_ml a_bar^2 rho^2
    aging: np.ndarray  # sum_l E_l beta_ml rho_bar^2
    noise_power: float
    n_antennas: int
    time: int

    @property
    def M(self) -> int:
        return self.psi.shape[0]

    def expand(self, per_ap: np.ndarray) -> np.ndarray:
        return np.repeat(per_ap, self.n_antennas)


def effective_channels(dep: Deployment, est: EstimateSet, profile: CorrelationProfile,
                       cfg: ScenarioConfig, n: int) -> EffectiveChannels:
    P = cfg.pilot_len
    if not P < n <= cfg.frame_len:
        raise ValueError(f"time index {n} outside the data phase ({P}, {cfg.frame_len}]")
    rho = profile.rho(n - P)
    e_us = np.asarray(cfg.data_energy)
    a2 = est.a**2
    coef = rho * est.a * np.sqrt(e_us[None, :] * dep.beta)  # (M, K)
    M, K, N = est.h_hat.shape
    g = (coef[..., None] * est.h_hat).transpose(0, 2, 1).reshape(M * N, K)
    est_err = (dep.beta * (1.0 - a2) * rho**2) @ e_us
    aging = (dep.beta * (1.0 - rho**2)) @ e_us
    psi = est_err + aging + cfg.noise_power
    return EffectiveChannels(g, psi, est_err, aging, cfg.noise_power, N, n)


def conditional_covariance(eff: EffectiveChannels) -> np.ndarray:
    """R = G G^H + (Psi kron I_N)."""
    g = eff.g_hat
    r = g @ g.conj().T
    r[np.diag_indices_from(r)] += eff.expand(eff.psi)
    return r


def combiners(eff: EffectiveChannels, R: np.ndarray) -> np.ndarray:
    """MMSE combiners R^{-1} g_k for every UE from one factorization; (M*N, K)."""
    return sla.cho_solve(cholesky_factor(R), eff.g_hat)


def conditional_sinr_all(eff: EffectiveChannels, R: np.ndarray, C: np.ndarray | None = None) -> SinrBreakdown:
    """Per-UE power decomposition given the estimates (vectors over K)."""
    if C is None:
        C = combiners(eff, R)
    A = eff.g_hat.conj().T @ C  # A[l, k] = g_l^H c_k
    pw = np.abs(A) ** 2
    eta_s = np.diag(pw).copy()
    eta_1 = pw.sum(axis=0) - eta_s
    N = eff.n_antennas
    block = (np.abs(C) ** 2).reshape(eff.M, N, -1).sum(axis=1)  # (M, K)
    return SinrBreakdown(eta_s, eta_1, eff.est_err @ block, eff.aging @ block,
                         eff.noise_power * block.sum(axis=0))


def compute_conditional_sinr(eff: EffectiveChannels, R: np.ndarray, k: int) -> SinrBreakdown:
    return conditional_sinr_all(eff, R).select(k)


def realized_parts(dep: Deployment, est: EstimateSet, profile: CorrelationProfile, cfg: ScenarioConfig,
                   n: int, innovations: np.ndarray):
    """Stacked error and aging channels (g_tilde, xi), each (M*N, K).

    ``innovations`` holds z_{h,mk}[n; P] with shape (M, K, N).
    """
    P = cfg.pilot_len
    rho = profile.rho(n - P)
    rho_bar = profile.rho_bar(n - P)
    amp = np.sqrt(np.asarray(cfg.data_energy)[None, :] * dep.beta)
    M, K, N = est.h_hat.shape
    a_bar = np.sqrt(1.0 - est.a**2)
    gt = ((rho * a_bar * amp)[..., None] * est.h_tilde).transpose(0, 2, 1).reshape(M * N, K)
    xi = ((rho_bar * amp)[..., None] * innovations).transpose(0, 2, 1).reshape(M * N, K)
    return gt, xi


def mmse_combine_and_decode(eff: EffectiveChannels, R: np.ndarray, symbols: np.ndarray,
                            g_tilde: np.ndarray, xi: np.ndarray, noise: np.ndarray, k: int):
    """Decode UE ``k``: returns ``(r_k, terms)`` with the five additive terms
    (desired, inter-user, estimation error, aging, noise)."""
    c = combiners(eff, R)[:, k]
    ch = c.conj()
    known = ch @ eff.g_hat * symbols
    desired = known[k]
    interuser = known.sum() - desired
    est_term = (ch @ g_tilde) @ symbols
    aging_term = (ch @ xi) @ symbols
    noise_term = math.sqrt(eff.noise_power) * (ch @ noise)
    terms = (desired, interuser, est_term, aging_term, noise_term)
    return sum(terms), terms


def default_probe_times(cfg: ScenarioConfig) -> list[int]:
    """P+1 followed by the powers of two up to T."""
    P, T = cfg.pilot_len, cfg.frame_len
    times = [P + 1]
    t = 1
    while t <= T:
        if t > P + 1:
            times.append(t)
        t *= 2
    if times[-1] != T:
        times.append(T)
    return times


def drop_stream(seed: int, drop: int) -> RngStream:
    return RngStream(seed, (0, drop))


def trial_stream(seed: int, drop: int, trial: int) -> RngStream:
    return RngStream(seed, (1, drop, trial))


Deployer = Callable[[ScenarioConfig, RngStream], Deployment]


def run_trial(cfg: ScenarioConfig, dep: Deployment, profile: CorrelationProfile, probe_times,
              stream: RngStream, sinr_fn=None) -> np.ndarray:
    """One fading realization: pilots, estimates, SINR at each probe; (len(probes), K)."""
    gen = stream.generator()
    P = cfg.pilot_len
    times = sorted(set(cfg.pilot_slots) | {P})
    block = evolve_block(profile, gen, times, cfg.N, anchor=P)
    est = estimate_all(cfg, dep, profile, block, gen)
    out = np.empty((len(probe_times), dep.K))
    for i, n in enumerate(probe_times):
        eff = effective_channels(dep, est, profile, cfg, n)
        if sinr_fn is None:
            out[i] = conditional_sinr_all(eff, conditional_covariance(eff)).sinr
        else:
            out[i] = sinr_fn(eff, dep)
    return out


def run_drop(cfg: ScenarioConfig, drop: int, trials: int, probe_times, seed: int,
             deployer: Deployer = drop_uniform, sinr_fn=None) -> np.ndarray:
    """Trial-averaged linear SINR for one spatial drop; (len(probes), K)."""
    dep = deployer(cfg, drop_stream(seed, drop))
    profile = CorrelationProfile.from_deployment(cfg, dep)
    acc = np.zeros((len(probe_times), dep.K))
    for t in range(trials):
        acc += run_trial(cfg, dep, profile, probe_times, trial_stream(seed, drop, t), sinr_fn)
    return acc / trials


def map_drops(fn, drops: int, threads: int = 1) -> list:
    """Evaluate ``fn(drop)`` for every drop; output order never depends on ``threads``."""
    if threads <= 1:
        return [fn(d) for d in range(drops)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(drops)))


def run_monte_carlo(cfg: ScenarioConfig, drops: int, trials: int, probe_times=None, seed: int = 0,
                    threads: int = 1, deployer: Deployer = drop_uniform, engine: str = "mc",
                    sinr_fn=None) -> ExperimentResult:
    """Average conditional SINR over ``trials`` fadings per drop, then over drops."""
    if drops < 1 or trials < 1:
        raise ValueError("drops and trials must be >= 1")
    probe_times = list(probe_times) if probe_times is not None else default_probe_times(cfg)
    start = time.perf_counter()
    per_drop = np.stack(map_drops(
        lambda d: run_drop(cfg, d, trials, probe_times, seed, deployer, sinr_fn), drops, threads))
    return ExperimentResult(
        engine=engine,
        axis_name="time_index",
        axis=probe_times,
        sinr=per_drop.mean(axis=0),
        per_drop=per_drop,
        metadata={
            "engine": engine,
            "config": cfg.to_dict(),
            "seed": int(seed),
            "drops": int(drops),
            "trials": int(trials),
            "probe_times": [int(t) for t in probe_times],
            "runtime_s": time.perf_counter() - start,
        },
    )
