"""Time-evolving fast fading, uplink pilots and per-link MMSE estimation.

Times are 1-based channel uses: pilots occupy ``1..P``, estimates are
anchored at ``P`` and data is sent over ``P+1..T``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .numerics import RngStream, sample_complex_gaussian
from .scenario import CorrelationProfile, Deployment, ScenarioConfig


@dataclass(frozen=True)
class ChannelBlock:
    """Realized channels ``h[n]`` of shape (M, K, N) at a few time indices."""

    h: dict[int, np.ndarray]
    anchor: int | None = None

    @property
    def times(self) -> list[int]:
        return sorted(self.h)


def _as_gen(rng):
    return rng.generator() if isinstance(rng, RngStream) else rng


def evolve_block(profile: CorrelationProfile, rng, times, n_antennas: int, anchor: int | None = None) -> ChannelBlock:
    """Generate ``h[n]`` at the requested indices.

    Without ``anchor`` consecutive requested indices are linked by the lag form
    ``h[n+tau] = rho[tau] h[n] + rho_bar[tau] z``.  With ``anchor`` every index
    is tied directly to ``h[anchor]`` through ``rho[|n - anchor|]`` with
    innovations that are independent across indices (white for a fixed anchor).
    """
    times = [int(t) for t in times]
    if times != sorted(times) or len(set(times)) != len(times):
        raise ValueError("evolve_block: times must be strictly increasing")
    gen = _as_gen(rng)
    shape = profile.doppler.shape + (n_antennas,)
    h: dict[int, np.ndarray] = {}
    if anchor is None:
        prev = None
        for t in times:
            if prev is None:
                h[t] = sample_complex_gaussian(gen, 0, size=shape)
            else:
                tau = t - prev
                z = sample_complex_gaussian(gen, 0, size=shape)
                h[t] = profile.rho(tau)[..., None] * h[prev] + profile.rho_bar(tau)[..., None] * z
            prev = t
        return ChannelBlock(h)
    h_anchor = sample_complex_gaussian(gen, 0, size=shape)
    for t in times:
        if t == anchor:
            h[t] = h_anchor
            continue
        tau = abs(t - anchor)
        z = sample_complex_gaussian(gen, 0, size=shape)
        h[t] = profile.rho(tau)[..., None] * h_anchor + profile.rho_bar(tau)[..., None] * z
    h.setdefault(anchor, h_anchor)
    return ChannelBlock(dict(sorted(h.items())), anchor)


def pilot_receive_all(dep: Deployment, block: ChannelBlock, cfg: ScenarioConfig, p: int, rng) -> np.ndarray:
    """Received pilot at every AP in slot ``p``; shape (M, N)."""
    gen = _as_gen(rng)
    ues = cfg.pilot_sets()[p]
    hp = block.h[p]
    amp = np.sqrt(dep.beta[:, ues] * np.asarray(cfg.pilot_energy)[ues])  # (M, |U_p|)
    y = np.einsum("mk,mkn->mn", amp, hp[:, ues, :]) if ues else np.zeros((dep.M, hp.shape[2]), complex)
    w = sample_complex_gaussian(gen, 0, size=y.shape)
    return y + math.sqrt(cfg.noise_power) * w


def pilot_receive(dep: Deployment, block: ChannelBlock, cfg: ScenarioConfig, m: int, p: int, rng) -> np.ndarray:
    """Received pilot ``y_m[p]`` at a single AP; shape (N,)."""
    gen = _as_gen(rng)
    ues = cfg.pilot_sets()[p]
    hp = block.h[p]
    y = np.zeros(hp.shape[2], dtype=complex)
    for l in ues:
        y = y + math.sqrt(dep.beta[m, l] * cfg.pilot_energy[l]) * hp[m, l]
    return y + math.sqrt(cfg.noise_power) * sample_complex_gaussian(gen, hp.shape[2])


def pilot_denominator(cfg: ScenarioConfig, dep: Deployment, p: int) -> np.ndarray:
    """sum_{l in U_p} beta_ml E_up,l + N0, per AP."""
    ues = cfg.pilot_sets()[p]
    e_up = np.asarray(cfg.pilot_energy)
    return dep.beta[:, ues] @ e_up[ues] + cfg.noise_power


def estimation_coefficients(cfg: ScenarioConfig, dep: Deployment, profile: CorrelationProfile) -> np.ndarray:
    """Deterministic a_mk, shape (M, K)."""
    P = cfg.pilot_len
    a = np.empty(dep.beta.shape)
    e_up = np.asarray(cfg.pilot_energy)
    for k, p in enumerate(cfg.pilot_slots):
        den = pilot_denominator(cfg, dep, p)
        rho = profile.rho(P - p)[:, k]
        a[:, k] = np.sqrt(rho**2 * dep.beta[:, k] * e_up[k] / den)
    return np.clip(a, 0.0, 1.0)


def mmse_estimate(dep: Deployment, cfg: ScenarioConfig, profile: CorrelationProfile, y_m_p, m: int, k: int, p: int):
    """Estimate h_mk[P] from the slot-``p`` pilot at AP ``m``.

    Returns ``(h_hat, a)`` with ``h_hat`` scaled to unit per-entry variance, so
    that ``h_mk[P] = a h_hat + sqrt(1 - a^2) h_tilde``.  An uninformative
    estimate (``a == 0``) comes back as a zero vector.
    """
    if k not in cfg.pilot_sets()[p]:
        raise ValueError(f"UE {k} does not transmit in pilot slot {p}")
    P = cfg.pilot_len
    den = float(pilot_denominator(cfg, dep, p)[m])
    rho = float(profile.rho(P - p)[m, k])
    gain = dep.beta[m, k] * cfg.pilot_energy[k]
    a = math.sqrt(min(rho * rho * gain / den, 1.0))
    if a == 0.0:
        return np.zeros_like(np.asarray(y_m_p, dtype=complex)), 0.0
    raw = rho * math.sqrt(gain) / den * np.asarray(y_m_p)
    return raw / a, a


@dataclass(frozen=True)
class EstimateSet:
    h_hat: np.ndarray  # (M, K, N), unit per-entry variance
    a: np.ndarray  # (M, K)
    h_tilde: np.ndarray  # (M, K, N), realized normalized error at the anchor
    uninformative: np.ndarray = field(default=None)  # (M, K) bool

    @property
    def h_tilde_cov_scale(self) -> np.ndarray:
        return 1.0 - self.a**2


def estimate_all(cfg: ScenarioConfig, dep: Deployment, profile: CorrelationProfile, block: ChannelBlock, rng) -> EstimateSet:
    """Run the pilot phase and MMSE-estimate every (AP, UE) channel at ``P``."""
    gen = _as_gen(rng)
    P = cfg.pilot_len
    M, K = dep.beta.shape
    N = block.h[P].shape[2]
    e_up = np.asarray(cfg.pilot_energy)
    a = estimation_coefficients(cfg, dep, profile)
    h_hat = np.zeros((M, K, N), dtype=complex)
    for p, ues in cfg.pilot_sets().items():
        if not ues:
            continue
        y = pilot_receive_all(dep, block, cfg, p, gen)
        den = pilot_denominator(cfg, dep, p)
        for k in ues:
            coef = profile.rho(P - p)[:, k] * np.sqrt(dep.beta[:, k] * e_up[k]) / den
            with np.errstate(divide="ignore", invalid="ignore"):
                scale = np.where(a[:, k] > 0, coef / a[:, k], 0.0)
            h_hat[:, k, :] = scale[:, None] * y
    a_bar = np.sqrt(1.0 - a**2)
    with np.errstate(divide="ignore", invalid="ignore"):
        h_tilde = np.where(a_bar[..., None] > 0, (block.h[P] - a[..., None] * h_hat) / a_bar[..., None], 0.0)
    return EstimateSet(h_hat, a, h_tilde, a == 0.0)


def aged_true_channel(block: ChannelBlock, profile: CorrelationProfile, est: EstimateSet, m: int, k: int, n: int, P: int):
    """Split ``h_mk[n]`` into estimate, estimation-error and aging parts.

    Returns ``(known, error, innovation)`` whose sum is the realized channel.
    """
    if n <= P:
        raise IndexError(f"aged_true_channel: n={n} must exceed P={P}")
    rho = float(profile.rho(n - P)[m, k])
    rho_bar = math.sqrt(max(1.0 - rho * rho, 0.0))
    a = float(est.a[m, k])
    a_bar = math.sqrt(max(1.0 - a * a, 0.0))
    h_n = block.h[n][m, k]
    h_p = block.h[P][m, k]
    known = rho * a * est.h_hat[m, k]
    error = rho * a_bar * est.h_tilde[m, k]
    if rho_bar > 0:
        innovation = h_n - rho * h_p
    else:
        innovation = np.zeros_like(h_n)
    return known, error, innovation


def aged_coefficients(rho, a):
    """Squared weights of the three parts; they always sum to one."""
    rho = np.asarray(rho)
    a = np.asarray(a)
    return rho**2 * a**2, rho**2 * (1 - a**2), 1 - rho**2
