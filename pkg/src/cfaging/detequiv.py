"""Large-system (deterministic-equivalent) SINR of centralized MMSE combining
under per-link aging.

Only large-scale quantities enter: for every (AP, UE) pair the known-channel
power ``zeta = beta a^2 rho^2``, the estimation-error power
``zeta_check = beta (1 - a^2) rho^2`` and the aging power
``zeta_dot = beta (1 - rho^2)``.  All traces reduce to sums over APs because
every matrix involved is diagonal per AP and repeated over the N antennas.

Computation is split in two stages so the correlation dependence of the
power terms can be examined in isolation:

* :func:`resolve` computes the resolvent quantities (fixed points, the
  per-AP weights ``phi`` and the derivative solves) for one UE.
* :func:`assemble` turns a profile plus those quantities into the five powers.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .numerics import NumericalError, solve_general
from .results import SinrBreakdown
from .scenario import CorrelationProfile, Deployment, ScenarioConfig


class DEConvergenceError(RuntimeError):
    """A fixed point or linear solve failed; ``stage`` names which one."""

    def __init__(self, stage: str, detail: str, residual: float | None = None):
        super().__init__(f"{stage}: {detail}")
        self.stage = stage
        self.residual = residual


@dataclass(frozen=True)
class DEOptions:
    """Solver settings and readings of the ambiguous parts of the result.

    ``squared_weights``: weight derivative terms by ``1/(1+e)^2`` (False: ``1/(1+e)``).
    ``dotted_leave_two_out``: pair-excluded weights use their own fixed point
    (False: reuse the single-exclusion ``e_{k,p}``).
    ``dotted_inverse``: pair derivative solve uses ``(I - J)^{-1} u`` (False: ``(I - J) u``).
    ``eps_reading``: ``"per_ap"`` keeps the inter-user term resolved per AP;
    ``"aggregate"`` collapses it to one scalar per UE pair.
    """

    tol: float = 1e-10
    max_iter: int = 1000
    squared_weights: bool = True
    dotted_leave_two_out: bool = True
    dotted_inverse: bool = True
    eps_reading: str = "per_ap"

    def __post_init__(self):
        if self.eps_reading not in ("per_ap", "aggregate"):
            raise ValueError(f"eps_reading must be 'per_ap' or 'aggregate', got {self.eps_reading!r}")


@dataclass(frozen=True)
class LargeScaleProfile:
    zeta: np.ndarray  # (M, K)
    zeta_check: np.ndarray  # (M, K)
    zeta_dot: np.ndarray  # (M, K)
    psi: np.ndarray  # (M,)
    energy: np.ndarray  # (K,) data energies
    N: int
    noise_power: float
    time: int | None = None

    @property
    def M(self) -> int:
        return self.zeta.shape[0]

    @property
    def K(self) -> int:
        return self.zeta.shape[1]

    @property
    def beta(self) -> np.ndarray:
        return self.zeta + self.zeta_check + self.zeta_dot


def profile_from_parts(beta, a, rho, energy, noise_power: float, N: int, time=None) -> LargeScaleProfile:
    beta = np.asarray(beta, dtype=float)
    a2 = np.asarray(a, dtype=float) ** 2 * np.ones_like(beta)
    r2 = np.asarray(rho, dtype=float) ** 2 * np.ones_like(beta)
    energy = np.asarray(energy, dtype=float) * np.ones(beta.shape[1])
    zeta = beta * a2 * r2
    zeta_check = beta * (1.0 - a2) * r2
    zeta_dot = beta * (1.0 - r2)
    psi = (zeta_check + zeta_dot) @ energy + noise_power
    return LargeScaleProfile(zeta, zeta_check, zeta_dot, psi, energy, int(N), float(noise_power), time)


def build_profile(dep: Deployment, a: np.ndarray, profile: CorrelationProfile, cfg: ScenarioConfig,
                  n: int) -> LargeScaleProfile:
    P = cfg.pilot_len
    if not P < n <= cfg.frame_len:
        raise ValueError(f"time index {n} outside the data phase ({P}, {cfg.frame_len}]")
    return profile_from_parts(dep.beta, a, profile.rho(n - P), cfg.data_energy, cfg.noise_power, cfg.N, n)


@dataclass(frozen=True)
class FixedPointState:
    e: np.ndarray  # (K,) ; e[k] itself is the self term of the excluded user
    phi: np.ndarray  # (M,)
    iterations: int
    converged: bool
    residual: float
    history: tuple = ()


def _weights(e: np.ndarray, squared: bool) -> np.ndarray:
    return (1.0 + e) ** 2 if squared else 1.0 + e


def _fixed_point_batch(W: np.ndarray, psi: np.ndarray, N: int, exclude: np.ndarray, init: float,
                       tol: float, max_iter: int, stage: str):
    """Iterate e_b,l = N sum_m W_ml / (sum_{i not excluded in b} W_mi/(1+e_b,i) + psi_m).

    ``exclude`` is a (B, K) boolean mask; returns e (B, K), phi (B, M) and
    diagnostics.
    """
    B, K = exclude.shape
    keep = ~exclude
    e = np.full((B, K), init)
    history = []
    for it in range(1, max_iter + 1):
        denom = (keep / (1.0 + e)) @ W.T + psi
        e_new = N * (1.0 / denom) @ W
        residual = float(np.max(np.abs(e_new - e))) if e.size else 0.0
        history.append(residual)
        e = e_new
        if residual < tol:
            phi = 1.0 / ((keep / (1.0 + e)) @ W.T + psi)
            return e, phi, it, residual, tuple(history)
    raise DEConvergenceError(stage, f"no convergence after {max_iter} iterations", residual)


def fixed_point_e(prof: LargeScaleProfile, k: int, options: DEOptions = DEOptions()) -> FixedPointState:
    """Fixed point for UE ``k`` (its own term excluded from the interference sum)."""
    if np.any(prof.psi <= 0):
        raise ValueError("psi must be positive")
    W = prof.zeta * prof.energy
    mask = np.zeros((1, prof.K), dtype=bool)
    mask[0, k] = True
    e, phi, it, res, hist = _fixed_point_batch(W, prof.psi, prof.N, mask, 1.0 / prof.noise_power,
                                               options.tol, options.max_iter, f"fixed_point_e[k={k}]")
    return FixedPointState(e[0], phi[0], it, True, res, hist)


def _derivative_solve(W, phi, e, active, middle, N, squared, inverse, stage):
    """Solve for the derivative weights e' over the ``active`` UEs.

    J_pq = N sum_m W_mp phi_m^2 W_mq / w(e_q),  u_p = N sum_m W_mp phi_m^2 middle_m.
    Returns e' as a length-K vector (zeros off ``active``).
    """
    K = W.shape[1]
    out = np.zeros(K)
    idx = np.flatnonzero(active)
    if idx.size == 0:
        return out, np.zeros((0, 0))
    Wa = W[:, idx]
    phi2 = phi**2
    J = N * (Wa * phi2[:, None]).T @ Wa / _weights(e[idx], squared)[None, :]
    u = N * (Wa * phi2[:, None]).T @ middle
    A = np.eye(idx.size) - J
    if inverse:
        try:
            out[idx] = solve_general(A, u)
        except NumericalError as exc:
            raise DEConvergenceError(stage, f"I - J is singular ({exc})") from exc
    else:
        out[idx] = A @ u
    return out, J


def e_prime_solve(prof: LargeScaleProfile, k: int, state: FixedPointState,
                  options: DEOptions = DEOptions()) -> np.ndarray:
    """Derivative weights e'_{k,l} (length K, entry k is zero)."""
    W = prof.zeta * prof.energy
    active = np.ones(prof.K, dtype=bool)
    active[k] = False
    ep, _ = _derivative_solve(W, state.phi, state.e, active, prof.zeta[:, k], prof.N,
                              options.squared_weights, True, f"e_prime_solve[k={k}]")
    return ep


def derivative_matrix(prof: LargeScaleProfile, k: int, state: FixedPointState,
                      options: DEOptions = DEOptions()) -> np.ndarray:
    """The (K-1)x(K-1) coupling matrix J of the derivative solve for UE ``k``."""
    W = prof.zeta * prof.energy
    active = np.ones(prof.K, dtype=bool)
    active[k] = False
    _, J = _derivative_solve(W, state.phi, state.e, active, prof.zeta[:, k], prof.N,
                             options.squared_weights, True, "derivative_matrix")
    return J


@dataclass(frozen=True)
class PairQuantities:
    """Pair-excluded (UE k and UE l removed) quantities, one row per ``others[i]``."""

    others: np.ndarray  # (L,) UE indices l != k
    phi: np.ndarray  # (L, M)
    e: np.ndarray  # (L, K)
    e_prime: np.ndarray  # (L, K)
    self_term: np.ndarray  # (L,) N E_l sum_m zeta_ml phi_mkl


@dataclass(frozen=True)
class ResolventState:
    k: int
    fixed_point: FixedPointState
    e_prime: np.ndarray  # (K,)
    pairs: PairQuantities
    options: DEOptions = field(default_factory=DEOptions)


def pair_quantities(prof: LargeScaleProfile, k: int, state: FixedPointState,
                    options: DEOptions = DEOptions()) -> PairQuantities:
    K, M = prof.K, prof.M
    others = np.array([l for l in range(K) if l != k], dtype=int)
    W = prof.zeta * prof.energy
    if others.size == 0:
        z = np.zeros((0, M))
        return PairQuantities(others, z, np.zeros((0, K)), np.zeros((0, K)), np.zeros(0))
    mask = np.zeros((others.size, K), dtype=bool)
    mask[:, k] = True
    mask[np.arange(others.size), others] = True
    if options.dotted_leave_two_out:
        e_dot, phi_dot, *_ = _fixed_point_batch(W, prof.psi, prof.N, mask, 1.0 / prof.noise_power,
                                                options.tol, options.max_iter, f"pair_fixed_point[k={k}]")
    else:
        e_dot = np.tile(state.e, (others.size, 1))
        phi_dot = 1.0 / ((~mask / (1.0 + e_dot)) @ W.T + prof.psi)
    e_dot_prime = np.zeros((others.size, K))
    for i in range(others.size):
        e_dot_prime[i], _ = _derivative_solve(W, phi_dot[i], e_dot[i], ~mask[i], prof.zeta[:, k], prof.N,
                                              options.squared_weights, options.dotted_inverse,
                                              f"pair_derivative_solve[k={k}, l={others[i]}]")
    self_term = prof.N * np.einsum("ml,lm->l", W[:, others], phi_dot)
    return PairQuantities(others, phi_dot, e_dot, e_dot_prime, self_term)


def resolve(prof: LargeScaleProfile, k: int, options: DEOptions = DEOptions()) -> ResolventState:
    state = fixed_point_e(prof, k, options)
    ep = e_prime_solve(prof, k, state, options)
    pairs = pair_quantities(prof, k, state, options)
    return ResolventState(k, state, ep, pairs, options)


def phi_prime(prof: LargeScaleProfile, k: int, phi: np.ndarray, e: np.ndarray, e_prime: np.ndarray,
              active: np.ndarray, squared: bool = True) -> np.ndarray:
    """phi'_m = phi_m^2 (zeta_mk + sum_{l active} E_l zeta_ml e'_l / w(e_l))."""
    W = prof.zeta * prof.energy
    coef = np.where(active, e_prime / _weights(e, squared), 0.0)
    return phi**2 * (prof.zeta[:, k] + W @ coef)


def eta_s(prof: LargeScaleProfile, k: int, phi: np.ndarray) -> float:
    return float(prof.N * prof.energy[k] ** 2 * (prof.zeta[:, k] @ phi) ** 2)


def eta_2_3_w(prof: LargeScaleProfile, k: int, phi_p: np.ndarray) -> tuple[float, float, float]:
    ek = prof.energy[k]
    eta_2 = ek * float(phi_p @ (prof.zeta_check @ prof.energy))
    eta_3 = ek * float(phi_p @ (prof.zeta_dot @ prof.energy))
    eta_w = prof.noise_power * ek * float(phi_p.sum())
    return eta_2, eta_3, eta_w


@dataclass
class Diagnostics:
    clamped: int = 0


def eta_1(prof: LargeScaleProfile, k: int, pairs: PairQuantities, options: DEOptions = DEOptions(),
          diagnostics: Diagnostics | None = None) -> float:
    """Residual inter-user interference after combining.

    For each interferer ``l`` the pair-excluded derivative weights give
    ``phi_dot'``; the interferer's own resolvent term ``x`` enters through
    ``eps = phi_dot' + x^2 phi_dot' / (1+x)^2 - 2 x phi_dot' / (1+x)``,
    which equals ``phi_dot' / (1+x)^2``.
    """
    K = prof.K
    total = 0.0
    for i, l in enumerate(pairs.others):
        active = np.ones(K, dtype=bool)
        active[[k, l]] = False
        phid = pairs.phi[i]
        phidp = phi_prime(prof, k, phid, pairs.e[i], pairs.e_prime[i], active, options.squared_weights)
        x = pairs.self_term[i]
        if options.eps_reading == "per_ap":
            eps = phidp + x**2 * phidp / (1 + x) ** 2 - 2 * x * phidp / (1 + x)
            contrib = prof.energy[l] * float(prof.zeta[:, l] @ eps)
        else:
            w = prof.zeta[:, l]
            wsum = w.sum()
            if wsum <= 0:
                continue
            phid_s = float(w @ phid) / wsum
            phidp_s = float(w @ phidp) / wsum
            agg = prof.energy[l] * wsum * prof.N * phid_s
            eps = phidp_s + agg**2 * phidp_s / (1 + agg) ** 2 - 2 * agg * phidp_s / (1 + agg)
            contrib = prof.energy[l] * float(prof.zeta[:, k] @ prof.zeta[:, l]) * eps
        if contrib < 0:
            contrib = 0.0
            if diagnostics is not None:
                diagnostics.clamped += 1
        total += contrib
    return prof.energy[k] * total


def assemble(prof: LargeScaleProfile, state: ResolventState, diagnostics: Diagnostics | None = None) -> SinrBreakdown:
    """Five powers for UE ``state.k`` from the profile's explicit terms."""
    k = state.k
    fp = state.fixed_point
    active = np.ones(prof.K, dtype=bool)
    active[k] = False
    php = phi_prime(prof, k, fp.phi, fp.e, state.e_prime, active, state.options.squared_weights)
    e2, e3, ew = eta_2_3_w(prof, k, php)
    e1 = eta_1(prof, k, state.pairs, state.options, diagnostics)
    return SinrBreakdown(eta_s(prof, k, fp.phi), e1, e2, e3, ew)


def det_equiv_sinr(prof: LargeScaleProfile, k: int, options: DEOptions = DEOptions(),
                   diagnostics: Diagnostics | None = None) -> SinrBreakdown:
    return assemble(prof, resolve(prof, k, options), diagnostics)


def det_equiv_all(prof: LargeScaleProfile, options: DEOptions = DEOptions(),
                  diagnostics: Diagnostics | None = None) -> SinrBreakdown:
    parts = [det_equiv_sinr(prof, k, options, diagnostics) for k in range(prof.K)]
    return SinrBreakdown(*(np.array([getattr(p, f) for p in parts])
                           for f in ("eta_s", "eta_1", "eta_2", "eta_3", "eta_w")))


def mmse_self_term(prof: LargeScaleProfile, options: DEOptions = DEOptions()) -> np.ndarray:
    """Large-system value of g_k^H (R minus UE k)^{-1} g_k for every UE.

    For MMSE combining this equals the SINR, which gives an independent check
    on the five-term assembly.
    """
    W = prof.zeta * prof.energy
    mask = np.eye(prof.K, dtype=bool)
    e, *_ = _fixed_point_batch(W, prof.psi, prof.N, mask, 1.0 / prof.noise_power,
                               options.tol, options.max_iter, "mmse_self_term")
    return np.diag(e).copy()
