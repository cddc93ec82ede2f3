"""Deployment geometry, multi-slope path loss and per-link Doppler correlation."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .numerics import RngStream, bessel_j0

SPEED_OF_LIGHT = 299_792_458.0
KMH = 1.0 / 3.6


class ConfigError(ValueError):
    """Invalid scenario configuration; ``key`` names the offending field."""

    def __init__(self, key: str, constraint: str):
        super().__init__(f"{key}: {constraint}")
        self.key = key
        self.constraint = constraint


@dataclass(frozen=True)
class PathLossSlope:
    threshold: float  # upper edge of the bracket (last one is inf)
    exponent: float
    normalizer: float | None = None  # None => chained for continuity


def _per_ue(value, K: int, key: str) -> tuple[float, ...]:
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.size == 1:
        arr = np.full(K, float(arr[0]))
    if arr.shape != (K,):
        raise ConfigError(key, f"expected a scalar or {K} values, got {arr.size}")
    return tuple(float(v) for v in arr)


@dataclass(frozen=True)
class ScenarioConfig:
    M: int = 256
    N: int = 1
    K: int = 16
    area_side: float = 1.0
    unit_to_meters: float = 1000.0
    carrier_hz: float = 5e9
    bandwidth_hz: float = 5e6
    frame_len: int = 1024
    pilot_len: int = 16
    pilot_energy: tuple[float, ...] | float = 100.0
    data_energy: tuple[float, ...] | float = 100.0
    noise_power: float = 1.0
    mean_speeds: tuple[float, ...] | float = 0.0  # m/s
    delta: float = 0.0
    pathloss: tuple[PathLossSlope, ...] = (
        PathLossSlope(0.1, 0.0, 1.0),
        PathLossSlope(math.inf, 3.0),
    )
    pilot_slots: tuple[int, ...] | None = None  # 1-based slot per UE

    def __post_init__(self):
        K = int(self.K)
        if K < 1:
            raise ConfigError("K", "must be >= 1")
        object.__setattr__(self, "pilot_energy", _per_ue(self.pilot_energy, K, "pilot_energy"))
        object.__setattr__(self, "data_energy", _per_ue(self.data_energy, K, "data_energy"))
        object.__setattr__(self, "mean_speeds", _per_ue(self.mean_speeds, K, "mean_speeds"))
        slopes = tuple(s if isinstance(s, PathLossSlope) else PathLossSlope(**s) for s in self.pathloss)
        object.__setattr__(self, "pathloss", slopes)
        if self.pilot_slots is None:
            object.__setattr__(self, "pilot_slots", tuple(range(1, K + 1)))
        else:
            object.__setattr__(self, "pilot_slots", tuple(int(p) for p in self.pilot_slots))
        self.validate()

    def validate(self) -> None:
        for key in ("M", "N", "K", "frame_len", "pilot_len"):
            if int(getattr(self, key)) < 1:
                raise ConfigError(key, "must be a positive integer")
        for key in ("area_side", "unit_to_meters", "carrier_hz", "bandwidth_hz", "noise_power"):
            v = getattr(self, key)
            if not (math.isfinite(v) and v > 0):
                raise ConfigError(key, "must be finite and > 0")
        if not 0.0 <= self.delta <= 1.0:
            raise ConfigError("delta", "must lie in [0, 1]")
        if self.pilot_len >= self.frame_len:
            raise ConfigError("pilot_len", "must be < frame_len")
        if min(self.pilot_energy) < 0 or min(self.data_energy) < 0:
            raise ConfigError("pilot_energy/data_energy", "must be >= 0")
        if min(self.mean_speeds) < 0:
            raise ConfigError("mean_speeds", "must be >= 0")
        if len(self.pilot_slots) != self.K:
            raise ConfigError("pilot_slots", f"need one slot per UE ({self.K})")
        if any(p < 1 or p > self.pilot_len for p in self.pilot_slots):
            raise ConfigError("pilot_slots", f"slots must lie in [1, {self.pilot_len}]")
        if not self.pathloss:
            raise ConfigError("pathloss", "slope table is empty")
        th = [s.threshold for s in self.pathloss]
        if any(b <= a for a, b in zip(th, th[1:])):
            raise ConfigError("pathloss", "thresholds must be strictly increasing")
        if th[-1] != math.inf:
            raise ConfigError("pathloss", "last threshold must be inf")
        if self.pathloss[0].normalizer is None or self.pathloss[0].normalizer <= 0:
            raise ConfigError("pathloss", "first slope needs a positive normalizer")

    # derived quantities -------------------------------------------------
    @property
    def sample_interval(self) -> float:
        return 1.0 / self.bandwidth_hz

    def pilot_sets(self) -> dict[int, list[int]]:
        """Slot p -> 0-based UEs transmitting in it."""
        sets: dict[int, list[int]] = {p: [] for p in range(1, self.pilot_len + 1)}
        for k, p in enumerate(self.pilot_slots):
            sets[p].append(k)
        return sets

    def normalizers(self) -> np.ndarray:
        mus = [float(self.pathloss[0].normalizer)]
        for prev, cur in zip(self.pathloss, self.pathloss[1:]):
            if cur.normalizer is not None:
                mus.append(float(cur.normalizer))
            else:
                mus.append(mus[-1] * prev.threshold ** (cur.exponent - prev.exponent))
        return np.array(mus)

    def with_speed_kmh(self, v_kmh) -> "ScenarioConfig":
        return replace(self, mean_speeds=np.asarray(v_kmh, dtype=float) * KMH)

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "pathloss":
                v = [
                    {"threshold": "inf" if s.threshold == math.inf else s.threshold,
                     "exponent": s.exponent, "normalizer": s.normalizer}
                    for s in v
                ]
            elif isinstance(v, tuple):
                v = list(v)
            out[f.name] = v
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(unknown[0], "unknown key")
        data = dict(data)
        if "pathloss" in data:
            if not isinstance(data["pathloss"], (list, tuple)):
                raise ConfigError("pathloss", "must be a list of slopes")
            slopes = []
            for s in data["pathloss"]:
                s = dict(s)
                if "threshold" not in s or "exponent" not in s:
                    raise ConfigError("pathloss", "each slope needs threshold and exponent")
                s["threshold"] = float(s["threshold"])
                slopes.append(PathLossSlope(**s))
            data["pathloss"] = tuple(slopes)
        return cls(**data)


def paper_config(**overrides) -> ScenarioConfig:
    """Full-size setting: 256 single-antenna APs, 16 UEs, T=1024, 20 dB SNR."""
    return replace(ScenarioConfig(), **overrides) if overrides else ScenarioConfig()


def desk_config(**overrides) -> ScenarioConfig:
    """Reduced setting that keeps M*N >> K: 32 APs, 8 UEs, T=256."""
    base = dict(M=32, N=1, K=8, frame_len=256, pilot_len=8)
    base.update(overrides)
    return ScenarioConfig(**base)


def path_loss(cfg: ScenarioConfig, distance):
    """Multi-slope large-scale gain mu_l * d**(-eta_l).

    A distance exactly on a threshold belongs to the next (farther) bracket.
    """
    d = np.asarray(distance, dtype=float)
    if np.any(d < 0):
        raise ValueError("path_loss: distance must be >= 0")
    th = np.array([s.threshold for s in cfg.pathloss])
    ex = np.array([s.exponent for s in cfg.pathloss])
    idx = np.searchsorted(th, d, side="right")
    idx = np.minimum(idx, len(th) - 1)
    with np.errstate(divide="ignore"):
        out = cfg.normalizers()[idx] * d ** (-ex[idx])
    return float(out) if np.ndim(distance) == 0 else out


@dataclass(frozen=True)
class Deployment:
    ap_pos: np.ndarray  # (M,) complex
    ue_pos: np.ndarray  # (K,) complex
    beta: np.ndarray  # (M, K)
    v_rel: np.ndarray  # (M, K) m/s

    @property
    def M(self) -> int:
        return self.beta.shape[0]

    @property
    def K(self) -> int:
        return self.beta.shape[1]


def make_deployment(cfg: ScenarioConfig, ap_pos, ue_pos, v_rel=None) -> Deployment:
    ap_pos = np.asarray(ap_pos, dtype=complex).reshape(-1)
    ue_pos = np.asarray(ue_pos, dtype=complex).reshape(-1)
    beta = path_loss(cfg, np.abs(ap_pos[:, None] - ue_pos[None, :]))
    if v_rel is None:
        v_rel = np.broadcast_to(np.asarray(cfg.mean_speeds), beta.shape).copy()
    return Deployment(ap_pos, ue_pos, np.asarray(beta, dtype=float), np.asarray(v_rel, dtype=float))


def _uniform_points(gen: np.random.Generator, n: int, side: float) -> np.ndarray:
    xy = gen.uniform(0.0, side, size=(n, 2))
    return xy[:, 0] + 1j * xy[:, 1]


def drop_uniform(cfg: ScenarioConfig, rng: RngStream) -> Deployment:
    """Uniform AP/UE drop over the square.

    Draw order is fixed (UEs, then APs, then per-link speeds) so that other
    architectures sharing the stream see the same UE positions.
    """
    gen = rng.generator()
    ue = _uniform_points(gen, cfg.K, cfg.area_side)
    ap = _uniform_points(gen, cfg.M, cfg.area_side)
    v = np.asarray(cfg.mean_speeds)
    lo, hi = (1.0 - cfg.delta) * v, (1.0 + cfg.delta) * v
    v_rel = gen.uniform(0.0, 1.0, size=(cfg.M, cfg.K)) * (hi - lo) + lo
    return make_deployment(cfg, ap, ue, v_rel)


def doppler_hz(cfg: ScenarioConfig, speed):
    return np.asarray(speed, dtype=float) * cfg.carrier_hz / SPEED_OF_LIGHT


def correlation(cfg: ScenarioConfig, dep: Deployment, m: int, k: int, tau: int) -> float:
    """Jakes correlation rho_mk[tau] = J0(2 pi f_d T_s |tau|)."""
    fd = doppler_hz(cfg, dep.v_rel[m, k])
    return bessel_j0(2.0 * math.pi * float(fd) * cfg.sample_interval * abs(int(tau)))


@dataclass(frozen=True)
class CorrelationProfile:
    """Lag -> (M, K) correlation matrices for one deployment."""

    doppler: np.ndarray  # (M, K) Hz
    sample_interval: float
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    @classmethod
    def from_deployment(cls, cfg: ScenarioConfig, dep: Deployment) -> "CorrelationProfile":
        return cls(doppler_hz(cfg, dep.v_rel), cfg.sample_interval)

    def rho(self, tau: int) -> np.ndarray:
        tau = abs(int(tau))
        if tau not in self._cache:
            self._cache[tau] = bessel_j0(2.0 * math.pi * self.doppler * self.sample_interval * tau)
        return self._cache[tau]

    def rho_bar(self, tau: int) -> np.ndarray:
        return np.sqrt(np.clip(1.0 - self.rho(tau) ** 2, 0.0, None))
