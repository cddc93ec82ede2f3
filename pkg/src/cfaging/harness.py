"""Experiment orchestration, config files and CSV/JSON emission."""
from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from .baselines import run_cellular_mc, run_smallcell_mc
from .channel import estimation_coefficients
from .detequiv import DEOptions, Diagnostics, build_profile, det_equiv_all
from .results import ExperimentResult, to_db
from .scenario import (ConfigError, CorrelationProfile, ScenarioConfig, desk_config, drop_uniform,
                       paper_config)
from .uplink import default_probe_times, drop_stream, map_drops, run_monte_carlo

SYSTEMS = ("mc", "detequiv", "cellular", "smallcell")
REQUIRED_KEYS = ("pathloss",)

# (drops, trials) per scale; "paper" is the full 100 x 100 protocol
AVERAGING = {"desk": (10, 20), "paper": (100, 100)}
FIG1_SPEEDS_KMH = (30.0, 100.0, 300.0)
FIG2_DELTAS = (0.0, 0.25, 0.5)
FIG2_AP_COUNTS = {"desk": (16, 32, 64), "paper": (64, 128, 256)}
FIG3_SPEEDS_KMH = tuple(float(v) for v in range(0, 501, 50))
FIG3_DELTAS = (0.0, 0.25, 0.5)


class HarnessError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


# configuration -----------------------------------------------------------

def load_config(path) -> ScenarioConfig:
    """Read a JSON scenario file; every key must be a :class:`ScenarioConfig` field."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError("path", f"{path} does not exist") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("file", f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ConfigError("file", "top level must be an object")
    for key in REQUIRED_KEYS:
        if key not in data:
            raise ConfigError(key, "required key is missing")
    try:
        return ScenarioConfig.from_dict(data)
    except TypeError as exc:
        raise ConfigError("file", str(exc)) from exc


def save_config(cfg: ScenarioConfig, path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2) + "\n", encoding="utf-8")


def preset(scale: str) -> ScenarioConfig:
    if scale == "desk":
        return desk_config()
    if scale == "paper":
        return paper_config()
    raise HarnessError("config", f"unknown scale {scale!r}")


# engines -----------------------------------------------------------------

def _de_drop(cfg: ScenarioConfig, drop: int, probe_times, seed: int, options: DEOptions):
    dep = drop_uniform(cfg, drop_stream(seed, drop))
    prof = CorrelationProfile.from_deployment(cfg, dep)
    a = estimation_coefficients(cfg, dep, prof)
    diag = Diagnostics()
    out = np.stack([det_equiv_all(build_profile(dep, a, prof, cfg, n), options, diag).sinr
                    for n in probe_times])
    return out, diag.clamped


def run_detequiv(cfg: ScenarioConfig, drops: int, probe_times=None, seed: int = 0, threads: int = 1,
                 options: DEOptions = DEOptions()) -> ExperimentResult:
    """Large-system SINR on the same drops that :func:`run_monte_carlo` uses."""
    probe_times = list(probe_times) if probe_times is not None else default_probe_times(cfg)
    start = time.perf_counter()
    parts = map_drops(lambda d: _de_drop(cfg, d, probe_times, seed, options), drops, threads)
    per_drop = np.stack([p[0] for p in parts])
    return ExperimentResult(
        engine="detequiv", axis_name="time_index", axis=probe_times, sinr=per_drop.mean(axis=0),
        per_drop=per_drop,
        metadata={"engine": "detequiv", "config": cfg.to_dict(), "seed": int(seed), "drops": int(drops),
                  "trials": 0, "probe_times": [int(t) for t in probe_times],
                  "de_options": asdict(options), "clamped_terms": int(sum(p[1] for p in parts)),
                  "runtime_s": time.perf_counter() - start})


def run_system(system: str, cfg: ScenarioConfig, drops: int, trials: int, probe_times=None, seed: int = 0,
               threads: int = 1, options: DEOptions = DEOptions()) -> ExperimentResult:
    if system == "mc":
        return run_monte_carlo(cfg, drops, trials, probe_times, seed, threads)
    if system == "detequiv":
        return run_detequiv(cfg, drops, probe_times, seed, threads, options)
    if system == "cellular":
        return run_cellular_mc(cfg, drops, trials, probe_times, seed, threads)
    if system == "smallcell":
        return run_smallcell_mc(cfg, drops, trials, probe_times, seed, threads)
    raise HarnessError("system", f"unknown system {system!r}; choose from {SYSTEMS}")


def run_velocity_sweep(system: str, cfg: ScenarioConfig, speeds_kmh, drops: int, trials: int,
                       time_index: int | None = None, seed: int = 0, threads: int = 1,
                       options: DEOptions = DEOptions()) -> ExperimentResult:
    """SINR at one time index (default T) as a function of mean UE speed."""
    n = int(time_index or cfg.frame_len)
    rows, per_drop = [], []
    start = time.perf_counter()
    for v in speeds_kmh:
        res = run_system(system, cfg.with_speed_kmh(v), drops, trials, [n], seed, threads, options)
        rows.append(res.sinr[0])
        per_drop.append(res.per_drop[:, 0])
    meta = {"engine": system, "config": cfg.to_dict(), "seed": int(seed), "drops": int(drops),
            "trials": int(trials) if system != "detequiv" else 0, "time_index": n,
            "velocities_kmh": [float(v) for v in speeds_kmh],
            "runtime_s": time.perf_counter() - start}
    if system == "detequiv":
        meta["de_options"] = asdict(options)
    return ExperimentResult(system, "velocity_kmh", [float(v) for v in speeds_kmh], np.stack(rows), meta,
                            np.stack(per_drop, axis=1))


def rerun(metadata: dict, threads: int = 1) -> ExperimentResult:
    """Regenerate a result from its sidecar metadata."""
    cfg = ScenarioConfig.from_dict(metadata["config"])
    options = DEOptions(**metadata.get("de_options", {}))
    system = metadata["engine"]
    if "velocities_kmh" in metadata:
        return run_velocity_sweep(system, cfg, metadata["velocities_kmh"], metadata["drops"],
                                  metadata["trials"], metadata["time_index"], metadata["seed"], threads, options)
    if system in ("cellular", "smallcell"):
        cfg = ScenarioConfig.from_dict(metadata["base_config"])
    return run_system(system, cfg, metadata["drops"], metadata["trials"], metadata["probe_times"],
                      metadata["seed"], threads, options)


# experiments ---------------------------------------------------------------

def _averaging(scale: str, drops: int | None, trials: int | None):
    d, t = AVERAGING[scale]
    return drops or d, trials or t


def _tag(x: float) -> str:
    return f"{x:g}".replace(".", "p")


def experiment_fig1(cfg: ScenarioConfig | None = None, scale: str = "desk", seed: int = 0, threads: int = 1,
                    speeds_kmh=FIG1_SPEEDS_KMH, drops=None, trials=None, probe_times=None) -> dict:
    """SINR vs time for several speeds: CF (MC and large-system), cellular, small cells; delta = 0."""
    cfg = replace(cfg or preset(scale), delta=0.0)
    drops, trials = _averaging(scale, drops, trials)
    bundle = {}
    for v in speeds_kmh:
        c = cfg.with_speed_kmh(v)
        for system in SYSTEMS:
            res = run_system(system, c, drops, trials, probe_times, seed, threads)
            res.metadata.update(experiment="fig1", speed_kmh=float(v))
            bundle[f"fig1_{system}_v{_tag(v)}"] = res
    return bundle


def experiment_fig2(cfg: ScenarioConfig | None = None, scale: str = "desk", seed: int = 0, threads: int = 1,
                    speed_kmh: float = 300.0, deltas=FIG2_DELTAS, ap_counts=None, systems=("detequiv", "mc"),
                    drops=None, trials=None, probe_times=None) -> dict:
    """CF SINR vs time at a fixed mean speed for several speed spreads and AP counts."""
    cfg = (cfg or preset(scale)).with_speed_kmh(speed_kmh)
    drops, trials = _averaging(scale, drops, trials)
    ap_counts = ap_counts or FIG2_AP_COUNTS.get(scale, (cfg.M,))
    bundle = {}
    for M in ap_counts:
        for d in deltas:
            c = replace(cfg, M=int(M), delta=float(d))
            for system in systems:
                res = run_system(system, c, drops, trials, probe_times, seed, threads)
                res.metadata.update(experiment="fig2", delta=float(d), M=int(M))
                bundle[f"fig2_{system}_M{M}_delta{_tag(d)}"] = res
    return bundle


def experiment_fig3(cfg: ScenarioConfig | None = None, scale: str = "desk", seed: int = 0, threads: int = 1,
                    speeds_kmh=FIG3_SPEEDS_KMH, deltas=FIG3_DELTAS, drops=None, trials=None,
                    cf_engine: str = "detequiv") -> dict:
    """SINR at n = T vs mean speed: CF for several spreads, cellular and small cells."""
    cfg = cfg or preset(scale)
    drops, trials = _averaging(scale, drops, trials)
    bundle = {}
    for d in deltas:
        res = run_velocity_sweep(cf_engine, replace(cfg, delta=float(d)), speeds_kmh, drops, trials,
                                 seed=seed, threads=threads)
        res.metadata.update(experiment="fig3", delta=float(d))
        bundle[f"fig3_{cf_engine}_delta{_tag(d)}"] = res
    for system in ("cellular", "smallcell"):
        res = run_velocity_sweep(system, replace(cfg, delta=0.0), speeds_kmh, drops, trials,
                                 seed=seed, threads=threads)
        res.metadata.update(experiment="fig3")
        bundle[f"fig3_{system}"] = res
    return bundle


EXPERIMENTS = {"fig1": experiment_fig1, "fig2": experiment_fig2, "fig3": experiment_fig3}


def compare(mc: ExperimentResult, de: ExperimentResult, tolerance_db: float = 0.5) -> dict:
    """Per-axis-point dB gap between the two engines' UE-averaged SINR."""
    gap = de.mean_sinr_db - mc.mean_sinr_db
    return {"axis": list(mc.axis), "mc_db": mc.mean_sinr_db.tolist(), "de_db": de.mean_sinr_db.tolist(),
            "gap_db": gap.tolist(), "max_abs_gap_db": float(np.max(np.abs(gap))),
            "tolerance_db": tolerance_db, "ok": bool(np.all(np.abs(gap) <= tolerance_db))}


# emission ------------------------------------------------------------------

def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def csv_text(result: ExperimentResult) -> str:
    K = result.sinr.shape[1]
    header = [result.axis_name] + [f"ue{k}_sinr_db" for k in range(K)] + ["mean_sinr_db"]
    lines = [",".join(header)]
    sinr_db, mean_db = result.sinr_db, result.mean_sinr_db
    for i, x in enumerate(result.axis):
        axis = str(int(x)) if result.axis_name == "time_index" else _fmt(x)
        lines.append(",".join([axis] + [_fmt(v) for v in sinr_db[i]] + [_fmt(mean_db[i])]))
    return "\n".join(lines) + "\n"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and math.isinf(obj):
        return "inf" if obj > 0 else "-inf"
    return obj


def emit(bundle: dict, out_dir) -> list[Path]:
    """Write ``<name>.csv`` and ``<name>.json`` for every result in the bundle."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise HarnessError("emit", f"cannot create {out_dir}: {exc}") from exc
    written = []
    for name in sorted(bundle):
        res = bundle[name]
        csv_path = out_dir / f"{name}.csv"
        meta_path = out_dir / f"{name}.json"
        meta = dict(res.metadata)
        meta.update(name=name, csv=csv_path.name, axis_name=res.axis_name, flagged_points=res.flagged)
        try:
            with open(csv_path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(csv_text(res))
            with open(meta_path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(json.dumps(_jsonable(meta), indent=2, sort_keys=True) + "\n")
        except OSError as exc:
            raise HarnessError("emit", f"cannot write {csv_path}: {exc}") from exc
        written += [csv_path, meta_path]
    return written


def summary_lines(bundle: dict) -> list[str]:
    lines = []
    for name in sorted(bundle):
        res = bundle[name]
        pts = ", ".join(f"{x:g}:{v:.2f}" for x, v in zip(res.axis, to_db(res.mean_sinr)))
        lines.append(f"{name:<40s} {pts}")
    return lines
