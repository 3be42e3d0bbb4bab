"""Least-squares fitting of sync and power constants to observed cluster metrics.

Parameters are addressed by dotted names (``sync.per_param_overhead``,
``energy.csd_active_watts``).  The fit is bounded coordinate descent: each
sweep visits the free parameters in a seed-determined order and minimises the
sum of squared relative residuals along that coordinate.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import UnderdeterminedError, ValidationError
from .profiles import NetworkDescriptor
from .simengine import EnergyModelParams, EpochReport, Pipeline, SyncModel

METRICS = {
    "img_per_sec": lambda r: r.images_per_second_aggregate,
    "speedup": lambda r: r.speedup_vs_host,
    "j_per_img": lambda r: r.energy_per_image_joules,
    "saving": lambda r: r.energy_saving_vs_baseline,
    "flops_per_watt": lambda r: r.flops_per_watt,
}

DEFAULT_BOUNDS = {
    "sync.alpha_sec": (0.0, 5.0),
    "sync.per_param_overhead": (1.0, 100.0),
    "sync.effective_bandwidth_bytes_per_sec": (1e6, 1e11),
    "energy.host_active_watts": (0.0, 1000.0),
    "energy.csd_active_watts": (0.0, 50.0),
    "energy.csd_idle_watts": (0.0, 50.0),
    "energy.chassis_overhead_watts": (0.0, 1000.0),
    "energy.baseline_ssd_idle_watts": (0.0, 50.0),
}


@dataclass(frozen=True)
class Target:
    network: str
    n_csds: int
    metric: str
    observed: float

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ValidationError(f"unknown metric {self.metric!r}; choose from {sorted(METRICS)}")
        if self.observed == 0:
            raise ValidationError("observed value 0 has no relative residual")


@dataclass
class CalibrationResult:
    sync: SyncModel
    energy: EnergyModelParams
    params: dict[str, float]
    residuals: list[dict]
    max_abs_residual: float
    flagged: bool
    ceiling: float
    seed: int
    sweeps: int

    def to_json(self) -> dict:
        return {
            "sync": self.sync.to_json(),
            "energy": self.energy.to_json(),
            "fitted": dict(sorted(self.params.items())),
            "residuals": self.residuals,
            "max_abs_relative_residual": self.max_abs_residual,
            "flagged": self.flagged,
            "residual_ceiling": self.ceiling,
            "seed": self.seed,
            "sweeps": self.sweeps,
        }


def get_param(sync: SyncModel, energy: EnergyModelParams, name: str) -> float:
    group, _, key = name.partition(".")
    obj = {"sync": sync, "energy": energy}.get(group)
    if obj is None or key not in {f.name for f in fields(obj)}:
        raise ValidationError(f"unknown parameter {name!r}")
    return float(getattr(obj, key))


def set_params(sync: SyncModel, energy: EnergyModelParams, values: dict[str, float]):
    s_upd, e_upd = {}, {}
    for name, v in values.items():
        get_param(sync, energy, name)
        group, _, key = name.partition(".")
        (s_upd if group == "sync" else e_upd)[key] = v
    return replace(sync, **s_upd), replace(energy, **e_upd)


def calibrate(
    pipeline: Pipeline,
    networks: dict[str, NetworkDescriptor],
    targets: list[Target],
    free_params: dict[str, tuple[float, float]] | list[str],
    sync: SyncModel,
    energy: EnergyModelParams,
    seed: int = 0,
    sweeps: int = 30,
    ceiling: float = 0.05,
    tol: float = 1e-12,
) -> CalibrationResult:
    if isinstance(free_params, (list, tuple)):
        free_params = {name: DEFAULT_BOUNDS.get(name, (0.0, 1e6)) for name in free_params}
    names = sorted(free_params)
    for n in names:
        get_param(sync, energy, n)
    if len(targets) < len(names):
        raise UnderdeterminedError(
            f"{len(targets)} targets cannot determine {len(names)} free parameters"
        )
    for t in targets:
        if t.network not in networks:
            raise ValidationError(f"target names unknown network {t.network!r}")

    def predict(values: dict[str, float]) -> list[float]:
        s, e = set_params(sync, energy, values)
        cache: dict[tuple[str, int], EpochReport] = {}
        out = []
        for t in targets:
            key = (t.network, t.n_csds)
            if key not in cache:
                cache[key] = pipeline.run(networks[t.network], t.n_csds, s, e)
            out.append(METRICS[t.metric](cache[key]))
        return out

    def loss(values: dict[str, float]) -> float:
        pred = predict(values)
        return float(sum(((p - t.observed) / t.observed) ** 2 for p, t in zip(pred, targets)))

    current = {n: min(max(get_param(sync, energy, n), free_params[n][0]), free_params[n][1]) for n in names}
    rng = np.random.default_rng(seed)
    best = loss(current)
    done = 0
    for done in range(1, sweeps + 1 if names else 1):
        before = best
        for i in rng.permutation(len(names)):
            name = names[i]
            lo, hi = free_params[name]

            def along(x, name=name):
                return loss({**current, name: float(x)})

            res = minimize_scalar(along, bounds=(lo, hi), method="bounded", options={"xatol": 1e-10 * max(1.0, hi - lo)})
            if res.fun < best:
                current[name] = float(res.x)
                best = float(res.fun)
        if before - best <= tol * max(1.0, before):
            break

    pred = predict(current)
    residuals = [
        {
            "network": t.network,
            "n_csds": t.n_csds,
            "metric": t.metric,
            "observed": t.observed,
            "predicted": p,
            "relative_residual": (p - t.observed) / t.observed,
        }
        for t, p in zip(targets, pred)
    ]
    worst = max((abs(r["relative_residual"]) for r in residuals), default=0.0)
    s, e = set_params(sync, energy, current)
    return CalibrationResult(s, e, current, residuals, worst, worst > ceiling, ceiling, seed, done)


def split_targets(spec: dict) -> tuple[list[Target], list[Target]]:
    """Split a target file into (speedup targets, energy-per-image targets)."""
    net = spec["network"]
    speed = [Target(net, int(n), "speedup", float(v)) for n, v in spec.get("speedup", {}).items()]
    energy = [Target(net, int(n), "j_per_img", float(v)) for n, v in spec.get("energy_per_image", {}).items()]
    return speed, energy


def calibrate_default(
    pipeline: Pipeline,
    networks: dict[str, NetworkDescriptor],
    spec: dict,
    sync: SyncModel,
    energy: EnergyModelParams,
    seed: int = 0,
) -> tuple[CalibrationResult, CalibrationResult]:
    """Two-stage fit: sync overhead to the speedup anchor, then power to J/image."""
    speed_targets, energy_targets = split_targets(spec)
    sync_fit = calibrate(
        pipeline, networks, speed_targets, spec.get("sync_free", ["sync.per_param_overhead"]),
        sync, energy, seed=seed, ceiling=float(spec.get("speedup_ceiling", 0.05)),
    )
    energy_fit = calibrate(
        pipeline, networks, energy_targets,
        spec.get("energy_free", ["energy.csd_active_watts", "energy.host_active_watts", "energy.chassis_overhead_watts"]),
        sync_fit.sync, sync_fit.energy, seed=seed, ceiling=float(spec.get("energy_ceiling", 0.05)),
    )
    return sync_fit, energy_fit


def save_calibration(path, sync_fit: CalibrationResult, energy_fit: CalibrationResult, extra: dict | None = None) -> None:
    payload = {
        "sync": energy_fit.sync.to_json(),
        "energy": energy_fit.energy.to_json(),
        "stages": {"sync": sync_fit.to_json(), "energy": energy_fit.to_json()},
    }
    if extra:
        payload.update(extra)
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_calibration(path) -> tuple[SyncModel, EnergyModelParams]:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
        return SyncModel(**obj["sync"]), EnergyModelParams(**obj["energy"])
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise ValidationError(f"malformed calibration file {path}: {exc}") from None
