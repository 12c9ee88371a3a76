"""Strict JSON run configuration.

Every run is described by one JSON object.  Unknown keys are rejected,
defaults are filled in, and every validation error names the offending
field path (``schedule.beta``, ``kernel.rho`` ...).
"""

from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field
from typing import Any

from .core import SALabError

EXPERIMENTS = ("quantile", "median", "kohonen", "sace")


class ConfigError(SALabError, ValueError):
    def __init__(self, message: str, path: str = ""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


class ParseError(ConfigError):
    pass


class ValidationError(ConfigError):
    pass


class UnknownField(ConfigError):
    pass


@dataclass(frozen=True)
class ScheduleConfig:
    gamma0: float = 1.0
    beta: float = 0.6


@dataclass(frozen=True)
class RunConfig:
    experiment: str
    seed: int
    budget: int = 200_000
    thin: int = 1
    out_dir: str = "out"
    max_truncations: int = 10_000
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    family: dict = field(default_factory=dict)
    kernel: dict = field(default_factory=dict)
    anchor: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        """Flat JSON form; feeding it back to `parse_config` gives an equal config."""
        d = asdict(self)
        params = d.pop("params")
        d.update(params)
        return d

    def with_overrides(self, **kw) -> "RunConfig":
        d = self.to_dict()
        d.update({k: v for k, v in kw.items() if v is not None})
        return parse_dict(d)


_COMMON = {"experiment", "seed", "budget", "thin", "out_dir", "max_truncations", "schedule", "family", "kernel", "anchor"}

# per experiment: parameter defaults, family defaults, kernel defaults, anchor keys
_PARAMS: dict[str, dict[str, Any]] = {
    "quantile": {"q": None, "phi": "identity"},
    "median": {},
    "kohonen": {"N": 2, "lam": 1e-4, "delta": 1.0},
    "sace": {
        "q": 0.99,
        "network": {"weights": [1.0, 2.0, 3.0, 1.0, 2.0], "paths": [[0, 3], [1, 4], [0, 2, 4], [1, 2, 3]]},
        "weight_cap": 1e12,
        "estimator": "above",
        "pilot_theta": 1000,
        "pilot_sigma": 100,
    },
}

_FAMILY: dict[str, dict[str, Any]] = {
    "quantile": {"radius0": 2.0, "growth": 2.0},
    "median": {"radius0": 4.0, "growth": 2.0},
    "kohonen": {"q0": None},
    "sace": {"theta_max0": None, "s_max0": None, "growth": 2.0},
}

_ANCHOR: dict[str, dict[str, Any]] = {
    "quantile": {"theta": 0.0, "x": 0.0},
    "median": {"theta": None, "x": None},
    "kohonen": {"theta": None, "x": None},
    "sace": {"theta": None, "sigma": None},
}

_KERNELS: dict[str, dict[str, Any]] = {
    "iid": {"type": "iid", "dist": None},
    "ar1": {"type": "ar1", "rho": 0.5, "sigma": 1.0},
    "rwm_reflected": {"type": "rwm_reflected", "scale": 0.2, "dist": None},
    "gibbs": {"type": "gibbs"},
}

_KERNEL_DEFAULT = {
    "quantile": {"type": "iid", "dist": {"name": "normal", "mean": 0.0, "sd": 1.0}},
    "median": {"type": "iid", "dist": {"name": "gaussian_mixture", "means": [[2.0, 0.0], [-2.0, 0.0]], "sd": 1.0}},
    "kohonen": {"type": "iid", "dist": {"name": "uniform_box", "low": [0.0], "high": [1.0]}},
    "sace": {"type": "gibbs"},
}

_ALLOWED_KERNELS = {
    "quantile": {"iid", "ar1"},
    "median": {"iid", "ar1"},
    "kohonen": {"iid", "rwm_reflected"},
    "sace": {"gibbs"},
}

_DISTS = {
    "normal": {"mean": 0.0, "sd": 1.0, "dim": 0},
    "gaussian_mixture": {"means": None, "sd": 1.0, "weights": None},
    "uniform_box": {"low": None, "high": None},
    "uniform_ball": {"radius": 1.0, "dim": None},
    "point": {"value": None},
}

PHIS = ("identity", "abs", "sum", "norm")


def _merge(defaults: dict, given: Any, path: str) -> dict:
    if given is None:
        given = {}
    if not isinstance(given, dict):
        raise ValidationError("expected an object", path)
    for k in given:
        if k not in defaults:
            raise UnknownField(f"unknown field {k!r}", f"{path}.{k}" if path else k)
    out = copy.deepcopy(defaults)
    out.update(copy.deepcopy(given))
    return out


def _num(v, path: str, *, lo=None, hi=None, lo_open=False, hi_open=False, integer=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValidationError(f"expected a number, got {v!r}", path)
    if integer and int(v) != v:
        raise ValidationError(f"expected an integer, got {v!r}", path)
    if lo is not None and (v <= lo if lo_open else v < lo):
        raise ValidationError(f"must be {'>' if lo_open else '>='} {lo}, got {v}", path)
    if hi is not None and (v >= hi if hi_open else v > hi):
        raise ValidationError(f"must be {'<' if hi_open else '<='} {hi}, got {v}", path)
    return int(v) if integer else float(v)


def _dist(d: Any, path: str) -> dict:
    if not isinstance(d, dict) or "name" not in d:
        raise ValidationError("distribution needs a 'name'", path)
    name = d["name"]
    if name not in _DISTS:
        raise ValidationError(f"unknown distribution {name!r}", f"{path}.name")
    out = _merge({"name": name, **_DISTS[name]}, d, path)
    for k, v in out.items():
        if v is None and k not in ("weights",):
            raise ValidationError("required", f"{path}.{k}")
    if name == "normal":
        _num(out["sd"], f"{path}.sd", lo=0, lo_open=True)
        _num(out["dim"], f"{path}.dim", lo=0, integer=True)
    if name == "gaussian_mixture":
        _num(out["sd"], f"{path}.sd", lo=0, lo_open=True)
        dims = {len(m) for m in out["means"]}
        if len(dims) != 1:
            raise ValidationError("component means must share one dimension", f"{path}.means")
    if name == "uniform_box" and len(out["low"]) != len(out["high"]):
        raise ValidationError("low and high differ in length", f"{path}.high")
    if name == "uniform_ball":
        _num(out["radius"], f"{path}.radius", lo=0, lo_open=True)
        _num(out["dim"], f"{path}.dim", lo=1, integer=True)
    return out


def dist_dim(d: dict) -> int:
    name = d["name"]
    if name == "normal":
        return max(1, int(d["dim"]))
    if name == "gaussian_mixture":
        return len(d["means"][0])
    if name == "uniform_box":
        return len(d["low"])
    if name == "uniform_ball":
        return int(d["dim"])
    v = d["value"]
    return 1 if isinstance(v, (int, float)) else len(v)


def parse_config(text: str | bytes) -> RunConfig:
    """Parse and validate a JSON run configuration."""
    try:
        raw = json.loads(text)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ParseError(f"malformed JSON: {exc}") from exc
    return parse_dict(raw)


def parse_dict(raw: Any) -> RunConfig:
    if not isinstance(raw, dict):
        raise ValidationError("top level must be a JSON object")
    exp = raw.get("experiment")
    if exp not in EXPERIMENTS:
        raise ValidationError(f"must be one of {EXPERIMENTS}, got {exp!r}", "experiment")
    allowed = _COMMON | set(_PARAMS[exp])
    for k in raw:
        if k not in allowed:
            raise UnknownField(f"unknown field {k!r} for experiment {exp!r}", k)
    if "seed" not in raw:
        raise ValidationError("required", "seed")
    seed = _num(raw["seed"], "seed", lo=0, hi=2**64 - 1, integer=True)
    budget = _num(raw.get("budget", 200_000), "budget", lo=1, integer=True)
    thin = _num(raw.get("thin", 1), "thin", lo=1, integer=True)
    max_trunc = _num(raw.get("max_truncations", 10_000), "max_truncations", lo=0, integer=True)
    out_dir = raw.get("out_dir", "out")
    if not isinstance(out_dir, str) or not out_dir:
        raise ValidationError("expected a nonempty path string", "out_dir")

    sched = _merge(asdict(ScheduleConfig()), raw.get("schedule"), "schedule")
    schedule = ScheduleConfig(
        gamma0=_num(sched["gamma0"], "schedule.gamma0", lo=0, lo_open=True),
        beta=_num(sched["beta"], "schedule.beta", lo=0.5, hi=1.0, lo_open=True),
    )

    params = _merge(_PARAMS[exp], {k: raw[k] for k in _PARAMS[exp] if k in raw}, "")
    family = _merge(_FAMILY[exp], raw.get("family"), "family")
    anchor = _merge(_ANCHOR[exp], raw.get("anchor"), "anchor")

    kraw = raw.get("kernel")
    if kraw is None:
        kernel = copy.deepcopy(_KERNEL_DEFAULT[exp])
    else:
        if not isinstance(kraw, dict) or kraw.get("type") not in _KERNELS:
            raise ValidationError(f"kernel.type must be one of {sorted(_KERNELS)}", "kernel.type")
        ktype = kraw["type"]
        if ktype not in _ALLOWED_KERNELS[exp]:
            raise ValidationError(f"kernel {ktype!r} not available for {exp!r}", "kernel.type")
        base = dict(_KERNELS[ktype])
        if "dist" in base:
            base["dist"] = _KERNEL_DEFAULT[exp].get("dist")
        kernel = _merge(base, kraw, "kernel")
    if "dist" in kernel:
        kernel["dist"] = _dist(kernel["dist"], "kernel.dist")
    if kernel["type"] == "ar1":
        _num(kernel["rho"], "kernel.rho", lo=-1, hi=1, lo_open=True, hi_open=True)
        _num(kernel["sigma"], "kernel.sigma", lo=0)
    if kernel["type"] == "rwm_reflected":
        _num(kernel["scale"], "kernel.scale", lo=0, lo_open=True)

    _validate_experiment(exp, params, family, kernel, anchor)
    return RunConfig(
        experiment=exp,
        seed=seed,
        budget=budget,
        thin=thin,
        out_dir=out_dir,
        max_truncations=max_trunc,
        schedule=schedule,
        family=family,
        kernel=kernel,
        anchor=anchor,
        params=params,
    )


def _validate_experiment(exp: str, params: dict, family: dict, kernel: dict, anchor: dict) -> None:
    if exp in ("quantile", "sace"):
        if params["q"] is None:
            raise ValidationError("required", "q")
        _num(params["q"], "q", lo=0, hi=1, lo_open=True, hi_open=True)
    if exp in ("quantile", "median"):
        _num(family["radius0"], "family.radius0", lo=0, lo_open=True)
        _num(family["growth"], "family.growth", lo=1, lo_open=True)
    if exp == "quantile":
        if params["phi"] not in PHIS:
            raise ValidationError(f"must be one of {PHIS}", "phi")
        _num(anchor["theta"], "anchor.theta")
        if not family_contains_box(family, anchor["theta"]):
            raise ValidationError("anchor must lie in K_0", "anchor.theta")
    if exp == "median":
        dim = dist_dim(kernel["dist"]) if "dist" in kernel else None
        for key in ("theta", "x"):
            v = anchor[key]
            if v is not None and dim is not None and len(v) != dim:
                raise ValidationError(f"expected {dim} coordinates", f"anchor.{key}")
    if exp == "kohonen":
        _num(params["N"], "N", lo=1, integer=True)
        _num(params["lam"], "lam", lo=0)
        _num(params["delta"], "delta", lo=0, lo_open=True)
        if family["q0"] is not None:
            _num(family["q0"], "family.q0", lo=0, lo_open=True)
        dim = dist_dim(kernel["dist"])
        if anchor["theta"] is not None:
            pts = anchor["theta"]
            if len(pts) != params["N"] or any(len(p) != dim for p in pts):
                raise ValidationError(f"expected {params['N']} points of dimension {dim}", "anchor.theta")
    if exp == "sace":
        net = params["network"]
        if not isinstance(net, dict) or set(net) != {"weights", "paths"}:
            raise ValidationError("network needs exactly 'weights' and 'paths'", "network")
        for i, a in enumerate(net["weights"]):
            _num(a, f"network.weights.{i}", lo=0, lo_open=True)
        _num(params["weight_cap"], "weight_cap", lo=1, lo_open=True)
        if params["estimator"] not in ("above", "below"):
            raise ValidationError("must be 'above' or 'below'", "estimator")
        _num(params["pilot_theta"], "pilot_theta", lo=1, integer=True)
        _num(params["pilot_sigma"], "pilot_sigma", lo=1, integer=True)
        _num(family["growth"], "family.growth", lo=1, lo_open=True)
        if anchor["sigma"] is not None:
            if len(anchor["sigma"]) != len(net["weights"]):
                raise ValidationError("one entry per edge", "anchor.sigma")
            if any(s >= 0 for s in anchor["sigma"]):
                raise ValidationError("entries must be negative", "anchor.sigma")


def family_contains_box(family: dict, theta) -> bool:
    vals = theta if isinstance(theta, list) else [theta]
    return all(abs(v) <= family["radius0"] for v in vals)
