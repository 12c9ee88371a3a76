"""Build the four experiments from a `RunConfig` and persist their output."""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import kernels as K
from .bridge import BridgeNetwork
from .config import RunConfig, parse_config
from .core import (
    STREAM_MAIN,
    STREAM_PILOT,
    BoxFamily,
    SeparationFamily,
    StepSchedule,
    make_rng,
)
from .fields import KohonenField, QuantileField, QuantileSpec, median_field
from .sace import SaceField, SaceKernel, final_nu, pilot_init
from .stabilizer import Trace, run_stable_sa


@dataclass
class Experiment:
    """Everything the engine needs for one run."""

    family: Any
    kernel: Any
    field: Any
    schedule: StepSchedule
    anchor: tuple[Any, np.ndarray]
    info: dict = field(default_factory=dict)


def make_dist(d: dict):
    name = d["name"]
    if name == "normal":
        return K.Normal(float(d["mean"]), float(d["sd"]), int(d["dim"]))
    if name == "gaussian_mixture":
        w = None if d["weights"] is None else tuple(d["weights"])
        return K.GaussianMixture(tuple(tuple(m) for m in d["means"]), float(d["sd"]), w)
    if name == "uniform_box":
        return K.UniformBox(tuple(d["low"]), tuple(d["high"]))
    if name == "uniform_ball":
        return K.UniformBall(float(d["radius"]), int(d["dim"]))
    v = d["value"]
    return K.PointMass(float(v) if isinstance(v, (int, float)) else tuple(v))


_PHI = {
    "identity": lambda x: x,
    "abs": abs,
    "sum": lambda x: float(np.sum(x)),
    "norm": lambda x: float(np.linalg.norm(x)),
}


def _data_kernel(cfg: RunConfig):
    kc = cfg.kernel
    if kc["type"] == "iid":
        return K.IidKernel(make_dist(kc["dist"]))
    if kc["type"] == "ar1":
        return K.AR1Kernel(float(kc["rho"]), float(kc["sigma"]))
    raise ValueError(f"kernel {kc['type']!r} is not a data kernel")


def _quantile(cfg: RunConfig) -> Experiment:
    p = cfg.params
    fam = BoxFamily(cfg.family["radius0"], cfg.family["growth"])
    spec = QuantileSpec(float(p["q"]), _PHI[p["phi"]])
    x_star = cfg.anchor["x"]
    return Experiment(fam, _data_kernel(cfg), QuantileField(spec), _schedule(cfg), (x_star, np.array([cfg.anchor["theta"]], dtype=float)))


def _median_fn(theta, x):
    return median_field(theta, x)


def _median(cfg: RunConfig) -> Experiment:
    fam = BoxFamily(cfg.family["radius0"], cfg.family["growth"])
    kc = cfg.kernel
    if kc["type"] == "iid":
        dim = make_dist(kc["dist"]).dim
    else:
        dim = len(cfg.anchor["x"]) if cfg.anchor["x"] is not None else len(cfg.anchor["theta"] or [0.0, 0.0])
    theta = np.zeros(dim) if cfg.anchor["theta"] is None else np.array(cfg.anchor["theta"], dtype=float)
    x_star = theta.copy() if cfg.anchor["x"] is None else np.array(cfg.anchor["x"], dtype=float)
    return Experiment(fam, _data_kernel(cfg), _median_fn, _schedule(cfg), (x_star, theta))


def _kohonen(cfg: RunConfig) -> Experiment:
    p = cfg.params
    n_points, lam, delta = int(p["N"]), float(p["lam"]), float(p["delta"])
    kc = cfg.kernel
    dist = make_dist(kc["dist"])
    dim = dist.dim
    if cfg.anchor["theta"] is None:
        # first draws of the data law: every unit starts inside the support
        pts = np.atleast_2d(dist.sample_n(make_rng(cfg.seed, STREAM_PILOT), n_points).reshape(n_points, dim))
    else:
        pts = np.array(cfg.anchor["theta"], dtype=float).reshape(n_points, dim)
    if cfg.anchor["x"] is None:
        x_star = pts[0].copy()
    else:
        x_star = np.array(cfg.anchor["x"], dtype=float).reshape(dim)
    if dim == 1:
        x_star = float(x_star[0])
    q0 = cfg.family["q0"]
    if q0 is None:
        if n_points > 1:
            diff = pts[:, None, :] - pts[None, :, :]
            dist_m = np.sqrt((diff**2).sum(axis=2))
            dist_m[np.diag_indices(n_points)] = np.inf
            q0 = 2.0 / float(dist_m.min())
        else:
            q0 = 1.0
    fam = SeparationFamily(n_points, dim, delta, float(q0))
    if kc["type"] == "iid":
        kernel = K.IidKernel(dist)
    else:
        kernel = K.ReflectedRWMKernel(dist.density, delta, float(kc["scale"]))
    fld = KohonenField(n_points, dim, delta, lam)
    return Experiment(fam, kernel, fld, _schedule(cfg), (x_star, pts.reshape(-1)), {"q0": float(q0)})


def _sace(cfg: RunConfig) -> Experiment:
    p = cfg.params
    net = BridgeNetwork.from_config(p["network"])
    q = float(p["q"])
    init = pilot_init(
        net, q, make_rng(cfg.seed, STREAM_PILOT),
        n_theta=int(p["pilot_theta"]), n_sigma=int(p["pilot_sigma"]),
        theta0=cfg.anchor["theta"], sigma0=cfg.anchor["sigma"], growth=float(cfg.family["growth"]),
    )
    fam = init.family
    if cfg.family["theta_max0"] is not None or cfg.family["s_max0"] is not None:
        fam = type(fam)(
            cfg.family["theta_max0"] if cfg.family["theta_max0"] is not None else fam.theta_max0,
            cfg.family["s_max0"] if cfg.family["s_max0"] is not None else fam.s_max0,
            fam.growth,
        )
    vartheta = np.concatenate(([init.theta0], init.sigma0))
    fld = SaceField(net, q, float(p["weight_cap"]), p["estimator"])
    x_star = (init.y0, init.y0.copy())
    info = {"theta0": init.theta0, "sigma0": init.sigma0.tolist(), "net": net}
    return Experiment(fam, SaceKernel(net), fld, _schedule(cfg), (x_star, vartheta), info)


def _schedule(cfg: RunConfig) -> StepSchedule:
    return StepSchedule(cfg.schedule.gamma0, cfg.schedule.beta)


BUILDERS = {"quantile": _quantile, "median": _median, "kohonen": _kohonen, "sace": _sace}


def build_experiment(cfg: RunConfig) -> Experiment:
    return BUILDERS[cfg.experiment](cfg)


@dataclass
class RunResult:
    trace: Trace
    experiment: Experiment
    clip_events: int = 0
    extras: dict = field(default_factory=dict)


def execute(cfg: RunConfig) -> RunResult:
    """Run the configured experiment in memory."""
    exp = build_experiment(cfg)
    trace = run_stable_sa(
        exp.family, exp.kernel, exp.field, exp.schedule, exp.anchor, cfg.budget,
        make_rng(cfg.seed, STREAM_MAIN), thin=cfg.thin, max_truncations=cfg.max_truncations,
    )
    clip = 0
    extras: dict = {}
    if cfg.experiment == "sace":
        clip = exp.field.clip_events
        extras = {
            "theta0": exp.info["theta0"],
            "sigma0": exp.info["sigma0"],
            "nu_final": final_nu(trace.final_theta).tolist(),
            "nu_tail": final_nu(trace.tail_mean).tolist(),
        }
    if cfg.experiment == "kohonen":
        extras = {"q0": exp.info["q0"]}
    return RunResult(trace, exp, clip, extras)


# ------------------------------------------------------------ persistence


def _fmt(v: float) -> str:
    return repr(float(v))


def trace_csv(trace: Trace) -> str:
    k = trace.theta.shape[1]
    lines = [",".join(["n", "I", "zeta", "restart"] + [f"theta_{j}" for j in range(k)])]
    n, I, z, r = trace.n.tolist(), trace.I.tolist(), trace.zeta.tolist(), trace.restart.tolist()
    th = trace.theta.tolist()
    for i in range(len(n)):
        lines.append(f"{n[i]},{I[i]},{z[i]},{int(r[i])}," + ",".join(map(repr, th[i])))
    return "\n".join(lines) + "\n"


@dataclass
class TraceTable:
    n: np.ndarray
    I: np.ndarray
    zeta: np.ndarray
    restart: np.ndarray
    theta: np.ndarray


def read_trace(path) -> TraceTable:
    with open(path, encoding="ascii") as fh:
        header = fh.readline().strip().split(",")
        if header[:4] != ["n", "I", "zeta", "restart"] or any(
            h != f"theta_{j}" for j, h in enumerate(header[4:])
        ):
            raise ValueError(f"unexpected trace header {header}")
        data = np.loadtxt(fh, delimiter=",", ndmin=2) if os.path.getsize(path) > 0 else np.empty((0, len(header)))
    if data.shape[0] == 0:
        data = np.empty((0, len(header)))
    return TraceTable(
        data[:, 0].astype(np.int64), data[:, 1].astype(np.int64), data[:, 2].astype(np.int64),
        data[:, 3].astype(bool), data[:, 4:],
    )


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="ascii", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def summary_dict(cfg: RunConfig, res: RunResult) -> dict:
    return {
        "final_theta": res.trace.final_theta.tolist(),
        "tail_mean": res.trace.tail_mean.tolist(),
        "truncation_count": int(res.trace.truncation_count),
        "clip_events": int(res.clip_events),
        "seed": int(cfg.seed),
        "resolved_config": cfg.to_dict(),
        "extras": {k: _jsonable(v) for k, v in res.extras.items()},
    }


def run_experiment(cfg: RunConfig, out_dir: str | os.PathLike | None = None) -> tuple[Path, Path]:
    """Run and write ``trace.csv`` and ``summary.json`` into the output directory."""
    out = Path(out_dir if out_dir is not None else cfg.out_dir)
    if out_dir is not None and str(out) != cfg.out_dir:
        cfg = cfg.with_overrides(out_dir=str(out))
    res = execute(cfg)
    trace_path, summary_path = out / "trace.csv", out / "summary.json"
    _atomic_write(trace_path, trace_csv(res.trace))
    _atomic_write(summary_path, json.dumps(summary_dict(cfg, res), indent=2, sort_keys=True) + "\n")
    return trace_path, summary_path


def load_summary(path) -> dict:
    with open(path, encoding="ascii") as fh:
        return json.load(fh)


def config_from_summary(summary: dict) -> RunConfig:
    return parse_config(json.dumps(summary["resolved_config"]))
