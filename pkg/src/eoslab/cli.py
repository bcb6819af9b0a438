"""Batch experiment driver: JSON config in, CSV + metadata JSON out.

Usage:  eos-lab run --config cfg.json [--workers N] [--seed S] [--output-dir DIR]

One config describes one experiment; flags override the matching config fields.
All CSV bodies are deterministic given the config and seed (floats are written
in shortest round-trip form), and every output file is written to a temporary
path and atomically renamed, so interrupted runs leave no partial files.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import mode_space, quad_model, reductions, two_param
from .quad_model import InitSpec, task_rng
from .tensor_core import RngSpec

KINDS = (
    "two-param-trajectory",
    "two-param-nullclines",
    "y-eps-scan",
    "mode-space-run",
    "quad-gd-run",
    "quad-gf-run",
    "theorem2-stats",
    "rnl-check",
    "phase-sweep",
    "linear-net-reduction",
)


class ConfigError(ValueError):
    """Invalid experiment config; .fields lists the offending entries."""

    def __init__(self, message, fields=None):
        super().__init__(message)
        self.fields = list(fields or [])


@dataclass
class ExperimentConfig:
    kind: str
    params: dict
    seed: int = 0
    workers: int = 1
    output_dir: str = "."
    raw: dict = field(default_factory=dict)


def seed_derivation(base_seed: int, cell_index: int, seed_index: int) -> RngSpec:
    """Deterministic per-task stream: identical inputs give identical randomness
    regardless of worker count or completion order."""
    return task_rng(base_seed, cell_index, seed_index)


# ---------------------------------------------------------------- config


def _need(params: dict, spec: dict, kind: str):
    """Check required/optional parameter names and scalar types; returns bad fields."""
    bad = []
    for name, (required, kinds_ok) in spec.items():
        if name not in params:
            if required:
                bad.append(f"params.{name} (missing)")
            continue
        v = params[name]
        if kinds_ok == "num" and not isinstance(v, (int, float)):
            bad.append(f"params.{name} (expected number)")
        elif kinds_ok == "int" and not isinstance(v, int):
            bad.append(f"params.{name} (expected integer)")
        elif kinds_ok == "list" and not isinstance(v, list):
            bad.append(f"params.{name} (expected list)")
        elif kinds_ok == "str" and not isinstance(v, str):
            bad.append(f"params.{name} (expected string)")
        elif kinds_ok == "bool" and not isinstance(v, bool):
            bad.append(f"params.{name} (expected bool)")
    for name in params:
        if name not in spec:
            bad.append(f"params.{name} (unknown)")
    return bad


_PARAM_SPECS = {
    "two-param-trajectory": {
        "eps": (False, "num"),
        "a": (False, "num"),
        "e_const": (False, "num"),
        "z0": (True, "num"),
        "t0": (False, "num"),
        "y0": (False, "num"),
        "steps": (True, "int"),
    },
    "two-param-nullclines": {
        "eps": (True, "num"),
        "z_min": (True, "num"),
        "z_max": (True, "num"),
        "n_points": (True, "int"),
    },
    "y-eps-scan": {
        "eps_values": (True, "list"),
        "z0": (True, "num"),
        "y0": (True, "num"),
        "max_steps": (False, "int"),
        "tol": (False, "num"),
        "ode_dt": (False, "num"),
        "ode_t_end": (False, "num"),
    },
    "mode-space-run": {
        "omega": (True, "list"),
        "jsq0": (True, "list"),
        "z0": (True, "num"),
        "mode": (True, "str"),
        "steps": (True, "int"),
        "dt": (False, "num"),
        "include_jsq": (False, "bool"),
    },
    "quad-gd-run": {
        "d": (True, "int"),
        "p": (True, "int"),
        "sigma_z_tilde": (True, "num"),
        "sigma_j_tilde": (True, "num"),
        "alpha": (False, "num"),
        "steps": (True, "int"),
        "record_every": (False, "int"),
    },
    "quad-gf-run": {
        "d": (True, "int"),
        "p": (True, "int"),
        "sigma_z_tilde": (True, "num"),
        "sigma_j_tilde": (True, "num"),
        "dt": (True, "num"),
        "steps": (True, "int"),
        "record_every": (False, "int"),
    },
    "theorem2-stats": {
        "d": (True, "int"),
        "p": (True, "int"),
        "sigma_z_values": (True, "list"),
        "sigma_j": (True, "num"),
        "n_seeds": (True, "int"),
        "fd_dt": (False, "num"),
    },
    "rnl-check": {
        "d": (True, "int"),
        "p": (True, "int"),
        "sigma_z_values": (True, "list"),
        "alpha": (False, "num"),
        "n_samples": (True, "int"),
    },
    "phase-sweep": {
        "d": (True, "int"),
        "p": (True, "int"),
        "sigma_z_tilde_values": (True, "list"),
        "sigma_j_tilde_values": (False, "list"),
        "sigma_j_tilde_sq_values": (False, "list"),
        "n_seeds": (True, "int"),
        "max_steps": (True, "int"),
        "alpha": (False, "num"),
    },
    "linear-net-reduction": {
        "x": (True, "list"),
        "k": (True, "int"),
        "v0": (False, "list"),
        "u0": (False, "list"),
        "gd_steps": (False, "int"),
        "alpha": (False, "num"),
    },
}


def validate_config(doc: dict) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object", ["<root>"])
    bad = []
    kind = doc.get("kind")
    if kind not in KINDS:
        raise ConfigError(f"unknown kind {kind!r}; expected one of {', '.join(KINDS)}", ["kind"])
    params = doc.get("params")
    if not isinstance(params, dict):
        bad.append("params (expected object)")
        params = {}
    else:
        bad.extend(_need(params, _PARAM_SPECS[kind], kind))
    for name, typ in (("seed", int), ("workers", int), ("output_dir", str)):
        if name in doc and not isinstance(doc[name], typ):
            bad.append(f"{name} (expected {typ.__name__})")
    for name in doc:
        if name not in ("kind", "params", "seed", "workers", "output_dir"):
            bad.append(f"{name} (unknown)")
    # kind-specific cross-field checks
    if kind == "two-param-trajectory" and not bad:
        if ("eps" in params) == ("a" in params):
            bad.append("params.eps/params.a (exactly one required)")
        if ("t0" in params) == ("y0" in params):
            bad.append("params.t0/params.y0 (exactly one required)")
    if kind == "phase-sweep" and not bad:
        if ("sigma_j_tilde_values" in params) == ("sigma_j_tilde_sq_values" in params):
            bad.append("params.sigma_j_tilde_values/params.sigma_j_tilde_sq_values (exactly one required)")
    if kind == "mode-space-run" and not bad and params.get("mode") not in ("gd", "gf"):
        bad.append("params.mode (expected 'gd' or 'gf')")
    if bad:
        raise ConfigError("invalid config", bad)
    return ExperimentConfig(
        kind=kind,
        params=params,
        seed=doc.get("seed", 0),
        workers=doc.get("workers", 1),
        output_dir=doc.get("output_dir", "."),
        raw=doc,
    )


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}", ["<file>"])
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}", ["<file>"])
    return validate_config(doc)


# ---------------------------------------------------------------- output


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, float) and math.isnan(x):
        return ""
    return x


def write_csv_atomic(path: Path, header, rows):
    tmp = path.with_name(path.name + f".tmp.{os.getpid()}")
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])
    os.replace(tmp, path)


def write_json_atomic(path: Path, doc):
    tmp = path.with_name(path.name + f".tmp.{os.getpid()}")
    with open(tmp, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


# ---------------------------------------------------------------- experiments


def _model_from_params(params):
    if "a" in params:
        return two_param.ReducedModel(a=params["a"], e_const=params.get("e_const", 0.0))
    return two_param.ReducedModel.from_eps(params["eps"], e_const=params.get("e_const", 0.0))


def _run_two_param_trajectory(cfg, out):
    p = cfg.params
    m = _model_from_params(p)
    if "y0" in p:
        s = two_param.from_y(m, two_param.YState(p["z0"], p["y0"]))
    else:
        s = two_param.ReducedState(p["z0"], p["t0"])
    steps, zs, ts, ys = two_param.trajectory(m, s, p["steps"])
    rows = zip(steps.tolist(), zs.tolist(), ts.tolist(), ys.tolist())
    write_csv_atomic(out / "trajectory.csv", ["step", "z_tilde", "T0", "y"], rows)
    return ["trajectory.csv"], {}


def _run_two_param_nullclines(cfg, out):
    p = cfg.params
    m = two_param.ReducedModel.from_eps(p["eps"])
    zs = np.linspace(p["z_min"], p["z_max"], p["n_points"])
    rows = []
    for z in zs:
        rows.append(
            (
                z,
                two_param.nullcline_two_step(m, z, "z"),
                two_param.nullcline_two_step(m, z, "t"),
                two_param.nullcline_series(m.eps, z, "z"),
                two_param.nullcline_series(m.eps, z, "t"),
            )
        )
    write_csv_atomic(out / "nullclines.csv", ["z_tilde", "f_z", "f_T", "series_z", "series_T"], rows)
    return ["nullclines.csv"], {}


def _run_y_eps_scan(cfg, out):
    p = cfg.params
    z0, y0 = p["z0"], p["y0"]
    max_steps = p.get("max_steps", 10_000_000)
    tol = p.get("tol", 1e-10)
    dt = p.get("ode_dt", 0.1)
    rows = []
    for eps in p["eps_values"]:
        m = two_param.ReducedModel.from_eps(float(eps))
        s = two_param.from_y(m, two_param.YState(z0, y0))
        rep = two_param.run_to_convergence(m, s, tol=tol, max_steps=max_steps)
        # the low-order flow plateaus once z has decayed; ~10/eps time units suffices
        t_end = p.get("ode_t_end", 10.0 / float(eps))
        traj = two_param.ode_integrate(z0, y0, float(eps), dt, t_end)
        rows.append((eps, rep.y, float(traj.y[-1]), two_param.y_star(float(eps)), rep.verdict, rep.steps))
    write_csv_atomic(
        out / "y_eps_scan.csv",
        ["eps", "y_final_map", "y_final_ode", "y_star", "verdict", "steps"],
        rows,
    )
    return ["y_eps_scan.csv"], {}


def _run_mode_space(cfg, out):
    p = cfg.params
    s = mode_space.ModeState(z_tilde=p["z0"], jsq=np.array(p["jsq0"], float), omega=np.array(p["omega"], float))
    include_jsq = p.get("include_jsq", False)
    if p["mode"] == "gf":
        traj = mode_space.integrate_gf(s, p.get("dt", 1e-3), p["steps"], record_jsq=include_jsq)
    else:
        n = p["steps"]
        zs = np.empty(n + 1)
        t0s = np.empty(n + 1)
        jss = np.empty((n + 1, s.jsq.size)) if include_jsq else None
        cur = s
        for i in range(n + 1):
            zs[i] = cur.z_tilde
            t0s[i] = mode_space.t_moment(cur, 0)
            if jss is not None:
                jss[i] = cur.jsq
            if i < n:
                cur = mode_space.gd_step(cur)
        traj = mode_space.Trajectory(times=np.arange(n + 1), z_tilde=zs, t0=t0s, loss=0.5 * zs**2, jsq=jss)
    tmp = out / "mode_space.csv"
    tmp2 = tmp.with_name(tmp.name + f".tmp.{os.getpid()}")
    traj.to_csv(tmp2, include_jsq=include_jsq)
    os.replace(tmp2, tmp)
    return ["mode_space.csv"], {}


def _run_quad_gd(cfg, out):
    p = cfg.params
    alpha = p.get("alpha", 1.0)
    model, st = quad_model.init_random(
        InitSpec(p["d"], p["p"], p["sigma_z_tilde"], p["sigma_j_tilde"], RngSpec(cfg.seed, 0), alpha)
    )
    every = p.get("record_every", 1)
    d, pp = p["d"], p["p"]
    qm = model.q_tensor.reshape(d * pp, pp)
    z, j = st.z, st.j
    rows = []

    def rec(i):
        lam1, _, lam2 = quad_model.ntk_lambda_max(j)
        rows.append((i, 0.5 * float(z @ z), lam1, lam2))

    rec(0)
    for i in range(1, p["steps"] + 1):
        g = j.T @ z
        m = (qm @ g).reshape(d, pp)
        z = z - alpha * (j @ g) + 0.5 * alpha * alpha * (m @ g)
        j = j - alpha * m
        if not np.all(np.isfinite(z)):
            rows.append((i, math.inf, math.nan, math.nan))
            break
        if i % every == 0 or i == p["steps"]:
            rec(i)
    write_csv_atomic(out / "quad_gd.csv", ["step", "loss", "lambda1", "lambda2"], rows)
    return ["quad_gd.csv"], {}


def _run_quad_gf(cfg, out):
    p = cfg.params
    model, st = quad_model.init_random(
        InitSpec(p["d"], p["p"], p["sigma_z_tilde"], p["sigma_j_tilde"], RngSpec(cfg.seed, 0))
    )
    traj = quad_model.gf_integrate_zj(st, model.q_tensor, p["dt"], p["steps"], p.get("record_every", 1))
    rows = zip(
        (traj.times / p["dt"]).round().astype(int).tolist(),
        traj.loss.tolist(),
        traj.lambda1.tolist(),
        traj.lambda2.tolist(),
    )
    write_csv_atomic(out / "quad_gf.csv", ["step", "loss", "lambda1", "lambda2"], rows)
    return ["quad_gf.csv"], {}


def _run_sharpening_stats(cfg, out):
    p = cfg.params
    rows = []
    for k, sz in enumerate(p["sigma_z_values"]):
        stats = quad_model.sharpening_stats(
            p["d"], p["p"], float(sz), p["sigma_j"], p["n_seeds"],
            fd_dt=p.get("fd_dt"), base_rng=RngSpec(cfg.seed, k * 2**32),
        )
        closed = quad_model.lambda_ddot_closed_form(p["d"], p["p"], float(sz), p["sigma_j"])
        rows.append(
            (sz, stats.mean_lambda, stats.mean_ldot, stats.se_ldot, stats.mean_lddot,
             stats.se_lddot, stats.ratio, closed, stats.n_used, stats.n_discarded)
        )
    write_csv_atomic(
        out / "sharpening_stats.csv",
        ["sigma_z", "mean_lambda", "mean_ldot", "se_ldot", "mean_lddot", "se_lddot",
         "ratio", "closed_form", "n_used", "n_discarded"],
        rows,
    )
    return ["sharpening_stats.csv"], {}


def _run_rnl_check(cfg, out):
    p = cfg.params
    alpha = p.get("alpha", 1.0)
    rows = []
    for k, sz in enumerate(p["sigma_z_values"]):
        sz = float(sz)
        closed = quad_model.r_nl_closed(alpha, sz, p["d"])
        spec = InitSpec(p["d"], p["p"], sz * p["d"], 1.0, RngSpec(cfg.seed, k * 2**32), alpha)
        emp = quad_model.r_nl_empirical(spec, p["n_samples"])
        rows.append((sz, closed, emp, emp / closed if closed else math.nan))
    write_csv_atomic(out / "rnl_check.csv", ["sigma_z", "r_closed", "r_empirical", "ratio"], rows)
    return ["rnl_check.csv"], {}


def _run_phase_sweep(cfg, out):
    p = cfg.params
    if "sigma_j_tilde_values" in p:
        sjs = [float(v) for v in p["sigma_j_tilde_values"]]
    else:
        sjs = [math.sqrt(float(v)) for v in p["sigma_j_tilde_sq_values"]]
    records = quad_model.phase_sweep(
        [float(v) for v in p["sigma_z_tilde_values"]],
        sjs,
        p["d"],
        p["p"],
        p["n_seeds"],
        p["max_steps"],
        base_seed=cfg.seed,
        alpha=p.get("alpha", 1.0),
        n_workers=cfg.workers,
    )
    rows = [
        (r.sigma_z_tilde, r.sigma_j_tilde, r.d, r.p, r.n_seeds, r.n_converged,
         r.n_diverged, r.n_stalled, r.median_lambda_max, r.median_lambda_init)
        for r in records
    ]
    write_csv_atomic(
        out / "phase_sweep.csv",
        ["sigma_z_tilde", "sigma_j_tilde", "d", "p", "n_seeds", "n_converged",
         "n_diverged", "n_stalled", "median_lambda_max", "median_lambda_init"],
        rows,
    )
    return ["phase_sweep.csv"], {"median_convention": "median_lambda_max is over converged seeds only; stalled seeds are excluded and counted"}


def _run_linear_net(cfg, out):
    p = cfg.params
    x = np.array(p["x"], float)
    k = p["k"]
    gen = RngSpec(cfg.seed, 0).generator()
    # random fallback weights scaled so the demo descent stays in the stable band
    w_scale = 0.3 / math.sqrt(float(x @ x))
    v0 = np.array(p["v0"], float) if "v0" in p else gen.standard_normal(k) * w_scale
    u0 = np.array(p["u0"], float).reshape(k, x.size) if "u0" in p else gen.standard_normal((k, x.size)) * w_scale
    spec = reductions.LinearNetSpec(x=x, k=k, v0=v0, u0=u0)
    model, theta0 = reductions.build_quad_model(spec)
    from .tensor_core import sym_eigen

    numeric, _ = sym_eigen(model.q_tensor[0])
    predicted = reductions.predicted_spectrum(spec).as_sorted_array()
    rows = [(i, predicted[i], numeric[i]) for i in range(len(numeric))]
    write_csv_atomic(out / "spectrum.csv", ["index", "predicted", "numeric"], rows)

    alpha = p.get("alpha", 0.05)
    n_steps = p.get("gd_steps", 25)
    theta = theta0.copy()
    v, u = v0.copy(), u0.copy()
    max_dev = 0.0
    for _ in range(n_steps):
        theta = quad_model.gd_step_theta(model, theta, alpha)
        v, u = reductions.raw_gd_step(x, v, u, alpha)
        packed = np.concatenate([v, u.ravel()])
        max_dev = max(max_dev, float(np.max(np.abs(theta - packed))))
    extra = {
        "spectrum_max_abs_error": float(np.max(np.abs(numeric - predicted))),
        "catapult_invariant_residual": abs(reductions.catapult_invariant(spec, theta0)),
        "packed_vs_raw_gd_max_deviation": max_dev,
    }
    return ["spectrum.csv"], extra


_RUNNERS = {
    "two-param-trajectory": _run_two_param_trajectory,
    "two-param-nullclines": _run_two_param_nullclines,
    "y-eps-scan": _run_y_eps_scan,
    "mode-space-run": _run_mode_space,
    "quad-gd-run": _run_quad_gd,
    "quad-gf-run": _run_quad_gf,
    "theorem2-stats": _run_sharpening_stats,
    "rnl-check": _run_rnl_check,
    "phase-sweep": _run_phase_sweep,
    "linear-net-reduction": _run_linear_net,
}


def run_experiment(cfg: ExperimentConfig) -> list[str]:
    """Execute one experiment; returns the list of files written (metadata last)."""
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.time()
    files, extra = _RUNNERS[cfg.kind](cfg, out)
    import scipy

    meta = {
        "kind": cfg.kind,
        "config": cfg.raw,
        "seed_used": cfg.seed,
        "workers": cfg.workers,
        "outputs": files,
        "package_version": __version__,
        "numpy_version": np.__version__,
        "scipy_version": scipy.__version__,
        "wall_time_s": round(time.time() - t0, 3),
        "timestamp_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    meta.update(extra)
    write_json_atomic(out / "metadata.json", meta)
    return files + ["metadata.json"]


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="eos-lab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    runp = sub.add_parser("run", help="run one experiment from a JSON config")
    runp.add_argument("--config", required=True, help="path to the experiment JSON")
    runp.add_argument("--workers", type=int, default=None, help="worker processes (overrides config)")
    runp.add_argument("--seed", type=int, default=None, help="base seed (overrides config)")
    runp.add_argument("--output-dir", default=None, help="output directory (overrides config)")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config)
    except ConfigError as e:
        json.dump({"error": str(e), "fields": e.fields}, sys.stderr)
        sys.stderr.write("\n")
        return 2
    if args.workers is not None:
        cfg.workers = args.workers
    if args.seed is not None:
        cfg.seed = args.seed
    if args.output_dir is not None:
        cfg.output_dir = args.output_dir
    try:
        files = run_experiment(cfg)
    except Exception as e:  # divergent runs are data, not errors; this is for real failures
        json.dump({"error": f"{type(e).__name__}: {e}"}, sys.stderr)
        sys.stderr.write("\n")
        return 1
    for f in files:
        print(os.path.join(cfg.output_dir, f))
    return 0


if __name__ == "__main__":
    sys.exit(main())
