"""Command-line entry point.

Every subcommand writes its table to ``--out`` (stdout by default) and a
manifest with the fully resolved configuration next to it
(``<out>.manifest.json``; stderr when writing to stdout). Passing a
manifest back through ``--config`` reproduces the run.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .lattice import BoxIndex, format_site, origin, parse_site, parse_sites, total_variation
from .params import ModelParams

SCHEMA_VERSION = 1
EXIT_NO_MEASURE = 3


# --------------------------------------------------------------------------
# formatting


def _clean(v):
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return None if math.isnan(v) else v
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, np.ndarray):
        return [_clean(x) for x in v.tolist()]
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    return v


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def to_csv(rows: list[dict]) -> str:
    if not rows:
        return ""
    cols = list(rows[0])
    for r in rows[1:]:
        cols.extend(k for k in r if k not in cols)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in cols])
    return buf.getvalue()


def to_json(obj) -> str:
    return json.dumps(_clean(obj), indent=2, allow_nan=False)


# --------------------------------------------------------------------------
# config handling


def load_config(path: str) -> dict:
    """JSON or TOML config; a manifest's ``config`` block is accepted."""
    p = Path(path)
    text = p.read_bytes()
    if p.suffix.lower() == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:  # Python < 3.11
            import tomli as tomllib
        data = tomllib.loads(text.decode())
    else:
        data = json.loads(text)
    if "config" in data and "subcommand" in data:
        data = data["config"]
    return data


def _apply_config(args: argparse.Namespace, parser: argparse.ArgumentParser) -> argparse.Namespace:
    if not args.config:
        return args
    data = load_config(args.config)
    block = data.get(args.command, {})
    flat = {k: v for k, v in data.items() if not isinstance(v, dict)}
    flat.update(block)
    for key, val in flat.items():
        key = key.replace("-", "_")
        if key in ("command", "config"):
            continue
        if not hasattr(args, key):
            parser.error(f"unknown config key {key!r} for {args.command}")
        setattr(args, key, val)
    return args


def _params(args) -> ModelParams:
    return ModelParams(int(args.d), float(args.lam), float(args.lambda0))


def _floats(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [float(x) for x in text]
    return [float(tok) for tok in str(text).split(",") if tok.strip()]


def _ints(text) -> list[int]:
    if isinstance(text, (list, tuple)):
        return [int(x) for x in text]
    return [int(float(tok)) for tok in str(text).split(",") if tok.strip()]


def _sites(text, d) -> list[tuple]:
    if text is None:
        return [origin(d)]
    if isinstance(text, (list, tuple)):
        return [parse_site(s) if isinstance(s, str) else tuple(s) for s in text]
    return parse_sites(text)


# --------------------------------------------------------------------------
# subcommands; each returns (payload, rows, exit_code)


def cmd_gamma(args):
    from .walk import gamma

    g = gamma(int(args.d), args.K)
    payload = {"d": g.dim, "K": g.horizon, "estimate": g.estimate, "error_bound": g.error_bound,
               "partial_sum": g.partial_sum, "tail_estimate": g.tail_estimate}
    return payload, [payload], 0


def cmd_solve_nu(args):
    from .walk import NoStationaryMeasure, nu_profile, return_time_pmf, solve_nu0

    p = _params(args)
    pmf = return_time_pmf(p.d, args.K)
    try:
        root = solve_nu0(p, pmf)
    except NoStationaryMeasure as exc:
        payload = {"status": "no_stationary_measure", "message": str(exc), "params": p.to_dict()}
        return payload, [payload], EXIT_NO_MEASURE
    box = BoxIndex(int(args.radius), p.d) if args.radius is not None else None
    sol = nu_profile(p, root.u_star, box)
    payload = {
        "status": "ok",
        "u_star": root.u_star,
        "nu0": root.nu0,
        "gamma_d": root.gamma_d,
        "near_critical": root.near_critical,
        "residuals": {"off_origin": sol.residuals, "origin": sol.origin_residual},
        "mass_defect": sol.mass_defect,
        "mass_budget": sol.mass_budget,
        "box_radius": sol.box.radius,
        "nu": sol.nu.to_records(),
    }
    return payload, sol.nu.to_records(), 0


def _sim_config(args, p, allow_zero=False):
    from .brw import SimConfig

    observe = _floats(args.observe) if args.observe else [float(args.tmax)]
    return SimConfig(p, t_max=float(args.tmax), particle_cap=int(args.cap), seed=int(args.seed),
                     observe_at=tuple(observe), observe_sites=tuple(_sites(args.sites, p.d)),
                     allow_zero_lambda=allow_zero)


def _sim_rows(trajs, cfg):
    rows = []
    for r, tr in enumerate(trajs):
        for row in tr.rows():
            rows.append({"replica": r, **row})
    return rows


def _sim_summary(rs):
    return {k: {"mean": v.mean, "se": v.se} for k, v in rs.stats.items()}


def cmd_simulate(args):
    from .brw import aggregate, run_many

    p = _params(args)
    cfg = _sim_config(args, p)
    trajs = run_many(cfg, int(args.replicas), int(args.threads), debug=bool(args.debug))
    rs = aggregate(cfg, trajs)
    payload = {"config": cfg.to_dict(), "statuses": rs.statuses, "summary": _sim_summary(rs),
               "rows": _sim_rows(trajs, cfg)}
    return payload, payload["rows"], 0


def cmd_catalyst(args):
    from .brw import aggregate, run_many
    from .catalyst import catalyst_params, catalyst_total_progeny, simulate_catalyst

    p = catalyst_params(int(args.d), float(args.epsilon))
    if args.progeny:
        est = catalyst_total_progeny(p.d, p.epsilon, int(args.replicas), int(args.seed))
        payload = {"d": p.d, "epsilon": p.epsilon, "mean": est.mean, "se": est.se,
                   "variance": est.var, "replicas": est.n_replicas, "capped": est.capped,
                   "predicted": est.predicted}
        return payload, [payload], 0
    cfg = _sim_config(args, p, allow_zero=True)
    trajs = run_many(cfg, int(args.replicas), int(args.threads), runner=simulate_catalyst)
    rs = aggregate(cfg, trajs)
    payload = {"config": cfg.to_dict(), "statuses": rs.statuses, "summary": _sim_summary(rs),
               "rows": _sim_rows(trajs, cfg)}
    return payload, payload["rows"], 0


def cmd_moments(args):
    from .catalyst import default_moment_radius, moment_trajectory, catalyst_params

    p = _params(args)
    times = _floats(args.times) if args.times else [float(args.tmax)]
    R = int(args.radius) if args.radius is not None else default_moment_radius(max(times))
    box = BoxIndex(R, p.d)
    dt = float(args.dt) if args.dt is not None else None
    sites = _sites(args.sites, p.d) if args.sites else [origin(p.d)]
    full = moment_trajectory(p, box, times, dt)
    cat = moment_trajectory(catalyst_params(p.d, p.epsilon), box, times, dt)
    rows = []
    for a, b in zip(full, cat):
        for x in sites:
            ua = a.at(x)
            ub = math.exp(p.lam * a.t) * b.at(x)
            rows.append({"x": format_site(x), "t": a.t, "u": ua, "budget": a.truncation_budget,
                         "step_error": a.step_error, "u_catalyst_scaled": ub,
                         "rel_error": abs(ua - ub) / ua if ua else 0.0, "total": a.total})
    payload = {"params": p.to_dict(), "box_radius": R, "dt": full[0].dt, "rows": rows}
    return payload, rows, 0


def cmd_mvpp(args):
    from .mvpp import mvpp_run

    p = _params(args)
    n = int(args.steps)
    record = tuple(_ints(args.record)) if args.record else (n,)
    rows = []
    for r in range(int(args.replicas)):
        run = mvpp_run(p, n, seed=int(args.seed), replica=r, record=record)
        for i, step in enumerate(run.steps):
            rows.append({"replica": r, "n": int(step), "origin_fraction": run.origin_fraction[i],
                         "weight_per_step": run.weight_per_step[i],
                         "q_running_mean": run.q_running_mean[i], "total_mass": run.total_mass[i]})
    payload = {"params": p.to_dict(), "rows": rows}
    return payload, rows, 0


def cmd_audit(args):
    from .mvpp import constants_audit

    rep = constants_audit(_params(args)).to_dict()
    flat = {k: v for k, v in rep.items() if not isinstance(v, dict)}
    flat.update({f"check_{k}": v for k, v in rep["checks"].items()})
    flat.update(rep["params"])
    return rep, [flat], 0


def cmd_qsd(args):
    from .qsd import build_Y_generator, limit_measure, qsd_power_iteration

    p = _params(args)
    box = BoxIndex(int(args.radius), p.d)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        gen = build_Y_generator(p, box)
    sol = limit_measure(qsd_power_iteration(gen, float(args.tol)), p)
    payload = {"theta": sol.decay_theta, "residual": sol.residual, "iterations": sol.iterations,
               "box_radius": box.radius, "warnings": [str(w.message) for w in caught],
               "nu": sol.nu_qsd.to_records(), "limit_measure": sol.limit_measure.to_records()}
    if args.compare:
        from .walk import NoStationaryMeasure, nu_profile, solve_nu0

        try:
            root = solve_nu0(p)
            bal = nu_profile(p, root.u_star, box)
            payload["tv_vs_balance"] = total_variation(sol.limit_measure, bal.nu)
        except NoStationaryMeasure as exc:
            payload["tv_vs_balance"] = None
            payload["warnings"].append(str(exc))
    lm = sol.limit_measure
    rows = [{"site": format_site(x), "nu_qsd": sol.nu_qsd[x], "limit_measure": lm[x]}
            for x in sorted(set(lm) | set(sol.nu_qsd))]
    return payload, rows, 0


def cmd_phase_scan(args):
    from .experiments import grid, phase_scan

    pts = grid(_floats(args.lambdas), _floats(args.lambda0s))
    rows = phase_scan(int(args.d), pts, float(args.tobs), int(args.replicas), int(args.seed),
                      int(args.cap), not bool(args.no_sim), int(args.threads))
    for r in rows:
        r.pop("sim_statuses", None)
    return {"d": int(args.d), "rows": rows}, rows, 0


def cmd_compare(args):
    from .experiments import compare_routes

    rep = compare_routes(_params(args), int(args.radius), int(args.replicas), float(args.tobs),
                         int(args.seed), int(args.site_radius), int(args.cap))
    payload = {"params": rep.params.to_dict(), "tv": rep.tv, "growth_slope": rep.growth_slope,
               "growth_slope_se": rep.growth_slope_se, "predicted_growth": rep.predicted_growth,
               "sim_pi_hat_0": rep.sim_pi_hat_0, "sim_pi_hat_0_se": rep.sim_pi_hat_0_se,
               "notes": rep.notes, "sites": rep.site_table()}
    return payload, rep.site_table(), 0


COMMANDS = {
    "gamma": cmd_gamma,
    "solve-nu": cmd_solve_nu,
    "simulate": cmd_simulate,
    "catalyst": cmd_catalyst,
    "moments": cmd_moments,
    "mvpp": cmd_mvpp,
    "audit": cmd_audit,
    "qsd": cmd_qsd,
    "phase-scan": cmd_phase_scan,
    "compare": cmd_compare,
}


def _model_args(p, lam=0.2, lambda0=2.0):
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--lambda", dest="lam", type=float, default=lam)
    p.add_argument("--lambda0", type=float, default=lambda0)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default="-", help="output file, '-' for stdout")
    common.add_argument("--format", choices=("csv", "json"), default=None)
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--config", default=None, help="JSON or TOML file overriding flags")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="catbrw", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gamma", parents=[common], help="escape probability gamma_d")
    p.add_argument("--d", type=int, default=3)
    p.add_argument("--K", type=int, default=None)

    p = sub.add_parser("solve-nu", parents=[common], help="stationary measure from the balance equations")
    _model_args(p)
    p.add_argument("--K", type=int, default=None)
    p.add_argument("--radius", type=int, default=None)

    p = sub.add_parser("simulate", parents=[common], help="simulate the branching random walk")
    _model_args(p)
    p.add_argument("--tmax", type=float, default=10.0)
    p.add_argument("--cap", type=int, default=10_000_000)
    p.add_argument("--replicas", type=int, default=1)
    p.add_argument("--observe", default=None, help="comma-separated observation times")
    p.add_argument("--sites", default=None, help="sites such as '0;1;-1'")
    p.add_argument("--debug", action="store_true", help="recount rates after every event")

    p = sub.add_parser("catalyst", parents=[common], help="catalyst-only process")
    p.add_argument("--d", type=int, default=3)
    p.add_argument("--epsilon", type=float, default=0.33)
    p.add_argument("--tmax", type=float, default=10.0)
    p.add_argument("--cap", type=int, default=10_000_000)
    p.add_argument("--replicas", type=int, default=1)
    p.add_argument("--observe", default=None)
    p.add_argument("--sites", default=None)
    p.add_argument("--progeny", action="store_true", help="estimate the mean total progeny")

    p = sub.add_parser("moments", parents=[common], help="mean occupation from the moment equation")
    _model_args(p)
    p.add_argument("--tmax", type=float, default=5.0)
    p.add_argument("--times", default=None)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--radius", type=int, default=None)
    p.add_argument("--sites", default=None)

    p = sub.add_parser("mvpp", parents=[common], help="measure-valued Polya urn")
    _model_args(p)
    p.add_argument("--steps", type=int, default=10_000)
    p.add_argument("--replicas", type=int, default=1)
    p.add_argument("--record", default=None, help="comma-separated step counts")

    p = sub.add_parser("audit", parents=[common], help="constants of the urn argument")
    _model_args(p)

    p = sub.add_parser("qsd", parents=[common], help="quasi-stationary route to the limit measure")
    _model_args(p)
    p.add_argument("--radius", type=int, default=40)
    p.add_argument("--tol", type=float, default=1e-12)
    p.add_argument("--compare", action="store_true", help="report TV distance to the balance solution")

    p = sub.add_parser("phase-scan", parents=[common], help="regime table over a parameter grid")
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--lambdas", default="0.2")
    p.add_argument("--lambda0s", default="0.5,1,2,3")
    p.add_argument("--tobs", type=float, default=10.0)
    p.add_argument("--replicas", type=int, default=20)
    p.add_argument("--cap", type=int, default=10_000_000)
    p.add_argument("--no-sim", action="store_true")

    p = sub.add_parser("compare", parents=[common], help="compare the three routes to the limit")
    _model_args(p)
    p.add_argument("--radius", type=int, default=40)
    p.add_argument("--replicas", type=int, default=100)
    p.add_argument("--tobs", type=float, default=10.0)
    p.add_argument("--site-radius", type=int, default=3)
    p.add_argument("--cap", type=int, default=10_000_000)
    return parser


DEFAULT_FORMAT = {"gamma": "json", "solve-nu": "json", "audit": "json", "qsd": "json",
                  "compare": "json", "simulate": "csv", "catalyst": "csv", "moments": "csv",
                  "mvpp": "csv", "phase-scan": "csv"}


def manifest(args, fmt: str) -> dict:
    # the output location is not part of the configuration being reproduced
    cfg = {k: v for k, v in vars(args).items() if k not in ("config", "out")}
    return {"artifact": "catbrw", "version": __version__, "schema_version": SCHEMA_VERSION,
            "subcommand": args.command, "seed": args.seed, "format": fmt, "config": cfg,
            "outputs": [args.out]}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args = _apply_config(args, parser)
    fmt = args.format or DEFAULT_FORMAT[args.command]
    payload, rows, code = COMMANDS[args.command](args)
    text = to_json(payload) if fmt == "json" else to_csv(rows)
    man = to_json(manifest(args, fmt))
    if args.out in (None, "-"):
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
        sys.stderr.write(man + "\n")
    else:
        out = Path(args.out)
        out.write_text(text)
        Path(str(out) + ".manifest.json").write_text(man + "\n")
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
