"""
Command-line entry point.

    telephase point      single parameter point: simulator vs closed form
    telephase verify     random-grid equivalence of simulator and closed form
    telephase optimize   best (m, alpha, g_x, g_p) for one budget, as CSV
    telephase sweep      grid of budgets, as CSV
    telephase montecarlo sampled trajectories vs ensemble moments

Every subcommand accepts ``--config FILE`` with ``key = value`` lines (keys
are the long option names without dashes, ``-`` or ``_``); command-line flags
override the file. Exit codes: 0 success, 1 check failed, 2 invalid input.
"""
from __future__ import annotations

import argparse
import csv
import io
import math
import os
import sys

import numpy as np

from telephase.errors import InvalidParameter, SensitivityUndefined, TelephaseError
from telephase.formulas import coherent_baseline_sigma, lossy_moments
from telephase.montecarlo import estimate
from telephase.optimizer import Constraint, SweepRow, constraint_grid, optimize, sweep
from telephase.protocol import ProtocolParams, run_ensemble

SEED_ENV = "TELEPHASE_SEED"
CSV_HEADER = [
    "r", "n_total", "eta1", "eta2", "n_th", "unit_gains", "m_opt", "alpha", "g_x", "g_p",
    "sigma", "sigma_coh", "enhancement", "enhancement_db", "feasible",
]
VERIFY_RTOL = 1e-9

EXIT_OK, EXIT_FAIL, EXIT_INVALID = 0, 1, 2


def default_seed() -> int:
    return int(os.environ.get(SEED_ENV, "42"))


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{x:.12g}"


def csv_rows(rows: list[SweepRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for row in rows:
        c, o = row.constraint, row.optimum
        writer.writerow([_fmt(v) for v in (
            c.r, c.n_total_budget, c.eta1, c.eta2, c.n_th, c.unit_gains, o.m, o.alpha, o.g_x, o.g_p,
            o.sigma, o.sigma_coh, o.enhancement, o.enhancement_db, o.feasible,
        )])
    return buf.getvalue()


def _rel(a: float, b: float) -> float:
    scale = max(abs(a), abs(b))
    return 0.0 if scale == 0 else abs(a - b) / scale


def random_grid(n_points: int, seed: int) -> list[ProtocolParams]:
    rng = np.random.default_rng(seed)
    return [
        ProtocolParams(
            alpha=float(rng.uniform(0, 3)),
            phi=float(rng.uniform(-1, 1)),
            r=float(rng.uniform(0, 3)),
            m=int(rng.integers(0, 51)),
            eta1=float(rng.uniform(0.3, 1)),
            eta2=float(rng.uniform(0.3, 1)),
            n_th=float(rng.uniform(0, 0.1)),
        )
        for _ in range(n_points)
    ]


def compare_point(params: ProtocolParams, corrupt: bool = False) -> dict[str, tuple[float, float]]:
    """Simulator vs closed form for a unit-gain point: {name: (simulated, closed)}."""
    sim = run_ensemble(params)
    ref = lossy_moments(params.alpha, params.phi, params.r, params.m, params.eta1, params.eta2, params.n_th)
    var_ref, sigma_ref = ref.var_x, ref.sigma
    if corrupt:
        # negative control: vacuum variance 1/2 instead of 1/4
        var_ref, sigma_ref = 2 * var_ref, math.sqrt(2) * sigma_ref
    return {
        "mean_x": (sim.mean_x, ref.mean_x),
        "var_x": (sim.var_x, var_ref),
        "sigma": (sim.sigma, sigma_ref),
        "n_total": (sim.n_total, ref.n_total),
    }


def verify(n_points: int, seed: int, corrupt: bool = False):
    """Return (worst relative error, worst params, worst quantity)."""
    worst = (0.0, None, "")
    for params in random_grid(n_points, seed):
        for name, (a, b) in compare_point(params, corrupt).items():
            err = _rel(a, b)
            if err > worst[0] or worst[1] is None:
                worst = (err, params, name)
    return worst


# ---------------------------------------------------------------- commands

def _params_from(args) -> ProtocolParams:
    return ProtocolParams(alpha=args.alpha, phi=args.phi, r=args.r, m=args.m, g_x=args.gx, g_p=args.gp,
                          eta1=args.eta1, eta2=args.eta2, n_th=args.nth)


def cmd_point(args, out) -> int:
    params = _params_from(args)
    sim = run_ensemble(params)
    print(f"# {params}", file=out)
    if params.unit_gains:
        pairs = compare_point(params)
    else:
        pairs = {"mean_x": (sim.mean_x, None), "var_x": (sim.var_x, None),
                 "sigma": (sim.sigma, None), "n_total": (sim.n_total, None)}
    print(f"{'quantity':<12}{'simulator':>22}{'closed_form':>22}{'abs_delta':>14}{'rel_delta':>14}  status", file=out)
    for name, (a, b) in pairs.items():
        if b is None:
            print(f"{name:<12}{a:>22.15g}{'n/a':>22}{'n/a':>14}{'n/a':>14}  n/a", file=out)
        else:
            rel = _rel(a, b)
            status = "OK" if rel < VERIFY_RTOL else "MISMATCH"
            print(f"{name:<12}{a:>22.15g}{b:>22.15g}{abs(a - b):>14.3e}{rel:>14.3e}  {status}", file=out)
    print(f"{'dmeanx_dphi':<12}{sim.dmeanx_dphi:>22.15g}", file=out)
    try:
        coh = coherent_baseline_sigma(sim.n_total, params.phi, params.eta1)
        print(f"{'sigma_coh':<12}{coh:>22.15g}", file=out)
        print(f"{'enhancement':<12}{coh / sim.sigma:>22.15g}", file=out)
    except SensitivityUndefined:
        print(f"{'sigma_coh':<12}{'undefined':>22}", file=out)
    return EXIT_OK


def cmd_verify(args, out) -> int:
    if args.n_points < 1:
        raise InvalidParameter("n_points must be >= 1")
    err, params, name = verify(args.n_points, args.seed, corrupt=args.corrupt_convention)
    print(f"points={args.n_points} seed={args.seed} max_rel_error={err:.3e} ({name})", file=out)
    print(f"worst: {params}", file=out)
    if err < VERIFY_RTOL:
        print("OK", file=out)
        return EXIT_OK
    print(f"FAIL: relative error {err:.3e} >= {VERIFY_RTOL:g} at {params}", file=out)
    return EXIT_FAIL


def _emit_csv(text: str, path, out) -> None:
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    else:
        out.write(text)


def cmd_optimize(args, out) -> int:
    constraint = Constraint(r=args.r, n_total_budget=args.n_total, eta1=args.eta1, eta2=args.eta2,
                            n_th=args.nth, unit_gains=args.unit_gains, m_max=args.m_max)
    _emit_csv(csv_rows(sweep([constraint])), args.out, out)
    return EXIT_OK


def _floats(text) -> list[float]:
    if isinstance(text, (int, float)):
        return [float(text)]
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise InvalidParameter(f"expected a comma-separated list of numbers, got {text!r}") from None


def cmd_sweep(args, out) -> int:
    grid = constraint_grid(_floats(args.r), _floats(args.n_total), _floats(args.eta1), _floats(args.eta2),
                           n_th=args.nth, unit_gains=args.unit_gains, m_max=args.m_max)
    _emit_csv(csv_rows(sweep(grid, workers=args.workers)), args.out, out)
    return EXIT_OK


def cmd_montecarlo(args, out) -> int:
    params = _params_from(args)
    est = estimate(params, args.n_traj, args.seed, workers=args.workers)
    ref = run_ensemble(params)
    z_mean = (est.mean_x_hat - ref.mean_x) / est.stderr_mean
    z_var = (est.var_x_hat - ref.var_x) / est.stderr_var
    print(f"# {params}", file=out)
    print(f"n_traj={est.n_traj} seed={est.seed}", file=out)
    print(f"mean_x  mc={est.mean_x_hat:.12g} stderr={est.stderr_mean:.6g} ensemble={ref.mean_x:.12g} z={z_mean:+.4f}", file=out)
    print(f"var_x   mc={est.var_x_hat:.12g} stderr={est.stderr_var:.6g} ensemble={ref.var_x:.12g} z={z_var:+.4f}", file=out)
    for k, (a, s, b) in enumerate(zip(est.photons_hat, est.photons_stderr, ref.per_pass_photons)):
        print(f"photons[{k}] mc={a:.12g} stderr={s:.6g} ensemble={b:.12g}", file=out)
    ok = abs(z_mean) < args.z_max and abs(z_var) < args.z_max
    print("OK" if ok else f"FAIL: |z| >= {args.z_max:g}", file=out)
    return EXIT_OK if ok else EXIT_FAIL


# ---------------------------------------------------------------- parsing

def _add_params(p) -> None:
    p.add_argument("--alpha", type=float, default=1.0, help="probe amplitude <p>")
    p.add_argument("--phi", type=float, default=0.1, help="phase (rad)")
    p.add_argument("--r", type=float, default=1.0, help="squeezing parameter")
    p.add_argument("--m", type=int, default=2, help="number of teleportations")
    p.add_argument("--gx", type=float, default=1.0, help="x feedback gain")
    p.add_argument("--gp", type=float, default=1.0, help="p feedback gain")
    p.add_argument("--eta1", type=float, default=1.0, help="probe transmission")
    p.add_argument("--eta2", type=float, default=1.0, help="resource transmission")
    p.add_argument("--nth", type=float, default=0.0, help="thermal photons at resource loss")


def _add_budget(p, listy: bool) -> None:
    kind = str if listy else float
    suffix = " (comma-separated list)" if listy else ""
    p.add_argument("--r", type=kind, default=1.5, help="squeezing parameter" + suffix)
    p.add_argument("--n-total", type=kind, default=100.0, help="probe photon budget" + suffix)
    p.add_argument("--eta1", type=kind, default=1.0, help="probe transmission" + suffix)
    p.add_argument("--eta2", type=kind, default=1.0, help="resource transmission" + suffix)
    p.add_argument("--nth", type=float, default=0.0, help="thermal photons at resource loss")
    p.add_argument("--unit-gains", action="store_true", help="fix g_x = g_p = 1")
    p.add_argument("--m-max", type=int, default=None, help="cap on teleportations searched")
    p.add_argument("--out", default=None, help="CSV path (stdout if omitted)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="telephase", description=__doc__.split("\n\n")[0].strip())
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("point", help="simulator vs closed form at one point")
    _add_params(p)
    p.set_defaults(func=cmd_point)

    p = sub.add_parser("verify", help="random-grid simulator vs closed form")
    p.add_argument("--n-points", type=int, default=1000)
    p.add_argument("--seed", type=int, default=default_seed())
    p.add_argument("--corrupt-convention", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("optimize", help="optimize one budget point")
    _add_budget(p, listy=False)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("sweep", help="optimize a grid of budget points")
    _add_budget(p, listy=True)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("montecarlo", help="sampled trajectories vs ensemble")
    _add_params(p)
    p.add_argument("--n-traj", type=int, default=10 ** 6)
    p.add_argument("--seed", type=int, default=default_seed())
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--z-max", type=float, default=4.0, help="pass threshold on |z|")
    p.set_defaults(func=cmd_montecarlo)

    for p in sub.choices.values():
        p.add_argument("--config", default=None, help="key = value file; flags override it")
    return parser


def _read_config(path: str) -> dict[str, str]:
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InvalidParameter(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            values[key.replace("-", "_")] = value
    return values


def _apply_config(subparser: argparse.ArgumentParser, path: str) -> None:
    actions = {a.dest: a for a in subparser._actions if a.dest not in ("help", "config", "func")}
    defaults = {}
    for key, raw in _read_config(path).items():
        action = actions.get(key)
        if action is None:
            raise InvalidParameter(f"unknown config key {key!r}")
        if isinstance(action, argparse._StoreTrueAction):
            defaults[key] = raw.lower() in ("1", "true", "yes", "on")
        else:
            try:
                defaults[key] = action.type(raw) if action.type else raw
            except ValueError:
                raise InvalidParameter(f"config key {key!r}: cannot parse {raw!r}") from None
    subparser.set_defaults(**defaults)


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parser.parse_args(argv)
        if args.config:
            _apply_config(parser._subparsers._group_actions[0].choices[args.command], args.config)
            args = parser.parse_args(argv)
        return args.func(args, out)
    except (InvalidParameter, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except TelephaseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    raise SystemExit(main())
