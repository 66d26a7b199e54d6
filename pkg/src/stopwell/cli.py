"""Command-line front end: ``stopwell <subcommand> [options]``.

Exit codes: 0 success, 1 invalid input, 2 numerical non-convergence,
3 I/O failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .boundary import (
    BoundaryCurve,
    EstimateDegenerateError,
    NonConvergenceError,
    fixed_point_solve,
    residual_profile,
)
from .closed_form import ClosedFormPack, lower_bound_b
from .config import (
    Numerics,
    SweepSpec,
    default_sweep,
    merge_numerics,
    params_from_sources,
    read_config,
)
from .model import ModelParams, ParamError, State
from .output import RunManifest, read_csv, write_csv, write_gnuplot_stub
from .pde import OracleError, OracleGrid, extract_boundary, solve_obstacle
from .sampling import STREAM_RESIDUAL, STREAM_SOLVE, STREAM_VALUE, ExponentialSampler, RngStream, resolve_seed
from .valuation import value_from_boundary, value_of_information
from .verify import run_checks

log = logging.getLogger("stopwell")

EXIT_OK, EXIT_INVALID, EXIT_NONCONVERGENCE, EXIT_IO = 0, 1, 2, 3
SUBCOMMANDS = ("thresholds", "boundary", "value", "voi", "oracle", "verify", "figures")

MODEL_FLAGS = {"mu0": "mu0", "mu1": "mu1", "sigma": "sigma", "r": "r", "invest_cost": "invest-cost"}
NUMERIC_FLAGS = {
    "n_samples": int, "m": int, "tol": float, "max_iter": int, "workers": int,
    "dt": float, "horizon": float, "n_paths": int,
    "n_x": int, "n_pi": int, "left_width": float, "right_width": float, "voi_points": int,
}


class Context:
    """Resolved settings plus bookkeeping for one run."""

    def __init__(self, params: ModelParams, numerics: Numerics, seed: int, out: Path, args: argparse.Namespace,
                 sweeps: dict | None = None):
        self.params = params
        self.numerics = numerics
        self.seed = seed
        self.out = out
        self.args = args
        self.sweeps = sweeps or {}
        self.timings: dict[str, float] = {}
        self.outputs: list[str] = []
        self.reports: list[dict] = []

    def stage(self, name: str):
        ctx = self

        class _T:
            def __enter__(self):
                self.t = time.perf_counter()

            def __exit__(self, *exc):
                ctx.timings[name] = ctx.timings.get(name, 0.0) + time.perf_counter() - self.t

        return _T()

    def csv(self, name: str, header, rows, note: str = "") -> Path:
        path = write_csv(self.out / name, header, rows, self.seed, note)
        self.outputs.append(name)
        return path


def _solve_boundary(ctx: Context, params: ModelParams) -> BoundaryCurve:
    n = ctx.numerics
    with ctx.stage("boundary"):
        curve, rep = fixed_point_solve(
            params, tol=n.tol, max_iter=n.max_iter, n_samples=n.n_samples,
            rng=RngStream(ctx.seed, STREAM_SOLVE), workers=n.workers, m=n.m,
        )
    log.info("boundary converged in %d iterations (last change %.3g)", rep.iterations, rep.sup_change_history[-1])
    ctx.reports.append({"iterations": rep.iterations, "sup_change_history": rep.sup_change_history,
                        "tolerance": rep.tolerance, "samples_per_node": rep.samples_per_node})
    return curve


def _load_or_solve(ctx: Context) -> BoundaryCurve:
    path = getattr(ctx.args, "boundary_csv", None)
    if path:
        header, data = read_csv(Path(path))
        return BoundaryCurve(data[:, header.index("pi")], data[:, header.index("b")])
    return _solve_boundary(ctx, ctx.params)


BOUNDARY_COLUMNS = ["pi", "b", "b_lower", "residual", "residual_se"]


def _boundary_rows(params: ModelParams, curve: BoundaryCurve, residuals=None):
    lb = lower_bound_b(ClosedFormPack.build(params), curve.pi_grid)
    if residuals is None:
        res = np.full(curve.size, np.nan)
        se = np.full(curve.size, np.nan)
    else:
        res = [e.mean for e in residuals]
        se = [e.std_error for e in residuals]
    return zip(curve.pi_grid, curve.values, lb, res, se)


def _residuals(ctx: Context, params: ModelParams, curve: BoundaryCurve):
    """Integral-equation residuals on draws independent of the solve."""
    with ctx.stage("residual"):
        return residual_profile(
            params, curve, ctx.numerics.n_samples, RngStream(ctx.seed, STREAM_RESIDUAL), ctx.numerics.workers
        )


def cmd_thresholds(ctx: Context) -> int:
    pack = ClosedFormPack.build(ctx.params)
    print(f"x0*={pack.xstar0:.4f}")
    print(f"x1*={pack.xstar1:.4f}")
    print(f"beta0={pack.beta0:.4f} beta1={pack.beta1:.4f}")
    grid = np.linspace(0.0, 1.0, ctx.numerics.m)
    ctx.csv("thresholds.csv", ["pi", "b_lower"], zip(grid, lower_bound_b(pack, grid)))
    return EXIT_OK


def cmd_boundary(ctx: Context) -> int:
    curve = _solve_boundary(ctx, ctx.params)
    rows = _boundary_rows(ctx.params, curve, _residuals(ctx, ctx.params, curve))
    ctx.csv("boundary.csv", BOUNDARY_COLUMNS, rows)
    return EXIT_OK


def _states(args) -> list[State]:
    xs = args.x or [5.0]
    pis = args.pi or [0.5]
    return [State(float(x), float(p)) for p in pis for x in xs]


def cmd_value(ctx: Context) -> int:
    curve = _load_or_solve(ctx)
    rng = RngStream(ctx.seed, STREAM_VALUE)
    rows = []
    with ctx.stage("value"):
        sampler = ExponentialSampler(ctx.params, rng, ctx.numerics.n_samples)
        for s in _states(ctx.args):
            e = value_from_boundary(ctx.params, curve, s, ctx.numerics.n_samples, rng, sampler)
            rows.append((s.x, s.pi, e.mean, e.std_error))
    ctx.csv("value.csv", ["x", "pi", "v", "se"], rows)
    return EXIT_OK


def _voi_rows(ctx: Context, params: ModelParams, curve: BoundaryCurve, full: bool):
    n = ctx.numerics
    x_grid = np.linspace(curve(0.0) / n.voi_points, curve(0.0), n.voi_points)
    with ctx.stage("voi"):
        surf = value_of_information(params, curve, x_grid, n.voi_pis, n.n_samples, RngStream(ctx.seed, STREAM_VALUE))
    rows = []
    for j, pi in enumerate(surf.pi_grid):
        for i, x in enumerate(surf.x_grid):
            if full:
                rows.append((x, pi, surf.v_bar[j, i], surf.v[j, i], surf.delta[j, i], surf.delta_se[j, i]))
            else:
                rows.append((x, pi, surf.delta[j, i], surf.delta_se[j, i]))
    return rows


def cmd_voi(ctx: Context) -> int:
    curve = _load_or_solve(ctx)
    rows = _voi_rows(ctx, ctx.params, curve, full=True)
    ctx.csv("voi.csv", ["x", "pi", "v_bar", "v", "delta", "delta_se"], rows)
    return EXIT_OK


def cmd_oracle(ctx: Context) -> int:
    n = ctx.numerics
    grid = OracleGrid(n.n_x, n.n_pi, n.left_width, n.right_width)
    with ctx.stage("oracle"):
        sol = solve_obstacle(ctx.params, grid)
    rows = (
        (x, pi, sol.v[j, i], sol.g[j, i], sol.stop_mask[j, i])
        for j, pi in enumerate(sol.pi_nodes)
        for i, x in enumerate(sol.x_nodes)
    )
    ctx.csv("oracle_surface.csv", ["x", "pi", "v", "g", "stop"], rows)
    curve = extract_boundary(sol)
    ctx.csv("oracle_boundary.csv", BOUNDARY_COLUMNS, _boundary_rows(ctx.params, curve))
    sf = sol.diagnostics["smooth_fit"]
    print(f"smooth-fit mismatch: x {sf['max_x']:.4g}, pi {sf['max_pi']:.4g}")
    return EXIT_OK


def cmd_verify(ctx: Context) -> int:
    with ctx.stage("verify"):
        ok = run_checks(ctx.params, ctx.seed)
    return EXIT_OK if ok else EXIT_INVALID


def cmd_figures(ctx: Context) -> int:
    spec = SweepSpec(ctx.sweeps, ctx.numerics) if ctx.sweeps else default_sweep(ctx.numerics)
    for name, params in spec.sets.items():
        log.info("parameter set %s: %s", name, params)
        curve = _solve_boundary(ctx, params)
        note = " ".join(f"{k}={v!r}" for k, v in params.to_dict().items())
        ctx.csv(f"boundary_{name}.csv", ["pi", "b", "b_lower"],
                ((p, b, lb) for p, b, lb, _, _ in _boundary_rows(params, curve)), note)
        ctx.csv(f"voi_{name}.csv", ["x", "pi", "delta", "delta_se"], _voi_rows(ctx, params, curve, False), note)
    write_gnuplot_stub(ctx.out, spec.names())
    ctx.outputs.append("plot.gp")
    return EXIT_OK


COMMANDS = {
    "thresholds": cmd_thresholds,
    "boundary": cmd_boundary,
    "value": cmd_value,
    "voi": cmd_voi,
    "oracle": cmd_oracle,
    "verify": cmd_verify,
    "figures": cmd_figures,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI file with [model], [numerics], [sweep.<name>] sections")
    common.add_argument("--seed", type=int, help="master seed (else $STOPWELL_SEED, else a fixed default)")
    common.add_argument("--out", help="output directory (default ./out)")
    common.add_argument("--replay", metavar="MANIFEST", help="re-run exactly as recorded in a manifest")
    common.add_argument("-v", "--verbose", action="store_true")
    for key, flag in MODEL_FLAGS.items():
        common.add_argument(f"--{flag}", dest=key, type=float)
    for key, kind in NUMERIC_FLAGS.items():
        common.add_argument(f"--{key.replace('_', '-')}", dest=key, type=kind)

    p = argparse.ArgumentParser(prog="stopwell", description="Investment timing under drift uncertainty.")
    sub = p.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name, parents=[common])
        if name in ("value", "voi"):
            sp.add_argument("--boundary-csv", help="reuse a boundary CSV instead of solving")
        if name == "value":
            sp.add_argument("--x", type=float, nargs="+", help="profit levels")
            sp.add_argument("--pi", type=float, nargs="+", help="beliefs")
        if name == "figures":
            sp.add_argument("--sweep", help="INI file whose [sweep.<name>] sections list parameter sets")
    return p


_REPLAYED = ("boundary_csv", "x", "pi", "sweep")


def _context_from_args(args: argparse.Namespace) -> Context:
    if args.replay:
        man = RunManifest.load(Path(args.replay))
        if man.subcommand != args.subcommand:
            raise ParamError(f"manifest records '{man.subcommand}', not '{args.subcommand}'")
        for k in _REPLAYED:
            if k in man.flags:
                setattr(args, k, man.flags[k])
        sweeps = {k: ModelParams(**v) for k, v in man.flags.get("sweep_sets", {}).items()}
        out = Path(args.out or man.flags.get("out") or "out")
        return Context(man.model(), Numerics.from_dict(man.numerics), man.seed, out, args, sweeps)
    model_file, num_file, sweeps = read_config(args.config)
    if getattr(args, "sweep", None):
        _, num_sweep, sweeps = read_config(args.sweep)
        num_file = {**num_file, **num_sweep}
    params = params_from_sources(model_file, vars(args))
    flags = {k: getattr(args, k) for k in NUMERIC_FLAGS}
    numerics = merge_numerics(Numerics(), num_file, flags)
    seed = resolve_seed(args.seed)
    return Context(params, numerics, seed, Path(args.out or "out"), args, sweeps)


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    start = time.perf_counter()
    try:
        ctx = _context_from_args(args)
        code = COMMANDS[args.subcommand](ctx)
        flags = {k: getattr(args, k, None) for k in _REPLAYED}
        flags["out"] = str(ctx.out)
        flags["sweep_sets"] = {k: v.to_dict() for k, v in ctx.sweeps.items()}
        man = RunManifest(
            params=ctx.params.to_dict(), seed=ctx.seed, subcommand=args.subcommand, flags=flags,
            numerics=ctx.numerics.to_dict(), wall_time=time.perf_counter() - start,
            timings=ctx.timings, outputs=ctx.outputs, solver=ctx.reports,
        )
        man.save(ctx.out / f"manifest_{args.subcommand}.json")
        return code
    except (ParamError, ValueError, TypeError) as e:
        print(f"stopwell: invalid input: {e}", file=sys.stderr)
        return EXIT_INVALID
    except (NonConvergenceError, EstimateDegenerateError, OracleError) as e:
        print(f"stopwell: numerical failure: {e}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except OSError as e:
        print(f"stopwell: I/O error: {e}", file=sys.stderr)
        return EXIT_IO


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
