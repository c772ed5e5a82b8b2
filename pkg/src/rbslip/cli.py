"""Command line entry point: ``rbslip {run,sweep,audit,bound,fit}``.

Exit status is 0 on success, 1 on a domain error (invalid physics or data)
and 2 on a usage error.
"""
from __future__ import annotations

import argparse
import dataclasses
import math
import sys
from pathlib import Path

from . import sweep as sw
from .bounds import bound_value, delta_optimal
from .solver import PhysParams

EXIT_OK, EXIT_DOMAIN, EXIT_USAGE = 0, 1, 2


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


def _real(name: str, allow_inf: bool = False):
    def conv(text: str) -> float:
        t = text.strip().lower()
        if allow_inf and t in ("inf", "infinity", "+inf"):
            return math.inf
        try:
            v = float(t)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{name}: not a number: {text!r}") from None
        if not allow_inf and not math.isfinite(v):
            raise argparse.ArgumentTypeError(f"{name}: must be finite, got {text!r}")
        return v
    return conv


def _int(name: str):
    def conv(text: str) -> int:
        try:
            return int(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{name}: not an integer: {text!r}") from None
    return conv


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    p = _Parser(prog="rbslip", description="2D Rayleigh-Benard convection with Navier-slip walls")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    r = sub.add_parser("run", help="run one simulation", formatter_class=fmt)
    r.add_argument("--ra", type=_real("--ra"), required=True, help="Rayleigh number")
    r.add_argument("--pr", type=_real("--pr", True), default=1.0, help="Prandtl number (inf allowed)")
    r.add_argument("--ls", type=_real("--ls", True), default=math.inf, help="slip length (inf = free slip)")
    r.add_argument("--gamma", type=_real("--gamma"), default=2.0, help="aspect ratio")
    r.add_argument("--nx", type=_int("--nx"), default=64, help="horizontal points")
    r.add_argument("--nz", type=_int("--nz"), default=65, help="vertical points")
    r.add_argument("--t-end", type=_real("--t-end"), default=1.0, help="final time (diffusive units)")
    r.add_argument("--dt", type=_real("--dt"), default=None, help="fixed step (default: adaptive CFL)")
    r.add_argument("--dt-max", type=_real("--dt-max"), default=1e-3, help="largest adaptive step")
    r.add_argument("--cfl", type=_real("--cfl"), default=0.2, help="safety factor of the adaptive step")
    r.add_argument("--sample-every", type=_real("--sample-every"), default=0.01, help="sampling interval")
    r.add_argument("--seed", type=_int("--seed"), default=None, help="random initial perturbation seed")
    r.add_argument("--out", type=Path, required=True, help="output directory")

    s = sub.add_parser("sweep", help="run a parameter sweep", formatter_class=fmt)
    s.add_argument("--config", type=Path, required=True, help="sweep configuration file")
    s.add_argument("--plot", type=Path, default=None, help="write an SVG Nu-Ra chart here")

    a = sub.add_parser("audit", help="check every diagnostic on a snapshot", formatter_class=fmt)
    a.add_argument("--snapshot", type=Path, required=True, help="snapshot file")
    a.add_argument("--delta", type=_real("--delta"), nargs="+", default=[0.05, 0.1, 0.2],
                   help="boundary-layer thicknesses")

    b = sub.add_parser("bound", help="evaluate the analytic Nusselt bound", formatter_class=fmt)
    b.add_argument("--ra", type=_real("--ra"), required=True, help="Rayleigh number")
    b.add_argument("--pr", type=_real("--pr", True), default=1.0, help="Prandtl number (inf allowed)")
    b.add_argument("--ls", type=_real("--ls", True), default=math.inf, help="slip length (inf allowed)")
    b.add_argument("--nu", type=_real("--nu"), default=None, help="Nusselt hypothesis for delta*")
    b.add_argument("--csv", action="store_true", help="print one CSV row instead of text")

    f = sub.add_parser("fit", help="fit log Nu against log Ra", formatter_class=fmt)
    f.add_argument("--csv", type=Path, required=True, help="results CSV")
    f.add_argument("--group", action="append", default=[], metavar="COL=VALUE",
                   help="restrict to rows with COL equal to VALUE (repeatable)")
    f.add_argument("--y", default="nu_flux", help="dependent column")
    return p


def _cmd_run(ns) -> int:
    point = sw.SweepPoint(ra=ns.ra, pr=ns.pr, ls=ns.ls, gamma=ns.gamma, nx=ns.nx, nz=ns.nz,
                          t_end=ns.t_end, dt=ns.dt, dt_max=ns.dt_max, cfl=ns.cfl, sample_every=ns.sample_every,
                          seed=ns.seed)
    cfg = sw.SweepConfig([point], out=ns.out, workers=1)
    path = sw.run_matrix(cfg)
    row = sw.read_rows(path)[-1]
    print(f"{row['run_id']}: status={row['status']} nu_flux={row['nu_flux']} nu_grad={row['nu_grad']}")
    print(f"results  {path}")
    print(f"snapshot {Path(ns.out) / 'snapshots' / (row['run_id'] + '.rbns')}")
    return EXIT_OK if row["status"] == "ok" else EXIT_DOMAIN


def _cmd_sweep(ns) -> int:
    cfg = sw.load_config(ns.config)
    path = sw.run_matrix(cfg, progress=lambda rid, st: print(f"{rid}: {st}", flush=True))
    print(f"results {path}")
    if ns.plot is not None:
        sw.plot_svg(sw.read_rows(path), ns.plot)
        print(f"plot {ns.plot}")
    return EXIT_OK


def _cmd_audit(ns) -> int:
    from . import diagnostics as dg
    from .solver import recover_pressure, state_residuals

    state, params = sw.read_snapshot(ns.snapshot)
    p = recover_pressure(state, params)
    k = dg.kinematics(state)
    rec = dg.sample_record(state, params, deltas=tuple(ns.delta))
    avg = dg.TimeAverager.single(rec, params)
    res = state_residuals(state, params)
    rows = [
        ("nu_flux", dg.nusselt_flux(avg)),
        ("nu_grad", dg.nusselt_grad(avg)),
    ]
    for dl in ns.delta:
        loc = dg.nusselt_localized(avg, dl, state.domain)
        rows.append((f"nu_local({dl:g})", loc.exact))
        rows.append((f"nu_local_bound({dl:g})", loc.bound))
    tr = dg.trace_inequality(k, p)
    rows.append(("trace_margin", tr.margin))
    for dl in ns.delta:
        rows.append((f"interp_margin({dl:g})", dg.interpolation_check(avg, dl, domain=state.domain).margin))
    h = dg.hessian_check(k, params.ls)
    rows += [
        ("hessian_margin", h["margin"]),
        ("grad_iden_rel_err", dg.grad_identity_check(k)),
        ("pressure_identity_resid", dg.pressure_identity(k, p, params)["rel_residual"]),
        ("pressure_bound_ratio", dg.pressure_bound_check(k, p, params)["ratio"]),
        ("enstrophy_margin", dg.enstrophy_balance(avg)["margin"]),
        ("omega_l4", rec["omega_l4"]),
        ("u2_wall", res["u2_wall"]),
        ("closure_rel", res["closure_rel"]),
        ("t_min", res["t_min"]),
        ("t_max", res["t_max"]),
    ]
    print(f"snapshot {ns.snapshot}: Ra={params.ra:g} Pr={params.pr:g} Ls={params.ls:g} "
          f"gamma={params.gamma:g} t={state.time:g} grid={state.domain.nx}x{state.domain.nz}")
    width = max(len(n) for n, _ in rows)
    for name, val in rows:
        print(f"{name:<{width}}  {val: .6e}")
    return EXIT_OK


def _cmd_bound(ns) -> int:
    params = PhysParams(ns.ra, ns.pr, ns.ls)
    rep = bound_value(params)
    if ns.nu is not None:
        rep = dataclasses.replace(rep, delta_star=delta_optimal(params, ns.nu))
    dstar = rep.delta_star
    if ns.csv:
        print("ra,pr,ls,region,dominant_term,value,delta_star,table_row")
        print(f"{ns.ra!r},{ns.pr!r},{ns.ls!r},{rep.region_label},{rep.dominant_term},"
              f"{rep.value!r},{dstar!r},\"{rep.table_row}\"")
    else:
        print(rep.text())
    return EXIT_OK


def _cmd_fit(ns) -> int:
    group = {}
    for g in ns.group:
        if "=" not in g:
            raise _UsageError(f"--group expects COL=VALUE, got {g!r}")
        k, v = g.split("=", 1)
        if k not in sw.CSV_COLUMNS:
            raise _UsageError(f"--group: unknown column {k!r}")
        group[k] = v
    if ns.y not in sw.CSV_COLUMNS:
        raise _UsageError(f"--y: unknown column {ns.y!r}")
    res = sw.fit_scaling(sw.read_rows(ns.csv), y=ns.y, group_by=group)
    print(f"slope       {res.slope:.6f}")
    print(f"intercept   {res.intercept:.6f}")
    print(f"stderr      {res.stderr:.6f}")
    print(f"points_used {res.points_used}")
    print(f"slope - 5/12 = {res.slope - 5 / 12:+.6f}")
    return EXIT_OK


_COMMANDS = {"run": _cmd_run, "sweep": _cmd_sweep, "audit": _cmd_audit, "bound": _cmd_bound, "fit": _cmd_fit}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
        return _COMMANDS[ns.command](ns)
    except _UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:  # --help
        return int(e.code or 0)
    except (ValueError, ArithmeticError, OSError) as e:
        print(f"rbslip: error: {e}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
