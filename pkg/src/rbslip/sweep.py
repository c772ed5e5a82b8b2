"""Parameter sweeps: configuration, resumable CSV results, snapshots and fits.

Config files are line oriented ``key = value`` with ``[point]`` and
``[grid]`` sections.  Keys before the first section set defaults for every
point.  A ``[grid]`` section expands ``ra``/``pr``/``ls`` lists into their
Cartesian product; ``a:b:n`` denotes ``n`` log-spaced values from ``a`` to
``b``.  With ``ls_alpha`` set, points without an explicit slip length use
``ls = ra ** ls_alpha``.
"""
from __future__ import annotations

import csv
import io
import math
import os
import struct
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import stats

from .bounds import bound_value
from .diagnostics import run_summary
from .grid import Domain, ScalarField
from .solver import (
    BlowUpError,
    FlowState,
    InitialCondition,
    PhysParams,
    Schedule,
    default_initial_condition,
    run,
)

__all__ = [
    "CSV_COLUMNS",
    "SweepPoint",
    "SweepConfig",
    "FitResult",
    "SnapshotError",
    "parse_config",
    "load_config",
    "run_point",
    "run_matrix",
    "read_rows",
    "fit_scaling",
    "write_snapshot",
    "read_snapshot",
    "plot_svg",
    "worker_count",
]

CSV_COLUMNS = [
    "run_id", "ra", "pr", "ls", "gamma", "nx", "nz", "dt", "t_end", "t_avg_start",
    "nu_flux", "nu_grad", "nu_local_d05", "nu_local_d10", "nu_local_d20", "nu_profile_flat",
    "energy_resid", "enstrophy_margin", "trace_margin_min", "interp_margin_min",
    "grad_iden_max_err", "hessian_margin_min", "omega_l4_max", "t_min", "t_max",
    "bound_value", "bound_region", "delta_star", "status",
]

ROUTE_TOLERANCE = 0.03
_LOCAL_DELTAS = (0.05, 0.1, 0.2)


# ---------------------------------------------------------------------------
# snapshots

_MAGIC = b"RBNS"
_VERSION = 1
_HEADER = struct.Struct("<4sIII5d")


class SnapshotError(ValueError):
    pass


def write_snapshot(path, state: FlowState, params: PhysParams) -> None:
    """Binary little-endian snapshot of ``T``, ``omega`` and ``psi``."""
    d = state.domain
    head = _HEADER.pack(_MAGIC, _VERSION, d.nx, d.nz, d.gamma, params.ra, params.pr, params.ls, state.time)
    body = b"".join(
        np.ascontiguousarray(f.values, dtype="<f8").tobytes()
        for f in (state.temperature, state.vorticity, state.streamfunction)
    )
    Path(path).write_bytes(head + body)


def read_snapshot(path) -> tuple[FlowState, PhysParams]:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise SnapshotError(f"truncated snapshot: expected at least {_HEADER.size} header bytes, got {len(data)}")
    magic, version, nx, nz, gamma, ra, pr, ls, time = _HEADER.unpack_from(data)
    if magic != _MAGIC:
        raise SnapshotError(f"bad magic {magic!r}, expected {_MAGIC!r}")
    if version != _VERSION:
        raise SnapshotError(f"unsupported version {version} (this reader handles {_VERSION})")
    expected = _HEADER.size + 3 * nx * nz * 8
    if len(data) != expected:
        raise SnapshotError(f"snapshot size mismatch: expected {expected} bytes for nx={nx}, nz={nz}, got {len(data)}")
    d = Domain(gamma, nx, nz)
    arrs = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).reshape(3, nx, nz).astype(float)
    fields = [ScalarField(d, a.copy()) for a in arrs]
    return FlowState(fields[0], fields[1], fields[2], time), PhysParams(ra, pr, ls, gamma)


# ---------------------------------------------------------------------------
# configuration

@dataclass(frozen=True)
class SweepPoint:
    ra: float
    pr: float = 1.0
    ls: float = math.inf
    gamma: float = 2.0
    nx: int = 64
    nz: int = 65
    t_end: float = 1.0
    dt: float | None = None
    dt_max: float = 1e-3
    cfl: float = 0.2
    sample_every: float = 0.01
    spinup_fraction: float = 0.5
    seed: int | None = None

    def __post_init__(self):
        PhysParams(self.ra, self.pr, self.ls, self.gamma)
        Domain(self.gamma, self.nx, self.nz)
        if not self.t_end >= 0:
            raise ValueError(f"t_end must be nonnegative, got {self.t_end}")
        if not 0 <= self.spinup_fraction < 1:
            raise ValueError("spinup_fraction must lie in [0, 1)")

    @property
    def params(self) -> PhysParams:
        return PhysParams(self.ra, self.pr, self.ls, self.gamma)

    @property
    def run_id(self) -> str:
        seed = "d" if self.seed is None else str(self.seed)
        return (f"ra{self.ra:.6g}_pr{self.pr:.6g}_ls{self.ls:.6g}_g{self.gamma:g}"
                f"_{self.nx}x{self.nz}_t{self.t_end:g}_s{seed}")


@dataclass
class SweepConfig:
    points: list
    out: Path = Path("sweep_out")
    deltas: tuple = _LOCAL_DELTAS
    workers: int = 1
    snapshots: bool = True
    ls_alpha: float | None = None

    @property
    def csv_path(self) -> Path:
        return Path(self.out) / "results.csv"


_FLOAT_KEYS = {"ra", "pr", "ls", "gamma", "t_end", "dt", "dt_max", "cfl", "sample_every", "spinup_fraction"}
_INT_KEYS = {"nx", "nz", "seed"}
_GLOBAL_KEYS = {"out", "deltas", "workers", "snapshots", "ls_alpha"}


def _num(key: str, text: str):
    t = text.strip()
    if key in _INT_KEYS:
        return None if t.lower() == "none" else int(t)
    if key == "dt" and t.lower() in ("none", "auto", ""):
        return None
    return float(t)


def _expand(text: str) -> list:
    vals = []
    for part in text.split(","):
        part = part.strip()
        if part.count(":") == 2:
            a, b, n = part.split(":")
            vals.extend(np.logspace(math.log10(float(a)), math.log10(float(b)), int(n)).tolist())
        elif part:
            vals.append(float(part))
    return vals


def parse_config(text: str, base_dir: Path | None = None) -> SweepConfig:
    """Parse the line-oriented sweep configuration."""
    defaults: dict = {}
    globals_: dict = {}
    sections: list = []
    cur = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip().lower()
            if name not in ("point", "grid"):
                raise ValueError(f"line {lineno}: unknown section [{name}]")
            cur = (name, {})
            sections.append(cur)
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value, got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        key = key.lower()
        if cur is None:
            if key in _GLOBAL_KEYS:
                globals_[key] = val
            elif key in _FLOAT_KEYS | _INT_KEYS:
                defaults[key] = val
            else:
                raise ValueError(f"line {lineno}: unknown key {key!r}")
        else:
            if key not in _FLOAT_KEYS | _INT_KEYS:
                raise ValueError(f"line {lineno}: unknown key {key!r} in [{cur[0]}]")
            cur[1][key] = val
    ls_alpha = float(globals_["ls_alpha"]) if "ls_alpha" in globals_ else None
    points = []
    for kind, kv in sections:
        merged = {**defaults, **kv}
        if kind == "grid":
            ras = _expand(merged.pop("ra", ""))
            prs = _expand(merged.pop("pr", "1"))
            lss = _expand(merged.pop("ls")) if "ls" in merged else [None]
            merged.pop("ls", None)
            combos = [(ra, pr, ls) for ra in ras for pr in prs for ls in lss]
        else:
            if "ra" not in merged:
                raise ValueError("[point] section without ra")
            combos = [(float(merged.pop("ra")), float(merged.pop("pr", "1")),
                       float(merged.pop("ls")) if "ls" in merged else None)]
        rest = {k: _num(k, v) for k, v in merged.items()}
        for ra, pr, ls in combos:
            if ls is None:
                ls = ra**ls_alpha if ls_alpha is not None else math.inf
            points.append(SweepPoint(ra=ra, pr=pr, ls=ls, **rest))
    out = Path(globals_.get("out", "sweep_out"))
    if base_dir is not None and not out.is_absolute():
        out = Path(base_dir) / out
    deltas = tuple(float(x) for x in globals_["deltas"].split(",")) if "deltas" in globals_ else _LOCAL_DELTAS
    workers = int(globals_.get("workers", "1"))
    snaps = globals_.get("snapshots", "true").lower() in ("1", "true", "yes")
    return SweepConfig(points, out, deltas, workers, snaps, ls_alpha)


def load_config(path) -> SweepConfig:
    path = Path(path)
    return parse_config(path.read_text(), base_dir=path.parent)


# ---------------------------------------------------------------------------
# running

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def run_point(point: SweepPoint, deltas=_LOCAL_DELTAS, snapshot_dir=None) -> dict:
    """Simulate one point and return its CSV row (values as strings)."""
    params = point.params
    d = Domain(point.gamma, point.nx, point.nz)
    init = (InitialCondition.from_seed(d, point.seed) if point.seed is not None
            else default_initial_condition(d))
    sched = Schedule(point.t_end, point.sample_every, point.dt, point.dt_max, point.cfl, point.spinup_fraction)
    t_avg = point.spinup_fraction * point.t_end
    row = {c: math.nan for c in CSV_COLUMNS}
    row.update(run_id=point.run_id, ra=point.ra, pr=point.pr, ls=point.ls, gamma=point.gamma,
               nx=point.nx, nz=point.nz, dt=point.dt if point.dt is not None else "auto",
               t_end=point.t_end, t_avg_start=t_avg)
    records, final = [], None
    status = "ok"
    try:
        for state, rec in run(init, params, sched, deltas=tuple(sorted(set(deltas) | set(_LOCAL_DELTAS)))):
            records.append(rec)
            final = state
    except BlowUpError:
        status = "blowup"
    except (ValueError, ArithmeticError):
        status = "nonconverged"
    if status == "ok" and records:
        try:
            s = run_summary(records, params, t_avg, _LOCAL_DELTAS, domain=d)
        except (ValueError, ArithmeticError):
            status = "nonconverged"
        else:
            row.update(
                nu_flux=s["nu_flux"], nu_grad=s["nu_grad"],
                nu_local_d05=s["nu_local_0.05"], nu_local_d10=s["nu_local_0.1"], nu_local_d20=s["nu_local_0.2"],
                nu_profile_flat=s["nu_profile_flat"], energy_resid=s["energy_resid"],
                enstrophy_margin=s["enstrophy_margin"], trace_margin_min=s["trace_margin_min"],
                interp_margin_min=s["interp_margin_min"], grad_iden_max_err=s["grad_iden_max_err"],
                hessian_margin_min=s["hessian_margin_min"], omega_l4_max=s["omega_l4_max"],
                t_min=s["t_min"], t_max=s["t_max"],
            )
            nf, ng = s["nu_flux"], s["nu_grad"]
            if not (abs(nf - ng) <= ROUTE_TOLERANCE * abs(nf)):
                status = "nonconverged"
    if params.ra > 0:
        rep = bound_value(params)
        row.update(bound_value=rep.value, bound_region=rep.region_label, delta_star=rep.delta_star)
    else:
        row.update(bound_value=math.nan, bound_region="NONE", delta_star=math.nan)
    row["status"] = status
    if snapshot_dir is not None and final is not None:
        Path(snapshot_dir).mkdir(parents=True, exist_ok=True)
        write_snapshot(Path(snapshot_dir) / f"{point.run_id}.rbns", final, params)
    return {k: _fmt(row[k]) for k in CSV_COLUMNS}


def worker_count(requested: int | None = None) -> int:
    """``RBC_THREADS`` overrides the requested worker count."""
    env = os.environ.get("RBC_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ValueError(f"RBC_THREADS must be a positive integer, got {env!r}") from None
        if n < 1:
            raise ValueError(f"RBC_THREADS must be a positive integer, got {env!r}")
        return n
    return max(1, int(requested or 1))


def read_rows(path) -> list:
    """Rows of a results CSV as dicts of strings (header checked)."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != CSV_COLUMNS:
            raise ValueError(f"{path}: unexpected CSV header")
        return [dict(zip(header, r)) for r in reader]


def _write_rows(path: Path, rows: list) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([r[c] for c in CSV_COLUMNS])
    tmp = path.with_suffix(".tmp")
    tmp.write_text(buf.getvalue(), encoding="utf-8")
    tmp.replace(path)


def run_matrix(cfg: SweepConfig, progress=None) -> Path:
    """Run every point of ``cfg`` not already present in its results CSV.

    Rows are kept in configuration order, so an interrupted and resumed
    sweep produces the same file as an uninterrupted one.
    """
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    path = cfg.csv_path
    done = {r["run_id"]: r for r in read_rows(path)} if path.exists() else {}
    order = [p.run_id for p in cfg.points]
    todo = [p for p in dict((p.run_id, p) for p in cfg.points).values() if p.run_id not in done]
    snap_dir = out / "snapshots" if cfg.snapshots else None

    def flush():
        rows = [done[i] for i in dict.fromkeys(order) if i in done]
        extra = [r for k, r in done.items() if k not in set(order)]
        _write_rows(path, rows + extra)

    flush()
    workers = worker_count(cfg.workers)
    if workers == 1 or len(todo) <= 1:
        for p in todo:
            done[p.run_id] = run_point(p, cfg.deltas, snap_dir)
            flush()
            if progress:
                progress(p.run_id, done[p.run_id]["status"])
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            futs = {ex.submit(run_point, p, cfg.deltas, snap_dir): p for p in todo}
            for fut in as_completed(futs):
                p = futs[fut]
                done[p.run_id] = fut.result()
                flush()
                if progress:
                    progress(p.run_id, done[p.run_id]["status"])
    return path


# ---------------------------------------------------------------------------
# fitting and plotting

@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    stderr: float
    points_used: int


def _matches(row: dict, group: dict) -> bool:
    for k, v in group.items():
        try:
            if not math.isclose(float(row[k]), float(v), rel_tol=1e-9):
                return False
        except ValueError:
            if str(row[k]) != str(v):
                return False
    return True


def fit_scaling(rows, x: str = "ra", y: str = "nu_flux", group_by: dict | None = None) -> FitResult:
    """Least-squares slope of ``log y`` against ``log x`` over successful rows."""
    group_by = group_by or {}
    xs, ys = [], []
    for r in rows:
        if r.get("status", "ok") != "ok" or not _matches(r, group_by):
            continue
        xv, yv = float(r[x]), float(r[y])
        if xv > 0 and yv > 0 and math.isfinite(xv) and math.isfinite(yv):
            xs.append(math.log(xv))
            ys.append(math.log(yv))
    if len(xs) < 3:
        raise ValueError(f"fit needs at least 3 successful rows, got {len(xs)}")
    if len(set(xs)) < 2:
        raise ValueError("fit needs at least two distinct x values")
    res = stats.linregress(xs, ys)
    return FitResult(float(res.slope), float(res.intercept), float(res.stderr), len(xs))


def plot_svg(rows, path, guide_slopes=(5 / 12,), x: str = "ra", y: str = "nu_flux") -> Path:
    """Log-log chart of ``y`` against ``x`` with bound-slope guide lines."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    pts = sorted((float(r[x]), float(r[y])) for r in rows
                 if r.get("status", "ok") == "ok" and float(r[y]) > 0)
    fig, ax = plt.subplots(figsize=(5, 4))
    if pts:
        xs, ys = zip(*pts)
        ax.loglog(xs, ys, "o-", label=y)
        for s in guide_slopes:
            ax.loglog(xs, [ys[0] * (v / xs[0]) ** s for v in xs], "--", label=f"slope {s:.3g}")
    ax.set_xlabel(x)
    ax.set_ylabel(y)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return Path(path)
