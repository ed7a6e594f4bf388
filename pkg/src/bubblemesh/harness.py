"""End-to-end experiments: BPM mesh series, FEM solves and report files."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import bubbles, fem, io, metrics
from .geometry import PRESETS, ConfigurationError, preset_domain
from .sizing import SizeField, constant, graded, radial_ring
from .triangulate import triangulate

log = logging.getLogger(__name__)

DEFAULT_SIZES = (0.2, 0.1, 0.05, 0.025, 0.0125)

CSV_COLUMNS = (
    "domain", "h", "N_nodes", "N_tris", "N_dofs_p1", "N_dofs_p2", "q_avg", "h_err",
    "max_edge_err", "alpha_hat", "err_super_p1", "order_p1", "err_super_p2", "order_p2",
    "err_h1_p1", "err_h1_p2",
)
LSHAPE_COLUMNS = ("h", "N_free_p1", "N_free_p2", "err_super_p1", "err_super_p2", "err_h1_p1", "err_h1_p2")

# graded sizing used for the corner-singularity study
LSHAPE_POWER = 0.8
LSHAPE_RADIUS = 0.5

# acceptance bands written to summary.txt: per domain, degree -> (lo, hi, how)
BANDS = {
    "equilateral_triangle": {1: (1.9, 2.2, "each"), 2: (2.8, 3.2, "each")},
    "unit_circle": {1: (1.25, 1.75, "each"), 2: (2.2, 2.8, "each")},
    "regular_pentagon": {1: (1.3, 1.8, "mean"), 2: (2.25, 2.8, "mean")},
}
QAVG_MIN = {"equilateral_triangle": 0.999, "unit_circle": 0.95, "regular_pentagon": 0.95}


class ExperimentError(RuntimeError):
    def __init__(self, domain, h, stage, cause):
        self.domain, self.h, self.stage = domain, h, stage
        super().__init__(f"[{domain} h={h} {stage}] {type(cause).__name__}: {cause}")


@dataclass(frozen=True)
class ExperimentConfig:
    domain: str = "unit_circle"
    benchmark: str | None = None
    sizes: tuple = DEFAULT_SIZES
    degrees: tuple = (1, 2)
    seed: int = 0
    output_dir: str = "out"
    max_inner_steps: int = 3000
    tol_force: float = 1e-3
    max_rounds: int = 20
    fill: float = 1.0
    grading_power: float | None = None
    grading_radius: float = LSHAPE_RADIUS
    threshold_factor: float = 3.0

    def __post_init__(self):
        if self.domain not in PRESETS:
            raise ConfigurationError(f"unknown domain {self.domain!r}; expected one of {', '.join(PRESETS)}")
        sizes = tuple(float(h) for h in self.sizes)
        if not sizes or any(h <= 0 for h in sizes) or any(b >= a for a, b in zip(sizes, sizes[1:])):
            raise ConfigurationError(f"sizes must be positive and strictly decreasing, got {sizes}")
        object.__setattr__(self, "sizes", sizes)
        degrees = tuple(sorted({int(d) for d in self.degrees}))
        if not set(degrees) <= {1, 2}:
            raise ConfigurationError(f"degrees must be a subset of {{1, 2}}, got {degrees}")
        object.__setattr__(self, "degrees", degrees)
        expected = fem.DOMAIN_BENCHMARK.get(self.domain)
        bench = self.benchmark if self.benchmark not in ("", "none", None) else None
        if bench is None:
            bench = expected
        elif bench != expected:
            raise ConfigurationError(
                f"benchmark {bench!r} does not belong to domain {self.domain!r} (expected {expected!r})"
            )
        object.__setattr__(self, "benchmark", bench)
        if self.grading_power is None and self.domain == "l_shape":
            object.__setattr__(self, "grading_power", LSHAPE_POWER)

    @property
    def has_fem(self):
        return self.benchmark is not None

    def size_field(self, h) -> SizeField:
        if self.domain == "square3":
            # the ring-shaped field scaled so that h is its inner value
            return radial_ring(inner=h, radius=2.0, slope=2.0 * h)
        p = self.grading_power
        if p:
            R = self.grading_radius
            # floor where the graded spacing meets the corner distance
            hmin = (h * R ** (-p)) ** (1.0 / (1.0 - p)) if p < 1 else 1e-3 * h
            return graded(h, (0.0, 0.0), R, p, hmin)
        return constant(h)


_LIST_KEYS = {"sizes": float, "degrees": int}


def parse_config(text, **overrides) -> ExperimentConfig:
    """Flat ``key = value`` text; ``#`` starts a comment."""
    known = {f.name: f for f in fields(ExperimentConfig)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ConfigurationError(f"line {lineno}: unknown key {key!r}")
        values[key] = _coerce(key, val, known[key])
    values.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**values)


def _coerce(key, val, f):
    try:
        if key in _LIST_KEYS:
            return tuple(_LIST_KEYS[key](v) for v in val.replace(",", " ").split())
        if key in ("domain", "benchmark", "output_dir"):
            return val
        if key in ("seed", "max_inner_steps", "max_rounds"):
            return int(val)
        if val.lower() in ("none", ""):
            return None
        return float(val)
    except ValueError:
        raise ConfigurationError(f"bad value for {key}: {val!r}") from None


def load_config(path, **overrides) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"{path}: {exc.strerror}") from None
    return parse_config(text, **overrides)


def format_config(cfg: ExperimentConfig) -> str:
    out = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            v = ", ".join(str(x) for x in v)
        out.append(f"{f.name} = {v}")
    return "\n".join(out) + "\n"


@dataclass
class LevelResult:
    h: float
    mesh: object = field(repr=False)
    bubbles: np.ndarray = field(repr=False)
    mobility: np.ndarray = field(repr=False)
    mesh_report: metrics.MeshReport = field(repr=False)
    epsilon_history: list = field(default_factory=list)
    n_dofs: dict = field(default_factory=dict)
    n_free: dict = field(default_factory=dict)
    err_super: dict = field(default_factory=dict)
    err_h1: dict = field(default_factory=dict)
    semi_super: dict = field(default_factory=dict)
    solutions: dict = field(default_factory=dict, repr=False)

    @property
    def n_nodes(self):
        return self.mesh.n_nodes

    @property
    def n_tris(self):
        return self.mesh.n_tris


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    rows: list
    alpha_hat: float
    orders: dict

    def column(self, name):
        return [r[name] for r in self.table()]

    def table(self):
        out = []
        for i, r in enumerate(self.rows):
            row = {
                "domain": self.config.domain,
                "h": r.h,
                "N_nodes": r.n_nodes,
                "N_tris": r.n_tris,
                "N_dofs_p1": r.mesh.n_nodes,
                "N_dofs_p2": r.mesh.n_nodes + r.mesh.n_edges,
                "q_avg": r.mesh_report.q_avg,
                "h_err": r.mesh_report.h_err,
                "max_edge_err": r.mesh_report.max_edge_err,
                "alpha_hat": self.alpha_hat,
            }
            for d in (1, 2):
                row[f"err_super_p{d}"] = r.err_super.get(d, math.nan)
                o = self.orders.get(d, [])
                row[f"order_p{d}"] = o[i - 1] if 0 < i <= len(o) else math.nan
                row[f"err_h1_p{d}"] = r.err_h1.get(d, math.nan)
            out.append({c: row[c] for c in CSV_COLUMNS})
        return out


def build_mesh(cfg: ExperimentConfig, h, snapshot=None, snapshot_every=0):
    """BPM for one size level: returns (mesh, bubble system, outer-loop result)."""
    geom = preset_domain(cfg.domain)
    size = cfg.size_field(h)
    sys_ = bubbles.initialize(geom, size, seed=cfg.seed, fill=cfg.fill)
    bubbles.inner_loop(sys_, cfg.max_inner_steps, cfg.tol_force, snapshot=snapshot, snapshot_every=snapshot_every)
    res = bubbles.outer_loop(
        sys_, cfg.max_rounds, cfg.max_inner_steps, cfg.tol_force, snapshot=snapshot, snapshot_every=snapshot_every
    )
    return triangulate(res.system.pos, geom), res.system, res


def solve_level(mesh, problem, degree):
    space = fem.function_space(mesh, degree)
    uh = fem.solve_problem(space, problem)
    ui = fem.interpolate(space, problem.exact_u)
    sup = fem.h1_error_diff(uh, ui)
    return space, uh, sup, fem.h1_error_exact(uh, problem)


def run_level(cfg: ExperimentConfig, h, problem=None):
    stage = "bubbles"
    try:
        mesh, sys_, res = build_mesh(cfg, h)
        stage = "metrics"
        rep = metrics.mesh_report(mesh, cfg.size_field(h), cfg.threshold_factor)
        row = LevelResult(h, mesh, sys_.pos.copy(), sys_.mobility.copy(), rep, list(res.epsilon_history))
        if problem is not None:
            for d in cfg.degrees:
                stage = f"fem-p{d}"
                space, uh, sup, err = solve_level(mesh, problem, d)
                row.n_dofs[d] = space.n_dofs
                row.n_free[d] = space.n_free
                row.err_super[d] = sup.full
                row.semi_super[d] = sup.semi
                row.err_h1[d] = err.full
                row.solutions[d] = uh
    except (ValueError, RuntimeError) as exc:
        raise ExperimentError(cfg.domain, h, stage, exc) from exc
    log.info("%s h=%g: N=%d q_avg=%.4f %s", cfg.domain, h, mesh.n_nodes, rep.q_avg,
             " ".join(f"sup{d}={e:.3e}" for d, e in row.err_super.items()))
    return row


def run_experiment(config: ExperimentConfig) -> ExperimentReport:
    problem = fem.get_benchmark(config.benchmark) if config.has_fem else None
    rows = [run_level(config, h, problem) for h in config.sizes]
    alpha = math.nan
    if len(rows) >= 2:
        alpha = metrics.estimate_alpha([(r.h, r.mesh_report.h_err) for r in rows])
        a = alpha if np.isfinite(alpha) else 1.0
        for r in rows:
            bad = metrics.classify_bad_edges(r.mesh, config.size_field(r.h), config.threshold_factor, a)
            r.mesh_report = replace(r.mesh_report, bad_edges=bad)
    orders = {}
    if problem is not None:
        for d in config.degrees:
            pts = [(r.h, r.err_super[d]) for r in rows]
            orders[d] = fem.convergence_order(pts) if len(pts) > 1 else []
    return ExperimentReport(config, rows, alpha, orders)


@dataclass
class LShapeStudy:
    report: ExperimentReport
    slopes: dict
    reference: dict = field(default_factory=lambda: {1: -0.5, 2: -1.0})

    def table(self):
        out = []
        for r in self.report.rows:
            out.append({
                "h": r.h,
                "N_free_p1": r.n_free.get(1, math.nan),
                "N_free_p2": r.n_free.get(2, math.nan),
                "err_super_p1": r.err_super.get(1, math.nan),
                "err_super_p2": r.err_super.get(2, math.nan),
                "err_h1_p1": r.err_h1.get(1, math.nan),
                "err_h1_p2": r.err_h1.get(2, math.nan),
            })
        return out


def loglog_slope(n, e):
    """Least-squares slope of log e against log n; None below two points."""
    n, e = np.asarray(n, float), np.asarray(e, float)
    if len(n) < 2:
        return None
    return float(np.polyfit(np.log(n), np.log(e), 1)[0])


def run_lshape_study(config: ExperimentConfig) -> LShapeStudy:
    if config.domain != "l_shape" or config.benchmark != "lshape":
        raise ConfigurationError("the corner-singularity study needs domain l_shape")
    report = run_experiment(config)
    slopes = {
        d: loglog_slope([r.n_free[d] for r in report.rows], [r.err_super[d] for r in report.rows])
        for d in config.degrees
    }
    return LShapeStudy(report, slopes)


# -- outputs -------------------------------------------------------------------


def _fmt(v):
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return ""
    return f"{v:.15g}"


def write_csv(path, rows, columns):
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])
    return path


def read_csv(path):
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def _tag(h):
    return f"h{h:g}".replace(".", "p")


def acceptance_lines(report: ExperimentReport, slopes=None):
    """Human-readable pass/fail lines against the reproduction targets."""
    cfg = report.config
    lines = []
    bands = BANDS.get(cfg.domain, {})
    for d, (lo, hi, how) in bands.items():
        o = report.orders.get(d, [])
        if not o:
            continue
        if how == "each":
            ok = all(lo <= x <= hi for x in o)
            desc = ", ".join(f"{x:.2f}" for x in o)
        else:
            m = float(np.mean(o))
            ok = lo <= m <= hi
            desc = f"mean {m:.2f}"
        lines.append(f"{'PASS' if ok else 'FAIL'} P{d} supercloseness orders {desc} in [{lo}, {hi}]")
    if cfg.domain in QAVG_MIN:
        qmin = QAVG_MIN[cfg.domain]
        rows = [r for r in report.rows if cfg.domain != "equilateral_triangle" or r.h <= 0.1 + 1e-12]
        if rows:
            q = min(r.mesh_report.q_avg for r in rows)
            lines.append(f"{'PASS' if q >= qmin else 'FAIL'} Q_avg min {q:.4f} >= {qmin}")
    if slopes:
        for d, s in slopes.items():
            ref = {1: -0.5, 2: -1.0}[d]
            if s is None:
                lines.append(f"N/A  P{d} slope vs N undefined (fewer than two levels)")
            else:
                lines.append(f"{'PASS' if s < ref else 'FAIL'} P{d} slope vs free DOFs {s:.3f} < {ref}")
    lines.append(f"alpha_hat = {report.alpha_hat:.4g}")
    return lines


def emit_outputs(report, out_dir):
    """Write table.csv, mesh_stats.csv, meshes/, bubbles/ and summary.txt."""
    study = None
    if isinstance(report, LShapeStudy):
        study, report = report, report.report
    if not report.rows:
        raise ValueError("empty report: nothing to write")
    out = Path(out_dir)
    try:
        (out / "meshes").mkdir(parents=True, exist_ok=True)
        (out / "bubbles").mkdir(parents=True, exist_ok=True)
        written = [write_csv(out / "table.csv", report.table(), CSV_COLUMNS)]
        stats = [r.mesh_report.as_row(report.config.domain, r.h, report.alpha_hat) for r in report.rows]
        written.append(write_csv(out / "mesh_stats.csv", stats, metrics.CSV_FIELDS))
        name = report.config.domain
        for r in report.rows:
            stem = out / "meshes" / f"{name}_{_tag(r.h)}"
            written += io.write_mesh(stem, r.mesh)
            written.append(io.write_svg(stem.with_suffix(".svg"), r.mesh))
            written.append(io.write_bubbles(out / "bubbles" / f"{name}_{_tag(r.h)}.txt", r.bubbles, r.mobility))
        lines = [f"domain {name}, benchmark {report.config.benchmark}, seed {report.config.seed}"]
        if study is not None:
            written.append(write_csv(out / "lshape.csv", study.table(), LSHAPE_COLUMNS))
            lines += acceptance_lines(report, study.slopes)
        else:
            lines += acceptance_lines(report)
        (out / "summary.txt").write_text("\n".join(lines) + "\n")
        (out / "config.txt").write_text(format_config(report.config))
        written += [out / "summary.txt", out / "config.txt"]
    except OSError as exc:
        raise OSError(f"cannot write outputs under {out}: {exc}") from exc
    return written


def run(config: ExperimentConfig, out_dir=None):
    """Run the study matching the config's domain and write its outputs."""
    if config.domain == "l_shape" and config.has_fem:
        result = run_lshape_study(config)
    else:
        result = run_experiment(config)
    files = emit_outputs(result, out_dir or config.output_dir)
    return result, files
