"""Command line entry point ``bubblemesh``."""
from __future__ import annotations

import logging
import sys
from pathlib import Path

import click
import numpy as np

from . import bubbles, fem, harness, io, metrics
from .geometry import ConfigurationError, get_domain
from .sizing import constant, parse_size
from .triangulate import MeshError, triangulate


def _fail(exc):
    raise click.ClickException(str(exc)) from exc


@click.group()
@click.option("-v", "--verbose", count=True, help="-v for progress, -vv for debug output.")
def main(verbose):
    """Bubble placement meshing and P1/P2 superconvergence experiments."""
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--output-dir", default=None, help="Overrides output_dir from the file.")
@click.option("--seed", type=int, default=None)
@click.option("--sizes", default=None, help="Comma-separated size series, overrides the file.")
def run(config_path, output_dir, seed, sizes):
    """Run an experiment described by a key = value config file."""
    try:
        over = {"output_dir": output_dir, "seed": seed}
        if sizes:
            over["sizes"] = tuple(float(s) for s in sizes.split(","))
        cfg = harness.load_config(config_path, **over)
        _, files = harness.run(cfg)
    except (ConfigurationError, harness.ExperimentError, OSError) as exc:
        _fail(exc)
    out = Path(cfg.output_dir)
    click.echo((out / "summary.txt").read_text(), nl=False)
    click.echo(f"wrote {len(files)} files under {out}")


@main.command()
@click.option("--domain", required=True, help="Preset name or a vertex-loop file.")
@click.option("--size-const", type=float, default=None, help="Constant target spacing h.")
@click.option("--size", "size_spec", default=None, help="radial-ring, expr:<expression> or a number.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--max-inner-steps", type=int, default=3000, show_default=True)
@click.option("--tol-force", type=float, default=1e-3, show_default=True)
@click.option("--max-rounds", type=int, default=20, show_default=True)
@click.option("--fill", type=float, default=1.0, show_default=True, help="Initial seeding density factor.")
@click.option("--dump-bubbles", type=click.Path(dir_okay=False), default=None)
@click.option("--snapshot-every", type=int, default=0, help="Steps between bubble snapshots (0: final only).")
@click.option("--svg", type=click.Path(dir_okay=False), default=None)
@click.option("--out", "stem", default=None, help="Write <stem>.node and <stem>.ele.")
def mesh(domain, size_const, size_spec, seed, max_inner_steps, tol_force, max_rounds, fill,
         dump_bubbles, snapshot_every, svg, stem):
    """Generate a BPM mesh and print its quality report."""
    if (size_const is None) == (size_spec is None):
        raise click.UsageError("give exactly one of --size-const or --size")
    try:
        geom = get_domain(domain)
        size = constant(size_const) if size_const is not None else parse_size(size_spec)
        dump = open(dump_bubbles, "w") if dump_bubbles else None
        try:
            def snap(step, s):
                io.write_bubbles(dump, s.pos, s.mobility)
                dump.write("\n")

            sys_ = bubbles.initialize(geom, size, seed=seed, fill=fill)
            hook = snap if dump else None
            rep = bubbles.inner_loop(sys_, max_inner_steps, tol_force, snapshot=hook, snapshot_every=snapshot_every)
            res = bubbles.outer_loop(sys_, max_rounds, max_inner_steps, tol_force,
                                     snapshot=hook, snapshot_every=snapshot_every)
            if dump:
                io.write_bubbles(dump, res.system.pos, res.system.mobility)
        finally:
            if dump:
                dump.close()
        m = triangulate(res.system.pos, geom)
        r = metrics.mesh_report(m, size)
    except (ConfigurationError, MeshError, bubbles.SimulationDivergenceError, OSError) as exc:
        _fail(exc)
    if stem:
        io.write_mesh(stem, m)
    if svg:
        io.write_svg(svg, m)
    click.echo(f"domain {geom.name}: {m.n_nodes} nodes, {m.n_tris} triangles, {m.n_edges} edges")
    click.echo(f"inner loop: {rep.steps_taken} steps, residual {rep.max_residual_force:.3e}")
    hist = " ".join(f"{e:.4f}" for e in res.epsilon_history)
    click.echo(f"epsilon per round: {hist} (kept round {res.best_round})")
    click.echo(
        f"q_avg {r.q_avg:.6f}  q_min {r.q_min:.4f}  edge mean {r.edge_mean:.6g}  var {r.edge_var:.3e}  "
        f"h_err {r.h_err:.3e}  max err {r.max_edge_err:.3e}  bad edges {r.n_bad_edges}"
    )


@main.command(name="fem")
@click.option("--node", "node_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--ele", "ele_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--degree", type=click.IntRange(1, 2), default=1, show_default=True)
@click.option("--benchmark", required=True, type=click.Choice(sorted(fem.BENCHMARKS)))
@click.option("--solution", type=click.Path(dir_okay=False), default=None, help="Write 'index value' lines.")
def fem_cmd(node_path, ele_path, degree, benchmark, solution):
    """Solve a benchmark Poisson problem on a mesh read from .node/.ele files."""
    try:
        m = io.read_mesh(node_path, ele_path)
        problem = fem.get_benchmark(benchmark)
        space, uh, sup, err = harness.solve_level(m, problem, degree)
    except (ConfigurationError, MeshError, fem.SolverError, ValueError) as exc:
        _fail(exc)
    if solution:
        io.write_solution(solution, uh.coeffs)
    click.echo(f"P{degree}: {space.n_dofs} dofs ({space.n_free} free)")
    click.echo(f"|u_h - interpolant|_1 = {sup.full:.6e}  (seminorm {sup.semi:.6e})")
    click.echo(f"|u_h - u|_1           = {err.full:.6e}  (seminorm {err.semi:.6e})")


@main.command()
@click.option("--dir", "out_dir", required=True, type=click.Path(exists=True, file_okay=False))
def report(out_dir):
    """Print the table and summary of a finished run."""
    out = Path(out_dir)
    table = out / "table.csv"
    if not table.exists():
        _fail(FileNotFoundError(f"{table} not found"))
    rows = harness.read_csv(table)
    cols = ["h", "N_nodes", "q_avg", "h_err", "err_super_p1", "order_p1", "err_super_p2", "order_p2"]
    click.echo(" ".join(f"{c:>12}" for c in cols))
    for r in rows:
        cells = []
        for c in cols:
            v = r.get(c, "")
            try:
                f = float(v)
                cells.append(f"{f:>12.4g}" if c not in ("N_nodes",) else f"{int(f):>12d}")
            except ValueError:
                cells.append(f"{v:>12}")
        click.echo(" ".join(cells))
    summary = out / "summary.txt"
    if summary.exists():
        click.echo(summary.read_text(), nl=False)


if __name__ == "__main__":
    sys.exit(main())
