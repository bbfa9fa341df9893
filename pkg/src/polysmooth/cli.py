"""Command-line interface.

Exit codes: 0 all checks passed, 1 check failure, 2 configuration or
assumption failure, 3 internal error.
"""

from __future__ import annotations

import csv
import json
import os
import sys

import click
import numpy as np

from . import harness, surface
from .errors import PolysmoothError
from .gaussmap import nhat_eval
from .metric import check_metric_assumptions, metric_from_json
from .polytope import Polytope, check_assumptions, polytope_constants
from .smoothing import uhat_jet

EXIT_CHECK_FAILURE = 1
EXIT_CONFIG_FAILURE = 2
EXIT_INTERNAL = 3


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def _emit(data):
    click.echo(json.dumps(_jsonable(data), indent=2, sort_keys=True))


def _parse_point(text):
    return np.array([float(v) for v in text.split(",")], dtype=np.float64)


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True),
              default=None, help="Scenario configuration JSON.")
@click.option("--seed", type=int, default=None, help="Override the RNG seed.")
@click.option("--out", "out_dir", type=click.Path(), default="out",
              help="Output directory for reports and tables.")
@click.pass_context
def main(ctx, config_path, seed, out_dir):
    """Smooth-max polytope regularization toolkit."""
    ctx.ensure_object(dict)
    ctx.obj["config_path"] = config_path
    ctx.obj["seed"] = seed
    ctx.obj["out"] = out_dir


def _load_config(obj) -> harness.ScenarioConfig:
    if obj.get("config_path"):
        cfg = harness.ScenarioConfig.from_json(obj["config_path"])
    else:
        cfg = harness.default_config()
    if obj.get("seed") is not None:
        cfg.seed = obj["seed"]
    return cfg


def _context(obj) -> harness.ScenarioContext:
    return harness.ScenarioContext(_load_config(obj))


def _guarded(fn):
    """Map exceptions to the documented exit codes."""
    def runner(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (PolysmoothError, ValueError, KeyError, OSError,
                json.JSONDecodeError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_CONFIG_FAILURE)
        except Exception as exc:  # pragma: no cover - defensive
            click.echo(f"internal error: {exc}", err=True)
            sys.exit(EXIT_INTERNAL)
    return runner


@main.command("check-polytope")
@click.argument("polytope_file", type=click.Path(exists=True))
@click.pass_context
def check_polytope_cmd(ctx, polytope_file):
    """Validate boundedness, non-redundancy, and the angle condition."""
    @_guarded
    def run():
        poly = Polytope.from_json(polytope_file)
        report = check_assumptions(poly)
        _emit(report.to_dict())
        sys.exit(0 if report.passed else EXIT_CONFIG_FAILURE)
    run()


@main.command("check-metric")
@click.pass_context
def check_metric_cmd(ctx):
    """Verify the curvature comparison hypotheses of the scenario metric."""
    @_guarded
    def run():
        cfg = _load_config(ctx.obj)
        poly = Polytope.from_json(cfg.polytope)
        rep = check_assumptions(poly)
        if not rep.passed:
            click.echo("error: polytope assumptions failed", err=True)
            sys.exit(EXIT_CONFIG_FAILURE)
        metric = metric_from_json(cfg.metric, n=poly.n)
        mrep = check_metric_assumptions(
            poly, metric, harness._rng_for(cfg.seed, "metric-hypotheses"))
        _emit(mrep.to_dict())
        sys.exit(0 if mrep.passed else EXIT_CONFIG_FAILURE)
    run()


@main.command("constants")
@click.pass_context
def constants_cmd(ctx):
    """Certified non-degeneracy constants of the scenario polytope."""
    @_guarded
    def run():
        cfg = _load_config(ctx.obj)
        poly = Polytope.from_json(cfg.polytope)
        consts = polytope_constants(poly, certify=2000, seed=cfg.seed)
        _emit(consts.to_dict())
    run()


@main.command("smooth-eval")
@click.option("--point", required=True, help="Comma-separated coordinates.")
@click.option("--k", "level", type=int, default=None,
              help="Recursion level (defaults to the last).")
@click.pass_context
def smooth_eval_cmd(ctx, point, level):
    """Value, gradient, and Hessian of the smoothed maximum at a point."""
    @_guarded
    def run():
        c = _context(ctx.obj)
        k = c.polytope.q if level is None else level
        jet = uhat_jet(k, _parse_point(point), c.schedule, c.polytope)
        _emit({"level": k, "value": jet.value,
               "gradient": jet.gradient, "hessian": jet.hessian})
    run()


@main.command("nhat")
@click.option("--point", required=True, help="Comma-separated coordinates.")
@click.pass_context
def nhat_cmd(ctx, point):
    """Spherical map, companion normal, and per-level case chain."""
    @_guarded
    def run():
        c = _context(ctx.obj)
        val = nhat_eval(c.polytope.q, _parse_point(point), c.schedule,
                        c.polytope, c.metric)
        _emit({
            "n_hat": val.vector,
            "nu_hat": val.companion,
            "cases": list(val.case_tags),
            "angles": [
                None if a is None else
                {"alpha": a.alpha, "theta": a.theta, "phi": a.phi}
                for a in val.angles
            ],
        })
    run()


def _write_mesh_csv(mesh, path, labels=None):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        header = ["x", "y", "z"][: mesh.points.shape[1]] \
            + ["radius", "label", "H", "trace_norm", "deficit",
               "weight_g", "flagged"]
        writer.writerow(header)
        labels = labels or mesh.labels()
        for i in range(len(mesh)):
            row = list(mesh.points[i]) + [
                mesh.radii[i], str(labels[i]), mesh.mean_curvature[i],
                "" if mesh.trace_norm is None else mesh.trace_norm[i],
                "" if mesh.deficit is None else mesh.deficit[i],
                mesh.weight_g[i],
                "" if mesh.flags is None else int(mesh.flags[i]),
            ]
            writer.writerow([f"{v:.12g}" if isinstance(v, float) else v
                             for v in row])


@main.command("mesh")
@click.option("--level", type=int, default=None, help="Subdivision level.")
@click.pass_context
def mesh_cmd(ctx, level):
    """Mesh the smoothed boundary; write samples.csv and a summary."""
    @_guarded
    def run():
        c = _context(ctx.obj)
        mesh = c.mesh(level=level)
        os.makedirs(ctx.obj["out"], exist_ok=True)
        path = os.path.join(ctx.obj["out"], "samples.csv")
        _write_mesh_csv(mesh, path)
        _emit({
            "samples": len(mesh),
            "total_area_euclidean": mesh.total_area_eucl,
            "total_area_metric": mesh.total_area_g,
            "flagged": int(mesh.flags.sum()),
            "csv": path,
        })
    run()


@main.command("classify-all")
@click.option("--level", type=int, default=None, help="Subdivision level.")
@click.pass_context
def classify_all_cmd(ctx, level):
    """Region labels with their re-checked slab inequalities."""
    @_guarded
    def run():
        c = _context(ctx.obj)
        mesh = c.mesh(level=level)
        ok = surface.verify_labels_batch(mesh.chain, c.field.rates,
                                         mesh.kinds, mesh.indices)
        labels = mesh.labels()
        counts = {}
        for lab in labels:
            counts[str(lab)] = counts.get(str(lab), 0) + 1
        os.makedirs(ctx.obj["out"], exist_ok=True)
        path = os.path.join(ctx.obj["out"], "labels.csv")
        _write_mesh_csv(mesh, path, labels=labels)
        _emit({"counts": dict(sorted(counts.items())),
               "verified": int(ok.sum()), "samples": len(mesh), "csv": path})
        sys.exit(0 if bool(ok.all()) else EXIT_CHECK_FAILURE)
    run()


@main.command("deficit-field")
@click.option("--level", type=int, default=None, help="Subdivision level.")
@click.pass_context
def deficit_field_cmd(ctx, level):
    """Curvature deficit per sample plus an angular heatmap."""
    @_guarded
    def run():
        c = _context(ctx.obj)
        mesh = c.mesh(level=level)
        out = ctx.obj["out"]
        os.makedirs(out, exist_ok=True)
        csv_path = os.path.join(out, "deficit.csv")
        _write_mesh_csv(mesh, csv_path)
        svg_path = None
        if mesh.points.shape[1] == 3:
            svg_path = os.path.join(out, "deficit_heatmap.svg")
            with open(svg_path, "w") as fh:
                fh.write(harness.deficit_heatmap_svg(mesh))
        ok = ~mesh.flags
        _emit({
            "max_deficit": float(mesh.deficit[ok].max()) if ok.any() else None,
            "flagged": int(mesh.flags.sum()),
            "csv": csv_path,
            "svg": svg_path,
        })
    run()


@main.command("morrey")
@click.option("--sigma", type=float, default=None, help="Deficit exponent.")
@click.option("--level", type=int, default=None, help="Subdivision level.")
@click.pass_context
def morrey_cmd(ctx, sigma, level):
    """Scaled ball integrals of the deficit and their supremum."""
    @_guarded
    def run():
        c = _context(ctx.obj)
        mesh = c.mesh(level=level)
        est = surface.morrey_norm(mesh, sigma or c.sigma,
                                  rng=c.rng("morrey-cli"))
        out = ctx.obj["out"]
        os.makedirs(out, exist_ok=True)
        path = os.path.join(out, "morrey.csv")
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["center", "radius", "value"])
            for p, r, v in est.table:
                writer.writerow([";".join(f"{x:.9g}" for x in p),
                                 f"{r:.9g}", f"{v:.12g}"])
        _emit({"sigma": est.sigma, "sup_value": est.sup_value,
               "flagged_fraction": est.flagged_fraction, "csv": path})
    run()


@main.command("sweep")
@click.option("--gammas", default=None,
              help="Comma-separated band parameters (overrides config).")
@click.pass_context
def sweep_cmd(ctx, gammas):
    """Morrey supremum across a band-parameter sweep."""
    @_guarded
    def run():
        c = _context(ctx.obj)
        grid = [float(g) for g in gammas.split(",")] if gammas else None
        if not grid and not c.config.sweep_gammas:
            click.echo("error: no sweep grid configured", err=True)
            sys.exit(EXIT_CONFIG_FAILURE)
        rows = harness.sweep_gamma(c, gammas=grid)
        out = ctx.obj["out"]
        os.makedirs(out, exist_ok=True)
        path = os.path.join(out, "sweep.csv")
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["gamma", "lambda0", "sigma", "morrey_sup"])
            for r in rows:
                writer.writerow([r["gamma"], r["lambda0"], r["sigma"],
                                 f"{r['morrey_sup']:.12g}"])
        svg = os.path.join(out, "decay.svg")
        with open(svg, "w") as fh:
            fh.write(harness.decay_curve_svg(rows))
        slope = harness._loglog_slope([r["gamma"] for r in rows],
                                      [r["morrey_sup"] for r in rows])
        _emit({"rows": rows, "loglog_slope": slope, "csv": path, "svg": svg})
    run()


@main.command("verify-all")
@click.pass_context
def verify_all_cmd(ctx):
    """Run the registered verification checks and emit the full report."""
    try:
        cfg = _load_config(ctx.obj)
        report = harness.run_suite(cfg)
    except (PolysmoothError, ValueError, KeyError, OSError,
            json.JSONDecodeError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_CONFIG_FAILURE)
    except Exception as exc:  # pragma: no cover - defensive
        click.echo(f"internal error: {exc}", err=True)
        sys.exit(EXIT_INTERNAL)
    paths = harness.emit_report(report, ctx.obj["out"])
    for c in report.checks:
        mark = {"pass": "PASS", "fail": "FAIL",
                "skip": "SKIP", "error": "ERROR"}[c.status]
        extra = f" ({c.notes})" if c.notes else ""
        click.echo(f"[{mark}] {c.check_id}{extra}")
    click.echo(f"report: {paths[0]}")
    if report.errored:
        sys.exit(EXIT_INTERNAL)
    if report.failed:
        sys.exit(EXIT_CHECK_FAILURE)
    sys.exit(0)


if __name__ == "__main__":
    main()
