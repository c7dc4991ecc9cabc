"""Scenario configuration, orchestration and artifact export.

Configs are flat INI files with typed sections (domain, metric, set, grid,
analysis, run).  Six scenarios ship with the package; ``--config`` accepts
either a file path or a bundled scenario name.  Outputs under ``--out`` are
deterministic for a fixed config and seed: field.csv / field.bin,
cutgraph.json, levels_<t>.json, report.json and render.svg.
"""

from __future__ import annotations

import argparse
import configparser
import json
import os
import sys
from dataclasses import dataclass, field as dfield
from importlib import resources
from pathlib import Path

import numpy as np

from . import analysis as ana
from .chart import Domain, Grid, plane_window, torus
from .cutlocus import CutGraph, classify, extract_graph, intrinsic_distance
from .distance import DistanceField, distance_field
from .errors import ConfigError, FinslerError
from .metric import MetricSpec, RasterField, make_euclidean, make_riemannian, make_zermelo
from .sets import Circle, ClosedSet, Disc, Point, Polyline

COMMANDS = ("field", "cutlocus", "levels", "verify", "all")
KNOWN_CHECKS = ("gradient", "lengths", "structure", "levels", "lipschitz")

# physical defaults, dumped next to every run's artifacts
DEFAULTS = {
    "grid_h": 1.0 / 128.0,            # window units, when [grid] h is absent
    "integrator_tol": 1e-8,
    "field_tol": "3 * h * Lip",       # Lip = max F over unit chart directions
    "segment_slack": "0.5 * h * Lip",
    "continuum_shell": "2 * field_tol",
    "theta_sep_deg": 5.0,
    "segment_cap": 64,
    "set_spacing": "h / 2",
    "fan_directions": 720,
    "lattice_search": 2,
    "local_tree_ball": "10 * h",
}


@dataclass
class Scenario:
    name: str
    metric: MetricSpec
    cset: ClosedSet
    domain: Domain
    grid_h: float
    levels: list
    checks: list
    seed: int
    delta_pairs: list = dfield(default_factory=list)
    match_points: list = dfield(default_factory=list)
    match_tol: float = 0.05

    def grid(self) -> Grid:
        return Grid(self.domain, self.grid_h)


def bundled_scenarios() -> list:
    return ["euclid-two-points", "euclid-circle", "randers-wind05-point",
            "torus-point", "example26", "euclid-three-points"]


def _bundled_file(name: str):
    ref = resources.files("finslercut") / "scenarios" / f"{name}.ini"
    if not ref.is_file():
        raise ConfigError(f"unknown bundled scenario {name!r}")
    return ref


def _floats(raw: str, key: str, n: int | None = None):
    try:
        vals = [float(t) for t in raw.split()]
    except ValueError as exc:
        raise ConfigError(f"{key}: expected numbers, got {raw!r}") from exc
    if n is not None and len(vals) != n:
        raise ConfigError(f"{key}: expected {n} numbers, got {len(vals)}")
    return vals


def _parse_metric(cp, base: Path | None, domain) -> MetricSpec:
    sec = cp["metric"]
    kind = sec.get("kind", "").strip()
    if kind == "euclidean":
        return make_euclidean()
    if kind == "riemannian":
        if "a" in sec:
            c = _floats(sec["a"], "metric.a", 3)
            return make_riemannian(*c)
        try:
            return make_riemannian(sec["a11"], sec.get("a12", "0"), sec["a22"])
        except KeyError as exc:
            raise ConfigError(f"metric.{exc.args[0]}: missing") from exc
    if kind == "randers":
        hvals = _floats(sec.get("h", "1 0 1"), "metric.h", 3)
        h = np.array([[hvals[0], hvals[1]], [hvals[1], hvals[2]]])
        if "wind_raster" in sec:
            path = Path(sec["wind_raster"])
            if base is not None and not path.is_absolute():
                path = base / path
            try:
                data = np.load(path)
                origin = data["origin"]
                spacing = float(data["spacing"])
                periodic = bool(data.get("periodic", False))
                w1 = RasterField(origin, spacing, data["wx"], periodic)
                w2 = RasterField(origin, spacing, data["wy"], periodic)
            except Exception as exc:
                raise ConfigError(f"metric.wind_raster: {exc}") from exc
            return make_zermelo(h, (w1, w2), domain=domain)
        if "wind" not in sec:
            raise ConfigError("metric.wind: missing for randers kind")
        toks = sec["wind"].split()
        if len(toks) != 2:
            raise ConfigError("metric.wind: expected two components")
        return make_zermelo(h, tuple(toks), domain=domain)
    raise ConfigError(f"metric.kind: unknown kind {kind!r}")


def _parse_primitive(key: str, raw: str):
    toks = raw.split()
    if not toks:
        raise ConfigError(f"{key}: empty primitive")
    tag, args = toks[0], toks[1:]
    try:
        if tag == "point":
            x, y = (float(t) for t in args)
            return Point((x, y))
        if tag == "circle":
            cx, cy, r = (float(t) for t in args)
            return Circle((cx, cy), r)
        if tag == "polyline":
            closed = False
            if args and args[-1] == "closed":
                closed = True
                args = args[:-1]
            vals = [float(t) for t in args]
            if len(vals) < 4 or len(vals) % 2:
                raise ValueError("need an even number of coordinates, at least 4")
            pts = tuple((vals[i], vals[i + 1]) for i in range(0, len(vals), 2))
            return Polyline(pts, closed)
        if tag == "disc":
            cx, cy, r = (float(t) for t in args[:3])
            rest = args[3:]
            bites = []
            while rest:
                if rest[0] != "bite":
                    raise ValueError(f"expected 'bite', got {rest[0]!r}")
                bx, by, br = (float(t) for t in rest[1:4])
                bites.append((bx, by, br))
                rest = rest[4:]
            return Disc((cx, cy), r, tuple(bites))
    except (ValueError, IndexError) as exc:
        raise ConfigError(f"{key}: {exc}") from exc
    raise ConfigError(f"{key}: unknown primitive {tag!r}")


def parse_config(src) -> Scenario:
    """Parse a scenario from a path, bundled name, or config text."""
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    base = None
    if isinstance(src, (str, Path)) and str(src) in bundled_scenarios():
        name = str(src)
        cp.read_string(_bundled_file(name).read_text())
    else:
        path = Path(src)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        name = path.stem
        base = path.parent
        try:
            cp.read(path)
        except configparser.Error as exc:
            raise ConfigError(str(exc)) from exc

    for required in ("domain", "metric", "set", "grid"):
        if required not in cp:
            raise ConfigError(f"{required}: missing section")

    mode = cp["domain"].get("mode", "plane").strip()
    bounds = _floats(cp["domain"].get("bounds", ""), "domain.bounds", 4)
    if mode == "plane":
        domain = plane_window(*bounds, pad=0.5 * max(bounds[1] - bounds[0],
                                                     bounds[3] - bounds[2]))
    elif mode == "torus":
        if bounds[0] != 0 or bounds[2] != 0:
            raise ConfigError("domain.bounds: torus bounds must start at 0")
        domain = torus(bounds[1], bounds[3])
    else:
        raise ConfigError(f"domain.mode: unknown mode {mode!r}")

    metric = _parse_metric(cp, base, domain)

    prims = []
    for key in sorted(cp["set"]):
        if key.startswith("primitive"):
            prims.append(_parse_primitive(f"set.{key}", cp["set"][key]))
    if not prims:
        raise ConfigError("set: needs at least one primitive.* entry")
    cset = ClosedSet(prims)

    raw_h = cp["grid"].get("h", "").strip()
    if not raw_h:
        h = DEFAULTS["grid_h"] * max(bounds[1] - bounds[0], bounds[3] - bounds[2])
    else:
        try:
            h = float(raw_h)
        except ValueError as exc:
            raise ConfigError(f"grid.h: {raw_h!r} is not a number") from exc
    if h <= 0:
        raise ConfigError("grid.h: must be positive")

    levels = []
    checks = list(KNOWN_CHECKS)
    delta_pairs = []
    match_points = []
    match_tol = 0.05
    if "analysis" in cp:
        if "levels" in cp["analysis"]:
            levels = _floats(cp["analysis"]["levels"], "analysis.levels")
        if "checks" in cp["analysis"]:
            checks = cp["analysis"]["checks"].split()
            for c in checks:
                if c not in KNOWN_CHECKS:
                    raise ConfigError(f"analysis.checks: unknown check {c!r}")
        if "delta_pairs" in cp["analysis"]:
            vals = _floats(cp["analysis"]["delta_pairs"], "analysis.delta_pairs")
            if len(vals) % 4:
                raise ConfigError("analysis.delta_pairs: expected quadruples")
            delta_pairs = [((vals[i], vals[i + 1]), (vals[i + 2], vals[i + 3]))
                           for i in range(0, len(vals), 4)]
        if "match_points" in cp["analysis"]:
            vals = _floats(cp["analysis"]["match_points"], "analysis.match_points")
            if len(vals) % 2:
                raise ConfigError("analysis.match_points: expected coordinate pairs")
            match_points = [(vals[i], vals[i + 1]) for i in range(0, len(vals), 2)]
        if "match_tol" in cp["analysis"]:
            match_tol = _floats(cp["analysis"]["match_tol"], "analysis.match_tol", 1)[0]

    seed = 0
    if "run" in cp and "seed" in cp["run"]:
        try:
            seed = int(cp["run"]["seed"])
        except ValueError as exc:
            raise ConfigError(f"run.seed: {cp['run']['seed']!r} is not an integer") from exc

    return Scenario(name, metric, cset, domain, h, levels, checks, seed, delta_pairs)


# ---------------------------------------------------------------------------
# rendering

def render_svg(field: DistanceField, graph: CutGraph | None, cset: ClosedSet,
               path, n_levels: int = 8, size: int = 640) -> None:
    """Field contours (grey), set samples (black) and cut graph (red)."""
    from skimage import measure

    dom = field.domain
    w = dom.xmax - dom.xmin
    hgt = dom.ymax - dom.ymin
    H = int(size * hgt / w)

    def sx(x):
        return (x - dom.xmin) / w * size

    def sy(y):
        return H - (y - dom.ymin) / hgt * H

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {size} {H}" '
             f'width="{size}" height="{H}">',
             f'<rect width="{size}" height="{H}" fill="white"/>']
    finite = field.values[np.isfinite(field.values)]
    for t in np.linspace(0.1 * finite.max(), 0.9 * finite.max(), n_levels):
        for c in measure.find_contours(field.values, t):
            pts = field.grid.origin + c * field.grid.h
            d = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in pts)
            parts.append(f'<polyline points="{d}" fill="none" stroke="#bbbbbb" '
                         f'stroke-width="0.7"/>')
    samples = cset.sampled(field.eps).points
    for p in samples[:: max(len(samples) // 400, 1)]:
        parts.append(f'<circle cx="{sx(p[0]):.2f}" cy="{sy(p[1]):.2f}" r="1.4" '
                     f'fill="black"/>')
    if graph is not None:
        for e in graph.edges:
            runs = [[e.polyline[0]]]
            for a, b in zip(e.polyline[:-1], e.polyline[1:]):
                if np.max(np.abs(b - a)) > 0.5 * min(w, hgt):  # seam jump
                    runs.append([])
                runs[-1].append(b)
            for run in runs:
                if len(run) < 2:
                    continue
                d = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in run)
                parts.append(f'<polyline points="{d}" fill="none" stroke="#cc2222" '
                             f'stroke-width="1.6"/>')
        for n in graph.nodes:
            color = "#2222cc" if not n.synthetic else "#888888"
            parts.append(f'<circle cx="{sx(n.pos[0]):.2f}" cy="{sy(n.pos[1]):.2f}" '
                         f'r="3" fill="{color}"/>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts))


# ---------------------------------------------------------------------------
# orchestration

def _worker_bound() -> int:
    raw = os.environ.get("FCL_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"FCL_THREADS: {raw!r} is not an integer")
    if n < 1:
        raise ConfigError("FCL_THREADS: must be >= 1")
    return n


def run(config, command: str, out_dir, grid_h: float | None = None,
        seed: int | None = None, quiet: bool = False) -> int:
    """Execute one command for a scenario; returns the process exit code."""
    _worker_bound()  # validates the bound; execution is sequential
    if command not in COMMANDS:
        raise ConfigError(f"command: unknown command {command!r}")
    sc = parse_config(config)
    if grid_h is not None:
        sc.grid_h = grid_h
    if seed is not None:
        sc.seed = seed
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    def log(msg):
        if not quiet:
            print(msg)

    artifacts = ["defaults.json"]
    with open(out / "defaults.json", "w") as fh:
        json.dump(DEFAULTS, fh, sort_keys=True, indent=1)
    log(f"[{sc.name}] building distance field (h={sc.grid_h:g})")
    field = distance_field(sc.metric, sc.cset, sc.grid())

    if command in ("field", "verify", "all"):
        field.to_csv(out / "field.csv")
        field.to_binary(out / "field.bin")
        artifacts += ["field.csv", "field.bin"]

    graph = None
    if command in ("cutlocus", "verify", "all"):
        log(f"[{sc.name}] extracting cut locus")
        graph = extract_graph(sc.metric, sc.cset, field)
        graph.to_json(out / "cutgraph.json")
        render_svg(field, graph, sc.cset, out / "render.svg")
        artifacts += ["cutgraph.json", "render.svg"]

    level_objs = []
    if command in ("levels", "verify", "all"):
        for t in sc.levels:
            ls = ana.level_sets(field, t, sc.metric, sc.cset)
            fname = f"levels_{t:g}.json"
            with open(out / fname, "w") as fh:
                json.dump(ls.as_dict(), fh, sort_keys=True, indent=1)
            artifacts.append(fname)
            level_objs.append(ls)

    if command not in ("verify", "all"):
        log(f"[{sc.name}] done")
        return 0

    report = _verify(sc, field, graph, level_objs, artifacts, log)
    with open(out / "report.json", "w") as fh:
        json.dump(report, fh, sort_keys=True, indent=1)
    log(f"[{sc.name}] report: {'PASS' if report['passed'] else 'FAIL'}")
    return 0 if report["passed"] else 1


def _verify(sc: Scenario, field, graph, level_objs, artifacts, log) -> dict:
    rng = np.random.default_rng(sc.seed)
    reports = []
    if "gradient" in sc.checks:
        log(f"[{sc.name}] gradient characterization")
        reports.append(ana.verify_gradient(sc.metric, sc.cset, field, graph, rng))
    if "lengths" in sc.checks:
        log(f"[{sc.name}] length consistency")
        paths = ana.sample_geodesics(sc.metric, field, rng, count=20)
        reports.append(ana.verify_lengths(sc.metric, paths))
    if "structure" in sc.checks and graph is not None:
        log(f"[{sc.name}] cut locus structure")
        reports.append(ana.structure_report(sc.metric, sc.cset, field, graph, rng))
    if "lipschitz" in sc.checks:
        log(f"[{sc.name}] calculus along lines")
        reports.append(ana.lipschitz_report(sc.metric, sc.cset, field, rng))

    levels_out = []
    levels_pass = True
    if "levels" in sc.checks and level_objs:
        flagged = (ana.critical_values(sc.metric, sc.cset, field, graph)
                   if graph is not None else [])
        for ls in level_objs:
            entry = {"t": ls.t, "count": len(ls.components),
                     "critical": bool(ls.critical),
                     "max_multiplicity": int(ls.max_multiplicity),
                     "flagged": ana.is_flagged(ls.t, flagged, 2 * field.grid.h)}
            if not entry["critical"] and not entry["flagged"]:
                if ls.max_multiplicity > 2:
                    levels_pass = False
                    entry["multiplicity_bound"] = "fail"
            levels_out.append(entry)

    extra = []
    for (a, b) in sc.delta_pairs:
        if graph is None:
            break
        try:
            val = intrinsic_distance(graph, a, b)
        except FinslerError:
            val = float("nan")
        extra.append({"name": f"delta({a})->({b})", "value": val})

    checks = []
    passed = levels_pass
    for rep in reports:
        for c in rep.checks:
            entry = c.as_dict()
            entry["name"] = f"{rep.scenario}.{c.name}"
            checks.append(entry)
            passed = passed and c.status

    report = {
        "scenario": sc.name,
        "seed": sc.seed,
        "grid_h": sc.grid_h,
        "field_tol": field.field_tol,
        "checks": checks,
        "levels": levels_out,
        "delta": extra,
        "classification": classify(graph) if graph is not None else None,
        "passed": bool(passed),
        "artifacts": sorted(set(artifacts)),
    }
    return report


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="finslercut",
        description="distance fields, geodesics and cut loci on Finsler charts")
    ap.add_argument("--config", required=True,
                    help="scenario config path or bundled scenario name")
    ap.add_argument("--out", default="out", help="output directory")
    ap.add_argument("--command", default="all", choices=COMMANDS)
    ap.add_argument("--grid-h", type=float, default=None, help="grid spacing override")
    ap.add_argument("--seed", type=int, default=None, help="seed override")
    ap.add_argument("--quiet", action="store_true")
    args = ap.parse_args(argv)
    try:
        return run(args.config, args.command, args.out, args.grid_h,
                   args.seed, args.quiet)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FinslerError as exc:
        print(f"error [{args.config}:{args.command}]: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
