"""Command-line entry point: ``mindisk <generate|solve|verify|export> [--config path] [flags...]``.

A run is described by a flat JSON file merged with command-line flags
(flags win). Every successful run writes its outputs plus ``manifest.json``
into the output directory.
"""

import argparse
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from .blowup import BALL_MODES, EXTRINSIC, find_blowup_pair
from .disk_sample import load_disk
from .errors import (
    EXIT_FAILED,
    EXIT_OK,
    FitUndefinedError,
    MindiskError,
    NonConvergenceError,
    UndefinedHandednessError,
    UsageError,
)
from .exporters import (
    RunManifest,
    fit_report_frame,
    points_frame,
    read_csv,
    read_json,
    read_multigraph_csv,
    read_obj,
    write_csv,
    write_json,
    write_obj,
)
from .families import BURN_IN, FAMILIES, build_family, helicoid_disk
from .mse_solver import (
    AnnularDomain,
    BoundaryData,
    EXACT_SOLUTIONS,
    SolverConfig,
    convergence_order,
    exact_problem,
    solution_error,
    solve,
)
from .multigraph import (
    embed_to_r3,
    fit_log_decay,
    fit_sublinear_exponent,
    handedness,
    helicoid_sheet,
    is_embedded,
    nonproper_graph,
    separation,
)
from .settings import SLACK_EDGE_MULTIPLE, log_level
from .structure_verify import (
    blowup_set,
    cone_property_check,
    foliation_convergence,
    lipschitz_parameterize,
    one_sided_check,
    two_graph_decomposition,
)
from .surface_core import (
    ANALYTIC,
    DERIV_MODES,
    DIFFERENCE,
    fundamental_forms,
    geometry_table,
    graph_preset,
    make_catenoid,
    make_helicoid,
    make_ruled,
    mesh_triangles,
    parameter_axis,
)

logger = logging.getLogger(__name__)

PATCH_SURFACES = ("helicoid", "catenoid", "ruled", "graph")
GRAPH_SURFACES = ("helicoid-sheet", "nonproper")
SUITES = ("blowup", "structure", "one-sided", "separation")

COMMON_DEFAULTS = {"output": "out", "seed": 0}

DEFAULTS: Dict[str, Dict[str, Any]] = {
    "generate": {
        "surface": None, "s": None, "t": None, "grid": "64x64", "scale": 1.0, "deriv": None,
        "preset": None, "rin": 2.0, "rout": 100.0, "sheets": 8, "n_rho": 64, "n_theta": None,
        "which": 1, "name": None,
    },
    "solve": {
        "problem": None, "exact": None, "resolution": 64, "convergence": False,
        "resolutions": "64,128,256", "solver": None,
    },
    "verify": {
        "suite": None, "input": None, "curvature": None, "center": "0,0,0", "radius": 1.0,
        "C": 5.0, "mode": EXTRINSIC, "multiple": 1.0, "scale": None, "family": "rescaled-helicoid",
        "count": 6, "delta": 1.0, "epsilon": None, "probe_step": 0.1, "probe_box": 0.5,
        "jitter": 0.0, "burn_in": None, "r0": 0.5, "topology_override": False, "rin": None,
        "rout": None, "sheets": None, "rho0": 1.0, "rho_max": None, "aggregate": "ray",
    },
    "export": {"input": None, "rin": None, "rout": None, "sheets": None, "key": "points", "name": None},
}


class ArgumentParser(argparse.ArgumentParser):
    """Parse errors become UsageError so they exit with the usage code"""

    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------------------
# Run configuration
# ---------------------------------------------------------------------------

@dataclass
class RunConfig:
    command: str
    output: Path
    params: Dict[str, Any]
    seed: int = 0
    config_path: Optional[str] = None
    inputs: List[Path] = field(default_factory=list)

    @classmethod
    def from_sources(cls, command: str, payload: Optional[dict], flags: dict,
                     config_path: Optional[str] = None) -> "RunConfig":
        """Defaults, then the JSON run file, then the flags"""
        payload = dict(payload or {})
        file_command = payload.pop("command", command)
        if file_command != command:
            raise UsageError(f"run file is for {file_command!r}, not {command!r}")
        params = {**COMMON_DEFAULTS, **DEFAULTS[command]}
        unknown = set(payload) - set(params)
        if unknown:
            raise UsageError(f"unknown run settings for {command}: {sorted(unknown)}")
        params.update(payload)
        params.update(flags)
        seed = params.pop("seed")
        if int(seed) != seed or seed < 0:
            raise UsageError(f"seed must be a nonnegative integer, got {seed}")
        output = Path(params.pop("output"))
        inputs = [Path(params[k]) for k in ("input", "curvature", "problem") if params.get(k)]
        return cls(command, output, params, int(seed), config_path, inputs)

    def output_path(self, name: str) -> Path:
        path = self.output / name
        if any(path.resolve() == p.resolve() for p in self.inputs):
            raise UsageError(f"output {path} would overwrite an input file")
        return path

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "output": str(self.output),
            "seed": self.seed,
            "config_path": self.config_path,
            **{k: self.params[k] for k in sorted(self.params)},
        }


def _parse_range(text, name: str):
    if text is None:
        return None
    if isinstance(text, (list, tuple)):
        return float(text[0]), float(text[1])
    try:
        lo, hi = (float(v) for v in str(text).split(":"))
    except ValueError as exc:
        raise UsageError(f"--{name} expects a:b, got {text!r}") from exc
    return lo, hi


def _parse_grid(text) -> tuple:
    try:
        n1, n2 = (int(v) for v in str(text).lower().split("x"))
    except ValueError as exc:
        raise UsageError(f"--grid expects NxM, got {text!r}") from exc
    return n1, n2


def _parse_floats(text, count: Optional[int] = None) -> List[float]:
    values = text if isinstance(text, (list, tuple)) else str(text).split(",")
    try:
        values = [float(v) for v in values]
    except ValueError as exc:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from exc
    if count is not None and len(values) != count:
        raise UsageError(f"expected {count} numbers, got {text!r}")
    return values


def _require(params: dict, *names: str) -> None:
    missing = [n for n in names if params.get(n) is None]
    if missing:
        raise UsageError("missing required settings: " + ", ".join("--" + n.replace("_", "-") for n in missing))


def _finish(config: RunConfig, paths: Sequence[Path]) -> None:
    manifest = RunManifest(config.to_dict())
    for path in paths:
        manifest.record(path)
    manifest.write(config.output)


# ---------------------------------------------------------------------------
# generate
# ---------------------------------------------------------------------------

def _ruled_patch(preset: str, t_range, s_range, n_s: int, n_t: int, deriv: str):
    t_range = t_range or ((0.0, 2.0 * np.pi) if preset == "helicoid" else (-1.0, 1.0))
    t = parameter_axis(t_range, n_t)
    zeros, ones = np.zeros_like(t), np.ones_like(t)
    if preset == "helicoid":
        beta = np.stack((zeros, zeros, t), axis=1)
        delta = np.stack((np.cos(t), np.sin(t), zeros), axis=1)
        beta_d = (np.stack((zeros, zeros, ones), axis=1), np.zeros((t.size, 3)))
        delta_d = (np.stack((-np.sin(t), np.cos(t), zeros), axis=1), np.stack((-np.cos(t), -np.sin(t), zeros), axis=1))
    elif preset == "saddle":
        # (t, s, s t): the saddle x3 = x1 x2
        beta = np.stack((t, zeros, zeros), axis=1)
        delta = np.stack((zeros, ones, t), axis=1)
        beta_d = (np.stack((ones, zeros, zeros), axis=1), np.zeros((t.size, 3)))
        delta_d = (np.stack((zeros, zeros, ones), axis=1), np.zeros((t.size, 3)))
    else:
        raise UsageError(f"unknown ruled preset {preset!r}; choose helicoid or saddle")
    return make_ruled(beta, delta, t, s_range or (-1.0, 1.0), n_s, deriv, beta_d, delta_d)


def build_patch(p: dict):
    kind = p["surface"]
    n_s, n_t = _parse_grid(p["grid"])
    s_range = _parse_range(p["s"], "s")
    t_range = _parse_range(p["t"], "t")
    deriv = p["deriv"]
    if deriv is not None and deriv not in DERIV_MODES:
        raise UsageError(f"--deriv must be one of {DERIV_MODES}")
    if kind == "helicoid":
        return make_helicoid(s_range or (-1.0, 1.0), t_range or (0.0, 2.0 * np.pi), n_s, n_t,
                             deriv or ANALYTIC, float(p["scale"]))
    if kind == "catenoid":
        return make_catenoid(s_range or (-1.0, 1.0), t_range or (0.0, 2.0 * np.pi), n_s, n_t,
                             deriv or ANALYTIC, float(p["scale"]))
    if kind == "ruled":
        return _ruled_patch(p["preset"] or "helicoid", t_range, s_range, n_s, n_t, deriv or DIFFERENCE)
    if kind == "graph":
        return graph_preset(p["preset"] or "zero", n_s, n_t, s_range, t_range)
    raise UsageError(f"unknown surface kind {kind!r}")


def build_multigraph(p: dict):
    kind = p["surface"]
    n_theta = None if p["n_theta"] is None else int(p["n_theta"])
    if kind == "helicoid-sheet":
        return helicoid_sheet(int(p["which"]), float(p["rin"]), float(p["rout"]), int(p["sheets"]),
                              int(p["n_rho"]), n_theta, float(p["scale"]))
    if kind == "nonproper":
        return nonproper_graph(float(p["rin"]), float(p["rout"]), int(p["sheets"]), int(p["n_rho"]), n_theta)
    raise UsageError(f"unknown surface kind {kind!r}")


def cmd_generate(config: RunConfig) -> int:
    p = config.params
    _require(p, "surface")
    kind = p["surface"]
    stem = p["name"] or kind
    if kind in PATCH_SURFACES:
        patch = build_patch(p)
        table = geometry_table(patch, fundamental_forms(patch))
    elif kind in GRAPH_SURFACES:
        g = build_multigraph(p)
        table = g.to_frame()
        patch = embed_to_r3(g)
    else:
        raise UsageError(f"unknown surface kind {kind!r}; choose from {PATCH_SURFACES + GRAPH_SURFACES}")
    obj = write_obj(config.output_path(f"{stem}.obj"), patch.positions.reshape(-1, 3), mesh_triangles(patch))
    csv = write_csv(config.output_path(f"{stem}.csv"), table)
    _finish(config, [obj, csv])
    return EXIT_OK


# ---------------------------------------------------------------------------
# solve
# ---------------------------------------------------------------------------

def _problem_from_file(path) -> tuple:
    payload = read_json(path)
    try:
        domain = AnnularDomain(**payload["domain"])
        boundary = BoundaryData.from_dict(payload["boundary"])
    except KeyError as exc:
        raise UsageError(f"problem file {path} is missing {exc.args[0]!r}") from exc
    except TypeError as exc:
        raise UsageError(f"problem file {path} has a malformed domain: {exc}") from exc
    return domain, boundary, payload.get("config")


def cmd_solve(config: RunConfig) -> int:
    p = config.params
    solver_settings = dict(p["solver"] or {})
    exact = None
    if p["exact"]:
        if p["exact"] not in EXACT_SOLUTIONS:
            raise UsageError(f"unknown exact solution {p['exact']!r}; choose from {sorted(EXACT_SOLUTIONS)}")
        if p["convergence"]:
            resolutions = [int(v) for v in _parse_floats(p["resolutions"])]
            study = convergence_order(p["exact"], resolutions, SolverConfig.from_dict(solver_settings))
            path = write_json(config.output_path("convergence.json"), study.to_dict())
            print(f"{p['exact']}: status {study.status}, order {study.order}")
            _finish(config, [path])
            return EXIT_OK if study.status in ("ok", "exact") else EXIT_FAILED
        domain, boundary, exact = exact_problem(p["exact"], int(p["resolution"]))
    elif p["problem"]:
        domain, boundary, file_settings = _problem_from_file(p["problem"])
        solver_settings = {**(file_settings or {}), **solver_settings}
    else:
        raise UsageError("solve needs --problem or --exact")

    report_path = config.output_path("solve_report.json")
    try:
        g, report = solve(domain, boundary, SolverConfig.from_dict(solver_settings))
    except NonConvergenceError as exc:
        write_json(report_path, {
            "converged": False,
            "error": str(exc),
            "residual_history": exc.history,
            "domain": domain.to_dict(),
        })
        raise
    if exact is not None:
        report.max_error = solution_error(g, exact)
    solution = write_csv(config.output_path("solution.csv"), g.to_frame())
    write_json(report_path, {**report.to_dict(), "domain": domain.to_dict()})
    _finish(config, [solution, report_path])
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------

def _input_disk(p: dict, radius: float):
    _require(p, "input", "curvature")
    vertices, faces = read_obj(p["input"])
    table = read_csv(p["curvature"], ["A2"])
    center = _parse_floats(p["center"], 3)
    return load_disk(vertices, faces, table["A2"].to_numpy(), center, radius,
                     topology_override=bool(p["topology_override"]))


def _verify_blowup(config: RunConfig) -> int:
    p = config.params
    if p["mode"] not in BALL_MODES:
        raise UsageError(f"--mode must be one of {BALL_MODES}")
    radius = float(p["radius"])
    if p["input"] is None and p["scale"] is not None:
        disk = helicoid_disk(float(p["scale"]), radius, n_per_turn=16, half_count=32,
                             center=_parse_floats(p["center"], 3))
    else:
        disk = _input_disk(p, radius)
    _, report = find_blowup_pair(disk, float(p["C"]), p["mode"], float(p["multiple"]))
    path = write_json(config.output_path("pair_report.json"), report.to_dict())
    _finish(config, [path])
    return EXIT_OK if report.passed else EXIT_FAILED


def _verify_structure(config: RunConfig) -> int:
    p = config.params
    family = p["family"]
    if family not in FAMILIES:
        raise UsageError(f"unknown family {family!r}; choose from {sorted(FAMILIES)}")
    seq = build_family(family, int(p["count"]))
    step = float(p["probe_step"])
    box = float(p["probe_box"])
    delta = float(p["delta"])
    burn_in = BURN_IN[family] if p["burn_in"] is None else int(p["burn_in"])
    burn_in = min(burn_in, len(seq) - 1)
    singular = blowup_set(seq, burn_in=burn_in, probe_bounds=(-box, box), probe_step=step,
                          jitter=float(p["jitter"]), seed=config.seed)
    report: Dict[str, Any] = {"family": family, "count": len(seq), "singular_set": singular.to_dict()}
    checks: Dict[str, bool] = {}
    curve_points = None
    if singular.curvature_unbounded:
        slack = SLACK_EDGE_MULTIPLE * min(d.min_edge for d in seq.samples)
        epsilon = step if p["epsilon"] is None else float(p["epsilon"])
        cone = cone_property_check(singular.points, delta, epsilon, slack=slack)
        curve = lipschitz_parameterize(singular.points, delta)
        curve_points = curve.centers
        report["cone"] = cone.to_dict()
        report["curve"] = curve.to_dict()
        checks["cone"] = cone.passed
        checks["curve_within_probe_step"] = curve.max_horizontal_offset <= step
    censuses = [two_graph_decomposition(sample, curve_points, delta0=delta) for sample in seq.samples]
    report["census"] = [c.to_dict() for c in censuses]
    if singular.curvature_unbounded:
        checks["census_two_components"] = all(c.component_count == 2 for c in censuses)
    foliation = foliation_convergence(seq)
    distances = foliation.leaf_distance
    # members already on a leaf stay there
    decreasing = all(b < a or a == b == 0.0 for a, b in zip(distances, distances[1:]))
    report["foliation"] = foliation.to_dict()
    report["foliation"]["strictly_decreasing"] = decreasing
    checks["foliation_decreasing"] = decreasing
    report["checks"] = checks
    report_path = write_json(config.output_path("structure_report.json"), report)
    points = write_csv(config.output_path("singular_set.csv"), points_frame(singular.points))
    _finish(config, [report_path, points])
    return EXIT_OK if all(checks.values()) else EXIT_FAILED


def _verify_one_sided(config: RunConfig) -> int:
    p = config.params
    r0 = float(p["r0"])
    disk = _input_disk(p, 2.0 * r0)
    epsilon = 0.5 if p["epsilon"] is None else float(p["epsilon"])
    report = one_sided_check(disk, r0, epsilon)
    path = write_json(config.output_path("one_sided_report.json"), report.to_dict())
    _finish(config, [path])
    return EXIT_OK if report.passed else EXIT_FAILED


def _verify_separation(config: RunConfig) -> int:
    p = config.params
    _require(p, "input", "rin", "rout", "sheets")
    g = read_multigraph_csv(p["input"], float(p["rin"]), float(p["rout"]), int(p["sheets"]))
    profile = separation(g)
    embedded, min_abs = is_embedded(g)
    report: Dict[str, Any] = {"embedded": embedded, "min_abs_w": min_abs, "handedness": None, "notes": []}
    try:
        report["handedness"] = handedness(g).value
    except UndefinedHandednessError as exc:
        report["notes"].append(str(exc))

    rho0 = float(p["rho0"])
    rho_max = None if p["rho_max"] is None else float(p["rho_max"])
    fits = []
    try:
        sub = fit_sublinear_exponent(profile, rho0, rho_max, p["aggregate"])
        report["sublinear"] = sub.to_dict()
        fits.append({"rho0": rho0, "alpha_hat": sub.alpha_hat, "residual": sub.residual, "kind": "sublinear"})
    except FitUndefinedError as exc:
        report["notes"].append(f"sublinear fit: {exc}")
    try:
        log_fit = fit_log_decay(profile, rho0, rho_max, p["aggregate"])
        report["log_decay"] = log_fit.to_dict()
        fits.append({"rho0": rho0, "c_hat": log_fit.c_hat, "residual": log_fit.max_deviation, "kind": "log-decay"})
    except FitUndefinedError as exc:
        report["notes"].append(f"log-decay fit: {exc}")

    outputs = [
        write_csv(config.output_path("separation.csv"), profile.to_frame()),
        write_csv(config.output_path("fits.csv"), fit_report_frame(fits)),
        write_json(config.output_path("separation_report.json"), report),
    ]
    _finish(config, outputs)
    return EXIT_OK if embedded else EXIT_FAILED


VERIFY_SUITES = {
    "blowup": _verify_blowup,
    "structure": _verify_structure,
    "one-sided": _verify_one_sided,
    "separation": _verify_separation,
}


def cmd_verify(config: RunConfig) -> int:
    suite = config.params["suite"]
    if suite not in VERIFY_SUITES:
        raise UsageError(f"--suite must be one of {SUITES}")
    return VERIFY_SUITES[suite](config)


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------

def _find_key(payload, key: str):
    if isinstance(payload, dict):
        if key in payload:
            return payload[key]
        for value in payload.values():
            found = _find_key(value, key)
            if found is not None:
                return found
    return None


def cmd_export(config: RunConfig) -> int:
    p = config.params
    _require(p, "input")
    source = Path(p["input"])
    stem = p["name"] or source.stem
    if source.suffix.lower() == ".csv":
        _require(p, "rin", "rout", "sheets")
        g = read_multigraph_csv(source, float(p["rin"]), float(p["rout"]), int(p["sheets"]))
        patch = embed_to_r3(g)
        path = write_obj(config.output_path(f"{stem}.obj"), patch.positions.reshape(-1, 3), mesh_triangles(patch))
    elif source.suffix.lower() == ".json":
        points = _find_key(read_json(source), p["key"])
        if points is None:
            raise UsageError(f"{source} has no {p['key']!r} entry")
        path = write_csv(config.output_path(f"{stem}.csv"), points_frame(points))
    else:
        raise UsageError(f"cannot export {source}: expected a .csv multigraph or a .json report")
    _finish(config, [path])
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "solve": cmd_solve,
    "verify": cmd_verify,
    "export": cmd_export,
}


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _flag(parser, name: str, **kwargs):
    parser.add_argument(f"--{name}", dest=name.replace("-", "_"), default=argparse.SUPPRESS, **kwargs)


def build_parser() -> argparse.ArgumentParser:
    parser = ArgumentParser(prog="mindisk", description="Numerical lab for embedded minimal disks")
    commands = parser.add_subparsers(dest="command", required=True)

    def command(name: str, help_text: str):
        sub = commands.add_parser(name, help=help_text)
        sub.add_argument("--config", default=None, help="flat JSON run file; flags override it")
        _flag(sub, "output", help="output directory")
        _flag(sub, "seed", type=int)
        return sub

    gen = command("generate", "sample a surface and write OBJ + CSV")
    _flag(gen, "surface", choices=PATCH_SURFACES + GRAPH_SURFACES)
    for name in ("s", "t", "grid", "preset", "name", "deriv"):
        _flag(gen, name)
    for name in ("scale", "rin", "rout"):
        _flag(gen, name, type=float)
    for name in ("sheets", "n-rho", "n-theta", "which"):
        _flag(gen, name, type=int)

    sol = command("solve", "solve the minimal surface equation on an annular cover")
    _flag(sol, "problem")
    _flag(sol, "exact", choices=sorted(EXACT_SOLUTIONS))
    _flag(sol, "resolution", type=int)
    _flag(sol, "resolutions")
    _flag(sol, "convergence", action="store_true")

    ver = command("verify", "run a verification suite")
    _flag(ver, "suite", choices=SUITES)
    for name in ("input", "curvature", "center", "mode", "family", "aggregate"):
        _flag(ver, name)
    for name in ("radius", "C", "multiple", "scale", "delta", "epsilon", "probe-step", "probe-box",
                 "jitter", "r0", "rin", "rout", "rho0", "rho-max"):
        _flag(ver, name, type=float)
    for name in ("count", "burn-in", "sheets"):
        _flag(ver, name, type=int)
    _flag(ver, "topology-override", action="store_true")

    exp = command("export", "convert outputs: multigraph CSV to OBJ, report points to CSV")
    for name in ("input", "key", "name"):
        _flag(exp, name)
    for name in ("rin", "rout"):
        _flag(exp, name, type=float)
    _flag(exp, "sheets", type=int)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(
        level=getattr(logging, log_level(), logging.WARNING),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        args = build_parser().parse_args(argv)
        flags = vars(args).copy()
        command_name = flags.pop("command")
        config_path = flags.pop("config", None)
        payload = read_json(config_path) if config_path else None
        config = RunConfig.from_sources(command_name, payload, flags, config_path)
        logger.info("running %s", command_name)
        return COMMANDS[command_name](config)
    except MindiskError as exc:
        logger.debug("run failed", exc_info=True)
        print(f"mindisk: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
