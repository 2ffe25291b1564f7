"""Command-line front end.

Usage::

    magshape solve CONFIG            single FE solve, field CSVs
    magshape optimize CONFIG         full run: report JSON, convergence CSV
    magshape check-grad CONFIG       analytic vs central-difference gradient
    magshape sweep CONFIG --n 5      objective on a grid over the box
    magshape compare REPORT...       side-by-side table of run reports

Exit codes: 0 success, 2 config error, 3 non-convergence (or a failed
gradient check), 4 invalid geometry.

Config files are JSON with ``schema_version`` 1. Physical values carry their
unit in the key name; unknown keys are errors.
"""
from __future__ import annotations

import argparse
import csv
import importlib
import json
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fem import flux_in_triangles
from .ledger import Ledger
from .mesh import MeshError
from .nurbs_de import GeometryError
from .affine import AffineGeometryError
from .optimize import (HISTORY_COLUMNS, OptimizationProblem, OptimizationResult, PsoSettings,
                       SqpSettings, make_rng, pso_solve, sqp_solve)
from .params import UncertaintySet
from .sensitivity import fd_gradient

SCHEMA_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_NOT_CONVERGED, EXIT_GEOMETRY = 0, 2, 3, 4
PROBLEMS = ("die_press", "pmsm_synthetic", "custom")
GRAD_CHECK_TOL = 1e-5


class ConfigError(ValueError):
    pass


# config blocks: key -> (target name, type); the unit lives in the key
_DIE_PRESS_KEYS = {
    "b_goal_tesla": ("b_goal", float),
    "r_smp_m": ("r_smp", float),
    "phi_f_rad": ("phi_f", float),
    "n_samples": ("n_samples", int),
    "y_j_mm": ("y_j_mm", float),
    "mu_r_iron": ("mu_r_iron", float),
    "mu_r_air": ("mu_r_air", float),
    "lz_m": ("lz", float),
    "lower_mm": ("lower_mm", tuple),
    "upper_mm": ("upper_mm", tuple),
    "b_drive_tesla": ("b_drive", float),
    "calibration": ("calibration", str),
    "calibration_point_mm": ("calibration_point_mm", tuple),
    "calibration_target_tesla2": ("calibration_target", float),
    "solver": ("solver", str),
}
_PMSM_KEYS = {
    "pole_pairs": ("n_p", int),
    "omega_syn_rad_per_s": ("omega_syn", float),
    "windings_per_phase": ("n_w", float),
    "q": ("q", int),
    "alpha_el_rad": ("alpha_el", float),
    "pitch_ratio": ("pitch_ratio", float),
    "skew_rad": ("skew", float),
    "r_ag_m": ("r_ag", float),
    "e_d_volt": ("e_d", float),
    "lz_m": ("lz", float),
}
_SQP_KEYS = {
    "max_iterations": ("max_iterations", int),
    "kkt_tol": ("kkt_tol", float),
    "damping": ("damping", float),
    "penalty_factor": ("penalty_factor", float),
    "armijo": ("armijo", float),
    "max_halvings": ("max_halvings", int),
}
_PSO_KEYS = {
    "swarm_size": ("swarm_size", int),
    "omega0": ("omega0", float),
    "omega1": ("omega1", float),
    "omega2": ("omega2", float),
    "stall_limit": ("stall_limit", int),
    "cluster_tol_mm": ("cluster_tol", float),
    "max_iterations": ("max_iterations", int),
    "constraint_mode": ("constraint_mode", str),
    "hull_skip": ("hull_skip", bool),
}
_TOP_KEYS = {"schema_version", "problem", "parametrization", "optimizer", "robust",
             "die_press", "pmsm", "custom", "initial_point_mm", "assets", "output_dir",
             "seed", "name"}


def _convert(block: dict, keys: dict, where: str) -> dict:
    if not isinstance(block, dict):
        raise ConfigError(f"{where} must be an object")
    out = {}
    for k, v in block.items():
        if k not in keys:
            raise ConfigError(f"unknown key {where}.{k}; allowed: {sorted(keys)}")
        name, typ = keys[k]
        if v is None:
            out[name] = None
            continue
        try:
            if typ is tuple:
                out[name] = tuple(float(x) for x in v)
            elif typ is bool:
                if not isinstance(v, bool):
                    raise TypeError
                out[name] = v
            elif typ is int:
                if isinstance(v, bool) or int(v) != v:
                    raise TypeError
                out[name] = int(v)
            else:
                out[name] = typ(v)
        except (TypeError, ValueError):
            raise ConfigError(f"{where}.{k} must be of type {typ.__name__}") from None
    return out


@dataclass
class RunConfig:
    problem: str
    parametrization: str = "design_element"
    optimizer: str = "sqp"
    sqp: dict = field(default_factory=dict)
    pso: dict = field(default_factory=dict)
    robust: bool = False
    delta_mm: tuple | None = None
    die_press: dict = field(default_factory=dict)
    pmsm: dict = field(default_factory=dict)
    emf_coeffs: tuple | None = None
    custom: dict = field(default_factory=dict)
    initial_point_mm: tuple | None = None
    mesh_path: str | None = None
    layout_path: str | None = None
    output_dir: str = "magshape_out"
    seed: int = 0
    name: str = ""

    @classmethod
    def from_dict(cls, d: dict, base_dir: Path | None = None) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(d) - _TOP_KEYS
        if unknown:
            raise ConfigError(f"unknown top-level keys {sorted(unknown)}")
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ConfigError(f"schema_version must be {SCHEMA_VERSION}")
        problem = d.get("problem")
        if problem not in PROBLEMS:
            raise ConfigError(f"problem must be one of {PROBLEMS}")
        cfg = cls(problem=problem)
        cfg.name = str(d.get("name", ""))
        par = d.get("parametrization", "design_element")
        if par not in ("design_element", "affine"):
            raise ConfigError("parametrization must be 'design_element' or 'affine'")
        cfg.parametrization = par

        opt = d.get("optimizer", {"name": "sqp"})
        if not isinstance(opt, dict) or opt.get("name") not in ("sqp", "pso"):
            raise ConfigError("optimizer.name must be 'sqp' or 'pso'")
        extra = set(opt) - {"name", "sqp", "pso"}
        if extra:
            raise ConfigError(f"unknown optimizer keys {sorted(extra)}")
        cfg.optimizer = opt["name"]
        cfg.sqp = _convert(opt.get("sqp", {}), _SQP_KEYS, "optimizer.sqp")
        cfg.pso = _convert(opt.get("pso", {}), _PSO_KEYS, "optimizer.pso")

        rob = d.get("robust", {"enabled": False})
        if not isinstance(rob, dict) or set(rob) - {"enabled", "delta_mm"}:
            raise ConfigError("robust must be an object with keys 'enabled', 'delta_mm'")
        cfg.robust = bool(rob.get("enabled", False))
        if rob.get("delta_mm") is not None:
            cfg.delta_mm = tuple(float(x) for x in rob["delta_mm"])
        if cfg.robust and cfg.delta_mm is None:
            raise ConfigError("robust.enabled requires robust.delta_mm")
        if cfg.robust and cfg.optimizer != "sqp":
            raise ConfigError("the robust counterpart needs gradients: use optimizer 'sqp'")

        cfg.die_press = _convert(d.get("die_press", {}), _DIE_PRESS_KEYS, "die_press")
        pm = dict(d.get("pmsm", {}))
        coeffs = pm.pop("emf_coeffs_volt_per_mm", None)
        cfg.emf_coeffs = None if coeffs is None else tuple(float(x) for x in coeffs)
        cfg.pmsm = _convert(pm, _PMSM_KEYS, "pmsm")
        cfg.custom = dict(d.get("custom", {}))
        if problem == "custom" and "factory" not in cfg.custom:
            raise ConfigError("custom problems need custom.factory = 'module:function'")
        if d.get("initial_point_mm") is not None:
            cfg.initial_point_mm = tuple(float(x) for x in d["initial_point_mm"])
        assets = d.get("assets", {})
        if set(assets) - {"mesh", "layout"}:
            raise ConfigError("assets accepts only 'mesh' and 'layout'")

        def resolve(path):
            if path is None:
                return None
            p = Path(path)
            return str(p if p.is_absolute() or base_dir is None else base_dir / p)
        cfg.mesh_path = resolve(assets.get("mesh"))
        cfg.layout_path = resolve(assets.get("layout"))
        cfg.output_dir = str(d.get("output_dir", cfg.output_dir))
        seed = d.get("seed", 0)
        if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
            raise ConfigError("seed must be a nonnegative integer")
        cfg.seed = seed
        return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return RunConfig.from_dict(data, path.parent)


# ------------------------------------------------------------------ problems

@dataclass
class Pipeline:
    problem: OptimizationProblem
    model: object = None


def build_pipeline(cfg: RunConfig, ledger: Ledger | None = None) -> Pipeline:
    ledger = ledger if ledger is not None else Ledger()
    p0 = cfg.initial_point_mm
    try:
        if cfg.problem == "die_press":
            from .problems.die_press import DiePressConfig, DiePressModel
            dp = DiePressConfig(parametrization=cfg.parametrization, mesh_path=cfg.mesh_path,
                                layout_path=cfg.layout_path, **cfg.die_press)
            model = DiePressModel(dp, ledger)
            start = dp.box_center if p0 is None else np.asarray(p0, float)
            prob = OptimizationProblem.from_model(model, dp.constraints(), start, "die_press")
            return Pipeline(prob, model)
        if cfg.problem == "pmsm_synthetic":
            from .problems.pmsm import EmfConfig, pmsm_problem, synthetic_emf
            emf = synthetic_emf(cfg.emf_coeffs) if cfg.emf_coeffs else synthetic_emf()
            return Pipeline(pmsm_problem(emf, EmfConfig(**cfg.pmsm), p0, ledger))
        mod_name, _, fn_name = str(cfg.custom["factory"]).partition(":")
        factory = getattr(importlib.import_module(mod_name), fn_name)
        prob = factory(**cfg.custom.get("kwargs", {}))
        if not isinstance(prob, OptimizationProblem):
            raise ConfigError("custom factory must return an OptimizationProblem")
        prob.ledger = ledger
        if p0 is not None:
            prob.p0 = np.asarray(p0, float)
        return Pipeline(prob)
    except (TypeError, ImportError, AttributeError) as exc:
        raise ConfigError(f"cannot build problem: {exc}") from exc
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


# ------------------------------------------------------------------ output

def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return format(float(x), ".17g")


def write_csv(path: Path, header, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(x) if not isinstance(x, str) else x for x in r])


def write_json(path: Path, data) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def write_field_csvs(model, p, out: Path) -> None:
    """B on the sample arc and per-triangle B (centroids) at p."""
    st, mesh, _, B1 = model._unit_flux(np.asarray(p, float))
    s = model.b_drive
    B = s * B1
    pts = model.cfg.sample_points
    write_csv(out / "field_samples.csv", ("k", "x_m", "y_m", "bx_tesla", "by_tesla",
                                          "bx_goal_tesla", "by_goal_tesla"),
              [(k, *pts[k], *B[k], *model.goal[k]) for k in range(len(pts))])
    Bt = s * flux_in_triangles(mesh, st.solution.a, model.cfg.lz, np.arange(mesh.n_triangles))
    cent = mesh.nodes[mesh.triangles].mean(axis=1)
    write_csv(out / "field_elements.csv", ("triangle", "region", "x_m", "y_m", "bx_tesla",
                                           "by_tesla"),
              [(t, int(mesh.regions[t]), *cent[t], *Bt[t]) for t in range(mesh.n_triangles)])


def run_report(cfg: RunConfig, res: OptimizationResult, wall: float, pipe: Pipeline,
               extra: dict | None = None) -> dict:
    rep = {
        "schema_version": SCHEMA_VERSION,
        "name": cfg.name,
        "problem": cfg.problem,
        "method": cfg.optimizer + ("_robust" if cfg.robust else ""),
        "parametrization": cfg.parametrization if cfg.problem == "die_press" else None,
        "seed": cfg.seed,
        "wall_time_s": wall,
    }
    rep.update(res.summary())
    calls = rep.pop("calls")
    rep["calls"] = {k: calls.get(k, 0) for k in ("objective", "gradient", "constraints",
                                                 "fe_solves", "back_substitutions")}
    rep["invalid_evaluations"] = pipe.problem.invalid_evaluations
    if pipe.model is not None:
        rep["b_drive_tesla"] = float(pipe.model.b_drive)
        rep["minimum_mean_form"] = float(res.f) / pipe.model.cfg.n_samples
    if extra:
        rep.update(extra)
    return rep


# ------------------------------------------------------------------ commands

def _optimize(cfg: RunConfig, pipe: Pipeline):
    prob = pipe.problem
    if cfg.optimizer == "pso":
        settings = PsoSettings(seed=cfg.seed, **cfg.pso)
        if cfg.problem == "pmsm_synthetic" and settings.constraint_mode == "penalty":
            from .problems.pmsm import pso_penalty_objective
            prob = prob.with_objective(lambda p: pso_penalty_objective(p, pipe.problem),
                                       name=prob.name + "_penalty")
        return pso_solve(prob, settings), None
    settings = SqpSettings(**cfg.sqp)
    if cfg.robust:
        from .robust import robust_price, robustify
        uset = UncertaintySet(np.asarray(cfg.delta_mm, float))
        rp = robustify(prob, uset)
        rres = sqp_solve(rp, settings)
        res = rp.base_result(rres)
        nominal = sqp_solve(_fresh(cfg), settings)
        price = robust_price(nominal, res, prob, uset).as_dict()
        _, xi = rp.split(rres.p)
        return res, {"robust_objective": float(rres.f), "delta_mm": list(cfg.delta_mm),
                     "objective_at_minimizer": float(prob.objective(res.p)),
                     "price": price, "slack_objective": [float(x) for x in xi[0]]}
    return sqp_solve(prob, settings), None


def _fresh(cfg: RunConfig) -> OptimizationProblem:
    """The nominal problem with its own ledger (reference solve for the price)."""
    return build_pipeline(cfg, Ledger()).problem


def cmd_optimize(cfg: RunConfig, args) -> int:
    out = Path(args.output or cfg.output_dir)
    pipe = build_pipeline(cfg)
    if cfg.robust and len(cfg.delta_mm) != pipe.problem.n_params:
        raise ConfigError(f"delta_mm needs {pipe.problem.n_params} values")
    if cfg.robust and any(not d > 0 for d in cfg.delta_mm):
        raise ConfigError("delta_mm entries must be positive")
    t0 = time.perf_counter()
    res, extra = _optimize(cfg, pipe)
    wall = time.perf_counter() - t0
    rep = run_report(cfg, res, wall, pipe, extra)
    write_json(out / "report.json", rep)
    write_csv(out / "convergence.csv", HISTORY_COLUMNS, res.history)
    if pipe.model is not None:
        write_field_csvs(pipe.model, res.p, out)
    _print_report(rep)
    return EXIT_OK if res.converged else EXIT_NOT_CONVERGED


def _point(cfg: RunConfig, pipe: Pipeline, text: str | None) -> np.ndarray:
    if text:
        try:
            p = np.array([float(x) for x in text.split(",")])
        except ValueError:
            raise ConfigError(f"cannot parse point {text!r}") from None
        if p.size != pipe.problem.n_params:
            raise ConfigError(f"point needs {pipe.problem.n_params} values")
        return p
    return pipe.problem.p0


def cmd_solve(cfg: RunConfig, args) -> int:
    if cfg.problem != "die_press":
        raise ConfigError("solve needs an FE problem (die_press)")
    out = Path(args.output or cfg.output_dir)
    pipe = build_pipeline(cfg)
    p = _point(cfg, pipe, args.point)
    J = pipe.model.objective(p)
    write_field_csvs(pipe.model, p, out)
    rep = {"schema_version": SCHEMA_VERSION, "problem": cfg.problem,
           "parametrization": cfg.parametrization, "point_mm": [float(x) for x in p],
           "objective": J, "objective_mean_form": J / pipe.model.cfg.n_samples,
           "b_drive_tesla": float(pipe.model.b_drive), "calls": pipe.problem.ledger.snapshot()}
    write_json(out / "solve.json", rep)
    print(f"J = {J:.10g} T^2 at p = {[float(x) for x in p]} mm")
    return EXIT_OK


def cmd_check_grad(cfg: RunConfig, args) -> int:
    out = Path(args.output or cfg.output_dir)
    pipe = build_pipeline(cfg)
    prob = pipe.problem
    cs = prob.constraints
    rng = make_rng(cfg.seed)
    points = [prob.p0]
    lo, up = cs.lower, cs.upper
    while len(points) < args.points:
        cand = lo + (up - lo) * rng.random(lo.size)
        try:
            prob.objective(cand)
        except (GeometryError, AffineGeometryError, MeshError):
            continue
        points.append(cand)
    rows, worst = [], 0.0
    for k, p in enumerate(points):
        before = prob.ledger.snapshot()["fe_solves"]
        ga = prob.grad(p)
        gf = fd_gradient(prob.objective, p, "central", rel=args.rel_step)
        solves = prob.ledger.snapshot()["fe_solves"] - before
        scale = np.maximum(np.abs(gf), args.abs_floor)
        err = np.abs(ga - gf) / scale
        worst = max(worst, float(err.max()))
        for i in range(p.size):
            rows.append((k, i, p[i], ga[i], gf[i], err[i], solves))
        print(f"point {k}: max rel err {err.max():.3e} ({solves} FE solves)")
    write_csv(out / "check_grad.csv", ("point", "param", "p_mm", "analytic", "central_fd",
                                       "rel_error", "fe_solves"), rows)
    ok = worst <= GRAD_CHECK_TOL
    print(f"worst relative error {worst:.3e}: {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_NOT_CONVERGED


def cmd_sweep(cfg: RunConfig, args) -> int:
    out = Path(args.output or cfg.output_dir)
    pipe = build_pipeline(cfg)
    prob = pipe.problem
    cs = prob.constraints
    if not (np.all(np.isfinite(cs.lower)) and np.all(np.isfinite(cs.upper))):
        raise ConfigError("sweep needs a finite box")
    axes = [np.linspace(lo, up, args.n) for lo, up in zip(cs.lower, cs.upper)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(axes))
    rows, best = [], (None, np.inf)
    for p in grid:
        J = prob.f(p)
        feas = cs.is_feasible(p) if np.isfinite(J) else False
        rows.append((*p, J, int(feas)))
        if feas and J < best[1]:
            best = (p, J)
    names = [f"p{i + 1}_mm" for i in range(grid.shape[1])]
    write_csv(out / "sweep.csv", (*names, "objective", "feasible"), rows)
    rep = {"schema_version": SCHEMA_VERSION, "problem": cfg.problem, "n_per_axis": args.n,
           "best_point_mm": None if best[0] is None else [float(x) for x in best[0]],
           "best_objective": float(best[1]), "calls": prob.ledger.snapshot()}
    write_json(out / "sweep.json", rep)
    print(f"best grid point {rep['best_point_mm']} J = {best[1]:.10g}")
    return EXIT_OK


COMPARE_COLUMNS = ("name", "method", "minimizer", "minimum", "iterations",
                   "iterations_to_best", "objective_calls", "gradient_calls", "fe_solves",
                   "wall_time_s")
# wall time stays out of the CSV so that reruns give identical files
CSV_COLUMNS = COMPARE_COLUMNS[:-1]


def compare_reports(reports: list[dict]) -> list[dict]:
    if not reports:
        raise ConfigError("compare needs at least one report")
    problems = {r.get("problem") for r in reports}
    if len(problems) != 1:
        raise ConfigError(f"reports are for different problems: {sorted(map(str, problems))}")
    rows = []
    for r in reports:
        c = r.get("calls", {})
        rows.append({"name": r.get("name", ""), "method": r.get("method", ""),
                     "minimizer": r.get("minimizer"), "minimum": r.get("minimum"),
                     "iterations": r.get("iterations"),
                     "iterations_to_best": r.get("iterations_to_best"),
                     "objective_calls": c.get("objective"), "gradient_calls": c.get("gradient"),
                     "fe_solves": c.get("fe_solves"), "wall_time_s": r.get("wall_time_s")})
    return rows


def cmd_compare(args) -> int:
    reports = []
    for path in args.reports:
        try:
            reports.append(json.loads(Path(path).read_text()))
        except (FileNotFoundError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read report {path}: {exc}") from None
    rows = compare_reports(reports)
    out = Path(args.output or ".")
    write_json(out / "comparison.json", {"problem": reports[0].get("problem"), "rows": rows})
    write_csv(out / "comparison.csv", CSV_COLUMNS,
              [[_cell(r[c]) for c in CSV_COLUMNS] for r in rows])
    widths = [max(len(c), *(len(_cell(r[c])) for r in rows)) for c in COMPARE_COLUMNS]
    print("  ".join(c.ljust(w) for c, w in zip(COMPARE_COLUMNS, widths)))
    for r in rows:
        print("  ".join(_cell(r[c]).ljust(w) for c, w in zip(COMPARE_COLUMNS, widths)))
    return EXIT_OK


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, list):
        return "(" + ", ".join(f"{x:.6g}" for x in v) + ")"
    if isinstance(v, float):
        return f"{v:.8g}"
    return str(v)


def _print_report(rep: dict) -> None:
    c = rep["calls"]
    print(f"{rep['problem']} / {rep['method']}: {rep['message']}")
    print(f"  minimizer {[round(x, 6) for x in rep['minimizer']]}  minimum {rep['minimum']:.10g}")
    print(f"  iterations {rep['iterations']}  f() {c['objective']}  grad f() {c['gradient']}"
          f"  FE solves {c['fe_solves']}")


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="magshape", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def with_config(name, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("config")
        p.add_argument("-o", "--output", help="output directory (overrides the config)")
        return p

    p = with_config("solve", "single FE solve and field CSVs")
    p.add_argument("--point", help="comma-separated parameters in mm (default: initial point)")
    p = with_config("optimize", "run the configured optimizer")
    p.add_argument("--robust", action="store_true", help="solve the robust counterpart")
    p.add_argument("--delta", help="comma-separated half-widths in mm (with --robust)")
    p.add_argument("--seed", type=int)
    p = with_config("check-grad", "compare analytic and finite-difference gradients")
    p.add_argument("--points", type=int, default=5)
    p.add_argument("--rel-step", type=float, default=1e-6)
    p.add_argument("--abs-floor", type=float, default=1e-12,
                   help="lower bound on the error scale for vanishing components")
    p = with_config("sweep", "evaluate J on a grid over the box")
    p.add_argument("--n", type=int, default=5, help="points per axis")
    p = sub.add_parser("compare", help="compare run reports")
    p.add_argument("reports", nargs="+")
    p.add_argument("-o", "--output")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "compare":
            return cmd_compare(args)
        cfg = load_config(args.config)
        if args.command == "optimize":
            if args.delta is not None and not args.robust:
                raise ConfigError("--delta needs --robust")
            if args.robust:
                cfg.robust = True
                if args.delta is not None:
                    try:
                        cfg.delta_mm = tuple(float(x) for x in args.delta.split(","))
                    except ValueError:
                        raise ConfigError(f"cannot parse --delta {args.delta!r}") from None
                if cfg.delta_mm is None:
                    raise ConfigError("--robust needs --delta or robust.delta_mm")
                if cfg.optimizer != "sqp":
                    raise ConfigError("the robust counterpart needs gradients: use 'sqp'")
            if args.seed is not None:
                cfg.seed = args.seed
            return cmd_optimize(cfg, args)
        if args.command == "solve":
            return cmd_solve(cfg, args)
        if args.command == "check-grad":
            return cmd_check_grad(cfg, args)
        return cmd_sweep(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (GeometryError, AffineGeometryError, MeshError) as exc:
        print(f"invalid geometry: {exc}", file=sys.stderr)
        return EXIT_GEOMETRY


if __name__ == "__main__":
    sys.exit(main())
