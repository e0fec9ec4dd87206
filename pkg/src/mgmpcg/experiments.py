"""Experiment drivers for the anisotropic-diffusion and fracture-flow problems.

Every run writes a convergence CSV ``(iter, res_2norm)``, a JSON record with
the full configuration echo, and for MPCG runs an alpha CSV
``(iter, level, alpha_value)`` with level 0 the coarsest. Sweeps add one
summary CSV ``(param, solver, iters, final_rel_res)``.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .fem import (
    RASTER_MODES,
    BoundarySpec,
    DiffusionField,
    Dirichlet,
    FractureNetwork,
    Neumann,
    StructuredGrid,
    assemble,
    boundary_flux,
    rasterize_fractures,
)
from .hierarchy import build_aggregation_hierarchy, build_geometric_hierarchy
from .krylov import SolverConfig, mpcg, pcg
from .preconditioners import AdditiveMg, VCycle

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "Problem",
    "RunArtifact",
    "SOLVERS",
    "build_problem",
    "build_hierarchy",
    "solve_problem",
    "run",
    "run_example1",
    "run_example2",
    "sweep",
    "read_convergence_csv",
    "read_alpha_csv",
    "read_sweep_csv",
]

log = logging.getLogger(__name__)

SOLVERS = ("addmg-mpcg", "addmg-pcg", "multmg-pcg", "cg")
PROBLEMS = ("anisotropic", "fracture")
HIERARCHIES = ("geometric", "aggregation")
SWEEPABLE = {"kxx": "kxx", "kf": "kf"}

# Spelling used in prose and older configs -> config key.
_ALIASES = {
    "k_f": "kf",
    "k_m": "km",
    "network_file": "network",
    "tol_rel": "tol",
    "output_dir": "out",
}

FULL_SCALE_FRACTURE_NX = 550  # 551^2 ~ 3.0e5 unknowns


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    problem: str = "anisotropic"
    solver: str = "addmg-mpcg"
    nx: Optional[int] = None
    ny: Optional[int] = None
    levels: int = 4
    hierarchy: Optional[str] = None
    # anisotropic problem
    kxx: float = 1.0
    kyy: float = 1.0
    source: float = 1.0
    # fracture problem
    network: Optional[str] = None
    kf: Optional[float] = None
    km: Optional[float] = None
    delta: Optional[float] = None
    raster_mode: str = "upscaled"
    strength_tol: float = 0.5
    # solvers
    nu: int = 6
    nu_pre: int = 3
    nu_post: int = 3
    omega: float = 1.0
    m: int = 5
    tol: float = 1e-8
    max_iters: int = 2000
    gram_drop_tol: float = 1e-12
    workers: Optional[int] = None
    out: str = "results"

    @classmethod
    def from_dict(cls, raw):
        known = {f.name for f in fields(cls)}
        params = {}
        for key, value in raw.items():
            key = _ALIASES.get(key, key).replace("-", "_")
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            params[key] = value
        return cls(**params)

    @classmethod
    def from_json(cls, path):
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as err:
            raise ConfigError(f"cannot read config file {path}: {err}") from None
        return cls.from_dict(raw)

    def to_dict(self):
        return asdict(self)

    def resolved(self):
        """Fill problem-dependent defaults and validate."""
        nx = self.nx if self.nx is not None else (160 if self.problem == "anisotropic" else 200)
        cfg = replace(
            self,
            nx=nx,
            ny=self.ny if self.ny is not None else nx,
            hierarchy=self.hierarchy
            or ("geometric" if self.problem == "anisotropic" else "aggregation"),
        )
        if cfg.problem == "fracture":
            net = cfg.load_network()
            cfg = replace(
                cfg,
                kf=net.k_f if cfg.kf is None else cfg.kf,
                km=net.k_m if cfg.km is None else cfg.km,
                delta=net.delta if cfg.delta is None else cfg.delta,
            )
        cfg.validate()
        return cfg

    def load_network(self):
        try:
            if self.network is None:
                return FractureNetwork.default()
            return FractureNetwork.from_json(self.network)
        except (OSError, ValueError, KeyError) as err:
            raise ConfigError(f"cannot load fracture network {self.network!r}: {err}") from None

    def validate(self):
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(self.problem in PROBLEMS, f"problem must be one of {PROBLEMS}, got {self.problem!r}")
        need(self.solver in SOLVERS, f"solver must be one of {SOLVERS}, got {self.solver!r}")
        need(self.hierarchy in HIERARCHIES,
             f"hierarchy must be one of {HIERARCHIES}, got {self.hierarchy!r}")
        need(int(self.nx) >= 1 and int(self.ny) >= 1, "nx and ny must be positive")
        need(int(self.levels) >= 1, "levels must be at least 1")
        if self.hierarchy == "geometric":
            f = 2 ** (int(self.levels) - 1)
            need(self.nx % f == 0 and self.ny % f == 0,
                 f"geometric hierarchy with {self.levels} levels needs nx and ny divisible "
                 f"by {f}; got {self.nx}x{self.ny} (try --nx {max(f, self.nx // f * f)})")
        need(self.kxx > 0 and self.kyy > 0, "kxx and kyy must be positive")
        if self.problem == "fracture":
            need(self.kf > 0 and self.km > 0 and self.delta > 0, "kf, km and delta must be positive")
            need(self.raster_mode in RASTER_MODES,
                 f"raster_mode must be one of {RASTER_MODES}, got {self.raster_mode!r}")
        need(0.0 < self.strength_tol < 1.0, "strength_tol must lie in (0, 1)")
        need(int(self.nu) >= 1, "nu must be at least 1")
        need(int(self.nu_pre) >= 0 and int(self.nu_post) >= 0, "nu_pre/nu_post must be >= 0")
        need(0.0 < self.omega < 2.0, "omega must lie in (0, 2)")
        need(int(self.m) >= 1, "m must be at least 1")
        need(self.tol > 0, "tol must be positive")
        need(int(self.max_iters) >= 1, "max_iters must be at least 1")
        need(self.gram_drop_tol >= 0, "gram_drop_tol must be non-negative")

    def solver_config(self):
        return SolverConfig(
            tol_rel=self.tol, max_iters=int(self.max_iters), m=int(self.m),
            gram_drop_tol=self.gram_drop_tol,
        )


@dataclass
class Problem:
    grid: StructuredGrid
    coeff: DiffusionField
    bc: BoundarySpec
    source: float
    A: object
    b: np.ndarray


@dataclass
class RunArtifact:
    config: dict
    report: object
    paths: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)
    hierarchy: Optional[dict] = None

    @property
    def converged(self):
        return self.report.converged


def fracture_bc():
    """Inflow 1 on the left, pressure 1 on the right, no-flow top and bottom."""
    return BoundarySpec(
        left=Neumann(1.0), right=Dirichlet(1.0), bottom=Neumann(0.0), top=Neumann(0.0)
    )


def build_problem(cfg):
    grid = StructuredGrid(int(cfg.nx), int(cfg.ny))
    if cfg.problem == "anisotropic":
        coeff = DiffusionField.uniform(grid, cfg.kxx, cfg.kyy)
        bc = BoundarySpec.all_dirichlet(0.0)
        source = cfg.source
    else:
        net = cfg.load_network().with_params(k_f=cfg.kf, k_m=cfg.km, delta=cfg.delta)
        coeff = rasterize_fractures(grid, net, mode=cfg.raster_mode)
        bc = fracture_bc()
        source = 0.0
    A, b = assemble(grid, coeff, bc, f=source)
    return Problem(grid, coeff, bc, source, A, b)


def build_hierarchy(cfg, problem):
    if cfg.hierarchy == "geometric":
        return build_geometric_hierarchy(problem.grid, problem.A, int(cfg.levels))
    return build_aggregation_hierarchy(problem.A, int(cfg.levels), strength_tol=cfg.strength_tol)


def solve_problem(cfg, problem, hierarchy, solver=None):
    solver = solver or cfg.solver
    scfg = cfg.solver_config()
    A, b = problem.A, problem.b
    if solver == "addmg-mpcg":
        x, report = mpcg(A, b, AdditiveMg(hierarchy, nu=cfg.nu, omega=cfg.omega,
                                          workers=cfg.workers), scfg)
    elif solver == "addmg-pcg":
        add = AdditiveMg(hierarchy, nu=cfg.nu, omega=cfg.omega, workers=cfg.workers)
        x, report = pcg(A, b, add.apply, scfg)
    elif solver == "multmg-pcg":
        x, report = pcg(A, b, VCycle(hierarchy, cfg.nu_pre, cfg.nu_post, cfg.omega).apply, scfg)
    elif solver == "cg":
        x, report = pcg(A, b, None, scfg)
    else:
        raise ConfigError(f"solver must be one of {SOLVERS}, got {solver!r}")
    report.solver = solver
    return x, report


# -- artifacts --------------------------------------------------------------------

def _fmt(v):
    return repr(float(v))


def write_convergence_csv(path, report):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iter", "res_2norm"])
        for k, res in enumerate(report.residual_history):
            w.writerow([k, _fmt(res)])


def read_convergence_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return np.array([float(r["res_2norm"]) for r in rows])


def write_alpha_csv(path, report):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iter", "level", "alpha_value"])
        for k, row in enumerate(report.alpha_history, start=1):
            for level, a in enumerate(row):
                w.writerow([k, level, _fmt(a)])


def read_alpha_csv(path):
    """Alpha matrix with one row per iteration, coarsest level first."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        return np.zeros((0, 0))
    iters = max(int(r["iter"]) for r in rows)
    levels = max(int(r["level"]) for r in rows) + 1
    out = np.full((iters, levels), np.nan)
    for r in rows:
        out[int(r["iter"]) - 1, int(r["level"])] = float(r["alpha_value"])
    return out


def write_sweep_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["param", "solver", "iters", "final_rel_res"])
        for row in rows:
            w.writerow([_fmt(row["param"]), row["solver"], row["iters"], _fmt(row["final_rel_res"])])


def read_sweep_csv(path):
    with open(path, newline="") as fh:
        return [
            {
                "param": float(r["param"]),
                "solver": r["solver"],
                "iters": int(r["iters"]),
                "final_rel_res": float(r["final_rel_res"]),
            }
            for r in csv.DictReader(fh)
        ]


def _run_stem(cfg):
    param = f"kxx{cfg.kxx:g}" if cfg.problem == "anisotropic" else f"kf{cfg.kf:g}"
    return f"{cfg.problem}_{cfg.solver}_{param}_n{cfg.nx}"


def _write_artifacts(cfg, report, hierarchy_summary, extras):
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = _run_stem(cfg)
    paths = {"convergence": str(out / f"{stem}_convergence.csv")}
    write_convergence_csv(paths["convergence"], report)
    if report.alpha_history is not None:
        paths["alpha"] = str(out / f"{stem}_alpha.csv")
        write_alpha_csv(paths["alpha"], report)
    paths["record"] = str(out / f"{stem}_run.json")
    record = {
        "config": cfg.to_dict(),
        "result": {
            "solver": report.solver,
            "converged": report.converged,
            "iterations": report.iterations,
            "final_rel_res": report.final_relative_residual,
            "rank_deficiency_events": report.rank_deficiency_events,
            "wall_time": report.wall_time,
        },
        "hierarchy": hierarchy_summary,
        "extras": extras,
    }
    Path(paths["record"]).write_text(json.dumps(record, indent=2))
    return paths


def _execute(cfg, problem=None, hierarchy=None, write=True):
    if problem is None:
        problem = build_problem(cfg)
    if hierarchy is None:
        hierarchy = build_hierarchy(cfg, problem)
    x, report = solve_problem(cfg, problem, hierarchy)
    extras = {}
    if cfg.problem == "fracture":
        left = problem.grid.side_nodes("left")
        extras = {
            "outflow_right": boundary_flux(problem.grid, problem.coeff, problem.bc, x, side="right"),
            "mean_pressure_left": float(x[left].mean()),
        }
    summary = hierarchy.summary()
    paths = _write_artifacts(cfg, report, summary, extras) if write else {}
    log.info("%s: %s after %d iterations (rel. res %.2e)", _run_stem(cfg),
             "converged" if report.converged else "NOT converged",
             report.iterations, report.final_relative_residual)
    return RunArtifact(cfg.to_dict(), report, paths, extras, summary)


def run_example1(cfg, write=True):
    """Anisotropic diffusion, ``K = diag(kxx, kyy)``, zero Dirichlet data, unit source."""
    cfg = cfg.resolved()
    if cfg.problem != "anisotropic":
        raise ConfigError("run_example1 needs problem='anisotropic'")
    return _execute(cfg, write=write)


def run_example2(cfg, write=True):
    """Pressure in a fractured unit square with the shipped or a given network."""
    cfg = cfg.resolved()
    if cfg.problem != "fracture":
        raise ConfigError("run_example2 needs problem='fracture'")
    return _execute(cfg, write=write)


def run(cfg, write=True):
    cfg = cfg.resolved()
    return (run_example1 if cfg.problem == "anisotropic" else run_example2)(cfg, write=write)


def sweep(cfg, param, values, solvers=None, write=True):
    """Run every solver for each value of one parameter.

    The problem and hierarchy are built once per value and shared by all
    solvers, so their comparison is on identical operators.

    Returns
    -------
    rows : list of dict
        Keys ``param, solver, iters, final_rel_res, converged``.
    artifacts : list of RunArtifact
    """
    if param not in SWEEPABLE:
        raise ConfigError(f"can only sweep one of {tuple(SWEEPABLE)}, got {param!r}")
    values = list(values)
    if not values:
        raise ConfigError("sweep needs at least one value")
    solvers = list(solvers or SOLVERS[:3])
    for s in solvers:
        if s not in SOLVERS:
            raise ConfigError(f"solver must be one of {SOLVERS}, got {s!r}")
    if param == "kxx" and cfg.problem != "anisotropic":
        raise ConfigError("kxx sweeps need problem='anisotropic'")
    if param == "kf" and cfg.problem != "fracture":
        raise ConfigError("kf sweeps need problem='fracture'")

    rows, artifacts = [], []
    for value in values:
        base = replace(cfg, **{SWEEPABLE[param]: float(value)}).resolved()
        problem = build_problem(base)
        hierarchy = build_hierarchy(base, problem)
        for solver in solvers:
            art = _execute(replace(base, solver=solver), problem, hierarchy, write=write)
            artifacts.append(art)
            rows.append({
                "param": float(value),
                "solver": solver,
                "iters": art.report.iterations,
                "final_rel_res": art.report.final_relative_residual,
                "converged": art.report.converged,
            })
    if write:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        write_sweep_csv(out / f"sweep_{param}.csv", rows)
    return rows, artifacts
