"""Adaptive drivers: marking, data reduction, the tolerance-driven solve
loop, interface resolution, and the outer regularized driver.

The outer driver runs a tolerance schedule tau_j = tau0 * beta^j. For each
stage it resolves the curve neighborhood to the current mollification radius
(interface_loop), then reduces the total estimator below mu * tau_j
(solve_loop). The solve loop alternates two branches: when the data part
dominates (D > lambda * theta * E) it drives D down with Doerfler marking on
the data indicators alone; otherwise it marks on the total indicators.

Every Galerkin solve appends one row to a RunRecord; rows serialize to CSV
for the benchmark tooling.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .curves import Curve
from .errors import NonTerminationError
from .estimate import estimate
from .fem import (BilinearFormSpec, ErrorIntegrator, FeFunction, assemble,
                  energy_error, prolong, solve_galerkin)
from .forcing import (KERNEL_FAMILIES, Kernel, LineForcing,
                      RegularizedForcing, r_of_tau)
from .mesh import Mesh, interface_cells, interface_diameter

logger = logging.getLogger("mollifem")

DATA_PASS_CAP = 10_000
GREEDY_PASS_CAP = 10_000
SOLVE_PASS_CAP = 1_000
INTERFACE_PASS_CAP = 10_000

BRANCHES = ("INIT", "INTERFACE", "DATA", "MARK")


@dataclass(frozen=True)
class AfemParams:
    """Knobs of the adaptive drivers; all live in the stated open intervals."""

    theta: float = 0.7
    theta_data: float = 0.7
    lam: float = 1.0 / 3.0
    mu: float = 0.5
    beta: float = 0.8
    tau0: float = 0.6
    j_max: int = 6
    single_shot: bool = False
    kernel_family: str = "radial_c1"
    extra_final_step: bool = True

    def issues(self) -> list[str]:
        bad = []
        if not 0.0 < self.theta < 1.0:
            bad.append(f"theta={self.theta} outside (0,1)")
        if not 0.0 < self.theta_data < 1.0:
            bad.append(f"theta_data={self.theta_data} outside (0,1)")
        if not 0.0 < self.lam <= 1.0:
            bad.append(f"lambda={self.lam} outside (0,1]")
        if not 0.0 < self.mu < 1.0:
            bad.append(f"mu={self.mu} outside (0,1)")
        if not 0.0 < self.beta < 1.0:
            bad.append(f"beta={self.beta} outside (0,1)")
        if not self.tau0 > 0:
            bad.append(f"tau0={self.tau0} not positive")
        if not (isinstance(self.j_max, (int, np.integer)) and self.j_max >= 0):
            bad.append(f"j_max={self.j_max} not a nonnegative integer")
        if self.kernel_family not in KERNEL_FAMILIES:
            bad.append(f"kernel_family={self.kernel_family!r} unknown")
        return bad

    def validate(self) -> "AfemParams":
        bad = self.issues()
        if bad:
            raise ValueError("invalid parameters: " + "; ".join(bad))
        return self


@dataclass
class RunRow:
    j: int
    k: int
    tau: float
    r: float
    dofs: int
    cells: int
    estimator_total: float
    estimator_jump: float
    estimator_data: float
    energy_error: float
    branch: str
    wall_ms: float


CSV_COLUMNS = ("j", "k", "tau", "r", "dofs", "cells", "estimator_total",
               "estimator_jump", "estimator_data", "energy_error", "branch",
               "wall_ms")


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


@dataclass
class RunRecord:
    """Row per Galerkin solve, in execution order."""

    rows: list[RunRow] = field(default_factory=list)

    def append(self, row: RunRow) -> None:
        self.rows.append(row)

    def __len__(self) -> int:
        return len(self.rows)

    def to_csv(self, path, deterministic: bool = False) -> None:
        lines = [",".join(CSV_COLUMNS)]
        for row in self.rows:
            wall = 0.0 if deterministic else row.wall_ms
            lines.append(",".join([
                str(row.j), str(row.k), _fmt(row.tau), _fmt(row.r),
                str(row.dofs), str(row.cells), _fmt(row.estimator_total),
                _fmt(row.estimator_jump), _fmt(row.estimator_data),
                _fmt(row.energy_error), row.branch, _fmt(wall),
            ]))
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")

    @classmethod
    def from_csv(cls, path) -> "RunRecord":
        with open(path, "r", encoding="ascii") as fh:
            lines = [ln.strip() for ln in fh if ln.strip()]
        if not lines or lines[0] != ",".join(CSV_COLUMNS):
            raise ValueError(f"{path}: not a run record (bad header)")
        rec = cls()
        for ln in lines[1:]:
            p = ln.split(",")
            if len(p) != len(CSV_COLUMNS):
                raise ValueError(f"{path}: malformed row {ln!r}")
            rec.append(RunRow(int(p[0]), int(p[1]), float(p[2]), float(p[3]),
                              int(p[4]), int(p[5]), float(p[6]), float(p[7]),
                              float(p[8]), float(p[9]), p[10], float(p[11])))
        return rec

    def u_samples(self) -> list[RunRow]:
        """Last row of each outer stage (the accepted approximations).

        A trailing stage made of a single interface-branch row is the
        post-loop radius update, not an accepted approximation, and is
        dropped.
        """
        groups: dict[int, list[RunRow]] = {}
        order: list[int] = []
        for row in self.rows:
            if row.j not in groups:
                groups[row.j] = []
                order.append(row.j)
            groups[row.j].append(row)
        if len(order) > 1:
            tail = groups[order[-1]]
            if len(tail) == 1 and tail[0].branch == "INTERFACE":
                order.pop()
        return [groups[j][-1] for j in order]


def mark(values: np.ndarray, ids: np.ndarray, theta: float) -> np.ndarray:
    """Smallest set of cell ids with sum of squared indicators >=
    theta^2 times the global sum; descending values, ascending id on ties."""
    if not 0.0 < theta < 1.0:
        raise ValueError("theta must lie in (0,1)")
    values = np.asarray(values, dtype=np.float64)
    ids = np.asarray(ids, dtype=np.int64)
    sq = values * values
    total = sq.sum()
    if total <= 0.0:
        return np.empty(0, dtype=np.int64)
    order = np.lexsort((ids, -values))
    csum = np.cumsum(sq[order])
    target = theta * theta * total
    cut = int(np.searchsorted(csum, target, side="left"))
    cut = min(cut, len(csum) - 1)
    return ids[order[:cut + 1]]


def data_loop(mesh: Mesh, g, tau: float, theta_data: float) -> Mesh:
    """Refine on data indicators until the global data term is <= tau."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    for _ in range(DATA_PASS_CAP):
        ids = mesh.active_id_array
        d = g.data_indicator(mesh)
        total = float(np.sqrt((d * d).sum()))
        if total <= tau:
            return mesh
        marked = mark(d, ids, theta_data)
        mesh = mesh.refine(marked)
    raise NonTerminationError(
        f"data reduction did not reach tau={tau:.3g} in {DATA_PASS_CAP} passes")


def greedy(mesh: Mesh, g, tau: float) -> Mesh:
    """Bisect the single worst data-indicator cell until the total is <= tau."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    for _ in range(GREEDY_PASS_CAP):
        ids = mesh.active_id_array
        d = g.data_indicator(mesh)
        total = float(np.sqrt((d * d).sum()))
        if total <= tau:
            return mesh
        worst = ids[np.lexsort((ids, -d))[0]]
        mesh = mesh.refine(np.array([worst]))
    raise NonTerminationError(
        f"greedy reduction did not reach tau={tau:.3g} in {GREEDY_PASS_CAP} passes")


def interface_loop(mesh: Mesh, curve: Curve, r: float) -> Mesh:
    """Refine cells meeting the curve until they all satisfy h_T <= r/2."""
    if r <= 0:
        raise ValueError("r must be positive")
    cells = interface_cells(mesh, curve)
    for _ in range(INTERFACE_PASS_CAP):
        if interface_diameter(mesh, cells) <= 0.5 * r:
            return mesh
        active = mesh.active_id_array
        h = mesh.h_sizes[np.searchsorted(active, cells)]
        marked = cells[h > 0.5 * r]
        before = mesh.num_created
        mesh = mesh.refine(marked)
        # children sit inside their parents, so only newly created cells can
        # join the interface set; unrefined members stay put
        active = mesh.active_id_array
        survivors = cells[np.isin(cells, active, assume_unique=True)]
        fresh = interface_cells(mesh, curve, np.nonzero(active >= before)[0])
        cells = np.unique(np.concatenate((survivors, fresh)))
    raise NonTerminationError(
        f"interface resolution to r={r:.3g} exceeded {INTERFACE_PASS_CAP} passes")


def solve_loop(mesh: Mesh, g, tau: float, params: AfemParams,
               form: BilinearFormSpec, boundary_data=None, exact=None,
               curve: Curve | None = None, record: RunRecord | None = None,
               outer_j: int = 0, row_tau: float | None = None,
               row_r: float = 0.0, first_branch: str = "INIT",
               warm: FeFunction | None = None):
    """Estimator-driven adaptive solve down to tolerance tau.

    Returns (solution, mesh, record). `exact` (optional) supplies the
    energy-error column; `curve` routes the kink-aware error quadrature.
    Rows carry `outer_j`, `row_tau` (default: tau) and `row_r`.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    params.validate()
    if record is None:
        record = RunRecord()
    if row_tau is None:
        row_tau = tau

    def one_pass(branch: str, k: int, warm_fn):
        t0 = time.perf_counter()
        system = assemble(mesh, form, g, boundary_data)
        guess = None
        if warm_fn is not None:
            guess = prolong(warm_fn, mesh).nodal_values
        w = solve_galerkin(system, initial_guess=guess)
        ind = estimate(mesh, w, g, form)
        err = float("nan")
        if isinstance(exact, ErrorIntegrator):
            err = exact(w)
        elif exact is not None:
            err = energy_error(exact, w, form, curve)
        ms = (time.perf_counter() - t0) * 1e3
        record.append(RunRow(outer_j, k, row_tau, row_r, mesh.num_vertices,
                             mesh.num_cells, ind.global_total,
                             ind.global_jump, ind.global_data, err, branch,
                             ms))
        return w, ind

    w, ind = one_pass(first_branch, 0, warm)
    k = 0
    while ind.global_total > tau:
        if k >= SOLVE_PASS_CAP:
            raise NonTerminationError(
                f"adaptive solve stalled: estimator {ind.global_total:.3g} > "
                f"tau {tau:.3g} after {SOLVE_PASS_CAP} passes at "
                f"{mesh.num_vertices} vertices")
        sigma = params.lam * params.theta * ind.global_total
        if ind.global_data > sigma:
            mesh = data_loop(mesh, g, 0.5 * sigma, params.theta_data)
            branch = "DATA"
        else:
            marked = mark(ind.total, ind.ids, params.theta)
            mesh = mesh.refine(marked)
            branch = "MARK"
        k += 1
        w, ind = one_pass(branch, k, w)
        logger.debug("solve pass %d (%s): E=%.4g D=%.4g dofs=%d", k, branch,
                     ind.global_total, ind.global_data, mesh.num_vertices)
    return w, mesh, record


def regsolve(problem, params: AfemParams, initial_mesh: Mesh | None = None):
    """Outer regularized driver over the tolerance schedule.

    `problem` supplies the domain mesh, curve, data, boundary values and
    (optionally) the exact solution; see the problems module. Returns
    (solution, mesh, record).
    """
    params.validate()
    mesh = initial_mesh if initial_mesh is not None else problem.initial_mesh()
    kernel = Kernel.make(params.kernel_family)
    form = problem.form
    record = RunRecord()
    w = None
    err_fn = None
    if problem.exact is not None:
        err_fn = ErrorIntegrator(problem.exact, form, problem.curve)

    def stage(mesh, j, tau, warm):
        r = r_of_tau(tau)
        mesh = interface_loop(mesh, problem.curve, r)
        g = RegularizedForcing(problem.curve, problem.f, kernel, r)
        t0 = time.perf_counter()
        w, mesh, _ = solve_loop(
            mesh, g, params.mu * tau, params, form, problem.boundary_data,
            exact=err_fn, curve=problem.curve, record=record,
            outer_j=j, row_tau=tau, row_r=r, first_branch="INTERFACE",
            warm=warm)
        logger.info("stage j=%d: tau=%.4g r=%.4g dofs=%d (%.1fs)", j, tau, r,
                    mesh.num_vertices, time.perf_counter() - t0)
        return w, mesh

    if params.single_shot:
        tau = params.tau0 * params.beta ** params.j_max
        w, mesh = stage(mesh, 0, tau, None)
        tau_next = params.beta * tau
    else:
        tau = params.tau0
        for j in range(params.j_max + 1):
            w, mesh = stage(mesh, j, tau, w)
            tau = params.beta * tau
        tau_next = tau

    if params.extra_final_step:
        r = r_of_tau(tau_next)
        mesh = interface_loop(mesh, problem.curve, r)
        g = RegularizedForcing(problem.curve, problem.f, kernel, r)
        t0 = time.perf_counter()
        system = assemble(mesh, form, g, problem.boundary_data)
        guess = prolong(w, mesh).nodal_values if w is not None else None
        w = solve_galerkin(system, initial_guess=guess)
        ind = estimate(mesh, w, g, form)
        err = float("nan")
        if err_fn is not None:
            err = err_fn(w)
        ms = (time.perf_counter() - t0) * 1e3
        j_extra = (record.rows[-1].j + 1) if record.rows else 0
        record.append(RunRow(j_extra, 0, tau_next, r, mesh.num_vertices,
                             mesh.num_cells, ind.global_total,
                             ind.global_jump, ind.global_data, err,
                             "INTERFACE", ms))
    return w, mesh, record


def baseline_solve(problem, params: AfemParams,
                   initial_mesh: Mesh | None = None):
    """Non-regularized driver: exact clipped line integrals on the right-hand
    side and the surrogate data indicator, over the same tolerance schedule."""
    params.validate()
    mesh = initial_mesh if initial_mesh is not None else problem.initial_mesh()
    g = LineForcing(problem.curve, problem.f)
    record = RunRecord()
    w = None
    err_fn = None
    if problem.exact is not None:
        err_fn = ErrorIntegrator(problem.exact, problem.form, problem.curve)
    tau = params.tau0
    stages = 1 if params.single_shot else params.j_max + 1
    if params.single_shot:
        tau = params.tau0 * params.beta ** params.j_max
    for j in range(stages):
        t0 = time.perf_counter()
        w, mesh, _ = solve_loop(
            mesh, g, params.mu * tau, params, problem.form,
            problem.boundary_data, exact=err_fn, curve=problem.curve,
            record=record, outer_j=j, row_tau=tau, row_r=0.0,
            first_branch="INIT", warm=w)
        logger.info("baseline stage j=%d: tau=%.4g dofs=%d (%.1fs)", j, tau,
                    mesh.num_vertices, time.perf_counter() - t0)
        tau = params.beta * tau
    return w, mesh, record


def initial_grid_report(mesh: Mesh, curve: Curve) -> list[str]:
    """Sanity findings about the starting grid's view of the curve.

    Empty list means: some cells meet the curve and their sizes are within
    a 4:1 ratio (a quasi-uniformity proxy).
    """
    findings = []
    cells = interface_cells(mesh, curve)
    if len(cells) == 0:
        findings.append("no cell of the initial grid intersects the curve")
        return findings
    pos = mesh.active_pos
    h = mesh.h_sizes[[pos[int(i)] for i in cells]]
    if h.max() > 4.0 * h.min():
        findings.append(
            f"interface cell sizes vary by {h.max() / h.min():.2f} : 1 "
            "(exceeds 4:1)")
    return findings
