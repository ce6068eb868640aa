"""Energy minimization over probability vectors on a mesh.

The discrete problem is ``min w^T G w`` over the simplex, where ``G`` is the Gram
matrix of a kernel on mesh points. Frank-Wolfe with away steps and exact line
search is the default solver; projected gradient is available as a cross-check.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InputError
from .green import GreenFunction
from .kernel import KernelHandle
from .metric_space import MetricSpace, PointType, SpacePoint
from .paf import SignedMeasure

SOLVERS = ("frank_wolfe", "projected_gradient")


@dataclass(frozen=True)
class SolverOptions:
    max_iter: int = 100_000
    tol: float = 1e-8
    solver: str = "frank_wolfe"
    record: bool = False

    def __post_init__(self) -> None:
        solver = self.solver.replace("-", "_")
        if solver not in SOLVERS:
            raise InputError(f"unknown solver {self.solver!r}; choose from {SOLVERS}")
        object.__setattr__(self, "solver", solver)
        if self.max_iter <= 0 or not self.tol > 0:
            raise InputError("max_iter and tol must be positive")


@dataclass
class SimplexQP:
    mesh: list[SpacePoint]
    gram: np.ndarray

    def __post_init__(self) -> None:
        asym = float(np.max(np.abs(self.gram - self.gram.T))) if self.gram.size else 0.0
        if asym > 1e-9:
            raise InputError(f"Gram matrix is not symmetric (max asymmetry {asym:.3g})")

    def objective(self, w: np.ndarray) -> float:
        return float(w @ self.gram @ w)


@dataclass
class SolveTrace:
    weights: np.ndarray
    value: float
    gap: float
    iterations: int
    converged: bool
    history: list[float] = field(default_factory=list)


@dataclass
class EquilibriumResult:
    mesh: list[SpacePoint]
    weights: np.ndarray
    value: float
    robin_constant: float
    capacity: float
    frostman_deviation: float
    potential: np.ndarray
    iterations: int
    converged: bool
    gap: float
    solver: str
    kind: str  # "emp" or "capacity"
    positive_capacity: bool = True
    history: list[float] = field(default_factory=list, repr=False)

    @property
    def minimizer(self) -> SignedMeasure:
        return SignedMeasure(tuple((p, float(w)) for p, w in zip(self.mesh, self.weights) if w > 0))

    def as_dict(self) -> dict:
        return {
            "kind": self.kind,
            "solver": self.solver,
            "converged": self.converged,
            "iterations": self.iterations,
            "gap": self.gap,
            "value": self.value,
            "robin_constant": self.robin_constant,
            "capacity": self.capacity,
            "positive_capacity": self.positive_capacity,
            "frostman_deviation": self.frostman_deviation,
            "support_size": int(np.count_nonzero(self.weights > 0)),
            "minimizer": [[str(p), float(w)] for p, w in zip(self.mesh, self.weights) if w > 0],
        }


def frank_wolfe(G: np.ndarray, tol: float = 1e-8, max_iter: int = 100_000, record: bool = False) -> SolveTrace:
    """Away-step Frank-Wolfe with exact line search for ``min w^T G w`` on the simplex."""
    n = G.shape[0]
    diag = np.diag(G)
    start = int(np.argmin(diag))
    w = np.zeros(n)
    w[start] = 1.0
    Gw = G[:, start].copy()
    f = float(w @ Gw)
    history = [f] if record else []
    gap = math.inf
    for it in range(1, max_iter + 1):
        grad = 2.0 * Gw
        s = int(np.argmin(grad))
        gw = float(grad @ w)
        gap = gw - float(grad[s])
        if gap <= tol:
            return SolveTrace(w, f, gap, it - 1, True, history)
        support = np.flatnonzero(w > 0)
        a = int(support[np.argmax(grad[support])])
        if gap >= float(grad[a]) - gw or w[a] >= 1.0:
            Gd = G[:, s] - Gw
            d_s, gmax = s, 1.0
            slope = float(grad[s]) - gw
        else:
            Gd = Gw - G[:, a]
            d_s, gmax = None, w[a] / (1.0 - w[a])
            slope = gw - float(grad[a])
        # d^T G d, with d = e_s - w or w - e_a
        if d_s is not None:
            curv = float(G[s, s] - 2.0 * Gw[s] + f)
        else:
            curv = float(f - 2.0 * Gw[a] + G[a, a])
        gamma = gmax if curv <= 0 else min(-slope / (2.0 * curv), gmax)
        if d_s is not None:
            w *= 1.0 - gamma
            w[s] += gamma
        else:
            w *= 1.0 + gamma
            w[a] -= gamma
            if gamma == gmax:
                w[a] = 0.0
        Gw += gamma * Gd
        if it % 1000 == 0:
            Gw = G @ w  # resync accumulated drift
        f = float(w @ Gw)
        if record:
            history.append(f)
    return SolveTrace(w, f, gap, max_iter, False, history)


def _project_simplex(v: np.ndarray) -> np.ndarray:
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, len(v) + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    theta = css[rho] / (rho + 1)
    return np.maximum(v - theta, 0.0)


def projected_gradient(G: np.ndarray, tol: float = 1e-8, max_iter: int = 100_000, record: bool = False) -> SolveTrace:
    n = G.shape[0]
    lip = 2.0 * max(float(np.max(np.abs(np.linalg.eigvalsh(0.5 * (G + G.T))))), 1e-300)
    w = np.full(n, 1.0 / n)
    history = []
    gap = math.inf
    for it in range(1, max_iter + 1):
        Gw = G @ w
        grad = 2.0 * Gw
        gap = float(grad @ w - grad.min())
        if record:
            history.append(float(w @ Gw))
        if gap <= tol:
            return SolveTrace(w, float(w @ Gw), gap, it - 1, True, history)
        w = _project_simplex(w - grad / lip)
    return SolveTrace(w, float(w @ G @ w), gap, max_iter, False, history)


def solve_simplex_qp(qp: SimplexQP, opts: SolverOptions = SolverOptions()) -> SolveTrace:
    fn = frank_wolfe if opts.solver == "frank_wolfe" else projected_gradient
    trace = fn(qp.gram, opts.tol, opts.max_iter, opts.record)
    if not trace.converged:
        warnings.warn(
            f"{opts.solver} stopped after {trace.iterations} iterations with gap {trace.gap:.3g}",
            RuntimeWarning,
            stacklevel=2,
        )
    return trace


def _finite_mesh(space: MetricSpace, points: Sequence[SpacePoint]) -> list[SpacePoint]:
    seen: dict[SpacePoint, None] = {}
    for p in points:
        q = space.canon(p)
        if space.point_type(q) is not PointType.I:
            seen.setdefault(q, None)
    return list(seen)


def minimize_energy(G: GreenFunction, mesh_h: float, opts: SolverOptions = SolverOptions()) -> EquilibriumResult:
    """Minimize the mu-energy over probability vectors on the ``mesh_h`` mesh."""
    mesh = _finite_mesh(G.space, G.space.mesh(mesh_h))
    if not mesh:
        raise InputError("mesh is empty after removing type-I points")
    qp = SimplexQP(mesh, G.matrix(mesh))
    trace = solve_simplex_qp(qp, opts)
    u = qp.gram @ trace.weights
    return EquilibriumResult(
        mesh=mesh,
        weights=trace.weights,
        value=trace.value,
        robin_constant=trace.value,
        capacity=math.exp(-trace.value),
        frostman_deviation=float(np.max(np.abs(u - trace.value))),
        potential=u,
        iterations=trace.iterations,
        converged=trace.converged,
        gap=trace.gap,
        solver=opts.solver,
        kind="emp",
        history=trace.history,
    )


def robin_constant(G: GreenFunction, mesh_h: float, opts: SolverOptions = SolverOptions()) -> float:
    return minimize_energy(G, mesh_h, opts).value


@dataclass(frozen=True)
class Region:
    """Closed subset ``E``: edge sub-segments (edge id, from, to) and isolated points."""

    segments: tuple[tuple[str, float, float], ...] = ()
    points: tuple[SpacePoint, ...] = ()

    def __post_init__(self) -> None:
        if not self.segments and not self.points:
            raise InputError("region E is empty")

    def contains(self, space: MetricSpace, p: SpacePoint) -> bool:
        p = space.canon(p)
        if any(space.canon(q) == p for q in self.points):
            return True
        for eid, a, b in self.segments:
            for pid, lo, hi in space.locate_interval(eid, a, b):
                e = space.edge(pid)
                if p.edge == pid and lo - 1e-12 <= p.offset <= hi + 1e-12:
                    return True
                if p.vertex is not None and (
                    (p.vertex == e.u and lo <= 1e-12) or (p.vertex == e.v and hi >= e.length - 1e-12)
                ):
                    return True
        return False

    def mesh(self, space: MetricSpace, h: float) -> list[SpacePoint]:
        pts: list[SpacePoint] = list(self.points)
        for eid, a, b in self.segments:
            for pid, lo, hi in space.locate_interval(eid, a, b):
                k = max(math.ceil((hi - lo) / h - 1e-9), 1)
                pts.extend(SpacePoint.on(pid, lo + (hi - lo) * j / k) for j in range(k + 1))
        return _finite_mesh(space, pts)


def capacity(
    space: MetricSpace,
    zeta0: SpacePoint,
    zeta: SpacePoint,
    E: Region,
    mesh_h: float,
    opts: SolverOptions = SolverOptions(),
    handle: KernelHandle | None = None,
) -> EquilibriumResult:
    """Minimize the three-variable-kernel energy over probability vectors on a mesh of ``E``."""
    if E.contains(space, zeta):
        raise InputError(f"zeta={zeta} lies in E")
    mesh = E.mesh(space, mesh_h)
    if not mesh:
        return EquilibriumResult(
            mesh=[], weights=np.zeros(0), value=math.inf, robin_constant=math.inf, capacity=0.0,
            frostman_deviation=0.0, potential=np.zeros(0), iterations=0, converged=True, gap=0.0,
            solver=opts.solver, kind="capacity", positive_capacity=False,
        )
    h = handle if handle is not None else KernelHandle(space, zeta0)
    qp = SimplexQP(mesh, h.three_var_matrix(zeta, mesh))
    trace = solve_simplex_qp(qp, opts)
    u = qp.gram @ trace.weights
    supp = trace.weights > 0
    return EquilibriumResult(
        mesh=mesh,
        weights=trace.weights,
        value=trace.value,
        robin_constant=trace.value,
        capacity=math.exp(-trace.value),
        frostman_deviation=float(np.max(np.abs(u[supp] - trace.value))),
        potential=u,
        iterations=trace.iterations,
        converged=trace.converged,
        gap=trace.gap,
        solver=opts.solver,
        kind="capacity",
        positive_capacity=math.isfinite(trace.value),
        history=trace.history,
    )


def frostman_check(result: EquilibriumResult) -> float:
    """Spread of the equilibrium potential: whole mesh for the mu-energy problem, support for capacity."""
    if result.weights.size == 0:
        return 0.0
    if result.kind == "capacity":
        supp = result.weights > 0
        return float(np.max(np.abs(result.potential[supp] - result.value)))
    return float(np.max(np.abs(result.potential - result.value)))
