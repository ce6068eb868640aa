"""Potential kernels on metric graphs and their extension to augmented spaces.

Two routes compute the same numbers:

* :func:`solve_graph_kernel` refines the graph at the base and the pole, solves the
  pinned weighted Laplacian system and returns the piecewise affine solution;
* :class:`KernelHandle` inverts the pinned skeleton Laplacian once, evaluates
  the graph kernel between arbitrary skeleton points by bilinear interpolation
  plus the same-edge tent term, and extends it off the skeleton by the
  retraction / meet-point case formula.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.linalg import spsolve

from .errors import DomainError, StructureError
from .metric_space import MetricGraph, MetricSpace, PointType, SpacePoint, as_space
from .paf import DensityPiece, PiecewiseAffineFn, SignedMeasure, atomize

# 3-point Gauss-Legendre rule, exact for polynomials of degree <= 5
_GL_X, _GL_W = np.polynomial.legendre.leggauss(3)


@dataclass(frozen=True)
class KernelSolve:
    zeta: SpacePoint
    y: SpacePoint
    values: PiecewiseAffineFn

    @property
    def space(self) -> MetricSpace:
        return self.values.space


def _laplacian_matrix(graph: MetricGraph):
    n = len(graph.vertices)
    rows, cols, data = [], [], []
    for e in graph.edges.values():
        i, j, c = graph.index[e.u], graph.index[e.v], 1.0 / e.length
        rows += [i, j, i, j]
        cols += [i, j, j, i]
        data += [c, c, -c, -c]
    return coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr()


def solve_graph_kernel(graph: MetricGraph | MetricSpace, zeta: SpacePoint, y: SpacePoint) -> KernelSolve:
    """Piecewise affine ``g`` with slope Laplacian ``delta_zeta - delta_y`` and ``g(zeta) = 0``."""
    space = as_space(graph)
    if space.full.n_components() != 1:
        raise StructureError("kernel solve needs a connected graph")
    refined = space.refine([zeta, y])
    z, p = refined.canon(zeta), refined.canon(y)
    g = refined.full
    values = np.zeros(len(g.vertices))
    if z != p:
        iz, iy = g.index[z.vertex], g.index[p.vertex]
        keep = np.array([i for i in range(len(g.vertices)) if i != iz])
        L = _laplacian_matrix(g)[keep][:, keep]
        rhs = np.zeros(len(keep))
        rhs[int(np.searchsorted(keep, iy))] = 1.0
        values[keep] = np.atleast_1d(spsolve(L.tocsc(), rhs))
    fn = PiecewiseAffineFn.from_vertex_values(refined, dict(zip(g.vertices, values.tolist())))
    return KernelSolve(z, p, fn)


@dataclass
class _Batch:
    """Vectorized description of a list of points relative to a handle's work space."""

    key: np.ndarray       # id of the canonical point
    type_one: np.ndarray  # bool
    tkey: np.ndarray      # id of the retraction
    ia: np.ndarray        # skeleton vertex indices of the retraction's edge ends
    ib: np.ndarray
    wa: np.ndarray        # interpolation weights
    wb: np.ndarray
    eidx: np.ndarray      # skeleton edge index of the retraction, -1 at vertices
    t: np.ndarray
    length: np.ndarray
    depth: np.ndarray     # distance to the retraction
    points: list[SpacePoint]

    def __len__(self) -> int:
        return len(self.points)


class KernelHandle:
    """Evaluator of the potential kernel ``g_zeta0(x, y)`` on a whole augmented space.

    Points may be given in terms of the original space; they are relocated onto an
    internal working space in which ``zeta0`` is a skeleton vertex.
    """

    def __init__(self, space: MetricSpace | MetricGraph, zeta0: SpacePoint) -> None:
        self.space = as_space(space)
        self.zeta0 = self.space.canon(zeta0)
        if self.space.point_type(self.zeta0) is PointType.I:
            raise DomainError(f"base point {self.zeta0} is of type I; kernels need a type II/III base")
        self.work = self.space.promote(self.zeta0)
        skel = self.work.skeleton
        self._z = self.work.canon(self.zeta0).vertex
        self._sk_index = skel.index
        self._sk_edges = {eid: k for k, eid in enumerate(skel.edges)}
        n = len(skel.vertices)
        K = np.zeros((n, n))
        iz = skel.index[self._z]
        if n > 1:
            keep = np.array([i for i in range(n) if i != iz])
            L = _laplacian_matrix(skel).toarray()[np.ix_(keep, keep)]
            inv = np.linalg.inv(L)
            K[np.ix_(keep, keep)] = 0.5 * (inv + inv.T)
        self.K = K
        self._keys: dict[SpacePoint, int] = {}

    def __repr__(self) -> str:
        return f"KernelHandle(base={self.zeta0}, work={self.work!r})"

    # -- point preparation -------------------------------------------------

    def _key(self, p: SpacePoint) -> int:
        return self._keys.setdefault(p, len(self._keys))

    def batch(self, points: Sequence[SpacePoint]) -> _Batch:
        w = self.work
        n = len(points)
        key = np.empty(n, dtype=np.int64)
        tkey = np.empty(n, dtype=np.int64)
        type_one = np.zeros(n, dtype=bool)
        ia = np.empty(n, dtype=np.int64)
        ib = np.empty(n, dtype=np.int64)
        wa = np.ones(n)
        wb = np.zeros(n)
        eidx = np.full(n, -1, dtype=np.int64)
        t = np.zeros(n)
        length = np.ones(n)
        depth = np.zeros(n)
        canon = []
        for k, p in enumerate(points):
            q = w.canon(p)
            canon.append(q)
            key[k] = self._key(q)
            type_one[k] = w.point_type(q) is PointType.I
            r = w.retract(q)
            tkey[k] = self._key(r)
            if r != q:
                depth[k] = w.rho(q, r)
            if r.vertex is not None:
                ia[k] = ib[k] = self._sk_index[r.vertex]
            else:
                e = w.skeleton.edges[r.edge]
                ia[k], ib[k] = self._sk_index[e.u], self._sk_index[e.v]
                eidx[k] = self._sk_edges[r.edge]
                t[k], length[k] = r.offset, e.length
                wb[k] = r.offset / e.length
                wa[k] = 1.0 - wb[k]
        return _Batch(key, type_one, tkey, ia, ib, wa, wb, eidx, t, length, depth, canon)

    # -- evaluation ---------------------------------------------------------

    def _graph_part(self, A: _Batch, B: _Batch) -> np.ndarray:
        K = self.K
        M = (
            (A.wa[:, None] * B.wa[None, :]) * K[np.ix_(A.ia, B.ia)]
            + (A.wa[:, None] * B.wb[None, :]) * K[np.ix_(A.ia, B.ib)]
            + (A.wb[:, None] * B.wa[None, :]) * K[np.ix_(A.ib, B.ia)]
            + (A.wb[:, None] * B.wb[None, :]) * K[np.ix_(A.ib, B.ib)]
        )
        same = (A.eidx[:, None] == B.eidx[None, :]) & (A.eidx[:, None] >= 0)
        if same.any():
            i, j = np.nonzero(same)
            s = np.minimum(A.t[i], B.t[j])
            u = np.maximum(A.t[i], B.t[j])
            M[i, j] += s * (A.length[i] - u) / A.length[i]
        return M

    def matrix(self, xs: Sequence[SpacePoint] | _Batch, ys: Sequence[SpacePoint] | _Batch | None = None) -> np.ndarray:
        """``g_zeta0(x_i, y_j)``; ``inf`` exactly on type-I diagonal pairs."""
        A = xs if isinstance(xs, _Batch) else self.batch(xs)
        B = A if ys is None else (ys if isinstance(ys, _Batch) else self.batch(ys))
        M = self._graph_part(A, B)
        fiber = (A.tkey[:, None] == B.tkey[None, :]) & (A.depth[:, None] > 0) & (B.depth[None, :] > 0)
        if fiber.any():
            w = self.work
            for i, j in zip(*np.nonzero(fiber)):
                d = w.rho(A.points[i], B.points[j])
                M[i, j] += max(0.5 * (A.depth[i] + B.depth[j] - d), 0.0)
        diag = (A.key[:, None] == B.key[None, :]) & A.type_one[:, None]
        M[diag] = math.inf
        return M

    def value(self, x: SpacePoint, y: SpacePoint) -> float:
        return float(self.matrix([x], [y])[0, 0])

    def three_var(self, zeta: SpacePoint, x: SpacePoint, y: SpacePoint) -> float:
        """``g(x, y) - g(x, zeta) - g(y, zeta)``, infinite on the type-I triple diagonal."""
        w = self.work
        zc, xc, yc = w.canon(zeta), w.canon(x), w.canon(y)
        if zc == xc == yc and w.point_type(zc) is PointType.I:
            return math.inf
        M = self.matrix([xc, xc, yc], [yc, zc, zc])
        return _combine_inf([M[0, 0], -M[1, 1], -M[2, 2]], (x, y, zeta))

    def three_var_matrix(self, zeta: SpacePoint, xs: Sequence[SpacePoint]) -> np.ndarray:
        """``g(zeta, x_i, x_j)`` for non-type-I mesh points avoiding ``zeta``."""
        A = self.batch(xs)
        Z = self.batch([zeta])
        G = self.matrix(A)
        col = self.matrix(A, Z)[:, 0]
        if np.isinf(col).any() or np.isinf(G).any():
            raise DomainError("three-variable kernel matrix needs finite entries (drop type-I points)")
        return G - col[:, None] - col[None, :]

    # -- closed-form integrals against skeleton densities ------------------

    def _piece_data(self, eid: str) -> tuple[int, int, int, float]:
        e = self.work.skeleton.edges[eid]
        return self._sk_edges[eid], self._sk_index[e.u], self._sk_index[e.v], e.length

    def point_segment(self, A: _Batch, eid: str, a: float, b: float) -> np.ndarray:
        """``int_a^b g(x_i, s) ds`` along skeleton edge ``eid`` of the work space."""
        k, iu, iv, ell = self._piece_data(eid)
        m = 0.5 * (a + b)
        wb = m / ell
        wa = 1.0 - wb
        K = self.K
        bil = A.wa * (wa * K[A.ia, iu] + wb * K[A.ia, iv]) + A.wb * (wa * K[A.ib, iu] + wb * K[A.ib, iv])
        out = (b - a) * bil
        same = A.eidx == k
        if same.any():
            out[same] += _tent_1d(A.t[same], a, b, ell)
        return out

    def segment_segment(self, e1: str, a1: float, b1: float, e2: str, a2: float, b2: float) -> float:
        k1, u1, v1, l1 = self._piece_data(e1)
        k2, u2, v2, l2 = self._piece_data(e2)
        m1, m2 = 0.5 * (a1 + b1), 0.5 * (a2 + b2)
        x1, y1 = 1.0 - m1 / l1, m1 / l1
        x2, y2 = 1.0 - m2 / l2, m2 / l2
        K = self.K
        bil = x1 * (x2 * K[u1, u2] + y2 * K[u1, v2]) + y1 * (x2 * K[v1, u2] + y2 * K[v1, v2])
        out = (b1 - a1) * (b2 - a2) * bil
        if k1 == k2:
            cuts = sorted({a2, b2, *[c for c in (a1, b1) if a2 < c < b2]})
            for lo, hi in zip(cuts, cuts[1:]):
                ts = 0.5 * (hi - lo) * _GL_X + 0.5 * (hi + lo)
                out += 0.5 * (hi - lo) * float(np.dot(_GL_W, _tent_1d(ts, a1, b1, l1)))
        return float(out)

    # -- measures -------------------------------------------------------------

    def prepare(self, m: SignedMeasure, h: float) -> "PreparedMeasure":
        """Split ``m`` into atoms and skeleton density pieces; tree densities are atomized at ``h``."""
        pieces: list[tuple[str, float, float, float]] = []
        tree_density = []
        for d in m.densities:
            if d.density == 0:
                continue
            for pid, a, b in self.work.locate_interval(d.edge, d.start, d.stop):
                if b <= a:
                    continue
                if pid in self.work.skeleton.edges:
                    pieces.append((pid, a, b, d.density))
                else:
                    tree_density.append((pid, a, b, d.density))
        atoms = list(m.atoms)
        if tree_density:
            extra = atomize(SignedMeasure(densities=tuple(DensityPiece(*t) for t in tree_density)), h)
            atoms.extend(extra.atoms)
        pts = [p for p, _ in atoms]
        return PreparedMeasure(self.batch(pts), np.array([w for _, w in atoms], dtype=float), pieces, bool(tree_density))

    def bilinear(self, P: "PreparedMeasure", Q: "PreparedMeasure") -> float:
        """``int int g(x, y) dP(x) dQ(y)``."""
        total = 0.0
        if len(P.batch) and len(Q.batch):
            total += _weighted_sum(self.matrix(P.batch, Q.batch), P.weights, Q.weights)
        for pid, a, b, d in Q.pieces:
            if len(P.batch):
                total += d * float(np.dot(P.weights, self.point_segment(P.batch, pid, a, b)))
        for pid, a, b, d in P.pieces:
            if len(Q.batch):
                total += d * float(np.dot(Q.weights, self.point_segment(Q.batch, pid, a, b)))
            for qid, c, e, dq in Q.pieces:
                total += d * dq * self.segment_segment(pid, a, b, qid, c, e)
        return total

    def potential(self, P: "PreparedMeasure", A: _Batch) -> np.ndarray:
        """``x_i -> int g(x_i, y) dP(y)``."""
        out = np.zeros(len(A))
        if len(P.batch):
            M = self.matrix(A, P.batch)
            with np.errstate(invalid="ignore"):
                terms = M * P.weights[None, :]
            terms[:, P.weights == 0] = 0.0
            if np.isnan(terms).any():
                raise DomainError("potential mixes +inf and -inf atoms")
            out += terms.sum(axis=1)
        for pid, a, b, d in P.pieces:
            out += d * self.point_segment(A, pid, a, b)
        return out


@dataclass
class PreparedMeasure:
    batch: _Batch
    weights: np.ndarray
    pieces: list[tuple[str, float, float, float]]
    atomized: bool

    @property
    def mass(self) -> float:
        return float(self.weights.sum()) + sum(d * (b - a) for _, a, b, d in self.pieces)


def _tent_1d(t: np.ndarray, a: float, b: float, ell: float) -> np.ndarray:
    """``int_a^b min(t, s) (ell - max(t, s)) / ell ds`` for each ``t``."""
    t = np.asarray(t, dtype=float)
    c = np.clip(t, a, b)
    low = (ell - t) * (c * c - a * a) / 2.0
    high = t * ((ell * b - b * b / 2.0) - (ell * c - c * c / 2.0))
    return (low + high) / ell


def _weighted_sum(M: np.ndarray, wa: np.ndarray, wb: np.ndarray) -> float:
    W = np.outer(wa, wb)
    with np.errstate(invalid="ignore"):
        T = W * M
    T[W == 0] = 0.0
    if np.isnan(T).any():
        raise DomainError("double integral mixes +inf and -inf")
    return float(T.sum())


def _combine_inf(terms: Sequence[float], where) -> float:
    pos = any(t == math.inf for t in terms)
    neg = any(t == -math.inf for t in terms)
    if pos and neg:
        raise DomainError(f"indeterminate inf - inf in three-variable kernel at {where}")
    return math.fsum(terms) if not (pos or neg) else (math.inf if pos else -math.inf)


def kernel_value(handle: KernelHandle, x: SpacePoint, y: SpacePoint) -> float:
    return handle.value(x, y)


def three_var_kernel(handle: KernelHandle, zeta: SpacePoint, x: SpacePoint, y: SpacePoint) -> float:
    return handle.three_var(zeta, x, y)


def base_change_check(
    space: MetricSpace | KernelHandle,
    zeta: SpacePoint | KernelHandle,
    zeta_prime: SpacePoint | KernelHandle,
    x: SpacePoint,
    y: SpacePoint,
) -> float:
    """Residual of ``g_z(x,y) = g_z'(x,y) - g_z'(x,z) - g_z'(y,z) + g_z'(z,z)``.

    ``zeta`` / ``zeta_prime`` may be given as prebuilt handles to avoid re-solving.
    """
    h = zeta if isinstance(zeta, KernelHandle) else KernelHandle(space, zeta)
    hp = zeta_prime if isinstance(zeta_prime, KernelHandle) else KernelHandle(space, zeta_prime)
    z = h.zeta0
    if h.space.is_type_one(x) and h.space.canon(x) == h.space.canon(y):
        raise DomainError("base change is undefined on the type-I diagonal")
    lhs = h.value(x, y)
    M = hp.matrix([x, x, y, z], [y, z, z, z])
    rhs = M[0, 0] - M[1, 1] - M[2, 2] + M[3, 3]
    return abs(lhs - rhs)
