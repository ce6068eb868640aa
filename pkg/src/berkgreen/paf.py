"""Piecewise affine functions, finite signed measures and the slope Laplacian.

Sign convention: the Laplacian of ``f`` puts at every point the sum of the
outgoing slopes of ``f`` there, so ``t -> t`` on ``[0, L]`` has Laplacian
``delta_0 - delta_L`` and convex kinks carry positive mass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import InputError
from .metric_space import MetricSpace, SpacePoint

# Laplacian atoms below this magnitude are slope-cancellation noise.
ATOM_DROP = 1e-12


@dataclass(frozen=True)
class DensityPiece:
    edge: str
    start: float
    stop: float
    density: float

    @property
    def mass(self) -> float:
        return self.density * (self.stop - self.start)


@dataclass(frozen=True)
class SignedMeasure:
    """Weighted atoms plus piecewise constant densities on edge intervals."""

    atoms: tuple[tuple[SpacePoint, float], ...] = ()
    densities: tuple[DensityPiece, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "atoms", tuple((p, float(w)) for p, w in self.atoms))
        object.__setattr__(self, "densities", tuple(self.densities))
        for d in self.densities:
            if not d.stop >= d.start:
                raise InputError(f"density interval on {d.edge!r} has stop < start")

    @classmethod
    def dirac(cls, p: SpacePoint, weight: float = 1.0) -> "SignedMeasure":
        return cls(atoms=((p, weight),))

    @classmethod
    def uniform(cls, space: MetricSpace, edges: Iterable[str] | None = None) -> "SignedMeasure":
        """Normalized length measure on the given edges (default: skeleton edges)."""
        ids = list(space.skeleton.edges) if edges is None else list(edges)
        total = sum(space.edge(e).length for e in ids)
        if total <= 0:
            raise InputError("uniform measure needs edges of positive total length")
        return cls(densities=tuple(DensityPiece(e, 0.0, space.edge(e).length, 1.0 / total) for e in ids))

    @property
    def total_mass(self) -> float:
        return math.fsum([w for _, w in self.atoms] + [d.mass for d in self.densities])

    def is_probability(self, tol: float = 1e-12) -> bool:
        return (
            all(w >= 0 for _, w in self.atoms)
            and all(d.density >= 0 for d in self.densities)
            and abs(self.total_mass - 1.0) <= tol
        )

    @property
    def is_atomic(self) -> bool:
        return not any(d.mass != 0 for d in self.densities)

    def __add__(self, other: "SignedMeasure") -> "SignedMeasure":
        return SignedMeasure(self.atoms + other.atoms, self.densities + other.densities)

    def __neg__(self) -> "SignedMeasure":
        return self.scaled(-1.0)

    def __sub__(self, other: "SignedMeasure") -> "SignedMeasure":
        return self + (-other)

    def scaled(self, c: float) -> "SignedMeasure":
        return SignedMeasure(
            tuple((p, c * w) for p, w in self.atoms),
            tuple(DensityPiece(d.edge, d.start, d.stop, c * d.density) for d in self.densities),
        )

    def merged_atoms(self, space: MetricSpace, drop: float = 0.0) -> dict[SpacePoint, float]:
        """Atoms keyed by canonical point with coincident weights summed."""
        out: dict[SpacePoint, float] = {}
        for p, w in self.atoms:
            q = space.canon(p)
            out[q] = out.get(q, 0.0) + w
        return {p: w for p, w in out.items() if abs(w) > drop}

    def support_atoms(self, space: MetricSpace) -> list[SpacePoint]:
        return [p for p, w in self.merged_atoms(space).items() if w != 0]


# the Laplacian of a piecewise affine function is purely atomic
LaplacianMeasure = SignedMeasure


class PiecewiseAffineFn:
    """Continuous function, affine between listed breakpoints on every edge."""

    def __init__(
        self,
        space: MetricSpace,
        pieces: Mapping[str, tuple[Sequence[float], Sequence[float]]],
        vertex_values: Mapping[str, float] | None = None,
        *,
        atol: float = 1e-9,
    ) -> None:
        self.space = space
        self.pieces: dict[str, tuple[np.ndarray, np.ndarray]] = {}
        vals: dict[str, float] = dict(vertex_values or {})
        for eid, e in space.full.edges.items():
            if eid not in pieces:
                raise InputError(f"piecewise affine function misses edge {eid!r}")
            offs = np.asarray(pieces[eid][0], dtype=float)
            ys = np.asarray(pieces[eid][1], dtype=float)
            if offs.shape != ys.shape or offs.size < 2:
                raise InputError(f"edge {eid!r}: need matching offset/value lists with both ends")
            if offs[0] != 0.0 or abs(offs[-1] - e.length) > 1e-12 or np.any(np.diff(offs) <= 0):
                raise InputError(f"edge {eid!r}: breakpoints must increase from 0 to the edge length")
            offs = offs.copy()
            offs[-1] = e.length
            self.pieces[eid] = (offs, ys)
            for v, y in ((e.u, ys[0]), (e.v, ys[-1])):
                if v in vals and abs(vals[v] - y) > atol:
                    raise InputError(f"values at vertex {v!r} disagree across incident edges")
                vals.setdefault(v, float(y))
        for v in space.full.vertices:
            if v not in vals:
                raise InputError(f"no value for isolated vertex {v!r}")
        self.vertex_values = vals

    @classmethod
    def from_vertex_values(
        cls,
        space: MetricSpace,
        values: Mapping[str, float],
        interior: Mapping[str, Sequence[tuple[float, float]]] | None = None,
    ) -> "PiecewiseAffineFn":
        """Affine interpolation of vertex values, with optional extra (offset, value) breakpoints."""
        interior = interior or {}
        pieces = {}
        for eid, e in space.full.edges.items():
            extra = sorted(interior.get(eid, ()))
            offs = [0.0, *[t for t, _ in extra], e.length]
            ys = [values[e.u], *[y for _, y in extra], values[e.v]]
            pieces[eid] = (offs, ys)
        return cls(space, pieces, values)

    @classmethod
    def constant(cls, space: MetricSpace, c: float) -> "PiecewiseAffineFn":
        return cls.from_vertex_values(space, {v: c for v in space.full.vertices})

    def __call__(self, p: SpacePoint) -> float:
        p = self.space.canon(p)
        if p.vertex is not None:
            return self.vertex_values[p.vertex]
        offs, ys = self.pieces[p.edge]
        return float(np.interp(p.offset, offs, ys))

    def _combine(self, other: "PiecewiseAffineFn", a: float, b: float) -> "PiecewiseAffineFn":
        if other.space is not self.space:
            raise InputError("functions live on different spaces")
        pieces = {}
        for eid in self.pieces:
            o1, y1 = self.pieces[eid]
            o2, y2 = other.pieces[eid]
            offs = np.union1d(o1, o2)
            pieces[eid] = (offs, a * np.interp(offs, o1, y1) + b * np.interp(offs, o2, y2))
        verts = {v: a * self.vertex_values[v] + b * other.vertex_values[v] for v in self.vertex_values}
        return PiecewiseAffineFn(self.space, pieces, verts)

    def __add__(self, other: "PiecewiseAffineFn") -> "PiecewiseAffineFn":
        return self._combine(other, 1.0, 1.0)

    def __sub__(self, other: "PiecewiseAffineFn") -> "PiecewiseAffineFn":
        return self._combine(other, 1.0, -1.0)

    def __mul__(self, c: float) -> "PiecewiseAffineFn":
        return self._combine(self, float(c), 0.0)

    __rmul__ = __mul__

    def integrate(self, eid: str, a: float, b: float) -> float:
        """Exact integral over ``[a, b]`` of edge ``eid``."""
        offs, ys = self.pieces[eid]
        inner = offs[(offs > a) & (offs < b)]
        xs = np.concatenate(([a], inner, [b]))
        vs = np.interp(xs, offs, ys)
        return float(np.sum(0.5 * (vs[1:] + vs[:-1]) * np.diff(xs)))

    def max_slope(self) -> float:
        out = 0.0
        for offs, ys in self.pieces.values():
            out = max(out, float(np.max(np.abs(np.diff(ys) / np.diff(offs)))))
        return out

    def breakpoints(self) -> list[SpacePoint]:
        pts = [SpacePoint.at(v) for v in self.space.full.vertices]
        for eid, (offs, _) in self.pieces.items():
            pts.extend(SpacePoint.on(eid, t) for t in offs[1:-1])
        return pts


def _end_slope(f: PiecewiseAffineFn, eid: str, at_u: bool) -> float:
    offs, ys = f.pieces[eid]
    if at_u:
        return float((ys[1] - ys[0]) / (offs[1] - offs[0]))
    return float((ys[-2] - ys[-1]) / (offs[-1] - offs[-2]))


def outgoing_slope(f: PiecewiseAffineFn, x: SpacePoint, edge: str, forward: bool | None = None) -> float:
    """One-sided derivative of ``f`` at ``x`` leaving along ``edge``.

    For a vertex the orientation is implied. For an interior point ``forward``
    selects the direction of increasing offset.
    """
    space = f.space
    x = space.canon(x)
    e = space.edge(edge)
    if x.vertex is not None:
        if x.vertex not in (e.u, e.v):
            raise InputError(f"edge {edge!r} is not incident to {x.vertex!r}")
        return _end_slope(f, edge, x.vertex == e.u)
    if x.edge != edge:
        raise InputError(f"point {x} does not lie on edge {edge!r}")
    if forward is None:
        raise InputError("an interior point needs an orientation (forward=True/False)")
    offs, ys = f.pieces[edge]
    if forward:
        k = int(np.searchsorted(offs, x.offset, side="right")) - 1
        return float((ys[k + 1] - ys[k]) / (offs[k + 1] - offs[k]))
    k = int(np.searchsorted(offs, x.offset, side="left"))
    return float((ys[k - 1] - ys[k]) / (offs[k] - offs[k - 1]))


def laplacian(f: PiecewiseAffineFn) -> SignedMeasure:
    """Atom at every point whose outgoing slopes do not cancel."""
    space = f.space
    atoms: list[tuple[SpacePoint, float]] = []
    for v in space.full.vertices:
        w = math.fsum(_end_slope(f, e, space.full.edges[e].u == v) for e in space.full.incident[v])
        if abs(w) > ATOM_DROP:
            atoms.append((SpacePoint.at(v), w))
    for eid, (offs, ys) in f.pieces.items():
        slopes = np.diff(ys) / np.diff(offs)
        for k in range(1, len(offs) - 1):
            w = float(slopes[k] - slopes[k - 1])
            if abs(w) > ATOM_DROP:
                atoms.append((SpacePoint.on(eid, float(offs[k])), w))
    return SignedMeasure(tuple(atoms))


def pair(f: PiecewiseAffineFn, m: SignedMeasure) -> float:
    """Exact integral of ``f`` against ``m``."""
    terms = [w * f(p) for p, w in m.atoms]
    for d in m.densities:
        for eid, a, b in f.space.locate_interval(d.edge, d.start, d.stop):
            terms.append(d.density * f.integrate(eid, a, b))
    return math.fsum(terms)


def _interior(space: MetricSpace, region: Iterable[str]) -> tuple[set[str], set[str]]:
    ids = set(region)
    edges = {e for e in ids if e in space.full.edges}
    unknown = ids - edges - set(space.full.vertices)
    if unknown:
        raise InputError(f"unknown region ids: {sorted(unknown)}")
    verts = {
        v for v in ids - edges if space.full.incident[v] and all(e in edges for e in space.full.incident[v])
    }
    return edges, verts


def is_subharmonic(f: PiecewiseAffineFn, region: Iterable[str], tol: float = 1e-12) -> bool:
    """True iff no Laplacian atom in the interior of ``region`` is negative.

    ``region`` is a set of edge ids and vertex ids. Open edges are interior; a
    vertex is interior only when it is listed and every incident edge is listed.
    """
    edges, verts = _interior(f.space, region)
    for p, w in laplacian(f).atoms:
        inside = p.vertex in verts if p.vertex is not None else p.edge in edges
        if inside and w < -tol:
            return False
    return True


def atomize(m: SignedMeasure, h: float) -> SignedMeasure:
    """Replace every density piece by cell-midpoint atoms on cells of width at most ``h``."""
    if not h > 0:
        raise InputError("atomize needs h > 0")
    atoms = list(m.atoms)
    for d in m.densities:
        width = d.stop - d.start
        if width <= 0 or d.density == 0:
            continue
        k = max(math.ceil(width / h - 1e-9), 1)
        cell = width / k
        atoms.extend(
            (SpacePoint.on(d.edge, d.start + (j + 0.5) * cell), d.density * cell) for j in range(k)
        )
    return SignedMeasure(tuple(atoms))


def measure_residual(space: MetricSpace, a: SignedMeasure, b: SignedMeasure) -> float:
    """Largest per-point discrepancy between two atomic measures."""
    ma, mb = a.merged_atoms(space), b.merged_atoms(space)
    keys = set(ma) | set(mb)
    return max((abs(ma.get(k, 0.0) - mb.get(k, 0.0)) for k in keys), default=0.0)
