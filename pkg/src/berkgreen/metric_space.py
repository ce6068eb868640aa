"""Metric graphs, augmented spaces (skeleton plus hanging trees) and their geometry.

A :class:`MetricSpace` is the finite model of an analytic curve used throughout the
package: a connected metric graph (the skeleton) with finitely many metric trees
glued to skeleton vertices. Leaves of the trees may be tagged type I; every other
vertex is type II unless tagged otherwise, and edge-interior points are type III.

All objects are immutable after construction. Operations that change the shape
(:func:`refine`, :meth:`MetricSpace.promote`) return new spaces which remember, for
every edge, the original edge it was cut from, so points written against the
original ids can still be located.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components, dijkstra

from .errors import AmbiguousPathError, InputError, StructureError

# Offsets within this distance of an edge end snap to the vertex.
SNAP = 1e-12


class PointType(str, Enum):
    I = "I"
    II = "II"
    III = "III"


@dataclass(frozen=True)
class SpacePoint:
    """A location: either a vertex id, or an edge id with an offset from the edge's ``u`` end."""

    vertex: str | None = None
    edge: str | None = None
    offset: float | None = None

    def __post_init__(self) -> None:
        if (self.vertex is None) == (self.edge is None):
            raise InputError("a point needs exactly one of vertex or edge")
        if self.edge is not None:
            if self.offset is None or not math.isfinite(self.offset):
                raise InputError(f"point on edge {self.edge!r} needs a finite offset")
            object.__setattr__(self, "offset", float(self.offset))

    @classmethod
    def at(cls, vertex: str) -> "SpacePoint":
        return cls(vertex=vertex)

    @classmethod
    def on(cls, edge: str, offset: float) -> "SpacePoint":
        return cls(edge=edge, offset=offset)

    @classmethod
    def parse(cls, text: str) -> "SpacePoint":
        """Parse ``"v"`` (a vertex) or ``"e:0.25"`` (edge ``e`` at offset 0.25)."""
        text = text.strip()
        if ":" in text:
            edge, _, off = text.rpartition(":")
            try:
                return cls.on(edge, float(off))
            except ValueError as exc:
                raise InputError(f"bad point {text!r}: offset is not a number") from exc
        if not text:
            raise InputError("empty point")
        return cls.at(text)

    @property
    def is_vertex(self) -> bool:
        return self.vertex is not None

    def __str__(self) -> str:
        if self.vertex is not None:
            return self.vertex
        return f"{self.edge}:{self.offset!r}"


@dataclass(frozen=True)
class Edge:
    id: str
    u: str
    v: str
    length: float


@dataclass(frozen=True)
class PathMetricResult:
    distance: float
    path: tuple[SpacePoint, ...]
    # edges[k] carries the stretch path[k] -> path[k+1]
    edges: tuple[str, ...] = field(default=(), repr=False)


def _as_type(tag: PointType | str) -> PointType:
    try:
        return PointType(tag)
    except ValueError as exc:
        raise InputError(f"unknown point type {tag!r}; expected I, II or III") from exc


class MetricGraph:
    """Finite connected metric multigraph without loop edges."""

    def __init__(
        self,
        vertices: Mapping[str, PointType | str],
        edges: Iterable[Edge],
        *,
        require_connected: bool = True,
    ) -> None:
        self.vertices: dict[str, PointType] = {v: _as_type(t) for v, t in vertices.items()}
        self.edges: dict[str, Edge] = {}
        if not self.vertices:
            raise StructureError("a metric graph needs at least one vertex")
        for e in edges:
            if e.id in self.edges:
                raise StructureError(f"duplicate edge id {e.id!r}")
            if e.u not in self.vertices or e.v not in self.vertices:
                missing = e.u if e.u not in self.vertices else e.v
                raise StructureError(f"edge {e.id!r} references unknown vertex {missing!r}")
            if e.u == e.v:
                raise StructureError(f"edge {e.id!r} is a loop at {e.u!r}; subdivide it first")
            if not (e.length > 0 and math.isfinite(e.length)):
                raise StructureError(f"edge {e.id!r} has non-positive length {e.length!r}")
            self.edges[e.id] = Edge(e.id, e.u, e.v, float(e.length))
        self.index = {v: i for i, v in enumerate(self.vertices)}
        self.incident: dict[str, list[str]] = {v: [] for v in self.vertices}
        for e in self.edges.values():
            self.incident[e.u].append(e.id)
            self.incident[e.v].append(e.id)
        if require_connected and self.n_components() != 1:
            raise StructureError("metric graph is not connected")

    def __repr__(self) -> str:
        return f"MetricGraph({len(self.vertices)} vertices, {len(self.edges)} edges)"

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MetricGraph):
            return NotImplemented
        return self.vertices == other.vertices and self.edges == other.edges

    def _adjacency(self):
        n = len(self.vertices)
        best: dict[tuple[int, int], float] = {}
        for e in self.edges.values():
            a, b = sorted((self.index[e.u], self.index[e.v]))
            best[(a, b)] = min(best.get((a, b), math.inf), e.length)
        rows = [a for a, _ in best] + [b for _, b in best]
        cols = [b for _, b in best] + [a for a, _ in best]
        data = list(best.values()) * 2
        return coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr()

    def n_components(self) -> int:
        return connected_components(self._adjacency(), directed=False)[0]

    @property
    def is_tree(self) -> bool:
        return len(self.edges) == len(self.vertices) - 1 and self.n_components() == 1

    @cached_property
    def distances(self) -> np.ndarray:
        if not self.edges:
            return np.zeros((len(self.vertices), len(self.vertices)))
        return dijkstra(self._adjacency(), directed=False)

    @cached_property
    def _predecessors(self) -> np.ndarray:
        if not self.edges:
            return np.full((len(self.vertices), len(self.vertices)), -9999)
        return dijkstra(self._adjacency(), directed=False, return_predecessors=True)[1]

    @property
    def diameter(self) -> float:
        """Largest vertex-to-vertex distance (edge interiors can lie farther apart)."""
        return float(self.distances.max()) if self.edges else 0.0

    @property
    def total_length(self) -> float:
        return float(sum(e.length for e in self.edges.values()))

    def vertex_path(self, a: str, b: str) -> list[str]:
        """Vertices of one shortest path from ``a`` to ``b`` (inclusive)."""
        ids = list(self.vertices)
        ia, ib = self.index[a], self.index[b]
        out = [ib]
        while out[-1] != ia:
            out.append(int(self._predecessors[ia, out[-1]]))
        return [ids[i] for i in reversed(out)]

    def edge_between(self, a: str, b: str) -> Edge:
        """Shortest edge joining ``a`` and ``b``."""
        cands = [self.edges[e] for e in self.incident[a] if b in (self.edges[e].u, self.edges[e].v)]
        if not cands:
            raise InputError(f"no edge joins {a!r} and {b!r}")
        return min(cands, key=lambda e: e.length)


@dataclass(frozen=True)
class HangingTree:
    """A metric tree glued to the skeleton at ``attach``.

    ``vertices`` excludes the attach vertex; ``edges`` may use it as an endpoint.
    """

    attach: str
    vertices: Mapping[str, PointType | str]
    edges: tuple[Edge, ...]

    def graph(self) -> MetricGraph:
        verts = {self.attach: PointType.II, **self.vertices}
        return MetricGraph(verts, self.edges)


class MetricSpace:
    """Skeleton graph plus hanging trees; the full graph is their union."""

    def __init__(
        self,
        skeleton: MetricGraph,
        trees: Sequence[HangingTree] = (),
        *,
        origin: Mapping[str, tuple[str, float]] | None = None,
    ) -> None:
        self.skeleton = skeleton
        self.trees: tuple[HangingTree, ...] = tuple(
            HangingTree(t.attach, {v: _as_type(k) for v, k in t.vertices.items()}, tuple(t.edges))
            for t in trees
        )
        for v, t in skeleton.vertices.items():
            if t is PointType.I:
                raise StructureError(f"skeleton vertex {v!r} is tagged type I; type I is only allowed on tree leaves")

        vertices: dict[str, PointType] = dict(skeleton.vertices)
        edges: list[Edge] = list(skeleton.edges.values())
        self.vertex_tree: dict[str, int] = {}
        self.edge_tree: dict[str, int] = {}
        for i, tree in enumerate(self.trees):
            if tree.attach not in skeleton.vertices:
                raise StructureError(f"tree {i} attaches at {tree.attach!r}, which is not a skeleton vertex")
            g = tree.graph()
            if not g.is_tree:
                raise StructureError(f"hanging tree {i} (attached at {tree.attach!r}) contains a cycle")
            for v, t in tree.vertices.items():
                if v in vertices:
                    raise StructureError(f"tree vertex {v!r} collides with an existing vertex")
                if t is PointType.I and len(g.incident[v]) != 1:
                    raise StructureError(f"type-I vertex {v!r} is not a leaf of its tree")
                vertices[v] = t
                self.vertex_tree[v] = i
            for e in tree.edges:
                self.edge_tree[e.id] = i
            edges.extend(tree.edges)
        # duplicate edge ids across components surface here
        self.full = MetricGraph(vertices, edges)
        self.origin: dict[str, tuple[str, float]] = {
            e: (origin[e] if origin and e in origin else (e, 0.0)) for e in self.full.edges
        }
        self._pieces: dict[str, list[tuple[float, str]]] = {}
        for e, (root, start) in self.origin.items():
            self._pieces.setdefault(root, []).append((start, e))
        for lst in self._pieces.values():
            lst.sort()

    def __repr__(self) -> str:
        return (
            f"MetricSpace(skeleton={self.skeleton!r}, trees={len(self.trees)}, "
            f"full={self.full!r})"
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MetricSpace):
            return NotImplemented
        return (
            self.skeleton == other.skeleton
            and len(self.trees) == len(other.trees)
            and all(
                a.attach == b.attach and dict(a.vertices) == dict(b.vertices) and set(a.edges) == set(b.edges)
                for a, b in zip(self.trees, other.trees)
            )
        )

    # -- points -----------------------------------------------------------

    def edge(self, eid: str) -> Edge:
        try:
            return self.full.edges[eid]
        except KeyError:
            raise InputError(f"unknown edge {eid!r}") from None

    def canon(self, p: SpacePoint) -> SpacePoint:
        """Validate ``p`` and return its canonical form (edge ends become vertices).

        Points written against an edge that was later subdivided are relocated onto
        the piece that now contains them.
        """
        if p.vertex is not None:
            if p.vertex not in self.full.vertices:
                raise InputError(f"unknown vertex {p.vertex!r}")
            return p
        if p.edge not in self.full.edges:
            return self._locate_root(p)
        e = self.full.edges[p.edge]
        t = p.offset
        if t < -SNAP or t > e.length + SNAP:
            raise InputError(f"offset {t!r} outside edge {e.id!r} of length {e.length!r}")
        if t <= SNAP:
            return SpacePoint.at(e.u)
        if t >= e.length - SNAP:
            return SpacePoint.at(e.v)
        return p

    def _locate_root(self, p: SpacePoint) -> SpacePoint:
        pieces = self._pieces.get(p.edge)
        if not pieces:
            raise InputError(f"unknown edge {p.edge!r}")
        total = sum(self.full.edges[e].length for _, e in pieces)
        if p.offset < -SNAP or p.offset > total + SNAP:
            raise InputError(f"offset {p.offset!r} outside edge {p.edge!r} of length {total!r}")
        for start, eid in pieces:
            length = self.full.edges[eid].length
            if p.offset <= start + length + SNAP:
                return self.canon(SpacePoint.on(eid, min(max(p.offset - start, 0.0), length)))
        raise AssertionError("unreachable")

    def locate_interval(self, eid: str, a: float, b: float) -> list[tuple[str, float, float]]:
        """Split ``[a, b]`` on edge ``eid`` (current or original id) into pieces of current edges."""
        if a > b:
            a, b = b, a
        if eid in self.full.edges:
            length = self.full.edges[eid].length
            if a < -SNAP or b > length + SNAP:
                raise InputError(f"interval [{a}, {b}] outside edge {eid!r} of length {length}")
            return [(eid, max(a, 0.0), min(b, length))]
        pieces = self._pieces.get(eid)
        if not pieces:
            raise InputError(f"unknown edge {eid!r}")
        out = []
        for start, pid in pieces:
            length = self.full.edges[pid].length
            lo, hi = max(a, start), min(b, start + length)
            if hi - lo > 0:
                out.append((pid, lo - start, hi - start))
        return out

    def point_type(self, p: SpacePoint) -> PointType:
        p = self.canon(p)
        if p.vertex is not None:
            return self.full.vertices[p.vertex]
        return PointType.III

    def is_type_one(self, p: SpacePoint) -> bool:
        return self.point_type(p) is PointType.I

    def tree_of(self, p: SpacePoint) -> int | None:
        """Index of the hanging tree holding ``p`` (attach points belong to the skeleton)."""
        p = self.canon(p)
        if p.vertex is not None:
            return self.vertex_tree.get(p.vertex)
        return self.edge_tree.get(p.edge)

    def on_skeleton(self, p: SpacePoint) -> bool:
        return self.tree_of(p) is None

    def ends(self, p: SpacePoint) -> list[tuple[int, float]]:
        """(vertex index, distance) pairs through which ``p`` reaches the vertex set."""
        p = self.canon(p)
        if p.vertex is not None:
            return [(self.full.index[p.vertex], 0.0)]
        e = self.full.edges[p.edge]
        return [(self.full.index[e.u], p.offset), (self.full.index[e.v], e.length - p.offset)]

    # -- geometry ---------------------------------------------------------

    def rho(self, x: SpacePoint, y: SpacePoint) -> float:
        x, y = self.canon(x), self.canon(y)
        if x == y:
            return 0.0
        D = self.full.distances
        best = min(dx + D[a, b] + dy for a, dx in self.ends(x) for b, dy in self.ends(y))
        if x.edge is not None and x.edge == y.edge:
            best = min(best, abs(x.offset - y.offset))
        return float(best)

    def geodesic(self, x: SpacePoint, y: SpacePoint) -> PathMetricResult:
        """One shortest path from ``x`` to ``y`` with its breakpoints."""
        x, y = self.canon(x), self.canon(y)
        if x == y:
            return PathMetricResult(0.0, (x,), ())
        if x.edge is not None and x.edge == y.edge:
            direct = abs(x.offset - y.offset)
        else:
            direct = math.inf
        D = self.full.distances
        ids = list(self.full.vertices)
        best, ba, bb = math.inf, None, None
        for a, dx in self.ends(x):
            for b, dy in self.ends(y):
                d = dx + D[a, b] + dy
                if d < best:
                    best, ba, bb = d, a, b
        if direct <= best:
            return PathMetricResult(direct, (x, y), (x.edge,))
        verts = self.full.vertex_path(ids[ba], ids[bb])
        path: list[SpacePoint] = []
        edges: list[str] = []
        if x.vertex is None:
            path.append(x)
            edges.append(x.edge)
        path.extend(SpacePoint.at(v) for v in verts)
        for a, b in zip(verts, verts[1:]):
            edges.append(self.full.edge_between(a, b).id)
        if y.vertex is None:
            edges.append(y.edge)
            path.append(y)
        return PathMetricResult(float(best), tuple(path), tuple(edges))

    def _offset_on(self, p: SpacePoint, eid: str) -> float:
        e = self.full.edges[eid]
        if p.vertex is None:
            return p.offset
        return 0.0 if p.vertex == e.u else e.length

    def point_along(self, path: PathMetricResult, s: float) -> SpacePoint:
        """The point at arc length ``s`` from the start of ``path``."""
        s = min(max(s, 0.0), path.distance)
        for k, eid in enumerate(path.edges):
            a, b = path.path[k], path.path[k + 1]
            oa, ob = self._offset_on(a, eid), self._offset_on(b, eid)
            gap = abs(ob - oa)
            if s <= gap + SNAP or k == len(path.edges) - 1:
                step = min(s, gap)
                return self.canon(SpacePoint.on(eid, oa + math.copysign(step, ob - oa)))
            s -= gap
        return path.path[0]

    def retract(self, x: SpacePoint) -> SpacePoint:
        x = self.canon(x)
        i = self.tree_of(x)
        if i is None:
            return x
        return SpacePoint.at(self.trees[i].attach)

    def _trees_touching(self, p: SpacePoint) -> set[int]:
        i = self.tree_of(p)
        if i is not None:
            return {i}
        if p.vertex is None:
            return set()
        return {k for k, t in enumerate(self.trees) if t.attach == p.vertex}

    def meet(self, zeta: SpacePoint, x: SpacePoint, y: SpacePoint) -> SpacePoint:
        """First point where the paths from ``x`` and from ``y`` to ``zeta`` join."""
        zeta, x, y = self.canon(zeta), self.canon(x), self.canon(y)
        unique = self.skeleton.is_tree
        if not unique:
            tx, ty = self.retract(x), self.retract(y)
            unique = tx == ty == zeta
        if not unique:
            unique = bool(self._trees_touching(zeta) & self._trees_touching(x) & self._trees_touching(y))
        if not unique:
            raise AmbiguousPathError(
                f"{zeta}, {x}, {y} do not lie in a uniquely path-connected region"
            )
        if x == y:
            return x
        dxz, dyz, dxy = self.rho(x, zeta), self.rho(y, zeta), self.rho(x, y)
        along = 0.5 * (dxz + dxy - dyz)
        return self.point_along(self.geodesic(x, zeta), along)

    # -- shape changes ----------------------------------------------------

    def refine(self, points: Iterable[SpacePoint]) -> "MetricSpace":
        cuts: dict[str, set[float]] = {}
        for p in points:
            p = self.canon(p)
            if p.edge is not None:
                cuts.setdefault(p.edge, set()).add(p.offset)
        if not cuts:
            return self
        return self._split(cuts)

    def _split(self, cuts: Mapping[str, set[float]]) -> "MetricSpace":
        origin = dict(self.origin)
        skel_v = dict(self.skeleton.vertices)
        skel_e: list[Edge] = []
        tree_v = [dict(t.vertices) for t in self.trees]
        tree_e: list[list[Edge]] = [[] for _ in self.trees]

        def emit(owner: int | None, e: Edge) -> None:
            (skel_e if owner is None else tree_e[owner]).append(e)

        for e in self.full.edges.values():
            owner = self.edge_tree.get(e.id)
            offs = sorted(cuts.get(e.id, ()))
            if not offs:
                emit(owner, e)
                continue
            root, start = self.origin[e.id]
            marks = [0.0, *offs, e.length]
            names = [e.u]
            for t in offs:
                vid = f"{root}@{start + t!r}"
                names.append(vid)
                (skel_v if owner is None else tree_v[owner])[vid] = PointType.III
            names.append(e.v)
            origin.pop(e.id, None)
            for k in range(len(marks) - 1):
                pid = f"{root}/{start + marks[k]!r}"
                emit(owner, Edge(pid, names[k], names[k + 1], marks[k + 1] - marks[k]))
                origin[pid] = (root, start + marks[k])
        skeleton = MetricGraph(skel_v, skel_e)
        trees = [HangingTree(t.attach, tree_v[i], tuple(tree_e[i])) for i, t in enumerate(self.trees)]
        return MetricSpace(skeleton, trees, origin=origin)

    def promote(self, zeta: SpacePoint) -> "MetricSpace":
        """Equal-as-a-set space whose skeleton contains ``zeta`` as a vertex.

        A tree point is absorbed by moving the tree path from the attach point to
        ``zeta`` into the skeleton; what is left of that tree hangs off the path.
        """
        space = self.refine([zeta])
        zeta = space.canon(zeta)
        i = space.tree_of(zeta)
        if i is None:
            return space
        tree = space.trees[i]
        g = tree.graph()
        path = g.vertex_path(tree.attach, zeta.vertex)
        on_path = set(path)
        path_edges = {g.edge_between(a, b).id for a, b in zip(path, path[1:])}

        skel_v = dict(space.skeleton.vertices)
        for v in path[1:]:
            skel_v[v] = tree.vertices[v]
        skel_e = list(space.skeleton.edges.values()) + [g.edges[e] for e in sorted(path_edges)]

        # split what remains of the tree into components, each touching one path vertex
        rest = [e for e in tree.edges if e.id not in path_edges]
        parent = {v: v for v in g.vertices}

        def find(v: str) -> str:
            while parent[v] != v:
                parent[v] = parent[parent[v]]
                v = parent[v]
            return v

        for e in rest:
            ru, rv = find(e.u), find(e.v)
            if ru != rv:
                # keep a path vertex as the representative
                if rv in on_path:
                    ru, rv = rv, ru
                parent[rv] = ru
        groups: dict[str, list[Edge]] = {}
        for e in rest:
            groups.setdefault(find(e.u), []).append(e)
        new_trees = [t for k, t in enumerate(space.trees) if k != i]
        for root, edges in groups.items():
            verts = {v: tree.vertices[v] for e in edges for v in (e.u, e.v) if v != root}
            new_trees.append(HangingTree(root, verts, tuple(edges)))
        return MetricSpace(MetricGraph(skel_v, skel_e), new_trees, origin=space.origin)

    def mesh(self, h: float) -> list[SpacePoint]:
        """Non-type-I vertices plus ``ceil(length/h) - 1`` equally spaced interior points per edge."""
        if not h > 0:
            raise InputError("mesh spacing h must be positive")
        pts = [SpacePoint.at(v) for v, t in self.full.vertices.items() if t is not PointType.I]
        for e in self.full.edges.values():
            k = max(math.ceil(e.length / h - 1e-9) - 1, 0)
            pts.extend(SpacePoint.on(e.id, e.length * j / (k + 1)) for j in range(1, k + 1))
        return pts


# -- functional API --------------------------------------------------------


def rho(space: MetricSpace, x: SpacePoint, y: SpacePoint) -> float:
    return space.rho(x, y)


def retract(space: MetricSpace, x: SpacePoint) -> SpacePoint:
    return space.retract(x)


def meet(space: MetricSpace, zeta: SpacePoint, x: SpacePoint, y: SpacePoint) -> SpacePoint:
    return space.meet(zeta, x, y)


def refine(space: MetricSpace, points: Iterable[SpacePoint]) -> MetricSpace:
    return space.refine(points)


def mesh(space: MetricSpace, h: float) -> list[SpacePoint]:
    return space.mesh(h)


def as_space(graph: MetricGraph | MetricSpace) -> MetricSpace:
    return graph if isinstance(graph, MetricSpace) else MetricSpace(graph)


# -- small builders used by tests, the CLI and the elliptic models ------------


def segment(length: float, *, n_pieces: int = 1, prefix: str = "v") -> MetricSpace:
    """Path graph ``v0 - v1 - ... `` of total ``length`` split into equal pieces."""
    verts = {f"{prefix}{k}": PointType.II for k in range(n_pieces + 1)}
    step = length / n_pieces
    edges = [Edge(f"e{k}", f"{prefix}{k}", f"{prefix}{k + 1}", step) for k in range(n_pieces)]
    return MetricSpace(MetricGraph(verts, edges))


def circle(lengths: Sequence[float], trees: Sequence[HangingTree] = ()) -> MetricSpace:
    """Cycle through vertices ``c0, c1, ...`` with the given arc lengths (at least two arcs)."""
    if len(lengths) < 2:
        raise InputError("a circle needs at least two arcs (loop edges are not allowed)")
    n = len(lengths)
    verts = {f"c{k}": PointType.II for k in range(n)}
    edges = [Edge(f"a{k}", f"c{k}", f"c{(k + 1) % n}", lengths[k]) for k in range(n)]
    return MetricSpace(MetricGraph(verts, edges), trees)
