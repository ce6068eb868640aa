"""JSON readers and writers for spaces, measures, regions and point lists.

Space file::

    {"vertices": [{"id": "a", "type": "II"}, ...],
     "edges": [{"id": "e1", "u": "a", "v": "b", "length": 1.0}, ...],
     "trees": [{"attach": "a",
                "vertices": [{"id": "p", "type": "I"}, ...],
                "edges": [{"id": "t1", "u": "a", "v": "p", "length": 0.5}],
                "leaf_types": {"p": "I"}}]}

``type`` defaults to ``"II"`` and ``leaf_types`` overrides vertex types.
A point is ``{"vertex": "a"}``, ``{"edge": "e1", "offset": 0.3}`` or the string
form ``"a"`` / ``"e1:0.3"``.

Measure file::

    {"atoms": [{"point": {"edge": "e1", "offset": 0.3}, "weight": 0.5}],
     "densities": [{"edge": "e1", "from": 0, "to": 1, "density": 0.5}]}

Region file: ``{"segments": [{"edge": "e1", "from": 1.5, "to": 2}], "points": [...]}``.
Points file: ``{"points": [...]}``.

Every structural problem is reported as an :class:`InputError` whose message
starts with ``path:line:col`` pointing at the offending record.
"""

from __future__ import annotations

import json
import math
import re
from typing import Any

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import InputError, StructureError
from .metric_space import Edge, HangingTree, MetricGraph, MetricSpace, PointType, SpacePoint
from .minimization import Region
from .paf import DensityPiece, SignedMeasure

SPACE_KEYS = {"vertices", "edges", "trees"}
TREE_KEYS = {"attach", "vertices", "edges", "leaf_types"}
VERTEX_KEYS = {"id", "type"}
EDGE_KEYS = {"id", "u", "v", "length"}
MEASURE_KEYS = {"atoms", "densities"}
ATOM_KEYS = {"point", "weight"}
DENSITY_KEYS = {"edge", "from", "to", "density"}
REGION_KEYS = {"segments", "points"}
SEGMENT_KEYS = {"edge", "from", "to"}


class _Doc:
    """Raw text plus a name, used to turn ids into line/column positions."""

    def __init__(self, text: str, name: str) -> None:
        self.text = text
        self.name = name

    def where(self, key: str | None = None, value: str | None = None) -> str:
        pos = -1
        if key is not None and value is not None:
            m = re.search(rf'"{re.escape(key)}"\s*:\s*"{re.escape(value)}"', self.text)
            if m:
                pos = m.start()
        elif value is not None:
            pos = self.text.find(json.dumps(value))
        if pos < 0:
            return f"{self.name}"
        line = self.text.count("\n", 0, pos) + 1
        col = pos - (self.text.rfind("\n", 0, pos) + 1) + 1
        return f"{self.name}:{line}:{col}"

    def fail(self, msg: str, key: str | None = None, value: str | None = None) -> InputError:
        return InputError(f"{self.where(key, value)}: {msg}")


def _load(text: str, name: str) -> tuple[Any, _Doc]:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{name}:{exc.lineno}:{exc.colno}: malformed JSON: {exc.msg}") from None
    return data, _Doc(text, name)


def _read(path: str) -> str:
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise InputError(f"{path}: cannot read file: {exc.strerror}") from None


def _obj(doc: _Doc, x: Any, keys: set[str], what: str, required: set[str] = frozenset()) -> dict:
    if not isinstance(x, dict):
        raise doc.fail(f"{what} must be an object")
    extra = sorted(set(x) - keys)
    if extra:
        raise doc.fail(f"unknown field {extra[0]!r} in {what}", value=extra[0])
    missing = sorted(required - set(x))
    if missing:
        raise doc.fail(f"{what} is missing field {missing[0]!r}")
    return x


def _num(doc: _Doc, x: Any, field: str, ctx: str | None = None) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x):
        raise doc.fail(f"field {field!r} must be a finite number", value=ctx)
    return float(x)


def _str(doc: _Doc, x: Any, field: str) -> str:
    if not isinstance(x, str) or not x:
        raise doc.fail(f"field {field!r} must be a non-empty string")
    return x


def _list(doc: _Doc, x: Any, field: str) -> list:
    if not isinstance(x, list):
        raise doc.fail(f"field {field!r} must be a list", value=field)
    return x


# -- points --------------------------------------------------------------------


def parse_point(x: Any, doc: _Doc | None = None) -> SpacePoint:
    doc = doc or _Doc("", "<point>")
    if isinstance(x, str):
        return SpacePoint.parse(x)
    x = _obj(doc, x, {"vertex", "edge", "offset"}, "point")
    if "vertex" in x:
        if set(x) != {"vertex"}:
            raise doc.fail("a vertex point takes no edge/offset")
        return SpacePoint.at(_str(doc, x["vertex"], "vertex"))
    if "edge" not in x or "offset" not in x:
        raise doc.fail("point needs 'vertex' or both 'edge' and 'offset'")
    edge = _str(doc, x["edge"], "edge")
    return SpacePoint.on(edge, _num(doc, x["offset"], "offset", edge))


def point_to_json(p: SpacePoint) -> dict:
    if p.vertex is not None:
        return {"vertex": p.vertex}
    return {"edge": p.edge, "offset": p.offset}


def _check_point(doc: _Doc, space: MetricSpace, p: SpacePoint) -> SpacePoint:
    try:
        return space.canon(p)
    except InputError as exc:
        ident = p.vertex if p.vertex is not None else p.edge
        raise doc.fail(str(exc), value=ident) from None


# -- spaces --------------------------------------------------------------------


def _vertices(doc: _Doc, items: list, types: dict[str, str]) -> dict[str, PointType]:
    out: dict[str, PointType] = {}
    for rec in items:
        rec = _obj(doc, rec, VERTEX_KEYS, "vertex record", {"id"})
        vid = _str(doc, rec["id"], "id")
        if vid in out:
            raise doc.fail(f"duplicate vertex id {vid!r}", "id", vid)
        tag = types.get(vid, rec.get("type", "II"))
        try:
            out[vid] = PointType(tag)
        except ValueError:
            raise doc.fail(f"vertex {vid!r} has unknown type {tag!r}", "id", vid) from None
    return out


def _edges(doc: _Doc, items: list, known: set[str]) -> list[Edge]:
    out = []
    for rec in items:
        rec = _obj(doc, rec, EDGE_KEYS, "edge record", EDGE_KEYS)
        eid = _str(doc, rec["id"], "id")
        u, v = _str(doc, rec["u"], "u"), _str(doc, rec["v"], "v")
        length = _num(doc, rec["length"], "length", eid)
        if u == v:
            raise doc.fail(f"edge {eid!r} is a loop at {u!r}; loop edges are not allowed", "id", eid)
        for end in (u, v):
            if end not in known:
                raise doc.fail(f"edge {eid!r} references unknown vertex {end!r}", "id", eid)
        if not length > 0:
            raise doc.fail(f"edge {eid!r} has non-positive length {length!r}", "id", eid)
        out.append(Edge(eid, u, v, length))
    return out


def _first_unreachable(vertices: list[str], edges: list[Edge]) -> str | None:
    idx = {v: i for i, v in enumerate(vertices)}
    n = len(vertices)
    rows = [idx[e.u] for e in edges]
    cols = [idx[e.v] for e in edges]
    A = coo_matrix((np.ones(len(edges)), (rows, cols)), shape=(n, n))
    _, labels = connected_components(A, directed=False)
    for v in vertices:
        if labels[idx[v]] != labels[0]:
            return v
    return None


def space_from_json(data: Any, doc: _Doc | None = None) -> MetricSpace:
    doc = doc or _Doc(json.dumps(data, indent=1), "<space>")
    data = _obj(doc, data, SPACE_KEYS, "space", {"vertices", "edges"})
    verts = _vertices(doc, _list(doc, data["vertices"], "vertices"), {})
    edges = _edges(doc, _list(doc, data["edges"], "edges"), set(verts))
    if not verts:
        raise doc.fail("space needs at least one vertex")
    lost = _first_unreachable(list(verts), edges)
    if lost is not None:
        raise doc.fail(f"skeleton is not connected: vertex {lost!r} is unreachable", "id", lost)
    trees = []
    for rec in _list(doc, data.get("trees", []), "trees"):
        rec = _obj(doc, rec, TREE_KEYS, "tree record", {"attach", "vertices", "edges"})
        attach = _str(doc, rec["attach"], "attach")
        if attach not in verts:
            raise doc.fail(f"tree attach vertex {attach!r} is not a skeleton vertex", "attach", attach)
        leaf_types = rec.get("leaf_types", {})
        if not isinstance(leaf_types, dict):
            raise doc.fail("field 'leaf_types' must be an object")
        tv = _vertices(doc, _list(doc, rec["vertices"], "vertices"), leaf_types)
        unknown = sorted(set(leaf_types) - set(tv))
        if unknown:
            raise doc.fail(f"leaf_types names unknown vertex {unknown[0]!r}", value=unknown[0])
        te = _edges(doc, _list(doc, rec["edges"], "edges"), set(tv) | {attach})
        lost = _first_unreachable([attach, *tv], te)
        if lost is not None:
            raise doc.fail(f"tree at {attach!r} is not connected: vertex {lost!r} is unreachable", "id", lost)
        trees.append(HangingTree(attach, tv, tuple(te)))
    try:
        return MetricSpace(MetricGraph(verts, edges), trees)
    except StructureError as exc:
        ident = re.search(r"'([^']+)'", str(exc))
        raise doc.fail(str(exc), value=ident.group(1) if ident else None) from None


def space_to_json(space: MetricSpace) -> dict:
    def vrec(v: str, t: PointType) -> dict:
        return {"id": v, "type": t.value}

    def erec(e: Edge) -> dict:
        return {"id": e.id, "u": e.u, "v": e.v, "length": e.length}

    out: dict[str, Any] = {
        "vertices": [vrec(v, t) for v, t in space.skeleton.vertices.items()],
        "edges": [erec(e) for e in space.skeleton.edges.values()],
    }
    if space.trees:
        out["trees"] = [
            {
                "attach": t.attach,
                "vertices": [vrec(v, k) for v, k in t.vertices.items()],
                "edges": [erec(e) for e in t.edges],
            }
            for t in space.trees
        ]
    return out


# -- measures ------------------------------------------------------------------


def measure_from_json(data: Any, doc: _Doc | None = None, space: MetricSpace | None = None) -> SignedMeasure:
    doc = doc or _Doc(json.dumps(data, indent=1), "<measure>")
    data = _obj(doc, data, MEASURE_KEYS, "measure")
    atoms = []
    for rec in _list(doc, data.get("atoms", []), "atoms"):
        rec = _obj(doc, rec, ATOM_KEYS, "atom record", ATOM_KEYS)
        p = parse_point(rec["point"], doc)
        if space is not None:
            _check_point(doc, space, p)
        atoms.append((p, _num(doc, rec["weight"], "weight")))
    dens = []
    for rec in _list(doc, data.get("densities", []), "densities"):
        rec = _obj(doc, rec, DENSITY_KEYS, "density record", DENSITY_KEYS)
        eid = _str(doc, rec["edge"], "edge")
        a, b = _num(doc, rec["from"], "from", eid), _num(doc, rec["to"], "to", eid)
        if not b >= a:
            raise doc.fail(f"density on {eid!r} has 'to' < 'from'", "edge", eid)
        if space is not None:
            if eid not in space.full.edges:
                raise doc.fail(f"density references unknown edge {eid!r}", "edge", eid)
            if a < 0 or b > space.edge(eid).length + 1e-12:
                raise doc.fail(f"density interval [{a}, {b}] leaves edge {eid!r}", "edge", eid)
        dens.append(DensityPiece(eid, a, b, _num(doc, rec["density"], "density", eid)))
    return SignedMeasure(tuple(atoms), tuple(dens))


def measure_to_json(m: SignedMeasure) -> dict:
    return {
        "atoms": [{"point": point_to_json(p), "weight": w} for p, w in m.atoms],
        "densities": [
            {"edge": d.edge, "from": d.start, "to": d.stop, "density": d.density} for d in m.densities
        ],
    }


# -- regions and point lists ---------------------------------------------------


def region_from_json(data: Any, doc: _Doc | None = None, space: MetricSpace | None = None) -> Region:
    doc = doc or _Doc(json.dumps(data, indent=1), "<region>")
    data = _obj(doc, data, REGION_KEYS, "region")
    segs = []
    for rec in _list(doc, data.get("segments", []), "segments"):
        rec = _obj(doc, rec, SEGMENT_KEYS, "segment record", SEGMENT_KEYS)
        eid = _str(doc, rec["edge"], "edge")
        a, b = _num(doc, rec["from"], "from", eid), _num(doc, rec["to"], "to", eid)
        if not b >= a:
            raise doc.fail(f"segment on {eid!r} has 'to' < 'from'", "edge", eid)
        if space is not None and eid not in space.full.edges:
            raise doc.fail(f"segment references unknown edge {eid!r}", "edge", eid)
        segs.append((eid, a, b))
    pts = [parse_point(p, doc) for p in _list(doc, data.get("points", []), "points")]
    if space is not None:
        for p in pts:
            _check_point(doc, space, p)
    if not segs and not pts:
        raise doc.fail("region is empty")
    return Region(tuple(segs), tuple(pts))


def region_to_json(r: Region) -> dict:
    return {
        "segments": [{"edge": e, "from": a, "to": b} for e, a, b in r.segments],
        "points": [point_to_json(p) for p in r.points],
    }


def points_from_json(data: Any, doc: _Doc | None = None, space: MetricSpace | None = None) -> list[SpacePoint]:
    doc = doc or _Doc(json.dumps(data, indent=1), "<points>")
    data = _obj(doc, data, {"points"}, "points file", {"points"})
    pts = [parse_point(p, doc) for p in _list(doc, data["points"], "points")]
    if space is not None:
        for p in pts:
            _check_point(doc, space, p)
    return pts


def points_to_json(points: list[SpacePoint]) -> dict:
    return {"points": [point_to_json(p) for p in points]}


# -- file entry points ---------------------------------------------------------


def load_space(path: str) -> MetricSpace:
    data, doc = _load(_read(path), path)
    return space_from_json(data, doc)


def load_measure(path: str, space: MetricSpace | None = None) -> SignedMeasure:
    data, doc = _load(_read(path), path)
    return measure_from_json(data, doc, space)


def load_region(path: str, space: MetricSpace | None = None) -> Region:
    data, doc = _load(_read(path), path)
    return region_from_json(data, doc, space)


def load_points(path: str, space: MetricSpace | None = None) -> list[SpacePoint]:
    data, doc = _load(_read(path), path)
    return points_from_json(data, doc, space)


def dumps(obj: dict) -> str:
    return json.dumps(obj, indent=2) + "\n"
