from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import random_point, random_space

from berkgreen.errors import AmbiguousPathError, InputError, StructureError
from berkgreen.metric_space import (
    Edge,
    HangingTree,
    MetricGraph,
    MetricSpace,
    PointType,
    SpacePoint,
    circle,
    meet,
    mesh,
    refine,
    retract,
    rho,
    segment,
)

SEEDS = st.integers(min_value=0, max_value=2**32 - 1)


@pytest.fixture
def tree_space():
    # skeleton p - q of length 2, tree at p: p -b- (leaf l1 at 0.5 from p via b), leaf l2
    skel = MetricGraph({"p": "II", "q": "II"}, [Edge("s", "p", "q", 2.0)])
    tree = HangingTree(
        "p",
        {"b": "II", "l1": "I", "l2": "I"},
        (Edge("t0", "p", "b", 0.25), Edge("t1", "b", "l1", 0.25), Edge("t2", "b", "l2", 1.0)),
    )
    return MetricSpace(skel, [tree])


def test_rho_examples(tree_space):
    s = segment(3.0)
    assert rho(s, SpacePoint.on("e0", 1.0), SpacePoint.on("e0", 2.5)) == pytest.approx(1.5, abs=1e-15)
    c = circle([1.0, 2.0])
    assert rho(c, SpacePoint.at("c0"), SpacePoint.at("c1")) == 1.0
    assert rho(tree_space, SpacePoint.at("l1"), SpacePoint.at("q")) == pytest.approx(2.5)


def test_retract_examples(tree_space):
    x = SpacePoint.on("s", 0.7)
    assert retract(tree_space, x) == x
    assert retract(tree_space, SpacePoint.on("t2", 0.3)) == SpacePoint.at("p")
    assert retract(tree_space, SpacePoint.at("l2")) == SpacePoint.at("p")


def test_meet_examples(tree_space):
    s = segment(3.0)
    z = SpacePoint.at("v0")
    assert meet(s, z, SpacePoint.on("e0", 1.0), SpacePoint.on("e0", 2.0)) == SpacePoint.on("e0", 1.0)
    assert meet(tree_space, SpacePoint.at("p"), SpacePoint.at("l1"), SpacePoint.at("l2")) == SpacePoint.at("b")
    x = SpacePoint.on("t2", 0.4)
    assert meet(tree_space, SpacePoint.at("p"), x, x) == x


def test_meet_ambiguous_on_cycle():
    c = circle([1.0, 2.0])
    with pytest.raises(AmbiguousPathError):
        meet(c, SpacePoint.at("c0"), SpacePoint.on("a0", 0.5), SpacePoint.on("a1", 0.5))


def test_refine_examples():
    s = refine(segment(2.0), [SpacePoint.on("e0", 1.0)])
    assert sorted(e.length for e in s.full.edges.values()) == [1.0, 1.0]
    s0 = segment(2.0)
    s1 = refine(s0, [SpacePoint.at("v0")])
    assert len(s1.full.vertices) == 2 and len(s1.full.edges) == 1
    c = refine(circle([1.0, 2.0]), [SpacePoint.on("a1", 1.0)])
    assert sorted(e.length for e in c.full.edges.values()) == [1.0, 1.0, 1.0]


def test_refine_keeps_lengths_exact():
    s = refine(segment(1.0), [SpacePoint.on("e0", t) for t in (0.1, 0.35, 0.7)])
    assert math.fsum(e.length for e in s.full.edges.values()) == 1.0


def test_mesh_examples():
    pts = mesh(segment(1.0), 0.5)
    assert len(pts) == 3
    # the ceil(length/h) - 1 rule gives 1 + 3 interior points plus 2 vertices
    assert len(mesh(circle([1.0, 2.0]), 0.5)) == 6
    # h at least the longest edge: vertices only
    assert len(mesh(circle([1.0, 2.0]), 2.0)) == 2


def test_mesh_spacing_and_type_one_excluded(tree_space):
    h = 0.1
    pts = mesh(tree_space, h)
    assert SpacePoint.at("l1") not in pts and SpacePoint.at("l2") not in pts
    for eid, e in tree_space.full.edges.items():
        offs = sorted([0.0, e.length] + [p.offset for p in pts if p.edge == eid])
        assert max(np.diff(offs)) <= h + 1e-12


def test_spacepoint_canonical_equality():
    s = segment(2.0)
    assert s.canon(SpacePoint.on("e0", 0.0)) == SpacePoint.at("v0")
    assert s.canon(SpacePoint.on("e0", 2.0)) == SpacePoint.at("v1")
    assert SpacePoint.parse("e0:0.5") == SpacePoint.on("e0", 0.5)
    assert str(SpacePoint.on("e0", 0.5)) == "e0:0.5"


def test_point_types(tree_space):
    assert tree_space.point_type(SpacePoint.on("s", 1.0)) is PointType.III
    assert tree_space.point_type(SpacePoint.at("p")) is PointType.II
    assert tree_space.point_type(SpacePoint.at("l1")) is PointType.I


@pytest.mark.parametrize(
    "build, exc",
    [
        (lambda: MetricGraph({"a": "II"}, [Edge("e", "a", "a", 1.0)]), StructureError),
        (lambda: MetricGraph({"a": "II", "b": "II", "c": "II"}, [Edge("e", "a", "b", 1.0)]), StructureError),
        (lambda: MetricGraph({"a": "II", "b": "II"}, [Edge("e", "a", "b", 0.0)]), StructureError),
        (lambda: MetricGraph({"a": "II", "b": "II"}, [Edge("e", "a", "x", 1.0)]), StructureError),
        (lambda: MetricSpace(MetricGraph({"a": "I", "b": "II"}, [Edge("e", "a", "b", 1.0)])), StructureError),
        (lambda: MetricGraph({"a": "IV"}, []), InputError),
    ],
)
def test_invalid_graphs(build, exc):
    with pytest.raises(exc):
        build()


def test_type_one_must_be_leaf():
    skel = MetricGraph({"p": "II"}, [])
    tree = HangingTree("p", {"m": "I", "l": "II"}, (Edge("t0", "p", "m", 1.0), Edge("t1", "m", "l", 1.0)))
    with pytest.raises(StructureError):
        MetricSpace(skel, [tree])


def test_tree_with_cycle_rejected():
    skel = MetricGraph({"p": "II"}, [])
    tree = HangingTree("p", {"a": "II"}, (Edge("t0", "p", "a", 1.0), Edge("t1", "a", "p", 2.0)))
    with pytest.raises(StructureError):
        MetricSpace(skel, [tree])


def test_offset_out_of_range():
    with pytest.raises(InputError):
        rho(segment(1.0), SpacePoint.on("e0", 1.5), SpacePoint.at("v0"))
    with pytest.raises(InputError):
        rho(segment(1.0), SpacePoint.at("nope"), SpacePoint.at("v0"))


def test_parallel_edges_allowed():
    g = MetricGraph({"a": "II", "b": "II"}, [Edge("e1", "a", "b", 1.0), Edge("e2", "a", "b", 2.0)])
    assert g.distances[0, 1] == 1.0


def test_geodesic_breakpoints_sum_to_distance():
    c = circle([1.0, 2.0, 0.5])
    path = c.geodesic(SpacePoint.on("a0", 0.3), SpacePoint.on("a1", 1.2))
    gaps = [c.rho(a, b) for a, b in zip(path.path, path.path[1:])]
    assert math.fsum(gaps) == pytest.approx(path.distance, abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(SEEDS)
def test_rho_is_a_metric_on_the_mesh(seed):
    rng = np.random.default_rng(seed)
    space = random_space(rng)
    pts = mesh(space, 0.5)
    pts = [pts[i] for i in rng.choice(len(pts), size=min(12, len(pts)), replace=False)]
    D = np.array([[space.rho(a, b) for b in pts] for a in pts])
    assert np.max(np.abs(D - D.T)) <= 1e-12
    assert np.all(np.diag(D) == 0)
    n = len(pts)
    for i in range(n):
        for j in range(n):
            assert np.all(D[i, j] <= D[i, :] + D[:, j] + 1e-12)


@settings(max_examples=25, deadline=None)
@given(SEEDS)
def test_retraction_properties(seed):
    rng = np.random.default_rng(seed)
    space = random_space(rng)
    for _ in range(10):
        x = random_point(rng, space)
        r = space.retract(x)
        assert space.retract(r) == r
        s = random_point(rng, space, skeleton=True)
        assert space.rho(x, r) + space.rho(r, s) == pytest.approx(space.rho(x, s), abs=1e-12)


@settings(max_examples=15, deadline=None)
@given(SEEDS)
def test_refine_preserves_rho(seed):
    rng = np.random.default_rng(seed)
    space = random_space(rng)
    cuts = [random_point(rng, space) for _ in range(5)]
    fine = space.refine(cuts)
    for _ in range(100 // 15 + 1):
        x, y = random_point(rng, space), random_point(rng, space)
        assert fine.rho(x, y) == pytest.approx(space.rho(x, y), abs=1e-12)
