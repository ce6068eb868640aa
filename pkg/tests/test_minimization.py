from __future__ import annotations

import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import random_point, random_probability, random_space

from berkgreen.errors import InputError
from berkgreen.green import GreenFunction
from berkgreen.kernel import KernelHandle
from berkgreen.metric_space import Edge, HangingTree, MetricGraph, MetricSpace, SpacePoint, circle, segment
from berkgreen.minimization import (
    Region,
    SimplexQP,
    SolverOptions,
    capacity,
    frank_wolfe,
    frostman_check,
    minimize_energy,
    projected_gradient,
    solve_simplex_qp,
)
from berkgreen.paf import SignedMeasure, atomize

SEEDS = st.integers(min_value=0, max_value=2**32 - 1)


@pytest.fixture
def tree_circle():
    tree = HangingTree(
        "c0",
        {"b": "II", "P": "I", "Q": "II"},
        (Edge("t0", "c0", "b", 0.5), Edge("t1", "b", "P", 0.75), Edge("t2", "b", "Q", 0.5)),
    )
    return circle([1.0, 2.0], [tree])


def test_solver_options_validation():
    assert SolverOptions(solver="projected-gradient").solver == "projected_gradient"
    with pytest.raises(InputError):
        SolverOptions(solver="newton")
    with pytest.raises(InputError):
        SolverOptions(tol=0.0)
    with pytest.raises(InputError):
        SimplexQP([], np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_non_convergence_warns():
    rng = np.random.default_rng(3)
    A = rng.normal(size=(30, 30))
    qp = SimplexQP([], A @ A.T)
    with pytest.warns(RuntimeWarning):
        trace = solve_simplex_qp(qp, SolverOptions(max_iter=2, tol=1e-14))
    assert not trace.converged


@settings(max_examples=15, deadline=None)
@given(SEEDS)
def test_green_gram_is_psd_on_probability_vectors(seed):
    rng = np.random.default_rng(seed)
    sp = random_space(rng)
    mu = random_probability(rng, sp)
    G = GreenFunction(sp, mu, random_point(rng, sp, allow_type_one=False))
    pts = [random_point(rng, sp, allow_type_one=False) for _ in range(15)]
    M = G.matrix(pts)
    # I_mu(nu) is the squared energy norm of nu - mu, hence nonnegative
    W = rng.dirichlet(np.ones(len(pts)), size=1000)
    assert np.einsum("ki,ij,kj->k", W, M, W).min() >= -1e-9


@settings(max_examples=15, deadline=None)
@given(SEEDS)
def test_frank_wolfe_monotone_and_agrees_with_projected_gradient(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(5, 40))
    A = rng.normal(size=(n, n + 3))
    G = A @ A.T / n + rng.normal() * 0.1
    fw = frank_wolfe(G, tol=1e-10, record=True)
    assert fw.converged
    assert np.all(np.diff(fw.history) <= 1e-12 * max(1.0, abs(fw.history[0])))
    pg = projected_gradient(G, tol=1e-10)
    assert pg.converged
    assert fw.value == pytest.approx(pg.value, abs=1e-8)
    assert abs(fw.weights.sum() - 1.0) <= 1e-12 and fw.weights.min() >= 0.0


def test_circle_haar_equilibrium():
    c = circle([1.5, 1.5])
    mu = SignedMeasure.uniform(c)
    G = GreenFunction(c, mu, SpacePoint.at("c0"))
    h = 0.05
    res = minimize_energy(G, h)
    assert res.converged and res.kind == "emp"
    assert 0.0 <= res.value + 1e-12
    # uniform weights on the equispaced mesh are a feasible point
    M = G.matrix(res.mesh)
    w = np.full(len(res.mesh), 1.0 / len(res.mesh))
    assert res.value <= float(w @ M @ w) + 1e-12
    assert frostman_check(res) <= 1e-6
    assert res.capacity == pytest.approx(math.exp(-res.value))
    d = res.as_dict()
    assert {"frostman_deviation", "converged", "minimizer", "robin_constant"} <= set(d)


def test_good_reduction_dirac_minimizer():
    tree = HangingTree("z0", {"a": "II", "L": "I"}, (Edge("t0", "z0", "a", 0.4), Edge("t1", "a", "L", 0.6)))
    sp = MetricSpace(MetricGraph({"z0": "II"}, []), [tree])
    G = GreenFunction(sp, SignedMeasure.dirac(SpacePoint.at("z0")), SpacePoint.at("z0"))
    res = minimize_energy(G, 0.1)
    assert res.value == pytest.approx(0.0, abs=1e-12)
    assert res.frostman_deviation <= 1e-6
    best = res.mesh[int(np.argmax(res.weights))]
    assert best == SpacePoint.at("z0")


def test_discretized_measure_energy_is_small(tree_circle):
    mu = SignedMeasure.uniform(tree_circle)
    G = GreenFunction(tree_circle, mu, SpacePoint.at("c1"))
    for h in (0.1, 0.05):
        res = minimize_energy(G, h)
        assert -1e-9 <= res.value <= 5 * h
        assert abs(G.energy(atomize(mu, h)).value) <= 5 * h


def test_solvers_agree_on_equilibrium(tree_circle):
    mu = SignedMeasure.uniform(tree_circle)
    G = GreenFunction(tree_circle, mu, SpacePoint.at("c0"))
    fw = minimize_energy(G, 0.1, SolverOptions(tol=1e-10))
    pg = minimize_energy(G, 0.1, SolverOptions(tol=1e-10, solver="projected_gradient"))
    assert fw.value == pytest.approx(pg.value, abs=1e-8)
    # the minimizer may not be unique on a mesh but its potential is
    assert np.max(np.abs(fw.potential - pg.potential)) <= 1e-3


def test_capacity_single_point():
    s = segment(2.0)
    z0, zeta = SpacePoint.at("v0"), SpacePoint.on("e0", 0.5)
    z = SpacePoint.at("v1")
    H = KernelHandle(s, z0)
    res = capacity(s, z0, zeta, Region(points=(z,)), 0.1)
    expected = H.value(z, z) - 2 * H.value(z, zeta)
    assert res.value == pytest.approx(expected, abs=1e-12)
    assert res.capacity == pytest.approx(math.exp(-expected))
    res = capacity(s, z0, z0, Region(points=(z,)), 0.1)
    assert res.value == pytest.approx(2.0) and res.capacity == pytest.approx(math.exp(-2.0))


def test_capacity_tail_segment():
    s = segment(2.0)
    res = capacity(s, SpacePoint.at("v0"), SpacePoint.at("v0"), Region(segments=(("e0", 1.5, 2.0),)), 0.05)
    # on a segment the kernel is min(x, y); mass at the nearest point of E wins
    assert res.value == pytest.approx(1.5, abs=1e-9)


def test_capacity_rejects_zeta_in_region():
    s = segment(2.0)
    with pytest.raises(InputError):
        capacity(s, SpacePoint.at("v0"), SpacePoint.on("e0", 1.7), Region(segments=(("e0", 1.5, 2.0),)), 0.1)
    with pytest.raises(InputError):
        Region()


def test_capacity_base_swap(tree_circle):
    z0, z1 = SpacePoint.at("c0"), SpacePoint.on("a1", 0.7)
    zeta = SpacePoint.on("a0", 0.4)
    E = Region(segments=(("t2", 0.0, 0.5), ("a1", 1.2, 1.8)))
    r0 = capacity(tree_circle, z0, zeta, E, 0.1, SolverOptions(tol=1e-12))
    r1 = capacity(tree_circle, z1, zeta, E, 0.1, SolverOptions(tol=1e-12))
    H1 = KernelHandle(tree_circle, z1)
    shift = 2 * H1.value(zeta, z0) - H1.value(z0, z0)
    assert r0.value - r1.value == pytest.approx(shift, abs=1e-8)


@settings(max_examples=10, deadline=None)
@given(SEEDS)
def test_capacity_monotone_in_region(seed):
    rng = np.random.default_rng(seed)
    sp = random_space(rng)
    z0 = random_point(rng, sp, allow_type_one=False)
    zeta = random_point(rng, sp, allow_type_one=False)
    pool = []
    while len(pool) < 8:
        p = sp.canon(random_point(rng, sp, allow_type_one=False))
        if p != sp.canon(zeta) and p not in pool:
            pool.append(p)
    small = Region(points=tuple(pool[:3]))
    big = Region(points=tuple(pool))
    opts = SolverOptions(tol=1e-12)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        v_small = capacity(sp, z0, zeta, small, 0.1, opts).value
        v_big = capacity(sp, z0, zeta, big, 0.1, opts).value
    # a larger set admits more measures, so the minimum can only drop
    assert v_big <= v_small + 1e-9


@settings(max_examples=10, deadline=None)
@given(SEEDS)
def test_capacity_frostman_conditions(seed):
    rng = np.random.default_rng(seed)
    sp = random_space(rng, max_trees=2)
    tree_edges = [eid for eid in sp.full.edges if eid not in sp.skeleton.edges]
    edges = tree_edges or list(sp.skeleton.edges)
    eid = edges[int(rng.integers(len(edges)))]
    length = sp.edge(eid).length
    a, b = sorted(rng.uniform(0, length, size=2))
    E = Region(segments=((eid, float(a), float(b) if b > a else float(a) + 1e-3),))
    z0 = SpacePoint.at(list(sp.skeleton.vertices)[0])
    zeta = z0
    if E.contains(sp, zeta):
        return
    res = capacity(sp, z0, zeta, E, 0.05, SolverOptions(tol=1e-10))
    if not res.converged:
        return
    # potential equals V on the support and is at least V on the rest of E
    assert frostman_check(res) <= 1e-6
    assert res.potential.min() >= res.value - 1e-6
