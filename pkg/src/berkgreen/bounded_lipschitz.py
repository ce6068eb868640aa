"""Bounded-Lipschitz distance between measures, measured against a fixed test dictionary.

The dictionary holds 64 bump functions ``x -> max(0, r - rho(x, c))``: 32 centres
spread by arc length over the edges, each with two radii. All functions are
1-Lipschitz, bounded by 1, and exactly piecewise affine, so pairings are exact.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .metric_space import MetricSpace, SpacePoint
from .paf import PiecewiseAffineFn, SignedMeasure, pair

N_CENTRES = 32


def bump(space: MetricSpace, centre: SpacePoint, radius: float) -> PiecewiseAffineFn:
    """``max(0, radius - rho(., centre))`` as an exact piecewise affine function."""
    c = space.canon(centre)
    pieces = {}
    vals = {v: max(0.0, radius - space.rho(SpacePoint.at(v), c)) for v in space.full.vertices}
    for eid, e in space.full.edges.items():
        A = space.rho(SpacePoint.at(e.u), c)
        B = space.rho(SpacePoint.at(e.v), c) + e.length
        cand = {0.0, e.length, (B - A) / 2, radius - A, B - radius}
        if c.edge == eid:
            s = c.offset
            cand |= {s, (s - A) / 2, (B + s) / 2, s + radius, s - radius}
        offs = sorted(t for t in cand if 0.0 <= t <= e.length)
        # drop near-duplicates produced by float noise
        keep = [offs[0]]
        for t in offs[1:]:
            if t - keep[-1] > 1e-12:
                keep.append(t)
        keep[-1] = e.length
        ys = [max(0.0, radius - space.rho(SpacePoint.on(eid, t), c)) for t in keep]
        pieces[eid] = (keep, ys)
    return PiecewiseAffineFn(space, pieces, vals)


def dictionary_centres(space: MetricSpace, n: int = N_CENTRES) -> list[SpacePoint]:
    edges = list(space.full.edges.values())
    if not edges:
        return [SpacePoint.at(next(iter(space.full.vertices)))]
    total = sum(e.length for e in edges)
    out = []
    for k in range(n):
        s = (k + 0.5) * total / n
        for e in edges:
            if s <= e.length:
                out.append(space.canon(SpacePoint.on(e.id, s)))
                break
            s -= e.length
        else:
            out.append(space.canon(SpacePoint.on(edges[-1].id, edges[-1].length)))
    return out


def dictionary_radii(space: MetricSpace) -> tuple[float, float]:
    diam = space.full.diameter
    if diam <= 0:
        return (1.0, 1.0)
    return (min(1.0, diam / 8), min(1.0, diam / 4))


def bl_dictionary(space: MetricSpace) -> list[PiecewiseAffineFn]:
    radii = dictionary_radii(space)
    return [bump(space, c, r) for c in dictionary_centres(space) for r in radii]


def bl_distance(
    space: MetricSpace,
    m1: SignedMeasure,
    m2: SignedMeasure,
    dictionary: Sequence[PiecewiseAffineFn] | None = None,
) -> float:
    fs = bl_dictionary(space) if dictionary is None else dictionary
    return max(abs(pair(f, m1) - pair(f, m2)) for f in fs)


def atomic_measure(points: Sequence[SpacePoint], weights: Sequence[float] | np.ndarray) -> SignedMeasure:
    return SignedMeasure(tuple((p, float(w)) for p, w in zip(points, weights) if w != 0))
