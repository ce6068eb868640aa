"""Elliptic-curve skeleta, canonical measures and the local discrepancy of point sets.

Multiplicative reduction is modelled by a circle of circumference
``L = max(log|j|, 0)`` made of two arcs ``a0: c0 -> c1`` and ``a1: c1 -> c0`` of
length ``L/2``; the canonical measure is the normalized length (Haar) measure.
Good reduction is a single skeleton vertex ``z0`` carrying the Dirac measure.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .bounded_lipschitz import bl_dictionary, bl_distance
from .errors import InputError
from .green import DEFAULT_H, GreenFunction
from .metric_space import HangingTree, MetricGraph, MetricSpace, PointType, SpacePoint, circle
from .paf import PiecewiseAffineFn, SignedMeasure

REDUCTIONS = ("good", "multiplicative")
GENERATORS = ("equispaced", "random_uniform", "clustered", "custom")
MAX_RETRIES = 100
TRACE_COLUMNS = ("n", "D", "BL", "seed", "h")


@dataclass
class EllipticModel:
    reduction: str
    log_abs_j: float
    space: MetricSpace
    mu: SignedMeasure
    h: float = DEFAULT_H
    _green: GreenFunction | None = field(default=None, repr=False)
    _dictionary: list[PiecewiseAffineFn] | None = field(default=None, repr=False)

    @property
    def log_plus(self) -> float:
        return max(self.log_abs_j, 0.0)

    @property
    def circumference(self) -> float:
        return self.log_plus if self.reduction == "multiplicative" else 0.0

    @property
    def base(self) -> SpacePoint:
        return SpacePoint.at("c0" if self.reduction == "multiplicative" else "z0")

    @property
    def green(self) -> GreenFunction:
        if self._green is None:
            self._green = GreenFunction(self.space, self.mu, self.base, self.h)
        return self._green

    @property
    def dictionary(self) -> list[PiecewiseAffineFn]:
        if self._dictionary is None:
            self._dictionary = bl_dictionary(self.space)
        return self._dictionary

    def circle_point(self, theta: float) -> SpacePoint:
        """Point at angular fraction ``theta`` (mod 1) from ``c0`` along ``a0``."""
        if self.reduction != "multiplicative":
            raise InputError("circle coordinates exist only for multiplicative reduction")
        L = self.circumference
        s = (theta % 1.0) * L
        half = L / 2
        p = SpacePoint.on("a0", s) if s < half else SpacePoint.on("a1", min(s - half, half))
        return self.space.canon(p)


def build_elliptic(
    reduction: str,
    log_abs_j: float,
    trees: Sequence[HangingTree] = (),
    h: float = DEFAULT_H,
) -> EllipticModel:
    if reduction not in REDUCTIONS:
        raise InputError(f"reduction must be one of {REDUCTIONS}, got {reduction!r}")
    if not math.isfinite(log_abs_j):
        raise InputError("log_abs_j must be finite")
    if reduction == "multiplicative":
        if log_abs_j <= 0:
            raise InputError("multiplicative reduction needs log_abs_j > 0")
        space = circle([log_abs_j / 2, log_abs_j / 2], trees)
        mu = SignedMeasure.uniform(space)
    else:
        space = MetricSpace(MetricGraph({"z0": PointType.II}, []), trees)
        mu = SignedMeasure.dirac(SpacePoint.at("z0"))
    return EllipticModel(reduction, float(log_abs_j), space, mu, h)


def _check_distinct(space: MetricSpace, points: Sequence[SpacePoint]) -> list[SpacePoint]:
    canon = [space.canon(p) for p in points]
    if len(set(canon)) != len(canon):
        seen: set[SpacePoint] = set()
        for p in canon:
            if p in seen:
                raise InputError(f"duplicate point {p} in configuration")
            seen.add(p)
    return canon


def local_discrepancy(model: EllipticModel, points: Sequence[SpacePoint]) -> float:
    """``(sum_{i != j} g_mu(P_i, P_j) + N/12 log+|j|) / N^2`` for distinct points."""
    pts = _check_distinct(model.space, points)
    n = len(pts)
    if n == 0:
        raise InputError("a configuration needs at least one point")
    M = model.green.matrix(pts)
    np.fill_diagonal(M, 0.0)
    return (math.fsum(M.ravel()) + n / 12.0 * model.log_plus) / n**2


def empirical_measure(points: Sequence[SpacePoint]) -> SignedMeasure:
    n = len(points)
    return SignedMeasure(tuple((p, 1.0 / n) for p in points))


# -- generators ----------------------------------------------------------------

PointGenerator = Callable[[int, np.random.Generator], Sequence[SpacePoint]]


def _thetas_to_points(model: EllipticModel, thetas: np.ndarray, draw: Callable[[], float] | None) -> list[SpacePoint]:
    out: list[SpacePoint] = []
    seen: set[SpacePoint] = set()
    for t in thetas:
        p = model.circle_point(float(t))
        tries = 0
        while p in seen:
            if draw is None or tries >= MAX_RETRIES:
                raise InputError(f"generator produced a repeated point after {tries} retries")
            p = model.circle_point(draw())
            tries += 1
        seen.add(p)
        out.append(p)
    return out


def make_generator(model: EllipticModel, kind: str, width: float | None = None, custom=None) -> PointGenerator:
    """Return ``(n, rng) -> points``; ``width`` is an arc length for ``clustered``."""
    if kind == "custom":
        if custom is None:
            raise InputError("custom generator needs a point list or a callable")
        if callable(custom):
            return custom
        pts = list(custom)
        return lambda n, rng: pts[:n]
    if kind not in GENERATORS:
        raise InputError(f"generator must be one of {GENERATORS}, got {kind!r}")
    if model.reduction != "multiplicative":
        raise InputError(f"generator {kind!r} needs a circle model; use a custom list for good reduction")
    if kind == "equispaced":
        return lambda n, rng: _thetas_to_points(model, np.arange(n) / n, None)
    if kind == "random_uniform":
        return lambda n, rng: _thetas_to_points(model, rng.random(n), rng.random)
    if width is None or not 0 < width < model.circumference:
        raise InputError("clustered generator needs 0 < width < circumference")
    frac = width / model.circumference

    def clustered(n: int, rng: np.random.Generator) -> list[SpacePoint]:
        centre = rng.random()
        draw = lambda: centre + frac * (rng.random() - 0.5)  # noqa: E731
        return _thetas_to_points(model, centre + frac * (rng.random(n) - 0.5), draw)

    return clustered


# -- experiments ---------------------------------------------------------------


@dataclass(frozen=True)
class DiscrepancyRecord:
    n: int
    D: float
    BL: float


@dataclass
class DiscrepancyTrace:
    records: list[DiscrepancyRecord]
    seed: int
    h: float
    generator: str = ""

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for r in self.records:
            w.writerow([r.n, f"{r.D:.12g}", f"{r.BL:.12g}", self.seed, f"{self.h:.12g}"])
        return buf.getvalue()

    def write(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_csv())


def equidistribution_experiment(
    model: EllipticModel,
    generator: str | PointGenerator = "equispaced",
    n_values: Sequence[int] = (4, 8, 16, 32, 64, 128),
    seed: int = 0,
    *,
    width: float | None = None,
    custom=None,
    threads: int = 1,
    out: str | None = None,
) -> DiscrepancyTrace:
    """Compute ``D(Z_n)`` and ``BL(delta_n, mu)`` for each ``n``.

    Each ``n`` draws from its own stream seeded with ``(seed, n)``, so results do
    not depend on the order or parallelism of the per-``n`` jobs.
    """
    if any(int(n) < 1 for n in n_values):
        raise InputError("every n must be at least 1")
    if callable(generator):
        gen, name = generator, getattr(generator, "__name__", "callable")
    else:
        gen, name = make_generator(model, generator, width, custom), generator
    # warm shared caches before fanning out
    _ = model.green, model.dictionary

    def run(n: int) -> DiscrepancyRecord:
        rng = np.random.default_rng([seed, n])
        pts = list(gen(n, rng))
        if len(pts) != n:
            raise InputError(f"generator returned {len(pts)} points for n={n}")
        D = local_discrepancy(model, pts)
        bl = bl_distance(model.space, empirical_measure(pts), model.mu, model.dictionary)
        return DiscrepancyRecord(int(n), D, bl)

    ns = [int(n) for n in n_values]
    if threads > 1 and len(ns) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(run, ns))
    else:
        records = [run(n) for n in ns]
    trace = DiscrepancyTrace(records, seed, model.h, name)
    if out is not None:
        trace.write(out)
    return trace
