"""Potential functions, Arakelov-Green's functions and energy integrals."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DomainError, InputError
from .kernel import KernelHandle, PreparedMeasure, _weighted_sum
from .metric_space import MetricSpace, PointType, SpacePoint
from .paf import SignedMeasure

# Default atomization scale for densities on hanging-tree edges.
DEFAULT_H = 1e-3


def has_continuous_potentials(space: MetricSpace, mu: SignedMeasure) -> bool:
    """Sufficient check: ``mu`` charges no type-I point."""
    return not any(
        w != 0 and space.point_type(p) is PointType.I for p, w in mu.merged_atoms(space).items()
    )


def _handle(space: MetricSpace | KernelHandle, zeta0: SpacePoint | None) -> KernelHandle:
    if isinstance(space, KernelHandle):
        return space
    if zeta0 is None:
        raise InputError("a base point is required")
    return KernelHandle(space, zeta0)


def potential_function(
    space: MetricSpace | KernelHandle,
    zeta0: SpacePoint | None,
    nu: SignedMeasure,
    zeta: SpacePoint,
    x: SpacePoint | Sequence[SpacePoint],
    h: float = DEFAULT_H,
):
    """``u(x, zeta) = int g_zeta0(zeta, x, y) dnu(y)``; scalar for one point, array for a list."""
    hd = _handle(space, zeta0)
    sp = hd.space
    if sp.is_type_one(zeta) and any(
        sp.canon(p) == sp.canon(zeta) for p, w in nu.merged_atoms(sp).items() if w != 0
    ):
        raise DomainError(f"zeta={zeta} is type I and charged by nu")
    single = isinstance(x, SpacePoint)
    pts = [x] if single else list(x)
    P = hd.prepare(nu, h)
    A = hd.batch(pts)
    Z = hd.batch([zeta])
    first = hd.potential(P, A)
    col = hd.matrix(A, Z)[:, 0]
    last = float(hd.potential(P, Z)[0])
    mass = P.mass
    with np.errstate(invalid="ignore"):
        out = first - mass * col - last
    if np.isnan(out).any():
        raise DomainError("potential function is indeterminate (inf - inf)")
    return float(out[0]) if single else out


class GreenFunction:
    """Normalized Arakelov-Green's function of a probability measure with continuous potentials."""

    def __init__(self, space: MetricSpace, mu: SignedMeasure, zeta0: SpacePoint, h: float = DEFAULT_H) -> None:
        if not mu.is_probability(1e-12):
            raise DomainError("mu must be a probability measure")
        if not has_continuous_potentials(space, mu):
            raise DomainError("mu charges a type-I point and has no continuous potentials")
        if not h > 0:
            raise InputError("h must be positive")
        self.space = space
        self.mu = mu
        self.h = h
        self.kernel = KernelHandle(space, zeta0)
        self.zeta0 = self.kernel.zeta0
        self._mu = self.kernel.prepare(mu, h)
        self.C = self.kernel.bilinear(self._mu, self._mu)
        self.closed_form = not self._mu.atomized

    def __repr__(self) -> str:
        return f"GreenFunction(base={self.zeta0}, C={self.C:.12g}, h={self.h})"

    def potential_of_mu(self, xs: Sequence[SpacePoint]) -> np.ndarray:
        return self.kernel.potential(self._mu, self.kernel.batch(xs))

    def matrix(self, xs: Sequence[SpacePoint], ys: Sequence[SpacePoint] | None = None) -> np.ndarray:
        A = self.kernel.batch(xs)
        B = A if ys is None else self.kernel.batch(ys)
        pa = self.kernel.potential(self._mu, A)
        pb = pa if ys is None else self.kernel.potential(self._mu, B)
        return self.kernel.matrix(A, B) - pa[:, None] - pb[None, :] + self.C

    def __call__(self, x: SpacePoint, y: SpacePoint) -> float:
        return float(self.matrix([x], [y])[0, 0])

    # -- measures ---------------------------------------------------------------

    def _prepare(self, nu: SignedMeasure, h: float | None) -> PreparedMeasure:
        return self.kernel.prepare(nu, self.h if h is None else h)

    def bilinear(self, P: PreparedMeasure, Q: PreparedMeasure) -> float:
        """``int int g_mu dP dQ`` for prepared measures."""
        k = self.kernel
        mp, mq = P.mass, Q.mass
        return (
            k.bilinear(P, Q)
            - mp * k.bilinear(self._mu, Q)
            - mq * k.bilinear(self._mu, P)
            + mp * mq * self.C
        )

    def generalized_potential(self, nu: SignedMeasure, xs: SpacePoint | Sequence[SpacePoint], h: float | None = None):
        """``u_nu(x, mu) = int g_mu(x, y) dnu(y)``."""
        single = isinstance(xs, SpacePoint)
        pts = [xs] if single else list(xs)
        P = self._prepare(nu, h)
        A = self.kernel.batch(pts)
        mass = P.mass
        out = (
            self.kernel.potential(P, A)
            - mass * self.kernel.potential(self._mu, A)
            - self.kernel.bilinear(self._mu, P)
            + mass * self.C
        )
        return float(out[0]) if single else out

    def energy(self, nu: SignedMeasure, h: float | None = None) -> "EnergyReport":
        h = self.h if h is None else h
        atoms = nu.merged_atoms(self.space)
        pts = list(atoms)
        w = np.array([atoms[p] for p in pts], dtype=float)
        Pa = self._prepare(SignedMeasure(tuple(atoms.items())), h)
        Pd = self._prepare(SignedMeasure(densities=nu.densities), h)
        if pts:
            M = self.matrix(pts)
            diag_vals = np.diag(M).copy()
            off = M.copy()
            np.fill_diagonal(off, 0.0)
            diagonal = _weighted_sum(np.diag(diag_vals), w, w)
            off_diagonal = _weighted_sum(off, w, w)
        else:
            diagonal = off_diagonal = 0.0
        density = 0.0
        if Pd.pieces or len(Pd.batch):
            density = self.bilinear(Pd, Pd)
            if pts:
                density += 2.0 * self.bilinear(Pa, Pd)
        value = diagonal + off_diagonal + density
        return EnergyReport(value, off_diagonal, density, diagonal, h, self.closed_form and not Pd.atomized)


@dataclass(frozen=True)
class EnergyReport:
    value: float
    off_diagonal: float
    density: float
    diagonal: float
    h: float
    closed_form: bool = True

    def as_dict(self) -> dict:
        return {
            "value": self.value,
            "diagonal": self.diagonal,
            "off_diagonal": self.off_diagonal,
            "density": self.density,
            "h": self.h,
        }


def green_build(space: MetricSpace, mu: SignedMeasure, zeta0: SpacePoint, h: float = DEFAULT_H) -> GreenFunction:
    return GreenFunction(space, mu, zeta0, h)


def green_eval(G: GreenFunction, x: SpacePoint, y: SpacePoint) -> float:
    return G(x, y)


def energy(G: GreenFunction, nu: SignedMeasure, h: float | None = None) -> EnergyReport:
    if not nu.is_probability(1e-9):
        raise DomainError("energy is defined for probability measures")
    return G.energy(nu, h)


def generalized_potential(G: GreenFunction, nu: SignedMeasure, x: SpacePoint) -> float:
    return G.generalized_potential(nu, x)

