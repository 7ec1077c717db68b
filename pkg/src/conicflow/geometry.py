"""S^1-symmetric reduction of P^1 factors.

A rotationally symmetric metric on P^1 is written ``q(s) ds^dtheta`` with
``s = log|z|^2`` and angle period 2*pi, so ``i ddbar f(s)`` has density
``f_ss`` and ``Ric(q)`` has density ``-(log q)_ss``.  Fields are stored on
nodes of the compactified coordinate ``w = e^s / (1 + e^s)``; the
Fubini-Study density is ``g = w (1 - w)``.

Second derivatives use a flux form on cells ``[w_{j-1/2}, w_{j+1/2}]``:
the face flux is the s-gradient ``g dfdw`` and the two pole faces carry
zero flux, which is exact for functions that are smooth on the sphere.
The cell Fubini-Study areas sum to one exactly, so discrete integrals of
second derivatives telescope to zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import expit

from .errors import ConfigurationError, DegenerateMetricError

TWO_PI = 2.0 * np.pi
MIN_NODES = 16

# fraction of nodes spent near the divisor scale, and where that scale sits
DEFAULT_CLUSTER_WEIGHT = 1.0
DEFAULT_CLUSTER_CENTER = -7.0


def fs_density(w):
    """Fubini-Study density ``w (1 - w)`` (area 2*pi)."""
    w = np.asarray(w, dtype=float)
    return w * (1.0 - w)


def _theta(s):
    # polar angle of the round sphere as a function of s = log|z|^2
    return 2.0 * np.arctan(np.exp(0.5 * s))


def _xi_of_s(s, weight, center):
    return (_theta(s) + weight * _theta(s - center)) / (np.pi * (1.0 + weight))


def _invert_map(xi, weight, center):
    lo = np.full_like(xi, -400.0)
    hi = np.full_like(xi, 400.0)
    for _ in range(90):
        mid = 0.5 * (lo + hi)
        below = _xi_of_s(mid, weight, center) < xi
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


def _stable_dw(s_left, s_right, s_mid):
    """w(s_right) - w(s_left) without cancellation near either pole."""
    return np.where(
        s_mid <= 0.0,
        expit(s_right) - expit(s_left),
        expit(-s_left) - expit(-s_right),
    )


@dataclass(frozen=True, eq=False)
class FactorGeometry:
    """One P^1 factor: grid, Fubini-Study data and optional divisor data.

    The grid is uniform in a computational coordinate ``xi`` whose node
    density in ``s`` is proportional to ``sqrt(g(s)) + weight*sqrt(g(s - c))``,
    i.e. uniform in polar angle, plus (for cone factors) a second polar
    cluster centred at ``s = c`` where the regularised cone tip lives.
    Nodes sit at half-cell offsets so neither pole is a node.
    """

    s: np.ndarray
    s_faces: np.ndarray
    has_cone: bool = False
    cluster_weight: float = 0.0
    cluster_center: float = 0.0
    w: np.ndarray = field(init=False, repr=False)
    w_c: np.ndarray = field(init=False, repr=False)
    g: np.ndarray = field(init=False, repr=False)
    cell_area: np.ndarray = field(init=False, repr=False)
    _face_g: np.ndarray = field(init=False, repr=False)
    _face_dw: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        s = np.asarray(self.s, dtype=float)
        sf = np.asarray(self.s_faces, dtype=float)
        if sf.shape != (s.size + 1,):
            raise ConfigurationError("need exactly N + 1 faces")
        w = expit(s)
        w_c = expit(-s)
        interior = sf[1:-1]
        cell = np.where(
            sf[1:] <= 0.0, expit(sf[1:]) - expit(sf[:-1]), expit(-sf[:-1]) - expit(-sf[1:])
        )
        for name, value in (
            ("s", s),
            ("s_faces", sf),
            ("w", w),
            ("w_c", w_c),
            ("g", w * w_c),
            ("cell_area", cell),
            ("_face_g", expit(interior) * expit(-interior)),
            ("_face_dw", _stable_dw(s[:-1], s[1:], interior)),
        ):
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    # -- named views -----------------------------------------------------
    @property
    def N(self) -> int:
        return self.s.size

    @property
    def grid(self) -> np.ndarray:
        return self.w

    @property
    def fs_density(self) -> np.ndarray:
        return self.g

    @property
    def section_norm(self) -> np.ndarray | None:
        """``|s|^2_h = w`` for the section of O(1) vanishing at z = 0."""
        return self.w if self.has_cone else None

    @property
    def curvature_density(self) -> np.ndarray | None:
        """Density of ``i R_h`` (Fubini-Study metric on O(1), degree one)."""
        return self.g if self.has_cone else None

    # -- calculus ----------------------------------------------------------
    def face_flux(self, f, slopes=(0.0, 0.0)) -> np.ndarray:
        """s-gradient of ``f`` on the N + 1 faces; pole faces take ``slopes``."""
        f = np.asarray(f, dtype=float)
        flux = np.empty(f.size + 1)
        flux[0], flux[-1] = slopes
        flux[1:-1] = self._face_g * np.diff(f) / self._face_dw
        return flux

    def dw2(self, f, slopes=(0.0, 0.0)) -> np.ndarray:
        """``(g f_w)_w = f_ss / g`` at the nodes."""
        return np.diff(self.face_flux(f, slopes)) / self.cell_area

    def ds2(self, f, slopes=(0.0, 0.0)) -> np.ndarray:
        """Second s-derivative ``f_ss`` at the nodes."""
        return self.g * self.dw2(f, slopes)

    def ds(self, f) -> np.ndarray:
        """First s-derivative ``f_s = g f_w`` at the nodes (second order)."""
        f = np.asarray(f, dtype=float)
        h = self._face_dw
        d = np.empty_like(f)
        h1, h2 = h[:-1], h[1:]
        d[1:-1] = (
            h1**2 * f[2:] - h2**2 * f[:-2] - (h1**2 - h2**2) * f[1:-1]
        ) / (h1 * h2 * (h1 + h2))
        # one-sided three-point formulas at the outermost nodes
        a, b = h[0], h[1]
        d[0] = (-(2 * a + b) * b * f[0] + (a + b) ** 2 * f[1] - a**2 * f[2]) / (a * b * (a + b))
        a, b = h[-1], h[-2]
        d[-1] = ((2 * a + b) * b * f[-1] - (a + b) ** 2 * f[-2] + a**2 * f[-3]) / (a * b * (a + b))
        return self.g * d

    def operator_bands(self):
        """Tridiagonal coefficients of ``dw2`` (lower, diag, upper).

        ``lower[j]`` multiplies ``f[j-1]`` and ``upper[j]`` multiplies
        ``f[j+1]``; ``lower[0]`` and ``upper[-1]`` are zero.
        """
        c = self._face_g / self._face_dw
        lower = np.zeros(self.N)
        upper = np.zeros(self.N)
        lower[1:] = c / self.cell_area[1:]
        upper[:-1] = c / self.cell_area[:-1]
        return lower, -(lower + upper), upper

    def integrate(self, density) -> float:
        """``int density ds`` (multiply by 2*pi for the area of a form)."""
        return float(np.sum(np.asarray(density, dtype=float) / self.g * self.cell_area))

    def area(self, q) -> float:
        """Area ``2*pi int q ds`` of the symmetric form with density ``q``."""
        return TWO_PI * self.integrate(q)


def build_factor(
    N: int,
    has_cone: bool = False,
    cluster_weight: float | None = None,
    cluster_center: float = DEFAULT_CLUSTER_CENTER,
) -> FactorGeometry:
    """Build a P^1 factor with ``N`` nodes.

    Cone factors get a second node cluster around ``s = cluster_center``
    (``log eps^2`` for eps near 0.03 by default); cone-free factors use the
    plain uniform-angle grid unless ``cluster_weight`` is given.
    """
    if int(N) != N or N < MIN_NODES:
        raise ConfigurationError(f"need at least {MIN_NODES} nodes, got {N}")
    N = int(N)
    if cluster_weight is None:
        cluster_weight = DEFAULT_CLUSTER_WEIGHT if has_cone else 0.0
    if cluster_weight < 0:
        raise ConfigurationError("cluster_weight must be non-negative")
    nodes = _invert_map((np.arange(N) + 0.5) / N, cluster_weight, cluster_center)
    faces = np.concatenate(
        ([-np.inf], _invert_map(np.arange(1, N) / N, cluster_weight, cluster_center), [np.inf])
    )
    return FactorGeometry(
        nodes,
        faces,
        has_cone=bool(has_cone),
        cluster_weight=float(cluster_weight),
        cluster_center=float(cluster_center),
    )


def _check_positive(q):
    q = np.asarray(q, dtype=float)
    if not np.all(np.isfinite(q)) or np.any(q <= 0.0):
        raise DegenerateMetricError("metric density must be finite and strictly positive")
    return q


def scalar_curvature(factor: FactorGeometry, q) -> np.ndarray:
    """Scalar curvature ``R = -(log q)_ss / q`` of one factor.

    ``log q`` is split as ``log g + log(q/g)``; the Fubini-Study part has
    ``(log g)_ss = -2 g`` exactly, and ``log(q/g)`` is smooth on the sphere,
    so its flux vanishes at both poles.  For the metric density ``q_FS``
    the result is 2 to rounding.
    """
    q = _check_positive(q)
    p = q / factor.g
    return (2.0 - factor.dw2(np.log(p))) / p


def log_slope(factor: FactorGeometry, q) -> np.ndarray:
    """``(log q)_s`` at the nodes; tends to +1 / -1 at the two poles."""
    q = _check_positive(q)
    return (factor.w_c - factor.w) + factor.ds(np.log(q / factor.g))


def product_scalar_curvature(factors: Sequence[FactorGeometry], qs) -> list[np.ndarray]:
    """Per-factor curvature contributions; the product's R is their sum."""
    return [scalar_curvature(f, q) for f, q in zip(factors, qs)]


def outer_sum(parts: Sequence[np.ndarray]) -> np.ndarray:
    """Field on the product grid from per-factor additive components."""
    total = np.asarray(parts[0], dtype=float)
    for part in parts[1:]:
        total = np.add.outer(total, np.asarray(part, dtype=float))
    return total


@dataclass(frozen=True, eq=False)
class Scenario:
    """A model geometry X = P^1 or P^1 x P^1 with optional cone divisor.

    ``contraction`` is the index of the factor collapsed at T (the map is
    the projection onto the other one) or ``None`` for total collapse.
    """

    name: str
    factors: tuple[FactorGeometry, ...]
    initial_areas: tuple[float, ...]
    beta: float
    k: float
    contraction: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(self.factors))
        object.__setattr__(self, "initial_areas", tuple(float(a) for a in self.initial_areas))
        if not 1 <= len(self.factors) <= 2:
            raise ConfigurationError("scenarios have one or two P^1 factors")
        if len(self.initial_areas) != len(self.factors):
            raise ConfigurationError("one initial area per factor")
        if any(a <= 0 for a in self.initial_areas):
            raise ConfigurationError("initial areas must be positive")
        if not 0.0 < self.beta < 1.0:
            raise ConfigurationError(f"beta must lie in (0, 1), got {self.beta}")
        if self.k < 0:
            raise ConfigurationError("k must be non-negative")
        if sum(f.has_cone for f in self.factors) > 1:
            raise ConfigurationError("at most one factor may carry the cone divisor")
        if self.contraction is not None:
            if len(self.factors) < 2 or self.contraction not in range(len(self.factors)):
                raise ConfigurationError("contraction must name a factor of a product")
            if self.factors[self.contraction].has_cone:
                raise ConfigurationError("the divisor must be pulled back from the base")

    @property
    def n(self) -> int:
        return len(self.factors)

    @property
    def cone_index(self) -> int | None:
        for i, f in enumerate(self.factors):
            if f.has_cone:
                return i
        return None

    @property
    def degrees(self) -> tuple[float, ...]:
        """``int 2 pi c_1(K_X + (1-beta) D)`` restricted to each factor."""
        return tuple(
            -2.0 * TWO_PI + (TWO_PI * (1.0 - self.beta) if f.has_cone else 0.0)
            for f in self.factors
        )
