"""Smoothing of the conic potential and the twist forms it induces.

``chi(u, eps2) = beta * int_0^u ((r + eps2)^beta - eps2^beta) / r dr``
replaces ``u^beta``; composed with ``u = |s|^2_h = w`` it gives ``rho_eps``.
Closed forms below are written as ratios to ``g = w(1 - w)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import quad

from .errors import ConfigurationError
from .geometry import FactorGeometry, Scenario

_GL_X, _GL_W = leggauss(24)
_SERIES_CUTOFF = 0.1
_SERIES_TERMS = 30


def _pow_diff(x, a, beta):
    """``(x + a)^beta - a^beta`` without cancellation."""
    x = np.asarray(x, dtype=float)
    if a == 0.0:
        return x**beta
    return a**beta * np.expm1(beta * np.log1p(x / a))


def _series_coefficients(beta, terms=_SERIES_TERMS):
    # binomial(beta, m) for m = 1..terms
    c = np.empty(terms)
    val = 1.0
    for m in range(1, terms + 1):
        val *= (beta - m + 1) / m
        c[m - 1] = val
    return c


def _integrand(r, a, beta):
    """``((r + a)^beta - a^beta) / r`` with the removable singularity patched."""
    if a == 0.0:
        return r ** (beta - 1.0)
    x = r / a
    if x < _SERIES_CUTOFF:
        c = _series_coefficients(beta)
        return a ** (beta - 1.0) * np.polyval(c[::-1], x)
    return float(_pow_diff(r, a, beta)) / r


def chi(u: float, eps2: float, beta: float) -> float:
    """Regularised conic potential ``chi(u, eps^2)``.

    Adaptive Gauss-Kronrod on ``[0, min(u, eps2)]`` and, beyond that, on
    ``log r`` where the integrand is smooth at every scale.
    """
    if u < 0 or eps2 < 0:
        raise ValueError("chi is defined for u >= 0 and eps2 >= 0")
    if u == 0.0:
        return 0.0
    if eps2 == 0.0:
        return u**beta
    m = min(u, eps2)
    head, _ = quad(_integrand, 0.0, m, args=(eps2, beta), epsabs=0.0, epsrel=1e-13, limit=200)
    tail = 0.0
    if u > m:
        tail, _ = quad(
            lambda x: float(_pow_diff(math.exp(x), eps2, beta)),
            math.log(m),
            math.log(u),
            epsabs=0.0,
            epsrel=1e-13,
            limit=200,
        )
    return beta * (head + tail)


def chi_du(u, eps2: float, beta: float):
    """``d chi / du = beta ((u + eps2)^beta - eps2^beta) / u``."""
    u = np.asarray(u, dtype=float)
    if eps2 == 0.0:
        return beta * u ** (beta - 1.0)
    return beta * _pow_diff(u, eps2, beta) / u


def chi_on_grid(u, eps2: float, beta: float) -> np.ndarray:
    """Vectorised ``chi`` at increasing positive points ``u``.

    The first value comes from the binomial series (or ``chi`` itself when
    ``u[0]`` is not small against ``eps2``), the rest by summing 24-point
    Gauss-Legendre panels in ``log r`` between consecutive points.
    """
    u = np.asarray(u, dtype=float)
    if np.any(np.diff(u) <= 0) or u[0] <= 0:
        raise ValueError("chi_on_grid needs strictly increasing positive points")
    if eps2 == 0.0:
        return u**beta
    x0 = u[0] / eps2
    if x0 < 0.5:
        c = _series_coefficients(beta, 60)
        m = np.arange(1, 61)
        first = beta * eps2**beta * np.sum(c * x0**m / m)
    else:
        first = chi(float(u[0]), eps2, beta)
    lo, hi = np.log(u[:-1]), np.log(u[1:])
    half = 0.5 * (hi - lo)
    r = np.exp(0.5 * (hi + lo)[:, None] + half[:, None] * _GL_X[None, :])
    panels = beta * half * np.sum(_GL_W[None, :] * _pow_diff(r, eps2, beta), axis=1)
    return first + np.concatenate(([0.0], np.cumsum(panels)))


def _require_cone(factor: FactorGeometry):
    if not factor.has_cone:
        raise ConfigurationError("this factor carries no cone divisor")


def rho_eps(factor: FactorGeometry, eps: float, beta: float) -> np.ndarray:
    """``rho_eps = chi(|s|^2_h, eps^2)`` at the nodes of a cone factor."""
    _require_cone(factor)
    return chi_on_grid(factor.w, eps * eps, beta)


def ddbar_rho_profile(w, eps: float, beta: float) -> np.ndarray:
    """Closed form of ``i ddbar rho_eps`` divided by ``g``, as a function of ``w``.

    ``beta^2 <ds ^ ds>_h / (|s|^2 + eps^2)^(1-beta) - beta ((|s|^2+eps^2)^beta - eps^(2 beta)) iR_h``
    with ``<ds ^ ds>_h = i ddbar |s|^2_h + |s|^2_h iR_h = w (1-w)^2`` here.
    """
    w = np.asarray(w, dtype=float)
    a = eps * eps
    return beta**2 * (1.0 - w) * (w + a) ** (beta - 1.0) - beta * _pow_diff(w, a, beta)


def ddbar_rho_ratio(factor: FactorGeometry, eps: float, beta: float) -> np.ndarray:
    """:func:`ddbar_rho_profile` at the nodes of a cone factor (``1 - w`` taken stably)."""
    _require_cone(factor)
    a = eps * eps
    w, wc = factor.w, factor.w_c
    return beta**2 * wc * (w + a) ** (beta - 1.0) - beta * _pow_diff(w, a, beta)


def ddbar_rho_density(factor: FactorGeometry, eps: float, beta: float, method: str = "closed") -> np.ndarray:
    """Density of ``i ddbar rho_eps``; ``method`` is ``"closed"`` or ``"stencil"``."""
    if method == "closed":
        return factor.g * ddbar_rho_ratio(factor, eps, beta)
    if method == "stencil":
        return factor.ds2(rho_eps(factor, eps, beta))
    raise ValueError(f"unknown method {method!r}")


def theta_profile(w, eps: float, beta: float) -> np.ndarray:
    """``theta_eps / g = (1-beta) eps^2 (1 + eps^2) / (w + eps^2)^2``."""
    a = eps * eps
    return (1.0 - beta) * a * (1.0 + a) / (np.asarray(w, dtype=float) + a) ** 2


def theta_ratio(factor: FactorGeometry, eps: float, beta: float) -> np.ndarray:
    _require_cone(factor)
    return theta_profile(factor.w, eps, beta)


def theta_eps_density(factor: FactorGeometry, eps: float, beta: float, method: str = "closed") -> np.ndarray:
    """Density of ``theta_eps = (1-beta) i ddbar log(|s|^2 + eps^2) + (1-beta) iR_h``."""
    if method == "closed":
        return factor.g * theta_ratio(factor, eps, beta)
    if method == "stencil":
        _require_cone(factor)
        return (1.0 - beta) * (factor.ds2(np.log(factor.w + eps * eps)) + factor.g)
    raise ValueError(f"unknown method {method!r}")


def theta_mass(eps: float, beta: float) -> float:
    """``int theta_eps`` by adaptive quadrature of the closed form in ``w``.

    ``ds = dw / g`` turns the integral into one of ``theta/g`` over [0, 1].
    """
    a = eps * eps
    # breakpoints on a log scale so that tiny eps still resolves the peak at w ~ a
    pts = [a * 10.0**j for j in range(0, 40) if a * 10.0**j < 1.0]
    val, _ = quad(
        lambda w: (1.0 - beta) * a * (1.0 + a) / (w + a) ** 2,
        0.0,
        1.0,
        points=pts or None,
        epsabs=0.0,
        epsrel=1e-13,
        limit=200,
    )
    return 2.0 * math.pi * val


@dataclass(frozen=True)
class PositivityConstants:
    """Grid maxima standing in for the curvature/section/comparison bounds."""

    curvature: float  # -C omega_ref <= iR_h <= C omega_ref
    section: float  # sup |s|_h
    comparison: float  # omega_hat_T <= C omega_0, at least 1
    reference: str  # which form bounds iR_h: "omega_hat_T" or "omega_0"

    def k_max(self, beta: float, safety: float = 0.5) -> float:
        denom = beta * self.curvature * self.section ** (2 * beta) * self.comparison
        if not np.isfinite(denom) or denom <= 0:
            raise ConfigurationError("degenerate positivity constants")
        return safety / denom


def positivity_constants(scenario: Scenario, schedule) -> PositivityConstants | None:
    """Constants for the cone factor; ``None`` for cone-free scenarios.

    When the cone factor collapses (no surviving base form) the curvature
    bound is taken against the initial metric instead of ``omega_hat_T``.
    """
    i = scenario.cone_index
    if i is None:
        return None
    f = scenario.factors[i]
    pT, p0 = schedule.pT[i], schedule.p0[i]
    if np.all(pT > 0):
        ref, curv = "omega_hat_T", float(np.max(1.0 / pT))
    else:
        ref, curv = "omega_0", float(np.max(1.0 / p0))
    section = float(np.sqrt(np.max(f.w)))
    comparison = max(1.0, max(float(np.max(t / p)) for t, p in zip(schedule.pT, schedule.p0)))
    return PositivityConstants(curv, section, comparison, ref)


def k_max(scenario: Scenario, schedule, safety: float = 0.5) -> float:
    """Largest admissible ``k`` (``inf`` when there is no divisor)."""
    consts = positivity_constants(scenario, schedule)
    if consts is None:
        return math.inf
    return consts.k_max(scenario.beta, safety)


@dataclass(frozen=True)
class ConeParams:
    beta: float
    k: float
    eps_ladder: tuple[float, ...]

    def __post_init__(self):
        ladder = tuple(float(e) for e in self.eps_ladder)
        object.__setattr__(self, "eps_ladder", ladder)
        if not 0.0 < self.beta < 1.0:
            raise ConfigurationError("beta must lie in (0, 1)")
        if self.k < 0:
            raise ConfigurationError("k must be non-negative")
        validate_ladder(ladder)


def validate_ladder(ladder: Sequence[float]):
    if len(ladder) < 3:
        raise ConfigurationError("the eps ladder needs at least three entries")
    if any(e <= 0 for e in ladder):
        raise ConfigurationError("eps values must be positive")
    for a, b in zip(ladder, ladder[1:]):
        if not b < a:
            raise ConfigurationError("eps ladder must be strictly decreasing")
        if b / a > 0.7:
            raise ConfigurationError("consecutive eps values must shrink by a factor <= 0.7")
