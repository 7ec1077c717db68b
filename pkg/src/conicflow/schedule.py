"""Cohomology classes along the flow and the reference forms built from them.

Per factor the class area evolves as ``A(t) = e^{-t} A(0) + (1 - e^{-t}) d``
with ``d`` the twisted canonical degree.  All reference data are stored as
ratios to the Fubini-Study density ``g`` (so ``q = g * p``), which keeps
them bounded at the poles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ClassArithmeticError, InfiniteHorizonError, OutOfHorizonError
from .geometry import TWO_PI, FactorGeometry, Scenario

CLASS_TOL = 1e-6


def compute_T(A0: Sequence[float], degrees: Sequence[float]) -> tuple[float, int]:
    """First time a factor area reaches zero, and that factor's index."""
    best = (math.inf, -1)
    for i, (a, d) in enumerate(zip(A0, degrees)):
        if a <= 0:
            raise ValueError("initial areas must be positive")
        if d < 0:
            best = min(best, (math.log((a - d) / -d), i))
    if best[1] < 0:
        raise InfiniteHorizonError("no factor collapses; the infinite-horizon case is not modelled")
    return best


@dataclass(frozen=True, eq=False)
class ClassSchedule:
    """Area schedule and reference ratios ``p = q / g`` per factor."""

    scenario: Scenario
    T: float
    collapsing: int
    degrees: tuple[float, ...]
    p0: tuple[np.ndarray, ...]
    pT: tuple[np.ndarray, ...]

    @property
    def A0(self) -> tuple[float, ...]:
        return self.scenario.initial_areas

    @property
    def A_T(self) -> tuple[float, ...]:
        return tuple(self.area(self.T, i) for i in range(self.scenario.n))

    @property
    def p_inf(self) -> tuple[np.ndarray, ...]:
        e = math.exp(-self.T)
        return tuple((pt - e * p) / (1.0 - e) for p, pt in zip(self.p0, self.pT))

    def area(self, t: float, i: int) -> float:
        e = math.exp(-t)
        return e * self.A0[i] + (1.0 - e) * self.degrees[i]

    def a(self, t: float) -> float:
        """Interpolation weight, 1 at t = 0 and 0 at t = T."""
        e = math.exp(-self.T)
        return (math.exp(-t) - e) / (1.0 - e)

    def da_dt(self, t: float) -> float:
        return -math.exp(-t) / (1.0 - math.exp(-self.T))

    def _check_time(self, t):
        if not 0.0 <= t < self.T:
            raise OutOfHorizonError(f"t = {t} outside [0, T) with T = {self.T}")

    def reference_ratio(self, t: float, i: int) -> np.ndarray:
        """``q_hat_t / g`` on factor ``i``."""
        self._check_time(t)
        a = self.a(t)
        return a * self.p0[i] + (1.0 - a) * self.pT[i]

    def reference_ratio_dt(self, t: float, i: int) -> np.ndarray:
        return self.da_dt(t) * (self.p0[i] - self.pT[i])

    def reference_density(self, t: float, i: int) -> np.ndarray:
        return self.scenario.factors[i].g * self.reference_ratio(t, i)

    def summary(self) -> dict:
        return {
            "T": self.T,
            "collapsing_factor": self.collapsing,
            "contraction": self.scenario.contraction,
            "areas_at_T": list(self.A_T),
            "initial_areas": list(self.A0),
            "degrees": list(self.degrees),
        }


def round_profile(factor: FactorGeometry, area: float) -> np.ndarray:
    """Ratio ``q/g`` of the round metric of the given area."""
    return np.full(factor.N, area / TWO_PI)


def build_schedule(
    scenario: Scenario,
    initial_profiles: Sequence[Callable[[FactorGeometry], np.ndarray] | None] | None = None,
) -> ClassSchedule:
    """Schedule for ``scenario``.

    Initial metrics are round of the prescribed area unless a profile
    callable returns the ratio ``q0/g`` for a factor; profiles are rescaled
    to the prescribed area.  The limit form is zero on collapsing factors
    and the round metric of area ``A_i(T)`` on the surviving one.
    """
    T, idx = compute_T(scenario.initial_areas, scenario.degrees)
    if scenario.contraction is not None and scenario.contraction != idx:
        raise ClassArithmeticError(
            f"factor {idx} collapses first, but the scenario contracts factor {scenario.contraction}"
        )
    p0 = []
    for i, f in enumerate(scenario.factors):
        area = scenario.initial_areas[i]
        prof = None if initial_profiles is None else initial_profiles[i]
        if prof is None:
            p = round_profile(f, area)
        else:
            p = np.asarray(prof(f), dtype=float)
            p = p * area / f.area(f.g * p)
        p0.append(p)
    pT = []
    for i, f in enumerate(scenario.factors):
        e = math.exp(-T)
        A_T = e * scenario.initial_areas[i] + (1.0 - e) * scenario.degrees[i]
        if scenario.contraction is None or i == idx or A_T <= 0:
            pT.append(np.zeros(f.N))
        else:
            pT.append(round_profile(f, A_T))
    return ClassSchedule(scenario, T, idx, scenario.degrees, tuple(p0), tuple(pT))


def volume_source(schedule: ClassSchedule, i: int) -> np.ndarray:
    """``tau / g`` with ``tau = q_hat_inf - (1 - beta) r_h`` on the cone factor."""
    sc = schedule.scenario
    tau = schedule.p_inf[i].copy()
    if sc.factors[i].has_cone:
        tau -= 1.0 - sc.beta
    return tau


def solve_background_volume(schedule: ClassSchedule) -> tuple[np.ndarray, ...]:
    """Ratios ``Q_i / g`` of the volume form with ``-Ric(Omega) + (1-beta) iR_h = omega_hat_inf``.

    Per factor ``(log Q)_ss = tau``; writing ``Q = g P`` this is
    ``dw2(log P) = tau/g + 2`` with zero flux at both poles (so that
    ``(log Q)_s -> +1, -1``).  The system is integrated directly, and each
    factor is normalised to ``int Q = A_i(0)``.
    """
    out = []
    for i, f in enumerate(schedule.scenario.factors):
        tau = volume_source(schedule, i)
        total = TWO_PI * f.integrate(f.g * tau)
        if abs(total + 2.0 * TWO_PI) > CLASS_TOL * 2.0 * TWO_PI:
            raise ClassArithmeticError(
                f"factor {i}: 2*pi * int tau = {total:.9g}, expected {-2 * TWO_PI:.9g}"
            )
        sigma = tau + 2.0
        # remove the quadrature-level incompatibility before integrating
        sigma = sigma - np.sum(sigma * f.cell_area) / np.sum(f.cell_area)
        flux = np.concatenate(([0.0], np.cumsum(sigma * f.cell_area)))
        logP = np.concatenate(([0.0], np.cumsum(flux[1:-1] * f._face_dw / f._face_g)))
        P = np.exp(logP - logP.max())
        P *= schedule.A0[i] / f.area(f.g * P)
        out.append(P)
    return tuple(out)


def background_density(schedule: ClassSchedule, P: Sequence[np.ndarray]) -> tuple[np.ndarray, ...]:
    """Volume-form densities ``Q_i = g P_i``."""
    return tuple(f.g * p for f, p in zip(schedule.scenario.factors, P))


def volume_residual(schedule: ClassSchedule, P: Sequence[np.ndarray]) -> list[float]:
    """Discrete max-norm of ``-Ric(Omega) + (1-beta) iR_h - omega_hat_inf`` per factor."""
    res = []
    for i, f in enumerate(schedule.scenario.factors):
        tau = volume_source(schedule, i)
        r = f.g * (f.dw2(np.log(P[i])) - 2.0 - tau)
        res.append(float(np.max(np.abs(r))))
    return res
