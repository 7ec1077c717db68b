"""Time stepping of the regularised potential flow.

On a product of symmetric P^1 factors the potential splits as a sum of
per-factor functions ``phi_i(s_i)`` and so does the right-hand side

    d/dt phi = log(prod q_i / prod Q_i) - phi + (1-beta) log(|s|^2 + eps^2) - k rho_eps,

with the cone terms attached to the cone factor.  Each factor evolves
``phi_i`` with ``q_i = g (p_hat_t + k ddbar(rho)/g + dw2(phi_i))``.

The default integrator is the two-stage L-stable Rosenbrock method ROS2
with the exact tridiagonal Jacobian; explicit RK2 (midpoint) is kept for
cross-checks and for short verification runs.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import solve_banded

from .errors import ConfigurationError, SingularityReached
from .geometry import FactorGeometry, Scenario
from .regularization import ddbar_rho_ratio, rho_eps
from .schedule import ClassSchedule, solve_background_volume

logger = logging.getLogger(__name__)

GAMMA = 1.0 + 1.0 / math.sqrt(2.0)
MAX_HALVINGS = 20
DT_FLOOR = 1e-10


@dataclass(frozen=True, eq=False)
class FlowProblem:
    """Everything that stays fixed along one eps-trajectory."""

    scenario: Scenario
    schedule: ClassSchedule
    eps: float
    log_P: tuple[np.ndarray, ...]
    rho: tuple[np.ndarray, ...]
    ddbar_rho: tuple[np.ndarray, ...]
    cone_term: tuple[np.ndarray, ...]
    bands: tuple[tuple[np.ndarray, np.ndarray, np.ndarray], ...]
    frozen_time: float | None = None
    source: Callable[[float], Sequence[np.ndarray]] | None = None
    source_dt: Callable[[float], Sequence[np.ndarray]] | None = None

    @property
    def factors(self) -> tuple[FactorGeometry, ...]:
        return self.scenario.factors

    @property
    def T(self) -> float:
        return self.schedule.T

    def coefficient_time(self, t: float) -> float:
        return t if self.frozen_time is None else self.frozen_time

    def reference(self, t: float, i: int) -> np.ndarray:
        """``q_tilde_t / g`` on factor ``i``."""
        return self.schedule.reference_ratio(self.coefficient_time(t), i) + self.ddbar_rho[i]

    def reference_dt(self, t: float, i: int) -> np.ndarray:
        if self.frozen_time is not None:
            return np.zeros(self.factors[i].N)
        return self.schedule.reference_ratio_dt(t, i)


def make_problem(scenario: Scenario, schedule: ClassSchedule, eps: float, **kw) -> FlowProblem:
    """Precompute the eps-dependent data of the flow on ``scenario``."""
    if eps <= 0:
        raise ConfigurationError("eps must be positive")
    P = solve_background_volume(schedule)
    rho, ddb, cone = [], [], []
    for f in scenario.factors:
        if f.has_cone:
            r = rho_eps(f, eps, scenario.beta)
            rho.append(r)
            ddb.append(scenario.k * ddbar_rho_ratio(f, eps, scenario.beta))
            cone.append((1.0 - scenario.beta) * np.log(f.w + eps * eps) - scenario.k * r)
        else:
            z = np.zeros(f.N)
            rho.append(z)
            ddb.append(z)
            cone.append(z)
    return FlowProblem(
        scenario,
        schedule,
        float(eps),
        tuple(np.log(p) for p in P),
        tuple(rho),
        tuple(ddb),
        tuple(cone),
        tuple(f.operator_bands() for f in scenario.factors),
        **kw,
    )


@dataclass(frozen=True, eq=False)
class FlowState:
    """Potential, its time derivative and the metric ratios ``p = q/g``."""

    t: float
    phi: tuple[np.ndarray, ...]
    phi_dot: tuple[np.ndarray, ...]
    p: tuple[np.ndarray, ...]
    factors: tuple[FactorGeometry, ...] = field(repr=False, default=())

    @property
    def q(self) -> tuple[np.ndarray, ...]:
        return tuple(f.g * p for f, p in zip(self.factors, self.p))

    @property
    def min_density_ratio(self) -> float:
        return min(float(np.min(p)) for p in self.p)


class EllipticityError(ArithmeticError):
    """Step-rejection signal: some metric ratio became non-positive."""


def metric_ratios(problem: FlowProblem, t: float, phi: Sequence[np.ndarray]) -> tuple[np.ndarray, ...]:
    out = []
    for i, f in enumerate(problem.factors):
        p = problem.reference(t, i) + f.dw2(phi[i])
        if not np.all(np.isfinite(p)) or np.any(p <= 0.0):
            raise EllipticityError(f"factor {i} lost positivity at t = {t}")
        out.append(p)
    return tuple(out)


def _rhs_from_ratios(problem, t, phi, p):
    out = []
    src = problem.source(t) if problem.source is not None else None
    for i in range(len(phi)):
        r = np.log(p[i]) - problem.log_P[i] - phi[i] + problem.cone_term[i]
        if src is not None:
            r = r + src[i]
        out.append(r)
    return tuple(out)


def rhs(problem: FlowProblem, t: float, phi: Sequence[np.ndarray]) -> tuple[np.ndarray, ...]:
    """Per-factor pieces of ``d phi/dt``; the scalar flow speed is their sum."""
    return _rhs_from_ratios(problem, t, phi, metric_ratios(problem, t, phi))


def initial_state(problem: FlowProblem) -> FlowState:
    phi = tuple(np.zeros(f.N) for f in problem.factors)
    return make_state(problem, 0.0, phi)


def make_state(problem: FlowProblem, t: float, phi: Sequence[np.ndarray]) -> FlowState:
    """State at ``(t, phi)`` with ``phi_dot`` recomputed from the equation."""
    phi = tuple(np.array(x, dtype=float) for x in phi)
    p = metric_ratios(problem, t, phi)
    return FlowState(t, phi, _rhs_from_ratios(problem, t, phi, p), p, problem.factors)


def _rk2(problem, state, dt):
    t = state.t
    mid = tuple(x + 0.5 * dt * d for x, d in zip(state.phi, state.phi_dot))
    k2 = rhs(problem, t + 0.5 * dt, mid)
    return tuple(x + dt * d for x, d in zip(state.phi, k2))


def _ros2(problem, state, dt):
    t = state.t
    gdt = GAMMA * dt
    src_dt = problem.source_dt(t) if problem.source_dt is not None else None
    solves = []
    for i, (lo, di, up) in enumerate(problem.bands):
        p = state.p[i]
        ab = np.zeros((3, lo.size))
        # W = I - gamma dt (diag(1/p) D - I)
        ab[0, 1:] = -gdt * up[:-1] / p[:-1]
        ab[1] = 1.0 + gdt - gdt * di / p
        ab[2, :-1] = -gdt * lo[1:] / p[1:]
        solves.append(ab)
    ft = []
    for i in range(len(state.phi)):
        d = problem.reference_dt(t, i) / state.p[i]
        if src_dt is not None:
            d = d + src_dt[i]
        ft.append(d)
    k1 = tuple(
        solve_banded((1, 1), ab, f + gdt * d, check_finite=False)
        for ab, f, d in zip(solves, state.phi_dot, ft)
    )
    stage = tuple(x + dt * k for x, k in zip(state.phi, k1))
    f2 = rhs(problem, t + dt, stage)
    k2 = tuple(
        solve_banded((1, 1), ab, f - 2.0 * k - gdt * d, check_finite=False)
        for ab, f, k, d in zip(solves, f2, k1, ft)
    )
    return tuple(x + 1.5 * dt * a + 0.5 * dt * b for x, a, b in zip(state.phi, k1, k2))


SCHEMES = {"ros2": _ros2, "rk2": _rk2}


def step(problem: FlowProblem, state: FlowState, dt: float, scheme: str = "ros2") -> FlowState:
    """Advance by ``dt``, halving it on loss of ellipticity.

    Returns the new state (whose ``t`` shows the step actually taken).
    Raises :class:`SingularityReached` with the last valid state once
    ``MAX_HALVINGS`` halvings have failed or ``dt`` drops below the floor.
    """
    if dt < 0:
        raise ValueError("dt must be non-negative")
    if dt == 0:
        return state
    advance = SCHEMES[scheme]
    for _ in range(MAX_HALVINGS + 1):
        if dt < DT_FLOOR:
            break
        if problem.frozen_time is None and state.t + dt >= problem.T:
            dt *= 0.5
            continue
        try:
            phi = advance(problem, state, dt)
            return make_state(problem, state.t + dt, phi)
        except (EllipticityError, FloatingPointError):
            dt *= 0.5
    raise SingularityReached(f"step halving exhausted at t = {state.t:.12g}", state)


def stable_rk2_dt(problem: FlowProblem, state: FlowState, c_cfl: float = 0.9) -> float:
    """Explicit-midpoint stability limit ``c_cfl * 2 / lambda_max``."""
    lam = 1.0
    for (lo, di, up), p in zip(problem.bands, state.p):
        lam = max(lam, float(np.max(np.abs(di) / p)) * 2.0 + 1.0)
    return c_cfl * 2.0 / lam


def conditioning(problem: FlowProblem, state: FlowState) -> float:
    """Cancellation ratio ``max (|q_tilde/g| + |dw2 phi|) / p`` over all nodes.

    ``p`` is assembled from terms of size O(1); once it is much smaller than
    them, rounding in ``dw2 phi`` is amplified by this ratio in every
    derived curvature quantity.
    """
    out = 1.0
    for i, f in enumerate(problem.factors):
        ref = np.abs(problem.reference(state.t, i)) + np.abs(f.dw2(state.phi[i]))
        out = max(out, float(np.max(ref / state.p[i])))
    return out


@dataclass
class StopPolicy:
    """Stop at ``fraction * T``, once ``min q/g < min_density``, or once the
    cancellation ratio exceeds ``max_conditioning``."""

    fraction: float = 1.0 - 1e-3
    min_density: float | None = None
    max_conditioning: float | None = 100.0

    def __post_init__(self):
        if not 0.0 < self.fraction < 1.0:
            raise ConfigurationError("t_stop fraction must lie in (0, 1)")
        if self.min_density is not None and self.min_density <= 0:
            raise ConfigurationError("min_density must be positive")
        if self.max_conditioning is not None and self.max_conditioning <= 1:
            raise ConfigurationError("max_conditioning must exceed 1")


@dataclass
class SampleRecord:
    """A sampled state plus two short probe steps for time derivatives."""

    state: FlowState
    probes: tuple[FlowState, ...] = ()
    probe_dt: float = 0.0


@dataclass
class Trajectory:
    problem: FlowProblem
    samples: list[SampleRecord]
    t_stop: float
    truncated: bool = False
    reason: str = "completed"
    steps: int = 0

    @property
    def times(self) -> np.ndarray:
        return np.array([r.state.t for r in self.samples])

    def sample_at(self, t: float) -> SampleRecord:
        i = int(np.argmin(np.abs(self.times - t)))
        return self.samples[i]


def sample_times(T: float, t_stop: float, n_uniform: int = 18, ladder_ratio: float = 2.0 ** -0.5) -> np.ndarray:
    """Uniform samples on [0, 0.9 T] plus a geometric ladder ``T (1 - r^j)``."""
    ts = set(np.round(np.linspace(0.0, 0.9 * T, n_uniform + 1), 15))
    ts.add(0.5 * T)
    j = 1
    while True:
        t = T * (1.0 - ladder_ratio**j)
        if t >= t_stop:
            break
        ts.add(t)
        j += 1
    ts.add(t_stop)
    return np.array(sorted(ts))


def run(
    problem: FlowProblem,
    policy: StopPolicy | None = None,
    scheme: str = "ros2",
    c_cfl: float = 0.9,
    dt_max: float | None = None,
    time_fraction: float = 0.02,
    probe_fraction: float = 1e-4,
    ladder_ratio: float = 2.0 ** -0.5,
    n_uniform: int = 18,
) -> Trajectory:
    """Integrate to the stopping time, sampling on a ladder accumulating at T.

    The step is ``min(dt_max, time_fraction * (T - t))`` (ROS2) or the
    explicit stability limit scaled by ``c_cfl`` (RK2), clipped to land on
    sample times.  At each sample two probe steps of length ``h`` are taken
    off-trajectory to provide one-sided time derivatives.
    """
    policy = policy or StopPolicy()
    T = problem.T
    t_stop = policy.fraction * T
    targets = sample_times(T, t_stop, n_uniform, ladder_ratio)
    if dt_max is None:
        dt_max = 0.01 * T
    state = initial_state(problem)
    samples: list[SampleRecord] = []
    traj = Trajectory(problem, samples, t_stop)

    def record(st):
        h = probe_fraction * min(T - st.t, T) * 0.1
        try:
            a = step(problem, st, h, scheme)
            b = step(problem, a, h, scheme)
            samples.append(SampleRecord(st, (a, b), h))
        except SingularityReached:
            samples.append(SampleRecord(st))

    record(state)
    for target in targets[1:]:
        while state.t < target - 1e-14 * T:
            if scheme == "rk2":
                dt = min(stable_rk2_dt(problem, state, c_cfl), dt_max)
            else:
                dt = min(dt_max, time_fraction * (T - state.t))
            dt = min(dt, target - state.t)
            try:
                new = step(problem, state, dt, scheme)
            except SingularityReached as exc:
                traj.truncated, traj.reason = True, str(exc)
                logger.info("trajectory truncated: %s", exc)
                return traj
            traj.steps += 1
            if new.t - state.t < DT_FLOOR:
                traj.truncated, traj.reason = True, "dt floor reached"
                return traj
            state = new
        state = FlowState(target if abs(state.t - target) < 1e-12 * T else state.t,
                          state.phi, state.phi_dot, state.p, state.factors)
        record(state)
        if policy.min_density is not None and state.min_density_ratio < policy.min_density:
            traj.truncated, traj.reason = True, "min-density threshold"
            break
        if policy.max_conditioning is not None and conditioning(problem, state) > policy.max_conditioning:
            traj.truncated, traj.reason = True, "conditioning threshold"
            break
    return traj
