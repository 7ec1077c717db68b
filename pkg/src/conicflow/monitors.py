"""Diagnostics along a trajectory: estimate quantities, identity residuals, fits.

Every field on the product is a sum of per-factor pieces, so extrema over
the product are sums of per-factor extrema and volume averages factorise.
Fields that are not additive (the auxiliary quotients) are evaluated on
the full tensor grid.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .errors import DegenerateFitError
from .geometry import outer_sum, scalar_curvature
from .regularization import theta_ratio
from .solver import FlowProblem, FlowState, SampleRecord, Trajectory

SCHEMA_VERSION = "1.0"
LADDER_TOL = 0.25
LADDER_FLOOR = 1e-8
EXACT_RESIDUAL = 1e-10

CSV_COLUMNS = (
    "t",
    "T_minus_t",
    "sup_R",
    "inf_lap_v",
    "sup_abs_v",
    "sup_u",
    "sup_grad_v2",
    "inf_R_minus_tr_theta",
    "residual_trace",
    "residual_v",
    "residual_twisted",
    "sup_R_minus_tr_theta",
)


# -- additive fields -----------------------------------------------------------
def sup_sum(parts: Sequence[np.ndarray]) -> float:
    return float(sum(np.max(p) for p in parts))


def inf_sum(parts: Sequence[np.ndarray]) -> float:
    return float(sum(np.min(p) for p in parts))


def sup_abs_sum(parts: Sequence[np.ndarray]) -> float:
    return max(abs(sup_sum(parts)), abs(inf_sum(parts)))


def volume_weights(problem: FlowProblem, state: FlowState) -> list[np.ndarray]:
    """Normalised per-factor weights of the evolving volume form."""
    out = []
    for f, p in zip(problem.factors, state.p):
        m = p * f.cell_area
        out.append(m / m.sum())
    return out


def weighted_rms(parts: Sequence[np.ndarray], weights: Sequence[np.ndarray]) -> float:
    """RMS of ``sum_i parts[i]`` under the product of the factor weights."""
    means = [float(np.sum(w * r)) for r, w in zip(parts, weights)]
    second = sum(float(np.sum(w * r * r)) for r, w in zip(parts, weights))
    cross = sum(means) ** 2 - sum(m * m for m in means)
    return math.sqrt(max(second + cross, 0.0))


# -- per-factor fields ---------------------------------------------------------
def _weight_T(problem: FlowProblem, t: float) -> float:
    return 1.0 - math.exp(t - problem.T)


def potential_v(problem: FlowProblem, state: FlowState) -> list[np.ndarray]:
    """``v = (1 - e^{t-T}) phi_dot + phi + k rho_eps`` per factor."""
    c = _weight_T(problem, state.t)
    k = problem.scenario.k
    return [c * d + x + k * r for d, x, r in zip(state.phi_dot, state.phi, problem.rho)]


def quantity_H(problem: FlowProblem, state: FlowState) -> list[np.ndarray]:
    """``H = (1 - e^t) phi_dot + phi + k rho_eps + n t`` per factor (each factor carries ``t``)."""
    t = state.t
    k = problem.scenario.k
    return [(1.0 - math.exp(t)) * d + x + k * r + t for d, x, r in zip(state.phi_dot, state.phi, problem.rho)]


def curvature_parts(problem: FlowProblem, state: FlowState) -> list[np.ndarray]:
    return [scalar_curvature(f, q) for f, q in zip(problem.factors, state.q)]


def trace_theta_parts(problem: FlowProblem, state: FlowState) -> list[np.ndarray]:
    out = []
    for f, p in zip(problem.factors, state.p):
        if f.has_cone:
            out.append(theta_ratio(f, problem.eps, problem.scenario.beta) / p)
        else:
            out.append(np.zeros(f.N))
    return out


def trace_reference_T(problem: FlowProblem, state: FlowState) -> list[np.ndarray]:
    """``u = tr_omega omega_hat_T`` per factor."""
    return [pT / p for pT, p in zip(problem.schedule.pT, state.p)]


def laplacian_parts(problem: FlowProblem, state: FlowState, fields) -> list[np.ndarray]:
    return [f.dw2(x) / p for f, x, p in zip(problem.factors, fields, state.p)]


def gradient_sq_parts(problem: FlowProblem, state: FlowState, fields) -> list[np.ndarray]:
    return [f.ds(x) ** 2 / q for f, x, q in zip(problem.factors, fields, state.q)]


def trace_identity_parts(problem: FlowProblem, state: FlowState, sign: float = 1.0) -> list[np.ndarray]:
    """Pieces of ``(1-e^{t-T})(R - tr theta) + Delta v - n e^{t-T} + tr omega_hat_T``.

    Vanishes identically for a solution of the flow.  ``sign`` flips the
    curvature term and exists only to let the check suite prove it can fail.
    """
    c = _weight_T(problem, state.t)
    e = math.exp(state.t - problem.T)
    R = curvature_parts(problem, state)
    th = trace_theta_parts(problem, state)
    lap = laplacian_parts(problem, state, potential_v(problem, state))
    uT = trace_reference_T(problem, state)
    return [sign * c * (r - a) + l - e + u for r, a, l, u in zip(R, th, lap, uT)]


def _one_sided(y0, y1, y2, h):
    return (-3.0 * y0 + 4.0 * y1 - y2) / (2.0 * h)


def v_identity_parts(problem: FlowProblem, record: SampleRecord) -> list[np.ndarray] | None:
    """Pieces of ``dv/dt - Delta v + n - u`` (time derivative from probes)."""
    if len(record.probes) < 2:
        return None
    st = record.state
    vs = [potential_v(problem, s) for s in (st, *record.probes)]
    vdot = [_one_sided(a, b, c, record.probe_dt) for a, b, c in zip(*vs)]
    lap = laplacian_parts(problem, st, vs[0])
    u = trace_reference_T(problem, st)
    return [d - l + 1.0 - x for d, l, x in zip(vdot, lap, u)]


def twisted_identity_parts(problem: FlowProblem, record: SampleRecord) -> list[np.ndarray] | None:
    """Pieces of ``dq/dt / q + R + n - tr theta``: the twisted flow itself."""
    if len(record.probes) < 2:
        return None
    st = record.state
    a, b = record.probes
    lp = [_one_sided(np.log(x), np.log(y), np.log(z), record.probe_dt) for x, y, z in zip(st.p, a.p, b.p)]
    R = curvature_parts(problem, st)
    th = trace_theta_parts(problem, st)
    return [d + r + 1.0 - x for d, r, x in zip(lp, R, th)]


# -- auxiliary quotients on the tensor grid ------------------------------------
def auxiliary_quantities(problem: FlowProblem, state: FlowState, c7: float = 1.0) -> dict[str, float]:
    """Sup of ``|grad v|^2 / (A - v)``, ``(B - Delta v)/(B - v)`` and ``log u - C v``."""
    v = potential_v(problem, state)
    V = outer_sum(v)
    G2 = outer_sum(gradient_sq_parts(problem, state, v))
    L = outer_sum(laplacian_parts(problem, state, v))
    A = float(V.max()) + 1.0
    B = max(float(L.max()), float(V.max())) + 1.0
    U = outer_sum(trace_reference_T(problem, state))
    out = {
        "sup_psi": float(np.max(G2 / (A - V))),
        "sup_phi_quotient": float(np.max((B - L) / (B - V))),
    }
    if np.all(U > 0):
        out["sup_log_u_minus_cv"] = float(np.max(np.log(U) - c7 * V))
    else:
        out["sup_log_u_minus_cv"] = float("nan")
    return out


@dataclass(frozen=True)
class MonitorSample:
    t: float
    T_minus_t: float
    sup_R: float
    inf_lap_v: float
    sup_abs_v: float
    sup_u: float
    sup_grad_v2: float
    inf_R_minus_tr_theta: float
    residual_trace: float
    residual_v: float
    residual_twisted: float
    sup_R_minus_tr_theta: float = float("nan")
    sup_lap_v: float = float("nan")
    inf_H: float = float("nan")
    min_density_ratio: float = float("nan")
    areas: tuple[float, ...] = ()
    aux: dict = field(default_factory=dict)

    def row(self) -> list[float]:
        return [getattr(self, c) for c in CSV_COLUMNS]


def measure(problem: FlowProblem, record: SampleRecord, auxiliary: bool = False, trace_sign: float = 1.0) -> MonitorSample:
    st = record.state
    W = volume_weights(problem, st)
    R = curvature_parts(problem, st)
    th = trace_theta_parts(problem, st)
    v = potential_v(problem, st)
    lap = laplacian_parts(problem, st, v)
    rv = v_identity_parts(problem, record)
    rt = twisted_identity_parts(problem, record)
    return MonitorSample(
        t=st.t,
        T_minus_t=problem.T - st.t,
        sup_R=sup_sum(R),
        inf_lap_v=inf_sum(lap),
        sup_abs_v=sup_abs_sum(v),
        sup_u=sup_sum(trace_reference_T(problem, st)),
        sup_grad_v2=sup_sum(gradient_sq_parts(problem, st, v)),
        inf_R_minus_tr_theta=inf_sum([r - a for r, a in zip(R, th)]),
        residual_trace=weighted_rms(trace_identity_parts(problem, st, trace_sign), W),
        residual_v=float("nan") if rv is None else weighted_rms(rv, W),
        residual_twisted=float("nan") if rt is None else weighted_rms(rt, W),
        sup_R_minus_tr_theta=sup_sum([r - a for r, a in zip(R, th)]),
        sup_lap_v=sup_sum(lap),
        inf_H=inf_sum(quantity_H(problem, st)),
        min_density_ratio=st.min_density_ratio,
        areas=tuple(f.area(q) for f, q in zip(problem.factors, st.q)),
        aux=auxiliary_quantities(problem, st) if auxiliary else {},
    )


def monitor_trajectory(traj: Trajectory, auxiliary: bool = False, trace_sign: float = 1.0) -> list[MonitorSample]:
    return [measure(traj.problem, r, auxiliary, trace_sign) for r in traj.samples]


# -- blow-up fits --------------------------------------------------------------
@dataclass(frozen=True)
class BlowupFit:
    exponent: float
    constant: float
    window: tuple[float, float]
    residual: float
    n_samples: int


def fit_blowup_exponent(
    t: Sequence[float],
    sup_R: Sequence[float],
    T: float,
    window: tuple[float, float] = (1e-3, 0.1),
    min_samples: int = 8,
) -> BlowupFit:
    """Least-squares fit of ``log sup R = log C - p log(T - t)`` on a window of ``T - t``.

    ``constant`` is ``max (T - t)^p sup R`` over the window samples.
    """
    t = np.asarray(t, dtype=float)
    R = np.asarray(sup_R, dtype=float)
    tau = T - t
    lo, hi = window
    sel = (tau >= lo * (1 - 1e-9)) & (tau <= hi * (1 + 1e-9)) & (R > 0) & np.isfinite(R)
    n = int(sel.sum())
    if n < min_samples:
        raise DegenerateFitError(f"only {n} samples in the window, need {min_samples}")
    x, y = np.log(tau[sel]), np.log(R[sel])
    if np.ptp(x) == 0:
        raise DegenerateFitError("window samples share one time")
    A = np.column_stack([np.ones_like(x), -x])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    res = float(np.sqrt(np.mean((A @ coef - y) ** 2)))
    p = float(coef[1])
    C = float(np.max(tau[sel] ** p * R[sel]))
    return BlowupFit(p, C, (float(lo), float(hi)), res, n)


def estimate_singular_time(t: Sequence[float], area: Sequence[float], window: int = 6) -> float:
    """Extrapolated zero of a measured area series (quadratic fit to the last samples)."""
    t = np.asarray(t, dtype=float)[-window:]
    y = np.asarray(area, dtype=float)[-window:]
    if t.size < 3:
        raise DegenerateFitError("need at least three samples")
    c = np.polyfit(t - t[-1], y, 2)
    roots = np.roots(c)
    roots = roots[np.isreal(roots)].real
    roots = roots[roots > -1e-12]
    if roots.size == 0:
        raise DegenerateFitError("area does not extrapolate to zero")
    return float(t[-1] + roots.min())


# -- ladder comparisons and bound reports --------------------------------------
def ladder_stable(a: float, b: float, tol: float = LADDER_TOL, floor: float = LADDER_FLOOR) -> tuple[bool, float]:
    """Relative variation ``|a - b| / max(|a|, |b|, floor)`` and whether it is below ``tol``."""
    if not (np.isfinite(a) and np.isfinite(b)):
        return False, float("inf")
    rel = abs(a - b) / max(abs(a), abs(b), floor)
    return rel < tol, rel


ESTIMATES = {
    # name: (column, reduction over time)
    "sup_abs_v": ("sup_abs_v", "max"),
    "sup_u": ("sup_u", "max"),
    "sup_grad_v2": ("sup_grad_v2", "max"),
    "inf_R_minus_tr_theta": ("inf_R_minus_tr_theta", "min"),
    "inf_scaled_lap_v": ("scaled_lap_v", "min"),
}


def estimate_values(samples: Sequence[MonitorSample], t_max: float | None = None) -> dict[str, float]:
    """Time-extremal estimate quantities over the samples with ``t <= t_max``."""
    sel = [s for s in samples if t_max is None or s.t <= t_max]
    out = {}
    for name, (col, red) in ESTIMATES.items():
        if col == "scaled_lap_v":
            vals = [s.T_minus_t * s.inf_lap_v for s in sel]
        else:
            vals = [getattr(s, col) for s in sel]
        out[name] = float(max(vals) if red == "max" else min(vals))
    # R - tr theta is the quantity bounded uniformly in eps; it tends to R off D
    out["sup_scaled_R"] = float(max(s.T_minus_t**2 * s.sup_R_minus_tr_theta for s in sel))
    return out


@dataclass
class BoundResult:
    name: str
    status: str
    detail: dict

    @property
    def passed(self) -> bool:
        return self.status == "PASS"


@dataclass
class BoundReport:
    scenario: str
    eps_ladder: tuple[float, ...]
    results: list[BoundResult]
    schema_version: str = SCHEMA_VERSION

    @property
    def passed(self) -> bool:
        return all(r.status != "FAIL" for r in self.results)

    @property
    def partial(self) -> bool:
        return any(r.status == "PARTIAL" for r in self.results)

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "scenario": self.scenario,
            "eps_ladder": list(self.eps_ladder),
            "status": "PASS" if self.passed else "FAIL",
            "partial": self.partial,
            "bounds": [asdict(r) for r in self.results],
        }


def check_bounds(
    scenario: str,
    runs: dict[float, list[MonitorSample]],
    T: float,
    tol: float = LADDER_TOL,
    fit_window: tuple[float, float] = (1e-3, 0.1),
    n_factors: int = 1,
    truncated: dict[float, bool] | None = None,
) -> BoundReport:
    """Ladder stability of each estimate between the two smallest eps, plus sign checks.

    A bound that cannot be evaluated because a trajectory stopped early is
    reported as ``PARTIAL`` rather than failed.
    """
    ladder = tuple(sorted(runs, reverse=True))
    if len(ladder) < 2:
        raise ValueError("need runs for at least two eps values")
    truncated = truncated or {}
    a, b = ladder[-2], ladder[-1]
    va, vb = estimate_values(runs[a]), estimate_values(runs[b])
    results = []
    for name in list(ESTIMATES) + ["sup_scaled_R"]:
        ok, rel = ladder_stable(va[name], vb[name], tol)
        results.append(
            BoundResult(name, "PASS" if ok else "FAIL", {"eps": [a, b], "values": [va[name], vb[name]], "relative_change": rel})
        )
    s = runs[b]
    try:
        fit = fit_blowup_exponent([x.t for x in s], [x.sup_R_minus_tr_theta for x in s], T, fit_window)
        ok = fit.exponent <= 2.0
        results.append(BoundResult("blowup_exponent_at_most_2", "PASS" if ok else "FAIL", asdict(fit)))
    except DegenerateFitError as exc:
        # a trajectory that never entered the window cannot be judged
        short = truncated.get(b, False) or s[-1].T_minus_t > fit_window[0]
        status = "PARTIAL" if short else "FAIL"
        results.append(BoundResult("blowup_exponent_at_most_2", status, {"error": str(exc)}))
    for eps in ladder:
        x = runs[eps]
        lower = -min(m.inf_R_minus_tr_theta for m in x)
        checks = {
            "u_nonnegative": min(m.sup_u for m in x) >= 0.0,
            "H_nonnegative": min(m.inf_H for m in x) >= -1e-8,
            "lap_v_upper": max(m.sup_lap_v for m in x) <= n_factors + max(lower, 0.0) + 1e-8,
            "R_minus_tr_theta_finite": all(np.isfinite(m.inf_R_minus_tr_theta) for m in x),
        }
        for name, ok in checks.items():
            results.append(BoundResult(f"{name}[eps={eps:g}]", "PASS" if ok else "FAIL", {}))
    worst = max(x.residual_trace for x in s)
    results.append(
        BoundResult("trace_identity", "PASS" if worst < 1e-3 else "FAIL", {"max_residual": worst})
    )
    return BoundReport(scenario, ladder, results)
