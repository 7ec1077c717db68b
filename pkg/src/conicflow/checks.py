"""Self-check suite behind ``conicflow check``: small grids, fast, named checks."""

from __future__ import annotations

import dataclasses
import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .geometry import Scenario, TWO_PI, build_factor, fs_density, scalar_curvature
from .monitors import trace_identity_parts, volume_weights, weighted_rms
from .regularization import (
    chi,
    chi_du,
    ddbar_rho_density,
    k_max,
    theta_eps_density,
    theta_mass,
)
from .schedule import build_schedule, solve_background_volume, volume_residual
from .solver import make_problem, make_state, rhs, run, step, StopPolicy

CHI_ORACLE = 0.7340603629787582  # chi(1, 0.01, 1/2), closed form


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0


def _cone_scenario(N: int, areas=(4 * math.pi,), contraction=None) -> Scenario:
    cone = (True,) + (False,) * (len(areas) - 1)
    factors = tuple(build_factor(N, has_cone=c) for c in cone)
    probe = Scenario("probe", factors, areas, 0.5, 0.0, contraction)
    k = 0.5 * k_max(probe, build_schedule(probe))
    return dataclasses.replace(probe, k=k)


def check_chi() -> tuple[bool, str]:
    rng = np.random.default_rng(7)
    bad = []
    for _ in range(200):
        u, e, b = rng.uniform(1e-4, 1.0), rng.uniform(1e-3, 0.5), rng.uniform(0.05, 0.95)
        c = chi(u, e * e, b)
        if not -1e-15 <= c <= u**b * (1 + 1e-12):
            bad.append("bounds")
        if chi(u * 1.1, e * e, b) < c or chi(u, e * e * 1.2, b) > c:
            bad.append("monotone")
        h = 1e-5 * u
        fd = (chi(u + h, e * e, b) - chi(u - h, e * e, b)) / (2 * h)
        if abs(fd - float(chi_du(u, e * e, b))) > 1e-6 * abs(fd):
            bad.append("derivative")
    # chi(u, a) = u^beta - O(a^beta log(1/a)) as a -> 0
    gaps = [0.3**0.4 - chi(0.3, a, 0.4) for a in (1e-8, 1e-12, 1e-16)]
    if not (gaps[0] > gaps[1] > gaps[2] >= 0 and gaps[2] < 1e-5):
        bad.append("eps limit")
    err = abs(chi(1.0, 0.01, 0.5) / CHI_ORACLE - 1)
    if err > 1e-10:
        bad.append("oracle")
    return not bad, f"oracle rel err {err:.1e}" + (f"; failed: {sorted(set(bad))}" if bad else "")


def check_ddbar_rho() -> tuple[bool, str]:
    errs = []
    for N in (128, 256):
        f = build_factor(N, has_cone=True)
        d = ddbar_rho_density(f, 0.1, 0.5, "stencil") - ddbar_rho_density(f, 0.1, 0.5, "closed")
        errs.append(float(np.max(np.abs(d / f.g))))
    ratio = errs[0] / errs[1]
    return 3.5 < ratio < 4.5, f"max ratio error {errs[1]:.2e}, refinement ratio {ratio:.3f}"


def check_theta_mass() -> tuple[bool, str]:
    worst = max(abs(theta_mass(e, 0.5) - TWO_PI * 0.5) for e in (0.1, 0.0125, 1e-3))
    grid = []
    for N in (128, 256):
        f = build_factor(N, has_cone=True)
        grid.append(abs(TWO_PI * f.integrate(theta_eps_density(f, 0.05, 0.5)) - TWO_PI * 0.5))
    ratio = grid[0] / grid[1]
    ok = worst < 1e-10 and 3.5 < ratio < 4.5
    return ok, f"quadrature error {worst:.1e}; grid sum error {grid[1]:.1e}, ratio {ratio:.3f}"


def check_curvature() -> tuple[bool, str]:
    f = build_factor(64)
    e0 = float(np.max(np.abs(scalar_curvature(f, fs_density(f.w)) - 2.0)))
    errs = []
    lam2 = 3.0
    for N in (64, 128):
        f = build_factor(N)
        w = 1.0 / (1.0 + np.exp(-(f.s + math.log(lam2))))
        errs.append(float(np.std(scalar_curvature(f, w * (1 - w)))))
    ratio = errs[0] / errs[1]
    return e0 < 1e-8 and 3.5 < ratio < 4.5, f"FS error {e0:.1e}; dilated round spread ratio {ratio:.3f}"


def check_schedule() -> tuple[bool, str]:
    f = build_factor(32)
    s1 = Scenario("r", (f,), (4 * math.pi,), 0.5, 0.0)
    T1 = build_schedule(s1).T
    s2 = _cone_scenario(32, (20 * math.pi, 4 * math.pi), 1)
    sch = build_schedule(s2)
    a1 = sch.A_T[0] / math.pi
    ok = abs(T1 - math.log(2)) < 1e-14 and abs(sch.T - math.log(2)) < 1e-14 and abs(a1 - 8.5) < 1e-12
    return ok, f"T = {T1:.15f}, product A_1(T) = {a1:.12f} pi"


def check_background_volume() -> tuple[bool, str]:
    errs = []
    for N in (128, 256):
        s = _cone_scenario(N)
        sch = build_schedule(s)
        errs.append(max(volume_residual(sch, solve_background_volume(sch))))
    return errs[1] < 1e-8, f"max residual {errs[1]:.1e}"


def check_trace_identity(sign: float = 1.0) -> tuple[bool, str]:
    norms = []
    for N in (128, 256):
        s = _cone_scenario(N, (20 * math.pi, 4 * math.pi), 1)
        sch = build_schedule(s)
        pr = make_problem(s, sch, 0.05)
        tr = run(pr, StopPolicy(0.5))
        st = tr.samples[-1].state
        norms.append(weighted_rms(trace_identity_parts(pr, st, sign), volume_weights(pr, st)))
    ratio = norms[0] / norms[1]
    return norms[1] < 1e-3 and 3.5 < ratio < 4.5, f"residual {norms[1]:.2e}, refinement ratio {ratio:.3f}"


def check_solver_order() -> tuple[bool, str]:
    s = _cone_scenario(64, (20 * math.pi, 4 * math.pi), 1)
    base = make_problem(s, build_schedule(s), 0.05)
    fs = s.factors

    def exact(t):
        return [0.3 * math.sin(2 * t) * np.cos(math.pi * f.w) for f in fs]

    def exact_dt(t):
        return [0.6 * math.cos(2 * t) * np.cos(math.pi * f.w) for f in fs]

    def src(t):
        return [d - x for d, x in zip(exact_dt(t), rhs(base, t, exact(t)))]

    def src_dt(t, h=1e-5):
        return [(a - b) / (2 * h) for a, b in zip(src(t + h), src(t - h))]

    pr = dataclasses.replace(base, source=src, source_dt=src_dt)
    errs = []
    for dt in (0.01, 0.005):
        new = step(pr, make_state(pr, 0.2, exact(0.2)), dt)
        errs.append(max(float(np.max(np.abs(a - b))) for a, b in zip(new.phi, exact(0.2 + dt))))
    order = math.log2(errs[0] / errs[1])
    return order > 2.6, f"local error order {order:.2f}"


CHECKS: dict[str, Callable[[], tuple[bool, str]]] = {
    "chi": check_chi,
    "ddbar_rho": check_ddbar_rho,
    "theta_mass": check_theta_mass,
    "curvature": check_curvature,
    "schedule": check_schedule,
    "background_volume": check_background_volume,
    "trace_identity": check_trace_identity,
    "solver_order": check_solver_order,
}

MUTATIONS = ("trace-sign",)


def run_checks(only: list[str] | None = None, mutate: str | None = None) -> list[CheckResult]:
    names = list(CHECKS)
    if only:
        names = [n for n in names if any(n.startswith(o) for o in only)]
    out = []
    for name in names:
        fn = CHECKS[name]
        if name == "trace_identity" and mutate == "trace-sign":
            def fn():
                return check_trace_identity(-1.0)
        t0 = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as exc:  # a crash is a failed check, reported by name
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        out.append(CheckResult(name, bool(ok), detail, time.perf_counter() - t0))
    return out
