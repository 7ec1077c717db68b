from __future__ import annotations

import dataclasses
import math

import numpy as np
import pytest

from conicflow.config import RunConfig, resolve
from conicflow.errors import ConfigurationError, SingularityReached
from conicflow.geometry import scalar_curvature
from conicflow.monitors import twisted_identity_parts, v_identity_parts, volume_weights, weighted_rms
from conicflow.solver import (
    DT_FLOOR,
    EllipticityError,
    StopPolicy,
    conditioning,
    initial_state,
    make_problem,
    make_state,
    metric_ratios,
    rhs,
    run,
    sample_times,
    stable_rk2_dt,
    step,
)


def _problem(name, N=128, eps=0.05, **kw):
    r = resolve(RunConfig(scenario=name, N=N))
    return make_problem(r.scenario, r.schedule, eps, **kw)


@pytest.fixture(scope="module")
def product():
    return _problem("product-contraction")


def test_initial_state(product):
    st = initial_state(product)
    assert st.t == 0.0
    assert all(np.all(p == 0) for p in st.phi)
    for i, f in enumerate(product.factors):
        np.testing.assert_allclose(st.p[i], product.reference(0.0, i))
    np.testing.assert_allclose(np.concatenate(st.phi_dot), np.concatenate(rhs(product, 0.0, st.phi)))


def test_negative_eps_rejected():
    r = resolve(RunConfig(scenario="cone-p1", N=64))
    with pytest.raises(ConfigurationError):
        make_problem(r.scenario, r.schedule, 0.0)


def test_zero_step_is_identity(product):
    st = initial_state(product)
    assert step(product, st, 0.0) is st
    with pytest.raises(ValueError):
        step(product, st, -1e-3)


@pytest.mark.parametrize("scheme", ["ros2", "rk2"])
def test_frozen_stationary_relaxation(product, scheme):
    # frozen coefficients with log P shifted so that phi = c (1 - exp(-t)) solves the flow
    c = (0.3, -0.2)
    log_P = tuple(
        np.log(product.reference(0.0, i)) + product.cone_term[i] - c[i] for i in range(2)
    )
    pr = dataclasses.replace(product, frozen_time=0.0, log_P=log_P)
    st = initial_state(pr)
    dt = 0.002 if scheme == "ros2" else stable_rk2_dt(pr, st)
    while st.t < 0.5 - 1e-12:
        st = step(pr, st, min(dt, 0.5 - st.t), scheme)
    for i in range(2):
        np.testing.assert_allclose(st.phi[i], c[i] * (1 - math.exp(-0.5)), atol=1e-6)


def _mms(base):
    fs = base.factors

    def exact(t):
        return [0.3 * math.sin(2 * t) * np.cos(math.pi * f.w) for f in fs]

    def exact_dt(t):
        return [0.6 * math.cos(2 * t) * np.cos(math.pi * f.w) for f in fs]

    def src(t):
        return [d - x for d, x in zip(exact_dt(t), rhs(base, t, exact(t)))]

    def src_dt(t, h=1e-5):
        return [(a - b) / (2 * h) for a, b in zip(src(t + h), src(t - h))]

    return dataclasses.replace(base, source=src, source_dt=src_dt), exact


@pytest.mark.parametrize("scheme", ["ros2", "rk2"])
def test_local_error_is_third_order(scheme):
    pr, exact = _mms(_problem("product-contraction", N=256))
    errs = []
    for dt in (0.01, 0.005, 0.0025):
        new = step(pr, make_state(pr, 0.2, exact(0.2)), dt, scheme)
        errs.append(max(float(np.max(np.abs(a - b))) for a, b in zip(new.phi, exact(0.2 + dt))))
    ratios = [errs[0] / errs[1], errs[1] / errs[2]]
    assert all(6.0 < r < 10.0 for r in ratios), ratios


@pytest.mark.parametrize("name", ["round-collapse", "cone-p1", "product-contraction"])
def test_discrete_area_is_conserved(name):
    pr = _problem(name)
    st = initial_state(pr)
    for _ in range(5):
        st = step(pr, st, 0.01)
        for i, f in enumerate(pr.factors):
            ref = f.area(f.g * pr.reference(st.t, i))
            assert f.area(st.q[i]) == pytest.approx(ref, rel=1e-12)


def test_round_area_tracks_class():
    pr = _problem("round-collapse", N=256)
    tr = run(pr, StopPolicy(0.9))
    f = pr.factors[0]
    for r in tr.samples:
        assert f.area(r.state.q[0]) == pytest.approx(pr.schedule.area(r.state.t, 0), rel=1e-10)


def test_round_stays_round():
    pr = _problem("round-collapse")
    tr = run(pr, StopPolicy(0.5))
    R = scalar_curvature(pr.factors[0], tr.samples[-1].state.q[0])
    assert np.std(R) < 1e-6 * np.mean(R)
    R0 = scalar_curvature(pr.factors[0], tr.samples[0].state.q[0])
    # constant curvature times area is fixed by Gauss-Bonnet
    ratio = pr.schedule.area(0.0, 0) / pr.schedule.area(tr.samples[-1].state.t, 0)
    assert np.mean(R) == pytest.approx(np.mean(R0) * ratio, rel=1e-8)


def test_singularity_reached_carries_state(product):
    st = make_state(product, product.T * (1 - 1e-13), initial_state(product).phi)
    with pytest.raises(SingularityReached) as info:
        step(product, st, 1e-3)
    assert info.value.state is st


def test_ellipticity_violation_detected(product):
    bad = [np.zeros(f.N) for f in product.factors]
    bad[0] = -100.0 * product.factors[0].w ** 2
    with pytest.raises(EllipticityError):
        metric_ratios(product, 0.0, bad)


def test_emitted_states_are_elliptic():
    for name in ("cone-p1", "product-contraction"):
        tr = run(_problem(name))
        assert all(r.state.min_density_ratio > 0 for r in tr.samples)


def test_sample_times_ladder():
    T = math.log(2)
    ts = sample_times(T, 0.999 * T)
    assert ts[0] == 0.0 and ts[-1] == pytest.approx(0.999 * T)
    assert np.all(np.diff(ts) > 0)
    assert np.any(np.isclose(ts, 0.5 * T))
    late = ts[ts > 0.905 * T]
    gaps = T - late[:-1]
    assert len(late) >= 10
    np.testing.assert_allclose(gaps[1:] / gaps[:-1], 2**-0.5, rtol=1e-9)


def test_total_collapse_stops_on_conditioning():
    pr = _problem("cone-p1", N=256)
    tr = run(pr)
    assert tr.truncated and tr.reason == "conditioning threshold"
    assert 0.8 * pr.T < tr.samples[-1].state.t < pr.T
    assert conditioning(pr, tr.samples[-1].state) > 100
    assert conditioning(pr, tr.samples[0].state) < 10


def test_product_runs_to_stop_time(product):
    tr = run(product)
    assert not tr.truncated
    assert tr.samples[-1].state.t == pytest.approx(0.999 * product.T)
    assert conditioning(product, tr.samples[-1].state) < 10


def test_stop_policy_validation():
    for kw in ({"fraction": 1.0}, {"min_density": -1.0}, {"max_conditioning": 0.5}):
        with pytest.raises(ConfigurationError):
            StopPolicy(**kw)


def test_min_density_stop():
    pr = _problem("round-collapse", N=64)
    tr = run(pr, StopPolicy(min_density=0.5, max_conditioning=None))
    assert tr.truncated and tr.reason == "min-density threshold"
    assert tr.samples[-1].state.min_density_ratio < 0.5


def test_probes_are_short_steps(product):
    tr = run(product, StopPolicy(0.5))
    for r in tr.samples:
        assert len(r.probes) == 2
        assert r.probes[1].t - r.state.t == pytest.approx(2 * r.probe_dt)
        assert r.probe_dt > DT_FLOOR


@pytest.mark.parametrize("name", ["cone-p1", "product-contraction"])
def test_time_derivative_identities_converge(name):
    tw, vr = [], []
    for N in (128, 256):
        pr = _problem(name, N=N)
        rec = run(pr, StopPolicy(0.5)).samples[-1]
        w = volume_weights(pr, rec.state)
        tw.append(weighted_rms(twisted_identity_parts(pr, rec), w))
        vr.append(weighted_rms(v_identity_parts(pr, rec), w))
    assert 3.5 < tw[0] / tw[1] < 4.5
    assert 3.5 < vr[0] / vr[1] < 4.5


def test_eps_gap_shrinks():
    phis = []
    for eps in (0.1, 0.05, 0.025, 0.0125):
        pr = _problem("product-contraction", eps=eps)
        rec = run(pr, StopPolicy(0.5)).samples[-1]
        phis.append(rec.state.phi)
    mask = pr.factors[0].w >= 0.2
    gaps = [float(np.max(np.abs(a[0] - b[0])[mask])) for a, b in zip(phis, phis[1:])]
    assert gaps[0] > gaps[1] > gaps[2] > 0
