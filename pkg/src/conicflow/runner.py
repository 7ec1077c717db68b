"""Run orchestration over the eps ladder and report assembly."""

from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .config import ResolvedRun, RunConfig, resolve
from .errors import DegenerateFitError
from .monitors import (
    MonitorSample,
    check_bounds,
    estimate_singular_time,
    estimate_values,
    fit_blowup_exponent,
    monitor_trajectory,
)
from .reporting import config_hash, write_checkpoint, write_csv, write_json
from .solver import make_problem, run

logger = logging.getLogger(__name__)


@dataclass
class EpsResult:
    eps: float
    samples: list[MonitorSample]
    truncated: bool
    reason: str
    steps: int
    t_final: float
    phi: list[np.ndarray]
    seconds: float


def run_eps(resolved: ResolvedRun, eps: float) -> EpsResult:
    cfg = resolved.config
    t0 = time.perf_counter()
    problem = make_problem(resolved.scenario, resolved.schedule, eps)
    traj = run(problem, resolved.policy, scheme=cfg.scheme, c_cfl=cfg.c_cfl)
    samples = monitor_trajectory(traj, auxiliary=cfg.auxiliary)
    last = traj.samples[-1].state
    return EpsResult(
        eps,
        samples,
        traj.truncated,
        traj.reason,
        traj.steps,
        last.t,
        [np.array(p) for p in last.phi],
        time.perf_counter() - t0,
    )


def _worker(config: dict, eps: float) -> EpsResult:
    return run_eps(resolve(RunConfig.from_mapping(config)), eps)


def run_ladder(resolved: ResolvedRun) -> list[EpsResult]:
    """All eps runs, in ladder order; parallel when ``workers > 1`` (same results)."""
    ladder = resolved.eps_ladder
    if resolved.config.workers > 1 and len(ladder) > 1:
        cfg = resolved.config.to_dict()
        with ProcessPoolExecutor(max_workers=resolved.config.workers) as pool:
            return list(pool.map(_worker, [cfg] * len(ladder), ladder))
    return [run_eps(resolved, e) for e in ladder]


def singular_time(resolved: ResolvedRun, result: EpsResult) -> float | None:
    i = resolved.schedule.collapsing
    try:
        return estimate_singular_time([s.t for s in result.samples], [s.areas[i] for s in result.samples])
    except DegenerateFitError:
        return None


def build_report(resolved: ResolvedRun, results: list[EpsResult]) -> dict:
    sched = resolved.schedule
    runs = {r.eps: r.samples for r in results}
    bounds = check_bounds(
        resolved.scenario.name,
        runs,
        sched.T,
        n_factors=resolved.scenario.n,
        truncated={r.eps: r.truncated for r in results},
    )
    per_eps = []
    for r in results:
        entry = {
            "eps": r.eps,
            "truncated": r.truncated,
            "reason": r.reason,
            "steps": r.steps,
            "t_final": r.t_final,
            "seconds": r.seconds,
            "T_measured": singular_time(resolved, r),
            "estimates": estimate_values(r.samples),
        }
        try:
            fit = fit_blowup_exponent([s.t for s in r.samples], [s.sup_R_minus_tr_theta for s in r.samples], sched.T)
            entry["blowup_fit"] = asdict(fit)
        except DegenerateFitError as exc:
            entry["blowup_fit"] = {"error": str(exc)}
        per_eps.append(entry)
    report = bounds.to_dict()
    report.update(
        {
            "config": resolved.config.to_dict(),
            "k": resolved.scenario.k,
            "k_max": resolved.k_max,
            "beta": resolved.scenario.beta,
            "N": resolved.scenario.factors[0].N,
            "schedule": sched.summary(),
            "runs": per_eps,
        }
    )
    return report


def execute(cfg: RunConfig) -> tuple[dict, Path]:
    """Resolve, run every eps, write CSVs, checkpoints and the JSON report."""
    resolved = resolve(cfg)
    out = cfg.output_path() / resolved.scenario.name
    results = run_ladder(resolved)
    h = config_hash(cfg.to_dict())
    for r in results:
        write_csv(out / f"eps_{r.eps:g}.csv", r.samples)
        if cfg.checkpoints:
            write_checkpoint(
                out / f"eps_{r.eps:g}_final",
                r.phi,
                r.t_final,
                r.eps,
                [f.N for f in resolved.scenario.factors],
                h,
            )
    report = build_report(resolved, results)
    write_json(out / "report.json", report)
    return report, out
