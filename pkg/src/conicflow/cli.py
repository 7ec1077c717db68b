"""Command line entry point: ``conicflow run | check | fit | list-scenarios``.

Exit codes: 0 success, 1 invariant or bound failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from .checks import CHECKS, MUTATIONS, run_checks
from .config import RunConfig
from .errors import ConicFlowError, ConfigurationError, DegenerateFitError
from .monitors import fit_blowup_exponent
from .reporting import read_csv
from .scenarios import SCENARIOS

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _ladder(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("expected a comma separated list of numbers") from None


def _k(text: str):
    return text if text == "auto" else float(text)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="conicflow", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="integrate a scenario over its eps ladder")
    r.add_argument("scenario", nargs="?", help="scenario name (overrides the config file)")
    r.add_argument("--config", help="JSON config file")
    r.add_argument("--N", type=int)
    r.add_argument("--beta", type=float)
    r.add_argument("--k", type=_k, help="number or 'auto'")
    r.add_argument("--eps-ladder", type=_ladder)
    r.add_argument("--t-stop", type=float, help="stop at this fraction of T")
    r.add_argument("--c-cfl", type=float)
    r.add_argument("--scheme", choices=["ros2", "rk2"])
    r.add_argument("--output-dir")
    r.add_argument("--workers", type=int)
    r.add_argument("--checkpoints", action="store_true", default=None)
    r.add_argument("--auxiliary", action="store_true", default=None, help="also evaluate the auxiliary quotients")

    c = sub.add_parser("check", help="run the invariant suite on small grids")
    c.add_argument("--only", action="append", choices=sorted(CHECKS), help="run only this check (repeatable)")
    c.add_argument("--mutate", choices=MUTATIONS, help="inject a deliberate error to prove the suite can fail")

    f = sub.add_parser("fit", help="fit the blow-up exponent from a monitor CSV")
    f.add_argument("csv")
    f.add_argument("--window", type=float, nargs=2, default=(1e-3, 0.1), metavar=("LO", "HI"), help="range of T - t")
    f.add_argument("--T", type=float, help="singular time (default: t + T_minus_t from the CSV)")
    f.add_argument("--column", help="curvature column (default sup_R_minus_tr_theta when present, else sup_R)")
    f.add_argument("--min-samples", type=int, default=8)

    sub.add_parser("list-scenarios", help="show the built-in scenarios")
    return p


def _config_from_args(a) -> RunConfig:
    cfg = RunConfig.from_file(a.config) if a.config else RunConfig()
    overrides = {
        "scenario": a.scenario,
        "N": a.N,
        "beta": a.beta,
        "k": a.k,
        "eps_ladder": a.eps_ladder,
        "t_stop": a.t_stop,
        "c_cfl": a.c_cfl,
        "scheme": a.scheme,
        "output_dir": a.output_dir,
        "workers": a.workers,
        "checkpoints": a.checkpoints,
        "auxiliary": a.auxiliary,
    }
    for key, val in overrides.items():
        if val is not None:
            setattr(cfg, key, val)
    return cfg


def cmd_run(a) -> int:
    from .runner import execute

    report, out = execute(_config_from_args(a))
    sched = report["schedule"]
    print(f"scenario {report['scenario']}: T = {sched['T']:.10f}, k = {report['k']:.6g} (k_max {report['k_max']:.6g})")
    for r in report["runs"]:
        fit = r["blowup_fit"]
        p = f"p = {fit['exponent']:.4f}" if "exponent" in fit else f"fit: {fit['error']}"
        tm = r["T_measured"]
        tm = f"{tm:.6f}" if tm is not None else "n/a"
        flag = f" truncated ({r['reason']})" if r["truncated"] else ""
        print(f"  eps {r['eps']:<8g} T_measured {tm}  {p}  t_final {r['t_final']:.6f}{flag}")
    for b in report["bounds"]:
        if b["status"] != "PASS":
            print(f"  {b['status']}: {b['name']} {b['detail']}")
    print(f"{report['status']}{' (partial)' if report['partial'] else ''}; artifacts in {out}")
    return EXIT_OK if report["status"] == "PASS" else EXIT_FAIL


def cmd_check(a) -> int:
    results = run_checks(a.only, a.mutate)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<18} {r.detail}  [{r.seconds:.2f}s]")
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"failing: {', '.join(failed)}")
        return EXIT_FAIL
    return EXIT_OK


def cmd_fit(a) -> int:
    cols = read_csv(a.csv)
    col = a.column or ("sup_R_minus_tr_theta" if "sup_R_minus_tr_theta" in cols else "sup_R")
    if col not in cols:
        raise ConfigurationError(f"column {col!r} not in {a.csv}")
    if a.T is not None:
        T = a.T
    elif "T_minus_t" in cols:
        T = float(np.median(cols["t"] + cols["T_minus_t"]))
    else:
        raise ConfigurationError("CSV has no T_minus_t column; pass --T")
    fit = fit_blowup_exponent(cols["t"], cols[col], T, tuple(a.window), a.min_samples)
    print(f"p = {fit.exponent:.6f}")
    print(f"C = {fit.constant:.6g}")
    print(f"window = [{fit.window[0]:g}, {fit.window[1]:g}] ({fit.n_samples} samples, column {col})")
    print(f"residual = {fit.residual:.3e}")
    return EXIT_OK


def cmd_list(a) -> int:
    for s in SCENARIOS.values():
        print(f"{s.name:<22} {s.description}")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "check": cmd_check, "fit": cmd_fit, "list-scenarios": cmd_list}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    a = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[a.command](a)
    except (ConfigurationError, DegenerateFitError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConicFlowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
