from __future__ import annotations

import math

import pytest
from hypothesis import HealthCheck, settings

from conicflow.config import RunConfig, resolve

settings.register_profile(
    "default",
    max_examples=40,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

LN2 = math.log(2.0)


@pytest.fixture(scope="session")
def resolved_small():
    """Small-grid resolved runs for the three scenarios."""
    return {name: resolve(RunConfig(scenario=name, N=128)) for name in ("round-collapse", "cone-p1", "product-contraction")}


# criterion number -> list of (label, passed, detail), filled by the acceptance suite
CRITERIA: dict[int, list[tuple[str, bool, str]]] = {}


def record_criterion(number: int, label: str, passed: bool, detail: str) -> None:
    CRITERIA.setdefault(number, []).append((label, bool(passed), detail))
    print(f"criterion {number} [{label}]: {'PASS' if passed else 'FAIL'} {detail}")


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        entries = CRITERIA[number]
        ok = all(p for _, p, _ in entries)
        failing = [f"{label}: {detail}" for label, p, detail in entries if not p]
        tail = f" ({'; '.join(failing)})" if failing else f" ({len(entries)} checks)"
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}{tail}")
