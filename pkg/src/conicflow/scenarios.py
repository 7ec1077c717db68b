"""Registry of the built-in model geometries."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ConfigurationError
from .geometry import Scenario, build_factor

DEFAULT_LADDER = (0.1, 0.05, 0.025, 0.0125)


@dataclass(frozen=True)
class ScenarioSpec:
    """Physics defaults of a named scenario (areas in units of pi)."""

    name: str
    description: str
    cone: tuple[bool, ...]
    areas_over_pi: tuple[float, ...]
    contraction: int | None
    beta: float = 0.5
    k: float | str = "auto"
    eps_ladder: tuple[float, ...] = DEFAULT_LADDER

    @property
    def has_cone(self) -> bool:
        return any(self.cone)

    def build(self, N: int, beta: float | None = None, k: float = 0.0) -> Scenario:
        factors = tuple(build_factor(N, has_cone=c) for c in self.cone)
        areas = tuple(a * math.pi for a in self.areas_over_pi)
        return Scenario(
            self.name,
            factors,
            areas,
            self.beta if beta is None else beta,
            k if self.has_cone else 0.0,
            self.contraction,
        )


SCENARIOS: dict[str, ScenarioSpec] = {
    s.name: s
    for s in (
        ScenarioSpec(
            "round-collapse",
            "round P^1 of area 4 pi, no divisor; collapses to a point at T = ln 2",
            (False,),
            (4.0,),
            None,
        ),
        ScenarioSpec(
            "cone-p1",
            "P^1 of area 4 pi with one cone point of angle 2 pi beta; total collapse",
            (True,),
            (4.0,),
            None,
        ),
        ScenarioSpec(
            "product-contraction",
            "P^1 x P^1, cone point on the base (area 20 pi), fibre of area 4 pi contracted at T = ln 2",
            (True, False),
            (20.0, 4.0),
            1,
        ),
    )
}


def get_scenario(name: str) -> ScenarioSpec:
    try:
        return SCENARIOS[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}"
        ) from None
