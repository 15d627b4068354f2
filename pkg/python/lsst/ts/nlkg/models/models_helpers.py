import math
from typing import Sequence

import numpy as np
from lsst.ts.nlkg.errors import ConfigError
from lsst.ts.nlkg.models.models import GridSpec, NonlinearitySpec, SolitonSpec

__all__ = [
    "velocity_order",
    "instability_rate",
    "instability_rates",
    "separation_sigma",
    "min_velocity_gap",
    "default_delta",
    "default_decay_gamma",
    "wrap_offset",
    "pure_power_lambda0",
]


def velocity_order(specs: Sequence[SolitonSpec]) -> list[int]:
    """Return the permutation eta listing soliton indices by increasing
    velocity.
    """
    return sorted(range(len(specs)), key=lambda i: specs[i].beta)


def instability_rate(lambda0: float, spec: SolitonSpec) -> float:
    return math.sqrt(lambda0) / spec.gamma


def instability_rates(lambda0: float, specs: Sequence[SolitonSpec]) -> list[float]:
    return [instability_rate(lambda0, spec) for spec in specs]


def min_velocity_gap(specs: Sequence[SolitonSpec]) -> float | None:
    if len(specs) < 2:
        return None
    betas = sorted(spec.beta for spec in specs)
    return min(b - a for a, b in zip(betas[:-1], betas[1:]))


def separation_sigma(specs: Sequence[SolitonSpec], lambda0: float) -> float:
    """Separation constant sigma = min{e_1, gamma_N * min gap} / 16.

    Parameters
    ----------
    specs : `Sequence` [`SolitonSpec`]
        Solitons ordered with decreasing speed ``|beta|``.
    lambda0 : `float`
        Magnitude of the negative eigenvalue of L.

    Returns
    -------
    sigma : `float`
    """
    if not specs:
        raise ConfigError("At least one soliton is needed")
    e_first = instability_rate(lambda0, specs[0])
    gap = min_velocity_gap(specs)
    if gap is None:
        return e_first / 16.0
    if gap <= 0.0:
        raise ConfigError("Velocities must be distinct")
    return min(e_first, specs[-1].gamma * gap) / 16.0


def default_delta(specs: Sequence[SolitonSpec]) -> float:
    gap = min_velocity_gap(specs)
    if gap is None:
        return 0.1
    betas = sorted(spec.beta for spec in specs)
    max_gap = max(b - a for a, b in zip(betas[:-1], betas[1:]))
    return min(0.1, gap / (4.0 * max_gap))


def default_decay_gamma(
    specs: Sequence[SolitonSpec], sigma: float, delta: float
) -> float:
    """Half of the admissible bound sigma * delta * min gap."""
    gap = min_velocity_gap(specs)
    return 0.5 * sigma * delta * (gap if gap is not None else 1.0)


def wrap_offset(offset: np.ndarray | float, grid: GridSpec) -> np.ndarray:
    """Map offsets to the periodic representative in [-L, L)."""
    length = grid.length
    return np.mod(np.asarray(offset, dtype=float) + grid.half_width, length) - (
        grid.half_width
    )


def pure_power_lambda0(nl: NonlinearitySpec) -> float:
    """Closed form magnitude of the negative eigenvalue of L for the
    pure power, (p - 1)(p + 3)/4, independent of the coefficient.
    """
    if not nl.is_pure_power:
        raise ConfigError("Closed form lambda0 is only known for the pure power")
    return (nl.p - 1.0) * (nl.p + 3.0) / 4.0
