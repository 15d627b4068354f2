"""Projections on the eigen-directions of each soliton and the modulation
decompositions (single center shift and the full 2N coefficient solve).
"""

from dataclasses import field
from typing import Sequence

import numpy as np
from lsst.ts.nlkg.config import nlkg_logger
from lsst.ts.nlkg.discretization import fourier_shift
from lsst.ts.nlkg.errors import (
    ConfigError,
    ConvergenceError,
    GridMismatchError,
    IllConditionedError,
)
from lsst.ts.nlkg.models.models import AnalysisConfig, FieldState, GridSpec
from lsst.ts.nlkg.spectral import (
    BundleProfiles,
    Pair,
    SpectralBundle,
    as_pair,
    energy_norm,
    inner_product,
)
from pydantic import ConfigDict
from pydantic.dataclasses import dataclass

__all__ = [
    "bundle_profiles",
    "project_alphas",
    "modulate_center",
    "ModulationSample",
    "modulate_full",
    "ModulationTrack",
    "track_modulation",
    "projection_dynamics",
]

logger = nlkg_logger()

# Largest accepted condition number of the 2N x 2N modulation system.
MAX_CONDITION = 1.0e10


def _grid(bundles: Sequence[SpectralBundle]) -> GridSpec:
    grid = bundles[0].grid
    for bundle in bundles[1:]:
        if bundle.grid != grid:
            raise GridMismatchError("Bundles were assembled on different grids")
    return grid


def bundle_profiles(
    bundles: Sequence[SpectralBundle], t: float
) -> list[BundleProfiles]:
    return [bundle.profiles_at(t) for bundle in bundles]


def project_alphas(
    state: Pair,
    reference: Pair,
    bundles: Sequence[SpectralBundle],
    t: float,
    profiles: Sequence[BundleProfiles] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """alpha_{+-,k}(t) = <W, Z_{+-,k}(t)> with W = state - reference.

    Parameters
    ----------
    state, reference : `Pair`
        Sampled (2, n) pairs on the grid of the bundles.
    bundles : `Sequence` [`SpectralBundle`]
        One bundle per soliton.
    t : `float`
        Time at which the directions are translated.
    profiles : `Sequence` [`BundleProfiles`], optional
        Already translated profiles for ``t``.

    Returns
    -------
    alpha_plus, alpha_minus : `np.ndarray`
        One entry per soliton.
    """
    grid = _grid(bundles)
    deviation = as_pair(state) - as_pair(reference)
    if deviation.shape[1] != grid.n:
        raise GridMismatchError(
            f"State has {deviation.shape[1]} samples, bundles use n={grid.n}"
        )
    profiles = profiles if profiles is not None else bundle_profiles(bundles, t)
    alpha_plus = np.array(
        [inner_product(deviation, p.zplus, grid) for p in profiles]
    )
    alpha_minus = np.array(
        [inner_product(deviation, p.zminus, grid) for p in profiles]
    )
    return alpha_plus, alpha_minus


def modulate_center(
    state: Pair,
    bundle: SpectralBundle,
    t: float,
    cfg: AnalysisConfig | None = None,
) -> float:
    """Shift c such that <U - R(t, . - c), d_x R(t, . - c)> = 0.

    Newton's method on g(c) with
    g'(c) = ||d_x R_c||^2 - <U - R_c, d_x^2 R_c>.

    Raises
    ------
    ConvergenceError
        Raised when the iteration diverges, stalls on a vanishing
        derivative or lands outside the orbital neighborhood.
    """
    cfg = cfg or AnalysisConfig()
    grid = bundle.grid
    u = as_pair(state)
    soliton = bundle.soliton_at(t).pair
    profiles = bundle.profiles_at(t)
    scale = float(np.sqrt(inner_product(profiles.dxr, profiles.dxr, grid)))
    shift = 0.0
    for iteration in range(cfg.newton_cap):
        r_c = fourier_shift(soliton, shift, grid)
        dxr_c = fourier_shift(profiles.dxr, shift, grid)
        ddxr_c = fourier_shift(profiles.ddxr, shift, grid)
        deviation = u - r_c
        value = inner_product(deviation, dxr_c, grid)
        slope = inner_product(dxr_c, dxr_c, grid) - inner_product(
            deviation, ddxr_c, grid
        )
        if abs(slope) < 1e-8 * scale * scale:
            raise ConvergenceError(
                f"Modulation derivative vanished at shift {shift:.3e}"
            )
        distance = float(np.sqrt(inner_product(deviation, deviation, grid)))
        if abs(value) <= cfg.newton_tol * scale * max(1.0, distance):
            if distance > cfg.orbital_radius:
                raise ConvergenceError(
                    f"State is {distance:.3e} away from the modulated soliton,"
                    f" outside the orbital radius {cfg.orbital_radius}"
                )
            logger.debug(
                "Center modulated", t=t, shift=shift, iterations=iteration
            )
            return shift
        shift -= value / slope
        if not np.isfinite(shift) or abs(shift) > 0.5 * grid.half_width:
            raise ConvergenceError(f"Center modulation diverged at t={t}")
    raise ConvergenceError(
        f"Center modulation did not converge in {cfg.newton_cap} iterations"
    )


@dataclass(config=ConfigDict(arbitrary_types_allowed=True))
class ModulationSample:
    """Coefficients of Z = sum (a_i d_x R_i + b_i Y_{+,i}) + E.

    ``leading_a`` and ``leading_b`` hold the first-order formulas
    <Z, d_x R_i>/||d_x R_i||^2 and <Z, Z_{-,i}>.
    """

    t: float
    a: np.ndarray
    b: np.ndarray
    remainder: np.ndarray
    leading_a: np.ndarray
    leading_b: np.ndarray
    orthogonality: float
    condition: float


def modulate_full(
    deviation: Pair,
    bundles: Sequence[SpectralBundle],
    t: float,
    profiles: Sequence[BundleProfiles] | None = None,
) -> ModulationSample:
    """Solve the 2N x 2N system making E orthogonal to every d_x R_i and
    every Z_{-,i}.

    Raises
    ------
    IllConditionedError
        Raised when the Gram system is numerically singular.
    """
    grid = _grid(bundles)
    z = as_pair(deviation)
    profiles = profiles if profiles is not None else bundle_profiles(bundles, t)
    count = len(profiles)
    columns = [p.dxr for p in profiles] + [p.yplus for p in profiles]
    rows = [p.dxr for p in profiles] + [p.zminus for p in profiles]
    gram = np.array(
        [[inner_product(column, row, grid) for column in columns] for row in rows]
    )
    condition = float(np.linalg.cond(gram))
    if not np.isfinite(condition) or condition > MAX_CONDITION:
        raise IllConditionedError(
            f"Modulation system has condition number {condition:.3e} at t={t}"
        )
    rhs = np.array([inner_product(z, row, grid) for row in rows])
    coefficients = np.linalg.solve(gram, rhs)
    a, b = coefficients[:count], coefficients[count:]
    remainder = z - sum(c * column for c, column in zip(coefficients, columns))
    norms = np.array([inner_product(p.dxr, p.dxr, grid) for p in profiles])
    leading_a = rhs[:count] / norms
    leading_b = rhs[count:]
    orthogonality = max(
        (abs(inner_product(remainder, row, grid)) for row in rows), default=0.0
    )
    return ModulationSample(
        t=t,
        a=a,
        b=b,
        remainder=remainder,
        leading_a=leading_a,
        leading_b=leading_b,
        orthogonality=float(orthogonality),
        condition=condition,
    )


@dataclass(config=ConfigDict(arbitrary_types_allowed=True))
class ModulationTrack:
    """Time series of the modulation coefficients and of the projections
    alpha_{+-,k} of Z = U - sum R_k.
    """

    times: list[float] = field(default_factory=list)
    shifts: list[list[float]] = field(default_factory=list)
    a: list[list[float]] = field(default_factory=list)
    b: list[list[float]] = field(default_factory=list)
    alpha_plus: list[list[float]] = field(default_factory=list)
    alpha_minus: list[list[float]] = field(default_factory=list)
    orthogonality: list[float] = field(default_factory=list)
    deviation_norm: list[float] = field(default_factory=list)

    def append(
        self,
        sample: ModulationSample,
        alpha_plus: np.ndarray,
        alpha_minus: np.ndarray,
        norm: float,
        shifts: Sequence[float] = (),
    ) -> None:
        self.times.append(float(sample.t))
        self.shifts.append([float(s) for s in shifts])
        self.a.append([float(v) for v in sample.a])
        self.b.append([float(v) for v in sample.b])
        self.alpha_plus.append([float(v) for v in alpha_plus])
        self.alpha_minus.append([float(v) for v in alpha_minus])
        self.orthogonality.append(float(sample.orthogonality))
        self.deviation_norm.append(float(norm))

    def column(self, name: str, k: int) -> np.ndarray:
        return np.array([row[k] for row in getattr(self, name)])

    def max_shift_jump(self) -> float:
        if len(self.shifts) < 2 or not self.shifts[0]:
            return 0.0
        shifts = np.array(self.shifts)
        return float(np.max(np.abs(np.diff(shifts, axis=0))))

    def series(self) -> dict[str, np.ndarray]:
        """Flat named columns, in a fixed order, for CSV export."""
        columns: dict[str, np.ndarray] = {"t": np.array(self.times)}
        count = len(self.a[0]) if self.a else 0
        for name in ("a", "b", "alpha_plus", "alpha_minus"):
            for k in range(count):
                columns[f"{name}_{k + 1}"] = self.column(name, k)
        if self.shifts and self.shifts[0]:
            for k in range(len(self.shifts[0])):
                columns[f"shift_{k + 1}"] = self.column("shifts", k)
        columns["orthogonality"] = np.array(self.orthogonality)
        columns["deviation_norm"] = np.array(self.deviation_norm)
        return columns


def track_modulation(
    states: Sequence[FieldState],
    bundles: Sequence[SpectralBundle],
    cfg: AnalysisConfig | None = None,
    modulate_centers: bool = False,
) -> ModulationTrack:
    """Run `modulate_full` and `project_alphas` along a trajectory.

    With ``modulate_centers`` each soliton's center shift is also solved
    for; the trajectory must then stay in the orbital neighborhood of
    every soliton.
    """
    grid = _grid(bundles)
    track = ModulationTrack()
    for state in states:
        state.check_grid(grid)
        profiles = bundle_profiles(bundles, state.t)
        reference = sum(bundle.soliton_at(state.t).pair for bundle in bundles)
        z = state.pair - reference
        sample = modulate_full(z, bundles, state.t, profiles)
        alpha_plus, alpha_minus = project_alphas(
            state, reference, bundles, state.t, profiles
        )
        shifts: list[float] = []
        if modulate_centers:
            for bundle in bundles:
                others = reference - bundle.soliton_at(state.t).pair
                shifts.append(
                    modulate_center(state.pair - others, bundle, state.t, cfg)
                )
        track.append(
            sample, alpha_plus, alpha_minus, energy_norm(z, grid), shifts
        )
    return track


def projection_dynamics(
    times: Sequence[float] | np.ndarray,
    alpha: Sequence[float] | np.ndarray,
    rate: float,
    w_norm: Sequence[float] | np.ndarray,
    forcing: Sequence[float] | np.ndarray,
) -> float:
    """Smallest c with |alpha' + rate alpha| <= c (||W||^2 + forcing) on
    the interior samples, alpha' by centered differences.
    """
    t = np.asarray(times, dtype=float)
    if t.size < 3:
        raise ConfigError(f"Projection dynamics need 3 samples, got {t.size}")
    values = np.asarray(alpha, dtype=float)
    defect = np.abs(np.gradient(values, t) + rate * values)[1:-1]
    bound = (np.asarray(w_norm, dtype=float) ** 2 + np.asarray(forcing, dtype=float))[
        1:-1
    ]
    ratios = defect / np.where(bound > 0.0, bound, np.inf)
    return float(np.max(ratios))
