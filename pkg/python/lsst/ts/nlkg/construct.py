"""Backward shooting: the single-soliton family U^A and the stagewise
construction of multi-solitons with prescribed unstable amplitudes.

Every run prescribes final data at a large time S, integrates backward to
the landing time t0 and measures the deviation from a reference flow. The
free coefficients along the unstable directions of the slower solitons are
tuned until the backward trajectory stays in the shrinking box down to t0.
"""

import itertools
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import field
from typing import Any, Callable, Sequence

import numpy as np
from lsst.ts.nlkg.analysis.projections import projection_dynamics
from lsst.ts.nlkg.analysis.rates import extract_A, fit_rate
from lsst.ts.nlkg.config import config, nlkg_logger
from lsst.ts.nlkg.discretization import fourier_shift
from lsst.ts.nlkg.errors import (
    ConfigError,
    ConvergenceError,
    IllConditionedError,
    NoPlateauError,
)
from lsst.ts.nlkg.evolve import EarlyExit, KleinGordonIntegrator, TrajectoryRecord
from lsst.ts.nlkg.models.models import (
    ConstructionConfig,
    ExperimentConfig,
    FieldState,
    SolitonSpec,
    SolverConfig,
    StageReport,
)
from lsst.ts.nlkg.models.models_helpers import separation_sigma
from lsst.ts.nlkg.spectral import SpectralBundle, energy_norm, inner_product
from pydantic import BaseModel, ConfigDict
from pydantic.dataclasses import dataclass

__all__ = [
    "ReferenceFlow",
    "ExactSumFlow",
    "SampledFlow",
    "final_data_single",
    "SingleReport",
    "SingleConstruction",
    "construct_single",
    "SpecialSolutionReport",
    "special_solution_relation",
    "solve_modulation_b",
    "ShootingContext",
    "ShootingOutcome",
    "exit_time_map",
    "ShootingSearch",
    "find_a",
    "sphere_points",
    "BoundarySample",
    "boundary_identity",
    "build_base",
    "resolve_sigma",
    "MultiReport",
    "MultiConstruction",
    "construct_multi",
]

logger = nlkg_logger()

ReferenceFlow = Callable[[float], np.ndarray]

# Ratio of the base decay rate to sigma when the base is shot.
BASE_RATE_FACTOR = 3.0

# Fraction of the ball radius kept when an iterate is pulled back inside.
_BALL_SHRINK = 0.999


def _dense_integrator(cfg: ExperimentConfig) -> KleinGordonIntegrator:
    solver: SolverConfig = cfg.solver.model_copy(update={"snapshot_stride": 1})
    return KleinGordonIntegrator(cfg.nonlinearity, cfg.grid, solver)


def _time_step(integrator: KleinGordonIntegrator, start: float, end: float) -> float:
    span = abs(end - start)
    if span == 0.0:
        return 0.0
    return span / max(1, math.ceil(span / integrator.dt - 1e-9))


class ExactSumFlow:
    """Sum of the exact travelling waves of ``bundles``."""

    def __init__(self, bundles: Sequence[SpectralBundle]) -> None:
        self.bundles = list(bundles)

    def __call__(self, t: float) -> np.ndarray:
        return np.sum([bundle.soliton_at(t).pair for bundle in self.bundles], axis=0)


class SampledFlow:
    """A computed trajectory evaluable at any time of its span.

    Times off the stored samples are reached by one partial step from the
    nearest snapshot.
    """

    def __init__(
        self, record: TrajectoryRecord, integrator: KleinGordonIntegrator
    ) -> None:
        snapshots = sorted(record.snapshots, key=lambda state: state.t)
        if not snapshots:
            raise ConfigError("A sampled flow needs at least one snapshot")
        self.snapshots = snapshots
        self.times = np.array([state.t for state in snapshots])
        self._integrator = integrator
        self._lock = threading.Lock()

    @property
    def span(self) -> tuple[float, float]:
        return float(self.times[0]), float(self.times[-1])

    def state(self, t: float) -> FieldState:
        low, high = self.span
        slack = self._integrator.dt
        if t < low - slack or t > high + slack:
            raise ConfigError(f"t={t} lies outside the sampled span [{low}, {high}]")
        index = int(np.argmin(np.abs(self.times - t)))
        nearest = self.snapshots[index]
        offset = t - nearest.t
        if abs(offset) <= 1e-9 * max(1.0, abs(t)):
            return nearest
        with self._lock:
            return self._integrator.step(nearest, offset)

    def __call__(self, t: float) -> np.ndarray:
        return self.state(t).pair


# -- single soliton -----------------------------------------------------------


def final_data_single(
    spec: SolitonSpec, A: float, S: float, bundle: SpectralBundle
) -> FieldState:
    """R(S) + A e^{-e S} Y+(S).

    Logs a warning when the perturbation exceeds a tenth of the soliton
    norm.
    """
    if bundle.spec != spec:
        raise ConfigError(f"Bundle belongs to {bundle.spec}, not to {spec}")
    soliton = bundle.soliton_at(S)
    if A == 0.0:
        return soliton
    perturbation = A * math.exp(-bundle.e_beta * S) * bundle.profiles_at(S).yplus
    grid = bundle.grid
    size = energy_norm(perturbation, grid)
    if size > 0.1 * energy_norm(soliton.pair, grid):
        logger.warning(
            "Final-data perturbation is outside the linear regime",
            A=A,
            S=S,
            perturbation=size,
        )
    return FieldState.from_pair(soliton.pair + perturbation, t=S)


class SingleReport(BaseModel):
    beta: float
    A: float
    e_beta: float
    t0: float
    final_times: list[float]
    stabilization: list[float]
    stabilization_decreasing: bool
    fitted_rate: float | None = None
    fitted_r2: float | None = None
    fit_window: tuple[float, float]
    max_residual: float
    bootstrap_constant: float
    bootstrap_holds: bool
    extracted_A: float | None = None
    extracted_A_error: float | None = None
    projection_constant: float | None = None


@dataclass(config=ConfigDict(arbitrary_types_allowed=True))
class SingleConstruction:
    """U^A at t0 (largest final time), the landing states of every final
    time and the monitored runs.
    """

    state: FieldState
    states: list[FieldState]
    records: list[TrajectoryRecord]
    report: SingleReport


def _single_run(
    spec: SolitonSpec,
    A: float,
    S: float,
    cfg: ExperimentConfig,
    bundle: SpectralBundle,
) -> tuple[FieldState, TrajectoryRecord]:
    construction = cfg.construction
    grid = cfg.grid
    t0 = construction.t0
    dense = _dense_integrator(cfg)
    reference: ReferenceFlow
    if construction.reference == "numerical":
        _, reference_record = dense.evolve_to(bundle.soliton_at(S), t0)
        reference = SampledFlow(reference_record, dense)
    else:
        reference = ExactSumFlow([bundle])
    rate = bundle.e_beta

    def monitor(state: FieldState) -> dict[str, float]:
        t = state.t
        profiles = bundle.profiles_at(t)
        deviation = state.pair - reference(t)
        w = deviation - A * math.exp(-rate * t) * profiles.yplus
        return {
            "r": energy_norm(w, grid),
            "alpha_plus": inner_product(deviation, profiles.zplus, grid),
            "alpha_minus": inner_product(deviation, profiles.zminus, grid),
            "w_alpha_minus": inner_product(w, profiles.zminus, grid),
        }

    stride = cfg.solver.snapshot_stride or cfg.analysis.functional_stride
    solver = cfg.solver.model_copy(update={"snapshot_stride": stride})
    integrator = KleinGordonIntegrator(cfg.nonlinearity, grid, solver)
    final, record = integrator.evolve_to(
        final_data_single(spec, A, S, bundle), t0, monitor
    )
    logger.info("Single-soliton run landed", beta=spec.beta, A=A, S=S)
    return final, record


def _stabilization(states: Sequence[FieldState], cfg: ExperimentConfig) -> list[float]:
    return [
        energy_norm(after.pair - before.pair, cfg.grid)
        for before, after in zip(states[:-1], states[1:])
    ]


def _check_stabilization(
    distances: list[float], construction: ConstructionConfig, label: str
) -> bool:
    decreasing = all(b <= a for a, b in zip(distances[:-1], distances[1:]))
    if not decreasing:
        if construction.strict_stabilization:
            raise ConvergenceError(
                f"{label}: landing states do not stabilize across final times"
                f" ({distances})"
            )
        logger.warning(
            "Landing states do not stabilize across final times",
            construction=label,
            distances=distances,
        )
    return decreasing


def _fit_window(t0: float, S: float, margin: float) -> tuple[float, float]:
    if S - t0 > 2.0 * margin:
        return t0 + margin, S - margin
    return t0, S


def construct_single(
    spec: SolitonSpec, A: float, cfg: ExperimentConfig, bundle: SpectralBundle
) -> SingleConstruction:
    """Backward runs from every final time S_n of the schedule.

    Parameters
    ----------
    spec : `SolitonSpec`
        The soliton.
    A : `float`
        Amplitude along Y+.
    cfg : `ExperimentConfig`
        Grid, solver, schedule and analysis settings.
    bundle : `SpectralBundle`
        Eigen-objects of ``spec``.

    Returns
    -------
    construction : `SingleConstruction`
        Landing states, monitored residual series
        r(t) = ||U(t) - R(t) - A e^{-e t} Y+(t)|| and the report.

    Raises
    ------
    BlowUpError
        Raised if a backward run leaves the bounded regime.
    ConvergenceError
        Raised when landing states do not stabilize and the construction
        is strict.
    """
    construction = cfg.construction
    final_times = construction.final_times
    t0 = construction.t0
    workers = max(1, min(config.threads, len(final_times)))
    with ThreadPoolExecutor(max_workers=workers) as executor:
        runs = list(
            executor.map(lambda S: _single_run(spec, A, S, cfg, bundle), final_times)
        )
    states = [state for state, _ in runs]
    records = [record for _, record in runs]
    distances = _stabilization(states, cfg)
    decreasing = _check_stabilization(distances, construction, "single")

    record = records[-1]
    times = record.time_axis
    residual = record.values("r")
    S = final_times[-1]
    window = _fit_window(t0, S, construction.fit_margin)
    fitted_rate = fitted_r2 = None
    try:
        fitted_rate, _, fitted_r2 = fit_rate(times, residual, window)
    except ConfigError as e:
        logger.debug("No residual rate fitted", detail=str(e))
    e_beta = bundle.e_beta
    bootstrap = float(np.max(residual * np.exp(1.5 * e_beta * times)))

    extracted = extracted_error = None
    try:
        plateau = extract_A(
            times,
            record.values("alpha_minus"),
            e_beta,
            cfg.analysis.plateau_fraction,
            cfg.analysis.plateau_tol,
            cfg.analysis.plateau_abs_tol,
        )
        extracted, extracted_error = plateau.value, plateau.error
    except NoPlateauError as e:
        logger.warning("No amplitude plateau on the single-soliton run", detail=str(e))

    projection_constant = None
    if times.size >= 3:
        projection_constant = projection_dynamics(
            times,
            record.values("w_alpha_minus"),
            e_beta,
            residual,
            np.exp(-2.0 * e_beta * times),
        )

    report = SingleReport(
        beta=spec.beta,
        A=A,
        e_beta=e_beta,
        t0=t0,
        final_times=final_times,
        stabilization=distances,
        stabilization_decreasing=decreasing,
        fitted_rate=fitted_rate,
        fitted_r2=fitted_r2,
        fit_window=window,
        max_residual=float(np.max(residual)),
        bootstrap_constant=bootstrap,
        bootstrap_holds=bootstrap <= 1.0,
        extracted_A=extracted,
        extracted_A_error=extracted_error,
        projection_constant=projection_constant,
    )
    logger.info(
        "Single-soliton family member constructed",
        beta=spec.beta,
        A=A,
        rate=fitted_rate,
        stabilization=distances,
    )
    return SingleConstruction(
        state=states[-1], states=states, records=records, report=report
    )


class SpecialSolutionReport(BaseModel):
    """U^A(t0) against the time- and space-shifted U^{sign A}."""

    A: float
    t_shift: float
    discrepancy: float
    reference_norm: float


def special_solution_relation(
    spec: SolitonSpec, A: float, cfg: ExperimentConfig, bundle: SpectralBundle
) -> SpecialSolutionReport:
    """Compare U^A(t0, x) with U^{+-1}(t0 + t_A, x + beta t_A) where
    t_A = -ln|A| / e; for A = 0 compare U^0(t0) with R(t0).
    """
    construction = cfg.construction
    t0 = construction.t0
    member = construct_single(spec, A, cfg, bundle)
    if A == 0.0:
        soliton = bundle.soliton_at(t0).pair
        return SpecialSolutionReport(
            A=A,
            t_shift=0.0,
            discrepancy=energy_norm(member.state.pair - soliton, cfg.grid),
            reference_norm=energy_norm(soliton, cfg.grid),
        )
    t_shift = -math.log(abs(A)) / bundle.e_beta
    shifted_construction = construction.model_copy(
        update={
            "t0": t0 + t_shift,
            "schedule": [S + t_shift for S in construction.final_times],
        }
    )
    shifted_cfg = cfg.model_copy(update={"construction": shifted_construction})
    unit = construct_single(spec, math.copysign(1.0, A), shifted_cfg, bundle)
    moved = fourier_shift(unit.state.pair, -spec.beta * t_shift, cfg.grid)
    return SpecialSolutionReport(
        A=A,
        t_shift=t_shift,
        discrepancy=energy_norm(member.state.pair - moved, cfg.grid),
        reference_norm=energy_norm(member.state.pair, cfg.grid),
    )


# -- shooting -----------------------------------------------------------------


def solve_modulation_b(
    a_target: np.ndarray,
    S: float,
    bundles: Sequence[SpectralBundle],
    directions: Sequence[int],
) -> tuple[np.ndarray, np.ndarray]:
    """Coefficients b with sum_l b_l <Y_{+,l}(S), Z_{-,k}(S)> = a_k for the
    soliton indices in ``directions``.

    Returns
    -------
    b : `np.ndarray`
        Final-data coefficients.
    psi : `np.ndarray`
        The matrix psi_{kl} = <Y_{+,l}(S), Z_{-,k}(S)>.

    Raises
    ------
    IllConditionedError
        Raised when ||psi - Id|| > 1/2.
    """
    a_target = np.atleast_1d(np.asarray(a_target, dtype=float))
    if a_target.size != len(directions):
        raise ConfigError(
            f"Expected {len(directions)} coefficients, got {a_target.size}"
        )
    if not directions:
        return np.zeros(0), np.zeros((0, 0))
    grid = bundles[0].grid
    profiles = [bundles[k].profiles_at(S) for k in directions]
    psi = np.array(
        [
            [inner_product(pl.yplus, pk.zminus, grid) for pl in profiles]
            for pk in profiles
        ]
    )
    deviation = float(np.linalg.norm(psi - np.eye(len(directions)), 2))
    if deviation > 0.5:
        raise IllConditionedError(
            f"Final-data Gram matrix deviates from the identity by {deviation:.3f}"
            f" at S={S}; the solitons are not separated enough"
        )
    return np.linalg.solve(psi, a_target), psi


@dataclass(config=ConfigDict(arbitrary_types_allowed=True))
class ShootingContext:
    """Everything one stage of the construction needs.

    ``stage`` is the 0-based index of the soliton whose amplitude is
    imposed, `None` for the base multi-soliton. ``directions`` lists the
    solitons whose unstable coefficient is shot.
    """

    stage: int | None
    S: float
    t0: float
    rho: float
    sigma: float
    amplitude: float
    directions: list[int]
    bundles: list[SpectralBundle]
    reference: Any
    integrator: KleinGordonIntegrator
    cfg: ConstructionConfig

    @property
    def radius(self) -> float:
        return math.exp(-(self.rho + 2.0 * self.sigma) * self.S)

    @property
    def step(self) -> float:
        return _time_step(self.integrator, self.S, self.t0)


@dataclass(config=ConfigDict(arbitrary_types_allowed=True))
class ShootingOutcome:
    """One backward run from the final data selected by ``a``.

    ``rescaled_exit`` is e^{(rho + 2 sigma)(T - S)} alpha_-(T); it equals
    ``a`` when the run exits at once.
    """

    a: np.ndarray
    b: np.ndarray
    exit_time: float
    exit_projection: np.ndarray
    rescaled_exit: np.ndarray
    exit_reason: str
    trajectory: TrajectoryRecord
    final_state: FieldState
    converged: bool
    b_bound_ok: bool = True
    crossing_derivative: float | None = None
    alpha_plus_at_S: np.ndarray | None = None


class _ExitMonitor:
    """Evaluates both exit conditions at every backward sample."""

    def __init__(self, context: ShootingContext) -> None:
        self.context = context
        self.alpha_minus = np.zeros(len(context.directions))
        self.reason = ""
        self.crossing: float | None = None
        self.first: dict[str, float] | None = None
        self._previous: tuple[float, float] | None = None

    def __call__(self, state: FieldState) -> dict[str, float]:
        context = self.context
        grid = context.bundles[0].grid
        t = state.t
        profiles = [bundle.profiles_at(t) for bundle in context.bundles]
        w = state.pair - context.reference(t)
        if context.stage is not None and context.amplitude != 0.0:
            w = w - (
                context.amplitude
                * math.exp(-context.rho * t)
                * profiles[context.stage].yplus
            )
        w_norm = energy_norm(w, grid)
        values = {"W_norm": w_norm}
        alpha_minus = []
        for k, profile in enumerate(profiles):
            values[f"alpha_plus_{k + 1}"] = inner_product(w, profile.zplus, grid)
            alpha_minus.append(inner_product(w, profile.zminus, grid))
            values[f"alpha_minus_{k + 1}"] = alpha_minus[-1]
        self.alpha_minus = np.array([alpha_minus[k] for k in context.directions])
        weight = math.exp((context.rho + 2.0 * context.sigma) * t)
        n_value = float(np.sum((weight * self.alpha_minus) ** 2))
        values["N"] = n_value
        if self.first is None:
            self.first = values
        cfg = context.cfg
        if w_norm > cfg.w_constant * math.exp(-(context.rho + context.sigma) * t):
            self.reason = "w_bound"
            raise EarlyExit(self.reason)
        if context.directions and n_value >= 1.0 - cfg.boundary_tol:
            self.reason = "ball"
            if self._previous is not None:
                t_previous, n_previous = self._previous
                self.crossing = (n_previous - n_value) / (t_previous - t)
            raise EarlyExit(self.reason)
        self._previous = (t, n_value)
        return values


def exit_time_map(a: np.ndarray, context: ShootingContext) -> ShootingOutcome:
    """Run backward from the final data selected by ``a`` and return the
    first time T at which ||W|| or the rescaled projection leaves its box.

    W = U - reference - A_j e^{-rho t} Y_{+,j}; the box is
    ||W(t)|| <= C_W e^{-(rho + sigma) t} together with
    |e^{(rho + 2 sigma) t} alpha_-(t)| < 1.
    """
    a = np.atleast_1d(np.asarray(a, dtype=float))
    bundles = context.bundles
    S = context.S
    b, _ = solve_modulation_b(a, S, bundles, context.directions)
    data = np.array(context.reference(S), dtype=float, copy=True)
    if context.stage is not None and context.amplitude != 0.0:
        data += (
            context.amplitude
            * math.exp(-context.rho * S)
            * bundles[context.stage].profiles_at(S).yplus
        )
    for coefficient, k in zip(b, context.directions):
        data += coefficient * bundles[k].profiles_at(S).yplus
    monitor = _ExitMonitor(context)
    final, record = context.integrator.evolve_to(
        FieldState.from_pair(data, t=S), context.t0, monitor
    )
    exit_time = final.t
    rescaled = (
        math.exp((context.rho + 2.0 * context.sigma) * (exit_time - S))
        * monitor.alpha_minus
    )
    converged = exit_time - context.t0 <= context.step * (1.0 + 1e-9)
    alpha_plus_at_S = None
    if monitor.first is not None:
        alpha_plus_at_S = np.array(
            [monitor.first[f"alpha_plus_{k + 1}"] for k in context.directions]
        )
    bound = 2.0 * float(np.linalg.norm(a)) * (1.0 + 1e-12) + 1e-300
    return ShootingOutcome(
        a=a,
        b=b,
        exit_time=exit_time,
        exit_projection=monitor.alpha_minus.copy(),
        rescaled_exit=rescaled,
        exit_reason=monitor.reason or "landed",
        trajectory=record,
        final_state=final,
        converged=converged,
        b_bound_ok=bool(np.linalg.norm(b) <= bound),
        crossing_derivative=monitor.crossing,
        alpha_plus_at_S=alpha_plus_at_S,
    )


@dataclass(config=ConfigDict(arbitrary_types_allowed=True))
class ShootingSearch:
    a_star: np.ndarray
    outcome: ShootingOutcome
    iterations: int
    converged: bool
    crossing_derivatives: list[float] = field(default_factory=list)


def _pull_inside(a: np.ndarray, radius: float) -> np.ndarray:
    size = float(np.linalg.norm(a))
    if size >= radius:
        return a * (_BALL_SHRINK * radius / size)
    return a


def find_a(context: ShootingContext) -> ShootingSearch:
    """Search the ball of radius e^{-(rho + 2 sigma) S} for the coefficients
    whose backward run reaches t0.

    One direction is bisected on the sign of the rescaled exit projection;
    more directions use a damped fixed-point iteration followed by a grid
    scan of the ball. When the caps are hit the run with the smallest exit
    time is returned with ``converged`` unset.
    """
    cfg = context.cfg
    dimension = len(context.directions)
    crossings: list[float] = []
    best: ShootingOutcome | None = None
    iterations = 0

    def run(a: np.ndarray) -> ShootingOutcome:
        nonlocal best, iterations
        iterations += 1
        outcome = exit_time_map(a, context)
        if outcome.crossing_derivative is not None:
            crossings.append(outcome.crossing_derivative)
        if best is None or outcome.exit_time < best.exit_time:
            best = outcome
        return outcome

    def finish(outcome: ShootingOutcome, converged: bool) -> ShootingSearch:
        return ShootingSearch(
            a_star=outcome.a,
            outcome=outcome,
            iterations=iterations,
            converged=converged,
            crossing_derivatives=crossings,
        )

    if dimension == 0:
        outcome = run(np.zeros(0))
        return finish(outcome, outcome.converged)

    radius = context.radius
    if dimension == 1:
        low, high = -radius, radius
        for _ in range(cfg.bisection_cap):
            middle = 0.5 * (low + high)
            outcome = run(np.array([middle]))
            if outcome.converged:
                return finish(outcome, True)
            if outcome.rescaled_exit[0] < 0.0:
                low = middle
            else:
                high = middle
    else:
        rates = np.array([context.bundles[k].e_beta for k in context.directions])
        a = np.zeros(dimension)
        for _ in range(cfg.fixed_point_cap):
            outcome = run(a)
            if outcome.converged:
                return finish(outcome, True)
            correction = (
                np.exp(-rates * (context.S - outcome.exit_time))
                * outcome.exit_projection
            )
            a = _pull_inside(a - cfg.fixed_point_damping * correction, radius)
        axis = np.linspace(-radius, radius, cfg.grid_scan_points)
        for point in itertools.product(axis, repeat=dimension):
            candidate = np.array(point)
            if np.linalg.norm(candidate) >= radius:
                continue
            outcome = run(candidate)
            if outcome.converged:
                return finish(outcome, True)

    assert best is not None
    logger.warning(
        "Exit-time search hit its cap",
        stage=context.stage,
        S=context.S,
        best_exit_time=best.exit_time,
        iterations=iterations,
    )
    return finish(best, False)


def sphere_points(
    dimension: int, count: int, radius: float, seed: int = 0
) -> list[np.ndarray]:
    """``count`` points on the sphere of the given radius (alternating
    signs in one dimension).
    """
    if dimension == 1:
        return [np.array([radius if i % 2 == 0 else -radius]) for i in range(count)]
    rng = np.random.default_rng(seed)
    points = []
    for _ in range(count):
        direction = rng.standard_normal(dimension)
        points.append(radius * direction / np.linalg.norm(direction))
    return points


class BoundarySample(BaseModel):
    a_norm: float
    exit_time: float
    steps_before_S: float
    mapping_error: float


def boundary_identity(
    context: ShootingContext, count: int = 8, seed: int = 0
) -> list[BoundarySample]:
    """Exit time and rescaled exit projection for coefficients on the
    boundary sphere, where the exit map is the identity.
    """
    radius = context.radius
    step = context.step
    samples = []
    for a in sphere_points(len(context.directions), count, radius, seed):
        outcome = exit_time_map(a, context)
        samples.append(
            BoundarySample(
                a_norm=float(np.linalg.norm(a)),
                exit_time=outcome.exit_time,
                steps_before_S=(context.S - outcome.exit_time) / step,
                mapping_error=float(np.linalg.norm(outcome.rescaled_exit - a)) / radius,
            )
        )
    return samples


# -- multi-solitons -----------------------------------------------------------


def _stage_report(
    label: int, context: ShootingContext, search: ShootingSearch
) -> StageReport:
    outcome = search.outcome
    record = outcome.trajectory
    fitted_rate = fitted_r2 = None
    residual_norm = None
    if record.times:
        w_norm = record.values("W_norm")
        residual_norm = float(w_norm[-1])
        window = _fit_window(context.t0, context.S, context.cfg.fit_margin)
        try:
            fitted_rate, _, fitted_r2 = fit_rate(record.time_axis, w_norm, window)
        except ConfigError as e:
            logger.debug("No stage rate fitted", stage=label, detail=str(e))
    ratio = None
    b_size = float(np.linalg.norm(outcome.b))
    alpha_plus = outcome.alpha_plus_at_S
    if alpha_plus is not None and alpha_plus.size and b_size > 0.0:
        ratio = float(np.max(np.abs(alpha_plus))) / b_size
    return StageReport(
        j=label,
        S=context.S,
        a=[float(v) for v in outcome.a],
        b=[float(v) for v in outcome.b],
        exit_time=outcome.exit_time,
        converged=search.converged,
        iterations=search.iterations,
        b_bound_ok=outcome.b_bound_ok,
        fitted_rate=fitted_rate,
        fitted_r2=fitted_r2,
        residual_norm=residual_norm,
        crossing_derivatives=search.crossing_derivatives,
        alpha_plus_ratio=ratio,
    )


def _require(search: ShootingSearch, label: int, S: float) -> None:
    if not search.converged:
        raise ConvergenceError(
            f"Stage {label} found no coefficients landing at t0 from S={S};"
            f" best exit time {search.outcome.exit_time:.4f}"
        )


def build_base(
    cfg: ExperimentConfig, bundles: Sequence[SpectralBundle], sigma: float
) -> tuple[SampledFlow, StageReport | None]:
    """Base multi-soliton on [t0, max S_n]: the backward run of the bare
    sum, or a shot run with all N directions free when ``shoot_base``.
    """
    construction = cfg.construction
    S = max(construction.final_times)
    integrator = _dense_integrator(cfg)
    exact = ExactSumFlow(bundles)
    if not construction.shoot_base:
        _, record = integrator.evolve_to(
            FieldState.from_pair(exact(S), t=S), construction.t0
        )
        return SampledFlow(record, integrator), None
    context = ShootingContext(
        stage=None,
        S=S,
        t0=construction.t0,
        rho=BASE_RATE_FACTOR * sigma,
        sigma=sigma,
        amplitude=0.0,
        directions=list(range(len(bundles))),
        bundles=list(bundles),
        reference=exact,
        integrator=integrator,
        cfg=construction,
    )
    search = find_a(context)
    _require(search, 0, S)
    return SampledFlow(search.outcome.trajectory, integrator), _stage_report(
        0, context, search
    )


def _multi_chain(
    S: float,
    base: SampledFlow,
    cfg: ExperimentConfig,
    bundles: Sequence[SpectralBundle],
    sigma: float,
) -> tuple[SampledFlow, list[StageReport]]:
    construction = cfg.construction
    count = construction.N
    reference = base
    reports = []
    for j in range(count):
        amplitude = construction.A[j]
        directions = list(range(j + 1, count))
        if not directions and amplitude == 0.0:
            # final data equal the reference: the stage reproduces it
            continue
        integrator = _dense_integrator(cfg)
        context = ShootingContext(
            stage=j,
            S=S,
            t0=construction.t0,
            rho=bundles[j].e_beta,
            sigma=sigma,
            amplitude=amplitude,
            directions=directions,
            bundles=list(bundles),
            reference=reference,
            integrator=integrator,
            cfg=construction,
        )
        search = find_a(context)
        _require(search, j + 1, S)
        report = _stage_report(j + 1, context, search)
        reports.append(report)
        logger.info(
            "Stage finished",
            stage=j + 1,
            S=S,
            exit_time=search.outcome.exit_time,
            iterations=search.iterations,
            b_bound_ok=report.b_bound_ok,
        )
        reference = SampledFlow(search.outcome.trajectory, integrator)
    return reference, reports


def resolve_sigma(
    construction: ConstructionConfig, lambda0: float
) -> tuple[float, float]:
    """Separation constant in use and the value given by `separation_sigma`.

    An explicit ``construction.sigma`` away from the formula value is
    logged as a warning.
    """
    formula = separation_sigma(construction.specs, lambda0)
    if construction.sigma is None:
        return formula, formula
    if not math.isclose(construction.sigma, formula, rel_tol=1e-12):
        logger.warning(
            "Separation constant overridden",
            sigma=construction.sigma,
            formula=formula,
        )
        return construction.sigma, formula
    return formula, formula


class MultiReport(BaseModel):
    sigma: float
    sigma_formula: float
    sigma_override: bool = False
    t0: float
    final_times: list[float]
    amplitudes: list[float]
    base: str
    stabilization: list[float]
    stabilization_decreasing: bool
    remainder_rate: float | None = None
    remainder_r2: float | None = None
    required_rate: float
    stages: list[StageReport]


@dataclass(config=ConfigDict(arbitrary_types_allowed=True))
class MultiConstruction:
    """Family member at t0 (largest final time), its sampled trajectory
    and the base multi-soliton trajectory.
    """

    state: FieldState
    states: list[FieldState]
    snapshots: list[FieldState]
    base_snapshots: list[FieldState]
    remainder_times: np.ndarray
    remainder: np.ndarray
    report: MultiReport


def construct_multi(
    cfg: ExperimentConfig, bundles: Sequence[SpectralBundle]
) -> MultiConstruction:
    """Impose the amplitudes A_1..A_N stage by stage on top of the base
    multi-soliton, for every final time of the schedule.

    Raises
    ------
    ConvergenceError
        Raised when a stage finds no landing coefficients, or when the
        landing states do not stabilize and the construction is strict.
    IllConditionedError
        Raised when the final-data Gram matrix is far from the identity.
    """
    construction = cfg.construction
    if len(bundles) != construction.N:
        raise ConfigError(
            f"Got {len(bundles)} bundles for {construction.N} solitons"
        )
    sigma, sigma_formula = resolve_sigma(construction, bundles[0].lambda0)
    base, base_report = build_base(cfg, bundles, sigma)
    final_times = construction.final_times
    workers = max(1, min(config.threads, len(final_times)))
    with ThreadPoolExecutor(max_workers=workers) as executor:
        chains = list(
            executor.map(
                lambda S: _multi_chain(S, base, cfg, bundles, sigma), final_times
            )
        )
    t0 = construction.t0
    states = [flow.state(t0) for flow, _ in chains]
    distances = _stabilization(states, cfg)
    decreasing = _check_stabilization(distances, construction, "multi")

    flow, _ = chains[-1]
    times = flow.times
    remainder = np.empty(times.size)
    for index, t in enumerate(times):
        deviation = flow.snapshots[index].pair - base(float(t))
        for amplitude, bundle in zip(construction.A, bundles):
            if amplitude != 0.0:
                deviation = deviation - amplitude * math.exp(
                    -bundle.e_beta * t
                ) * bundle.profiles_at(float(t)).yplus
        remainder[index] = energy_norm(deviation, cfg.grid)
    remainder_rate = remainder_r2 = None
    window = _fit_window(t0, final_times[-1], construction.fit_margin)
    try:
        remainder_rate, _, remainder_r2 = fit_rate(times, remainder, window)
    except ConfigError as e:
        logger.debug("No remainder rate fitted", detail=str(e))

    stages = [report for _, reports in chains for report in reports]
    if base_report is not None:
        stages.insert(0, base_report)
    report = MultiReport(
        sigma=sigma,
        sigma_formula=sigma_formula,
        sigma_override=sigma != sigma_formula,
        t0=t0,
        final_times=final_times,
        amplitudes=list(construction.A),
        base="shot" if construction.shoot_base else "bare-sum",
        stabilization=distances,
        stabilization_decreasing=decreasing,
        remainder_rate=remainder_rate,
        remainder_r2=remainder_r2,
        required_rate=-(bundles[-1].e_beta + 0.5 * sigma),
        stages=stages,
    )
    logger.info(
        "Multi-soliton family member constructed",
        amplitudes=construction.A,
        remainder_rate=remainder_rate,
        stages=len(stages),
    )
    return MultiConstruction(
        state=states[-1],
        states=states,
        snapshots=list(flow.snapshots),
        base_snapshots=list(base.snapshots),
        remainder_times=times,
        remainder=remainder,
        report=report,
    )
