"""Reversible time stepping of u_tt = u_xx - u + f(u) and its conserved
quantities.
"""

import math
from dataclasses import field
from typing import Callable

import numpy as np
from lsst.ts.nlkg.config import nlkg_logger
from lsst.ts.nlkg.discretization import derivative, wavenumbers
from lsst.ts.nlkg.errors import (
    BlowUpError,
    ConfigError,
    HorizonExceededError,
)
from lsst.ts.nlkg.models.models import (
    Boundary,
    FieldState,
    GridSpec,
    NonlinearitySpec,
    Scheme,
    SolverConfig,
)
from pydantic import ConfigDict
from pydantic.dataclasses import dataclass
from scipy import fft

__all__ = [
    "EarlyExit",
    "Monitor",
    "TrajectoryRecord",
    "KleinGordonIntegrator",
    "step",
    "evolve_to",
    "energy",
    "momentum",
]

logger = nlkg_logger()

_CUBE_ROOT_TWO = 2.0 ** (1.0 / 3.0)
YOSHIDA_OUTER = 1.0 / (2.0 - _CUBE_ROOT_TWO)
YOSHIDA_INNER = -_CUBE_ROOT_TWO / (2.0 - _CUBE_ROOT_TWO)

# Distinct step sizes whose rotation factors are kept.
_ROTATION_CACHE_SIZE = 32


class EarlyExit(Exception):
    """Raised by a monitor to stop an evolution at the current sample."""

    def __init__(self, reason: str = "") -> None:
        super().__init__(reason)
        self.reason = reason


Monitor = Callable[[FieldState], dict[str, float] | None]


@dataclass(config=ConfigDict(arbitrary_types_allowed=True))
class TrajectoryRecord:
    """Samples of one run: time axis, strided snapshots and scalar series
    aligned with the time axis.
    """

    times: list[float] = field(default_factory=list)
    series: dict[str, list[float]] = field(default_factory=dict)
    snapshots: list[FieldState] = field(default_factory=list)
    stopped_early: str | None = None

    def append(self, t: float, values: dict[str, float] | None = None) -> None:
        if self.times:
            previous = self.times[-1]
            direction = 0.0
            if len(self.times) > 1:
                direction = np.sign(self.times[-1] - self.times[0])
            if t == previous or (direction and np.sign(t - previous) != direction):
                raise ConfigError(f"Sample time {t} breaks the monotone time axis")
        values = values or {}
        if self.times and set(values) != set(self.series):
            raise ConfigError(
                f"Series keys {sorted(values)} differ from {sorted(self.series)}"
            )
        if not self.times:
            self.series = {key: [] for key in values}
        self.times.append(float(t))
        for key, value in values.items():
            self.series[key].append(float(value))

    def add_snapshot(self, state: FieldState) -> None:
        self.snapshots.append(state.copy())

    @property
    def time_axis(self) -> np.ndarray:
        return np.asarray(self.times)

    def values(self, name: str) -> np.ndarray:
        if name not in self.series:
            raise KeyError(f"No series named {name!r}")
        return np.asarray(self.series[name])

    def state_at(self, t: float, tolerance: float = 1e-9) -> FieldState:
        for snapshot in self.snapshots:
            if abs(snapshot.t - t) <= tolerance * max(1.0, abs(t)):
                return snapshot
        raise KeyError(f"No snapshot at t={t}")

    def snapshot_times(self) -> list[float]:
        return [snapshot.t for snapshot in self.snapshots]


class KleinGordonIntegrator:
    """Steppers for the first-order system (u1, u2)_t = (u2, u1_xx - u1 + f(u1)).

    Parameters
    ----------
    nl : `NonlinearitySpec`
        The nonlinearity f.
    grid : `GridSpec`
        Spatial grid; periodic or padded with homogeneous Dirichlet values.
    cfg : `SolverConfig`
        Scheme, boundary, step and safety settings.
    """

    def __init__(self, nl: NonlinearitySpec, grid: GridSpec, cfg: SolverConfig) -> None:
        self.nl = nl
        self.grid = grid
        self.cfg = cfg
        self.dt = cfg.resolved_dt(grid)
        if cfg.boundary == Boundary.PERIODIC:
            self._omega = np.sqrt(wavenumbers(grid) ** 2 + 1.0)
        else:
            modes = np.arange(1, grid.n)
            self._omega = np.sqrt((modes * np.pi / grid.length) ** 2 + 1.0)
        self._rotations: dict[float, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}

    # -- building blocks ----------------------------------------------------

    def _rotation(self, tau: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        if tau not in self._rotations:
            if len(self._rotations) >= _ROTATION_CACHE_SIZE:
                self._rotations.clear()
            phase = self._omega * tau
            self._rotations[tau] = (
                np.cos(phase),
                np.sin(phase) / self._omega,
                -self._omega * np.sin(phase),
            )
        return self._rotations[tau]

    def _forward(self, u: np.ndarray) -> np.ndarray:
        if self.cfg.boundary == Boundary.PERIODIC:
            return fft.rfft(u)
        return fft.dst(u[1:], type=1)

    def _backward(self, coefficients: np.ndarray, out: np.ndarray) -> None:
        if self.cfg.boundary == Boundary.PERIODIC:
            out[:] = fft.irfft(coefficients, n=self.grid.n)
        else:
            out[0] = 0.0
            out[1:] = fft.idst(coefficients, type=1)

    def _linear(self, u1: np.ndarray, u2: np.ndarray, tau: float) -> None:
        cos_wt, sin_wt_over_w, minus_w_sin_wt = self._rotation(tau)
        c1 = self._forward(u1)
        c2 = self._forward(u2)
        self._backward(cos_wt * c1 + sin_wt_over_w * c2, u1)
        self._backward(minus_w_sin_wt * c1 + cos_wt * c2, u2)

    def _kick(self, u1: np.ndarray, u2: np.ndarray, tau: float) -> None:
        u2 += tau * self.nl.f(u1)
        if self.cfg.boundary == Boundary.DIRICHLET_PAD:
            u2[0] = 0.0

    def _laplacian(self, u: np.ndarray) -> np.ndarray:
        h2 = self.grid.h**2
        if self.cfg.boundary == Boundary.PERIODIC:
            return (np.roll(u, -1) - 2.0 * u + np.roll(u, 1)) / h2
        padded = np.concatenate(([0.0], u[1:], [0.0]))
        lap = np.zeros_like(u)
        lap[1:] = (padded[2:] - 2.0 * padded[1:-1] + padded[:-2]) / h2
        return lap

    def _acceleration(self, u1: np.ndarray) -> np.ndarray:
        acceleration = self._laplacian(u1) - u1 + self.nl.f(u1)
        if self.cfg.boundary == Boundary.DIRICHLET_PAD:
            acceleration[0] = 0.0
        return acceleration

    def _strang(self, u1: np.ndarray, u2: np.ndarray, tau: float) -> None:
        self._kick(u1, u2, 0.5 * tau)
        self._linear(u1, u2, tau)
        self._kick(u1, u2, 0.5 * tau)

    def advance(self, u1: np.ndarray, u2: np.ndarray, tau: float) -> None:
        """One forward step of size ``tau`` > 0, in place."""
        scheme = self.cfg.scheme
        if self.cfg.boundary == Boundary.DIRICHLET_PAD:
            u1[0] = u2[0] = 0.0
        if scheme == Scheme.STRANG_SPECTRAL:
            self._strang(u1, u2, tau)
        elif scheme == Scheme.YOSHIDA4:
            self._strang(u1, u2, YOSHIDA_OUTER * tau)
            self._strang(u1, u2, YOSHIDA_INNER * tau)
            self._strang(u1, u2, YOSHIDA_OUTER * tau)
        elif scheme == Scheme.LEAPFROG:
            u2 += 0.5 * tau * self._acceleration(u1)
            u1 += tau * u2
            u2 += 0.5 * tau * self._acceleration(u1)
        else:
            raise ConfigError(f"Unknown scheme {scheme!r}")

    # -- public api ---------------------------------------------------------

    def step(self, state: FieldState, dt: float | None = None) -> FieldState:
        """Advance by ``dt`` (negative steps run the reversed system)."""
        state.check_grid(self.grid)
        tau = self.dt if dt is None else dt
        if tau == 0.0:
            return state.copy()
        sign = 1.0 if tau > 0.0 else -1.0
        u1 = state.u1.copy()
        u2 = sign * state.u2
        self.advance(u1, u2, abs(tau))
        if not (np.all(np.isfinite(u1)) and np.all(np.isfinite(u2))):
            raise BlowUpError(f"Non-finite values after a step at t={state.t}", state.t)
        return FieldState(u1=u1, u2=sign * u2, t=state.t + tau)

    def evolve_to(
        self,
        state: FieldState,
        t_target: float,
        monitor: Monitor | None = None,
        monitor_stride: int = 1,
    ) -> tuple[FieldState, TrajectoryRecord]:
        """Integrate from ``state.t`` to ``t_target`` in uniform steps.

        Backward runs flip u2, integrate forward and flip back.

        Parameters
        ----------
        state : `FieldState`
            Initial data.
        t_target : `float`
            Final time, on either side of ``state.t``.
        monitor : `Monitor`, optional
            Called on the start state and every ``monitor_stride`` steps;
            returned values are stored as series, `EarlyExit` stops the run.
        monitor_stride : `int`
            Steps between monitor calls; the final state is always
            monitored.

        Returns
        -------
        final : `FieldState`
            State at ``t_target`` (or at the early-exit sample).
        record : `TrajectoryRecord`
            Sampled series and strided snapshots.

        Raises
        ------
        BlowUpError
            Raised on non-finite values or runaway growth.
        HorizonExceededError
            Raised if the run needs more than ``max_steps`` steps.
        """
        state.check_grid(self.grid)
        record = TrajectoryRecord()
        span = t_target - state.t
        t_start = state.t
        if not math.isfinite(span):
            raise ConfigError(f"Target time {t_target} is not finite")

        def observe(u1: np.ndarray, u2: np.ndarray, t: float, snapshot: bool) -> bool:
            view = FieldState(u1=u1.copy(), u2=sign * u2, t=t)
            values = None
            stop = False
            if monitor is not None:
                try:
                    values = monitor(view)
                except EarlyExit as exit_:
                    record.stopped_early = exit_.reason or "monitor"
                    stop = True
            if not stop:
                record.append(t, values)
            if snapshot or stop:
                record.add_snapshot(view)
            return stop

        sign = 1.0 if span >= 0.0 else -1.0
        u1 = state.u1.copy()
        u2 = sign * state.u2
        stride = self.cfg.snapshot_stride
        if span == 0.0:
            observe(u1, u2, t_start, stride > 0)
            return state.copy(), record
        steps = max(1, math.ceil(abs(span) / self.dt - 1e-9))
        if steps > self.cfg.max_steps:
            raise HorizonExceededError(
                f"Reaching t={t_target} from t={t_start} needs {steps} steps,"
                f" the limit is {self.cfg.max_steps}"
            )
        tau = abs(span) / steps
        threshold = self.cfg.blowup_factor * max(
            float(np.max(np.abs(u1))), np.finfo(float).tiny
        )
        logger.debug(
            "Evolving", t_start=t_start, t_target=t_target, steps=steps, dt=tau
        )
        if observe(u1, u2, t_start, stride > 0):
            return FieldState(u1=u1, u2=sign * u2, t=t_start), record
        t = t_start
        for index in range(1, steps + 1):
            self.advance(u1, u2, tau)
            t = t_start + sign * tau * index if index < steps else t_target
            peak = float(np.max(np.abs(u1)))
            if not (math.isfinite(peak) and np.all(np.isfinite(u2))):
                raise BlowUpError(f"Non-finite field at t={t:.6g}", t)
            if peak > threshold:
                raise BlowUpError(
                    f"max|u| = {peak:.3e} exceeded {threshold:.3e} at t={t:.6g}", t
                )
            last = index == steps
            if last or index % monitor_stride == 0:
                snapshot = stride > 0 and (last or index % stride == 0)
                if observe(u1, u2, t, snapshot):
                    break
        return FieldState(u1=u1, u2=sign * u2, t=t), record


def step(
    state: FieldState, cfg: SolverConfig, nl: NonlinearitySpec, grid: GridSpec
) -> FieldState:
    return KleinGordonIntegrator(nl, grid, cfg).step(state)


def evolve_to(
    state: FieldState,
    t_target: float,
    cfg: SolverConfig,
    nl: NonlinearitySpec,
    grid: GridSpec,
    monitor: Monitor | None = None,
) -> tuple[FieldState, TrajectoryRecord]:
    return KleinGordonIntegrator(nl, grid, cfg).evolve_to(state, t_target, monitor)


def energy(
    state: FieldState, nl: NonlinearitySpec, grid: GridSpec, stencil: str = "spectral"
) -> float:
    """(1/2) int (u2^2 + u1_x^2 + u1^2 - 2 F(u1)) dx."""
    state.check_grid(grid)
    du = derivative(state.u1, grid, 1, stencil)
    density = state.u2**2 + du**2 + state.u1**2 - 2.0 * nl.F(state.u1)
    return float(0.5 * grid.h * np.sum(density))


def momentum(state: FieldState, grid: GridSpec, stencil: str = "spectral") -> float:
    """int u2 u1_x dx."""
    state.check_grid(grid)
    return float(grid.h * np.sum(state.u2 * derivative(state.u1, grid, 1, stencil)))
