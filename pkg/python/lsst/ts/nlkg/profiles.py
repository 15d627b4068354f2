"""Ground state Q of -Q'' + Q - f(Q) = 0 and the boosted solitons built
from it.
"""

import math
from typing import Sequence

import numpy as np
from lsst.ts.nlkg.config import nlkg_logger
from lsst.ts.nlkg.discretization import fd_derivative
from lsst.ts.nlkg.errors import ConfigError, ConvergenceError, DomainTooSmallError
from lsst.ts.nlkg.models.models import (
    FieldState,
    GridSpec,
    NonlinearitySpec,
    SolitonSpec,
    Tolerances,
)
from lsst.ts.nlkg.models.models_helpers import wrap_offset
from scipy import integrate, optimize

__all__ = [
    "GroundStateProfile",
    "ground_state",
    "ground_state_residual",
    "boost",
    "boost_derivative",
    "multi_profile",
    "tail_rates",
    "translation_quotient",
]

logger = nlkg_logger()

# Values below this are flushed to zero to keep denormals out of the grid.
UNDERFLOW = 1.0e-300

# Relative height at which the shot profile hands over to its e^{-|s|} tail.
_TAIL_HANDOVER = 1.0e-6
_SHOOTING_START = 1.0e-6
_SHOOTING_SPAN = 60.0


def _log_sech(z: np.ndarray) -> np.ndarray:
    az = np.abs(z)
    return -az + math.log(2.0) - np.log1p(np.exp(-2.0 * az))


class _ShotProfile:
    """Radial ODE solution for a registered nonlinearity, found by
    bisection on the initial height between undershooting and
    overshooting trajectories.
    """

    def __init__(self, nl: NonlinearitySpec) -> None:
        self.nl = nl
        self.q0 = self._find_height()
        self._solve_profile()

    def _rhs(self, s: float, y: np.ndarray) -> list[float]:
        return [y[1], y[0] - float(self.nl.f(np.array([y[0]]))[0])]

    def _initial(self, q0: float) -> tuple[float, list[float]] | None:
        q2 = q0 - float(self.nl.f(np.array([q0]))[0])
        if q2 >= 0.0:
            return None
        s0 = _SHOOTING_START
        return s0, [q0 + 0.5 * q2 * s0 * s0, q2 * s0]

    def _shooting_sign(self, q0: float) -> float:
        start = self._initial(q0)
        if start is None:
            return -1.0
        s0, y0 = start

        def crosses_zero(s: float, y: np.ndarray) -> float:
            return y[0]

        def turns_back(s: float, y: np.ndarray) -> float:
            return y[1]

        crosses_zero.terminal = True  # type: ignore[attr-defined]
        crosses_zero.direction = -1  # type: ignore[attr-defined]
        turns_back.terminal = True  # type: ignore[attr-defined]
        turns_back.direction = 1  # type: ignore[attr-defined]
        solution = integrate.solve_ivp(
            self._rhs,
            (s0, _SHOOTING_SPAN),
            y0,
            method="DOP853",
            events=(crosses_zero, turns_back),
            rtol=1e-12,
            atol=1e-14,
        )
        if solution.t_events[0].size:
            return 1.0
        if solution.t_events[1].size:
            return -1.0
        return 0.0

    def _find_height(self) -> float:
        low = 1.0e-3
        if self._shooting_sign(low) > 0.0:
            raise ConvergenceError(
                f"Nonlinearity {self.nl.hook!r} overshoots at height {low}"
            )
        high = 1.0
        for _ in range(60):
            if self._shooting_sign(high) > 0.0:
                break
            low, high = high, 2.0 * high
        else:
            raise ConvergenceError(
                f"No overshooting height found for nonlinearity {self.nl.hook!r}"
            )
        q0 = optimize.bisect(
            self._shooting_sign, low, high, xtol=1e-15, rtol=8.9e-16, maxiter=200
        )
        logger.debug("Ground state height found by shooting", q0=q0)
        return float(q0)

    def _solve_profile(self) -> None:
        start = self._initial(self.q0)
        if start is None:
            raise ConvergenceError("Shooting converged to a non-decaying height")
        s0, y0 = start
        threshold = _TAIL_HANDOVER * self.q0

        def reaches_tail(s: float, y: np.ndarray) -> float:
            return y[0] - threshold

        def turns_back(s: float, y: np.ndarray) -> float:
            return y[1]

        reaches_tail.terminal = True  # type: ignore[attr-defined]
        reaches_tail.direction = -1  # type: ignore[attr-defined]
        turns_back.terminal = True  # type: ignore[attr-defined]
        turns_back.direction = 1  # type: ignore[attr-defined]
        solution = integrate.solve_ivp(
            self._rhs,
            (s0, _SHOOTING_SPAN),
            y0,
            method="DOP853",
            events=(reaches_tail, turns_back),
            dense_output=True,
            rtol=1e-12,
            atol=1e-14,
        )
        self._dense = solution.sol
        self.s_start = s0
        self.s_handover = float(solution.t[-1])
        self.q_handover = float(solution.y[0, -1])

    def radial(self, a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Q and dQ/ds at radii ``a >= 0``."""
        inside = a <= self.s_handover
        q = np.empty_like(a)
        dq = np.empty_like(a)
        if np.any(inside):
            core = np.maximum(a[inside], self.s_start)
            values = self._dense(core)
            q[inside] = values[0]
            dq[inside] = values[1] * np.minimum(a[inside] / self.s_start, 1.0)
        outside = ~inside
        tail = self.q_handover * np.exp(-(a[outside] - self.s_handover))
        q[outside] = tail
        dq[outside] = -tail
        return q, dq


class GroundStateProfile:
    """The even positive decaying ground state Q, evaluable at arbitrary
    abscissae together with its first three derivatives.

    Attributes
    ----------
    nl : `NonlinearitySpec`
        The nonlinearity Q belongs to.
    grid : `GridSpec`
        The grid the profile was validated on.
    samples : `np.ndarray`
        Q on ``grid.x``.
    """

    def __init__(self, nl: NonlinearitySpec, grid: GridSpec) -> None:
        self.nl = nl
        self.grid = grid
        self._shot = None if nl.is_pure_power else _ShotProfile(nl)
        self.samples = self.values(grid.x)
        self.samples.setflags(write=False)

    @property
    def peak(self) -> float:
        return float(self.values(np.zeros(1))[0])

    def _amplitude(self) -> float:
        p = self.nl.p
        return ((p + 1.0) / 2.0) ** (1.0 / (p - 1.0)) * self.nl.coeff ** (
            -1.0 / (p - 1.0)
        )

    def values(self, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if self._shot is not None:
            q, _ = self._shot.radial(np.abs(s))
        else:
            p = self.nl.p
            log_q = math.log(self._amplitude()) + (2.0 / (p - 1.0)) * _log_sech(
                0.5 * (p - 1.0) * s
            )
            q = np.exp(log_q)
        q = np.where(q < UNDERFLOW, 0.0, q)
        return q

    def derivative(self, s: np.ndarray, order: int = 1) -> np.ndarray:
        """Q^(order)(s) for order 0..3, using Q'' = Q - f(Q) and
        Q''' = Q'(1 - f'(Q)).
        """
        s = np.asarray(s, dtype=float)
        q = self.values(s)
        if order == 0:
            return q
        if self._shot is not None:
            _, dq_radial = self._shot.radial(np.abs(s))
            dq = np.sign(s) * dq_radial
        else:
            dq = -np.tanh(0.5 * (self.nl.p - 1.0) * s) * q
        dq = np.where(np.abs(dq) < UNDERFLOW, 0.0, dq)
        if order == 1:
            return dq
        if order == 2:
            return q - self.nl.f(q)
        if order == 3:
            return dq * (1.0 - self.nl.df(q))
        raise ConfigError(f"Derivatives of Q are available up to order 3, got {order}")

    def __call__(self, s: np.ndarray) -> np.ndarray:
        return self.values(s)


def ground_state_residual(
    samples: np.ndarray, nl: NonlinearitySpec, grid: GridSpec
) -> float:
    """Max-norm of Q'' - Q + f(Q) with the second-order stencil."""
    return float(
        np.max(np.abs(fd_derivative(samples, grid, order=2) - samples + nl.f(samples)))
    )


def ground_state(
    nl: NonlinearitySpec, grid: GridSpec, tolerances: Tolerances | None = None
) -> GroundStateProfile:
    """Build Q for ``nl`` and validate it on ``grid``.

    Parameters
    ----------
    nl : `NonlinearitySpec`
        Pure power or registered hook.
    grid : `GridSpec`
        Grid that has to contain the profile.
    tolerances : `Tolerances`, optional
        Tail and residual thresholds.

    Returns
    -------
    profile : `GroundStateProfile`
        Validated profile; ``profile.samples`` holds Q on the grid.

    Raises
    ------
    DomainTooSmallError
        Raised if Q(L) is above ``tolerances.tail_ratio * Q(0)``.
    ConvergenceError
        Raised if the discrete residual is above its bound.
    """
    tolerances = tolerances or Tolerances()
    profile = GroundStateProfile(nl, grid)
    peak = profile.peak
    edge = float(profile.values(np.array([grid.half_width]))[0])
    if edge > tolerances.tail_ratio * peak:
        raise DomainTooSmallError(
            f"Q(L)/Q(0) = {edge / peak:.3e} exceeds {tolerances.tail_ratio:.1e};"
            f" increase grid.half_width beyond {grid.half_width}"
        )
    residual = ground_state_residual(profile.samples, nl, grid)
    bound = tolerances.residual_factor * grid.h**2 * max(1.0, peak)
    if residual > bound:
        raise ConvergenceError(
            f"Ground state residual {residual:.3e} exceeds {bound:.3e} on n={grid.n}"
        )
    logger.debug("Ground state ready", peak=peak, residual=residual, n=grid.n)
    return profile


def _contracted(spec: SolitonSpec, t: float, grid: GridSpec) -> np.ndarray:
    center = spec.center(t)
    if abs(float(wrap_offset(center, grid))) > 0.9 * grid.half_width:
        logger.warning(
            "Soliton center is within 10% of the domain edge",
            center=center,
            half_width=grid.half_width,
            t=t,
        )
    return spec.gamma * wrap_offset(grid.x - center, grid)


def boost(
    profile: GroundStateProfile, spec: SolitonSpec, t: float, grid: GridSpec
) -> FieldState:
    """R(t) = (Q(y), -beta gamma Q'(y)) with y = gamma (x - x0 - beta t)."""
    y = _contracted(spec, t, grid)
    return FieldState(
        u1=profile.values(y),
        u2=-spec.beta * spec.gamma * profile.derivative(y, 1),
        t=t,
    )


def boost_derivative(
    profile: GroundStateProfile,
    spec: SolitonSpec,
    t: float,
    grid: GridSpec,
    order: int = 1,
) -> np.ndarray:
    """Spatial derivative of order 1 or 2 of the boosted soliton, as a
    (2, n) pair.
    """
    if order not in (1, 2):
        raise ConfigError(f"order must be 1 or 2, got {order}")
    y = _contracted(spec, t, grid)
    gamma = spec.gamma
    return np.stack(
        [
            gamma**order * profile.derivative(y, order),
            -spec.beta * gamma ** (order + 1) * profile.derivative(y, order + 1),
        ]
    )


def multi_profile(
    specs: Sequence[SolitonSpec],
    profile: GroundStateProfile,
    t: float,
    grid: GridSpec,
) -> FieldState:
    betas = [spec.beta for spec in specs]
    if len(set(betas)) != len(betas):
        raise ConfigError(f"Soliton velocities must be distinct, got {betas}")
    total = FieldState.zeros(grid.n, t)
    for spec in specs:
        soliton = boost(profile, spec, t, grid)
        total.u1 += soliton.u1
        total.u2 += soliton.u2
    return total


def tail_rates(
    profile: GroundStateProfile, window: tuple[float, float] = (4.0, 12.0)
) -> list[float]:
    """Fitted exponential decay rates of Q, Q', Q'', Q''' on ``window``."""
    from lsst.ts.nlkg.analysis.rates import fit_rate

    s = np.linspace(window[0], window[1], 64)
    rates = []
    for order in range(4):
        values = np.abs(profile.derivative(s, order))
        keep = values > 1e3 * UNDERFLOW
        rate, _, _ = fit_rate(s[keep], values[keep])
        rates.append(rate)
    return rates


def translation_quotient(
    profile: GroundStateProfile, grid: GridSpec, shifts: np.ndarray
) -> np.ndarray:
    """||Q(. + h) - Q||^2_{H1} / h^2 for each shift h."""
    x = grid.x
    q = profile.values(x)
    dq = profile.derivative(x, 1)
    quotients = []
    for shift in np.atleast_1d(shifts):
        diff = profile.values(x + shift) - q
        ddiff = profile.derivative(x + shift, 1) - dq
        norm2 = grid.h * float(np.sum(diff * diff + ddiff * ddiff))
        quotients.append(norm2 / float(shift) ** 2)
    return np.asarray(quotients)
