"""Exponential and power-law rate fits, plateau extraction of the
amplitudes A_j and the decay-rate verifier for perturbed linear decay.
"""

from typing import Sequence

import numpy as np
from lsst.ts.nlkg.errors import ConfigError, NoPlateauError
from pydantic import BaseModel

__all__ = [
    "fit_rate",
    "fit_power_law",
    "PlateauEstimate",
    "plateau",
    "extract_A",
    "DecayVerification",
    "verify_decay",
    "synthetic_series",
]

MIN_WINDOW_SAMPLES = 5


class PlateauEstimate(BaseModel):
    value: float
    error: float
    window: tuple[float, float]


def _window(
    times: np.ndarray, values: np.ndarray, window: tuple[float, float] | None
) -> tuple[np.ndarray, np.ndarray]:
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.shape != values.shape:
        raise ConfigError(f"Shapes {times.shape} and {values.shape} differ")
    if window is not None:
        low, high = min(window), max(window)
        keep = (times >= low) & (times <= high)
        times, values = times[keep], values[keep]
    if times.size < MIN_WINDOW_SAMPLES:
        raise ConfigError(
            f"Rate window holds {times.size} samples, at least"
            f" {MIN_WINDOW_SAMPLES} are needed"
        )
    if np.ptp(times) == 0.0:
        raise ConfigError("Rate window has zero length")
    return times, values


def _linear_fit(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    slope, intercept = np.polyfit(x, y, 1)
    residual = y - (slope * x + intercept)
    total = float(np.sum((y - np.mean(y)) ** 2))
    r2 = 1.0 if total == 0.0 else 1.0 - float(np.sum(residual**2)) / total
    return float(slope), float(intercept), r2


def fit_rate(
    times: Sequence[float] | np.ndarray,
    values: Sequence[float] | np.ndarray,
    window: tuple[float, float] | None = None,
) -> tuple[float, float, float]:
    """Least-squares line through (t, log value).

    Returns
    -------
    rate, intercept, r2 : `float`
        ``value ~ exp(intercept + rate t)``.

    Raises
    ------
    ConfigError
        Raised on non-positive values or a window with fewer than five
        samples.
    """
    t, v = _window(np.asarray(times), np.asarray(values), window)
    if np.any(v <= 0.0) or not np.all(np.isfinite(v)):
        raise ConfigError("fit_rate needs positive finite values")
    return _linear_fit(t, np.log(v))


def fit_power_law(
    times: Sequence[float] | np.ndarray,
    values: Sequence[float] | np.ndarray,
    window: tuple[float, float] | None = None,
) -> tuple[float, float, float]:
    """Fit value ~ C t^(-alpha); returns (alpha, log C, r2)."""
    t, v = _window(np.asarray(times), np.asarray(values), window)
    if np.any(t <= 0.0) or np.any(v <= 0.0):
        raise ConfigError("fit_power_law needs positive times and values")
    slope, intercept, r2 = _linear_fit(np.log(t), np.log(v))
    return -slope, intercept, r2


def plateau(
    times: np.ndarray,
    values: np.ndarray,
    fraction: float = 1.0 / 3.0,
    tolerance: float = 0.05,
    abs_tolerance: float = 1e-6,
) -> PlateauEstimate:
    """Constant fitted on the latest ``fraction`` of the time span, with
    the largest deviation as its error bar.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.size == 0:
        raise ConfigError("Cannot extract a plateau from an empty series")
    start = times.max() - fraction * np.ptp(times)
    keep = times >= start
    window_values = values[keep]
    value = float(np.mean(window_values))
    error = float(np.max(np.abs(window_values - value)))
    if error > max(tolerance * abs(value), abs_tolerance):
        raise NoPlateauError(
            f"Series drifts by {error:.3e} around {value:.6g} on its late window"
        )
    return PlateauEstimate(
        value=value, error=error, window=(float(start), float(times.max()))
    )


def extract_A(
    times: np.ndarray,
    alpha_minus: np.ndarray,
    e_rate: float,
    fraction: float = 1.0 / 3.0,
    tolerance: float = 0.05,
    abs_tolerance: float = 1e-6,
) -> PlateauEstimate:
    """Plateau of e^{e_j t} alpha_{-,j}(t)."""
    times = np.asarray(times, dtype=float)
    rescaled = np.exp(e_rate * times) * np.asarray(alpha_minus, dtype=float)
    return plateau(times, rescaled, fraction, tolerance, abs_tolerance)


class DecayVerification(BaseModel):
    """Outcome of the decay-rate verifier on one series."""

    rho: float
    start_time: float
    tail_integral: float
    rate: float
    r2: float
    weighted_sup: float
    gronwall_bound: float
    bounded: bool
    passed: bool


def verify_decay(
    times: np.ndarray, series: np.ndarray, rho: float, tolerance: float = 0.05
) -> DecayVerification:
    """Check that |A' + rho A| <= xi(t) sup_{s >= t} |A(s)| with integrable
    xi forces |A(t)| <= c e^{-rho t}.

    xi is measured from the series, t1 is the first time with
    int_{t1}^{end} xi < 1/2 and the fitted rate on [t1, end] must be at most
    -rho + ``tolerance``. With M = sup e^{rho t}|A| on [t1, end], the
    integral bound gives M <= 2 e^{rho T}|A(T)|.
    """
    times = np.asarray(times, dtype=float)
    series = np.asarray(series, dtype=float)
    if times.size < 2 * MIN_WINDOW_SAMPLES:
        raise ConfigError("verify_decay needs at least ten samples")
    derivative = np.gradient(series, times)
    magnitude = np.abs(series)
    tail_sup = np.maximum.accumulate(magnitude[::-1])[::-1]
    xi = np.abs(derivative + rho * series) / np.where(tail_sup > 0.0, tail_sup, 1.0)
    steps = np.diff(times)
    pieces = 0.5 * (xi[1:] + xi[:-1]) * steps
    tail_integral = np.concatenate((np.cumsum(pieces[::-1])[::-1], [0.0]))
    candidates = np.flatnonzero(tail_integral < 0.5)
    start = int(candidates[0])
    if times.size - start < MIN_WINDOW_SAMPLES:
        start = times.size - MIN_WINDOW_SAMPLES
    window = (float(times[start]), float(times[-1]))
    rate, _, r2 = fit_rate(times, magnitude, window)
    weighted = np.exp(rho * (times[start:] - times[-1])) * magnitude[start:]
    weighted_sup = float(np.max(weighted))
    gronwall_bound = 2.0 * float(magnitude[-1])
    bounded = weighted_sup <= gronwall_bound * (1.0 + 1e-6)
    passed = bounded and rate <= -rho + tolerance
    return DecayVerification(
        rho=rho,
        start_time=window[0],
        tail_integral=float(tail_integral[start]),
        rate=rate,
        r2=r2,
        weighted_sup=weighted_sup,
        gronwall_bound=gronwall_bound,
        bounded=bounded,
        passed=passed,
    )


def synthetic_series(
    rho: float,
    kappa: float,
    amplitude: float,
    t_end: float = 30.0,
    samples: int = 601,
) -> tuple[np.ndarray, np.ndarray]:
    """e^{-rho t}(1 + amplitude e^{-kappa t}) on [0, t_end]."""
    times = np.linspace(0.0, t_end, samples)
    return times, np.exp(-rho * times) * (1.0 + amplitude * np.exp(-kappa * times))
