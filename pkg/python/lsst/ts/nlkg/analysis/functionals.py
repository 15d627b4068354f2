"""Localized quadratic functionals: the arctan partition of unity and
F_W, the piecewise-linear velocity profile chi with F_z, F_eps and
F_{eps,Omega}, and the almost-monotonicity diagnostics built on them.
"""

from dataclasses import field
from typing import Sequence

import numpy as np
from lsst.ts.nlkg.analysis.projections import (
    bundle_profiles,
    modulate_full,
    project_alphas,
)
from lsst.ts.nlkg.config import nlkg_logger
from lsst.ts.nlkg.discretization import derivative, differentiation_matrices
from lsst.ts.nlkg.errors import ConfigError, SpectralError
from lsst.ts.nlkg.models.models import (
    AnalysisConfig,
    FieldState,
    GridSpec,
    NonlinearitySpec,
    SolitonSpec,
)
from lsst.ts.nlkg.models.models_helpers import (
    default_decay_gamma,
    default_delta,
    velocity_order,
)
from lsst.ts.nlkg.spectral import (
    Pair,
    SpectralBundle,
    as_pair,
    energy_gram,
    energy_norm,
)
from pydantic import BaseModel, ConfigDict
from pydantic.dataclasses import dataclass
from scipy import linalg, optimize

__all__ = [
    "psi",
    "cutoff_psi_phi",
    "lyapunov_FW",
    "localized_coercivity",
    "virtual_origin",
    "ChiProfile",
    "chi_profile",
    "lyapunov_Fz_Feps",
    "F_Omega",
    "FunctionalTrack",
    "track_functionals",
    "MonotonicityReport",
    "check_monotonicity",
    "RelationReport",
    "functional_relation",
]

logger = nlkg_logger()

# exp(-z) stays finite for |z| below this.
_EXP_CLIP = 700.0


def psi(z: np.ndarray) -> np.ndarray:
    """(2/pi) arctan(e^{-z}), decreasing from 1 to 0."""
    return (2.0 / np.pi) * np.arctan(np.exp(-np.clip(z, -_EXP_CLIP, _EXP_CLIP)))


def cutoff_psi_phi(
    t: float, grid: GridSpec, specs: Sequence[SolitonSpec]
) -> tuple[np.ndarray, list[int]]:
    """Partition of unity phi_k following the solitons by increasing
    velocity.

    Returns
    -------
    phis : `np.ndarray`
        (N, n) array, ``phis[k]`` localizes around soliton ``order[k]``.
    order : `list` [`int`]
        Soliton indices sorted by increasing velocity.
    """
    if not t > 0.0:
        raise ConfigError(f"The cut-offs need t > 0, got {t}")
    order = velocity_order(specs)
    count = len(order)
    if count == 1:
        return np.ones((1, grid.n)), order
    x = grid.x
    root = np.sqrt(t)
    psis = []
    for k in range(count - 1):
        left, right = specs[order[k]], specs[order[k + 1]]
        middle = 0.5 * (left.beta + right.beta) * t + 0.5 * (left.x0 + right.x0)
        psis.append(psi((x - middle) / root))
    phis = np.empty((count, grid.n))
    phis[0] = psis[0]
    for k in range(1, count - 1):
        phis[k] = psis[k] - psis[k - 1]
    phis[-1] = 1.0 - psis[-1]
    return phis, order


def _first_derivative(u: np.ndarray, grid: GridSpec, stencil: str) -> np.ndarray:
    return derivative(u, grid, 1, stencil)


def lyapunov_FW(
    w: Pair,
    t: float,
    bundles: Sequence[SpectralBundle],
    phis: np.ndarray,
    order: Sequence[int],
    stencil: str = "spectral",
) -> float:
    """Sum over k of the quadrature of

        (w1^2 + w1_x^2 + w2^2 - f'(Q_k) w1^2 + 2 beta_k w1_x w2) phi_k.
    """
    pair = as_pair(w)
    grid = bundles[0].grid
    dw = _first_derivative(pair[0], grid, stencil)
    base = pair[0] ** 2 + dw**2 + pair[1] ** 2
    total = 0.0
    for weight, index in zip(phis, order):
        bundle = bundles[index]
        q = bundle.soliton_at(t).u1
        density = (
            base
            - bundle.nl.df(q) * pair[0] ** 2
            + 2.0 * bundle.spec.beta * dw * pair[1]
        )
        total += grid.h * float(np.sum(density * weight))
    return total


def localized_coercivity(
    bundles: Sequence[SpectralBundle], t: float, stencil: str = "spectral"
) -> float:
    """Smallest F_W(V)/||V||^2 over V orthogonal to every d_x R_k and
    Z_{+-,k} at time t.

    Raises
    ------
    SpectralError
        Raised when the projected form is not positive.
    """
    grid = bundles[0].grid
    n = grid.n
    h = grid.h
    d1, _ = differentiation_matrices(grid, stencil)
    phis, order = cutoff_psi_phi(t, grid, [bundle.spec for bundle in bundles])
    form = np.zeros((2 * n, 2 * n))
    for weight, index in zip(phis, order):
        bundle = bundles[index]
        q = bundle.soliton_at(t).u1
        beta = bundle.spec.beta
        weighted_d1 = weight[:, None] * d1
        form[:n, :n] += d1.T @ weighted_d1 + np.diag(weight * (1.0 - bundle.nl.df(q)))
        form[:n, n:] += beta * weighted_d1.T
        form[n:, :n] += beta * weighted_d1
        form[n:, n:] += np.diag(weight)
    form *= h
    rows = []
    for profiles in bundle_profiles(bundles, t):
        rows.extend(
            np.ravel(p) for p in (profiles.dxr, profiles.zplus, profiles.zminus)
        )
    basis = linalg.null_space(h * np.array(rows))
    projected = basis.T @ form @ basis
    gram = basis.T @ energy_gram(grid, stencil) @ basis
    mu = float(
        linalg.eigh(
            0.5 * (projected + projected.T),
            0.5 * (gram + gram.T),
            eigvals_only=True,
            subset_by_index=[0, 0],
        )[0]
    )
    if not mu > 0.0:
        raise SpectralError(
            f"Localized functional is not coercive at t={t} (mu={mu:.3e})"
        )
    return mu


def virtual_origin(specs: Sequence[SolitonSpec]) -> tuple[float, float]:
    """Time offset tau and point x* with x0_i ~ beta_i tau + x*, so that
    the solitons sit near beta_i (t + tau) + x* (exactly for N <= 2).
    """
    if len(specs) == 1:
        return 0.0, specs[0].x0
    system = np.array([[spec.beta, 1.0] for spec in specs])
    rhs = np.array([spec.x0 for spec in specs])
    (tau, origin), *_ = np.linalg.lstsq(system, rhs, rcond=None)
    return float(tau), float(origin)


@dataclass(config=ConfigDict(arbitrary_types_allowed=True))
class ChiProfile:
    """Velocity profile chi(t, .): plateaus beta_k around each soliton,
    ramps of slope 1/((1 - 2 delta) s) on Omega(t) between them.

    Positions are measured from the virtual origin x* and times by
    s = t + tau (see `virtual_origin`). When every x0 is zero, or for a
    single soliton, tau = x* = 0 and the ramp slope is 1/((1 - 2 delta) t)
    in the lab frame.
    """

    t: float
    delta: float
    elapsed: float
    origin: float
    betas: list[float]
    upper: list[float] = field(default_factory=list)
    lower: list[float] = field(default_factory=list)

    @classmethod
    def build(
        cls, t: float, delta: float, specs: Sequence[SolitonSpec]
    ) -> "ChiProfile":
        if not 0.0 < delta < 0.25:
            raise ConfigError(f"delta must lie in (0, 1/4), got {delta}")
        tau, origin = virtual_origin(specs)
        elapsed = t + tau
        if not elapsed > 0.0:
            raise ConfigError(
                f"chi needs t + tau > 0, got t={t} with tau={tau:.3f}"
            )
        betas = sorted(spec.beta for spec in specs)
        gaps = [b - a for a, b in zip(betas[:-1], betas[1:])]
        upper = [b + delta * g for b, g in zip(betas[:-1], gaps)]
        lower = [b - delta * g for b, g in zip(betas[1:], gaps)]
        for index, (right, left) in enumerate(zip(upper, lower)):
            if not right < left:
                raise ConfigError(
                    f"Plateaus {index + 1} and {index + 2} overlap for delta={delta}"
                )
        return cls(
            t=t,
            delta=delta,
            elapsed=elapsed,
            origin=origin,
            betas=betas,
            upper=upper,
            lower=lower,
        )

    def _ratio(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.origin) / self.elapsed

    @property
    def slope(self) -> float:
        return 1.0 / ((1.0 - 2.0 * self.delta) * self.elapsed)

    def values(self, x: np.ndarray) -> np.ndarray:
        ratio = self._ratio(x)
        if len(self.betas) == 1:
            return np.full(ratio.shape, self.betas[0])
        knots = np.ravel(np.column_stack([self.upper, self.lower]))
        levels = np.ravel(np.column_stack([self.betas[:-1], self.betas[1:]]))
        return np.interp(ratio, knots, levels)

    def omega(self, x: np.ndarray) -> np.ndarray:
        ratio = self._ratio(x)
        mask = np.zeros(ratio.shape, dtype=bool)
        for right, left in zip(self.upper, self.lower):
            mask |= (ratio > right) & (ratio < left)
        return mask

    def dx(self, x: np.ndarray) -> np.ndarray:
        return np.where(self.omega(x), self.slope, 0.0)

    def dt(self, x: np.ndarray) -> np.ndarray:
        offset = np.asarray(x, dtype=float) - self.origin
        return np.where(self.omega(x), -offset * self.slope / self.elapsed, 0.0)

    def intervals(self) -> list[tuple[float, float]]:
        """Omega(t) as ordered, disjoint intervals in x."""
        return [
            (self.origin + right * self.elapsed, self.origin + left * self.elapsed)
            for right, left in zip(self.upper, self.lower)
        ]


def chi_profile(
    t: float, x: np.ndarray | float, delta: float, specs: Sequence[SolitonSpec]
) -> np.ndarray:
    return ChiProfile.build(t, delta, specs).values(np.asarray(x, dtype=float))


def lyapunov_Fz_Feps(
    pair: Pair,
    chi: np.ndarray,
    nl: NonlinearitySpec,
    background: np.ndarray,
    grid: GridSpec,
    stencil: str = "spectral",
    drop_potential: bool = False,
) -> float:
    """int {z_x^2 + z_t^2 + z^2 - f'(phi) z^2} + 2 int chi z_x z_t, where
    phi is the ``background`` (sum of the soliton profiles).

    The same form evaluated on (eps, eps2) gives F_eps.
    """
    z = as_pair(pair)
    dz = _first_derivative(z[0], grid, stencil)
    density = dz**2 + z[1] ** 2 + z[0] ** 2 + 2.0 * chi * dz * z[1]
    if not drop_potential:
        density = density - nl.df(background) * z[0] ** 2
    return grid.h * float(np.sum(density))


def F_Omega(
    pair: Pair, chi: ChiProfile, grid: GridSpec, stencil: str = "spectral"
) -> float:
    """int over Omega(t) of eps_x^2 + eps2^2 + 2 chi eps_x eps2."""
    e = as_pair(pair)
    x = grid.x
    de = _first_derivative(e[0], grid, stencil)
    density = de**2 + e[1] ** 2 + 2.0 * chi.values(x) * de * e[1]
    return grid.h * float(np.sum(density[chi.omega(x)]))


@dataclass(config=ConfigDict(arbitrary_types_allowed=True))
class FunctionalTrack:
    """Functional series sampled along a trajectory."""

    delta: float
    lambda_exp: float
    gamma: float
    times: list[float] = field(default_factory=list)
    F_W: list[float] = field(default_factory=list)
    F_z: list[float] = field(default_factory=list)
    F_eps: list[float] = field(default_factory=list)
    F_eps_omega: list[float] = field(default_factory=list)
    alpha_plus: list[list[float]] = field(default_factory=list)
    alpha_minus: list[list[float]] = field(default_factory=list)
    z_norm: list[float] = field(default_factory=list)
    omega: list[list[tuple[float, float]]] = field(default_factory=list)

    def series(self) -> dict[str, np.ndarray]:
        columns: dict[str, np.ndarray] = {
            "t": np.array(self.times),
            "F_W": np.array(self.F_W),
            "F_z": np.array(self.F_z),
            "F_eps": np.array(self.F_eps),
            "F_eps_omega": np.array(self.F_eps_omega),
            "z_norm": np.array(self.z_norm),
        }
        count = len(self.alpha_plus[0]) if self.alpha_plus else 0
        for k in range(count):
            columns[f"alpha_plus_{k + 1}"] = np.array(
                [row[k] for row in self.alpha_plus]
            )
            columns[f"alpha_minus_{k + 1}"] = np.array(
                [row[k] for row in self.alpha_minus]
            )
        return columns


def track_functionals(
    states: Sequence[FieldState],
    bundles: Sequence[SpectralBundle],
    cfg: AnalysisConfig,
    sigma: float,
    stencil: str = "spectral",
) -> FunctionalTrack:
    """Evaluate F_W, F_z, F_eps and F_{eps,Omega} of Z = U - sum R_k at
    every state.

    eps is the remainder of `modulate_full`; alpha_{+-,k} = <Z, Z_{+-,k}>.
    """
    specs = [bundle.spec for bundle in bundles]
    grid = bundles[0].grid
    nl = bundles[0].nl
    delta = cfg.delta if cfg.delta is not None else default_delta(specs)
    gamma = (
        cfg.decay_gamma
        if cfg.decay_gamma is not None
        else default_decay_gamma(specs, sigma, delta)
    )
    track = FunctionalTrack(
        delta=delta, lambda_exp=cfg.resolved_lambda(), gamma=gamma
    )
    x = grid.x
    for state in states:
        t = state.t
        profiles = bundle_profiles(bundles, t)
        solitons = [bundle.soliton_at(t).pair for bundle in bundles]
        reference = np.sum(solitons, axis=0)
        z = state.pair - reference
        background = reference[0]
        chi = ChiProfile.build(t, delta, specs)
        chi_values = chi.values(x)
        phis, order = cutoff_psi_phi(t, grid, specs)
        sample = modulate_full(z, bundles, t, profiles)
        alpha_plus, alpha_minus = project_alphas(
            state, reference, bundles, t, profiles
        )
        track.times.append(float(t))
        track.F_W.append(lyapunov_FW(z, t, bundles, phis, order, stencil))
        track.F_z.append(lyapunov_Fz_Feps(z, chi_values, nl, background, grid, stencil))
        track.F_eps.append(
            lyapunov_Fz_Feps(
                sample.remainder, chi_values, nl, background, grid, stencil
            )
        )
        track.F_eps_omega.append(F_Omega(sample.remainder, chi, grid, stencil))
        track.alpha_plus.append([float(v) for v in alpha_plus])
        track.alpha_minus.append([float(v) for v in alpha_minus])
        track.z_norm.append(energy_norm(z, grid, stencil))
        track.omega.append(chi.intervals())
    logger.debug(
        "Functionals tracked", samples=len(track.times), delta=delta, gamma=gamma
    )
    return track


class MonotonicityReport(BaseModel):
    """Defect D = -F_eps' - (lambda/t) F_eps against the fitted envelope
    c1 (1/t) sum alpha_+^2 + c2 (e^{-gamma t} ||Z||^2 + ||Z||^3).
    """

    lambda_exp: float
    gamma: float
    c1: float
    c2: float
    samples: int
    max_defect: float
    max_envelope: float
    violations: list[float]
    omega_defect_max: float | None = None
    weighted_tail_slope: float | None = None
    passed: bool


def check_monotonicity(
    times: Sequence[float] | np.ndarray,
    F_eps: Sequence[float] | np.ndarray,
    alpha_plus: np.ndarray,
    z_norm: Sequence[float] | np.ndarray,
    lambda_exp: float,
    gamma: float,
    envelope_factor: float = 3.0,
    F_z: Sequence[float] | np.ndarray | None = None,
    F_eps_omega: Sequence[float] | np.ndarray | None = None,
    relative_slack: float = 1.0e-3,
) -> MonotonicityReport:
    """Flag interior samples where D(t) exceeds ``envelope_factor`` times
    the fitted envelope (plus a slack relative to max |F_eps|).

    Raises
    ------
    ConfigError
        Raised with fewer than three samples.
    """
    t = np.asarray(times, dtype=float)
    f = np.asarray(F_eps, dtype=float)
    if t.size < 3:
        raise ConfigError(f"Monotonicity check needs 3 samples, got {t.size}")
    if np.any(t <= 0.0):
        raise ConfigError("Monotonicity check needs positive times")
    alpha = np.atleast_2d(np.asarray(alpha_plus, dtype=float))
    if alpha.shape[0] != t.size:
        alpha = alpha.T
    norms = np.asarray(z_norm, dtype=float)
    slope = np.gradient(f, t)
    interior = slice(1, -1)
    defect = (-slope - lambda_exp / t * f)[interior]
    first = (np.sum(alpha**2, axis=1) / t)[interior]
    second = (np.exp(-gamma * t) * norms**2 + norms**3)[interior]
    basis = np.column_stack([first, second])
    if np.any(basis):
        (c1, c2), _ = optimize.nnls(basis, np.maximum(defect, 0.0))
    else:
        c1 = c2 = 0.0
    envelope = c1 * first + c2 * second
    slack = relative_slack * float(np.max(np.abs(f))) + 1e-14
    flagged = defect > envelope_factor * envelope + slack
    violations = [float(v) for v in t[interior][flagged]]

    omega_defect_max = None
    if F_z is not None and F_eps_omega is not None:
        fz_slope = np.gradient(np.asarray(F_z, dtype=float), t)
        omega = np.asarray(F_eps_omega, dtype=float)
        omega_defect_max = float(np.max((-fz_slope - lambda_exp / t * omega)[interior]))

    weighted_tail_slope = None
    tail = slice(t.size // 2, None)
    if t[tail].size >= 2:
        weighted = t[tail] ** lambda_exp * np.abs(f[tail])
        weighted_tail_slope = float(np.polyfit(t[tail], weighted, 1)[0])

    report = MonotonicityReport(
        lambda_exp=lambda_exp,
        gamma=gamma,
        c1=float(c1),
        c2=float(c2),
        samples=int(defect.size),
        max_defect=float(np.max(defect)),
        max_envelope=float(np.max(envelope)),
        violations=violations,
        omega_defect_max=omega_defect_max,
        weighted_tail_slope=weighted_tail_slope,
        passed=not violations,
    )
    if violations:
        logger.warning(
            "Monotonicity defect above the fitted envelope",
            count=len(violations),
            first=violations[0],
        )
    return report


class RelationReport(BaseModel):
    """G = F_eps - F_z + 2 sum alpha_- alpha_+ compared with
    e^{-gamma t} ||Z||^2.
    """

    max_defect: float
    constant: float
    samples: int


def functional_relation(track: FunctionalTrack) -> RelationReport:
    t = np.array(track.times)
    if t.size == 0:
        raise ConfigError("Empty functional track")
    cross = np.sum(np.array(track.alpha_plus) * np.array(track.alpha_minus), axis=1)
    defect = np.abs(np.array(track.F_eps) - np.array(track.F_z) + 2.0 * cross)
    scale = np.exp(-track.gamma * t) * np.array(track.z_norm) ** 2
    ratios = np.where(scale > 0.0, defect / np.where(scale > 0.0, scale, 1.0), 0.0)
    return RelationReport(
        max_defect=float(np.max(defect)),
        constant=float(np.max(ratios)),
        samples=int(t.size),
    )
