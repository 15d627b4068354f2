"""Linearized operators around a boosted soliton and their eigen-objects.

Conventions (comoving coordinate y, Q_b(y) = Q(gamma y)):

    L_b  = -d^2 + 1 - f'(Q_b)
    H_b  = [[L_b, -b d], [b d, 1]]
    J    = [[0, 1], [-1, 0]]
    calH = -H_b J = [[-b d, -L_b], [1, -b d]]

The linearized flow in the comoving frame is dW/dt = J H_b W, so
J H_b (J Z) = -mu (J Z) whenever calH Z = mu Z.
"""

import dataclasses
from dataclasses import field
from typing import Any, NamedTuple, Sequence

import numpy as np
from lsst.ts.nlkg.config import nlkg_logger
from lsst.ts.nlkg.discretization import (
    derivative,
    differentiation_matrices,
    fourier_shift,
    trig_interpolate,
)
from lsst.ts.nlkg.errors import ConfigError, GridMismatchError, SpectralError
from lsst.ts.nlkg.models.models import (
    FieldState,
    GridSpec,
    NonlinearitySpec,
    SolitonSpec,
    Tolerances,
)
from lsst.ts.nlkg.models.models_helpers import wrap_offset
from lsst.ts.nlkg.profiles import (
    UNDERFLOW,
    GroundStateProfile,
    boost,
    boost_derivative,
    ground_state,
)
from pydantic import ConfigDict
from pydantic.dataclasses import dataclass
from scipy import linalg
from scipy.sparse import linalg as sparse_linalg

__all__ = [
    "Pair",
    "as_pair",
    "apply_J",
    "inner_product",
    "energy_norm",
    "OperatorMatrix",
    "J_matrix",
    "build_L",
    "build_H",
    "build_calH",
    "build_calH_direct",
    "ground_eigenpair",
    "low_spectrum",
    "EigenProfile",
    "BundleProfiles",
    "SpectralBundle",
    "boosted_pairs",
    "energy_gram",
    "coercivity_mu",
    "coercivity_constant",
    "coercivity_defect",
    "prepare_bundles",
    "interaction_overlaps",
]

logger = nlkg_logger()

Pair = FieldState | np.ndarray

# Relative height below which the eigenfunction is replaced by its tail.
TAIL_MATCH_RATIO = 1.0e-7


def as_pair(value: Pair) -> np.ndarray:
    if isinstance(value, FieldState):
        return value.pair
    pair = np.asarray(value, dtype=float)
    if pair.ndim != 2 or pair.shape[0] != 2:
        raise ConfigError(f"Expected a (2, n) pair, got shape {pair.shape}")
    return pair


def apply_J(value: Pair) -> np.ndarray:
    pair = as_pair(value)
    return np.stack([pair[1], -pair[0]])


def inner_product(u: Pair, v: Pair, grid: GridSpec) -> float:
    """<U, V> = int (u1 v1 + u2 v2) dx by the trapezoidal rule."""
    a = as_pair(u)
    b = as_pair(v)
    if a.shape != b.shape or a.shape[1] != grid.n:
        raise GridMismatchError(
            f"Cannot pair shapes {a.shape} and {b.shape} on a grid with n={grid.n}"
        )
    return float(grid.h * np.sum(a * b))


def energy_norm(u: Pair, grid: GridSpec, stencil: str = "spectral") -> float:
    """H1 x L2 norm."""
    pair = as_pair(u)
    if pair.shape[1] != grid.n:
        raise GridMismatchError(f"State has {pair.shape[1]} samples, grid has {grid.n}")
    du = derivative(pair[0], grid, 1, stencil)
    return float(
        np.sqrt(grid.h * np.sum(pair[0] ** 2 + du**2 + pair[1] ** 2))
    )


@dataclass(config=ConfigDict(arbitrary_types_allowed=True))
class OperatorMatrix:
    """A discretized operator on ``grid``.

    ``matrix`` is dense; it is `None` for a scalar operator assembled
    matrix-free (``potential`` then holds the multiplication part).
    """

    kind: str
    grid: GridSpec
    stencil: str = "spectral"
    spec: SolitonSpec | None = None
    matrix: np.ndarray | None = None
    potential: np.ndarray | None = None

    @property
    def size(self) -> int:
        if self.matrix is not None:
            return int(self.matrix.shape[0])
        return self.grid.n

    def apply(self, vector: np.ndarray) -> np.ndarray:
        if self.matrix is not None:
            return self.matrix @ vector
        if self.potential is None:
            raise ConfigError(f"Operator {self.kind} has neither matrix nor potential")
        return (
            -derivative(vector, self.grid, 2, self.stencil)
            + vector
            - self.potential * vector
        )

    def symmetry_defect(self) -> float:
        if self.matrix is None:
            return 0.0
        return float(np.max(np.abs(self.matrix - self.matrix.T)))


def J_matrix(n: int) -> np.ndarray:
    eye = np.eye(n)
    zero = np.zeros((n, n))
    return np.block([[zero, eye], [-eye, zero]])


def _potential(nl: NonlinearitySpec, q: GroundStateProfile | np.ndarray) -> np.ndarray:
    samples = q.samples if isinstance(q, GroundStateProfile) else np.asarray(q)
    return nl.df(samples)


def build_L(
    nl: NonlinearitySpec,
    q: GroundStateProfile | np.ndarray,
    grid: GridSpec,
    stencil: str = "spectral",
    dense_limit: int = 4096,
) -> OperatorMatrix:
    """-d^2 + 1 - f'(q) on ``grid``; ``q`` is a profile or grid samples.

    Above ``dense_limit`` points the operator is kept matrix-free.
    """
    potential = _potential(nl, q)
    if potential.shape != (grid.n,):
        raise GridMismatchError(
            f"Potential has shape {potential.shape}, grid has n={grid.n}"
        )
    if grid.n > dense_limit:
        return OperatorMatrix(kind="L", grid=grid, stencil=stencil, potential=potential)
    _, d2 = differentiation_matrices(grid, stencil)
    matrix = -d2 + np.diag(1.0 - potential)
    return OperatorMatrix(
        kind="L", grid=grid, stencil=stencil, matrix=matrix, potential=potential
    )


def _boosted_potential(
    nl: NonlinearitySpec, profile: GroundStateProfile, spec: SolitonSpec, grid: GridSpec
) -> np.ndarray:
    return nl.df(profile.values(spec.gamma * grid.x))


def build_H(
    nl: NonlinearitySpec,
    profile: GroundStateProfile,
    spec: SolitonSpec,
    grid: GridSpec,
    stencil: str = "spectral",
) -> OperatorMatrix:
    d1, d2 = differentiation_matrices(grid, stencil)
    n = grid.n
    l_beta = -d2 + np.diag(1.0 - _boosted_potential(nl, profile, spec, grid))
    beta = spec.beta
    matrix = np.block([[l_beta, -beta * d1], [beta * d1, np.eye(n)]])
    return OperatorMatrix(
        kind="H", grid=grid, stencil=stencil, spec=spec, matrix=matrix
    )


def build_calH(
    nl: NonlinearitySpec,
    profile: GroundStateProfile,
    spec: SolitonSpec,
    grid: GridSpec,
    stencil: str = "spectral",
) -> OperatorMatrix:
    """calH = -H J."""
    h_matrix = build_H(nl, profile, spec, grid, stencil).matrix
    assert h_matrix is not None
    return OperatorMatrix(
        kind="calH",
        grid=grid,
        stencil=stencil,
        spec=spec,
        matrix=-h_matrix @ J_matrix(grid.n),
    )


def build_calH_direct(
    nl: NonlinearitySpec,
    profile: GroundStateProfile,
    spec: SolitonSpec,
    grid: GridSpec,
    stencil: str = "spectral",
) -> OperatorMatrix:
    """calH assembled block by block."""
    d1, d2 = differentiation_matrices(grid, stencil)
    n = grid.n
    l_beta = -d2 + np.diag(1.0 - _boosted_potential(nl, profile, spec, grid))
    beta = spec.beta
    matrix = np.block([[-beta * d1, -l_beta], [np.eye(n), -beta * d1]])
    return OperatorMatrix(
        kind="calH", grid=grid, stencil=stencil, spec=spec, matrix=matrix
    )


def low_spectrum(operator: OperatorMatrix, count: int = 3) -> np.ndarray:
    if operator.matrix is None:
        raise ConfigError("low_spectrum needs an assembled matrix")
    return linalg.eigh(
        operator.matrix, eigvals_only=True, subset_by_index=[0, count - 1]
    )


def _normalize_eigenvector(vector: np.ndarray, grid: GridSpec) -> np.ndarray:
    vector = vector / np.sqrt(grid.h * np.sum(vector * vector))
    center = int(np.argmin(np.abs(grid.x)))
    if vector[center] < 0.0:
        vector = -vector
    return vector


def _inverse_iteration(
    operator: OperatorMatrix, tolerances: Tolerances
) -> tuple[float, np.ndarray]:
    grid = operator.grid
    if operator.potential is None:
        raise ConfigError("Matrix-free eigensolve needs the operator potential")
    factor = int(np.ceil(grid.n / tolerances.dense_limit))
    while grid.n % factor or (grid.n // factor) % 2:
        factor += 1
    coarse_grid = GridSpec(half_width=grid.half_width, n=grid.n // factor)
    _, coarse_d2 = differentiation_matrices(coarse_grid, operator.stencil)
    coarse_matrix = -coarse_d2 + np.diag(1.0 - operator.potential[::factor])
    values, vectors = linalg.eigh(coarse_matrix, subset_by_index=[0, 0])
    seed = trig_interpolate(vectors[:, 0], coarse_grid, grid.x)
    shift = float(values[0]) - 0.1 * max(1.0, abs(float(values[0])))
    n = grid.n
    shifted = sparse_linalg.LinearOperator(
        (n, n),
        matvec=lambda v: operator.apply(np.ravel(v)) - shift * np.ravel(v),
        dtype=float,
    )
    vector = seed / np.linalg.norm(seed)
    eigenvalue = float(vector @ operator.apply(vector))
    for iteration in range(50):
        solution, info = sparse_linalg.cg(
            shifted, vector, x0=vector, rtol=1e-13, maxiter=10 * n
        )
        if info < 0:
            raise SpectralError(f"Inverse iteration solve failed with info={info}")
        vector = solution / np.linalg.norm(solution)
        applied = operator.apply(vector)
        updated = float(vector @ applied)
        residual = float(np.linalg.norm(applied - updated * vector))
        if residual <= tolerances.eigen_residual * max(1.0, abs(updated)):
            eigenvalue = updated
            break
        eigenvalue = updated
    else:
        raise SpectralError("Inverse iteration did not converge in 50 sweeps")
    logger.debug("Inverse iteration converged", iterations=iteration + 1, n=n)
    return eigenvalue, vector


def ground_eigenpair(
    operator: OperatorMatrix, tolerances: Tolerances | None = None
) -> tuple[float, np.ndarray]:
    """Return (lambda0, Y0) with -lambda0 the negative eigenvalue of L,
    Y0 of unit L2 norm and Y0(0) > 0.

    Raises
    ------
    SpectralError
        Raised when L has no negative eigenvalue or the eigen-residual is
        above ``tolerances.eigen_residual``.
    """
    tolerances = tolerances or Tolerances()
    grid = operator.grid
    if operator.matrix is not None and grid.n <= tolerances.dense_limit:
        scale = max(1.0, float(np.max(np.abs(operator.matrix))))
        if operator.symmetry_defect() > 1e-12 * scale:
            raise SpectralError("L is not symmetric")
        values, vectors = linalg.eigh(operator.matrix, subset_by_index=[0, 0])
        eigenvalue, vector = float(values[0]), vectors[:, 0]
    else:
        eigenvalue, vector = _inverse_iteration(operator, tolerances)
    if not eigenvalue < 0.0:
        raise SpectralError(
            f"L has no negative eigenvalue (smallest {eigenvalue:.3e});"
            " check the ground state and the domain"
        )
    y0 = _normalize_eigenvector(vector, grid)
    residual = float(
        np.linalg.norm(operator.apply(y0) - eigenvalue * y0)
        / (abs(eigenvalue) * np.linalg.norm(y0))
    )
    if residual > tolerances.eigen_residual:
        raise SpectralError(
            f"Eigen-residual {residual:.3e} exceeds {tolerances.eigen_residual:.1e}"
        )
    logger.debug("Ground eigenpair", lambda0=-eigenvalue, residual=residual)
    return -eigenvalue, y0


class EigenProfile:
    """Y0 evaluable off-grid, with exact exponential tails beyond the
    matching radius so that exponentially weighted copies stay clean.
    """

    def __init__(
        self,
        samples: np.ndarray,
        grid: GridSpec,
        lambda0: float,
        match_ratio: float = TAIL_MATCH_RATIO,
    ) -> None:
        self.samples = np.asarray(samples, dtype=float)
        self.grid = grid
        self.lambda0 = lambda0
        self.decay = float(np.sqrt(1.0 + lambda0))
        x = grid.x
        peak = float(np.max(np.abs(self.samples)))
        small = np.flatnonzero((x >= 0.0) & (np.abs(self.samples) < match_ratio * peak))
        if small.size == 0:
            logger.warning(
                "Eigenfunction never drops below the tail matching ratio",
                ratio=match_ratio,
            )
            self.s_match = float(grid.half_width)
            self.log_match = float(np.log(max(abs(self.samples[-1]), UNDERFLOW)))
            return
        index = int(small[0])
        mirror = int(np.argmin(np.abs(x + x[index])))
        self.s_match = float(x[index])
        height = 0.5 * (abs(self.samples[index]) + abs(self.samples[mirror]))
        self.log_match = float(np.log(max(height, UNDERFLOW)))

    def weighted(self, s: np.ndarray, rate: float = 0.0) -> np.ndarray:
        """e^{rate s} Y0(s)."""
        s = np.asarray(s, dtype=float)
        result = np.empty_like(s)
        inside = np.abs(s) <= self.s_match
        if np.any(inside):
            core = s[inside]
            result[inside] = np.exp(rate * core) * trig_interpolate(
                self.samples, self.grid, core
            )
        outside = ~inside
        tail = s[outside]
        result[outside] = np.exp(
            rate * tail + self.log_match - self.decay * (np.abs(tail) - self.s_match)
        )
        return np.where(np.abs(result) < UNDERFLOW, 0.0, result)


class BundleProfiles(NamedTuple):
    """Bundle profiles translated to the soliton position at time t."""

    t: float
    zplus: np.ndarray
    zminus: np.ndarray
    yplus: np.ndarray
    yminus: np.ndarray
    z0: np.ndarray
    dxr: np.ndarray
    ddxr: np.ndarray


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=float, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, config=ConfigDict(arbitrary_types_allowed=True))
class SpectralBundle:
    """Eigen-objects of one boosted soliton, centered at y = 0.

    Attributes
    ----------
    spec : `SolitonSpec`
        The soliton the bundle belongs to.
    lambda0 : `float`
        -lambda0 is the negative eigenvalue of L.
    e_beta : `float`
        Instability rate sqrt(lambda0)/gamma.
    zplus, zminus, yplus, yminus, z0, dxr, ddxr : `np.ndarray`
        (2, n) profiles; ``dxr`` = J Z0 is the space derivative of the
        soliton and ``ddxr`` its second derivative.
    mu : `float` or `None`
        Coercivity constant, if computed.
    residuals : `dict` [`str`, `float`]
        Eigen, kernel and pairing residuals measured at assembly.
    """

    spec: SolitonSpec
    grid: GridSpec
    nl: NonlinearitySpec
    ground_state: GroundStateProfile
    lambda0: float
    e_beta: float
    zplus: np.ndarray
    zminus: np.ndarray
    yplus: np.ndarray
    yminus: np.ndarray
    z0: np.ndarray
    dxr: np.ndarray
    ddxr: np.ndarray
    mu: float | None = None
    residuals: dict[str, float] = field(default_factory=dict)

    def shift_at(self, t: float) -> float:
        return float(wrap_offset(self.spec.center(t), self.grid))

    def profiles_at(self, t: float) -> BundleProfiles:
        shift = self.shift_at(t)
        return BundleProfiles(
            t,
            *(
                fourier_shift(profile, shift, self.grid)
                for profile in (
                    self.zplus,
                    self.zminus,
                    self.yplus,
                    self.yminus,
                    self.z0,
                    self.dxr,
                    self.ddxr,
                )
            ),
        )

    def soliton_at(self, t: float) -> FieldState:
        return boost(self.ground_state, self.spec, t, self.grid)

    def metadata(self) -> dict[str, Any]:
        h = self.grid.h
        return {
            "beta": self.spec.beta,
            "x0": self.spec.x0,
            "gamma": self.spec.gamma,
            "lambda0": self.lambda0,
            "e_beta": self.e_beta,
            "mu": self.mu,
            "norms": {
                name: float(np.sqrt(h * np.sum(profile * profile)))
                for name, profile in (
                    ("zplus", self.zplus),
                    ("zminus", self.zminus),
                    ("yplus", self.yplus),
                    ("yminus", self.yminus),
                    ("z0", self.z0),
                )
            },
            "residuals": dict(self.residuals),
        }


def _relative_residual(matrix: np.ndarray, vector: np.ndarray, value: float) -> float:
    flat = np.ravel(vector)
    return float(np.linalg.norm(matrix @ flat - value * flat) / np.linalg.norm(flat))


def boosted_pairs(
    lambda0: float,
    y0: EigenProfile,
    spec: SolitonSpec,
    grid: GridSpec,
    *,
    nl: NonlinearitySpec,
    ground_state: GroundStateProfile,
    tolerances: Tolerances | None = None,
    stencil: str = "spectral",
    compute_mu: bool = False,
) -> SpectralBundle:
    """Assemble Z+-, Y+-, Z0 for the soliton ``spec``.

    The modes of J H_b with eigenvalue lam are (g, lam g - b g') with
    g(y) = exp(-lam b gamma^2 y) Y0(gamma y), lam = -+e_b. Z+ = -J v(-e) and
    Z- = -J v(+e), rescaled so that ||Z+|| = ||Z-|| and H_b Y+- = Z+-.

    Raises
    ------
    SpectralError
        Raised if an eigen-residual exceeds ``tolerances.boosted_residual``
        or the normalization pairing vanishes.
    """
    tolerances = tolerances or Tolerances()
    beta = spec.beta
    gamma = spec.gamma
    e_beta = float(np.sqrt(lambda0) / gamma)
    x = grid.x
    centered = SolitonSpec(beta=beta, x0=0.0)

    def mode(lam: float) -> np.ndarray:
        g = y0.weighted(gamma * x, -lam * beta * gamma)
        return np.stack([g, lam * g - beta * derivative(g, grid, 1, stencil)])

    dxr = boost_derivative(ground_state, centered, 0.0, grid, 1)
    ddxr = boost_derivative(ground_state, centered, 0.0, grid, 2)
    z0 = -apply_J(dxr)
    dxr_norm2 = float(np.sum(dxr * dxr))

    def remove_kernel(profile: np.ndarray) -> np.ndarray:
        return profile - (float(np.sum(profile * dxr)) / dxr_norm2) * dxr

    raw_plus = remove_kernel(-apply_J(mode(-e_beta)))
    raw_minus = remove_kernel(-apply_J(mode(e_beta)))

    def dual_direction(z: np.ndarray) -> np.ndarray:
        jz = apply_J(z)
        return jz - (float(np.sum(dxr * jz)) / dxr_norm2) * dxr

    pairing = inner_product(dual_direction(raw_plus), raw_minus, grid)
    norm_plus = float(np.linalg.norm(raw_plus))
    norm_minus = float(np.linalg.norm(raw_minus))
    if abs(pairing) < 1e-12 * grid.h * norm_plus * norm_minus:
        raise SpectralError(f"Normalization pairing vanishes for beta={beta}")
    scale_plus = float(np.sqrt(e_beta / abs(pairing) * norm_minus / norm_plus))
    scale_minus = -e_beta / (pairing * scale_plus)
    zplus = scale_plus * raw_plus
    zminus = scale_minus * raw_minus
    base_plus = dual_direction(zplus)
    base_minus = dual_direction(zminus)
    yplus = base_plus / inner_product(base_plus, zminus, grid)
    yminus = base_minus / inner_product(base_minus, zplus, grid)

    h_op = build_H(nl, ground_state, centered, grid, stencil)
    calh = build_calH(nl, ground_state, centered, grid, stencil)
    assert h_op.matrix is not None and calh.matrix is not None
    residuals: dict[str, float] = {
        "eigen_plus": _relative_residual(calh.matrix, zplus, e_beta),
        "eigen_minus": _relative_residual(calh.matrix, zminus, -e_beta),
        "kernel": float(
            np.linalg.norm(calh.matrix @ np.ravel(z0)) / np.linalg.norm(z0)
        ),
        "h_symmetry": h_op.symmetry_defect(),
        "pair_yplus_zminus": inner_product(yplus, zminus, grid) - 1.0,
        "pair_yminus_zplus": inner_product(yminus, zplus, grid) - 1.0,
        "pair_yplus_zplus": inner_product(yplus, zplus, grid),
        "pair_yminus_zminus": inner_product(yminus, zminus, grid),
        "pair_jz0_zplus": inner_product(dxr, zplus, grid),
        "pair_jz0_zminus": inner_product(dxr, zminus, grid),
        "pair_jz0_yplus": inner_product(dxr, yplus, grid),
        "pair_jz0_yminus": inner_product(dxr, yminus, grid),
    }
    for name, y, z in (("plus", yplus, zplus), ("minus", yminus, zminus)):
        hy = h_op.matrix @ np.ravel(y)
        flat_z = np.ravel(z)
        kappa = float(hy @ flat_z / (flat_z @ flat_z))
        residuals[f"kappa_{name}"] = kappa
        residuals[f"normalization_{name}"] = float(
            np.linalg.norm(hy - kappa * flat_z) / np.linalg.norm(hy)
        )
    worst = max(residuals["eigen_plus"], residuals["eigen_minus"])
    if worst > tolerances.boosted_residual:
        raise SpectralError(
            f"Boosted eigen-residual {worst:.3e} exceeds"
            f" {tolerances.boosted_residual:.1e} for beta={beta};"
            " refine the grid"
        )
    bundle = SpectralBundle(
        spec=spec,
        grid=grid,
        nl=nl,
        ground_state=ground_state,
        lambda0=lambda0,
        e_beta=e_beta,
        zplus=_frozen(zplus),
        zminus=_frozen(zminus),
        yplus=_frozen(yplus),
        yminus=_frozen(yminus),
        z0=_frozen(z0),
        dxr=_frozen(dxr),
        ddxr=_frozen(ddxr),
        residuals=residuals,
    )
    if compute_mu:
        mu = coercivity_mu(bundle, h_op)
        bundle = dataclasses.replace(bundle, mu=mu)
    logger.debug(
        "Boosted bundle assembled",
        beta=beta,
        e_beta=e_beta,
        eigen_residual=worst,
        mu=bundle.mu,
    )
    return bundle


def energy_gram(grid: GridSpec, stencil: str) -> np.ndarray:
    """Gram matrix of the discrete H1 x L2 norm on stacked (u1, u2)."""
    d1, _ = differentiation_matrices(grid, stencil)
    n = grid.n
    top = grid.h * (np.eye(n) + d1.T @ d1)
    return linalg.block_diag(top, grid.h * np.eye(n))


def _constraints(bundle: SpectralBundle) -> np.ndarray:
    h = bundle.grid.h
    return h * np.stack(
        [np.ravel(bundle.zplus), np.ravel(bundle.zminus), np.ravel(bundle.dxr)]
    )


def coercivity_mu(bundle: SpectralBundle, h_op: OperatorMatrix) -> float:
    """Smallest <H V, V>/||V||^2_{H1 x L2} over V orthogonal to Z+, Z-
    and J Z0.

    Raises
    ------
    SpectralError
        Raised if the projected operator is not positive.
    """
    if h_op.matrix is None:
        raise ConfigError("coercivity_mu needs an assembled H")
    grid = bundle.grid
    basis = linalg.null_space(_constraints(bundle))
    form = basis.T @ (grid.h * h_op.matrix) @ basis
    gram = basis.T @ energy_gram(grid, h_op.stencil) @ basis
    form = 0.5 * (form + form.T)
    gram = 0.5 * (gram + gram.T)
    mu = float(linalg.eigh(form, gram, eigvals_only=True, subset_by_index=[0, 0])[0])
    if not mu > 0.0:
        raise SpectralError(
            f"Projected H is not positive (mu={mu:.3e}); the grid is too coarse"
        )
    return mu


def _penalized_min(
    form: np.ndarray, gram: np.ndarray, penalty: np.ndarray, mu: float
) -> float:
    matrix = form - mu * gram + penalty / mu
    return float(
        linalg.eigh(
            0.5 * (matrix + matrix.T), eigvals_only=True, subset_by_index=[0, 0]
        )[0]
    )


def coercivity_constant(
    bundle: SpectralBundle, h_op: OperatorMatrix, iterations: int = 40
) -> float:
    """Largest mu (up to bisection accuracy) such that for every V

        <H V, V> >= mu ||V||^2 - (1/mu) (<V,Z+>^2 + <V,Z->^2 + <V,J Z0>^2).
    """
    if h_op.matrix is None:
        raise ConfigError("coercivity_constant needs an assembled H")
    grid = bundle.grid
    mu_projected = bundle.mu if bundle.mu is not None else coercivity_mu(bundle, h_op)
    form = grid.h * h_op.matrix
    gram = energy_gram(grid, h_op.stencil)
    rows = _constraints(bundle)
    penalty = rows.T @ rows
    low, high = 1e-6 * mu_projected, mu_projected
    if _penalized_min(form, gram, penalty, low) < 0.0:
        raise SpectralError("No positive coercivity constant found")
    for _ in range(iterations):
        middle = 0.5 * (low + high)
        if _penalized_min(form, gram, penalty, middle) >= 0.0:
            low = middle
        else:
            high = middle
    return low


def coercivity_defect(
    bundle: SpectralBundle, h_op: OperatorMatrix, v: Pair, mu: float
) -> float:
    """<H V, V> - mu ||V||^2 + (1/mu) sum of squared constraint pairings."""
    if h_op.matrix is None:
        raise ConfigError("coercivity_defect needs an assembled H")
    grid = bundle.grid
    flat = np.ravel(as_pair(v))
    quadratic = grid.h * float(flat @ (h_op.matrix @ flat))
    norm2 = energy_norm(as_pair(v), grid, h_op.stencil) ** 2
    pairings = sum(
        inner_product(v, profile, grid) ** 2
        for profile in (bundle.zplus, bundle.zminus, bundle.dxr)
    )
    return quadratic - mu * norm2 + pairings / mu


def prepare_bundles(
    nl: NonlinearitySpec,
    grid: GridSpec,
    specs: Sequence[SolitonSpec],
    tolerances: Tolerances | None = None,
    stencil: str = "spectral",
    compute_mu: bool = False,
) -> tuple[GroundStateProfile, EigenProfile, list[SpectralBundle]]:
    """Ground state, Y0 and one bundle per soliton, all on ``grid``."""
    tolerances = tolerances or Tolerances()
    profile = ground_state(nl, grid, tolerances)
    l_op = build_L(nl, profile, grid, stencil, tolerances.dense_limit)
    lambda0, y0_samples = ground_eigenpair(l_op, tolerances)
    y0 = EigenProfile(y0_samples, grid, lambda0)
    bundles = [
        boosted_pairs(
            lambda0,
            y0,
            spec,
            grid,
            nl=nl,
            ground_state=profile,
            tolerances=tolerances,
            stencil=stencil,
            compute_mu=compute_mu,
        )
        for spec in specs
    ]
    return profile, y0, bundles


def interaction_overlaps(
    first: SpectralBundle, second: SpectralBundle, times: Sequence[float]
) -> np.ndarray:
    """|<Z+,1(t), Z+,2(t)>| along ``times``."""
    return np.array(
        [
            abs(
                inner_product(
                    first.profiles_at(t).zplus, second.profiles_at(t).zplus, first.grid
                )
            )
            for t in times
        ]
    )
