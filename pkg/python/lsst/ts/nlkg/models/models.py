"""Models for nlkg."""

import math
from enum import Enum
from typing import Any, Callable

import numpy as np
from lsst.ts.nlkg import __version__
from lsst.ts.nlkg.config import config, nlkg_logger
from lsst.ts.nlkg.errors import ConfigError, GridMismatchError
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from pydantic.dataclasses import dataclass

__all__ = [
    "Metadata",
    "CustomNonlinearity",
    "register_nonlinearity",
    "registered_nonlinearities",
    "NonlinearitySpec",
    "GridSpec",
    "SolitonSpec",
    "FieldState",
    "Scheme",
    "Boundary",
    "SolverConfig",
    "Tolerances",
    "SpectrumConfig",
    "ConstructionConfig",
    "AnalysisConfig",
    "AcceptanceConfig",
    "ExperimentConfig",
    "ArtifactRecord",
    "StageReport",
    "CriterionResult",
    "RunManifest",
]

logger = nlkg_logger()


class Metadata(BaseModel):
    """Metadata about the application."""

    name: str = config.name
    """The name of the application."""

    version: str = __version__
    """The version of the application."""

    description: str = (
        "nlkg constructs and classifies solitons and multi-solitons of the 1D"
        " nonlinear Klein-Gordon equation"
    )
    """A description of the application."""


# -- nonlinearities ---------------------------------------------------------


@dataclass(config=ConfigDict(arbitrary_types_allowed=True))
class CustomNonlinearity:
    """A user supplied odd nonlinearity given as the triple (f, f', f'')
    plus its primitive F with F(0) = 0.

    Attributes
    ----------
    name : `str`
        Registry key referenced by `NonlinearitySpec.hook`.
    f, df, d2f, F : `Callable`
        Vectorised callables on numpy arrays.
    """

    name: str
    f: Callable[[np.ndarray], np.ndarray]
    df: Callable[[np.ndarray], np.ndarray]
    d2f: Callable[[np.ndarray], np.ndarray]
    F: Callable[[np.ndarray], np.ndarray]

    def __post_init__(self) -> None:
        sample = np.linspace(-3.0, 3.0, 61)
        values = np.asarray(self.f(sample), dtype=float)
        scale = max(1.0, float(np.max(np.abs(values))))
        odd_defect = float(np.max(np.abs(values + np.asarray(self.f(-sample)))))
        if odd_defect > 1e-12 * scale:
            raise ConfigError(
                f"Nonlinearity {self.name!r} is not odd: "
                f"max |f(u) + f(-u)| = {odd_defect:.3e}"
            )
        if abs(float(np.asarray(self.df(np.zeros(1)))[0])) > 1e-12:
            raise ConfigError(f"Nonlinearity {self.name!r} has f'(0) != 0")


_CUSTOM_NONLINEARITIES: dict[str, CustomNonlinearity] = {}


def register_nonlinearity(hook: CustomNonlinearity) -> None:
    if hook.name in _CUSTOM_NONLINEARITIES:
        logger.warning("Replacing registered nonlinearity", name=hook.name)
    _CUSTOM_NONLINEARITIES[hook.name] = hook


def registered_nonlinearities() -> list[str]:
    return sorted(_CUSTOM_NONLINEARITIES)


class NonlinearitySpec(BaseModel):
    """Pure power nonlinearity f(u) = coeff |u|^(p-1) u, or a registered
    custom hook.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    p: float = 3.0
    """Exponent, p > 2 so that f is C2."""

    coeff: float = 1.0
    """Leading coefficient, coeff > 0."""

    hook: str | None = None
    """Name of a registered `CustomNonlinearity` replacing the power law."""

    @field_validator("p")
    @classmethod
    def _check_p(cls, value: float) -> float:
        if not value > 2.0:
            raise ValueError(f"exponent p must be > 2, got {value}")
        return value

    @field_validator("coeff")
    @classmethod
    def _check_coeff(cls, value: float) -> float:
        if not value > 0.0:
            raise ValueError(f"coeff must be > 0, got {value}")
        return value

    @field_validator("hook")
    @classmethod
    def _check_hook(cls, value: str | None) -> str | None:
        if value is not None and value not in _CUSTOM_NONLINEARITIES:
            raise ValueError(f"unknown nonlinearity hook {value!r}")
        return value

    @property
    def is_pure_power(self) -> bool:
        return self.hook is None

    @property
    def custom(self) -> CustomNonlinearity:
        if self.hook is None:
            raise ConfigError("Pure power nonlinearity has no custom hook")
        return _CUSTOM_NONLINEARITIES[self.hook]

    def f(self, u: np.ndarray) -> np.ndarray:
        if self.hook is not None:
            return np.asarray(self.custom.f(u))
        return self.coeff * np.abs(u) ** (self.p - 1.0) * u

    def df(self, u: np.ndarray) -> np.ndarray:
        if self.hook is not None:
            return np.asarray(self.custom.df(u))
        return self.coeff * self.p * np.abs(u) ** (self.p - 1.0)

    def d2f(self, u: np.ndarray) -> np.ndarray:
        if self.hook is not None:
            return np.asarray(self.custom.d2f(u))
        return (
            self.coeff
            * self.p
            * (self.p - 1.0)
            * np.abs(u) ** (self.p - 2.0)
            * np.sign(u)
        )

    def F(self, u: np.ndarray) -> np.ndarray:
        if self.hook is not None:
            return np.asarray(self.custom.F(u))
        return self.coeff * np.abs(u) ** (self.p + 1.0) / (self.p + 1.0)


# -- grids and solitons -----------------------------------------------------


class GridSpec(BaseModel):
    """Uniform periodic grid x_j = -L + j h, j = 0..n-1, h = 2L/n."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    half_width: float = 32.0
    n: int = 512

    @field_validator("half_width")
    @classmethod
    def _check_half_width(cls, value: float) -> float:
        if not value > 0.0:
            raise ValueError(f"half_width must be > 0, got {value}")
        return value

    @field_validator("n")
    @classmethod
    def _check_n(cls, value: int) -> int:
        if value < 16:
            raise ValueError(f"n must be >= 16, got {value}")
        if value % 2:
            raise ValueError(f"n must be even, got {value}")
        if value & (value - 1):
            logger.warning("Grid size is not a power of two", n=value)
        return value

    @property
    def h(self) -> float:
        return 2.0 * self.half_width / self.n

    @property
    def length(self) -> float:
        return 2.0 * self.half_width

    @property
    def x(self) -> np.ndarray:
        return -self.half_width + self.h * np.arange(self.n)

    def refined(self, factor: float) -> "GridSpec":
        return GridSpec(half_width=self.half_width, n=int(round(self.n * factor)))


class SolitonSpec(BaseModel):
    """One soliton: velocity beta (|beta| < 1) and initial center x0."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    beta: float = 0.0
    x0: float = 0.0

    @field_validator("beta")
    @classmethod
    def _check_beta(cls, value: float) -> float:
        if not abs(value) < 1.0:
            raise ValueError(f"|beta| must be < 1, got {value}")
        return value

    @property
    def gamma(self) -> float:
        return 1.0 / math.sqrt(1.0 - self.beta * self.beta)

    def center(self, t: float) -> float:
        return self.x0 + self.beta * t


@dataclass(config=ConfigDict(arbitrary_types_allowed=True))
class FieldState:
    """Sampled pair (u, du/dt) at time t: the discrete H1 x L2 element."""

    u1: np.ndarray
    u2: np.ndarray
    t: float = 0.0

    def __post_init__(self) -> None:
        self.u1 = np.asarray(self.u1, dtype=float)
        self.u2 = np.asarray(self.u2, dtype=float)
        if self.u1.ndim != 1 or self.u1.shape != self.u2.shape:
            raise ConfigError(
                f"Field components must be 1D arrays of equal length, got "
                f"{self.u1.shape} and {self.u2.shape}"
            )
        if not (np.all(np.isfinite(self.u1)) and np.all(np.isfinite(self.u2))):
            raise ConfigError(f"Field state at t={self.t} has non-finite values")

    @property
    def n(self) -> int:
        return int(self.u1.shape[0])

    @property
    def pair(self) -> np.ndarray:
        return np.stack([self.u1, self.u2])

    @classmethod
    def from_pair(cls, pair: np.ndarray, t: float = 0.0) -> "FieldState":
        return cls(u1=np.array(pair[0]), u2=np.array(pair[1]), t=t)

    @classmethod
    def zeros(cls, n: int, t: float = 0.0) -> "FieldState":
        return cls(u1=np.zeros(n), u2=np.zeros(n), t=t)

    def copy(self) -> "FieldState":
        return FieldState(u1=self.u1.copy(), u2=self.u2.copy(), t=self.t)

    def check_grid(self, grid: GridSpec) -> None:
        if self.n != grid.n:
            raise GridMismatchError(
                f"State has {self.n} samples but the grid has {grid.n}"
            )


# -- solver -----------------------------------------------------------------


class Scheme(str, Enum):
    LEAPFROG = "leapfrog"
    STRANG_SPECTRAL = "strang-spectral"
    YOSHIDA4 = "yoshida4"


class Boundary(str, Enum):
    PERIODIC = "periodic"
    DIRICHLET_PAD = "dirichlet-pad"


class SolverConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    scheme: Scheme = Scheme.STRANG_SPECTRAL
    boundary: Boundary = Boundary.PERIODIC
    dt: float | None = None
    """Time step; `None` picks 0.25 h (leapfrog) or 0.5 h (spectral)."""

    cfl_safety: float = 0.9
    snapshot_stride: int = 0
    """Keep every k-th state in the trajectory record, 0 keeps none."""

    max_steps: int = 10_000_000
    blowup_factor: float = 1.0e3

    @field_validator("dt")
    @classmethod
    def _check_dt(cls, value: float | None) -> float | None:
        if value is not None and not value > 0.0:
            raise ValueError(f"dt must be > 0, got {value}")
        return value

    @field_validator("cfl_safety")
    @classmethod
    def _check_cfl(cls, value: float) -> float:
        if not 0.0 < value < 1.0:
            raise ValueError(f"cfl_safety must lie in (0, 1), got {value}")
        return value

    @field_validator("snapshot_stride", "max_steps")
    @classmethod
    def _check_nonnegative(cls, value: int) -> int:
        if value < 0:
            raise ValueError(f"expected a non-negative integer, got {value}")
        return value

    def resolved_dt(self, grid: GridSpec) -> float:
        if self.dt is not None:
            dt = self.dt
        elif self.scheme == Scheme.LEAPFROG:
            dt = 0.25 * grid.h
        else:
            dt = 0.5 * grid.h
        if self.scheme == Scheme.LEAPFROG and dt > self.cfl_safety * grid.h:
            raise ConfigError(
                f"solver.dt={dt} violates the leapfrog CFL bound "
                f"{self.cfl_safety} * h = {self.cfl_safety * grid.h}"
            )
        return dt


class Tolerances(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    tail_ratio: float = 1.0e-12
    """Largest accepted Q(L)/Q(0)."""

    residual_factor: float = 50.0
    """Ground state residual bound in units of h**2."""

    eigen_residual: float = 1.0e-8
    boosted_residual: float = 1.0e-6
    orthogonality: float = 1.0e-10
    dense_limit: int = 4096


class SpectrumConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    betas: list[float] = Field(default_factory=lambda: [0.0, 0.3, 0.5, 0.8])
    compute_mu: bool = True
    stencil: str = "spectral"

    @field_validator("betas")
    @classmethod
    def _check_betas(cls, value: list[float]) -> list[float]:
        for beta in value:
            if not abs(beta) < 1.0:
                raise ValueError(f"|beta| must be < 1, got {beta}")
        return value

    @field_validator("stencil")
    @classmethod
    def _check_stencil(cls, value: str) -> str:
        if value not in ("spectral", "fd2"):
            raise ValueError(f"stencil must be 'spectral' or 'fd2', got {value!r}")
        return value


class ConstructionConfig(BaseModel):
    """Backward shooting set-up: ordered solitons, amplitudes, landing time
    t0 and the increasing schedule of final times S_n.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    specs: list[SolitonSpec] = Field(default_factory=lambda: [SolitonSpec(beta=0.5)])
    A: list[float] = Field(default_factory=lambda: [1.0])
    t0: float = 2.0
    schedule: list[float] | None = None
    """Final times; `None` means t0 + 4n for n = 1..5."""

    sigma: float | None = None
    """Separation constant; `None` takes the formula value."""

    shoot_base: bool = False
    """Shoot all N unstable directions when building the base multi-soliton."""

    reference: str = "numerical"
    """Single-soliton residuals measured against the backward-evolved
    soliton ("numerical") or the exact travelling wave ("exact")."""

    bisection_cap: int = 60
    fixed_point_cap: int = 200
    fixed_point_damping: float = 0.8
    grid_scan_points: int = 5
    boundary_tol: float = 1.0e-9
    w_constant: float = 10.0
    """Constant C_W in the exit condition ||W(t)|| <= C_W e^{-(rho + sigma) t}."""

    fit_margin: float = 2.0
    strict_stabilization: bool = False

    @field_validator("A")
    @classmethod
    def _check_amplitudes(cls, value: list[float]) -> list[float]:
        if not all(math.isfinite(a) for a in value):
            raise ValueError("amplitudes must be finite")
        return value

    @field_validator("reference")
    @classmethod
    def _check_reference(cls, value: str) -> str:
        if value not in ("numerical", "exact"):
            raise ValueError(f"reference must be 'numerical' or 'exact', got {value!r}")
        return value

    @field_validator("fixed_point_damping")
    @classmethod
    def _check_damping(cls, value: float) -> float:
        if not 0.0 < value <= 1.0:
            raise ValueError(f"fixed_point_damping must lie in (0, 1], got {value}")
        return value

    @model_validator(mode="after")
    def _check_consistency(self) -> "ConstructionConfig":
        if len(self.A) != len(self.specs):
            raise ValueError(
                f"A has {len(self.A)} entries but there are {len(self.specs)} solitons"
            )
        betas = [spec.beta for spec in self.specs]
        if len(set(betas)) != len(betas):
            raise ValueError(f"velocities must be distinct, got {betas}")
        if len(self.specs) > 1:
            speeds = [abs(b) for b in betas]
            if not all(s > 0.0 for s in speeds) or any(
                speeds[i] <= speeds[i + 1] for i in range(len(speeds) - 1)
            ):
                raise ValueError(
                    "solitons must be ordered with 0 < |beta_N| < ... < |beta_1| < 1,"
                    f" got {betas}"
                )
        schedule = self.final_times
        if any(s <= self.t0 for s in schedule):
            raise ValueError("every final time S_n must exceed t0")
        if any(schedule[i] >= schedule[i + 1] for i in range(len(schedule) - 1)):
            raise ValueError(f"schedule must be increasing, got {schedule}")
        if self.sigma is not None and not self.sigma > 0.0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")
        return self

    @property
    def final_times(self) -> list[float]:
        if self.schedule is not None:
            return list(self.schedule)
        return [self.t0 + 4.0 * n for n in range(1, 6)]

    @property
    def N(self) -> int:
        return len(self.specs)


class AnalysisConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    delta: float | None = None
    """Slope buffer of the chi profile; `None` takes min(0.1, gap/(4 max gap))."""

    lambda_exp: float | None = None
    alpha_fit: float | None = None
    decay_gamma: float | None = None
    functional_stride: int = 4
    plateau_fraction: float = 1.0 / 3.0
    plateau_tol: float = 0.05
    plateau_abs_tol: float = 1.0e-6
    newton_tol: float = 1.0e-10
    newton_cap: int = 50
    orbital_radius: float = 0.5
    envelope_factor: float = 3.0

    @field_validator("delta")
    @classmethod
    def _check_delta(cls, value: float | None) -> float | None:
        if value is not None and not 0.0 < value < 0.25:
            raise ValueError(f"delta must lie in (0, 1/4), got {value}")
        return value

    @field_validator("lambda_exp")
    @classmethod
    def _check_lambda(cls, value: float | None) -> float | None:
        if value is not None and not value > 1.0:
            raise ValueError(f"lambda_exp must be > 1, got {value}")
        return value

    @field_validator("functional_stride", "newton_cap")
    @classmethod
    def _check_positive(cls, value: int) -> int:
        if value < 1:
            raise ValueError(f"expected a positive integer, got {value}")
        return value

    def resolved_lambda(self) -> float:
        if self.lambda_exp is not None:
            return self.lambda_exp
        if self.alpha_fit is not None:
            if not self.alpha_fit > 3.0:
                raise ConfigError(
                    f"alpha_fit={self.alpha_fit} leaves no room for lambda"
                    " in (1, alpha - 1)"
                )
            return (1.0 + (self.alpha_fit - 1.0)) / 2.0
        return 2.0


class AcceptanceConfig(BaseModel):
    """Parameters of the acceptance suite run by ``nlkg verify``."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    criteria: list[int] = Field(default_factory=lambda: list(range(1, 11)))
    spectral_grid: GridSpec = GridSpec(half_width=40.0, n=2048)
    boosted_grid: GridSpec = GridSpec(half_width=32.0, n=512)
    betas: list[float] = Field(default_factory=lambda: [0.0, 0.3, 0.5, 0.8])
    solver_grid: GridSpec = GridSpec(half_width=32.0, n=512)
    single_beta: float = 0.5
    single_t0: float = 1.0
    single_S: float = 7.0
    single_dt: float = 0.005
    multi_betas: list[float] = Field(default_factory=lambda: [0.8, 0.4])
    multi_x0: list[float] = Field(default_factory=lambda: [4.0, -12.0])
    multi_A: list[float] = Field(default_factory=lambda: [1.0, -0.5])
    multi_t0: float = 1.0
    multi_S: float = 6.0
    spectral_max_runtime_s: float = 10.0
    single_max_runtime_s: float = 300.0
    multi_max_runtime_s: float = 1800.0
    boundary_samples: int = 8
    synthetic_series: int = 20
    rate_tolerance: float = 0.05

    @field_validator("criteria")
    @classmethod
    def _check_criteria(cls, value: list[int]) -> list[int]:
        for item in value:
            if not 1 <= item <= 10:
                raise ValueError(f"unknown acceptance criterion {item}")
        return value

    @field_validator(
        "spectral_max_runtime_s", "single_max_runtime_s", "multi_max_runtime_s"
    )
    @classmethod
    def _check_runtime_cap(cls, value: float) -> float:
        if not value > 0.0:
            raise ValueError(f"runtime caps must be positive, got {value}")
        return value


class ExperimentConfig(BaseModel):
    """Top level configuration, one section per module."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    name: str = "experiment"
    nonlinearity: NonlinearitySpec = NonlinearitySpec()
    grid: GridSpec = GridSpec()
    solver: SolverConfig = SolverConfig()
    tolerances: Tolerances = Tolerances()
    spectrum: SpectrumConfig = SpectrumConfig()
    construction: ConstructionConfig = ConstructionConfig()
    analysis: AnalysisConfig = AnalysisConfig()
    acceptance: AcceptanceConfig = AcceptanceConfig()
    sweep: list[list[float]] = Field(default_factory=list)
    """Amplitude vectors run by ``nlkg sweep``."""

    seed: int = 0
    output: str | None = None

    @model_validator(mode="after")
    def _check_cross_fields(self) -> "ExperimentConfig":
        dt = self.solver.resolved_dt(self.grid)
        construction = self.construction
        horizon = self.solver.max_steps * dt
        longest = max(construction.final_times) - construction.t0
        if longest > horizon:
            raise ValueError(
                f"schedule spans {longest} time units but the solver horizon is"
                f" {horizon}"
            )
        limit = 0.75 * self.grid.half_width
        for index, spec in enumerate(construction.specs):
            for t in (construction.t0, max(construction.final_times)):
                center = spec.center(t)
                if abs(center) > limit:
                    raise ValueError(
                        f"construction.specs[{index}] center {center:.3f} at t={t}"
                        f" is closer than 25% of the half-width to the seam"
                    )
        for amplitudes in self.sweep:
            if len(amplitudes) != construction.N:
                raise ValueError(
                    f"sweep entry {amplitudes} does not match N={construction.N}"
                )
        return self

    def with_resolution(self, multiplier: float) -> "ExperimentConfig":
        """Refine n by ``multiplier`` and shrink dt by the same factor."""
        if multiplier == 1.0:
            return self
        if not multiplier > 0.0:
            raise ConfigError(f"resolution multiplier must be > 0, got {multiplier}")
        grid = self.grid.refined(multiplier)
        solver_update: dict[str, Any] = {}
        if self.solver.dt is not None:
            solver_update["dt"] = self.solver.dt / multiplier
        solver = self.solver.model_copy(update=solver_update)
        data = self.model_dump(mode="json")
        data["grid"] = grid.model_dump(mode="json")
        data["solver"] = solver.model_dump(mode="json")
        return ExperimentConfig.model_validate(data)


# -- reports ----------------------------------------------------------------


class ArtifactRecord(BaseModel):
    path: str
    sha256: str
    kind: str = "file"


class StageReport(BaseModel):
    """Per-stage construction report."""

    j: int
    S: float
    a: list[float] = Field(default_factory=list)
    b: list[float] = Field(default_factory=list)
    exit_time: float
    converged: bool
    iterations: int = 0
    b_bound_ok: bool = True
    fitted_rate: float | None = None
    fitted_r2: float | None = None
    residual_norm: float | None = None
    crossing_derivatives: list[float] = Field(default_factory=list)
    alpha_plus_ratio: float | None = None
    """max_k |alpha_{+,k}(S)| / |b| at the final time."""


class CriterionResult(BaseModel):
    number: int
    name: str
    passed: bool
    detail: str = ""
    values: dict[str, Any] = Field(default_factory=dict)


class RunManifest(BaseModel):
    command: str
    config_hash: str
    artifacts: list[ArtifactRecord] = Field(default_factory=list)
    stages: dict[str, str] = Field(default_factory=dict)
    versions: dict[str, str] = Field(default_factory=dict)
    warnings: list[str] = Field(default_factory=list)

    def record(self, path: str, sha256: str, kind: str = "file") -> None:
        self.artifacts = [a for a in self.artifacts if a.path != path]
        self.artifacts.append(ArtifactRecord(path=path, sha256=sha256, kind=kind))
        self.artifacts.sort(key=lambda a: a.path)
