"""Trajectory analysis pipeline: modulation and functional tracking, the
monotonicity report, amplitude extraction and the polynomial-rate
classification of multi-soliton candidates.
"""

from typing import Sequence

import numpy as np
from lsst.ts.nlkg.analysis.functionals import (
    FunctionalTrack,
    MonotonicityReport,
    RelationReport,
    check_monotonicity,
    functional_relation,
    track_functionals,
)
from lsst.ts.nlkg.analysis.projections import ModulationTrack, track_modulation
from lsst.ts.nlkg.analysis.rates import extract_A, fit_power_law
from lsst.ts.nlkg.config import nlkg_logger
from lsst.ts.nlkg.errors import ConfigError, NoPlateauError
from lsst.ts.nlkg.models.models import AnalysisConfig, FieldState
from lsst.ts.nlkg.models.models_helpers import separation_sigma
from lsst.ts.nlkg.spectral import SpectralBundle, energy_norm
from pydantic import BaseModel, ConfigDict
from pydantic.dataclasses import dataclass

__all__ = [
    "AmplitudeEstimate",
    "TrajectoryAnalysis",
    "extract_amplitudes",
    "analyze_trajectory",
    "Classification",
    "classify",
]

logger = nlkg_logger()

# Polynomial rate above which the almost-monotonicity argument applies.
HYPOTHESIS_RATE = 3.0


class AmplitudeEstimate(BaseModel):
    j: int
    value: float | None = None
    error: float | None = None
    message: str = ""


def extract_amplitudes(
    times: np.ndarray,
    alpha_minus: np.ndarray,
    bundles: Sequence[SpectralBundle],
    cfg: AnalysisConfig,
) -> list[AmplitudeEstimate]:
    """Plateau of e^{e_j t} alpha_{-,j} for every soliton; a missing
    plateau is recorded, not raised.
    """
    estimates = []
    for j, bundle in enumerate(bundles):
        try:
            estimate = extract_A(
                times,
                alpha_minus[:, j],
                bundle.e_beta,
                cfg.plateau_fraction,
                cfg.plateau_tol,
                cfg.plateau_abs_tol,
            )
        except NoPlateauError as e:
            logger.warning("No amplitude plateau", j=j + 1, detail=str(e))
            estimates.append(AmplitudeEstimate(j=j + 1, message=str(e)))
            continue
        estimates.append(
            AmplitudeEstimate(j=j + 1, value=estimate.value, error=estimate.error)
        )
    return estimates


@dataclass(config=ConfigDict(arbitrary_types_allowed=True))
class TrajectoryAnalysis:
    modulation: ModulationTrack
    functionals: FunctionalTrack
    monotonicity: MonotonicityReport
    relation: RelationReport
    amplitudes: list[AmplitudeEstimate]

    def report(self) -> dict:
        return {
            "monotonicity": self.monotonicity.model_dump(),
            "relation": self.relation.model_dump(),
            "amplitudes": [a.model_dump() for a in self.amplitudes],
            "max_orthogonality": max(self.modulation.orthogonality, default=0.0),
            "delta": self.functionals.delta,
            "gamma": self.functionals.gamma,
            "lambda_exp": self.functionals.lambda_exp,
        }


def analyze_trajectory(
    states: Sequence[FieldState],
    bundles: Sequence[SpectralBundle],
    cfg: AnalysisConfig,
    sigma: float | None = None,
    stencil: str = "spectral",
) -> TrajectoryAnalysis:
    """Track modulation and functionals along sampled states of one
    trajectory and derive the monotonicity and amplitude reports.

    Raises
    ------
    ConfigError
        Raised on an empty trajectory.
    """
    if not states:
        raise ConfigError("Cannot analyze an empty trajectory")
    states = sorted(states, key=lambda state: state.t)
    if sigma is None:
        sigma = separation_sigma([b.spec for b in bundles], bundles[0].lambda0)
    stride = 1
    if len(states) > 3 * cfg.functional_stride:
        stride = max(1, cfg.functional_stride)
    sampled = list(states[::stride])
    if sampled[-1] is not states[-1]:
        sampled.append(states[-1])
    modulation = track_modulation(sampled, bundles, cfg)
    functionals = track_functionals(sampled, bundles, cfg, sigma, stencil)
    times = np.array(functionals.times)
    monotonicity = check_monotonicity(
        times,
        functionals.F_eps,
        np.array(functionals.alpha_plus),
        functionals.z_norm,
        functionals.lambda_exp,
        functionals.gamma,
        cfg.envelope_factor,
        F_z=functionals.F_z,
        F_eps_omega=functionals.F_eps_omega,
    )
    relation = functional_relation(functionals)
    amplitudes = extract_amplitudes(
        times, np.array(functionals.alpha_minus), bundles, cfg
    )
    logger.info(
        "Trajectory analyzed",
        samples=len(sampled),
        monotone=monotonicity.passed,
        amplitudes=[a.value for a in amplitudes],
    )
    return TrajectoryAnalysis(
        modulation=modulation,
        functionals=functionals,
        monotonicity=monotonicity,
        relation=relation,
        amplitudes=amplitudes,
    )


class Classification(BaseModel):
    alpha_fit: float | None
    alpha_r2: float | None
    hypothesis_holds: bool
    monotone: bool
    amplitudes: list[AmplitudeEstimate]


def classify(
    states: Sequence[FieldState],
    bundles: Sequence[SpectralBundle],
    cfg: AnalysisConfig,
    sigma: float | None = None,
    stencil: str = "spectral",
) -> tuple[Classification, TrajectoryAnalysis]:
    """Fit ||U - sum R_k|| ~ t^{-alpha} on the late half of the run and,
    when alpha > 3, read off A_1..A_N from the monotone analysis.

    The fitted alpha feeds the lambda_exp default.
    """
    if not states:
        raise ConfigError("Cannot classify an empty trajectory")
    grid = bundles[0].grid
    states = sorted(states, key=lambda state: state.t)
    times = np.array([state.t for state in states])
    norms = np.array(
        [
            energy_norm(
                state.pair - sum(b.soliton_at(state.t).pair for b in bundles), grid
            )
            for state in states
        ]
    )
    late = times >= times[0] + 0.5 * np.ptp(times)
    alpha_fit = alpha_r2 = None
    try:
        alpha_fit, _, alpha_r2 = fit_power_law(times[late], norms[late])
    except ConfigError as e:
        logger.warning("No polynomial rate fitted", detail=str(e))
    hypothesis = alpha_fit is not None and alpha_fit > HYPOTHESIS_RATE
    if hypothesis and cfg.lambda_exp is None:
        cfg = cfg.model_copy(update={"alpha_fit": alpha_fit})
    analysis = analyze_trajectory(states, bundles, cfg, sigma, stencil)
    amplitudes = analysis.amplitudes if analysis.monotonicity.passed else []
    classification = Classification(
        alpha_fit=alpha_fit,
        alpha_r2=alpha_r2,
        hypothesis_holds=hypothesis,
        monotone=analysis.monotonicity.passed,
        amplitudes=amplitudes,
    )
    return classification, analysis
