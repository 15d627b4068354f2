import numpy as np
import pytest
from lsst.ts.nlkg.analysis.classify import (
    analyze_trajectory,
    classify,
    extract_amplitudes,
)
from lsst.ts.nlkg.errors import ConfigError
from lsst.ts.nlkg.models.models import AnalysisConfig, FieldState
from lsst.ts.nlkg.spectral import SpectralBundle

TIMES = np.linspace(2.0, 6.0, 9)


def exact_sum(bundles: list[SpectralBundle], t: float) -> np.ndarray:
    return np.sum([bundle.soliton_at(t).pair for bundle in bundles], axis=0)


def test_extract_amplitudes(pair_bundles: list[SpectralBundle]) -> None:
    times = np.linspace(0.0, 20.0, 201)
    rates = np.array([bundle.e_beta for bundle in pair_bundles])
    alpha_minus = np.exp(-np.outer(times, rates)) * np.array([0.5, -1.5])
    alpha_minus[:, 1] *= 1.0 + np.sin(times)
    estimates = extract_amplitudes(times, alpha_minus, pair_bundles, AnalysisConfig())
    assert [estimate.j for estimate in estimates] == [1, 2]
    assert estimates[0].value == pytest.approx(0.5)
    assert estimates[1].value is None
    assert estimates[1].message


def test_analyze_exact_sum(pair_bundles: list[SpectralBundle]) -> None:
    states = [FieldState.from_pair(exact_sum(pair_bundles, t), t=t) for t in TIMES]
    analysis = analyze_trajectory(states[::-1], pair_bundles, AnalysisConfig())
    assert analysis.functionals.times == list(TIMES)
    assert analysis.monotonicity.passed
    report = analysis.report()
    assert report["max_orthogonality"] == pytest.approx(0.0, abs=1e-20)
    assert [a["value"] for a in report["amplitudes"]] == [0.0, 0.0]
    with pytest.raises(ConfigError):
        analyze_trajectory([], pair_bundles, AnalysisConfig())


def test_classify_polynomial_decay(pair_bundles: list[SpectralBundle]) -> None:
    states = []
    for t in TIMES:
        perturbation = 0.5 * t**-4 * pair_bundles[0].profiles_at(t).yplus
        states.append(
            FieldState.from_pair(exact_sum(pair_bundles, t) + perturbation, t=t)
        )
    classification, analysis = classify(states, pair_bundles, AnalysisConfig())
    assert classification.alpha_fit == pytest.approx(4.0, abs=1e-6)
    assert classification.hypothesis_holds
    assert analysis.functionals.lambda_exp == pytest.approx(2.0)
    assert classification.monotone == analysis.monotonicity.passed
    first = analysis.amplitudes[0]
    assert first.j == 1
    assert first.value is None


def test_classify_without_decay(pair_bundles: list[SpectralBundle]) -> None:
    states = [FieldState.from_pair(exact_sum(pair_bundles, t), t=t) for t in TIMES]
    classification, _ = classify(states, pair_bundles, AnalysisConfig())
    assert classification.alpha_fit is None
    assert not classification.hypothesis_holds
    assert classification.monotone
    with pytest.raises(ConfigError):
        classify([], pair_bundles, AnalysisConfig())
