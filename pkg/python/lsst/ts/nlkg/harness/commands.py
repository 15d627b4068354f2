"""Subcommand bodies. Each one writes its artifacts through a `RunWriter`
and returns the summary printed by the command line.
"""

from pathlib import Path
from typing import Any, Sequence

import numpy as np
from lsst.ts.nlkg.analysis.classify import classify
from lsst.ts.nlkg.config import nlkg_logger
from lsst.ts.nlkg.construct import construct_multi, construct_single, resolve_sigma
from lsst.ts.nlkg.errors import AcceptanceFailure, ConfigError, NlkgError
from lsst.ts.nlkg.harness.acceptance import run_acceptance
from lsst.ts.nlkg.harness.persistence import (
    RunWriter,
    read_snapshot,
    verify_manifest,
)
from lsst.ts.nlkg.harness.workers import gather_jobs
from lsst.ts.nlkg.models.models import ExperimentConfig, FieldState, SolitonSpec
from lsst.ts.nlkg.profiles import tail_rates, translation_quotient
from lsst.ts.nlkg.spectral import SpectralBundle, prepare_bundles

__all__ = [
    "construction_bundles",
    "cmd_spectrum",
    "cmd_construct",
    "load_trajectory",
    "cmd_analyze",
    "cmd_verify",
    "cmd_sweep",
]

logger = nlkg_logger()

TRAJECTORY_DIR = "trajectory"


def construction_bundles(cfg: ExperimentConfig) -> list[SpectralBundle]:
    _, _, bundles = prepare_bundles(
        cfg.nonlinearity,
        cfg.grid,
        cfg.construction.specs,
        cfg.tolerances,
        cfg.spectrum.stencil,
    )
    return bundles


def cmd_spectrum(cfg: ExperimentConfig, out: Path) -> dict[str, Any]:
    """Ground state, lambda0 and one bundle per configured velocity."""
    spectrum = cfg.spectrum
    specs = [SolitonSpec(beta=beta) for beta in spectrum.betas]
    profile, y0, bundles = prepare_bundles(
        cfg.nonlinearity,
        cfg.grid,
        specs,
        cfg.tolerances,
        spectrum.stencil,
        spectrum.compute_mu,
    )
    writer = RunWriter(out, "spectrum", cfg)
    grid = cfg.grid
    writer.write_snapshot(
        "ground_state.bin",
        FieldState(u1=profile.samples, u2=np.zeros(grid.n)),
        grid,
    )
    entries = []
    for index, bundle in enumerate(bundles):
        writer.write_bundle(f"bundles/beta_{index}", bundle)
        writer.stage(f"bundle_{index}", "done")
        entries.append(bundle.metadata())
    shifts = np.array([0.05, 0.1, 0.2, 0.4])
    report = {
        "lambda0": bundles[0].lambda0 if bundles else None,
        "peak": profile.peak,
        "tail_rates": tail_rates(profile),
        "translation_quotient": {
            "shifts": shifts,
            "values": translation_quotient(profile, grid, shifts),
        },
        "bundles": entries,
    }
    writer.write_json("spectrum.json", report)
    writer.finish()
    return {
        "lambda0": report["lambda0"],
        "e_beta": {str(b.spec.beta): b.e_beta for b in bundles},
        "mu": {str(b.spec.beta): b.mu for b in bundles},
        "max_residual": {
            str(b.spec.beta): max(abs(v) for v in b.residuals.values())
            for b in bundles
        },
    }


def _write_trajectory(
    writer: RunWriter, states: Sequence[FieldState], cfg: ExperimentConfig
) -> None:
    for index, state in enumerate(sorted(states, key=lambda s: s.t)):
        writer.write_snapshot(f"{TRAJECTORY_DIR}/{index:05d}.bin", state, cfg.grid)


def _sigma_note(sigma: float, formula: float) -> str:
    return f"sigma={sigma!r} overrides the separation formula value {formula!r}"


def cmd_construct(
    cfg: ExperimentConfig,
    out: Path,
    bundles: Sequence[SpectralBundle] | None = None,
) -> dict[str, Any]:
    """Single-soliton family member for N = 1, multi-soliton otherwise."""
    construction = cfg.construction
    bundles = list(bundles) if bundles is not None else construction_bundles(cfg)
    writer = RunWriter(out, "construct", cfg)
    if construction.N == 1:
        single = construct_single(
            construction.specs[0], construction.A[0], cfg, bundles[0]
        )
        for S, state in zip(construction.final_times, single.states):
            writer.write_snapshot(f"landing/S_{S:g}.bin", state, cfg.grid)
        record = single.records[-1]
        columns = {"t": record.time_axis}
        columns.update((name, record.values(name)) for name in sorted(record.series))
        writer.write_csv("residual.csv", columns)
        _write_trajectory(writer, record.snapshots, cfg)
        writer.stage("single", "done")
        report = single.report.model_dump()
        writer.write_json("single_report.json", report)
        writer.finish()
        return {
            "A": report["A"],
            "fitted_rate": report["fitted_rate"],
            "required_rate": -1.9 * report["e_beta"],
            "fitted_r2": report["fitted_r2"],
            "stabilization": report["stabilization"],
        }

    multi = construct_multi(cfg, bundles)
    if multi.report.sigma_override:
        writer.warn(_sigma_note(multi.report.sigma, multi.report.sigma_formula))
    for S, state in zip(construction.final_times, multi.states):
        writer.write_snapshot(f"landing/S_{S:g}.bin", state, cfg.grid)
    stride = max(1, cfg.analysis.functional_stride)
    snapshots = multi.snapshots[::stride]
    if snapshots[-1] is not multi.snapshots[-1]:
        snapshots.append(multi.snapshots[-1])
    _write_trajectory(writer, snapshots, cfg)
    writer.write_csv(
        "remainder.csv", {"t": multi.remainder_times, "remainder": multi.remainder}
    )
    report = multi.report.model_dump()
    for stage in multi.report.stages:
        writer.stage(
            f"S_{stage.S:g}/stage_{stage.j}",
            "converged" if stage.converged else "failed",
        )
    writer.write_json("stages.json", report["stages"])
    writer.write_json("multi_report.json", report)
    writer.finish()
    return {
        "A": report["amplitudes"],
        "sigma": report["sigma"],
        "remainder_rate": report["remainder_rate"],
        "required_rate": report["required_rate"],
        "stages": [
            {
                "j": s.j,
                "S": s.S,
                "exit_time": s.exit_time,
                "b_bound_ok": s.b_bound_ok,
            }
            for s in multi.report.stages
        ],
    }


def load_trajectory(source: Path) -> list[FieldState]:
    """Snapshots of a construct run, after checking its manifest."""
    manifest = verify_manifest(source)
    states = []
    for artifact in manifest.artifacts:
        if artifact.kind == "snapshot" and artifact.path.startswith(TRAJECTORY_DIR):
            state, _ = read_snapshot(Path(source) / artifact.path)
            states.append(state)
    if not states:
        raise ConfigError(f"{source} holds no trajectory snapshots")
    return sorted(states, key=lambda state: state.t)


def cmd_analyze(cfg: ExperimentConfig, source: Path, out: Path) -> dict[str, Any]:
    """Modulation, functionals, monotonicity and amplitude reports for the
    trajectory stored in ``source``.
    """
    states = load_trajectory(source)
    for state in states:
        state.check_grid(cfg.grid)
    bundles = construction_bundles(cfg)
    classification, analysis = classify(
        states,
        bundles,
        cfg.analysis,
        cfg.construction.sigma,
        cfg.spectrum.stencil,
    )
    writer = RunWriter(out, "analyze", cfg)
    if cfg.construction.sigma is not None:
        sigma, formula = resolve_sigma(cfg.construction, bundles[0].lambda0)
        if sigma != formula:
            writer.warn(_sigma_note(sigma, formula))
    writer.write_csv("modulation.csv", analysis.modulation.series())
    writer.write_csv("functionals.csv", analysis.functionals.series())
    report = {
        "classification": classification.model_dump(),
        "analysis": analysis.report(),
        "source": Path(source).as_posix(),
    }
    writer.write_json("analysis.json", report)
    writer.finish()
    return {
        "alpha_fit": classification.alpha_fit,
        "monotone": classification.monotone,
        "amplitudes": [a.value for a in analysis.amplitudes],
    }


def cmd_verify(cfg: ExperimentConfig, out: Path) -> dict[str, Any]:
    """Run the acceptance suite.

    Raises
    ------
    AcceptanceFailure
        Raised after the summary is written when a criterion failed.
    """
    writer = RunWriter(out, "verify", cfg)
    results = run_acceptance(cfg)
    for result in results:
        status = "passed" if result.passed else "failed"
        writer.stage(f"criterion_{result.number}", status)
    summary = {
        "passed": all(result.passed for result in results),
        "criteria": [result.model_dump() for result in results],
    }
    writer.write_json("acceptance.json", summary)
    writer.finish()
    failures = [f"{r.number} ({r.name}): {r.detail}" for r in results if not r.passed]
    if failures:
        raise AcceptanceFailure(failures)
    return {"passed": True, "criteria": [r.number for r in results]}


def _member_config(
    cfg: ExperimentConfig, amplitudes: Sequence[float]
) -> ExperimentConfig:
    data = cfg.model_dump(mode="json")
    data["construction"]["A"] = list(amplitudes)
    data["sweep"] = []
    return ExperimentConfig.model_validate(data)


def cmd_sweep(cfg: ExperimentConfig, out: Path) -> dict[str, Any]:
    """Construct every amplitude vector of ``cfg.sweep`` concurrently, one
    run directory per member.
    """
    members = cfg.sweep or [list(cfg.construction.A)]
    bundles = construction_bundles(cfg)
    out = Path(out)
    member_cfgs = [_member_config(cfg, amplitudes) for amplitudes in members]
    jobs = [
        (lambda c=c, i=i: cmd_construct(c, out / f"member_{i:03d}", bundles))
        for i, c in enumerate(member_cfgs)
    ]
    results = gather_jobs(jobs)
    writer = RunWriter(out, "sweep", cfg)
    entries = []
    for index, (amplitudes, result) in enumerate(zip(members, results)):
        name = f"member_{index:03d}"
        if isinstance(result, NlkgError):
            logger.warning("Sweep member failed", member=name, error=str(result))
            writer.stage(name, "failed")
            entries.append({"member": name, "A": amplitudes, "error": str(result)})
        elif isinstance(result, BaseException):
            raise result
        else:
            writer.stage(name, "done")
            writer.adopt(f"{name}/manifest.json", kind="manifest")
            entries.append({"member": name, "A": amplitudes, "summary": result})
    writer.write_json("sweep.json", entries)
    writer.finish()
    return {
        "members": len(entries),
        "failed": sum("error" in entry for entry in entries),
    }
