#!/usr/bin/env python3
"""
triad-da command line: run triad simulations, ensembles, filter twin
experiments and noise calibration from a YAML experiment file.
"""

import argparse
import logging
import os
import sys
from dataclasses import replace
from typing import List, Optional, Tuple

from triad_da import __version__
from triad_da.assimilation.particle_filter import FilterDiagnostics, aggregate_runs, run_twin_experiment
from triad_da.calibration.calibration import grid_sweep
from triad_da.cli import io, plots
from triad_da.cli.config import (ExperimentConfig, config_summary, load_config, merge_config_with_args)
from triad_da.ensemble.ensemble_engine import run_ensemble
from triad_da.integrate.sde_integrator import integrate
from triad_da.utils.errors import ConfigError, DivergenceError, FilterDegeneracyError, TriadError
from triad_da.utils.parallel import parallel_map
from triad_da.utils.rng import StreamPurpose, derive_seed

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_CONFIG = 2
EXIT_DIVERGENCE = 3
EXIT_DEGENERACY = 4

TOP_ROWS = 5


def _prepare(cfg: ExperimentConfig, command: str) -> Tuple[str, io.Manifest]:
    out_dir = cfg.resolve_output_dir()
    os.makedirs(out_dir, exist_ok=True)
    manifest = io.Manifest(out_dir, command, cfg.seed, cfg.config_hash(), config_summary(cfg))
    manifest.write()
    return out_dir, manifest


def cmd_simulate(cfg: ExperimentConfig) -> int:
    """Single trajectory: trajectory.csv and trajectory.svg."""
    out_dir, manifest = _prepare(cfg, "simulate")
    geom = cfg.geometry()
    traj = integrate(cfg.model, geom, cfg.a0_array, cfg.b_array, cfg.dt, cfg.final_time,
                     seed=cfg.seed, record_stride=cfg.record_stride)
    io.write_trajectory_csv(manifest.add("trajectory.csv", io.SCHEMA_TRAJECTORY), traj)
    if len(traj.times):
        plots.plot_trajectory(manifest.add("trajectory.svg", io.SCHEMA_SVG), traj)
    if traj.diverged:
        manifest.finish("diverged", f"trajectory diverged at t={traj.divergence_time}")
        raise DivergenceError(f"{cfg.model.label} trajectory diverged at t={traj.divergence_time:g}")
    e0, h0 = traj.energy_series[0], traj.helicity_series[0]
    drift_e = abs(traj.energy_series[-1] - e0) / abs(e0) if e0 else float("nan")
    drift_h = abs(traj.helicity_series[-1] - h0) / abs(h0) if h0 else float("nan")
    manifest.finish()
    print(f"{cfg.model.label} trajectory to t={traj.times[-1]:g}: relative drift E {drift_e:.3e}, H {drift_h:.3e}")
    print(f"Wrote {len(manifest.artifacts)} artifacts to {out_dir}")
    return EXIT_OK


def cmd_ensemble(cfg: ExperimentConfig) -> int:
    """Free ensemble: moments.csv, realisations.csv and their figures."""
    out_dir, manifest = _prepare(cfg, "ensemble")
    run = run_ensemble(cfg.geometry(), cfg.model, cfg.b_array, cfg.a0_array, cfg.n_realisations,
                       cfg.ensemble_spread_std, cfg.dt, cfg.final_time, cfg.seed,
                       record_stride=cfg.record_stride, max_saved=cfg.max_saved, workers=cfg.workers)
    title = f"{cfg.model.label}, b = {[complex(v) for v in cfg.b]}, {cfg.n_realisations} realisations"
    io.write_moments_csv(manifest.add("moments.csv", io.SCHEMA_MOMENTS), run.moments)
    if run.saved_energies.shape[0]:
        io.write_realisations_csv(manifest.add("realisations.csv", io.SCHEMA_REALISATIONS), run.times,
                                  run.saved_ids, run.saved_energies)
        plots.plot_realisations(manifest.add("realisations.svg", io.SCHEMA_SVG), run.times, run.saved_energies,
                                title, d_diag=cfg.geometry().d_diag, mean=run.moments.mean)
    plots.plot_moments(manifest.add("moments.svg", io.SCHEMA_SVG), run.moments, title)
    manifest.finish()
    print(f"{cfg.model.label} ensemble: {run.diverged_count} of {cfg.n_realisations} realisations diverged")
    print(f"Wrote {len(manifest.artifacts)} artifacts to {out_dir}")
    return EXIT_OK


def _write_filter_outputs(manifest: io.Manifest, diag: FilterDiagnostics, prefix: str = "") -> None:
    io.write_filter_csv(manifest.add(f"{prefix}filter_diagnostics.csv", io.SCHEMA_FILTER), diag)
    if diag.particle_tracks is not None:
        io.write_tracks_csv(manifest.add(f"{prefix}filter_tracks.csv", io.SCHEMA_TRACKS),
                            diag.particle_track_times, diag.particle_tracks)
    if diag.truth_track is not None:
        io.write_truth_track_csv(manifest.add(f"{prefix}truth_track.csv", io.SCHEMA_TRUTH_TRACK),
                                 diag.truth_track_times, diag.truth_track)
    if diag.n_windows:
        plots.plot_filter_stats(manifest.add(f"{prefix}filter_stats.svg", io.SCHEMA_SVG), diag)
        plots.plot_filter_envelope(manifest.add(f"{prefix}filter_envelope.svg", io.SCHEMA_SVG), diag)
        plots.plot_ess(manifest.add(f"{prefix}filter_ess.svg", io.SCHEMA_SVG), diag)


def cmd_filter(cfg: ExperimentConfig) -> int:
    """Twin experiment: filter_diagnostics.csv and figures."""
    out_dir, manifest = _prepare(cfg, "filter")
    diag = run_twin_experiment(cfg)
    _write_filter_outputs(manifest, diag)
    if diag.status != "ok":
        manifest.finish(diag.status, f"filter degeneracy at t={diag.degenerate_time:g}")
        raise FilterDegeneracyError(f"filter degeneracy: zero total likelihood at t={diag.degenerate_time:g}")
    manifest.finish()
    final_unique = diag.unique_count[-1] if diag.n_windows else cfg.n_particles
    print(f"{cfg.model.label} filter: {diag.n_windows} assimilation times, final unique lineages {final_unique}")
    print(f"Wrote {len(manifest.artifacts)} artifacts to {out_dir}")
    return EXIT_OK


def _run_seed(cfg: ExperimentConfig, run: int) -> int:
    return cfg.seed if run == 0 else derive_seed(cfg.seed, StreamPurpose.RUN, run)


def _repeat_task(cfg: ExperimentConfig) -> FilterDiagnostics:
    return run_twin_experiment(cfg)


def repeat_runs(cfg: ExperimentConfig, n_runs: int) -> List[FilterDiagnostics]:
    """Independent twin experiments; run 0 uses the master seed itself."""
    if n_runs < 1:
        raise ConfigError("repeat.n_runs", f"must be positive, got {n_runs}")
    inner_workers = cfg.workers if n_runs == 1 else 1
    tasks = [replace(cfg, seed=_run_seed(cfg, r), workers=inner_workers) for r in range(n_runs)]
    return parallel_map(_repeat_task, tasks, cfg.workers if n_runs > 1 else 1)


def cmd_repeat(cfg: ExperimentConfig) -> int:
    """Repeated twin experiments: per-run diagnostics plus across-run envelopes."""
    out_dir, manifest = _prepare(cfg, "repeat")
    runs = repeat_runs(cfg, cfg.n_runs)
    for r, diag in enumerate(runs):
        io.write_filter_csv(manifest.add(f"run_{r:03d}_filter_diagnostics.csv", io.SCHEMA_FILTER), diag)
    summary = aggregate_runs(runs)
    io.write_repeat_csv(manifest.add("repeat_summary.csv", io.SCHEMA_REPEAT), summary)
    if len(summary.times):
        plots.plot_repeat(manifest.add("repeat_stats.svg", io.SCHEMA_SVG), summary,
                          f"{cfg.model.label} kernel, {cfg.n_runs} runs of {cfg.n_particles} particles")
        plots.plot_repeat_means(manifest.add("repeat_means.svg", io.SCHEMA_SVG), runs, summary,
                                f"{cfg.model.label} kernel, ensemble means of {cfg.n_runs} runs")
    degenerate = [r for r, d in enumerate(runs) if d.status != "ok"]
    if degenerate:
        manifest.finish("degenerate", f"filter degeneracy in runs {degenerate}")
        raise FilterDegeneracyError(f"filter degeneracy: zero total likelihood in runs {degenerate}")
    manifest.finish()
    print(f"{cfg.model.label} filter repeated {cfg.n_runs} times")
    print(f"Wrote {len(manifest.artifacts)} artifacts to {out_dir}")
    return EXIT_OK


def cmd_calibrate(cfg: ExperimentConfig) -> int:
    """Noise grid sweep: scores.csv, score_summary.csv, rank_histograms.csv."""
    out_dir, manifest = _prepare(cfg, "calibrate")
    base = replace(cfg, n_particles=cfg.cal_n_particles, final_time=cfg.cal_final_time)
    table = grid_sweep((cfg.cal_b_k, cfg.cal_b_p, cfg.cal_b_q), base, models=cfg.cal_models,
                       repeats=cfg.cal_repeats, fair=cfg.fair_crps, workers=cfg.workers)
    io.write_scores_csv(manifest.add("scores.csv", io.SCHEMA_SCORES), table)
    io.write_score_summary_csv(manifest.add("score_summary.csv", io.SCHEMA_SCORE_SUMMARY), table)
    io.write_rank_histograms_csv(manifest.add("rank_histograms.csv", io.SCHEMA_RANKS), table)
    for model in table.models:
        best = sorted(table.summary(), key=lambda s: (s.crps_by_model[model], s.rank))[:TOP_ROWS]
        for i, s in enumerate(best, start=1):
            counts = table.rank_counts(model, s.b)
            plots.plot_rank_histograms(manifest.add(f"ranks_{model.value}_{i}.svg", io.SCHEMA_SVG), counts,
                                       f"{model.label}, b = {list(s.b)}, CRPS {s.crps_by_model[model]:.4f}")
    manifest.finish()
    print("rank  b_k      b_p      b_q      overall CRPS")
    for s in table.ranked()[:TOP_ROWS]:
        print(f"{s.rank:>4}  {s.b[0]:<7g}  {s.b[1]:<7g}  {s.b[2]:<7g}  {s.overall:.5f}")
    print(f"Wrote {len(manifest.artifacts)} artifacts to {out_dir}")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "ensemble": cmd_ensemble,
    "filter": cmd_filter,
    "calibrate": cmd_calibrate,
    "repeat": cmd_repeat,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="triad-da",
        description="Stochastic helical triad models and particle filter twin experiments",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter
    )
    parser.add_argument("command", choices=sorted(COMMANDS), help="Experiment to run")
    parser.add_argument(
        "--config", type=str, default=None,
        help="Path to YAML experiment file (CLI arguments override config)"
    )
    parser.add_argument("-s", "--seed", type=int, default=None, help="Master seed")
    parser.add_argument(
        "-o", "--out", type=str, default=None,
        help="Output directory (default: output_dir from config, then $TRIAD_DA_OUT, then ./results)"
    )
    parser.add_argument("-j", "--workers", type=int, default=None, help="Worker processes")
    parser.add_argument("--model", choices=["det", "hst", "est"], default=None, help="Triad model")
    parser.add_argument("--runs", type=int, default=None, help="Number of runs for 'repeat'")
    parser.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    parser.add_argument("-q", "--quiet", action="store_true", help="Only warnings and errors")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(asctime)s - %(levelname)s - %(name)s - %(message)s")

    try:
        cfg = merge_config_with_args(load_config(args.config), args)
    except (FileNotFoundError, ConfigError) as e:
        print(f"Error loading config: {e}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        return COMMANDS[args.command](cfg)
    except ConfigError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except FilterDegeneracyError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_DEGENERACY
    except TriadError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_UNEXPECTED
    except Exception:
        logger.exception("Unexpected failure in '%s'", args.command)
        return EXIT_UNEXPECTED


if __name__ == "__main__":
    sys.exit(main())
