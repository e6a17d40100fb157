#!/usr/bin/env python3
"""
Long-running reproduction checks for the reference experiments.

Skipped unless TRIAD_DA_SLOW_TESTS=1; the full set takes tens of minutes.
"""

import unittest
import sys
import os
sys.path.insert(0, os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), 'src'))

import numpy as np

from triad_da.assimilation.particle_filter import run_twin_experiment
from triad_da.calibration.calibration import grid_sweep
from triad_da.cli.config import load_config, validate_and_convert_config
from triad_da.ensemble.ensemble_engine import run_ensemble
from triad_da.integrate.sde_integrator import KeyedNoise, integrate, integrate_batch, steps_for
from triad_da.model.triad_dynamics import energy, helicity

CONFIG_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), 'configs')
SLOW = os.environ.get("TRIAD_DA_SLOW_TESTS") == "1"

# Five lowest overall CRPS rows of the reference sweep, best first
REFERENCE_ROWS = [(0.05, 0.025, 0.01), (0.05, 0.025, 0.02), (0.1, 0.025, 0.02), (0.1, 0.05, 0.02),
                  (0.1, 0.05, 0.01)]


def pathwise_drift(model, cfg, n_paths=20):
    """Max relative E and H drift per path, and the spread of E and H at the final time."""
    geom = cfg.geometry()
    n_steps = steps_for(cfg.final_time, cfg.dt)
    a0 = np.tile(cfg.a0_array, (n_paths, 1))
    e0, h0 = energy(a0), helicity(a0, geom)
    worst = {"E": np.zeros(n_paths), "H": np.zeros(n_paths)}

    def recorder(_index, _t, a, _flags):
        worst["E"] = np.maximum(worst["E"], np.abs(energy(a) - e0) / np.abs(e0))
        worst["H"] = np.maximum(worst["H"], np.abs(helicity(a, geom) - h0) / np.abs(h0))

    final, _ = integrate_batch(model, geom, a0, cfg.b_array, cfg.dt, n_steps,
                               noise=KeyedNoise(cfg.seed, range(n_paths), 0, cfg.dt),
                               record_stride=cfg.record_stride, on_record=recorder)
    return worst, np.std(energy(final)), np.std(helicity(final, geom))


@unittest.skipUnless(SLOW, "set TRIAD_DA_SLOW_TESTS=1 to run")
class TestConservation(unittest.TestCase):
    """Test conservation over the reference horizon."""

    def test_deterministic_conservation(self):
        """Test E and H drift at most 1e-6 over T = 150 and shrink under dt halving."""
        cfg = load_config(os.path.join(CONFIG_DIR, 'det_triad.yaml'))
        geom = cfg.geometry()
        drifts = []
        for dt in (0.001, 0.0005):
            traj = integrate("det", geom, cfg.a0_array, cfg.b_array, dt, cfg.final_time, record_stride=100)
            de = np.max(np.abs(traj.energy_series / traj.energy_series[0] - 1.0))
            dh = np.max(np.abs(traj.helicity_series / traj.helicity_series[0] - 1.0))
            drifts.append(max(de, dh))
        self.assertLessEqual(drifts[1], 1e-6)
        self.assertGreaterEqual(drifts[0] / drifts[1], 4.0)

    def test_hst_conserves_helicity_only(self):
        """Test HST keeps H on every path while E spreads."""
        worst, e_std, _ = pathwise_drift("hst", load_config(os.path.join(CONFIG_DIR, 'full_noise.yaml')))
        self.assertLessEqual(np.max(worst["H"]), 1e-5)
        self.assertGreater(e_std, 1e-3)

    def test_est_conserves_energy_only(self):
        """Test EST keeps E on every path while H spreads."""
        worst, _, h_std = pathwise_drift("est", load_config(os.path.join(CONFIG_DIR, 'full_noise.yaml')))
        self.assertLessEqual(np.max(worst["E"]), 1e-5)
        self.assertGreater(h_std, 1e-3)


@unittest.skipUnless(SLOW, "set TRIAD_DA_SLOW_TESTS=1 to run")
class TestFiltering(unittest.TestCase):
    """Test the twin experiments."""

    def test_deterministic_kernel_collapses(self):
        """Test lineages collapse within 40 assimilation times in at least 9 of 10 seeds."""
        base = load_config(os.path.join(CONFIG_DIR, 'det_filter.yaml'))
        obs_std = np.sqrt(np.asarray(base.cov_diag))
        collapsed = 0
        grown = 0
        for seed in range(1, 11):
            diag = run_twin_experiment(validate_and_convert_config({**_plain(base), 'seed': seed}))
            hits = np.nonzero(diag.unique_count == 1)[0]
            if hits.size and hits[0] + 1 <= 40:
                collapsed += 1
            if np.any(diag.rmse > 3.0 * obs_std):
                grown += 1
        self.assertGreaterEqual(collapsed, 9)
        self.assertGreaterEqual(grown, 9)

    def _check_stochastic(self, name):
        diag = run_twin_experiment(load_config(os.path.join(CONFIG_DIR, name)))
        self.assertEqual(diag.status, "ok")
        self.assertTrue(np.all(diag.envelope_coverage() >= 0.9), diag.envelope_coverage())
        self.assertGreater(np.mean(diag.ess < 10.0), 0.5)
        tail = np.abs(diag.rmse[-6:, 0])
        self.assertFalse(np.all(np.diff(tail) > 0))

    def test_est_kernel(self):
        """Test the EST kernel tracks the truth."""
        self._check_stochastic('filter_est.yaml')

    def test_hst_kernel(self):
        """Test the HST kernel tracks the truth."""
        self._check_stochastic('filter_hst.yaml')


def oscillation_amplitude(run, t_min, t_max):
    """Peak-to-peak range of each mean modal energy over t_min <= t <= t_max."""
    window = (run.times >= t_min) & (run.times <= t_max)
    mean = run.moments.mean.data[window]
    return mean.max(axis=0) - mean.min(axis=0)


@unittest.skipUnless(SLOW, "set TRIAD_DA_SLOW_TESTS=1 to run")
class TestEnsembleStatistics(unittest.TestCase):
    """Test the mean behaviour of full-noise EST ensembles."""

    def _run(self, name):
        cfg = load_config(os.path.join(CONFIG_DIR, name))
        return run_ensemble(cfg.geometry(), cfg.model, cfg.b_array, cfg.a0_array, cfg.n_realisations,
                            cfg.ensemble_spread_std, cfg.dt, cfg.final_time, cfg.seed,
                            record_stride=cfg.record_stride, max_saved=0, workers=cfg.workers)

    def test_mean_energies_dampen(self):
        """Test 1000 EST realisations oscillate less in the mean for t >= 100 than for t < 20."""
        run = self._run('model_stats.yaml')
        early = oscillation_amplitude(run, 0.0, 20.0)
        late = oscillation_amplitude(run, 100.0, 150.0)
        for j in range(3):
            with self.subTest(mode=j):
                self.assertLess(late[j], early[j])

    def test_mean_stabilises_with_more_realisations(self):
        """Test 20,000 realisations give a smaller late-time oscillation of the mean than 1000."""
        small = oscillation_amplitude(self._run('model_stats.yaml'), 100.0, 150.0)
        large = oscillation_amplitude(self._run('model_stats_20000.yaml'), 100.0, 150.0)
        self.assertLess(float(np.sum(large)), float(np.sum(small)))


@unittest.skipUnless(SLOW, "set TRIAD_DA_SLOW_TESTS=1 to run")
class TestLargeNoise(unittest.TestCase):
    """Test large-noise ensembles."""

    def _run(self, name):
        cfg = load_config(os.path.join(CONFIG_DIR, name))
        return run_ensemble(cfg.geometry(), cfg.model, cfg.b_array, cfg.a0_array, cfg.n_realisations,
                            cfg.ensemble_spread_std, cfg.dt, cfg.final_time, cfg.seed,
                            record_stride=cfg.record_stride, max_saved=0, workers=cfg.workers)

    def test_hst_blows_up(self):
        """Test some HST realisations diverge with b_p = 1."""
        self.assertGreater(self._run('large_noise_hst.yaml').diverged_count, 0)

    def test_est_stable_in_mean(self):
        """Test EST with b_p = 10 keeps every realisation finite."""
        run = self._run('large_noise_est.yaml')
        self.assertEqual(run.diverged_count, 0)
        self.assertTrue(np.all(np.isfinite(run.moments.mean.data)))


@unittest.skipUnless(SLOW, "set TRIAD_DA_SLOW_TESTS=1 to run")
class TestCalibration(unittest.TestCase):
    """Test the noise sweep at the reduced horizon."""

    def test_reference_amplitude_scores_well(self):
        """Test b = (0.05, 0.025, 0.01) scores near 0.0338 and ranks in the top quartile."""
        cfg = load_config(os.path.join(CONFIG_DIR, 'calibration_reduced.yaml'))
        base = validate_and_convert_config({**_plain(cfg), 'filter.n_particles': cfg.cal_n_particles,
                                            'time.final_time': cfg.cal_final_time})
        table = grid_sweep((cfg.cal_b_k, cfg.cal_b_p, cfg.cal_b_q), base, models=cfg.cal_models,
                           workers=cfg.workers)
        summary = {s.b: s for s in table.summary()}
        best = summary[(0.05, 0.025, 0.01)]
        self.assertAlmostEqual(best.overall, 0.0338, delta=0.3 * 0.0338)
        self.assertLessEqual(best.rank, len(summary) // 4)

    def test_leading_rows_reproduced_across_seeds(self):
        """Test over 10 seeds the best reference rows stay at the top of the sweep.

        b = (0.05, 0.025, 0.01) must be among the five best rows, and the five
        reference rows must all rank in the top quartile, in at least 8 seeds.
        """
        cfg = load_config(os.path.join(CONFIG_DIR, 'calibration_reduced.yaml'))
        best_in_top5 = 0
        leaders_in_quartile = 0
        for seed in range(1, 11):
            base = validate_and_convert_config({**_plain(cfg), 'seed': seed,
                                                'filter.n_particles': cfg.cal_n_particles,
                                                'time.final_time': cfg.cal_final_time})
            table = grid_sweep((cfg.cal_b_k, cfg.cal_b_p, cfg.cal_b_q), base, models=cfg.cal_models,
                               workers=cfg.workers)
            ranks = {s.b: s.rank for s in table.summary()}
            quartile = len(ranks) // 4
            if ranks[REFERENCE_ROWS[0]] <= 5:
                best_in_top5 += 1
            if all(ranks[b] <= quartile for b in REFERENCE_ROWS):
                leaders_in_quartile += 1
        self.assertGreaterEqual(best_in_top5, 8)
        self.assertGreaterEqual(leaders_in_quartile, 8)


def _plain(cfg):
    """Dotted-key mapping of a config, suitable for re-validation with overrides."""
    out = {}
    for key, value in cfg.as_dict().items():
        if value is None:
            continue
        if key in ('noise.b', 'initial.a0'):
            value = [str(complex(re, im)) for re, im in value]
        out[key] = value
    return out


if __name__ == '__main__':
    unittest.main()
