#!/usr/bin/env python3
"""
Unit tests for CRPS, rank histograms and the noise-amplitude sweep.
"""

import unittest
import sys
import os
sys.path.insert(0, os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), 'src'))

import numpy as np
from scipy import stats

from triad_da.calibration.calibration import (SENTINEL_SCORE, ScoreRow, ScoreTable, crps_ensemble, grid_sweep,
                                              rank_of_observation, score_run)
from triad_da.cli.config import validate_and_convert_config
from triad_da.model.enums import ModelKind


def sweep_config(**overrides):
    raw = {
        "seed": 3,
        "time": {"dt": 0.01, "final_time": 1.5, "record_stride": 10},
        "filter": {"n_particles": 5, "da_interval": 0.5},
    }
    raw.update(overrides)
    return validate_and_convert_config(raw)


def exact_crps(members, y):
    """Integral of (F(x) - 1{x >= y})^2 over the real line, evaluated piecewise."""
    x = np.sort(np.asarray(members, dtype=float))
    points = np.sort(np.append(x, y))
    total = 0.0
    for lo, hi in zip(points[:-1], points[1:]):
        mid = 0.5 * (lo + hi)
        cdf = np.mean(x <= mid)
        step = 1.0 if mid >= y else 0.0
        total += (cdf - step) ** 2 * (hi - lo)
    return total


def score_row(b, model, crps, status="ok"):
    return ScoreRow(b=b, model=model, seed=0, crps=np.full(3, crps), rank_counts=np.ones((3, 4), dtype=np.int64),
                    n_events=4, status=status)


class TestCrps(unittest.TestCase):
    """Test the ensemble CRPS estimator."""

    def test_single_member(self):
        """Test one member reduces to the absolute error."""
        self.assertAlmostEqual(crps_ensemble([1.0], 0.0), 1.0)
        self.assertAlmostEqual(crps_ensemble([1.0], 0.0, fair=True), 1.0)

    def test_closed_form_examples(self):
        """Test members equal to y score zero and {0, 1} at 0 scores 0.25."""
        self.assertEqual(crps_ensemble([0.4, 0.4, 0.4], 0.4), 0.0)
        self.assertAlmostEqual(crps_ensemble([0.0, 1.0], 0.0), 0.25)
        self.assertAlmostEqual(exact_crps([0.0, 1.0], 0.0), 0.25)

    def test_two_members(self):
        """Test CRPS of {0, 2} at y = 1, biased and fair."""
        self.assertAlmostEqual(crps_ensemble([0.0, 2.0], 1.0), 0.5)
        self.assertAlmostEqual(crps_ensemble([0.0, 2.0], 1.0, fair=True), 0.0)

    def test_matches_exact_integral(self):
        """Test the pair-sum form equals the integral of the squared CDF difference."""
        rng = np.random.default_rng(0)
        for _ in range(50):
            members = rng.normal(size=rng.integers(1, 30))
            y = rng.normal()
            self.assertAlmostEqual(crps_ensemble(members, y), exact_crps(members, y), places=12)

    def test_order_independent(self):
        """Test member order does not matter."""
        members = np.array([0.3, -1.2, 2.5, 0.0, 0.7])
        self.assertEqual(crps_ensemble(members, 0.4), crps_ensemble(members[::-1], 0.4))

    def test_identical_members(self):
        """Test an ensemble of equal members scores the absolute error."""
        self.assertAlmostEqual(crps_ensemble(np.full(10, 0.2), 0.5), 0.3)

    def test_fair_below_biased(self):
        """Test the fair estimator is never larger than the biased one."""
        rng = np.random.default_rng(1)
        for _ in range(20):
            members = rng.normal(size=8)
            self.assertLessEqual(crps_ensemble(members, 0.1, fair=True), crps_ensemble(members, 0.1) + 1e-15)

    def test_empty_rejected(self):
        """Test an empty ensemble raises ValueError."""
        with self.assertRaises(ValueError):
            crps_ensemble([], 0.0)


class TestRanks(unittest.TestCase):
    """Test observation ranks."""

    def test_ranks(self):
        """Test ranks below, between and above the members."""
        rng = np.random.default_rng(0)
        self.assertEqual(rank_of_observation([1.0, 2.0, 3.0], 0.0, rng), 0)
        self.assertEqual(rank_of_observation([1.0, 2.0, 3.0], 2.5, rng), 2)
        self.assertEqual(rank_of_observation([3.0, 1.0, 2.0], 5.0, rng), 3)

    def test_ties_broken_randomly(self):
        """Test ties spread uniformly across the tied positions."""
        rng = np.random.default_rng(1)
        ranks = [rank_of_observation([1.0, 1.0, 1.0], 1.0, rng) for _ in range(2000)]
        counts = np.bincount(ranks, minlength=4)
        self.assertEqual(counts.sum(), 2000)
        self.assertGreater(stats.chisquare(counts).pvalue, 1e-3)

    def test_exchangeable_observation_gives_flat_histogram(self):
        """Test ranks are uniform when the observation is drawn like the members."""
        rng = np.random.default_rng(2)
        counts = np.zeros(16, dtype=int)
        for _ in range(10000):
            sample = rng.normal(size=16)
            counts[rank_of_observation(sample[:15], sample[15], rng)] += 1
        self.assertGreater(stats.chisquare(counts).pvalue, 1e-3)


class TestScoreTable(unittest.TestCase):
    """Test summary ranking."""

    def setUp(self):
        b1, b2, b3 = (0.1, 0.05, 0.01), (0.2, 0.05, 0.01), (0.5, 0.05, 0.01)
        self.b = (b1, b2, b3)
        rows = [score_row(b1, ModelKind.EST, 0.02), score_row(b1, ModelKind.HST, 0.04),
                score_row(b2, ModelKind.EST, 0.01), score_row(b2, ModelKind.HST, 0.01),
                score_row(b3, ModelKind.EST, SENTINEL_SCORE, "degenerate"), score_row(b3, ModelKind.HST, 0.001)]
        self.table = ScoreTable(rows=rows, models=(ModelKind.EST, ModelKind.HST))

    def test_summary_ranks(self):
        """Test ranking by mean CRPS with failed cells last."""
        self.assertEqual(self.table.grid(), list(self.b))
        self.assertEqual(self.table.rank_of(self.b[1]), 1)
        self.assertEqual(self.table.rank_of(self.b[0]), 2)
        self.assertEqual(self.table.rank_of(self.b[2]), 3)
        self.assertIsNone(self.table.rank_of((9.0, 9.0, 9.0)))
        ranked = self.table.ranked()
        self.assertEqual([s.b for s in ranked], [self.b[1], self.b[0], self.b[2]])
        self.assertAlmostEqual(ranked[1].crps_by_model[ModelKind.HST], 0.04)
        self.assertAlmostEqual(ranked[1].overall, 0.03)

    def test_rank_counts(self):
        """Test rank counts sum over seeds and b."""
        self.assertEqual(self.table.rank_counts(ModelKind.EST).tolist(), [[3] * 4] * 3)
        self.assertEqual(self.table.rank_counts(ModelKind.HST, self.b[0]).tolist(), [[1] * 4] * 3)

    def test_failed_flag(self):
        """Test degenerate and diverged rows count as failed."""
        self.assertTrue(score_row(self.b[0], ModelKind.EST, SENTINEL_SCORE, "diverged").failed)
        self.assertFalse(score_row(self.b[0], ModelKind.EST, 0.1, "collapsed").failed)


class TestSweep(unittest.TestCase):
    """Test scoring of twin experiments over a noise grid."""

    def test_score_run(self):
        """Test one scored run has a rank event per assimilation time."""
        row = score_run(sweep_config(model="est"))
        self.assertEqual(row.n_events, 3)
        self.assertEqual(row.rank_counts.shape, (3, 6))
        np.testing.assert_array_equal(row.rank_counts.sum(axis=1), [3, 3, 3])
        self.assertTrue(np.all(np.isfinite(row.crps)) and np.all(row.crps >= 0))
        self.assertIn(row.status, ("ok", "collapsed"))

    def test_diverged_run_gets_sentinel(self):
        """Test an all-diverged run scores the sentinel."""
        row = score_run(sweep_config(model="hst", initial={"a0": [2e8, 0, 0]}))
        self.assertEqual(row.status, "diverged")
        self.assertTrue(row.failed)
        self.assertEqual(row.crps_mean, SENTINEL_SCORE)
        self.assertEqual(row.n_events, 0)

    def test_grid_order_and_shared_seeds(self):
        """Test rows follow grid order and models share a seed per cell."""
        cfg = sweep_config()
        table = grid_sweep(([0.1], [0.05], [0.01, 0.02]), cfg)
        self.assertEqual([(r.b, r.model) for r in table.rows],
                         [((0.1, 0.05, 0.01), ModelKind.EST), ((0.1, 0.05, 0.01), ModelKind.HST),
                          ((0.1, 0.05, 0.02), ModelKind.EST), ((0.1, 0.05, 0.02), ModelKind.HST)])
        self.assertEqual(table.rows[0].seed, table.rows[1].seed)
        self.assertNotEqual(table.rows[0].seed, table.rows[2].seed)
        self.assertEqual(len(table.summary()), 2)

    def test_zero_noise_models_agree(self):
        """Test both models score alike when b = 0."""
        table = grid_sweep(([0.0], [0.0], [0.0]), sweep_config())
        est, hst = table.rows
        np.testing.assert_allclose(est.crps, hst.crps, rtol=1e-6)
        np.testing.assert_array_equal(est.rank_counts, hst.rank_counts)

    def test_repeats(self):
        """Test repeats add one row per seed."""
        table = grid_sweep(([0.1], [0.05], [0.01]), sweep_config(), models=("est",), repeats=2)
        self.assertEqual(len(table.rows), 2)
        self.assertNotEqual(table.rows[0].seed, table.rows[1].seed)
        self.assertEqual(table.rank_counts(ModelKind.EST).sum(axis=1).tolist(), [6, 6, 6])

    def test_worker_count_invariance(self):
        """Test the sweep is identical with one or two workers."""
        grid = ([0.1, 0.2], [0.05], [0.01])
        serial = grid_sweep(grid, sweep_config(), workers=1)
        pooled = grid_sweep(grid, sweep_config(), workers=2)
        for a, b in zip(serial.rows, pooled.rows):
            self.assertEqual((a.b, a.model, a.seed, a.status), (b.b, b.model, b.seed, b.status))
            np.testing.assert_array_equal(a.crps, b.crps)
            np.testing.assert_array_equal(a.rank_counts, b.rank_counts)


if __name__ == '__main__':
    unittest.main()
