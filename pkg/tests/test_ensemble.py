#!/usr/bin/env python3
"""
Unit tests for ensemble initialisation, propagation and moment statistics.
"""

import unittest
from unittest import mock
import sys
import os
sys.path.insert(0, os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), 'src'))

import numpy as np

from triad_da.ensemble import ensemble_engine
from triad_da.ensemble.ensemble_engine import (CentralSums, Ensemble, ensemble_moments, init_ensemble, modal_energies,
                                               propagate_ensemble, propagate_with_tracks, run_ensemble,
                                               window_steps)
from triad_da.integrate.sde_integrator import record_count
from triad_da.model.helical_algebra import reference_triad

A0 = np.ones(3, dtype=complex) / np.sqrt(3.0)
B = np.array([0.1, 0.05, 0.01])


class TestEnsembleBasics(unittest.TestCase):
    """Test ensemble construction."""

    def test_modal_energies(self):
        """Test |a_j|^2 per mode."""
        np.testing.assert_allclose(modal_energies([[1 + 1j, 2, 0], [0, 1j, -3]]), [[2, 4, 0], [0, 1, 9]])

    def test_modal_energy_examples(self):
        """Test a0, zero and mixed complex states."""
        np.testing.assert_allclose(modal_energies(A0), [1 / 3, 1 / 3, 1 / 3])
        np.testing.assert_array_equal(modal_energies(np.zeros(3, dtype=complex)), [0, 0, 0])
        np.testing.assert_allclose(modal_energies([1j, 1 + 1j, 0]), [1, 2, 0])

    def test_init_without_spread(self):
        """Test spread 0 gives identical particles with uniform weights."""
        e = init_ensemble(A0, 5, 0.0, seed=1)
        np.testing.assert_array_equal(e.particles, np.tile(A0, (5, 1)))
        np.testing.assert_allclose(e.weights, 0.2)
        np.testing.assert_array_equal(e.ancestors, np.arange(5))
        np.testing.assert_array_equal(e.ids, np.arange(5))
        self.assertFalse(e.diverged.any())
        self.assertEqual(e.t, 0.0)

    def test_init_spread(self):
        """Test the pooled perturbation standard deviation matches spread_std."""
        e = init_ensemble(A0, 20000, 0.1, seed=2)
        d = e.particles - A0
        pooled = np.std(np.concatenate([d.real.ravel(), d.imag.ravel()]))
        self.assertAlmostEqual(pooled, 0.1, delta=0.002)
        np.testing.assert_array_equal(init_ensemble(A0, 20000, 0.1, seed=2).particles, e.particles)

    def test_init_errors(self):
        """Test invalid sizes and spreads raise ValueError."""
        with self.assertRaises(ValueError):
            init_ensemble(A0, 0, 0.1, seed=1)
        with self.assertRaises(ValueError):
            init_ensemble(A0, 3, -0.1, seed=1)

    def test_weight_validation(self):
        """Test weights must sum to one and match the particle count."""
        with self.assertRaises(ValueError):
            Ensemble(particles=np.zeros((2, 3)), weights=[0.5, 0.6], ancestors=[0, 1])
        with self.assertRaises(ValueError):
            Ensemble(particles=np.zeros((2, 3)), weights=[1.0], ancestors=[0, 1])
        with self.assertRaises(ValueError):
            Ensemble(particles=np.zeros((2, 3)), weights=[1.5, -0.5], ancestors=[0, 1])

    def test_window_steps(self):
        """Test windows must be whole multiples of dt."""
        self.assertEqual(window_steps(10.0, 0.0005), 20000)
        self.assertEqual(window_steps(0.0, 0.01), 0)
        with self.assertRaises(ValueError):
            window_steps(0.0015, 0.001 * 1.1)
        with self.assertRaises(ValueError):
            window_steps(-1.0, 0.01)


class TestMoments(unittest.TestCase):
    """Test moment estimators."""

    def test_known_sample(self):
        """Test mean, std, skew and excess kurtosis of 1, 2, 3, 4."""
        mean, std, skew, kurt = ensemble_moments([1.0, 2.0, 3.0, 4.0])
        self.assertAlmostEqual(float(mean[0]), 2.5)
        self.assertAlmostEqual(float(std[0]), np.sqrt(5.0 / 3.0))
        self.assertAlmostEqual(float(skew[0]), 0.0)
        self.assertAlmostEqual(float(kurt[0]), -1.36)

    def test_normal_sample_bounds(self):
        """Test estimator accuracy on 1e5 standard normal samples."""
        x = np.random.default_rng(12).standard_normal((100000, 3))
        mean, std, skew, kurt = ensemble_moments(x)
        self.assertTrue(np.all(np.abs(mean) <= 0.02))
        self.assertTrue(np.all((std >= 0.99) & (std <= 1.01)))
        self.assertTrue(np.all(np.abs(skew) <= 0.03))
        self.assertTrue(np.all(np.abs(kurt) <= 0.06))

    def test_two_point_sample(self):
        """Test {0, 2} has mean 1, std sqrt(2) and zero skew."""
        mean, std, skew, _ = ensemble_moments([0.0, 2.0])
        self.assertAlmostEqual(float(mean[0]), 1.0)
        self.assertAlmostEqual(float(std[0]), np.sqrt(2.0))
        self.assertTrue(skew.mask[0])
        _, _, skew, _ = ensemble_moments([0.0, 2.0, 0.0, 2.0])
        self.assertAlmostEqual(float(skew[0]), 0.0)

    def test_masking_small_samples(self):
        """Test moments needing more samples are masked."""
        mean, std, skew, kurt = ensemble_moments([[1.0, 2.0, 3.0]])
        self.assertFalse(np.ma.is_masked(mean))
        self.assertTrue(std.mask.all())
        _, std, skew, kurt = ensemble_moments(np.arange(9.0).reshape(3, 3))
        self.assertFalse(std.mask.any())
        self.assertFalse(skew.mask.any())
        self.assertTrue(kurt.mask.all())
        mean, _, _, _ = ensemble_moments(np.zeros((0, 3)))
        self.assertTrue(mean.mask.all())

    def test_masking_zero_variance(self):
        """Test skew and kurtosis are masked for a constant component."""
        x = np.column_stack([np.full(6, 2.0), np.arange(6.0), np.arange(6.0) ** 2])
        _, std, skew, kurt = ensemble_moments(x)
        self.assertEqual(float(std[0]), 0.0)
        self.assertTrue(skew.mask[0])
        self.assertTrue(kurt.mask[0])
        self.assertFalse(skew.mask[1])

    def test_merged_sums_match_direct_estimate(self):
        """Test merging central sums of uneven parts reproduces the direct moments."""
        rng = np.random.default_rng(0)
        x = rng.gamma(2.0, size=(53, 3))
        parts = [x[:20], x[20:21], x[21:21], x[21:]]
        merged = None
        for part in parts:
            sums = CentralSums.empty(1)
            sums.set_record(0, part)
            merged = sums if merged is None else merged.merge(sums)
        series = merged.to_series(np.zeros(1), np.zeros(1))
        mean, std, skew, kurt = ensemble_moments(x)
        self.assertEqual(series.count[0], 53)
        np.testing.assert_allclose(series.mean[0], mean, rtol=1e-12)
        np.testing.assert_allclose(series.std[0], std, rtol=1e-12)
        np.testing.assert_allclose(series.skew[0], skew, rtol=1e-10)
        np.testing.assert_allclose(series.kurtosis[0], kurt, rtol=1e-10)


class TestPropagation(unittest.TestCase):
    """Test ensemble propagation and free runs."""

    def setUp(self):
        self.geom = reference_triad()

    def test_zero_duration(self):
        """Test propagating for zero time leaves the ensemble unchanged."""
        e = init_ensemble(A0, 4, 0.05, seed=3)
        out = propagate_ensemble(e, self.geom, "hst", B, 0.01, 0.0, master_seed=3)
        np.testing.assert_array_equal(out.particles, e.particles)
        self.assertEqual(out.t, 0.0)

    def test_models_agree_without_noise(self):
        """Test HST and EST coincide when b = 0."""
        e = init_ensemble(A0, 6, 0.05, seed=4)
        hst = propagate_ensemble(e, self.geom, "hst", np.zeros(3), 0.01, 1.0, master_seed=4)
        est = propagate_ensemble(e, self.geom, "est", np.zeros(3), 0.01, 1.0, master_seed=4)
        np.testing.assert_allclose(hst.particles, est.particles, atol=1e-13)
        self.assertAlmostEqual(hst.t, 1.0)

    def test_permutation_invariance(self):
        """Test a particle's path depends on its id, not its position."""
        e = init_ensemble(A0, 8, 0.05, seed=5)
        perm = np.random.default_rng(5).permutation(8)
        shuffled = Ensemble(particles=e.particles[perm], weights=e.weights[perm], ancestors=e.ancestors[perm],
                            ids=e.ids[perm])
        a = propagate_ensemble(e, self.geom, "est", B, 0.01, 0.5, master_seed=5)
        b = propagate_ensemble(shuffled, self.geom, "est", B, 0.01, 0.5, master_seed=5)
        np.testing.assert_array_equal(b.particles, a.particles[perm])

    def test_window_continuation(self):
        """Test later windows draw fresh noise keyed by their start step."""
        e = init_ensemble(A0, 3, 0.0, seed=6)
        first = propagate_ensemble(e, self.geom, "hst", B, 0.01, 0.5, master_seed=6)
        second = propagate_ensemble(first, self.geom, "hst", B, 0.01, 0.5, master_seed=6)
        self.assertAlmostEqual(second.t, 1.0)
        self.assertFalse(np.array_equal(first.particles, second.particles))

    def test_chunk_size_invariance(self):
        """Test results do not depend on the chunk size."""
        kwargs = dict(n=23, spread_std=0.02, dt=0.01, duration=1.0, master_seed=7, record_stride=10)
        full = run_ensemble(self.geom, "hst", B, A0, **kwargs)
        with mock.patch.object(ensemble_engine, "PARTICLE_CHUNK", 5):
            chunked = run_ensemble(self.geom, "hst", B, A0, **kwargs)
        np.testing.assert_array_equal(full.final.particles, chunked.final.particles)
        np.testing.assert_allclose(full.moments.mean.data, chunked.moments.mean.data, rtol=1e-12)
        np.testing.assert_allclose(full.moments.std.data, chunked.moments.std.data, rtol=1e-10)
        np.testing.assert_array_equal(full.saved_energies, chunked.saved_energies)

    def test_worker_count_invariance(self):
        """Test one and two workers give identical moments."""
        kwargs = dict(n=2500, spread_std=0.02, dt=0.01, duration=0.5, master_seed=8, record_stride=10)
        serial = run_ensemble(self.geom, "est", B, A0, workers=1, **kwargs)
        pooled = run_ensemble(self.geom, "est", B, A0, workers=2, **kwargs)
        np.testing.assert_array_equal(serial.moments.mean.data, pooled.moments.mean.data)
        np.testing.assert_array_equal(serial.moments.kurtosis.data, pooled.moments.kurtosis.data)
        np.testing.assert_array_equal(serial.final.particles, pooled.final.particles)

    def test_est_energy_sum(self):
        """Test EST mean modal energies sum to one at every record."""
        run = run_ensemble(self.geom, "est", B, A0, n=20, spread_std=0.0, dt=0.001, duration=2.0,
                           master_seed=9, record_stride=100)
        np.testing.assert_allclose(run.moments.mean.data.sum(axis=1), 1.0, atol=1e-8)
        self.assertEqual(len(run.times), record_count(2000, 100))
        self.assertEqual(run.saved_energies.shape, (20, len(run.times), 3))
        np.testing.assert_array_equal(run.moments.count, 20)
        self.assertEqual(run.diverged_count, 0)

    def test_saved_realisations_limited(self):
        """Test only max_saved realisations keep full energy series."""
        run = run_ensemble(self.geom, "hst", B, A0, n=10, spread_std=0.0, dt=0.01, duration=0.2,
                           master_seed=10, record_stride=5, max_saved=4)
        self.assertEqual(run.saved_energies.shape, (4, 5, 3))
        np.testing.assert_array_equal(run.saved_ids, np.arange(4))
        np.testing.assert_allclose(run.saved_energies[:, 0], np.full((4, 3), 1.0 / 3.0))

    def test_tracks_match_propagation(self):
        """Test tracked propagation ends where plain propagation ends."""
        e = init_ensemble(A0, 5, 0.05, seed=11)
        plain = propagate_ensemble(e, self.geom, "hst", B, 0.01, 0.3, master_seed=11)
        tracked, times, energies = propagate_with_tracks(e, self.geom, "hst", B, 0.01, 0.3, master_seed=11,
                                                         record_stride=10)
        np.testing.assert_array_equal(tracked.particles, plain.particles)
        self.assertEqual(energies.shape, (5, len(times), 3))
        np.testing.assert_allclose(times, [0.0, 0.1, 0.2, 0.3])
        np.testing.assert_allclose(energies[:, 0], modal_energies(e.particles))
        np.testing.assert_allclose(energies[:, -1], modal_energies(plain.particles))


if __name__ == '__main__':
    unittest.main()
