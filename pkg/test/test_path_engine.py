"""
Unit tests for path_engine.py

Includes a two-step Hull-White path recomputed by hand with plain float
arithmetic as a golden reference for the vectorized recursion.
"""

import math
import sys
import unittest
from pathlib import Path
from unittest.mock import patch

import numpy as np

sys.path.insert(0, str(Path(__file__).parent.parent / 'scripts'))

import path_engine
from path_engine import (
    PathBatch,
    RngStream,
    SimulationError,
    TimeGrid,
    simulate_batch,
    simulate_from_increments,
    simulate_path,
    simulate_terminal,
)
from sv_models import make_model
from test_fixtures import RUN_SLOW_TESTS, ParameterFixtures


def _hand_two_step_hull_white(dB1: float, dB2: float):
    """Euler recursion for mu=0.2, c=0.1, v0=0.2, r=0.0953, T=0.5 on two steps."""
    mu, c, r, dt = 0.2, 0.1, 0.0953, 0.25
    v = [0.2]
    log_y = [0.0]
    for _ in range(2):
        v.append(v[-1] + mu * v[-1] * dt + c * v[-1] * dB1)
        log_y.append(log_y[-1] + (mu - 0.5 * c * c) * dt + c * dB1)
    y = [math.exp(value) for value in log_y]
    f = v[:2]
    m_total = sum(fk * fk * dt for fk in f)
    u_int = sum(fk * dB1 for fk in f)
    i_running = [0.0, f[0] * dB1, u_int]
    weights = [f[k] * 1.0 * y[k] * dt for k in range(2)]
    psi = [
        f[0] * c * f[0] * (weights[0] + weights[1]) / y[0],
        f[1] * c * f[1] * weights[1] / y[1],
    ]
    xi_hat = math.log(100.0) + sum((r - 0.5 * fk * fk) * dt + fk * dB2 for fk in f)
    return {
        'm_total': m_total,
        'psi': psi,
        'c_total': (psi[0] + psi[1]) * dt,
        'ell': (psi[0] * i_running[0] + psi[1] * i_running[1]) * dt,
        'u_int': u_int,
        'v_int': sum(fk * dB2 for fk in f),
        'zint': sum(dB2 / fk for fk in f),
        'inv_f2': sum(dt / (fk * fk) for fk in f),
        'i_running': i_running,
        'm_running': [0.0, f[0] ** 2 * dt, m_total],
        'xi_hat_T': xi_hat,
    }


class TestTimeGridAndStreams(unittest.TestCase):

    def test_grid(self):
        grid = TimeGrid(t=0.0, T=0.5, n_steps=500)
        self.assertAlmostEqual(grid.dt, 0.001)
        with self.assertRaises(ValueError):
            TimeGrid(t=0.5, T=0.5, n_steps=10)
        with self.assertRaises(ValueError):
            TimeGrid(t=0.0, T=1.0, n_steps=1)

    def test_stream_reproducible_and_distinct(self):
        a1, a2 = RngStream(42, 3).normals(50)
        b1, b2 = RngStream(42, 3).normals(50)
        c1, _ = RngStream(42, 4).normals(50)
        d1, _ = RngStream(43, 3).normals(50)
        np.testing.assert_array_equal(a1, b1)
        np.testing.assert_array_equal(a2, b2)
        self.assertFalse(np.array_equal(a1, c1))
        self.assertFalse(np.array_equal(a1, d1))
        self.assertFalse(np.array_equal(a1, a2))


class TestSimulateFromIncrements(unittest.TestCase):

    def test_golden_two_step_hull_white(self):
        m = make_model('hull_white', ParameterFixtures.hull_white_params(), epsilon=0.0)
        grid = TimeGrid(t=0.0, T=0.5, n_steps=2)
        dB1, dB2 = 0.1, -0.1
        # increments are supplied as standard normals and scaled by sqrt(dt) = 0.5
        z1 = np.full((1, 2), dB1 / 0.5)
        z2 = np.full((1, 2), dB2 / 0.5)
        path = simulate_from_increments(m, grid, math.log(100.0), 0.2, 0.0, z1, z2, r=0.0953)[0]
        expected = _hand_two_step_hull_white(dB1, dB2)

        self.assertTrue(path.valid)
        for name in ('m_total', 'c_total', 'ell', 'u_int', 'v_int', 'zint', 'inv_f2', 'xi_hat_T'):
            self.assertAlmostEqual(getattr(path, name), expected[name], places=12, msg=name)
        np.testing.assert_allclose(path.psi, expected['psi'], rtol=1e-12)
        np.testing.assert_allclose(path.i_running, expected['i_running'], rtol=1e-12, atol=1e-15)
        np.testing.assert_allclose(path.m_running, expected['m_running'], rtol=1e-12, atol=1e-15)
        self.assertAlmostEqual(path.xi_T_rho, path.xi_hat_T, places=15)

    def test_constant_model_functionals(self):
        sigma = 0.2
        m = ParameterFixtures.constant(sigma)
        grid = TimeGrid(t=0.0, T=0.5, n_steps=50)
        rng = np.random.default_rng(1)
        z1 = rng.standard_normal((20, 50))
        z2 = rng.standard_normal((20, 50))
        batch = simulate_from_increments(m, grid, math.log(100.0), sigma, 0.3, z1, z2, r=0.05)
        np.testing.assert_allclose(batch.m_total, sigma ** 2 * 0.5, rtol=1e-13)
        np.testing.assert_array_equal(batch.psi, 0.0)
        np.testing.assert_array_equal(batch.c_total, 0.0)
        np.testing.assert_array_equal(batch.ell, 0.0)
        b2_T = z2.sum(axis=1) * math.sqrt(grid.dt)
        np.testing.assert_allclose(batch.zint, b2_T / sigma, rtol=1e-12, atol=1e-14)

    def test_pathwise_invariants(self):
        for m in (ParameterFixtures.hull_white(), ParameterFixtures.stein_stein(), ParameterFixtures.heston()):
            grid = TimeGrid(t=0.0, T=0.5, n_steps=100)
            rng = np.random.default_rng(7)
            z1 = rng.standard_normal((200, 100))
            z2 = rng.standard_normal((200, 100))
            batch = simulate_from_increments(m, grid, math.log(100.0), m.params.v0, 0.0, z1, z2,
                                             r=m.params.r)
            self.assertTrue(np.all(batch.valid), m.label)
            np.testing.assert_array_equal(batch.c_total, batch.psi.sum(axis=1) * grid.dt)
            np.testing.assert_array_equal(batch.i_running[:, 0], 0.0)
            np.testing.assert_array_equal(batch.m_running[:, 0], 0.0)
            self.assertTrue(np.all(np.diff(batch.m_running, axis=1) >= 0), m.label)
            np.testing.assert_array_equal(batch.m_running[:, -1], batch.m_total)
            np.testing.assert_array_equal(batch.xi_T_rho, batch.xi_hat_T)
            if m.epsilon > 0:
                self.assertTrue(np.all(batch.m_total >= m.epsilon * 0.5 * (1 - 1e-12)), m.label)
                self.assertTrue(np.all(batch.inv_f2 <= 0.5 / m.epsilon * (1 + 1e-12)), m.label)

    def test_non_finite_path_is_flagged(self):
        m = ParameterFixtures.hull_white()
        grid = TimeGrid(t=0.0, T=0.5, n_steps=4)
        z1 = np.zeros((3, 4))
        z2 = np.zeros((3, 4))
        z1[1, 0] = np.inf
        batch = simulate_from_increments(m, grid, math.log(100.0), 0.2, 0.0, z1, z2)
        np.testing.assert_array_equal(batch.valid, [True, False, True])
        self.assertEqual(batch.n_invalid, 1)
        self.assertEqual(len(batch.valid_only()), 2)

    def test_rejects_bad_shapes_and_rho(self):
        m = ParameterFixtures.hull_white()
        grid = TimeGrid(t=0.0, T=0.5, n_steps=4)
        with self.assertRaises(ValueError):
            simulate_from_increments(m, grid, 0.0, 0.2, 0.0, np.zeros((2, 3)), np.zeros((2, 3)))
        with self.assertRaises(ValueError):
            simulate_from_increments(m, grid, 0.0, 0.2, 1.0, np.zeros((2, 4)), np.zeros((2, 4)))


class TestSimulateBatch(unittest.TestCase):

    def test_single_path_matches_simulate_path(self):
        m = ParameterFixtures.stein_stein()
        grid = TimeGrid(t=0.0, T=0.5, n_steps=50)
        batch = simulate_batch(m, grid, math.log(100.0), 0.2, 0.0, seed=9, n_paths=1, r=0.0953)
        path = simulate_path(m, grid, math.log(100.0), 0.2, 0.0, RngStream(9, 0), r=0.0953)
        self.assertEqual(batch[0].m_total, path.m_total)
        self.assertEqual(batch[0].ell, path.ell)
        np.testing.assert_array_equal(batch[0].psi, path.psi)

    def test_non_finite_single_path_is_flagged(self):
        m = ParameterFixtures.hull_white()
        grid = TimeGrid(t=0.0, T=0.5, n_steps=4)
        blown_up = (np.full(4, np.inf), np.zeros(4))
        with patch.object(RngStream, 'normals', return_value=blown_up):
            with self.assertLogs('path_engine', level='WARNING'):
                path = simulate_path(m, grid, math.log(100.0), 0.2, 0.0, RngStream(3, 5), r=0.0953)
        self.assertFalse(path.valid)

    def test_worker_count_does_not_change_output(self):
        m = ParameterFixtures.hull_white()
        grid = TimeGrid(t=0.0, T=0.5, n_steps=20)
        with patch.object(path_engine.Config, 'CHUNK_SIZE', 64):
            one = simulate_batch(m, grid, math.log(100.0), 0.2, 0.0, seed=42, n_paths=300, workers=1)
            four = simulate_batch(m, grid, math.log(100.0), 0.2, 0.0, seed=42, n_paths=300, workers=4)
        for name in PathBatch._ARRAY_FIELDS:
            np.testing.assert_array_equal(getattr(one, name), getattr(four, name), err_msg=name)

    def test_iteration_yields_paths_in_order(self):
        m = ParameterFixtures.constant()
        grid = TimeGrid(t=0.0, T=0.5, n_steps=10)
        batch = simulate_batch(m, grid, math.log(100.0), 0.2, 0.0, seed=1, n_paths=5)
        paths = list(batch)
        self.assertEqual(len(paths), 5)
        self.assertEqual([p.xi_hat_T for p in paths], list(batch.xi_hat_T))
        rebuilt = PathBatch.from_paths(grid, paths, seed=1)
        np.testing.assert_array_equal(rebuilt.m_running, batch.m_running)

    def test_constant_model_terminal_is_gaussian(self):
        sigma, r, tau = 0.2, 0.0953, 0.5
        m = ParameterFixtures.constant(sigma)
        grid = TimeGrid(t=0.0, T=tau, n_steps=20)
        batch = simulate_batch(m, grid, math.log(100.0), sigma, 0.0, seed=3, n_paths=10_000, r=r)
        expected = math.log(100.0) + (r - 0.5 * sigma ** 2) * tau
        bound = 3 * sigma * math.sqrt(tau) / math.sqrt(10_000)
        self.assertLess(abs(batch.xi_hat_T.mean() - expected), bound)

    def test_invalid_fraction_policy(self):
        m = ParameterFixtures.hull_white()
        grid = TimeGrid(t=0.0, T=0.5, n_steps=4)

        def poisoned(seed, start, stop, n_steps):
            z1 = np.zeros((stop - start, n_steps))
            z1[:, 0] = np.inf
            return z1, np.zeros((stop - start, n_steps))

        with patch.object(path_engine, '_draw_chunk', side_effect=poisoned):
            with self.assertRaises(SimulationError):
                simulate_batch(m, grid, 0.0, 0.2, 0.0, seed=1, n_paths=10)

    def test_rejects_empty_batch(self):
        with self.assertRaises(ValueError):
            simulate_batch(ParameterFixtures.hull_white(), TimeGrid(0.0, 0.5, 4), 0.0, 0.2, 0.0,
                           seed=1, n_paths=0)


class TestSimulateTerminal(unittest.TestCase):

    def test_zero_rho_column_matches_batch(self):
        m = ParameterFixtures.stein_stein()
        grid = TimeGrid(t=0.0, T=0.5, n_steps=30)
        batch = simulate_batch(m, grid, math.log(100.0), 0.2, -0.5, seed=8, n_paths=50, r=0.0953)
        xi = simulate_terminal(m, grid, math.log(100.0), 0.2, [0.0, -0.5], seed=8, n_paths=50, r=0.0953)
        self.assertEqual(xi.shape, (50, 2))
        np.testing.assert_allclose(xi[:, 0], batch.xi_hat_T, rtol=0, atol=1e-12)
        np.testing.assert_allclose(xi[:, 1], batch.xi_T_rho, rtol=0, atol=1e-12)


@unittest.skipUnless(RUN_SLOW_TESTS, "set RUN_SLOW_TESTS=1 for full-size statistical checks")
class TestIntegratedVarianceConsistency(unittest.TestCase):

    def test_mean_matches_independent_larger_run(self):
        m = ParameterFixtures.hull_white()
        grid = TimeGrid(t=0.0, T=0.5, n_steps=100)
        small = simulate_batch(m, grid, math.log(100.0), 0.2, 0.0, seed=42, n_paths=10_000, r=0.0953)
        large = simulate_batch(m, grid, math.log(100.0), 0.2, 0.0, seed=4242, n_paths=100_000, r=0.0953)
        se = math.hypot(small.m_total.std(ddof=1) / math.sqrt(10_000),
                        large.m_total.std(ddof=1) / math.sqrt(100_000))
        self.assertLess(abs(small.m_total.mean() - large.m_total.mean()), 3 * se)


if __name__ == '__main__':
    unittest.main()
