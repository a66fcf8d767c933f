"""
Unit tests for sv_models.py
"""

import math
import sys
import unittest
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).parent.parent / 'scripts'))

from sv_models import (
    CoeffBundle,
    ModelError,
    ModelName,
    ModelParams,
    default_epsilon,
    eval_coeffs,
    make_model,
)
from test_fixtures import ParameterFixtures


class TestMakeModel(unittest.TestCase):
    """Construction, defaults and validation."""

    def test_hull_white_coefficients(self):
        m = make_model('hull_white', ParameterFixtures.hull_white_params(), epsilon=0.0)
        self.assertAlmostEqual(float(m.f(0.2)), 0.2)
        self.assertAlmostEqual(float(m.eta(0.2)), 0.02)
        self.assertAlmostEqual(float(m.mu(0.2)), 0.04)

    def test_constant_model(self):
        m = ParameterFixtures.constant(0.2)
        for v in (-1.0, 0.0, 0.7):
            self.assertEqual(eval_coeffs(m, v), CoeffBundle(0.0, 0.0, 0.2, 0.0, 0.0, 0.0, 0.0, 0.0))

    def test_heston_floor_at_zero(self):
        m = make_model('heston', ParameterFixtures.heston_params(), epsilon=1e-5)
        self.assertAlmostEqual(float(m.f(0.0)), math.sqrt(1e-5), places=15)

    def test_defaults(self):
        self.assertEqual(make_model('hull_white', ParameterFixtures.hull_white_params()).epsilon, 0.0)
        ss = make_model('stein_stein', ParameterFixtures.stein_stein_params())
        self.assertEqual(ss.epsilon, 1e-5)
        self.assertEqual(ss.gamma, 0.0)
        heston = make_model('Heston', ParameterFixtures.heston_params())
        self.assertIs(heston.name, ModelName.HESTON)
        self.assertEqual((heston.epsilon, heston.gamma), (1e-5, 1e-5))
        self.assertEqual(default_epsilon('constant'), 0.0)

    def test_constant_is_never_perturbed(self):
        m = make_model('constant', ParameterFixtures.constant_params(), epsilon=0.5, gamma=0.5)
        self.assertEqual((m.epsilon, m.gamma), (0.0, 0.0))

    def test_validation_errors(self):
        with self.assertRaises(ModelError):
            make_model('sabr', ParameterFixtures.hull_white_params())
        with self.assertRaises(ModelError):
            make_model('hull_white', ModelParams(r=0.0, s0=100.0, v0=0.2, mu=0.2, c=0.0))
        with self.assertRaises(ModelError):
            make_model('stein_stein', ParameterFixtures.stein_stein_params(), epsilon=-1e-5)
        with self.assertRaises(ModelError):
            make_model('heston', ParameterFixtures.heston_params(), gamma=-1.0)
        with self.assertRaises(ModelError):
            make_model('heston', ModelParams(r=0.0, s0=100.0, v0=0.04, a=0.04, c=0.1))
        with self.assertRaises(ModelError):
            make_model('constant', ModelParams(r=0.0, s0=-1.0, v0=0.2))

    def test_novikov_flag_and_warning(self):
        self.assertTrue(ParameterFixtures.heston_params().novikov)
        self.assertIsNone(ParameterFixtures.hull_white_params().novikov)
        with self.assertLogs('sv_models', level='WARNING'):
            make_model('heston', ParameterFixtures.heston_non_novikov_params())

    def test_model_is_immutable(self):
        m = ParameterFixtures.hull_white()
        with self.assertRaises(Exception):
            m.epsilon = 1.0


class TestCoefficients(unittest.TestCase):
    """Coefficient values and derivatives."""

    GRID = np.linspace(-0.5, 0.5, 41)

    def _models(self):
        return [
            make_model('hull_white', ParameterFixtures.hull_white_params(), epsilon=1e-5),
            make_model('stein_stein', ParameterFixtures.stein_stein_params(), epsilon=1e-5),
            make_model('heston', ParameterFixtures.heston_params(), epsilon=1e-5, gamma=1e-5),
        ]

    def test_floor_holds_on_negative_grid(self):
        for m in self._models():
            self.assertTrue(np.all(m.f(self.GRID) >= math.sqrt(1e-5) * (1 - 1e-15)), m.label)

    def test_f_prime_matches_finite_difference(self):
        step = 1e-6
        for m in self._models():
            grid = self.GRID[np.abs(self.GRID) > 0.01]
            numeric = (m.f(grid + step) - m.f(grid - step)) / (2 * step)
            np.testing.assert_allclose(m.f_prime(grid), numeric, rtol=1e-5, err_msg=m.label)

    def test_eta_prime_matches_finite_difference(self):
        step = 1e-6
        for m in self._models():
            grid = self.GRID[np.abs(self.GRID) > 0.01]
            numeric = (m.eta(grid + step) - m.eta(grid - step)) / (2 * step)
            np.testing.assert_allclose(m.eta_prime(grid), numeric, rtol=1e-5, atol=1e-12, err_msg=m.label)

    def test_unperturbed_reduces_to_builtin_f(self):
        positive = np.linspace(0.01, 0.5, 20)
        hw = make_model('hull_white', ParameterFixtures.hull_white_params(), epsilon=0.0)
        ss = make_model('stein_stein', ParameterFixtures.stein_stein_params(), epsilon=0.0)
        heston = make_model('heston', ParameterFixtures.heston_params(), epsilon=0.0, gamma=0.0)
        np.testing.assert_allclose(hw.f(positive), positive, rtol=1e-15)
        np.testing.assert_allclose(ss.f(positive), positive, rtol=1e-15)
        np.testing.assert_allclose(heston.f(positive), np.sqrt(positive), rtol=1e-15)
        np.testing.assert_allclose(heston.eta(positive), 0.1 * np.sqrt(positive), rtol=1e-15)

    def test_hull_white_products(self):
        m = make_model('hull_white', ParameterFixtures.hull_white_params(), epsilon=0.0)
        cb = eval_coeffs(m, 0.2)
        self.assertAlmostEqual(cb.f_f_prime, 0.2, places=15)
        self.assertAlmostEqual(cb.f_eta, 0.004, places=15)

    def test_heston_perturbed_value(self):
        m = make_model('heston', ParameterFixtures.heston_params(), epsilon=1e-5)
        cb = eval_coeffs(m, 0.0225)
        self.assertAlmostEqual(cb.f, math.sqrt(0.0225 + 1e-5), places=15)
        self.assertAlmostEqual(cb.eta, 0.1 * math.sqrt(0.0225 + 1e-5), places=15)

    def test_eval_coeffs_broadcasts(self):
        m = ParameterFixtures.stein_stein()
        cb = eval_coeffs(m, np.array([0.1, 0.2, 0.3]))
        self.assertEqual(cb.f.shape, (3,))
        np.testing.assert_allclose(cb.f_eta, cb.f * cb.eta, rtol=0)
        np.testing.assert_allclose(cb.f_f_prime, cb.f * cb.f_prime, rtol=0)
        self.assertIsInstance(eval_coeffs(m, 0.2).f, float)


if __name__ == '__main__':
    unittest.main()
