import math
import unittest
import pytest
import numpy as np

from ..data import GroupAggregates
from ..mechanisms import (
    RandomSource,
    PrivacyAccountant,
    Denied,
    laplace_ppf,
    laplace_sample,
    tslm_epsilon,
    tslm,
)
from ..query import AggregateSpec, AtomicQuery
from ..util import binomial_slack


class RandomSource_Tester(unittest.TestCase):
    def test_reproducible(self):
        a = RandomSource(42, 3).uniform(5)
        b = RandomSource(42, 3).uniform(5)
        np.testing.assert_array_equal(a, b)

    def test_streams_differ(self):
        a = RandomSource(42, 0).uniform(5)
        b = RandomSource(42, 1).uniform(5)
        self.assertFalse(np.array_equal(a, b))
        self.assertRaises(ValueError, RandomSource, 1, -1)

    def test_large_seed(self):
        a = RandomSource(2 ** 64 + 5).uniform(3)
        np.testing.assert_array_equal(a, RandomSource(5).uniform(3))


class Laplace_Tester(unittest.TestCase):
    def test_ppf(self):
        self.assertEqual(float(laplace_ppf(0.5, 2.0)), 0.0)
        self.assertAlmostEqual(float(laplace_ppf(0.75, 2.0)), 2.0 * math.log(2.0))
        self.assertAlmostEqual(float(laplace_ppf(0.25, 2.0)), -2.0 * math.log(2.0))
        self.assertRaises(ValueError, laplace_ppf, 0.5, 0.0)

    def test_sample_moments(self):
        draws = laplace_sample(3.0, RandomSource(9), 40000)
        self.assertEqual(draws.shape, (40000,))
        self.assertTrue(np.all(np.isfinite(draws)))
        # E|X| = scale, Var = 2 scale^2
        self.assertAlmostEqual(np.abs(draws).mean(), 3.0, delta=0.1)
        self.assertAlmostEqual(draws.mean(), 0.0, delta=0.1)


class TslmEpsilon_Tester(unittest.TestCase):
    def test_formula(self):
        self.assertAlmostEqual(tslm_epsilon(1.0, 0.05, 10.0), math.log(10.0) / 10.0, places=12)
        self.assertAlmostEqual(tslm_epsilon(2.0, 0.005, 4.0), 2.0 * math.log(100.0) / 4.0)

    def test_boundary_false_negative(self):
        eps = tslm_epsilon(1.0, 0.05, 10.0)
        self.assertAlmostEqual(0.5 * math.exp(-10.0 * eps), 0.05, places=12)

    def test_invalid(self):
        self.assertRaises(ValueError, tslm_epsilon, 1.0, 0.5, 10.0)
        self.assertRaises(ValueError, tslm_epsilon, 1.0, 0.0, 10.0)
        self.assertRaises(ValueError, tslm_epsilon, 1.0, 0.05, 0.0)


class Tslm_Tester(unittest.TestCase):
    def setUp(self):
        self.q = AtomicQuery("Q1", AggregateSpec("COUNT_STAR"), thresholds=50, value_range=(0, 100))
        self.less = AtomicQuery(
            "Q2", AggregateSpec("COUNT_STAR"), thresholds=50, direction="LESS", value_range=(0, 100)
        )
        self.far = GroupAggregates("Q1", np.array([0.0, 100.0, 0.0, 100.0]))

    def test_far_values(self):
        out = tslm(self.q, self.far, 5.0, 0.05, RandomSource(1))
        self.assertEqual(out.reported, frozenset({1, 3}))
        self.assertAlmostEqual(out.epsilon, tslm_epsilon(1.0, 0.05, 5.0))
        self.assertEqual(out.noisy.shape, (4,))

    def test_less_direction(self):
        out = tslm(self.less, self.far, 5.0, 0.05, RandomSource(1))
        self.assertEqual(out.reported, frozenset({0, 2}))

    def test_per_predicate_thresholds(self):
        exact = GroupAggregates("Q1", np.array([10.0, 10.0]))
        out = tslm(self.q, exact, 1.0, 0.05, RandomSource(4), thresholds=[0.0, 100.0])
        self.assertEqual(out.reported, frozenset({0}))

    def test_shift_range(self):
        self.assertRaises(ValueError, tslm, self.q, self.far, 0.0, 0.05, RandomSource())
        self.assertRaises(ValueError, tslm, self.q, self.far, 101.0, 0.05, RandomSource())

    def test_false_negative_rate(self):
        # predicates sitting exactly on the threshold are missed with
        # probability beta
        beta, u, k, trials = 0.05, 10.0, 200, 100
        exact = GroupAggregates("Q1", np.full(k, 50.0))
        missed = 0
        for t in range(trials):
            out = tslm(self.q, exact, u, beta, RandomSource(5, t))
            missed += k - len(out.reported)
        n = k * trials
        rate = missed / n
        slack = binomial_slack(beta, n) - beta
        self.assertLessEqual(rate, beta + slack)
        self.assertGreaterEqual(rate, beta - slack)


class PrivacyAccountant_Tester(unittest.TestCase):
    def test_charges(self):
        acct = PrivacyAccountant(1.0, 3)
        self.assertIs(acct.charge(None, 0.1, "a"), acct)
        self.assertIs(acct.charge([0, 2], 0.2, "b"), acct)
        np.testing.assert_array_almost_equal(acct.ledger, [0.3, 0.1, 0.3])
        self.assertEqual(acct.labels, ["a", "b"])
        self.assertEqual(acct.epsilon_spent, math.fsum([0.1, 0.2]))
        self.assertFalse(acct.denied)

    def test_budget_exceeded(self):
        acct = PrivacyAccountant(0.5, 2)
        acct.charge(None, 0.3)
        verdict = acct.charge(None, 0.3)
        self.assertIsInstance(verdict, Denied)
        self.assertEqual(verdict.reason, "BudgetExceeded")
        self.assertAlmostEqual(verdict.epsilon_spent, 0.3)
        self.assertTrue(acct.denied)
        # the refused charge leaves the ledger untouched
        self.assertEqual(acct.charges, [0.3])
        np.testing.assert_array_almost_equal(acct.ledger, [0.3, 0.3])

    def test_exact_budget_allowed(self):
        acct = PrivacyAccountant(0.5, 2)
        self.assertIs(acct.charge(None, 0.25), acct)
        self.assertIs(acct.charge(None, 0.25), acct)

    def test_zero_budget(self):
        acct = PrivacyAccountant(0.0, 1)
        self.assertIsInstance(acct.charge(None, 1e-9), Denied)

    def test_invalid(self):
        self.assertRaises(ValueError, PrivacyAccountant, -1.0, 2)
        self.assertRaises(ValueError, PrivacyAccountant, 1.0, 0)
        with pytest.raises(ValueError):
            PrivacyAccountant(1.0, 2).charge(None, 0.0)


suite = unittest.TestSuite()
test_classes = [
    RandomSource_Tester,
    Laplace_Tester,
    TslmEpsilon_Tester,
    Tslm_Tester,
    PrivacyAccountant_Tester,
]
for i in test_classes:
    a = unittest.TestLoader().loadTestsFromTestCase(i)
    suite.addTest(a)

if __name__ == "__main__":
    runner = unittest.TextTestRunner()
    runner.run(suite)
