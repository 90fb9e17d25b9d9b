import unittest
import pytest
import numpy as np

from ..apportion import (
    ApportionInput,
    beta_split_two,
    beta_split_tree,
    beta_split_equal,
    alpha_split,
    numeric_lagrange_oracle,
    predicted_epsilon,
)


class BetaSplitTwo_Tester(unittest.TestCase):
    def test_formula(self):
        b1, b2 = beta_split_two(10.0, 30.0, 1.0, 2.0, 0.05)
        self.assertAlmostEqual(b1, 30.0 * 1.0 * 0.05 / (10.0 * 2.0 + 30.0 * 1.0))
        self.assertAlmostEqual(b1 + b2, 0.05)

    def test_symmetric(self):
        b1, b2 = beta_split_two(7.0, 7.0, 1.0, 1.0, 0.04)
        self.assertAlmostEqual(b1, 0.02)
        self.assertAlmostEqual(b2, 0.02)

    def test_matches_tree(self):
        out = beta_split_tree(ApportionInput([10.0, 30.0], [1.0, 2.0], [1, 1], 0.05))
        np.testing.assert_allclose(out.betas, beta_split_two(10.0, 30.0, 1.0, 2.0, 0.05))

    def test_invalid(self):
        self.assertRaises(ValueError, beta_split_two, 1.0, 1.0, 1.0, 1.0, 0.5)
        self.assertRaises(ValueError, beta_split_two, 0.0, 1.0, 1.0, 1.0, 0.05)


class BetaSplitTree_Tester(unittest.TestCase):
    def test_occurrences(self):
        out = beta_split_tree(ApportionInput([1, 1, 1], [1, 1, 1], [2, 1, 1], 0.04))
        np.testing.assert_allclose(out.betas, [0.01, 0.01, 0.01])
        self.assertAlmostEqual(out.predicted_epsilon, 4 * np.log(50.0))

    def test_constraint(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            n = int(rng.integers(1, 8))
            inp = ApportionInput(
                rng.uniform(0.5, 50.0, n),
                rng.uniform(0.5, 5.0, n),
                rng.integers(1, 4, n),
                float(rng.uniform(0.001, 0.49)),
            )
            betas = beta_split_tree(inp).betas
            self.assertAlmostEqual(float(np.dot(inp.o, betas)), inp.beta, places=14)
            self.assertTrue(np.all(betas > 0))

    def test_extreme_ratios(self):
        inp = ApportionInput([1e-6, 1e6], [1e3, 1e-3], [1, 1], 0.1)
        betas = beta_split_tree(inp).betas
        self.assertTrue(np.all(np.isfinite(betas)))
        self.assertAlmostEqual(betas.sum(), 0.1)

    def test_optimal_against_oracle(self):
        rng = np.random.default_rng(17)
        for _ in range(100):
            n = int(rng.integers(1, 7))
            inp = ApportionInput(
                rng.uniform(1.0, 100.0, n),
                rng.uniform(0.5, 10.0, n),
                rng.integers(1, 4, n),
                float(rng.uniform(0.01, 0.2)),
            )
            closed = beta_split_tree(inp).betas
            oracle = numeric_lagrange_oracle(inp)
            np.testing.assert_allclose(closed, oracle, rtol=1e-6, atol=1e-9)

    def test_local_perturbation(self):
        # shifting delta between two shares at fixed sum_i o_i * beta_i never helps
        rng = np.random.default_rng(29)
        delta = 1e-4
        for _ in range(100):
            n = int(rng.integers(2, 6))
            inp = ApportionInput(
                rng.uniform(0.1, 10.0, n),
                rng.uniform(0.1, 10.0, n),
                rng.integers(1, 4, n),
                float(rng.uniform(0.01, 0.2)),
            )
            best = beta_split_tree(inp)
            for i in range(n):
                for j in range(n):
                    if i == j:
                        continue
                    moved = best.betas.copy()
                    moved[i] += delta / inp.o[i]
                    moved[j] -= delta / inp.o[j]
                    if moved[j] <= 0:
                        continue
                    self.assertAlmostEqual(float(np.dot(inp.o, moved)), inp.beta, places=12)
                    cost = predicted_epsilon(inp, moved)
                    self.assertGreaterEqual(cost, best.predicted_epsilon * (1 - 1e-12))

    def test_beats_equal_split(self):
        inp = ApportionInput([5.0, 50.0, 20.0], [1.0, 1.0, 3.0], [1, 2, 1], 0.05)
        best = beta_split_tree(inp)
        equal = beta_split_equal(inp.o, inp.beta)
        self.assertLessEqual(best.predicted_epsilon, predicted_epsilon(inp, equal))

    def test_invalid_input(self):
        self.assertRaises(ValueError, ApportionInput, [1, 2], [1], [1, 1], 0.05)
        self.assertRaises(ValueError, ApportionInput, [1], [1], [0], 0.05)
        self.assertRaises(ValueError, ApportionInput, [-1], [1], [1], 0.05)
        self.assertRaises(ValueError, ApportionInput, [1], [1], [1], 0.5)
        self.assertRaises(ValueError, ApportionInput, [], [], [], 0.05)


def test_shared_leaf_costs_more():
    # (Q1 OR Q2) AND (Q1 OR Q3) references Q1 twice; Q1 OR (Q2 AND Q3) once
    shared = ApportionInput([30.0] * 3, [1.0] * 3, [2, 1, 1], 0.05)
    single = ApportionInput([30.0] * 3, [1.0] * 3, [1, 1, 1], 0.05)
    assert beta_split_tree(shared).predicted_epsilon > beta_split_tree(single).predicted_epsilon


def test_oracle_size_limit():
    inp = ApportionInput(np.ones(7), np.ones(7), np.ones(7), 0.05)
    with pytest.raises(ValueError):
        numeric_lagrange_oracle(inp)


def test_beta_split_equal():
    np.testing.assert_allclose(beta_split_equal([2, 1, 1], 0.04), [0.01, 0.01, 0.01])


def test_alpha_split():
    np.testing.assert_allclose(alpha_split(0.1, 3, [1, 2, 1]), [0.1 / 3, 0.1 / 6, 0.1 / 3])
    with pytest.raises(ValueError):
        alpha_split(0.1, 2, [1, 1, 1])
    with pytest.raises(ValueError):
        alpha_split(1.0, 1, [1])


suite = unittest.TestSuite()
test_classes = [BetaSplitTwo_Tester, BetaSplitTree_Tester]
for i in test_classes:
    a = unittest.TestLoader().loadTestsFromTestCase(i)
    suite.addTest(a)

if __name__ == "__main__":
    runner = unittest.TextTestRunner()
    runner.run(suite)
