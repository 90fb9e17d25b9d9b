import unittest
from .. import util
import numpy as np


class Orient_Tester(unittest.TestCase):
    def test_orient(self):
        x = np.array([1.0, -2.0, 0.0])
        np.testing.assert_array_equal(util.orient(x, "GREATER"), x)
        np.testing.assert_array_equal(util.orient(x, "LESS"), -x)
        self.assertRaises(ValueError, util.orient, x, "ABOVE")


class ThresholdVector_Tester(unittest.TestCase):
    def test_scalar(self):
        np.testing.assert_array_equal(util.threshold_vector(2.5, 3), [2.5, 2.5, 2.5])

    def test_sequence(self):
        c = util.threshold_vector([1, 2, 3], 3)
        np.testing.assert_array_equal(c, [1.0, 2.0, 3.0])
        self.assertRaises(ValueError, util.threshold_vector, [1, 2], 3)

    def test_mapping(self):
        c = util.threshold_vector({2: 9.0, 0: 1.0, 1: 4.0}, 3)
        np.testing.assert_array_equal(c, [1.0, 4.0, 9.0])
        with self.assertRaises(ValueError):
            util.threshold_vector({0: 1.0}, 2)


class BinomialSlack_Tester(unittest.TestCase):
    def test_binomial_slack(self):
        self.assertAlmostEqual(util.binomial_slack(0.05, 10000), 0.05 + 3 * np.sqrt(0.0475 / 10000))
        self.assertGreater(util.binomial_slack(0.1, 100), util.binomial_slack(0.1, 10000))


class CheckOpenInterval_Tester(unittest.TestCase):
    def test_check_open_interval(self):
        self.assertEqual(util.check_open_interval("beta", 0.05, 0.0, 0.5), 0.05)
        for bad in (0.0, 0.5, -1.0, float("nan")):
            self.assertRaises(ValueError, util.check_open_interval, "beta", bad, 0.0, 0.5)


suite = unittest.TestSuite()
test_classes = [
    Orient_Tester,
    ThresholdVector_Tester,
    BinomialSlack_Tester,
    CheckOpenInterval_Tester,
]
for i in test_classes:
    a = unittest.TestLoader().loadTestsFromTestCase(i)
    suite.addTest(a)

if __name__ == "__main__":
    runner = unittest.TextTestRunner()
    runner.run(suite)
