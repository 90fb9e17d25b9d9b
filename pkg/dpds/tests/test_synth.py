import unittest
import pytest
import numpy as np

from ..data import enumerate_predicates, exact_aggregate
from ..query import AggregateSpec, AtomicQuery
from ..synth import SynthSpec, synth_dataset


def cell_counts(spec, dataset):
    domain = enumerate_predicates(
        [spec.group_column, "date"], spec.group_values(), dataset
    )
    atomic = AtomicQuery(
        "Q", AggregateSpec("COUNT_STAR"), thresholds=spec.threshold, value_range=(0, spec.high)
    )
    return exact_aggregate(dataset, atomic, domain).values


class Synth_Tester(unittest.TestCase):
    def test_far(self):
        spec = SynthSpec("far", groups=8, days=5)
        counts = cell_counts(spec, synth_dataset(spec, seed=3))
        self.assertEqual(counts.size, 40)
        low = spec.threshold - 2 * spec.u
        high = spec.threshold + 2 * spec.u
        self.assertTrue(np.all((counts <= low) | (counts >= high)))

    def test_straddle(self):
        spec = SynthSpec("straddle", groups=10, days=4, straddle_fraction=0.25)
        counts = cell_counts(spec, synth_dataset(spec, seed=4))
        near = (counts >= spec.threshold - 2 * spec.u) & (counts <= spec.threshold)
        far = (counts <= spec.threshold - 2 * spec.u) | (counts >= spec.threshold + 2 * spec.u)
        # the lower band edge counts as both near and far
        self.assertGreaterEqual(near.sum(), 10)
        self.assertTrue(np.all(near | far))

    def test_grid(self):
        spec = SynthSpec("grid", groups=5, days=3, threshold=10.0, mean_count=15.0, high=20.0)
        counts = cell_counts(spec, synth_dataset(spec))
        self.assertTrue(np.all(counts <= 20))
        self.assertGreater(counts.mean(), 10)

    def test_sales(self):
        spec = SynthSpec("sales", groups=6, days=2, customers=30)
        ds = synth_dataset(spec, seed=5)
        self.assertEqual(ds.columns, ["city", "date", "region", "customer_id", "net_total"])
        self.assertTrue(ds.frame["customer_id"].between(0, 29).all())
        self.assertTrue((ds.frame["net_total"] > 0).all())
        regions = ds.frame.groupby("city")["region"].nunique()
        self.assertTrue((regions == 1).all())

    def test_reproducible(self):
        spec = SynthSpec("straddle")
        a = synth_dataset(spec, seed=11).frame
        b = synth_dataset(spec, seed=11).frame
        self.assertTrue(a.equals(b))
        c = synth_dataset(spec, seed=12).frame
        self.assertFalse(a.equals(c))

    def test_group_values(self):
        spec = SynthSpec(groups=2, days=3, start="2024-02-28")
        product = spec.group_values()["product"]
        self.assertEqual(product["room"], ["R00", "R01"])
        self.assertEqual(product["date"], ["2024-02-28", "2024-02-29", "2024-03-01"])


def test_synth_spec_validation():
    with pytest.raises(ValueError):
        SynthSpec("uniform")
    with pytest.raises(ValueError):
        SynthSpec("far", threshold=50.0, u=30.0)
    with pytest.raises(ValueError):
        SynthSpec(groups=0)
    with pytest.raises(ValueError):
        SynthSpec(visitor_share=1.5)
    with pytest.raises(ValueError, match="threshold"):
        SynthSpec("grid", high=20.0)
    with pytest.raises(ValueError, match="threshold"):
        SynthSpec("sales", threshold=-1.0)


suite = unittest.TestSuite()
test_classes = [Synth_Tester]
for i in test_classes:
    a = unittest.TestLoader().loadTestsFromTestCase(i)
    suite.addTest(a)

if __name__ == "__main__":
    runner = unittest.TextTestRunner()
    runner.run(suite)
