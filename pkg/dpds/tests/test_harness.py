import json
import unittest
import pytest
import numpy as np
import pandas as pd

from ..data import Dataset
from ..harness import (
    RunConfig,
    QueryConfig,
    load_query_config,
    default_query,
    prepare,
    run_experiment,
    run_sweep,
    measure_rates,
    threshold_zscore,
)
from ..synth import SynthSpec

# far data: every cell count at most 10 or at least 90 around a threshold
# of 50, so shifts of 10 leave no predicate uncertain
FAR = SynthSpec("far", groups=40, days=10, u=20.0)
FAST = dict(phase1_u_fraction=0.1, u0_fraction=0.1, u_fraction=0.1, synth=FAR)

SCHEMA = [["room", "string"], ["date", "date"], ["kind", "string"], ["age", "integer"]]
ROWS = [
    ("R1", "2024-01-01", "visitor", 30),
    ("R1", "2024-01-01", "staff", 45),
    ("R1", "2024-01-02", "visitor", 30),
    ("R2", "2024-01-01", "visitor", 70),
    ("R2", "2024-01-01", "visitor", 20),
    ("R2", "2024-01-01", "staff", 20),
]
QUERY = {
    "atomics": [
        {
            "id": "Q1",
            "aggregate": {"kind": "COUNT_STAR"},
            "value_range": [0, 10],
            "thresholds": 1,
        },
        {
            "id": "Q2",
            "aggregate": {"kind": "AVG", "column": "age"},
            "sensitivity": 80,
            "value_range": [18, 80],
            "filter": [{"column": "kind", "op": "=", "value": "visitor"}],
            "thresholds": 40,
            "direction": "LESS",
        },
    ],
    "expression": "Q1 AND Q2",
    "predicates": {
        "columns": ["room", "date"],
        "domain": {"product": {"room": ["R1", "R2"], "date": ["2024-01-01", "2024-01-02"]}},
    },
    "schema": SCHEMA,
}


class RunExperiment_Tester(unittest.TestCase):
    def test_results_frame(self):
        results = run_experiment(RunConfig(trials=10, **FAST))
        self.assertEqual(len(results), 11)
        for column in ("trial", "epsilon", "fnr", "fpr", "denied", "min_entropy", "summary"):
            self.assertIn(column, results.columns)
        self.assertEqual(results["summary"].tolist(), [0] * 10 + [1])
        self.assertEqual(results["trial"].iloc[:10].tolist(), list(range(10)))
        self.assertTrue(pd.isna(results["trial"].iloc[10]))
        trials = results.iloc[:10]
        summary = results.iloc[10]
        self.assertAlmostEqual(summary["epsilon"], trials["epsilon"].mean())
        self.assertAlmostEqual(summary["denied"], trials["denied"].mean())
        self.assertTrue(np.all(trials["min_entropy"] >= 0))
        self.assertEqual(summary["fnr"], 0.0)

    def test_algorithms(self):
        for algorithm in ("naive", "probe", "probe-naive", "probe-ent"):
            results = run_experiment(RunConfig(algorithm=algorithm, trials=5, **FAST))
            trials = results.iloc[:5]
            self.assertFalse(trials["denied"].any(), algorithm)
            self.assertTrue(np.all(trials["epsilon"] > 0), algorithm)
            self.assertTrue(np.all(trials["epsilon"] <= 5.0), algorithm)

    def test_threads_match_serial(self):
        serial = run_experiment(RunConfig(trials=8, **FAST))
        threaded = run_experiment(RunConfig(trials=8, n_jobs=3, **FAST))
        pd.testing.assert_frame_equal(serial, threaded)

    def test_denied_trials(self):
        results = run_experiment(RunConfig(trials=4, epsilon_max=0.01, **FAST))
        trials = results.iloc[:4]
        self.assertTrue(trials["denied"].all())
        self.assertEqual(set(trials["reason"]), {"BudgetExceeded"})
        self.assertEqual(results.iloc[4]["denied"], 1.0)
        self.assertTrue(np.isnan(results.iloc[4]["fnr"]))
        self.assertEqual(results.iloc[4]["fnr_all"], 1.0)


def test_results_csv(tmp_path, capsys):
    out = tmp_path / "results.csv"
    run_experiment(RunConfig(trials=3, out=str(out), summary=True, **FAST))
    assert "predicted_epsilon" in capsys.readouterr().out
    frame = pd.read_csv(out)
    assert len(frame) == 4
    assert frame["summary"].tolist() == [0, 0, 0, 1]
    assert list(frame.columns[:6]) == ["trial", "epsilon", "fnr", "fpr", "denied", "min_entropy"]


class Sweep_Tester(unittest.TestCase):
    def test_beta_sweep(self):
        betas = [0.025, 0.05, 0.1, 0.15]
        for algorithm in ("naive", "probe", "probe-naive", "probe-ent"):
            sweep = run_sweep(RunConfig(algorithm=algorithm, trials=20, **FAST), "beta", betas)
            self.assertEqual(sweep["value"].tolist(), betas)
            self.assertTrue(np.all(np.diff(sweep["epsilon"]) <= 1e-9), algorithm)

    def test_alpha_sweep(self):
        alphas = [0.05, 0.1, 0.2]
        naive = run_sweep(RunConfig(algorithm="naive", trials=10, **FAST), "alpha", alphas)
        np.testing.assert_allclose(naive["epsilon"], naive["epsilon"].iloc[0])
        for algorithm in ("probe", "probe-ent"):
            sweep = run_sweep(RunConfig(algorithm=algorithm, trials=20, **FAST), "alpha", alphas)
            self.assertTrue(np.all(np.diff(sweep["epsilon"]) <= 1e-9), algorithm)

    def test_invalid_parameter(self):
        self.assertRaises(ValueError, run_sweep, RunConfig(**FAST), "trials", [1, 2])


def test_sweep_csv(tmp_path):
    out = tmp_path / "sweep.csv"
    run_sweep(RunConfig(algorithm="naive", trials=2, out=str(out), **FAST), "m", [2, 3])
    frame = pd.read_csv(out)
    assert frame["parameter"].tolist() == ["m", "m"]


class QueryConfig_Tester(unittest.TestCase):
    def test_from_dict(self):
        query = QueryConfig.from_dict(QUERY)
        self.assertEqual(query.expression, "Q1 AND Q2")
        self.assertEqual(query.schema[0], ("room", "string"))
        self.assertEqual(len(query.atomics), 2)

    def test_validation(self):
        self.assertRaises(ValueError, QueryConfig.from_dict, dict(QUERY, extra=1))
        doc = {k: v for k, v in QUERY.items() if k != "expression"}
        self.assertRaises(ValueError, QueryConfig.from_dict, doc)
        doc = dict(QUERY, atomics=[QUERY["atomics"][0], QUERY["atomics"][0]])
        self.assertRaises(ValueError, QueryConfig.from_dict, doc)
        doc = dict(QUERY, predicates={"columns": ["room"]})
        self.assertRaises(ValueError, QueryConfig.from_dict, doc)

    def test_default_query(self):
        query = default_query(FAR)
        self.assertEqual(query.expression, "Q1")
        self.assertEqual(query.predicates["columns"], ["room", "date"])
        self.assertEqual(query.atomics[0]["thresholds"], FAR.threshold)


class Prepare_Tester(unittest.TestCase):
    def setUp(self):
        self.ds = Dataset.from_records(ROWS, [tuple(pair) for pair in SCHEMA])
        self.query = QueryConfig.from_dict(QUERY)

    def test_prepare(self):
        experiment = prepare(RunConfig(), self.ds, self.query)
        self.assertEqual(experiment.domain.k, 4)
        np.testing.assert_array_equal(experiment.bindings["Q1"].values, [2, 1, 3, 0])
        # visitor ages: R1/01 -> 30, R1/02 -> 30, R2/01 -> 45, R2/02 -> empty
        np.testing.assert_array_almost_equal(experiment.bindings["Q2"].values, [30, 30, 45, 18])
        self.assertEqual(experiment.truth, frozenset({0}))
        self.assertIsNone(experiment.sequence)

    def test_prepare_ent(self):
        experiment = prepare(RunConfig(algorithm="probe-ent"), self.ds, self.query)
        self.assertEqual([a.id for a in experiment.sequence], ["Q1", "Q2"])
        self.assertEqual(experiment.operators, ["AND"])
        doc = dict(QUERY, expression="Q1 OR Q1 AND Q2 OR Q2 AND Q1")
        with pytest.raises(ValueError):
            prepare(RunConfig(algorithm="probe-ent"), self.ds, QueryConfig.from_dict(doc))

    def test_zscore_thresholds(self):
        with pytest.warns(UserWarning, match="not private"):
            experiment = prepare(RunConfig(z=1.0), self.ds, self.query)
        threshold = experiment.compiled.atomic("Q1").thresholds
        counts = np.array([2.0, 1.0, 3.0, 0.0])
        self.assertAlmostEqual(threshold, counts.mean() + counts.std())

    def test_value_range_from_data(self):
        atomics = [dict(QUERY["atomics"][0], value_range="from-data")]
        doc = dict(QUERY, atomics=atomics, expression="Q1")
        with pytest.warns(UserWarning, match="value range"):
            experiment = prepare(RunConfig(), self.ds, QueryConfig.from_dict(doc))
        self.assertEqual(experiment.compiled.atomic("Q1").value_range, (0.0, 3.0))

    def test_missing_inputs(self):
        self.assertRaises(ValueError, prepare, RunConfig())
        self.assertRaises(ValueError, prepare, RunConfig(), None, self.query)


def test_load_query_config(tmp_path):
    path = tmp_path / "query.json"
    path.write_text(json.dumps(QUERY), encoding="utf-8")
    query = load_query_config(path)
    assert query.predicates["columns"] == ["room", "date"]


def test_csv_data(tmp_path):
    data = tmp_path / "visits.csv"
    Dataset.from_records(ROWS, [tuple(pair) for pair in SCHEMA]).to_csv(data)
    query = tmp_path / "query.json"
    query.write_text(json.dumps(QUERY), encoding="utf-8")
    results = run_experiment(RunConfig(query=str(query), data=str(data), trials=2))
    assert len(results) == 3


def test_run_config_validation():
    with pytest.raises(ValueError):
        RunConfig(algorithm="svt")
    with pytest.raises(ValueError):
        RunConfig(beta=0.5)
    with pytest.raises(ValueError):
        RunConfig(trials=0)
    with pytest.raises(ValueError):
        RunConfig(m=0)
    with pytest.raises(ValueError):
        RunConfig(phase_split=0.0)


def test_measure_rates():
    assert measure_rates({0, 2}, {0, 1}, 4) == (0.5, 0.5)
    assert measure_rates(set(), set(), [3, 4]) == (0.0, 0.0)
    assert measure_rates({0, 1}, {0, 1}, 2) == (0.0, 0.0)


def test_threshold_zscore():
    with pytest.warns(UserWarning):
        assert threshold_zscore(np.array([1.0, 1.0, 1.0]), 2.0) == 1.0
    with pytest.raises(ValueError):
        threshold_zscore(np.array([1.0]), 1.0)


suite = unittest.TestSuite()
test_classes = [RunExperiment_Tester, Sweep_Tester, QueryConfig_Tester, Prepare_Tester]
for i in test_classes:
    a = unittest.TestLoader().loadTestsFromTestCase(i)
    suite.addTest(a)

if __name__ == "__main__":
    runner = unittest.TextTestRunner()
    runner.run(suite)
