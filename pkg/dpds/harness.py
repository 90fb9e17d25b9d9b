"""
Experiment orchestration: query configuration, Monte Carlo trials of the
probing algorithms, error-rate metrics and CSV results.
"""

__author__ = "dpds developers"

__all__ = [
    "RunConfig",
    "TrialMetrics",
    "QueryConfig",
    "Experiment",
    "load_query_config",
    "default_query",
    "prepare",
    "run_experiment",
    "run_sweep",
    "measure_rates",
    "threshold_zscore",
]

import json
import math
import warnings
from collections.abc import Mapping
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

from .data import (
    GroupAggregates,
    load_csv,
    enumerate_predicates,
    exact_aggregate,
    true_answer,
)
from .entropy import EntConfig, ent_probe, flatten_query, min_entropy
from .mechanisms import RandomSource
from .probe import ProbeConfig, probe, naive
from .query import (
    AggregateSpec,
    AtomicQuery,
    Condition,
    parse_query,
    minimize_tree,
    format_query,
    leaf_ids,
)
from .synth import synth_dataset
from .util import check_open_interval

ALGORITHMS = ("naive", "probe", "probe-naive", "probe-ent")
SWEEP_PARAMETERS = (
    "beta",
    "alpha",
    "epsilon_max",
    "u_fraction",
    "phase1_u_fraction",
    "phase_split",
    "m",
    "m_f",
)
CSV_FLOAT_FORMAT = "%.12g"


@dataclass(frozen=True)
class RunConfig:
    """
    Parameters of an experiment.

    Attributes
    ----------
    algorithm         : str
                        "naive", "probe", "probe-naive" or "probe-ent".
    beta              : float
                        false-negative bound in (0, 0.5).
    alpha             : float
                        false-positive bound in (0, 1).
    epsilon_max       : float
                        privacy budget per trial.
    u_fraction        : float
                        shift fraction of the naive baseline.
    phase1_u_fraction : float
                        first-pass shift fraction of probe.
    phase_split       : float
                        first-pass share of beta.
    m, m_f            : int
                        steps and candidate levels of probe-ent.
    u0_fraction       : float
                        starting shift fraction of probe-ent.
    trials            : int
    seed              : int
                        trial t draws from stream t of this seed.
    query             : str or None
                        path of a JSON query configuration.
    data              : str or None
                        path of a CSV file.
    out               : str or None
                        path of the results CSV.
    z                 : float or None
                        replace every threshold by mean + z * stddev of its
                        exact aggregates (not private).
    synth             : SynthSpec or None
                        generate the data instead of loading it.
    skip_conjunctions : bool
    minimize          : str
                        two-level form handed to minimize_tree.
    n_jobs            : int
                        worker threads running trials.
    summary           : bool
                        print a summary table.
    """

    algorithm: str = "probe"
    beta: float = 0.05
    alpha: float = 0.1
    epsilon_max: float = 5.0
    u_fraction: float = 0.12
    phase1_u_fraction: float = 0.3
    phase_split: float = 0.5
    m: int = 4
    m_f: int = 3
    u0_fraction: float = 0.3
    trials: int = 100
    seed: int = 0
    query: object = None
    data: object = None
    out: object = None
    z: object = None
    synth: object = None
    skip_conjunctions: bool = True
    minimize: str = "sop"
    n_jobs: int = 1
    summary: bool = False

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(
                "algorithm must be one of %s, got %r." % (ALGORITHMS, self.algorithm)
            )
        check_open_interval("beta", self.beta, 0.0, 0.5)
        check_open_interval("alpha", self.alpha, 0.0, 1.0)
        if self.epsilon_max < 0:
            raise ValueError("epsilon_max must be non-negative, got %r." % self.epsilon_max)
        if self.trials < 1:
            raise ValueError("trials must be positive, got %r." % self.trials)
        if self.n_jobs < 1:
            raise ValueError("n_jobs must be positive, got %r." % self.n_jobs)
        self.probe_config()
        self.ent_config()

    def probe_config(self):
        return ProbeConfig(
            phase1_u_fraction=self.phase1_u_fraction,
            phase_split=self.phase_split,
            naive_u_fraction=self.u_fraction,
            equal_split=self.algorithm == "probe-naive",
            skip_conjunctions=self.skip_conjunctions,
        )

    def ent_config(self):
        return EntConfig(m=int(self.m), m_f=int(self.m_f), u0_fraction=self.u0_fraction)


@dataclass(frozen=True)
class TrialMetrics:
    """
    Outcome of one trial.

    Attributes
    ----------
    trial       : int
    epsilon     : float
                  privacy spent, including runs before a denial.
    fnr         : float
    fpr         : float
                  rates of the released answer; a denied trial releases
                  nothing and is scored as an empty answer.
    denied      : bool
    min_entropy : float
                  min-entropy of the trial's per-predicate ledger.
    reason      : str
                  denial reason, empty when answered.
    """

    trial: int
    epsilon: float
    fnr: float
    fpr: float
    denied: bool
    min_entropy: float
    reason: str = ""


def measure_rates(reported, truth, domain):
    """
    False-negative and false-positive rates of a reported answer.

    Parameters
    ----------
    reported : iterable
               reported predicate indices.
    truth    : iterable
               true predicate indices.
    domain   : int or iterable
               number of predicates, or the predicate indices.

    Returns
    -------
    rates    : tuple
               (fnr, fpr); fnr is 0 when nothing is true and fpr is 0 when
               everything is.

    Examples
    --------
    >>> from dpds.harness import measure_rates
    >>> measure_rates({0}, {0, 1}, 3)
    (0.5, 0.0)
    >>> measure_rates({0, 1, 2}, set(), 3)
    (0.0, 1.0)
    """
    reported = set(reported)
    truth = set(truth)
    k = domain if isinstance(domain, int) else len(set(domain))
    fnr = len(truth - reported) / len(truth) if truth else 0.0
    negatives = k - len(truth)
    fpr = len(reported - truth) / negatives if negatives else 0.0
    return fnr, fpr


def threshold_zscore(aggregates, z):
    """
    Outlier threshold ``mean + z * stddev`` of exact aggregates.

    The population standard deviation is used; constant aggregates give
    their mean. The result is derived from the data and is not private.

    Examples
    --------
    >>> import warnings
    >>> import numpy as np
    >>> from dpds.harness import threshold_zscore
    >>> with warnings.catch_warnings():
    ...     warnings.simplefilter("ignore")
    ...     threshold_zscore(np.array([0.0, 10.0]), 1.0)
    10.0
    """
    values = aggregates.values if isinstance(aggregates, GroupAggregates) else aggregates
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        raise ValueError("z-score thresholds need at least two predicates.")
    warnings.warn("z-score thresholds are computed from the data and are not private.", UserWarning)
    return float(values.mean() + z * values.std())


@dataclass(frozen=True)
class QueryConfig:
    """
    Declarative query: atomic queries, a boolean expression over their ids,
    the predicate domain and optionally the data schema.

    Attributes
    ----------
    atomics    : tuple
                 one mapping per atomic query with keys id, aggregate
                 ({kind, column}), sensitivity, value_range, filter,
                 thresholds and direction.
    expression : str
    predicates : dict
                 {"columns": [...], "domain": list | "from-data" |
                 {"product": {...}}}.
    schema     : tuple
                 (name, type) pairs used to load CSV data.
    """

    atomics: tuple
    expression: str
    predicates: dict
    schema: tuple = ()

    @classmethod
    def from_dict(cls, doc):
        unknown = set(doc) - {"atomics", "expression", "predicates", "schema"}
        if unknown:
            raise ValueError("unknown query config keys: %s." % ", ".join(sorted(unknown)))
        for key in ("atomics", "expression", "predicates"):
            if key not in doc:
                raise ValueError("query config is missing %r." % key)
        predicates = dict(doc["predicates"])
        if "columns" not in predicates or "domain" not in predicates:
            raise ValueError("predicates need 'columns' and 'domain'.")
        ids = [entry.get("id") for entry in doc["atomics"]]
        if None in ids or len(set(ids)) != len(ids):
            raise ValueError("every atomic query needs a unique id.")
        schema = tuple(tuple(pair) for pair in doc.get("schema", ()))
        return cls(tuple(doc["atomics"]), doc["expression"], predicates, schema)


def load_query_config(path):
    """Read a JSON query configuration."""
    with open(path, "r", encoding="utf-8") as f:
        return QueryConfig.from_dict(json.load(f))


def default_query(spec):
    """
    COUNT(*) per (group, date) above the synthetic threshold, over the
    generated predicate grid.
    """
    return QueryConfig(
        atomics=(
            {
                "id": "Q1",
                "aggregate": {"kind": "COUNT_STAR"},
                "value_range": [0, spec.high],
                "thresholds": spec.threshold,
            },
        ),
        expression="Q1",
        predicates={
            "columns": [spec.group_column, "date"],
            "domain": spec.group_values(),
        },
        schema=spec.schema,
    )


def _conditions(entries):
    conditions = []
    for entry in entries:
        if isinstance(entry, Mapping):
            conditions.append(Condition(entry["column"], entry["op"], entry["value"]))
        else:
            conditions.append(Condition(*entry))
    return tuple(conditions)


def _thresholds(raw, k):
    if isinstance(raw, Mapping):
        return {int(i): float(v) for i, v in raw.items()}
    if isinstance(raw, (list, tuple)):
        if len(raw) != k:
            raise ValueError("threshold list has %d entries for %d predicates." % (len(raw), k))
        return tuple(float(v) for v in raw)
    return float(raw)


def _atomic(entry, dataset, domain, z=None):
    aggregate = dict(entry.get("aggregate", {}))
    spec = AggregateSpec(
        aggregate.get("kind", "COUNT_STAR"),
        aggregate.get("column"),
        float(entry.get("sensitivity", aggregate.get("sensitivity", 1.0))),
    )
    common = dict(
        id=entry["id"],
        aggregate=spec,
        filter=_conditions(entry.get("filter", ())),
        direction=entry.get("direction", "GREATER"),
    )
    value_range = entry.get("value_range")
    if value_range is None:
        raise ValueError("atomic query %r needs a value_range." % entry["id"])
    if value_range == "from-data":
        probe_atomic = AtomicQuery(value_range=(-np.inf, np.inf), **common)
        values = exact_aggregate(dataset, probe_atomic, domain).values
        values = values[np.isfinite(values)]
        low = float(values.min()) if values.size else 0.0
        high = float(values.max()) if values.size else 1.0
        if high <= low:
            high = low + 1.0
        value_range = (low, high)
        warnings.warn(
            "value range of %s is computed from the data and is not private." % entry["id"],
            UserWarning,
        )
    low, high = float(value_range[0]), float(value_range[1])
    raw = entry.get("thresholds", low)
    if z is not None or (isinstance(raw, Mapping) and "zscore" in raw):
        factor = z if z is not None else float(raw["zscore"])
        provisional = AtomicQuery(thresholds=low, value_range=(low, high), **common)
        threshold = threshold_zscore(exact_aggregate(dataset, provisional, domain), factor)
        raw = float(np.clip(threshold, low, high))
    return AtomicQuery(
        thresholds=_thresholds(raw, domain.k), value_range=(low, high), **common
    )


@dataclass
class Experiment:
    """
    A query bound to its data, shared by every trial.

    Attributes
    ----------
    tree      : Leaf, And or Or
                parsed expression.
    compiled  : CompiledQuery
                minimized and bound expression.
    domain    : PredicateDomain
    bindings  : dict
                atomic id -> GroupAggregates.
    truth     : frozenset
                exact answer.
    sequence  : list or None
                flat positions for probe-ent.
    operators : list or None
    """

    tree: object
    compiled: object
    domain: object
    bindings: dict
    truth: frozenset
    sequence: object = None
    operators: object = None
    notes: list = field(default_factory=list)


def prepare(config, dataset=None, query=None):
    """
    Load (or generate) the data and bind the query for ``config``.

    Parameters
    ----------
    config  : RunConfig
    dataset : Dataset, optional
              overrides ``config.data`` and ``config.synth``.
    query   : QueryConfig, optional
              overrides ``config.query``.

    Returns
    -------
    experiment : Experiment
    """
    if query is None:
        if config.query is not None:
            query = load_query_config(config.query)
        elif config.synth is not None:
            query = default_query(config.synth)
        else:
            raise ValueError("a query configuration is required.")
    if dataset is None:
        if config.data is not None:
            if not query.schema:
                raise ValueError("loading CSV data needs a 'schema' in the query config.")
            dataset = load_csv(config.data, query.schema)
        elif config.synth is not None:
            dataset = synth_dataset(config.synth, config.seed)
        else:
            raise ValueError("either data or synthetic settings are required.")
    columns = query.predicates["columns"]
    domain = enumerate_predicates(columns, query.predicates["domain"], dataset)
    atomics = {e["id"]: _atomic(e, dataset, domain, config.z) for e in query.atomics}
    tree = parse_query(query.expression, atomics)
    compiled = minimize_tree(tree, atomics, form=config.minimize)
    bindings = {i: exact_aggregate(dataset, atomics[i], domain) for i in leaf_ids(tree)}
    truth = true_answer(dataset, compiled, domain, bindings)
    experiment = Experiment(tree, compiled, domain, bindings, truth)
    experiment.notes.append("minimized: %s" % format_query(compiled.tree))
    if config.algorithm == "probe-ent":
        ids, operators = flatten_query(tree)
        experiment.sequence = [atomics[i] for i in ids]
        experiment.operators = operators
    return experiment


def _run_trial(experiment, config, trial):
    rng = RandomSource(config.seed, trial)
    if config.algorithm == "naive":
        result = naive(
            experiment.compiled,
            experiment.bindings,
            config.beta,
            config.epsilon_max,
            config.u_fraction,
            rng,
            config.probe_config(),
        )
    elif config.algorithm == "probe-ent":
        result = ent_probe(
            experiment.sequence,
            experiment.operators,
            experiment.bindings,
            config.beta,
            config.alpha,
            config.epsilon_max,
            config.ent_config(),
            rng,
        )
    else:
        result = probe(
            experiment.compiled,
            experiment.bindings,
            config.beta,
            config.alpha,
            config.epsilon_max,
            config.probe_config(),
            rng,
        )
    released = result.answer if result.answered else frozenset()
    fnr, fpr = measure_rates(released, experiment.truth, experiment.domain.k)
    return TrialMetrics(
        trial=trial,
        epsilon=result.epsilon,
        fnr=fnr,
        fpr=fpr,
        denied=result.denied,
        min_entropy=min_entropy(result.ledger),
        reason=result.reason or "",
    ), result


def _trials(experiment, config):
    if config.n_jobs == 1:
        return [_run_trial(experiment, config, t) for t in range(config.trials)]
    with ThreadPoolExecutor(max_workers=config.n_jobs) as pool:
        return list(pool.map(lambda t: _run_trial(experiment, config, t), range(config.trials)))


def _summarize(frame):
    answered = frame[~frame["denied"]]
    return {
        "epsilon": frame["epsilon"].mean(),
        "fnr": answered["fnr"].mean() if len(answered) else math.nan,
        "fpr": answered["fpr"].mean() if len(answered) else math.nan,
        "denial_rate": frame["denied"].mean(),
        "min_entropy": frame["min_entropy"].mean(),
        "fnr_all": frame["fnr"].mean(),
        "fpr_all": frame["fpr"].mean(),
    }


def _print_summary(config, stats, experiment, predicted):
    title = "Decision-support query: %s" % config.algorithm
    width = 52
    lead = "-" * width
    contents = [lead, title.center(width), lead]
    contents.append("Predicates: %d" % experiment.domain.k)
    contents.append("Query: %s" % format_query(experiment.compiled.tree))
    contents.append("Trials: %d" % config.trials)
    contents.append(lead)
    for name in ("epsilon", "fnr", "fpr", "denial_rate", "min_entropy"):
        contents.append("%-24s %20.4f" % (name, stats[name]))
    if not math.isnan(predicted):
        contents.append("%-24s %20.4f" % ("predicted_epsilon", predicted))
    contents.append(lead)
    print("\n".join(contents))


def run_experiment(config, dataset=None, query=None, experiment=None):
    """
    Run ``config.trials`` independent trials and collect their metrics.

    Parameters
    ----------
    config     : RunConfig
    dataset    : Dataset, optional
    query      : QueryConfig, optional
    experiment : Experiment, optional
                 a prepared experiment, reused as is.

    Returns
    -------
    results    : DataFrame
                 one row per trial followed by a summary row (``summary``
                 set to 1) holding means; its fnr and fpr average answered
                 trials only, ``fnr_all`` and ``fpr_all`` every trial, and
                 ``denied`` holds the denial rate. Written to
                 ``config.out`` when set.
    """
    if experiment is None:
        experiment = prepare(config, dataset, query)
    outcomes = _trials(experiment, config)
    frame = pd.DataFrame([vars(metrics) for metrics, _ in outcomes])
    frame["denied"] = frame["denied"].astype(bool)
    stats = _summarize(frame)
    predicted = outcomes[0][1].predicted_epsilon
    summary = {
        "trial": pd.NA,
        "epsilon": stats["epsilon"],
        "fnr": stats["fnr"],
        "fpr": stats["fpr"],
        "denied": stats["denial_rate"],
        "min_entropy": stats["min_entropy"],
        "reason": "",
        "summary": 1,
        "fnr_all": stats["fnr_all"],
        "fpr_all": stats["fpr_all"],
        "predicted_epsilon": predicted,
    }
    frame["summary"] = 0
    frame["denied"] = frame["denied"].astype(float)
    results = pd.concat([frame, pd.DataFrame([summary])], ignore_index=True)
    results["trial"] = results["trial"].astype("Int64")
    if config.summary:
        _print_summary(config, stats, experiment, predicted)
    if config.out:
        results.to_csv(config.out, index=False, float_format=CSV_FLOAT_FORMAT)
    return results


def run_sweep(config, parameter, values, dataset=None, query=None):
    """
    Repeat an experiment over a grid of one parameter.

    Parameters
    ----------
    config    : RunConfig
    parameter : str
                one of beta, alpha, epsilon_max, u_fraction,
                phase1_u_fraction, phase_split, m, m_f.
    values    : iterable

    Returns
    -------
    sweep     : DataFrame
                one summary row per value. Written to ``config.out`` when
                set.
    """
    if parameter not in SWEEP_PARAMETERS:
        raise ValueError(
            "parameter must be one of %s, got %r." % (SWEEP_PARAMETERS, parameter)
        )
    experiment = prepare(config, dataset, query)
    rows = []
    for value in values:
        point = replace(config, out=None, summary=False, **{parameter: value})
        results = run_experiment(point, experiment=experiment)
        summary = results.iloc[-1]
        rows.append(
            {
                "algorithm": config.algorithm,
                "parameter": parameter,
                "value": value,
                "epsilon": summary["epsilon"],
                "fnr": summary["fnr"],
                "fpr": summary["fpr"],
                "denial_rate": summary["denied"],
                "min_entropy": summary["min_entropy"],
            }
        )
    sweep = pd.DataFrame(rows)
    if config.out:
        sweep.to_csv(config.out, index=False, float_format=CSV_FLOAT_FORMAT)
    return sweep
