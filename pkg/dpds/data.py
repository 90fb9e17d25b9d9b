"""
Tabular data engine: CSV loading, predicate domains and exact per-predicate
aggregates.
"""

__author__ = "dpds developers"

__all__ = [
    "Dataset",
    "PredicateDomain",
    "GroupAggregates",
    "load_csv",
    "enumerate_predicates",
    "exact_aggregate",
    "bind_aggregates",
    "true_answer",
]

import operator
import warnings
from collections.abc import Mapping
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .query import evaluate_truth
from .util import orient, threshold_vector

COLUMN_TYPES = ("integer", "real", "string", "date")
DATE_FORMAT = "%Y-%m-%d"

_OPERATORS = {
    "=": operator.eq,
    "!=": operator.ne,
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
}


def _normalize_schema(schema):
    pairs = list(schema.items()) if isinstance(schema, Mapping) else [tuple(p) for p in schema]
    for name, kind in pairs:
        if kind not in COLUMN_TYPES:
            raise ValueError(
                "column %r has unknown type %r; expected one of %s." % (name, kind, COLUMN_TYPES)
            )
    names = [name for name, _ in pairs]
    if len(set(names)) != len(names):
        raise ValueError("schema declares duplicate column names.")
    return tuple(pairs)


def _convert_column(values, kind, name):
    if kind == "string":
        return values.astype(str)
    if kind == "date":
        converted = pd.to_datetime(values, format=DATE_FORMAT, errors="coerce")
        bad = converted.isna()
    else:
        converted = pd.to_numeric(values, errors="coerce")
        bad = converted.isna()
        if kind == "integer":
            bad = bad | (converted % 1 != 0)
    if bad.any():
        row = int(np.flatnonzero(bad.to_numpy())[0])
        raise ValueError(
            "row %d: column %r expects %s, got %r." % (row + 1, name, kind, values.iloc[row])
        )
    if kind == "integer":
        return converted.astype("int64")
    if kind == "real":
        return converted.astype(float)
    return converted


def _coerce_value(value, kind):
    if kind == "integer":
        return int(value)
    if kind == "real":
        return float(value)
    if kind == "date":
        return pd.Timestamp(value)
    return str(value)


class Dataset:
    """
    Immutable table with a declared schema.

    Parameters
    ----------
    frame  : DataFrame
             rows of the table; columns already converted to their types.
    schema : sequence or mapping
             (name, type) pairs with type in "integer", "real", "string",
             "date".

    Attributes
    ----------
    frame  : DataFrame
             the table.
    schema : tuple
             (name, type) pairs.
    n_rows : int
             number of rows.
    """

    def __init__(self, frame, schema):
        self.schema = _normalize_schema(schema)
        missing = [name for name, _ in self.schema if name not in frame.columns]
        if missing:
            raise ValueError("missing columns: %s." % ", ".join(missing))
        self.frame = frame[[name for name, _ in self.schema]].reset_index(drop=True)

    @classmethod
    def from_records(cls, records, schema):
        """Build a Dataset from raw values, converting every column to its type."""
        schema = _normalize_schema(schema)
        raw = pd.DataFrame.from_records(records, columns=[name for name, _ in schema])
        return cls(_convert(raw, schema), schema)

    @property
    def n_rows(self):
        return len(self.frame)

    @property
    def columns(self):
        return [name for name, _ in self.schema]

    def column_type(self, name):
        for column, kind in self.schema:
            if column == name:
                return kind
        raise ValueError("unknown column %r." % name)

    def to_csv(self, path):
        self.frame.to_csv(path, index=False, date_format=DATE_FORMAT)


def _convert(raw, schema):
    return pd.DataFrame(
        {name: _convert_column(raw[name], kind, name) for name, kind in schema}
    )


def load_csv(path, schema):
    """
    Load a UTF-8 CSV file with a header row.

    Parameters
    ----------
    path   : str
             location of the file.
    schema : sequence or mapping
             (name, type) pairs; every declared column must appear in the
             header. Extra columns are ignored.

    Returns
    -------
    dataset : Dataset

    Notes
    -----
    Conversion errors name the 1-based data row (the header is not
    counted). Dates use the YYYY-MM-DD format.
    """
    schema = _normalize_schema(schema)
    raw = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    missing = [name for name, _ in schema if name not in raw.columns]
    if missing:
        raise ValueError("missing columns: %s." % ", ".join(missing))
    return Dataset(_convert(raw, schema), schema)


@dataclass(frozen=True)
class PredicateDomain:
    """
    Ordered set of group-by predicates.

    Attributes
    ----------
    group_columns : tuple
                    grouping column names.
    predicates    : tuple
                    one value tuple per predicate, lexicographically sorted.
    from_data     : bool
                    True when the values were read from the data, which is
                    not private.
    """

    group_columns: tuple
    predicates: tuple
    from_data: bool = False

    @property
    def k(self):
        return len(self.predicates)

    def label(self, index):
        return ", ".join(str(v) for v in self.predicates[index])


def enumerate_predicates(group_columns, source, dataset=None):
    """
    Enumerate the predicate domain of a group-by.

    Parameters
    ----------
    group_columns : sequence
                    grouping column names.
    source        : sequence, mapping or str
                    an explicit list of value tuples; ``{"product": {column:
                    values}}`` for the cartesian product of public value
                    lists; or "from-data" for the distinct value tuples of
                    ``dataset``.
    dataset       : Dataset, optional
                    required for "from-data".

    Returns
    -------
    domain        : PredicateDomain

    Examples
    --------
    >>> from dpds.data import enumerate_predicates
    >>> d = enumerate_predicates(["room", "day"],
    ...                          {"product": {"room": ["B", "A"], "day": [1, 2]}})
    >>> d.predicates
    (('A', 1), ('A', 2), ('B', 1), ('B', 2))
    """
    group_columns = tuple(group_columns)
    if not group_columns:
        raise ValueError("at least one grouping column is required.")
    from_data = False
    if isinstance(source, str):
        if source != "from-data":
            raise ValueError("unknown predicate source %r." % source)
        if dataset is None:
            raise ValueError("a dataset is required to enumerate predicates from data.")
        warnings.warn(
            "predicate domain enumerated from the data is not differentially private.",
            UserWarning,
        )
        frame = dataset.frame[list(group_columns)].drop_duplicates()
        values = [tuple(_python(v) for v in row) for row in frame.itertuples(index=False)]
        from_data = True
    elif isinstance(source, Mapping):
        if set(source) != {"product"}:
            raise ValueError("a mapping predicate source must have the single key 'product'.")
        product = source["product"]
        missing = [c for c in group_columns if c not in product]
        if missing:
            raise ValueError("product source is missing columns: %s." % ", ".join(missing))
        index = pd.MultiIndex.from_product([list(product[c]) for c in group_columns])
        values = [tuple(v) for v in index]
    else:
        values = []
        for entry in source:
            entry = (entry,) if np.isscalar(entry) else tuple(entry)
            if len(entry) != len(group_columns):
                raise ValueError(
                    "predicate %r does not match the %d grouping columns."
                    % (entry, len(group_columns))
                )
            values.append(entry)
    if dataset is not None:
        kinds = [dataset.column_type(c) for c in group_columns]
        values = [tuple(_coerce_value(v, t) for v, t in zip(row, kinds)) for row in values]
    predicates = tuple(sorted(set(values)))
    if not predicates:
        raise ValueError("the predicate domain is empty.")
    return PredicateDomain(group_columns, predicates, from_data)


def _python(value):
    return value.item() if isinstance(value, np.generic) else value


@dataclass(frozen=True)
class GroupAggregates:
    """
    Exact aggregate of one atomic query for every predicate.

    Attributes
    ----------
    atomic_id : str
    values    : array
                (k, ), values clamped to the atomic query's value range and
                ordered like the predicate domain.
    """

    atomic_id: str
    values: np.ndarray

    @property
    def k(self):
        return len(self.values)


def _mask(frame, conditions, dataset):
    keep = np.ones(len(frame), dtype=bool)
    for cond in conditions:
        kind = dataset.column_type(cond.column)
        literal = _coerce_value(cond.literal, kind)
        keep &= np.asarray(_OPERATORS[cond.op](frame[cond.column], literal), dtype=bool)
    return keep


def exact_aggregate(dataset, atomic, domain):
    """
    Compute an atomic query's aggregate for every predicate of a domain.

    Parameters
    ----------
    dataset : Dataset
    atomic  : AtomicQuery
    domain  : PredicateDomain

    Returns
    -------
    aggregates : GroupAggregates
                 empty groups give 0 for counts and SUM and the low end of
                 the value range for AVG; values are clamped to the range.

    Examples
    --------
    >>> from dpds.data import Dataset, enumerate_predicates, exact_aggregate
    >>> from dpds.query import AtomicQuery, AggregateSpec
    >>> ds = Dataset.from_records([("A", 1), ("A", 2), ("B", 3)],
    ...                           [("room", "string"), ("age", "integer")])
    >>> dom = enumerate_predicates(["room"], [("A",), ("B",), ("C",)], ds)
    >>> q = AtomicQuery("Q", AggregateSpec("COUNT_STAR"), thresholds=1,
    ...                 value_range=(0, 10))
    >>> exact_aggregate(ds, q, dom).values
    array([2., 1., 0.])
    """
    frame = dataset.frame
    for column in domain.group_columns:
        dataset.column_type(column)
    spec = atomic.aggregate
    if spec.column is not None:
        dataset.column_type(spec.column)
    subset = frame[_mask(frame, atomic.filter, dataset)]
    grouped = subset.groupby(list(domain.group_columns))
    if spec.kind == "COUNT_STAR":
        series = grouped.size()
    elif spec.kind == "COUNT_DISTINCT":
        series = grouped[spec.column].nunique()
    elif spec.kind == "SUM":
        series = grouped[spec.column].sum()
    else:
        series = grouped[spec.column].mean()
    kinds = [dataset.column_type(c) for c in domain.group_columns]
    keys = [tuple(_coerce_value(v, t) for v, t in zip(p, kinds)) for p in domain.predicates]
    if len(domain.group_columns) == 1:
        index = pd.Index([key[0] for key in keys])
    else:
        index = pd.MultiIndex.from_tuples(keys)
    fill = atomic.value_range[0] if spec.kind == "AVG" else 0.0
    values = series.reindex(index).to_numpy(dtype=float, na_value=np.nan)
    values = np.where(np.isnan(values), fill, values)
    low, high = atomic.value_range
    return GroupAggregates(atomic.id, np.clip(values, low, high))


def bind_aggregates(dataset, compiled, domain):
    """Exact aggregates of every atomic query of a compiled query, keyed by id."""
    if not compiled.is_bound:
        raise ValueError("the compiled query is not bound to atomic query declarations.")
    return {a.id: exact_aggregate(dataset, a, domain) for a in compiled.atomics}


def true_answer(dataset, compiled, domain, aggregates=None):
    """
    Exact answer of a compiled query: indices of the predicates on which
    the boolean combination of strict threshold comparisons holds.

    Parameters
    ----------
    dataset    : Dataset
    compiled   : CompiledQuery
                 bound to its atomic queries.
    domain     : PredicateDomain
    aggregates : dict, optional
                 precomputed output of :func:`bind_aggregates`.

    Returns
    -------
    answer     : frozenset
    """
    if aggregates is None:
        aggregates = bind_aggregates(dataset, compiled, domain)
    truth = {}
    for atomic in compiled.atomics:
        c = threshold_vector(atomic.thresholds, domain.k)
        g = orient(aggregates[atomic.id].values, atomic.direction)
        truth[atomic.id] = g > orient(c, atomic.direction)
    return frozenset(np.flatnonzero(evaluate_truth(compiled.tree, truth)).tolist())
