"""
Deterministic synthetic datasets with controllable mass around a threshold.
"""

__author__ = "dpds developers"

__all__ = ["SynthSpec", "synth_dataset"]

import math
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .data import Dataset
from .mechanisms import RandomSource

KINDS = ("grid", "far", "straddle", "sales")
REGIONS = ("North", "South", "East", "West")

OCCUPANCY_SCHEMA = (
    ("room", "string"),
    ("date", "date"),
    ("kind", "string"),
    ("age", "integer"),
)
SALES_SCHEMA = (
    ("city", "string"),
    ("date", "date"),
    ("region", "string"),
    ("customer_id", "integer"),
    ("net_total", "real"),
)


@dataclass(frozen=True)
class SynthSpec:
    """
    Parameters of a synthetic dataset.

    Occupancy-style kinds produce one row per visit with columns room,
    date, kind and age, so COUNT(*) grouped by (room, date) gives the
    designed counts. The sales kind produces one row per purchase with
    columns city, date, region, customer_id and net_total.

    Attributes
    ----------
    kind              : str
                        "grid": Poisson counts around ``mean_count``;
                        "far": every count at least two shifts from the
                        threshold; "straddle": a ``straddle_fraction`` of
                        groups inside [threshold - 2u, threshold], the rest
                        far; "sales": Poisson purchases per (city, date).
    groups            : int
                        number of rooms (cities for sales).
    days              : int
                        number of consecutive dates.
    threshold         : float
    u                 : float
                        shift defining the near and far bands.
    high              : float
                        largest count generated.
    mean_count        : float
                        Poisson mean of grid and sales counts.
    straddle_fraction : float
    positive_fraction : float
                        share of far groups placed above the threshold.
    visitor_share     : float
                        probability that a visit has kind "visitor".
    customers         : int
                        size of the sales customer pool.
    start             : str
                        first date, YYYY-MM-DD.
    """

    kind: str = "grid"
    groups: int = 10
    days: int = 5
    threshold: float = 50.0
    u: float = 10.0
    high: float = 100.0
    mean_count: float = 20.0
    straddle_fraction: float = 0.5
    positive_fraction: float = 0.5
    visitor_share: float = 0.3
    customers: int = 200
    start: str = "2024-01-01"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError("kind must be one of %s, got %r." % (KINDS, self.kind))
        if self.groups < 1 or self.days < 1:
            raise ValueError("groups and days must be positive.")
        if not 0 <= self.threshold <= self.high:
            raise ValueError(
                "threshold %r must lie within [0, high=%r]." % (self.threshold, self.high)
            )
        if self.kind in ("far", "straddle"):
            if self.threshold - 2 * self.u < 0 or self.threshold + 2 * self.u > self.high:
                raise ValueError(
                    "threshold +/- 2u must lie within [0, high] for %r data." % self.kind
                )
        for name in ("straddle_fraction", "positive_fraction", "visitor_share"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError("%s must lie in [0, 1]." % name)

    @property
    def group_column(self):
        return "city" if self.kind == "sales" else "room"

    @property
    def schema(self):
        return SALES_SCHEMA if self.kind == "sales" else OCCUPANCY_SCHEMA

    def group_values(self):
        """Public predicate grid ``{"product": {...}}`` of the dataset."""
        prefix = "C" if self.kind == "sales" else "R"
        names = ["%s%02d" % (prefix, i) for i in range(self.groups)]
        dates = pd.date_range(self.start, periods=self.days, freq="D")
        return {
            "product": {
                self.group_column: names,
                "date": [d.strftime("%Y-%m-%d") for d in dates],
            }
        }


def _far_counts(spec, gen, size):
    low = math.floor(spec.threshold - 2 * spec.u)
    high = math.ceil(spec.threshold + 2 * spec.u)
    above = gen.random(size) < spec.positive_fraction
    counts = gen.integers(0, low + 1, size)
    counts[above] = gen.integers(high, int(spec.high) + 1, int(above.sum()))
    return counts


def _counts(spec, gen):
    n = spec.groups * spec.days
    if spec.kind in ("grid", "sales"):
        return np.minimum(gen.poisson(spec.mean_count, n), int(spec.high))
    counts = _far_counts(spec, gen, n)
    if spec.kind == "straddle":
        near = np.zeros(n, dtype=bool)
        near[gen.permutation(n)[: int(round(spec.straddle_fraction * n))]] = True
        low = math.ceil(spec.threshold - 2 * spec.u)
        counts[near] = gen.integers(low, math.floor(spec.threshold) + 1, int(near.sum()))
    return counts


def synth_dataset(spec, seed=0):
    """
    Generate a dataset from ``spec``.

    Parameters
    ----------
    spec : SynthSpec
    seed : int

    Returns
    -------
    dataset : Dataset

    Examples
    --------
    >>> from dpds.synth import SynthSpec, synth_dataset
    >>> ds = synth_dataset(SynthSpec("far", groups=4, days=2), seed=1)
    >>> ds.columns
    ['room', 'date', 'kind', 'age']
    """
    gen = RandomSource(seed).generator
    product = spec.group_values()["product"]
    names = product[spec.group_column]
    dates = pd.to_datetime(product["date"])
    counts = _counts(spec, gen)
    cell = np.repeat(np.arange(counts.size), counts)
    group = np.asarray(names)[cell // spec.days]
    date = dates[cell % spec.days]
    rows = cell.size
    if spec.kind == "sales":
        city = pd.Series(group)
        frame = pd.DataFrame(
            {
                "city": city,
                "date": date,
                "region": city.map(
                    {name: REGIONS[i % len(REGIONS)] for i, name in enumerate(names)}
                ),
                "customer_id": gen.integers(0, spec.customers, rows),
                "net_total": np.round(gen.lognormal(3.0, 0.6, rows), 2),
            }
        )
    else:
        frame = pd.DataFrame(
            {
                "room": group,
                "date": date,
                "kind": np.where(gen.random(rows) < spec.visitor_share, "visitor", "staff"),
                "age": gen.integers(18, 81, rows),
            }
        )
    return Dataset(frame, spec.schema)
