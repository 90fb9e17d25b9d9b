"""
Differential privacy primitives: seeded randomness, Laplace noise, the
threshold-shift Laplace mechanism and sequential-composition accounting.
"""

__author__ = "dpds developers"

__all__ = [
    "RandomSource",
    "PrivacyAccountant",
    "Denied",
    "TslmOutcome",
    "laplace_ppf",
    "laplace_sample",
    "tslm_epsilon",
    "tslm",
]

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .util import orient, threshold_vector, check_open_interval


class RandomSource:
    """
    Reproducible source of uniform draws.

    A source is fully determined by ``(seed, stream)``; distinct streams
    of one seed are independent, so a Monte Carlo trial can own stream
    ``trial`` without coordinating with the others.

    Parameters
    ----------
    seed   : int
             master seed, reduced modulo 2**64.
    stream : int
             non-negative stream number.

    Examples
    --------
    >>> from dpds.mechanisms import RandomSource
    >>> a, b = RandomSource(7, 1), RandomSource(7, 1)
    >>> bool(a.uniform() == b.uniform())
    True
    """

    def __init__(self, seed=0, stream=0):
        if stream < 0:
            raise ValueError("stream must be non-negative, got %r." % stream)
        self.seed = int(seed) % 2 ** 64
        self.stream = int(stream)
        sequence = np.random.SeedSequence(self.seed, spawn_key=(self.stream,))
        self._generator = np.random.Generator(np.random.Philox(sequence))

    def uniform(self, size=None):
        """Uniform draws on [0, 1)."""
        return self._generator.random(size)

    def laplace(self, scale, size=None):
        return laplace_sample(scale, self, size)

    @property
    def generator(self):
        """The underlying numpy Generator, for non-mechanism sampling."""
        return self._generator

    def __repr__(self):
        return "RandomSource(seed=%d, stream=%d)" % (self.seed, self.stream)


def laplace_ppf(u, scale):
    """
    Inverse CDF of the centred Laplace distribution.

    Examples
    --------
    >>> import numpy as np
    >>> from dpds.mechanisms import laplace_ppf
    >>> float(laplace_ppf(0.5, 1.0))
    0.0
    >>> bool(np.isclose(laplace_ppf(0.75, 1.0), np.log(2)))
    True
    """
    if not scale > 0:
        raise ValueError("Laplace scale must be positive, got %r." % scale)
    return stats.laplace.ppf(u, loc=0.0, scale=scale)


def laplace_sample(scale, rng, size=None):
    """
    Draw Laplace(0, scale) noise by inverse transform of ``rng`` uniforms.

    Parameters
    ----------
    scale : float
            positive scale.
    rng   : RandomSource
    size  : int, optional
            number of draws; a scalar is returned when omitted.
    """
    if not scale > 0:
        raise ValueError("Laplace scale must be positive, got %r." % scale)
    # keep the open interval so no draw maps to an infinite quantile
    u = np.clip(rng.uniform(size), np.finfo(float).tiny, 1.0 - np.finfo(float).eps)
    return laplace_ppf(u, scale)


def tslm_epsilon(sensitivity, beta, u):
    """
    Privacy cost of one threshold-shift Laplace run.

    Parameters
    ----------
    sensitivity : float
                  aggregate sensitivity.
    beta        : float
                  false-negative bound in (0, 0.5).
    u           : float
                  positive threshold shift.

    Returns
    -------
    epsilon     : float
                  sensitivity * ln(1 / (2 beta)) / u.

    Examples
    --------
    >>> from dpds.mechanisms import tslm_epsilon
    >>> round(tslm_epsilon(1.0, 0.05, 10.0), 10)
    0.2302585093
    """
    check_open_interval("beta", beta, 0.0, 0.5)
    if not u > 0:
        raise ValueError("threshold shift u must be positive, got %r." % u)
    return sensitivity * math.log(1.0 / (2.0 * beta)) / u


@dataclass(frozen=True)
class TslmOutcome:
    """
    Release of one threshold-shift Laplace run.

    Attributes
    ----------
    noisy    : array
               (k, ), noisy aggregates.
    reported : frozenset
               predicates whose noisy value clears the shifted threshold.
    epsilon  : float
    u        : float
    beta     : float
    """

    noisy: np.ndarray
    reported: frozenset
    epsilon: float
    u: float
    beta: float


def tslm(atomic, exact, u, beta, rng, thresholds=None):
    """
    Threshold-shift Laplace mechanism.

    Adds Laplace noise of scale ``sensitivity / epsilon`` to every exact
    aggregate and reports the predicates whose noisy value lies strictly
    beyond ``c - u`` (``c + u`` for LESS), so a true positive is missed
    with probability at most ``beta``.

    Parameters
    ----------
    atomic     : AtomicQuery
    exact      : GroupAggregates
                 exact aggregates of ``atomic``.
    u          : float
                 threshold shift in (0, width].
    beta       : float
                 false-negative bound in (0, 0.5).
    rng        : RandomSource
    thresholds : array, optional
                 (k, ) thresholds; taken from ``atomic`` when omitted.

    Returns
    -------
    outcome    : TslmOutcome
    """
    if not 0 < u <= atomic.width:
        raise ValueError(
            "threshold shift must lie in (0, %s], got %r." % (atomic.width, u)
        )
    k = exact.k
    c = threshold_vector(atomic.thresholds if thresholds is None else thresholds, k)
    epsilon = tslm_epsilon(atomic.sensitivity, beta, u)
    noisy = exact.values + laplace_sample(atomic.sensitivity / epsilon, rng, k)
    g = orient(noisy, atomic.direction)
    shifted = orient(c, atomic.direction) - u
    reported = frozenset(np.flatnonzero(g > shifted).tolist())
    return TslmOutcome(noisy, reported, epsilon, u, beta)


@dataclass(frozen=True)
class Denied:
    """Refusal of a charge; ``epsilon_spent`` is the total recorded before it."""

    reason: str
    epsilon_spent: float
    epsilon_max: float


class PrivacyAccountant:
    """
    Sequential-composition accountant over a predicate domain.

    Parameters
    ----------
    epsilon_max : float
                  non-negative global budget.
    k           : int
                  number of predicates.

    Attributes
    ----------
    charges     : list
                  epsilon of every charge in order.
    labels      : list
                  label of every charge.
    ledger      : array
                  (k, ), per-predicate accumulated epsilon.
    denied      : bool
                  True once a charge exceeded the budget.

    Examples
    --------
    >>> from dpds.mechanisms import PrivacyAccountant, Denied
    >>> acct = PrivacyAccountant(1.0, 3)
    >>> acct.charge(None, 0.4) is acct
    True
    >>> isinstance(acct.charge([0], 0.7), Denied)
    True
    >>> acct.ledger
    array([0.4, 0.4, 0.4])
    """

    def __init__(self, epsilon_max, k):
        if epsilon_max < 0:
            raise ValueError("epsilon_max must be non-negative, got %r." % epsilon_max)
        if k < 1:
            raise ValueError("the predicate domain must be non-empty.")
        self.epsilon_max = float(epsilon_max)
        self.k = k
        self.charges = []
        self.labels = []
        self.ledger = np.zeros(k)
        self.denied = False

    @property
    def epsilon_spent(self):
        return math.fsum(self.charges)

    def charge(self, predicates, epsilon, label=None):
        """
        Record a charge of ``epsilon`` against the predicates it touched.

        Parameters
        ----------
        predicates : iterable or None
                     predicate indices the run released information about;
                     None for all of them.
        epsilon    : float
                     positive cost.
        label      : object, optional

        Returns
        -------
        self or Denied
            Denied, with nothing recorded, when the charge would take the
            total beyond ``epsilon_max``.
        """
        if not epsilon > 0:
            raise ValueError("a charge must be positive, got %r." % epsilon)
        if math.fsum(self.charges + [epsilon]) > self.epsilon_max:
            # a refused charge releases nothing and is not recorded
            self.denied = True
            return Denied("BudgetExceeded", self.epsilon_spent, self.epsilon_max)
        self.charges.append(float(epsilon))
        self.labels.append(label)
        if predicates is None:
            self.ledger += epsilon
        else:
            self.ledger[np.asarray(list(predicates), dtype=int)] += epsilon
        return self
