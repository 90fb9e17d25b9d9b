"""
Utilities shared by the query, mechanism and probing modules.
"""

__all__ = ["orient", "threshold_vector", "binomial_slack", "check_open_interval"]

import numpy as np
from collections.abc import Mapping


def orient(values, direction):
    """
    Map values so that every threshold comparison reads as "greater than".

    Parameters
    ----------
    values    : array
                (k, ), aggregate values or thresholds.
    direction : str
                "GREATER" or "LESS".

    Returns
    -------
    oriented  : array
                (k, ), values multiplied by +1 for GREATER and -1 for LESS.

    Examples
    --------
    >>> import numpy as np
    >>> from dpds.util import orient
    >>> orient(np.array([1.0, -2.0]), "LESS")
    array([-1.,  2.])

    """
    if direction == "GREATER":
        sign = 1.0
    elif direction == "LESS":
        sign = -1.0
    else:
        raise ValueError("direction must be 'GREATER' or 'LESS', got %r." % direction)
    return sign * np.asarray(values, dtype=float)


def threshold_vector(thresholds, k):
    """
    Broadcast a threshold declaration to one threshold per predicate.

    Parameters
    ----------
    thresholds : float, sequence or mapping
                 a scalar shared by all predicates, a sequence of length k,
                 or a mapping from predicate index to threshold covering
                 every index in range(k).
    k          : int
                 number of predicates.

    Returns
    -------
    c          : array
                 (k, ), float thresholds.

    Examples
    --------
    >>> from dpds.util import threshold_vector
    >>> threshold_vector(3, 2)
    array([3., 3.])
    >>> threshold_vector({1: 5.0, 0: 2.0}, 2)
    array([2., 5.])

    """
    if isinstance(thresholds, Mapping):
        missing = set(range(k)) - set(int(i) for i in thresholds)
        if missing:
            raise ValueError(
                "threshold map is missing predicate indices %s." % sorted(missing)[:5]
            )
        return np.array([float(thresholds[i]) for i in range(k)])
    c = np.asarray(thresholds, dtype=float)
    if c.ndim == 0:
        return np.full(k, float(c))
    if c.shape != (k,):
        raise ValueError(
            "threshold sequence has length %d but the domain has %d predicates."
            % (c.size, k)
        )
    return c.copy()


def binomial_slack(p, n, sigmas=3.0):
    """
    Upper tolerance for an empirical Bernoulli rate estimated from n draws.

    Parameters
    ----------
    p      : float
             the bound being checked.
    n      : int
             number of draws behind the empirical rate.
    sigmas : float
             number of standard errors of slack.

    Returns
    -------
    bound  : float
             p + sigmas * sqrt(p * (1 - p) / n).

    """
    return p + sigmas * np.sqrt(p * (1.0 - p) / n)


def check_open_interval(name, value, low, high):
    """
    Raise ValueError unless low < value < high.
    """
    if not (low < value < high):
        raise ValueError(
            "%s must lie in the open interval (%s, %s), got %r." % (name, low, high, value)
        )
    return value
