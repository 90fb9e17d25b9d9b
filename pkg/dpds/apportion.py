"""
Apportionment of a false-negative bound over the atomic queries of a
compiled query so that the total privacy cost is minimal.
"""

__author__ = "dpds developers"

__all__ = [
    "ApportionInput",
    "ApportionOutput",
    "beta_split_two",
    "beta_split_tree",
    "beta_split_equal",
    "alpha_split",
    "numeric_lagrange_oracle",
    "predicted_epsilon",
]

from dataclasses import dataclass

import numpy as np
from scipy.optimize import fsolve, minimize
from scipy.special import logsumexp

from .util import check_open_interval

MAX_ORACLE_ATOMICS = 6


@dataclass
class ApportionInput:
    """
    Per-atomic inputs of an apportionment.

    Attributes
    ----------
    u    : array
           (n, ), positive threshold shifts.
    dg   : array
           (n, ), positive sensitivities.
    o    : array
           (n, ), occurrence counts, each >= 1.
    beta : float
           total false-negative bound in (0, 0.5).
    """

    u: np.ndarray
    dg: np.ndarray
    o: np.ndarray
    beta: float

    def __post_init__(self):
        self.u = np.atleast_1d(np.asarray(self.u, dtype=float))
        self.dg = np.atleast_1d(np.asarray(self.dg, dtype=float))
        self.o = np.atleast_1d(np.asarray(self.o, dtype=float))
        if not (self.u.shape == self.dg.shape == self.o.shape) or self.u.ndim != 1:
            raise ValueError("u, dg and o must be vectors of equal length.")
        if self.u.size == 0:
            raise ValueError("at least one atomic query is required.")
        if np.any(self.u <= 0) or np.any(self.dg <= 0):
            raise ValueError("threshold shifts and sensitivities must be positive.")
        if np.any(self.o < 1):
            raise ValueError("occurrence counts must be at least 1.")
        check_open_interval("beta", self.beta, 0.0, 0.5)

    @property
    def n(self):
        return self.u.size


@dataclass
class ApportionOutput:
    """
    Attributes
    ----------
    betas             : array
                        (n, ), per-atomic false-negative bounds.
    predicted_epsilon : float
                        total privacy cost when every occurrence runs once.
    """

    betas: np.ndarray
    predicted_epsilon: float


def predicted_epsilon(inp, betas):
    """
    Total cost sum_i o_i * dg_i * ln(1 / (2 beta_i)) / u_i.
    """
    betas = np.asarray(betas, dtype=float)
    return float(np.sum(inp.o * inp.dg * np.log(1.0 / (2.0 * betas)) / inp.u))


def beta_split_two(u1, u2, dg1, dg2, beta):
    """
    Optimal split of ``beta`` between the two sides of a binary node.

    Returns
    -------
    betas : tuple
            (beta_1, beta_2) with beta_1 + beta_2 = beta.

    Examples
    --------
    >>> from dpds.apportion import beta_split_two
    >>> b1, b2 = beta_split_two(10, 20, 1, 1, 0.03)
    >>> round(b1, 10), round(b2, 10)
    (0.02, 0.01)
    """
    check_open_interval("beta", beta, 0.0, 0.5)
    if min(u1, u2, dg1, dg2) <= 0:
        raise ValueError("threshold shifts and sensitivities must be positive.")
    beta_1 = u2 * dg1 * beta / (u1 * dg2 + u2 * dg1)
    return beta_1, beta - beta_1


def beta_split_tree(inp):
    """
    Closed-form optimal apportionment over a whole tree.

    Minimizing the total cost under ``sum_i o_i * beta_i = beta`` gives
    ``beta_i`` proportional to ``dg_i / u_i``. The normalizer is formed in
    log space.

    Parameters
    ----------
    inp : ApportionInput

    Returns
    -------
    out : ApportionOutput

    Examples
    --------
    >>> from dpds.apportion import ApportionInput, beta_split_tree
    >>> out = beta_split_tree(ApportionInput([1, 1, 1], [1, 1, 1], [2, 1, 1], 0.04))
    >>> out.betas.round(10)
    array([0.01, 0.01, 0.01])
    """
    log_w = np.log(inp.dg) - np.log(inp.u)
    log_betas = np.log(inp.beta) + log_w - logsumexp(log_w + np.log(inp.o))
    betas = np.exp(log_betas)
    betas *= inp.beta / np.sum(inp.o * betas)
    return ApportionOutput(betas, predicted_epsilon(inp, betas))


def beta_split_equal(o, beta):
    """
    Equal share ``beta / sum(o)`` for every atomic, ignoring shifts and
    sensitivities.
    """
    check_open_interval("beta", beta, 0.0, 0.5)
    o = np.atleast_1d(np.asarray(o, dtype=float))
    return np.full(o.size, beta / o.sum())


def alpha_split(alpha, n, o):
    """
    Per-atomic false-positive bounds ``alpha / (n * o_i)``.

    Examples
    --------
    >>> from dpds.apportion import alpha_split
    >>> alpha_split(0.1, 2, [1, 2])
    array([0.05 , 0.025])
    """
    check_open_interval("alpha", alpha, 0.0, 1.0)
    o = np.atleast_1d(np.asarray(o, dtype=float))
    if o.size != n:
        raise ValueError("expected %d occurrence counts, got %d." % (n, o.size))
    return alpha / (n * o)


def numeric_lagrange_oracle(inp, tol=1e-12, maxiter=500):
    """
    Numerical solution of the apportionment problem, used to cross-check
    :func:`beta_split_tree`.

    The shares ``x_i = beta_i / beta`` minimize
    ``-sum_i w_i ln x_i`` subject to ``sum_i o_i x_i = 1`` with
    ``w_i`` proportional to ``o_i dg_i / u_i``. SLSQP gives a starting point
    which is then polished by solving the stationarity conditions of the
    Lagrangian.

    Parameters
    ----------
    inp     : ApportionInput
              at most six atomics.
    tol     : float
              tolerance on the polished stationarity residual.
    maxiter : int
              SLSQP iteration limit.

    Returns
    -------
    betas   : array
              (n, ), per-atomic bounds.
    """
    n = inp.n
    if n > MAX_ORACLE_ATOMICS:
        raise ValueError(
            "the numeric oracle handles at most %d atomics, got %d." % (MAX_ORACLE_ATOMICS, n)
        )
    o = inp.o
    w = o * inp.dg / inp.u
    w = w / w.sum()

    def objective(x):
        return -np.sum(w * np.log(x))

    def gradient(x):
        return -w / x

    constraint = {
        "type": "eq",
        "fun": lambda x: np.dot(o, x) - 1.0,
        "jac": lambda x: o,
    }
    x0 = 1.0 / (n * o)
    bounds = [(1e-12, 1.0 / oi) for oi in o]
    res = minimize(
        objective,
        x0,
        jac=gradient,
        bounds=bounds,
        constraints=[constraint],
        method="SLSQP",
        options={"ftol": 1e-12, "maxiter": maxiter},
    )
    # convergence is judged on the polished point
    start = res.x if np.all(np.isfinite(res.x)) else x0

    # stationarity: lambda * o_i * x_i = w_i, plus the constraint
    def kkt(z):
        x, lam = z[:-1], z[-1]
        return np.append(lam * o * x - w, np.dot(o, x) - 1.0)

    def kkt_jacobian(z):
        x, lam = z[:-1], z[-1]
        jac = np.zeros((n + 1, n + 1))
        jac[:n, :n] = np.diag(lam * o)
        jac[:n, n] = o * x
        jac[n, :n] = o
        return jac

    z, info, ier, message = fsolve(
        kkt, np.append(start, 1.0), fprime=kkt_jacobian, xtol=1e-15, full_output=True
    )
    residual = np.max(np.abs(kkt(z)))
    if residual > tol:
        raise RuntimeError(
            "Lagrange conditions not met (residual %.3g): %s" % (residual, message)
        )
    return inp.beta * z[:-1]
