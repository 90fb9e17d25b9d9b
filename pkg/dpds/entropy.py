"""
Entropy-guided sequential probing: a per-predicate privacy ledger, the
min-entropy of that ledger and a multi-step Laplace mechanism that raises
its privacy level only on predicates it has not yet decided.
"""

__author__ = "dpds developers"

__all__ = [
    "PwdpLedger",
    "EntConfig",
    "SubQueryTrace",
    "DdpwlmOutcome",
    "min_entropy",
    "ddpwlm",
    "ent_probe",
    "flatten_query",
]

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import entr, logsumexp

from .apportion import ApportionInput, beta_split_tree
from .mechanisms import RandomSource, PrivacyAccountant, Denied, tslm_epsilon
from .probe import (
    LeafState,
    ProbeResult,
    QueryDenied,
    FP_BOUND_UNMET,
    estimate_fps,
    find_u_opt,
)
from .query import Leaf, And, Or
from .util import orient, threshold_vector, check_open_interval

MAX_VERTICES = 2 ** 17
FEASIBILITY_TOL = 1e-12


@dataclass(frozen=True)
class EntConfig:
    """
    Tuning of the sequential mechanism.

    Attributes
    ----------
    m           : int
                  maximum number of noise draws per sub-query.
    m_f         : int
                  number of candidate privacy levels examined per step.
    u0_fraction : float
                  starting threshold shift as a fraction of the value-range
                  width, in (0, 1].
    """

    m: int = 4
    m_f: int = 3
    u0_fraction: float = 0.3

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 1:
            raise ValueError("m must be a positive integer, got %r." % self.m)
        if int(self.m_f) != self.m_f or self.m_f < 1:
            raise ValueError("m_f must be a positive integer, got %r." % self.m_f)
        if not 0 < self.u0_fraction <= 1:
            raise ValueError("u0_fraction must lie in (0, 1], got %r." % self.u0_fraction)


class PwdpLedger:
    """
    Predicate-wise privacy ledger.

    Parameters
    ----------
    epsilons : array
               (k, ), non-negative privacy spent on each predicate.

    Attributes
    ----------
    epsilons : array
    k        : int

    Examples
    --------
    >>> import numpy as np
    >>> from dpds.entropy import PwdpLedger
    >>> ledger = PwdpLedger(np.zeros(4))
    >>> round(ledger.min_entropy(), 6)
    1.386294
    """

    def __init__(self, epsilons):
        self.epsilons = np.atleast_1d(np.asarray(epsilons, dtype=float))
        if self.epsilons.ndim != 1 or self.epsilons.size == 0:
            raise ValueError("a ledger needs at least one predicate.")
        if np.any(self.epsilons < 0):
            raise ValueError("ledger entries must be non-negative.")
        self.k = self.epsilons.size

    @classmethod
    def from_accountant(cls, accountant):
        return cls(accountant.ledger.copy())

    def bounds(self):
        """
        Box constraints on the adversary's posterior of each predicate.

        Returns
        -------
        low, high : array
                    ``exp(-e_i) / sum_j exp(e_j)`` and
                    ``exp(e_i) / sum_j exp(-e_j)``.
        """
        e = self.epsilons
        low = np.exp(-e - logsumexp(e))
        high = np.exp(e - logsumexp(-e))
        return low, high

    def min_entropy(self, method="auto"):
        return min_entropy(self, method)


def _levels(epsilons):
    """Distinct ledger values with their multiplicities and box bounds."""
    values, counts = np.unique(epsilons, return_counts=True)
    low = np.exp(-values - logsumexp(values, b=counts))
    high = np.exp(values - logsumexp(-values, b=counts))
    return low, high, counts


def _vertex_count(counts):
    counts = [int(c) for c in counts]
    return sum(
        math.prod(c + 1 - (i == g) for i, c in enumerate(counts)) for g in range(len(counts))
    )


def _vertices(low, high, counts):
    # a vertex fixes how many predicates of each level sit at the upper
    # bound; one predicate of the ``free`` level absorbs the rest
    best = np.inf
    for free in range(counts.size):
        caps = counts.copy()
        caps[free] -= 1
        at_high = np.indices(tuple(caps + 1)).reshape(caps.size, -1).T
        at_low = caps - at_high
        rest = 1.0 - at_high @ high - at_low @ low
        feasible = (rest >= low[free] - FEASIBILITY_TOL) & (rest <= high[free] + FEASIBILITY_TOL)
        if feasible.any():
            h = (
                at_high[feasible] @ entr(high)
                + at_low[feasible] @ entr(low)
                + entr(np.clip(rest[feasible], 0.0, None))
            )
            best = min(best, float(h.min()))
    if not np.isfinite(best):
        raise ValueError("the posterior box is numerically empty.")
    return best


def _greedy(low, high, counts):
    # every level in turn supplies the predicate holding the bulk of the
    # mass; overflow saturates the widest boxes first
    order = np.argsort(-high, kind="stable")
    best = np.inf
    for free in range(counts.size):
        rest = counts.copy()
        rest[free] -= 1
        value = 1.0 - rest @ low
        at_high = np.zeros_like(rest)
        partial = None
        excess = value - high[free]
        if excess > 0:
            value = high[free]
            for j in order:
                if excess <= 0:
                    break
                width = high[j] - low[j]
                if rest[j] == 0 or width <= 0:
                    continue
                at_high[j] = min(rest[j], int(excess // width))
                excess -= at_high[j] * width
                if at_high[j] < rest[j] and excess > 0:
                    partial = (j, low[j] + excess)
                    excess = 0.0
            if excess > FEASIBILITY_TOL:
                continue
        at_low = rest - at_high
        h = at_high @ entr(high) + at_low @ entr(low) + entr(value)
        if partial is not None:
            j, v = partial
            h += entr(v) - entr(low[j])
        best = min(best, float(h))
    if not np.isfinite(best):
        raise ValueError("the posterior box is numerically empty.")
    return best


def min_entropy(ledger, method="auto"):
    """
    Smallest Shannon entropy (natural log) of any posterior consistent
    with a predicate-wise ledger.

    Parameters
    ----------
    ledger : PwdpLedger or array
    method : str
             "exact" enumerates the vertices of the feasible polytope,
             "greedy" returns the best vertex in which a single predicate
             holds the bulk of the mass, an upper bound on the minimum,
             and "auto" enumerates whenever there are at most
             ``MAX_VERTICES`` vertices.

    Returns
    -------
    h      : float
             in [0, ln k].

    Notes
    -----
    Entropy is concave, so its minimum over the polytope sits at a vertex:
    every coordinate but one at a box bound. Predicates sharing a ledger
    value are interchangeable, so vertices are enumerated per distinct
    value, which keeps ledgers with few distinct values exact at any size.
    A larger ledger entry widens the box on both sides, so no single
    saturation order is optimal. The greedy value is therefore an upper
    bound: it equals the minimum on constant ledgers, but on mixed ledgers
    it may exceed it, and it is not guaranteed to agree with "exact" to any
    tolerance. Ledgers beyond ``MAX_VERTICES`` vertices under "auto" report
    this upper bound.

    Examples
    --------
    >>> from dpds.entropy import min_entropy
    >>> min_entropy([0.7])
    0.0
    >>> round(min_entropy([0.5, 0.5, 0.5]), 6) == round(min_entropy([0.5] * 3, "greedy"), 6)
    True
    """
    if not isinstance(ledger, PwdpLedger):
        ledger = PwdpLedger(ledger)
    if method not in ("auto", "exact", "greedy"):
        raise ValueError("method must be 'auto', 'exact' or 'greedy', got %r." % method)
    if ledger.k == 1:
        return 0.0
    low, high, counts = _levels(ledger.epsilons)
    if counts @ low > 1.0 + FEASIBILITY_TOL or counts @ high < 1.0 - FEASIBILITY_TOL:
        raise ValueError("the posterior box is numerically empty.")
    if method == "exact" or (method == "auto" and _vertex_count(counts) <= MAX_VERTICES):
        return _vertices(low, high, counts)
    return _greedy(low, high, counts)


@dataclass(frozen=True)
class DdpwlmOutcome:
    """
    Attributes
    ----------
    reported   : frozenset
    epsilon    : float
                 total cost over the noise draws.
    beta_used  : float
                 share of the false-negative bound consumed.
    iterations : int
    epsilons   : tuple
                 privacy level of every draw.
    u_opt      : float
                 shift whose level caps the sequence.
    """

    reported: frozenset
    epsilon: float
    beta_used: float
    iterations: int
    epsilons: tuple
    u_opt: float


def _next_epsilon(epsilon, epsilon_cap, m_f, ledger, remaining, g, c, sensitivity, log_term):
    ratio = (epsilon_cap / epsilon) ** (1.0 / m_f)
    levels = epsilon * ratio ** np.arange(1, m_f + 1)
    levels[-1] = epsilon_cap
    best, best_h = levels[-1], -np.inf
    for level in levels:
        if level >= epsilon_cap:
            undecided = np.zeros(remaining.size, dtype=bool)
        else:
            shift = sensitivity * log_term / level
            undecided = (g <= c) & (g >= c - 2.0 * shift)
        hypothetical = ledger.copy()
        hypothetical[remaining] += level
        hypothetical[remaining[undecided]] += epsilon_cap
        h = min_entropy(hypothetical)
        if h > best_h + FEASIBILITY_TOL:
            best, best_h = level, h
    return float(best)


def ddpwlm(atomic, exact, u0, beta_i, alpha_i, accountant, rng, config=None, thresholds=None):
    """
    Data-dependent multi-step Laplace mechanism for one atomic query.

    Each step draws fresh noise on the predicates not yet decided, at a
    false-negative allotment of ``beta_i / m``. A predicate is decided
    positive above its threshold and negative more than two shifts below
    it. The first step's false-positive estimate fixes the highest privacy
    level the sequence may reach. The closing step runs at that level and
    decides everything left at one shift below it, which is ``u_opt``;
    levels in between are picked among ``m_f`` geometric candidates to
    keep the min-entropy of the ledger largest. When the first draw
    estimates no negatives the allowance is met as it stands and the
    sequence ends after that draw.

    With ``m = 1`` the only draw is the one that fixes ``u_opt``, so it
    decides at ``u0`` like a single threshold-shift run: the allowance is
    checked (no fitting shift denies the query) but a smaller ``u_opt`` is
    not enforced. Use ``m >= 2`` for false-positive control.

    Parameters
    ----------
    atomic     : AtomicQuery
    exact      : GroupAggregates
    u0         : float
                 starting shift in (0, width].
    beta_i     : float
                 false-negative bound of this sub-query.
    alpha_i    : float
                 false-positive bound of this sub-query.
    accountant : PrivacyAccountant
    rng        : RandomSource
    config     : EntConfig, optional
    thresholds : array, optional

    Returns
    -------
    outcome    : DdpwlmOutcome

    Raises
    ------
    QueryDenied
        on a budget breach, or when no shift meets the false-positive
        allowance.
    """
    config = EntConfig() if config is None else config
    b = beta_i / config.m
    check_open_interval("beta_i / m", b, 0.0, 0.5)
    if not 0 < u0 <= atomic.width:
        raise ValueError("starting shift must lie in (0, %s], got %r." % (atomic.width, u0))
    k = exact.k
    direction = atomic.direction
    raw_c = threshold_vector(atomic.thresholds if thresholds is None else thresholds, k)
    c = orient(raw_c, direction)
    x = orient(exact.values, direction)
    sensitivity = atomic.sensitivity
    log_term = math.log(1.0 / (2.0 * b))
    epsilon = tslm_epsilon(sensitivity, b, u0)
    epsilon_cap = epsilon
    u_opt = u0
    undecided = np.ones(k, dtype=bool)
    positive = np.zeros(k, dtype=bool)
    spent = []
    for step in range(1, config.m + 1):
        idx = np.flatnonzero(undecided)
        verdict = accountant.charge(idx, epsilon, label=atomic.id)
        if isinstance(verdict, Denied):
            raise QueryDenied(verdict.reason)
        spent.append(epsilon)
        g = x[idx] + rng.laplace(sensitivity / epsilon, idx.size)
        shift = sensitivity * log_term / epsilon
        if step == 1:
            leaf = LeafState(-1, atomic, exact, raw_c, u0, b, flag=False, noisy=orient(g, direction))
            estimate = estimate_fps(leaf)
            if estimate.r_est > 0:
                u_opt = find_u_opt(leaf, alpha_i * estimate.r_est)
                if u_opt is None:
                    raise QueryDenied(FP_BOUND_UNMET)
                epsilon_cap = tslm_epsilon(sensitivity, b, u_opt)
        if step == config.m or math.isclose(epsilon, epsilon_cap, rel_tol=1e-12):
            positive[idx[g > c[idx] - shift]] = True
            undecided[idx] = False
            break
        above = g > c[idx]
        positive[idx[above]] = True
        undecided[idx[above | (g < c[idx] - 2.0 * shift)]] = False
        if not undecided.any():
            break
        if step + 1 == config.m:
            # the closing draw runs at the cap so it decides at ``u_opt``
            epsilon = epsilon_cap
            continue
        carried = undecided[idx]
        epsilon = _next_epsilon(
            epsilon,
            epsilon_cap,
            config.m_f,
            accountant.ledger,
            np.flatnonzero(undecided),
            g[carried],
            c[idx][carried],
            sensitivity,
            log_term,
        )
    return DdpwlmOutcome(
        reported=frozenset(np.flatnonzero(positive).tolist()),
        epsilon=math.fsum(spent),
        beta_used=len(spent) / config.m * beta_i,
        iterations=len(spent),
        epsilons=tuple(spent),
        u_opt=float(u_opt),
    )


@dataclass(frozen=True)
class SubQueryTrace:
    """
    Record of one position of a sequential run.

    Attributes
    ----------
    atomic_id  : str
    beta_left  : float
                 false-negative bound still unspent when the position came up.
    beta_i     : float
                 share apportioned to this position.
    beta_used  : float
    iterations : int
    epsilon    : float
    skipped    : bool
                 True when an empty conjunction made the run unnecessary.
    """

    atomic_id: str
    beta_left: float
    beta_i: float
    beta_used: float
    iterations: int
    epsilon: float
    skipped: bool = False


def _internal(tree):
    if not isinstance(tree, Leaf):
        yield tree
        yield from _internal(tree.left)
        yield from _internal(tree.right)


def flatten_query(tree):
    """
    Flatten a tree into a sequence of atomic ids joined left to right.

    Single-operator trees flatten in any shape; mixed trees must be
    left-deep (every right child a leaf).

    Returns
    -------
    ids       : list
    operators : list
                "AND" or "OR" between consecutive positions.

    Examples
    --------
    >>> from dpds.query import parse_query
    >>> from dpds.entropy import flatten_query
    >>> flatten_query(parse_query("(Q1 OR Q2) AND Q3"))
    (['Q1', 'Q2', 'Q3'], ['OR', 'AND'])
    """
    kinds = {type(node) for node in _internal(tree)}
    if len(kinds) <= 1:
        ids = []
        stack = [tree]
        while stack:
            node = stack.pop()
            if isinstance(node, Leaf):
                ids.append(node.id)
            else:
                stack.extend([node.right, node.left])
        op = "AND" if kinds == {And} else "OR"
        return ids, [op] * (len(ids) - 1)
    tail = []
    node = tree
    while not isinstance(node, Leaf):
        if not isinstance(node.right, Leaf):
            raise ValueError(
                "sequential probing needs a flat expression; use probe for general trees."
            )
        tail.append(("AND" if isinstance(node, And) else "OR", node.right.id))
        node = node.left
    ids, operators = [node.id], []
    for op, atomic_id in reversed(tail):
        operators.append(op)
        ids.append(atomic_id)
    return ids, operators


def ent_probe(sequence, operators, bindings, beta, alpha, epsilon_max, config=None, rng=None):
    """
    Sequential entropy-guided probing of a flat query.

    Positions run left to right. Each takes its optimal share of the
    false-negative bound still unspent, so a position that stops early
    hands its unused share to those after it. A conjunction that is
    already empty skips the position.

    Parameters
    ----------
    sequence    : list
                  AtomicQuery per position.
    operators   : list
                  "AND" or "OR" joining each position to the result so far.
    bindings    : dict
                  atomic id -> GroupAggregates.
    beta        : float
    alpha       : float
    epsilon_max : float
    config      : EntConfig, optional
    rng         : RandomSource, optional

    Returns
    -------
    result      : ProbeResult
                  with a SubQueryTrace per position.
    """
    config = EntConfig() if config is None else config
    rng = RandomSource() if rng is None else rng
    check_open_interval("beta", beta, 0.0, 0.5)
    check_open_interval("alpha", alpha, 0.0, 1.0)
    if epsilon_max < 0:
        raise ValueError("epsilon_max must be non-negative, got %r." % epsilon_max)
    n = len(sequence)
    if n == 0:
        raise ValueError("at least one atomic query is required.")
    operators = [op.upper() for op in operators]
    if len(operators) != n - 1 or set(operators) - {"AND", "OR"}:
        raise ValueError("expected %d operators from {'AND', 'OR'}." % (n - 1))
    missing = [a.id for a in sequence if a.id not in bindings]
    if missing:
        raise ValueError("no aggregates bound for: %s." % ", ".join(missing))
    sizes = {bindings[a.id].k for a in sequence}
    if len(sizes) != 1:
        raise ValueError("aggregates of one query must share a predicate domain.")
    accountant = PrivacyAccountant(epsilon_max, sizes.pop())
    u0 = np.array([config.u0_fraction * a.width for a in sequence])
    dg = np.array([a.sensitivity for a in sequence])
    alpha_i = alpha / n
    used = []
    trace = []
    output = None
    try:
        for i, atomic in enumerate(sequence):
            op = operators[i - 1] if i else None
            beta_left = beta - math.fsum(used)
            if op == "AND" and not output:
                trace.append(SubQueryTrace(atomic.id, beta_left, 0.0, 0.0, 0, 0.0, True))
                continue
            share = beta_split_tree(
                ApportionInput(u0[i:], dg[i:], np.ones(n - i), beta_left)
            ).betas[0]
            outcome = ddpwlm(
                atomic, bindings[atomic.id], u0[i], share, alpha_i, accountant, rng, config
            )
            used.append(outcome.beta_used)
            trace.append(
                SubQueryTrace(
                    atomic.id,
                    beta_left,
                    share,
                    outcome.beta_used,
                    outcome.iterations,
                    outcome.epsilon,
                )
            )
            if op is None:
                output = outcome.reported
            elif op == "AND":
                output = output & outcome.reported
            else:
                output = output | outcome.reported
    except QueryDenied as denied:
        return ProbeResult(
            answer=None,
            epsilon=accountant.epsilon_spent,
            denied=True,
            reason=denied.reason,
            ledger=accountant.ledger.copy(),
            trace=tuple(trace),
        )
    return ProbeResult(
        answer=frozenset(output),
        epsilon=accountant.epsilon_spent,
        leaf_epsilons={i: t.epsilon for i, t in enumerate(trace)},
        ledger=accountant.ledger.copy(),
        trace=tuple(trace),
    )
