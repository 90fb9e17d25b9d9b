"""
Two-phase probing of a compiled decision-support query: a low-cost first
pass that meets the false-negative bound, followed by targeted reruns that
bring the estimated false positives under the false-positive bound.
"""

__author__ = "dpds developers"

__all__ = [
    "LeafState",
    "FpEstimate",
    "ProbeConfig",
    "ProbeResult",
    "QueryDenied",
    "probe",
    "phase_one",
    "traverse",
    "estimate_fps",
    "phase_two",
    "find_u_opt",
    "naive",
]

from dataclasses import dataclass, field

import numpy as np

from .apportion import (
    ApportionInput,
    beta_split_tree,
    beta_split_equal,
    alpha_split,
    predicted_epsilon,
)
from .mechanisms import (
    RandomSource,
    PrivacyAccountant,
    Denied,
    tslm,
    tslm_epsilon,
)
from .query import And, Or
from .util import orient, threshold_vector, check_open_interval

BUDGET_EXCEEDED = "BudgetExceeded"
FP_BOUND_UNMET = "FpBoundUnmet"


class QueryDenied(Exception):
    """Raised inside a run when the query must be refused."""

    def __init__(self, reason, states=None):
        super().__init__(reason)
        self.reason = reason
        # leaf states charged before the refusal, when known
        self.states = [] if states is None else states


@dataclass(frozen=True)
class ProbeConfig:
    """
    Tuning of the probing algorithms.

    Attributes
    ----------
    phase1_u_fraction : float
                        first-pass threshold shift as a fraction of each
                        atomic's value-range width, in (0, 1].
    phase_split       : float
                        share of the false-negative bound spent by the first
                        pass, in (0, 1); the rest funds reruns.
    naive_u_fraction  : float
                        shift fraction of the single-pass baseline.
    equal_split       : bool
                        split the first-pass bound equally over occurrences
                        instead of optimally.
    skip_conjunctions : bool
                        leave the right side of a conjunction unexecuted when
                        the left side reports nothing.
    """

    phase1_u_fraction: float = 0.3
    phase_split: float = 0.5
    naive_u_fraction: float = 0.12
    equal_split: bool = False
    skip_conjunctions: bool = True

    def __post_init__(self):
        for name in ("phase1_u_fraction", "naive_u_fraction"):
            value = getattr(self, name)
            if not 0 < value <= 1:
                raise ValueError("%s must lie in (0, 1], got %r." % (name, value))
        check_open_interval("phase_split", self.phase_split, 0.0, 1.0)


@dataclass
class LeafState:
    """
    Mutable per-occurrence state of a leaf during one probing run.

    Attributes
    ----------
    slot       : int
                 pre-order position of the occurrence.
    atomic     : AtomicQuery
    exact      : GroupAggregates
    thresholds : array
                 (k, ), per-predicate thresholds.
    u          : float
                 current threshold shift.
    beta       : float
                 current false-negative bound.
    flag       : bool
                 True when the leaf must (re-)execute on the next traversal.
    noisy      : array or None
                 noisy aggregates of the latest run.
    reported   : frozenset
                 predicates reported by the latest run.
    epsilon    : float
                 accumulated cost of every run of this occurrence.
    runs       : list
                 (u, beta, epsilon) of each run.
    f_max      : float or None
                 false-positive allowance fixed at the first estimate.
    """

    slot: int
    atomic: object
    exact: object
    thresholds: np.ndarray
    u: float
    beta: float
    flag: bool = True
    noisy: object = None
    reported: frozenset = frozenset()
    epsilon: float = 0.0
    runs: list = field(default_factory=list)
    f_max: object = None

    @property
    def executed(self):
        return self.noisy is not None

    @property
    def k(self):
        return self.exact.k

    def record(self, outcome):
        self.noisy = outcome.noisy
        self.reported = outcome.reported
        self.epsilon += outcome.epsilon
        self.runs.append((outcome.u, outcome.beta, outcome.epsilon))
        self.flag = False


@dataclass(frozen=True)
class FpEstimate:
    """
    Estimated false positives of one leaf run.

    Attributes
    ----------
    f_est : float
            estimated false positives.
    r_est : float
            estimated true negatives.
    o_pp  : frozenset
            predicates whose noisy value clears the unshifted threshold.
    o_p   : frozenset
            predicates whose noisy value clears the shifted threshold.
    o_n   : frozenset
            predicates whose noisy value falls below the shifted threshold.
    """

    f_est: float
    r_est: float
    o_pp: frozenset
    o_p: frozenset
    o_n: frozenset


@dataclass
class ProbeResult:
    """
    Outcome of a probing run.

    Attributes
    ----------
    answer            : frozenset or None
                        reported predicate indices; None when denied.
    epsilon           : float
                        total privacy cost spent, including runs made before
                        a denial.
    denied            : bool
    reason            : str or None
                        "BudgetExceeded" or "FpBoundUnmet" when denied.
    leaf_epsilons     : dict
                        occurrence slot -> accumulated cost.
    ledger            : array
                        (k, ), per-predicate accumulated cost.
    leaves            : list
                        final LeafState of every occurrence.
    estimates         : dict
                        occurrence slot -> latest FpEstimate.
    predicted_epsilon : float
                        cost of the first pass as planned by apportionment.
    trace             : tuple
                        per sub-query records of sequential runs.
    """

    answer: object
    epsilon: float
    denied: bool = False
    reason: object = None
    leaf_epsilons: dict = field(default_factory=dict)
    ledger: object = None
    leaves: list = field(default_factory=list)
    estimates: dict = field(default_factory=dict)
    predicted_epsilon: float = float("nan")
    trace: tuple = ()

    @property
    def answered(self):
        return not self.denied

    def epsilon_by_atomic(self):
        totals = {}
        for state in self.leaves:
            totals[state.atomic.id] = totals.get(state.atomic.id, 0.0) + state.epsilon
        return totals


def _result(answer, accountant, states, estimates=None, reason=None, predicted=float("nan")):
    return ProbeResult(
        answer=None if reason is not None else frozenset(answer),
        epsilon=accountant.epsilon_spent,
        denied=reason is not None,
        reason=reason,
        leaf_epsilons={s.slot: s.epsilon for s in states},
        ledger=accountant.ledger.copy(),
        leaves=list(states),
        estimates=dict(estimates or {}),
        predicted_epsilon=predicted,
    )


def _check_bindings(compiled, bindings):
    if not compiled.is_bound:
        raise ValueError("the compiled query is not bound to atomic query declarations.")
    missing = [i for i in compiled.ids if i not in bindings]
    if missing:
        raise ValueError("no aggregates bound for: %s." % ", ".join(missing))
    sizes = {bindings[i].k for i in compiled.ids}
    if len(sizes) != 1:
        raise ValueError("aggregates of one query must share a predicate domain.")
    return sizes.pop()


def _shifts(compiled, fraction):
    return np.array([fraction * a.width for a in compiled.atomics])


def _apportion(compiled, u, beta, equal_split=False):
    o = compiled.occurrence_vector
    if equal_split:
        return beta_split_equal(o, beta)
    dg = np.array([a.sensitivity for a in compiled.atomics])
    return beta_split_tree(ApportionInput(u, dg, o, beta)).betas


def _leaf_states(compiled, bindings, u, betas):
    states = []
    for leaf in compiled.leaves:
        i = compiled.index(leaf.id)
        atomic = compiled.atomics[i]
        exact = bindings[leaf.id]
        states.append(
            LeafState(
                slot=leaf.slot,
                atomic=atomic,
                exact=exact,
                thresholds=threshold_vector(atomic.thresholds, exact.k),
                u=float(u[i]),
                beta=float(betas[i]),
            )
        )
    return states


def traverse(node, states, accountant, rng, skip_conjunctions=True):
    """
    Evaluate a compiled tree over noisy leaf outputs.

    Flagged leaves run the threshold-shift Laplace mechanism after their
    cost is charged; unflagged leaves reuse their latest release.

    Parameters
    ----------
    node              : Leaf, And or Or
    states            : list
                        LeafState indexed by occurrence slot.
    accountant        : PrivacyAccountant
    rng               : RandomSource
    skip_conjunctions : bool
                        return an empty conjunction without executing its
                        right side when the left side is empty.

    Returns
    -------
    output            : frozenset
                        predicate indices reported for ``node``.

    Raises
    ------
    QueryDenied
        when a charge exceeds the budget.
    """
    if isinstance(node, And):
        left = traverse(node.left, states, accountant, rng, skip_conjunctions)
        if not left and skip_conjunctions:
            return frozenset()
        return left & traverse(node.right, states, accountant, rng, skip_conjunctions)
    if isinstance(node, Or):
        left = traverse(node.left, states, accountant, rng, skip_conjunctions)
        return left | traverse(node.right, states, accountant, rng, skip_conjunctions)
    state = states[node.slot]
    if state.flag:
        epsilon = tslm_epsilon(state.atomic.sensitivity, state.beta, state.u)
        verdict = accountant.charge(None, epsilon, label=state.slot)
        if isinstance(verdict, Denied):
            raise QueryDenied(verdict.reason)
        state.record(tslm(state.atomic, state.exact, state.u, state.beta, rng, state.thresholds))
    return state.reported


def _as_mask(indices, k):
    mask = np.zeros(k, dtype=bool)
    if indices:
        mask[np.fromiter(indices, dtype=int)] = True
    return mask


def _fp_masks(leaf, o_one, u=None):
    u = leaf.u if u is None else u
    g = orient(leaf.noisy, leaf.atomic.direction)
    c = orient(leaf.thresholds, leaf.atomic.direction)
    o_pp = g > c
    o_p = g > c - u
    o_n = g < c - u
    if o_one is not None:
        combined = _as_mask(o_one, leaf.k)
        o_pp &= combined
        o_p &= combined
        o_n &= ~combined
    return g, c, o_pp, o_p, o_n


def estimate_fps(leaf, o_one=None):
    """
    Estimate false positives and true negatives of a leaf's latest run.

    Predicates excluded from the combined output ``o_one`` cannot be
    reported false positives and are dropped from the positive sets;
    predicates in ``o_one`` are dropped from the negative set.

    Parameters
    ----------
    leaf  : LeafState
            an executed leaf.
    o_one : iterable, optional
            combined output of the whole query; no pruning when omitted.

    Returns
    -------
    estimate : FpEstimate
               ``f_est = |o_p - o_pp| + |o_pp| * beta`` and
               ``r_est = (|o_n| - beta * k) / (1 - beta)``.
    """
    if not leaf.executed:
        raise ValueError("leaf %d has not been executed." % leaf.slot)
    _, _, o_pp, o_p, o_n = _fp_masks(leaf, o_one)
    n_pp = int(o_pp.sum())
    f_est = int((o_p & ~o_pp).sum()) + n_pp * leaf.beta
    r_est = (int(o_n.sum()) - leaf.beta * leaf.k) / (1.0 - leaf.beta)
    return FpEstimate(
        f_est=f_est,
        r_est=r_est,
        o_pp=frozenset(np.flatnonzero(o_pp).tolist()),
        o_p=frozenset(np.flatnonzero(o_p).tolist()),
        o_n=frozenset(np.flatnonzero(o_n).tolist()),
    )


def find_u_opt(leaf, f_max, o_one=None):
    """
    Largest threshold shift whose estimated false positives fit ``f_max``.

    Candidate shifts are the gaps ``c_j - g_j`` of the uncertain predicates
    (reported, yet below the unshifted threshold); a predicate whose gap
    equals the shift is no longer reported.

    Parameters
    ----------
    leaf  : LeafState
            an executed leaf.
    f_max : float
            false-positive allowance.
    o_one : iterable, optional
            combined output used for pruning.

    Returns
    -------
    u_opt : float or None
            the current shift when it already fits, otherwise the largest
            fitting candidate; None when no positive shift fits.
    """
    if estimate_fps(leaf, o_one).f_est <= f_max:
        return leaf.u
    g, c, o_pp, o_p, _ = _fp_masks(leaf, o_one)
    base = int(o_pp.sum()) * leaf.beta
    if base > f_max:
        return None
    gaps = (c - g)[o_p & ~o_pp]
    for candidate in np.unique(gaps[gaps > 0])[::-1]:
        if np.count_nonzero(gaps < candidate) + base <= f_max:
            return float(candidate)
    return None


def phase_one(compiled, bindings, beta, accountant, rng, config=None):
    """
    First pass: apportion ``beta * phase_split`` over the atomics at the
    configured shift and traverse the tree once.

    Returns
    -------
    states : list
             LeafState per occurrence.
    output : frozenset
             combined output of the pass.

    Raises
    ------
    QueryDenied
        when the budget is exceeded; its ``states`` hold the leaves as
        they stood, including runs already charged.
    """
    config = ProbeConfig() if config is None else config
    _check_bindings(compiled, bindings)
    u = _shifts(compiled, config.phase1_u_fraction)
    betas = _apportion(compiled, u, beta * config.phase_split, config.equal_split)
    states = _leaf_states(compiled, bindings, u, betas)
    try:
        output = traverse(compiled.tree, states, accountant, rng, config.skip_conjunctions)
    except QueryDenied as denied:
        raise QueryDenied(denied.reason, states) from None
    return states, output


def phase_two(compiled, states, output, beta, alpha, accountant, rng, config=None):
    """
    Second pass: rerun every leaf whose estimated false positives exceed
    its allowance ``alpha_i * max(r_est, 0)`` at the largest fitting shift,
    funded by ``beta * (1 - phase_split)``. A leaf with no estimated
    negatives (``r_est <= 0``) meets its allowance as it stands.

    Returns
    -------
    result : ProbeResult
             denied with "FpBoundUnmet" when no shift fits or a rerun
             leaf still exceeds its allowance, and with "BudgetExceeded"
             when a rerun exceeds the budget.
    """
    config = ProbeConfig() if config is None else config
    alphas = alpha_split(alpha, compiled.n, compiled.occurrence_vector)
    u = _shifts(compiled, config.phase1_u_fraction)
    betas = _apportion(compiled, u, beta * (1.0 - config.phase_split), config.equal_split)
    estimates = {}
    runs_before = {}
    for state in states:
        runs_before[state.slot] = len(state.runs)
        if not state.executed:
            continue
        i = compiled.index(state.atomic.id)
        estimate = estimate_fps(state, output)
        estimates[state.slot] = estimate
        state.f_max = alphas[i] * max(estimate.r_est, 0.0)
        # no estimated negatives leaves nothing to report falsely
        if estimate.r_est <= 0 or estimate.f_est <= state.f_max:
            continue
        u_opt = find_u_opt(state, state.f_max, output)
        if u_opt is None:
            return _result(None, accountant, states, estimates, FP_BOUND_UNMET)
        state.u, state.beta, state.flag = u_opt, float(betas[i]), True
    if any(state.flag and state.executed for state in states):
        try:
            output = traverse(compiled.tree, states, accountant, rng, config.skip_conjunctions)
        except QueryDenied as denied:
            return _result(None, accountant, states, estimates, denied.reason)
        for state in states:
            if len(state.runs) == runs_before[state.slot]:
                continue
            estimate = estimate_fps(state, output)
            estimates[state.slot] = estimate
            if state.f_max is None:
                i = compiled.index(state.atomic.id)
                state.f_max = alphas[i] * max(estimate.r_est, 0.0)
            if estimate.r_est > 0 and estimate.f_est > state.f_max:
                return _result(None, accountant, states, estimates, FP_BOUND_UNMET)
    return _result(output, accountant, states, estimates)


def _planned_epsilon(compiled, u, betas):
    o = compiled.occurrence_vector
    dg = np.array([a.sensitivity for a in compiled.atomics])
    return predicted_epsilon(ApportionInput(u, dg, o, float(np.dot(o, betas))), betas)


def _check_bounds(beta, alpha, epsilon_max):
    check_open_interval("beta", beta, 0.0, 0.5)
    if alpha is not None:
        check_open_interval("alpha", alpha, 0.0, 1.0)
    if epsilon_max < 0:
        raise ValueError("epsilon_max must be non-negative, got %r." % epsilon_max)


def probe(compiled, bindings, beta, alpha, epsilon_max, config=None, rng=None):
    """
    Answer a compiled query with false-negative rate at most ``beta`` and
    false-positive rate at most ``alpha``, spending at most ``epsilon_max``.

    Parameters
    ----------
    compiled    : CompiledQuery
                  bound to its atomic queries.
    bindings    : dict
                  atomic id -> GroupAggregates over one predicate domain.
    beta        : float
                  false-negative bound in (0, 0.5).
    alpha       : float
                  false-positive bound in (0, 1).
    epsilon_max : float
                  non-negative privacy budget.
    config      : ProbeConfig, optional
    rng         : RandomSource, optional

    Returns
    -------
    result      : ProbeResult
                  a denied result releases no answer.

    Examples
    --------
    >>> import numpy as np
    >>> from dpds.query import AtomicQuery, AggregateSpec, parse_query, minimize_tree
    >>> from dpds.data import GroupAggregates
    >>> from dpds.mechanisms import RandomSource
    >>> from dpds.probe import probe, ProbeConfig
    >>> q = AtomicQuery("Q1", AggregateSpec("COUNT_STAR"), thresholds=500,
    ...                 value_range=(0, 1000))
    >>> cq = minimize_tree(parse_query("Q1"), {"Q1": q})
    >>> aggs = {"Q1": GroupAggregates("Q1", np.array([0.0, 1000.0, 0.0, 1000.0]))}
    >>> res = probe(cq, aggs, 0.05, 0.1, 10.0, ProbeConfig(phase1_u_fraction=0.05),
    ...             RandomSource(3))
    >>> sorted(res.answer)
    [1, 3]
    """
    config = ProbeConfig() if config is None else config
    rng = RandomSource() if rng is None else rng
    _check_bounds(beta, alpha, epsilon_max)
    k = _check_bindings(compiled, bindings)
    accountant = PrivacyAccountant(epsilon_max, k)
    u = _shifts(compiled, config.phase1_u_fraction)
    planned = _planned_epsilon(
        compiled, u, _apportion(compiled, u, beta * config.phase_split, config.equal_split)
    )
    try:
        states, output = phase_one(compiled, bindings, beta, accountant, rng, config)
    except QueryDenied as denied:
        return _result(None, accountant, denied.states, None, denied.reason, planned)
    result = phase_two(compiled, states, output, beta, alpha, accountant, rng, config)
    result.predicted_epsilon = planned
    return result


def naive(compiled, bindings, beta, epsilon_max, u_fraction=0.12, rng=None, config=None):
    """
    Single-pass baseline: every occurrence gets ``beta / sum(o)`` at shift
    ``u_fraction * width``, with no false-positive control.

    Returns
    -------
    result : ProbeResult
    """
    config = ProbeConfig() if config is None else config
    rng = RandomSource() if rng is None else rng
    _check_bounds(beta, None, epsilon_max)
    if not 0 < u_fraction <= 1:
        raise ValueError("u_fraction must lie in (0, 1], got %r." % u_fraction)
    k = _check_bindings(compiled, bindings)
    accountant = PrivacyAccountant(epsilon_max, k)
    u = _shifts(compiled, u_fraction)
    betas = beta_split_equal(compiled.occurrence_vector, beta)
    planned = _planned_epsilon(compiled, u, betas)
    states = _leaf_states(compiled, bindings, u, betas)
    try:
        output = traverse(compiled.tree, states, accountant, rng, config.skip_conjunctions)
    except QueryDenied as denied:
        return _result(None, accountant, states, None, denied.reason, planned)
    return _result(output, accountant, states, predicted=planned)
