"""
Decision-support query model: atomic threshold queries, boolean trees over
them, a parser for the textual query language and two-level minimization.
"""

__author__ = "dpds developers"

__all__ = [
    "Leaf",
    "And",
    "Or",
    "AggregateSpec",
    "Condition",
    "AtomicQuery",
    "CompiledQuery",
    "QuerySyntaxError",
    "parse_query",
    "format_query",
    "minimize_tree",
    "evaluate_truth",
    "leaf_ids",
    "compile_tree",
    "bind_query",
]

import re
import itertools
from collections.abc import Mapping
from dataclasses import dataclass, field, replace

import numpy as np

AGGREGATE_KINDS = ("COUNT_STAR", "COUNT_DISTINCT", "SUM", "AVG")
COMPARATORS = ("=", "!=", "<", "<=", ">", ">=")
DIRECTIONS = ("GREATER", "LESS")
MAX_MINIMIZE_LEAVES = 16


@dataclass(frozen=True)
class Leaf:
    """
    Reference to an atomic query by id.

    ``slot`` is the pre-order position of this occurrence inside its tree
    and takes no part in equality.
    """

    id: str
    slot: int = field(default=-1, compare=False)


@dataclass(frozen=True)
class And:
    left: object
    right: object


@dataclass(frozen=True)
class Or:
    left: object
    right: object


@dataclass(frozen=True)
class AggregateSpec:
    """
    Aggregate computed per predicate.

    Parameters
    ----------
    kind        : str
                  one of "COUNT_STAR", "COUNT_DISTINCT", "SUM", "AVG".
    column      : str or None
                  aggregated column; None for COUNT_STAR.
    sensitivity : float
                  L1 sensitivity of the aggregate per predicate. Counts
                  always have sensitivity 1; SUM and AVG require a declared
                  positive value.
    """

    kind: str
    column: object = None
    sensitivity: float = 1.0

    def __post_init__(self):
        if self.kind not in AGGREGATE_KINDS:
            raise ValueError(
                "aggregate kind must be one of %s, got %r." % (AGGREGATE_KINDS, self.kind)
            )
        if self.kind == "COUNT_STAR":
            if self.column is not None:
                raise ValueError("COUNT_STAR takes no column.")
        elif self.column is None:
            raise ValueError("%s requires a column." % self.kind)
        if not self.sensitivity > 0:
            raise ValueError("sensitivity must be positive, got %r." % self.sensitivity)
        if self.kind in ("COUNT_STAR", "COUNT_DISTINCT") and self.sensitivity != 1:
            raise ValueError("count aggregates have sensitivity 1.")


@dataclass(frozen=True)
class Condition:
    """A single filter condition ``column op literal``."""

    column: str
    op: str
    literal: object

    def __post_init__(self):
        op = {"==": "=", "<>": "!="}.get(self.op, self.op)
        if op not in COMPARATORS:
            raise ValueError("comparator must be one of %s, got %r." % (COMPARATORS, self.op))
        object.__setattr__(self, "op", op)


@dataclass(frozen=True)
class AtomicQuery:
    """
    Threshold query asking, for every predicate of a domain, whether the
    aggregate lies strictly beyond a threshold.

    Parameters
    ----------
    id          : str
                  identifier referenced by boolean expressions.
    aggregate   : AggregateSpec
                  aggregate computed per predicate.
    filter      : tuple
                  conjunction of Condition, applied before grouping.
    thresholds  : float, sequence or mapping
                  scalar threshold broadcast to every predicate, or one
                  threshold per predicate index.
    direction   : str
                  "GREATER" (aggregate > threshold) or "LESS".
    value_range : tuple
                  (low, high), public bounds of the aggregate with high > low.

    Attributes
    ----------
    width       : float
                  high - low.
    sensitivity : float
                  sensitivity of the aggregate.

    Examples
    --------
    >>> from dpds.query import AtomicQuery, AggregateSpec
    >>> q = AtomicQuery("Q1", AggregateSpec("COUNT_STAR"), thresholds=50,
    ...                 value_range=(0, 100))
    >>> q.width
    100.0
    """

    id: str
    aggregate: AggregateSpec
    filter: tuple = ()
    thresholds: object = 0.0
    direction: str = "GREATER"
    value_range: tuple = (0.0, 1.0)

    def __post_init__(self):
        if self.direction not in DIRECTIONS:
            raise ValueError(
                "direction must be 'GREATER' or 'LESS', got %r." % self.direction
            )
        low, high = (float(v) for v in self.value_range)
        if not high > low:
            raise ValueError(
                "value range of %s must have high > low, got %r." % (self.id, self.value_range)
            )
        object.__setattr__(self, "value_range", (low, high))
        object.__setattr__(self, "filter", tuple(self.filter))
        if isinstance(self.thresholds, Mapping):
            values = list(self.thresholds.values())
        else:
            values = np.atleast_1d(np.asarray(self.thresholds, dtype=float)).tolist()
        for c in values:
            if not low <= float(c) <= high:
                raise ValueError(
                    "threshold %r of %s lies outside its value range [%s, %s]."
                    % (c, self.id, low, high)
                )

    @property
    def width(self):
        return self.value_range[1] - self.value_range[0]

    @property
    def sensitivity(self):
        return float(self.aggregate.sensitivity)


@dataclass(frozen=True)
class CompiledQuery:
    """
    A minimized boolean tree bound to its distinct atomic queries.

    Attributes
    ----------
    tree        : Leaf, And or Or
                  minimized tree; leaf slots number occurrences in pre-order.
    atomics     : tuple
                  distinct atomic queries (or bare ids when unbound) in
                  order of first appearance.
    occurrences : dict
                  atomic id -> number of leaves referencing it (o_i >= 1).
    """

    tree: object
    atomics: tuple
    occurrences: dict

    @property
    def ids(self):
        return tuple(a if isinstance(a, str) else a.id for a in self.atomics)

    @property
    def n(self):
        return len(self.atomics)

    @property
    def leaves(self):
        return list(_leaves(self.tree))

    @property
    def occurrence_vector(self):
        return np.array([self.occurrences[i] for i in self.ids], dtype=float)

    @property
    def is_bound(self):
        return all(isinstance(a, AtomicQuery) for a in self.atomics)

    def index(self, atomic_id):
        return self.ids.index(atomic_id)

    def atomic(self, atomic_id):
        return self.atomics[self.index(atomic_id)]


class QuerySyntaxError(ValueError):
    """
    Malformed query expression.

    Attributes
    ----------
    position : int
               character offset at which the error was detected.
    """

    def __init__(self, message, position):
        super().__init__("%s (at position %d)" % (message, position))
        self.position = position


_TOKEN = re.compile(r"\s*(?:(?P<paren>[()])|(?P<word>[A-Za-z_][A-Za-z0-9_.\-]*))")
# binding power of each operator; both are left-associative
_PRECEDENCE = {"OR": 0, "AND": 1}
_NODES = {"OR": Or, "AND": And}


def _tokenize(text):
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].isspace():
            break
        match = _TOKEN.match(text, pos)
        if match is None:
            start = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise QuerySyntaxError("unexpected character %r" % text[start], start)
        start = match.start(match.lastgroup)
        value = match.group(match.lastgroup)
        if match.lastgroup == "word" and value.upper() in _PRECEDENCE:
            tokens.append(("op", value.upper(), start))
        elif match.lastgroup == "word":
            tokens.append(("atom", value, start))
        else:
            tokens.append(("paren", value, start))
        pos = match.end()
    return tokens


class _Parser:
    def __init__(self, text, known):
        self.text = text
        self.tokens = _tokenize(text)
        self.known = known
        self.pos = 0

    def peek(self):
        if self.pos < len(self.tokens):
            return self.tokens[self.pos]
        return None

    def advance(self):
        token = self.tokens[self.pos]
        self.pos += 1
        return token

    def parse(self):
        if not self.tokens:
            raise QuerySyntaxError("empty expression", 0)
        tree = self.expression(0)
        token = self.peek()
        if token is not None:
            raise QuerySyntaxError("unexpected token %r" % token[1], token[2])
        return tree

    def expression(self, min_prec):
        lhs = self.atom()
        while True:
            token = self.peek()
            if token is None or token[0] != "op":
                return lhs
            prec = _PRECEDENCE[token[1]]
            if prec < min_prec:
                return lhs
            self.advance()
            rhs = self.expression(prec + 1)
            lhs = _NODES[token[1]](lhs, rhs)

    def atom(self):
        token = self.peek()
        if token is None:
            raise QuerySyntaxError("unexpected end of expression", len(self.text))
        kind, value, start = self.advance()
        if kind == "paren" and value == "(":
            inner = self.expression(0)
            closing = self.peek()
            if closing is None or closing[1] != ")":
                where = len(self.text) if closing is None else closing[2]
                raise QuerySyntaxError("expected closing parenthesis", where)
            self.advance()
            return inner
        if kind == "atom":
            if self.known is not None and value not in self.known:
                raise QuerySyntaxError("unknown atomic query %r" % value, start)
            return Leaf(value)
        raise QuerySyntaxError("unexpected token %r" % value, start)


def _leaves(tree):
    if isinstance(tree, Leaf):
        yield tree
    else:
        yield from _leaves(tree.left)
        yield from _leaves(tree.right)


def _number(tree, counter=None):
    counter = itertools.count() if counter is None else counter
    if isinstance(tree, Leaf):
        return Leaf(tree.id, next(counter))
    left = _number(tree.left, counter)
    return type(tree)(left, _number(tree.right, counter))


def leaf_ids(tree):
    """
    Distinct atomic ids of a tree in order of first appearance.

    Examples
    --------
    >>> from dpds.query import parse_query, leaf_ids
    >>> leaf_ids(parse_query("Q2 OR Q1 AND Q2"))
    ['Q2', 'Q1']
    """
    seen = {}
    for leaf in _leaves(tree):
        seen.setdefault(leaf.id, None)
    return list(seen)


def parse_query(text, atomics=None):
    """
    Parse a boolean expression over atomic query ids.

    AND binds tighter than OR, both associate to the left and parentheses
    group. Keywords are case-insensitive.

    Parameters
    ----------
    text    : str
              expression such as ``"(Q1 OR Q2) AND Q3"``.
    atomics : iterable, optional
              declared ids (or a mapping keyed by id); when given, unknown
              ids are a syntax error.

    Returns
    -------
    tree    : Leaf, And or Or
              leaves carry pre-order slots.

    Examples
    --------
    >>> from dpds.query import parse_query
    >>> parse_query("Q1 OR Q2 AND Q3") == parse_query("Q1 OR (Q2 AND Q3)")
    True
    """
    known = None if atomics is None else set(atomics)
    return _number(_Parser(text, known).parse())


def format_query(tree):
    """
    Render a tree with the minimum parentheses needed to parse back to the
    same tree.

    Examples
    --------
    >>> from dpds.query import parse_query, format_query
    >>> format_query(parse_query("(Q1 OR Q2) AND (Q3)"))
    '(Q1 OR Q2) AND Q3'
    """
    if isinstance(tree, Leaf):
        return tree.id
    left = format_query(tree.left)
    right = format_query(tree.right)
    if isinstance(tree, And):
        if isinstance(tree.left, Or):
            left = "(%s)" % left
        if not isinstance(tree.right, Leaf):
            right = "(%s)" % right
        return "%s AND %s" % (left, right)
    if isinstance(tree.right, Or):
        right = "(%s)" % right
    return "%s OR %s" % (left, right)


def evaluate_truth(tree, assignment):
    """
    Evaluate a tree under a truth assignment.

    Parameters
    ----------
    tree       : Leaf, And or Or
    assignment : mapping
                 atomic id -> bool, or -> boolean array for elementwise
                 evaluation over many predicates at once.

    Returns
    -------
    value      : bool or array

    Examples
    --------
    >>> from dpds.query import parse_query, evaluate_truth
    >>> evaluate_truth(parse_query("Q1 AND Q2"), {"Q1": True, "Q2": False})
    False
    """
    if isinstance(tree, Leaf):
        try:
            return assignment[tree.id]
        except KeyError:
            raise KeyError("no truth value assigned to atomic query %r." % tree.id)
    left = evaluate_truth(tree.left, assignment)
    right = evaluate_truth(tree.right, assignment)
    if isinstance(tree, And):
        return np.logical_and(left, right) if isinstance(left, np.ndarray) else left and right
    return np.logical_or(left, right) if isinstance(left, np.ndarray) else left or right


def _truth_table(tree, ids):
    n = len(ids)
    rows = np.arange(2 ** n)
    columns = {atomic: ((rows >> i) & 1).astype(bool) for i, atomic in enumerate(ids)}
    return np.asarray(evaluate_truth(tree, columns), dtype=bool)


def _prime_implicants(on_set, n):
    # cubes are (value, mask) pairs; mask bits are don't-cares
    level = {(int(m), 0) for m in on_set}
    primes = set()
    while level:
        merged = set()
        next_level = set()
        for value, mask in level:
            for i in range(n):
                bit = 1 << i
                if mask & bit or not value & bit:
                    continue
                partner = (value ^ bit, mask)
                if partner in level:
                    next_level.add((value ^ bit, mask | bit))
                    merged.add((value, mask))
                    merged.add(partner)
        primes |= level - merged
        level = next_level
    return primes


def _covers(cube, minterm):
    value, mask = cube
    return (minterm & ~mask) == value


def _cost(cube, n):
    return n - bin(cube[1]).count("1")


def _select_cover(primes, on_set, n):
    primes = sorted(primes, key=lambda c: (_cost(c, n), c[1], c[0]))
    chart = {m: [p for p in primes if _covers(p, m)] for m in on_set}
    chosen = []
    for m, covering in chart.items():
        if len(covering) == 1 and covering[0] not in chosen:
            chosen.append(covering[0])
    remaining = [m for m in on_set if not any(_covers(p, m) for p in chosen)]
    if remaining:
        candidates = [p for p in primes if p not in chosen]
        best = None
        for size in range(1, len(candidates) + 1):
            for combo in itertools.combinations(candidates, size):
                if all(any(_covers(p, m) for p in combo) for m in remaining):
                    cost = sum(_cost(p, n) for p in combo)
                    if best is None or cost < best[0]:
                        best = (cost, combo)
            if best is not None:
                break
        chosen.extend(best[1])
    return chosen


def _literals(cube, ids):
    value, mask = cube
    literals = []
    for i, atomic in enumerate(ids):
        if mask & (1 << i):
            continue
        if not value & (1 << i):
            # negations cannot be expressed as a threshold-query tree
            raise ValueError("expression is not monotone in %r." % atomic)
        literals.append(atomic)
    return literals


def _chain(node_type, items):
    tree = items[-1]
    for item in reversed(items[:-1]):
        tree = node_type(item, tree)
    return tree


def _two_level(tree, ids, dual):
    table = _truth_table(tree, ids)
    if dual:
        # f^d(x) = not f(not x); its products are the clauses of f
        table = ~table[::-1]
    on_set = np.flatnonzero(table).tolist()
    if not on_set:
        raise ValueError("expression is constant false.")
    cover = _select_cover(_prime_implicants(on_set, len(ids)), on_set, len(ids))
    terms = sorted((_literals(c, ids) for c in cover), key=lambda t: (len(t), [ids.index(a) for a in t]))
    inner, outer = (Or, And) if dual else (And, Or)
    return _chain(outer, [_chain(inner, [Leaf(a) for a in term]) for term in terms])


def minimize_tree(tree, atomics=None, form="sop"):
    """
    Compile a boolean tree to a minimal two-level realization.

    Parameters
    ----------
    tree    : Leaf, And or Or
    atomics : mapping, optional
              atomic id -> AtomicQuery, used to bind the compiled query.
    form    : str
              "sop" for a minimal sum of products, "pos" for a minimal
              product of sums, "auto" for whichever has fewer leaves
              (sum of products on ties).

    Returns
    -------
    compiled : CompiledQuery
               the minimized tree re-binarized right-leaning.

    Notes
    -----
    Prime implicants are produced with the Quine-McCluskey procedure and
    the cover is completed by exhaustive search after essential primes.
    Trees with more than 16 distinct atomics are rejected.

    Examples
    --------
    >>> from dpds.query import parse_query, minimize_tree, format_query
    >>> cq = minimize_tree(parse_query("(Q1 OR Q2) AND (Q1 OR Q3)"))
    >>> format_query(cq.tree)
    'Q1 OR Q2 AND Q3'
    >>> cq.occurrences
    {'Q1': 1, 'Q2': 1, 'Q3': 1}
    """
    if form not in ("sop", "pos", "auto"):
        raise ValueError("form must be 'sop', 'pos' or 'auto', got %r." % form)
    ids = leaf_ids(tree)
    if len(ids) > MAX_MINIMIZE_LEAVES:
        raise ValueError(
            "cannot minimize trees with more than %d distinct atomics (got %d)."
            % (MAX_MINIMIZE_LEAVES, len(ids))
        )
    if form == "auto":
        sop = _two_level(tree, ids, dual=False)
        pos = _two_level(tree, ids, dual=True)
        minimized = pos if _size(pos) < _size(sop) else sop
    else:
        minimized = _two_level(tree, ids, dual=form == "pos")
    minimized = _number(minimized)
    return _compile(minimized, atomics)


def _size(tree):
    return sum(1 for _ in _leaves(tree))


def _compile(tree, atomics=None):
    ids = leaf_ids(tree)
    occurrences = {i: 0 for i in ids}
    for leaf in _leaves(tree):
        occurrences[leaf.id] += 1
    if atomics is None:
        bound = tuple(ids)
    else:
        missing = [i for i in ids if i not in atomics]
        if missing:
            raise ValueError("undeclared atomic queries: %s." % ", ".join(missing))
        bound = tuple(atomics[i] for i in ids)
    return CompiledQuery(tree, bound, occurrences)


def compile_tree(tree, atomics=None):
    """
    Bind a tree as written, without minimization.

    Leaf slots are renumbered in pre-order and occurrences counted, so the
    result can be run exactly like the output of ``minimize_tree``.
    """
    return _compile(_number(tree), atomics)


def bind_query(compiled, atomics):
    """Return ``compiled`` bound to the AtomicQuery declarations in ``atomics``."""
    return replace(compiled, atomics=_compile(compiled.tree, atomics).atomics)
