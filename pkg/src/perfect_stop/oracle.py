"""Exhaustive optimality checks of the perfect rule on finite scenario trees.

A scenario tree is a finite outcome set observed at level times
``0 = t_0 < ... < t_D = T``; a scenario is a root-to-leaf path and the
history at level k is the node reached. A stopping rule picks, for every
scenario, the first node on it marked "stop"; distinct rules are exactly the
antichains of nodes that cut every scenario, and their number obeys
``count(node) = 1 + prod(count(child))``.

For a node ``h`` every rule admissible at ``h`` acts on the scenarios through
``h`` like a rule of the subtree rooted at ``h``. The oracle builds, bottom
up, the matrix of estimated regrets (rules x scenarios) of each subtree, so
optimality and Pareto optimality at ``h`` are checked against every rule.

Discrete time needs one condition the continuum gets for free: at the node
where the drawdown first reaches psi it must still be below psi of the
previous level (no "overshoot"), the discrete counterpart of the crossing
equality. Without it the perfect rule can be beaten by stopping one level
earlier; trees are checked for it and generators enforce it.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ParameterError, SizeError

DEFAULT_RULE_CAP = 1_000_000
MAX_DEPTH = 5
MAX_BRANCHING = 3
TOL = 1e-12


class ScenarioTree:
    """Price-labelled tree with per-level times and forecast values.

    Nodes are numbered in depth-first order, root = 0.
    """

    def __init__(self, root: dict, level_times, psi):
        self.level_times = [float(t) for t in level_times]
        self.psi = [float(v) for v in psi]
        self.price = []
        self.parent = []
        self.level = []
        self.children = []

        def add(spec, parent, level):
            idx = len(self.price)
            self.price.append(float(spec["price"]))
            self.parent.append(parent)
            self.level.append(level)
            self.children.append([])
            for child in spec.get("children", ()):
                self.children[idx].append(add(child, idx, level + 1))
            return idx

        add(root, -1, 0)
        self.depth = len(self.level_times) - 1
        self._check_structure()
        n = len(self.price)
        self.running_max = [0.0] * n
        for v in range(n):
            p = self.parent[v]
            self.running_max[v] = self.price[v] if p < 0 else max(self.running_max[p], self.price[v])
        self.drawdown = [self.running_max[v] - self.price[v] for v in range(n)]
        self.leaves_under = [None] * n
        for v in reversed(range(n)):
            if self.children[v]:
                self.leaves_under[v] = [l for c in self.children[v] for l in self.leaves_under[c]]
            else:
                self.leaves_under[v] = [v]

    def _check_structure(self):
        if self.depth < 1:
            raise ParameterError("depth must be at least 1")
        if len(self.psi) != self.depth + 1:
            raise ParameterError("need one psi value per level")
        if self.level_times[0] != 0.0 or any(b <= a for a, b in zip(self.level_times, self.level_times[1:])):
            raise ParameterError("level times must start at 0 and strictly increase")
        if self.psi[-1] != 0.0 or any(b >= a for a, b in zip(self.psi, self.psi[1:])):
            raise ParameterError("psi must strictly decrease to 0 at the last level")
        for v, ch in enumerate(self.children):
            if not ch and self.level[v] != self.depth:
                raise ParameterError(f"leaf {v} at level {self.level[v]}, expected {self.depth}")
            if self.level[v] > self.depth:
                raise ParameterError("tree deeper than its level times")

    # ---- basic queries --------------------------------------------------
    @property
    def n_nodes(self):
        return len(self.price)

    @property
    def leaves(self):
        return self.leaves_under[0]

    @property
    def horizon(self):
        return self.level_times[-1]

    def ancestors(self, v):
        """Nodes from the root down to ``v`` inclusive."""
        out = []
        while v >= 0:
            out.append(v)
            v = self.parent[v]
        return out[::-1]

    def subtree(self, v):
        out = [v]
        for c in self.children[v]:
            out.extend(self.subtree(c))
        return out

    def psi_at(self, v):
        return self.psi[self.level[v]]

    def stop_value(self, v):
        """Estimated regret of stopping at node ``v``."""
        return max(self.drawdown[v], self.psi_at(v))

    def scenario_prices(self, leaf):
        return [self.price[v] for v in self.ancestors(leaf)]

    # ---- assumptions ----------------------------------------------------
    def declining_violations(self):
        """Non-terminal nodes with no continuation staying strictly below their price."""
        below = [False] * self.n_nodes

        def has_declining(v, bound):
            if not self.children[v]:
                return True
            return any(self.price[c] < bound and has_declining(c, bound) for c in self.children[v])

        return [v for v in range(self.n_nodes) if self.children[v] and not has_declining(v, self.price[v])]

    def overshoot_violations(self):
        """First-crossing nodes whose drawdown reaches psi of the previous level."""
        out = []
        for v in range(1, self.n_nodes):
            path = self.ancestors(v)
            if any(self.drawdown[a] >= self.psi_at(a) for a in path[:-1]):
                continue
            if self.drawdown[v] >= self.psi_at(v) and self.drawdown[v] >= self.psi[self.level[v] - 1]:
                out.append(v)
        return out

    def assumption_violations(self):
        out = []
        if not self.drawdown[0] < self.psi[0]:
            out.append("root drawdown must be below psi_0")
        dv = self.declining_violations()
        if dv:
            out.append(f"no strictly declining continuation at nodes {dv}")
        ov = self.overshoot_violations()
        if ov:
            out.append(f"drawdown overshoots the previous forecast at first-crossing nodes {ov}")
        return out

    # ---- serialization --------------------------------------------------
    def node_dict(self, v=0):
        d = {"price": self.price[v]}
        if self.children[v]:
            d["children"] = [self.node_dict(c) for c in self.children[v]]
        return d

    def to_dict(self):
        return {"level_times": self.level_times, "psi": self.psi, "root": self.node_dict()}

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d):
        return cls(d["root"], d["level_times"], d["psi"])

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class TreeStoppingRule:
    """The set of nodes at which the rule stops; it cuts every scenario exactly once."""

    stops: frozenset

    def stop_node(self, tree: ScenarioTree, leaf: int) -> int:
        for v in tree.ancestors(leaf):
            if v in self.stops:
                return v
        raise DomainError(f"rule never stops on scenario ending at {leaf}")

    def describe(self):
        return sorted(self.stops)


def rule_count(tree: ScenarioTree, v: int = 0) -> int:
    if not tree.children[v]:
        return 1
    return 1 + math.prod(rule_count(tree, c) for c in tree.children[v])


def _decode(tree, v, idx):
    if idx == 0:
        return {v}
    idx -= 1
    out = set()
    ch = tree.children[v]
    counts = [rule_count(tree, c) for c in ch]
    digits = []
    for n in reversed(counts):
        digits.append(idx % n)
        idx //= n
    for c, d in zip(ch, reversed(digits)):
        out |= _decode(tree, c, d)
    return out


def _encode(tree, v, stops):
    if v in stops:
        return 0
    ch = tree.children[v]
    if not ch:
        raise DomainError(f"rule does not stop at leaf {v}")
    idx = 0
    for c in ch:
        idx = idx * rule_count(tree, c) + _encode(tree, c, stops)
    return 1 + idx


def enumerate_rules(tree: ScenarioTree, node: int = 0, cap: int = DEFAULT_RULE_CAP):
    """Every distinct adapted rule on the subtree at ``node``."""
    n = rule_count(tree, node)
    if n > cap:
        raise SizeError(f"{n} rules exceed the cap of {cap}")
    return [TreeStoppingRule(frozenset(_decode(tree, node, i))) for i in range(n)]


def _admissible(tree, rule, node):
    return not any(a in rule.stops for a in tree.ancestors(node)[:-1])


def tree_estimated_regret(tree: ScenarioTree, rule: TreeStoppingRule, node: int = 0):
    """Worst-case estimated regret over scenarios through ``node`` and the per-leaf values."""
    if not _admissible(tree, rule, node):
        raise DomainError(f"rule stops before node {node}")
    per_leaf = {leaf: tree.stop_value(rule.stop_node(tree, leaf)) for leaf in tree.leaves_under[node]}
    return max(per_leaf.values()), per_leaf


def perfect_rule_on_tree(tree: ScenarioTree) -> TreeStoppingRule:
    """Stop at the first node whose drawdown reaches the level's forecast."""
    stops = set()

    def walk(v):
        if tree.drawdown[v] >= tree.psi_at(v) or not tree.children[v]:
            stops.add(v)
            return
        for c in tree.children[v]:
            walk(c)

    walk(0)
    return TreeStoppingRule(frozenset(stops))


def regret_matrix(tree: ScenarioTree, node: int = 0, cap: int = DEFAULT_RULE_CAP) -> np.ndarray:
    """Estimated regret of every subtree rule (rows, in ``enumerate_rules`` order) per leaf."""
    n = rule_count(tree, node)
    if n > cap:
        raise SizeError(f"{n} rules exceed the cap of {cap}")
    return _matrices(tree, node, {})[node]


def _matrices(tree, v, out):
    ch = tree.children[v]
    n_leaves = len(tree.leaves_under[v])
    stop_row = np.full((1, n_leaves), tree.stop_value(v))
    if not ch:
        out[v] = stop_row
        return out
    prod = None
    for c in ch:
        _matrices(tree, c, out)
        m = out[c]
        if prod is None:
            prod = m
        else:
            prod = np.hstack([np.repeat(prod, m.shape[0], axis=0), np.tile(m, (prod.shape[0], 1))])
    out[v] = np.vstack([stop_row, prod])
    return out


@dataclass
class VerificationReport:
    passed: bool
    n_nodes: int
    n_rules: int
    assumption_violations: list
    counterexamples: list = field(default_factory=list)
    checked_nodes: list = field(default_factory=list)
    perfect_rules: list = field(default_factory=list)

    def to_dict(self):
        return {
            "passed": self.passed,
            "n_nodes": self.n_nodes,
            "n_rules": self.n_rules,
            "assumption_violations": self.assumption_violations,
            "counterexamples": self.counterexamples,
            "checked_nodes": self.checked_nodes,
            "perfect_rules": self.perfect_rules,
        }


def _dominators(mat, row, tol):
    r = mat[row]
    le = np.all(mat <= r + tol, axis=1)
    lt = np.any(mat < r - tol, axis=1)
    return np.nonzero(le & lt)[0]


def classify(tree: ScenarioTree, rule: TreeStoppingRule, node: int = 0, tol: float = TOL,
             cap: int = DEFAULT_RULE_CAP) -> dict:
    """Is ``rule`` optimal and/or Pareto optimal for the histories through ``node``?"""
    if not _admissible(tree, rule, node):
        raise DomainError(f"rule stops before node {node}")
    mat = regret_matrix(tree, node, cap)
    row = _encode(tree, node, rule.stops)
    worst = mat.max(axis=1)
    return {
        "optimal": bool(worst[row] <= worst.min() + tol),
        "pareto": _dominators(mat, row, tol).size == 0,
        "worst_case": float(worst[row]),
        "best_worst_case": float(worst.min()),
    }


def verify_perfection(tree: ScenarioTree, cap: int = DEFAULT_RULE_CAP, tol: float = TOL) -> VerificationReport:
    """Brute-force check that first-crossing is the unique perfect rule of ``tree``.

    At every node where the crossing rule is admissible: (a) its worst-case
    estimated regret is minimal over all admissible rules, (b) no admissible
    rule Pareto-dominates it, (c) stopping there while the crossing rule
    continues is strictly worse on every scenario (condition B), and
    continuing past its stop is strictly worse on some scenario (condition A).
    Finally (d) the set of rules that satisfy (a) and (b) at all their
    admissible nodes is computed exactly and must be {crossing rule}.
    """
    n_rules = rule_count(tree)
    if n_rules > cap:
        raise SizeError(f"{n_rules} rules exceed the cap of {cap}")
    mats = _matrices(tree, 0, {})
    sigma = perfect_rule_on_tree(tree)
    cex = []
    checked = []

    def note(check, node, rule_row, detail, leaf=None):
        cex.append({
            "check": check,
            "node": node,
            "rule": sorted(_decode(tree, node, int(rule_row))),
            "scenario": None if leaf is None else tree.scenario_prices(leaf),
            "detail": detail,
        })

    for h in range(tree.n_nodes):
        if not _admissible(tree, sigma, h):
            continue
        checked.append(h)
        mat = mats[h]
        leaves = tree.leaves_under[h]
        row = _encode(tree, h, sigma.stops)
        r_sigma = mat[row]
        worst = mat.max(axis=1)
        best = int(np.argmin(worst))
        if worst[row] > worst[best] + tol:
            note("optimal", h, best, f"worst case {worst[best]!r} < perfect rule's {worst[row]!r}")
        dom = _dominators(mat, row, tol)
        if dom.size:
            note("pareto", h, dom[0], "Pareto-dominates the perfect rule")
        if h in sigma.stops:
            # (A): every rule continuing past h is worse on some scenario
            if mat.shape[0] > 1:
                later = mat[1:]
                ok = np.any(later > r_sigma + tol, axis=1)
                if not ok.all():
                    bad = int(np.nonzero(~ok)[0][0]) + 1
                    note("A", h, bad, "continuing past the perfect stop is nowhere worse")
        else:
            # (B): stopping at h is worse than the perfect rule on every scenario
            stop_row = mat[0]
            worse = stop_row > r_sigma + tol
            if not worse.all():
                leaf = leaves[int(np.nonzero(~worse)[0][0])]
                note("B", h, 0, "stopping early is not strictly worse on this scenario", leaf)

    perfect_rows = _perfect_rows(tree, mats, tol)
    perfect_rules = [sorted(_decode(tree, 0, int(r))) for r in perfect_rows]
    sigma_row = _encode(tree, 0, sigma.stops)
    if list(perfect_rows) != [sigma_row]:
        cex.append({
            "check": "unique",
            "node": 0,
            "rule": perfect_rules,
            "scenario": None,
            "detail": f"perfect rules {perfect_rules}, crossing rule {sorted(sigma.stops)}",
        })
    return VerificationReport(
        passed=not cex,
        n_nodes=tree.n_nodes,
        n_rules=n_rules,
        assumption_violations=tree.assumption_violations(),
        counterexamples=cex,
        checked_nodes=checked,
        perfect_rules=perfect_rules,
    )


def _good_rows(mat, candidates, tol):
    worst = mat.max(axis=1)
    floor = worst.min() + tol
    return [r for r in candidates if worst[r] <= floor and _dominators(mat, r, tol).size == 0]


def _perfect_rows(tree, mats, tol):
    """Rows of each subtree that are optimal and Pareto optimal wherever admissible."""
    memo = {}

    def rec(v):
        ch = tree.children[v]
        if not ch:
            memo[v] = [0]
            return memo[v]
        child_sets = [rec(c) for c in ch]
        counts = [rule_count(tree, c) for c in ch]
        cands = [0]
        for combo in itertools.product(*child_sets):
            idx = 0
            for n, d in zip(counts, combo):
                idx = idx * n + d
            cands.append(1 + idx)
        memo[v] = _good_rows(mats[v], cands, tol)
        return memo[v]

    return rec(0)


# ---- random trees -------------------------------------------------------

def random_tree(rng, depth: int, max_branching: int = MAX_BRANCHING, T: float = 1.0,
                psi_step: float = 1.0, constrained: bool = True, max_rules=None,
                max_tries: int = 1000) -> ScenarioTree:
    """Random tree with dyadic prices, so regret comparisons are exact.

    ``psi_k = psi_step * (depth - k)``. With ``constrained`` every
    non-terminal node gets a strictly lower child and declines before the
    first crossing stay below the previous forecast.
    """
    if depth < 1 or depth > MAX_DEPTH:
        raise SizeError(f"depth {depth} outside [1, {MAX_DEPTH}]")
    if max_branching < 1 or max_branching > MAX_BRANCHING:
        raise SizeError(f"branching {max_branching} outside [1, {MAX_BRANCHING}]")
    psi = [psi_step * (depth - k) for k in range(depth + 1)]
    times = [T * k / depth for k in range(depth + 1)]
    for _ in range(max_tries):
        root = _grow(rng, 0, 0.0, 0.0, False, depth, max_branching, psi, constrained)
        tree = ScenarioTree(root, times, psi)
        if max_rules is None or rule_count(tree) <= max_rules:
            return tree
    raise SizeError(f"no tree with at most {max_rules} rules after {max_tries} tries")


_MOVES = (0.25, 0.5, 1.0)
_FRACTIONS = (0.25, 0.5, 0.75)


def _grow(rng, level, price, run_max, crossed, depth, max_branching, psi, constrained):
    node = {"price": price}
    if level == depth:
        return node
    dd = run_max - price
    crossed = crossed or dd >= psi[level]
    n_children = int(rng.integers(1, max_branching + 1))
    kids = []
    for i in range(n_children):
        falling = (i == 0 and constrained) or rng.random() < 0.5
        if falling:
            if constrained and not crossed:
                move = -float(rng.choice(_FRACTIONS)) * (psi[level] - dd)
            else:
                move = -float(rng.choice(_MOVES)) * psi[0] / 2
        else:
            move = float(rng.choice(_MOVES)) * psi[0] / 2 * float(rng.integers(0, 2))
        child_price = price + move
        kids.append(_grow(rng, level + 1, child_price, max(run_max, child_price), crossed,
                          depth, max_branching, psi, constrained))
    node["children"] = kids
    return node


def example1_tree() -> ScenarioTree:
    """Tree on which stop-at-root ties the perfect rule's worst case but is dominated.

    One scenario crashes by exactly psi_0 in the first step, so the crossing
    rule's worst case equals psi_0, the regret of selling immediately; on the
    other scenarios waiting is strictly better. Every node also has a rising
    continuation, which makes stop-at-T Pareto optimal, while its terminal
    drawdowns make it not optimal.
    """
    root = {
        "price": 0.0,
        "children": [
            {"price": -2.0, "children": [{"price": -2.5}, {"price": 1.0}]},
            {"price": 0.5, "children": [{"price": 1.0}, {"price": -1.5}]},
        ],
    }
    return ScenarioTree(root, [0.0, 0.5, 1.0], [2.0, 1.0, 0.0])


def stop_at_root() -> TreeStoppingRule:
    return TreeStoppingRule(frozenset({0}))


def stop_at_leaves(tree: ScenarioTree) -> TreeStoppingRule:
    return TreeStoppingRule(frozenset(tree.leaves))


def verify_random_trees(count: int, max_depth: int, seed: int = 0, max_branching: int = MAX_BRANCHING,
                        max_rules: int = 200_000):
    """Generate ``count`` constrained random trees and verify each."""
    if max_depth > MAX_DEPTH:
        raise SizeError(f"depth {max_depth} exceeds the cap of {MAX_DEPTH}")
    rng = np.random.default_rng(seed)
    reports = []
    for _ in range(count):
        depth = int(rng.integers(1, max_depth + 1))
        tree = random_tree(rng, depth, max_branching, max_rules=max_rules)
        reports.append((tree, verify_perfection(tree)))
    return reports
