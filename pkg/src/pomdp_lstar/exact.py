"""Exact finite-horizon checking over observation-based adversaries.

Everything here runs on the absorbing model, where states satisfying
``!phi1 | phi2`` self-loop.  The value of a history at the horizon is the
belief mass on ``phi2``; inner histories take the best (or worst) enabled
action.  The first observation opens an unweighted branch: the root value is
the optimum over initial observations possible in the initial state.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

import numpy as np

from .model import TOL, Dtmc, History, Pomdp, make_absorbing
from .pctl import BoundedUntilSpec
from .supervisor import Alphabet, BlockingError, String, ZaDfa, enabled_actions, history_to_string

EnabledFn = Callable[[History], Iterable[int]]


class ResourceLimitError(RuntimeError):
    """The belief tree exceeds the configured node budget."""


@dataclass
class Adversary:
    """Pure observation-based adversary on the histories it reaches.

    ``branch_values`` holds the value of each initial-observation branch and
    ``root`` the branch that attains the optimum.
    """

    choices: Dict[History, int] = field(default_factory=dict)
    branch_values: Dict[int, float] = field(default_factory=dict)
    root: Optional[int] = None

    def __call__(self, h: History) -> int:
        return self.choices[h]

    def __len__(self) -> int:
        return len(self.choices)


class _Tree:
    def __init__(self, pomdp: Pomdp, spec: BoundedUntilSpec, max_nodes: int):
        absorbing = make_absorbing(pomdp, spec.phi1, spec.phi2)
        self.T = absorbing.effective_transition()
        self.O = pomdp.observation_fn
        self.goal = pomdp.sat(spec.phi2)
        self.k = spec.k
        self.n_obs = pomdp.n_observations
        self.max_nodes = max_nodes
        self.nodes = 0

    def children(self, b: np.ndarray, a: int):
        pred = b @ self.T[:, a, :]
        for z in range(self.n_obs):
            joint = pred * self.O[:, z]
            ev = float(joint.sum())
            if ev > 0.0:
                yield z, ev, joint / ev

    def tick(self):
        self.nodes += 1
        if self.nodes > self.max_nodes:
            raise ResourceLimitError(f"belief tree exceeds {self.max_nodes} nodes")


def root_observations(pomdp: Pomdp) -> List[int]:
    return [z for z in range(pomdp.n_observations) if pomdp.observation_fn[pomdp.initial, z] > 0]


def optimal_value(
    pomdp: Pomdp,
    spec: BoundedUntilSpec,
    mode: str = "max",
    enabled: Optional[EnabledFn] = None,
    max_nodes: int = 2_000_000,
    tie_tol: float = TOL,
) -> Tuple[float, Adversary]:
    """Optimal probability of ``phi1 U<=k phi2`` and an adversary attaining it.

    ``enabled(h)`` restricts the actions after history ``h`` (all actions when
    ``None``).  Ties go to the lowest action index.
    """
    if mode not in ("max", "min"):
        raise ValueError(f"mode must be 'max' or 'min', not {mode!r}")
    sign = 1.0 if mode == "max" else -1.0
    tree = _Tree(pomdp, spec, max_nodes)
    all_actions = list(range(pomdp.n_actions))
    adv = Adversary()

    def value(h: History, b: np.ndarray) -> float:
        tree.tick()
        if len(h) // 2 == tree.k:
            return float(b[tree.goal].sum())
        acts = all_actions if enabled is None else sorted(enabled(h))
        if not acts:
            raise BlockingError(f"no enabled action after history {h}", h)
        best, best_a = None, None
        for a in acts:
            v = 0.0
            for z, ev, b2 in tree.children(b, a):
                v += ev * value(h + (a, z), b2)
            if best is None or sign * (v - best) > tie_tol:
                best, best_a = v, a
        adv.choices[h] = best_a
        return best

    b0 = np.zeros(pomdp.n_states)
    b0[pomdp.initial] = 1.0
    result = None
    for z0 in root_observations(pomdp):
        v = value((z0,), b0)
        adv.branch_values[z0] = _clip(v)
        if result is None or sign * (v - result) > tie_tol:
            result, adv.root = v, z0
    adv.choices = _reachable_choices(tree, adv.choices, b0, list(adv.branch_values))
    return _clip(result if result is not None else 0.0), adv


def _reachable_choices(tree: _Tree, choices: Dict[History, int], b0: np.ndarray, roots) -> Dict[History, int]:
    # the DP visits every action; keep only histories the chosen actions reach
    kept = {}
    stack = [((z0,), b0) for z0 in roots]
    while stack:
        h, b = stack.pop()
        if h not in choices:
            continue
        a = choices[h]
        kept[h] = a
        for z, _, b2 in tree.children(b, a):
            stack.append((h + (a, z), b2))
    return dict(sorted(kept.items(), key=lambda kv: (len(kv[0]), kv[0])))


def _clip(p: float) -> float:
    return float(min(1.0, max(0.0, p)))


def adversary_value(pomdp: Pomdp, spec: BoundedUntilSpec, adv: Adversary) -> Dict[int, float]:
    """Per-branch value of a fixed adversary (missing choices raise ``KeyError``)."""
    _, fixed = optimal_value(pomdp, spec, "max", enabled=lambda h: [adv.choices[h]])
    return fixed.branch_values


def policy_string_value(pomdp: Pomdp, spec: BoundedUntilSpec, y: String) -> float:
    """Probability that following the single policy ``y`` reaches ``phi2``.

    Runs ``min(|y|, k)`` steps on the absorbing model.  At step ``i`` the
    observation must match ``y[i]``; a mismatching branch stops and keeps only
    mass already absorbed in ``phi2``.  The first observation gates but is not
    weighted.
    """
    if not y:
        raise ValueError("policy string must be non-empty")
    alphabet = Alphabet.of(pomdp)
    n = min(len(y), spec.k)
    T = pomdp.effective_transition()
    O = pomdp.observation_fn
    goal = pomdp.sat(spec.phi2)
    safe = pomdp.sat(spec.phi1)
    zs = [alphabet.obs(sym) for sym in y[:n]]
    acts = [alphabet.act(sym) for sym in y[:n]]

    def walk(s: int, d: int, prob: float) -> float:
        if goal[s]:
            return prob
        if not safe[s] or d == n:
            return 0.0
        w = O[s, zs[d]]
        if w == 0.0:
            return 0.0
        if d > 0:
            prob *= w
        total = 0.0
        row = T[s, acts[d]]
        for s2 in np.nonzero(row > 0)[0]:
            total += walk(int(s2), d + 1, prob * row[s2])
        return total

    return _clip(walk(pomdp.initial, 0, 1.0))


def path_evidence(pomdp: Pomdp, spec: BoundedUntilSpec, y: String) -> float:
    """Probability of observing along ``y`` and first entering ``phi2`` on its last step.

    This is the mass of the single sink path labelled ``y`` in a derived DTMC
    whose adversary follows ``y``.
    """
    if not y or len(y) > spec.k:
        return 0.0
    alphabet = Alphabet.of(pomdp)
    T = pomdp.effective_transition()
    O = pomdp.observation_fn
    goal = pomdp.sat(spec.phi2)
    live = pomdp.sat(spec.phi1) & ~goal
    b = np.zeros(pomdp.n_states)
    b[pomdp.initial] = 1.0
    if not live[pomdp.initial] or O[pomdp.initial, alphabet.obs(y[0])] == 0:
        return 0.0
    for i, sym in enumerate(y):
        if i > 0:
            b = b * O[:, alphabet.obs(sym)]
        pred = b @ T[:, alphabet.act(sym), :]
        if i == len(y) - 1:
            return _clip(float(pred[goal].sum()))
        b = np.where(live, pred, 0.0)
    return 0.0


@dataclass
class SupervisorCheck:
    satisfied: bool
    p_c: float
    witness: Adversary


def check_supervisor(pomdp: Pomdp, dfa: ZaDfa, spec: BoundedUntilSpec) -> SupervisorCheck:
    """Maximal violation probability under the supervisor and whether it meets the bound."""
    p, adv = optimal_value(pomdp, spec, "max", enabled=lambda h: enabled_actions(dfa, h))
    return SupervisorCheck(spec.holds(p), p, adv)


# --------------------------------------------------------------------------- derived DTMC

@dataclass
class DerivedDtmc:
    """History-indexed chain induced by a fixed adversary.

    Nodes are histories reachable with positive live mass (states that are
    neither absorbed in ``phi2`` nor outside ``phi1``).  ``edges[h]`` lists
    ``(child, weight)`` for each observation after ``adversary(h)``;
    ``exits[h]`` is the weight of entering ``phi2`` on that step, i.e. the
    edge to the sink ``h_d``.  The product of weights along a root-to-sink
    path is the probability of that observation sequence followed by the
    first entry into ``phi2``.
    """

    alphabet: Alphabet
    k: int
    roots: List[History]
    actions: Dict[History, int]
    beliefs: Dict[History, np.ndarray]
    edges: Dict[History, List[Tuple[History, float]]]
    exits: Dict[History, float]
    root_exit: Dict[History, float] = field(default_factory=dict)

    def nodes(self) -> List[History]:
        return sorted(self.beliefs, key=lambda h: (len(h), h))

    def exit_paths(self) -> List[Tuple[String, float]]:
        """Every root-to-sink path as ``(string, probability)``."""
        out = []
        for root in self.roots:
            if self.root_exit.get(root, 0.0) > 0:
                out.append(((), self.root_exit[root]))
            stack = [(root, 1.0)]
            while stack:
                h, m = stack.pop()
                if self.exits.get(h, 0.0) > 0:
                    out.append((history_to_string(h, self.actions[h], self.alphabet), m * self.exits[h]))
                for child, w in self.edges.get(h, ()):
                    stack.append((child, m * w))
        return out

    def to_dtmc(self) -> Dtmc:
        order = self.nodes()
        idx = {h: i for i, h in enumerate(order)}
        sink = len(order)
        n = len(order) + 2
        P = np.zeros((n, n))
        init = n - 1
        for root in self.roots:
            # conditional branches: the init row is a uniform split only for display
            P[init, idx[root]] = 1.0 / len(self.roots)
        for h in order:
            for child, w in self.edges.get(h, ()):
                P[idx[h], idx[child]] = w
            P[idx[h], sink] = self.exits.get(h, 0.0) + self.root_exit.get(h, 0.0)
        P[sink, sink] = 1.0
        names = tuple(_history_name(h) for h in order) + ("h_d", "init")
        return Dtmc(names, init, P)


def _history_name(h: History) -> str:
    return ".".join(str(x) for x in h)


def build_derived_dtmc(pomdp: Pomdp, spec: BoundedUntilSpec, adv: Adversary,
                       roots: Optional[Sequence[int]] = None) -> DerivedDtmc:
    """Unfold the histories reachable under ``adv`` into a DTMC with a sink for ``phi2``."""
    alphabet = Alphabet.of(pomdp)
    T = pomdp.effective_transition()
    O = pomdp.observation_fn
    goal = pomdp.sat(spec.phi2)
    live = pomdp.sat(spec.phi1) & ~goal
    k = spec.k
    d = DerivedDtmc(alphabet, k, [], {}, {}, {}, {})
    for z0 in (root_observations(pomdp) if roots is None else roots):
        root = (z0,)
        d.roots.append(root)
        b = np.zeros(pomdp.n_states)
        if goal[pomdp.initial]:
            d.root_exit[root] = 1.0
            d.beliefs[root] = b
            continue
        if live[pomdp.initial]:
            b[pomdp.initial] = 1.0
        d.beliefs[root] = b
        stack = [root]
        while stack:
            h = stack.pop()
            b = d.beliefs[h]
            if len(h) // 2 >= k or not b.any():
                continue
            a = adv.choices[h]
            d.actions[h] = a
            pred = b @ T[:, a, :]
            d.exits[h] = float(pred[goal].sum())
            pred = np.where(live, pred, 0.0)
            kids = []
            for z in range(pomdp.n_observations):
                joint = pred * O[:, z]
                w = float(joint.sum())
                if w > 0.0:
                    child = h + (a, z)
                    d.beliefs[child] = joint / w
                    kids.append((child, w))
                    stack.append(child)
            d.edges[h] = kids
    return d


def strongest_evidence(d: DerivedDtmc, skip: Callable[[String], bool] = lambda y: False,
                       decimals: int = 12) -> Optional[Tuple[String, float]]:
    """Most probable root-to-sink path whose string is not skipped.

    Best-first over the history tree: weights never exceed 1, so masses are
    non-increasing along a path and paths leave the frontier in order of
    decreasing probability; equal probabilities (to ``decimals`` places) are
    ordered by string.
    """
    for y, m in evidence_paths(d, decimals):
        if not skip(y):
            return y, m
    return None


def evidence_paths(d: DerivedDtmc, decimals: int = 12):
    """Yield ``(string, probability)`` for all sink paths in non-increasing probability."""
    heap = []

    def key(m):
        return -round(m, decimals)

    for root in d.roots:
        if d.root_exit.get(root, 0.0) > 0:
            m = d.root_exit[root]
            heapq.heappush(heap, (key(m), (), 0, m, None))
        if root in d.actions:
            heapq.heappush(heap, (key(1.0), _node_string(d, root), 1, 1.0, root))
    while heap:
        _, y, kind, m, h = heapq.heappop(heap)
        if kind == 0:
            yield y, m
            continue
        ex = d.exits.get(h, 0.0)
        if ex > 0:
            heapq.heappush(heap, (key(m * ex), y, 0, m * ex, None))
        for child, w in d.edges.get(h, ()):
            if child in d.actions:
                heapq.heappush(heap, (key(m * w), _node_string(d, child), 1, m * w, child))


def _node_string(d: DerivedDtmc, h: History) -> String:
    return history_to_string(h, d.actions[h], d.alphabet)
