"""POMDP / DTMC data model, validation, Bayes filtering and cylinder probabilities.

Ids are strings at the edges (files, CLI) and dense indices in memory.  A
POMDP stores its transition kernel as a dense ``(S, A, S)`` array together
with a ``(S, A)`` mask of defined actions; an undefined action leaves the
system where it is.

Histories are flat tuples ``(z0, a0, z1, a1, ..., zn)`` of indices: the
initial observation followed by (action, observation) steps.  The initial
observation only gates which supervisor symbol applies first; it never
weights a probability.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product as cartesian
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .pctl import StateFormula, eval_state_formula

TOL = 1e-9

History = Tuple[int, ...]


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Pomdp:
    states: Tuple[str, ...]
    initial: int
    actions: Tuple[str, ...]
    observations: Tuple[str, ...]
    transition: np.ndarray          # (S, A, S); rows of undefined actions are zero
    defined: np.ndarray             # (S, A) bool
    observation_fn: np.ndarray      # (S, Z)
    labels: Tuple[FrozenSet[str], ...]
    ap: FrozenSet[str] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "transition", _readonly(self.transition))
        object.__setattr__(self, "observation_fn", _readonly(self.observation_fn))
        defined = np.array(self.defined, dtype=bool)
        defined.setflags(write=False)
        object.__setattr__(self, "defined", defined)
        object.__setattr__(self, "labels", tuple(frozenset(l) for l in self.labels))
        ap = frozenset(self.ap) if self.ap else frozenset().union(*self.labels)
        object.__setattr__(self, "ap", ap)
        T = np.array(self.transition)
        for s, a in zip(*np.nonzero(~defined)):
            T[s, a, :] = 0.0
            T[s, a, s] = 1.0
        object.__setattr__(self, "_effective", _readonly(T))

    @classmethod
    def from_dicts(
        cls,
        states: Sequence[str],
        initial: str,
        actions: Sequence[str],
        observations: Sequence[str],
        transitions: Mapping[str, Mapping[str, Mapping[str, float]]],
        observation_fn: Mapping[str, Mapping[str, float]],
        labels: Optional[Mapping[str, Iterable[str]]] = None,
        ap: Optional[Iterable[str]] = None,
    ) -> "Pomdp":
        """Build from nested id maps; unlisted entries are 0, unlisted (s, a) are undefined."""
        si = {s: i for i, s in enumerate(states)}
        ai = {a: i for i, a in enumerate(actions)}
        zi = {z: i for i, z in enumerate(observations)}
        for ids, kind in ((states, "state"), (actions, "action"), (observations, "observation")):
            if len(set(ids)) != len(ids):
                raise ValueError(f"duplicate {kind} ids")
        if initial not in si:
            raise ValueError(f"unknown initial state {initial!r}")
        S, A, Z = len(states), len(actions), len(observations)
        T = np.zeros((S, A, S))
        defined = np.zeros((S, A), dtype=bool)
        for s, per_action in transitions.items():
            for a, row in per_action.items():
                defined[si[_known(si, s, "state")], ai[_known(ai, a, "action")]] = True
                for t, p in row.items():
                    T[si[s], ai[a], si[_known(si, t, "state")]] = float(p)
        O = np.zeros((S, Z))
        for s, row in observation_fn.items():
            for z, p in row.items():
                O[si[_known(si, s, "state")], zi[_known(zi, z, "observation")]] = float(p)
        labels = labels or {}
        for s in labels:
            _known(si, s, "state")
        lab = tuple(frozenset(labels.get(s, ())) for s in states)
        return cls(tuple(states), si[initial], tuple(actions), tuple(observations),
                   T, defined, O, lab, frozenset(ap) if ap is not None else frozenset())

    # sizes -----------------------------------------------------------------
    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    @property
    def n_observations(self) -> int:
        return len(self.observations)

    def kernel(self, s: int, a: int) -> np.ndarray:
        """Successor distribution; an undefined action keeps the system in ``s``."""
        return self._effective[s, a]

    def effective_transition(self) -> np.ndarray:
        """``(S, A, S)`` kernel with undefined actions replaced by self-loops."""
        return self._effective

    def sat(self, f: StateFormula) -> np.ndarray:
        """Boolean mask of states satisfying a propositional formula."""
        return np.array([eval_state_formula(f, lab) for lab in self.labels], dtype=bool)

    def to_dicts(self) -> dict:
        transitions: Dict[str, Dict[str, Dict[str, float]]] = {}
        for s in range(self.n_states):
            for a in range(self.n_actions):
                if self.defined[s, a]:
                    transitions.setdefault(self.states[s], {})[self.actions[a]] = {
                        self.states[t]: float(self.transition[s, a, t])
                        for t in range(self.n_states) if self.transition[s, a, t] > 0
                    }
        return {
            "states": list(self.states),
            "initial": self.states[self.initial],
            "actions": list(self.actions),
            "observations": list(self.observations),
            "transitions": transitions,
            "observation_fn": {
                self.states[s]: {self.observations[z]: float(self.observation_fn[s, z])
                                 for z in range(self.n_observations) if self.observation_fn[s, z] > 0}
                for s in range(self.n_states)
            },
            "labels": {self.states[s]: sorted(self.labels[s]) for s in range(self.n_states) if self.labels[s]},
        }


def _known(index: Mapping[str, int], key: str, kind: str) -> str:
    if key not in index:
        raise ValueError(f"unknown {kind} id {key!r}")
    return key


@dataclass(frozen=True, eq=False)
class Dtmc:
    states: Tuple[str, ...]
    initial: int
    transition: np.ndarray   # (S, S), rows may be sub-stochastic
    labels: Tuple[FrozenSet[str], ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "transition", _readonly(self.transition))

    def violations(self) -> List[str]:
        out = []
        for i, row in enumerate(self.transition):
            if (row < -TOL).any() or (row > 1 + TOL).any():
                out.append(f"row {self.states[i]} has entries outside [0, 1]")
            if row.sum() > 1 + TOL:
                out.append(f"row {self.states[i]} sums to {row.sum():.12g}")
        return out


# --------------------------------------------------------------------------- validation

def validate(pomdp: Pomdp) -> List[str]:
    """List of well-formedness violations; empty iff the model is valid."""
    out = []
    if not 0 <= pomdp.initial < pomdp.n_states:
        out.append(f"initial state index {pomdp.initial} out of range")
    T, O = pomdp.transition, pomdp.observation_fn
    for s in range(pomdp.n_states):
        for a in range(pomdp.n_actions):
            row = T[s, a]
            name = f"T row ({pomdp.states[s]},{pomdp.actions[a]})"
            if (row < 0).any() or (row > 1).any():
                out.append(f"{name} has entries outside [0, 1]")
            if pomdp.defined[s, a] and abs(row.sum() - 1.0) > TOL:
                out.append(f"{name} sums to {_fmt(row.sum())}")
            if not pomdp.defined[s, a] and row.any():
                out.append(f"{name} has mass but the action is undefined")
    for s in range(pomdp.n_states):
        row = O[s]
        name = f"O row {pomdp.states[s]}"
        if (row < 0).any() or (row > 1).any():
            out.append(f"{name} has entries outside [0, 1]")
        if abs(row.sum() - 1.0) > TOL:
            out.append(f"{name} sums to {_fmt(row.sum())}")
    for s, lab in enumerate(pomdp.labels):
        extra = lab - pomdp.ap
        if extra:
            out.append(f"labels of {pomdp.states[s]} use undeclared propositions {sorted(extra)}")
    return out


def _fmt(x: float) -> str:
    return f"{x:.10g}"


# --------------------------------------------------------------------------- transforms

def absorbing_mask(pomdp: Pomdp, phi1: StateFormula, phi2: StateFormula) -> np.ndarray:
    return ~pomdp.sat(phi1) | pomdp.sat(phi2)


def make_absorbing(pomdp: Pomdp, phi1: StateFormula, phi2: StateFormula) -> Pomdp:
    """Copy of ``pomdp`` where every state in ``!phi1 | phi2`` self-loops under every action."""
    mask = absorbing_mask(pomdp, phi1, phi2)
    T = np.array(pomdp.transition)
    defined = np.array(pomdp.defined)
    for s in np.nonzero(mask)[0]:
        T[s, :, :] = 0.0
        T[s, :, s] = 1.0
        defined[s, :] = True
    return Pomdp(pomdp.states, pomdp.initial, pomdp.actions, pomdp.observations,
                 T, defined, pomdp.observation_fn, pomdp.labels, pomdp.ap)


# --------------------------------------------------------------------------- beliefs

@dataclass(frozen=True)
class Belief:
    """Posterior over states, kept as a read-only probability vector."""

    probs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "probs", _readonly(self.probs))

    @classmethod
    def dirac(cls, n: int, s: int) -> "Belief":
        v = np.zeros(n)
        v[s] = 1.0
        return cls(v)

    @property
    def support(self) -> Dict[int, float]:
        return {int(s): float(p) for s, p in enumerate(self.probs) if p > 0}

    @property
    def is_empty(self) -> bool:
        return not self.probs.any()

    def mass(self, mask: np.ndarray) -> float:
        return float(self.probs[mask].sum())


def belief_update(b: Belief, a: int, z: int, model: Pomdp) -> Tuple[Belief, float]:
    """Bayes filter step; returns the normalized posterior and the evidence ``Pr(z | b, a)``.

    Zero evidence yields the empty (all-zero) belief.
    """
    predicted = b.probs @ model.effective_transition()[:, a, :]
    joint = predicted * model.observation_fn[:, z]
    evidence = float(joint.sum())
    if evidence <= 0.0:
        return Belief(np.zeros(model.n_states)), 0.0
    return Belief(joint / evidence), evidence


def history_evidence(model: Pomdp, h: History, start: Optional[int] = None) -> Tuple[Belief, float]:
    """Belief after ``h`` and the product of step evidences (first observation unweighted)."""
    b = Belief.dirac(model.n_states, model.initial if start is None else start)
    total = 1.0
    for i in range(1, len(h), 2):
        b, ev = belief_update(b, h[i], h[i + 1], model)
        total *= ev
        if ev == 0.0:
            break
    return b, total


# --------------------------------------------------------------------------- cylinders

def cylinder_probability(
    pomdp: Pomdp,
    path: Sequence[int],
    obs: Sequence[Optional[int]],
    actions: Sequence[int],
) -> float:
    """Measure of the cylinder of a finite path with its observation sequence.

    ``path = s(0..n)``, ``obs = z(0..n)``, ``actions = a(1..n)``.  ``obs[0]`` may
    be ``None`` for the free initial observation (factor 1).  An empty path has
    measure 1.
    """
    if len(path) == 0:
        return 1.0
    if len(obs) != len(path) or len(actions) != len(path) - 1:
        raise ValueError("path, observation and action sequences have inconsistent lengths")
    for s in path:
        if not 0 <= s < pomdp.n_states:
            raise ValueError(f"unknown state index {s}")
    for a in actions:
        if not 0 <= a < pomdp.n_actions:
            raise ValueError(f"unknown action index {a}")
    for z in obs:
        if z is not None and not 0 <= z < pomdp.n_observations:
            raise ValueError(f"unknown observation index {z}")
    prob = 1.0 if obs[0] is None else float(pomdp.observation_fn[path[0], obs[0]])
    for i in range(1, len(path)):
        if obs[i] is None:
            raise ValueError("only the initial observation may be free")
        prob *= pomdp.kernel(path[i - 1], actions[i - 1])[path[i]] * pomdp.observation_fn[path[i], obs[i]]
        if prob == 0.0:
            return 0.0
    return float(prob)


def enumerate_cylinders(pomdp: Pomdp, actions: Sequence[int], start: Optional[int] = None):
    """Yield ``(path, obs, prob)`` for every positive-probability cylinder under a fixed schedule.

    The first observation ranges over ``O(s0, .)`` so the measures sum to 1.
    """
    s0 = pomdp.initial if start is None else start
    n = len(actions)
    S, Z = pomdp.n_states, pomdp.n_observations
    for rest in cartesian(range(S), repeat=n):
        path = (s0,) + rest
        for obs in cartesian(range(Z), repeat=n + 1):
            p = cylinder_probability(pomdp, path, obs, actions)
            if p > 0:
                yield path, obs, p
