"""za-DFA supervisors, their product with a POMDP, blocking analysis and simulation.

A za-DFA reads strings over observation-action symbols.  Symbols are dense
integers ordered observation-major, action-minor, so on a model with
observations ``z1, z2`` and actions ``a1, a2, a3`` the symbol ``<z1,a1>`` is 0
and ``<z2,a3>`` is 5 (printed ``1`` .. ``6`` in digit coding).  A string is
a tuple of symbols.  Only runs that stay inside accepting states count, so
the effective language is prefix-closed by construction.
"""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Callable, Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Set, Tuple, Union

import numpy as np

from .model import History, Pomdp

String = Tuple[int, ...]


class BlockingError(RuntimeError):
    """A reachable history has no enabled action before the horizon."""

    def __init__(self, message: str, history: Sequence[int] = ()):
        super().__init__(message)
        self.history = tuple(history)


class AlphabetMismatch(ValueError):
    pass


@dataclass(frozen=True)
class Alphabet:
    observations: Tuple[str, ...]
    actions: Tuple[str, ...]

    @classmethod
    def of(cls, pomdp: Pomdp) -> "Alphabet":
        return cls(tuple(pomdp.observations), tuple(pomdp.actions))

    def __len__(self) -> int:
        return len(self.observations) * len(self.actions)

    def symbol(self, z: int, a: int) -> int:
        return z * len(self.actions) + a

    def obs(self, sym: int) -> int:
        return sym // len(self.actions)

    def act(self, sym: int) -> int:
        return sym % len(self.actions)

    def symbols(self) -> range:
        return range(len(self))

    def with_obs(self, z: int) -> range:
        n = len(self.actions)
        return range(z * n, (z + 1) * n)

    @property
    def digit_coding(self) -> bool:
        return len(self) <= 9

    def label(self, sym: int) -> str:
        return f"{self.observations[self.obs(sym)]}/{self.actions[self.act(sym)]}"

    def format(self, y: Sequence[int], digits: Optional[bool] = None) -> str:
        if digits is None:
            digits = self.digit_coding
        if digits:
            return "".join(str(sym + 1) for sym in y) if y else "ε"
        return ",".join(f"{self.observations[self.obs(s)]}:{self.actions[self.act(s)]}" for s in y)

    def parse(self, text: str) -> String:
        """Parse a string in digit coding (``"124"``) or as ``z:a`` pairs (``"z1:a1,z1:a2"``)."""
        text = text.strip()
        if text in ("", "ε"):
            return ()
        if ":" in text:
            out = []
            for part in text.split(","):
                z, _, a = part.strip().partition(":")
                if z not in self.observations or a not in self.actions:
                    raise ValueError(f"unknown symbol {part.strip()!r}")
                out.append(self.symbol(self.observations.index(z), self.actions.index(a)))
            return tuple(out)
        if not self.digit_coding:
            raise ValueError("digit coding needs an alphabet of at most 9 symbols; use z:a pairs")
        out = []
        for ch in text:
            if not ch.isdigit() or not 1 <= int(ch) <= len(self):
                raise ValueError(f"symbol {ch!r} outside 1..{len(self)}")
            out.append(int(ch) - 1)
        return tuple(out)


def history_to_string(h: History, a: int, alphabet: Alphabet) -> String:
    """``z0 a0 .. zn`` plus a final action ``a`` as a symbol string."""
    acts = list(h[1::2]) + [a]
    return tuple(alphabet.symbol(z, x) for z, x in zip(h[0::2], acts))


def string_histories(y: String, alphabet: Alphabet):
    """Yield ``(history, action)`` for each position of ``y`` (histories carry no trailing observation)."""
    for i, sym in enumerate(y):
        h = []
        for s in y[:i]:
            h += [alphabet.obs(s), alphabet.act(s)]
        h.append(alphabet.obs(sym))
        yield tuple(h), alphabet.act(sym)


# --------------------------------------------------------------------------- za-DFA

@dataclass(frozen=True, eq=False)
class ZaDfa:
    n_states: int
    initial: int
    alphabet: Alphabet
    delta: Mapping[Tuple[int, int], int]
    accepting: FrozenSet[int]

    def __post_init__(self):
        object.__setattr__(self, "delta", MappingProxyType(dict(self.delta)))
        object.__setattr__(self, "accepting", frozenset(self.accepting))

    # construction -------------------------------------------------------------
    @classmethod
    def trivial_full(cls, alphabet: Alphabet) -> "ZaDfa":
        return cls(1, 0, alphabet, {(0, s): 0 for s in alphabet.symbols()}, {0})

    @classmethod
    def empty(cls, alphabet: Alphabet) -> "ZaDfa":
        return cls(1, 0, alphabet, {}, {0})

    @classmethod
    def from_policy_string(cls, y: String, alphabet: Alphabet) -> "ZaDfa":
        if not y:
            raise ValueError("policy string must be non-empty")
        return cls(len(y) + 1, 0, alphabet, {(i, sym): i + 1 for i, sym in enumerate(y)},
                   range(len(y) + 1))

    @classmethod
    def from_strings(cls, strings: Iterable[String], alphabet: Alphabet) -> "ZaDfa":
        """Prefix-tree acceptor for the prefix closure of ``strings``."""
        ids: Dict[String, int] = {(): 0}
        delta = {}
        for y in sorted(set(strings), key=lambda t: (len(t), t)):
            for i in range(len(y)):
                prefix = y[: i + 1]
                if prefix not in ids:
                    ids[prefix] = len(ids)
                    delta[(ids[y[:i]], y[i])] = ids[prefix]
        return cls(len(ids), 0, alphabet, delta, range(len(ids)))

    # queries --------------------------------------------------------------------
    def step(self, q: Optional[int], sym: int) -> Optional[int]:
        """Successor inside the accepting states, or ``None``."""
        if q is None:
            return None
        nxt = self.delta.get((q, sym))
        return nxt if nxt is not None and nxt in self.accepting else None

    def run(self, y: Sequence[int]) -> Optional[int]:
        q = self.initial if self.initial in self.accepting else None
        for sym in y:
            q = self.step(q, sym)
        return q

    def accepts(self, y: Sequence[int]) -> bool:
        return self.run(y) is not None

    def enabled(self, q: Optional[int], z: int) -> List[int]:
        if q is None:
            return []
        return [self.alphabet.act(s) for s in self.alphabet.with_obs(z) if self.step(q, s) is not None]

    def language(self, max_len: int) -> Set[String]:
        """Accepted strings of length ``<= max_len``."""
        out: Set[String] = set()
        if self.initial not in self.accepting:
            return out
        frontier = [((), self.initial)]
        out.add(())
        for _ in range(max_len):
            nxt = []
            for y, q in frontier:
                for sym in self.alphabet.symbols():
                    q2 = self.step(q, sym)
                    if q2 is not None:
                        out.add(y + (sym,))
                        nxt.append((y + (sym,), q2))
            frontier = nxt
        return out

    def pruned(self) -> "ZaDfa":
        """Drop rejecting and unreachable states; the language is unchanged."""
        if self.initial not in self.accepting:
            return ZaDfa.empty(self.alphabet).with_no_states()
        order = [self.initial]
        seen = {self.initial}
        i = 0
        while i < len(order):
            q = order[i]
            i += 1
            for sym in self.alphabet.symbols():
                q2 = self.step(q, sym)
                if q2 is not None and q2 not in seen:
                    seen.add(q2)
                    order.append(q2)
        ren = {q: j for j, q in enumerate(order)}
        delta = {(ren[q], sym): ren[q2] for (q, sym), q2 in self.delta.items()
                 if q in ren and q2 in ren}
        return ZaDfa(len(order), 0, self.alphabet, delta, range(len(order)))

    def with_no_states(self) -> "ZaDfa":
        # language is empty (not even epsilon)
        return ZaDfa(1, 0, self.alphabet, {}, ())

    def minimized(self) -> "ZaDfa":
        """Minimal DFA (rejecting states removed) for the same effective language."""
        d = self.pruned()
        if not d.accepting:
            return d
        n, syms = d.n_states, list(d.alphabet.symbols())
        block = [0] * n
        while True:
            sig = {}
            new_block = []
            for q in range(n):
                key = (block[q],) + tuple(
                    block[d.delta[(q, s)]] if (q, s) in d.delta else -1 for s in syms)
                new_block.append(sig.setdefault(key, len(sig)))
            if len(sig) == len(set(block)):
                block = new_block
                break
            block = new_block
        # renumber blocks by BFS from the initial state for stable output
        order, seen = [block[d.initial]], {block[d.initial]}
        rep = {}
        for q in range(n):
            rep.setdefault(block[q], q)
        i = 0
        while i < len(order):
            b = order[i]
            i += 1
            for s in syms:
                q2 = d.delta.get((rep[b], s))
                if q2 is not None and block[q2] not in seen:
                    seen.add(block[q2])
                    order.append(block[q2])
        ren = {b: j for j, b in enumerate(order)}
        delta = {(ren[block[q]], s): ren[block[q2]] for (q, s), q2 in d.delta.items()}
        return ZaDfa(len(order), 0, d.alphabet, delta, range(len(order)))

    # serialization --------------------------------------------------------------
    def to_json(self) -> dict:
        a = self.alphabet
        return {
            "observations": list(a.observations),
            "actions": list(a.actions),
            "states": list(range(self.n_states)),
            "initial": self.initial,
            "accepting": sorted(self.accepting),
            "transitions": [
                {"from": q, "z": a.observations[a.obs(s)], "a": a.actions[a.act(s)], "to": q2}
                for (q, s), q2 in sorted(self.delta.items())
            ],
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "ZaDfa":
        alphabet = Alphabet(tuple(data["observations"]), tuple(data["actions"]))
        states = list(data["states"])
        idx = {q: i for i, q in enumerate(states)}
        delta = {}
        for t in data["transitions"]:
            if t["z"] not in alphabet.observations or t["a"] not in alphabet.actions:
                raise ValueError(f"transition symbol {t['z']}/{t['a']} not in the alphabet")
            sym = alphabet.symbol(alphabet.observations.index(t["z"]), alphabet.actions.index(t["a"]))
            key = (idx[t["from"]], sym)
            if key in delta and delta[key] != idx[t["to"]]:
                raise ValueError(f"nondeterministic transition from {t['from']} on {t['z']}/{t['a']}")
            delta[key] = idx[t["to"]]
        return cls(len(states), idx[data["initial"]], alphabet, delta, {idx[q] for q in data["accepting"]})

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)


def check_alphabet(pomdp: Pomdp, dfa: ZaDfa):
    if dfa.alphabet != Alphabet.of(pomdp):
        raise AlphabetMismatch(
            f"supervisor alphabet {dfa.alphabet.observations}x{dfa.alphabet.actions} does not match "
            f"model {pomdp.observations}x{pomdp.actions}")


def enabled_actions(dfa: ZaDfa, h: History) -> Set[int]:
    """Actions the supervisor enables after history ``h``; empty if ``h`` is not accepted."""
    alphabet = dfa.alphabet
    q = dfa.run(tuple(alphabet.symbol(z, a) for z, a in zip(h[0:-1:2], h[1::2])))
    return set(dfa.enabled(q, h[-1]))


def adversary_to_dfa(choices: Mapping[History, int], alphabet: Alphabet, k: int, merge: bool = False) -> ZaDfa:
    """Tree automaton accepting ``h . adv(h)`` for every history in ``choices`` shorter than ``k`` steps."""
    strings = [history_to_string(h, a, alphabet) for h, a in choices.items() if len(h) // 2 < k]
    dfa = ZaDfa.from_strings(strings, alphabet)
    return dfa.minimized() if merge else dfa


# --------------------------------------------------------------------------- product

@dataclass(frozen=True, eq=False)
class ProductMdp:
    """Reachable part of the parallel composition of a POMDP and a za-DFA.

    States are ``(s, z, q)`` triples; the initial state has ``z = None``.  Each
    choice is a symbol ``<z, a>`` whose observation is the state's own
    observation (for the initial state: any gating observation with
    ``O(s0, z) > 0``).
    """

    pomdp: Pomdp
    dfa: ZaDfa
    states: Tuple[Tuple[int, Optional[int], int], ...]
    transitions: Mapping[Tuple[int, int], Tuple[Tuple[int, float], ...]]

    def choices(self, i: int) -> List[int]:
        return sorted(sym for (j, sym) in self.transitions if j == i)

    @property
    def index(self) -> Dict[Tuple[int, Optional[int], int], int]:
        return {st: i for i, st in enumerate(self.states)}

    def outgoing(self) -> Dict[int, List[int]]:
        out: Dict[int, List[int]] = {i: [] for i in range(len(self.states))}
        for (i, sym) in self.transitions:
            out[i].append(sym)
        for v in out.values():
            v.sort()
        return out

    def labels(self, i: int) -> FrozenSet[str]:
        return self.pomdp.labels[self.states[i][0]]

    def name(self, i: int) -> str:
        s, z, q = self.states[i]
        m = self.pomdp
        return f"{m.states[s]}q{q}" if z is None else f"{m.states[s]}{m.observations[z]}q{q}"


def product(pomdp: Pomdp, dfa: ZaDfa) -> ProductMdp:
    check_alphabet(pomdp, dfa)
    alphabet = dfa.alphabet
    T = pomdp.effective_transition()
    O = pomdp.observation_fn
    init = (pomdp.initial, None, dfa.initial)
    states = [init]
    index = {init: 0}
    transitions: Dict[Tuple[int, int], Tuple[Tuple[int, float], ...]] = {}
    if dfa.initial not in dfa.accepting:
        return ProductMdp(pomdp, dfa, tuple(states), MappingProxyType(transitions))
    i = 0
    while i < len(states):
        s, z, q = states[i]
        gates = [z] if z is not None else [g for g in range(pomdp.n_observations) if O[s, g] > 0]
        for g in gates:
            for a in range(pomdp.n_actions):
                sym = alphabet.symbol(g, a)
                q2 = dfa.step(q, sym)
                if q2 is None:
                    continue
                row = []
                for s2 in np.nonzero(T[s, a] > 0)[0]:
                    for z2 in np.nonzero(O[s2] > 0)[0]:
                        succ = (int(s2), int(z2), q2)
                        if succ not in index:
                            index[succ] = len(states)
                            states.append(succ)
                        row.append((index[succ], float(O[s2, z2] * T[s, a, s2])))
                transitions[(i, sym)] = tuple(row)
        i += 1
    return ProductMdp(pomdp, dfa, tuple(states), MappingProxyType(transitions))


@dataclass(frozen=True)
class BlockedReport:
    state: int
    name: str
    string: String
    depth: int


def _bfs_strings(prod: ProductMdp, k: int):
    """Yield ``(state, string)`` in order of first visit (shortest, then lexicographic string)."""
    out = prod.outgoing()
    seen = {0}
    queue = deque([(0, ())])
    while queue:
        i, y = queue.popleft()
        yield i, y, out[i]
        if len(y) >= k:
            continue
        for sym in out[i]:
            for j, _ in prod.transitions[(i, sym)]:
                if j not in seen:
                    seen.add(j)
                    queue.append((j, y + (sym,)))


def nonblocking_check(prod: ProductMdp, k: int) -> Optional[BlockedReport]:
    """``None`` if every state first reached before depth ``k`` has a choice, else the first blocked one."""
    for i, y, choices in _bfs_strings(prod, k):
        if len(y) < k and not choices:
            return BlockedReport(i, prod.name(i), y, len(y))
    return None


def _unroll(prod: ProductMdp, k: int):
    """Depth-layered graph: nodes ``(depth, state)`` and labelled edges, depth <= k."""
    out = prod.outgoing()
    edges: Dict[Tuple[int, int], List[Tuple[int, Tuple[int, int]]]] = {}
    layer = {(0, 0)}
    nodes = [(0, 0)]
    for d in range(k):
        nxt = set()
        for node in sorted(layer):
            i = node[1]
            lst = []
            for sym in out[i]:
                for j, _ in prod.transitions[(i, sym)]:
                    lst.append((sym, (d + 1, j)))
                    nxt.add((d + 1, j))
            edges[node] = lst
        layer = nxt
        nodes.extend(sorted(nxt))
    for node in layer:
        edges.setdefault(node, [])
    return nodes, edges


def dark_state_pruning(prod: ProductMdp, k: int) -> Set[String]:
    """Strings of traces that end with a transition into a dark node.

    A node before the horizon with no remaining outgoing transition is dark;
    transitions into dark nodes are deleted and the marking repeats to a
    fixpoint.
    """
    nodes, edges = _unroll(prod, k)
    live = {n: list(e) for n, e in edges.items()}
    dark: Set[Tuple[int, int]] = set()
    for _ in range(len(nodes) + 1):
        new = {n for n in nodes if n[0] < k and n not in dark and not live[n]}
        if not new:
            break
        dark |= new
        for n in nodes:
            live[n] = [(sym, m) for sym, m in live[n] if m not in dark]
    strings: Set[String] = set()
    if (0, 0) in dark and not edges[(0, 0)]:
        return strings

    def walk(node, y):
        for sym, m in edges[node]:
            if m in dark:
                strings.add(y + (sym,))
        for sym, m in live[node]:
            walk(m, y + (sym,))

    walk((0, 0), ())
    return strings


# --------------------------------------------------------------------------- simulation

@dataclass
class Trace:
    states: List[int] = field(default_factory=list)
    observations: List[int] = field(default_factory=list)
    actions: List[int] = field(default_factory=list)

    def history(self) -> History:
        h = [self.observations[0]]
        for a, z in zip(self.actions, self.observations[1:]):
            h += [a, z]
        return tuple(h)

    def string(self, alphabet: Alphabet) -> String:
        return tuple(alphabet.symbol(z, a) for z, a in zip(self.observations, self.actions))


ActionPicker = Callable[[History, List[int], np.random.Generator], int]


def uniform_picker(h: History, enabled: List[int], rng: np.random.Generator) -> int:
    return enabled[int(rng.integers(len(enabled)))]


def simulate(pomdp: Pomdp, dfa: ZaDfa, k: int, seed=None,
             action_picker: ActionPicker = uniform_picker,
             rng: Optional[np.random.Generator] = None) -> Trace:
    """One regulated run of ``k`` steps: observe, pick an enabled action, move."""
    check_alphabet(pomdp, dfa)
    rng = rng if rng is not None else np.random.default_rng(seed)
    T = pomdp.effective_transition()
    O = pomdp.observation_fn
    tr = Trace()
    s = pomdp.initial
    q = dfa.initial if dfa.initial in dfa.accepting else None
    for i in range(k + 1):
        z = int(rng.choice(pomdp.n_observations, p=O[s]))
        tr.states.append(s)
        tr.observations.append(z)
        if i == k:
            break
        enabled = dfa.enabled(q, z)
        if not enabled:
            h = tr.history()
            raise BlockingError(f"no enabled action after history {h} at step {i}", h)
        a = action_picker(tr.history(), enabled, rng)
        tr.actions.append(a)
        q = dfa.step(q, dfa.alphabet.symbol(z, a))
        s = int(rng.choice(pomdp.n_states, p=T[s, a]))
    return tr


# --------------------------------------------------------------------------- DOT

def _edge_label(syms: Sequence[int], alphabet: Alphabet, digits: bool) -> str:
    if digits:
        return ",".join(str(s + 1) for s in syms)
    return ",".join(alphabet.label(s) for s in syms)


def to_dot(obj: Union[ZaDfa, ProductMdp], legend: bool = False, name: str = "G") -> str:
    """Graphviz text; identical input gives byte-identical output."""
    lines = [f"digraph {name} {{", "  rankdir=LR;", '  node [shape=circle];']
    if isinstance(obj, ZaDfa):
        alphabet = obj.alphabet
        digits = legend and alphabet.digit_coding
        lines.append('  __start [shape=point, label=""];')
        for q in range(obj.n_states):
            shape = "doublecircle" if q in obj.accepting else "circle"
            lines.append(f'  q{q} [shape={shape}, label="q{q}"];')
        lines.append(f"  __start -> q{obj.initial};")
        grouped: Dict[Tuple[int, int], List[int]] = {}
        for (q, sym), q2 in sorted(obj.delta.items()):
            grouped.setdefault((q, q2), []).append(sym)
        for (q, q2), syms in sorted(grouped.items()):
            lines.append(f'  q{q} -> q{q2} [label="{_edge_label(sorted(syms), alphabet, digits)}"];')
        if digits:
            legend_text = "\\l".join(f"{s + 1}: <{alphabet.label(s).replace('/', ',')}>" for s in alphabet.symbols())
            lines.append(f'  __legend [shape=note, label="{legend_text}\\l"];')
    else:
        prod = obj
        alphabet = prod.dfa.alphabet
        digits = legend and alphabet.digit_coding
        lines.append('  __start [shape=point, label=""];')
        for i in range(len(prod.states)):
            lines.append(f'  n{i} [label="{prod.name(i)}"];')
        lines.append("  __start -> n0;")
        for (i, sym), row in sorted(prod.transitions.items()):
            for j, p in row:
                lines.append(f'  n{i} -> n{j} [label="{_edge_label([sym], alphabet, digits)} : {p:.6g}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
