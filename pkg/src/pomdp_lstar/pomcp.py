"""Monte-Carlo tree search estimate of the optimal bounded-until probability.

A finite-horizon variant of POMCP: no discounting and no intermediate
reward; a simulation that reaches depth ``k`` earns the exact belief mass on
``phi2`` of its simulated history.  Action choice inside the tree is UCB1
restricted to the actions a supervisor enables; beyond the tree a uniform
rollout over the enabled actions continues to depth ``k``.

The initial observation is sampled from ``O(s0, .)`` and starts each
simulated history, so the supervisor can gate the first action.  The
estimate is therefore the ``O``-weighted average of the per-observation
values, which equals the exact value whenever the branches agree.

The search runs in a numba kernel over preallocated arrays; with a fixed
seed every run is bit-identical.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, Optional, Union

import numba
import numpy as np

from .model import History, Pomdp, make_absorbing
from .pctl import BoundedUntilSpec
from .supervisor import Alphabet, BlockingError, ZaDfa, check_alphabet

EnabledArg = Union[None, ZaDfa, Callable[[History], Iterable[int]]]


@dataclass(frozen=True)
class PomcpConfig:
    n_simulations: int = 100_000
    ucb_c: float = 1.0
    seed: Optional[int] = 0
    n_init: int = 0
    v_init: float = 0.0
    record_every: int = 0  # keep the running estimate every this many simulations

    def __post_init__(self):
        if self.n_simulations < 1:
            raise ValueError("n_simulations must be at least 1")
        if self.ucb_c < 0:
            raise ValueError("ucb_c must be non-negative")


@dataclass
class PomcpResult:
    """Estimate plus the search tree it came from.

    Node arrays are indexed by node id; node ``i`` has history
    ``history(i)``.  ``value[i, a]`` is ``V(ha)`` on the reward scale of the
    search (negated rewards when minimizing).
    """

    p_hat: float
    mode: str
    n_nodes: int
    parent: np.ndarray
    via_action: np.ndarray
    via_obs: np.ndarray
    depth: np.ndarray
    visits: np.ndarray
    action_visits: np.ndarray
    value: np.ndarray
    enabled: np.ndarray
    particles: np.ndarray
    beliefs: np.ndarray
    running: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))

    def history(self, i: int) -> History:
        h = []
        while self.parent[i] >= 0:
            h += [int(self.via_obs[i]), int(self.via_action[i])]
            i = int(self.parent[i])
        h.append(int(self.via_obs[i]))
        return tuple(reversed(h))

    def greedy_action(self, i: int) -> Optional[int]:
        """``argmax_a V(ha)`` over tried enabled actions, ties to the lowest index."""
        best, best_a = -np.inf, None
        for a in range(self.value.shape[1]):
            if self.enabled[i, a] and self.action_visits[i, a] > 0 and self.value[i, a] > best:
                best, best_a = self.value[i, a], a
        return best_a

    def adversary(self) -> Dict[History, int]:
        """Greedy action of every node with at least one tried action."""
        out = {}
        for i in range(self.n_nodes):
            a = self.greedy_action(i)
            if a is not None:
                out[self.history(i)] = a
        return out

    def to_csv(self) -> str:
        lines = ["simulation,estimate"]
        lines += [f"{int(n)},{v!r}" for n, v in self.running]
        return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------- kernel

@numba.njit(cache=True)
def _sample(cdf_row):
    u = np.random.random()
    n = cdf_row.shape[0]
    lo, hi = 0, n - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if cdf_row[mid] > u:
            hi = mid
        else:
            lo = mid + 1
    if cdf_row[lo] <= u:
        # rounding left the total below u: take the last positive entry
        while lo > 0 and cdf_row[lo] == cdf_row[lo - 1]:
            lo -= 1
    return lo


@numba.njit(cache=True)
def _posterior(b, T, O, a, z, out):
    n = b.shape[0]
    total = 0.0
    for j in range(n):
        acc = 0.0
        for i in range(n):
            if b[i] != 0.0:
                acc += b[i] * T[i, a, j]
        acc *= O[j, z]
        out[j] = acc
        total += acc
    if total > 0.0:
        for j in range(n):
            out[j] /= total
    return total


@numba.njit(cache=True)
def _reward(b, goal):
    r = 0.0
    for i in range(b.shape[0]):
        if goal[i]:
            r += b[i]
    return r


@numba.njit(cache=True)
def _new_node(parent, a, z, q, d, belief, n_nodes, n_init, v_init, delta, n_actions,
              par, via_a, via_z, depth, dstate, visits, avisits, value, enabled, beliefs):
    i = n_nodes
    par[i] = parent
    via_a[i] = a
    via_z[i] = z
    depth[i] = d
    dstate[i] = q
    beliefs[i, :] = belief
    visits[i] = 0
    for x in range(n_actions):
        ok = q >= 0 and delta[q, z * n_actions + x] >= 0
        enabled[i, x] = ok
        if ok:
            avisits[i, x] = n_init
            value[i, x] = v_init
            visits[i] += n_init
    return i


@numba.njit(cache=True)
def _search(T, Tcdf, O, Ocdf, goal, delta, q0, s0, k, n_sims, c, sign, seed, n_init, v_init,
            record_every):
    n_states = T.shape[0]
    n_actions = T.shape[1]
    n_obs = O.shape[1]
    if seed >= 0:
        np.random.seed(seed)
    cap = n_sims + n_obs + 1
    par = np.full(cap, -1, np.int64)
    via_a = np.full(cap, -1, np.int64)
    via_z = np.full(cap, -1, np.int64)
    depth = np.zeros(cap, np.int64)
    dstate = np.full(cap, -1, np.int64)
    visits = np.zeros(cap, np.int64)
    avisits = np.zeros((cap, n_actions), np.int64)
    value = np.zeros((cap, n_actions))
    enabled = np.zeros((cap, n_actions), np.bool_)
    children = np.full((cap, n_actions, n_obs), -1, np.int64)
    particles = np.zeros((cap, n_states), np.int64)
    beliefs = np.zeros((cap, n_states))
    roots = np.full(n_obs, -1, np.int64)
    n_rec = n_sims // record_every if record_every > 0 else 0
    running = np.zeros((n_rec, 2))
    n_nodes = 0

    path_node = np.zeros(k + 1, np.int64)
    path_act = np.zeros(k + 1, np.int64)
    path_state = np.zeros(k + 1, np.int64)
    b = np.zeros(n_states)
    b2 = np.zeros(n_states)
    dirac = np.zeros(n_states)
    dirac[s0] = 1.0
    # blocked history: observations and actions up to the blocked step
    err_z = np.full(k + 1, -1, np.int64)
    err_a = np.full(k + 1, -1, np.int64)
    acts = np.zeros(n_actions, np.int64)

    # one root per possible initial observation, so the first simulation already descends
    for z in range(n_obs):
        if O[s0, z] > 0.0:
            roots[z] = _new_node(-1, -1, z, q0, 0, dirac, n_nodes, n_init, v_init, delta, n_actions,
                                 par, via_a, via_z, depth, dstate, visits, avisits, value, enabled, beliefs)
            n_nodes += 1

    for sim in range(n_sims):
        s = s0
        z = _sample(Ocdf[s])
        node = roots[z]
        fresh = False
        d = 0
        R = 0.0
        # tree phase
        while True:
            if d == k:
                R = sign * _reward(beliefs[node], goal)
                break
            if fresh:
                break
            best = -1
            best_v = -np.inf
            logn = np.log(visits[node]) if visits[node] > 0 else 0.0
            for x in range(n_actions):
                if not enabled[node, x]:
                    continue
                if avisits[node, x] == 0:
                    best = x
                    break
                v = value[node, x] + c * np.sqrt(logn / avisits[node, x])
                if v > best_v:
                    best_v = v
                    best = x
            if best < 0:
                h_node = node
                for t in range(depth[h_node], -1, -1):
                    err_z[t] = via_z[h_node]
                    if t > 0:
                        err_a[t - 1] = via_a[h_node]
                    h_node = par[h_node]
                return (-1.0, n_nodes, par, via_a, via_z, depth, visits, avisits, value, enabled,
                        particles, beliefs, running, err_z, err_a, d)
            a = best
            path_node[d] = node
            path_act[d] = a
            path_state[d] = s
            s = _sample(Tcdf[s, a])
            z = _sample(Ocdf[s])
            child = children[node, a, z]
            d += 1
            if child < 0:
                if d == k:
                    _posterior(beliefs[node], T, O, a, z, b2)
                    R = sign * _reward(b2, goal)
                    break
                _posterior(beliefs[node], T, O, a, z, b2)
                qn = delta[dstate[node], via_z[node] * n_actions + a]
                child = _new_node(node, a, z, qn, d, b2, n_nodes, n_init, v_init, delta, n_actions,
                                  par, via_a, via_z, depth, dstate, visits, avisits, value, enabled, beliefs)
                n_nodes += 1
                children[node, a, z] = child
                fresh = True
            node = child
        if fresh and d < k:
            # rollout from the new node
            b[:] = beliefs[node]
            q = dstate[node]
            zc = via_z[node]
            rd = d
            while rd < k:
                n_en = 0
                for x in range(n_actions):
                    if q >= 0 and delta[q, zc * n_actions + x] >= 0:
                        acts[n_en] = x
                        n_en += 1
                if n_en == 0:
                    h_node = node
                    for t in range(depth[h_node], -1, -1):
                        err_z[t] = via_z[h_node]
                        if t > 0:
                            err_a[t - 1] = via_a[h_node]
                        h_node = par[h_node]
                    return (-2.0, n_nodes, par, via_a, via_z, depth, visits, avisits, value, enabled,
                            particles, beliefs, running, err_z, err_a, rd)
                a = acts[int(np.random.random() * n_en)]
                err_a[rd] = a
                s = _sample(Tcdf[s, a])
                zn = _sample(Ocdf[s])
                _posterior(b, T, O, a, zn, b2)
                b[:] = b2
                q = delta[q, zc * n_actions + a]
                zc = zn
                rd += 1
                err_z[rd] = zn
            R = sign * _reward(b, goal)
        # backup along the tree path
        for t in range(d - 1, -1, -1):
            nd = path_node[t]
            a = path_act[t]
            particles[nd, path_state[t]] += 1
            visits[nd] += 1
            avisits[nd, a] += 1
            value[nd, a] += (R - value[nd, a]) / avisits[nd, a]
        if record_every > 0 and (sim + 1) % record_every == 0:
            running[(sim + 1) // record_every - 1, 0] = sim + 1
            running[(sim + 1) // record_every - 1, 1] = sign * _root_estimate(roots, value, avisits, enabled, Ocdf[s0])
    return (0.0, n_nodes, par, via_a, via_z, depth, visits, avisits, value, enabled,
            particles, beliefs, running, err_z, err_a, 0)


@numba.njit(cache=True)
def _root_estimate(roots, value, avisits, enabled, ocdf):
    total = 0.0
    prev = 0.0
    for z in range(roots.shape[0]):
        w = ocdf[z] - prev
        prev = ocdf[z]
        node = roots[z]
        if node < 0 or w == 0.0:
            continue
        best = -np.inf
        for a in range(value.shape[1]):
            if enabled[node, a] and avisits[node, a] > 0 and value[node, a] > best:
                best = value[node, a]
        if best > -np.inf:
            total += w * best
    return total


# --------------------------------------------------------------------------- API

def _dfa_arrays(dfa: ZaDfa):
    delta = np.full((dfa.n_states, len(dfa.alphabet)), -1, np.int64)
    for (q, sym) in dfa.delta:
        nxt = dfa.step(q, sym)
        if nxt is not None:
            delta[q, sym] = nxt
    q0 = dfa.initial if dfa.initial in dfa.accepting else -1
    return delta, q0


def _callable_to_dfa(pomdp: Pomdp, spec: BoundedUntilSpec, enabled) -> ZaDfa:
    """Tree za-DFA agreeing with ``enabled`` on every history reachable in ``k`` steps."""
    from .exact import _Tree, root_observations
    from .supervisor import history_to_string

    tree = _Tree(pomdp, spec, max_nodes=10 ** 9)
    alphabet = Alphabet.of(pomdp)
    b0 = np.zeros(pomdp.n_states)
    b0[pomdp.initial] = 1.0
    strings = []
    stack = [((z0,), b0) for z0 in root_observations(pomdp)]
    while stack:
        h, b = stack.pop()
        if len(h) // 2 >= spec.k:
            continue
        for a in sorted(enabled(h)):
            strings.append(history_to_string(h, a, alphabet))
            for z, _, b2 in tree.children(b, a):
                stack.append((h + (a, z), b2))
    return ZaDfa.from_strings(strings, alphabet)


def _run(pomdp: Pomdp, spec: BoundedUntilSpec, enabled: EnabledArg, cfg: PomcpConfig, mode: str) -> PomcpResult:
    cfg = cfg or PomcpConfig()
    alphabet = Alphabet.of(pomdp)
    if enabled is None:
        dfa = ZaDfa.trivial_full(alphabet)
    elif isinstance(enabled, ZaDfa):
        check_alphabet(pomdp, enabled)
        dfa = enabled
    else:
        dfa = _callable_to_dfa(pomdp, spec, enabled)
    delta, q0 = _dfa_arrays(dfa)
    absorbing = make_absorbing(pomdp, spec.phi1, spec.phi2)
    T = np.ascontiguousarray(absorbing.effective_transition(), dtype=np.float64)
    O = np.ascontiguousarray(pomdp.observation_fn, dtype=np.float64)
    Tcdf = np.cumsum(T, axis=2)
    Ocdf = np.cumsum(O, axis=1)
    goal = pomdp.sat(spec.phi2).astype(np.bool_)
    sign = 1.0 if mode == "max" else -1.0
    seed = -1 if cfg.seed is None else int(cfg.seed) % (2 ** 32)
    if cfg.seed is None:
        np.random.seed(None)
    out = _search(T, Tcdf, O, Ocdf, goal, delta, q0, pomdp.initial, spec.k, cfg.n_simulations,
                  float(cfg.ucb_c), sign, seed, cfg.n_init, float(cfg.v_init), cfg.record_every)
    (status, n, par, via_a, via_z, depth, visits, avisits, value, en, particles, beliefs,
     running, err_z, err_a, err_d) = out
    if status < 0:
        h = []
        for t in range(int(err_d) + 1):
            h.append(int(err_z[t]))
            if t < err_d:
                h.append(int(err_a[t]))
        raise BlockingError(f"no enabled action after history {tuple(h)} at step {err_d}", h)
    if spec.k == 0:
        p_hat = float(goal[pomdp.initial])
    else:
        roots = np.array([i for i in range(n) if par[i] < 0], dtype=np.int64)
        order = np.full(pomdp.n_observations, -1, np.int64)
        for i in roots:
            order[via_z[i]] = i
        p_hat = sign * _root_estimate(order, value, avisits, en, Ocdf[pomdp.initial])
    p_hat = min(1.0, max(0.0, float(p_hat)))
    return PomcpResult(p_hat, mode, int(n), par[:n], via_a[:n], via_z[:n], depth[:n], visits[:n],
                       avisits[:n], value[:n], en[:n], particles[:n], beliefs[:n], running)


def estimate_max(pomdp: Pomdp, spec: BoundedUntilSpec, enabled: EnabledArg = None,
                 cfg: Optional[PomcpConfig] = None) -> PomcpResult:
    """Estimate the maximal probability of ``phi1 U<=k phi2`` under the enabled actions.

    ``enabled`` is a za-DFA, a function from histories to action indices, or
    ``None`` for no restriction.
    """
    return _run(pomdp, spec, enabled, cfg or PomcpConfig(), "max")


def estimate_min(pomdp: Pomdp, spec: BoundedUntilSpec, enabled: EnabledArg = None,
                 cfg: Optional[PomcpConfig] = None) -> PomcpResult:
    """As :func:`estimate_max` with negated rewards; returns the minimal probability."""
    return _run(pomdp, spec, enabled, cfg or PomcpConfig(), "min")
