"""Randomized invariants over small generated models."""
import numpy as np
import pytest
from hypothesis import HealthCheck, assume, given, settings
from hypothesis import strategies as st

from oracles import random_pomdp
from pomdp_lstar.exact import optimal_value
from pomdp_lstar.learner import ObservationTable, has_prefix_in
from pomdp_lstar.model import Belief, belief_update, history_evidence
from pomdp_lstar.pctl import parse_spec
from pomdp_lstar.supervisor import Alphabet, ZaDfa, enabled_actions, product, simulate
from pomdp_lstar.synthesis import Continue, SynthesisConfig, audit_supervisor, preprocess, synthesize

SETTINGS = settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
seeds = st.integers(min_value=0, max_value=2**32 - 1)


def model_from(seed, **kw):
    return random_pomdp(np.random.default_rng(seed), **kw)


def random_strings(rng, alphabet, n, max_len=3):
    return {tuple(int(s) for s in rng.integers(0, len(alphabet), size=int(rng.integers(1, max_len + 1))))
            for _ in range(n)}


def random_supervisor(rng, alphabet):
    strings = random_strings(rng, alphabet, int(rng.integers(1, 8)))
    return ZaDfa.from_strings(strings, alphabet)


@SETTINGS
@given(seeds)
def test_belief_stays_normalized(seed):
    m = model_from(seed)
    rng = np.random.default_rng(seed)
    b = Belief.dirac(m.n_states, m.initial)
    for _ in range(4):
        a, z = int(rng.integers(m.n_actions)), int(rng.integers(m.n_observations))
        b2, ev = belief_update(b, a, z, m)
        if ev == 0.0:
            assert b2.is_empty
            break
        assert b2.probs.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(b2.probs >= 0)
        b = b2


@SETTINGS
@given(seeds)
def test_history_evidences_sum_to_one(seed):
    # over all observation continuations of a fixed action schedule
    m = model_from(seed)
    rng = np.random.default_rng(seed)
    acts = [int(a) for a in rng.integers(0, m.n_actions, size=2)]
    total = 0.0
    for z0 in range(m.n_observations):
        w0 = m.observation_fn[m.initial, z0]
        for z1 in range(m.n_observations):
            for z2 in range(m.n_observations):
                _, ev = history_evidence(m, (z0, acts[0], z1, acts[1], z2))
                total += w0 * ev
    assert total == pytest.approx(1.0, abs=1e-9)


@SETTINGS
@given(seeds)
def test_product_rows_substochastic(seed):
    m = model_from(seed)
    alphabet = Alphabet.of(m)
    prod = product(m, random_supervisor(np.random.default_rng(seed), alphabet))
    for row in prod.transitions.values():
        assert all(p > 0 for _, p in row)
        assert sum(p for _, p in row) <= 1 + 1e-9


@SETTINGS
@given(seeds)
def test_simulated_runs_replay_in_supervisor(seed):
    m = model_from(seed)
    alphabet = Alphabet.of(m)
    dfa = ZaDfa.trivial_full(alphabet)
    tr = simulate(m, dfa, 3, seed=seed)
    assert dfa.accepts(tr.string(alphabet))
    h = tr.history()
    for i, a in enumerate(tr.actions):
        assert a in enabled_actions(dfa, h[: 2 * i + 1])
    T = m.effective_transition()
    for s, a, s2 in zip(tr.states, tr.actions, tr.states[1:]):
        assert T[s, a, s2] > 0


@SETTINGS
@given(seeds)
def test_acceptor_languages_are_prefix_closed(seed):
    rng = np.random.default_rng(seed)
    alphabet = Alphabet(("z1", "z2"), ("a1", "a2"))
    kept = random_strings(rng, alphabet, 6)
    closed = {y[:i] for y in kept for i in range(len(y) + 1)}
    table = ObservationTable(alphabet).extend(lambda y: y in closed)
    lang = table.make_acceptor().language(3)
    assert all(y[:i] in lang for y in lang for i in range(len(y)))


@SETTINGS
@given(seeds)
def test_refinement_only_falsifies(seed):
    rng = np.random.default_rng(seed)
    alphabet = Alphabet(("z1", "z2"), ("a1", "a2"))
    kept = random_strings(rng, alphabet, 8)
    table = ObservationTable(alphabet).extend(lambda y: len(y) < 2 or y in kept)
    before = dict(table.G)
    banned = random_strings(rng, alphabet, 2, max_len=2)
    flipped = set(table.refine(banned))
    for s, v in table.G.items():
        if has_prefix_in(s, banned):
            assert v is False
        else:
            assert v == before[s]
        assert (s in flipped) == (before[s] and not v)


def solvable_case(seed):
    """A random model with a bound strictly between its unrestricted extremes, or ``None``."""
    rng = np.random.default_rng(seed)
    m = random_pomdp(rng, max_states=5, max_actions=3)
    k = int(rng.integers(1, 4))
    lhs = "true" if rng.random() < 0.5 else '!"bad"'
    probe = parse_spec(f'P<=1 [ {lhs} U<={k} "goal" ]')
    lo, _ = optimal_value(m, probe, "min")
    hi, _ = optimal_value(m, probe, "max")
    if hi - lo < 1e-6:
        return None
    bound = round(lo + (hi - lo) * float(rng.uniform(0.1, 0.9)), 6)
    return m, parse_spec(f'P<={bound} [ {lhs} U<={k} "goal" ]')


@settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(seeds)
def test_synthesized_supervisors_are_sound(seed):
    case = solvable_case(seed)
    assume(case is not None)
    m, spec = case
    assert isinstance(preprocess(m, spec), Continue)
    res = synthesize(m, spec, SynthesisConfig(audit=False))
    assert res.outcome == "supervisor"
    audit_supervisor(m, spec, res.dfa, preprocess(m, spec).sigma_min)
    lang = res.dfa.language(spec.k)
    assert all(y[:i] in lang for y in lang for i in range(len(y)))
    for a, b in zip(res.trace, res.trace[1:]):
        assert set(a["C_B"]) <= set(b["C_B"]) and set(a["C_S"]) <= set(b["C_S"])
