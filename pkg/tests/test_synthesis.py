import io
import json

import pytest

from pomdp_lstar.model import Pomdp
from pomdp_lstar.pctl import parse_spec
from pomdp_lstar.supervisor import Alphabet, ZaDfa
from pomdp_lstar.synthesis import (BudgetExhausted, Continue, Membership, NegativeCex, PositiveCex, SynthesisConfig,
                                   TableCex, TriviallyAll, Unrealizable, audit_supervisor, iteration_budget,
                                   oracle_b, oracle_p, oracle_s, preprocess, sigma_strings, synthesize)
from replay import acceptor_at, recorded_trace, table_at


@pytest.fixture(scope="module")
def pre(pomdp, spec):
    return preprocess(pomdp, spec)


@pytest.fixture(scope="module")
def result(pomdp, spec):
    return synthesize(pomdp, spec)


def test_example_needs_learning(pre):
    assert isinstance(pre, Continue)
    assert pre.p_min <= 0.28 < pre.p_max


def test_loose_bound_is_trivial(pomdp):
    pre = preprocess(pomdp, parse_spec('P<=1 [ true U<=3 "fail" ]'))
    assert isinstance(pre, TriviallyAll)
    assert pre.dfa.n_states == 1


def test_goal_at_start_is_unrealizable(pomdp):
    pre = preprocess(pomdp, parse_spec('P<0 [ true U<=3 true ]'))
    assert isinstance(pre, Unrealizable)
    assert pre.dfa.accepting == frozenset()
    assert pre.dfa.language(3) == set()


def test_iteration_budget(alphabet):
    assert iteration_budget(alphabet, 3) == 2 * 6 ** 3


def test_membership_answers(pomdp, spec, alphabet):
    m = Membership(pomdp, spec)
    assert m(()) is True
    assert m(alphabet.parse("2")) is False
    assert m(alphabet.parse("13")) is True
    m.c_s.add(alphabet.parse("124"))
    assert m(alphabet.parse("124")) is False
    assert m(alphabet.parse("1243")) is False
    assert m.calls == 5


def test_minimizing_strings(pre, alphabet):
    texts = [alphabet.format(y) for y in sigma_strings(pre.sigma_min, alphabet, 3)]
    assert texts[:2] == ["1", "4"]
    assert all(len(t) <= 3 for t in texts)


def test_first_acceptor_misses_minimizing_string(pomdp, spec, pre, alphabet):
    cex = oracle_p(acceptor_at(pomdp, spec, 1), pre.sigma_min, 3)
    assert cex == PositiveCex(alphabet.parse("13"))
    assert oracle_p(ZaDfa.trivial_full(alphabet), pre.sigma_min, 3) is None


def test_second_acceptor_blocks(pomdp, spec, strings):
    table, membership = table_at(pomdp, spec, 2)
    cex = oracle_b(pomdp, table.make_acceptor(), 3, table.Y, membership.c_b)
    assert isinstance(cex, NegativeCex)
    assert cex.string == min(strings("11"))
    assert cex.banned == strings("11", "14", "41", "44")


def test_blocking_outside_table_is_a_table_counterexample(pomdp, figure, alphabet):
    cex = oracle_b(pomdp, figure("f2"), 3, [()], set())
    assert cex == TableCex(alphabet.parse("11"))


def test_nonblocking_acceptor_passes(pomdp, figure, alphabet):
    assert oracle_b(pomdp, figure("f5"), 3, [()], set()) is None
    assert oracle_b(pomdp, ZaDfa.trivial_full(alphabet), 3, [()], set()) is None


@pytest.mark.parametrize("iteration, text, mass", [(3, "124", 0.2916), (4, "121", 0.1179)])
def test_safety_counterexamples(pomdp, spec, pre, alphabet, iteration, text, mass):
    cex = oracle_s(pomdp, acceptor_at(pomdp, spec, iteration), spec, pre.sigma_min, set())
    assert alphabet.format(cex.string) == text
    assert cex.evidence == pytest.approx(mass, abs=1e-9)
    assert cex.banned == {cex.string}


def test_final_supervisor_passes_safety(pomdp, spec, pre, figure):
    assert oracle_s(pomdp, figure("f5"), spec, pre.sigma_min, set()) is None


def test_end_to_end_matches_recorded_trace(result):
    expected = recorded_trace()
    assert len(result.trace) == len(expected)
    for got, want in zip(result.trace, expected):
        got = json.loads(json.dumps(got, ensure_ascii=False))
        for key in want:
            if isinstance(want[key], float):
                assert got[key] == pytest.approx(want[key], abs=1e-9), key
            else:
                assert got[key] == want[key], key


def test_end_to_end_result(pomdp, spec, result, figure):
    assert result.outcome == "supervisor"
    assert result.p_final == pytest.approx(0.271, abs=1e-9)
    assert result.dfa.language(3) == figure("f5").language(3)
    audit_supervisor(pomdp, spec, result.dfa)


def test_banned_sets_only_grow(result):
    for a, b in zip(result.trace, result.trace[1:]):
        assert set(a["C_B"]) <= set(b["C_B"])
        assert set(a["C_S"]) <= set(b["C_S"])


def test_trace_file_is_json_lines(pomdp, spec):
    out = io.StringIO()
    res = synthesize(pomdp, spec, SynthesisConfig(trace_file=out))
    lines = out.getvalue().splitlines()
    assert len(lines) == res.iterations
    assert [json.loads(line)["iteration"] for line in lines] == list(range(1, res.iterations + 1))


def test_budget_exhaustion(pomdp, spec):
    with pytest.raises(BudgetExhausted) as err:
        synthesize(pomdp, spec, SynthesisConfig(max_iterations=2))
    assert err.value.result.outcome == "budget_exhausted"
    assert err.value.result.iterations == 2


def test_sampling_engine_reaches_same_language(pomdp, spec, result):
    res = synthesize(pomdp, spec, SynthesisConfig(engine="pomcp", pomcp_simulations=20_000, seed=0))
    assert res.outcome == "supervisor"
    assert res.p_final <= 0.28
    assert res.dfa.language(3) == result.dfa.language(3)


def test_audit_rejects_unsafe_supervisor(pomdp, spec, alphabet):
    with pytest.raises(AssertionError):
        audit_supervisor(pomdp, spec, ZaDfa.trivial_full(alphabet))


def test_single_action_model_is_decided_by_preprocessing():
    m = Pomdp.from_dicts(["s0", "s1"], "s0", ["a"], ["z"], {"s0": {"a": {"s1": 0.5, "s0": 0.5}}},
                         {"s0": {"z": 1.0}, "s1": {"z": 1.0}}, {"s1": ["bad"]})
    assert isinstance(preprocess(m, parse_spec('P<=0.5 [ true U<=1 "bad" ]')), TriviallyAll)
    assert isinstance(preprocess(m, parse_spec('P<=0.4 [ true U<=1 "bad" ]')), Unrealizable)
    assert len(Alphabet.of(m)) == 1
