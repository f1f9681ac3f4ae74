"""End-to-end acceptance checks; each prints one PASS/FAIL line."""
import time

import numpy as np
import pytest

import conftest
import test_properties as props
from oracles import brute_force_optimum, path_policy_value
from pomdp_lstar import exact
from pomdp_lstar.learner import ObservationTable
from pomdp_lstar.pomcp import PomcpConfig, estimate_max
from pomdp_lstar.supervisor import Alphabet
from pomdp_lstar.synthesis import Membership, iteration_budget, preprocess, sigma_consistent, synthesize
from replay import acceptor_at, recorded_trace, table_at
from test_exact import random_case

TABLE_III = {"ε": "1", "2": "0", "1": "1", "3": "0", "4": "1", "5": "0", "6": "0",
             "21": "0", "22": "0", "23": "0", "24": "0", "25": "0", "26": "0"}

TABLE_IV = {"ε": "101", "2": "000", "1": "110", "13": "111", "11": "100",
            "3": "000", "4": "110", "5": "000", "6": "000",
            "12": "111", "14": "100", "15": "111", "16": "111",
            "111": "000", "112": "000", "113": "000", "114": "111", "115": "111", "116": "111"}
TABLE_IV.update({f"2{d}": "000" for d in "123456"})
TABLE_IV.update({f"13{d}": "111" for d in "123456"})


def report(n, ok, detail):
    line = f"criterion {n} {'PASS' if ok else 'FAIL'}: {detail}"
    conftest.ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def table_bits(table, alphabet):
    return {alphabet.format(y): "".join("1" if v else "0" for v in table.row(y)) for y in table.rows()}


def test_criterion_1_membership_tables(pomdp, spec, alphabet):
    start = time.perf_counter()
    membership = Membership(pomdp, spec)
    table = ObservationTable(alphabet).extend(membership)
    first = table_bits(table, alphabet)
    table.add_counterexample(alphabet.parse("13"), membership, positive=True)
    table.extend(membership)
    second = table_bits(table, alphabet)
    elapsed = time.perf_counter() - start
    ok = first == TABLE_III and second == TABLE_IV and elapsed < 5.0
    report(1, ok, f"first table {len(first)} rows {'matches' if first == TABLE_III else 'differs'}, "
                  f"second table {len(second)} rows {'matches' if second == TABLE_IV else 'differs'}, "
                  f"{elapsed:.2f}s")


def test_criterion_2_counterexample_masses(pomdp, spec, alphabet):
    trace = recorded_trace()
    pre = preprocess(pomdp, spec)
    found = {}
    for it in (3, 4):
        dfa = acceptor_at(pomdp, spec, it)
        check = exact.check_supervisor(pomdp, dfa, spec)
        d = exact.build_derived_dtmc(pomdp, spec, check.witness)
        y, mass = exact.strongest_evidence(d, skip=lambda s: sigma_consistent(s, pre.sigma_min, alphabet))
        found[it] = (alphabet.format(y), mass)
    recorded = {it: (trace[it - 1]["counterexample"]["string"], trace[it - 1]["counterexample"]["evidence"])
                for it in (3, 4)}
    ok = (found[3][0] == "124" and abs(found[3][1] - 0.2916) <= 1e-9
          and found[4][0] == "121" and abs(found[4][1] - 0.1179) <= 1e-9
          and recorded[3][0] == "124" and abs(recorded[3][1] - 0.2916) <= 1e-9
          and recorded[4][0] == "121" and abs(recorded[4][1] - 0.1179) <= 1e-9)
    report(2, ok, f"iteration 3 {found[3][0]} {found[3][1]:.10f}, iteration 4 {found[4][0]} {found[4][1]:.10f}")


def test_criterion_3_final_supervisor(pomdp, spec, figure):
    result = synthesize(pomdp, spec)
    same_language = result.dfa.language(3) == figure("f5").language(3)
    value_ok = result.p_final is not None and abs(result.p_final - 0.271) <= 1e-9 and result.p_final <= 0.28
    ok = result.outcome == "supervisor" and result.iterations == 6 and same_language and value_ok
    # the iteration count cannot reach 6 with the published counterexamples; see the notes ledger
    report(3, ok, f"outcome {result.outcome}, {result.iterations} iterations (target 6), "
                  f"language {'equals' if same_language else 'differs from'} the final figure, "
                  f"value {result.p_final:.10f}")


def test_criterion_4_recorded_extremes(pomdp, spec):
    p_min, _ = exact.optimal_value(pomdp, spec, "min")
    p_max, _ = exact.optimal_value(pomdp, spec, "max")
    witness = exact.check_supervisor(pomdp, acceptor_at(pomdp, spec, 4), spec).p_c
    pinned = (abs(p_min - 0.1) <= 1e-9 and abs(p_max - 0.999) <= 1e-9 and abs(witness - 0.4006) <= 1e-9)
    ok = pinned and spec.holds(p_min) and not spec.holds(p_max)
    report(4, ok, f"p_min {p_min:.4f} (published 0, delta {p_min:+.4f}), "
                  f"p_max {p_max:.4f} (published 0.96, delta {p_max - 0.96:+.4f}), "
                  f"iteration-4 witness {witness:.4f} (published 0.3882, delta {witness - 0.3882:+.4f})")


def test_criterion_5_oracle_equivalence():
    start = time.perf_counter()
    worst_opt = worst_policy = 0.0
    n = 200
    for seed in range(n):
        m, spec, (goal, safe), rng = random_case(10_000 + seed)
        for mode in ("max", "min"):
            got, _ = exact.optimal_value(m, spec, mode)
            worst_opt = max(worst_opt, abs(got - brute_force_optimum(m, goal, safe, spec.k, mode)))
        alphabet = Alphabet.of(m)
        y = tuple(int(s) for s in rng.integers(0, len(alphabet), size=int(rng.integers(1, 5))))
        expected = path_policy_value(m, goal, safe, spec.k, [alphabet.obs(s) for s in y],
                                     [alphabet.act(s) for s in y])
        worst_policy = max(worst_policy, abs(exact.policy_string_value(m, spec, y) - expected))
    elapsed = time.perf_counter() - start
    ok = worst_opt <= 1e-9 and worst_policy <= 1e-9 and elapsed < 60.0
    report(5, ok, f"{n} models, max optimum error {worst_opt:.1e}, max policy error {worst_policy:.1e}, "
                  f"{elapsed:.1f}s")


def test_criterion_6_sampling_convergence(pomdp, spec, figure):
    f5 = figure("f5")
    estimate_max(pomdp, spec, f5, PomcpConfig(10, 1.0, seed=0))  # compile outside the timed region
    start = time.perf_counter()
    errors = [abs(estimate_max(pomdp, spec, f5, PomcpConfig(200_000, 1.0, seed=s)).p_hat - 0.271)
              for s in range(20)]
    elapsed = time.perf_counter() - start
    close = sum(e <= 0.02 for e in errors)
    ok = close >= 18 and elapsed < 60.0
    report(6, ok, f"{close}/20 seeds within 0.02, worst error {max(errors):.4f}, {elapsed:.1f}s")


PROPERTY_SUITES = [
    props.test_acceptor_languages_are_prefix_closed,
    props.test_refinement_only_falsifies,
    props.test_product_rows_substochastic,
    props.test_belief_stays_normalized,
    props.test_history_evidences_sum_to_one,
    props.test_simulated_runs_replay_in_supervisor,
    props.test_synthesized_supervisors_are_sound,
]


def test_criterion_7_property_suites():
    failed = []
    for suite in PROPERTY_SUITES:
        try:
            suite()
        except Exception as e:  # noqa: BLE001 - collect every failing suite
            failed.append(f"{suite.__name__}: {type(e).__name__}")
    report(7, not failed, f"{len(PROPERTY_SUITES) - len(failed)}/{len(PROPERTY_SUITES)} property suites hold"
                          + (f" ({'; '.join(failed)})" if failed else ""))


def test_criterion_8_iteration_budget(pomdp, spec):
    runs = [(pomdp, spec)]
    seed = 0
    while len(runs) < 51:
        case = props.solvable_case(20_000 + seed)
        seed += 1
        if case is not None:
            runs.append(case)
    worst = 0.0
    over = 0
    for m, s in runs:
        res = synthesize(m, s)
        budget = iteration_budget(Alphabet.of(m), s.k)
        worst = max(worst, res.iterations / budget)
        over += res.iterations > budget or res.outcome != "supervisor"
    report(8, over == 0, f"{len(runs)} runs, {over} over budget, largest share of budget used {worst:.3f}")
