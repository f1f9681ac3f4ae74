"""Supervisor synthesis: L* with a coverage oracle, a blocking oracle and a specification oracle.

Each iteration extends the observation table, builds an acceptor and asks
three oracles in order:

* coverage (P): the acceptor must accept every string of the minimizing
  adversary, otherwise the first missing one is a positive counterexample;
* blocking (B): the product with the model must be non-blocking, otherwise
  strings leading into dark states are banned;
* specification (S): the maximal violation probability under the acceptor
  must meet the bound, otherwise the strongest violating path is banned.

Banned strings are forced to 0 in the table and never come back.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Set, TextIO, Tuple, Union

from .exact import (Adversary, build_derived_dtmc, check_supervisor, optimal_value,
                    policy_string_value, strongest_evidence)
from .learner import ObservationTable, has_prefix_in
from .model import Pomdp
from .pctl import BoundedUntilSpec
from .supervisor import (Alphabet, String, ZaDfa, check_alphabet, dark_state_pruning,
                         enabled_actions, history_to_string, nonblocking_check, product,
                         string_histories)

log = logging.getLogger(__name__)


class BudgetExhausted(RuntimeError):
    def __init__(self, message: str, result: "SynthesisResult"):
        super().__init__(message)
        self.result = result


class InternalContradiction(AssertionError):
    """An oracle found no counterexample where the algorithm guarantees one."""


# --------------------------------------------------------------------------- results

@dataclass
class Continue:
    sigma_min: Adversary
    sigma_max: Adversary
    p_min: float
    p_max: float


@dataclass
class TriviallyAll:
    dfa: ZaDfa
    p_max: float


@dataclass
class Unrealizable:
    dfa: ZaDfa
    p_min: float


Preprocessed = Union[Continue, TriviallyAll, Unrealizable]


@dataclass(frozen=True)
class PositiveCex:
    string: String


@dataclass(frozen=True)
class TableCex:
    string: String


@dataclass(frozen=True)
class NegativeCex:
    string: String
    banned: frozenset
    evidence: Optional[float] = None
    p_c: Optional[float] = None


@dataclass
class SynthesisResult:
    outcome: str  # "supervisor", "trivially_all", "unrealizable", "budget_exhausted"
    dfa: ZaDfa
    p_final: Optional[float]
    iterations: int
    trace: List[dict] = field(default_factory=list)
    p_min: Optional[float] = None
    p_max: Optional[float] = None
    c_b: Set[String] = field(default_factory=set)
    c_s: Set[String] = field(default_factory=set)

    def summary(self) -> dict:
        return {"outcome": self.outcome, "p_final": self.p_final, "iterations": self.iterations,
                "p_min": self.p_min, "p_max": self.p_max, "states": self.dfa.n_states}


@dataclass
class SynthesisConfig:
    engine: str = "exact"  # or "pomcp"
    pomcp_margin: float = 0.05
    pomcp_simulations: int = 100_000
    ucb_c: float = 1.0
    seed: Optional[int] = 0
    max_iterations: Optional[int] = None
    max_nodes: int = 2_000_000
    trace_file: Optional[TextIO] = None
    audit: bool = True


def iteration_budget(alphabet: Alphabet, k: int) -> int:
    return 2 * len(alphabet) ** k


# --------------------------------------------------------------------------- steps

def preprocess(pomdp: Pomdp, spec: BoundedUntilSpec, max_nodes: int = 2_000_000) -> Preprocessed:
    alphabet = Alphabet.of(pomdp)
    p_max, sigma_max = optimal_value(pomdp, spec, "max", max_nodes=max_nodes)
    if spec.holds(p_max):
        return TriviallyAll(ZaDfa.trivial_full(alphabet), p_max)
    p_min, sigma_min = optimal_value(pomdp, spec, "min", max_nodes=max_nodes)
    if not spec.holds(p_min):
        return Unrealizable(ZaDfa.empty(alphabet).with_no_states(), p_min)
    return Continue(sigma_min, sigma_max, p_min, p_max)


class Membership:
    """Membership oracle: can the single policy ``y`` be used as a supervisor?

    Values are cached per truncated string; strings with a banned prefix are
    answered 0 without model checking.
    """

    def __init__(self, pomdp: Pomdp, spec: BoundedUntilSpec):
        self.pomdp = pomdp
        self.spec = spec
        self.c_b: Set[String] = set()
        self.c_s: Set[String] = set()
        self.values: Dict[String, float] = {}
        self.calls = 0

    def banned(self) -> Set[String]:
        return self.c_b | self.c_s

    def value(self, y: String) -> float:
        y = y[: self.spec.k]
        if y not in self.values:
            self.values[y] = policy_string_value(self.pomdp, self.spec, y)
        return self.values[y]

    def __call__(self, y: String) -> bool:
        self.calls += 1
        if not y:
            return True
        if has_prefix_in(y, self.banned()):
            return False
        if self.spec.k == 0:
            return True
        return self.spec.holds(self.value(y))


def sigma_strings(sigma: Adversary, alphabet: Alphabet, k: int) -> List[String]:
    """History-action strings of ``sigma`` of length at most ``k``, shortest then lexicographic."""
    out = {history_to_string(h, a, alphabet) for h, a in sigma.choices.items() if len(h) // 2 < k}
    return sorted(out, key=lambda y: (len(y), y))


def oracle_p(dfa: ZaDfa, sigma_min: Adversary, k: int) -> Optional[PositiveCex]:
    for y in sigma_strings(sigma_min, dfa.alphabet, k):
        if not dfa.accepts(y):
            return PositiveCex(y)
    return None


def oracle_b(pomdp: Pomdp, dfa: ZaDfa, k: int, table_rows, c_b: Set[String]):
    """``None`` if non-blocking, else a :class:`TableCex` or :class:`NegativeCex`."""
    prod = product(pomdp, dfa)
    blocked = nonblocking_check(prod, k)
    if blocked is None:
        return None
    if blocked.string not in set(table_rows):
        return TableCex(blocked.string)
    found = dark_state_pruning(prod, k)
    banned = frozenset(c_b | found)
    if not banned:
        raise InternalContradiction(f"blocked at {blocked.name} but no transition into a dark state")
    y = min(banned, key=lambda t: (len(t), t))
    return NegativeCex(y, banned)


def sigma_consistent(y: String, sigma: Adversary, alphabet: Alphabet) -> bool:
    return all(sigma.choices.get(h) == a for h, a in string_histories(y, alphabet))


def oracle_s(pomdp: Pomdp, dfa: ZaDfa, spec: BoundedUntilSpec, sigma_min: Adversary,
             c_s: Set[String], value_fn: Optional[Callable] = None):
    """``None`` if the acceptor meets the bound, else a :class:`NegativeCex`."""
    if value_fn is not None:
        verdict = value_fn(dfa)
        if verdict is True:
            return None
    check = check_supervisor(pomdp, dfa, spec)
    if check.satisfied:
        return None
    alphabet = dfa.alphabet
    derived = build_derived_dtmc(pomdp, spec, check.witness)
    found = strongest_evidence(derived, skip=lambda y: sigma_consistent(y, sigma_min, alphabet))
    if found is None:
        raise InternalContradiction("every violating path agrees with the minimizing adversary")
    y, mass = found
    return NegativeCex(y, frozenset(c_s | {y}), evidence=mass, p_c=check.p_c)


def _pomcp_fast_pass(pomdp, spec, cfg: SynthesisConfig):
    from .pomcp import PomcpConfig, estimate_max

    def check(dfa: ZaDfa) -> bool:
        est = estimate_max(pomdp, spec, lambda h: enabled_actions(dfa, h),
                           PomcpConfig(cfg.pomcp_simulations, cfg.ucb_c, cfg.seed))
        # only a clear pass skips the exact check
        return est.p_hat <= spec.p - cfg.pomcp_margin

    return check


# --------------------------------------------------------------------------- loop

def synthesize(pomdp: Pomdp, spec: BoundedUntilSpec, config: Optional[SynthesisConfig] = None) -> SynthesisResult:
    cfg = config or SynthesisConfig()
    alphabet = Alphabet.of(pomdp)
    k = spec.k
    pre = preprocess(pomdp, spec, cfg.max_nodes)
    if isinstance(pre, TriviallyAll):
        return SynthesisResult("trivially_all", pre.dfa, pre.p_max, 0, p_max=pre.p_max)
    if isinstance(pre, Unrealizable):
        return SynthesisResult("unrealizable", pre.dfa, None, 0, p_min=pre.p_min)

    membership = Membership(pomdp, spec)
    table = ObservationTable(alphabet)
    budget = cfg.max_iterations or iteration_budget(alphabet, k)
    value_fn = _pomcp_fast_pass(pomdp, spec, cfg) if cfg.engine == "pomcp" else None
    result = SynthesisResult("budget_exhausted", ZaDfa.empty(alphabet), None, 0,
                             p_min=pre.p_min, p_max=pre.p_max)

    for it in range(1, budget + 1):
        result.iterations = it
        table.extend(membership)
        dfa = table.make_acceptor()
        record = {"iteration": it, "acceptor": {"states": dfa.n_states, "accepting": len(dfa.accepting)},
                  "E": [alphabet.format(e) for e in table.E], "Y": [alphabet.format(y) for y in table.Y]}

        cex = oracle_p(dfa, pre.sigma_min, k)
        record["oracle_p"] = "pass" if cex is None else "fail"
        if cex is not None:
            record["counterexample"] = {"kind": "positive", "string": alphabet.format(cex.string)}
            _emit(result, record, membership, cfg)
            table.add_counterexample(cex.string, membership, positive=True)
            continue

        cex = oracle_b(pomdp, dfa, k, table.Y, membership.c_b)
        record["oracle_b"] = "pass" if cex is None else "fail"
        if isinstance(cex, TableCex):
            record["counterexample"] = {"kind": "table", "string": alphabet.format(cex.string)}
            _emit(result, record, membership, cfg)
            table.add_counterexample(cex.string, membership)
            continue
        if cex is not None:
            _ban(membership.c_b, cex.banned)
            record["counterexample"] = {"kind": "negative", "string": alphabet.format(cex.string)}
            _emit(result, record, membership, cfg)
            table.refine(membership.banned())
            table.add_counterexample(cex.string, membership)
            continue

        cex = oracle_s(pomdp, dfa, spec, pre.sigma_min, membership.c_s, value_fn)
        record["oracle_s"] = "pass" if cex is None else "fail"
        if cex is not None:
            _ban(membership.c_s, cex.banned)
            record["counterexample"] = {"kind": "negative", "string": alphabet.format(cex.string),
                                        "evidence": cex.evidence}
            record["p_c"] = cex.p_c
            _emit(result, record, membership, cfg)
            table.refine(membership.banned())
            table.add_counterexample(cex.string, membership)
            continue

        final = check_supervisor(pomdp, dfa, spec)
        record["p_c"] = final.p_c
        _emit(result, record, membership, cfg)
        result.outcome = "supervisor"
        result.dfa = dfa.pruned()
        result.p_final = final.p_c
        result.c_b, result.c_s = set(membership.c_b), set(membership.c_s)
        if cfg.audit:
            audit_supervisor(pomdp, spec, result.dfa, pre.sigma_min)
        return result

    result.c_b, result.c_s = set(membership.c_b), set(membership.c_s)
    raise BudgetExhausted(f"no supervisor within {budget} iterations", result)


def _ban(target: Set[String], strings):
    before = set(target)
    target |= set(strings)
    assert before <= target


def _emit(result: SynthesisResult, record: dict, membership: Membership, cfg: SynthesisConfig):
    alphabet = result.dfa.alphabet
    record["C_B"] = [alphabet.format(y) for y in sorted(membership.c_b, key=lambda t: (len(t), t))]
    record["C_S"] = [alphabet.format(y) for y in sorted(membership.c_s, key=lambda t: (len(t), t))]
    result.trace.append(record)
    log.info("iteration %d: %s", record["iteration"], record.get("counterexample", "pass"))
    if cfg.trace_file is not None:
        cfg.trace_file.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")


def audit_supervisor(pomdp: Pomdp, spec: BoundedUntilSpec, dfa: ZaDfa, sigma_min: Optional[Adversary] = None):
    """Independent re-check of a synthesized supervisor; raises ``AssertionError`` on failure."""
    check_alphabet(pomdp, dfa)
    blocked = nonblocking_check(product(pomdp, dfa), spec.k)
    assert blocked is None, f"supervisor blocks at {blocked}"
    check = check_supervisor(pomdp, dfa, spec)
    assert check.satisfied, f"supervisor violates the bound: {check.p_c}"
    if sigma_min is not None:
        missing = oracle_p(dfa, sigma_min, spec.k)
        assert missing is None, f"supervisor drops a minimizing string {missing.string}"
