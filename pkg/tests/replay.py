"""Rebuild intermediate learner states of the bundled example from its recorded trace."""
import json

from pomdp_lstar.io import fixture_dir
from pomdp_lstar.learner import ObservationTable
from pomdp_lstar.supervisor import Alphabet
from pomdp_lstar.synthesis import Membership


def recorded_trace():
    path = fixture_dir() / "expected_trace.jsonl"
    return [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]


def table_at(pomdp, spec, iteration):
    """Closed and consistent table (and its membership oracle) at the start of ``iteration``."""
    alphabet = Alphabet.of(pomdp)
    membership = Membership(pomdp, spec)
    table = ObservationTable(alphabet)
    table.extend(membership)
    for rec in recorded_trace()[: iteration - 1]:
        cex = rec["counterexample"]
        y = alphabet.parse(cex["string"])
        if cex["kind"] == "positive":
            table.add_counterexample(y, membership, positive=True)
        elif cex["kind"] == "table":
            table.add_counterexample(y, membership)
        else:
            membership.c_b |= {alphabet.parse(s) for s in rec["C_B"]}
            membership.c_s |= {alphabet.parse(s) for s in rec["C_S"]}
            table.refine(membership.banned())
            table.add_counterexample(y, membership)
    return table, membership


def acceptor_at(pomdp, spec, iteration):
    table, _ = table_at(pomdp, spec, iteration)
    return table.make_acceptor()
