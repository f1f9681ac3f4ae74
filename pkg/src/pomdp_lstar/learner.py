"""Angluin-style observation table over za-DFA symbol strings."""
from __future__ import annotations

from typing import Callable, Dict, Iterable, List, Optional, Set, Tuple

from .supervisor import Alphabet, String, ZaDfa

Membership = Callable[[String], bool]


class TableError(RuntimeError):
    pass


class FalsificationAudit(AssertionError):
    """A table entry went from 0 to 1."""


def prefixes(y: String) -> List[String]:
    return [y[:i] for i in range(len(y) + 1)]


def suffixes(y: String) -> List[String]:
    return [y[i:] for i in range(len(y) + 1)]


def has_prefix_in(y: String, banned: Set[String]) -> bool:
    return any(y[:i] in banned for i in range(len(y) + 1))


class ObservationTable:
    """``(Y, E, G)`` with insertion-ordered ``Y`` and ``E``.

    ``G`` covers every string of ``(Y + Y.Sigma) . E``; entries are filled
    lazily through the membership function passed to :meth:`extend`.
    """

    def __init__(self, alphabet: Alphabet):
        self.alphabet = alphabet
        self.Y: List[String] = [()]
        self.E: List[String] = [()]
        self.G: Dict[String, bool] = {(): True}
        self.queries = 0
        self._ever_false: Set[String] = set()

    # -- basic access ------------------------------------------------------
    def extensions(self) -> List[String]:
        """``Y.Sigma`` rows not already in ``Y``, in table order."""
        ys = set(self.Y)
        out, seen = [], set()
        for y in self.Y:
            for a in self.alphabet.symbols():
                ya = y + (a,)
                if ya not in ys and ya not in seen:
                    seen.add(ya)
                    out.append(ya)
        return out

    def rows(self) -> List[String]:
        return self.Y + self.extensions()

    def row(self, y: String) -> Tuple[bool, ...]:
        return tuple(self.G[y + e] for e in self.E)

    def fill(self, membership: Membership):
        for y in self.rows():
            for e in self.E:
                s = y + e
                if s not in self.G:
                    self.set(s, membership(s))
                    self.queries += 1

    def set(self, s: String, value: bool):
        value = bool(value)
        if value and s in self._ever_false:
            raise FalsificationAudit(f"entry {s} flipped from 0 to 1")
        if not value:
            self._ever_false.add(s)
        self.G[s] = value

    def is_complete(self) -> bool:
        return all(y + e in self.G for y in self.rows() for e in self.E)

    # -- closedness / consistency -----------------------------------------
    def find_unclosed(self) -> Optional[String]:
        upper = {self.row(y) for y in self.Y}
        for y in self.Y:
            for a in self.alphabet.symbols():
                ya = y + (a,)
                if self.row(ya) not in upper:
                    return ya
        return None

    def find_inconsistent(self) -> Optional[String]:
        rows = [(y, self.row(y)) for y in self.Y]
        for i, (y1, r1) in enumerate(rows):
            for y2, r2 in rows[i + 1:]:
                if r1 != r2:
                    continue
                for a in self.alphabet.symbols():
                    for e in self.E:
                        if self.G[y1 + (a,) + e] != self.G[y2 + (a,) + e]:
                            return (a,) + e
        return None

    def is_closed(self) -> bool:
        return self.find_unclosed() is None

    def is_consistent(self) -> bool:
        return self.find_inconsistent() is None

    def add_row(self, y: String):
        if y not in self.Y:
            self.Y.append(y)

    def add_column(self, e: String):
        if e not in self.E:
            self.E.append(e)

    def extend(self, membership: Membership) -> "ObservationTable":
        """Fill and repair until closed and consistent."""
        while True:
            self.fill(membership)
            e = self.find_inconsistent()
            if e is not None:
                self.add_column(e)
                continue
            y = self.find_unclosed()
            if y is not None:
                self.add_row(y)
                continue
            return self

    def add_counterexample(self, y: String, membership: Membership, positive: bool = False) -> "ObservationTable":
        """Add ``y`` and its prefixes to ``Y``; a positive counterexample also adds its suffixes to ``E``."""
        for p in prefixes(y):
            self.add_row(p)
        if positive:
            for s in sorted(suffixes(y), key=len):
                self.add_column(s)
        return self.extend(membership)

    def refine(self, banned: Iterable[String]) -> List[String]:
        """Force ``G(y) = 0`` for every entry with a prefix in ``banned``; returns flipped strings."""
        banned = set(banned)
        flipped = []
        for s, v in list(self.G.items()):
            if v and has_prefix_in(s, banned):
                self.set(s, False)
                flipped.append(s)
        return sorted(flipped, key=lambda t: (len(t), t))

    # -- acceptor -----------------------------------------------------------
    def make_acceptor(self) -> ZaDfa:
        if not self.is_complete():
            raise TableError("table has unfilled entries")
        if not self.is_closed() or not self.is_consistent():
            raise TableError("table is not closed and consistent")
        reps: Dict[Tuple[bool, ...], int] = {}
        order: List[String] = []
        for y in self.Y:
            r = self.row(y)
            if r not in reps:
                reps[r] = len(reps)
                order.append(y)
        delta = {}
        for y in order:
            for a in self.alphabet.symbols():
                delta[(reps[self.row(y)], a)] = reps[self.row(y + (a,))]
        eps = self.E.index(())
        accepting = {reps[self.row(y)] for y in order if self.row(y)[eps]}
        return ZaDfa(len(reps), reps[self.row(())], self.alphabet, delta, accepting)

    # -- display ---------------------------------------------------------------
    def snapshot(self) -> Dict[str, object]:
        fmt = self.alphabet.format
        return {
            "Y": [fmt(y) for y in self.Y],
            "E": [fmt(e) for e in self.E],
            "rows": {fmt(y): "".join("1" if v else "0" for v in self.row(y)) for y in self.rows()},
        }

    def dump(self) -> str:
        fmt = self.alphabet.format
        head = ["G"] + [fmt(e) for e in self.E]
        body = [[fmt(y)] + ["1" if v else "0" for v in self.row(y)] for y in self.rows()]
        widths = [max(len(r[i]) for r in [head] + body) for i in range(len(head))]

        def line(r):
            return " | ".join(c.rjust(w) for c, w in zip(r, widths))

        out = [line(head), "-" * len(line(head))]
        out += [line(r) for r in body[: len(self.Y)]]
        out.append("-" * len(line(head)))
        out += [line(r) for r in body[len(self.Y):]]
        return "\n".join(out)
