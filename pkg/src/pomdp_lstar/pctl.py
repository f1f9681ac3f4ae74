"""PCTL formulas: AST, a small recursive-descent parser and the synthesizable fragment.

Concrete syntax::

    P<=0.28 [ true U<=3 "fail" ]
    P<0.5 [ "a" U<=2 "b" & !"c" ]

Atoms are double-quoted, ``!`` is negation, ``&`` conjunction, ``true``/``false``
are constants.  ``X f`` and unbounded ``U`` are accepted by the parser so any
PCTL state formula can be represented, but only a single top-level
``P<=p``/``P<p`` over a bounded until with propositional operands is
synthesizable.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import AbstractSet, Optional, Union

__all__ = [
    "TrueF", "Atom", "Not", "And", "Prob", "Until", "Next",
    "StateFormula", "PathFormula", "BoundedUntilSpec",
    "FormulaSyntaxError", "UnsupportedFragmentError",
    "parse", "to_text", "check_synthesizable", "parse_spec",
    "eval_state_formula", "is_propositional", "TRUE", "FALSE",
]


class FormulaSyntaxError(ValueError):
    def __init__(self, message: str, text: str, pos: int):
        line = text.count("\n", 0, pos) + 1
        col = pos - (text.rfind("\n", 0, pos) + 1) + 1
        super().__init__(f"{message} at line {line}, column {col}")
        self.line = line
        self.column = col


class UnsupportedFragmentError(ValueError):
    """Formula is valid PCTL but outside the fragment an operation supports."""

    def __init__(self, message: str, node=None):
        if node is not None:
            message = f"{message}: {to_text(node)}"
        super().__init__(message)
        self.node = node


@dataclass(frozen=True)
class TrueF:
    pass


@dataclass(frozen=True)
class Atom:
    name: str


@dataclass(frozen=True)
class Not:
    arg: "StateFormula"


@dataclass(frozen=True)
class And:
    left: "StateFormula"
    right: "StateFormula"


@dataclass(frozen=True)
class Until:
    left: "StateFormula"
    right: "StateFormula"
    bound: Optional[int] = None


@dataclass(frozen=True)
class Next:
    arg: "StateFormula"


@dataclass(frozen=True)
class Prob:
    cmp: str
    p: float
    path: "PathFormula"


StateFormula = Union[TrueF, Atom, Not, And, Prob]
PathFormula = Union[Until, Next]

TRUE = TrueF()
FALSE = Not(TRUE)

_CMPS = ("<=", ">=", "<", ">")


@dataclass(frozen=True)
class BoundedUntilSpec:
    """``P_{cmp p}[phi1 U<=k phi2]`` with ``cmp`` in ``{<=, <}``."""

    phi1: StateFormula
    phi2: StateFormula
    k: int
    cmp: str
    p: float

    def __post_init__(self):
        if self.cmp not in ("<=", "<"):
            raise UnsupportedFragmentError(f"comparison {self.cmp!r} is not an upper bound")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"threshold {self.p} outside [0, 1]")
        if self.k < 0:
            raise ValueError(f"negative horizon {self.k}")

    def holds(self, prob: float) -> bool:
        # the bound itself is compared exactly
        return bool(prob <= self.p if self.cmp == "<=" else prob < self.p)

    def to_formula(self) -> Prob:
        return Prob(self.cmp, self.p, Until(self.phi1, self.phi2, self.k))

    def __str__(self) -> str:
        return to_text(self.to_formula())


# ---------------------------------------------------------------- evaluation

def is_propositional(f) -> bool:
    if isinstance(f, (TrueF, Atom)):
        return True
    if isinstance(f, Not):
        return is_propositional(f.arg)
    if isinstance(f, And):
        return is_propositional(f.left) and is_propositional(f.right)
    return False


def eval_state_formula(f: StateFormula, labels: AbstractSet[str]) -> bool:
    """Truth of a propositional formula in a state carrying ``labels``."""
    if isinstance(f, TrueF):
        return True
    if isinstance(f, Atom):
        return f.name in labels
    if isinstance(f, Not):
        return not eval_state_formula(f.arg, labels)
    if isinstance(f, And):
        return eval_state_formula(f.left, labels) and eval_state_formula(f.right, labels)
    raise UnsupportedFragmentError("probabilistic operator inside a propositional context", f)


def atoms(f) -> set:
    if isinstance(f, Atom):
        return {f.name}
    if isinstance(f, (Not, Next)):
        return atoms(f.arg)
    if isinstance(f, (And, Until)):
        return atoms(f.left) | atoms(f.right)
    if isinstance(f, Prob):
        return atoms(f.path)
    return set()


# ---------------------------------------------------------------- printing

def _fmt_p(p: float) -> str:
    r = repr(float(p))
    return r[:-2] if r.endswith(".0") else r


def to_text(f) -> str:
    """Canonical text; ``parse(to_text(f)) == f`` for every AST."""
    if isinstance(f, TrueF):
        return "true"
    if isinstance(f, Atom):
        return '"' + f.name.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(f, Not):
        inner = to_text(f.arg)
        return "!" + (f"({inner})" if isinstance(f.arg, And) else inner)
    if isinstance(f, And):
        left = to_text(f.left)
        right = to_text(f.right)
        if isinstance(f.right, And):
            right = f"({right})"
        return f"{left} & {right}"
    if isinstance(f, Prob):
        return f"P{f.cmp}{_fmt_p(f.p)} [ {to_text(f.path)} ]"
    if isinstance(f, Until):
        op = "U" if f.bound is None else f"U<={f.bound}"
        return f"{_paren_path_operand(f.left)} {op} {_paren_path_operand(f.right)}"
    if isinstance(f, Next):
        return f"X {_paren_path_operand(f.arg)}"
    raise TypeError(f"not a formula: {f!r}")


def _paren_path_operand(f) -> str:
    text = to_text(f)
    return f"({text})" if isinstance(f, And) else text


# ---------------------------------------------------------------- parsing

class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def error(self, message, pos=None):
        raise FormulaSyntaxError(message, self.text, self.pos if pos is None else pos)

    def skip(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self, token: str) -> bool:
        self.skip()
        return self.text.startswith(token, self.pos)

    def peek_word(self, word: str) -> bool:
        self.skip()
        end = self.pos + len(word)
        if not self.text.startswith(word, self.pos):
            return False
        return end >= len(self.text) or not (self.text[end].isalnum() or self.text[end] == "_")

    def expect(self, token: str):
        if not self.peek(token):
            self.error(f"expected {token!r}")
        self.pos += len(token)

    def number(self) -> float:
        self.skip()
        start = self.pos
        while self.pos < len(self.text) and (self.text[self.pos].isdigit() or self.text[self.pos] in ".eE+-"):
            self.pos += 1
        try:
            return float(self.text[start:self.pos])
        except ValueError:
            self.error("expected a number", start)

    def integer(self) -> int:
        self.skip()
        start = self.pos
        while self.pos < len(self.text) and self.text[self.pos].isdigit():
            self.pos += 1
        if start == self.pos:
            self.error("expected a non-negative integer bound", start)
        return int(self.text[start:self.pos])

    def state(self):
        left = self.unary()
        while self.peek("&"):
            self.pos += 1
            left = And(left, self.unary())
        return left

    def unary(self):
        if self.peek("!"):
            self.pos += 1
            return Not(self.unary())
        return self.primary()

    def primary(self):
        self.skip()
        start = self.pos
        if self.peek("("):
            self.pos += 1
            f = self.state()
            self.expect(")")
            return f
        if self.peek('"'):
            return self.atom()
        if self.peek_word("true"):
            self.pos += 4
            return TRUE
        if self.peek_word("false"):
            self.pos += 5
            return FALSE
        if self.peek("P"):
            return self.prob()
        if self.pos >= len(self.text):
            self.error("unexpected end of input")
        self.error(f"unexpected character {self.text[start]!r}")

    def atom(self):
        self.expect('"')
        out = []
        while True:
            if self.pos >= len(self.text):
                self.error("unterminated atom")
            c = self.text[self.pos]
            if c == "\\" and self.pos + 1 < len(self.text):
                out.append(self.text[self.pos + 1])
                self.pos += 2
                continue
            self.pos += 1
            if c == '"':
                break
            out.append(c)
        if not out:
            self.error("empty atom name", self.pos - 2)
        return Atom("".join(out))

    def prob(self):
        self.expect("P")
        for cmp in _CMPS:
            if self.text.startswith(cmp, self.pos):
                self.pos += len(cmp)
                break
        else:
            self.error("expected a comparison after P")
        at = self.pos
        p = self.number()
        if not 0.0 <= p <= 1.0:
            self.error(f"probability bound {p} outside [0, 1]", at)
        self.expect("[")
        path = self.path()
        self.expect("]")
        return Prob(cmp, p, path)

    def path(self):
        if self.peek_word("X"):
            self.pos += 1
            return Next(self.state())
        left = self.state()
        self.skip()
        if not self.peek("U"):
            self.error("expected 'U' or 'X' in path formula")
        self.pos += 1
        bound = None
        if self.text.startswith("<=", self.pos):
            self.pos += 2
            bound = self.integer()
        elif self.text.startswith("<", self.pos):
            self.error("strict step bounds are not supported; use U<=k")
        right = self.state()
        return Until(left, right, bound)


def parse(text: str):
    """Parse a PCTL state formula."""
    parser = _Parser(text)
    f = parser.state()
    parser.skip()
    if parser.pos != len(text):
        parser.error("trailing input")
    return f


def check_synthesizable(f) -> BoundedUntilSpec:
    if not isinstance(f, Prob):
        raise UnsupportedFragmentError("expected a top-level P operator", f)
    if f.cmp not in ("<=", "<"):
        raise UnsupportedFragmentError("only upper probability bounds (<=, <) are synthesizable", f)
    path = f.path
    if isinstance(path, Next):
        raise UnsupportedFragmentError("next operator is not synthesizable", path)
    if path.bound is None:
        raise UnsupportedFragmentError("unbounded until is not synthesizable", path)
    for operand in (path.left, path.right):
        if not is_propositional(operand):
            raise UnsupportedFragmentError("nested probabilistic operator", operand)
    return BoundedUntilSpec(path.left, path.right, path.bound, f.cmp, f.p)


def parse_spec(text: str) -> BoundedUntilSpec:
    return check_synthesizable(parse(text))
