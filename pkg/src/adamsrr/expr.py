"""Virtual bundle expression language: AST, symbol tables, parser, printer, rank.

Expressions are formal combinations of line/bundle symbols under sum, tensor,
dual, integer powers and the operations psi^k (Adams), theta^k (Bott class),
tau_p (truncated symmetric algebra), det (top exterior class) and pullback
along a named morphism.  Values are immutable; the canonical printer and the
parser are mutually inverse on canonical forms.
"""

from __future__ import annotations

from dataclasses import dataclass


class ExprError(Exception):
    """Base class for expression-layer errors."""


class ParseError(ExprError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class SymbolError(ExprError):
    pass


class RankError(ExprError):
    pass


# ---------------------------------------------------------------------------
# Symbol tables

LINE = "line"
BUNDLE = "bundle"


class SymbolTable:
    """Declared symbols of one space: name -> (kind, rank).

    Lines always have rank 1.  `rel_dim` reserves the relative-differentials
    symbol (rank = rel_dim; rank 0 is allowed only for that reserved symbol,
    standing for the zero sheaf when the relative dimension is 0).
    """

    OMEGA = "Omega_f"

    def __init__(self, rel_dim: int | None = None, space: str = "X"):
        self.space = space
        self.rel_dim = rel_dim
        self.entries: dict[str, tuple[str, int]] = {}
        if rel_dim is not None:
            if rel_dim < 0:
                raise SymbolError("relative dimension must be >= 0")
            self.entries[self.OMEGA] = (BUNDLE, rel_dim)

    def declare_line(self, name: str) -> None:
        self._declare(name, LINE, 1)

    def declare_bundle(self, name: str, rank: int) -> None:
        if rank < 1:
            raise SymbolError(f"bundle {name!r} must have rank >= 1, got {rank}")
        self._declare(name, BUNDLE, rank)

    def reserve_bundle(self, name: str, rank: int) -> None:
        """Register an internal bundle symbol; rank 0 allowed (zero sheaf)."""
        if rank < 0:
            raise SymbolError(f"bundle {name!r} must have rank >= 0, got {rank}")
        self._declare(name, BUNDLE, rank)

    def _declare(self, name: str, kind: str, rank: int) -> None:
        if not name or not _is_name(name):
            raise SymbolError(f"bad symbol name {name!r}")
        if name in self.entries:
            if self.entries[name] != (kind, rank):
                raise SymbolError(
                    f"symbol {name!r} redeclared as {kind} rank {rank}, "
                    f"was {self.entries[name][0]} rank {self.entries[name][1]}"
                )
            return
        self.entries[name] = (kind, rank)

    def kind(self, name: str) -> str:
        return self._lookup(name)[0]

    def rank(self, name: str) -> int:
        return self._lookup(name)[1]

    def _lookup(self, name: str) -> tuple[str, int]:
        try:
            return self.entries[name]
        except KeyError:
            raise SymbolError(f"undeclared symbol {name!r} on space {self.space}") from None

    def __contains__(self, name: str) -> bool:
        return name in self.entries

    def names(self) -> list[str]:
        return sorted(self.entries)


def _is_name(s: str) -> bool:
    return s[0].isalpha() or s[0] == "_" if s else False


# ---------------------------------------------------------------------------
# AST

@dataclass(frozen=True)
class Expr:
    def __add__(self, other: Expr) -> Expr:
        return Sum((self, _coerce(other)))

    def __radd__(self, other) -> Expr:
        return Sum((_coerce(other), self))

    def __sub__(self, other) -> Expr:
        return Sum((self, Neg(_coerce(other))))

    def __rsub__(self, other) -> Expr:
        return Sum((_coerce(other), Neg(self)))

    def __mul__(self, other) -> Expr:
        return Tensor((self, _coerce(other)))

    def __rmul__(self, other) -> Expr:
        return Tensor((_coerce(other), self))

    def __neg__(self) -> Expr:
        return Neg(self)

    def __pow__(self, k: int) -> Expr:
        return Power(self, k)

    def __str__(self) -> str:
        return print_expr(self)


def _coerce(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, int):
        return IntConst(x)
    raise TypeError(f"cannot treat {x!r} as an expression")


@dataclass(frozen=True)
class Line(Expr):
    name: str


@dataclass(frozen=True)
class Bundle(Expr):
    name: str


@dataclass(frozen=True)
class Unit(Expr):
    pass


@dataclass(frozen=True)
class IntConst(Expr):
    value: int


@dataclass(frozen=True)
class Sum(Expr):
    terms: tuple[Expr, ...]


@dataclass(frozen=True)
class Neg(Expr):
    arg: Expr


@dataclass(frozen=True)
class Tensor(Expr):
    factors: tuple[Expr, ...]


@dataclass(frozen=True)
class Dual(Expr):
    arg: Expr


@dataclass(frozen=True)
class Psi(Expr):
    k: int
    arg: Expr


@dataclass(frozen=True)
class Theta(Expr):
    k: int
    arg: Expr


@dataclass(frozen=True)
class Tau(Expr):
    p: int
    arg: Expr


@dataclass(frozen=True)
class DetClass(Expr):
    arg: Expr


@dataclass(frozen=True)
class Power(Expr):
    base: Expr
    exponent: int


@dataclass(frozen=True)
class Pull(Expr):
    """Pullback of `arg` along the morphism named `morphism`."""

    morphism: str
    arg: Expr


UNIT = Unit()
ZERO = IntConst(0)


def _check_op_index(k: int, what: str) -> None:
    if k < 1:
        raise ExprError(f"{what} index must be >= 1, got {k}")


# ---------------------------------------------------------------------------
# Canonical form

def canonicalize(e: Expr) -> Expr:
    """Flatten sums/tensors, push signs to term level, sort operands.

    The result is the unique form the printer emits; parse(print(e)) equals
    canonicalize(e) for every well-formed e.
    """
    pos, neg = _signed_terms(e)
    pos = sorted(pos, key=_print)
    neg = sorted(neg, key=_print)
    terms = list(pos) + [Neg(t) for t in neg]
    if not terms:
        return ZERO
    if len(terms) == 1:
        return terms[0]
    return Sum(tuple(terms))


def _signed_terms(e: Expr) -> tuple[list[Expr], list[Expr]]:
    """Collect sum-level terms of e as (positive terms, negated terms)."""
    pos: list[Expr] = []
    neg: list[Expr] = []

    def emit(term: Expr, sign: bool) -> None:
        (pos if sign else neg).append(term)

    if isinstance(e, Sum):
        for t in e.terms:
            p, n = _signed_terms(t)
            pos.extend(p)
            neg.extend(n)
    elif isinstance(e, Neg):
        p, n = _signed_terms(e.arg)
        pos.extend(n)
        neg.extend(p)
    elif isinstance(e, IntConst):
        if e.value == 1:
            emit(UNIT, True)
        elif e.value == -1:
            emit(UNIT, False)
        elif e.value > 0:
            emit(e, True)
        elif e.value < 0:
            emit(IntConst(-e.value), False)
        # zero contributes nothing
    else:
        term, sign = _canonical_term(e)
        if isinstance(term, Sum):
            # a tensor or power can degenerate to a lone sum; keep flattening
            p, n = _signed_terms(term)
            if sign:
                pos.extend(p)
                neg.extend(n)
            else:
                pos.extend(n)
                neg.extend(p)
        elif term is not None:
            emit(term, sign)
    return pos, neg


def _canonical_term(e: Expr) -> tuple[Expr | None, bool]:
    """Canonicalize a non-sum node; returns (term, sign). None = zero."""
    if isinstance(e, Tensor):
        sign = True
        factors: list[Expr] = []
        const = 1
        for f in e.factors:
            f = canonicalize(f)
            if isinstance(f, Neg):
                sign = not sign
                f = f.arg
            if isinstance(f, IntConst):
                if f.value == 0:
                    return None, True
                if f.value < 0:
                    sign = not sign
                    f = IntConst(-f.value)
                const *= f.value
                continue
            if isinstance(f, Unit):
                continue
            if isinstance(f, Tensor):
                factors.extend(f.factors)
            else:
                factors.append(f)
        factors.sort(key=_print)
        if not factors:
            return (IntConst(const) if const != 1 else UNIT), sign
        if const != 1:
            factors.insert(0, IntConst(const))
        if len(factors) == 1:
            return factors[0], sign
        return Tensor(tuple(factors)), sign
    if isinstance(e, Power):
        if e.exponent == 0:
            return UNIT, True
        base = canonicalize(e.base)
        sign = True
        if isinstance(base, Neg):
            sign = e.exponent % 2 == 0
            base = base.arg
        if e.exponent == 1:
            return base, sign
        if isinstance(base, Unit):
            return UNIT, sign
        return Power(base, e.exponent), sign
    if isinstance(e, Unit):
        return UNIT, True
    if isinstance(e, (Line, Bundle)):
        return e, True
    if isinstance(e, Dual):
        return Dual(canonicalize(e.arg)), True
    if isinstance(e, Psi):
        _check_op_index(e.k, "psi")
        return Psi(e.k, canonicalize(e.arg)), True
    if isinstance(e, Theta):
        _check_op_index(e.k, "theta")
        return Theta(e.k, canonicalize(e.arg)), True
    if isinstance(e, Tau):
        _check_op_index(e.p, "tau")
        return Tau(e.p, canonicalize(e.arg)), True
    if isinstance(e, DetClass):
        return DetClass(canonicalize(e.arg)), True
    if isinstance(e, Pull):
        return Pull(e.morphism, canonicalize(e.arg)), True
    raise ExprError(f"unknown expression node {e!r}")


# ---------------------------------------------------------------------------
# Printer

def print_expr(e: Expr) -> str:
    """Canonical text: sorted operands, deterministic parenthesization."""
    return _print(canonicalize(e))


def _print(e: Expr) -> str:
    if isinstance(e, Sum):
        out = []
        for i, t in enumerate(e.terms):
            if isinstance(t, Neg):
                out.append("- " if i else "-")
                out.append(_print_term(t.arg))
            else:
                if i:
                    out.append("+ ")
                out.append(_print_term(t))
            out.append(" ")
        return "".join(out).strip()
    if isinstance(e, Neg):
        return "-" + _print_term(e.arg)
    return _print_term(e)


def _print_term(e: Expr) -> str:
    if isinstance(e, Tensor):
        return " (x) ".join(_print_factor(f) for f in e.factors)
    return _print_factor(e)


def _print_factor(e: Expr) -> str:
    if isinstance(e, Power):
        return f"{_print_primary(e.base)}^{e.exponent}"
    return _print_primary(e)


def _print_primary(e: Expr) -> str:
    if isinstance(e, Line) or isinstance(e, Bundle):
        return e.name
    if isinstance(e, Unit):
        return "1"
    if isinstance(e, IntConst):
        return str(e.value) if e.value >= 0 else f"({e.value})"
    if isinstance(e, Dual):
        return f"dual({_print(e.arg)})"
    if isinstance(e, DetClass):
        return f"det({_print(e.arg)})"
    if isinstance(e, Psi):
        return f"psi({e.k}, {_print(e.arg)})"
    if isinstance(e, Theta):
        return f"theta({e.k}, {_print(e.arg)})"
    if isinstance(e, Tau):
        return f"tau({e.p}, {_print(e.arg)})"
    if isinstance(e, Pull):
        return f"pull({e.morphism}, {_print(e.arg)})"
    if isinstance(e, (Sum, Neg, Tensor, Power)):
        return f"({_print(e)})"
    raise ExprError(f"unknown expression node {e!r}")


# ---------------------------------------------------------------------------
# Parser (recursive descent)

_KEYWORD_OPS = {"dual", "psi", "theta", "tau", "det", "pull"}


class _Tokens:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0
        self.tokens: list[tuple[str, str, int]] = []
        self._scan()
        self.i = 0

    def _scan(self) -> None:
        text, n = self.text, len(self.text)
        i = 0
        while i < n:
            c = text[i]
            if c.isspace():
                i += 1
                continue
            if text.startswith("(x)", i):
                self.tokens.append(("TENSOR", "(x)", i))
                i += 3
                continue
            if c.isdigit():
                j = i
                while j < n and text[j].isdigit():
                    j += 1
                self.tokens.append(("INT", text[i:j], i))
                i = j
                continue
            if c.isalpha() or c == "_":
                j = i
                while j < n and (text[j].isalnum() or text[j] == "_"):
                    j += 1
                self.tokens.append(("NAME", text[i:j], i))
                i = j
                continue
            if c in "+-^(),;":
                self.tokens.append((c, c, i))
                i += 1
                continue
            raise ParseError(f"unexpected character {c!r}", i)
        self.tokens.append(("EOF", "", n))

    def peek(self) -> tuple[str, str, int]:
        return self.tokens[self.i]

    def next(self) -> tuple[str, str, int]:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, kind: str) -> tuple[str, str, int]:
        tok = self.next()
        if tok[0] != kind:
            raise ParseError(f"expected {kind!r}, found {tok[1]!r}", tok[2])
        return tok


def parse(text: str, table: SymbolTable) -> Expr:
    """Parse the expression DSL against a symbol table.

    Grammar: expr := ["-"] term (("+"|"-") term)*; term := factor ("(x)"
    factor)*; factor := primary ["^" ["-"] INT]; primary := INT | NAME |
    dual/psi/theta/tau/det/pull call | "(" expr ")".
    """
    toks = _Tokens(text)
    e = _parse_expr(toks, table)
    tok = toks.peek()
    if tok[0] != "EOF":
        raise ParseError(f"trailing input {tok[1]!r}", tok[2])
    return canonicalize(e)


def _parse_expr(toks: _Tokens, table: SymbolTable) -> Expr:
    terms: list[Expr] = []
    if toks.peek()[0] == "-":
        toks.next()
        terms.append(Neg(_parse_term(toks, table)))
    else:
        terms.append(_parse_term(toks, table))
    while toks.peek()[0] in ("+", "-"):
        op = toks.next()[0]
        t = _parse_term(toks, table)
        terms.append(Neg(t) if op == "-" else t)
    return terms[0] if len(terms) == 1 else Sum(tuple(terms))


def _parse_term(toks: _Tokens, table: SymbolTable) -> Expr:
    factors = [_parse_factor(toks, table)]
    while toks.peek()[0] == "TENSOR":
        toks.next()
        factors.append(_parse_factor(toks, table))
    return factors[0] if len(factors) == 1 else Tensor(tuple(factors))


def _parse_factor(toks: _Tokens, table: SymbolTable) -> Expr:
    e = _parse_primary(toks, table)
    while toks.peek()[0] == "^":
        toks.next()
        sign = 1
        if toks.peek()[0] == "-":
            toks.next()
            sign = -1
        tok = toks.expect("INT")
        e = Power(e, sign * int(tok[1]))
    return e


def _parse_primary(toks: _Tokens, table: SymbolTable) -> Expr:
    tok = toks.next()
    kind, value, pos = tok
    if kind == "INT":
        return IntConst(int(value))
    if kind == "(":
        e = _parse_expr(toks, table)
        toks.expect(")")
        return e
    if kind == "NAME":
        if value in _KEYWORD_OPS:
            return _parse_call(value, toks, table, pos)
        if value == "O":
            return UNIT
        if value not in table:
            raise ParseError(f"undeclared symbol {value!r}", pos)
        if table.kind(value) == LINE:
            return Line(value)
        return Bundle(value)
    raise ParseError(f"unexpected token {value!r}", pos)


def _parse_call(head: str, toks: _Tokens, table: SymbolTable, pos: int) -> Expr:
    toks.expect("(")
    if head in ("psi", "theta", "tau"):
        k = int(toks.expect("INT")[1])
        toks.expect(",")
        arg = _parse_expr(toks, table)
        toks.expect(")")
        if k < 1:
            raise ParseError(f"{head} index must be >= 1", pos)
        ctor = {"psi": Psi, "theta": Theta, "tau": Tau}[head]
        return ctor(k, arg)
    if head == "pull":
        name = toks.expect("NAME")[1]
        toks.expect(",")
        arg = _parse_expr(toks, table)
        toks.expect(")")
        return Pull(name, arg)
    arg = _parse_expr(toks, table)
    toks.expect(")")
    return Dual(arg) if head == "dual" else DetClass(arg)


# ---------------------------------------------------------------------------
# Rank homomorphism

def rank(e: Expr, table: SymbolTable, pull_tables: dict[str, SymbolTable] | None = None) -> int:
    """Virtual rank: additive on sums, multiplicative on tensors.

    theta^k/tau_p arguments must be effective (checked semantically through the
    split engine); rank(theta^k(E)) = k^rank(E), rank(tau_p(E)) = p^rank(E).
    """
    if isinstance(e, (Line, Unit)):
        return 1
    if isinstance(e, Bundle):
        return table.rank(e.name)
    if isinstance(e, IntConst):
        return e.value
    if isinstance(e, Sum):
        return sum(rank(t, table, pull_tables) for t in e.terms)
    if isinstance(e, Neg):
        return -rank(e.arg, table, pull_tables)
    if isinstance(e, Tensor):
        r = 1
        for f in e.factors:
            r *= rank(f, table, pull_tables)
        return r
    if isinstance(e, (Dual, Psi)):
        return rank(e.arg, table, pull_tables)
    if isinstance(e, (Theta, Tau)):
        _require_effective(e.arg, table)
        k = e.k if isinstance(e, Theta) else e.p
        r = rank(e.arg, table, pull_tables)
        if r < 0:
            raise RankError(f"negative rank {r} under theta/tau")
        return k**r
    if isinstance(e, DetClass):
        return 1
    if isinstance(e, Power):
        if e.exponent >= 0:
            return rank(e.base, table, pull_tables) ** e.exponent
        r = rank(e.base, table, pull_tables)
        if r not in (1, -1):
            raise RankError(f"negative power of a class of rank {r}")
        return r**e.exponent if r == 1 or e.exponent % 2 == 0 else -1
    if isinstance(e, Pull):
        if not pull_tables or e.morphism not in pull_tables:
            raise RankError(f"no table registered for pullback along {e.morphism!r}")
        return rank(e.arg, pull_tables[e.morphism], pull_tables)
    raise ExprError(f"unknown expression node {e!r}")


def _require_effective(arg: Expr, table: SymbolTable) -> None:
    # semantic check through the split engine; effectivity may arise by
    # cancellation, so no syntactic shortcut is taken.
    from . import splitting

    ctx = splitting.SplitContext(table)
    cls = splitting.eval_expr(arg, ctx)
    if not cls.is_effective():
        raise RankError(f"theta/tau argument is not effective: {arg}")


