"""Splitting-principle evaluator: exact Laurent classes over Chern roots.

A declared bundle of rank r contributes r root variables; evaluation maps the
expression operations to exact polynomial arithmetic (psi^k = k-th power
substitution on roots, theta^k = product of truncated geometric series over
the constituent line monomials, det = product of constituents, dual = monomial
inversion).  Also hosts the univariate integer-polynomial witness for the
binomial identity behind the tilde-inverse.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from math import comb
from typing import Callable

from .expr import (
    BUNDLE,
    LINE,
    Bundle,
    DetClass,
    Dual,
    Expr,
    ExprError,
    IntConst,
    Line,
    Neg,
    Power,
    Psi,
    Pull,
    Sum,
    SymbolTable,
    Tau,
    Tensor,
    Theta,
    Unit,
)


class EvalError(ExprError):
    pass


class NonEffectiveError(EvalError):
    pass


class ContextMismatch(EvalError):
    pass


Monomial = tuple[tuple[str, int], ...]  # sorted (variable, nonzero exponent)


def _mono_mul(a: Monomial, b: Monomial) -> Monomial:
    d = dict(a)
    for v, e in b:
        ne = d.get(v, 0) + e
        if ne:
            d[v] = ne
        else:
            d.pop(v, None)
    return tuple(sorted(d.items()))


def _mono_inv(m: Monomial) -> Monomial:
    return tuple((v, -e) for v, e in m)


def _mono_pow(m: Monomial, k: int) -> Monomial:
    return tuple((v, e * k) for v, e in m) if k else ()


def _is_integral(c) -> bool:
    return isinstance(c, int) or c.denominator == 1


class SplitClass:
    """Laurent polynomial with exact rational coefficients in root variables.

    Coefficients are Fractions or plain ints (exact either way; ints are kept
    unboxed for speed and compare equal to the same Fraction).
    """

    __slots__ = ("terms", "space")

    def __init__(self, terms: dict | None = None, space: str | None = None):
        self.terms = {m: c for m, c in (terms or {}).items() if c}
        self.space = space

    # -- constructors ------------------------------------------------------
    @staticmethod
    def constant(c, space: str | None = None) -> "SplitClass":
        if not isinstance(c, (int, Fraction)):
            c = Fraction(c)
        return SplitClass({(): c} if c else {}, space)

    @staticmethod
    def variable(name: str, space: str | None = None) -> "SplitClass":
        return SplitClass({((name, 1),): 1}, space)

    # -- ring structure ----------------------------------------------------
    def _join(self, other: "SplitClass") -> str | None:
        if self.space is None:
            return other.space
        if other.space is None or other.space == self.space:
            return self.space
        raise ContextMismatch(f"mixing classes from {self.space!r} and {other.space!r}")

    def _coerce(self, other) -> "SplitClass":
        if isinstance(other, SplitClass):
            return other
        if isinstance(other, (int, Fraction)):
            return SplitClass.constant(other)
        return NotImplemented

    def __add__(self, other) -> "SplitClass":
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        space = self._join(other)
        out = dict(self.terms)
        for m, c in other.terms.items():
            nc = out.get(m, 0) + c
            if nc:
                out[m] = nc
            else:
                out.pop(m, None)
        return SplitClass(out, space)

    __radd__ = __add__

    def __neg__(self) -> "SplitClass":
        return SplitClass({m: -c for m, c in self.terms.items()}, self.space)

    def __sub__(self, other) -> "SplitClass":
        other = self._coerce(other)
        return self + (-other)

    def __rsub__(self, other) -> "SplitClass":
        return (-self) + other

    def __mul__(self, other) -> "SplitClass":
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        space = self._join(other)
        out: dict[Monomial, Fraction] = {}
        for m1, c1 in self.terms.items():
            for m2, c2 in other.terms.items():
                m = _mono_mul(m1, m2)
                nc = out.get(m, 0) + c1 * c2
                if nc:
                    out[m] = nc
                else:
                    out.pop(m, None)
        return SplitClass(out, space)

    __rmul__ = __mul__

    def __pow__(self, k: int) -> "SplitClass":
        if k < 0:
            return self.monomial_inverse() ** (-k)
        result = SplitClass.constant(1, self.space)
        base = self
        while k:
            if k & 1:
                result = result * base
            k >>= 1
            if k:
                base = base * base
        return result

    def __eq__(self, other) -> bool:
        if isinstance(other, (int, Fraction)):
            other = SplitClass.constant(other)
        if not isinstance(other, SplitClass):
            return NotImplemented
        return self.terms == other.terms

    def __hash__(self):
        return hash(frozenset(self.terms.items()))

    def __bool__(self) -> bool:
        return bool(self.terms)

    # -- structure queries ---------------------------------------------------
    def is_zero(self) -> bool:
        return not self.terms

    def is_effective(self) -> bool:
        """All coefficients nonnegative integers."""
        return all(c >= 0 and _is_integral(c) for c in self.terms.values())

    def is_monomial(self) -> bool:
        return len(self.terms) == 1

    def monomial_inverse(self) -> "SplitClass":
        if len(self.terms) != 1:
            raise EvalError("inverse requires a single line monomial")
        (m, c), = self.terms.items()
        if c not in (1, -1):
            raise EvalError(f"inverse requires unit coefficient, got {c}")
        return SplitClass({_mono_inv(m): c}, self.space)

    def dual(self) -> "SplitClass":
        return SplitClass({_mono_inv(m): c for m, c in self.terms.items()}, self.space)

    def adams(self, k: int) -> "SplitClass":
        """Substitute every root x -> x^k (monomial-wise exponent scaling)."""
        out: dict[Monomial, Fraction] = {}
        for m, c in self.terms.items():
            km = _mono_pow(m, k)
            out[km] = out.get(km, 0) + c
        return SplitClass(out, self.space)

    def augmentation(self, var_aug: dict[str, int] | None = None) -> Fraction:
        """Value with every root set to 1 (or to its declared augmentation)."""
        if not var_aug:
            return Fraction(sum(self.terms.values()))
        total = Fraction(0)
        for m, c in self.terms.items():
            val = Fraction(1)
            for v, e in m:
                val *= Fraction(var_aug.get(v, 1)) ** e
            total += c * val
        return total

    def constituents(self) -> list[Monomial]:
        """Line monomials with multiplicity; requires an effective class."""
        if not self.is_effective():
            raise NonEffectiveError(f"class is not effective: {self}")
        out: list[Monomial] = []
        for m in sorted(self.terms):
            out.extend([m] * int(self.terms[m]))
        return out

    def variables(self) -> set[str]:
        return {v for m in self.terms for v, _ in m}

    def substitute(self, mapping: dict[str, "SplitClass"]) -> "SplitClass":
        """Replace variables by classes (used by the Chern-character layer)."""
        total = SplitClass.constant(0, self.space)
        for m, c in self.terms.items():
            term = SplitClass.constant(c, self.space)
            for v, e in m:
                if v in mapping:
                    term = term * mapping[v] ** e
                else:
                    term = term * SplitClass({((v, e),): 1})
            total = total + term
        return total

    # -- rendering -----------------------------------------------------------
    def __str__(self) -> str:
        if not self.terms:
            return "0"
        parts: list[str] = []
        for m in sorted(self.terms, key=_mono_sort_key):
            c = self.terms[m]
            body = "*".join(f"{v}^{e}" if e != 1 else v for v, e in m)
            if not m:
                text = str(abs(c))
            elif abs(c) == 1:
                text = body
            else:
                text = f"{abs(c)}*{body}"
            if not parts:
                parts.append(text if c > 0 else f"-{text}")
            else:
                parts.append(f"+ {text}" if c > 0 else f"- {text}")
        return " ".join(parts)

    def __repr__(self) -> str:
        return f"SplitClass({self})"


def _mono_sort_key(m: Monomial):
    return (sum(abs(e) for _, e in m), m)


# ---------------------------------------------------------------------------
# Evaluation context

@dataclass
class SplitContext:
    """Root assignment for one space's symbol table.

    Bundles named in `opaque` evaluate to a single generator of their declared
    rank instead of being split into roots (used where a rank-p^n pushforward
    bundle would explode into p^n roots).  `pull_reducers` map a morphism name
    to the syntactic substitution realizing its pullback into this space.
    """

    table: SymbolTable
    opaque: frozenset[str] = frozenset()
    pull_reducers: dict[str, Callable[[Expr], Expr]] = field(default_factory=dict)

    def __post_init__(self):
        self.space = self.table.space
        self.roots: dict[str, list[str]] = {}
        self.var_aug: dict[str, int] = {}
        self._eval_cache: dict[Expr, SplitClass] = {}
        self._trunc_cache: dict[tuple[Expr, int], SplitClass] = {}
        for name in self.table.names():
            kind, rk = self.table.entries[name]
            if kind == LINE:
                self.roots[name] = [name]
                self.var_aug[name] = 1
            elif name in self.opaque:
                self.roots[name] = [name]
                self.var_aug[name] = rk
            else:
                vs = [f"{name}.{i}" for i in range(1, rk + 1)]
                self.roots[name] = vs
                for v in vs:
                    self.var_aug[v] = 1

    def root_class(self, name: str) -> SplitClass:
        cls = SplitClass.constant(0, self.space)
        for v in self.roots[name]:
            cls = cls + SplitClass.variable(v, self.space)
        return cls

    def augmentation(self, cls: SplitClass) -> Fraction:
        return cls.augmentation(self.var_aug)

    def has_opaque_vars(self, cls: SplitClass) -> bool:
        return any(self.var_aug.get(v, 1) != 1 for v in cls.variables())


def eval_expr(e: Expr, ctx: SplitContext) -> SplitClass:
    """Evaluate a virtual-bundle expression to its canonical split class.

    Composite nodes are memoized per context (expressions are immutable and
    hash structurally), so repeated subterms cost one evaluation.
    """
    composite = not isinstance(e, (Line, Bundle, Unit, IntConst))
    if composite:
        hit = ctx._eval_cache.get(e)
        if hit is not None:
            return hit
    cls = _eval_uncached(e, ctx)
    if composite:
        ctx._eval_cache[e] = cls
    return cls


def _eval_uncached(e: Expr, ctx: SplitContext) -> SplitClass:
    if isinstance(e, Line):
        return SplitClass.variable(ctx.roots[e.name][0], ctx.space) if e.name in ctx.roots \
            else _undeclared(e.name, ctx)
    if isinstance(e, Bundle):
        if e.name not in ctx.roots:
            _undeclared(e.name, ctx)
        return ctx.root_class(e.name)
    if isinstance(e, Unit):
        return SplitClass.constant(1, ctx.space)
    if isinstance(e, IntConst):
        return SplitClass.constant(e.value, ctx.space)
    if isinstance(e, Sum):
        total = SplitClass.constant(0, ctx.space)
        for t in e.terms:
            total = total + eval_expr(t, ctx)
        return total
    if isinstance(e, Neg):
        return -eval_expr(e.arg, ctx)
    if isinstance(e, Tensor):
        prod = SplitClass.constant(1, ctx.space)
        for f in e.factors:
            prod = prod * eval_expr(f, ctx)
        return prod
    if isinstance(e, Dual):
        cls = eval_expr(e.arg, ctx)
        _no_opaque(ctx, cls, "dual")
        return cls.dual()
    if isinstance(e, Psi):
        cls = eval_expr(e.arg, ctx)
        _no_opaque(ctx, cls, "psi")
        return cls.adams(e.k)
    if isinstance(e, Theta):
        cls = eval_expr(e.arg, ctx)
        _no_opaque(ctx, cls, "theta")
        return theta_class(cls, e.k)
    if isinstance(e, Tau):
        cls = eval_expr(e.arg, ctx)
        _no_opaque(ctx, cls, "tau")
        return tau_of_class(cls, e.p)
    if isinstance(e, DetClass):
        cls = eval_expr(e.arg, ctx)
        _no_opaque(ctx, cls, "det")
        return det_class(cls)
    if isinstance(e, Power):
        base = eval_expr(e.base, ctx)
        if e.exponent < 0 and not base.is_monomial():
            raise EvalError(f"negative power of a non-line class: {e}")
        return base**e.exponent
    if isinstance(e, Pull):
        reducer = ctx.pull_reducers.get(e.morphism)
        if reducer is None:
            raise EvalError(f"no pullback registered for morphism {e.morphism!r} into {ctx.space}")
        return eval_expr(reducer(e.arg), ctx)
    raise EvalError(f"unknown expression node {e!r}")


def _undeclared(name: str, ctx: SplitContext):
    raise EvalError(f"undeclared symbol {name!r} on space {ctx.space}")


def _no_opaque(ctx: SplitContext, cls: SplitClass, what: str) -> None:
    if ctx.has_opaque_vars(cls):
        raise EvalError(f"{what} cannot be applied to an opaque (unsplit) bundle class")


def theta_class(cls: SplitClass, k: int) -> SplitClass:
    """theta^k as a product of 1 + m + ... + m^(k-1) over constituent lines."""
    if not cls.is_effective():
        raise NonEffectiveError(f"theta argument is not effective: {cls}")
    prod = SplitClass.constant(1, cls.space)
    for m in cls.constituents():
        line = SplitClass({m: 1}, cls.space)
        geo = SplitClass.constant(0, cls.space)
        powm = SplitClass.constant(1, cls.space)
        for _ in range(k):
            geo = geo + powm
            powm = powm * line
        prod = prod * geo
    return prod


def tau_of_class(cls: SplitClass, p: int) -> SplitClass:
    """Basis enumeration of the truncated symmetric algebra of a class.

    Sums the monomials prod_j m_j^(i_j) over all exponent vectors 0 <= i_j < p
    indexed by the constituent lines; independent of the theta product route.
    """
    if not cls.is_effective():
        raise NonEffectiveError(f"tau argument is not effective: {cls}")
    lines = cls.constituents()
    total = SplitClass.constant(0, cls.space)
    for exps in itertools.product(range(p), repeat=len(lines)):
        mono: Monomial = ()
        for m, i in zip(lines, exps):
            mono = _mono_mul(mono, _mono_pow(m, i))
        total = total + SplitClass({mono: 1}, cls.space)
    return total


def det_class(cls: SplitClass) -> SplitClass:
    """Top exterior class: product of constituent line monomials (signed)."""
    mono: Monomial = ()
    for m, c in cls.terms.items():
        if not _is_integral(c):
            raise EvalError(f"det of a non-integral class: {cls}")
        mono = _mono_mul(mono, _mono_pow(m, int(c)))
    return SplitClass({mono: 1}, cls.space)


def tau_class(symbol: str, p: int, ctx: SplitContext) -> SplitClass:
    """tau of a declared line/bundle symbol by direct basis enumeration."""
    if symbol not in ctx.roots:
        _undeclared(symbol, ctx)
    cls = ctx.root_class(symbol) if ctx.table.kind(symbol) == BUNDLE \
        else SplitClass.variable(ctx.roots[symbol][0], ctx.space)
    _no_opaque(ctx, cls, "tau")
    return tau_of_class(cls, p)


@dataclass
class Verdict:
    """Outcome of an identity check; `witness` renders the discrepancy."""

    ok: bool
    witness: str = ""

    def __bool__(self) -> bool:
        return self.ok


def tau_equals_theta(symbol: str, p: int, ctx: SplitContext) -> Verdict:
    diff = tau_class(symbol, p, ctx) - eval_expr(
        Theta(p, Bundle(symbol) if ctx.table.kind(symbol) == BUNDLE else Line(symbol)), ctx
    )
    if diff.is_zero():
        return Verdict(True)
    return Verdict(False, str(diff))


def classes_equal(a: SplitClass, b: SplitClass) -> bool:
    if a.space is not None and b.space is not None and a.space != b.space:
        raise ContextMismatch(f"comparing classes from {a.space!r} and {b.space!r}")
    return (a - b).is_zero()


# ---------------------------------------------------------------------------
# Truncated augmentation filtration

def truncated_filtration(cls: SplitClass, var_aug: dict[str, int], cutoff: int) -> SplitClass:
    """Expansion of a class mod the cutoff-th power of the augmentation ideal.

    Substitutes each variable v -> aug(v) + u_v and drops all terms of total
    u-degree >= cutoff.  Zero result means the class lies in I^cutoff.
    """
    series_cache: dict[tuple[str, int], list[tuple[Monomial, object]]] = {}
    mono_cache: dict[Monomial, dict[Monomial, object]] = {(): {(): 1}}

    def expand(m: Monomial) -> dict[Monomial, object]:
        hit = mono_cache.get(m)
        if hit is not None:
            return hit
        head, last = m[:-1], m[-1]
        series = series_cache.get(last)
        if series is None:
            series = _binomial_series(last[0], var_aug.get(last[0], 1), last[1], cutoff)
            series_cache[last] = series
        out = _trunc_mul(expand(head), series, cutoff)
        mono_cache[m] = out
        return out

    total: dict[Monomial, object] = {}
    for m, c in cls.terms.items():
        for mono, coeff in expand(m).items():
            nc = total.get(mono, 0) + coeff * c
            if nc:
                total[mono] = nc
            else:
                total.pop(mono, None)
    return SplitClass(total, cls.space)


def truncated_eval(e: Expr, ctx: SplitContext, cutoff: int) -> SplitClass:
    """Evaluate directly in the truncated ring (classes mod I^cutoff).

    Truncation is a ring quotient, so sums, tensors and nonnegative powers are
    computed on already-truncated operands; only operator leaves (theta, psi,
    duals, symbols, pullbacks) fall back to a full evaluation.  This keeps
    high tensor powers of rank-zero differences from ever being expanded.
    """
    key = (e, cutoff)
    hit = ctx._trunc_cache.get(key)
    if hit is not None:
        return hit
    if isinstance(e, Sum):
        total: dict[Monomial, object] = {}
        for t in e.terms:
            for m, c in truncated_eval(t, ctx, cutoff).terms.items():
                nc = total.get(m, 0) + c
                if nc:
                    total[m] = nc
                else:
                    total.pop(m, None)
        out = SplitClass(total, ctx.space)
    elif isinstance(e, Neg):
        inner = truncated_eval(e.arg, ctx, cutoff)
        out = SplitClass({m: -c for m, c in inner.terms.items()}, ctx.space)
    elif isinstance(e, (IntConst, Unit)):
        value = e.value if isinstance(e, IntConst) else 1
        out = SplitClass({(): value} if value else {}, ctx.space)
    elif isinstance(e, Tensor):
        acc = {(): 1}
        for f in e.factors:
            terms = list(truncated_eval(f, ctx, cutoff).terms.items())
            acc = _trunc_mul(acc, terms, cutoff)
            if not acc:
                break
        out = SplitClass(acc, ctx.space)
    elif isinstance(e, Power) and e.exponent >= 0:
        base = truncated_eval(e.base, ctx, cutoff)
        acc = {(): 1}
        square = dict(base.terms)
        k = e.exponent
        while k:
            if k & 1:
                acc = _trunc_mul(acc, list(square.items()), cutoff)
            k >>= 1
            if k:
                square = _trunc_mul(square, list(square.items()), cutoff)
        out = SplitClass(acc, ctx.space)
    else:
        out = truncated_filtration(eval_expr(e, ctx), ctx.var_aug, cutoff)
    ctx._trunc_cache[key] = out
    return out


def _binomial_series(v: str, aug: int, e: int, cutoff: int) -> list[tuple[Monomial, object]]:
    """Terms of (aug + u_v)^e truncated below u-degree cutoff (e may be negative)."""
    if aug == 0:
        # only nonnegative exponents arise for rank-0 reserved symbols
        if e < 0:
            raise EvalError("cannot invert a rank-0 class in the filtration expansion")
        if e >= cutoff:
            return []
        return [(((v, e),) if e else (), 1)]
    out: list[tuple[Monomial, object]] = []
    if e >= 0:
        coeff: object = aug**e
    elif aug == 1:
        coeff = 1
    else:
        coeff = Fraction(1, aug ** (-e))
    j = 0
    while j < cutoff:
        if coeff:
            out.append(((((v, j),) if j else ()), coeff))
        # next generalized binomial coefficient: C(e, j+1)/C(e, j) = (e-j)/(j+1)
        num = coeff * (e - j)
        den = (j + 1) * aug
        if isinstance(num, int) and num % den == 0:
            coeff = num // den
        else:
            coeff = Fraction(num) / den
        if e >= 0 and j >= e:
            break
        j += 1
    return out


def _trunc_mul(a: dict[Monomial, object], b: list[tuple[Monomial, object]],
               cutoff: int) -> dict[Monomial, object]:
    bdeg = [(m, c, sum(e for _, e in m)) for m, c in b]
    out: dict[Monomial, object] = {}
    for m1, c1 in a.items():
        d1 = sum(e for _, e in m1)
        for m2, c2, d2 in bdeg:
            if d1 + d2 >= cutoff:
                continue
            m = _mono_mul(m1, m2)
            nc = out.get(m, 0) + c1 * c2
            if nc:
                out[m] = nc
            else:
                out.pop(m, None)
    return out


# ---------------------------------------------------------------------------
# Univariate integer polynomials and the binomial kernel

class UniPoly:
    """Dense-enough integer polynomial in one indeterminate y."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs: dict[int, int] | None = None):
        self.coeffs = {d: c for d, c in (coeffs or {}).items() if c}

    @staticmethod
    def constant(c: int) -> "UniPoly":
        return UniPoly({0: c})

    @staticmethod
    def y() -> "UniPoly":
        return UniPoly({1: 1})

    def degree(self) -> int:
        return max(self.coeffs) if self.coeffs else -1

    def _coerce(self, other) -> "UniPoly":
        if isinstance(other, UniPoly):
            return other
        if isinstance(other, int):
            return UniPoly.constant(other)
        return NotImplemented

    def __add__(self, other) -> "UniPoly":
        other = self._coerce(other)
        out = dict(self.coeffs)
        for d, c in other.coeffs.items():
            nc = out.get(d, 0) + c
            if nc:
                out[d] = nc
            else:
                out.pop(d, None)
        return UniPoly(out)

    __radd__ = __add__

    def __neg__(self) -> "UniPoly":
        return UniPoly({d: -c for d, c in self.coeffs.items()})

    def __sub__(self, other) -> "UniPoly":
        other = self._coerce(other)
        return self + (-other)

    def __mul__(self, other) -> "UniPoly":
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        out: dict[int, int] = {}
        for d1, c1 in self.coeffs.items():
            for d2, c2 in other.coeffs.items():
                out[d1 + d2] = out.get(d1 + d2, 0) + c1 * c2
        return UniPoly(out)

    __rmul__ = __mul__

    def __pow__(self, k: int) -> "UniPoly":
        if k < 0:
            raise ValueError("negative power of a polynomial")
        result = UniPoly.constant(1)
        for _ in range(k):
            result = result * self
        return result

    def __eq__(self, other) -> bool:
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return self.coeffs == other.coeffs

    def __hash__(self):
        return hash(frozenset(self.coeffs.items()))

    def divmod_exact(self, divisor: "UniPoly") -> tuple["UniPoly", "UniPoly"]:
        """Long division; exact when the divisor's leading coefficient is +-1."""
        if not divisor.coeffs:
            raise ZeroDivisionError("polynomial division by zero")
        dd = divisor.degree()
        lead = divisor.coeffs[dd]
        if lead not in (1, -1):
            raise ValueError("division requires a unit leading coefficient")
        rem = UniPoly(dict(self.coeffs))
        quot: dict[int, int] = {}
        while rem.coeffs and rem.degree() >= dd:
            d = rem.degree()
            c = rem.coeffs[d] * lead
            quot[d - dd] = quot.get(d - dd, 0) + c
            rem = rem - UniPoly({d - dd: c}) * divisor
        return UniPoly(quot), rem

    def __str__(self) -> str:
        if not self.coeffs:
            return "0"
        parts = []
        for d in sorted(self.coeffs, reverse=True):
            c = self.coeffs[d]
            body = "" if d == 0 else ("y" if d == 1 else f"y^{d}")
            mag = str(abs(c)) if (abs(c) != 1 or d == 0) else ""
            sep = "*" if (mag and body) else ""
            text = f"{mag}{sep}{body}"
            if not parts:
                parts.append(text if c > 0 else f"-{text}")
            else:
                parts.append(f"+ {text}" if c > 0 else f"- {text}")
        return " ".join(parts)

    def __repr__(self) -> str:
        return f"UniPoly({self})"


def tilde_theta_inverse(n: int, p: int, x):
    """Finite substitute for the inverse Bott class.

    Returns (-1)^(n+1) * sum_{i=0}^{n+1} C(n+2,i) x^(n+1-i) (-p^n)^i, with
    exact coefficients; x may be a UniPoly, a SplitClass, or anything with
    ring operations against ints.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    a = p**n
    total = None
    for i in range(n + 2):
        term = x ** (n + 1 - i) * (comb(n + 2, i) * (-a) ** i)
        total = term if total is None else total + term
    return total * ((-1) ** (n + 1))


@dataclass
class BinomialWitness:
    """Exact-divisibility witness for y*tilde(y) - p^(n(n+2))."""

    n: int
    p: int
    ok: bool
    quotient: UniPoly
    remainder: UniPoly
    lhs: UniPoly
    divisor: UniPoly

    def __bool__(self) -> bool:
        return self.ok


def binomial_identity_check(n: int, p: int) -> BinomialWitness:
    """Check y*tilde(n,p,y) - p^(n(n+2)) == (-1)^(n+1) * (y - p^n)^(n+2)."""
    y = UniPoly.y()
    lhs = y * tilde_theta_inverse(n, p, y) - p ** (n * (n + 2))
    divisor = (y - UniPoly.constant(p**n)) ** (n + 2)
    quot, rem = lhs.divmod_exact(divisor)
    ok = not rem.coeffs and quot == UniPoly.constant((-1) ** (n + 1))
    return BinomialWitness(n, p, ok, quot, rem, lhs, divisor)


def formal_inverse(c: SplitClass, truncation_order: int) -> SplitClass:
    """Truncated geometric inverse sum_{i<order} (r-c)^i / r^(i+1), r = aug(c).

    Exact identity: c * result = 1 - ((r-c)/r)^order, so the residual lies in
    the ideal generated by (r-c)^order; the caller owns nilpotency.
    """
    r = c.augmentation()
    if r == 0:
        raise EvalError("formal inverse requires nonzero augmentation")
    if truncation_order < 1:
        raise ValueError("truncation order must be >= 1")
    delta = SplitClass.constant(r, c.space) - c
    total = SplitClass.constant(0, c.space)
    power = SplitClass.constant(1, c.space)
    for i in range(truncation_order):
        total = total + power * (Fraction(1) / r ** (i + 1))
        power = power * delta
    return total
