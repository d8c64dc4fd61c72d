"""Symbolic scalar expressions over bundle coordinates.

Expressions are plain :mod:`sympy` objects.  This module owns the coordinate
systems they live on, the input syntax of model files, canonical
simplification, checked pointwise evaluation and the equality semantics used
throughout the package (structural first, randomized numeric fallback).
"""

from __future__ import annotations

import enum
import math
import random
import re
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping

import numpy as np
import sympy
from sympy.parsing.sympy_parser import (
    auto_number,
    auto_symbol,
    convert_xor,
    factorial_notation,
    parse_expr,
    rationalize,
)

from .errors import CoordinateDomainError, EvaluationError, NumericDomainError

Expr = sympy.Expr

ALLOWED_FUNCTIONS = {"sin": sympy.sin, "cos": sympy.cos, "exp": sympy.exp, "ln": sympy.log, "log": sympy.log}


class Space(enum.Enum):
    BASE = "M"
    TOTAL = "E"
    JET = "J1E"
    MULTIMOMENTUM = "J1*E"
    EXTENDED = "Mpi"


def x_sym(mu: int) -> sympy.Symbol:
    return sympy.Symbol(f"x{mu}")


def y_sym(a: int) -> sympy.Symbol:
    return sympy.Symbol(f"y{a}")


def p_sym(mu: int, a: int) -> sympy.Symbol:
    """Multimomentum p^mu_A, written ``p<mu>_<A>``."""
    return sympy.Symbol(f"p{mu}_{a}")


def v_sym(a: int, mu: int) -> sympy.Symbol:
    """Jet coordinate v^A_mu, written ``v<A>_<mu>``."""
    return sympy.Symbol(f"v{a}_{mu}")


P_EXT = sympy.Symbol("p")


@dataclass(frozen=True)
class CoordSystem:
    """Natural coordinates on one of the five spaces of the theory.

    Coordinates are ordered x-block, y-block, then the v- or p-block
    (index mu outer, field index A inner), then the extended ``p``.  All
    sign conventions of :mod:`msym.exterior` refer to this order.
    """

    m: int
    N: int
    space: Space = Space.MULTIMOMENTUM

    def __post_init__(self):
        if self.m < 1 or self.N < 1:
            raise ValueError(f"need m >= 1 and N >= 1, got m={self.m}, N={self.N}")
        if not isinstance(self.space, Space):
            object.__setattr__(self, "space", Space(self.space))

    @cached_property
    def x(self) -> tuple:
        return tuple(x_sym(mu) for mu in range(self.m))

    @cached_property
    def y(self) -> tuple:
        if self.space is Space.BASE:
            return ()
        return tuple(y_sym(a) for a in range(self.N))

    @cached_property
    def v(self) -> tuple:
        """v[mu][A]; empty outside the jet space."""
        if self.space is not Space.JET:
            return ()
        return tuple(tuple(v_sym(a, mu) for a in range(self.N)) for mu in range(self.m))

    @cached_property
    def p(self) -> tuple:
        """p[mu][A]; empty unless on the multimomentum or extended bundle."""
        if self.space not in (Space.MULTIMOMENTUM, Space.EXTENDED):
            return ()
        return tuple(tuple(p_sym(mu, a) for a in range(self.N)) for mu in range(self.m))

    @cached_property
    def symbols(self) -> tuple:
        syms = list(self.x) + list(self.y)
        for block in (self.v, self.p):
            for row in block:
                syms.extend(row)
        if self.space is Space.EXTENDED:
            syms.append(P_EXT)
        return tuple(syms)

    @cached_property
    def _index(self) -> dict:
        return {s: i for i, s in enumerate(self.symbols)}

    @property
    def dim(self) -> int:
        return len(self.symbols)

    @property
    def names(self) -> tuple:
        return tuple(s.name for s in self.symbols)

    def index(self, sym) -> int:
        if isinstance(sym, str):
            sym = sympy.Symbol(sym)
        try:
            return self._index[sym]
        except KeyError:
            raise CoordinateDomainError(f"{sym} is not a coordinate of {self}") from None

    def __contains__(self, sym) -> bool:
        if isinstance(sym, str):
            sym = sympy.Symbol(sym)
        return sym in self._index

    def is_fiber(self, i: int) -> bool:
        return i >= self.m

    def with_space(self, space: Space) -> "CoordSystem":
        return CoordSystem(self.m, self.N, space)

    def require(self, e, what: str = "expression") -> None:
        """Raise unless every free symbol of ``e`` is a coordinate here."""
        bad = sorted(str(s) for s in sympy.sympify(e).free_symbols if s not in self._index)
        if bad:
            raise CoordinateDomainError(f"{what} uses {', '.join(bad)}; not coordinates of {self}")

    def __str__(self):
        return f"{self.space.value}(m={self.m}, N={self.N})"


_NAME_RE = re.compile(r"^(x\d+|y\d+|p\d+_\d+|v\d+_\d+|p)$")


def parse(text, coords: CoordSystem | None = None) -> Expr:
    """Parse model-file infix syntax into an expression.

    Accepts ``x0``, ``y1``, ``p0_1`` (p^0_1), ``v1_0`` (v^1_0), ``^`` for power,
    exact rationals like ``3/2`` and the functions sin, cos, exp, ln.
    Decimal literals are converted to exact rationals.
    """
    if isinstance(text, (int, float)):
        return sympy.nsimplify(text, rational=True)
    if isinstance(text, sympy.Basic):
        e = text
    else:
        local = dict(ALLOWED_FUNCTIONS)
        for name in set(re.findall(r"[A-Za-z_][A-Za-z_0-9]*", text)):
            if name in local:
                continue
            if not _NAME_RE.match(name):
                raise CoordinateDomainError(f"unknown name {name!r} in {text!r}")
            local[name] = sympy.Symbol(name)
        transformations = (auto_symbol, auto_number, factorial_notation, convert_xor, rationalize)
        try:
            e = parse_expr(text, local_dict=local, transformations=transformations, evaluate=True)
        except (SyntaxError, TypeError, sympy.SympifyError) as exc:
            raise EvaluationError(f"cannot parse {text!r}: {exc}") from exc
    if coords is not None:
        coords.require(e)
    return canonical(e)


def canonical(e) -> Expr:
    """Expand into a sum of products; transcendental calls stay opaque atoms."""
    e = sympy.sympify(e)
    if e.is_Number or e.is_Symbol:
        return e
    return sympy.expand(e, power_exp=False, log=False)


def partial(e, c, coords: CoordSystem | None = None) -> Expr:
    """Exact partial derivative of ``e`` with respect to coordinate ``c``."""
    if isinstance(c, str):
        c = sympy.Symbol(c)
    if coords is not None:
        coords.index(c)
        coords.require(e)
    elif not isinstance(c, sympy.Symbol) or not _NAME_RE.match(c.name):
        raise CoordinateDomainError(f"{c} is not a coordinate symbol")
    return canonical(sympy.diff(e, c))


def _lookup(point: Mapping, sym):
    if sym in point:
        return point[sym]
    if sym.name in point:
        return point[sym.name]
    raise EvaluationError(f"no value for {sym}")


def evaluate(e, point: Mapping) -> float:
    """Evaluate in IEEE double; raise with the offending subterm on domain errors."""
    return float(_ev(sympy.sympify(e), point))


def _ev(e, point):
    if e.is_Number:
        return float(e)
    if e.is_Symbol:
        return float(_lookup(point, e))
    if e.is_Add:
        return math.fsum(_ev(a, point) for a in e.args)
    if e.is_Mul:
        out = 1.0
        for a in e.args:
            out *= _ev(a, point)
        return out
    if e.is_Pow:
        base = _ev(e.base, point)
        ex = e.exp
        if ex.is_Integer:
            k = int(ex)
            if k < 0 and base == 0.0:
                raise NumericDomainError(f"division by zero in {e}", subterm=e)
            return base**k
        exv = _ev(ex, point)
        if base < 0 and not float(exv).is_integer():
            raise NumericDomainError(f"non-integer power of a negative number in {e}", subterm=e)
        if base == 0.0 and exv < 0:
            raise NumericDomainError(f"division by zero in {e}", subterm=e)
        return base**exv
    if isinstance(e, sympy.sin):
        return math.sin(_ev(e.args[0], point))
    if isinstance(e, sympy.cos):
        return math.cos(_ev(e.args[0], point))
    if isinstance(e, sympy.exp):
        return math.exp(_ev(e.args[0], point))
    if isinstance(e, sympy.log):
        arg = _ev(e.args[0], point)
        if arg <= 0:
            raise NumericDomainError(f"log of nonpositive value in {e}", subterm=e)
        return math.log(arg)
    if e is sympy.pi:
        return math.pi
    if e is sympy.E:
        return math.e
    raise EvaluationError(f"unsupported expression node {type(e).__name__}: {e}")


def compile_expr(e, symbols: Iterable) -> callable:
    """Vectorized numpy evaluator taking coordinate values in ``symbols`` order.

    The result is always broadcast to the shape of the inputs.
    """
    symbols = tuple(symbols)
    fn = sympy.lambdify(symbols, sympy.sympify(e), modules="numpy")

    def call(*args):
        out = fn(*args)
        shape = np.broadcast_shapes(*(np.shape(a) for a in args)) if args else ()
        return np.broadcast_to(np.asarray(out, dtype=float), shape)

    return call


def compile_scalar(e, symbols: Iterable) -> callable:
    """Plain-float evaluator using :mod:`math`; for tight scalar loops."""
    return sympy.lambdify(tuple(symbols), sympy.sympify(e), modules="math")


class Equality(enum.Enum):
    STRUCTURAL = "structural"
    NUMERIC = "numeric"
    DIFFERENT = "different"

    def __bool__(self):
        return self is not Equality.DIFFERENT


def is_structurally_zero(e) -> bool:
    e = sympy.sympify(e)
    if e == 0:
        return True
    c = canonical(e)
    if c == 0:
        return True
    if any(p.exp.is_negative for p in c.atoms(sympy.Pow)):
        return sympy.cancel(sympy.together(c)) == 0
    return False


def sample_point(symbols, rng: random.Random, low=-1.0, high=1.0) -> dict:
    return {s: rng.uniform(low, high) for s in symbols}


def numeric_zero(e, samples: int = 50, tol: float = 1e-9, seed: int = 0, symbols=None):
    """Randomized zero test.  Returns (is_zero, witness point or None).

    Points where ``e`` is undefined are skipped.
    """
    e = sympy.sympify(e)
    syms = sorted(e.free_symbols if symbols is None else symbols, key=str)
    rng = random.Random(seed)
    tried = 0
    attempts = 0
    while tried < samples and attempts < 20 * samples:
        attempts += 1
        pt = sample_point(syms, rng)
        try:
            val = evaluate(e, pt)
        except NumericDomainError:
            continue
        tried += 1
        if not math.isfinite(val) or abs(val) > tol:
            return False, pt
    return True, None


def compare(a, b, samples: int = 50, tol: float = 1e-9, seed: int = 0) -> Equality:
    diff = sympy.sympify(a) - sympy.sympify(b)
    if is_structurally_zero(diff):
        return Equality.STRUCTURAL
    ok, _ = numeric_zero(diff, samples=samples, tol=tol, seed=seed)
    return Equality.NUMERIC if ok else Equality.DIFFERENT


def to_text(e) -> str:
    """Inverse of :func:`parse` for expressions built from the allowed atoms."""
    s = sympy.sstr(sympy.sympify(e), order="lex")
    return s.replace("**", "^").replace("log(", "ln(")
