"""Exterior forms and multivector fields in natural coordinates.

Both kinds are graded sums ``coefficient * basis`` keyed by strictly
increasing tuples of coordinate indices (see :class:`msym.expr.CoordSystem`
for the order).  Contraction of a multivector ``X1 ^ ... ^ Xk`` into a form
applies the leftmost factor first, so that ``i(dx0-dual ^ ... )`` of the
volume form is ``+1``.  The Lie derivative of a degree-k multivector is
``d i(X) - (-1)^k i(X) d`` and the Schouten-Nijenhuis bracket is the one
characterized by ``L([X, Y]) = [L(X), L(Y)]`` (graded commutator).
"""

from __future__ import annotations

import itertools
from typing import Iterable, Mapping, Sequence

import sympy

from .errors import CoordinateDomainError, DomainMismatchError
from .expr import CoordSystem, Equality, canonical, compare, is_structurally_zero, to_text


def _merge(I: tuple, J: tuple):
    """Sign and sorted union of two index tuples, or None if they overlap."""
    if set(I) & set(J):
        return None
    inversions = sum(1 for i in I for j in J if i > j)
    return (-1) ** inversions, tuple(sorted(I + J))


def _remove(I: tuple, a: int):
    pos = I.index(a)
    return (-1) ** pos, I[:pos] + I[pos + 1 :]


class _Graded:
    __slots__ = ("coords", "degree", "_terms")

    def __init__(self, coords: CoordSystem, degree: int, terms: Mapping | None = None, clean: bool = True):
        self.coords = coords
        self.degree = degree
        if not terms:
            self._terms = {}
            return
        if not clean:
            self._terms = dict(terms)
            return
        out = {}
        for idx, c in terms.items():
            idx = tuple(idx)
            if len(idx) != degree:
                raise ValueError(f"basis {idx} has length {len(idx)}, expected {degree}")
            if list(idx) != sorted(set(idx)):
                raise ValueError(f"basis index {idx} is not strictly increasing")
            c = canonical(c)
            if c != 0:
                out[idx] = c
        self._terms = out

    @property
    def terms(self) -> dict:
        return self._terms

    @classmethod
    def _new(cls, coords, degree, terms):
        return cls(coords, degree, terms)

    def _check(self, other):
        if type(other) is not type(self):
            raise TypeError(f"cannot combine {type(self).__name__} with {type(other).__name__}")
        if other.coords != self.coords:
            raise DomainMismatchError(f"{self.coords} vs {other.coords}")

    def __add__(self, other):
        self._check(other)
        if not other.terms:
            return self
        if not self.terms:
            return other
        if other.degree != self.degree:
            raise ValueError("cannot add objects of different degree")
        acc = dict(self.terms)
        for k, c in other.terms.items():
            acc[k] = acc.get(k, 0) + c
        return self._new(self.coords, self.degree, acc)

    def __neg__(self):
        return self._new(self.coords, self.degree, {k: -c for k, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, scalar):
        if isinstance(scalar, _Graded):
            return NotImplemented
        scalar = sympy.sympify(scalar)
        return self._new(self.coords, self.degree, {k: scalar * c for k, c in self.terms.items()})

    __rmul__ = __mul__

    def __xor__(self, other):
        return wedge(self, other)

    def subs(self, mapping: Mapping):
        return self._new(self.coords, self.degree, {k: sympy.sympify(c).subs(mapping) for k, c in self.terms.items()})

    def map_coefficients(self, fn):
        return self._new(self.coords, self.degree, {k: fn(c) for k, c in self.terms.items()})

    def coefficient(self, *basis) -> sympy.Expr:
        """Coefficient of the given basis element (names, symbols or indices, any order)."""
        idx = [b if isinstance(b, int) else self.coords.index(self._strip(b)) for b in basis]
        if len(set(idx)) != len(idx):
            return sympy.Integer(0)
        order = sorted(range(len(idx)), key=lambda k: idx[k])
        sign = _perm_sign(order)
        return sign * self.terms.get(tuple(sorted(idx)), sympy.Integer(0))

    @staticmethod
    def _strip(name):
        return name

    def is_zero(self) -> bool:
        return all(is_structurally_zero(c) for c in self.terms.values())

    def equals(self, other, samples: int = 50, tol: float = 1e-9) -> Equality:
        """Structural equality, with the numeric fallback flagged separately."""
        self._check(other)
        keys = set(self.terms) | set(other.terms)
        verdict = Equality.STRUCTURAL
        for k in sorted(keys):
            e = compare(self.terms.get(k, 0), other.terms.get(k, 0), samples=samples, tol=tol)
            if e is Equality.DIFFERENT:
                return e
            if e is Equality.NUMERIC:
                verdict = Equality.NUMERIC
        return verdict

    def basis_names(self, idx: tuple) -> list:
        raise NotImplementedError

    def to_json(self) -> dict:
        return {
            "degree": self.degree,
            "terms": [
                {"coeff": to_text(c), "basis": self.basis_names(k)} for k, c in sorted(self.terms.items())
            ],
        }

    def __eq__(self, other):
        if type(other) is not type(self):
            return NotImplemented
        return self.coords == other.coords and self.equals(other) is Equality.STRUCTURAL

    __hash__ = None

    def __repr__(self):
        if not self.terms:
            return f"{type(self).__name__}(0, degree={self.degree})"
        parts = []
        for k, c in sorted(self.terms.items()):
            basis = "^".join(self.basis_names(k))
            parts.append(f"({to_text(c)})*{basis}" if basis else f"({to_text(c)})")
        return " + ".join(parts)


def _perm_sign(order: Sequence[int]) -> int:
    inv = sum(1 for i in range(len(order)) for j in range(i + 1, len(order)) if order[i] > order[j])
    return -1 if inv % 2 else 1


class DiffForm(_Graded):
    """Exterior k-form; basis covectors are named ``dx0``, ``dy1``, ``dp0_1``, ``dp``."""

    __slots__ = ()

    @classmethod
    def zero(cls, coords: CoordSystem, degree: int = 0) -> "DiffForm":
        return cls(coords, degree)

    @classmethod
    def function(cls, coords: CoordSystem, f) -> "DiffForm":
        return cls(coords, 0, {(): f})

    @classmethod
    def basis(cls, coords: CoordSystem, *names) -> "DiffForm":
        """Wedge of basis covectors, e.g. ``DiffForm.basis(c, "dx0", "dy0")``."""
        out = cls.function(coords, 1)
        for n in names:
            i = coords.index(n[1:] if isinstance(n, str) and n.startswith("d") else n)
            out = wedge(out, cls(coords, 1, {(i,): 1}))
        return out

    @staticmethod
    def _strip(name):
        if isinstance(name, str) and name.startswith("d"):
            return name[1:]
        return name

    def basis_names(self, idx):
        return ["d" + self.coords.names[i] for i in idx]

    def value(self) -> sympy.Expr:
        """The function of a 0-form."""
        if self.degree > 0 and self.terms:
            raise ValueError("not a 0-form")
        return self.terms.get((), sympy.Integer(0))


class MultiVec(_Graded):
    """Multivector field; basis vectors named ``d/dx0`` etc.

    A decomposable multivector keeps its factor list; ``terms`` then holds
    the expansion ``f1 ^ ... ^ fk``.
    """

    __slots__ = ("factors",)

    def __init__(self, coords, degree, terms=None, clean=True, factors=None):
        super().__init__(coords, degree, terms, clean)
        self.factors = tuple(factors) if factors is not None else None

    @classmethod
    def _new(cls, coords, degree, terms):
        return cls(coords, degree, terms)

    @classmethod
    def vector(cls, coords: CoordSystem, components: Mapping) -> "MultiVec":
        terms = {}
        for k, c in components.items():
            i = k if isinstance(k, int) else coords.index(k)
            terms[(i,)] = terms.get((i,), 0) + sympy.sympify(c)
        return cls(coords, 1, terms)

    @classmethod
    def decomposable(cls, factors: Sequence["MultiVec"]) -> "MultiVec":
        factors = tuple(factors)
        if not factors:
            raise ValueError("need at least one factor")
        coords = factors[0].coords
        for f in factors:
            if f.degree != 1:
                raise ValueError("factors must be vector fields")
            if f.coords != coords:
                raise DomainMismatchError("factors on different coordinate systems")
        expanded = factors[0]
        for f in factors[1:]:
            expanded = _wedge_terms(expanded, f)
        return cls(coords, len(factors), expanded.terms, clean=False, factors=factors)

    @classmethod
    def basis(cls, coords: CoordSystem, *names) -> "MultiVec":
        fs = [cls.vector(coords, {n: 1}) for n in names]
        return cls.decomposable(fs)

    def general(self) -> "MultiVec":
        return MultiVec(self.coords, self.degree, self.terms, clean=False)

    def component(self, sym) -> sympy.Expr:
        if self.degree != 1:
            raise ValueError("component() is for vector fields")
        return self.terms.get((self.coords.index(sym),), sympy.Integer(0))

    def apply(self, f) -> sympy.Expr:
        """Derivative of a function along a vector field."""
        if self.degree != 1:
            raise ValueError("apply() is for vector fields")
        f = sympy.sympify(f)
        syms = self.coords.symbols
        return canonical(sum((c * sympy.diff(f, syms[k[0]]) for k, c in self.terms.items()), sympy.Integer(0)))

    @staticmethod
    def _strip(name):
        if isinstance(name, str) and name.startswith("d/d"):
            return name[3:]
        return name

    def basis_names(self, idx):
        return ["d/d" + self.coords.names[i] for i in idx]

    def to_json(self) -> dict:
        out = super().to_json()
        if self.factors is not None:
            out["factors"] = [f.to_json()["terms"] for f in self.factors]
        return out


def _wedge_terms(a: _Graded, b: _Graded) -> _Graded:
    acc: dict = {}
    for I, ci in a.terms.items():
        for J, cj in b.terms.items():
            r = _merge(I, J)
            if r is None:
                continue
            s, K = r
            acc[K] = acc.get(K, 0) + s * ci * cj
    return type(a)._new(a.coords, a.degree + b.degree, acc)


def wedge(a, b):
    """Graded exterior product of two forms or two multivectors."""
    if type(a) is not type(b):
        raise TypeError("wedge needs two objects of the same kind")
    if a.coords != b.coords:
        raise DomainMismatchError(f"{a.coords} vs {b.coords}")
    if not a.terms or not b.terms:
        return type(a)._new(a.coords, a.degree + b.degree, {})
    if isinstance(a, MultiVec) and a.factors is not None and b.factors is not None:
        return MultiVec.decomposable(a.factors + b.factors)
    return _wedge_terms(a, b)


def interior(V: MultiVec, w: DiffForm) -> DiffForm:
    """Interior product of a vector field with a form."""
    if V.degree != 1:
        raise ValueError("interior() needs a vector field")
    if V.coords != w.coords:
        raise DomainMismatchError(f"{V.coords} vs {w.coords}")
    if w.degree < 1:
        return DiffForm(w.coords, w.degree - 1)
    acc: dict = {}
    for (a,), va in V.terms.items():
        for I, c in w.terms.items():
            if a in I:
                s, K = _remove(I, a)
                acc[K] = acc.get(K, 0) + s * va * c
    return DiffForm(w.coords, w.degree - 1, acc)


def contract(X: MultiVec, w: DiffForm) -> DiffForm:
    """i(X)w, leftmost factor first; zero when deg w < deg X."""
    if X.coords != w.coords:
        raise DomainMismatchError(f"{X.coords} vs {w.coords}")
    k = w.degree - X.degree
    if k < 0 or not X.terms or not w.terms:
        return DiffForm(w.coords, k)
    if X.factors is not None:
        out = w
        for f in X.factors:
            out = interior(f, out)
        return out
    acc: dict = {}
    for J, a in X.terms.items():
        for I, c in w.terms.items():
            if not set(J) <= set(I):
                continue
            sign, K = 1, I
            for j in J:
                s, K = _remove(K, j)
                sign *= s
            acc[K] = acc.get(K, 0) + sign * a * c
    return DiffForm(w.coords, k, acc)


def d(w: DiffForm) -> DiffForm:
    """Exterior derivative."""
    acc: dict = {}
    for I, c in w.terms.items():
        for s in c.free_symbols:
            k = w.coords.index(s)
            if k in I:
                continue
            dc = sympy.diff(c, s)
            sign, K = _merge((k,), I)
            acc[K] = acc.get(K, 0) + sign * dc
    return DiffForm(w.coords, w.degree + 1, acc)


def lie(X: MultiVec, w: DiffForm) -> DiffForm:
    """Graded Lie derivative d i(X) - (-1)^k i(X) d for a degree-k multivector."""
    first = d(contract(X, w))
    second = contract(X, d(w))
    if X.degree % 2:
        return first + second
    return first - second


def lie_power(Y: MultiVec, w: DiffForm, n: int) -> DiffForm:
    for _ in range(n):
        w = lie(Y, w)
    return w


def vector_bracket(U: MultiVec, V: MultiVec) -> MultiVec:
    """Lie bracket [U, V] of vector fields."""
    syms = U.coords.symbols
    acc: dict = {}
    for (a,), ua in U.terms.items():
        for (c,), vc in V.terms.items():
            acc[(c,)] = acc.get((c,), 0) + ua * sympy.diff(vc, syms[a])
    for (a,), va in V.terms.items():
        for (c,), uc in U.terms.items():
            acc[(c,)] = acc.get((c,), 0) - va * sympy.diff(uc, syms[a])
    return MultiVec(U.coords, 1, acc)


def _as_decomposables(X: MultiVec):
    if X.factors is not None:
        return [list(X.factors)]
    out = []
    coords = X.coords
    for J, c in X.terms.items():
        fs = [MultiVec(coords, 1, {(J[0],): c})]
        fs += [MultiVec(coords, 1, {(j,): 1}) for j in J[1:]]
        out.append(fs)
    return out


def _wedge_list(coords, vectors, degree):
    if not vectors:
        return MultiVec(coords, 0, {(): 1})
    out = vectors[0]
    for v in vectors[1:]:
        out = _wedge_terms(out, v)
    return MultiVec(coords, degree, out.terms, clean=False)


def schouten(X: MultiVec, Y: MultiVec) -> MultiVec:
    """Schouten-Nijenhuis bracket [X, Y] of degree deg X + deg Y - 1.

    Computed on decomposable pieces by

        [X1^..^Xi, Y1^..^Yj] = sum_{a,b} (-1)^(a+b) [Xa, Yb] ^ X1..^Xa-hat..^Xi ^ Y1..^Yb-hat..^Yj

    (1-based a, b), then rescaled by (-1)^((i+1)(j+1)) so that the graded-commutator
    identity ``L([X,Y]) = L(X)L(Y) - (-1)^((i-1)(j-1)) L(Y)L(X)`` holds.
    General multivectors are handled by bilinear extension.
    """
    if X.coords != Y.coords:
        raise DomainMismatchError(f"{X.coords} vs {Y.coords}")
    i, j = X.degree, Y.degree
    if i < 1 or j < 1:
        raise ValueError("schouten() needs multivectors of degree >= 1")
    coords = X.coords
    deg = i + j - 1
    acc = MultiVec(coords, deg)
    if not X.terms or not Y.terms:
        return acc
    for xs in _as_decomposables(X):
        for ys in _as_decomposables(Y):
            for a in range(i):
                for b in range(j):
                    br = vector_bracket(xs[a], ys[b])
                    if not br.terms:
                        continue
                    rest = [br] + xs[:a] + xs[a + 1 :] + ys[:b] + ys[b + 1 :]
                    term = _wedge_list(coords, rest, deg)
                    acc = acc + term * ((-1) ** (a + b))
    if ((i + 1) * (j + 1)) % 2:
        acc = -acc
    return MultiVec(coords, deg, acc.terms, clean=False)


def graded_lie_commutator(X: MultiVec, Y: MultiVec, w: DiffForm) -> DiffForm:
    """[L(X), L(Y)] w for operators of degrees deg X - 1 and deg Y - 1."""
    a = lie(X, lie(Y, w))
    b = lie(Y, lie(X, w))
    if ((X.degree - 1) * (Y.degree - 1)) % 2:
        return a + b
    return a - b


# -- volume forms -----------------------------------------------------------


def volume(coords: CoordSystem) -> DiffForm:
    """d^m x = dx0 ^ ... ^ dx{m-1}."""
    return DiffForm(coords, coords.m, {tuple(range(coords.m)): 1})


def coordinate_vector(coords: CoordSystem, sym) -> MultiVec:
    return MultiVec.vector(coords, {sym: 1})


def volume_minus(coords: CoordSystem, mu: int) -> DiffForm:
    """d^{m-1}x_mu = i(d/dx^mu) d^m x."""
    return interior(coordinate_vector(coords, coords.x[mu]), volume(coords))


def volume_minus2(coords: CoordSystem, mu: int, rho: int) -> DiffForm:
    """d^{m-2}x_{mu rho} = i(d/dx^mu) d^{m-1}x_rho."""
    return interior(coordinate_vector(coords, coords.x[mu]), volume_minus(coords, rho))


# -- pullbacks ----------------------------------------------------------------


def pullback_map(w: DiffForm, target: CoordSystem, images: Mapping) -> DiffForm:
    """Pull ``w`` back along the map whose coordinate images are ``images``.

    ``images`` maps source coordinate symbols to expressions in the target
    coordinates; source coordinates left out map to the same-named target
    coordinate.
    """
    src = w.coords
    imgs = []
    for s in src.symbols:
        if s in images:
            e = sympy.sympify(images[s])
        elif s.name in images:
            e = sympy.sympify(images[s.name])
        elif s in target:
            e = s
        else:
            raise CoordinateDomainError(f"no image given for {s}")
        target.require(e, what=f"image of {s}")
        imgs.append(e)
    subs = dict(zip(src.symbols, imgs))
    diffs = {}

    def dimg(k):
        if k not in diffs:
            diffs[k] = d(DiffForm.function(target, imgs[k]))
        return diffs[k]

    out = DiffForm(target, w.degree)
    for I, c in w.terms.items():
        term = DiffForm.function(target, sympy.sympify(c).xreplace(subs))
        for k in I:
            term = wedge(term, dimg(k))
            if not term.terms:
                break
        out = out + term
    return DiffForm(target, w.degree, out.terms, clean=False)


class SymbolicSection:
    """A section psi of J1*E -> M (or E -> M) given by expressions in x."""

    def __init__(self, base: CoordSystem, values: Mapping):
        self.base = base
        self.values = {}
        for k, v in values.items():
            key = sympy.Symbol(k) if isinstance(k, str) else k
            e = sympy.sympify(v)
            base.require(e, what=f"section component {key}")
            self.values[key] = e


def pullback(w: DiffForm, section: SymbolicSection) -> DiffForm:
    """psi^* w as a form on the base; forms of degree > m pull back to zero."""
    return pullback_map(w, section.base, section.values)


def residual_terms(w: DiffForm) -> dict:
    """Nonzero coefficients keyed by basis-name tuples."""
    return {tuple(w.basis_names(k)): c for k, c in w.terms.items() if not is_structurally_zero(c)}


def all_basis(coords: CoordSystem, degree: int) -> Iterable[tuple]:
    return itertools.combinations(range(coords.dim), degree)
