"""Exact symbolic algebra of vector fields on coordinate charts.

Coefficients live in the class (polynomial) x (trigonometric polynomial):
finite sums of  scalar * x^e * prod_a trig_a(k_a x_a)  with trig in {sin, cos}
and integer frequencies.  The class is closed under +, *, and d/dx_a, which is
all that iterated Lie brackets need, so brackets are computed exactly with no
CAS dependency.  Scalars are kept as exact rationals while they fit in a bit
bound and silently degrade to floats beyond it; evaluation is always floating
point.
"""

from __future__ import annotations

import ast
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional, Sequence, Union

import numpy as np

# scalar bit bound for the rational -> float fallback
_MAX_SCALAR_BITS = 128

Scalar = Union[Fraction, float]

# a per-coordinate harmonic factor: None (absent) or ("sin"|"cos", k) with k >= 1
Harmonic = Optional[tuple]


def _norm_scalar(s: Scalar) -> Scalar:
    if isinstance(s, Fraction):
        if s.numerator.bit_length() > _MAX_SCALAR_BITS or \
           s.denominator.bit_length() > _MAX_SCALAR_BITS:
            return float(s)
        return s
    return float(s)


def _mul_scalar(a: Scalar, b: Scalar) -> Scalar:
    if isinstance(a, Fraction) and isinstance(b, Fraction):
        return _norm_scalar(a * b)
    return float(a) * float(b)


def _add_scalar(a: Scalar, b: Scalar) -> Scalar:
    if isinstance(a, Fraction) and isinstance(b, Fraction):
        return _norm_scalar(a + b)
    return float(a) + float(b)


def _norm_harmonic(kind: str, k: int):
    """Normalize sin/cos of an integer multiple to k >= 1 form.

    Returns (coeff_sign, harmonic_or_None); sin(0)=0 is signalled by
    coeff_sign = 0.
    """
    if k == 0:
        if kind == "sin":
            return 0, None
        return 1, None
    if k < 0:
        if kind == "sin":
            return -1, ("sin", -k)
        return 1, ("cos", -k)
    return 1, (kind, k)


def _mul_harmonics(h1: Harmonic, h2: Harmonic):
    """Product of two per-coordinate factors as a list of (rational, harmonic).

    Uses the product-to-sum identities so canonical forms stay finite.
    """
    if h1 is None:
        return [(Fraction(1), h2)]
    if h2 is None:
        return [(Fraction(1), h1)]
    k1, k2 = h1[1], h2[1]
    half = Fraction(1, 2)
    out = []
    if h1[0] == "sin" and h2[0] == "sin":
        # sin a sin b = (cos(a-b) - cos(a+b))/2
        pairs = [(half, "cos", k1 - k2), (-half, "cos", k1 + k2)]
    elif h1[0] == "cos" and h2[0] == "cos":
        pairs = [(half, "cos", k1 - k2), (half, "cos", k1 + k2)]
    elif h1[0] == "sin" and h2[0] == "cos":
        pairs = [(half, "sin", k1 + k2), (half, "sin", k1 - k2)]
    else:  # cos a sin b = (sin(a+b) - sin(a-b))/2
        pairs = [(half, "sin", k1 + k2), (-half, "sin", k1 - k2)]
    for coeff, kind, k in pairs:
        sgn, h = _norm_harmonic(kind, k)
        if sgn == 0:
            continue
        out.append((coeff * sgn, h))
    return out


class ChartCoeff:
    """Closed-form scalar function on an n-dimensional chart.

    Stored as a canonical dict mapping (exponents, harmonics) -> scalar where
    exponents is a length-n integer tuple and harmonics a length-n tuple of
    None | ("sin"|"cos", k).  Terms merge on insert; zeros are dropped, so
    equality of canonical forms is plain dict equality.
    """

    __slots__ = ("dim", "terms")

    def __init__(self, dim: int, terms=None):
        self.dim = dim
        self.terms = {}
        if terms:
            for key, s in terms.items() if isinstance(terms, dict) else terms:
                self._accumulate(key, s)

    def _accumulate(self, key, s: Scalar):
        cur = self.terms.get(key)
        if cur is None:
            s = _norm_scalar(s)
            if s != 0:
                self.terms[key] = s
        else:
            tot = _add_scalar(cur, s)
            if tot == 0:
                del self.terms[key]
            else:
                self.terms[key] = tot

    # ---- constructors -------------------------------------------------

    @classmethod
    def constant(cls, dim: int, value: Scalar) -> "ChartCoeff":
        key = ((0,) * dim, (None,) * dim)
        if isinstance(value, int):
            value = Fraction(value)
        return cls(dim, {key: value} if value != 0 else None)

    @classmethod
    def coordinate(cls, dim: int, axis: int) -> "ChartCoeff":
        exps = tuple(1 if a == axis else 0 for a in range(dim))
        return cls(dim, {(exps, (None,) * dim): Fraction(1)})

    @classmethod
    def harmonic(cls, dim: int, axis: int, kind: str, k: int = 1) -> "ChartCoeff":
        sgn, h = _norm_harmonic(kind, k)
        if sgn == 0:
            return cls(dim)
        harms = tuple(h if a == axis else None for a in range(dim))
        return cls(dim, {((0,) * dim, harms): Fraction(sgn)})

    # ---- algebra ------------------------------------------------------

    def __add__(self, other: "ChartCoeff") -> "ChartCoeff":
        if self.dim != other.dim:
            raise ValueError("chart dimension mismatch")
        out = ChartCoeff(self.dim, dict(self.terms))
        for key, s in other.terms.items():
            out._accumulate(key, s)
        return out

    def __neg__(self) -> "ChartCoeff":
        return self.scale(Fraction(-1))

    def __sub__(self, other: "ChartCoeff") -> "ChartCoeff":
        return self + (-other)

    def scale(self, s: Scalar) -> "ChartCoeff":
        if isinstance(s, int):
            s = Fraction(s)
        out = ChartCoeff(self.dim)
        if s == 0:
            return out
        for key, v in self.terms.items():
            out._accumulate(key, _mul_scalar(v, s))
        return out

    def __mul__(self, other: "ChartCoeff") -> "ChartCoeff":
        if self.dim != other.dim:
            raise ValueError("chart dimension mismatch")
        out = ChartCoeff(self.dim)
        for (e1, h1), s1 in self.terms.items():
            for (e2, h2), s2 in other.terms.items():
                exps = tuple(a + b for a, b in zip(e1, e2))
                s = _mul_scalar(s1, s2)
                # expand per-coordinate harmonic products one axis at a time
                partial = [(s, [])]
                for a in range(self.dim):
                    nxt = []
                    for coeff, hs in partial:
                        for c2, h in _mul_harmonics(h1[a], h2[a]):
                            nxt.append((_mul_scalar(coeff, c2), hs + [h]))
                    partial = nxt
                for coeff, hs in partial:
                    out._accumulate((exps, tuple(hs)), coeff)
        return out

    def diff(self, axis: int) -> "ChartCoeff":
        """Exact partial derivative along a coordinate axis."""
        out = ChartCoeff(self.dim)
        for (exps, harms), s in self.terms.items():
            e = exps[axis]
            h = harms[axis]
            # power rule part
            if e > 0:
                e2 = list(exps)
                e2[axis] = e - 1
                out._accumulate((tuple(e2), harms), _mul_scalar(s, Fraction(e)))
            # harmonic part
            if h is not None:
                kind, k = h
                sgn, h2 = (1, ("cos", k)) if kind == "sin" else (-1, ("sin", k))
                harms2 = list(harms)
                harms2[axis] = h2
                out._accumulate((exps, tuple(harms2)),
                                _mul_scalar(s, Fraction(sgn * k)))
        return out

    # ---- queries ------------------------------------------------------

    def is_zero(self) -> bool:
        return not self.terms

    def __eq__(self, other) -> bool:
        if not isinstance(other, ChartCoeff):
            return NotImplemented
        if self.dim != other.dim or len(self.terms) != len(other.terms):
            return False
        for key, s in self.terms.items():
            v = other.terms.get(key)
            if v is None or float(v) != float(s):
                return False
        return True

    def __hash__(self):
        return hash((self.dim, frozenset(
            (key, float(s)) for key, s in self.terms.items())))

    def canonical_key(self):
        """Hashable canonical form; equal keys iff equal canonical forms."""
        return tuple(sorted(
            ((key, float(s)) for key, s in self.terms.items()),
            key=lambda kv: repr(kv[0])))

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Numeric evaluation at points of shape (..., dim)."""
        pts = np.asarray(points, dtype=float)
        if pts.shape[-1] != self.dim:
            raise ValueError("point dimension mismatch")
        out = np.zeros(pts.shape[:-1], dtype=float)
        for (exps, harms), s in self.terms.items():
            term = np.full(pts.shape[:-1], float(s))
            for a in range(self.dim):
                xa = pts[..., a]
                e = exps[a]
                if e:
                    term = term * xa ** e
                h = harms[a]
                if h is not None:
                    fn = np.sin if h[0] == "sin" else np.cos
                    term = term * fn(h[1] * xa)
            out += term
        return out

    def __repr__(self):
        if not self.terms:
            return "ChartCoeff<0>"
        bits = []
        for (exps, harms), s in sorted(self.terms.items(), key=repr):
            factors = [str(s)]
            for a, e in enumerate(exps):
                if e:
                    factors.append(f"x{a}" + (f"^{e}" if e > 1 else ""))
            for a, h in enumerate(harms):
                if h is not None:
                    factors.append(f"{h[0]}({h[1]}*x{a})")
            bits.append("*".join(factors))
        return "ChartCoeff<" + " + ".join(bits) + ">"


@dataclass(frozen=True)
class VectorField:
    """First-order operator sum_a comp[a] d/dx_a with exact coefficients."""

    components: tuple

    @property
    def dim(self) -> int:
        return len(self.components)

    @classmethod
    def zero(cls, dim: int) -> "VectorField":
        return cls(tuple(ChartCoeff(dim) for _ in range(dim)))

    @classmethod
    def coordinate(cls, dim: int, axis: int) -> "VectorField":
        comps = [ChartCoeff(dim) for _ in range(dim)]
        comps[axis] = ChartCoeff.constant(dim, 1)
        return cls(tuple(comps))

    def is_zero(self) -> bool:
        return all(c.is_zero() for c in self.components)

    def scale(self, s) -> "VectorField":
        return VectorField(tuple(c.scale(s) for c in self.components))

    def mul_coeff(self, f: ChartCoeff) -> "VectorField":
        return VectorField(tuple(f * c for c in self.components))

    def __add__(self, other: "VectorField") -> "VectorField":
        if self.dim != other.dim:
            raise ValueError("dimension mismatch")
        return VectorField(tuple(a + b for a, b in
                                 zip(self.components, other.components)))

    def __neg__(self) -> "VectorField":
        return self.scale(-1)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Coefficient vector at points (..., dim) -> (..., dim)."""
        pts = np.asarray(points, dtype=float)
        out = np.empty(pts.shape[:-1] + (self.dim,), dtype=float)
        for a, c in enumerate(self.components):
            out[..., a] = c.evaluate(pts)
        return out

    def canonical_key(self):
        return tuple(c.canonical_key() for c in self.components)


def bracket(X: VectorField, Y: VectorField) -> VectorField:
    """Lie bracket [X, Y] = XY - YX, exact."""
    if X.dim != Y.dim:
        raise ValueError("dimension mismatch")
    n = X.dim
    comps = []
    for k in range(n):
        acc = ChartCoeff(n)
        for j in range(n):
            acc = acc + X.components[j] * Y.components[k].diff(j)
            acc = acc - Y.components[j] * X.components[k].diff(j)
        comps.append(acc)
    return VectorField(tuple(comps))


TAU_CAP_DEFAULT = 4


def iterated_bracket(word: Sequence[int], fields: Sequence[VectorField],
                     tau_cap: int = TAU_CAP_DEFAULT) -> VectorField:
    """X_I = ad(X_{i1}) ... ad(X_{i_{j-1}}) X_{ij}; one-letter words return
    the field itself.  Letters are 1-based indices into `fields`."""
    if not 1 <= len(word) <= tau_cap:
        raise ValueError(f"word length must be in [1, {tau_cap}]")
    for i in word:
        if not 1 <= i <= len(fields):
            raise IndexError(f"letter {i} out of range")
    acc = fields[word[-1] - 1]
    for i in reversed(word[:-1]):
        acc = bracket(fields[i - 1], acc)
    return acc


def evaluate(X: VectorField, p) -> np.ndarray:
    """Numeric coefficient vector of X at a single chart point."""
    return X.evaluate(np.asarray(p, dtype=float))


# ---------------------------------------------------------------------------
# textual field grammar
#
#   X2 = sin(x)*d/dy + 0.5*x*d/dz
#
# Expressions are sums of products of numbers, coordinates, sin/cos of an
# integer multiple of one coordinate, and direction tokens d/d<coord>.
# ---------------------------------------------------------------------------

_DDX_RE = re.compile(r"d/d(\w+)")


class FieldParseError(ValueError):
    pass


def _coeff_from_ast(node, coords):
    """Evaluate an AST node to a ChartCoeff (raises on direction tokens)."""
    val = _value_from_ast(node, coords)
    if isinstance(val, ChartCoeff):
        return val
    raise FieldParseError("expected a scalar expression, got a vector field")


def _value_from_ast(node, coords):
    n = len(coords)
    if isinstance(node, ast.Expression):
        return _value_from_ast(node.body, coords)
    if isinstance(node, ast.Constant):
        if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
            raise FieldParseError(f"bad literal {node.value!r}")
        v = Fraction(node.value) if isinstance(node.value, int) else node.value
        return ChartCoeff.constant(n, v)
    if isinstance(node, ast.Name):
        name = node.id
        if name.startswith("__dd_") and name.endswith("__"):
            coord = name[5:-2]
            if coord not in coords:
                raise FieldParseError(f"unknown direction d/d{coord}")
            return VectorField.coordinate(n, coords.index(coord))
        if name in coords:
            return ChartCoeff.coordinate(n, coords.index(name))
        if name == "pi":
            return ChartCoeff.constant(n, float(np.pi))
        raise FieldParseError(f"unknown symbol {name!r}")
    if isinstance(node, ast.UnaryOp):
        v = _value_from_ast(node.operand, coords)
        if isinstance(node.op, ast.USub):
            return v.scale(-1)
        if isinstance(node.op, ast.UAdd):
            return v
        raise FieldParseError("unsupported unary operator")
    if isinstance(node, ast.BinOp):
        if isinstance(node.op, (ast.Add, ast.Sub)):
            a = _value_from_ast(node.left, coords)
            b = _value_from_ast(node.right, coords)
            if isinstance(node.op, ast.Sub):
                b = b.scale(-1)
            if isinstance(a, VectorField) != isinstance(b, VectorField):
                raise FieldParseError("cannot add scalar and vector field")
            return a + b
        if isinstance(node.op, ast.Mult):
            a = _value_from_ast(node.left, coords)
            b = _value_from_ast(node.right, coords)
            if isinstance(a, VectorField) and isinstance(b, VectorField):
                raise FieldParseError("cannot multiply two vector fields")
            if isinstance(a, VectorField):
                return a.mul_coeff(b)
            if isinstance(b, VectorField):
                return b.mul_coeff(a)
            return a * b
        if isinstance(node.op, ast.Div):
            a = _value_from_ast(node.left, coords)
            b = node.right
            if not isinstance(b, ast.Constant) or not isinstance(b.value, (int, float)):
                raise FieldParseError("division only by numeric literals")
            d = Fraction(b.value) if isinstance(b.value, int) else b.value
            if d == 0:
                raise FieldParseError("division by zero")
            return a.scale(Fraction(1, d) if isinstance(d, Fraction) else 1.0 / d)
        if isinstance(node.op, ast.Pow):
            a = _value_from_ast(node.left, coords)
            p = node.right
            if isinstance(a, VectorField):
                raise FieldParseError("cannot exponentiate a vector field")
            if not isinstance(p, ast.Constant) or not isinstance(p.value, int) \
                    or p.value < 0:
                raise FieldParseError("exponent must be a nonnegative integer")
            out = ChartCoeff.constant(len(coords), 1)
            for _ in range(p.value):
                out = out * a
            return out
        raise FieldParseError("unsupported binary operator")
    if isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in ("sin", "cos"):
            raise FieldParseError("only sin() and cos() calls are supported")
        if len(node.args) != 1 or node.keywords:
            raise FieldParseError(f"{node.func.id}() takes one argument")
        arg = _coeff_from_ast(node.args[0], coords)
        # argument must be an integer multiple of a single coordinate
        axis, k = _extract_linear(arg, len(coords))
        return ChartCoeff.harmonic(len(coords), axis, node.func.id, k)
    raise FieldParseError(f"unsupported syntax node {type(node).__name__}")


def _extract_linear(c: ChartCoeff, n: int):
    """Require c == k * x_axis with integer k; return (axis, k)."""
    if len(c.terms) != 1:
        raise FieldParseError("trig arguments must be k*<coordinate>")
    (exps, harms), s = next(iter(c.terms.items()))
    if any(h is not None for h in harms) or sum(exps) != 1:
        raise FieldParseError("trig arguments must be k*<coordinate>")
    axis = exps.index(1)
    k = Fraction(s) if not isinstance(s, Fraction) else s
    if k.denominator != 1:
        raise FieldParseError("trig frequency must be an integer")
    return axis, int(k)


def parse_coeff(text: str, coords: Sequence[str]) -> ChartCoeff:
    """Parse a scalar coefficient expression."""
    coords = list(coords)
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as e:
        raise FieldParseError(f"syntax error in {text!r}: {e}") from None
    val = _value_from_ast(tree, coords)
    if isinstance(val, VectorField):
        raise FieldParseError("expected scalar, found direction token")
    return val


def parse_field(text: str, coords: Sequence[str]) -> VectorField:
    """Parse a field expression such as 'sin(x)*d/dy + 0.5*x*d/dz'."""
    coords = list(coords)
    src = _DDX_RE.sub(lambda m: f"__dd_{m.group(1)}__", text.strip())
    try:
        tree = ast.parse(src, mode="eval")
    except SyntaxError as e:
        raise FieldParseError(f"syntax error in {text!r}: {e}") from None
    val = _value_from_ast(tree, coords)
    if isinstance(val, ChartCoeff):
        raise FieldParseError("expression contains no direction token d/d<coord>")
    return val
