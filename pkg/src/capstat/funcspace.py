"""Closed symbolic function algebra with analytic derivatives.

Every object evaluates its n-th derivative at scalar or ndarray points and
reports the structural facts the fractional machinery needs: smoothness
knots, the left support bound of the k-th derivative, and local power-law
exponents at knots (so singular quadrature can absorb them analytically).
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DomainError,
    GluingError,
    NonSmoothPointError,
    QuadratureAccuracyError,
    UnsupportedHistoryError,
    ValidationError,
)
from .quadrature import SingularKernelSpec, integrate_singular
from .specfun import falling_factorial

KNOT_MATCH_TOL = 1e-9  # absolute derivative-matching tolerance at gluing knots


@dataclass(frozen=True)
class FractionalOrder:
    """The pair (k, alpha) with alpha strictly inside (k-1, k)."""

    k: int
    alpha: float

    def __post_init__(self):
        if not (isinstance(self.k, int) and self.k >= 1):
            raise DomainError(f"k must be a positive integer, got {self.k!r}")
        if not (self.k - 1 < self.alpha < self.k):
            raise DomainError(
                f"alpha must lie strictly in ({self.k - 1}, {self.k}), got {self.alpha!r}")

    @property
    def beta(self) -> float:
        """The kernel order k - alpha, in (0, 1)."""
        return self.k - self.alpha


def _asarray(t):
    arr = np.asarray(t, dtype=float)
    return arr, arr.ndim == 0


def _ret(arr, scalar):
    return float(arr) if scalar else arr


# ---------------------------------------------------------------------------
# expression base class and serialization registry

_EXPR_REGISTRY: dict[str, type] = {}


def register_expr(tag):
    def wrap(cls):
        cls._tag = tag
        _EXPR_REGISTRY[tag] = cls
        return cls
    return wrap


def expr_to_dict(expr) -> dict:
    return expr.to_dict()


def expr_from_dict(d: dict):
    tag = d.get("kind")
    if tag not in _EXPR_REGISTRY:
        raise DomainError(f"unknown expression kind {tag!r}")
    return _EXPR_REGISTRY[tag].from_dict(d)


class FunctionExpr:
    """Base class: an evaluable function with analytic derivatives."""

    def derivative(self, n: int, t):
        raise NotImplementedError

    def __call__(self, t):
        return self.derivative(0, t)

    def knots(self) -> tuple:
        """Interior points where smoothness may break."""
        return ()

    def kth_support_bound(self, k: int):
        """Largest L with the k-th derivative identically 0 on (-inf, L);
        math.inf if it vanishes everywhere, None if no such L exists."""
        return None

    def singular_exponent(self, n: int, knot: float) -> float:
        """Exponent e such that derivative(n, .) behaves like
        (t - knot)^e * (smooth) just right of ``knot``; 0 when regular."""
        return 0.0

    def derivative_is_zero(self, n: int) -> bool:
        return False

    def analytic_radius(self, at: float):
        """Distance from ``at`` to the nearest non-analytic point, or None."""
        return None

    def to_dict(self) -> dict:
        raise NotImplementedError

    # small conveniences used throughout the construction code
    def __mul__(self, c):
        if isinstance(c, (int, float)):
            return LinearCombo((float(c),), (self,))
        return NotImplemented

    __rmul__ = __mul__

    def __add__(self, other):
        if isinstance(other, FunctionExpr):
            return LinearCombo((1.0, 1.0), (self, other))
        return NotImplemented


@register_expr("polynomial")
class Polynomial(FunctionExpr):
    """sum_i c_i (t - center)^i with ascending coefficients."""

    def __init__(self, coefficients, center: float = 0.0):
        self.coefficients = tuple(float(c) for c in coefficients)
        self.center = float(center)

    @property
    def degree(self) -> int:
        for i in range(len(self.coefficients) - 1, -1, -1):
            if self.coefficients[i] != 0.0:
                return i
        return -1

    def derivative(self, n, t):
        arr, scalar = _asarray(t)
        s = arr - self.center
        out = np.zeros_like(s)
        for i in range(len(self.coefficients) - 1, n - 1, -1):
            c = self.coefficients[i] * falling_factorial(i, n)
            out = out * s + c
        return _ret(out, scalar)

    def derivative_is_zero(self, n):
        return n > self.degree

    def kth_support_bound(self, k):
        return math.inf if self.degree < k else None

    def analytic_radius(self, at):
        return math.inf

    def to_dict(self):
        return {"kind": "polynomial", "coefficients": list(self.coefficients),
                "center": self.center}

    @classmethod
    def from_dict(cls, d):
        return cls(d["coefficients"], d.get("center", 0.0))

    def __repr__(self):
        return f"Polynomial({list(self.coefficients)}, center={self.center})"


@register_expr("shifted_power")
class ShiftedPower(FunctionExpr):
    """c (t - base)^exponent on t > base; 0 on t <= base when clamped."""

    def __init__(self, c: float, base: float, exponent: float, clamped: bool = True):
        self.c = float(c)
        self.base = float(base)
        self.exponent = float(exponent)
        self.clamped = bool(clamped)

    def _is_int_exponent(self):
        return abs(self.exponent - round(self.exponent)) < 1e-12

    def derivative(self, n, t):
        arr, scalar = _asarray(t)
        out = np.zeros_like(arr)
        right = arr > self.base
        if np.any(~right) and not self.clamped:
            raise DomainError(
                f"power with base {self.base} evaluated left of its domain")
        e = self.exponent - n
        at_base = arr == self.base
        if np.any(at_base) and e <= 1e-12 and self.c != 0.0:
            raise NonSmoothPointError(
                f"derivative of order {n} of (t-{self.base})^{self.exponent} at the base point")
        coef = self.c * falling_factorial(self.exponent, n)
        if coef != 0.0:
            out[right] = coef * (arr[right] - self.base) ** e
        return _ret(out, scalar)

    def knots(self):
        return () if self.c == 0.0 else (self.base,)

    def kth_support_bound(self, k):
        if self.c == 0.0 or falling_factorial(self.exponent, k) == 0.0:
            return math.inf
        return self.base if self.clamped else None

    def singular_exponent(self, n, knot):
        if knot == self.base and self.c != 0.0 and not self._is_int_exponent():
            return self.exponent - n
        return 0.0

    def derivative_is_zero(self, n):
        return self.c == 0.0 or falling_factorial(self.exponent, n) == 0.0

    def analytic_radius(self, at):
        return abs(at - self.base)

    def to_dict(self):
        return {"kind": "shifted_power", "c": self.c, "base": self.base,
                "exponent": self.exponent, "clamped": self.clamped}

    @classmethod
    def from_dict(cls, d):
        return cls(d["c"], d["base"], d["exponent"], d.get("clamped", True))

    def __repr__(self):
        return f"ShiftedPower({self.c}*(t-{self.base})^{self.exponent})"


@register_expr("transcendental")
class Transcendental(FunctionExpr):
    """sin/cos/exp of an affine argument omega*t + phase; entire."""

    _KINDS = ("sin", "cos", "exp")

    def __init__(self, kind: str, omega: float = 1.0, phase: float = 0.0):
        if kind not in self._KINDS:
            raise DomainError(f"unsupported transcendental kind {kind!r}")
        self.kind = kind
        self.omega = float(omega)
        self.phase = float(phase)

    def derivative(self, n, t):
        arr, scalar = _asarray(t)
        u = self.omega * arr + self.phase
        scale = self.omega ** n
        if self.kind == "exp":
            out = scale * np.exp(u)
        elif self.kind == "sin":
            out = scale * np.sin(u + 0.5 * math.pi * n)
        else:
            out = scale * np.cos(u + 0.5 * math.pi * n)
        return _ret(out, scalar)

    def analytic_radius(self, at):
        return math.inf

    def to_dict(self):
        return {"kind": "transcendental", "name": self.kind,
                "omega": self.omega, "phase": self.phase}

    @classmethod
    def from_dict(cls, d):
        return cls(d["name"], d.get("omega", 1.0), d.get("phase", 0.0))

    def __repr__(self):
        return f"Transcendental({self.kind}({self.omega}*t+{self.phase}))"


@register_expr("linear_combo")
class LinearCombo(FunctionExpr):
    """sum_i coeffs[i] * parts[i]; nested combinations are flattened."""

    def __init__(self, coeffs, parts):
        flat_c, flat_p = [], []
        for c, p in zip(coeffs, parts, strict=True):
            if isinstance(p, LinearCombo):
                for ci, pi in zip(p.coeffs, p.parts):
                    flat_c.append(float(c) * ci)
                    flat_p.append(pi)
            else:
                flat_c.append(float(c))
                flat_p.append(p)
        self.coeffs = tuple(flat_c)
        self.parts = tuple(flat_p)

    def derivative(self, n, t):
        arr, scalar = _asarray(t)
        out = np.zeros_like(arr)
        for c, p in zip(self.coeffs, self.parts):
            if c != 0.0 and not p.derivative_is_zero(n):
                out = out + c * p.derivative(n, arr)
        return _ret(out, scalar)

    def knots(self):
        ks = set()
        for c, p in zip(self.coeffs, self.parts):
            if c != 0.0:
                ks.update(p.knots())
        return tuple(sorted(ks))

    def kth_support_bound(self, k):
        bounds = []
        for c, p in zip(self.coeffs, self.parts):
            if c == 0.0:
                continue
            b = p.kth_support_bound(k)
            if b is None:
                return None
            bounds.append(b)
        return min(bounds, default=math.inf)

    def singular_exponent(self, n, knot):
        exps = [p.singular_exponent(n, knot)
                for c, p in zip(self.coeffs, self.parts) if c != 0.0]
        return min(exps, default=0.0)

    def derivative_is_zero(self, n):
        return all(c == 0.0 or p.derivative_is_zero(n)
                   for c, p in zip(self.coeffs, self.parts))

    def analytic_radius(self, at):
        radii = [p.analytic_radius(at) for c, p in zip(self.coeffs, self.parts) if c != 0.0]
        if not radii or any(r is None for r in radii):
            return None
        return min(radii)

    def to_dict(self):
        return {"kind": "linear_combo", "coeffs": list(self.coeffs),
                "parts": [p.to_dict() for p in self.parts]}

    @classmethod
    def from_dict(cls, d):
        return cls(d["coeffs"], [expr_from_dict(p) for p in d["parts"]])

    def __repr__(self):
        return f"LinearCombo({len(self.parts)} parts)"


@register_expr("psi0_block")
class Psi0Block(FunctionExpr):
    """The compactly supported seed block of order k.

    Value: the degree-(k-1) left tail polynomial for t <= 0, then
    -(t - 3/4)^k on (0, 3/4), then 0 from 3/4 on.  Its k-th derivative is
    the constant -k! on (0, 3/4) and 0 outside.
    """

    def __init__(self, k: int):
        if not (isinstance(k, int) and k >= 1):
            raise DomainError(f"k must be a positive integer, got {k!r}")
        self.k = k
        # left tail = degree-(k-1) Taylor polynomial of the middle piece at 0
        self._left = Polynomial(
            [-math.comb(k, j) * (-0.75) ** (k - j) for j in range(k)])
        self._mid = Polynomial([0.0] * k + [-1.0], center=0.75)

    def derivative(self, n, t):
        arr, scalar = _asarray(t)
        if n >= self.k and np.any((arr == 0.0) | (arr == 0.75)):
            if scalar:
                raise NonSmoothPointError(
                    f"order-{n} derivative of the seed block at a kink")
            hit = (arr == 0.0) | (arr == 0.75)
            arr = arr.copy()
            arr[hit] = np.nextafter(arr[hit], np.inf)
        out = np.zeros_like(arr)
        left = arr <= 0.0
        mid = (arr > 0.0) & (arr < 0.75)
        if np.any(left):
            out[left] = self._left.derivative(n, arr[left])
        if np.any(mid):
            out[mid] = self._mid.derivative(n, arr[mid])
        return _ret(out, scalar)

    def knots(self):
        return (0.0, 0.75)

    def kth_support_bound(self, k):
        if k > self.k:
            return math.inf
        return 0.0 if k == self.k else None

    def analytic_radius(self, at):
        return min(abs(at), abs(at - 0.75))

    def to_dict(self):
        return {"kind": "psi0_block", "k": self.k}

    @classmethod
    def from_dict(cls, d):
        return cls(d["k"])

    def __repr__(self):
        return f"Psi0Block(k={self.k})"


@register_expr("affine_rescale")
class AffineRescale(FunctionExpr):
    """scale^out_power * inner(t / scale + shift)."""

    def __init__(self, inner, scale: float, shift: float, out_power: float):
        if not scale > 0.0:
            raise DomainError(f"scale must be positive, got {scale!r}")
        self.inner = inner
        self.scale = float(scale)
        self.shift = float(shift)
        self.out_power = float(out_power)

    def _map(self, t):
        return t / self.scale + self.shift

    def _unmap(self, y):
        return (y - self.shift) * self.scale

    def derivative(self, n, t):
        arr, scalar = _asarray(t)
        fac = self.scale ** (self.out_power - n)
        return _ret(fac * self.inner.derivative(n, self._map(arr)), scalar)

    def knots(self):
        return tuple(self._unmap(y) for y in self.inner.knots())

    def kth_support_bound(self, k):
        b = self.inner.kth_support_bound(k)
        if b is None or math.isinf(b):
            return b
        return self._unmap(b)

    def singular_exponent(self, n, knot):
        return self.inner.singular_exponent(n, self._map(knot))

    def derivative_is_zero(self, n):
        return self.inner.derivative_is_zero(n)

    def analytic_radius(self, at):
        r = self.inner.analytic_radius(self._map(at))
        return None if r is None else r * self.scale

    def to_dict(self):
        return {"kind": "affine_rescale", "inner": self.inner.to_dict(),
                "scale": self.scale, "shift": self.shift, "out_power": self.out_power}

    @classmethod
    def from_dict(cls, d):
        return cls(expr_from_dict(d["inner"]), d["scale"], d["shift"], d["out_power"])

    def __repr__(self):
        return (f"AffineRescale(j={self.scale}, shift={self.shift}, "
                f"out_power={self.out_power})")


@register_expr("monomial_rescale")
class MonomialRescale(FunctionExpr):
    """inner(delta * t + p) / delta^m."""

    def __init__(self, inner, delta: float, p: float, m: int):
        if not delta > 0.0:
            raise DomainError(f"delta must be positive, got {delta!r}")
        self.inner = inner
        self.delta = float(delta)
        self.p = float(p)
        self.m = int(m)

    def _map(self, t):
        return self.delta * t + self.p

    def _unmap(self, y):
        return (y - self.p) / self.delta

    def derivative(self, n, t):
        arr, scalar = _asarray(t)
        fac = self.delta ** (n - self.m)
        return _ret(fac * self.inner.derivative(n, self._map(arr)), scalar)

    def knots(self):
        return tuple(self._unmap(y) for y in self.inner.knots())

    def kth_support_bound(self, k):
        b = self.inner.kth_support_bound(k)
        if b is None or math.isinf(b):
            return b
        return self._unmap(b)

    def singular_exponent(self, n, knot):
        return self.inner.singular_exponent(n, self._map(knot))

    def derivative_is_zero(self, n):
        return self.inner.derivative_is_zero(n)

    def analytic_radius(self, at):
        r = self.inner.analytic_radius(self._map(at))
        return None if r is None else r / self.delta

    def to_dict(self):
        return {"kind": "monomial_rescale", "inner": self.inner.to_dict(),
                "delta": self.delta, "p": self.p, "m": self.m}

    @classmethod
    def from_dict(cls, d):
        return cls(expr_from_dict(d["inner"]), d["delta"], d["p"], d["m"])

    def __repr__(self):
        return f"MonomialRescale(delta={self.delta}, p={self.p}, m={self.m})"


# ---------------------------------------------------------------------------
# composition with a monotone clock (Bell-polynomial chain rules)

def bell_compose(outer_derivs, inner_derivs):
    """Derivatives of F(g(t)) up to order n from the derivative lists
    outer_derivs = [F(g), F'(g), ...] and inner_derivs = [g, g', ...].

    Uses the partial-Bell recurrence; all entries may be ndarrays.
    """
    n = len(outer_derivs) - 1
    if len(inner_derivs) != n + 1:
        raise DomainError("derivative lists must have equal length")
    out = [outer_derivs[0]]
    # B[r][m] = partial Bell polynomial B_{r,m}(g', g'', ...)
    B = [[None] * (n + 1) for _ in range(n + 1)]
    B[0][0] = np.ones_like(np.asarray(inner_derivs[0], dtype=float))
    for r in range(1, n + 1):
        B[r][0] = np.zeros_like(B[0][0])
        for m in range(1, r + 1):
            acc = np.zeros_like(B[0][0])
            for i in range(1, r - m + 2):
                acc = acc + math.comb(r - 1, i - 1) * inner_derivs[i] * B[r - i][m - 1]
            B[r][m] = acc
        total = np.zeros_like(B[0][0])
        for m in range(1, r + 1):
            total = total + outer_derivs[m] * B[r][m]
        out.append(total)
    return out


def inverse_derivatives(psi_derivs):
    """Derivatives of the inverse map x(y) at y = psi(x), given
    [psi(x), psi'(x), ..., psi^{(n)}(x)]; returns [x, x', ..., x^{(n)}]
    where the zeroth entry is unused by callers (set to 0)."""
    n = len(psi_derivs) - 1
    d1 = np.asarray(psi_derivs[1], dtype=float)
    xs = [np.zeros_like(d1), 1.0 / d1]
    for r in range(2, n + 1):
        # solve psi'(x) x_r + sum_{m>=2} psi^{(m)}(x) B_{r,m}(x_1..x_{r-1}) = 0
        B = [[None] * (r + 1) for _ in range(r + 1)]
        B[0][0] = np.ones_like(d1)
        acc_total = np.zeros_like(d1)
        for rr in range(1, r + 1):
            B[rr][0] = np.zeros_like(d1)
            for m in range(1, rr + 1):
                acc = np.zeros_like(d1)
                for i in range(1, rr - m + 2):
                    xi = xs[i] if i < len(xs) else np.zeros_like(d1)
                    acc = acc + math.comb(rr - 1, i - 1) * xi * B[rr - i][m - 1]
                B[rr][m] = acc
        for m in range(2, r + 1):
            acc_total = acc_total + psi_derivs[m] * B[r][m]
        xs.append(-acc_total / d1)
    return xs


@register_expr("composed")
class Composed(FunctionExpr):
    """inner(warp(t)) when inverse=False, inner(warp^-1(t)) when inverse=True.

    ``warp`` is a PsiFunction (defined in capstat.caputo).  Derivatives are
    assembled by the Bell-polynomial chain rule; the inverse branch solves
    the triangular system for the derivatives of the inverse map.
    """

    def __init__(self, inner, warp, inverse: bool = False):
        self.inner = inner
        self.warp = warp
        self.inverse = bool(inverse)
        self._knot_cache = None

    def _arg(self, t):
        if self.inverse:
            return self.warp.inverse(t)
        return self.warp.value(t)

    def derivative(self, n, t):
        arr, scalar = _asarray(t)
        flat = np.atleast_1d(arr)
        if self.inverse:
            x = self.warp.inverse(flat)
            inner_d = [self.inner.derivative(r, x) * np.ones_like(x)
                       for r in range(n + 1)]
            if n == 0:
                return _ret(inner_d[0].reshape(arr.shape), scalar)
            psi_d = [self.warp.derivative(r, x) * np.ones_like(x)
                     for r in range(n + 1)]
            inv_d = inverse_derivatives(psi_d)
            out = bell_compose(inner_d, inv_d)[n]
        else:
            y = self.warp.value(flat)
            inner_d = [self.inner.derivative(r, y) * np.ones_like(y)
                       for r in range(n + 1)]
            if n == 0:
                return _ret(inner_d[0].reshape(arr.shape), scalar)
            warp_d = [self.warp.derivative(r, flat) * np.ones_like(flat)
                      for r in range(n + 1)]
            out = bell_compose(inner_d, warp_d)[n]
        return _ret(out.reshape(arr.shape), scalar)

    def knots(self):
        if self._knot_cache is None:
            inner_knots = self.inner.knots()
            if self.inverse:
                mapped = tuple(float(self.warp.value(y)) for y in inner_knots)
            else:
                mapped = tuple(float(self.warp.inverse(y)) for y in inner_knots)
            self._knot_cache = tuple(sorted(mapped))
        return self._knot_cache

    def kth_support_bound(self, k):
        b = self.inner.kth_support_bound(k)
        if b is None or math.isinf(b):
            return b
        if self.inverse:
            return float(self.warp.value(b))
        return float(self.warp.inverse(b))

    def singular_exponent(self, n, knot):
        y = float(self._arg(knot))
        return self.inner.singular_exponent(n, y)

    def to_dict(self):
        return {"kind": "composed", "inner": self.inner.to_dict(),
                "warp": self.warp.to_dict(), "inverse": self.inverse}

    @classmethod
    def from_dict(cls, d):
        from .caputo import PsiFunction
        return cls(expr_from_dict(d["inner"]),
                   PsiFunction.from_dict(d["warp"]), d["inverse"])

    def __repr__(self):
        op = "inverse" if self.inverse else "forward"
        return f"Composed({op} warp of {self.inner!r})"


# ---------------------------------------------------------------------------
# piecewise functions

@register_expr("piecewise")
class PiecewiseFunction(FunctionExpr):
    """Segments glued at strictly increasing finite boundaries.

    segments[i] covers (boundaries[i-1], boundaries[i]]; the first segment
    extends to -inf, the last to +inf.  Interior boundaries carry verified
    C^{k-1} matching (see :func:`glue`).
    """

    def __init__(self, boundaries, segments, order: FractionalOrder):
        bounds = tuple(float(b) for b in boundaries if math.isfinite(b))
        if list(bounds) != sorted(set(bounds)):
            raise DomainError("boundaries must be strictly increasing")
        if len(segments) != len(bounds) + 1:
            raise DomainError("need exactly one more segment than boundaries")
        self.boundaries = bounds
        self.segments = tuple(segments)
        self.order = order

    def _segment_index(self, t: float) -> int:
        return bisect.bisect_left(self.boundaries, t)

    def derivative(self, n, t):
        arr, scalar = _asarray(t)
        flat = np.atleast_1d(arr).astype(float)
        if n >= self.order.k and np.any(np.isin(flat, self.boundaries)):
            if scalar:
                raise NonSmoothPointError(
                    f"order-{n} derivative at a gluing knot (k = {self.order.k})")
            # array mode serves quadrature: use the right-limit a.e. value
            hit = np.isin(flat, self.boundaries)
            flat = flat.copy()
            flat[hit] = np.nextafter(flat[hit], np.inf)
        idx = np.searchsorted(self.boundaries, flat, side="left")
        out = np.zeros_like(flat)
        for i in range(len(self.segments)):
            mask = idx == i
            if np.any(mask):
                out[mask] = self.segments[i].derivative(n, flat[mask])
        return _ret(out.reshape(arr.shape), scalar)

    def knots(self):
        ks = set(self.boundaries)
        edges = (-math.inf,) + self.boundaries + (math.inf,)
        for i, seg in enumerate(self.segments):
            lo, hi = edges[i], edges[i + 1]
            ks.update(y for y in seg.knots() if lo < y < hi)
        return tuple(sorted(ks))

    def kth_support_bound(self, k):
        edges = (-math.inf,) + self.boundaries + (math.inf,)
        bound = -math.inf
        for i, seg in enumerate(self.segments):
            lo, hi = edges[i], edges[i + 1]
            inner = seg.kth_support_bound(k)
            if inner is not None and (math.isinf(inner) or inner >= hi):
                bound = hi  # k-th derivative vanishes on this whole segment
                continue
            if inner is not None and inner > lo:
                bound = max(bound, min(inner, hi))
            return None if bound == -math.inf else bound
        return math.inf  # vanished on every segment

    def singular_exponent(self, n, knot):
        # behavior just right of the knot is governed by the right segment
        idx = bisect.bisect_right(self.boundaries, knot)
        return self.segments[idx].singular_exponent(n, knot)

    def segment_covering(self, lo: float, hi: float):
        """The single segment covering (lo, hi); requires no boundary inside."""
        i = self._segment_index(0.5 * (lo + hi))
        return self.segments[i]

    def to_dict(self):
        return {"kind": "piecewise", "boundaries": list(self.boundaries),
                "segments": [s.to_dict() for s in self.segments],
                "order": {"k": self.order.k, "alpha": self.order.alpha}}

    @classmethod
    def from_dict(cls, d):
        order = FractionalOrder(d["order"]["k"], d["order"]["alpha"])
        return cls(d["boundaries"], [expr_from_dict(s) for s in d["segments"]], order)

    def __repr__(self):
        return f"PiecewiseFunction(boundaries={self.boundaries})"


@dataclass(frozen=True)
class JetVector:
    """Derivatives of orders 0..m at a base point."""

    base_point: float
    values: tuple

    def __post_init__(self):
        if len(self.values) == 0:
            raise DomainError("a jet must contain at least the value")

    @property
    def m(self) -> int:
        return len(self.values) - 1

    def __iter__(self):
        return iter(self.values)


# ---------------------------------------------------------------------------
# module-level operations

def evaluate(f: FunctionExpr, order: int, t):
    """The order-th derivative of f at t (order 0 is the value)."""
    if order < 0:
        raise DomainError(f"derivative order must be nonnegative, got {order}")
    return f.derivative(order, t)


def _pieces_of(f, side_of: float | None = None):
    """(boundaries, segments) view of an expression, trivial when monolithic."""
    if isinstance(f, PiecewiseFunction):
        return list(f.boundaries), list(f.segments)
    return [], [f]


def glue(f: FunctionExpr, g: FunctionExpr, b: float, order: FractionalOrder,
         tol: float = KNOT_MATCH_TOL) -> PiecewiseFunction:
    """Join f (used on (-inf, b]) and g (used on (b, inf)) after verifying
    C^{k-1} derivative matching at b."""
    violations = []
    for j in range(order.k):
        fj = float(f.derivative(j, b))
        gj = float(g.derivative(j, b))
        if abs(fj - gj) > tol:
            violations.append((j, abs(fj - gj)))
    if violations:
        detail = ", ".join(f"order {j}: mismatch {m:.3e}" for j, m in violations)
        raise GluingError(f"derivative matching failed at knot {b} ({detail})",
                          violations)
    fb, fs = _pieces_of(f)
    gb, gs = _pieces_of(g)
    keep_f = [i for i, x in enumerate(fb) if x < b]
    keep_g = [i for i, x in enumerate(gb) if x > b]
    boundaries = [fb[i] for i in keep_f] + [b] + [gb[i] for i in keep_g]
    segments = (fs[: len(keep_f) + 1]
                + gs[len(gb) - len(keep_g):])
    return PiecewiseFunction(boundaries, segments, order)


def taylor_extend(u: FunctionExpr, b: float, order: FractionalOrder) -> PiecewiseFunction:
    """Extend u left of b by its degree-(k-1) Taylor polynomial at b.

    The extension has identically vanishing k-th derivative on (-inf, b) and
    matches u to order k-1 at b by construction.
    """
    coeffs = [float(u.derivative(j, b)) / math.factorial(j) for j in range(order.k)]
    tail = Polynomial(coeffs, center=b)
    return glue(tail, u, b, order)


def jet(f: FunctionExpr, p: float, m: int, *, check_fd: bool = False,
        fd_tol: float = 1e-6) -> JetVector:
    """Derivatives 0..m of f at p, optionally cross-checked against
    4th-order central finite differences."""
    values = tuple(float(f.derivative(n, p)) for n in range(m + 1))
    if check_fd:
        for n in range(1, m + 1):
            approx = central_difference(lambda x, r=n - 1: f.derivative(r, x), p)
            if abs(approx - values[n]) > fd_tol * max(1.0, abs(values[n])):
                raise ValidationError(
                    f"jet order {n} at {p}: analytic {values[n]:.6e} vs "
                    f"finite-difference {approx:.6e}")
    return JetVector(p, values)


def central_difference(f, t: float, step: float = 1e-4) -> float:
    """4th-order central first-difference of a callable."""
    return float(
        (-f(t + 2 * step) + 8 * f(t + step) - 8 * f(t - step) + f(t - 2 * step))
        / (12 * step))


def ch_distance(f, g, h: int, n_grid: int = 2001, interval=(0.0, 1.0)) -> float:
    """Measured C^h distance: sum over orders 0..h of grid sup-norms.

    A measurement on a declared dense grid, not a proof of the sup norm.
    """
    grid = np.linspace(interval[0], interval[1], n_grid)
    total = 0.0
    for j in range(h + 1):
        fj = np.asarray(f.derivative(j, grid), dtype=float)
        gj = np.asarray(g.derivative(j, grid), dtype=float)
        total += float(np.max(np.abs(fj - gj)))
    return total


# ---------------------------------------------------------------------------
# numerical membership diagnostic

@dataclass
class MembershipEntry:
    t: float
    estimates: tuple
    converged: bool


@dataclass
class MembershipReport:
    passed: bool
    entries: list = field(default_factory=list)

    def failures(self):
        return [e for e in self.entries if not e.converged]


def membership_check(f, a, order: FractionalOrder, t_grid, *,
                     beta: float | None = None, max_evals: int = 60_000) -> MembershipReport:
    """Refinement diagnostic for integrability of
    |f^(k)(tau)| (t - tau)^(k - beta - 1) on (a, t) for each t in t_grid.

    Passes iff the integral estimates stabilize under refinement; divergence
    is reported, not raised.
    """
    k = order.k
    bexp = order.alpha if beta is None else float(beta)
    kernel_p = k - bexp - 1.0
    report = MembershipReport(passed=True)
    for t in t_grid:
        t = float(t)
        lo = a
        if lo == -math.inf:
            bound = f.kth_support_bound(k)
            if bound is None:
                raise UnsupportedHistoryError(
                    "initial point -inf needs a left support bound for f^(k)")
            lo = bound
        if lo >= t:
            report.entries.append(MembershipEntry(t, (0.0, 0.0, 0.0), True))
            continue
        knots = sorted({x for x in f.knots() if lo < x < t})
        cuts = [lo] + knots + [t]
        estimates = []
        for tol in (1e-4, 1e-6, 1e-8):
            total = 0.0
            for x0, x1 in zip(cuts[:-1], cuts[1:]):
                q = min(f.singular_exponent(k, x0), 0.0)
                spec = SingularKernelSpec(x0, x1, kernel_p if x1 == t else 0.0, q)

                def integrand(tau, x0=x0, x1=x1, q=q):
                    vals = np.abs(f.derivative(k, tau))
                    if q != 0.0:
                        vals = vals * (tau - x0) ** (-q)
                    if x1 != t:
                        vals = vals * (t - tau) ** kernel_p
                    return vals

                try:
                    total += integrate_singular(spec, integrand, tol,
                                                max_evals=max_evals).value
                except QuadratureAccuracyError as exc:
                    total += exc.result.value
            estimates.append(total)
        gap12 = abs(estimates[1] - estimates[0])
        gap23 = abs(estimates[2] - estimates[1])
        scale = max(1.0, abs(estimates[2]))
        converged = gap23 <= max(1e-6 * scale, 0.6 * gap12 + 1e-12)
        report.entries.append(MembershipEntry(t, tuple(estimates), converged))
        if not converged:
            report.passed = False
    return report
