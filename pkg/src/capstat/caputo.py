"""Caputo derivative evaluation, memory sources from moving the initial
point, and the clock-warped (psi-) variant."""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    BracketRangeError,
    DomainError,
    MonotonicityError,
    QuadratureAccuracyError,
    UnsupportedHistoryError,
    ValidationError,
)
from .funcspace import (
    Composed,
    FractionalOrder,
    FunctionExpr,
    expr_from_dict,
    expr_to_dict,
)
from .quadrature import SingularKernelSpec, integrate_singular
from .specfun import falling_factorial, gamma


# ---------------------------------------------------------------------------
# monotone clocks

@dataclass
class PsiFunction:
    """A strictly increasing C^k clock; wraps a FunctionExpr.

    ``unbounded_below`` declares lim_{t -> -inf} psi(t) = -inf, which
    licenses automatic leftward bracket expansion during inversion.
    """

    expr: FunctionExpr
    k_smoothness: int = 4
    unbounded_below: bool = False

    def value(self, t):
        return self.expr.derivative(0, t)

    def derivative(self, n, t):
        return self.expr.derivative(n, t)

    def validate_increasing(self, lo: float, hi: float, samples: int = 129):
        grid = np.linspace(lo, hi, samples)
        d = np.asarray(self.expr.derivative(1, grid), dtype=float)
        if not np.all(d > 0.0):
            worst = grid[int(np.argmin(d))]
            raise MonotonicityError(
                f"clock derivative is not positive near t = {worst:.6g}")

    def inverse(self, y, bracket=None):
        """Monotone inversion; scalar or ndarray ``y``."""
        arr = np.asarray(y, dtype=float)
        scalar = arr.ndim == 0
        flat = np.atleast_1d(arr).astype(float)
        out = np.array([self._invert_scalar(v, bracket) for v in flat])
        return float(out[0]) if scalar else out.reshape(arr.shape)

    def _invert_scalar(self, y: float, bracket=None) -> float:
        lo, hi = bracket if bracket is not None else (-1.0 - abs(y), 1.0 + abs(y))
        lo, hi = float(lo), float(hi)
        grow = max(1.0, hi - lo)
        expansions = 0
        while self.value(lo) > y:
            if not self.unbounded_below or expansions > 200:
                raise BracketRangeError(
                    f"target {y!r} lies below the reachable clock range")
            lo -= grow
            grow *= 2.0
            expansions += 1
        grow = max(1.0, hi - lo)
        expansions = 0
        while self.value(hi) < y:
            hi += grow
            grow *= 2.0
            expansions += 1
            if expansions > 200:
                raise BracketRangeError(
                    f"target {y!r} lies above the reachable clock range")
        # bisection with Newton polish
        for _ in range(90):
            mid = 0.5 * (lo + hi)
            if self.value(mid) < y:
                lo = mid
            else:
                hi = mid
            if hi - lo < 1e-15 * max(1.0, abs(hi)):
                break
        x = 0.5 * (lo + hi)
        tol = 1e-12 * max(1.0, abs(y))
        for _ in range(8):
            fx = self.value(x) - y
            if abs(fx) <= 0.25 * tol:
                break
            dfx = self.derivative(1, x)
            if dfx <= 0.0:
                break
            step = fx / dfx
            x_new = x - step
            if lo <= x_new <= hi:
                x = x_new
            else:
                break
        if abs(self.value(x) - y) > tol:
            raise BracketRangeError(f"inversion stalled for target {y!r}")
        return x

    def to_dict(self):
        return {"expr": expr_to_dict(self.expr),
                "k_smoothness": self.k_smoothness,
                "unbounded_below": self.unbounded_below}

    @classmethod
    def from_dict(cls, d):
        return cls(expr_from_dict(d["expr"]), d.get("k_smoothness", 4),
                   d.get("unbounded_below", False))


def identity_clock(k_smoothness: int = 8) -> PsiFunction:
    from .funcspace import Polynomial
    return PsiFunction(Polynomial([0.0, 1.0]), k_smoothness, unbounded_below=True)


def psi_inverse(psi: PsiFunction, y: float, bracket=None) -> float:
    """t with |psi(t) - y| <= 1e-12 max(1, |y|); unique by monotonicity."""
    return float(psi._invert_scalar(float(y), bracket))


# ---------------------------------------------------------------------------
# the Caputo derivative

def _resolve_lower_limit(u, a, k: int):
    lo = a
    bound = u.kth_support_bound(k)
    if lo == -math.inf:
        if bound is None:
            raise UnsupportedHistoryError(
                "initial point -inf requires a left support bound for u^(k)")
        lo = bound
    elif bound is not None and bound > lo:
        lo = bound  # u^(k) vanishes on (-inf, bound); skipping it is exact
    return lo


def _nudge_inside(tau, x0, x1):
    """Keep quadrature nodes strictly inside the panel so that affine
    argument maps cannot round exactly onto a kink of some component.
    The inset is width-relative, far below quadrature tolerances."""
    inset = max(1e-12 * (x1 - x0), 4.0 * np.spacing(abs(x0) + abs(x1) + 1.0))
    lo, hi = x0 + inset, x1 - inset
    if lo < hi:
        return np.clip(tau, lo, hi)
    return tau


def _caputo_pieces(u, a, order, t, rel_tol, abs_tol, tolerate_budget):
    """Per-segment integrals of u^(k) against the memory kernel; returns
    (value_sum, error_estimate_sum)."""
    k, alpha = order.k, order.alpha
    t = float(t)
    lo = _resolve_lower_limit(u, a, k)
    if lo >= t:
        return 0.0, 0.0
    kernel_p = k - alpha - 1.0
    knots = sorted({x for x in u.knots() if lo < x < t})
    cuts = _dedupe([lo] + knots + [t])
    seg_abs = None if abs_tol is None else abs_tol / len(cuts)
    total = 0.0
    total_err = 0.0
    for x0, x1 in zip(cuts[:-1], cuts[1:]):
        seg = u.segment_covering(x0, x1) if hasattr(u, "segment_covering") else u
        if seg.derivative_is_zero(k):
            continue
        q = u.singular_exponent(k, x0)
        if q <= -1.0:
            q = 0.0  # not integrable as a weight; leave to adaptivity
        last = x1 == t
        spec = SingularKernelSpec(x0, x1, kernel_p if last else 0.0, q)

        def integrand(tau, x0=x0, x1=x1, q=q, last=last):
            tau = _nudge_inside(tau, x0, x1)
            vals = np.asarray(u.derivative(k, tau), dtype=float)
            if q != 0.0:
                vals = vals * (tau - x0) ** (-q)
            if not last:
                vals = vals * (t - tau) ** kernel_p
            return vals

        try:
            res = integrate_singular(spec, integrand, rel_tol, abs_tol=seg_abs)
        except QuadratureAccuracyError as exc:
            if not tolerate_budget:
                raise
            res = exc.result
        total += res.value
        total_err += res.abs_error_estimate
    norm = gamma(k - alpha)
    return total / norm, total_err / norm


def caputo_eval(u, a, order: FractionalOrder, t: float,
                rel_tol: float = 1e-9, *, abs_tol: float | None = None) -> float:
    """D_a^alpha u(t) = (1/Gamma(k - alpha)) integral_a^t u^(k)(tau)
    (t - tau)^(k - alpha - 1) dtau, split at every knot of u.

    Local power-law exponents of u^(k) at knots are absorbed into
    Gauss-Jacobi weights so the integrands stay smooth.  ``abs_tol`` adds an
    absolute per-point target, needed when segment values cancel (residuals
    of stationary combinations).
    """
    value, _ = _caputo_pieces(u, a, order, t, rel_tol, abs_tol, False)
    return value


def caputo_eval_with_estimate(u, a, order: FractionalOrder, t: float,
                              rel_tol: float = 1e-8,
                              abs_tol: float = 1e-9) -> tuple[float, float]:
    """Residual-probe variant: tolerates node-budget exhaustion (returns the
    best estimate) and reports (value, error_estimate)."""
    return _caputo_pieces(u, a, order, t, rel_tol, abs_tol, True)


def _dedupe(xs, tol_scale: float = 1e-12):
    out = [xs[0]]
    span = max(abs(x) for x in xs) + 1.0
    for x in xs[1:]:
        if x - out[-1] > tol_scale * span:
            out.append(x)
        else:
            out[-1] = max(out[-1], x)
    return out


# ---------------------------------------------------------------------------
# memory sources

class MemorySource:
    """The inhomogeneity produced when the initial point moves from a to b:

        g(t) = -(1/Gamma(k - alpha)) integral_a^b phi^(k)(tau)
               (t - tau)^(k - alpha - 1) dtau,    t >= b.

    Derivatives in t differentiate the kernel; they are available wherever
    t exceeds the right edge of the history support.
    """

    def __init__(self, phi: FunctionExpr, a: float, b: float, order: FractionalOrder):
        if not b > a:
            raise DomainError(f"need b > a, got a={a!r}, b={b!r}")
        self.phi = phi
        self.a = float(a)
        self.b = float(b)
        self.order = order
        bound = phi.kth_support_bound(order.k)
        lo = self.a
        if lo == -math.inf:
            if bound is None:
                raise UnsupportedHistoryError(
                    "history from -inf requires a support bound for phi^(k)")
            lo = bound
        elif bound is not None:
            lo = max(lo, bound)
        self._lo = lo
        self._hi = self._support_right_edge()
        self._norm = gamma(order.beta)

    def _support_right_edge(self) -> float:
        """Largest x <= b with phi^(k) identically zero on (x, b)."""
        phi, k = self.phi, self.order.k
        edge = self.b
        if hasattr(phi, "boundaries"):
            bounds = list(phi.boundaries)
            segs = list(phi.segments)
            i = bisect.bisect_right(bounds, self.b)
            while i >= 0 and segs[i].derivative_is_zero(k):
                if i == 0:
                    return self._lo
                edge = bounds[i - 1]
                i -= 1
            return min(edge, self.b)
        return edge

    def is_zero(self) -> bool:
        return self.phi.derivative_is_zero(self.order.k) or self._lo >= self._hi

    def derivative(self, n, t):
        arr = np.asarray(t, dtype=float)
        scalar = arr.ndim == 0
        flat = np.atleast_1d(arr).astype(float)
        if np.any(flat < self.b):
            raise DomainError("memory source evaluated left of its start time")
        if n > 0 and np.any(flat <= self._hi):
            raise DomainError(
                "memory-source derivatives need t beyond the history support")
        out = np.zeros_like(flat)
        if not self.is_zero():
            k, alpha = self.order.k, self.order.alpha
            e = k - alpha - 1.0 - n
            coef = -falling_factorial(k - alpha - 1.0, n) / self._norm
            q = min(self.phi.singular_exponent(k, self._lo), 0.0)

            for i, ti in enumerate(flat):
                # the kernel is singular only when t sits on the support edge
                kernel_at_end = ti == self._hi
                spec = SingularKernelSpec(self._lo, self._hi,
                                          e if kernel_at_end else 0.0, q)

                def integrand(tau, ti=ti, kernel_at_end=kernel_at_end):
                    vals = np.asarray(self.phi.derivative(k, tau), dtype=float)
                    if q != 0.0:
                        vals = vals * (tau - self._lo) ** (-q)
                    if not kernel_at_end:
                        vals = vals * (ti - tau) ** e
                    return vals

                out[i] = coef * integrate_singular(spec, integrand, 1e-11).value
        return float(out[0]) if scalar else out.reshape(arr.shape)

    def value(self, t):
        return self.derivative(0, t)

    def __call__(self, t):
        return self.derivative(0, t)

    def analytic_radius(self, at: float):
        return abs(at - self._hi)

    def to_dict(self):
        return {"kind": "memory_source", "phi": expr_to_dict(self.phi),
                "a": self.a, "b": self.b,
                "order": {"k": self.order.k, "alpha": self.order.alpha}}

    @classmethod
    def from_dict(cls, d):
        order = FractionalOrder(d["order"]["k"], d["order"]["alpha"])
        return cls(expr_from_dict(d["phi"]), d["a"], d["b"], order)


def memory_source(phi: FunctionExpr, a: float, b: float,
                  order: FractionalOrder) -> MemorySource:
    return MemorySource(phi, a, b, order)


@dataclass
class ShiftIdentity:
    """D_a^alpha u(t), D_b^alpha u(t), g(t) and the identity residual."""

    d_a: float
    d_b: float
    g_value: float
    residual: float


def shift_initial_point(u: FunctionExpr, a: float, b: float,
                        order: FractionalOrder, t: float,
                        rel_tol: float = 1e-9,
                        check_tol: float = 1e-7) -> ShiftIdentity:
    """Verify D_a^alpha u(t) = D_b^alpha u(t) - g(t) with g the memory
    source of u's history on [a, b]."""
    if not t > b > a:
        raise DomainError(f"need t > b > a, got t={t!r}, b={b!r}, a={a!r}")
    d_a = caputo_eval(u, a, order, t, rel_tol)
    d_b = caputo_eval(u, b, order, t, rel_tol)
    src = memory_source(u, a, b, order)
    g_val = 0.0 if src.is_zero() else float(src.value(t))
    residual = d_a - (d_b - g_val)
    if abs(residual) > check_tol * max(1.0, abs(d_a), abs(d_b)):
        raise ValidationError(
            f"initial-point identity violated by {residual:.3e} at t={t}")
    return ShiftIdentity(d_a, d_b, g_val, residual)


# ---------------------------------------------------------------------------
# psi-warped Caputo derivatives

def psi_caputo_eval(u: FunctionExpr, a: float, order: FractionalOrder,
                    psi: PsiFunction, t: float, rel_tol: float = 1e-9) -> float:
    """Clock-warped Caputo derivative, computed through the change of
    variable: build w = u o psi^{-1} and evaluate the ordinary derivative
    of w with initial point psi(a) at psi(t)."""
    if not t > a:
        raise DomainError(f"need t > a, got t={t!r}, a={a!r}")
    psi.validate_increasing(a if math.isfinite(a) else t - 10.0, t)
    w = Composed(u, psi, inverse=True)
    pa = float(psi.value(a)) if math.isfinite(a) else -math.inf
    pt = float(psi.value(t))
    return caputo_eval(w, pa, order, pt, rel_tol)


def psi_caputo_direct_first_order(u: FunctionExpr, a: float, alpha: float,
                                  psi: PsiFunction, t: float,
                                  rel_tol: float = 1e-9) -> float:
    """Direct evaluation of the warped integral for k = 1:

        (1/Gamma(1 - alpha)) integral_a^t u'(tau)
            (psi(t) - psi(tau))^(-alpha) dtau.

    The endpoint behavior (psi(t) - psi(tau))^(-alpha) is factored as
    (t - tau)^(-alpha) times a smooth ratio so Jacobi weights absorb it.
    Used as an independent cross-check of the change-of-variable route.
    """
    if not 0.0 < alpha < 1.0:
        raise DomainError("direct warped evaluation is for order k = 1")
    pt = float(psi.value(t))
    spec = SingularKernelSpec(a, t, -alpha, 0.0)

    def integrand(tau):
        ratio = (pt - np.asarray(psi.value(tau), dtype=float)) / (t - tau)
        return np.asarray(u.derivative(1, tau), dtype=float) * ratio ** (-alpha)

    val = integrate_singular(spec, integrand, rel_tol).value
    return val / gamma(1.0 - alpha)


__all__ = [
    "PsiFunction", "identity_clock", "psi_inverse", "caputo_eval",
    "MemorySource", "memory_source", "ShiftIdentity", "shift_initial_point",
    "psi_caputo_eval", "psi_caputo_direct_first_order",
]
