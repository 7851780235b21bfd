"""Adaptive evaluation of weakly singular integrals

    integral_a^b f(tau) (b - tau)^p (tau - a)^q dtau,    p, q > -1,

with f smooth on the open interval.  Endpoint singularities are absorbed
analytically by Gauss-Jacobi nodes; the interior is refined by bisection
with a node-doubling error estimate per panel.  Integrands are never
sampled at the endpoints (Gauss nodes are interior).
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import roots_jacobi

from .errors import DomainError, QuadratureAccuracyError

ATOL_FLOOR = 1e-14  # certifies true zeros (residuals of exact solutions)

_NODE_CACHE: dict[tuple[int, float, float], tuple[np.ndarray, np.ndarray]] = {}


def _jacobi_nodes(n: int, p: float, q: float):
    """Nodes/weights for the weight (1-x)^p (1+x)^q on [-1, 1], cached."""
    key = (n, float(p), float(q))
    nodes = _NODE_CACHE.get(key)
    if nodes is None:
        with np.errstate(invalid="ignore"):  # scipy quirk for p + q near -1
            nodes = roots_jacobi(n, p, q)
        _NODE_CACHE[key] = (np.asarray(nodes[0]), np.asarray(nodes[1]))
    return _NODE_CACHE[key]


@dataclass(frozen=True)
class SingularKernelSpec:
    """Kernel description: exponent p on (b - tau), q on (tau - a)."""

    a: float
    b: float
    p: float
    q: float

    def __post_init__(self):
        if not (math.isfinite(self.a) and math.isfinite(self.b)) or not self.b > self.a:
            raise DomainError(f"need finite b > a, got a={self.a!r}, b={self.b!r}")
        if not (self.p > -1.0 and self.q > -1.0):
            raise DomainError(f"exponents must exceed -1, got p={self.p!r}, q={self.q!r}")


@dataclass
class QuadratureResult:
    value: float
    abs_error_estimate: float
    evaluations: int

    def __post_init__(self):
        if not math.isfinite(self.abs_error_estimate) or self.abs_error_estimate < 0:
            raise DomainError("error estimate must be finite and nonnegative")
        if self.evaluations <= 0:
            raise DomainError("evaluations must be positive")


def _panel_value(spec, f, lo, hi, at_left, at_right, n):
    """Gauss-Jacobi estimate on [lo, hi].

    Endpoint weights are handled by the Jacobi exponents only when the
    panel touches the corresponding endpoint of [a, b]; elsewhere the
    (now smooth) weight factors are folded into the integrand.
    """
    p_eff = spec.p if at_right else 0.0
    q_eff = spec.q if at_left else 0.0
    x, w = _jacobi_nodes(n, p_eff, q_eff)
    half = 0.5 * (hi - lo)
    tau = lo + half * (x + 1.0)
    vals = np.asarray(f(tau), dtype=float)
    if spec.q != 0.0 and not at_left:
        vals = vals * (tau - spec.a) ** spec.q
    if spec.p != 0.0 and not at_right:
        vals = vals * (spec.b - tau) ** spec.p
    scale = half ** (1.0 + p_eff + q_eff)
    return scale * float(w @ vals), n


def integrate_singular(spec: SingularKernelSpec, f, rel_tol: float = 1e-10, *,
                       abs_tol: float | None = None,
                       max_evals: int = 400_000, n_base: int = 16) -> QuadratureResult:
    """Adaptive integral of f against the weakly singular kernel of ``spec``.

    ``f`` must accept ndarray arguments.  Converges when the error estimate
    drops below ``max(rel_tol * |value|, abs_tol, 1e-14)``; raises
    QuadratureAccuracyError (carrying the best estimate) if the node budget
    is exhausted first.
    """
    if not isinstance(spec, SingularKernelSpec):
        spec = SingularKernelSpec(*spec)
    if not (1e-14 < rel_tol < 1e-2):
        raise DomainError(f"rel_tol must lie in (1e-14, 1e-2), got {rel_tol!r}")
    floor = max(abs_tol or 0.0, ATOL_FLOOR)

    evals = 0
    counter = 0
    width_floor = 1e-15 * (spec.b - spec.a)

    def estimate(lo, hi, at_left, at_right):
        nonlocal evals, counter
        coarse, n1 = _panel_value(spec, f, lo, hi, at_left, at_right, n_base)
        fine, n2 = _panel_value(spec, f, lo, hi, at_left, at_right, 2 * n_base)
        evals += n1 + n2
        err = abs(fine - coarse)
        counter += 1
        return (-err, counter, lo, hi, at_left, at_right, fine, err)

    heap = [estimate(spec.a, spec.b, True, True)]
    while True:
        total = sum(item[6] for item in heap)
        total_err = sum(item[7] for item in heap)
        if total_err <= max(rel_tol * abs(total), floor):
            return QuadratureResult(total, total_err, evals)
        worst = heap[0]
        if evals >= max_evals or (worst[3] - worst[2]) <= width_floor:
            best = QuadratureResult(total, total_err, evals)
            raise QuadratureAccuracyError(
                f"quadrature did not converge (error {total_err:.3e} on value {total:.3e})",
                best,
            )
        heapq.heappop(heap)
        _, _, lo, hi, at_left, at_right, _, _ = worst
        mid = 0.5 * (lo + hi)
        heapq.heappush(heap, estimate(lo, mid, at_left, False))
        heapq.heappush(heap, estimate(mid, hi, False, at_right))


def integrate_semiinfinite_truncated(f, t: float, support_left: float,
                                     kernel_exponent: float,
                                     rel_tol: float = 1e-10) -> QuadratureResult:
    """Integral of f(tau) (t - tau)^kernel_exponent over (-inf, t] for an f
    that vanishes left of ``support_left``; reduces to a finite singular
    integral on [support_left, t]."""
    if support_left >= t:
        return QuadratureResult(0.0, 0.0, 1)
    spec = SingularKernelSpec(support_left, t, kernel_exponent, 0.0)
    return integrate_singular(spec, f, rel_tol)


def fixed_jacobi_batch(f, a, b_arr, p: float, q: float, n: int = 80):
    """Vectorized fixed-node integrals:  for each upper limit b_i in
    ``b_arr``, integral_a^{b_i} f(tau) (b_i - tau)^p (tau - a)^q dtau.

    Non-adaptive; intended for smooth f where n Jacobi nodes are spectrally
    accurate.  Cross-validated against integrate_singular in the tests.
    """
    x, w = _jacobi_nodes(n, p, q)
    b_arr = np.asarray(b_arr, dtype=float)
    half = 0.5 * (b_arr - a)
    tau = a + half[..., None] * (x + 1.0)
    vals = f(tau)
    return half ** (1.0 + p + q) * (vals @ w)
