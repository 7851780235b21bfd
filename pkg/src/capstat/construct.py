"""Explicit building blocks: the compactly supported seed block psi0, its
closed-form memory source on [1, inf), the stationary extension psi built
from the zero-jet representation, the boundary constant kappa, and the
rescaled family v_j."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .caputo import caputo_eval
from .errors import ConstructionError
from .funcspace import (
    AffineRescale,
    FractionalOrder,
    FunctionExpr,
    LinearCombo,
    PiecewiseFunction,
    Polynomial,
    Psi0Block,
    ShiftedPower,
    glue,
)
from .quadrature import SingularKernelSpec, integrate_singular
from .volterra import VolterraRepFn
from .specfun import gamma

KAPPA_DUAL_TOL = 1e-9
STATIONARITY_TOL = 1e-6  # absolute residual bound on probe grids
_DEFAULT_PROBE = (1.1, 1.4, 1.8, 2.3, 3.0)


@dataclass(frozen=True)
class BuildingBlock:
    """The order-(k, alpha) seed construction, immutable after build."""

    order: FractionalOrder
    psi0: PiecewiseFunction
    g: FunctionExpr
    psi: PiecewiseFunction
    kappa: float


@dataclass(frozen=True)
class ScaledSolution:
    """v_j(t) = j^alpha psi(t/j + 1); vanishes on [-j/4, 0], stationary on
    (0, inf), k-th derivative supported in [-j, inf)."""

    j: float
    base: BuildingBlock
    expr: AffineRescale

    def value(self, t):
        return self.expr.derivative(0, t)

    def derivative(self, n, t):
        return self.expr.derivative(n, t)


def make_psi0(order: FractionalOrder) -> PiecewiseFunction:
    """The three-piece seed block, assembled through verified gluing.

    Left tail: the degree-(k-1) polynomial matching the middle piece at 0;
    middle: -(t - 3/4)^k on (0, 3/4); identically 0 from 3/4 on.  Its k-th
    derivative is -k! on (0, 3/4) and vanishes elsewhere.
    """
    k = order.k
    left = Polynomial([-math.comb(k, j) * (-0.75) ** (k - j) for j in range(k)])
    middle = Polynomial([0.0] * k + [-1.0], center=0.75)
    zero = Polynomial([0.0])
    return glue(glue(left, middle, 0.0, order), zero, 0.75, order)


def block_source(order: FractionalOrder) -> FunctionExpr:
    """Closed form of the seed block's memory source on [1, inf):

        g(t) = (k! / Gamma(k - alpha + 1)) [t^(k-alpha) - (t - 3/4)^(k-alpha)],

    with every derivative available by differentiating the two powers.
    """
    k, alpha = order.k, order.alpha
    c = math.factorial(k) / gamma(k - alpha + 1.0)
    return LinearCombo(
        (c, -c),
        (ShiftedPower(1.0, 0.0, k - alpha), ShiftedPower(1.0, 0.75, k - alpha)),
    )


def block_source_quadrature(order: FractionalOrder, t: float,
                            rel_tol: float = 1e-11) -> float:
    """The defining memory integral of the seed block, evaluated by
    quadrature; the independent cross-check of :func:`block_source`."""
    psi0 = Psi0Block(order.k)
    e = order.k - order.alpha - 1.0
    spec = SingularKernelSpec(0.0, 0.75, 0.0, 0.0)

    def integrand(tau):
        return np.asarray(psi0.derivative(order.k, tau), dtype=float) * (t - tau) ** e

    val = integrate_singular(spec, integrand, rel_tol).value
    return -val / gamma(order.k - order.alpha)


def kappa_dual(order: FractionalOrder) -> tuple[float, float]:
    """(closed form, nested quadrature) for the boundary constant kappa.

    Closed form: k! (1 - 4^(alpha-k)) / (Gamma(alpha+1) Gamma(k-alpha+1)).
    Quadrature: the double integral of the seed block's kernel average.
    """
    k, alpha = order.k, order.alpha
    closed = (math.factorial(k) * (1.0 - 4.0 ** (alpha - k))
              / (gamma(alpha + 1.0) * gamma(k - alpha + 1.0)))

    psi0 = Psi0Block(k)
    inner_spec = SingularKernelSpec(0.0, 0.75, 0.0, 0.0)

    def inner_integrand(omega):
        vals = np.asarray(psi0.derivative(k, omega), dtype=float)
        return vals * (1.0 - omega) ** (k - alpha - 1.0)

    inner = integrate_singular(inner_spec, inner_integrand, 1e-12).value
    outer_spec = SingularKernelSpec(0.0, 1.0, alpha - 1.0, 0.0)
    outer = integrate_singular(outer_spec, lambda z: np.ones_like(z), 1e-12).value
    quad = -inner * outer / (gamma(alpha) * gamma(k - alpha))
    return closed, quad


def kappa(order: FractionalOrder) -> float:
    """The boundary constant; the two computation routes must agree."""
    closed, quad = kappa_dual(order)
    if abs(closed - quad) > KAPPA_DUAL_TOL * max(1.0, abs(closed)):
        raise ConstructionError(
            f"kappa routes disagree: closed {closed!r} vs quadrature {quad!r}")
    if not closed > 0.0:
        raise ConstructionError(f"kappa must be positive, got {closed!r}")
    return closed


def build_psi(order: FractionalOrder, *, checks: bool = True,
              probe=_DEFAULT_PROBE) -> BuildingBlock:
    """Assemble the stationary extension: the seed block up to t = 1, the
    zero-jet representation of its memory source beyond.

    With ``checks`` on, the source closed form, the kappa dual computation
    and the stationarity residual on the probe grid are all verified.
    """
    psi0 = make_psi0(order)
    g = block_source(order)
    if checks:
        for t in (1.0, 1.5, 2.5):
            direct = float(g.derivative(0, t))
            viaquad = block_source_quadrature(order, t)
            if abs(direct - viaquad) > 1e-10 * max(1.0, abs(direct)):
                raise ConstructionError(
                    f"memory-source closed form off by {direct - viaquad:.3e} at t={t}")
    rep = VolterraRepFn(1.0, order, g)
    psi = glue(psi0, rep, 1.0, order)
    kap = kappa(order)
    if checks:
        for t in probe:
            residual = caputo_eval(psi, -math.inf, order, float(t), rel_tol=1e-9)
            if abs(residual) > STATIONARITY_TOL:
                raise ConstructionError(
                    f"stationarity residual {residual:.3e} at t={t} exceeds "
                    f"{STATIONARITY_TOL:.1e}")
    return BuildingBlock(order, psi0, g, psi, kap)


_BLOCK_CACHE: dict[tuple[int, float], BuildingBlock] = {}


def get_block(order: FractionalOrder) -> BuildingBlock:
    """Cached building block per order (immutable, safe to share)."""
    key = (order.k, order.alpha)
    if key not in _BLOCK_CACHE:
        _BLOCK_CACHE[key] = build_psi(order)
    return _BLOCK_CACHE[key]


def scaled_family(block: BuildingBlock, j: float) -> ScaledSolution:
    """The rescaled copy v_j(t) = j^alpha psi(t/j + 1)."""
    if not j > 0.0:
        raise ConstructionError(f"scale must be positive, got {j!r}")
    expr = AffineRescale(block.psi, scale=float(j), shift=1.0,
                         out_power=block.order.alpha)
    return ScaledSolution(float(j), block, expr)


def boundary_rate(block: BuildingBlock, eps: float, *, rel_tol=1e-11) -> float:
    """psi(1 + eps) / eps^alpha, evaluated by adaptive quadrature on the
    representation (the honest route for asymptotics checks)."""
    from .volterra import rep_value
    rep = block.psi.segments[-1]
    return rep_value(rep, 1.0 + eps, rel_tol) / eps ** block.order.alpha


# ---------------------------------------------------------------------------
# generalized seeds (custom history profiles)

def _profile_source(order: FractionalOrder, s0: float, s1: float,
                    degree: int) -> FunctionExpr:
    """Closed form of -(1/Gamma(k-alpha)) integral_{s0}^{s1} (tau-s0)^degree
    (t-tau)^(k-alpha-1) dtau for t > s1, by repeated integration by parts:
    a finite combination of shifted powers."""
    bexp = order.beta
    coeffs, parts = [], []
    pre = 1.0
    e, c = degree, bexp
    while e > 0:
        coeffs.append(-pre * (s1 - s0) ** e / c)
        parts.append(ShiftedPower(1.0, s1, c))
        pre *= e / c
        e -= 1
        c += 1.0
    coeffs.append(pre / c)
    parts.append(ShiftedPower(1.0, s0, c))
    coeffs.append(-pre / c)
    parts.append(ShiftedPower(1.0, s1, c))
    norm = -1.0 / gamma(bexp)
    return LinearCombo([norm * cf for cf in coeffs], parts)


def stationary_seed(order: FractionalOrder, s0: float = 0.0, s1: float = 0.75,
                    profile_degree: int = 0) -> PiecewiseFunction:
    """A custom seed: history with k-th derivative (t - s0)^profile_degree on
    (s0, s1) (zero jet at s1), constant continuation on [s1, 1], and the
    zero-jet representation of its memory source beyond t = 1.

    Same construction as the canonical block, generalized in the history
    profile; exactly stationary on (1, inf) with k-th derivative supported
    in [s0, inf).  Used to enrich the approximation dictionary.
    """
    if not (0.0 <= s0 < s1 <= 0.75):
        raise ConstructionError(f"seed window must sit inside [0, 3/4], got ({s0}, {s1})")
    k = order.k
    d = int(profile_degree)
    base_coef = math.factorial(d) / math.factorial(d + k)
    bump = Polynomial([0.0] * (d + k) + [base_coef], center=s0)
    fixup = Polynomial([-float(bump.derivative(j, s1)) / math.factorial(j)
                        for j in range(k)], center=s1)
    middle = LinearCombo((1.0, 1.0), (bump, fixup))
    left = Polynomial([float(middle.derivative(j, s0)) / math.factorial(j)
                       for j in range(k)], center=s0)
    psi0 = glue(glue(left, middle, s0, order), Polynomial([0.0]), s1, order)
    g = _profile_source(order, s0, s1, d)
    rep = VolterraRepFn(1.0, order, g)
    return glue(psi0, rep, 1.0, order)
