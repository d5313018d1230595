"""Benchmark singular-control problems without switching.

``vhat0`` is the optimal dividend value in the old technology with absorption
at zero; ``w1L`` is the optimal dividend value in the modern technology when
hitting zero pays a liquidation value ``L``. Both are barrier strategies whose
thresholds are pinned by C^2 pasting with the affine payout branch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import BranchError, NoBracket
from .model import CharRoots, ModelParams, char_roots
from .piecewise import EXP_LIMIT, Affine, ExpCombo, PiecewiseValueFunction


def _exp(z):
    z = np.asarray(z, dtype=float)
    if np.any(np.abs(z) > EXP_LIMIT):
        raise OverflowError(f"exponent {np.max(np.abs(z)):.1f} exceeds {EXP_LIMIT}")
    return np.exp(z)


@dataclass(frozen=True)
class BasisFns:
    """f(x) = e^{m+ x} - e^{m- x} (vanishes at 0) and h(x) = e^{m- x} (decays)."""

    roots: CharRoots

    def f(self, x, nu: int = 0):
        mp, mm = self.roots.m_plus, self.roots.m_minus
        return mp ** nu * _exp(mp * np.asarray(x, float)) - mm ** nu * _exp(mm * np.asarray(x, float))

    def h(self, x, nu: int = 0):
        mm = self.roots.m_minus
        return mm ** nu * _exp(mm * np.asarray(x, float))


def basis(params: ModelParams, regime: int) -> BasisFns:
    return BasisFns(char_roots(params, regime))


@dataclass(frozen=True)
class BenchmarkSolution:
    """A barrier-strategy value function: concave ODE piece then slope-one payout."""

    kind: str                # "Vhat0" or "W1L"
    liquidation: float
    threshold: float
    coefficient: float       # multiplier of f on the concave piece
    degenerate: bool         # True when everything is paid at once (no concave piece)
    value: PiecewiseValueFunction

    def __call__(self, x, nu: int = 0):
        return self.value(x, nu)


def xhat0(params: ModelParams) -> float:
    """Dividend barrier of the old-technology benchmark: the root of f0'' = 0."""
    r = char_roots(params, 0)
    # (m+)^2 e^{m+ x} = (m-)^2 e^{m- x}
    return 2.0 * math.log(-r.m_minus / r.m_plus) / r.spread


def vhat0_solution(params: ModelParams) -> BenchmarkSolution:
    r = char_roots(params, 0)
    bf = BasisFns(r)
    x0 = xhat0(params)
    c = 1.0 / float(bf.f(x0, 1))
    affine = Affine(intercept=params.mu0 / params.rho - x0)
    pieces = []
    if x0 > 0:
        pieces.append((0.0, ExpCombo((c, -c), (r.m_plus, r.m_minus)), "C"))
    pieces.append((x0, affine, "D"))
    value = PiecewiseValueFunction.build(pieces, regime=0)
    return BenchmarkSolution("Vhat0", 0.0, x0, c, x0 == 0.0, value)


def vhat0(params: ModelParams, x, nu: int = 0):
    """V-hat-0 (or its nu-th derivative); zero for x < 0."""
    return vhat0_solution(params).value(x, nu)


def x1L_residual(params: ModelParams, L: float, x):
    """Value-matching residual of the modern-technology threshold equation."""
    r = char_roots(params, 1)
    bf = BasisFns(r)
    x = np.asarray(x, dtype=float)
    # h f' - h' f collapses to (m+ - m-) e^{(m+ + m-) x}
    num = L * r.spread * _exp((r.m_plus + r.m_minus) * x) + bf.f(x)
    return num / bf.f(x, 1) - params.mu1 / params.rho


def x1L(params: ModelParams, L: float) -> float:
    """Payout barrier of the modern-technology benchmark with liquidation value L."""
    target = params.mu1 / params.rho
    if not L < target:
        raise BranchError(f"L = {L} >= mu1/rho = {target}: degenerate branch, no threshold")
    if L < 0:
        raise BranchError(f"liquidation value must be nonnegative, got {L}")
    lo, hi = 0.0, 1.0
    while x1L_residual(params, L, hi) <= 0.0:
        lo, hi = hi, 2.0 * hi
        if hi > 1e6:
            raise NoBracket(f"no sign change of threshold residual up to x = {hi}")
    root = brentq(lambda x: float(x1L_residual(params, L, x)), lo, hi,
                  xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    return float(root)


def w1L_solution(params: ModelParams, L: float) -> BenchmarkSolution:
    target = params.mu1 / params.rho
    if L >= target:
        value = PiecewiseValueFunction.build([(0.0, Affine(intercept=L), "D")], regime=1)
        return BenchmarkSolution("W1L", L, 0.0, 0.0, True, value)
    r = char_roots(params, 1)
    bf = BasisFns(r)
    x1 = x1L(params, L)
    A = (1.0 - L * float(bf.h(x1, 1))) / float(bf.f(x1, 1))
    pieces = [
        (0.0, ExpCombo((A, L - A), (r.m_plus, r.m_minus)), "C"),
        (x1, Affine(intercept=target - x1), "D"),
    ]
    value = PiecewiseValueFunction.build(pieces, regime=1)
    return BenchmarkSolution("W1L", L, x1, A, False, value)


def w1L(params: ModelParams, L: float, x, nu: int = 0):
    return w1L_solution(params, L).value(x, nu)


def vhat1_solution(params: ModelParams) -> BenchmarkSolution:
    """V-hat-1: the modern benchmark liquidated at V-hat-0((1 - lambda) g)."""
    L = float(vhat0(params, params.compensation))
    return w1L_solution(params, L)


def xhat1(params: ModelParams) -> float:
    return vhat1_solution(params).threshold


def crossing_point(params: ModelParams, lower, upper, g: float | None = None,
                   x_hi: float | None = None) -> float | None:
    """Smallest x >= g where upper(x - g) overtakes lower(x), or None.

    ``lower`` and ``upper`` are callables; beyond both functions' last
    breakpoint the gap is constant, so a finite scan decides existence.
    """
    g = params.g if g is None else g
    gap = lambda x: float(upper(x - g)) - float(lower(x))
    if gap(g) >= 0.0:
        return g
    x_hi = x_hi if x_hi is not None else g + 50.0
    xs = np.linspace(g, x_hi, 4001)
    vals = np.asarray(upper(xs - g)) - np.asarray(lower(xs))
    pos = np.nonzero(vals > 0)[0]
    if pos.size == 0:
        return None
    k = pos[0]
    return float(brentq(gap, xs[k - 1], xs[k], xtol=1e-15, rtol=4 * np.finfo(float).eps))
