"""Regime-0 optimal stopping with a switching obstacle.

The reward for stopping at x is ``max(Vhat0(x), W(x - g))`` (or ``W(x - g)``
alone in the theta variant), where ``W`` is a regime-1 value function. The
diffusion is absorbed at 0 with value 0. Two exercise-region shapes occur:

* ``"i"``   continuation on (0, x01), value c f0(x), smooth fit at x01;
* ``"ii"``  exercise on [0, a] and [x01, inf), value B e^{m+x} + C e^{m-x}
  on (a, x01) with smooth fit at both ends.

``"none"`` is returned when the obstacle never exceeds Vhat0 and the stopping
value is Vhat0 itself.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .closed_form import BasisFns, crossing_point, vhat0_solution
from .errors import NoSolution
from .model import ModelParams, char_roots
from .piecewise import Affine, ExpCombo, PiecewiseValueFunction

_EPS = 4 * np.finfo(float).eps


@dataclass(frozen=True)
class StoppingResult:
    value: PiecewiseValueFunction
    shape: str                 # "none", "i" or "ii"
    x01: float                 # lower end of the switching region (inf if none)
    a: float | None            # upper end of the lower exercise region (shape "ii")
    crossing: float | None     # where the obstacle overtakes Vhat0
    smooth_fit: bool           # False only if the optimum sits on the x = g edge
    fit_residual: float        # max abs residual of the smooth-fit equations


def _brent(fun, lo, hi):
    return float(brentq(fun, lo, hi, xtol=1e-15, rtol=_EPS, maxiter=500))


def _shifted_tail(obstacle: PiecewiseValueFunction, g: float, start: float):
    """Pieces of x -> obstacle(x - g) restricted to [start, inf)."""
    pieces = []
    br = [b + g for b in obstacle.breaks] + [np.inf]
    for k, seg in enumerate(obstacle.segments):
        lo, hi = br[k], br[k + 1]
        if hi <= start:
            continue
        pieces.append((max(lo, start), seg.shifted(g), "S"))
    return pieces


def _search_limit(params: ModelParams, obstacle: PiecewiseValueFunction, m_plus: float) -> float:
    return params.g + obstacle.breaks[-1] + 10.0 / m_plus + 5.0


def _ratio_argmax(params, obstacle, bf, y_hi):
    """Maximiser over y >= g of obstacle(y - g) / f0(y)."""
    g = params.g
    ys = np.linspace(g, y_hi, 4001)
    ys[0] = g
    ratio = np.asarray(obstacle(ys - g)) / np.asarray(bf.f(ys))
    k = int(np.argmax(ratio))
    psi = lambda y: float(obstacle(y - g, 1) * bf.f(y) - obstacle(y - g) * bf.f(y, 1))
    if k == 0:
        if psi(g) <= 0.0:
            return g, False
        k = 1
    if k == len(ys) - 1:
        raise NoSolution("ratio maximiser not bracketed; obstacle grows too fast")
    lo, hi = ys[k - 1], ys[k + 1]
    if psi(lo) > 0.0 > psi(hi):
        return _brent(psi, lo, hi), True
    return float(ys[k]), True


def _two_sided(params, vh, obstacle, r0, x_cross, y_hi):
    """Solve the four-equation smooth-fit system for (a, x01, B, C)."""
    g, x0 = params.g, vh.threshold
    mp, mm, sp = r0.m_plus, r0.m_minus, r0.spread
    base = params.mu0 / params.rho - x0

    def pq(a):
        v = a + base
        return (1.0 - mm * v) / sp, (mp * v - 1.0) / sp

    def gap(a, x, nu=0):
        P, Q = pq(a)
        u = P * mp ** nu * np.exp(mp * (x - a)) + Q * mm ** nu * np.exp(mm * (x - a))
        return u - np.asarray(obstacle(np.asarray(x) - g, nu))

    xs = np.linspace(x_cross, y_hi, 4001)

    def touch(a):
        vals = gap(a, xs)
        k = int(np.argmin(vals))
        if 0 < k < len(xs) - 1:
            d = lambda x: float(gap(a, x, 1))
            if d(xs[k - 1]) < 0.0 < d(xs[k + 1]):
                xb = _brent(d, xs[k - 1], xs[k + 1])
                return float(gap(a, xb)), xb
        return float(vals[k]), float(xs[k])

    lo, hi = x0, x_cross
    d_lo, d_hi = touch(lo)[0], touch(hi)[0]
    if not (d_lo >= 0.0 >= d_hi):
        raise NoSolution(f"two-sided smooth fit not bracketed on [{lo}, {hi}]: "
                         f"gaps {d_lo:.3e}, {d_hi:.3e}")
    if d_hi == 0.0:
        a = hi
    else:
        a = _brent(lambda a: touch(a)[0], lo, hi)
    b = touch(a)[1]
    a, b, P, Q, res = _newton_polish(params, vh, obstacle, r0, a, b, *pq(a))
    return a, b, P, Q, res


def _newton_polish(params, vh, obstacle, r0, a, b, P, Q, steps=8):
    """Damped Newton on the value/slope matching at a and x01 (analytic Jacobian).

    Unknowns are (a, b, P, Q) with the continuation value
    P e^{m+(x-a0)} + Q e^{m-(x-a0)} anchored at the initial a0.
    """
    g = params.g
    mp, mm = r0.m_plus, r0.m_minus
    a0 = a
    base = params.mu0 / params.rho - vh.threshold

    def F(z):
        a, b, P, Q = z
        ea, fa = np.exp(mp * (a - a0)), np.exp(mm * (a - a0))
        eb, fb = np.exp(mp * (b - a0)), np.exp(mm * (b - a0))
        return np.array([
            P * ea + Q * fa - (a + base),
            mp * P * ea + mm * Q * fa - 1.0,
            P * eb + Q * fb - float(obstacle(b - g)),
            mp * P * eb + mm * Q * fb - float(obstacle(b - g, 1)),
        ])

    def J(z):
        a, b, P, Q = z
        ea, fa = np.exp(mp * (a - a0)), np.exp(mm * (a - a0))
        eb, fb = np.exp(mp * (b - a0)), np.exp(mm * (b - a0))
        return np.array([
            [mp * P * ea + mm * Q * fa - 1.0, 0.0, ea, fa],
            [mp ** 2 * P * ea + mm ** 2 * Q * fa, 0.0, mp * ea, mm * fa],
            [0.0, mp * P * eb + mm * Q * fb - float(obstacle(b - g, 1)), eb, fb],
            [0.0, mp ** 2 * P * eb + mm ** 2 * Q * fb - float(obstacle(b - g, 2)), mp * eb, mm * fb],
        ])

    z = np.array([a, b, P, Q], dtype=float)
    r = F(z)
    for _ in range(steps):
        if np.max(np.abs(r)) < 1e-14:
            break
        try:
            dz = np.linalg.solve(J(z), -r)
        except np.linalg.LinAlgError:
            break
        t = 1.0
        while t > 1e-4:
            rn = F(z + t * dz)
            if np.max(np.abs(rn)) < np.max(np.abs(r)):
                z, r = z + t * dz, rn
                break
            t *= 0.5
        else:
            break
    a, b, P, Q = z
    # re-anchor the continuation piece at the polished a
    P, Q = P * np.exp(mp * (a - a0)), Q * np.exp(mm * (a - a0))
    return float(a), float(b), float(P), float(Q), float(np.max(np.abs(r)))


def solve_stopping_obstacle(params: ModelParams, obstacle: PiecewiseValueFunction,
                            theta: bool = False) -> StoppingResult:
    """Snell envelope of the regime-0 reward built from ``obstacle``.

    ``obstacle`` is a regime-1 value function, evaluated at x - g (zero below
    zero). With ``theta=True`` the reward is ``obstacle(x - g)`` alone.
    """
    g = params.g
    vh = vhat0_solution(params)
    r0 = char_roots(params, 0)
    bf = BasisFns(r0)
    c0 = vh.coefficient if not vh.degenerate else 1.0 / float(bf.f(0.0, 1))
    y_hi = _search_limit(params, obstacle, r0.m_plus)

    x_cross = None
    if not theta:
        x_cross = crossing_point(params, vh.value, obstacle, x_hi=max(y_hi, vh.threshold + g))
        if x_cross is None:
            return StoppingResult(vh.value, "none", np.inf, None, None, True, 0.0)

    y_star, smooth = _ratio_argmax(params, obstacle, bf, y_hi)
    c_star = float(obstacle(y_star - g)) / float(bf.f(y_star))

    if theta or c_star > c0 * (1.0 + 1e-12):
        res = 0.0
        if smooth:
            res = abs(c_star * float(bf.f(y_star, 1)) - float(obstacle(y_star - g, 1)))
        pieces = [(0.0, ExpCombo((c_star, -c_star), (r0.m_plus, r0.m_minus)), "C")]
        pieces += _shifted_tail(obstacle, g, y_star)
        value = PiecewiseValueFunction.build(pieces, regime=0)
        return StoppingResult(value, "i", y_star, None, x_cross, smooth, res)

    a, b, P, Q, res = _two_sided(params, vh, obstacle, r0, x_cross, y_hi)
    if a < vh.threshold - 1e-9 or b < g - 1e-12:
        raise NoSolution(f"smooth-fit root outside admissible set: a={a}, x01={b}")
    a = max(a, vh.threshold)
    pieces = []
    if vh.threshold > 0:
        pieces.append((0.0, vh.value.segments[0], "C"))
    pieces.append((vh.threshold, Affine(intercept=params.mu0 / params.rho - vh.threshold), "D"))
    pieces.append((a, ExpCombo((P, Q), (r0.m_plus, r0.m_minus), anchor=a), "C"))
    pieces += _shifted_tail(obstacle, g, b)
    value = PiecewiseValueFunction.build(pieces, regime=0)
    return StoppingResult(value, "ii", b, a, x_cross, True, res)
