"""Regime classification and the full solution (v0, v1) of the switching problem."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .closed_form import (BenchmarkSolution, vhat0_solution, vhat1_solution,
                          w1L_solution)
from .errors import MonotonicityError, NonConvergence
from .model import ModelParams
from .piecewise import Affine, PiecewiseValueFunction
from .stopping import StoppingResult, solve_stopping_obstacle

log = logging.getLogger(__name__)

FIXED_POINT_TOL = 1e-9
FIXED_POINT_KMAX = 200
REFERENCE_POINTS = 4001


@dataclass(frozen=True)
class RegimeClass:
    """Which of the three parameter regions the model falls in.

    ``tag`` is "I", "II" or "III"; ``subcase`` ("A", "B_theta", "B_mixed") is
    only known after the case-III fixed point has been computed.
    """

    tag: str
    subcase: str | None
    witness: dict

    @property
    def label(self) -> str:
        return self.tag if self.subcase is None else f"{self.tag}-{self.subcase}"


def witnesses(params: ModelParams) -> dict:
    vh0 = vhat0_solution(params)
    vh1 = vhat1_solution(params)
    return {
        "vhat0_at_compensation": vh1.liquidation,
        "mu1_over_rho": params.mu1 / params.rho,
        "mu0_over_rho": params.mu0 / params.rho,
        "xhat0": vh0.threshold,
        "xhat1": vh1.threshold,
        "drift_gap_over_rho": (params.mu1 - params.mu0) / params.rho,
        "xhat1_plus_g_minus_xhat0": vh1.threshold + params.g - vh0.threshold,
    }


def tag_from_witness(w: dict) -> str:
    """Apply the classification inequalities to precomputed witness values."""
    if w["vhat0_at_compensation"] >= w["mu1_over_rho"]:
        return "I"
    if w["mu1_over_rho"] <= w["mu0_over_rho"] + w["xhat1_plus_g_minus_xhat0"]:
        return "II"
    return "III"


def classify(params: ModelParams) -> RegimeClass:
    w = witnesses(params)
    return RegimeClass(tag_from_witness(w), None, w)


@dataclass(frozen=True)
class Solution:
    """Value functions, thresholds and region structure for one parameter set.

    Threshold conventions: ``b0`` is the regime-0 dividend barrier in force
    once the growth option is abandoned (inf when no dividends are paid before
    switching), ``x01`` the start of the regime-0 switching region (inf when
    never switching), ``a`` the abandonment level bounding the inaction
    interval (a, x01) from below, ``b1`` the regime-1 barrier. ``s1_all`` is
    True when regime 1 is left immediately for every cash level.
    """

    params: ModelParams
    regime: RegimeClass
    v0: PiecewiseValueFunction
    v1: PiecewiseValueFunction
    xhat0: float
    xhat1: float
    b0: float
    b1: float
    x01: float = np.inf
    a: float | None = None
    s1_all: bool = False
    diagnostics: dict = field(default_factory=dict, compare=False)

    @property
    def inaction(self) -> tuple[float, float] | None:
        if self.a is None or not np.isfinite(self.x01):
            return None
        return (self.a, self.x01)

    @property
    def case(self) -> str:
        return self.regime.label

    def value(self, regime: int, x, nu: int = 0):
        return (self.v1 if regime == 1 else self.v0)(x, nu)

    def thresholds(self) -> dict:
        return {"xhat0": self.xhat0, "xhat1": self.xhat1, "b0": self.b0, "b1": self.b1,
                "x01": self.x01, "a": self.a, "s1_all": self.s1_all}

    def finite_thresholds(self) -> list[float]:
        vals = [self.xhat0, self.b0, self.b1, self.x01] + ([self.a] if self.a is not None else [])
        return [float(v) for v in vals if v is not None and np.isfinite(v)]

    def region_labels(self, regime: int, x) -> np.ndarray:
        """Active branch per point, derived from the thresholds alone.

        "S" switching, "D" dividend, "C" continuation; where two constraints
        bind together the switching label wins, then the dividend label.
        """
        x = np.asarray(x, dtype=float)
        lab = np.full(x.shape, "C", dtype="<U1")
        if regime == 1:
            if self.s1_all:
                lab[:] = "S"
            else:
                lab[x >= self.b1] = "D"
            return lab
        if self.a is None:
            if np.isfinite(self.b0):
                lab[x >= self.b0] = "D"
        else:
            lab[(x >= self.b0) & (x <= self.a)] = "D"
        if np.isfinite(self.x01):
            lab[x >= self.x01] = "S"
        return lab

    def reference_top(self) -> float:
        p = self.params
        return 4.0 * (self.xhat1 + p.g + p.compensation)


def solve_case_I(params: ModelParams, regime: RegimeClass | None = None) -> Solution:
    """Old technology forever; regime 1 is liquidated at once."""
    regime = regime or classify(params)
    vh0 = vhat0_solution(params)
    vh1 = vhat1_solution(params)
    L = params.compensation - vh0.threshold + params.mu0 / params.rho
    v1 = PiecewiseValueFunction.build([(0.0, Affine(intercept=L), "S")], regime=1)
    return Solution(params, regime, vh0.value, v1, vh0.threshold, vh1.threshold,
                    b0=vh0.threshold, b1=0.0, s1_all=True)


def solve_case_II(params: ModelParams, regime: RegimeClass | None = None) -> Solution:
    """Both benchmarks are optimal; never invest, regime 1 exits only at zero."""
    regime = regime or classify(params)
    vh0 = vhat0_solution(params)
    vh1 = vhat1_solution(params)
    return Solution(params, regime, vh0.value, vh1.value, vh0.threshold, vh1.threshold,
                    b0=vh0.threshold, b1=vh1.threshold)


@dataclass
class _Iterate:
    stop: StoppingResult
    bench: BenchmarkSolution


def _iterate(params, start: BenchmarkSolution, xs, tol, kmax, theta, check_monotone,
             prev0=None):
    """Run the stopping / singular-control alternation until the sup change is below tol."""
    comp = params.compensation
    W = start
    prev1 = start.value(xs)
    history = []
    first = None
    for k in range(1, kmax + 1):
        st = solve_stopping_obstacle(params, W.value, theta=theta)
        L = float(st.value(comp))
        Wk = w1L_solution(params, L)
        cur0, cur1 = st.value(xs), Wk.value(xs)
        if first is None:
            first = _Iterate(st, Wk)
        change1 = float(np.max(np.abs(cur1 - prev1)))
        change0 = float(np.max(np.abs(cur0 - prev0))) if prev0 is not None else np.inf
        if check_monotone and prev0 is not None:
            drop = max(float(np.max(prev0 - cur0)), float(np.max(prev1 - cur1)))
            if drop > tol:
                raise MonotonicityError(f"iterate {k} decreased by {drop:.3e}")
        change = max(change0, change1)
        history.append({"k": k, "L": L, "shape": st.shape, "x01": st.x01, "a": st.a,
                        "sup_change": change})
        log.debug("iteration %d: L=%.15g shape=%s change=%.3e", k, L, st.shape, change)
        if change < tol:
            return _Iterate(st, Wk), first, history
        prev0, prev1, W = cur0, cur1, Wk
    raise NonConvergence(kmax, history[-1]["sup_change"], "fixed-point iteration")


def solve_case_III(params: ModelParams, tol: float = FIXED_POINT_TOL,
                   kmax: int = FIXED_POINT_KMAX, regime: RegimeClass | None = None) -> Solution:
    """Decoupled fixed-point scheme: alternate the regime-0 stopping problem and
    the regime-1 singular problem, starting from the two benchmarks."""
    regime = regime or classify(params)
    vh0 = vhat0_solution(params)
    vh1 = vhat1_solution(params)
    comp = params.compensation
    top = 4.0 * (vh1.threshold + params.g + comp)
    xs = np.linspace(0.0, top, REFERENCE_POINTS)

    final, first, hist = _iterate(params, vh1, xs, tol, kmax, theta=False,
                                  check_monotone=True, prev0=vh0.value(xs))
    L0 = vh1.liquidation
    L1 = float(first.stop.value(comp))
    diag = {"iterations": len(hist), "history": hist, "L_benchmark": L0, "L_first": L1}

    if abs(L1 - L0) < 1e-9 * (1.0 + L0):
        subcase = "A"
        v0, bench, st = first.stop.value, vh1, first.stop
    else:
        th_final, _, th_hist = _iterate(params, vh1, xs, tol, kmax, theta=True,
                                        check_monotone=False)
        theta_at_barrier = float(th_final.stop.value(vh0.threshold))
        diag.update(theta_iterations=len(th_hist), theta_history=th_hist,
                    theta0_at_xhat0=theta_at_barrier,
                    vhat0_at_xhat0=float(vh0.value(vh0.threshold)))
        if theta_at_barrier > float(vh0.value(vh0.threshold)):
            subcase = "B_theta"
            st, bench = th_final.stop, th_final.bench
            gap = float(np.max(np.abs(st.value(xs) - final.stop.value(xs))))
            diag["theta_vs_main_sup_gap"] = gap
        else:
            subcase = "B_mixed"
            st, bench = final.stop, final.bench
        v0 = st.value

    regime = replace(regime, subcase=subcase)
    diag.update(shape=st.shape, fit_residual=st.fit_residual, smooth_fit=st.smooth_fit)
    if st.shape == "ii":
        b0, a = vh0.threshold, st.a
    elif st.shape == "i":
        b0, a = np.inf, None
    else:
        b0, a = vh0.threshold, None
    return Solution(params, regime, v0, bench.value, vh0.threshold, vh1.threshold,
                    b0=b0, b1=bench.threshold, x01=st.x01, a=a, diagnostics=diag)


def solve(params: ModelParams, tol: float = FIXED_POINT_TOL,
          kmax: int = FIXED_POINT_KMAX) -> Solution:
    regime = classify(params)
    if regime.tag == "I":
        return solve_case_I(params, regime)
    if regime.tag == "II":
        return solve_case_II(params, regime)
    return solve_case_III(params, tol, kmax, regime)


@dataclass(frozen=True)
class HJBReport:
    """Residual of the coupled variational inequality on a grid, per regime."""

    max_residual: float
    per_regime: dict
    n_points: int

    def ok(self, tol: float) -> bool:
        return self.max_residual < tol and all(
            r["min_gradient"] >= -tol for r in self.per_regime.values())

    def to_dict(self) -> dict:
        return {"max_residual": self.max_residual, "n_points": self.n_points,
                "per_regime": self.per_regime}


def hjb_terms(solution: Solution, regime: int, x):
    """The three branches of the variational inequality at points x > 0."""
    p = solution.params
    v = solution.v1 if regime == 1 else solution.v0
    other = solution.v0 if regime == 1 else solution.v1
    mu = p.mu(regime)
    val, d1, d2 = v(x), v(x, 1), v(x, 2)
    pde = p.rho * val - mu * d1 - 0.5 * p.sigma ** 2 * d2
    grad = d1 - 1.0
    switch = val - other(np.asarray(x) - p.switch_cost(regime))
    return pde, grad, switch


def default_grid(solution: Solution, n: int = 4001) -> np.ndarray:
    top = max([solution.reference_top()] + [2.0 * t for t in solution.finite_thresholds()])
    return np.linspace(0.0, top, n)


def hjb_residual(solution: Solution, grid=None) -> HJBReport:
    """Evaluate min(rho v - L v, v' - 1, v - v_other(. - g_i)) on a grid.

    Points within one grid step of a breakpoint of the regime's value
    function, and x = 0, are skipped.
    """
    grid = default_grid(solution) if grid is None else np.asarray(grid, dtype=float)
    step = float(np.max(np.diff(grid))) if grid.size > 1 else 0.0
    out = {}
    worst = 0.0
    for regime in (0, 1):
        v = solution.v1 if regime == 1 else solution.v0
        keep = grid > 0
        for b in v.interior_breaks:
            keep &= np.abs(grid - b) > step
        x = grid[keep]
        pde, grad, switch = hjb_terms(solution, regime, x)
        r = np.minimum(np.minimum(pde, grad), switch)
        k = int(np.argmax(np.abs(r)))
        out[regime] = {
            "max_abs_min": float(np.abs(r[k])),
            "worst_x": float(x[k]),
            "min_pde": float(pde.min()),
            "min_gradient": float(grad.min()),
            "min_switch": float(switch.min()),
        }
        worst = max(worst, float(np.abs(r[k])))
    return HJBReport(worst, out, int(grid.size))
