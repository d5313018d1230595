"""Finite-difference oracle for the coupled variational inequalities.

Both regimes live on the grid {0, h, ..., x_max}. At each interior node the
discrete value is the largest of three candidates:

* continuation: upwind drift, central diffusion, discount rho;
* dividend:     u[j-1] + h   (paying h moves the state one node down);
* switching:    the other regime at x - g_{i,1-i} (0 below zero).

The nonlinear system is solved by policy iteration (Howard): each sweep
solves the linear system of the current branch choice exactly, then picks the
best branch per node. Starting from "pay everything" the iterates increase
monotonically and terminate after finitely many sweeps.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .errors import NonConvergence
from .model import ModelParams
from .closed_form import vhat0_solution, vhat1_solution

log = logging.getLogger(__name__)

PDE, PAY, SWITCH = 0, 1, 2
LABELS = np.array(["C", "D", "S"])


@dataclass(frozen=True)
class GridSpec:
    x_max: float
    n: int

    @property
    def h(self) -> float:
        return self.x_max / self.n

    @property
    def x(self) -> np.ndarray:
        return np.linspace(0.0, self.x_max, self.n + 1)

    def is_multiple(self, length: float) -> bool:
        k = length / self.h
        return abs(k - round(k)) < 1e-9 * max(1.0, k)

    def flags(self, params: ModelParams) -> dict:
        return {"g_on_grid": self.is_multiple(params.g),
                "compensation_on_grid": self.is_multiple(params.compensation)}

    def refined(self, factor: int = 2) -> "GridSpec":
        return GridSpec(self.x_max, self.n * factor)


def required_x_max(params: ModelParams, extra: float = 0.0) -> float:
    vh0, vh1 = vhat0_solution(params), vhat1_solution(params)
    need = 2.0 * (vh1.threshold + params.g + params.compensation + vh0.threshold
                  + params.mu1 / params.rho)
    return max(need, 2.0 * extra)


def make_grid(params: ModelParams, n: int = 4000, cover: float = 0.0) -> GridSpec:
    """Grid with x_max at least the required width (and 2 * cover).

    When 1 - lambda is rational with a small denominator, x_max is enlarged
    slightly so that both g and (1 - lambda) g are whole multiples of h.
    """
    if n < 400:
        raise ValueError(f"need n >= 400 grid intervals, got {n}")
    need = required_x_max(params, cover)
    frac = Fraction(1.0 - params.lambda_).limit_denominator(1000)
    if abs(float(frac) - (1.0 - params.lambda_)) < 1e-12:
        steps = n * params.g / need          # g / h upper bound
        k = int(steps // frac.denominator) * frac.denominator
        if k >= frac.denominator:
            return GridSpec(n * params.g / k, n)
    return GridSpec(need, n)


@dataclass
class GridSolution:
    grid: GridSpec
    u0: np.ndarray
    u1: np.ndarray
    mask0: np.ndarray
    mask1: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    @property
    def x(self) -> np.ndarray:
        return self.grid.x

    def u(self, regime: int) -> np.ndarray:
        return self.u1 if regime == 1 else self.u0

    def labels(self, regime: int) -> np.ndarray:
        return LABELS[self.mask1 if regime == 1 else self.mask0]

    def interp(self, regime: int, x):
        return _interp(self.u(regime), self.grid, np.asarray(x, dtype=float))


def _interp(u, grid: GridSpec, x):
    """Linear interpolation; 0 below zero, slope-one extension past x_max."""
    out = np.interp(x, grid.x, u)
    out = np.where(x < 0, 0.0, out)
    return np.where(x > grid.x_max, u[-1] + (x - grid.x_max), out)


def _shift_weights(grid: GridSpec, targets):
    """Left node index and weight of the left node for linear interpolation."""
    pos = targets / grid.h
    k = np.floor(pos + 1e-9).astype(int)
    w = 1.0 - (pos - k)
    w = np.where(np.abs(w - 1.0) < 1e-9, 1.0, w)
    return k, w


def _assemble(params: ModelParams, grid: GridSpec, pol0, pol1):
    n, h = grid.n, grid.h
    N = n + 1
    x = grid.x
    rows, cols, vals = [], [], []
    rhs = np.zeros(2 * N)

    def add(r, c, v):
        r = np.atleast_1d(r)
        rows.append(r)
        cols.append(np.broadcast_to(c, r.shape))
        vals.append(np.broadcast_to(np.asarray(v, dtype=float), r.shape))

    s2 = params.sigma ** 2
    for regime, pol in ((0, pol0), (1, pol1)):
        off, other = regime * N, (1 - regime) * N
        mu = params.mu(regime)
        j = np.arange(1, n)
        # continuation rows
        jj = j[pol[1:n] == PDE]
        add(off + jj, off + jj, params.rho + mu / h + s2 / h ** 2)
        add(off + jj, off + jj + 1, -(mu / h + s2 / (2 * h ** 2)))
        add(off + jj, off + jj - 1, -s2 / (2 * h ** 2))
        # dividend rows
        jj = j[pol[1:n] == PAY]
        add(off + jj, off + jj, 1.0)
        add(off + jj, off + jj - 1, -1.0)
        rhs[off + jj] = h
        # switching rows
        jj = j[pol[1:n] == SWITCH]
        add(off + jj, off + jj, 1.0)
        _switch_rows(add, rhs, grid, off, other, jj, x[jj] - params.switch_cost(regime))
        # right boundary: u' = 1
        add(off + n, off + n, 1.0)
        add(off + n, off + n - 1, -1.0)
        rhs[off + n] = h
    # left boundary: absorption in regime 0, forced switch in regime 1
    add(0, 0, 1.0)
    add(N, N, 1.0)
    _switch_rows(add, rhs, grid, N, 0, np.array([0]), np.array([params.compensation]))
    A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(2 * N, 2 * N))
    return A, rhs


def _switch_rows(add, rhs, grid, off, other, jj, targets):
    n = grid.n
    below = targets < 0
    above = targets > grid.x_max
    inside = ~below & ~above
    # below zero the other regime is worth 0: row reduces to u = 0
    ji, ti = jj[inside], targets[inside]
    k, w = _shift_weights(grid, ti)
    k = np.minimum(k, n)
    add(off + ji, other + k, -w)
    k1 = np.minimum(k + 1, n)
    add(off + ji, other + k1, -(1.0 - w))
    ja = jj[above]
    add(off + ja, other + n, -1.0)
    rhs[off + ja] = targets[above] - grid.x_max


def _candidates(params: ModelParams, grid: GridSpec, u0, u1, regime: int):
    n, h = grid.n, grid.h
    u, other = (u1, u0) if regime == 1 else (u0, u1)
    mu, s2 = params.mu(regime), params.sigma ** 2
    diag = params.rho + mu / h + s2 / h ** 2
    cont = ((mu / h + s2 / (2 * h ** 2)) * u[2:] + s2 / (2 * h ** 2) * u[:-2]) / diag
    pay = u[:-2] + h
    sw = _interp(other, grid, grid.x[1:n] - params.switch_cost(regime))
    return np.vstack([cont, pay, sw])


def _label(cands, u_int, tie):
    best = cands.max(axis=0)
    lab = np.full(best.shape, PDE)
    lab[cands[PAY] >= best - tie] = PAY
    lab[cands[SWITCH] >= best - tie] = SWITCH
    return lab


def solve_vi_system(params: ModelParams, grid: GridSpec, tol: float | None = None,
                    max_sweeps: int = 500, switching: bool = True) -> GridSolution:
    """Policy iteration for the discrete coupled system.

    ``switching=False`` removes the switching branch (single-regime
    benchmarks, useful as a sanity check against the closed forms). With
    switching on, the decoupled problem is solved first and its branch
    choice seeds the coupled iteration; starting from "pay everywhere"
    can leave spurious switching stripes that erode one node per sweep.
    """
    tol = 1e-10 * (1.0 + params.mu1 / params.rho) if tol is None else tol
    n = grid.n
    if switching:
        seed = solve_vi_system(params, grid, tol, max_sweeps, switching=False)
        pol0, pol1 = seed.mask0.copy(), seed.mask1.copy()
        pol1[0] = pol0[0] = PAY  # boundary rows are fixed; value unused
        swept = seed.diagnostics["sweeps"]
    else:
        pol0 = np.full(n + 1, PAY)
        pol1 = np.full(n + 1, PAY)
        swept = 0
    u_prev = None
    monotone = True
    for sweep in range(1, max_sweeps + 1):
        A, rhs = _assemble(params, grid, pol0, pol1)
        sol = spsolve(A, rhs)
        u0, u1 = sol[: n + 1], sol[n + 1:]
        if u_prev is not None and np.min(sol - u_prev) < -tol:
            monotone = False
        changed = 0
        resid = 0.0
        for regime, pol, u in ((0, pol0, u0), (1, pol1, u1)):
            c = _candidates(params, grid, u0, u1, regime)
            if not switching:
                c[SWITCH] = -np.inf
            best = c.max(axis=0)
            resid = max(resid, float(np.max(np.abs(best - u[1:n]))))
            cur = pol[1:n]
            cur_val = np.take_along_axis(c, cur[None, :], axis=0)[0]
            improve = best > cur_val + tol
            new = np.where(improve, c.argmax(axis=0), cur)
            changed += int(np.count_nonzero(new != cur))
            pol[1:n] = new
        log.debug("sweep %d: %d branch changes, residual %.3e", sweep, changed, resid)
        u_prev = sol
        if changed == 0 and resid < tol:
            tie = 1e-9 * (1.0 + float(np.max(np.abs(sol))))
            masks = []
            for regime, u in ((0, u0), (1, u1)):
                c = _candidates(params, grid, u0, u1, regime)
                if not switching:
                    c[SWITCH] = -np.inf
                m = np.empty(n + 1, dtype=int)
                m[1:n] = _label(c, u[1:n], tie)
                m[0] = SWITCH if regime == 1 else PDE
                m[n] = m[n - 1]
                masks.append(m)
            diag = {"sweeps": sweep + swept, "residual": resid, "monotone": monotone,
                    **grid.flags(params)}
            return GridSolution(grid, u0, u1, masks[0], masks[1], diag)
    raise NonConvergence(max_sweeps, resid, "policy iteration")


@dataclass(frozen=True)
class CompareReport:
    band: float
    h: float
    max_error: float
    l2_error: float
    per_regime_max: dict
    mask_agreement: float
    region_agreement: dict
    pointwise_agreement: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def compare(grid_solution: GridSolution, solution, band: float | None = None,
            exclude: float = 2.0) -> CompareReport:
    """Errors between the grid values and a semi-analytic solution on [0, band].

    Region agreement is the Jaccard overlap of each (regime, branch) region,
    ignoring nodes within ``exclude`` grid steps of a threshold;
    ``mask_agreement`` is the worst of these.
    """
    grid = grid_solution.grid
    band = grid.x_max / 2.0 if band is None else band
    if band > grid.x_max / 2.0 + 1e-12:
        raise ValueError("comparison band must stay within x_max / 2")
    x = grid.x
    sel = x <= band + 1e-12
    errs, sq = {}, 0.0
    for regime in (0, 1):
        e = np.abs(grid_solution.u(regime)[sel] - solution.value(regime, x[sel]))
        errs[regime] = float(e.max())
        sq += float(np.sum(e ** 2)) * grid.h
    agree, total_ok, total = {}, 0, 0
    p = solution.params
    for regime in (0, 1):
        th = [t for t in _regime_thresholds(solution, regime) if np.isfinite(t)]
        keep = sel & (x > 0)
        for t in th:
            keep &= np.abs(x - t) > exclude * grid.h
        lab_a = solution.region_labels(regime, x[keep])
        lab_g = grid_solution.labels(regime)[keep]
        total_ok += int(np.sum(lab_a == lab_g))
        total += int(keep.sum())
        for r in ("C", "D", "S"):
            union = np.sum((lab_a == r) | (lab_g == r))
            if union:
                agree[f"{regime}{r}"] = float(np.sum((lab_a == r) & (lab_g == r)) / union)
    return CompareReport(
        band=band, h=grid.h, max_error=max(errs.values()), l2_error=float(np.sqrt(sq)),
        per_regime_max=errs, mask_agreement=min(agree.values()) if agree else 1.0,
        region_agreement=agree, pointwise_agreement=total_ok / max(total, 1))


def _regime_thresholds(solution, regime: int):
    if regime == 1:
        return [solution.b1]
    out = [solution.b0, solution.x01, solution.xhat0]
    if solution.a is not None:
        out.append(solution.a)
    return out
