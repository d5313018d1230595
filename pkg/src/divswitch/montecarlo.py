"""Monte Carlo simulation of the controlled cash process under threshold policies.

Paths are advanced one time step at a time inside a compiled kernel. Two
schemes are available:

``"bridge"`` (default)
    Within a step the path is a Brownian motion with drift. The running
    maximum and minimum of the Brownian bridge between the step endpoints are
    sampled exactly, so reflection at a dividend barrier (Skorokhod map:
    ``Z = (max - b)^+``) and crossings of lower levels (ruin, switch-down,
    abandonment) are detected without the O(sqrt(dt)) bias of post-step checks.
    Max and min are sampled independently, which is accurate unless both
    barriers are within a few sqrt(dt) of each other. In-step payments are
    discounted at the step midpoint and a mid-step switch gets half a step of
    the new drift, removing the first-order timing bias.

``"projection"``
    Plain Euler scheme with post-step checks: ruin when x < 0, switch on the
    endpoint, dividends credited by projecting the endpoint onto the barrier.

Random numbers come from numpy ``Generator(Philox)`` streams, one per fixed
block of paths, keyed by ``(seed, block_index)``; blocks are reduced in order,
so results do not depend on how blocks are spread over workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, asdict

import numba
import numpy as np

from .errors import InvalidPolicy
from .model import ModelParams

BLOCK_SIZE = 4096
SWITCH_CAP = 2
SCHEMES = {"projection": 0, "bridge": 1}
_NEGLIGIBLE = 1e-14


@dataclass(frozen=True)
class ThresholdPolicy:
    """Barrier/threshold control.

    Parameters
    ----------
    b0, b1 : float
        Dividend barriers (``inf`` never pays). On entry to a regime the
        excess over its barrier is paid as a lump sum.
    s01 : float
        Switch 0 -> 1 when cash reaches ``s01`` (``inf`` never).
    s10 : float
        Switch 1 -> 0 when cash falls to ``s10`` (``-inf`` never, ``inf``
        immediately).
    abandon_at, abandon_barrier : float or None
        In regime 0, once cash falls to ``abandon_at`` the growth option is
        dropped for good: switching stops and the barrier becomes
        ``abandon_barrier``.
    """

    b0: float
    b1: float
    s01: float = math.inf
    s10: float = -math.inf
    abandon_at: float | None = None
    abandon_barrier: float | None = None

    def __post_init__(self):
        for name in ("b0", "b1"):
            v = getattr(self, name)
            if not (v >= 0):
                raise InvalidPolicy(f"{name} must be >= 0, got {v}")
        if any(math.isnan(v) for v in (self.s01, self.s10)):
            raise InvalidPolicy("switch thresholds must not be NaN")
        if (self.abandon_at is None) != (self.abandon_barrier is None):
            raise InvalidPolicy("abandon_at and abandon_barrier go together")
        if self.abandon_barrier is not None and not self.abandon_barrier >= 0:
            raise InvalidPolicy("abandon_barrier must be >= 0")

    def as_array(self) -> np.ndarray:
        ab = -1.0 if self.abandon_at is None else self.abandon_at
        bar = math.inf if self.abandon_barrier is None else self.abandon_barrier
        return np.array([self.b0, self.b1, self.s01, self.s10, ab, bar], dtype=np.float64)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class PathState:
    t: float
    x: float
    i: int
    z_paid: float
    switches: int
    alive: bool


@dataclass(frozen=True)
class Estimate:
    mean: float
    stderr: float
    n_paths: int
    dt: float
    horizon: float
    truncation_bound: float
    scheme: str = "bridge"
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def growth_envelope(params: ModelParams, x: float) -> float:
    return x + params.mu1 / params.rho + params.compensation


def default_horizon(params: ModelParams, rel: float = 1e-4) -> float:
    """Horizon after which the discounted growth envelope is below ``rel`` of itself."""
    return math.log(1.0 / rel) / params.rho


def truncation_bound(params: ModelParams, x: float, horizon: float) -> float:
    return math.exp(-params.rho * horizon) * growth_envelope(params, x)


# ---------------------------------------------------------------------------
# compiled kernel

@numba.njit(cache=True)
def _enter(x, i, abandoned, pol, g, comp):
    """Entry procedure: lump payout, then any triggered switches.

    Returns (x, i, abandoned, paid, n_switches, alive).
    """
    paid = 0.0
    nsw = 0
    while True:
        if i == 0 and not abandoned and pol[4] >= 0.0 and x <= pol[4]:
            abandoned = True
        if i == 1:
            bar = pol[1]
        elif abandoned:
            bar = pol[5]
        else:
            bar = pol[0]
        if x > bar:
            paid += x - bar
            x = bar
        if nsw > SWITCH_CAP:
            return x, i, abandoned, paid, nsw, True
        if i == 0 and not abandoned and x >= pol[2]:
            x -= g
            i = 1
            nsw += 1
            if x < 0.0:
                return 0.0, i, abandoned, paid, nsw, False
            continue
        if i == 1 and x <= pol[3]:
            x += comp
            i = 0
            nsw += 1
            continue
        return x, i, abandoned, paid, nsw, True


@numba.njit(cache=True)
def _bridge_extreme(x, y, var, u, upper):
    r = math.sqrt((y - x) ** 2 - 2.0 * var * math.log(u))
    if upper:
        return 0.5 * (x + y + r)
    return 0.5 * (x + y - r)


@numba.njit(cache=True)
def _run_paths(gen, n, x0, i0, pol, mu0, mu1, sigma, rho, g, comp, dt, n_steps, scheme,
               out_z, out_x, out_i, out_t, out_sw, out_alive):
    """Simulate ``n`` paths; returns 0, or 1 when the switch cap is exceeded."""
    var = sigma * sigma * dt
    sd = math.sqrt(var)
    for p in range(n):
        x, i, ab, paid, nsw, alive = _enter(x0, i0, False, pol, g, comp)
        if nsw > SWITCH_CAP:
            return 1
        z = paid
        switches = nsw
        t = 0.0
        k = 0
        while alive and k < n_steps:
            k += 1
            t = k * dt
            mu = mu1 if i == 1 else mu0
            y = x + mu * dt + sd * gen.standard_normal()
            # lower event level: switch-down in regime 1, abandonment in regime 0
            low = -1.0
            if i == 1 and pol[3] >= 0.0:
                low = pol[3]
            elif i == 0 and not ab and pol[4] >= 0.0:
                low = pol[4]
            lvl = max(low, 0.0)
            if scheme == 1:
                if y <= lvl or x <= lvl:
                    m = _bridge_extreme(x, y, var, gen.random(), False)
                    m = min(m, y)
                elif math.exp(-2.0 * (x - lvl) * (y - lvl) / var) > _NEGLIGIBLE:
                    m = _bridge_extreme(x, y, var, gen.random(), False)
                else:
                    m = min(x, y)
            else:
                m = y
            nsw = 0
            paid = 0.0
            if low >= 0.0 and m <= low:
                if i == 1:
                    if scheme == 1:
                        # crossing happened mid-step: on average half the step
                        # was spent under the new drift
                        xs = y + comp + 0.5 * (mu0 - mu1) * dt
                    else:
                        xs = low + comp
                    if xs < 0.0:
                        alive = False
                        x = 0.0
                    else:
                        x, i, ab, paid, nsw, alive = _enter(xs, 0, ab, pol, g, comp)
                        nsw += 1
                else:
                    if m < 0.0:
                        alive = False
                        x = 0.0
                    else:
                        x, i, ab, paid, nsw, alive = _enter(y, 0, True, pol, g, comp)
            elif m < 0.0:
                alive = False
                x = 0.0
            else:
                if i == 1:
                    bar = pol[1]
                    s_up = math.inf
                elif ab:
                    bar = pol[5]
                    s_up = math.inf
                else:
                    bar = pol[0]
                    s_up = pol[2]
                up = min(bar, s_up)
                if scheme == 1 and up < math.inf:
                    if y >= up or x >= up:
                        big = max(_bridge_extreme(x, y, var, gen.random(), True), y)
                    elif math.exp(-2.0 * (up - x) * (up - y) / var) > _NEGLIGIBLE:
                        big = _bridge_extreme(x, y, var, gen.random(), True)
                    else:
                        big = max(x, y)
                else:
                    big = y
                if s_up <= bar and big >= s_up:
                    xs = y - g
                    if scheme == 1:
                        xs += 0.5 * (mu1 - mu0) * dt
                    if xs < 0.0:
                        alive = False
                        x = 0.0
                    else:
                        x, i, ab, paid, nsw, alive = _enter(xs, 1, ab, pol, g, comp)
                        nsw += 1
                elif big > bar:
                    paid = big - bar
                    x = y - paid
                else:
                    x = y
            if nsw > SWITCH_CAP:
                return 1
            switches += nsw
            if paid > 0.0:
                # bridge: payments spread over the step, discount at its midpoint
                z += math.exp(-rho * (t - 0.5 * dt * scheme)) * paid
        out_z[p] = z
        out_x[p] = x
        out_i[p] = i
        out_t[p] = t
        out_sw[p] = switches
        out_alive[p] = alive
    return 0


# ---------------------------------------------------------------------------
# python surface

def _generator(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(block)])))


def _check(params, dt, horizon, x0, i0, scheme):
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    if not horizon > 0:
        raise ValueError(f"horizon must be > 0, got {horizon}")
    if not x0 >= 0:
        raise ValueError(f"x0 must be >= 0, got {x0}")
    if i0 not in (0, 1):
        raise ValueError(f"regime must be 0 or 1, got {i0}")
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; choose from {sorted(SCHEMES)}")


def _simulate_block(params: ModelParams, policy: ThresholdPolicy, x0: float, i0: int,
                    dt: float, horizon: float, seed: int, block: int, n: int, scheme: str):
    out = (np.zeros(n), np.zeros(n), np.zeros(n, dtype=np.int64), np.zeros(n),
           np.zeros(n, dtype=np.int64), np.zeros(n, dtype=np.bool_))
    n_steps = int(math.ceil(horizon / dt - 1e-12))
    flag = _run_paths(_generator(seed, block), n, float(x0), int(i0), policy.as_array(),
                      params.mu0, params.mu1, params.sigma, params.rho, params.g,
                      params.compensation, float(dt), n_steps, SCHEMES[scheme], *out)
    if flag:
        raise InvalidPolicy(f"more than {SWITCH_CAP} switches within one step; "
                            "switch thresholds are inconsistent with the cash jumps")
    return out


def simulate_path(params: ModelParams, policy: ThresholdPolicy, x0: float, i0: int,
                  dt: float, horizon: float, seed: int, scheme: str = "bridge") -> PathState:
    """Simulate one path and return its final state."""
    _check(params, dt, horizon, x0, i0, scheme)
    z, x, i, t, sw, alive = _simulate_block(params, policy, x0, i0, dt, horizon,
                                            seed, 0, 1, scheme)
    return PathState(float(t[0]), float(x[0]), int(i[0]), float(z[0]), int(sw[0]),
                     bool(alive[0]))


def _block_payoffs(args):
    return _simulate_block(*args)[0]


def simulate_payoffs(params: ModelParams, policy: ThresholdPolicy, x0: float, i0: int,
                     n_paths: int, dt: float, horizon: float, seed: int,
                     scheme: str = "bridge", workers: int = 1) -> np.ndarray:
    """Discounted dividends of ``n_paths`` paths, in path order."""
    _check(params, dt, horizon, x0, i0, scheme)
    sizes = [min(BLOCK_SIZE, n_paths - s) for s in range(0, n_paths, BLOCK_SIZE)]
    jobs = [(params, policy, x0, i0, dt, horizon, seed, b, n, scheme)
            for b, n in enumerate(sizes)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(_block_payoffs, jobs))
    else:
        parts = [_block_payoffs(j) for j in jobs]
    return np.concatenate(parts)


def estimate_value(params: ModelParams, policy: ThresholdPolicy, x0: float, i0: int,
                   n_paths: int, dt: float, horizon: float | None = None, seed: int = 0,
                   scheme: str = "bridge", workers: int = 1) -> Estimate:
    """Mean discounted dividends and its standard error."""
    if n_paths < 2:
        raise ValueError(f"n_paths must be >= 2, got {n_paths}")
    horizon = default_horizon(params) if horizon is None else horizon
    z = simulate_payoffs(params, policy, x0, i0, n_paths, dt, horizon, seed, scheme, workers)
    return Estimate(mean=float(np.mean(z)), stderr=float(np.std(z, ddof=1) / math.sqrt(n_paths)),
                    n_paths=n_paths, dt=dt, horizon=horizon,
                    truncation_bound=truncation_bound(params, x0, horizon),
                    scheme=scheme, seed=int(seed))


def optimal_policy_from(solution) -> ThresholdPolicy:
    """Threshold policy that realises the solver's value functions (both regimes)."""
    if solution.s1_all:
        return ThresholdPolicy(b0=solution.b0, b1=0.0, s01=math.inf, s10=math.inf)
    if solution.a is not None:
        return ThresholdPolicy(b0=math.inf, b1=solution.b1, s01=solution.x01, s10=0.0,
                               abandon_at=solution.a, abandon_barrier=solution.b0)
    return ThresholdPolicy(b0=solution.b0, b1=solution.b1, s01=solution.x01, s10=0.0)


@dataclass(frozen=True)
class BiasedEstimate:
    """Estimate together with its discretisation allowance ``C sqrt(dt) + truncation``."""

    estimate: Estimate
    fine: Estimate
    c_sqrt_dt: float

    @property
    def allowance(self) -> float:
        return self.c_sqrt_dt + self.estimate.truncation_bound

    def tolerance(self, k: float = 3.0) -> float:
        return k * self.estimate.stderr + self.allowance

    def dominates(self, value: float, k: float = 3.0) -> bool:
        """True when the policy beats ``value`` beyond noise and bias (a violation)."""
        return self.estimate.mean - self.tolerance(k) > value

    def attains(self, value: float, k: float = 3.0) -> bool:
        return abs(self.estimate.mean - value) <= self.tolerance(k)

    def to_dict(self) -> dict:
        return {"estimate": self.estimate.to_dict(), "fine": self.fine.to_dict(),
                "c_sqrt_dt": self.c_sqrt_dt, "allowance": self.allowance}


def richardson(params: ModelParams, policy: ThresholdPolicy, x0: float, i0: int,
               n_paths: int, dt: float, horizon: float | None = None, seed: int = 0,
               scheme: str = "bridge", workers: int = 1) -> BiasedEstimate:
    """Estimate at dt and dt/2; for an order-1/2 error ``C sqrt(dt) = |diff| / (1 - 2^-1/2)``."""
    coarse = estimate_value(params, policy, x0, i0, n_paths, dt, horizon, seed, scheme, workers)
    fine = estimate_value(params, policy, x0, i0, n_paths, dt / 2, horizon, seed + 1,
                          scheme, workers)
    c = abs(coarse.mean - fine.mean) / (1.0 - 1.0 / math.sqrt(2.0))
    return BiasedEstimate(coarse, fine, c)


def random_policy(rng: np.random.Generator, params: ModelParams, scale: float) -> ThresholdPolicy:
    """Random admissible threshold policy with cash levels drawn on [0, scale].

    Switch thresholds are drawn so that a switch never lands inside the
    opposite trigger region (no switching loops within one instant).
    """
    b0 = float(rng.uniform(0.0, scale))
    b1 = float(rng.uniform(0.0, scale))
    s10 = float(rng.uniform(0.0, scale / 2)) if rng.random() < 0.7 else -math.inf
    s01 = math.inf
    if rng.random() < 0.8:
        lo = max(params.g, (s10 if np.isfinite(s10) else 0.0) + params.g) + 1e-6
        lo = max(lo, (s10 if np.isfinite(s10) else -math.inf) + params.compensation + 1e-6)
        s01 = float(rng.uniform(lo, lo + scale))
    return ThresholdPolicy(b0=b0, b1=b1, s01=s01, s10=s10)
