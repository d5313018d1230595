import functools
import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from divswitch import solve, validate  # noqa: E402
from divswitch.closed_form import vhat0, xhat0, xhat1  # noqa: E402

# One parameter set per qualitative regime, located with the sweep command.
# (mu0, mu1, sigma, rho, g, lambda)
CURATED = {
    "I": (0.5, 1.0, 1.0, 0.25, 6.0, 0.2),
    "II": (0.5, 1.0, 1.0, 0.25, 2.0, 0.5),
    "III-A": (0.5, 1.2, 1.0, 0.25, 2.5, 0.4),
    "III-B_mixed": (0.5, 1.3, 1.0, 0.25, 3.0, 0.1),
    "III-B_theta": (0.5, 2.0, 1.0, 0.25, 2.0, 0.5),
}


@functools.lru_cache(maxsize=None)
def curated_solution(label):
    return solve(validate(*CURATED[label]))


@pytest.fixture(params=list(CURATED), scope="session")
def curated(request):
    return request.param, curated_solution(request.param)


def random_params(rng, n):
    out = []
    while len(out) < n:
        mu0 = rng.uniform(0.0, 2.0)
        raw = (mu0, mu0 + rng.uniform(0.05, 2.0), rng.uniform(0.2, 2.0), rng.uniform(0.05, 1.0),
               rng.uniform(0.1, 8.0), rng.uniform(0.05, 0.95))
        out.append(validate(*raw))
    return out


def straddling_sets():
    """Parameter pairs on either side of (mu1 - mu0)/rho = xhat1 + g - xhat0."""
    out = []
    for mu1 in (1.0, 1.3, 1.8):
        base = validate(0.5, mu1, 1.0, 0.25, 2.0, 0.5)

        def gap(g):
            p = base.replace(g=g)
            return (p.mu1 - p.mu0) / p.rho - (xhat1(p) + p.g - xhat0(p))

        # gap decreases in g; locate the boundary by bisection on a bracket
        lo, hi = 0.05, 20.0
        if gap(lo) <= 0 or gap(hi) >= 0:
            continue
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            lo, hi = (mid, hi) if gap(mid) > 0 else (lo, mid)
        for dg in (-0.05, 0.05):
            p = base.replace(g=lo + dg)
            if float(vhat0(p, p.compensation)) < p.mu1 / p.rho:
                out.append(p)
    return out
