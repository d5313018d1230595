"""Independent reference computations used to pin expected values.

Plain ``math`` and bisection only: nothing here imports the package, so the
numbers produced are a separate route to the same quantities.
"""

import math


def roots(mu, sigma, rho):
    """Textbook quadratic formula for 0.5 sigma^2 m^2 + mu m - rho = 0."""
    a, b, c = 0.5 * sigma * sigma, mu, -rho
    d = math.sqrt(b * b - 4 * a * c)
    return (-b + d) / (2 * a), (-b - d) / (2 * a)


def bisect(fn, lo, hi, iters=200):
    flo = fn(lo)
    assert flo * fn(hi) <= 0, "no sign change"
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        fm = fn(mid)
        if fm == 0:
            return mid
        if (fm < 0) == (flo < 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def f(mp, mm, x, nu=0):
    return mp ** nu * math.exp(mp * x) - mm ** nu * math.exp(mm * x)


def barrier_old(mu0, sigma, rho):
    """Dividend barrier for a single regime: zero of f''."""
    mp, mm = roots(mu0, sigma, rho)
    if mu0 == 0:
        return 0.0
    return bisect(lambda x: f(mp, mm, x, 2), 0.0, 100.0)


def value_old(mu0, sigma, rho, x):
    """Barrier-strategy value: f(x)/f'(b) below b, affine above, 0 below 0."""
    if x < 0:
        return 0.0
    mp, mm = roots(mu0, sigma, rho)
    b = barrier_old(mu0, sigma, rho)
    if mu0 == 0:
        return x
    if x <= b:
        return f(mp, mm, x) / f(mp, mm, b, 1)
    return x - b + mu0 / rho


def liquidation_residual(mu1, sigma, rho, L, x):
    """Value at x of the candidate A f(x) + L h(x) minus mu1/rho, with A from w'(x) = 1."""
    mp, mm = roots(mu1, sigma, rho)
    A = (1 - L * mm * math.exp(mm * x)) / f(mp, mm, x, 1)
    return A * f(mp, mm, x) + L * math.exp(mm * x) - mu1 / rho


def barrier_new(mu1, sigma, rho, L):
    """Threshold of the regime-1 problem with liquidation value L (< mu1/rho)."""
    hi = 1.0
    while liquidation_residual(mu1, sigma, rho, L, hi) < 0:
        hi *= 2
    return bisect(lambda x: liquidation_residual(mu1, sigma, rho, L, x), 1e-12, hi)


def value_new(mu1, sigma, rho, L, x):
    if x < 0:
        return 0.0
    if L >= mu1 / rho:
        return x + L
    mp, mm = roots(mu1, sigma, rho)
    b = barrier_new(mu1, sigma, rho, L)
    if x >= b:
        return x - b + mu1 / rho
    A = (1 - L * mm * math.exp(mm * b)) / f(mp, mm, b, 1)
    return A * f(mp, mm, x) + L * math.exp(mm * x)


def case_tag(mu0, mu1, sigma, rho, g, lam):
    L = value_old(mu0, sigma, rho, (1 - lam) * g)
    if L >= mu1 / rho:
        return "I"
    x0 = barrier_old(mu0, sigma, rho)
    x1 = barrier_new(mu1, sigma, rho, L)
    return "II" if mu1 / rho <= mu0 / rho + x1 + g - x0 else "III"
