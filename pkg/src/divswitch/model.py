"""Model constants and the characteristic roots of the regime generators."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParamError

PARAM_NAMES = ("mu0", "mu1", "sigma", "rho", "g", "lambda_")


@dataclass(frozen=True)
class ModelParams:
    """Drifts, volatility, discount rate, switching cost and cost-loss fraction.

    Construct through :func:`validate` (or :meth:`from_dict`) so the
    admissibility constraints are checked.
    """

    mu0: float
    mu1: float
    sigma: float
    rho: float
    g: float
    lambda_: float

    @property
    def g01(self) -> float:
        """Cash paid when switching old -> new."""
        return self.g

    @property
    def g10(self) -> float:
        """Signed cost of switching new -> old (negative: a compensation)."""
        return -(1.0 - self.lambda_) * self.g

    @property
    def compensation(self) -> float:
        """Cash received when abandoning the modern technology, (1 - lambda) g."""
        return (1.0 - self.lambda_) * self.g

    def mu(self, regime: int) -> float:
        return self.mu1 if regime == 1 else self.mu0

    def switch_cost(self, regime: int) -> float:
        """g_{i,1-i}: cash removed when leaving ``regime``."""
        return self.g01 if regime == 0 else self.g10

    def as_dict(self) -> dict[str, float]:
        return {name: float(getattr(self, name)) for name in PARAM_NAMES}

    def replace(self, **changes: float) -> "ModelParams":
        d = self.as_dict()
        d.update(changes)
        return validate(*(d[n] for n in PARAM_NAMES))

    @classmethod
    def from_dict(cls, d: dict) -> "ModelParams":
        key = {"lambda": "lambda_", "lam": "lambda_"}
        clean = {key.get(k, k): v for k, v in d.items()}
        missing = [n for n in PARAM_NAMES if n not in clean]
        if missing:
            raise ParamError([f"missing parameter {n}" for n in missing])
        return validate(*(clean[n] for n in PARAM_NAMES))


def validate(mu0, mu1, sigma, rho, g, lambda_) -> ModelParams:
    """Check the six model constants and return a :class:`ModelParams`.

    Raises :class:`ParamError` listing every violated constraint.
    """
    raw = dict(mu0=mu0, mu1=mu1, sigma=sigma, rho=rho, g=g, lambda_=lambda_)
    violations = []
    vals = {}
    for name, v in raw.items():
        try:
            v = float(v)
        except (TypeError, ValueError):
            violations.append(f"{name} must be a real number (got {v!r})")
            continue
        if not math.isfinite(v):
            violations.append(f"{name} must be finite (got {v})")
            continue
        vals[name] = v
    if violations:
        raise ParamError(violations)

    if not vals["mu0"] >= 0:
        violations.append("0 <= mu0 violated")
    if not vals["mu0"] < vals["mu1"]:
        violations.append("mu0 < mu1 violated")
    if not vals["sigma"] > 0:
        violations.append("sigma > 0 violated")
    if not vals["rho"] > 0:
        violations.append("rho > 0 violated")
    if not vals["g"] > 0:
        violations.append("g > 0 violated")
    if not 0 < vals["lambda_"] < 1:
        violations.append("lambda in (0,1) violated")
    if violations:
        raise ParamError(violations)
    return ModelParams(**vals)


@dataclass(frozen=True)
class CharRoots:
    """Roots of rho - mu_i m - sigma^2 m^2 / 2 = 0, ordered m_minus < 0 < m_plus."""

    m_plus: float
    m_minus: float
    regime: int

    @property
    def spread(self) -> float:
        return self.m_plus - self.m_minus


def char_roots(params: ModelParams, regime: int) -> CharRoots:
    """Closed-form roots of the characteristic equation of regime ``regime``.

    The larger-magnitude (negative) root is computed first and the positive
    root is recovered from the product of the roots, -2 rho / sigma^2, which
    avoids cancellation when mu^2 >> sigma^2 rho.
    """
    if regime not in (0, 1):
        raise ValueError(f"regime must be 0 or 1, got {regime!r}")
    mu = params.mu(regime)
    s2 = params.sigma ** 2
    if mu == 0.0:
        # symmetric pair; keep |m-| == m+ exactly
        m_plus = math.sqrt(2.0 * params.rho / s2)
        return CharRoots(m_plus=m_plus, m_minus=-m_plus, regime=regime)
    q = mu + math.sqrt(mu * mu + 2.0 * s2 * params.rho)
    m_minus = -q / s2
    m_plus = 2.0 * params.rho / q
    return CharRoots(m_plus=m_plus, m_minus=m_minus, regime=regime)


def char_poly(params: ModelParams, regime: int, m):
    """rho - mu_i m - sigma^2 m^2 / 2, vectorised over ``m``."""
    m = np.asarray(m, dtype=float)
    return params.rho - params.mu(regime) * m - 0.5 * params.sigma ** 2 * m * m
