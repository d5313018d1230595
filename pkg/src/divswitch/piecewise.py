"""Value functions stored as ordered analytic segments.

Every value function produced by the solver is a concatenation of
exponential combinations (solutions of the regime ODE, possibly of the other
regime shifted by a switching cost) and affine pieces of slope one.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

EXP_LIMIT = 700.0


@dataclass(frozen=True)
class ExpCombo:
    """sum_k coef[k] * exp(rate[k] * (x - anchor))."""

    coefs: tuple[float, ...]
    rates: tuple[float, ...]
    anchor: float = 0.0
    kind: str = field(default="exp", init=False)

    def __call__(self, x, nu: int = 0):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for c, r in zip(self.coefs, self.rates):
            z = r * (x - self.anchor)
            if np.any(np.abs(z) > EXP_LIMIT):
                raise OverflowError(f"exponent {np.max(np.abs(z)):.1f} exceeds {EXP_LIMIT}")
            out = out + c * r ** nu * np.exp(z)
        return out

    def shifted(self, shift: float) -> "ExpCombo":
        """The segment evaluated at x - shift."""
        return ExpCombo(self.coefs, self.rates, self.anchor + shift)

    def to_dict(self) -> dict:
        return {"kind": "exp", "coefs": list(self.coefs), "rates": list(self.rates),
                "anchor": self.anchor}


@dataclass(frozen=True)
class Affine:
    """slope * x + intercept."""

    intercept: float
    slope: float = 1.0
    kind: str = field(default="affine", init=False)

    def __call__(self, x, nu: int = 0):
        x = np.asarray(x, dtype=float)
        if nu == 0:
            return self.slope * x + self.intercept
        if nu == 1:
            return np.full_like(x, self.slope)
        return np.zeros_like(x)

    def shifted(self, shift: float) -> "Affine":
        return Affine(self.intercept - self.slope * shift, self.slope)

    def to_dict(self) -> dict:
        return {"kind": "affine", "slope": self.slope, "intercept": self.intercept}


Segment = ExpCombo | Affine


@dataclass(frozen=True)
class PiecewiseValueFunction:
    """A value function on [0, inf) made of analytic segments.

    ``breaks[k]`` is the left end of ``segments[k]``; ``breaks[0] == 0`` and the
    last segment extends to infinity. Evaluation at a breakpoint uses the
    right segment; :meth:`left` gives left limits. For x < 0 the value and all
    derivatives are 0 (bankruptcy convention).
    """

    breaks: tuple[float, ...]
    segments: tuple[Segment, ...]
    regime: int
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        if len(self.breaks) != len(self.segments):
            raise ValueError("need one breakpoint per segment")
        if self.breaks[0] != 0.0:
            raise ValueError("first breakpoint must be 0")
        if any(b1 <= b0 for b0, b1 in zip(self.breaks, self.breaks[1:])):
            raise ValueError(f"breakpoints must increase strictly: {self.breaks}")
        if self.labels and len(self.labels) != len(self.segments):
            raise ValueError("need one label per segment")

    @classmethod
    def build(cls, pieces: Sequence[tuple[float, Segment, str]], regime: int,
              min_width: float = 0.0) -> "PiecewiseValueFunction":
        """Assemble from (left_end, segment, label) triples, dropping empty pieces."""
        kept = []
        for k, (left, seg, lab) in enumerate(pieces):
            right = pieces[k + 1][0] if k + 1 < len(pieces) else np.inf
            if right - left > min_width or (k + 1 == len(pieces)):
                if kept and left <= kept[-1][0]:
                    kept[-1] = (kept[-1][0], seg, lab)
                else:
                    kept.append((left, seg, lab))
        if kept[0][0] != 0.0:
            kept[0] = (0.0, kept[0][1], kept[0][2])
        return cls(tuple(float(p[0]) for p in kept), tuple(p[1] for p in kept), regime,
                   tuple(p[2] for p in kept))

    def _index(self, x: np.ndarray) -> np.ndarray:
        return np.searchsorted(np.asarray(self.breaks), x, side="right") - 1

    def _eval(self, x, nu: int, idx: np.ndarray) -> np.ndarray:
        out = np.zeros_like(x)
        for k, seg in enumerate(self.segments):
            mask = idx == k
            if np.any(mask):
                out[mask] = seg(x[mask], nu)
        return out

    def __call__(self, x, nu: int = 0):
        xa = np.atleast_1d(np.asarray(x, dtype=float))
        out = self._eval(xa, nu, self._index(xa))
        out[xa < 0] = 0.0
        return out if np.ndim(x) else float(out[0])

    def derivative(self, x, nu: int = 1):
        return self(x, nu)

    def left(self, x, nu: int = 0):
        """Left limit of the nu-th derivative (x > 0)."""
        xa = np.atleast_1d(np.asarray(x, dtype=float))
        idx = np.searchsorted(np.asarray(self.breaks), xa, side="left") - 1
        idx = np.maximum(idx, 0)
        out = self._eval(xa, nu, idx)
        return out if np.ndim(x) else float(out[0])

    @property
    def value_at_zero(self) -> float:
        """v(0+), the boundary datum of the value function."""
        return float(self.segments[0](0.0))

    @property
    def interior_breaks(self) -> tuple[float, ...]:
        return self.breaks[1:]

    def label_at(self, x: float) -> str:
        if not self.labels:
            return ""
        return self.labels[int(self._index(np.atleast_1d(float(x)))[0])]

    def to_dict(self) -> dict:
        return {
            "regime": self.regime,
            "breaks": list(self.breaks),
            "labels": list(self.labels),
            "segments": [s.to_dict() for s in self.segments],
        }
