"""Exception hierarchy shared by the solver, oracle and simulator."""

from __future__ import annotations


class DivswitchError(Exception):
    """Base class for all package errors."""


class ParamError(DivswitchError, ValueError):
    """Raised when model parameters violate one or more admissibility constraints.

    The full list of violated constraints is kept in ``violations`` so callers
    (the CLI in particular) can report all of them at once.
    """

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("invalid parameters: " + "; ".join(self.violations))


class BranchError(DivswitchError, ValueError):
    """A closed-form routine was called outside its non-degenerate branch."""


class NoBracket(DivswitchError, RuntimeError):
    """Bracket expansion for a threshold equation failed to find a sign change."""


class NoSolution(DivswitchError, RuntimeError):
    """No admissible root of a smooth-fit system was found."""


class NonConvergence(DivswitchError, RuntimeError):
    """An iterative scheme hit its iteration cap above tolerance."""

    def __init__(self, iterations: int, residual: float, what: str = "iteration"):
        self.iterations = iterations
        self.residual = residual
        super().__init__(f"{what} did not converge after {iterations} steps "
                         f"(residual {residual:.3e})")


class MonotonicityError(DivswitchError, RuntimeError):
    """Fixed-point iterates decreased where the theory requires an increasing sequence."""


class InvalidPolicy(DivswitchError, ValueError):
    """A simulated policy would switch regimes infinitely often within one step."""
