"""Exception types shared across the package.

Every guard that a batch runner may trip maps to one of these, so the CLI
can translate them into its exit-code contract (2 = bad input, 3 = numerical
guard).
"""


class NilflowError(Exception):
    """Base class for all package-specific errors."""


class NonTransversal(NilflowError):
    """Frame has <X, X0> = 0; no return map to the transverse torus."""


class DegenerateFrame(NilflowError):
    """SL(2) data too close to singular for the modular projection."""


class LabelMismatch(NilflowError):
    """Ladder data fed to a functional of a different component."""


class GridTooCoarse(NilflowError):
    """Sampling grid cannot separate the frequencies involved."""


class GridOverflow(NilflowError):
    """Requested translation or dilation exits the resolved line grid."""


class NonPositiveAlpha(NilflowError):
    """Time-change density is not strictly positive."""


class DomainExceeded(NilflowError):
    """Complex evaluation point left the budgeted analyticity domain."""


class InsufficientSamples(NilflowError):
    """Too few usable grid points or samples for the requested fit."""


class InsufficientSignal(NilflowError):
    """Correlation values drowned in Monte-Carlo noise; no fit possible."""


class NonAnalytic(NilflowError):
    """Boundary maxima explode under radius refinement (heuristic guard)."""
