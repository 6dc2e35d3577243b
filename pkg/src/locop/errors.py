"""Exception taxonomy shared across the package.

Precondition and hypothesis failures raise :class:`InvariantViolation`
(a ValueError); numerical breakdowns (non-convergence, ill-conditioning,
quadrature tolerance misses) raise :class:`NumericalError`.  The CLI maps
the former to exit code 2 and the latter to exit code 3.
"""


class LocopError(Exception):
    pass


class InvariantViolation(LocopError, ValueError):
    """A stated hypothesis (envelope, modulus, precondition) failed to verify."""


class NumericalError(LocopError, RuntimeError):
    """A numerical method failed to converge or lost too much accuracy."""
