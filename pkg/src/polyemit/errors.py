"""Exception hierarchy.

Every error the package raises deliberately derives from PolyemitError so
callers (and the CLI) can separate usage problems from genuine bugs.
"""


class PolyemitError(Exception):
    """Base class for all deliberate package errors."""


class InputError(PolyemitError):
    """Malformed or physically inadmissible user input."""


class CoincidentPointError(InputError):
    """Field point and source point coincide where a formula diverges."""


class MissingDerivativeError(PolyemitError):
    """A jet lacks derivative blocks that the requested contraction needs."""


class PartFlagError(PolyemitError):
    """A jet's real/imaginary content does not match what the caller needs."""


class GridFormatError(InputError):
    """Grid file violates the on-disk format contract."""


class GridDomainError(InputError):
    """Query point outside the grid hull, or grid lacks requested data."""


class QuadratureError(PolyemitError):
    """Adaptive integration failed to converge or diverged."""


class IntegrationError(PolyemitError):
    """Time propagation failed step control or broke a state invariant."""


class ModelDomainError(InputError):
    """Spectral model queried outside its declared validity domain."""
