"""Exception hierarchy shared across the toolkit."""


class AgepopError(Exception):
    """Base class for all toolkit errors."""


class DomainError(AgepopError):
    """Input lies outside an operator's mathematical domain."""


class ConvergenceError(AgepopError):
    """An iterative solver exhausted its iteration budget."""


class SetpointError(AgepopError):
    """Commanded equilibrium setpoint is infeasible."""


class CertificateError(AgepopError):
    """No certifiable level set exists for the requested error budget."""


class ExtinctionError(AgepopError):
    """A population functional required by the dynamics collapsed to zero."""


class BlowupError(AgepopError):
    """State escaped the sanity bound during integration."""


class ShapeError(AgepopError):
    """Array dimensions do not match a declared model or grid layout."""
