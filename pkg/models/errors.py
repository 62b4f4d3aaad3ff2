"""
Domain exceptions
"""


class KseError(Exception):
    """Base class for every error raised by the toolkit"""


class ConfigurationError(KseError):
    """Invalid parameters or incompatible grid/partition/time-step settings"""


class PreconditionError(KseError):
    """An operation was called on inputs outside its contract"""


class AssemblyError(KseError):
    """An LMI block could not be assembled from the given certificate"""


class BracketError(KseError):
    """A bisection bracket does not straddle the feasibility boundary"""
