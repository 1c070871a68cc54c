"""Semantic exception hierarchy.

Public functions raise these instead of bare ValueError so callers (and the
CLI, which maps config/structural failures to exit code 2) can tell apart
bad wiring from violated mathematical hypotheses.
"""


class TcbsdeError(Exception):
    """Base error for the package."""


class StructuralError(TcbsdeError):
    """Objects are wired together wrongly: grid mismatch, range exceedance."""


class InvariantError(TcbsdeError):
    """A declared invariant of a domain object does not hold."""


class DomainError(TcbsdeError):
    """Evaluation requested outside the domain of a map."""


class PreconditionError(TcbsdeError):
    """An operation's stated precondition is violated."""


class UnsupportedError(TcbsdeError):
    """Requested feature is deliberately out of scope."""


class SchemeError(TcbsdeError):
    """Numerical scheme rejected the problem (contraction guard, divergence)."""


class ConfigError(TcbsdeError):
    """Experiment configuration cannot be resolved."""
