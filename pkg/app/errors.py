"""
Exception hierarchy for the PWoS solver.

Library modules raise these errors; the HTTP routes translate them into
`HTTPException` responses and the command line translates them into exit codes.
"""


class PWoSError(Exception):
    """Base class for every error raised by the solver package."""


class GeometryError(PWoSError, ValueError):
    """Invalid or unusable surface geometry (parse failure, empty input, bad lengths)."""


class BoundaryError(PWoSError, ValueError):
    """Invalid Dirichlet boundary description or value table."""


class KernelDomainError(PWoSError, ValueError):
    """A Green's function or sampler was evaluated outside its domain."""


class MedialAxisError(PWoSError, RuntimeError):
    """Medial axis extraction produced no usable ball."""


class SolverConfigError(PWoSError, ValueError):
    """A solver configuration that the estimators cannot honour."""


class FilterError(PWoSError, ValueError):
    """Mean value filter construction or application failed."""


class SceneError(PWoSError, KeyError):
    """Unknown builtin scene id."""

    def __str__(self):
        return str(self.args[0]) if self.args else "unknown scene"
