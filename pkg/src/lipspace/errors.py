"""Exception hierarchy shared by all lipspace modules."""


class LipspaceError(Exception):
    """Base class for every error raised by lipspace."""

    kind = "error"

    def to_dict(self):
        return {"error": self.kind, "message": str(self)}


class DomainError(LipspaceError, ValueError):
    kind = "domain-error"


class ResolutionError(LipspaceError, ValueError):
    kind = "resolution-error"


class NumericError(LipspaceError, ArithmeticError):
    kind = "numeric-error"


class ParameterError(LipspaceError, ValueError):
    kind = "parameter-error"


class DegenerateInputError(LipspaceError, ValueError):
    kind = "degenerate-input-error"


class SingularityError(LipspaceError, ValueError):
    kind = "singularity-error"


class KernelError(LipspaceError, ValueError):
    kind = "kernel-error"


class SolveError(LipspaceError, RuntimeError):
    kind = "solve-error"


class PreconditionError(LipspaceError, ValueError):
    kind = "precondition-error"


class UnsupportedOrderError(LipspaceError, ValueError):
    kind = "unsupported-order-error"


class MultiIndexError(LipspaceError, IndexError):
    kind = "index-error"
