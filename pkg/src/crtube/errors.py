"""Exception hierarchy shared by all crtube modules."""


class CRTubeError(Exception):
    """Base class for every error raised by crtube."""


class DegreeExhausted(CRTubeError, ValueError):
    """A jet has too low a truncation degree for the requested operation."""


class DivisionByZeroJet(CRTubeError, ZeroDivisionError):
    """Division by a jet (or scalar) whose constant term vanishes."""


class DomainError(CRTubeError, ValueError):
    """A function was evaluated outside its real domain."""


class NonPositiveBase(DomainError):
    """Real power of a jet whose constant term is not strictly positive."""


class SingularImplicit(CRTubeError, ArithmeticError):
    """Implicit solve whose residual has vanishing derivative at the base."""


class ParseError(CRTubeError, ValueError):
    def __init__(self, message, offset, expected=()):
        self.offset = offset
        self.expected = tuple(sorted(set(expected)))
        detail = f" (expected one of: {', '.join(self.expected)})" if self.expected else ""
        super().__init__(f"{message} at offset {offset}{detail}")


class UnknownVariable(ParseError):
    def __init__(self, name, offset, allowed):
        self.name = name
        super().__init__(f"unknown variable {name!r}", offset, allowed)


class SchemaError(CRTubeError, ValueError):
    """A spec document does not match the published schema."""


class SingularParametrization(CRTubeError, ArithmeticError):
    """q' - w p'' vanishes, so the (v, w) chart degenerates."""


class PreconditionFailed(CRTubeError, ValueError):
    def __init__(self, quantity, value, message=None):
        self.quantity = quantity
        self.value = value
        super().__init__(message or f"precondition failed: {quantity} = {value!r}")


class NotLinearlyRelated(CRTubeError, ValueError):
    def __init__(self, max_deviation, where=None):
        self.max_deviation = max_deviation
        self.where = where
        super().__init__(
            f"q is not an affine function of p' (max deviation {max_deviation:.3e} at v={where})"
        )


class NotQuadratic(CRTubeError, ValueError):
    def __init__(self, max_deviation, where=None):
        self.max_deviation = max_deviation
        self.where = where
        super().__init__(
            f"(C p'')^(-2/3) is not quadratic (max deviation {max_deviation:.3e} at v={where})"
        )


class ReversionFailed(CRTubeError, ArithmeticError):
    """Series reversion of a jet with vanishing linear term."""


class NotACone(CRTubeError, ValueError):
    """Sample points do not lie on a quadric cone of signature (2, 1)."""


class NoVertex(CRTubeError, ArithmeticError):
    """The fitted quadric has no centre."""


class WrongSheet(CRTubeError, ValueError):
    """An image point fell on the past sheet (x3 <= 0) of the light cone."""
