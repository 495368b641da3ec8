"""Exception hierarchy shared by every groupoidlab module."""


class GroupoidLabError(Exception):
    """Base class for all library errors."""


class DomainEscape(GroupoidLabError, ValueError):
    """An evaluation point left the declared domain box of a map."""


class OutOfNeighborhood(GroupoidLabError, ArithmeticError):
    """A Newton solve did not converge near its seed.

    This is the operational boundary of the (unsized) neighborhoods on which
    the local constructions exist: the query asked for a point outside the
    convergence basin.
    """


class TransversalityFailure(GroupoidLabError):
    pass


class UnknownFamily(GroupoidLabError, ValueError):
    pass


class NotComposable(GroupoidLabError):
    """source(alpha) and target(beta) do not match within match_tol."""


class InvalidCoefficients(GroupoidLabError, ValueError):
    pass


class ConfigError(GroupoidLabError, ValueError):
    pass
