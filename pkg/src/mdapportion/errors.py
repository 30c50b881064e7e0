"""Exception hierarchy.

The CLI maps these onto exit codes: validation problems exit 1,
infeasibility exits 2 and internal assertions exit 3.
"""


class ApportionmentError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class ValidationError(ApportionmentError):
    """Input data violates a structural or consistency requirement."""


class ParseError(ValidationError):
    """A row of an input file could not be parsed."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + message)


class DegenerateInput(ValidationError):
    """Every vote count is zero, so no multiplier can distribute seats."""


class InfeasibilityError(ApportionmentError):
    """No allocation satisfies the requested constraints."""

    exit_code = 2


class InfeasibleBounds(InfeasibilityError):
    """Lower bounds exceed the house size or upper bounds fall short of it."""


class Infeasible(InfeasibilityError):
    """The linear relaxation of the apportionment program has no solution."""


class NonConvergence(InfeasibilityError):
    """Iterative proportional fitting stalled above the requested tolerance."""

    def __init__(self, iterations, residual):
        self.iterations = iterations
        self.residual = residual
        super().__init__(
            f"scaling did not converge after {iterations} sweeps "
            f"(max marginal violation {residual:.3e})"
        )


class NotARounding(ValidationError):
    """A candidate tensor is not a floor/ceiling rounding of an LP optimum."""


class NotEnoughCandidates(InfeasibilityError):
    def __init__(self, key, needed, available):
        self.key = key
        self.needed = needed
        self.available = available
        super().__init__(
            f"tuple {key} needs {needed} seats but has only "
            f"{available} candidates with votes"
        )


class ReplacementExhausted(InfeasibilityError):
    """Gender correction found no eligible replacement candidate.

    ``log`` holds the replacements performed before giving up.
    """

    def __init__(self, message, log=None):
        self.log = list(log or [])
        super().__init__(message)


class AmbiguousTop(ValidationError):
    """Two candidates tie for the most votes in a district (strict mode)."""


class CertificationFailed(InfeasibilityError):
    """A supplied apportionment failed re-certification."""


class GuaranteeViolated(ApportionmentError):
    """Iterated rounding made no progress; indicates an implementation bug."""

    exit_code = 3
