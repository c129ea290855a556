"""Exception and warning classes shared across the package."""


class RankDeaError(Exception):
    """Base class for package errors."""


class ValidationError(RankDeaError, ValueError):
    """Bad input data or configuration (CLI exit code 2)."""


class DataError(ValidationError):
    """A problem located in an input file."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class NumericalError(RankDeaError):
    """Solver or optimizer failure (CLI exit code 3)."""


class DeaError(NumericalError):
    def __init__(self, message, model=None, dmu=None, period=None, status=None):
        self.model = model
        self.dmu = dmu
        self.period = period
        self.status = status
        tag = ", ".join(
            f"{k}={v}" for k, v in (("model", model), ("dmu", dmu), ("period", period)) if v is not None
        )
        super().__init__(f"{message} ({tag})" if tag else message)


class IdentifiabilityError(NumericalError, ValueError):
    """Observed rankings violate Hunter's connectivity condition.

    ``leaders`` is a set of DMUs never outranked by any DMU outside it, so
    the likelihood increases without bound as their worths grow together.
    """

    def __init__(self, leaders, rest):
        self.leaders = list(leaders)
        self.rest = list(rest)
        super().__init__(
            f"DMUs {self.leaders} are never outranked by DMUs {self.rest}; "
            "the maximum likelihood estimate does not exist"
        )


class ConvergenceError(NumericalError):
    pass


class CollinearityError(ValidationError):
    def __init__(self, columns):
        self.columns = list(columns)
        super().__init__(f"design matrix is rank deficient; collinear columns: {self.columns}")


class TieWarning(UserWarning):
    pass


class EfficiencyWarning(UserWarning):
    pass


class EstimationWarning(UserWarning):
    pass
