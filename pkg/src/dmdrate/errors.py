"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class DmdRateError(Exception):
    exit_code = 3


class ConfigError(DmdRateError):
    """Invalid or inconsistent configuration."""

    exit_code = 2

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class NumericalError(DmdRateError):
    exit_code = 3


class DegenerateSnapshotError(NumericalError):
    pass


class ConvergenceError(NumericalError):
    pass


class IntegrationBlowUp(NumericalError):
    def __init__(self, t, detail=""):
        self.t = t
        msg = f"integration blow-up at t={t:.6g}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class UnsupportedRegimeError(NumericalError):
    pass


class GridError(NumericalError):
    pass


class CapacityError(DmdRateError):
    exit_code = 4
