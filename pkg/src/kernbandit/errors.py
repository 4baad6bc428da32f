"""Exception hierarchy shared across the package.

Each class carries the CLI exit code it maps to, so the command-line front
end can translate failures without a lookup table.
"""


class KernBanditError(Exception):
    exit_code = 1


class ConfigError(KernBanditError):
    exit_code = 2

    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)


class InvalidArgs(KernBanditError):
    exit_code = 2


class ConstraintViolation(KernBanditError):
    """A construction inequality failed; ``constraint`` names which one."""

    exit_code = 3

    def __init__(self, constraint, message):
        self.constraint = constraint
        super().__init__(f"{constraint}: {message}")


class UncertifiedInstance(KernBanditError):
    exit_code = 3


class NumericalFailure(KernBanditError):
    exit_code = 4


class FactorizationFailure(NumericalFailure):
    pass


class QuadratureNotConverged(NumericalFailure):
    pass


class GridTooCoarse(NumericalFailure):
    pass


class NormalizerNotFound(NumericalFailure):
    pass


class DegenerateFit(NumericalFailure):
    pass


class HorizonTooSmall(KernBanditError):
    exit_code = 2


class RewardOutOfRange(KernBanditError):
    exit_code = 4
