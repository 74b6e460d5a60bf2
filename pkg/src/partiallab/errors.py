"""Exception types shared across the package."""


class ShapeError(ValueError):
    pass


class DomainError(ValueError):
    pass


class SingularConstraintError(DomainError):
    pass


class ConfigError(ValueError):
    pass


class NumericError(ArithmeticError):
    pass


class StateError(RuntimeError):
    pass


class GenerationError(RuntimeError):
    pass
