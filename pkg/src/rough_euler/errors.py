"""Exception types shared across the toolkit."""


class RoughEulerError(Exception):
    """Base class for all toolkit errors."""


class NonConvergenceError(RoughEulerError):
    """An iterative solve (Newton, bisection) failed to reach its tolerance."""


class DomainViolationError(RoughEulerError, ValueError):
    """A point lies outside the set on which an operation is defined."""


class UnivalenceError(RoughEulerError, ValueError):
    """A candidate Riemann map failed the numerical univalence check."""


class ConstructionError(RoughEulerError):
    """Change-of-variable tables violate the bounds implied by the map."""


class ParticleEscapeError(RoughEulerError):
    """A particle reached the unit circle during time integration."""

    def __init__(self, message: str, time: float, index: int):
        super().__init__(message)
        self.time = time
        self.index = index


class ConfigError(RoughEulerError, ValueError):
    """Malformed or inconsistent experiment configuration."""

    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        where = []
        if field is not None:
            where.append(f"field '{field}'")
        if line is not None:
            where.append(f"line {line}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)
        self.field = field
        self.line = line
