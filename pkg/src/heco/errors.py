"""Exception hierarchy shared by all modules."""


class HecoError(Exception):
    """Base class for library errors."""


class DomainError(HecoError, ValueError):
    """Argument outside the domain where a formula is defined."""


class SingularInputError(HecoError, ValueError):
    """Evaluation at a singular point of the potential (r = 0)."""


class CalibrationError(HecoError, RuntimeError):
    """Root bracketing failed while calibrating a potential parameter."""


class GeometryError(HecoError, RuntimeError):
    """Ray tracing produced an impossible bounce sequence."""


class IntegrationError(HecoError, RuntimeError):
    """Trajectory integration could not satisfy its step control."""


class StabilityError(HecoError, ValueError):
    """Time step violates the stability bound of the propagator."""


class NormDriftError(HecoError, RuntimeError):
    """Wave-function norm drifted beyond the abort threshold."""


class StaleExtractionError(HecoError, RuntimeError):
    """S-matrix requested while the packet is still interacting."""


class DiscretizationMismatchError(HecoError, ValueError):
    """Two results computed on incompatible grids or cells were combined."""


class ConfigError(HecoError, ValueError):
    """Run configuration failed validation.

    Attributes:
        problems: every violation found, one message per entry.
    """

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class NearNodeError(HecoError, ArithmeticError):
    """Velocity requested where |psi| is below the node threshold."""
