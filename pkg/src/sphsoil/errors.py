"""Exception types raised by the solver."""


class InvalidArgumentError(ValueError):
    pass


class DegenerateNeighborhoodError(ArithmeticError):
    """The kernel moment matrix of a particle is singular or ill-conditioned."""

    def __init__(self, message, particle=None, condition=None):
        super().__init__(message)
        self.particle = particle
        self.condition = condition


class UnsupportedGeometryError(ValueError):
    pass


class ScenarioError(ValueError):
    """Scenario file could not be parsed or failed validation.

    ``field`` is the dotted key path and ``line`` the 1-based source line
    when known.
    """

    def __init__(self, message, field=None, line=None):
        loc = []
        if line is not None:
            loc.append(f"line {line}")
        if field is not None:
            loc.append(f"field '{field}'")
        prefix = f"{', '.join(loc)}: " if loc else ""
        super().__init__(prefix + message)
        self.message = message
        self.field = field
        self.line = line


class SimulationDivergedError(RuntimeError):
    """A non-finite or non-physical value appeared in the particle state."""

    def __init__(self, message, step=None, particle=None, field=None):
        super().__init__(
            f"{message} (step={step}, particle={particle}, field={field})"
        )
        self.step = step
        self.particle = particle
        self.field = field
