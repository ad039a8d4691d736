"""Exception types shared across the package."""


class FedheatError(Exception):
    """Base class for all package-specific errors."""


class MeshFormatError(FedheatError, ValueError):
    """Raised when a mesh file cannot be parsed or fails validation.

    Carries the 1-based line number of the offending record when the
    problem is tied to a specific line of the input file.
    """

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DegenerateElementError(FedheatError, ValueError):
    """Element geometry has non-positive volume or Jacobian determinant."""

    def __init__(self, message: str, element: int | None = None):
        self.element = element
        if element is not None:
            message = f"element {element}: {message}"
        super().__init__(message)


class ConfigError(FedheatError, ValueError):
    """Invalid scenario configuration (bad key, missing section, bad value)."""


class InstabilityError(FedheatError, RuntimeError):
    """The explicit update produced a non-finite or runaway temperature."""

    def __init__(self, message: str, step: int, time: float, node: int | None = None):
        self.step = step
        self.time = time
        self.node = node
        super().__init__(f"step {step} (t={time:.6g} s): {message}")


class ConvergenceError(FedheatError, RuntimeError):
    """An iterative linear or eigenvalue solve failed to reach tolerance."""


class SizeCapError(FedheatError, ValueError):
    """A reference-path routine was asked to exceed its problem-size cap."""
