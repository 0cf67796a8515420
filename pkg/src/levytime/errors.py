"""Exception hierarchy shared by all modules."""


class LevyTimeError(Exception):
    """Base class for library errors."""


class DomainError(LevyTimeError, ValueError):
    """A state lies outside the state space, or a search region misses it."""


class NumericError(LevyTimeError, ArithmeticError):
    """A numerical procedure failed (quadrature, factorisation, ...).

    ``residual`` carries an error estimate when one is available.
    """

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class SimulationError(LevyTimeError, RuntimeError):
    """A simulated path left the state space without absorption."""


class StatisticsError(LevyTimeError, ValueError):
    """Too few samples for the requested estimator."""


class RangeError(LevyTimeError, ValueError):
    """A time argument falls outside the simulated horizon."""


class ParseError(LevyTimeError, ValueError):
    """Text input (expression, preset, config) does not parse."""


class ValidationError(LevyTimeError, ValueError):
    """Input parses but violates a documented constraint."""
