"""Exception hierarchy shared by all modules."""


class EpieconError(Exception):
    """Base class for all package errors."""


class ConfigurationError(EpieconError):
    """Invalid configuration, grid mismatch, or parameter out of range."""


class ModelError(EpieconError):
    """Runtime failure of the dynamic model.

    ``step_index`` is set by the simulation driver to the time step at
    which the failure occurred (None for standalone calls).
    """

    def __init__(self, message, step_index=None):
        super().__init__(message)
        self.step_index = step_index


class ExtinctPopulation(ModelError):
    """Total population fell below the extinction floor; 1/N is unusable."""


class NonFiniteState(ModelError):
    """A state or capital update produced a non-finite value."""


class InfeasibleStart(EpieconError):
    """Optimizer could not evaluate the objective at any starting probe."""
