"""Exception types raised by the simulator."""


class ProfileError(ValueError):
    """Malformed or physically invalid speed profile."""


class ScenarioError(ValueError):
    """Inconsistent scenario configuration."""


class PlacementError(ValueError):
    """A train lies outside the layout extent."""


class SolverError(RuntimeError):
    """The network iteration failed to converge."""

    def __init__(self, message, residual=float("nan")):
        super().__init__(message)
        self.residual = residual


class InfeasibleError(SolverError):
    """The requested load exceeds what the network can deliver."""

    def __init__(self, message, train=None, residual=float("nan")):
        super().__init__(message, residual)
        self.train = train


class NumericalDivergenceError(RuntimeError):
    """Drive state became non-finite."""
