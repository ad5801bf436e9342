"""Exception types shared across modules."""


class ContractError(ValueError):
    """An input violates an operation's precondition."""


class InvariantError(ArithmeticError):
    """A computed object breaks a structural invariant."""


class ConvergenceError(RuntimeError):
    """An iterative solver or adaptive sampler did not converge."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class ConsistencyError(RuntimeError):
    """Two routes to the same quantity disagree beyond tolerance."""
