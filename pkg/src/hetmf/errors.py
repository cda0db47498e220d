"""Exception types shared across the toolkit."""


class HetmfError(Exception):
    """Base class for all package errors."""


class ModelError(HetmfError):
    """A model definition violates an invariant (bad rule, unknown state, ...)."""


class ModelFormatError(HetmfError):
    """A model file is malformed or violates the JSON schema."""


class IntegrationError(HetmfError):
    """The ODE solver failed; message carries the time of failure."""


class ConvergenceError(HetmfError):
    """An iterative solver did not reach its tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class NonHurwitzError(HetmfError):
    """The drift Jacobian is not Hurwitz on the relevant subspace, so the
    steady-state refinement is undefined."""


class StateSpaceCapError(HetmfError):
    """The enumerated global state space would exceed the configured cap."""


class ReducibleChainError(HetmfError):
    """The chain has several recurrent classes; no unique stationary law."""

    def __init__(self, message, classes=None):
        super().__init__(message)
        self.classes = classes or []


class BudgetError(HetmfError):
    """A compute or memory budget would be exceeded."""


class MultipleEquilibriaWarning(UserWarning):
    """Fixed-point solves started from different points disagreed."""
