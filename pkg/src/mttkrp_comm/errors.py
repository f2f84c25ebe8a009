"""Exception hierarchy shared by every module."""


class MttkrpError(Exception):
    """Base class for all errors raised by this package."""


class InvalidProblemError(MttkrpError, ValueError):
    """Tensor/factor shapes are inconsistent."""


class InfeasibleMachineError(MttkrpError):
    """Fast memory too small to run the requested algorithm."""


class InfeasibleBlockError(InfeasibleMachineError):
    """Block size violates b**N + N*b <= M."""


class CapacityViolation(MttkrpError):
    """A load would push residency past capacity (algorithm bug)."""


class SimulatorBugError(MttkrpError):
    """The memory machine was driven into an inconsistent state."""


class PlanningError(MttkrpError):
    """No admissible processor grid / block size exists."""


class ShapeError(MttkrpError, ValueError):
    """A formula was evaluated outside the shape class it applies to."""


class DistributionError(MttkrpError, ValueError):
    """Distributed arrays do not line up for a collective."""


class DomainError(MttkrpError, ValueError):
    """Argument outside the mathematical domain of a formula."""
