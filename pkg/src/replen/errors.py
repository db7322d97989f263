class ReplenError(Exception):
    """Base of all the errors raised by replen"""

    exit_code: int = 1

    def __str__(self):
        return f"[{self.__class__.__name__}] {self.args[0] if self.args else ''}"


class InvalidInstanceError(ReplenError):
    """Raised when an instance (or one of its fields) is not valid"""


class DomainError(ReplenError):
    """Raised when an argument is outside the domain of the operation"""


class InfeasibleCycleError(ReplenError):
    """Raised when a replenishment cycle can not be placed inside the horizon"""


class InfeasibleScheduleError(ReplenError):
    """Raised when the receipt periods of an item can not be tiled by cycles"""


class ModeError(ReplenError):
    """Raised when a solver mode is not available for the given instance"""

    exit_code = 2


class ResourceCapError(ReplenError):
    """Raised when a computation would exceed its configured resource cap"""

    exit_code = 3


class ExportError(ReplenError):
    """Raised when a model can not be written in an exchange format"""


class InputError(ReplenError):
    """Raised when user supplied data does not match the structure it refers to"""


class DependencyError(ReplenError):
    """Raised when a routine is missing the data it depends on"""


class SimulationError(ReplenError):
    """Raised when a simulation run can not be trusted"""


class ConfigError(ReplenError):
    """Raised when a bench suite or a setting is malformed"""

    exit_code = 2


class StepExecutionError(ReplenError):
    """Raised when there was a problem executing a bench Step"""


class StackableError(Exception):
    """Base of all errors that keep the path of containers that raised them"""

    def __init__(self, *args) -> None:
        super().__init__(*args)
        self.stack = []

    def add(self, x) -> None:
        self.stack.insert(0, x)

    def __str__(self):
        if len(self.stack) > 0:
            path = " ► ".join([str(c) for c in self.stack])
            return f"{path} ► {self.__class__.__name__}: {self.args[0]}"
        return f"{self.__class__.__name__}: {self.args[0]}"


class StepAssertionError(StackableError):
    """
    Raised when a bench expectation does not hold.
    The entry is reported as failed and the bench continues with the next entry.
    """


class StepRequirementError(StackableError):
    """
    Raised when a bench step can not run at all (e.g. an undefined template value).
    The bench stops.
    """
