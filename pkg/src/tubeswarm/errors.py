"""Exception types shared across the package."""


class ContractError(ValueError):
    """An operation was called with arguments outside its precondition."""


class TubeConstructionError(ValueError):
    """Waypoints cannot define a generating curve."""


class SimulationDiverged(RuntimeError):
    """A robot state or command became non-finite."""

    def __init__(self, message, robot_id=None, tick=None):
        super().__init__(message)
        self.robot_id = robot_id
        self.tick = tick


class MonteCarloInstability(RuntimeError):
    """The discretised alignment loop is numerically unstable."""
