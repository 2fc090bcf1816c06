"""Exception hierarchy shared by all xflie modules."""


class XflieError(Exception):
    """Base class for every error raised by this package."""


# graph model
class GraphError(XflieError):
    pass


class NodeNotFound(GraphError, KeyError):
    def __str__(self) -> str:
        return Exception.__str__(self)


class AlreadyInspected(GraphError):
    pass


class NotInspected(GraphError):
    pass


class InvalidPolygon(GraphError):
    pass


class NoNestedGraph(GraphError):
    pass


class InvariantViolation(GraphError):
    pass


class SchemaVersionMismatch(GraphError):
    pass


class MalformedDocument(GraphError):
    pass


# simulation
class SimulationError(XflieError):
    pass


class OutOfBounds(SimulationError):
    pass


class NoSupportingPoints(SimulationError):
    pass


class TargetLost(SimulationError):
    pass


class ConfigError(XflieError):
    pass


# planning
class PlanningError(XflieError):
    pass


class Unreachable(PlanningError):
    pass


class StartOccupied(PlanningError):
    pass


class NoInspectedNodes(PlanningError):
    pass


class NotResolvable(PlanningError):
    pass


class DegenerateDistance(PlanningError):
    pass


class EmptyCandidateSet(PlanningError):
    pass


class ParseError(PlanningError):
    pass


class UnknownLabel(PlanningError):
    def __init__(self, label: str, suggestion: str | None = None):
        self.label = label
        self.suggestion = suggestion
        msg = f"unknown label {label!r}"
        if suggestion is not None:
            msg += f" (did you mean {suggestion!r}?)"
        super().__init__(msg)


class MissingMetrics(XflieError):
    pass
