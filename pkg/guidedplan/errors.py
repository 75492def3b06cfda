"""
Exceptions raised by guidedplan

Every error a caller can reasonably handle derives from GuidedPlanError.
Broken internal invariants are still reported with plain assert.
"""

from typing import Any, Dict, Optional


class GuidedPlanError(Exception):
    pass


class ConfigError(GuidedPlanError, ValueError):
    pass


class ScenarioParseError(GuidedPlanError):
    """ The scenario file could not be parsed

    Attributes:
        line (Optional[int]): line of the JSON syntax error, if any
        field (Optional[str]): dotted path of the offending field, if any
    """

    def __init__(self,
                 message: str,
                 line: Optional[int] = None,
                 field: Optional[str] = None) -> None:
        where = []
        if line is not None:
            where.append(f'line {line}')
        if field is not None:
            where.append(f'field {field}')
        if where:
            message = f'{message} ({", ".join(where)})'
        super().__init__(message)
        self.line = line
        self.field = field


class ScenarioInvariantError(GuidedPlanError):
    """ A parsed scenario violates one of its invariants

    Attributes:
        check (str): name of the failed check, e.g. 'route_lanes_exist'
    """

    def __init__(self, check: str, message: str) -> None:
        super().__init__(f'[{check}] {message}')
        self.check = check


class TickOutOfRangeError(GuidedPlanError, IndexError):
    pass


class ShapeError(GuidedPlanError, ValueError):
    pass


class CameraError(GuidedPlanError, ValueError):
    pass


class PromptOrderError(GuidedPlanError, ValueError):
    pass


class TapeError(GuidedPlanError):
    pass


class TrainingDivergedError(GuidedPlanError):
    """ A training step produced a non-finite loss

    Attributes:
        diagnostics (dict): per-term loss values and parameter norms at the
            failing step
    """

    def __init__(self, message: str, diagnostics: Dict[str, Any]) -> None:
        super().__init__(message)
        self.diagnostics = diagnostics


class SimulationAbortedError(GuidedPlanError):
    """ The planner produced a non-finite trajectory during simulation

    Attributes:
        trace: the SimTrace recorded up to (and including) the failing tick
    """

    def __init__(self, message: str, trace: Any) -> None:
        super().__init__(message)
        self.trace = trace


class ResponseMismatchError(GuidedPlanError):
    pass


class NonFiniteError(GuidedPlanError, ValueError):
    pass
