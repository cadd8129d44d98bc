####################################################################################################
####################  CanvasX | Errors                           ###################################
####################  Developed by: DatSciX                      ###################################
####################################################################################################

"""
CanvasX Errors
One exception hierarchy for the whole engine. Node-level failures during traversal are
never raised past the planner; they end up in the Outcome instead.
"""

from typing import Optional


class CanvasError(Exception):
    """Base class for every CanvasX error."""


class ConfigError(CanvasError):
    """The configuration file or a job request failed validation."""


class InvalidSpec(CanvasError):
    """A SceneSpec or AtomicEdit violates its own invariants."""


class UnresolvedSelector(CanvasError):
    """An object selector matched zero or several objects."""

    def __init__(self, message: str, matches: int = 0):
        super().__init__(message)
        self.matches = matches


class ParseError(CanvasError):
    """An instruction did not parse under the constrained grammar."""

    def __init__(self, message: str, position: int = 0):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class EndpointError(CanvasError):
    """An external endpoint (decomposer, detector, judge) failed or answered off-schema."""


class DuplicateName(CanvasError):
    """A tool with the same name is already registered."""


class NoCapableTool(CanvasError):
    """No registered tool can realize the requested action."""


class MalformedSelection(CanvasError):
    """A selection answer could not be parsed or names an unknown tool."""


class PlacementInfeasible(CanvasError):
    """The spec relations cannot be satisfied by any layout."""


class CompensationFailed(CanvasError):
    """An auxiliary tool could not bind a MISSING input slot."""

    def __init__(self, slot: str, reason: str):
        super().__init__(f"cannot compensate slot '{slot}': {reason}")
        self.slot = slot
        self.reason = reason


class UnboundInput(CanvasError):
    """A simulated tool was invoked with a required input still unbound."""


class AdapterError(CanvasError):
    """A tool adapter call failed. `kind` is one of timeout, schema, transport, remote."""

    def __init__(self, kind: str, message: str, diagnostics: Optional[list] = None):
        super().__init__(f"[{kind}] {message}")
        self.kind = kind
        self.diagnostics = diagnostics or []
