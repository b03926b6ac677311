"""reqflow: event-sourced requirement change management for distributed teams."""

from .config import ServiceConfig
from .errors import ReqflowError
from .model import (
    EMPTY_BASELINE_DIGEST,
    Actor,
    Requirement,
    RequirementDelta,
    Site,
    TraceLink,
    apply_delta,
    baseline_hash,
)
from .persistence import EventLog, assessment_report, replay
from .service import RcmService
from .workflow import CrState, TRANSITION_TABLE

__version__ = "0.1.0"

__all__ = [
    "Actor",
    "CrState",
    "EMPTY_BASELINE_DIGEST",
    "EventLog",
    "RcmService",
    "Requirement",
    "RequirementDelta",
    "ReqflowError",
    "ServiceConfig",
    "Site",
    "TRANSITION_TABLE",
    "TraceLink",
    "apply_delta",
    "assessment_report",
    "baseline_hash",
    "replay",
    "__version__",
]
