"""Change-request lifecycle: states, the transition table, votes, tally rule.

The legal transition relation lives in ``transitions.json`` (shipped as
package data and served over the API) and is the single source the engine
consults.  Rows are ``(state, event, guard, next, action)``; guards are:

* ``auto``     — system-driven step, never offered to a human
* ``any``      — any registered actor
* ``role=X``   — actor's role must be X
* ``role=X|author`` — role X, or the actor who authored the change request

State changes happen only through :func:`apply_transition`, which enforces
the table and appends to the request's history.  Terminal states have no
outgoing rows, so they absorb by construction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from typing import Dict, List, Optional, Set

from .errors import IllegalTransition
from .impact import ImpactAnalysis
from .model import (
    ActorId,
    ChangeRequestId,
    RequirementDelta,
    RequirementId,
    Role,
    SiteId,
)


class CrState(str, Enum):
    SUBMITTED = "Submitted"
    FORMULATED = "Formulated"
    PM_REVIEW = "PmReview"
    REJECTED_BY_PM = "RejectedByPm"
    VALIDATING = "Validating"
    FORM_GENERATED = "FormGenerated"
    CCB_REVIEW = "CcbReview"
    CCB_REJECTED = "CcbRejected"
    APPROVED = "Approved"
    IMPACT_ANALYZED = "ImpactAnalyzed"
    IMPLEMENTING = "Implementing"
    VERIFYING = "Verifying"
    CLOSED = "Closed"


TERMINAL_STATES = frozenset(
    {CrState.REJECTED_BY_PM, CrState.CCB_REJECTED, CrState.CLOSED}
)


class VoteDecision(str, Enum):
    APPROVE = "Approve"
    REJECT = "Reject"
    ABSTAIN = "Abstain"


@dataclass(frozen=True)
class TransitionRule:
    state: CrState
    event: str
    guard: str
    next: CrState
    action: Optional[str]  # API action this event belongs to; None for auto steps

    def to_dict(self) -> dict:
        return {
            "state": self.state.value,
            "event": self.event,
            "guard": self.guard,
            "next": self.next.value,
            "action": self.action,
        }


def load_transition_table() -> List[TransitionRule]:
    raw = resources.files("reqflow").joinpath("transitions.json").read_text("utf-8")
    return [
        TransitionRule(
            state=CrState(row["state"]),
            event=row["event"],
            guard=row["guard"],
            next=CrState(row["next"]),
            action=row["action"],
        )
        for row in json.loads(raw)
    ]


TRANSITION_TABLE: List[TransitionRule] = load_transition_table()

_RULES_BY_KEY: Dict[tuple, TransitionRule] = {
    (r.state, r.event): r for r in TRANSITION_TABLE
}

# The state-pair relation, for soundness checks over recorded histories.
LEGAL_STATE_PAIRS = frozenset(
    (r.state, r.next) for r in TRANSITION_TABLE if r.next is not r.state
)


def guard_allows(guard: str, role: Role, is_author: bool) -> bool:
    """Whether a human actor with this role (and authorship) may fire the event."""
    if guard == "auto":
        return False
    if guard == "any":
        return True
    if guard.startswith("role="):
        spec = guard[len("role="):]
        alternatives = spec.split("|")
        for alt in alternatives:
            if alt == "author":
                if is_author:
                    return True
            elif role.value == alt:
                return True
        return False
    raise ValueError(f"unknown guard expression: {guard}")


@dataclass(frozen=True)
class HistoryEntry:
    state: CrState
    ts: int  # logical timestamp
    actor: ActorId

    def to_dict(self) -> dict:
        return {"state": self.state.value, "ts": self.ts, "actor": self.actor}


@dataclass(frozen=True)
class Vote:
    member: ActorId
    decision: VoteDecision
    rationale: str = ""

    def to_dict(self) -> dict:
        return {
            "member": self.member,
            "decision": self.decision.value,
            "rationale": self.rationale,
        }


@dataclass(frozen=True)
class CcbDecision:
    approvals: int
    rejections: int
    abstentions: int
    quorum: int
    outcome: str  # "Approved" | "Rejected"

    def to_dict(self) -> dict:
        return {
            "approvals": self.approvals,
            "rejections": self.rejections,
            "abstentions": self.abstentions,
            "quorum": self.quorum,
            "outcome": self.outcome,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CcbDecision":
        return cls(**d)


def tally_decision(votes: Dict[ActorId, Vote], quorum: int) -> CcbDecision:
    """Deterministic decision rule over the vote multiset.

    Approved iff total participation reaches the quorum AND approvals
    strictly outnumber rejections; everything else (ties included) rejects.
    """
    approvals = sum(1 for v in votes.values() if v.decision is VoteDecision.APPROVE)
    rejections = sum(1 for v in votes.values() if v.decision is VoteDecision.REJECT)
    abstentions = sum(1 for v in votes.values() if v.decision is VoteDecision.ABSTAIN)
    participation = approvals + rejections + abstentions
    approved = participation >= quorum and approvals > rejections
    return CcbDecision(
        approvals=approvals,
        rejections=rejections,
        abstentions=abstentions,
        quorum=quorum,
        outcome="Approved" if approved else "Rejected",
    )


@dataclass(frozen=True)
class ChangeRequestForm:
    """The CCB-facing document; generated exactly once per change request."""

    cr_id: ChangeRequestId
    affected: Dict[RequirementId, int]  # impact summary: id -> depth
    preliminary_cost: float
    conflicts: List[ChangeRequestId]
    priority_score: float
    generated_at: int

    def to_dict(self) -> dict:
        return {
            "cr_id": self.cr_id,
            "affected": dict(sorted(self.affected.items())),
            "preliminary_cost": self.preliminary_cost,
            "conflicts": list(self.conflicts),
            "priority_score": self.priority_score,
            "generated_at": self.generated_at,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ChangeRequestForm":
        return cls(
            cr_id=d["cr_id"],
            affected={k: int(v) for k, v in d["affected"].items()},
            preliminary_cost=d["preliminary_cost"],
            conflicts=list(d["conflicts"]),
            priority_score=d["priority_score"],
            generated_at=d["generated_at"],
        )


@dataclass
class ChangeRequest:
    id: ChangeRequestId
    author: ActorId
    origin_site: SiteId
    targets: Set[RequirementId]
    description: str
    severity: int
    created_at: int
    state: CrState = CrState.SUBMITTED
    goals: List[str] = field(default_factory=list)
    measurements: List[str] = field(default_factory=list)
    deltas: List[RequirementDelta] = field(default_factory=list)
    history: List[HistoryEntry] = field(default_factory=list)
    votes: Dict[ActorId, Vote] = field(default_factory=dict)
    form: Optional[ChangeRequestForm] = None
    decision: Optional[CcbDecision] = None
    pm_decision: Optional[str] = None  # "Accept" | "Reject"
    pm_rationale: Optional[str] = None
    preliminary_impact: Optional[ImpactAnalysis] = None
    final_impact: Optional[ImpactAnalysis] = None
    changeset_seq: Optional[int] = None

    def is_terminal(self) -> bool:
        return self.state in TERMINAL_STATES

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "author": self.author,
            "origin_site": self.origin_site,
            "targets": sorted(self.targets),
            "description": self.description,
            "severity": self.severity,
            "created_at": self.created_at,
            "state": self.state.value,
            "goals": list(self.goals),
            "measurements": list(self.measurements),
            "deltas": [d.to_dict() for d in self.deltas],
            "history": [h.to_dict() for h in self.history],
            "votes": {m: v.to_dict() for m, v in sorted(self.votes.items())},
            "form": self.form.to_dict() if self.form else None,
            "decision": self.decision.to_dict() if self.decision else None,
            "pm_decision": self.pm_decision,
            "pm_rationale": self.pm_rationale,
            "preliminary_impact": (
                self.preliminary_impact.to_dict() if self.preliminary_impact else None
            ),
            "final_impact": self.final_impact.to_dict() if self.final_impact else None,
            "changeset_seq": self.changeset_seq,
        }


def new_change_request(
    cr_id: ChangeRequestId,
    author: ActorId,
    origin_site: SiteId,
    targets: Set[RequirementId],
    description: str,
    severity: int,
    ts: int,
) -> ChangeRequest:
    cr = ChangeRequest(
        id=cr_id,
        author=author,
        origin_site=origin_site,
        targets=set(targets),
        description=description,
        severity=severity,
        created_at=ts,
    )
    cr.history.append(HistoryEntry(state=CrState.SUBMITTED, ts=ts, actor=author))
    return cr


def rule_for(state: CrState, event: str) -> TransitionRule:
    rule = _RULES_BY_KEY.get((state, event))
    if rule is None:
        raise IllegalTransition(
            f"event '{event}' is not legal in state {state.value}",
            state=state.value,
            event=event,
        )
    return rule


def apply_transition(cr: ChangeRequest, event: str, actor: ActorId, ts: int) -> ChangeRequest:
    """Fires a tabulated event, mutating state and history; the only mutator."""
    rule = rule_for(cr.state, event)
    if rule.next is not cr.state:
        cr.state = rule.next
        cr.history.append(HistoryEntry(state=rule.next, ts=ts, actor=actor))
    return cr
