"""System state and the event projection that is the only way it evolves.

Both live execution and replay funnel every change through
:func:`apply_event`, so a replayed log cannot drift from the state the
service held when it appended — the round-trip property is structural.

Events are commands plus recorded facts: anything an operation computed
that belongs in the audit trail (forms, tallies, impact analyses, change
sets) rides in the event payload; anything mechanically deterministic
(delta application, message delivery, latency) is recomputed identically
during projection.
"""

from __future__ import annotations

from typing import Dict, List, Optional

from .config import ServiceConfig
from .errors import UnknownEventKind
from .impact import CostParams, ImpactAnalysis, TraceGraph
from .model import Requirement, Site, SiteId, TraceLink, RequirementDelta
from .persistence import AuditEvent
from .replication import (
    FaultRule,
    MessageKind,
    NetworkHarness,
    SiteReplica,
    SyncCoordinator,
    SyncMessage,
    route_delivered,
)
from .workflow import (
    CcbDecision,
    ChangeRequest,
    ChangeRequestForm,
    Vote,
    VoteDecision,
    apply_transition,
    new_change_request,
)


class SystemState:
    """Everything the service knows, reconstructible from the log alone."""

    def __init__(self):
        self.config: Optional[ServiceConfig] = None
        self.actors = {}
        self.change_requests: Dict[str, ChangeRequest] = {}
        self.coordinator: Optional[SyncCoordinator] = None
        self.replicas: Dict[SiteId, SiteReplica] = {}
        self.harness: Optional[NetworkHarness] = None
        self.params = CostParams()
        self.quorum = 1
        self.retry_interval = 5
        self.op_counter = 0  # logical clock; one tick per mutating operation
        self.next_cr_number = 1
        self.trace_links: List[TraceLink] = []
        # change-set seqs deferred by the conflict gate, with their blockers
        self.deferred: List[dict] = []

    # -- derived views ----------------------------------------------------------

    @property
    def remote_site_ids(self) -> List[SiteId]:
        return sorted(self.replicas)

    @property
    def coordinator_baseline(self) -> dict:
        return self.coordinator.site.baseline

    def all_sites(self) -> List[Site]:
        sites = [self.coordinator.site]
        sites.extend(self.replicas[s].site for s in sorted(self.replicas))
        return sites

    def graph(self) -> TraceGraph:
        """Current traceability graph: baseline ids plus configured links."""
        return TraceGraph(
            nodes=set(self.coordinator_baseline), edges=list(self.trace_links)
        )

    def snapshot(self) -> dict:
        """Canonical structural view, used for replay-equality comparison."""
        return {
            "op_counter": self.op_counter,
            "next_cr_number": self.next_cr_number,
            "quorum": self.quorum,
            "change_requests": {
                cr_id: cr.to_dict() for cr_id, cr in sorted(self.change_requests.items())
            },
            "coordinator": {
                "site": {
                    "id": self.coordinator.site.id,
                    "applied_seq": self.coordinator.site.applied_seq,
                    "baseline_hash": self.coordinator.site.baseline_digest(),
                    "baseline": {
                        rid: req.to_dict()
                        for rid, req in sorted(self.coordinator.site.baseline.items())
                    },
                },
                **self.coordinator.snapshot(),
            }
            if self.coordinator
            else None,
            "replicas": {sid: self.replicas[sid].snapshot() for sid in sorted(self.replicas)},
            "replica_baselines": {
                sid: {
                    rid: req.to_dict()
                    for rid, req in sorted(self.replicas[sid].site.baseline.items())
                }
                for sid in sorted(self.replicas)
            },
            "harness": self.harness.snapshot() if self.harness else None,
            "deferred": [dict(d) for d in self.deferred],
        }


# -- projection ------------------------------------------------------------------


def apply_event(state: SystemState, event: AuditEvent) -> None:
    handler = _HANDLERS.get(event.kind)
    if handler is None:
        raise UnknownEventKind(f"no projection for event kind '{event.kind}'", kind=event.kind)
    handler(state, event)
    state.op_counter = max(state.op_counter, event.ts)


def _cr(state: SystemState, event: AuditEvent) -> ChangeRequest:
    return state.change_requests[event.cr_id]


def _on_initialized(state: SystemState, event: AuditEvent) -> None:
    config = ServiceConfig.from_dict(event.payload["config"])
    state.config = config
    state.actors = config.actor_by_id()
    state.params = config.cost_params
    state.quorum = config.effective_quorum
    state.retry_interval = config.network.retry_interval
    state.trace_links = list(config.trace_links)

    baseline = {r.id: r for r in config.requirements}
    coordinator_cfg = config.coordinator_site
    coordinator_site = Site(
        id=coordinator_cfg.id,
        utc_offset_minutes=coordinator_cfg.utc_offset_minutes,
        daily_capacity=coordinator_cfg.daily_capacity,
        baseline=dict(baseline),
    )
    state.coordinator = SyncCoordinator(coordinator_site)
    state.replicas = {}
    for sc in config.sites:
        if sc.coordinator:
            continue
        site = Site(
            id=sc.id,
            utc_offset_minutes=sc.utc_offset_minutes,
            daily_capacity=sc.daily_capacity,
            baseline=dict(baseline),
        )
        state.replicas[sc.id] = SiteReplica(site, coordinator_id=coordinator_site.id)
    state.harness = NetworkHarness(
        seed=config.network.seed,
        base_latency=config.network.base_latency,
        jitter=config.network.jitter,
        faults=[FaultRule.from_dict(r) for r in config.network.fault_rules],
    )


def _on_cr_submitted(state: SystemState, event: AuditEvent) -> None:
    p = event.payload
    cr = new_change_request(
        cr_id=event.cr_id,
        author=p["author"],
        origin_site=p["origin_site"],
        targets=set(p["targets"]),
        description=p["description"],
        severity=p["severity"],
        ts=event.ts,
    )
    state.change_requests[cr.id] = cr
    state.next_cr_number += 1


def _on_cr_formulated(state: SystemState, event: AuditEvent) -> None:
    cr = _cr(state, event)
    p = event.payload
    cr.deltas = [RequirementDelta.from_dict(d) for d in p["deltas"]]
    cr.goals = list(p["goals"])
    cr.measurements = list(p["measurements"])
    apply_transition(cr, "formulate", event.actor, event.ts)


def _on_pm_review_entered(state: SystemState, event: AuditEvent) -> None:
    apply_transition(_cr(state, event), "send_to_pm", event.actor, event.ts)


def _on_pm_triaged(state: SystemState, event: AuditEvent) -> None:
    cr = _cr(state, event)
    decision = event.payload["decision"]
    cr.pm_decision = decision
    cr.pm_rationale = event.payload["rationale"]
    apply_transition(
        cr, "triage_accept" if decision == "Accept" else "triage_reject", event.actor, event.ts
    )


def _on_cr_validated(state: SystemState, event: AuditEvent) -> None:
    cr = _cr(state, event)
    p = event.payload
    cr.form = ChangeRequestForm.from_dict(p["form"])
    cr.preliminary_impact = ImpactAnalysis.from_dict(p["impact"])
    apply_transition(cr, "generate_form", event.actor, event.ts)


def _on_ccb_review_entered(state: SystemState, event: AuditEvent) -> None:
    apply_transition(_cr(state, event), "submit_to_ccb", event.actor, event.ts)


def _on_vote_cast(state: SystemState, event: AuditEvent) -> None:
    cr = _cr(state, event)
    p = event.payload
    # Last write wins until the tally: one vote per member.
    cr.votes[p["member"]] = Vote(
        member=p["member"],
        decision=VoteDecision(p["decision"]),
        rationale=p["rationale"],
    )
    apply_transition(cr, "vote", event.actor, event.ts)


def _on_cr_tallied(state: SystemState, event: AuditEvent) -> None:
    cr = _cr(state, event)
    cr.decision = CcbDecision.from_dict(event.payload["decision"])
    apply_transition(
        cr,
        "tally_approve" if cr.decision.outcome == "Approved" else "tally_reject",
        event.actor,
        event.ts,
    )


def _on_impact_finalized(state: SystemState, event: AuditEvent) -> None:
    cr = _cr(state, event)
    cr.final_impact = ImpactAnalysis.from_dict(event.payload["impact"])
    apply_transition(cr, "finalize_impact", event.actor, event.ts)


def _on_implementation_started(state: SystemState, event: AuditEvent) -> None:
    cr = _cr(state, event)
    apply_transition(cr, "start_implementation", event.actor, event.ts)
    cs = state.coordinator.build_change_set(cr)
    cr.changeset_seq = cs.seq
    recorded = event.payload["changeset"]
    assert cs.seq == recorded["seq"] and cs.expected_hash == recorded["expected_hash"], (
        "recorded change set disagrees with deterministic rebuild"
    )


def _on_changeset_propagated(state: SystemState, event: AuditEvent) -> None:
    seq = event.payload["seq"]
    cs = state.coordinator.change_sets[seq]
    state.coordinator.propagate(cs, state.remote_site_ids, state.harness)


def _on_changeset_deferred(state: SystemState, event: AuditEvent) -> None:
    state.deferred.append(
        {"seq": event.payload["seq"], "blocked_on": list(event.payload["blocked_on"])}
    )


def _on_changeset_released(state: SystemState, event: AuditEvent) -> None:
    seq = event.payload["seq"]
    state.deferred = [d for d in state.deferred if d["seq"] != seq]
    cs = state.coordinator.change_sets[seq]
    state.coordinator.propagate(cs, state.remote_site_ids, state.harness)


def _on_changeset_retransmitted(state: SystemState, event: AuditEvent) -> None:
    seq = event.payload["seq"]
    cs = state.coordinator.change_sets[seq]
    for site_id in event.payload["sites"]:
        state.harness.enqueue(
            SyncMessage(
                kind=MessageKind.PROPAGATE,
                seq=cs.seq,
                sender=state.coordinator.site.id,
                receiver=site_id,
                payload=cs,
            )
        )


def _on_harness_ticked(state: SystemState, event: AuditEvent) -> None:
    delivered = state.harness.tick()
    route_delivered(delivered, state.replicas, state.coordinator, state.harness)


def _on_verifying_entered(state: SystemState, event: AuditEvent) -> None:
    apply_transition(_cr(state, event), "begin_verification", event.actor, event.ts)


def _on_cr_closed(state: SystemState, event: AuditEvent) -> None:
    apply_transition(_cr(state, event), "close", event.actor, event.ts)


_HANDLERS = {
    "system.initialized": _on_initialized,
    "cr.submitted": _on_cr_submitted,
    "cr.formulated": _on_cr_formulated,
    "cr.pm_review_entered": _on_pm_review_entered,
    "cr.pm_triaged": _on_pm_triaged,
    "cr.validated": _on_cr_validated,
    "cr.ccb_review_entered": _on_ccb_review_entered,
    "cr.vote_cast": _on_vote_cast,
    "cr.tallied": _on_cr_tallied,
    "cr.impact_finalized": _on_impact_finalized,
    "cr.implementation_started": _on_implementation_started,
    "changeset.propagated": _on_changeset_propagated,
    "changeset.deferred": _on_changeset_deferred,
    "changeset.released": _on_changeset_released,
    "changeset.retransmitted": _on_changeset_retransmitted,
    "harness.ticked": _on_harness_ticked,
    "cr.verifying_entered": _on_verifying_entered,
    "cr.closed": _on_cr_closed,
}

EVENT_KINDS = tuple(sorted(_HANDLERS))
