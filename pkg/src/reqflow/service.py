"""The application service: lifecycle operations over the event-sourced core.

Every mutating operation follows the same discipline:

1. validate preconditions against the current state (state first, then
   role, then payload — so terminal states always answer IllegalTransition);
2. draft the audit events, including any computed documents (forms,
   tallies, impact analyses, change-set previews) as recorded facts;
3. durably append the batch, then project it through the same
   :func:`reqflow.state.apply_event` used by replay.

Nothing mutates state outside projection, and a failed request appends
nothing.

Automatic steps (CRP validation after PM acceptance, verification and
close-out, conflict-gated releases, retransmissions) are appended by the
triggering operation as additional events attributed to the reserved
``system`` actor, which is how Fig-less process steps stay on the audit
trail without a human in the loop.
"""

from __future__ import annotations

from typing import Dict, List, Optional, Sequence, Tuple

from .config import ServiceConfig
from .errors import (
    ConfigError,
    EmptyTargets,
    ForbiddenRole,
    IllegalTransition,
    InconsistentDelta,
    InvalidSeverity,
    MalformedBody,
    NoVotes,
    NotFound,
    QuorumUnreachable,
    UnknownActor,
    UnknownChangeRequest,
    UnknownRequirement,
    UnknownSite,
    ValidationFailed,
    VerificationIncomplete,
)
from .impact import (
    ImpactAnalysis,
    detect_conflicts,
    estimate_cost,
    impact_set,
    priority_score,
    schedule_impact,
    to_dot,
)
from .model import (
    SYSTEM_ACTOR,
    Actor,
    DeltaOp,
    RequirementDelta,
    Role,
    apply_delta,
    baseline_hash,
)
from .persistence import EventDraft, EventLog, assessment_report, render_report_text
from .replication import VerificationStatus
from .state import SystemState, apply_event
from .workflow import (
    ChangeRequest,
    CrState,
    TRANSITION_TABLE,
    VoteDecision,
    guard_allows,
    rule_for,
    tally_decision,
)

# States in which a change request owns a generated form and therefore
# participates in conflict detection against newcomers.
PIPELINE_STATES = frozenset(
    {
        CrState.FORM_GENERATED,
        CrState.CCB_REVIEW,
        CrState.APPROVED,
        CrState.IMPACT_ANALYZED,
        CrState.IMPLEMENTING,
    }
)


class RcmService:
    """Single-writer facade over the log; one instance per deployment."""

    def __init__(self, config: Optional[ServiceConfig] = None, log: Optional[EventLog] = None):
        self.log = log if log is not None else EventLog(None)
        self.state = SystemState()
        if len(self.log) == 0:
            if config is None:
                raise ConfigError("a fresh log needs a config to seed the genesis event")
            self._append_and_project(
                [
                    EventDraft(
                        kind="system.initialized",
                        actor=SYSTEM_ACTOR,
                        payload={"config": config.to_dict()},
                    )
                ],
                ts=0,
            )
        else:
            for event in self.log.events:
                apply_event(self.state, event)
            if config is not None and config.to_dict() != self.state.config.to_dict():
                raise ConfigError(
                    "supplied config differs from the one recorded in the log's genesis event"
                )

    # -- internals ---------------------------------------------------------------

    def _append_and_project(self, drafts: Sequence[EventDraft], ts: int):
        events = self.log.append_batch(drafts, ts)
        for event in events:
            apply_event(self.state, event)
        return events

    def _next_ts(self) -> int:
        return self.state.op_counter + 1

    def _actor(self, actor_id: str) -> Actor:
        actor = self.state.actors.get(actor_id)
        if actor is None:
            raise UnknownActor(f"no actor '{actor_id}'", actor=actor_id)
        return actor

    def _cr(self, cr_id: str) -> ChangeRequest:
        cr = self.state.change_requests.get(cr_id)
        if cr is None:
            raise UnknownChangeRequest(f"no change request '{cr_id}'", cr_id=cr_id)
        return cr

    def _check_guard(self, event: str, cr: ChangeRequest, actor: Actor) -> None:
        rule = rule_for(cr.state, event)
        if not guard_allows(rule.guard, actor.role, is_author=(actor.id == cr.author)):
            raise ForbiddenRole(
                f"role {actor.role.value} may not perform '{event}' "
                f"(requires {rule.guard})",
                actor=actor.id,
                role=actor.role.value,
                event=event,
            )

    # -- lifecycle operations ------------------------------------------------------

    def submit_change_request(
        self,
        author: str,
        targets: Sequence[str],
        description: str,
        severity: int,
        origin_site: Optional[str] = None,
    ) -> ChangeRequest:
        actor = self._actor(author)
        site = origin_site or actor.site
        if site != self.state.coordinator.site.id and site not in self.state.replicas:
            raise UnknownSite(f"no site '{site}'", site=site)
        target_set = set(targets)
        if not target_set:
            raise EmptyTargets("a change request needs at least one target requirement")
        missing = sorted(target_set - set(self.state.coordinator_baseline))
        if missing:
            raise UnknownRequirement(
                f"targets not in baseline: {', '.join(missing)}", requirement_ids=missing
            )
        if not isinstance(severity, int) or not 1 <= severity <= 5:
            raise InvalidSeverity(f"severity must be an integer in 1..5, got {severity!r}")
        cr_id = f"CR-{self.state.next_cr_number:04d}"
        ts = self._next_ts()
        self._append_and_project(
            [
                EventDraft(
                    kind="cr.submitted",
                    actor=author,
                    cr_id=cr_id,
                    payload={
                        "author": author,
                        "origin_site": site,
                        "targets": sorted(target_set),
                        "description": description,
                        "severity": severity,
                    },
                )
            ],
            ts,
        )
        return self._cr(cr_id)

    def formulate_change(
        self,
        cr_id: str,
        deltas: Sequence[RequirementDelta],
        goals: Sequence[str],
        measurements: Sequence[str],
        actor_id: str,
    ) -> ChangeRequest:
        cr = self._cr(cr_id)
        rule_for(cr.state, "formulate")  # state gate before anything else
        actor = self._actor(actor_id)
        self._check_guard("formulate", cr, actor)
        if not deltas:
            raise InconsistentDelta("formulation needs at least one delta")
        for delta in deltas:
            delta.validate()
            if delta.op in (DeltaOp.MODIFY, DeltaOp.DEPRECATE) and (
                delta.requirement_id not in cr.targets
            ):
                raise InconsistentDelta(
                    f"{delta.op.value} {delta.requirement_id} is outside the declared targets",
                    requirement_id=delta.requirement_id,
                )
        ts = self._next_ts()
        self._append_and_project(
            [
                EventDraft(
                    kind="cr.formulated",
                    actor=actor_id,
                    cr_id=cr_id,
                    payload={
                        "deltas": [d.to_dict() for d in deltas],
                        "goals": list(goals),
                        "measurements": list(measurements),
                    },
                ),
                EventDraft(kind="cr.pm_review_entered", actor=SYSTEM_ACTOR, cr_id=cr_id, payload={}),
            ],
            ts,
        )
        return cr

    def pm_triage(
        self, cr_id: str, decision: str, pm: str, rationale: str = ""
    ) -> Tuple[ChangeRequest, Optional[dict]]:
        """Returns (cr, validation_error).  On acceptance the CRP validation
        runs immediately; if it fails, the request parks in Validating and
        the failure envelope comes back to the caller."""
        cr = self._cr(cr_id)
        rule_for(cr.state, "triage_accept")  # state gate; both outcomes share it
        actor = self._actor(pm)
        if decision not in ("Accept", "Reject"):
            raise MalformedBody(f"triage decision must be Accept or Reject, got {decision!r}")
        event = "triage_accept" if decision == "Accept" else "triage_reject"
        self._check_guard(event, cr, actor)
        ts = self._next_ts()
        self._append_and_project(
            [
                EventDraft(
                    kind="cr.pm_triaged",
                    actor=pm,
                    cr_id=cr_id,
                    payload={"decision": decision, "rationale": rationale},
                )
            ],
            ts,
        )
        validation_error = None
        if decision == "Accept":
            try:
                self.validate_and_generate_form(cr_id)
            except ValidationFailed as exc:
                validation_error = exc.envelope()
        return cr, validation_error

    def validate_and_generate_form(self, cr_id: str) -> ChangeRequest:
        """CRP step: re-checks every delta against the live coordinator
        baseline, computes the preliminary impact, and issues the form."""
        cr = self._cr(cr_id)
        rule_for(cr.state, "generate_form")  # state gate: must be Validating
        failures = []
        scratch = self.state.coordinator_baseline
        for index, delta in enumerate(cr.deltas):
            try:
                scratch = apply_delta(scratch, delta)
            except Exception as exc:
                failures.append(
                    {"index": index, "delta": delta.to_dict(), "reason": str(exc)}
                )
        if failures:
            raise ValidationFailed(
                f"{len(failures)} delta(s) failed validation", failures=failures
            )
        impact = self._analyze_impact(cr)
        conflicts = self._conflicts_for(cr, impact)
        author = self.state.actors[cr.author]
        score = priority_score(
            cr.severity, author.stakeholder_weight, impact.total_cost, self.state.params
        )
        ts = self._next_ts()
        form = {
            "cr_id": cr.id,
            "affected": dict(sorted(impact.affected.items())),
            "preliminary_cost": impact.total_cost,
            "conflicts": conflicts,
            "priority_score": score,
            "generated_at": ts,
        }
        self._append_and_project(
            [
                EventDraft(
                    kind="cr.validated",
                    actor=SYSTEM_ACTOR,
                    cr_id=cr_id,
                    payload={"form": form, "impact": impact.to_dict()},
                ),
                EventDraft(
                    kind="cr.ccb_review_entered", actor=SYSTEM_ACTOR, cr_id=cr_id, payload={}
                ),
            ],
            ts,
        )
        return cr

    def ccb_cast_vote(
        self, cr_id: str, member: str, decision: str, rationale: str = ""
    ) -> Dict[str, int]:
        cr = self._cr(cr_id)
        rule_for(cr.state, "vote")  # state gate
        actor = self._actor(member)
        self._check_guard("vote", cr, actor)
        try:
            vote_decision = VoteDecision(decision)
        except ValueError:
            raise MalformedBody(
                f"vote decision must be Approve, Reject, or Abstain, got {decision!r}"
            ) from None
        ts = self._next_ts()
        self._append_and_project(
            [
                EventDraft(
                    kind="cr.vote_cast",
                    actor=member,
                    cr_id=cr_id,
                    payload={
                        "member": member,
                        "decision": vote_decision.value,
                        "rationale": rationale,
                    },
                )
            ],
            ts,
        )
        return self.vote_tally(cr_id)

    def vote_tally(self, cr_id: str) -> Dict[str, int]:
        cr = self._cr(cr_id)
        return {
            "votes": len(cr.votes),
            "approvals": sum(1 for v in cr.votes.values() if v.decision is VoteDecision.APPROVE),
            "rejections": sum(1 for v in cr.votes.values() if v.decision is VoteDecision.REJECT),
            "abstentions": sum(1 for v in cr.votes.values() if v.decision is VoteDecision.ABSTAIN),
        }

    def ccb_tally(self, cr_id: str, actor_id: str, quorum: Optional[int] = None) -> ChangeRequest:
        cr = self._cr(cr_id)
        rule_for(cr.state, "tally_approve")  # state gate; same row guards both outcomes
        actor = self._actor(actor_id)
        self._check_guard("tally_approve", cr, actor)
        if not cr.votes:
            raise NoVotes(f"no votes cast on {cr_id}")
        effective = quorum if quorum is not None else self.state.quorum
        ccb_size = sum(1 for a in self.state.actors.values() if a.role is Role.CCB_MEMBER)
        if effective < 1 or effective > ccb_size:
            raise QuorumUnreachable(
                f"quorum {effective} unreachable with {ccb_size} CCB member(s)",
                quorum=effective,
                ccb_size=ccb_size,
            )
        decision = tally_decision(cr.votes, effective)
        ts = self._next_ts()
        self._append_and_project(
            [
                EventDraft(
                    kind="cr.tallied",
                    actor=actor_id,
                    cr_id=cr_id,
                    payload={"decision": decision.to_dict()},
                )
            ],
            ts,
        )
        return cr

    def begin_implementation(self, cr_id: str, actor_id: str) -> ChangeRequest:
        cr = self._cr(cr_id)
        rule_for(cr.state, "finalize_impact")  # state gate
        actor = self._actor(actor_id)
        self._check_guard("finalize_impact", cr, actor)
        if not cr.deltas:
            raise IllegalTransition(
                f"{cr_id} reached Approved with no deltas (invariant breach)", cr_id=cr_id
            )
        impact = self._analyze_impact(cr)
        preview = self._preview_change_set(cr)
        ts = self._next_ts()
        self._append_and_project(
            [
                EventDraft(
                    kind="cr.impact_finalized",
                    actor=actor_id,
                    cr_id=cr_id,
                    payload={"impact": impact.to_dict()},
                ),
                EventDraft(
                    kind="cr.implementation_started",
                    actor=SYSTEM_ACTOR,
                    cr_id=cr_id,
                    payload={"changeset": preview},
                ),
            ],
            ts,
        )
        self._dispatch_change_set(cr, ts)
        self._sweep(ts)
        return cr

    def close_after_verification(self, cr_id: str) -> ChangeRequest:
        cr = self._cr(cr_id)
        if cr.state not in (CrState.IMPLEMENTING, CrState.VERIFYING):
            raise IllegalTransition(
                f"cannot close {cr_id} from {cr.state.value}",
                state=cr.state.value,
                event="close",
            )
        status = self._verification(cr)
        if not status.complete:
            raise VerificationIncomplete(
                f"{cr_id} awaiting acknowledgment from: "
                f"{', '.join(status.missing_sites) or 'divergent site(s)'}",
                missing=status.missing_sites,
                hashes_match=status.hashes_match,
            )
        ts = self._next_ts()
        self._close_cr(cr, ts)
        return cr

    def tick(self, count: int = 1) -> dict:
        if count < 1:
            raise MalformedBody(f"tick count must be >= 1, got {count!r}")
        delivered = 0
        for _ in range(count):
            ts = self._next_ts()
            trace_before = len(self.state.harness.trace)
            self._append_and_project(
                [EventDraft(kind="harness.ticked", actor=SYSTEM_ACTOR, payload={})], ts
            )
            delivered += sum(
                1
                for record in self.state.harness.trace[trace_before:]
                if record["event"] == "deliver"
            )
            self._sweep(ts)
        return {
            "ticks": count,
            "delivered": delivered,
            "clock": self.state.harness.clock,
            "in_flight": len(self.state.harness.in_flight),
        }

    # -- automatic after-effects -----------------------------------------------------

    def _dispatch_change_set(self, cr: ChangeRequest, ts: int) -> None:
        """Propagates the freshly built change set, unless the conflict gate
        holds it behind earlier unverified conflicting change sets."""
        seq = cr.changeset_seq
        blocked_on = []
        for other_seq in sorted(self.state.coordinator.change_sets):
            if other_seq == seq:
                continue
            if self._cs_complete(other_seq):
                continue
            other_cr = self.state.change_requests[
                self.state.coordinator.change_sets[other_seq].cr_id
            ]
            if self._crs_conflict(cr, other_cr):
                blocked_on.append(other_seq)
        if blocked_on:
            self._append_and_project(
                [
                    EventDraft(
                        kind="changeset.deferred",
                        actor=SYSTEM_ACTOR,
                        cr_id=cr.id,
                        payload={"seq": seq, "blocked_on": blocked_on},
                    )
                ],
                ts,
            )
        else:
            self._append_and_project(
                [
                    EventDraft(
                        kind="changeset.propagated",
                        actor=SYSTEM_ACTOR,
                        cr_id=cr.id,
                        payload={"seq": seq},
                    )
                ],
                ts,
            )

    def _sweep(self, ts: int) -> None:
        """Close verified change requests, release unblocked deferrals, and
        retransmit unacknowledged change sets on the retry cadence."""
        for cr_id in sorted(self.state.change_requests):
            cr = self.state.change_requests[cr_id]
            if cr.state in (CrState.IMPLEMENTING, CrState.VERIFYING) and cr.changeset_seq:
                if self._cs_complete(cr.changeset_seq):
                    self._close_cr(cr, ts)

        for entry in list(self.state.deferred):
            if all(self._cs_complete(b) for b in entry["blocked_on"]):
                cs = self.state.coordinator.change_sets[entry["seq"]]
                self._append_and_project(
                    [
                        EventDraft(
                            kind="changeset.released",
                            actor=SYSTEM_ACTOR,
                            cr_id=cs.cr_id,
                            payload={"seq": entry["seq"]},
                        )
                    ],
                    ts,
                )

        clock = self.state.harness.clock
        if clock > 0 and clock % self.state.retry_interval == 0:
            deferred_seqs = {d["seq"] for d in self.state.deferred}
            for seq in sorted(self.state.coordinator.change_sets):
                if seq in deferred_seqs or self._cs_complete(seq):
                    continue
                unacked = self.state.coordinator.unacked_sites(seq, self.state.remote_site_ids)
                if unacked:
                    cs = self.state.coordinator.change_sets[seq]
                    self._append_and_project(
                        [
                            EventDraft(
                                kind="changeset.retransmitted",
                                actor=SYSTEM_ACTOR,
                                cr_id=cs.cr_id,
                                payload={"seq": seq, "sites": unacked},
                            )
                        ],
                        ts,
                    )

    def _close_cr(self, cr: ChangeRequest, ts: int) -> None:
        drafts = []
        if cr.state is CrState.IMPLEMENTING:
            drafts.append(
                EventDraft(kind="cr.verifying_entered", actor=SYSTEM_ACTOR, cr_id=cr.id, payload={})
            )
        drafts.append(EventDraft(kind="cr.closed", actor=SYSTEM_ACTOR, cr_id=cr.id, payload={}))
        self._append_and_project(drafts, ts)

    # -- analysis helpers ---------------------------------------------------------

    def _analyze_impact(self, cr: ChangeRequest) -> ImpactAnalysis:
        graph = self.state.graph()
        affected = impact_set(graph, cr.targets)
        cost = estimate_cost(affected, self.state.coordinator_baseline, self.state.params)
        days = schedule_impact(cost, self.state.all_sites())
        return ImpactAnalysis(affected=affected, total_cost=cost, schedule_days=days)

    def _conflicts_for(self, cr: ChangeRequest, impact: ImpactAnalysis) -> List[str]:
        pending = [(cr.id, cr.targets, impact.affected)]
        for other in self.state.change_requests.values():
            if other.id == cr.id or other.state not in PIPELINE_STATES or other.form is None:
                continue
            pending.append((other.id, other.targets, other.form.affected))
        conflicts = detect_conflicts(pending, self.state.graph())
        involved = set()
        for c in conflicts:
            if cr.id in (c.a, c.b):
                involved.add(c.b if c.a == cr.id else c.a)
        return sorted(involved)

    def _crs_conflict(self, a: ChangeRequest, b: ChangeRequest) -> bool:
        impact_a = a.final_impact or a.preliminary_impact
        impact_b = b.final_impact or b.preliminary_impact
        pending = [
            (a.id, a.targets, impact_a.affected if impact_a else {t: 0 for t in a.targets}),
            (b.id, b.targets, impact_b.affected if impact_b else {t: 0 for t in b.targets}),
        ]
        return bool(detect_conflicts(pending, self.state.graph()))

    def _preview_change_set(self, cr: ChangeRequest) -> dict:
        baseline = self.state.coordinator_baseline
        failures = []
        for index, delta in enumerate(cr.deltas):
            try:
                baseline = apply_delta(baseline, delta)
            except Exception as exc:
                failures.append({"index": index, "delta": delta.to_dict(), "reason": str(exc)})
        if failures:
            raise ValidationFailed(
                f"{len(failures)} delta(s) illegal against the current baseline",
                failures=failures,
            )
        return {
            "seq": self.state.coordinator.next_seq,
            "cr_id": cr.id,
            "deltas": [d.to_dict() for d in cr.deltas],
            "expected_hash": baseline_hash(baseline),
        }

    def _verification(self, cr: ChangeRequest) -> VerificationStatus:
        return self.state.coordinator.snapshot_for(cr.changeset_seq, self.state.remote_site_ids)

    def _cs_complete(self, seq: int) -> bool:
        return self.state.coordinator.snapshot_for(seq, self.state.remote_site_ids).complete

    # -- read-side ---------------------------------------------------------------

    def list_change_requests(self, state_filter: Optional[str] = None) -> List[dict]:
        if state_filter is not None:
            try:
                wanted = CrState(state_filter)
            except ValueError:
                raise MalformedBody(f"unknown state '{state_filter}'") from None
            rows = [
                cr for cr in self.state.change_requests.values() if cr.state is wanted
            ]
        else:
            rows = list(self.state.change_requests.values())
        return [cr.to_dict() for cr in sorted(rows, key=lambda c: c.id)]

    def get_change_request(self, cr_id: str) -> dict:
        return self._cr(cr_id).to_dict()

    def get_impact(self, cr_id: str, phase: str) -> dict:
        cr = self._cr(cr_id)
        if phase == "preliminary":
            impact = cr.preliminary_impact
        elif phase == "final":
            impact = cr.final_impact
        else:
            raise MalformedBody(f"phase must be preliminary or final, got {phase!r}")
        if impact is None:
            raise NotFound(f"no {phase} impact analysis for {cr_id} yet", cr_id=cr_id, phase=phase)
        return {
            "cr_id": cr_id,
            "phase": phase,
            **impact.to_dict(),
            "dot": to_dot(self.state.graph(), impact.affected),
        }

    def sites_board(self) -> List[dict]:
        board = []
        coordinator = self.state.coordinator.site
        board.append(
            {
                "id": coordinator.id,
                "coordinator": True,
                "utc_offset_minutes": coordinator.utc_offset_minutes,
                "daily_capacity": coordinator.daily_capacity,
                "applied_seq": coordinator.applied_seq,
                "baseline_hash": coordinator.baseline_digest(),
                "quarantined": False,
            }
        )
        for sid in sorted(self.state.replicas):
            replica = self.state.replicas[sid]
            board.append(
                {
                    "id": sid,
                    "coordinator": False,
                    "utc_offset_minutes": replica.site.utc_offset_minutes,
                    "daily_capacity": replica.site.daily_capacity,
                    "applied_seq": replica.site.applied_seq,
                    "baseline_hash": replica.site.baseline_digest(),
                    "quarantined": replica.quarantined,
                }
            )
        return board

    def actors_board(self) -> List[dict]:
        return [self.state.actors[a].to_dict() for a in sorted(self.state.actors)]

    def verification_board(self) -> List[dict]:
        rows = []
        for seq in sorted(self.state.coordinator.change_sets):
            status = self.state.coordinator.snapshot_for(seq, self.state.remote_site_ids)
            rows.append({"seq": seq, **status.to_dict()})
        return rows

    def report(self, cr_id: str) -> dict:
        return assessment_report(self.log, cr_id)

    def report_text(self, cr_id: str) -> str:
        return render_report_text(self.report(cr_id))

    def transition_table(self) -> List[dict]:
        return [rule.to_dict() for rule in TRANSITION_TABLE]

    def status_overview(self) -> dict:
        queues: Dict[str, List[str]] = {s.value: [] for s in CrState}
        for cr_id in sorted(self.state.change_requests):
            queues[self.state.change_requests[cr_id].state.value].append(cr_id)
        return {
            "clock": self.state.harness.clock,
            "in_flight": len(self.state.harness.in_flight),
            "deferred": [dict(d) for d in self.state.deferred],
            "queues": queues,
            "sites": self.sites_board(),
            "quorum": self.state.quorum,
        }
