"""Hash-chained append-only audit log, replay, and assessment reports.

Log file format (bit-exact; see docs/FORMATS.md): one event per line, each
line the compact sorted-key JSON object
``{"actor","cr_id","digest","kind","payload","prev_digest","seq","ts"}``
encoded UTF-8, newline-terminated.  ``digest`` is the lowercase hex SHA-256
of the canonical JSON array ``[seq, ts, actor, cr_id, kind, payload-json,
prev_digest]`` where payload-json is the payload's own canonical dump.  The
genesis event's ``prev_digest`` is 64 zeros.

Verification re-parses every line, demands byte-exact canonical form,
dense sequence numbers, an unbroken digest chain, and a digest that
recomputes — which detects any single-bit mutation of the file.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Iterable, List, Optional

from .errors import ChainBroken, StorageFailure, UnknownChangeRequest
from .model import canonical_json, sha256_hex

GENESIS_PREV_DIGEST = "0" * 64

_FIELDS = ("actor", "cr_id", "digest", "kind", "payload", "prev_digest", "seq", "ts")


@dataclass(frozen=True)
class AuditEvent:
    seq: int
    ts: int  # logical timestamp (operation counter), never wall clock
    actor: str
    cr_id: Optional[str]
    kind: str
    payload: dict
    prev_digest: str
    digest: str

    def to_dict(self) -> dict:
        return {
            "actor": self.actor,
            "cr_id": self.cr_id,
            "digest": self.digest,
            "kind": self.kind,
            "payload": self.payload,
            "prev_digest": self.prev_digest,
            "seq": self.seq,
            "ts": self.ts,
        }

    def to_line(self) -> str:
        return canonical_json(self.to_dict()) + "\n"


def event_digest(
    seq: int, ts: int, actor: str, cr_id: Optional[str], kind: str, payload: dict, prev_digest: str
) -> str:
    material = canonical_json([seq, ts, actor, cr_id, kind, canonical_json(payload), prev_digest])
    return sha256_hex(material)


@dataclass(frozen=True)
class EventDraft:
    kind: str
    actor: str
    payload: dict
    cr_id: Optional[str] = None


class EventLog:
    """Append-only event store; file-backed, or in-memory when path is None.

    Appends are durable before they are visible: the serialized lines are
    written and flushed first, then the in-memory view extends.  A failed
    write leaves the log unchanged and raises StorageFailure.
    """

    def __init__(self, path: Optional[str] = None):
        self.path = path
        self._events: List[AuditEvent] = []
        self._fh = None
        if path is not None:
            existing = b""
            if os.path.exists(path):
                with open(path, "rb") as fh:
                    existing = fh.read()
            if existing:
                self._events = verify_lines(existing)
            self._fh = open(path, "ab")

    # -- reading ---------------------------------------------------------------

    def __len__(self) -> int:
        return len(self._events)

    @property
    def events(self) -> Tuple[AuditEvent, ...]:
        return tuple(self._events)

    @property
    def head_digest(self) -> str:
        return self._events[-1].digest if self._events else GENESIS_PREV_DIGEST

    def events_for(self, cr_id: str) -> List[AuditEvent]:
        return [e for e in self._events if e.cr_id == cr_id]

    # -- writing ---------------------------------------------------------------

    def append(self, draft: EventDraft, ts: int) -> AuditEvent:
        return self.append_batch([draft], ts)[0]

    def append_batch(self, drafts: Iterable[EventDraft], ts: int) -> List[AuditEvent]:
        """Chains, serializes, and durably writes a batch as one unit."""
        prev = self.head_digest
        seq = len(self._events) + 1
        events: List[AuditEvent] = []
        for draft in drafts:
            digest = event_digest(seq, ts, draft.actor, draft.cr_id, draft.kind, draft.payload, prev)
            events.append(
                AuditEvent(
                    seq=seq,
                    ts=ts,
                    actor=draft.actor,
                    cr_id=draft.cr_id,
                    kind=draft.kind,
                    payload=draft.payload,
                    prev_digest=prev,
                    digest=digest,
                )
            )
            prev = digest
            seq += 1
        if not events:
            return []
        blob = "".join(e.to_line() for e in events).encode("utf-8")
        if self._fh is not None:
            try:
                self._fh.write(blob)
                self._fh.flush()
                os.fsync(self._fh.fileno())
            except OSError as exc:
                raise StorageFailure(f"append failed: {exc}") from exc
        self._events.extend(events)
        return events

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    # -- integrity ---------------------------------------------------------------

    def verify(self) -> int:
        """Re-verifies the in-memory chain; returns the event count."""
        serialized = "".join(e.to_line() for e in self._events).encode("utf-8")
        return len(verify_lines(serialized))

    def serialized(self) -> bytes:
        return "".join(e.to_line() for e in self._events).encode("utf-8")


def verify_lines(blob: bytes) -> List[AuditEvent]:
    """Parses and verifies raw log bytes; raises ChainBroken at the first bad seq."""
    import json

    events: List[AuditEvent] = []
    prev = GENESIS_PREV_DIGEST
    if blob and not blob.endswith(b"\n"):
        raise ChainBroken(
            "log does not end with a newline (truncated write?)", seq=len(blob.split(b"\n"))
        )
    lines = blob.split(b"\n")[:-1] if blob else []
    for position, raw in enumerate(lines, start=1):
        try:
            text = raw.decode("utf-8")
            record = json.loads(text)
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ChainBroken(f"event {position}: unparseable line ({exc})", seq=position) from exc
        if not isinstance(record, dict) or set(record) != set(_FIELDS):
            raise ChainBroken(f"event {position}: wrong field set", seq=position)
        if canonical_json(record) != text:
            raise ChainBroken(f"event {position}: non-canonical serialization", seq=position)
        if record["seq"] != position:
            raise ChainBroken(
                f"event {position}: seq {record['seq']} breaks dense numbering", seq=position
            )
        if record["prev_digest"] != prev:
            raise ChainBroken(f"event {position}: chain link mismatch", seq=position)
        recomputed = event_digest(
            record["seq"],
            record["ts"],
            record["actor"],
            record["cr_id"],
            record["kind"],
            record["payload"],
            record["prev_digest"],
        )
        if recomputed != record["digest"]:
            raise ChainBroken(f"event {position}: digest mismatch", seq=position)
        events.append(
            AuditEvent(
                seq=record["seq"],
                ts=record["ts"],
                actor=record["actor"],
                cr_id=record["cr_id"],
                kind=record["kind"],
                payload=record["payload"],
                prev_digest=record["prev_digest"],
                digest=record["digest"],
            )
        )
        prev = record["digest"]
    return events


def replay(log: EventLog):
    """Rebuilds the full system state from a verified log.

    The same projection code drives live execution, so the result is
    field-for-field identical to the state at the moment of the last append.
    """
    from .state import SystemState, apply_event

    verify_lines(log.serialized())
    state = SystemState()
    for event in log.events:
        apply_event(state, event)
    return state


def assessment_report(log: EventLog, cr_id: str) -> dict:
    """The per-change summary document, derived purely from the audit log."""
    state = replay(log)
    cr = state.change_requests.get(cr_id)
    if cr is None:
        raise UnknownChangeRequest(f"no change request {cr_id} in the log", cr_id=cr_id)
    verification = None
    if cr.changeset_seq is not None:
        verification = state.coordinator.snapshot_for(
            cr.changeset_seq, state.remote_site_ids
        ).to_dict()
    report = {
        "cr_id": cr.id,
        "author": cr.author,
        "origin_site": cr.origin_site,
        "description": cr.description,
        "severity": cr.severity,
        "targets": sorted(cr.targets),
        "goals": list(cr.goals),
        "measurements": list(cr.measurements),
        "timeline": [h.to_dict() for h in cr.history],
        "pm_decision": (
            {"decision": cr.pm_decision, "rationale": cr.pm_rationale}
            if cr.pm_decision
            else None
        ),
        "form": cr.form.to_dict() if cr.form else None,
        "votes": [cr.votes[m].to_dict() for m in sorted(cr.votes)],
        "ccb_decision": cr.decision.to_dict() if cr.decision else None,
        "preliminary_impact": (
            cr.preliminary_impact.to_dict() if cr.preliminary_impact else None
        ),
        "final_impact": cr.final_impact.to_dict() if cr.final_impact else None,
        "changeset_seq": cr.changeset_seq,
        "verification": verification,
        "outcome": cr.state.value,
    }
    return report


def render_report_text(report: dict) -> str:
    """Human-readable rendering; deterministic for a given report."""
    lines = [
        f"Assessment report for {report['cr_id']}",
        f"  outcome: {report['outcome']}",
        f"  author: {report['author']} (site {report['origin_site']})",
        f"  severity: {report['severity']}",
        f"  targets: {', '.join(report['targets'])}",
        f"  description: {report['description']}",
    ]
    if report["goals"]:
        lines.append(f"  goals: {'; '.join(report['goals'])}")
    if report["measurements"]:
        lines.append(f"  measurements: {'; '.join(report['measurements'])}")
    lines.append("  timeline:")
    for entry in report["timeline"]:
        lines.append(f"    ts {entry['ts']:>4}  {entry['state']:<16} by {entry['actor']}")
    pm = report["pm_decision"]
    if pm:
        lines.append(f"  PM decision: {pm['decision']} ({pm['rationale'] or 'no rationale'})")
    form = report["form"]
    if form:
        lines.append(
            f"  form: priority {form['priority_score']}, preliminary cost "
            f"{form['preliminary_cost']}, conflicts: {', '.join(form['conflicts']) or 'none'}"
        )
    if report["votes"]:
        lines.append("  votes:")
        for vote in report["votes"]:
            lines.append(
                f"    {vote['member']}: {vote['decision']}"
                + (f" ({vote['rationale']})" if vote["rationale"] else "")
            )
    ccb = report["ccb_decision"]
    if ccb:
        lines.append(
            f"  CCB decision: {ccb['outcome']} "
            f"(approve {ccb['approvals']} / reject {ccb['rejections']} / "
            f"abstain {ccb['abstentions']}, quorum {ccb['quorum']})"
        )
    for phase in ("preliminary_impact", "final_impact"):
        impact = report[phase]
        if impact:
            lines.append(
                f"  {phase.replace('_', ' ')}: cost {impact['total_cost']} ph, "
                f"{impact['schedule_days']} day(s), {len(impact['affected'])} requirement(s)"
            )
    verification = report["verification"]
    if verification:
        lines.append(
            f"  verification: complete={verification['complete']} "
            f"acked={', '.join(verification['acked_sites']) or 'none'}"
            + (
                f" missing={', '.join(verification['missing_sites'])}"
                if verification["missing_sites"]
                else ""
            )
        )
    return "\n".join(lines) + "\n"
