"""Multi-site propagation of approved change sets over a simulated network.

The harness is single-threaded and tick-driven.  Message latency is a pure
function of (seed, message identity, enqueue tick), so identical seeds and
scripts yield byte-identical delivery traces — there is no mutable RNG
state to drift.  Fault rules (drop / duplicate / delay / partition) apply
at delivery time, in declaration order, first applicable rule wins.

Sites apply change sets strictly in sequence order: the next expected seq
applies immediately (and cascades through any buffered successors), future
seqs are buffered, and already-applied seqs are ignored but re-acked with
the identical digest, which makes delivery idempotent and lets the
coordinator fill acknowledgment gaps by retransmitting.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

from .errors import ApplyFailed, HashMismatch, IllegalState, ValidationFailed
from .model import (
    ChangeRequestId,
    RequirementDelta,
    Site,
    SiteId,
    apply_delta,
    baseline_hash,
)


class MessageKind(str, Enum):
    PROPAGATE = "Propagate"
    ACK = "Ack"


class FaultKind(str, Enum):
    DROP = "Drop"
    DUPLICATE = "Duplicate"
    DELAY = "Delay"
    PARTITION = "Partition"


@dataclass(frozen=True)
class ChangeSet:
    seq: int  # coordinator-global, dense, assigned in implementation order
    cr_id: ChangeRequestId
    deltas: Tuple[RequirementDelta, ...]
    expected_hash: str  # coordinator baseline digest after application

    def __post_init__(self):
        if self.seq < 1:
            raise ValueError("change-set seq starts at 1")
        if not self.deltas:
            raise ValueError("change set must carry at least one delta")

    def to_dict(self) -> dict:
        return {
            "seq": self.seq,
            "cr_id": self.cr_id,
            "deltas": [d.to_dict() for d in self.deltas],
            "expected_hash": self.expected_hash,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ChangeSet":
        return cls(
            seq=d["seq"],
            cr_id=d["cr_id"],
            deltas=tuple(RequirementDelta.from_dict(x) for x in d["deltas"]),
            expected_hash=d["expected_hash"],
        )


@dataclass(frozen=True)
class SyncMessage:
    kind: MessageKind
    seq: int
    sender: SiteId
    receiver: SiteId
    payload: Optional[ChangeSet] = None  # Propagate only
    ack_hash: Optional[str] = None  # Ack only
    uid: int = 0  # harness-assigned, unique per enqueued message

    def __post_init__(self):
        if self.kind is MessageKind.PROPAGATE and self.payload is None:
            raise ValueError("Propagate requires a payload")
        if self.kind is MessageKind.ACK and self.ack_hash is None:
            raise ValueError("Ack requires ack_hash")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "seq": self.seq,
            "from": self.sender,
            "to": self.receiver,
            "payload": self.payload.to_dict() if self.payload else None,
            "ack_hash": self.ack_hash,
            "uid": self.uid,
        }


@dataclass
class FaultRule:
    """One declarative fault; ``match`` keys: from, to, seq, msg (kind).

    ``param`` meaning by kind: Drop/Duplicate — how many matching deliveries
    to affect; Delay — ticks to add (once per message); Partition — last
    tick (inclusive) at which messages between the matched pair are lost.
    """

    kind: FaultKind
    match: Dict[str, str]
    param: int
    remaining: int = field(init=False)
    _delayed_uids: Set[int] = field(init=False, default_factory=set)

    def __post_init__(self):
        if self.kind in (FaultKind.DROP, FaultKind.DUPLICATE) and self.param < 1:
            raise ValueError(f"{self.kind.value} rule needs param >= 1")
        if self.kind is FaultKind.DELAY and self.param < 1:
            raise ValueError("Delay rule needs param >= 1 ticks")
        self.remaining = self.param if self.kind in (FaultKind.DROP, FaultKind.DUPLICATE) else -1

    def _match_directional(self, msg: SyncMessage, sender: SiteId, receiver: SiteId) -> bool:
        m = self.match
        if "from" in m and m["from"] != sender:
            return False
        if "to" in m and m["to"] != receiver:
            return False
        if "seq" in m and int(m["seq"]) != msg.seq:
            return False
        if "msg" in m and m["msg"].lower() != msg.kind.value.lower():
            return False
        return True

    def matches(self, msg: SyncMessage) -> bool:
        if self.kind is FaultKind.PARTITION:
            # A partition severs the pair in both directions.
            return self._match_directional(
                msg, msg.sender, msg.receiver
            ) or self._match_directional(msg, msg.receiver, msg.sender)
        return self._match_directional(msg, msg.sender, msg.receiver)

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "match": dict(self.match), "param": self.param}

    @classmethod
    def from_dict(cls, d: dict) -> "FaultRule":
        return cls(kind=FaultKind(d["kind"]), match=dict(d["match"]), param=d["param"])


def parse_fault_script(text: str) -> List[FaultRule]:
    """Parses the one-rule-per-line script format.

    ``<kind> <match> <param>`` where kind is drop|duplicate|delay|partition,
    match is ``*`` or comma-separated ``key=value`` pairs (keys from, to,
    seq, msg), and param is an integer.  ``#`` starts a comment.
    """
    rules = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ValueError(f"fault script line {lineno}: expected '<kind> <match> <param>'")
        kind_s, match_s, param_s = parts
        try:
            kind = FaultKind(kind_s.capitalize())
        except ValueError:
            raise ValueError(f"fault script line {lineno}: unknown kind '{kind_s}'") from None
        match: Dict[str, str] = {}
        if match_s != "*":
            for pair in match_s.split(","):
                if "=" not in pair:
                    raise ValueError(f"fault script line {lineno}: bad match term '{pair}'")
                key, value = pair.split("=", 1)
                if key not in ("from", "to", "seq", "msg"):
                    raise ValueError(f"fault script line {lineno}: unknown match key '{key}'")
                match[key] = value
        rules.append(FaultRule(kind=kind, match=match, param=int(param_s)))
    return rules


class NetworkHarness:
    """Deterministic tick-driven transport with fault injection."""

    def __init__(
        self,
        seed: int = 0,
        base_latency: int = 1,
        jitter: int = 0,
        faults: Optional[Sequence[FaultRule]] = None,
    ):
        if base_latency < 1:
            raise ValueError("base_latency must be >= 1 tick")
        self.seed = seed
        self.base_latency = base_latency
        self.jitter = jitter
        self.faults: List[FaultRule] = list(faults or [])
        self.clock = 0
        self._next_uid = 1
        # (deliver_at_tick, uid, message); insertion order preserved for equal ticks
        self.in_flight: List[Tuple[int, int, SyncMessage]] = []
        self.trace: List[dict] = []

    def latency_for(self, msg: SyncMessage, enqueue_tick: int) -> int:
        if self.jitter <= 0:
            return self.base_latency
        key = f"{self.seed}|{msg.kind.value}|{msg.seq}|{msg.sender}|{msg.receiver}|{enqueue_tick}"
        spread = int(hashlib.sha256(key.encode("utf-8")).hexdigest(), 16) % (self.jitter + 1)
        return self.base_latency + spread

    def enqueue(self, msg: SyncMessage, deliver_at: Optional[int] = None) -> SyncMessage:
        stamped = SyncMessage(
            kind=msg.kind,
            seq=msg.seq,
            sender=msg.sender,
            receiver=msg.receiver,
            payload=msg.payload,
            ack_hash=msg.ack_hash,
            uid=self._next_uid,
        )
        self._next_uid += 1
        due = deliver_at if deliver_at is not None else self.clock + self.latency_for(msg, self.clock)
        if due <= self.clock:
            due = self.clock + 1
        self.in_flight.append((due, stamped.uid, stamped))
        self._trace("enqueue", stamped, deliver_at=due)
        return stamped

    def tick(self) -> List[SyncMessage]:
        """Advances the clock one tick and returns what got delivered."""
        self.clock += 1
        due = [entry for entry in self.in_flight if entry[0] <= self.clock]
        self.in_flight = [entry for entry in self.in_flight if entry[0] > self.clock]
        delivered: List[SyncMessage] = []
        for _, _, msg in due:
            action = self._apply_faults(msg)
            if action == "deliver":
                delivered.append(msg)
                self._trace("deliver", msg)
        return delivered

    def _apply_faults(self, msg: SyncMessage) -> str:
        for rule in self.faults:
            if rule.kind is FaultKind.PARTITION:
                if self.clock <= rule.param and rule.matches(msg):
                    self._trace("partition_drop", msg)
                    return "dropped"
            elif rule.kind is FaultKind.DROP:
                if rule.remaining > 0 and rule.matches(msg):
                    rule.remaining -= 1
                    self._trace("drop", msg)
                    return "dropped"
            elif rule.kind is FaultKind.DUPLICATE:
                if rule.remaining > 0 and rule.matches(msg):
                    rule.remaining -= 1
                    copy_due = self.clock + 1
                    copy = SyncMessage(
                        kind=msg.kind,
                        seq=msg.seq,
                        sender=msg.sender,
                        receiver=msg.receiver,
                        payload=msg.payload,
                        ack_hash=msg.ack_hash,
                        uid=self._next_uid,
                    )
                    self._next_uid += 1
                    self.in_flight.append((copy_due, copy.uid, copy))
                    self._trace("duplicate", msg, deliver_at=copy_due)
                    return "deliver"
            elif rule.kind is FaultKind.DELAY:
                if msg.uid not in rule._delayed_uids and rule.matches(msg):
                    rule._delayed_uids.add(msg.uid)
                    due = self.clock + rule.param
                    self.in_flight.append((due, msg.uid, msg))
                    self._trace("delay", msg, deliver_at=due)
                    return "delayed"
        return "deliver"

    def quiescent(self) -> bool:
        return not self.in_flight

    def _trace(self, event: str, msg: SyncMessage, **extra) -> None:
        record = {"tick": self.clock, "event": event, "msg": msg.to_dict()}
        record.update(extra)
        self.trace.append(record)

    def export_trace(self) -> str:
        """Newline-delimited canonical records, for replay debugging."""
        import json

        return "".join(
            json.dumps(r, sort_keys=True, separators=(",", ":")) + "\n" for r in self.trace
        )

    def snapshot(self) -> dict:
        return {
            "clock": self.clock,
            "in_flight": [
                {"deliver_at": due, "msg": msg.to_dict()} for due, _, msg in sorted(
                    self.in_flight, key=lambda e: (e[0], e[1])
                )
            ],
            "next_uid": self._next_uid,
        }


class ApplyStatus(str, Enum):
    APPLIED = "Applied"
    BUFFERED = "Buffered"
    DUPLICATE_IGNORED = "DuplicateIgnored"
    QUARANTINED = "Quarantined"


@dataclass
class ApplyOutcome:
    status: ApplyStatus
    acks: List[SyncMessage]  # unstamped; caller enqueues them


class SiteReplica:
    """A remote site's applier: ordered application, buffering, idempotent acks."""

    def __init__(self, site: Site, coordinator_id: SiteId):
        self.site = site
        self.coordinator_id = coordinator_id
        self.buffer: Dict[int, ChangeSet] = {}
        self.acked_hashes: Dict[int, str] = {}
        self.quarantined = False
        self.quarantine_reason: Optional[str] = None

    def apply_change_set(self, msg: SyncMessage) -> ApplyOutcome:
        """Processes one Propagate message; see module docstring for the rules.

        Raises ApplyFailed (after quarantining the site) when a delta is
        illegal against the site baseline — the divergence signal.
        """
        if msg.kind is not MessageKind.PROPAGATE:
            raise ValueError("apply_change_set expects a Propagate message")
        if self.quarantined:
            return ApplyOutcome(status=ApplyStatus.QUARANTINED, acks=[])
        cs = msg.payload
        if cs.seq <= self.site.applied_seq:
            known = self.acked_hashes.get(cs.seq, self.site.baseline_digest())
            return ApplyOutcome(
                status=ApplyStatus.DUPLICATE_IGNORED, acks=[self._ack(cs.seq, known)]
            )
        if cs.seq > self.site.applied_seq + 1:
            self.buffer[cs.seq] = cs
            return ApplyOutcome(status=ApplyStatus.BUFFERED, acks=[])

        acks = [self._apply_one(cs)]
        # Cascade through any buffered successors now unblocked.
        while self.site.applied_seq + 1 in self.buffer:
            nxt = self.buffer.pop(self.site.applied_seq + 1)
            acks.append(self._apply_one(nxt))
        return ApplyOutcome(status=ApplyStatus.APPLIED, acks=acks)

    def _apply_one(self, cs: ChangeSet) -> SyncMessage:
        baseline = self.site.baseline
        try:
            for delta in cs.deltas:
                baseline = apply_delta(baseline, delta)
        except Exception as exc:
            self.quarantined = True
            self.quarantine_reason = f"seq {cs.seq}: {exc}"
            raise ApplyFailed(
                f"site {self.site.id} cannot apply change set {cs.seq}: {exc}",
                site=self.site.id,
                seq=cs.seq,
            ) from exc
        self.site.baseline = baseline
        self.site.applied_seq = cs.seq
        digest = self.site.baseline_digest()
        self.acked_hashes[cs.seq] = digest
        return self._ack(cs.seq, digest)

    def _ack(self, seq: int, digest: str) -> SyncMessage:
        return SyncMessage(
            kind=MessageKind.ACK,
            seq=seq,
            sender=self.site.id,
            receiver=self.coordinator_id,
            ack_hash=digest,
        )

    def snapshot(self) -> dict:
        return {
            "id": self.site.id,
            "applied_seq": self.site.applied_seq,
            "baseline_hash": self.site.baseline_digest(),
            "buffered": sorted(self.buffer),
            "acked_hashes": {str(k): v for k, v in sorted(self.acked_hashes.items())},
            "quarantined": self.quarantined,
            "quarantine_reason": self.quarantine_reason,
        }


@dataclass(frozen=True)
class VerificationStatus:
    cr_id: ChangeRequestId
    acked_sites: frozenset
    required_sites: frozenset
    hashes_match: bool
    complete: bool

    @property
    def missing_sites(self) -> List[SiteId]:
        return sorted(self.required_sites - self.acked_sites)

    def to_dict(self) -> dict:
        return {
            "cr_id": self.cr_id,
            "acked_sites": sorted(self.acked_sites),
            "required_sites": sorted(self.required_sites),
            "missing_sites": self.missing_sites,
            "hashes_match": self.hashes_match,
            "complete": self.complete,
        }


def verification_status(
    cr_id: ChangeRequestId,
    acks: Mapping[SiteId, str],
    expected: ChangeSet,
    required_sites: Iterable[SiteId],
) -> VerificationStatus:
    """Complete iff every required site acked the expected seq with the
    expected digest.  A wrong digest raises HashMismatch naming the site.
    """
    required = frozenset(required_sites)
    divergent = sorted(
        site for site in required if site in acks and acks[site] != expected.expected_hash
    )
    if divergent:
        raise HashMismatch(
            f"divergent baseline digest from: {', '.join(divergent)}",
            sites=divergent,
            seq=expected.seq,
        )
    acked = frozenset(site for site in required if site in acks)
    complete = acked == required
    return VerificationStatus(
        cr_id=cr_id,
        acked_sites=acked,
        required_sites=required,
        hashes_match=True,
        complete=complete,
    )


def verification_snapshot(
    cr_id: ChangeRequestId,
    acks: Mapping[SiteId, str],
    expected: ChangeSet,
    required_sites: Iterable[SiteId],
) -> VerificationStatus:
    """Non-raising variant used by sweeps; divergence shows as hashes_match=False."""
    required = frozenset(required_sites)
    matching = frozenset(
        site for site in required if acks.get(site) == expected.expected_hash
    )
    divergent = [s for s in required if s in acks and acks[s] != expected.expected_hash]
    return VerificationStatus(
        cr_id=cr_id,
        acked_sites=matching,
        required_sites=required,
        hashes_match=not divergent,
        complete=(matching == required) and not divergent,
    )


class SyncCoordinator:
    """Assigns the dense change-set sequence and tracks acknowledgments."""

    def __init__(self, coordinator_site: Site):
        self.site = coordinator_site
        self.change_sets: Dict[int, ChangeSet] = {}
        self.acks: Dict[int, Dict[SiteId, str]] = {}
        self._next_seq = 1

    @property
    def next_seq(self) -> int:
        return self._next_seq

    def build_change_set(self, cr, preview: bool = False) -> ChangeSet:
        """Builds the next change set from an Implementing change request.

        Applies the deltas to the coordinator baseline and stamps the
        resulting digest; with ``preview=True`` nothing is committed.
        """
        from .workflow import CrState  # local import keeps module load order simple

        if cr.state is not CrState.IMPLEMENTING:
            raise IllegalState(
                f"change request {cr.id} is {cr.state.value}, not Implementing",
                state=cr.state.value,
            )
        if not cr.deltas:
            raise IllegalState(f"change request {cr.id} has no deltas")
        baseline = self.site.baseline
        failures = []
        for index, delta in enumerate(cr.deltas):
            try:
                baseline = apply_delta(baseline, delta)
            except Exception as exc:
                failures.append({"index": index, "delta": delta.to_dict(), "reason": str(exc)})
        if failures:
            raise ValidationFailed(
                f"{len(failures)} delta(s) illegal against coordinator baseline",
                failures=failures,
            )
        cs = ChangeSet(
            seq=self._next_seq,
            cr_id=cr.id,
            deltas=tuple(cr.deltas),
            expected_hash=baseline_hash(baseline),
        )
        if not preview:
            self.site.baseline = baseline
            self.site.applied_seq = cs.seq
            self.change_sets[cs.seq] = cs
            self.acks.setdefault(cs.seq, {})
            self._next_seq += 1
        return cs

    def propagate(
        self, cs: ChangeSet, sites: Sequence[SiteId], harness: NetworkHarness
    ) -> int:
        """Enqueues one Propagate per remote site; returns the count."""
        if self.site.id in sites:
            raise ValueError("propagation targets must exclude the coordinator")
        for site_id in sites:
            harness.enqueue(
                SyncMessage(
                    kind=MessageKind.PROPAGATE,
                    seq=cs.seq,
                    sender=self.site.id,
                    receiver=site_id,
                    payload=cs,
                )
            )
        return len(sites)

    def register_ack(self, msg: SyncMessage) -> None:
        if msg.kind is not MessageKind.ACK:
            raise ValueError("expected an Ack message")
        if msg.receiver != self.site.id:
            raise ValueError("Ack must target the coordinator")
        self.acks.setdefault(msg.seq, {})[msg.sender] = msg.ack_hash

    def unacked_sites(self, seq: int, required: Iterable[SiteId]) -> List[SiteId]:
        expected = self.change_sets[seq]
        good = {
            site
            for site, digest in self.acks.get(seq, {}).items()
            if digest == expected.expected_hash
        }
        return sorted(set(required) - good)

    def status_for(self, seq: int, required: Iterable[SiteId]) -> VerificationStatus:
        cs = self.change_sets[seq]
        return verification_status(cs.cr_id, self.acks.get(seq, {}), cs, required)

    def snapshot_for(self, seq: int, required: Iterable[SiteId]) -> VerificationStatus:
        cs = self.change_sets[seq]
        return verification_snapshot(cs.cr_id, self.acks.get(seq, {}), cs, required)

    def snapshot(self) -> dict:
        return {
            "next_seq": self._next_seq,
            "change_sets": {str(k): v.to_dict() for k, v in sorted(self.change_sets.items())},
            "acks": {
                str(seq): dict(sorted(by_site.items()))
                for seq, by_site in sorted(self.acks.items())
            },
        }


def route_delivered(
    delivered: Sequence[SyncMessage],
    replicas: Mapping[SiteId, SiteReplica],
    coordinator: SyncCoordinator,
    harness: NetworkHarness,
    on_apply_failed: Optional[Callable[[SiteId, ApplyFailed], None]] = None,
) -> None:
    """Feeds one tick's deliveries to their receivers; acks go back in flight."""
    for msg in delivered:
        if msg.kind is MessageKind.ACK:
            coordinator.register_ack(msg)
            continue
        replica = replicas[msg.receiver]
        try:
            outcome = replica.apply_change_set(msg)
        except ApplyFailed as exc:
            harness._trace("apply_failed", msg, reason=str(exc))
            if on_apply_failed is not None:
                on_apply_failed(msg.receiver, exc)
            continue
        for ack in outcome.acks:
            harness.enqueue(ack)
