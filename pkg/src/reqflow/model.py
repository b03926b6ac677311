"""Core domain values: requirements, baselines, trace links, actors, sites.

Everything here is a plain value with pure functions over it.  The two
operations the rest of the system leans on are :func:`baseline_hash`
(order-independent digest used for cross-site verification) and
:func:`apply_delta` (the single way a baseline ever changes).

Canonical baseline serialization (bit-exact contract, see docs/FORMATS.md):
each requirement becomes the JSON array
``[id, version, title, text, status, effort]``; the arrays are sorted by
requirement id (code-point order, which equals UTF-8 byte order) and the
whole list is dumped as compact JSON (``separators=(",", ":")``,
``ensure_ascii=False``).  The digest is the lowercase hex SHA-256 of the
UTF-8 encoding of that string.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional

from .errors import (
    DeprecatedRequirement,
    DuplicateRequirement,
    InconsistentDelta,
    MissingRequirement,
)

RequirementId = str
ChangeRequestId = str
SiteId = str
ActorId = str

# Reserved actor id used for automatic lifecycle steps.
SYSTEM_ACTOR: ActorId = "system"


class RequirementStatus(str, Enum):
    PROPOSED = "Proposed"
    BASELINED = "Baselined"
    DEPRECATED = "Deprecated"


class LinkKind(str, Enum):
    DEPENDS_ON = "DependsOn"
    REFINES = "Refines"
    DERIVED_FROM = "DerivedFrom"
    CONFLICTS = "Conflicts"


class Role(str, Enum):
    STAKEHOLDER = "Stakeholder"
    CHANGE_REQUEST_MANAGER = "ChangeRequestManager"
    PROJECT_MANAGER = "ProjectManager"
    CCB_MEMBER = "CcbMember"
    SITE_LEAD = "SiteLead"
    QA_MANAGER = "QaManager"


class DeltaOp(str, Enum):
    ADD = "Add"
    MODIFY = "Modify"
    DEPRECATE = "Deprecate"


def canonical_json(value) -> str:
    """Compact JSON with sorted keys; the one serialization used for hashing."""
    return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def sha256_hex(data: str) -> str:
    return hashlib.sha256(data.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class Requirement:
    id: RequirementId
    title: str
    text: str
    effort: float  # person-hours, > 0
    owner_site: SiteId
    version: int = 1
    status: RequirementStatus = RequirementStatus.BASELINED

    def __post_init__(self):
        if not self.id:
            raise ValueError("requirement id must be nonempty")
        if self.version < 1:
            raise ValueError(f"requirement {self.id}: version must be >= 1")
        if not self.effort > 0:
            raise ValueError(f"requirement {self.id}: effort must be > 0")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "title": self.title,
            "text": self.text,
            "effort": self.effort,
            "owner_site": self.owner_site,
            "version": self.version,
            "status": self.status.value,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Requirement":
        return cls(
            id=d["id"],
            title=d["title"],
            text=d["text"],
            effort=d["effort"],
            owner_site=d["owner_site"],
            version=d["version"],
            status=RequirementStatus(d["status"]),
        )


@dataclass(frozen=True)
class TraceLink:
    source: RequirementId
    target: RequirementId
    kind: LinkKind

    def __post_init__(self):
        if self.source == self.target:
            raise ValueError(f"self-link on {self.source} not allowed")

    def to_dict(self) -> dict:
        return {"from": self.source, "to": self.target, "kind": self.kind.value}

    @classmethod
    def from_dict(cls, d: dict) -> "TraceLink":
        return cls(source=d["from"], target=d["to"], kind=LinkKind(d["kind"]))


@dataclass(frozen=True)
class Actor:
    id: ActorId
    role: Role
    site: SiteId
    stakeholder_weight: float = 0.5

    def __post_init__(self):
        if not self.id:
            raise ValueError("actor id must be nonempty")
        if not 0.0 <= self.stakeholder_weight <= 1.0:
            raise ValueError(f"actor {self.id}: stakeholder_weight must be in [0, 1]")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "role": self.role.value,
            "site": self.site,
            "stakeholder_weight": self.stakeholder_weight,
        }


Baseline = dict  # RequirementId -> Requirement


@dataclass
class Site:
    """A development site holding its own copy of the requirement baseline.

    ``applied_seq`` only moves forward, and ``baseline`` only changes through
    :func:`apply_delta` driven by change sets in sequence order.
    """

    id: SiteId
    utc_offset_minutes: int
    daily_capacity: float  # person-hours per day, > 0
    applied_seq: int = 0
    baseline: Baseline = field(default_factory=dict)

    def __post_init__(self):
        if not -720 <= self.utc_offset_minutes <= 840:
            raise ValueError(f"site {self.id}: utc offset out of range")
        if not self.daily_capacity > 0:
            raise ValueError(f"site {self.id}: daily_capacity must be > 0")

    def baseline_digest(self) -> str:
        return baseline_hash(self.baseline)


@dataclass(frozen=True)
class RequirementDelta:
    op: DeltaOp
    requirement_id: RequirementId
    new_title: Optional[str] = None
    new_text: Optional[str] = None
    new_effort: Optional[float] = None
    owner_site: Optional[SiteId] = None  # required payload for Add

    def validate(self) -> None:
        """Checks payload shape for the op kind; raises InconsistentDelta."""
        if not self.requirement_id:
            raise InconsistentDelta("delta requirement_id must be nonempty")
        if self.op is DeltaOp.ADD:
            missing = [
                name
                for name, value in (
                    ("new_title", self.new_title),
                    ("new_text", self.new_text),
                    ("new_effort", self.new_effort),
                    ("owner_site", self.owner_site),
                )
                if value is None
            ]
            if missing:
                raise InconsistentDelta(
                    f"Add {self.requirement_id} missing payload fields: {', '.join(missing)}",
                    requirement_id=self.requirement_id,
                    missing=missing,
                )
        elif self.op is DeltaOp.MODIFY:
            if self.new_title is None and self.new_text is None and self.new_effort is None:
                raise InconsistentDelta(
                    f"Modify {self.requirement_id} carries no payload fields",
                    requirement_id=self.requirement_id,
                )
        if self.new_effort is not None and not self.new_effort > 0:
            raise InconsistentDelta(
                f"delta on {self.requirement_id}: effort must be > 0",
                requirement_id=self.requirement_id,
            )

    def to_dict(self) -> dict:
        d = {"op": self.op.value, "requirement_id": self.requirement_id}
        if self.new_title is not None:
            d["new_title"] = self.new_title
        if self.new_text is not None:
            d["new_text"] = self.new_text
        if self.new_effort is not None:
            d["new_effort"] = self.new_effort
        if self.owner_site is not None:
            d["owner_site"] = self.owner_site
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RequirementDelta":
        return cls(
            op=DeltaOp(d["op"]),
            requirement_id=d["requirement_id"],
            new_title=d.get("new_title"),
            new_text=d.get("new_text"),
            new_effort=d.get("new_effort"),
            owner_site=d.get("owner_site"),
        )


def baseline_canonical(baseline: Baseline) -> str:
    """The canonical serialization hashed by :func:`baseline_hash`."""
    rows = [
        [r.id, r.version, r.title, r.text, r.status.value, r.effort]
        for r in (baseline[k] for k in sorted(baseline))
    ]
    return json.dumps(rows, separators=(",", ":"), ensure_ascii=False)


def baseline_hash(baseline: Baseline) -> str:
    """Order-independent SHA-256 digest of a baseline's canonical form."""
    return sha256_hex(baseline_canonical(baseline))


# SHA-256 of the canonical form of an empty baseline ("[]"); pinned by a
# golden-value test so cross-site comparison stays bit-stable.
EMPTY_BASELINE_DIGEST = baseline_hash({})


def apply_delta(baseline: Baseline, delta: RequirementDelta) -> Baseline:
    """Returns a new baseline with the delta applied; never mutates the input.

    Add inserts at version 1 (Baselined), Modify bumps the version by exactly
    one and replaces only the supplied payload fields, Deprecate bumps the
    version and marks the record Deprecated.  Modify/Deprecate refuse targets
    that are absent or already Deprecated.
    """
    delta.validate()
    rid = delta.requirement_id
    if delta.op is DeltaOp.ADD:
        if rid in baseline:
            raise DuplicateRequirement(f"requirement {rid} already present", requirement_id=rid)
        updated = dict(baseline)
        updated[rid] = Requirement(
            id=rid,
            title=delta.new_title,
            text=delta.new_text,
            effort=delta.new_effort,
            owner_site=delta.owner_site,
            version=1,
            status=RequirementStatus.BASELINED,
        )
        return updated

    current = baseline.get(rid)
    if current is None:
        raise MissingRequirement(f"requirement {rid} not in baseline", requirement_id=rid)
    if current.status is RequirementStatus.DEPRECATED:
        raise DeprecatedRequirement(
            f"requirement {rid} is deprecated and cannot change", requirement_id=rid
        )

    updated = dict(baseline)
    if delta.op is DeltaOp.MODIFY:
        updated[rid] = replace(
            current,
            version=current.version + 1,
            title=delta.new_title if delta.new_title is not None else current.title,
            text=delta.new_text if delta.new_text is not None else current.text,
            effort=delta.new_effort if delta.new_effort is not None else current.effort,
        )
    else:  # Deprecate
        updated[rid] = replace(
            current, version=current.version + 1, status=RequirementStatus.DEPRECATED
        )
    return updated
