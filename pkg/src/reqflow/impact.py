"""Traceability-graph analysis: impact sets, cost, schedule, priority, conflicts.

Impact propagates along ``DependsOn``/``Refines``/``DerivedFrom`` edges in
reverse: changing X affects everything that depends on, refines, or derives
from X.  ``Conflicts`` edges express mutual exclusion between requirements
and never propagate impact.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Sequence, Set, Tuple

from .errors import MissingRequirement, MissingScore, NoSites, UnknownRequirement
from .model import (
    Baseline,
    ChangeRequestId,
    LinkKind,
    RequirementId,
    Site,
    TraceLink,
)

IMPACT_KINDS = (LinkKind.DEPENDS_ON, LinkKind.REFINES, LinkKind.DERIVED_FROM)


@dataclass
class TraceGraph:
    nodes: Set[RequirementId] = field(default_factory=set)
    edges: List[TraceLink] = field(default_factory=list)

    def __post_init__(self):
        seen = set()
        for e in self.edges:
            if e.source not in self.nodes or e.target not in self.nodes:
                raise ValueError(f"edge {e.source}->{e.target} has endpoint outside nodes")
            key = (e.source, e.target, e.kind)
            if key in seen:
                raise ValueError(f"duplicate edge {key}")
            seen.add(key)

    def reverse_adjacency(self) -> Dict[RequirementId, List[RequirementId]]:
        """target -> [sources] over impact-propagating edge kinds."""
        rev: Dict[RequirementId, List[RequirementId]] = {}
        for e in self.edges:
            if e.kind in IMPACT_KINDS:
                rev.setdefault(e.target, []).append(e.source)
        return rev


@dataclass(frozen=True)
class CostParams:
    gamma: float = 0.5  # depth decay in [0, 1]
    w_sev: float = 2.0
    w_stake: float = 1.0
    w_cost: float = 0.1

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must be in [0, 1]")
        for name in ("w_sev", "w_stake", "w_cost"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    def to_dict(self) -> dict:
        return {
            "gamma": self.gamma,
            "w_sev": self.w_sev,
            "w_stake": self.w_stake,
            "w_cost": self.w_cost,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CostParams":
        return cls(**d)


@dataclass(frozen=True)
class ImpactAnalysis:
    affected: Mapping[RequirementId, int]  # id -> min hop depth, targets at 0
    total_cost: float
    schedule_days: int

    def to_dict(self) -> dict:
        return {
            "affected": dict(sorted(self.affected.items())),
            "total_cost": self.total_cost,
            "schedule_days": self.schedule_days,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ImpactAnalysis":
        return cls(
            affected={k: int(v) for k, v in d["affected"].items()},
            total_cost=d["total_cost"],
            schedule_days=d["schedule_days"],
        )


@dataclass(frozen=True)
class Conflict:
    a: ChangeRequestId  # normalized: a < b
    b: ChangeRequestId
    overlap: frozenset
    kind: str  # "OverlappingImpact" | "ExplicitConflictLink"

    def to_dict(self) -> dict:
        return {"a": self.a, "b": self.b, "overlap": sorted(self.overlap), "kind": self.kind}


def impact_set(
    graph: TraceGraph, targets: Iterable[RequirementId]
) -> Dict[RequirementId, int]:
    """Breadth-first closure of the targets over reverse impact edges.

    Returns every affected requirement with its minimum hop distance from
    any target (targets themselves at depth 0).  Cycles terminate through
    the visited set.
    """
    target_set = set(targets)
    unknown = sorted(target_set - graph.nodes)
    if unknown:
        raise UnknownRequirement(
            f"targets not in graph: {', '.join(unknown)}", requirement_ids=unknown
        )
    rev = graph.reverse_adjacency()
    depths: Dict[RequirementId, int] = {t: 0 for t in target_set}
    queue = deque(sorted(target_set))
    while queue:
        current = queue.popleft()
        for dependant in rev.get(current, ()):
            if dependant not in depths:
                depths[dependant] = depths[current] + 1
                queue.append(dependant)
    return depths


def estimate_cost(
    impact: Mapping[RequirementId, int], baseline: Baseline, params: CostParams
) -> float:
    """Depth-decayed effort sum: sum of effort(r) * gamma^depth(r).

    gamma^0 is 1 even for gamma = 0, so gamma = 0 degenerates to the cost of
    the direct targets alone.
    """
    total = 0.0
    for rid in sorted(impact):
        req = baseline.get(rid)
        if req is None:
            raise MissingRequirement(f"impacted requirement {rid} not in baseline", requirement_id=rid)
        depth = impact[rid]
        weight = 1.0 if depth == 0 else params.gamma**depth
        total += req.effort * weight
    return total


def schedule_impact(total_cost: float, sites: Sequence[Site]) -> int:
    """Whole days to absorb the cost across the sites' combined daily capacity."""
    if not sites:
        raise NoSites("at least one site required")
    if total_cost < 0:
        raise ValueError("total_cost must be >= 0")
    if total_cost == 0:
        return 0
    capacity = sum(s.daily_capacity for s in sites)
    return math.ceil(total_cost / capacity)


def priority_score(
    severity: int, stakeholder_weight: float, preliminary_cost: float, params: CostParams
) -> float:
    """Linear triage score: higher severity and weight up, higher cost down."""
    return (
        params.w_sev * severity
        + params.w_stake * stakeholder_weight
        - params.w_cost * preliminary_cost
    )


def rank_by_priority(scores: Mapping[ChangeRequestId, float]) -> List[ChangeRequestId]:
    """Descending score; ties broken ascending by change-request id."""
    return sorted(scores, key=lambda cr_id: (-scores[cr_id], cr_id))


def detect_conflicts(
    pending: Sequence[Tuple[ChangeRequestId, Set[RequirementId], Mapping[RequirementId, int]]],
    graph: TraceGraph,
) -> List[Conflict]:
    """Pairwise conflicts among pending changes.

    ``pending`` holds (cr_id, targets, affected-map) triples.  Two kinds:
    OverlappingImpact when affected sets intersect, ExplicitConflictLink when
    a Conflicts edge joins the two target sets in either direction.  One
    Conflict per unordered pair per kind, ids normalized so a < b; the output
    order is deterministic and independent of the input order.
    """
    conflict_edges = [
        (e.source, e.target) for e in graph.edges if e.kind is LinkKind.CONFLICTS
    ]
    found: Dict[Tuple[str, str, str], Conflict] = {}
    for i in range(len(pending)):
        for j in range(i + 1, len(pending)):
            (id_x, targets_x, affected_x) = pending[i]
            (id_y, targets_y, affected_y) = pending[j]
            if id_x == id_y:
                continue
            a, b = sorted((id_x, id_y))
            if a == id_y:
                targets_x, targets_y = targets_y, targets_x
                affected_x, affected_y = affected_y, affected_x

            overlap = set(affected_x) & set(affected_y)
            if overlap:
                found[(a, b, "OverlappingImpact")] = Conflict(
                    a=a, b=b, overlap=frozenset(overlap), kind="OverlappingImpact"
                )

            linked = set()
            for src, dst in conflict_edges:
                if (src in targets_x and dst in targets_y) or (
                    src in targets_y and dst in targets_x
                ):
                    linked.update((src, dst))
            if linked:
                found[(a, b, "ExplicitConflictLink")] = Conflict(
                    a=a, b=b, overlap=frozenset(linked), kind="ExplicitConflictLink"
                )
    return [found[k] for k in sorted(found)]


def resolve_conflict_order(
    conflicts: Sequence[Conflict], scores: Mapping[ChangeRequestId, float]
) -> List[ChangeRequestId]:
    """Serialization order for conflicting changes: best score first, id tie-break."""
    involved = set()
    for c in conflicts:
        involved.update((c.a, c.b))
    missing = sorted(cr_id for cr_id in involved if cr_id not in scores)
    if missing:
        raise MissingScore(f"no score for: {', '.join(missing)}", change_request_ids=missing)
    return rank_by_priority({cr_id: scores[cr_id] for cr_id in involved})


def to_dot(graph: TraceGraph, impact: Mapping[RequirementId, int] | None = None) -> str:
    """Deterministic DOT rendering; impacted nodes annotated with their depth."""
    impact = impact or {}
    lines = ["digraph trace {", "  rankdir=LR;"]
    for node in sorted(graph.nodes):
        if node in impact:
            depth = impact[node]
            lines.append(
                f'  "{node}" [label="{node} (d{depth})",style=filled,'
                f'fillcolor={"tomato" if depth == 0 else "lightyellow"}];'
            )
        else:
            lines.append(f'  "{node}";')
    for e in sorted(graph.edges, key=lambda e: (e.source, e.target, e.kind.value)):
        style = ',style=dashed,color=red' if e.kind is LinkKind.CONFLICTS else ""
        lines.append(f'  "{e.source}" -> "{e.target}" [label="{e.kind.value}"{style}];')
    lines.append("}")
    return "\n".join(lines) + "\n"
