"""Deployment configuration: sites, actors, seed baseline, tuning knobs.

The full config snapshot is embedded in the genesis audit event, so a log
replays to the same state with no side reads.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional

from .errors import ConfigError
from .impact import CostParams
from .model import (
    SYSTEM_ACTOR,
    Actor,
    Requirement,
    Role,
    SiteId,
    TraceLink,
)

ENV_CONFIG_VAR = "REQFLOW_CONFIG"
DEFAULT_LOG_PATH = "reqflow-events.log"


@dataclass(frozen=True)
class SiteConfig:
    id: SiteId
    utc_offset_minutes: int
    daily_capacity: float
    coordinator: bool = False

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "utc_offset_minutes": self.utc_offset_minutes,
            "daily_capacity": self.daily_capacity,
            "coordinator": self.coordinator,
        }


@dataclass(frozen=True)
class NetworkConfig:
    seed: int = 0
    base_latency: int = 1
    jitter: int = 0
    retry_interval: int = 5
    fault_rules: tuple = ()  # structured FaultRule dicts

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "base_latency": self.base_latency,
            "jitter": self.jitter,
            "retry_interval": self.retry_interval,
            "fault_rules": [dict(r) for r in self.fault_rules],
        }


@dataclass
class ServiceConfig:
    sites: List[SiteConfig]
    actors: List[Actor]
    requirements: List[Requirement]
    trace_links: List[TraceLink] = field(default_factory=list)
    ccb_quorum: Optional[int] = None  # None -> ceil(ccb membership / 2)
    cost_params: CostParams = field(default_factory=CostParams)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    log_path: str = DEFAULT_LOG_PATH

    def __post_init__(self):
        self.validate()

    # -- derived -------------------------------------------------------------

    @property
    def coordinator_site(self) -> SiteConfig:
        return next(s for s in self.sites if s.coordinator)

    @property
    def remote_site_ids(self) -> List[SiteId]:
        return [s.id for s in self.sites if not s.coordinator]

    @property
    def ccb_members(self) -> List[Actor]:
        return [a for a in self.actors if a.role is Role.CCB_MEMBER]

    @property
    def effective_quorum(self) -> int:
        if self.ccb_quorum is not None:
            return self.ccb_quorum
        return max(1, math.ceil(len(self.ccb_members) / 2))

    def actor_by_id(self) -> Dict[str, Actor]:
        return {a.id: a for a in self.actors}

    # -- checks ---------------------------------------------------------------

    def validate(self) -> None:
        if not self.sites:
            raise ConfigError("at least one site required")
        coordinators = [s for s in self.sites if s.coordinator]
        if len(coordinators) != 1:
            raise ConfigError(f"exactly one coordinator site required, found {len(coordinators)}")
        site_ids = [s.id for s in self.sites]
        if len(set(site_ids)) != len(site_ids):
            raise ConfigError("duplicate site ids")
        actor_ids = [a.id for a in self.actors]
        if len(set(actor_ids)) != len(actor_ids):
            raise ConfigError("duplicate actor ids")
        if SYSTEM_ACTOR in actor_ids:
            raise ConfigError(f"actor id '{SYSTEM_ACTOR}' is reserved")
        known_sites = set(site_ids)
        for a in self.actors:
            if a.site not in known_sites:
                raise ConfigError(f"actor {a.id} references unknown site {a.site}")
        req_ids = [r.id for r in self.requirements]
        if len(set(req_ids)) != len(req_ids):
            raise ConfigError("duplicate requirement ids")
        for r in self.requirements:
            if r.owner_site not in known_sites:
                raise ConfigError(f"requirement {r.id} owned by unknown site {r.owner_site}")
        known_reqs = set(req_ids)
        for link in self.trace_links:
            if link.source not in known_reqs or link.target not in known_reqs:
                raise ConfigError(
                    f"trace link {link.source}->{link.target} references unknown requirement"
                )
        if self.ccb_quorum is not None:
            if self.ccb_quorum < 1:
                raise ConfigError("ccb_quorum must be >= 1")
            if self.ccb_quorum > len(self.ccb_members):
                raise ConfigError("ccb_quorum exceeds CCB membership size")

    # -- serialization ---------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "sites": [s.to_dict() for s in self.sites],
            "actors": [a.to_dict() for a in self.actors],
            "requirements": [r.to_dict() for r in self.requirements],
            "trace_links": [l.to_dict() for l in self.trace_links],
            "ccb_quorum": self.ccb_quorum,
            "cost_params": self.cost_params.to_dict(),
            "network": self.network.to_dict(),
            "log_path": self.log_path,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ServiceConfig":
        try:
            sites = [
                SiteConfig(
                    id=s["id"],
                    utc_offset_minutes=s.get("utc_offset_minutes", 0),
                    daily_capacity=s["daily_capacity"],
                    coordinator=s.get("coordinator", False),
                )
                for s in d["sites"]
            ]
            actors = [
                Actor(
                    id=a["id"],
                    role=Role(a["role"]),
                    site=a["site"],
                    stakeholder_weight=a.get("stakeholder_weight", 0.5),
                )
                for a in d["actors"]
            ]
            requirements = [
                Requirement(
                    id=r["id"],
                    title=r["title"],
                    text=r["text"],
                    effort=r["effort"],
                    owner_site=r["owner_site"],
                    version=r.get("version", 1),
                )
                for r in d["requirements"]
            ]
            links = [TraceLink.from_dict(l) for l in d.get("trace_links", [])]
            net = d.get("network", {})
            fault_rules = list(net.get("fault_rules", []))
            script = net.get("fault_script")
            if script:
                from .replication import parse_fault_script

                fault_rules.extend(rule.to_dict() for rule in parse_fault_script(script))
            network = NetworkConfig(
                seed=net.get("seed", 0),
                base_latency=net.get("base_latency", 1),
                jitter=net.get("jitter", 0),
                retry_interval=net.get("retry_interval", 5),
                fault_rules=tuple(fault_rules),
            )
            cost = d.get("cost_params", {})
            return cls(
                sites=sites,
                actors=actors,
                requirements=requirements,
                trace_links=links,
                ccb_quorum=d.get("ccb_quorum"),
                cost_params=CostParams(**cost) if cost else CostParams(),
                network=network,
                log_path=d.get("log_path", DEFAULT_LOG_PATH),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"malformed config: {exc}") from exc

    @classmethod
    def from_file(cls, path: str) -> "ServiceConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                data = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        # a fault script may live in its own file, relative to the config
        net = data.get("network")
        if isinstance(net, dict) and net.get("fault_script_path"):
            script_path = net.pop("fault_script_path")
            if not os.path.isabs(script_path):
                script_path = os.path.join(os.path.dirname(os.path.abspath(path)), script_path)
            try:
                with open(script_path, "r", encoding="utf-8") as fh:
                    net["fault_script"] = fh.read()
            except FileNotFoundError:
                raise ConfigError(f"fault script not found: {script_path}") from None
        return cls.from_dict(data)


def resolve_config_path(explicit: Optional[str]) -> str:
    """--config flag wins; falls back to the REQFLOW_CONFIG environment variable."""
    path = explicit or os.environ.get(ENV_CONFIG_VAR)
    if not path:
        raise ConfigError(
            f"no config given: pass --config or set {ENV_CONFIG_VAR}"
        )
    return path
