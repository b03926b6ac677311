import pytest

from reqflow.config import NetworkConfig, ServiceConfig, SiteConfig
from reqflow.model import (
    Actor,
    LinkKind,
    Requirement,
    Role,
    TraceLink,
)
from reqflow.persistence import EventLog
from reqflow.service import RcmService


def make_config(**overrides) -> ServiceConfig:
    """Three sites (hq coordinates), a full role roster, a small linked baseline."""
    defaults = dict(
        sites=[
            SiteConfig(id="hq", utc_offset_minutes=0, daily_capacity=8.0, coordinator=True),
            SiteConfig(id="east", utc_offset_minutes=300, daily_capacity=6.0),
            SiteConfig(id="west", utc_offset_minutes=-420, daily_capacity=6.0),
        ],
        actors=[
            Actor(id="alice", role=Role.STAKEHOLDER, site="hq", stakeholder_weight=1.0),
            Actor(id="bob", role=Role.STAKEHOLDER, site="east", stakeholder_weight=0.4),
            Actor(id="carol", role=Role.CHANGE_REQUEST_MANAGER, site="hq"),
            Actor(id="pete", role=Role.PROJECT_MANAGER, site="hq"),
            Actor(id="m1", role=Role.CCB_MEMBER, site="hq"),
            Actor(id="m2", role=Role.CCB_MEMBER, site="east"),
            Actor(id="m3", role=Role.CCB_MEMBER, site="west"),
            Actor(id="sam", role=Role.SITE_LEAD, site="west"),
            Actor(id="quinn", role=Role.QA_MANAGER, site="east"),
        ],
        requirements=[
            Requirement(id="R1", title="Login", text="Users can log in", effort=8.0, owner_site="hq"),
            Requirement(id="R2", title="Audit", text="Actions are logged", effort=4.0, owner_site="east"),
            Requirement(id="R3", title="Export", text="Data exports to CSV", effort=2.0, owner_site="west"),
            Requirement(id="R4", title="Search", text="Full-text search", effort=6.0, owner_site="hq"),
        ],
        trace_links=[
            TraceLink(source="R2", target="R1", kind=LinkKind.DEPENDS_ON),
            TraceLink(source="R3", target="R2", kind=LinkKind.DEPENDS_ON),
            TraceLink(source="R4", target="R1", kind=LinkKind.REFINES),
        ],
        network=NetworkConfig(seed=7, base_latency=1, jitter=0, retry_interval=4),
    )
    defaults.update(overrides)
    return ServiceConfig(**defaults)


def make_service(**overrides) -> RcmService:
    return RcmService(config=make_config(**overrides), log=EventLog(None))


@pytest.fixture
def config():
    return make_config()


@pytest.fixture
def service():
    return make_service()
