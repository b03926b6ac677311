"""The service boundary: route table, request handling, HTTP adapter.

Paths are fixed; the table is exhaustive and anything else earns a NotFound
envelope.  Actor identity arrives in the ``X-Actor-Id`` header (no
credentials; role enforcement only).  Responses are deterministic functions
of (state, request): bodies are rendered as canonical sorted-key JSON.

Every mutating route funnels into the single-writer service; a request that
fails appends zero audit events.
"""

from __future__ import annotations

import json
import re
import threading
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable, Dict, List, Optional, Tuple
from urllib.parse import parse_qsl, urlsplit

from .errors import MalformedBody, NotFound, ReqflowError
from .model import RequirementDelta, canonical_json
from .service import RcmService

ACTOR_HEADER = "X-Actor-Id"

# code -> HTTP status class
ERROR_STATUS: Dict[str, int] = {
    "MalformedBody": 400,
    "EmptyTargets": 400,
    "InvalidSeverity": 400,
    "InconsistentDelta": 400,
    "UsageError": 400,
    "ForbiddenRole": 403,
    "NotFound": 404,
    "UnknownActor": 404,
    "UnknownChangeRequest": 404,
    "UnknownRequirement": 404,
    "UnknownSite": 404,
    "IllegalTransition": 409,
    "IllegalState": 409,
    "ApplyFailed": 409,
    "NoVotes": 409,
    "QuorumUnreachable": 409,
    "VerificationIncomplete": 409,
    "DuplicateRequirement": 409,
    "DeprecatedRequirement": 409,
    "MissingRequirement": 409,
    "HashMismatch": 409,
    "MissingScore": 409,
    "NoSites": 409,
    "ValidationFailed": 422,
    "StorageFailure": 500,
    "ChainBroken": 500,
    "UnknownEventKind": 500,
    "ConfigError": 500,
}


@dataclass(frozen=True)
class ApiRequest:
    method: str
    path: str
    query: Dict[str, str] = field(default_factory=dict)
    body: Optional[dict] = None
    actor: Optional[str] = None


@dataclass(frozen=True)
class ApiResponse:
    status: int
    body: dict

    def to_bytes(self) -> bytes:
        return (canonical_json(self.body) + "\n").encode("utf-8")


def error_response(exc: ReqflowError) -> ApiResponse:
    status = ERROR_STATUS.get(exc.code, 500)
    return ApiResponse(status=status, body={"error": exc.envelope()})


def _require(body: Optional[dict], *fields: str) -> dict:
    if body is None or not isinstance(body, dict):
        raise MalformedBody("request body must be a JSON object")
    missing = [f for f in fields if f not in body]
    if missing:
        raise MalformedBody(f"missing body field(s): {', '.join(missing)}", missing=missing)
    return body


def _require_actor(request: ApiRequest) -> str:
    if not request.actor:
        raise MalformedBody(f"missing {ACTOR_HEADER} header")
    return request.actor


def _parse_deltas(raw) -> List[RequirementDelta]:
    if not isinstance(raw, list):
        raise MalformedBody("deltas must be a list of delta objects")
    deltas = []
    for i, entry in enumerate(raw):
        try:
            deltas.append(RequirementDelta.from_dict(entry))
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedBody(f"delta {i} is malformed: {exc}", index=i) from exc
    return deltas


# -- handlers --------------------------------------------------------------------


def _submit(service: RcmService, request: ApiRequest, _: Tuple[str, ...]) -> ApiResponse:
    body = _require(request.body, "targets", "description", "severity")
    cr = service.submit_change_request(
        author=_require_actor(request),
        targets=body["targets"],
        description=body["description"],
        severity=body["severity"],
        origin_site=body.get("origin_site"),
    )
    return ApiResponse(status=201, body={"change_request": cr.to_dict()})


def _list_crs(service: RcmService, request: ApiRequest, _: Tuple[str, ...]) -> ApiResponse:
    rows = service.list_change_requests(request.query.get("state"))
    limit = request.query.get("limit")
    if limit is not None:
        try:
            rows = rows[: max(0, int(limit))]
        except ValueError:
            raise MalformedBody(f"limit must be an integer, got {limit!r}") from None
    return ApiResponse(status=200, body={"change_requests": rows})


def _formulate(service: RcmService, request: ApiRequest, args: Tuple[str, ...]) -> ApiResponse:
    body = _require(request.body, "deltas")
    cr = service.formulate_change(
        cr_id=args[0],
        deltas=_parse_deltas(body["deltas"]),
        goals=body.get("goals", []),
        measurements=body.get("measurements", []),
        actor_id=_require_actor(request),
    )
    return ApiResponse(status=200, body={"change_request": cr.to_dict()})


def _triage(service: RcmService, request: ApiRequest, args: Tuple[str, ...]) -> ApiResponse:
    body = _require(request.body, "decision")
    cr, validation_error = service.pm_triage(
        cr_id=args[0],
        decision=body["decision"],
        pm=_require_actor(request),
        rationale=body.get("rationale", ""),
    )
    return ApiResponse(
        status=200,
        body={"change_request": cr.to_dict(), "validation_error": validation_error},
    )


def _vote(service: RcmService, request: ApiRequest, args: Tuple[str, ...]) -> ApiResponse:
    body = _require(request.body, "decision")
    tally = service.ccb_cast_vote(
        cr_id=args[0],
        member=_require_actor(request),
        decision=body["decision"],
        rationale=body.get("rationale", ""),
    )
    cr = service.get_change_request(args[0])
    return ApiResponse(status=200, body={"change_request": cr, "tally": tally})


def _tally(service: RcmService, request: ApiRequest, args: Tuple[str, ...]) -> ApiResponse:
    body = request.body or {}
    cr = service.ccb_tally(
        cr_id=args[0], actor_id=_require_actor(request), quorum=body.get("quorum")
    )
    return ApiResponse(
        status=200,
        body={"change_request": cr.to_dict(), "decision": cr.decision.to_dict()},
    )


def _impact(service: RcmService, request: ApiRequest, args: Tuple[str, ...]) -> ApiResponse:
    phase = request.query.get("phase", "preliminary")
    return ApiResponse(status=200, body=service.get_impact(args[0], phase))


def _implement(service: RcmService, request: ApiRequest, args: Tuple[str, ...]) -> ApiResponse:
    cr = service.begin_implementation(cr_id=args[0], actor_id=_require_actor(request))
    cs = service.state.coordinator.change_sets[cr.changeset_seq]
    return ApiResponse(
        status=200,
        body={
            "change_request": cr.to_dict(),
            "changeset": cs.to_dict(),
            "deferred": any(d["seq"] == cr.changeset_seq for d in service.state.deferred),
        },
    )


def _tick(service: RcmService, request: ApiRequest, _: Tuple[str, ...]) -> ApiResponse:
    body = request.body or {}
    count = body.get("count", 1)
    if not isinstance(count, int):
        raise MalformedBody(f"count must be an integer, got {count!r}")
    return ApiResponse(status=200, body=service.tick(count))


def _sites(service: RcmService, request: ApiRequest, _: Tuple[str, ...]) -> ApiResponse:
    return ApiResponse(
        status=200,
        body={
            "sites": service.sites_board(),
            "change_sets": service.verification_board(),
            "actors": service.actors_board(),
        },
    )


def _report(service: RcmService, request: ApiRequest, args: Tuple[str, ...]) -> ApiResponse:
    report = service.report(args[0])
    return ApiResponse(status=200, body={"report": report, "text": service.report_text(args[0])})


def _transitions(service: RcmService, request: ApiRequest, _: Tuple[str, ...]) -> ApiResponse:
    return ApiResponse(status=200, body={"transitions": service.transition_table()})


# (method, path regex) -> handler; the published, exhaustive route table.
ROUTES: List[Tuple[str, re.Pattern, Callable]] = [
    ("POST", re.compile(r"^/change-requests$"), _submit),
    ("GET", re.compile(r"^/change-requests$"), _list_crs),
    ("POST", re.compile(r"^/change-requests/([^/]+)/formulate$"), _formulate),
    ("POST", re.compile(r"^/change-requests/([^/]+)/triage$"), _triage),
    ("POST", re.compile(r"^/change-requests/([^/]+)/votes$"), _vote),
    ("POST", re.compile(r"^/change-requests/([^/]+)/tally$"), _tally),
    ("GET", re.compile(r"^/change-requests/([^/]+)/impact$"), _impact),
    ("POST", re.compile(r"^/change-requests/([^/]+)/implement$"), _implement),
    ("POST", re.compile(r"^/harness/tick$"), _tick),
    ("GET", re.compile(r"^/sites$"), _sites),
    ("GET", re.compile(r"^/change-requests/([^/]+)/report$"), _report),
    ("GET", re.compile(r"^/transition-table$"), _transitions),
]


def handle(service: RcmService, request: ApiRequest) -> ApiResponse:
    """Routes one request to exactly one operation; never raises."""
    try:
        for method, pattern, handler in ROUTES:
            if request.method != method:
                continue
            match = pattern.match(request.path)
            if match:
                return handler(service, request, match.groups())
        raise NotFound(
            f"no route for {request.method} {request.path}",
            method=request.method,
            path=request.path,
        )
    except ReqflowError as exc:
        return error_response(exc)


# -- HTTP adapter ------------------------------------------------------------------


class _Handler(BaseHTTPRequestHandler):
    service: RcmService = None
    lock: threading.Lock = None

    protocol_version = "HTTP/1.1"

    def _dispatch(self, method: str) -> None:
        parts = urlsplit(self.path)
        body = None
        length = int(self.headers.get("Content-Length") or 0)
        if length:
            raw = self.rfile.read(length)
            try:
                body = json.loads(raw.decode("utf-8"))
            except (UnicodeDecodeError, json.JSONDecodeError):
                response = error_response(MalformedBody("body is not valid JSON"))
                self._send(response)
                return
        request = ApiRequest(
            method=method,
            path=parts.path,
            query=dict(parse_qsl(parts.query)),
            body=body,
            actor=self.headers.get(ACTOR_HEADER),
        )
        with self.lock:
            response = handle(self.service, request)
        self._send(response)

    def _send(self, response: ApiResponse) -> None:
        payload = response.to_bytes()
        self.send_response(response.status)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(payload)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header(
            "Access-Control-Allow-Headers", f"Content-Type, {ACTOR_HEADER}"
        )
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.end_headers()
        self.wfile.write(payload)

    def do_GET(self):
        self._dispatch("GET")

    def do_POST(self):
        self._dispatch("POST")

    def do_OPTIONS(self):
        self.send_response(204)
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header(
            "Access-Control-Allow-Headers", f"Content-Type, {ACTOR_HEADER}"
        )
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Content-Length", "0")
        self.end_headers()

    def log_message(self, fmt, *args):  # quiet by default; tests parse stdout
        pass


def make_server(service: RcmService, host: str = "127.0.0.1", port: int = 8000) -> ThreadingHTTPServer:
    handler = type(
        "BoundHandler", (_Handler,), {"service": service, "lock": threading.Lock()}
    )
    return ThreadingHTTPServer((host, port), handler)


def serve(service: RcmService, host: str = "127.0.0.1", port: int = 8000) -> None:
    server = make_server(service, host, port)
    bound_port = server.server_address[1]
    print(f"reqflow listening on http://{host}:{bound_port}", flush=True)
    try:
        server.serve_forever()
    finally:
        server.server_close()
