import json
import threading
import urllib.request

import pytest

from reqflow.api import ACTOR_HEADER, ApiRequest, ERROR_STATUS, ROUTES, handle, make_server
from reqflow.model import canonical_json



def post(service, path, body, actor=None, query=None):
    return handle(
        service, ApiRequest(method="POST", path=path, body=body, actor=actor, query=query or {})
    )


def get(service, path, query=None, actor=None):
    return handle(
        service, ApiRequest(method="GET", path=path, query=query or {}, actor=actor)
    )


def submit(service, actor="alice", targets=("R1",), severity=4):
    return post(
        service,
        "/change-requests",
        {"targets": list(targets), "description": "demo", "severity": severity},
        actor=actor,
    )


def drive_to_ccb(service):
    cr_id = submit(service).body["change_request"]["id"]
    post(
        service,
        f"/change-requests/{cr_id}/formulate",
        {"deltas": [{"op": "Modify", "requirement_id": "R1", "new_text": "x"}]},
        actor="alice",
    )
    post(service, f"/change-requests/{cr_id}/triage", {"decision": "Accept"}, actor="pete")
    return cr_id


class TestRoutes:
    def test_submit_created(self, service):
        response = submit(service)
        assert response.status == 201
        assert response.body["change_request"]["state"] == "Submitted"
        assert response.body["change_request"]["id"] == "CR-0001"

    def test_forbidden_role_envelope(self, service):
        cr_id = submit(service).body["change_request"]["id"]
        post(
            service,
            f"/change-requests/{cr_id}/formulate",
            {"deltas": [{"op": "Modify", "requirement_id": "R1", "new_text": "x"}]},
            actor="alice",
        )
        response = post(
            service, f"/change-requests/{cr_id}/triage", {"decision": "Reject"}, actor="m1"
        )
        assert response.status == 403
        assert response.body["error"]["code"] == "ForbiddenRole"

    def test_malformed_body_appends_no_events(self, service):
        n = len(service.log.events)
        response = post(service, "/change-requests", {"description": "x"}, actor="alice")
        assert response.status == 400
        assert response.body["error"]["code"] == "MalformedBody"
        assert len(service.log.events) == n

    def test_missing_actor_header(self, service):
        response = post(
            service,
            "/change-requests",
            {"targets": ["R1"], "description": "d", "severity": 2},
        )
        assert response.status == 400
        assert ACTOR_HEADER in response.body["error"]["message"]

    def test_unknown_route_not_found(self, service):
        response = get(service, "/no/such/path")
        assert response.status == 404
        assert response.body["error"]["code"] == "NotFound"

    def test_full_flow_via_routes_only(self, service):
        cr_id = drive_to_ccb(service)
        for member in ("m1", "m2", "m3"):
            response = post(
                service,
                f"/change-requests/{cr_id}/votes",
                {"decision": "Approve"},
                actor=member,
            )
            assert response.status == 200
        response = post(service, f"/change-requests/{cr_id}/tally", {}, actor="pete")
        assert response.body["decision"]["outcome"] == "Approved"
        response = post(service, f"/change-requests/{cr_id}/implement", {}, actor="pete")
        assert response.status == 200
        assert response.body["changeset"]["seq"] == 1
        response = post(service, "/harness/tick", {"count": 6})
        assert response.status == 200
        report = get(service, f"/change-requests/{cr_id}/report")
        assert report.status == 200
        assert report.body["report"]["outcome"] == "Closed"

    def test_list_filter_and_limit(self, service):
        submit(service)
        submit(service, actor="bob", targets=("R2",))
        response = get(service, "/change-requests", query={"state": "Submitted"})
        assert [c["id"] for c in response.body["change_requests"]] == ["CR-0001", "CR-0002"]
        response = get(service, "/change-requests", query={"limit": "1"})
        assert len(response.body["change_requests"]) == 1
        response = get(service, "/change-requests", query={"state": "Nope"})
        assert response.status == 400

    def test_impact_phases(self, service):
        cr_id = drive_to_ccb(service)
        response = get(
            service, f"/change-requests/{cr_id}/impact", query={"phase": "preliminary"}
        )
        assert response.status == 200
        assert response.body["affected"]["R1"] == 0
        assert response.body["dot"].startswith("digraph")
        response = get(service, f"/change-requests/{cr_id}/impact", query={"phase": "final"})
        assert response.status == 404
        response = get(service, f"/change-requests/{cr_id}/impact", query={"phase": "bogus"})
        assert response.status == 400

    def test_sites_board(self, service):
        response = get(service, "/sites")
        assert response.status == 200
        assert [s["id"] for s in response.body["sites"]] == ["hq", "east", "west"]
        assert response.body["sites"][0]["coordinator"] is True
        assert response.body["change_sets"] == []

    def test_transition_table_served(self, service):
        response = get(service, "/transition-table")
        rows = response.body["transitions"]
        assert {"state", "event", "guard", "next", "action"} == set(rows[0])
        assert any(r["event"] == "triage_reject" for r in rows)

    def test_get_routes_idempotent_byte_identical(self, service):
        drive_to_ccb(service)
        for path, query in (
            ("/change-requests", {}),
            ("/sites", {}),
            ("/transition-table", {}),
            ("/change-requests/CR-0001/impact", {"phase": "preliminary"}),
            ("/change-requests/CR-0001/report", {}),
        ):
            first = get(service, path, query=query)
            second = get(service, path, query=query)
            assert first.to_bytes() == second.to_bytes()

    def test_error_codes_have_status_mapping(self):
        import reqflow.errors as errors_mod
        from reqflow.errors import ReqflowError

        for name in dir(errors_mod):
            obj = getattr(errors_mod, name)
            if isinstance(obj, type) and issubclass(obj, ReqflowError) and obj is not ReqflowError:
                assert obj.__name__ in ERROR_STATUS, obj.__name__

    def test_every_mutating_operation_reachable_from_routes(self):
        mutating_ops = {
            "submit_change_request",
            "formulate_change",
            "pm_triage",
            "ccb_cast_vote",
            "ccb_tally",
            "begin_implementation",
            "tick",
        }
        import inspect

        handler_sources = {
            handler.__name__: inspect.getsource(handler) for _, _, handler in ROUTES
        }
        reachable = set()
        for source in handler_sources.values():
            for op in mutating_ops:
                if f"service.{op}(" in source:
                    reachable.add(op)
        assert reachable == mutating_ops


class TestHttpServer:
    @pytest.fixture
    def server(self, service):
        httpd = make_server(service, host="127.0.0.1", port=0)
        thread = threading.Thread(target=httpd.serve_forever, daemon=True)
        thread.start()
        yield f"http://127.0.0.1:{httpd.server_address[1]}", service
        httpd.shutdown()
        httpd.server_close()

    def _call(self, base, method, path, body=None, actor=None):
        data = canonical_json(body).encode() if body is not None else None
        request = urllib.request.Request(base + path, data=data, method=method)
        request.add_header("Content-Type", "application/json")
        if actor:
            request.add_header(ACTOR_HEADER, actor)
        try:
            with urllib.request.urlopen(request) as response:
                return response.status, json.loads(response.read().decode())
        except urllib.error.HTTPError as err:
            return err.code, json.loads(err.read().decode())

    def test_http_round_trip(self, server):
        base, service = server
        status, body = self._call(
            base,
            "POST",
            "/change-requests",
            {"targets": ["R1"], "description": "over http", "severity": 3},
            actor="alice",
        )
        assert status == 201
        assert body["change_request"]["id"] == "CR-0001"
        status, body = self._call(base, "GET", "/sites")
        assert status == 200 and len(body["sites"]) == 3
        status, body = self._call(base, "GET", "/transition-table")
        assert status == 200

    def test_http_error_envelope(self, server):
        base, _ = server
        status, body = self._call(
            base, "POST", "/change-requests", {"targets": []}, actor="alice"
        )
        assert status == 400
        assert body["error"]["code"] == "MalformedBody"
        status, body = self._call(base, "GET", "/missing")
        assert status == 404

    def test_http_invalid_json_body(self, server):
        base, _ = server
        request = urllib.request.Request(
            base + "/change-requests", data=b"{not json", method="POST"
        )
        request.add_header(ACTOR_HEADER, "alice")
        try:
            with urllib.request.urlopen(request) as response:
                status = response.status
                body = json.loads(response.read().decode())
        except urllib.error.HTTPError as err:
            status, body = err.code, json.loads(err.read().decode())
        assert status == 400
        assert body["error"]["code"] == "MalformedBody"
