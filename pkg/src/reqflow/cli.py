"""Command-line front door; every subcommand rides the same route table as HTTP.

Config file comes from ``--config`` or the REQFLOW_CONFIG environment
variable.  State lives in the append-only event log named by the config
(``log_path``, resolved relative to the config file), so consecutive CLI
invocations continue the same deployment.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import List, Optional

from .api import ApiRequest, ApiResponse, handle, serve
from .config import ServiceConfig, resolve_config_path
from .errors import ConfigError, MalformedBody, ReqflowError
from .model import canonical_json
from .persistence import EventLog
from .service import RcmService


def _build_service(config_path: str) -> RcmService:
    config = ServiceConfig.from_file(config_path)
    log_path = config.log_path
    if not os.path.isabs(log_path):
        log_path = os.path.join(os.path.dirname(os.path.abspath(config_path)), log_path)
    log = EventLog(log_path)
    if len(log) == 0:
        return RcmService(config=config, log=log)
    return RcmService(log=log)


def _emit(response: ApiResponse) -> int:
    if 200 <= response.status < 300:
        print(canonical_json(response.body))
        return 0
    print(canonical_json(response.body), file=sys.stderr)
    return 1


def _deltas_from_args(args) -> list:
    if args.deltas_file:
        with open(args.deltas_file, "r", encoding="utf-8") as fh:
            return json.load(fh)
    if args.deltas:
        try:
            return json.loads(args.deltas)
        except json.JSONDecodeError as exc:
            raise MalformedBody(f"--deltas is not valid JSON: {exc}") from exc
    raise MalformedBody("provide --deltas or --deltas-file")


def _render_status(body_sites: dict, body_crs: dict) -> str:
    lines = ["sites:"]
    for site in body_sites["sites"]:
        role = "coordinator" if site["coordinator"] else "replica"
        flag = "  QUARANTINED" if site["quarantined"] else ""
        lines.append(
            f"  {site['id']:<12} {role:<12} seq {site['applied_seq']:>3}  "
            f"{site['baseline_hash'][:12]}{flag}"
        )
    if body_sites["change_sets"]:
        lines.append("change sets:")
        for row in body_sites["change_sets"]:
            lines.append(
                f"  seq {row['seq']} ({row['cr_id']}): complete={row['complete']} "
                f"acked={','.join(row['acked_sites']) or '-'}"
                + (f" missing={','.join(row['missing_sites'])}" if row["missing_sites"] else "")
            )
    queues = {}
    for cr in body_crs["change_requests"]:
        queues.setdefault(cr["state"], []).append(cr["id"])
    lines.append("change requests:")
    if not queues:
        lines.append("  (none)")
    for state in sorted(queues):
        lines.append(f"  {state:<16} {', '.join(queues[state])}")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reqflow",
        description="Requirement change management over an event-sourced core.",
    )
    parser.add_argument("--config", "-c", help="path to the deployment config JSON")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("submit", help="submit a new change request")
    p.add_argument("--actor", required=True, help="author actor id")
    p.add_argument("--targets", required=True, help="comma-separated requirement ids")
    p.add_argument("--description", required=True)
    p.add_argument("--severity", type=int, required=True, help="1..5")
    p.add_argument("--origin-site", default=None)

    p = sub.add_parser("formulate", help="attach deltas, goals, and measurements")
    p.add_argument("cr_id")
    p.add_argument("--actor", required=True)
    p.add_argument("--deltas", help="JSON list of delta objects")
    p.add_argument("--deltas-file", help="file holding the JSON delta list")
    p.add_argument("--goal", action="append", default=[], dest="goals")
    p.add_argument("--measurement", action="append", default=[], dest="measurements")

    p = sub.add_parser("triage", help="project-manager accept/reject")
    p.add_argument("cr_id")
    p.add_argument("--actor", required=True)
    p.add_argument("--decision", required=True, choices=["Accept", "Reject"])
    p.add_argument("--rationale", default="")

    p = sub.add_parser("vote", help="cast a CCB vote")
    p.add_argument("cr_id")
    p.add_argument("--actor", required=True)
    p.add_argument("--decision", required=True, choices=["Approve", "Reject", "Abstain"])
    p.add_argument("--rationale", default="")

    p = sub.add_parser("tally", help="tally CCB votes and decide")
    p.add_argument("cr_id")
    p.add_argument("--actor", required=True)
    p.add_argument("--quorum", type=int, default=None)

    p = sub.add_parser("impact", help="show a stored impact analysis")
    p.add_argument("cr_id")
    p.add_argument("--phase", choices=["preliminary", "final"], default="preliminary")
    p.add_argument("--dot", action="store_true", help="print only the DOT graph")

    p = sub.add_parser("implement", help="finalize impact and start implementation")
    p.add_argument("cr_id")
    p.add_argument("--actor", required=True)

    p = sub.add_parser("tick", help="advance the simulated network")
    p.add_argument("--count", type=int, default=1)

    p = sub.add_parser("status", help="site board and change-request queues")
    p.add_argument("--state", default=None, help="filter requests by state")
    p.add_argument("--json", action="store_true", dest="as_json")

    p = sub.add_parser("report", help="render the assessment report for a change request")
    p.add_argument("cr_id")
    p.add_argument("--json", action="store_true", dest="as_json")

    p = sub.add_parser("serve", help="run the HTTP API")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)

    return parser


def run(args: argparse.Namespace) -> int:
    config_path = resolve_config_path(args.config)
    service = _build_service(config_path)
    try:
        if args.command == "submit":
            request = ApiRequest(
                method="POST",
                path="/change-requests",
                body={
                    "targets": [t for t in args.targets.split(",") if t],
                    "description": args.description,
                    "severity": args.severity,
                    "origin_site": args.origin_site,
                },
                actor=args.actor,
            )
            return _emit(handle(service, request))

        if args.command == "formulate":
            request = ApiRequest(
                method="POST",
                path=f"/change-requests/{args.cr_id}/formulate",
                body={
                    "deltas": _deltas_from_args(args),
                    "goals": args.goals,
                    "measurements": args.measurements,
                },
                actor=args.actor,
            )
            return _emit(handle(service, request))

        if args.command == "triage":
            request = ApiRequest(
                method="POST",
                path=f"/change-requests/{args.cr_id}/triage",
                body={"decision": args.decision, "rationale": args.rationale},
                actor=args.actor,
            )
            return _emit(handle(service, request))

        if args.command == "vote":
            request = ApiRequest(
                method="POST",
                path=f"/change-requests/{args.cr_id}/votes",
                body={"decision": args.decision, "rationale": args.rationale},
                actor=args.actor,
            )
            return _emit(handle(service, request))

        if args.command == "tally":
            body = {} if args.quorum is None else {"quorum": args.quorum}
            request = ApiRequest(
                method="POST",
                path=f"/change-requests/{args.cr_id}/tally",
                body=body,
                actor=args.actor,
            )
            return _emit(handle(service, request))

        if args.command == "impact":
            request = ApiRequest(
                method="GET",
                path=f"/change-requests/{args.cr_id}/impact",
                query={"phase": args.phase},
            )
            response = handle(service, request)
            if response.status == 200 and args.dot:
                print(response.body["dot"], end="")
                return 0
            return _emit(response)

        if args.command == "implement":
            request = ApiRequest(
                method="POST",
                path=f"/change-requests/{args.cr_id}/implement",
                body={},
                actor=args.actor,
            )
            return _emit(handle(service, request))

        if args.command == "tick":
            request = ApiRequest(
                method="POST", path="/harness/tick", body={"count": args.count}
            )
            return _emit(handle(service, request))

        if args.command == "status":
            sites = handle(service, ApiRequest(method="GET", path="/sites"))
            query = {"state": args.state} if args.state else {}
            crs = handle(service, ApiRequest(method="GET", path="/change-requests", query=query))
            for response in (sites, crs):
                if response.status != 200:
                    return _emit(response)
            if args.as_json:
                print(canonical_json({"sites": sites.body, "change_requests": crs.body}))
            else:
                print(_render_status(sites.body, crs.body))
            return 0

        if args.command == "report":
            request = ApiRequest(
                method="GET", path=f"/change-requests/{args.cr_id}/report"
            )
            response = handle(service, request)
            if response.status == 200 and not args.as_json:
                print(response.body["text"], end="")
                return 0
            return _emit(response)

        if args.command == "serve":
            serve(service, host=args.host, port=args.port)
            return 0

        raise ConfigError(f"unhandled command {args.command}")
    finally:
        service.log.close()


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return run(args)
    except ReqflowError as exc:
        print(canonical_json({"error": exc.envelope()}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
