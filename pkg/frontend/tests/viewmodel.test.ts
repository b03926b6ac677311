// View-model contract tests against recorded fixtures: the dashboard never
// fabricates state — every rendered field traces to an API response body.
// The fixtures are byte-captures of a scripted lifecycle; re-running the
// script against a fresh server must reproduce them exactly
// (REGEN_FIXTURES=1 vitest run to refresh after intentional API changes).

import { mkdirSync, readFileSync, writeFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/client.js";
import { layoutColumns, parseDot } from "../src/graph.js";
import { buildDashboard, STATE_COLUMNS } from "../src/viewmodel.js";
import type { ChangeRequest, SitesBody, TransitionRow } from "../src/types.js";
import { spawnServer, type ServerHandle } from "./helpers.js";

const FIXTURES = join(dirname(fileURLToPath(import.meta.url)), "fixtures");

let server: ServerHandle;
let captured: Record<string, string> = {};

const CAPTURE_PATHS: Record<string, string> = {
  "transition-table.json": "/transition-table",
  "change-requests.json": "/change-requests",
  "sites.json": "/sites",
  "report.json": "/change-requests/CR-0001/report",
  "impact-final.json": "/change-requests/CR-0001/impact?phase=final",
};

beforeAll(async () => {
  server = await spawnServer();
  const alice = new ApiClient(server.baseUrl, "alice");
  const pete = new ApiClient(server.baseUrl, "pete");

  // the scripted reference session (deterministic end to end)
  const crId = (
    await alice.submit({
      targets: ["R1"],
      description: "Strengthen login with a second factor",
      severity: 4,
    })
  ).change_request.id;
  await alice.formulate(crId, {
    deltas: [
      {
        op: "Modify",
        requirement_id: "R1",
        new_text: "Users log in with password plus a second factor",
      },
    ],
    goals: ["Reduce account takeovers"],
    measurements: ["Takeover incidents per quarter"],
  });
  await pete.triage(crId, { decision: "Accept", rationale: "Security priority" });
  for (const member of ["m1", "m2", "m3"]) {
    await new ApiClient(server.baseUrl, member).vote(crId, {
      decision: "Approve",
      rationale: "needed",
    });
  }
  await pete.tally(crId, {});
  await pete.implement(crId);
  await pete.tick(6);

  for (const [name, path] of Object.entries(CAPTURE_PATHS)) {
    const response = await fetch(server.baseUrl + path);
    captured[name] = await response.text();
  }
  if (process.env["REGEN_FIXTURES"]) {
    mkdirSync(FIXTURES, { recursive: true });
    for (const [name, text] of Object.entries(captured)) {
      writeFileSync(join(FIXTURES, name), text);
    }
  }
});

afterAll(() => server.stop());

function fixture(name: string): string {
  return readFileSync(join(FIXTURES, name), "utf-8");
}

describe("recorded fixtures", () => {
  it("replaying the reference session reproduces every fixture byte-for-byte", () => {
    for (const name of Object.keys(CAPTURE_PATHS)) {
      expect(captured[name], name).toBe(fixture(name));
    }
  });
});

describe("dashboard view model traces to the response bodies", () => {
  function load() {
    const table = (JSON.parse(fixture("transition-table.json")) as { transitions: TransitionRow[] })
      .transitions;
    const crs = (JSON.parse(fixture("change-requests.json")) as { change_requests: ChangeRequest[] })
      .change_requests;
    const sites = JSON.parse(fixture("sites.json")) as SitesBody;
    return { table, crs, sites };
  }

  it("queues place each change request exactly under its served state", () => {
    const { table, crs, sites } = load();
    const vm = buildDashboard("alice", crs, sites, table);
    const placed = Object.entries(vm.queues).flatMap(([state, cards]) =>
      cards.map((card) => [card.id, state]),
    );
    const served = crs.map((cr) => [cr.id, cr.state]);
    expect(placed.sort()).toEqual(served.sort());
    for (const column of Object.keys(vm.queues)) {
      expect(STATE_COLUMNS).toContain(column);
    }
  });

  it("cards carry only served fields", () => {
    const { table, crs, sites } = load();
    const vm = buildDashboard("alice", crs, sites, table);
    const card = vm.queues["Closed"]!.find((c) => c.id === "CR-0001")!;
    const served = crs.find((c) => c.id === "CR-0001")!;
    expect(card.description).toBe(served.description);
    expect(card.severity).toBe(served.severity);
    expect(card.author).toBe(served.author);
    expect(card.priority).toBe(served.form!.priority_score);
    expect(card.conflicts).toEqual(served.form!.conflicts);
    expect(card.palette).toEqual([]); // Closed is terminal
  });

  it("site board rows mirror the sites body, including pending acks", () => {
    const { table, crs, sites } = load();
    const vm = buildDashboard("alice", crs, sites, table);
    expect(vm.sites.map((s) => s.id)).toEqual(sites.sites.map((s) => s.id));
    for (const row of vm.sites) {
      const served = sites.sites.find((s) => s.id === row.id)!;
      expect(row.applied_seq).toBe(served.applied_seq);
      expect(row.baseline_hash).toBe(served.baseline_hash);
      expect(row.quarantined).toBe(served.quarantined);
    }
    // the reference session fully verified, so nothing is pending anywhere
    expect(vm.sites.every((s) => s.pendingAcks.length === 0)).toBe(true);
    expect(vm.changeSets).toEqual(sites.change_sets);
  });

  it("role comes from the served actor roster, not from the client", () => {
    const { table, crs, sites } = load();
    expect(buildDashboard("pete", crs, sites, table).role).toBe("ProjectManager");
    expect(buildDashboard("m2", crs, sites, table).role).toBe("CcbMember");
    expect(buildDashboard("stranger", crs, sites, table).role).toBeNull();
    // unknown actor sees no actions at all
    const vm = buildDashboard("stranger", crs, sites, table);
    for (const cards of Object.values(vm.queues)) {
      for (const card of cards) expect(card.palette).toEqual([]);
    }
  });

  it("impact DOT parses into the depth-layered layout", () => {
    const impact = JSON.parse(fixture("impact-final.json")) as {
      affected: Record<string, number>;
      dot: string;
    };
    const { nodes, edges } = parseDot(impact.dot);
    expect(nodes.sort()).toEqual(["R1", "R2", "R3", "R4"]);
    expect(edges).toContainEqual({ from: "R2", to: "R1", kind: "DependsOn" });
    const positions = layoutColumns(nodes, impact.affected);
    // depth 0 target sits in the leftmost column
    const xs = nodes.map((n) => positions.get(n)!.x);
    expect(positions.get("R1")!.x).toBe(Math.min(...xs));
    // deeper nodes never sit left of shallower ones
    for (const [a, da] of Object.entries(impact.affected)) {
      for (const [b, db] of Object.entries(impact.affected)) {
        if (da < db) expect(positions.get(a)!.x).toBeLessThan(positions.get(b)!.x);
      }
    }
  });

  it("report fixture carries the full eight-step timeline", () => {
    const report = JSON.parse(fixture("report.json")) as {
      report: { timeline: { state: string }[]; outcome: string };
    };
    expect(report.report.outcome).toBe("Closed");
    expect(report.report.timeline.map((t) => t.state)).toEqual([
      "Submitted",
      "Formulated",
      "PmReview",
      "Validating",
      "FormGenerated",
      "CcbReview",
      "Approved",
      "ImpactAnalyzed",
      "Implementing",
      "Verifying",
      "Closed",
    ]);
  });
});
