// [acceptance] Two-client race: a stale action must surface the engine's
// IllegalTransition envelope verbatim, and a refetch must leave the loser's
// rendered state identical to a fresh client's view — no corruption.

import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient, ApiError } from "../src/client.js";
import { buildDashboard } from "../src/viewmodel.js";
import type { TransitionRow } from "../src/types.js";
import { spawnServer, type ServerHandle } from "./helpers.js";

let server: ServerHandle;
let table: TransitionRow[];

beforeAll(async () => {
  server = await spawnServer();
  table = (await new ApiClient(server.baseUrl).transitionTable()).transitions;
});

afterAll(() => server.stop());

async function viewFor(client: ApiClient) {
  const [crs, sites] = await Promise.all([client.listChangeRequests(), client.sites()]);
  return buildDashboard(client.actor ?? "", crs.change_requests, sites, table);
}

describe("two project managers race on the same triage", () => {
  it("loser sees IllegalTransition and refetches to server truth", async () => {
    const alice = new ApiClient(server.baseUrl, "alice");
    const pete = new ApiClient(server.baseUrl, "pete");
    const petra = new ApiClient(server.baseUrl, "petra");

    const crId = (
      await alice.submit({ targets: ["R1"], description: "race target", severity: 4 })
    ).change_request.id;
    await alice.formulate(crId, {
      deltas: [{ op: "Modify", requirement_id: "R1", new_text: "contested edit" }],
    });

    // both PMs load the same stale board: triage offered to each
    const peteView = await viewFor(pete);
    const petraView = await viewFor(petra);
    for (const view of [peteView, petraView]) {
      const card = view.queues["PmReview"]!.find((c) => c.id === crId)!;
      expect(card.palette.map((p) => p.action)).toContain("triage");
    }

    // pete wins the race
    const winner = await pete.triage(crId, { decision: "Accept", rationale: "go" });
    expect(winner.change_request.state).toBe("CcbReview");

    // petra acts on her stale palette and must get the engine's refusal
    let surfaced: ApiError | null = null;
    try {
      await petra.triage(crId, { decision: "Reject", rationale: "too risky" });
    } catch (err) {
      surfaced = err as ApiError;
    }
    expect(surfaced).toBeInstanceOf(ApiError);
    expect(surfaced!.status).toBe(409);
    expect(surfaced!.envelope.code).toBe("IllegalTransition");

    // the losing client refetches; its view equals a brand-new client's view
    const petraAfter = await viewFor(petra);
    const freshAfter = await viewFor(new ApiClient(server.baseUrl, "petra"));
    expect(petraAfter).toEqual(freshAfter);

    // and the stale action is gone: the request now sits in CcbReview
    expect(petraAfter.queues["PmReview"]!.map((c) => c.id)).not.toContain(crId);
    const moved = petraAfter.queues["CcbReview"]!.find((c) => c.id === crId)!;
    expect(moved.palette.map((p) => p.action)).not.toContain("triage");
    // a CCB member, by contrast, is offered the vote
    const memberView = await viewFor(new ApiClient(server.baseUrl, "m1"));
    const memberCard = memberView.queues["CcbReview"]!.find((c) => c.id === crId)!;
    expect(memberCard.palette.map((p) => p.action)).toContain("vote");

    // the winning decision stood: exactly one pm_decision recorded
    const report = await petra.report(crId);
    expect((report.report as { pm_decision: { decision: string } }).pm_decision.decision).toBe(
      "Accept",
    );
  });

  it("double vote by one member keeps a single latest vote in the view", async () => {
    const alice = new ApiClient(server.baseUrl, "alice");
    const pete = new ApiClient(server.baseUrl, "pete");
    const m1 = new ApiClient(server.baseUrl, "m1");

    const crId = (
      await alice.submit({ targets: ["R2"], description: "revote probe", severity: 2 })
    ).change_request.id;
    await alice.formulate(crId, {
      deltas: [{ op: "Modify", requirement_id: "R2", new_text: "tighten" }],
    });
    await pete.triage(crId, { decision: "Accept" });

    await m1.vote(crId, { decision: "Approve", rationale: "first thoughts" });
    const second = await m1.vote(crId, { decision: "Reject", rationale: "changed my mind" });
    expect(second.tally).toEqual({ votes: 1, approvals: 0, rejections: 1, abstentions: 0 });

    const crs = await m1.listChangeRequests("CcbReview");
    const cr = crs.change_requests.find((c) => c.id === crId)!;
    expect(Object.keys(cr.votes)).toEqual(["m1"]);
    expect(cr.votes["m1"]!.decision).toBe("Reject");
    expect(cr.votes["m1"]!.rationale).toBe("changed my mind");
  });
});
