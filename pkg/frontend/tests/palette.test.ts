// [acceptance] The action palette must equal the API-served transition table
// filtered by role, for every (state, role) pair — checked against an
// independent filter below, then spot-checked against the live engine's own
// enforcement (offered implies never ForbiddenRole, refused implies it).

import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient, ApiError } from "../src/client.js";
import { actionPalette, statesOf } from "../src/palette.js";
import type { ActorRow, TransitionRow } from "../src/types.js";
import { spawnServer, type ServerHandle } from "./helpers.js";

let server: ServerHandle;
let client: ApiClient;
let table: TransitionRow[];
let actors: ActorRow[];

beforeAll(async () => {
  server = await spawnServer();
  client = new ApiClient(server.baseUrl);
  table = (await client.transitionTable()).transitions;
  actors = (await client.sites()).actors;
});

afterAll(() => server.stop());

// Test-local guard interpreter, written independently of src/palette.ts.
function allowedByGuard(guard: string, role: string, isAuthor: boolean): boolean {
  switch (true) {
    case guard === "auto":
      return false;
    case guard === "any":
      return true;
    case guard.startsWith("role="): {
      const alternatives = guard.substring(5).split("|");
      for (const alternative of alternatives) {
        if (alternative === "author" && isAuthor) return true;
        if (alternative === role) return true;
      }
      return false;
    }
    default:
      throw new Error(`guard not understood: ${guard}`);
  }
}

const ALL_ROLES = [
  "Stakeholder",
  "ChangeRequestManager",
  "ProjectManager",
  "CcbMember",
  "SiteLead",
  "QaManager",
];

describe("action palette vs served transition table", () => {
  it("matches the independent filter for every (state, role) pair", () => {
    const states = statesOf(table);
    expect(states.length).toBeGreaterThanOrEqual(13);
    for (const state of states) {
      for (const role of ALL_ROLES) {
        for (const isAuthor of [false, true]) {
          const expected = new Set(
            table
              .filter(
                (row) =>
                  row.state === state &&
                  row.action !== null &&
                  allowedByGuard(row.guard, role, isAuthor),
              )
              .map((row) => `${row.action}:${row.event}`),
          );
          const palette = actionPalette(table, state, role, isAuthor);
          const actual = new Set(
            palette.flatMap((entry) => entry.events.map((event) => `${entry.action}:${event}`)),
          );
          expect(actual, `state=${state} role=${role} author=${isAuthor}`).toEqual(expected);
        }
      }
    }
  });

  it("never lists an action for terminal or unknown-to-role states", () => {
    for (const state of ["RejectedByPm", "CcbRejected", "Closed"]) {
      for (const role of ALL_ROLES) {
        expect(actionPalette(table, state, role, true)).toEqual([]);
      }
    }
  });

  it("roster provides at least one actor per role", () => {
    for (const role of ALL_ROLES) {
      expect(actors.some((a) => a.role === role), role).toBe(true);
    }
  });
});

describe("live enforcement agrees with the palette", () => {
  const actorFor = (role: string, excludeAuthor = "alice") =>
    actors.find((a) => a.role === role && a.id !== excludeAuthor)!.id;

  async function freshCr(state: "Submitted" | "PmReview" | "CcbReview"): Promise<string> {
    const author = client.withActor("alice");
    const cr = (
      await author.submit({ targets: ["R1"], description: "palette probe", severity: 3 })
    ).change_request.id;
    if (state === "Submitted") return cr;
    await author.formulate(cr, {
      deltas: [{ op: "Modify", requirement_id: "R1", new_text: `probe ${cr}` }],
    });
    if (state === "PmReview") return cr;
    await client.withActor("pete").triage(cr, { decision: "Accept" });
    return cr;
  }

  function offered(state: string, role: string, action: string, isAuthor: boolean): boolean {
    return actionPalette(table, state, role, isAuthor).some((e) => e.action === action);
  }

  async function expectMatchesServer(
    state: "Submitted" | "PmReview" | "CcbReview",
    action: "formulate" | "triage" | "vote",
    role: string,
  ) {
    const actorId = actorFor(role);
    const cr = await freshCr(state);
    const acting = client.withActor(actorId);
    const attempt =
      action === "formulate"
        ? () =>
            acting.formulate(cr, {
              deltas: [{ op: "Modify", requirement_id: "R1", new_text: "again" }],
            })
        : action === "triage"
          ? () => acting.triage(cr, { decision: "Accept" })
          : () => acting.vote(cr, { decision: "Approve" });
    if (offered(state, role, action, false)) {
      await attempt(); // the palette offered it; the engine must accept the role
    } else {
      await expect(attempt()).rejects.toSatisfy(
        (err: unknown) => err instanceof ApiError && err.envelope.code === "ForbiddenRole",
      );
    }
  }

  it("formulate offers/refusals match the engine", async () => {
    for (const role of ALL_ROLES) {
      await expectMatchesServer("Submitted", "formulate", role);
    }
  });

  it("triage offers/refusals match the engine", async () => {
    for (const role of ALL_ROLES) {
      await expectMatchesServer("PmReview", "triage", role);
    }
  });

  it("vote offers/refusals match the engine", async () => {
    for (const role of ALL_ROLES) {
      await expectMatchesServer("CcbReview", "vote", role);
    }
  });

  it("author may formulate own request even as plain stakeholder", async () => {
    const cr = await freshCr("Submitted");
    expect(offered("Submitted", "Stakeholder", "formulate", true)).toBe(true);
    await client.withActor("alice").formulate(cr, {
      deltas: [{ op: "Modify", requirement_id: "R1", new_text: "author edit" }],
    });
  });
});
