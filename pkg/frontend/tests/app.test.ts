// @vitest-environment happy-dom
//
// Shell behavior: the app renders entirely from fetched bodies, shows the
// unreachable banner while keeping the cached view, and surfaces engine
// error codes verbatim in the banner.

import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { App } from "../src/app.js";
import { ApiClient } from "../src/client.js";
import { spawnServer, type ServerHandle } from "./helpers.js";

let server: ServerHandle;

beforeAll(async () => {
  server = await spawnServer();
});

afterAll(() => server.stop());

function mount(): HTMLElement {
  const root = document.createElement("div");
  document.body.appendChild(root);
  return root;
}

describe("dashboard shell", () => {
  it("renders queues, site board, and actor roster from the API", async () => {
    const alice = new ApiClient(server.baseUrl, "alice");
    await alice.submit({ targets: ["R1"], description: "visible on the board", severity: 3 });

    const root = mount();
    const app = new App(server.baseUrl, root, "alice");
    app.table = (await app.client.transitionTable()).transitions;
    await app.refresh();

    expect(root.querySelectorAll(".column").length).toBe(13);
    expect(root.textContent).toContain("visible on the board");
    expect(root.textContent).toContain("hq (coordinator)");
    const options = [...root.querySelectorAll("#actor-select option")].map((o) => o.textContent);
    expect(options.some((o) => o!.startsWith("pete"))).toBe(true);
  });

  it("keeps the last view and shows a banner when the API goes away", async () => {
    const root = mount();
    const app = new App(server.baseUrl, root, "alice");
    app.table = (await app.client.transitionTable()).transitions;
    await app.refresh();
    const columnsBefore = root.querySelectorAll(".card").length;

    app.client = new ApiClient("http://127.0.0.1:9", "alice"); // nothing listens there
    await app.refresh();

    expect(root.querySelector(".banner")?.textContent).toContain("API unreachable");
    expect(root.querySelectorAll(".card").length).toBe(columnsBefore); // cached view intact
  });

  it("surfaces the engine's error code verbatim after a rejected action", async () => {
    const root = mount();
    const app = new App(server.baseUrl, root, "m1"); // CCB member may not triage
    app.table = (await app.client.transitionTable()).transitions;
    await app.refresh();

    const crId = (
      await new ApiClient(server.baseUrl, "alice").submit({
        targets: ["R2"],
        description: "gate probe",
        severity: 2,
      })
    ).change_request.id;
    await new ApiClient(server.baseUrl, "alice").formulate(crId, {
      deltas: [{ op: "Modify", requirement_id: "R2", new_text: "x" }],
    });

    await app.perform("triage", crId, { decision: "Accept" });
    expect(root.querySelector(".banner")?.textContent).toContain("ForbiddenRole");
    // and the board still reflects server truth
    expect(root.textContent).toContain("gate probe");
  });
});
