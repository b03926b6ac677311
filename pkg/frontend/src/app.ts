// Dashboard application: fetch, build the view model, render, repeat.
// Mutations issue exactly one API call; success and failure both end in a
// refetch, so the screen always shows server truth.

import { ApiClient, ApiError, ApiUnreachable } from "./client.js";
import { renderImpactSvg } from "./graph.js";
import type { PaletteEntry } from "./palette.js";
import {
  STATE_COLUMNS,
  buildDashboard,
  type CrCardVM,
  type DashboardVM,
} from "./viewmodel.js";
import type { ChangeRequest, TransitionRow } from "./types.js";

export class App {
  client: ApiClient;
  table: TransitionRow[] = [];
  vm: DashboardVM | null = null;
  crs: ChangeRequest[] = [];
  selected: string | null = null;
  banner: string | null = null;
  private bannerKind: "offline" | "action" | null = null;

  constructor(
    baseUrl: string,
    private root: HTMLElement,
    actor: string | null = null,
  ) {
    this.client = new ApiClient(baseUrl, actor);
  }

  async start(): Promise<void> {
    this.table = (await this.client.transitionTable()).transitions;
    await this.refresh();
    setInterval(() => void this.refresh(), 4000);
  }

  async refresh(): Promise<void> {
    try {
      const [crsBody, sitesBody] = await Promise.all([
        this.client.listChangeRequests(),
        this.client.sites(),
      ]);
      this.crs = crsBody.change_requests;
      this.vm = buildDashboard(this.client.actor ?? "", this.crs, sitesBody, this.table);
      if (this.bannerKind === "offline") {
        this.banner = null;
        this.bannerKind = null;
      }
    } catch (err) {
      if (err instanceof ApiUnreachable) {
        this.banner = "API unreachable; showing the last loaded view";
        this.bannerKind = "offline";
      } else {
        throw err;
      }
    }
    this.render();
  }

  private setActionError(err: unknown): void {
    this.banner =
      err instanceof ApiError ? `${err.envelope.code}: ${err.envelope.message}` : String(err);
    this.bannerKind = "action";
  }

  private clearActionBanner(): void {
    if (this.bannerKind === "action") {
      this.banner = null;
      this.bannerKind = null;
    }
  }

  async perform(action: string, crId: string, form: Record<string, string>): Promise<void> {
    try {
      if (action === "formulate") {
        await this.client.formulate(crId, {
          deltas: JSON.parse(form["deltas"] || "[]"),
          goals: splitLines(form["goals"]),
          measurements: splitLines(form["measurements"]),
        });
      } else if (action === "triage") {
        await this.client.triage(crId, {
          decision: form["decision"] as "Accept" | "Reject",
          rationale: form["rationale"] ?? "",
        });
      } else if (action === "vote") {
        await this.client.vote(crId, {
          decision: form["decision"] as "Approve" | "Reject" | "Abstain",
          rationale: form["rationale"] ?? "",
        });
      } else if (action === "tally") {
        await this.client.tally(crId, form["quorum"] ? { quorum: Number(form["quorum"]) } : {});
      } else if (action === "implement") {
        await this.client.implement(crId);
      } else {
        throw new Error(`unknown action ${action}`);
      }
      this.clearActionBanner();
    } catch (err) {
      // surface the machine-readable code verbatim; state may be stale
      this.setActionError(err);
    }
    await this.refresh();
  }

  async submitNew(form: Record<string, string>): Promise<void> {
    try {
      await this.client.submit({
        targets: (form["targets"] ?? "").split(",").map((t) => t.trim()).filter(Boolean),
        description: form["description"] ?? "",
        severity: Number(form["severity"] ?? "3"),
      });
      this.clearActionBanner();
    } catch (err) {
      this.setActionError(err);
    }
    await this.refresh();
  }

  async tick(count: number): Promise<void> {
    try {
      await this.client.tick(count);
      this.clearActionBanner();
    } catch (err) {
      this.setActionError(err);
    }
    await this.refresh();
  }

  signIn(actor: string): void {
    this.client = this.client.withActor(actor);
    void this.refresh();
  }

  // -- rendering ----------------------------------------------------------------

  render(): void {
    const vm = this.vm;
    const doc = this.root.ownerDocument;
    this.root.textContent = "";
    if (this.banner) {
      const banner = el(doc, "div", "banner", this.banner);
      this.root.appendChild(banner);
    }
    if (!vm) return;

    this.root.appendChild(this.renderTopBar(doc, vm));
    this.root.appendChild(this.renderSites(doc, vm));
    this.root.appendChild(this.renderQueues(doc, vm));
    const detail = this.selected ? this.crs.find((c) => c.id === this.selected) : undefined;
    if (detail) this.root.appendChild(this.renderDetail(doc, vm, detail));
  }

  private renderTopBar(doc: Document, vm: DashboardVM): HTMLElement {
    const bar = el(doc, "div", "topbar");
    const who = el(
      doc,
      "span",
      "who",
      vm.role ? `${vm.actor} — ${vm.role}` : "not signed in",
    );
    bar.appendChild(who);

    const select = doc.createElement("select");
    select.id = "actor-select";
    const blank = doc.createElement("option");
    blank.value = "";
    blank.textContent = "(sign in as...)";
    select.appendChild(blank);
    for (const actor of vm.actors) {
      const option = doc.createElement("option");
      option.value = actor.id;
      option.textContent = `${actor.id} (${actor.role} @ ${actor.site})`;
      if (actor.id === vm.actor) option.selected = true;
      select.appendChild(option);
    }
    select.addEventListener("change", () => {
      if (select.value) this.signIn(select.value);
    });
    bar.appendChild(select);

    const tickBtn = el(doc, "button", "tick", "advance network (5 ticks)");
    tickBtn.addEventListener("click", () => void this.tick(5));
    bar.appendChild(tickBtn);

    if (vm.role) {
      bar.appendChild(
        this.renderForm(doc, "submit new change", ["targets", "description", "severity"], (form) =>
          void this.submitNew(form),
        ),
      );
    }
    return bar;
  }

  private renderSites(doc: Document, vm: DashboardVM): HTMLElement {
    const panel = el(doc, "div", "sites");
    panel.appendChild(el(doc, "h2", "", "sites"));
    for (const site of vm.sites) {
      const row = el(
        doc,
        "div",
        site.quarantined ? "site quarantined" : "site",
        `${site.id}${site.coordinator ? " (coordinator)" : ""} — seq ${site.applied_seq} — ${site.baseline_hash.slice(0, 12)}` +
          (site.quarantined ? " — QUARANTINED" : "") +
          (site.pendingAcks.length
            ? ` — awaiting: ${site.pendingAcks.map((p) => `#${p.seq}`).join(", ")}`
            : ""),
      );
      panel.appendChild(row);
    }
    return panel;
  }

  private renderQueues(doc: Document, vm: DashboardVM): HTMLElement {
    const board = el(doc, "div", "board");
    for (const column of STATE_COLUMNS) {
      const cards = vm.queues[column] ?? [];
      const col = el(doc, "div", "column");
      col.appendChild(el(doc, "h3", "", `${column} (${cards.length})`));
      for (const card of cards) {
        col.appendChild(this.renderCard(doc, card));
      }
      board.appendChild(col);
    }
    return board;
  }

  private renderCard(doc: Document, card: CrCardVM): HTMLElement {
    const node = el(doc, "div", "card");
    const title = el(doc, "a", "cr-id", card.id);
    title.addEventListener("click", () => {
      this.selected = card.id;
      this.render();
    });
    node.appendChild(title);
    node.appendChild(el(doc, "div", "desc", `${card.description} (sev ${card.severity})`));
    if (card.priority !== null) {
      node.appendChild(el(doc, "div", "priority", `priority ${card.priority.toFixed(2)}`));
    }
    if (card.conflicts.length) {
      node.appendChild(el(doc, "div", "conflicts", `conflicts: ${card.conflicts.join(", ")}`));
    }
    for (const entry of card.palette) {
      node.appendChild(this.renderAction(doc, card.id, entry));
    }
    return node;
  }

  private renderAction(doc: Document, crId: string, entry: PaletteEntry): HTMLElement {
    const fields: Record<string, string[]> = {
      formulate: ["deltas", "goals", "measurements"],
      triage: ["decision:Accept|Reject", "rationale"],
      vote: ["decision:Approve|Reject|Abstain", "rationale"],
      tally: ["quorum"],
      implement: [],
    };
    return this.renderForm(doc, entry.action, fields[entry.action] ?? [], (form) =>
      void this.perform(entry.action, crId, form),
    );
  }

  private renderForm(
    doc: Document,
    label: string,
    fields: string[],
    onSubmit: (form: Record<string, string>) => void,
  ): HTMLElement {
    const form = el(doc, "form", "action-form");
    form.appendChild(el(doc, "strong", "", label));
    const inputs = new Map<string, HTMLInputElement | HTMLSelectElement | HTMLTextAreaElement>();
    for (const spec of fields) {
      const [name, options] = spec.split(":") as [string, string?];
      let input: HTMLInputElement | HTMLSelectElement | HTMLTextAreaElement;
      if (options) {
        const select = doc.createElement("select");
        for (const value of options.split("|")) {
          const option = doc.createElement("option");
          option.value = value;
          option.textContent = value;
          select.appendChild(option);
        }
        input = select;
      } else if (name === "deltas") {
        const area = doc.createElement("textarea");
        area.placeholder = '[{"op":"Modify","requirement_id":"R1","new_text":"..."}]';
        input = area;
      } else {
        const field = doc.createElement("input");
        field.placeholder = name;
        input = field;
      }
      input.setAttribute("name", name);
      inputs.set(name, input);
      form.appendChild(input);
    }
    const button = doc.createElement("button");
    button.type = "submit";
    button.textContent = "go";
    form.appendChild(button);
    form.addEventListener("submit", (event) => {
      event.preventDefault();
      const values: Record<string, string> = {};
      for (const [name, input] of inputs) values[name] = input.value;
      onSubmit(values);
    });
    return form;
  }

  private renderDetail(doc: Document, vm: DashboardVM, cr: ChangeRequest): HTMLElement {
    const panel = el(doc, "div", "detail");
    panel.appendChild(el(doc, "h2", "", `${cr.id} — ${cr.state}`));
    panel.appendChild(el(doc, "div", "", cr.description));
    panel.appendChild(
      el(doc, "div", "", `targets: ${cr.targets.join(", ")} | author: ${cr.author}`),
    );
    if (cr.goals.length) panel.appendChild(el(doc, "div", "", `goals: ${cr.goals.join("; ")}`));
    const history = el(doc, "div", "history");
    history.appendChild(el(doc, "h3", "", "timeline"));
    for (const entry of cr.history) {
      history.appendChild(el(doc, "div", "", `ts ${entry.ts}: ${entry.state} (${entry.actor})`));
    }
    panel.appendChild(history);
    if (cr.form) {
      panel.appendChild(
        el(
          doc,
          "div",
          "form-summary",
          `form: priority ${cr.form.priority_score.toFixed(2)}, preliminary cost ` +
            `${cr.form.preliminary_cost.toFixed(2)} ph, conflicts: ${cr.form.conflicts.join(", ") || "none"}`,
        ),
      );
    }
    const votes = Object.values(cr.votes);
    if (votes.length) {
      const block = el(doc, "div", "votes");
      block.appendChild(el(doc, "h3", "", "votes"));
      for (const vote of votes) {
        block.appendChild(
          el(doc, "div", "", `${vote.member}: ${vote.decision}` + (vote.rationale ? ` — ${vote.rationale}` : "")),
        );
      }
      panel.appendChild(block);
    }
    if (cr.decision) {
      panel.appendChild(
        el(
          doc,
          "div",
          "",
          `CCB: ${cr.decision.outcome} (${cr.decision.approvals}/` +
            `${cr.decision.rejections}/${cr.decision.abstentions}, quorum ${cr.decision.quorum})`,
        ),
      );
    }
    const phase = cr.final_impact ? "final" : cr.preliminary_impact ? "preliminary" : null;
    if (phase) {
      const host = el(doc, "div", "impact");
      host.appendChild(el(doc, "h3", "", `${phase} impact`));
      void this.client.impact(cr.id, phase).then((impact) => {
        host.appendChild(
          el(doc, "div", "", `cost ${impact.total_cost.toFixed(2)} ph, ${impact.schedule_days} day(s)`),
        );
        host.appendChild(renderImpactSvg(impact, doc));
      });
      panel.appendChild(host);
    }
    return panel;
  }
}

function el(doc: Document, tag: string, className: string, text?: string): HTMLElement {
  const node = doc.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function splitLines(value: string | undefined): string[] {
  return (value ?? "").split("\n").map((line) => line.trim()).filter(Boolean);
}
