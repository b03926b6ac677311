// The action palette: which buttons a signed-in actor sees for a change
// request.  Derived entirely from the transition table the API serves, so
// the dashboard can never offer a transition the engine would refuse on
// (state, role) grounds.

import type { TransitionRow } from "./types.js";

export interface PaletteEntry {
  action: string; // API action: formulate | triage | vote | tally | implement
  events: string[]; // table events behind it, e.g. triage_accept/triage_reject
  nextStates: string[];
}

export function guardAllows(guard: string, role: string, isAuthor: boolean): boolean {
  if (guard === "auto") return false;
  if (guard === "any") return true;
  if (guard.startsWith("role=")) {
    return guard
      .slice("role=".length)
      .split("|")
      .some((alt) => (alt === "author" ? isAuthor : alt === role));
  }
  throw new Error(`unknown guard expression: ${guard}`);
}

export function actionPalette(
  table: TransitionRow[],
  state: string,
  role: string,
  isAuthor: boolean,
): PaletteEntry[] {
  const byAction = new Map<string, PaletteEntry>();
  for (const row of table) {
    if (row.state !== state || row.action === null) continue;
    if (!guardAllows(row.guard, role, isAuthor)) continue;
    let entry = byAction.get(row.action);
    if (!entry) {
      entry = { action: row.action, events: [], nextStates: [] };
      byAction.set(row.action, entry);
    }
    entry.events.push(row.event);
    if (!entry.nextStates.includes(row.next)) entry.nextStates.push(row.next);
  }
  return [...byAction.values()].sort((a, b) => a.action.localeCompare(b.action));
}

/** All states the served table knows, for rendering queue columns. */
export function statesOf(table: TransitionRow[]): string[] {
  const states = new Set<string>();
  for (const row of table) {
    states.add(row.state);
    states.add(row.next);
  }
  return [...states];
}
