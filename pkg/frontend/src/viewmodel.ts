// Pure view-model builders.  Input: API response bodies.  Output: exactly
// what the renderer shows.  No field in here is invented client-side; every
// value is traceable to a response payload (the contract tests pin this).

import { actionPalette, type PaletteEntry } from "./palette.js";
import type {
  ActorRow,
  ChangeRequest,
  SitesBody,
  TransitionRow,
  VerificationRow,
} from "./types.js";

// Canonical column order for the queue board (presentation order only).
export const STATE_COLUMNS = [
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
  "RejectedByPm",
  "CcbRejected",
] as const;

export interface SiteBoardRow {
  id: string;
  coordinator: boolean;
  applied_seq: number;
  baseline_hash: string;
  quarantined: boolean;
  pendingAcks: { seq: number; cr_id: string }[]; // change sets this site has not acked
}

export interface CrCardVM {
  id: string;
  state: string;
  description: string;
  severity: number;
  author: string;
  priority: number | null;
  conflicts: string[];
  palette: PaletteEntry[];
}

export interface DashboardVM {
  actor: string;
  role: string | null; // null: actor unknown to the service
  queues: Record<string, CrCardVM[]>;
  sites: SiteBoardRow[];
  changeSets: VerificationRow[];
  actors: ActorRow[];
}

export function roleOf(actors: ActorRow[], actorId: string): string | null {
  const row = actors.find((a) => a.id === actorId);
  return row ? row.role : null;
}

export function buildCrCard(
  cr: ChangeRequest,
  table: TransitionRow[],
  actorId: string,
  role: string | null,
): CrCardVM {
  return {
    id: cr.id,
    state: cr.state,
    description: cr.description,
    severity: cr.severity,
    author: cr.author,
    priority: cr.form ? cr.form.priority_score : null,
    conflicts: cr.form ? cr.form.conflicts : [],
    palette: role === null ? [] : actionPalette(table, cr.state, role, cr.author === actorId),
  };
}

export function buildDashboard(
  actorId: string,
  crs: ChangeRequest[],
  sitesBody: SitesBody,
  table: TransitionRow[],
): DashboardVM {
  const role = roleOf(sitesBody.actors, actorId);
  const queues: Record<string, CrCardVM[]> = {};
  for (const column of STATE_COLUMNS) queues[column] = [];
  for (const cr of crs) {
    const card = buildCrCard(cr, table, actorId, role);
    (queues[cr.state] ??= []).push(card);
  }
  for (const column of Object.keys(queues)) {
    queues[column]!.sort((a, b) => a.id.localeCompare(b.id));
  }
  const sites: SiteBoardRow[] = sitesBody.sites.map((site) => ({
    id: site.id,
    coordinator: site.coordinator,
    applied_seq: site.applied_seq,
    baseline_hash: site.baseline_hash,
    quarantined: site.quarantined,
    pendingAcks: site.coordinator
      ? []
      : sitesBody.change_sets
          .filter((row) => !row.complete && row.missing_sites.includes(site.id))
          .map((row) => ({ seq: row.seq, cr_id: row.cr_id })),
  }));
  return {
    actor: actorId,
    role,
    queues,
    sites,
    changeSets: sitesBody.change_sets,
    actors: sitesBody.actors,
  };
}
