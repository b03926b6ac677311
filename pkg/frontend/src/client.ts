// Thin fetch wrapper over the service's published routes.  The dashboard
// holds no authoritative state: everything rendered comes back through here.

import type {
  ChangeRequest,
  ErrorEnvelope,
  ImpactBody,
  SitesBody,
  TickBody,
  TransitionRow,
} from "./types.js";

export const ACTOR_HEADER = "X-Actor-Id";

export class ApiError extends Error {
  constructor(
    public status: number,
    public envelope: ErrorEnvelope,
  ) {
    super(`${envelope.code}: ${envelope.message}`);
  }
}

export class ApiUnreachable extends Error {}

export class ApiClient {
  constructor(
    public baseUrl: string,
    public actor: string | null = null,
  ) {}

  withActor(actor: string): ApiClient {
    return new ApiClient(this.baseUrl, actor);
  }

  private async call<T>(method: string, path: string, body?: unknown): Promise<T> {
    const headers: Record<string, string> = { "Content-Type": "application/json" };
    if (this.actor) headers[ACTOR_HEADER] = this.actor;
    let response: Response;
    try {
      response = await fetch(this.baseUrl + path, {
        method,
        headers,
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch (err) {
      throw new ApiUnreachable(String(err));
    }
    const payload = (await response.json()) as Record<string, unknown>;
    if (!response.ok) {
      throw new ApiError(response.status, payload["error"] as ErrorEnvelope);
    }
    return payload as T;
  }

  // -- reads ---------------------------------------------------------------

  transitionTable(): Promise<{ transitions: TransitionRow[] }> {
    return this.call("GET", "/transition-table");
  }

  listChangeRequests(state?: string): Promise<{ change_requests: ChangeRequest[] }> {
    const query = state ? `?state=${encodeURIComponent(state)}` : "";
    return this.call("GET", `/change-requests${query}`);
  }

  sites(): Promise<SitesBody> {
    return this.call("GET", "/sites");
  }

  impact(crId: string, phase: "preliminary" | "final"): Promise<ImpactBody> {
    return this.call("GET", `/change-requests/${encodeURIComponent(crId)}/impact?phase=${phase}`);
  }

  report(crId: string): Promise<{ report: Record<string, unknown>; text: string }> {
    return this.call("GET", `/change-requests/${encodeURIComponent(crId)}/report`);
  }

  // -- mutations -----------------------------------------------------------

  submit(body: {
    targets: string[];
    description: string;
    severity: number;
    origin_site?: string;
  }): Promise<{ change_request: ChangeRequest }> {
    return this.call("POST", "/change-requests", body);
  }

  formulate(
    crId: string,
    body: { deltas: unknown[]; goals?: string[]; measurements?: string[] },
  ): Promise<{ change_request: ChangeRequest }> {
    return this.call("POST", `/change-requests/${encodeURIComponent(crId)}/formulate`, body);
  }

  triage(
    crId: string,
    body: { decision: "Accept" | "Reject"; rationale?: string },
  ): Promise<{ change_request: ChangeRequest; validation_error: ErrorEnvelope | null }> {
    return this.call("POST", `/change-requests/${encodeURIComponent(crId)}/triage`, body);
  }

  vote(
    crId: string,
    body: { decision: "Approve" | "Reject" | "Abstain"; rationale?: string },
  ): Promise<{ change_request: ChangeRequest; tally: Record<string, number> }> {
    return this.call("POST", `/change-requests/${encodeURIComponent(crId)}/votes`, body);
  }

  tally(
    crId: string,
    body: { quorum?: number } = {},
  ): Promise<{ change_request: ChangeRequest; decision: Record<string, unknown> }> {
    return this.call("POST", `/change-requests/${encodeURIComponent(crId)}/tally`, body);
  }

  implement(crId: string): Promise<{ change_request: ChangeRequest; deferred: boolean }> {
    return this.call("POST", `/change-requests/${encodeURIComponent(crId)}/implement`, {});
  }

  tick(count = 1): Promise<TickBody> {
    return this.call("POST", "/harness/tick", { count });
  }
}
