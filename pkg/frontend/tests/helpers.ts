// Boots the real backend for contract tests: fresh temp config + event log,
// ephemeral port, torn down with the test file.

import { spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

// Fixed deployment so recorded fixtures stay byte-stable across runs.
export const DEPLOY_CONFIG = {
  sites: [
    { id: "hq", utc_offset_minutes: 0, daily_capacity: 8.0, coordinator: true },
    { id: "asia", utc_offset_minutes: 480, daily_capacity: 6.0 },
    { id: "europe", utc_offset_minutes: 60, daily_capacity: 6.0 },
    { id: "americas", utc_offset_minutes: -300, daily_capacity: 6.0 },
  ],
  actors: [
    { id: "alice", role: "Stakeholder", site: "hq", stakeholder_weight: 1.0 },
    { id: "bob", role: "Stakeholder", site: "asia", stakeholder_weight: 0.4 },
    { id: "carol", role: "ChangeRequestManager", site: "hq" },
    { id: "pete", role: "ProjectManager", site: "hq" },
    { id: "petra", role: "ProjectManager", site: "europe" },
    { id: "m1", role: "CcbMember", site: "hq" },
    { id: "m2", role: "CcbMember", site: "asia" },
    { id: "m3", role: "CcbMember", site: "europe" },
    { id: "sam", role: "SiteLead", site: "americas" },
    { id: "quinn", role: "QaManager", site: "europe" },
  ],
  requirements: [
    { id: "R1", title: "Login", text: "Users can log in.", effort: 8.0, owner_site: "hq" },
    { id: "R2", title: "Audit trail", text: "Actions are logged.", effort: 4.0, owner_site: "asia" },
    { id: "R3", title: "CSV export", text: "Reports export to CSV.", effort: 2.0, owner_site: "europe" },
    { id: "R4", title: "Search", text: "Full-text search.", effort: 6.0, owner_site: "americas" },
  ],
  trace_links: [
    { from: "R2", to: "R1", kind: "DependsOn" },
    { from: "R3", to: "R2", kind: "DependsOn" },
    { from: "R4", to: "R1", kind: "Refines" },
  ],
  ccb_quorum: null,
  cost_params: { gamma: 0.5, w_sev: 2.0, w_stake: 1.0, w_cost: 0.1 },
  network: { seed: 42, base_latency: 1, jitter: 0, retry_interval: 4, fault_rules: [] },
  log_path: "events.log",
};

export interface ServerHandle {
  baseUrl: string;
  stop: () => void;
}

export async function spawnServer(): Promise<ServerHandle> {
  const dir = mkdtempSync(join(tmpdir(), "reqflow-ui-test-"));
  const configPath = join(dir, "deploy.json");
  writeFileSync(configPath, JSON.stringify(DEPLOY_CONFIG, null, 2));

  const child: ChildProcess = spawn(
    "python3",
    ["-m", "reqflow.cli", "--config", configPath, "serve", "--port", "0"],
    { stdio: ["ignore", "pipe", "pipe"] },
  );

  const baseUrl = await new Promise<string>((resolve, reject) => {
    const timer = setTimeout(() => reject(new Error("backend did not start in time")), 15000);
    let buffer = "";
    child.stdout!.on("data", (chunk: Buffer) => {
      buffer += chunk.toString();
      const match = /listening on (http:\/\/[\d.]+:\d+)/.exec(buffer);
      if (match) {
        clearTimeout(timer);
        resolve(match[1]!);
      }
    });
    let stderr = "";
    child.stderr!.on("data", (chunk: Buffer) => {
      stderr += chunk.toString();
    });
    child.on("exit", (code) => {
      clearTimeout(timer);
      reject(new Error(`backend exited early (code ${code}): ${stderr}`));
    });
  });

  return {
    baseUrl,
    stop: () => {
      child.kill("SIGTERM");
    },
  };
}
