// Typed client for the review service. Every number the UI shows comes
// from these payloads; nothing is recomputed client-side.

export interface TransitionRecord {
  id: string;
  trajectory_id: string;
  step_index: number;
  state: number[];
  action: number;
  reward: number;
  next_state: number[];
  behavior_prob: number | null;
  is_initial: boolean;
  is_terminal: boolean;
}

export interface TransitionView {
  record: TransitionRecord;
  flagged: boolean;
  influence: number | null;
  normalized_influence: number | null;
}

export interface FlagEntry {
  unit_id: string;
  unit_kind: "transition" | "trajectory";
  influence: number | null;
  normalized_influence: number | null;
  dead_end: boolean;
  covers: string[];
  verdict: string | null;
  context: TransitionView[];
}

export interface TransitionDetail extends TransitionView {
  version: number;
  dead_end: boolean;
  context: TransitionView[];
}

export interface VersionSummary {
  version: number;
  parent: number | null;
  fingerprint: string;
  transitions: number;
  v_hat: number;
  outcome: string;
  edit: Record<string, unknown> | null;
}

export interface StatusPayload {
  version: number;
  latest_version: number;
  estimator: string;
  policy: string;
  v_hat: number;
  outcome: string;
  validated: boolean;
  diagnosis: Record<string, unknown>;
  history: unknown[];
}

export interface FieldPatch {
  field: "state" | "next_state" | "reward" | "action" | "behavior_prob";
  index?: number;
  value: number;
  transition_id?: string;
}

export interface VerdictBody {
  version: number;
  unit_id: string;
  decision: "representative" | "artefact_remove" | "artefact_correct";
  correction?: FieldPatch[];
  note?: string;
}

export interface VerdictResponse {
  version: number;
  created_version: number | null;
  v_hat: number;
}

export class ApiError extends Error {
  constructor(readonly status: number, readonly detail: string) {
    super(`${status}: ${detail}`);
  }
}

// Same-origin by default: the service hosts the built bundle at "/".
let baseUrl = "";

export function setBaseUrl(url: string): void {
  baseUrl = url.replace(/\/$/, "");
}

async function request<T>(path: string, init?: RequestInit): Promise<T> {
  const res = await fetch(`${baseUrl}${path}`, init);
  if (!res.ok) {
    let detail = res.statusText;
    try {
      const body = await res.json();
      if (typeof body.detail === "string") detail = body.detail;
      else if (body.detail) detail = JSON.stringify(body.detail);
    } catch {
      // non-JSON error body; keep the status text
    }
    throw new ApiError(res.status, detail);
  }
  return res.json() as Promise<T>;
}

const versionQuery = (version?: number) =>
  version === undefined ? "" : `?version=${version}`;

export function getVersions(): Promise<VersionSummary[]> {
  return request("/versions");
}

export function getFlags(version?: number): Promise<FlagEntry[]> {
  return request(`/flags${versionQuery(version)}`);
}

export function getStatus(version?: number): Promise<StatusPayload> {
  return request(`/status${versionQuery(version)}`);
}

export function getTransition(unitId: string, version?: number): Promise<TransitionDetail> {
  return request(`/transition/${encodeURIComponent(unitId)}${versionQuery(version)}`);
}

export function postVerdict(body: VerdictBody): Promise<VerdictResponse> {
  return request("/verdict", {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify(body),
  });
}
