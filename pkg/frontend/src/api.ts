// Gateway client. The console mutates state only through POST /login and
// POST /items/{uuid}/execute; everything else is reads.

export interface AgentInfo {
  agent_id: string;
  name: string;
  roles: string[];
}

export interface Job {
  item: string;
  activity_path: string;
  transition: string;
  role: string;
  // pinned outcome schema for Complete jobs on data-collecting activities
  schema?: [string, number] | null;
}

export interface EventSummary {
  id: number;
  timestamp_ms: number;
  agent: string;
  activity_path: string;
  transition: string;
  schema: [string, number] | null;
  viewpoint_written: string | null;
  has_outcome: boolean;
}

export interface HistoryPage {
  item: string;
  events: EventSummary[];
  next_cursor: number | null;
}

export interface Violation {
  path: string;
  rule: string;
  message: string;
}

export interface ItemSummary {
  item: string;
  last_event_id: number;
  properties: { name: string; value: string; type: string; mutable: boolean }[];
  collections: {
    name: string;
    kind: string;
    slots: { id: number; target: string | null }[];
  }[];
  viewpoints: { schema: string; view: string; event_id: number }[];
  workflow: {
    source: string;
    activities: Record<string, { state: string; active: boolean }>;
  } | null;
  paths: string[];
}

export class GatewayError extends Error {
  status: number;
  error: string;
  violations: Violation[];

  constructor(status: number, body: { error?: string; detail?: string; violations?: Violation[] }) {
    super(body.detail ?? `gateway error ${status}`);
    this.status = status;
    this.error = body.error ?? "Error";
    this.violations = body.violations ?? [];
  }

  get unauthenticated(): boolean {
    return this.status === 401;
  }

  get jobGone(): boolean {
    return this.status === 409;
  }
}

export type UnauthorizedHandler = () => void;

export class Gateway {
  baseUrl: string;
  token: string | null = null;
  agent: AgentInfo | null = null;
  onUnauthorized: UnauthorizedHandler | null = null;

  constructor(baseUrl: string) {
    this.baseUrl = baseUrl.replace(/\/$/, "");
  }

  private async request(method: string, path: string, body?: unknown): Promise<Response> {
    const headers: Record<string, string> = {};
    if (this.token) headers["Authorization"] = `Bearer ${this.token}`;
    let payload: string | undefined;
    if (body !== undefined) {
      headers["Content-Type"] = "application/json";
      payload = JSON.stringify(body);
    }
    const response = await fetch(this.baseUrl + path, { method, headers, body: payload });
    if (!response.ok) {
      let parsed: { error?: string; detail?: string; violations?: Violation[] } = {};
      try {
        parsed = await response.json();
      } catch {
        parsed = { detail: response.statusText };
      }
      const error = new GatewayError(response.status, parsed);
      if (error.unauthenticated && this.onUnauthorized) this.onUnauthorized();
      throw error;
    }
    return response;
  }

  private async json<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await this.request(method, path, body);
    return (await response.json()) as T;
  }

  async login(name: string, password: string): Promise<AgentInfo> {
    const result = await this.json<{ token: string; agent: AgentInfo }>(
      "POST", "/login", { name, password });
    this.token = result.token;
    this.agent = result.agent;
    return result.agent;
  }

  async pollJobs(role: string, timeoutSeconds = 0.1): Promise<Job[]> {
    const params = new URLSearchParams({ role, timeout: String(timeoutSeconds) });
    const result = await this.json<{ jobs: Job[] }>("GET", `/jobs/poll?${params}`);
    return result.jobs;
  }

  async itemJobs(item: string): Promise<Job[]> {
    const result = await this.json<{ jobs: Job[] }>("GET", `/items/${item}/jobs`);
    return result.jobs;
  }

  async itemSummary(item: string): Promise<ItemSummary> {
    return this.json<ItemSummary>("GET", `/items/${item}`);
  }

  async history(item: string, cursor?: number, size = 100): Promise<HistoryPage> {
    const params = new URLSearchParams({ size: String(size) });
    if (cursor !== undefined) params.set("cursor", String(cursor));
    return this.json<HistoryPage>("GET", `/items/${item}/history?${params}`);
  }

  async fullHistory(item: string): Promise<EventSummary[]> {
    const events: EventSummary[] = [];
    let cursor: number | undefined;
    for (;;) {
      const page = await this.history(item, cursor, 200);
      events.push(...page.events);
      if (page.next_cursor === null) return events;
      cursor = page.next_cursor;
    }
  }

  async viewpointDocument(item: string, schema: string, view: string): Promise<string> {
    const response = await this.request(
      "GET", `/items/${item}/viewpoints/${schema}/${view}`);
    return response.text();
  }

  async formModel(schema: string, version: number): Promise<{ fields: FormFieldSpec[] }> {
    return this.json("GET", `/schemas/${schema}/${version}/form`);
  }

  async execute(item: string, activityPath: string, transition: string,
                outcome?: string): Promise<EventSummary> {
    const result = await this.json<{ event: EventSummary }>(
      "POST", `/items/${item}/execute`,
      { activity_path: activityPath, transition, outcome: outcome ?? null });
    return result.event;
  }

  async domain(path: string): Promise<{ path: string; item: string | null; children: { name: string; item: string | null }[] }> {
    const clean = path.replace(/^\//, "");
    return this.json("GET", `/domain/${clean}`);
  }
}

// mirror of the gateway's form-model entries
export interface FormFieldSpec {
  kind: "field" | "group";
  label: string;
  path: string;
  input?: "text" | "integer" | "decimal" | "boolean" | "date" | "datetime" | "select";
  required?: boolean;
  options?: string[];
  pattern?: string;
  default?: string;
  repeatable?: boolean;
  min_occurs?: number;
  max_occurs?: number | null;
  recursive?: boolean;
  fields?: FormFieldSpec[];
}
