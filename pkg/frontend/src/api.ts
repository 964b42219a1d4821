// Typed client for the chat service's JSON contract.

export interface Trace {
  mode: string;
  attribute: string;
  story_id: string | null;
  story_text: string | null;
  iterations: number;
  final_loss: number | null;
  losses: number[];
  warning: string | null;
}

export interface Reply {
  reply: string;
  trace: Trace;
}

export interface SessionStart {
  session_id: string;
  persona: string[];
}

export interface TurnRecord {
  speaker: string;
  text: string;
}

export interface SessionSnapshot {
  session_id: string;
  persona: string[];
  turns: TurnRecord[];
  traces: Trace[];
}

export interface Health {
  status: string;
  model_version: string;
}

export interface SendOptions {
  baseline?: string;
  overrides?: Record<string, number>;
}

/** Error envelope every non-2xx service response carries. */
export class ApiError extends Error {
  constructor(
    readonly kind: string,
    readonly detail: string,
    readonly status: number,
  ) {
    super(detail);
    this.name = "ApiError";
  }
}

async function toApiError(res: Response): Promise<ApiError> {
  let kind = "http";
  let detail = `${res.status} ${res.statusText}`;
  try {
    const body = (await res.json()) as { error?: string; detail?: string };
    if (body && typeof body.error === "string") kind = body.error;
    if (body && typeof body.detail === "string") detail = body.detail;
  } catch {
    // non-JSON error body; keep the status line
  }
  return new ApiError(kind, detail, res.status);
}

export class ApiClient {
  constructor(readonly base: string = "") {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const res = await fetch(this.base + path, {
      headers: { "content-type": "application/json" },
      ...init,
    });
    if (!res.ok) throw await toApiError(res);
    return (await res.json()) as T;
  }

  health(): Promise<Health> {
    return this.request<Health>("/healthz");
  }

  /** Omit `persona` (or pass "random") to let the server draw one. */
  createSession(persona?: string[] | "random"): Promise<SessionStart> {
    const body = persona === undefined ? {} : { persona };
    return this.request<SessionStart>("/sessions", {
      method: "POST",
      body: JSON.stringify(body),
    });
  }

  sendMessage(
    sessionId: string,
    text: string,
    opts: SendOptions = {},
  ): Promise<Reply> {
    const body: Record<string, unknown> = { text };
    if (opts.baseline) body.baseline = opts.baseline;
    if (opts.overrides && Object.keys(opts.overrides).length > 0) {
      body.overrides = opts.overrides;
    }
    return this.request<Reply>(
      `/sessions/${encodeURIComponent(sessionId)}/messages`,
      { method: "POST", body: JSON.stringify(body) },
    );
  }

  getSession(sessionId: string): Promise<SessionSnapshot> {
    return this.request<SessionSnapshot>(
      `/sessions/${encodeURIComponent(sessionId)}`,
    );
  }
}
