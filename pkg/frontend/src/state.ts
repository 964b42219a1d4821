// Chat session state, kept apart from the DOM so it can be tested alone.
//
// The server's transcript is authoritative: successful sends append
// locally (the reply is already in hand), but after a failed send the
// store re-syncs from GET /sessions/{id}, because the server keeps the
// user turn when a decode blows up mid-flight and drops it when the
// request was rejected outright.

import { ApiClient, ApiError, SendOptions, Trace } from "./api.js";

export interface TurnView {
  speaker: "user" | "agent";
  text: string;
  trace?: Trace;
}

export interface ChatError {
  kind: string;
  detail: string;
}

export interface ChatSnapshot {
  phase: "setup" | "ready";
  sessionId: string | null;
  persona: string[];
  turns: TurnView[];
  inFlight: boolean;
  error: ChatError | null;
  /** Text of the last failed send, offered back for retry. */
  pendingText: string | null;
}

export type Listener = (snap: ChatSnapshot) => void;

export class ChatStore {
  private phase: "setup" | "ready" = "setup";
  private sessionId: string | null = null;
  private persona: string[] = [];
  private turns: TurnView[] = [];
  private inFlight = false;
  private error: ChatError | null = null;
  private pendingText: string | null = null;
  private listeners = new Set<Listener>();

  constructor(private readonly client: ApiClient) {}

  snapshot(): ChatSnapshot {
    return {
      phase: this.phase,
      sessionId: this.sessionId,
      persona: [...this.persona],
      turns: this.turns.map((t) => ({ ...t })),
      inFlight: this.inFlight,
      error: this.error ? { ...this.error } : null,
      pendingText: this.pendingText,
    };
  }

  subscribe(fn: Listener): () => void {
    this.listeners.add(fn);
    fn(this.snapshot());
    return () => this.listeners.delete(fn);
  }

  private emit(): void {
    const snap = this.snapshot();
    for (const fn of this.listeners) fn(snap);
  }

  async start(persona?: string[] | "random"): Promise<void> {
    if (this.inFlight || this.phase === "ready") return;
    this.inFlight = true;
    this.error = null;
    this.emit();
    try {
      const started = await this.client.createSession(persona);
      this.sessionId = started.session_id;
      this.persona = started.persona;
      this.phase = "ready";
    } catch (err) {
      this.error = asChatError(err);
    } finally {
      this.inFlight = false;
      this.emit();
    }
  }

  /** One send at a time: calls while a reply is pending are dropped. */
  async send(text: string, opts: SendOptions = {}): Promise<void> {
    const trimmed = text.trim();
    if (!trimmed || this.inFlight || this.sessionId === null) return;
    this.inFlight = true;
    this.error = null;
    this.pendingText = null;
    this.turns.push({ speaker: "user", text: trimmed });
    this.emit();
    try {
      const reply = await this.client.sendMessage(this.sessionId, trimmed, opts);
      this.turns.push({ speaker: "agent", text: reply.reply, trace: reply.trace });
    } catch (err) {
      this.error = asChatError(err);
      this.pendingText = trimmed;
      await this.resync();
    } finally {
      this.inFlight = false;
      this.emit();
    }
  }

  /** Re-send the message from the last failed attempt. */
  async retry(opts: SendOptions = {}): Promise<void> {
    const text = this.pendingText;
    if (text === null) return;
    await this.send(text, opts);
  }

  /** Rebuild the transcript from the server's copy. */
  private async resync(): Promise<void> {
    if (this.sessionId === null) return;
    try {
      const snap = await this.client.getSession(this.sessionId);
      const turns: TurnView[] = [];
      let agentSeen = 0;
      for (const t of snap.turns) {
        if (t.speaker === "agent") {
          turns.push({
            speaker: "agent",
            text: t.text,
            trace: snap.traces[agentSeen],
          });
          agentSeen += 1;
        } else {
          turns.push({ speaker: "user", text: t.text });
        }
      }
      this.turns = turns;
      this.persona = snap.persona;
    } catch {
      // keep the local transcript if the server is unreachable
    }
  }
}

function asChatError(err: unknown): ChatError {
  if (err instanceof ApiError) return { kind: err.kind, detail: err.detail };
  return { kind: "network", detail: err instanceof Error ? err.message : String(err) };
}
