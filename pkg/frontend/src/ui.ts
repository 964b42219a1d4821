// DOM layer: a chat panel bound to one ChatStore.
//
// All the dynamic regions re-render from store snapshots; the transcript
// appends in place so open trace panels stay open across new turns.

import { ApiClient, SendOptions, Trace } from "./api.js";
import { ChatSnapshot, ChatStore, TurnView } from "./state.js";

export interface ChatHandle {
  store: ChatStore;
  root: HTMLElement;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  if (text !== undefined) node.textContent = text;
  return node;
}

function knobValue(input: HTMLInputElement): number | null {
  if (input.value.trim() === "") return null;
  const parsed = Number(input.value);
  return Number.isFinite(parsed) ? parsed : null;
}

export function mountChat(root: HTMLElement, client: ApiClient): ChatHandle {
  const store = new ChatStore(client);
  root.classList.add("chat");

  // --- setup form -------------------------------------------------------
  const setup = el("form", { "data-testid": "setup", class: "setup" });
  const personaInput = el("textarea", {
    "data-testid": "persona-input",
    rows: "4",
    placeholder: "one persona attribute per line; leave empty for a random persona",
  });
  const startBtn = el("button", { "data-testid": "start", type: "submit" }, "start chat");
  setup.append(personaInput, startBtn);
  setup.addEventListener("submit", (ev) => {
    ev.preventDefault();
    const lines = personaInput.value
      .split("\n")
      .map((s) => s.trim())
      .filter((s) => s.length > 0);
    void store.start(lines.length > 0 ? lines : "random");
  });

  // --- ready view -------------------------------------------------------
  const personaBox = el("div", { "data-testid": "persona", class: "persona" });
  const transcript = el("ul", { "data-testid": "transcript", class: "transcript" });

  const banner = el("div", { "data-testid": "error", class: "banner", hidden: "" });
  const bannerText = el("span", { "data-testid": "error-detail" });
  const retryBtn = el("button", { "data-testid": "retry", type: "button" }, "retry");
  banner.append(bannerText, retryBtn);
  retryBtn.addEventListener("click", () => {
    void store.retry(currentOptions());
  });

  const knobs = el("fieldset", { "data-testid": "knobs", class: "knobs" });
  knobs.append(el("legend", {}, "decode knobs (blank = server default)"));
  const lambdaD = el("input", {
    "data-testid": "knob-lambda-d", type: "number", step: "0.05", placeholder: "λ_d",
  });
  const gamma = el("input", {
    "data-testid": "knob-gamma", type: "number", step: "0.05", placeholder: "γ",
  });
  const iterations = el("input", {
    "data-testid": "knob-iterations", type: "number", step: "1", placeholder: "iterations",
  });
  const baseline = el("select", { "data-testid": "knob-baseline" });
  baseline.append(
    el("option", { value: "" }, "full pipeline"),
    el("option", { value: "retrieval" }, "retrieval baseline"),
    el("option", { value: "nucleus" }, "nucleus baseline"),
  );
  for (const [label, control] of [
    ["story weight λ_d", lambdaD],
    ["mix rate γ", gamma],
    ["iterations", iterations],
    ["system", baseline],
  ] as const) {
    const wrap = el("label", { class: "knob" }, label + " ");
    wrap.append(control);
    knobs.append(wrap);
  }

  const composer = el("form", { "data-testid": "composer", class: "composer" });
  const message = el("input", {
    "data-testid": "message", type: "text", placeholder: "say something…",
  });
  const sendBtn = el("button", { "data-testid": "send", type: "submit" }, "send");
  composer.append(message, sendBtn);
  composer.addEventListener("submit", (ev) => {
    ev.preventDefault();
    const text = message.value;
    message.value = "";
    void store.send(text, currentOptions());
  });

  function currentOptions(): SendOptions {
    const overrides: Record<string, number> = {};
    const ld = knobValue(lambdaD);
    const g = knobValue(gamma);
    const it = knobValue(iterations);
    if (ld !== null) overrides.lambda_d = ld;
    if (g !== null) overrides.gamma = g;
    if (it !== null) overrides.iterations = it;
    const opts: SendOptions = {};
    if (Object.keys(overrides).length > 0) opts.overrides = overrides;
    if (baseline.value) opts.baseline = baseline.value;
    return opts;
  }

  root.append(setup, personaBox, transcript, banner, knobs, composer);

  // --- rendering --------------------------------------------------------
  function renderTurn(turn: TurnView): HTMLLIElement {
    const li = el("li", { class: `turn ${turn.speaker}` });
    li.append(el("span", { class: "speaker" }, turn.speaker === "user" ? "you" : "agent"));
    li.append(el("span", { class: "text" }, turn.text));
    if (turn.trace) li.append(renderTrace(turn.trace));
    return li;
  }

  function renderTrace(trace: Trace): HTMLDetailsElement {
    const details = el("details", { "data-testid": "trace", class: "trace" });
    details.append(el("summary", {}, "how this reply was made"));
    const dl = el("dl");
    const rows: [string, string, string][] = [
      ["mode", "trace-mode", trace.mode],
      ["attribute", "trace-attribute", trace.attribute],
      ["story id", "trace-story-id", trace.story_id ?? "—"],
      ["iterations", "trace-iterations", String(trace.iterations)],
      [
        "final loss",
        "trace-final-loss",
        trace.final_loss === null ? "—" : trace.final_loss.toFixed(4),
      ],
    ];
    for (const [label, testid, value] of rows) {
      dl.append(el("dt", {}, label));
      dl.append(el("dd", { "data-testid": testid }, value));
    }
    if (trace.story_text) {
      dl.append(el("dt", {}, "story"));
      dl.append(el("dd", { "data-testid": "trace-story-text" }, trace.story_text));
    }
    if (trace.losses.length > 0) {
      dl.append(el("dt", {}, "loss by iteration"));
      dl.append(
        el(
          "dd",
          { "data-testid": "trace-losses" },
          trace.losses.map((x) => x.toFixed(4)).join(", "),
        ),
      );
    }
    if (trace.warning) {
      dl.append(el("dt", {}, "warning"));
      dl.append(el("dd", { "data-testid": "trace-warning" }, trace.warning));
    }
    details.append(dl);
    return details;
  }

  function sameTurn(li: Element, turn: TurnView): boolean {
    const text = li.querySelector(".text")?.textContent ?? "";
    return li.classList.contains(turn.speaker) && text === turn.text;
  }

  function renderTranscript(turns: TurnView[]): void {
    const lis = Array.from(transcript.children);
    const prefixIntact =
      lis.length <= turns.length &&
      lis.every((li, i) => sameTurn(li, turns[i] as TurnView));
    if (!prefixIntact) transcript.replaceChildren();
    for (let i = prefixIntact ? lis.length : 0; i < turns.length; i++) {
      transcript.append(renderTurn(turns[i] as TurnView));
    }
  }

  function render(snap: ChatSnapshot): void {
    setup.hidden = snap.phase === "ready";
    personaBox.hidden = snap.phase !== "ready";
    composer.hidden = snap.phase !== "ready";
    knobs.hidden = snap.phase !== "ready";
    personaBox.textContent =
      snap.persona.length > 0 ? `persona: ${snap.persona.join(" · ")}` : "";
    startBtn.disabled = snap.inFlight;
    sendBtn.disabled = snap.inFlight;
    message.disabled = snap.inFlight;
    renderTranscript(snap.turns);
    if (snap.error) {
      banner.hidden = false;
      bannerText.textContent = `${snap.error.kind}: ${snap.error.detail}`;
      retryBtn.hidden = snap.pendingText === null;
    } else {
      banner.hidden = true;
      bannerText.textContent = "";
    }
  }

  store.subscribe(render);
  return { store, root };
}
