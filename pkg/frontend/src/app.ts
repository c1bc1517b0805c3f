import { AnnotationApi, ApiError } from "./api.js";
import type {
  Choice,
  ComparisonView,
  GenerationPayload,
  NextResponse,
  PreferencePayload,
  Progress,
} from "./types.js";

// ── DOM helpers ─────────────────────────────────────

type Attrs = Record<string, string | boolean | ((e: Event) => void) | null>;

function el(
  tag: string,
  attrs: Attrs = {},
  ...children: Array<string | Node | null>
): HTMLElement {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) {
    if (v == null || v === false) continue;
    if (k === "className" && typeof v === "string") node.className = v;
    else if (k.startsWith("on") && typeof v === "function")
      node.addEventListener(k.slice(2).toLowerCase(), v as EventListener);
    else if (v === true) node.setAttribute(k, "");
    else node.setAttribute(k, v as string);
  }
  for (const c of children) {
    if (typeof c === "string") node.appendChild(document.createTextNode(c));
    else if (c) node.appendChild(c);
  }
  return node;
}

const MODE_LABELS: Record<string, string> = {
  "generation-arena": "Generation arena",
  "preference-validation": "Preference validation",
};

// ── App ─────────────────────────────────────────────

interface AppState {
  annotator: string | null;
  view: NextResponse | null;
  progress: Progress | null;
  selected: Choice | null;
  busy: boolean;
}

export class AnnotatorApp {
  state: AppState = {
    annotator: null,
    view: null,
    progress: null,
    selected: null,
    busy: false,
  };

  private keyHandler = (event: Event) => this.onKey(event as KeyboardEvent);

  constructor(
    private root: HTMLElement,
    private api: AnnotationApi,
    private storage: Pick<Storage, "getItem" | "setItem" | "removeItem">,
  ) {
    document.addEventListener("keydown", this.keyHandler);
  }

  dispose(): void {
    document.removeEventListener("keydown", this.keyHandler);
  }

  // The only client-held truth is the annotator id; everything else
  // round-trips from the server on every step.
  async boot(): Promise<void> {
    const saved = this.storage.getItem("annotator-id");
    if (saved) {
      await this.resume(saved);
    } else {
      this.renderRegistration();
    }
  }

  async resume(annotator: string): Promise<void> {
    this.state.annotator = annotator;
    try {
      await this.refresh();
    } catch (err) {
      if (err instanceof ApiError && err.status === 404) {
        this.storage.removeItem("annotator-id");
        this.state.annotator = null;
        this.renderRegistration(`No annotator '${annotator}' is registered yet.`);
        return;
      }
      this.renderRetry(err);
    }
  }

  async register(annotator: string, role: string): Promise<void> {
    try {
      await this.api.register(annotator, role);
      this.storage.setItem("annotator-id", annotator);
      await this.resume(annotator);
    } catch (err) {
      this.renderRegistration(err instanceof Error ? err.message : String(err));
    }
  }

  private async refresh(): Promise<void> {
    const annotator = this.state.annotator!;
    this.state.view = await this.api.next(annotator);
    this.state.progress = await this.api.progress(annotator);
    this.state.selected = null;
    this.render();
  }

  select(choice: Choice): void {
    if (!this.state.view || this.state.view.done) return;
    this.state.selected = choice;
    this.render();
  }

  async submit(): Promise<void> {
    const { view, selected, annotator, busy } = this.state;
    if (!view || view.done || !selected || !annotator || busy) return;
    this.state.busy = true;
    try {
      await this.api.submit(annotator, view.key, selected);
      this.state.busy = false;
      await this.refresh();
    } catch (err) {
      this.state.busy = false;
      this.renderRetry(err);
    }
  }

  async skip(): Promise<void> {
    const { view, annotator, busy } = this.state;
    if (!view || view.done || !annotator || busy) return;
    this.state.busy = true;
    try {
      await this.api.skip(annotator, view.key);
      this.state.busy = false;
      await this.refresh();
    } catch (err) {
      this.state.busy = false;
      this.renderRetry(err);
    }
  }

  private onKey(event: KeyboardEvent): void {
    const target = event.target as HTMLElement | null;
    if (target && (target.tagName === "INPUT" || target.tagName === "TEXTAREA")) return;
    const key = event.key.toUpperCase();
    if (key === "A" || key === "B") this.select(key as Choice);
    else if (key === "ENTER") void this.submit();
  }

  // ── rendering ─────────────────────────────────────

  private clear(): HTMLElement {
    this.root.innerHTML = "";
    return this.root;
  }

  private renderRegistration(notice?: string): void {
    const idInput = el("input", {
      id: "annotator-id-input",
      type: "text",
      placeholder: "annotator id",
    }) as HTMLInputElement;
    const roleSelect = el(
      "select",
      { id: "annotator-role-input" },
      el("option", { value: "native" }, "native"),
      el("option", { value: "learner" }, "learner"),
    ) as HTMLSelectElement;
    this.clear().appendChild(
      el(
        "div",
        { className: "registration" },
        el("h1", {}, "Annotation session"),
        notice ? el("p", { className: "notice", role: "alert" }, notice) : null,
        el("p", {}, "Enter an annotator id to begin or resume a session."),
        idInput,
        roleSelect,
        el(
          "button",
          {
            id: "register-button",
            onClick: () => {
              if (idInput.value.trim())
                void this.register(idInput.value.trim(), roleSelect.value);
            },
          },
          "Start",
        ),
      ),
    );
  }

  private renderRetry(err: unknown): void {
    const message = err instanceof Error ? err.message : String(err);
    const banner = el(
      "div",
      { className: "retry-banner", role: "alert" },
      el("span", {}, `Request failed: ${message}. Nothing was lost.`),
      el(
        "button",
        {
          id: "retry-button",
          onClick: () => {
            void this.resume(this.state.annotator!);
          },
        },
        "Retry",
      ),
    );
    this.root.prepend(banner);
  }

  private progressBar(progress: Progress): HTMLElement {
    const percent = progress.total
      ? Math.round((progress.answered / progress.total) * 100)
      : 0;
    return el(
      "div",
      { className: "progress" },
      el("span", { id: "progress-text" }, `${progress.answered} / ${progress.total}`),
      el(
        "div",
        { className: "progress-track" },
        el("div", {
          className: "progress-fill",
          style: `width:${percent}%`,
        }),
      ),
    );
  }

  private candidatePanel(label: Choice, view: ComparisonView): HTMLElement {
    const payload = label === "A" ? view.a : view.b;
    const body: HTMLElement[] = [];
    if (view.mode === "generation-arena") {
      const qa = payload as GenerationPayload;
      body.push(
        el("p", { className: "qa-question" }, qa.question_ga),
        el("p", { className: "qa-answer" }, qa.answer_ga),
      );
    } else {
      body.push(
        el("p", { className: "qa-answer" }, (payload as PreferencePayload).response_ga),
      );
    }
    const selected = this.state.selected === label;
    return el(
      "section",
      {
        className: `candidate${selected ? " selected" : ""}`,
        id: `candidate-${label.toLowerCase()}`,
        onClick: () => this.select(label),
      },
      el("h3", {}, `Candidate ${label}`),
      ...body,
    );
  }

  private render(): void {
    const { view, progress } = this.state;
    if (!view || !progress) return;
    if (view.done) {
      this.clear().appendChild(
        el(
          "div",
          { className: "done" },
          el("h1", {}, "Session complete"),
          el(
            "p",
            { id: "done-summary" },
            `You answered ${view.answered} of ${view.total} comparisons` +
              (view.skipped ? ` and skipped ${view.skipped}.` : "."),
          ),
          el(
            "p",
            { className: "export-hint" },
            "Results can be exported from the service at /api/export.",
          ),
        ),
      );
      return;
    }

    const seedLabel =
      view.mode === "generation-arena" ? "Reference text" : "Prompt";
    const submitEnabled = this.state.selected !== null && !this.state.busy;
    this.clear().appendChild(
      el(
        "div",
        { className: "session" },
        el(
          "header",
          {},
          el("span", { id: "mode-banner", className: "mode-banner" },
            MODE_LABELS[view.mode] ?? view.mode),
          this.progressBar(progress),
        ),
        el(
          "section",
          { className: "seed", id: "seed-panel" },
          el("h2", {}, seedLabel),
          el("p", {}, view.seed_text),
        ),
        el("p", { className: "question", id: "question-text" }, view.question),
        el(
          "div",
          { className: "candidates" },
          this.candidatePanel("A", view),
          this.candidatePanel("B", view),
        ),
        el(
          "footer",
          {},
          el(
            "button",
            {
              id: "choose-a",
              className: this.state.selected === "A" ? "chosen" : "",
              onClick: () => this.select("A"),
            },
            "Choose A",
          ),
          el(
            "button",
            {
              id: "choose-b",
              className: this.state.selected === "B" ? "chosen" : "",
              onClick: () => this.select("B"),
            },
            "Choose B",
          ),
          el(
            "button",
            {
              id: "submit-button",
              disabled: !submitEnabled,
              onClick: () => void this.submit(),
            },
            "Submit",
          ),
          el(
            "button",
            { id: "skip-button", onClick: () => void this.skip() },
            "Skip",
          ),
          el("span", { className: "hint" }, "Keys: A / B select, Enter submits"),
        ),
      ),
    );
  }
}
