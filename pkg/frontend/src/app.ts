// Session view wiring: flag list on the left, the focused unit's context
// panel and verdict form on the right. The app never computes analysis
// numbers; it renders service payloads and re-fetches after edits.

import {
  ApiError,
  FlagEntry,
  StatusPayload,
  VerdictBody,
  getFlags,
  getStatus,
  getTransition,
  postVerdict,
} from "./api";
import { formatNumber } from "./format";
import { renderTimeline } from "./timeline";
import { renderVerdictForm, showFormError } from "./verdict";

export interface AppOptions {
  pollMs?: number;
  maxPolls?: number;
}

interface AppState {
  version: number | undefined; // undefined = latest
  status: StatusPayload | null;
  flags: FlagEntry[];
  focused: string | null;
  busy: boolean;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

const delay = (ms: number) => new Promise((resolve) => setTimeout(resolve, ms));

export class App {
  private readonly root: HTMLElement;
  private readonly pollMs: number;
  private readonly maxPolls: number;
  private readonly state: AppState = {
    version: undefined,
    status: null,
    flags: [],
    focused: null,
    busy: false,
  };

  constructor(root: HTMLElement, options: AppOptions = {}) {
    this.root = root;
    this.pollMs = options.pollMs ?? 400;
    this.maxPolls = options.maxPolls ?? 50;
    root.textContent = "";
    root.append(
      el("div", "banners"),
      el("header", "session-header"),
      (() => {
        const main = el("main", "layout");
        main.append(el("aside", "flag-list"), el("section", "detail"));
        return main;
      })(),
    );
  }

  async start(): Promise<void> {
    await this.refresh();
  }

  private banners(): HTMLElement {
    return this.root.querySelector<HTMLElement>(".banners")!;
  }

  private banner(kind: "error" | "info", message: string, retry?: () => void): void {
    const box = el("div", `banner ${kind}`);
    box.append(el("span", "banner-text", message));
    if (retry) {
      const button = el("button", "retry", "retry");
      button.addEventListener("click", () => {
        box.remove();
        retry();
      });
      box.appendChild(button);
    }
    const close = el("button", "dismiss", "dismiss");
    close.addEventListener("click", () => box.remove());
    box.appendChild(close);
    this.banners().appendChild(box);
  }

  private clearBanners(selector = ".banner"): void {
    this.banners().querySelectorAll(selector).forEach((node) => node.remove());
  }

  async refresh(): Promise<void> {
    try {
      const [status, flags] = await Promise.all([
        getStatus(this.state.version),
        getFlags(this.state.version),
      ]);
      this.state.status = status;
      this.state.flags = flags;
      this.clearBanners(".banner.error");
      this.renderHeader();
      this.renderFlagList();
      if (this.state.focused && !flags.some((f) => f.unit_id === this.state.focused)) {
        this.state.focused = null;
        this.root.querySelector(".detail")!.textContent = "";
      }
    } catch (err) {
      this.banner("error", `service unreachable: ${(err as Error).message}`, () =>
        void this.refresh(),
      );
    }
  }

  private renderHeader(): void {
    const status = this.state.status!;
    const header = this.root.querySelector<HTMLElement>(".session-header")!;
    header.textContent = "";
    header.append(
      el("h1", "title", "expert review"),
      el("span", "version-badge", `version ${status.version} of ${status.latest_version}`),
      el("span", "estimator", status.estimator),
      el("span", "vhat", `v-hat ${formatNumber(status.v_hat)}`),
      el("span", `outcome ${status.outcome}`, status.outcome),
    );
    if (this.state.busy) {
      header.appendChild(el("span", "lock-indicator", "recomputing, inputs locked"));
    }
    if (status.validated) {
      header.appendChild(el("span", "validated-banner", "all flags expert-validated"));
    }
  }

  private renderFlagList(): void {
    const list = this.root.querySelector<HTMLElement>(".flag-list")!;
    list.textContent = "";
    list.appendChild(el("h2", undefined, `flags (${this.state.flags.length})`));
    if (this.state.flags.length === 0) {
      list.appendChild(el("p", "empty", "no flagged units in this version"));
      return;
    }
    for (const flag of this.state.flags) {
      const row = el("div", "flag-row");
      row.dataset.unit = flag.unit_id;
      if (flag.unit_id === this.state.focused) row.classList.add("focused");
      row.append(
        el("span", "unit-id", flag.unit_id),
        el("span", "norm-influence", formatNumber(flag.normalized_influence)),
        el("span", "influence", formatNumber(flag.influence)),
      );
      if (flag.dead_end) row.appendChild(el("span", "dead-end-badge", "dead end"));
      if (flag.covers.length > 0) {
        row.appendChild(el("span", "covers", `covers ${flag.covers.length} earlier`));
      }
      if (flag.verdict) row.appendChild(el("span", "verdict-state", flag.verdict));
      row.addEventListener("click", () => void this.openFlag(flag.unit_id));
      list.appendChild(row);
    }
  }

  async openFlag(unitId: string): Promise<void> {
    if (this.state.busy) return;
    try {
      const detail = await getTransition(unitId, this.state.version);
      this.state.focused = unitId;
      this.renderFlagList();
      const panel = this.root.querySelector<HTMLElement>(".detail")!;
      panel.textContent = "";

      const record = detail.record;
      const head = el("div", "detail-head");
      head.append(
        el("h2", "detail-title", unitId),
        el("span", "detail-influence", `influence ${formatNumber(detail.influence)}`),
        el(
          "span",
          "detail-norm",
          `normalized ${formatNumber(detail.normalized_influence)}`,
        ),
      );
      if (detail.dead_end) head.appendChild(el("span", "dead-end-badge", "dead end"));
      panel.appendChild(head);

      const facts = el("dl", "record-facts");
      const fact = (label: string, value: string) => {
        facts.append(el("dt", undefined, label), el("dd", undefined, value));
      };
      fact("trajectory", record.trajectory_id);
      fact("step", String(record.step_index));
      fact("action", String(record.action));
      fact("reward", formatNumber(record.reward));
      fact("behavior prob", formatNumber(record.behavior_prob));
      panel.appendChild(facts);

      const timelineBox = el("div", "timeline-box");
      panel.appendChild(timelineBox);
      renderTimeline(timelineBox, detail.context, { focusId: unitId });

      const formBox = el("div", "verdict-box");
      panel.appendChild(formBox);
      renderVerdictForm(formBox, {
        version: this.state.status!.version,
        unitId,
        disabled: this.state.busy,
        onSubmit: (body) => void this.submitVerdict(body, formBox),
      });
    } catch (err) {
      this.banner("error", `service unreachable: ${(err as Error).message}`, () =>
        void this.openFlag(unitId),
      );
    }
  }

  private setBusy(busy: boolean): void {
    this.state.busy = busy;
    this.renderHeader();
    this.root
      .querySelectorAll<HTMLButtonElement>(".submit-verdict")
      .forEach((button) => (button.disabled = busy));
  }

  async submitVerdict(body: VerdictBody, formBox: HTMLElement): Promise<void> {
    const before = this.state.status!;
    this.setBusy(true);
    try {
      const response = await postVerdict(body);
      if (response.created_version === null) {
        // opinion recorded on the same dataset; flags do not move
        await this.refresh();
        return;
      }
      const created = response.created_version;
      const after = await this.pollStatus(created);
      this.state.version = created;
      this.banner(
        "info",
        `recomputed: v-hat ${formatNumber(before.v_hat)} to ${formatNumber(after.v_hat)}` +
          ` (version ${before.version} to ${created})`,
      );
      await this.refresh();
    } catch (err) {
      if (err instanceof ApiError && err.status === 422) {
        showFormError(formBox, err.detail);
      } else if (err instanceof ApiError && err.status === 409) {
        this.banner("error", `edit rejected, version superseded: ${err.detail}`, () => {
          this.state.version = undefined;
          void this.refresh();
        });
      } else {
        this.banner("error", `service unreachable: ${(err as Error).message}`);
      }
    } finally {
      this.setBusy(false);
      this.renderHeader();
    }
  }

  // The analysis for a fresh version may still be materializing; keep
  // asking until the status endpoint serves it.
  private async pollStatus(version: number): Promise<StatusPayload> {
    let lastError: Error | null = null;
    for (let attempt = 0; attempt < this.maxPolls; attempt++) {
      try {
        return await getStatus(version);
      } catch (err) {
        lastError = err as Error;
        await delay(this.pollMs);
      }
    }
    throw lastError ?? new Error(`no status for version ${version}`);
  }
}

export function boot(root: HTMLElement, options?: AppOptions): App {
  const app = new App(root, options);
  void app.start();
  return app;
}
