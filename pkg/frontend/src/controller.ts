// Console controller: holds view state, talks to the service client, and
// pushes projections into a renderer. The renderer is an interface so the
// controller is testable without a browser; dom.ts provides the real one.

import { ApiError, ServiceClient } from "./api.js";
import type { Alert, LabelValue, SessionDetail, ThreatRepo } from "./types.js";
import {
  AlertRow,
  buildCausalChain,
  buildQueueView,
  ChainEntry,
  CurationDraft,
  listTechniques,
  validateDraft,
} from "./views.js";

export interface Banner {
  kind: "auth" | "outage";
  message: string;
}

export interface Renderer {
  renderQueue(rows: AlertRow[]): void;
  renderDetail(alert: Alert, chain: ChainEntry[]): void;
  renderRepo(repo: ThreatRepo): void;
  renderBanner(banner: Banner | null): void;
  renderToast(message: string): void;
}

export interface QueueFilters {
  state?: string;
  severity?: string;
}

const DEFAULT_POLL_MS = 10_000;

export class ConsoleController {
  private alerts: Alert[] = [];
  private repo: ThreatRepo | null = null;
  private timer: ReturnType<typeof setInterval> | null = null;
  filters: QueueFilters = {};

  constructor(
    private readonly client: ServiceClient,
    private readonly renderer: Renderer,
    private readonly analystId: string,
  ) {}

  get rows(): AlertRow[] {
    return buildQueueView(this.alerts);
  }

  private banner(err: unknown): void {
    if (err instanceof ApiError && err.isAuthError) {
      this.renderer.renderBanner({ kind: "auth", message: "authentication failed" });
    } else {
      this.renderer.renderBanner({ kind: "outage", message: `service unreachable: ${err}` });
    }
  }

  async refresh(): Promise<void> {
    try {
      const page = await this.client.listAlerts(this.filters);
      this.alerts = page.alerts;
      this.renderer.renderBanner(null);
      this.renderer.renderQueue(this.rows);
    } catch (err) {
      this.banner(err);
    }
  }

  async setFilters(filters: QueueFilters): Promise<void> {
    this.filters = filters;
    await this.refresh();
  }

  async select(alertId: string): Promise<SessionDetail | null> {
    try {
      const alert = await this.client.getAlert(alertId);
      const detail = await this.client.getSession(alert.session_id);
      this.renderer.renderDetail(alert, buildCausalChain(detail));
      return detail;
    } catch (err) {
      this.banner(err);
      return null;
    }
  }

  /** Optimistic label: the row flips immediately and reverts on failure. */
  async submitLabel(alertId: string, label: LabelValue, note = ""): Promise<boolean> {
    const previous = this.alerts;
    this.alerts = this.alerts.map((alert) =>
      alert.alert_id === alertId
        ? {
            ...alert,
            state: "labeled" as const,
            label: {
              alert_id: alertId,
              label,
              analyst_id: this.analystId,
              note,
              labeled_at: Date.now() * 1000,
            },
          }
        : alert,
    );
    this.renderer.renderQueue(this.rows);
    try {
      const updated = await this.client.labelAlert(alertId, label, this.analystId, note);
      this.alerts = this.alerts.map((alert) =>
        alert.alert_id === alertId ? updated : alert,
      );
      this.renderer.renderQueue(this.rows);
      return true;
    } catch (err) {
      this.alerts = previous;
      this.renderer.renderQueue(this.rows);
      if (err instanceof ApiError && err.status === 409) {
        await this.refresh(); // relabeled elsewhere: reload
      }
      this.renderer.renderToast(`label failed: ${err}`);
      return false;
    }
  }

  async loadRepo(): Promise<void> {
    try {
      this.repo = await this.client.getThreatRepo();
      this.renderer.renderRepo(this.repo);
    } catch (err) {
      this.banner(err);
    }
  }

  /** Client-side validation first; invalid drafts never reach the wire. */
  async submitCuration(draft: CurationDraft): Promise<string[]> {
    if (!this.repo) {
      await this.loadRepo();
    }
    if (!this.repo) {
      return ["threat repository unavailable"];
    }
    const problems = validateDraft(draft, this.repo);
    if (problems.length) {
      return problems;
    }
    try {
      await this.client.curateGuidance(draft.techniqueId, draft.text, this.analystId);
      await this.loadRepo();
      return [];
    } catch (err) {
      this.renderer.renderToast(`curation failed: ${err}`);
      return [`submission failed: ${err}`];
    }
  }

  techniques() {
    return this.repo ? listTechniques(this.repo) : [];
  }

  startPolling(intervalMs: number = DEFAULT_POLL_MS): void {
    this.stopPolling();
    this.timer = setInterval(() => void this.refresh(), intervalMs);
  }

  stopPolling(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }
}
