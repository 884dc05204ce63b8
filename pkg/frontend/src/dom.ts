// Browser renderer: straight DOM manipulation, no framework. The console
// is a single-analyst tool; the heavy lifting stays in views.ts and
// controller.ts, which are testable off-browser.

import type { Banner, Renderer } from "./controller.js";
import type { Alert, ThreatRepo } from "./types.js";
import type { AlertRow, ChainEntry } from "./views.js";

function el(tag: string, className?: string, text?: string): HTMLElement {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export class DomRenderer implements Renderer {
  constructor(
    private readonly root: HTMLElement,
    private readonly onSelect: (alertId: string) => void,
    private readonly onLabel: (alertId: string, label: "TP" | "TPNM" | "FP") => void,
  ) {}

  private section(id: string): HTMLElement {
    let node = this.root.querySelector<HTMLElement>(`#${id}`);
    if (!node) {
      node = el("section");
      node.id = id;
      this.root.appendChild(node);
    }
    return node;
  }

  renderBanner(banner: Banner | null): void {
    const node = this.section("banner");
    node.innerHTML = "";
    if (banner) {
      node.appendChild(el("div", `banner banner-${banner.kind}`, banner.message));
    }
  }

  renderToast(message: string): void {
    const node = this.section("toast");
    const toast = el("div", "toast", message);
    node.appendChild(toast);
    setTimeout(() => toast.remove(), 4000);
  }

  renderQueue(rows: AlertRow[]): void {
    const node = this.section("queue");
    node.innerHTML = "";
    const table = el("table", "queue-table");
    const head = el("tr");
    for (const column of ["severity", "alert", "session", "state", "label", "techniques", ""]) {
      head.appendChild(el("th", undefined, column));
    }
    table.appendChild(head);
    for (const row of rows) {
      const tr = el("tr", `sev-${row.severity}`);
      tr.appendChild(el("td", undefined, row.severity));
      const link = el("td", "alert-link", row.alertId);
      link.addEventListener("click", () => this.onSelect(row.alertId));
      tr.appendChild(link);
      tr.appendChild(el("td", undefined, row.sessionId));
      tr.appendChild(el("td", undefined, row.state));
      tr.appendChild(el("td", undefined, row.label));
      tr.appendChild(el("td", undefined, row.techniqueIds.join(", ")));
      const actions = el("td", "label-actions");
      for (const value of ["TP", "TPNM", "FP"] as const) {
        const button = el("button", "label-button", value);
        button.addEventListener("click", () => this.onLabel(row.alertId, value));
        actions.appendChild(button);
      }
      tr.appendChild(actions);
      table.appendChild(tr);
    }
    node.appendChild(table);
  }

  renderDetail(alert: Alert, chain: ChainEntry[]): void {
    const node = this.section("detail");
    node.innerHTML = "";
    node.appendChild(el("h2", undefined, `${alert.alert_id} (${alert.severity})`));
    node.appendChild(
      el("p", undefined, `techniques: ${alert.verdict.technique_ids.join(", ") || "none"}`),
    );
    for (const item of alert.verdict.evidence) {
      node.appendChild(
        el("p", `evidence evidence-${item.supports}`, `${item.provider}: ${item.finding}`),
      );
    }
    const list = el("ol", "chain");
    for (const entry of chain) {
      const li = el("li", entry.highlighted ? `chain-${entry.kind} highlight` : `chain-${entry.kind}`);
      li.appendChild(el("div", "chain-ts", entry.ts));
      li.appendChild(el("div", "chain-heading", entry.heading));
      li.appendChild(el("div", "chain-body", entry.body));
      list.appendChild(li);
    }
    node.appendChild(list);
  }

  renderRepo(repo: ThreatRepo): void {
    const node = this.section("repo");
    node.innerHTML = "";
    for (const [tactic, body] of Object.entries(repo.threat_framework.tactics)) {
      node.appendChild(el("h3", undefined, tactic));
      for (const technique of body.techniques) {
        node.appendChild(el("h4", undefined, `${technique.id} ${technique.name}`));
        const list = el("ul");
        for (const line of technique.detection_guidance) {
          list.appendChild(el("li", `guidance-${line.tag.toLowerCase()}`, `[${line.tag}] ${line.text}`));
        }
        node.appendChild(list);
      }
    }
  }
}
