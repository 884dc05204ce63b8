// Entry point: read the service location from the query string or
// localStorage, wire the controller to the DOM, start polling.

import { ServiceClient } from "./api.js";
import { ConsoleController } from "./controller.js";
import { DomRenderer } from "./dom.js";

function setting(name: string, fallback: string): string {
  const params = new URLSearchParams(window.location.search);
  const fromQuery = params.get(name);
  if (fromQuery) {
    localStorage.setItem(`adr-console.${name}`, fromQuery);
    return fromQuery;
  }
  return localStorage.getItem(`adr-console.${name}`) ?? fallback;
}

export function boot(root: HTMLElement): ConsoleController {
  const client = new ServiceClient({
    baseUrl: setting("service", "http://127.0.0.1:8787"),
    token: setting("token", "dev-token"),
  });
  const controller = new ConsoleController(
    client,
    new DomRenderer(
      root,
      (alertId) => void controller.select(alertId),
      (alertId, label) => void controller.submitLabel(alertId, label),
    ),
    setting("analyst", "analyst"),
  );
  void controller.refresh();
  void controller.loadRepo();
  controller.startPolling(Number(setting("poll_ms", "10000")));

  const form = document.querySelector<HTMLFormElement>("#curation-form");
  form?.addEventListener("submit", (event) => {
    event.preventDefault();
    const technique = (form.querySelector("#curation-technique") as HTMLInputElement).value;
    const text = (form.querySelector("#curation-text") as HTMLTextAreaElement).value;
    void controller
      .submitCuration({ techniqueId: technique, text })
      .then((problems) => {
        const status = document.querySelector("#curation-status");
        if (status) {
          status.textContent = problems.length ? problems.join("; ") : "published [CURATED]";
        }
      });
  });
  return controller;
}

if (typeof document !== "undefined") {
  const root = document.querySelector<HTMLElement>("#app");
  if (root) boot(root);
}
