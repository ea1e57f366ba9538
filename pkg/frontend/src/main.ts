/** Bootstrap: resolve the service base URL, wire the controller, ping health. */

import { ApiClient } from "./api.js";
import { AppController, findElements } from "./app.js";

function resolveBaseUrl(): string {
  const params = new URLSearchParams(window.location.search);
  const fromQuery = params.get("service");
  if (fromQuery) {
    return fromQuery;
  }
  const meta = document.querySelector('meta[name="refrag-service"]');
  const fromMeta = meta?.getAttribute("content");
  if (fromMeta) {
    return fromMeta;
  }
  return window.location.origin;
}

export function boot(): AppController {
  const client = new ApiClient(resolveBaseUrl());
  const controller = new AppController(client, findElements(document));
  const footer = document.querySelector<HTMLElement>("#service-status");
  if (footer) {
    client
      .health()
      .then((health) => {
        footer.textContent =
          `${client.baseUrl} · ${health.corpus_size} chunks · ` +
          `${health.scorer.rerank} scorer · ${health.generator} generator`;
      })
      .catch(() => {
        footer.textContent = `${client.baseUrl} · service unreachable`;
      });
  }
  return controller;
}

declare global {
  interface Window {
    refragApp?: AppController;
  }
}

if (typeof window !== "undefined" && typeof document !== "undefined") {
  window.addEventListener("DOMContentLoaded", () => {
    window.refragApp = boot();
  });
}
