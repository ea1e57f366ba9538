import { readFileSync } from "node:fs";
import { join } from "node:path";

import { ApiClient } from "../src/api.js";
import { AppController, findElements, type AppElements } from "../src/app.js";
import { SERVICE_URL } from "./service-url.js";

export const FIXTURE_QUESTION = "What was the purpose of the HGC frontal offset test?";

// vitest runs with cwd at the frontend package root
const indexHtml = readFileSync(join(process.cwd(), "public", "index.html"), "utf-8");

export function mountDom(): AppElements {
  // Real page markup, scripts stripped by jsdom innerHTML semantics; the
  // controller is booted explicitly by each test.
  document.documentElement.innerHTML = indexHtml;
  return findElements(document);
}

export function bootApp(baseUrl: string = SERVICE_URL): {
  controller: AppController;
  elements: AppElements;
  client: ApiClient;
} {
  const elements = mountDom();
  const client = new ApiClient(baseUrl);
  const controller = new AppController(client, elements, { debounceMs: 10 });
  return { controller, elements, client };
}

export function segmentBlocks(elements: AppElements): HTMLElement[] {
  return Array.from(elements.answerPanel.querySelectorAll<HTMLElement>(".segment"));
}

export function sentenceIndexesIn(block: HTMLElement): number[] {
  return Array.from(block.querySelectorAll<HTMLElement>(".sentence")).map((node) =>
    Number(node.dataset.sentenceIndex),
  );
}

export function referencedSentenceSet(elements: AppElements): Set<number> {
  const out = new Set<number>();
  for (const block of segmentBlocks(elements)) {
    if (block.className.includes("unreferenced")) {
      continue;
    }
    for (const index of sentenceIndexesIn(block)) {
      out.add(index);
    }
  }
  return out;
}

export async function ask(
  controller: AppController,
  elements: AppElements,
  question: string = FIXTURE_QUESTION,
): Promise<void> {
  elements.questionInput.value = question;
  elements.questionInput.dispatchEvent(new Event("input", { bubbles: true }));
  elements.form.dispatchEvent(new Event("submit", { bubbles: true, cancelable: true }));
  await controller.whenIdle();
}

export async function slideThreshold(
  controller: AppController,
  elements: AppElements,
  value: number,
): Promise<void> {
  elements.thresholdSlider.value = String(value);
  elements.thresholdSlider.dispatchEvent(new Event("input", { bubbles: true }));
  await controller.whenIdle();
}
