/**
 * DOM rendering. Every answer sentence lands in exactly one segment block;
 * segments are color-keyed to their primary source chunk; unreferenced
 * segments get the muted "no source" treatment.
 */

import type { ChunkResponse, RankedEntry, SegmentPayload } from "./api.js";
import { NO_SOURCE_COLOR, colorMap } from "./colors.js";
import type { ViewState } from "./state.js";

export interface RenderHandlers {
  onSelectSegment: (index: number) => void;
}

function clear(element: Element): void {
  while (element.firstChild) {
    element.removeChild(element.firstChild);
  }
}

function segmentCaption(segment: SegmentPayload): string {
  const chunks = segment.chunk_ids.join(", ");
  const score = segment.score.toFixed(3);
  return segment.referenced ? `${chunks} · score ${score}` : `below threshold · score ${score}`;
}

export function renderAnswer(
  container: HTMLElement,
  state: ViewState,
  handlers: RenderHandlers,
): void {
  clear(container);
  if (!state.alignment) {
    const empty = container.ownerDocument.createElement("p");
    empty.className = "placeholder";
    empty.textContent = "Ask a question to see an answer with its sources.";
    container.appendChild(empty);
    return;
  }
  const doc = container.ownerDocument;
  const colors = colorMap(state.reranked.map(([chunkId]) => chunkId));
  state.alignment.segments.forEach((segment, index) => {
    const block = doc.createElement("div");
    block.className = "segment" + (segment.referenced ? "" : " unreferenced");
    if (state.selectedSegment === index) {
      block.className += " selected";
    }
    block.dataset.segmentIndex = String(index);
    const color = segment.referenced
      ? colors.get(segment.chunk_ids[0]) ?? NO_SOURCE_COLOR
      : NO_SOURCE_COLOR;
    block.style.borderLeftColor = color;
    block.addEventListener("click", () => handlers.onSelectSegment(index));

    for (let sentence = segment.start; sentence <= segment.end; sentence += 1) {
      const p = doc.createElement("p");
      p.className = "sentence";
      p.dataset.sentenceIndex = String(sentence);
      p.textContent = state.answerSentences[sentence - 1] ?? "";
      block.appendChild(p);
    }
    const caption = doc.createElement("div");
    caption.className = "segment-caption";
    caption.textContent = segmentCaption(segment);
    caption.style.color = color;
    block.appendChild(caption);
    container.appendChild(block);
  });
}

export function renderRankPanel(
  container: HTMLElement,
  title: string,
  entries: RankedEntry[],
  colors: Map<string, string>,
  highlighted: Set<string>,
): void {
  clear(container);
  const doc = container.ownerDocument;
  const heading = doc.createElement("h3");
  heading.textContent = title;
  container.appendChild(heading);
  const list = doc.createElement("ol");
  for (const [chunkId, score] of entries) {
    const item = doc.createElement("li");
    item.dataset.chunkId = chunkId;
    item.className = highlighted.has(chunkId) ? "chunk-row highlighted" : "chunk-row";
    const swatch = doc.createElement("span");
    swatch.className = "swatch";
    swatch.style.backgroundColor = colors.get(chunkId) ?? NO_SOURCE_COLOR;
    item.appendChild(swatch);
    const label = doc.createElement("span");
    label.textContent = `${chunkId} (${score.toFixed(4)})`;
    item.appendChild(label);
    list.appendChild(item);
  }
  container.appendChild(list);
}

export interface ChunkDetailNotice {
  kind: "below-threshold";
  score: number;
}

export function renderChunkDetail(
  container: HTMLElement,
  chunks: ChunkResponse[],
  colors: Map<string, string>,
  notice: ChunkDetailNotice | null,
): void {
  clear(container);
  const doc = container.ownerDocument;
  if (notice) {
    const banner = doc.createElement("div");
    banner.className = "below-threshold-notice";
    banner.textContent = `This segment is below the reference threshold (score ${notice.score.toFixed(3)}).`;
    container.appendChild(banner);
  }
  for (const chunk of chunks) {
    const card = doc.createElement("article");
    card.className = "chunk-card";
    card.dataset.chunkId = chunk.id;
    card.style.borderLeftColor = colors.get(chunk.id) ?? NO_SOURCE_COLOR;
    const heading = doc.createElement("h4");
    heading.textContent = `${chunk.id} · ${chunk.source}`;
    card.appendChild(heading);
    if (chunk.header) {
      const headerBlock = doc.createElement("pre");
      headerBlock.className = "chunk-header";
      headerBlock.textContent = Object.entries(chunk.header)
        .map(([field, value]) => `${field}: ${value}`)
        .join("\n");
      card.appendChild(headerBlock);
    }
    const body = doc.createElement("p");
    body.className = "chunk-body";
    body.textContent = chunk.ver0;
    card.appendChild(body);
    container.appendChild(card);
  }
}

export function renderErrorBanner(banner: HTMLElement, state: ViewState): void {
  if (state.error) {
    banner.hidden = false;
    banner.textContent = state.error;
  } else {
    banner.hidden = true;
    banner.textContent = "";
  }
}

export function renderThresholdLabel(label: HTMLElement, value: number): void {
  label.textContent = value.toFixed(2);
}
