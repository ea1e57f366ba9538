/**
 * Controller wiring the form, answer panel, source panel, and threshold
 * slider together.
 *
 * Concurrency rules: one in-flight query at a time; threshold changes
 * debounce and cancel stale /v1/match responses; re-matching never calls
 * /v1/query (the answer text is stable under threshold moves).
 */

import { ApiClient, ServiceError } from "./api.js";
import type { ChunkResponse } from "./api.js";
import { colorMap } from "./colors.js";
import {
  ViewState,
  applyError,
  applyQueryResult,
  applyRematch,
  canSubmit,
  clampThreshold,
  hasAnswer,
  initialState,
  selectSegment,
} from "./state.js";
import {
  renderAnswer,
  renderChunkDetail,
  renderErrorBanner,
  renderRankPanel,
  renderThresholdLabel,
} from "./view.js";

export interface AppElements {
  form: HTMLFormElement;
  questionInput: HTMLInputElement;
  submitButton: HTMLButtonElement;
  errorBanner: HTMLElement;
  answerPanel: HTMLElement;
  chunkDetail: HTMLElement;
  rerankedPanel: HTMLElement;
  retrievedPanel: HTMLElement;
  thresholdRow: HTMLElement;
  thresholdSlider: HTMLInputElement;
  thresholdLabel: HTMLElement;
}

export interface AppOptions {
  debounceMs?: number;
}

export function findElements(root: Document | HTMLElement): AppElements {
  const get = <T extends HTMLElement>(selector: string): T => {
    const found = root.querySelector(selector);
    if (!found) {
      throw new Error(`missing element ${selector}`);
    }
    return found as T;
  };
  return {
    form: get<HTMLFormElement>("#ask-form"),
    questionInput: get<HTMLInputElement>("#question"),
    submitButton: get<HTMLButtonElement>("#submit"),
    errorBanner: get<HTMLElement>("#error-banner"),
    answerPanel: get<HTMLElement>("#answer-panel"),
    chunkDetail: get<HTMLElement>("#chunk-detail"),
    rerankedPanel: get<HTMLElement>("#reranked-panel"),
    retrievedPanel: get<HTMLElement>("#retrieved-panel"),
    thresholdRow: get<HTMLElement>("#threshold-row"),
    thresholdSlider: get<HTMLInputElement>("#threshold"),
    thresholdLabel: get<HTMLElement>("#threshold-value"),
  };
}

export class AppController {
  public state: ViewState;

  private readonly client: ApiClient;
  private readonly elements: AppElements;
  private readonly debounceMs: number;
  private debounceTimer: ReturnType<typeof setTimeout> | null = null;
  private matchSequence = 0;
  private matchAbort: AbortController | null = null;
  private pendingWork = 0;
  private chunkCache = new Map<string, ChunkResponse>();

  public constructor(client: ApiClient, elements: AppElements, options: AppOptions = {}) {
    this.client = client;
    this.elements = elements;
    this.debounceMs = options.debounceMs ?? 150;
    this.state = initialState();
    this.bind();
    this.render();
  }

  private bind(): void {
    this.elements.questionInput.addEventListener("input", () => this.syncSubmitDisabled());
    this.elements.form.addEventListener("submit", (event) => {
      event.preventDefault();
      void this.submitQuestion(this.elements.questionInput.value);
    });
    this.elements.thresholdSlider.addEventListener("input", () => {
      this.onThresholdInput(Number(this.elements.thresholdSlider.value));
    });
  }

  private syncSubmitDisabled(): void {
    this.elements.submitButton.disabled = !canSubmit(
      this.state,
      this.elements.questionInput.value,
    );
  }

  public async submitQuestion(question: string): Promise<void> {
    const trimmed = question.trim();
    if (!trimmed || this.state.busy) {
      return;
    }
    this.state = { ...this.state, busy: true, error: null };
    this.render();
    this.pendingWork += 1;
    try {
      const result = await this.client.query(trimmed);
      this.state = applyQueryResult(this.state, result);
    } catch (error) {
      // prior view stays on screen; only the banner changes
      this.state = applyError(this.state, describeError(error));
    } finally {
      this.pendingWork -= 1;
      this.render();
    }
  }

  public onThresholdInput(value: number): void {
    const threshold = clampThreshold(value);
    this.state = { ...this.state, threshold };
    renderThresholdLabel(this.elements.thresholdLabel, threshold);
    if (!hasAnswer(this.state)) {
      return; // no answer on screen: nothing to re-match
    }
    if (this.debounceTimer !== null) {
      clearTimeout(this.debounceTimer);
    }
    this.debounceTimer = setTimeout(() => {
      this.debounceTimer = null;
      void this.rematch(threshold);
    }, this.debounceMs);
  }

  private async rematch(threshold: number): Promise<void> {
    const alignment = this.state.alignment;
    if (!alignment) {
      return;
    }
    this.matchSequence += 1;
    const sequence = this.matchSequence;
    if (this.matchAbort) {
      this.matchAbort.abort();
    }
    const abort = new AbortController();
    this.matchAbort = abort;
    this.pendingWork += 1;
    try {
      const rematched = await this.client.match(
        {
          sentences: this.state.answerSentences,
          chunk_ids: this.state.reranked.map(([chunkId]) => chunkId),
          threshold,
          mode: alignment.mode,
        },
        abort.signal,
      );
      if (sequence !== this.matchSequence) {
        return; // a newer slider position superseded this response
      }
      this.state = applyRematch(this.state, rematched);
    } catch (error) {
      if (isAbort(error) || sequence !== this.matchSequence) {
        return;
      }
      this.state = applyError(this.state, describeError(error));
    } finally {
      this.pendingWork -= 1;
      this.render();
    }
  }

  public async selectSegment(index: number): Promise<void> {
    this.state = selectSegment(this.state, index);
    this.render();
    const alignment = this.state.alignment;
    if (!alignment || this.state.selectedSegment === null) {
      return;
    }
    const segment = alignment.segments[this.state.selectedSegment];
    this.pendingWork += 1;
    try {
      const chunks: ChunkResponse[] = [];
      for (const chunkId of segment.chunk_ids) {
        chunks.push(await this.fetchChunk(chunkId));
      }
      if (this.state.selectedSegment !== index) {
        return; // selection moved on while loading
      }
      const colors = colorMap(this.state.reranked.map(([chunkId]) => chunkId));
      renderChunkDetail(
        this.elements.chunkDetail,
        chunks,
        colors,
        segment.referenced ? null : { kind: "below-threshold", score: segment.score },
      );
      this.highlightSources(new Set(segment.chunk_ids));
    } catch (error) {
      this.state = applyError(this.state, describeError(error));
      this.render();
    } finally {
      this.pendingWork -= 1;
    }
  }

  private async fetchChunk(chunkId: string): Promise<ChunkResponse> {
    const cached = this.chunkCache.get(chunkId);
    if (cached) {
      return cached;
    }
    const chunk = await this.client.chunk(chunkId);
    this.chunkCache.set(chunkId, chunk);
    return chunk;
  }

  private highlightSources(chunkIds: Set<string>): void {
    const colors = colorMap(this.state.reranked.map(([chunkId]) => chunkId));
    renderRankPanel(this.elements.rerankedPanel, "re-ranked", this.state.reranked, colors, chunkIds);
    renderRankPanel(this.elements.retrievedPanel, "retrieved", this.state.retrieved, colors, chunkIds);
  }

  public render(): void {
    renderErrorBanner(this.elements.errorBanner, this.state);
    renderAnswer(this.elements.answerPanel, this.state, {
      onSelectSegment: (index) => void this.selectSegment(index),
    });
    this.highlightSources(this.selectedChunkIds());
    this.elements.thresholdRow.hidden = !hasAnswer(this.state);
    this.elements.thresholdSlider.value = String(this.state.threshold);
    renderThresholdLabel(this.elements.thresholdLabel, this.state.threshold);
    this.syncSubmitDisabled();
  }

  private selectedChunkIds(): Set<string> {
    if (this.state.alignment && this.state.selectedSegment !== null) {
      const segment = this.state.alignment.segments[this.state.selectedSegment];
      if (segment) {
        return new Set(segment.chunk_ids);
      }
    }
    return new Set();
  }

  /** Resolves once no fetch or armed debounce timer remains. Test hook. */
  public async whenIdle(): Promise<void> {
    for (;;) {
      if (this.pendingWork === 0 && this.debounceTimer === null) {
        return;
      }
      await new Promise((resolve) => setTimeout(resolve, 5));
    }
  }
}

function isAbort(error: unknown): boolean {
  return error instanceof DOMException && error.name === "AbortError";
}

function describeError(error: unknown): string {
  if (error instanceof ServiceError) {
    return `service error ${error.status} (${error.code}): ${error.message}`;
  }
  if (error instanceof Error) {
    return error.message;
  }
  return String(error);
}
