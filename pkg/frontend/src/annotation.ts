/** Annotation view state: token-level target selection, draft management,
 * client-side mirrors of every server-side invariant, and an offline queue
 * that preserves drafts across network loss.
 *
 * Selection snaps to the server-supplied canonical tokenization and is only
 * enabled on prior-context sentences; a span can never cross a sentence
 * boundary. The submit button must stay disabled until validationErrors()
 * is empty, so the UI cannot construct a submission the server rejects on
 * span or question-presence grounds.
 */

import { ApiClient, ApiError, NetworkError } from "./api.js";
import type { AnnotationBody, AnnotationTask, FieldError } from "./types.js";

export interface TokenSelection {
  sentenceIndex: number;
  startToken: number;
  endToken: number; // exclusive
}

export type SubmitResult =
  | { ok: true; annotationId: number }
  | { ok: false; kind: "validation"; errors: FieldError[] }
  | { ok: false; kind: "guardrail"; overlap: number; threshold: number }
  | { ok: false; kind: "conflict"; detail: unknown }
  | { ok: false; kind: "queued" };

export class AnnotationSession {
  selection: TokenSelection | null = null;
  question = "";
  organizational = false;

  constructor(readonly task: AnnotationTask) {}

  private sentence(index: number) {
    return this.task.payload.pre.find((s) => s.index === index);
  }

  selectableSentenceIndices(): number[] {
    return this.task.payload.pre.map((s) => s.index);
  }

  /** Click on (sentence, token) starts a one-token selection. */
  beginSelection(sentenceIndex: number, tokenIndex: number): boolean {
    const sentence = this.sentence(sentenceIndex);
    if (!sentence) return false; // only prior-context sentences are selectable
    if (tokenIndex < 0 || tokenIndex >= sentence.tokens.length) return false;
    this.selection = {
      sentenceIndex,
      startToken: tokenIndex,
      endToken: tokenIndex + 1,
    };
    return true;
  }

  /** Drag/shift-click to (sentence, token); cross-sentence extension is
   * disabled, the existing selection stays. */
  extendSelection(sentenceIndex: number, tokenIndex: number): boolean {
    if (!this.selection) return this.beginSelection(sentenceIndex, tokenIndex);
    if (sentenceIndex !== this.selection.sentenceIndex) return false;
    const sentence = this.sentence(sentenceIndex);
    if (!sentence) return false;
    const clamped = Math.max(0, Math.min(tokenIndex, sentence.tokens.length - 1));
    const anchor = this.selection.startToken;
    this.selection = {
      sentenceIndex,
      startToken: Math.min(anchor, clamped),
      endToken: Math.max(anchor, clamped) + 1,
    };
    return true;
  }

  clearSelection(): void {
    this.selection = null;
  }

  selectedText(): string {
    if (!this.selection) return "";
    const sentence = this.sentence(this.selection.sentenceIndex);
    if (!sentence) return "";
    return sentence.tokens.slice(this.selection.startToken, this.selection.endToken).join(" ");
  }

  /** Mirrors the server's 422 rules; submission stays disabled until empty. */
  validationErrors(): FieldError[] {
    const errors: FieldError[] = [];
    if (!this.selection) {
      errors.push({ field: "target", error: "select a target span in the prior context" });
    } else {
      const sentence = this.sentence(this.selection.sentenceIndex);
      if (!sentence) {
        errors.push({ field: "target.sentence_index", error: "span must sit in a prior-context sentence" });
      } else if (
        this.selection.startToken < 0 ||
        this.selection.endToken > sentence.tokens.length ||
        this.selection.startToken >= this.selection.endToken
      ) {
        errors.push({ field: "target", error: "span outside sentence token bounds" });
      }
    }
    if (!this.organizational && this.question.trim() === "") {
      errors.push({ field: "question", error: "question required unless organizational" });
    }
    return errors;
  }

  canSubmit(): boolean {
    return this.validationErrors().length === 0;
  }

  buildSubmission(): AnnotationBody {
    const errors = this.validationErrors();
    if (errors.length > 0 || !this.selection) {
      throw new Error(`draft not submittable: ${JSON.stringify(errors)}`);
    }
    return {
      task_id: this.task.task_id,
      question: this.question,
      target: {
        sentence_index: this.selection.sentenceIndex,
        start_token: this.selection.startToken,
        end_token: this.selection.endToken,
      },
      // the anchor is the sentence the highlighted target lives in
      anchor_index: this.selection.sentenceIndex,
      is_organizational: this.organizational,
    };
  }
}

/** Pending drafts that survive network loss; storage is injectable
 * (localStorage in the browser, a Map in tests). */
export interface DraftStorage {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
  removeItem(key: string): void;
}

const QUEUE_KEY = "qudkit.pending-annotations";

export class DraftQueue {
  constructor(private storage: DraftStorage) {}

  pending(): AnnotationBody[] {
    const raw = this.storage.getItem(QUEUE_KEY);
    return raw ? (JSON.parse(raw) as AnnotationBody[]) : [];
  }

  private save(drafts: AnnotationBody[]): void {
    if (drafts.length === 0) {
      this.storage.removeItem(QUEUE_KEY);
    } else {
      this.storage.setItem(QUEUE_KEY, JSON.stringify(drafts));
    }
  }

  enqueue(draft: AnnotationBody): void {
    this.save([...this.pending(), draft]);
  }

  /** Resubmit everything; drafts failing on the network stay queued,
   * drafts the server rejects are dropped (they need user edits). */
  async flush(api: ApiClient): Promise<{ submitted: number; remaining: number }> {
    const drafts = this.pending();
    const still: AnnotationBody[] = [];
    let submitted = 0;
    for (const draft of drafts) {
      try {
        await api.submitAnnotation(draft);
        submitted += 1;
      } catch (err) {
        if (err instanceof NetworkError) {
          still.push(draft);
        }
        // ApiError: server saw and rejected it; do not silently retry
      }
    }
    this.save(still);
    return { submitted, remaining: still.length };
  }
}

interface GuardrailDetail {
  code: string;
  overlap: number;
  threshold: number;
}

function isGuardrail(detail: unknown): detail is GuardrailDetail {
  return (
    typeof detail === "object" &&
    detail !== null &&
    (detail as { code?: string }).code === "question_overlaps_elaboration"
  );
}

function isFieldErrors(detail: unknown): detail is { errors: FieldError[] } {
  return typeof detail === "object" && detail !== null && Array.isArray((detail as { errors?: unknown }).errors);
}

/** Submit a finished draft; guardrail rejections surface inline, network
 * loss parks the draft in the queue for a later flush. */
export async function submitAnnotation(
  session: AnnotationSession,
  api: ApiClient,
  queue: DraftQueue,
): Promise<SubmitResult> {
  const errors = session.validationErrors();
  if (errors.length > 0) {
    return { ok: false, kind: "validation", errors };
  }
  const body = session.buildSubmission();
  try {
    const stored = await api.submitAnnotation(body);
    return { ok: true, annotationId: stored.annotation_id };
  } catch (err) {
    if (err instanceof NetworkError) {
      queue.enqueue(body);
      return { ok: false, kind: "queued" };
    }
    if (err instanceof ApiError) {
      if (isGuardrail(err.detail)) {
        return {
          ok: false,
          kind: "guardrail",
          overlap: err.detail.overlap,
          threshold: err.detail.threshold,
        };
      }
      if (err.status === 422 && isFieldErrors(err.detail)) {
        return { ok: false, kind: "validation", errors: err.detail.errors };
      }
      return { ok: false, kind: "conflict", detail: err.detail };
    }
    throw err;
  }
}
