/** View models for the reading pane. All displayed text comes straight from
 * the API payload; nothing is embedded client-side. */

import type { AnnotationTask, JudgmentItem } from "./types.js";

export interface ContextRow {
  index: number;
  text: string;
  tokens: string[];
  selectable: boolean;
  highlighted: boolean;
  markedPrev: boolean;
}

export function renderContext(task: AnnotationTask): ContextRow[] {
  const rows: ContextRow[] = task.payload.pre.map((s) => ({
    index: s.index,
    text: s.text,
    tokens: s.tokens,
    selectable: true,
    highlighted: false,
    markedPrev: s.marked_prev,
  }));
  rows.push({
    index: task.payload.elaboration.index,
    text: task.payload.elaboration.text,
    tokens: [],
    selectable: false,
    highlighted: true,
    markedPrev: false,
  });
  for (const s of task.payload.post) {
    rows.push({
      index: s.index,
      text: s.text,
      tokens: [],
      selectable: false,
      highlighted: false,
      markedPrev: false,
    });
  }
  return rows;
}

export interface JudgmentView {
  questionId: string;
  question: string;
  contextParagraph: string;
  elaboration: string;
  criteria: [string, string];
}

export function renderJudgmentItem(item: JudgmentItem): JudgmentView {
  return {
    questionId: item.question_id,
    question: item.question,
    contextParagraph: item.context.join(" "),
    elaboration: item.elaboration,
    criteria: [
      "Is the question reasonable to ask given the current context?",
      "Is this question answered by the elaboration?",
    ],
  };
}
