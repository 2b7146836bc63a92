/** Payload shapes of the annotation service API (see ../openapi.json). */

export interface SentenceView {
  index: number;
  text: string;
  tokens: string[];
  marked_prev: boolean;
}

export interface TaskPayload {
  pre: SentenceView[];
  elaboration: { index: number; text: string; highlighted: boolean };
  post: { index: number; text: string }[];
}

export interface AnnotationTask {
  task_id: string;
  instance_id: string;
  state: "open" | "submitted" | "approved";
  payload: TaskPayload;
}

export interface TargetBody {
  sentence_index: number;
  start_token: number;
  end_token: number;
}

export interface AnnotationBody {
  task_id: string;
  question: string;
  target: TargetBody;
  anchor_index: number;
  is_organizational: boolean;
}

export interface StoredAnnotation {
  annotation_id: number;
  task_id: string | null;
  instance_id: string;
  annotator_id: string;
  question: string;
  target: TargetBody;
  anchor_index: number;
  is_organizational: boolean;
}

export interface JudgmentItem {
  question_id: string;
  question: string;
  context: string[];
  elaboration: string;
}

export interface JudgmentBody {
  question_id: string;
  reasonable: boolean;
  answered: boolean;
}

export interface ElabCandidate {
  alias: string;
  text: string;
}

export interface ElabBoard {
  instance_id: string;
  context: string[];
  candidates: ElabCandidate[];
  criteria: string[];
}

export interface RankingBody {
  instance_id: string;
  criterion: string;
  first_alias: string;
  second_alias: string;
}

export interface FieldError {
  field: string;
  error: string;
}
