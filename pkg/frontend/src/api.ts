/** Typed client for the annotation service.
 *
 * The fetch implementation is injectable so tests can run against an
 * in-memory fake of the same contract. Network failures (fetch rejecting)
 * surface as NetworkError; HTTP errors as ApiError with the server detail.
 */

import type {
  AnnotationBody,
  AnnotationTask,
  ElabBoard,
  JudgmentBody,
  JudgmentItem,
  RankingBody,
  StoredAnnotation,
} from "./types.js";

export type FetchLike = (url: string, init: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    public status: number,
    public detail: unknown,
  ) {
    super(`HTTP ${status}: ${JSON.stringify(detail)}`);
  }
}

export class NetworkError extends Error {}

export class ApiClient {
  constructor(
    private baseUrl: string,
    private token: string,
    private fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchImpl(`${this.baseUrl}${path}`, {
        method,
        headers: {
          Authorization: `Bearer ${this.token}`,
          "Content-Type": "application/json",
        },
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch (err) {
      throw new NetworkError(String(err));
    }
    const payload = await response.json().catch(() => null);
    if (!response.ok) {
      throw new ApiError(response.status, payload ? (payload as { detail?: unknown }).detail : null);
    }
    return payload as T;
  }

  nextTask(): Promise<{ task: AnnotationTask | null }> {
    return this.request("POST", "/tasks/next");
  }

  submitAnnotation(body: AnnotationBody): Promise<{ annotation_id: number; task_state: string }> {
    return this.request("POST", "/annotations", body);
  }

  getAnnotation(annotationId: number): Promise<StoredAnnotation> {
    return this.request("GET", `/annotations/${annotationId}`);
  }

  nextJudgmentItem(): Promise<{ item: JudgmentItem | null }> {
    return this.request("GET", "/eval/questions/next");
  }

  submitJudgment(body: JudgmentBody): Promise<{ stored: boolean }> {
    return this.request("POST", "/judgments", body);
  }

  getElabBoard(instanceId: string): Promise<ElabBoard> {
    return this.request("GET", `/eval/elabs/${instanceId}`);
  }

  submitRanking(body: RankingBody): Promise<{ stored: boolean }> {
    return this.request("POST", "/rankings", body);
  }

  report(kind: "agreement" | "targets" | "qtypes" | "rankings"): Promise<Record<string, unknown>> {
    return this.request("GET", `/reports/${kind}`);
  }
}
