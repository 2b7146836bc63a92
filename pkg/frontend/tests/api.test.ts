import { describe, expect, it } from "vitest";

import { ApiClient, ApiError, NetworkError } from "../src/api.js";
import { FakeServer, fixtureInstance } from "./fakeServer.js";

describe("api client", () => {
  it("sends the bearer token", async () => {
    let seenAuth = "";
    const api = new ApiClient("http://svc", "tok-123", (url, init) => {
      seenAuth = (init.headers as Record<string, string>)["Authorization"]!;
      return Promise.resolve({
        ok: true,
        status: 200,
        json: () => Promise.resolve({ task: null }),
      } as Response);
    });
    await api.nextTask();
    expect(seenAuth).toBe("Bearer tok-123");
  });

  it("maps HTTP errors to ApiError with the server detail", async () => {
    const server = new FakeServer([fixtureInstance()]);
    const api = new ApiClient("", "someone", server.fetch);
    try {
      await api.getAnnotation(42);
      expect.unreachable();
    } catch (err) {
      expect(err).toBeInstanceOf(ApiError);
      expect((err as ApiError).status).toBe(404);
    }
  });

  it("maps fetch rejections to NetworkError", async () => {
    const server = new FakeServer([fixtureInstance()]);
    server.offline = true;
    const api = new ApiClient("", "someone", server.fetch);
    await expect(api.nextTask()).rejects.toBeInstanceOf(NetworkError);
  });

  it("judgment double-submit surfaces the conflict status", async () => {
    const server = new FakeServer([fixtureInstance()]);
    server.registerEvalQuestion("q1", "inst0", "Why?");
    const api = new ApiClient("", "judge-a", server.fetch);
    await api.submitJudgment({ question_id: "q1", reasonable: true, answered: false });
    await expect(
      api.submitJudgment({ question_id: "q1", reasonable: true, answered: true }),
    ).rejects.toMatchObject({ status: 409 });
  });
});
