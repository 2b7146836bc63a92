/** DOM wiring for the workbench; all behavior lives in the tested modules. */

import { ApiClient } from "./api.js";
import { AnnotationSession, DraftQueue, submitAnnotation } from "./annotation.js";
import { RankingBoard } from "./ranking.js";
import { renderContext } from "./render.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  if (text !== undefined) node.textContent = text;
  return node;
}

function mountAnnotation(api: ApiClient, root: HTMLElement): void {
  const queue = new DraftQueue(window.localStorage);
  void queue.flush(api);

  async function loadTask(): Promise<void> {
    root.replaceChildren(el("p", {}, "loading task..."));
    const { task } = await api.nextTask();
    if (!task) {
      root.replaceChildren(el("p", {}, "no open tasks"));
      return;
    }
    const session = new AnnotationSession(task);
    const pane = el("div", { class: "reading-pane" });
    const status = el("p", { class: "status" });
    const questionInput = el("textarea", { rows: "2", placeholder: "Implicit question..." });
    const organizational = el("input", { type: "checkbox" });
    const submit = el("button", {}, "Submit annotation");

    function refresh(): void {
      pane.replaceChildren();
      for (const row of renderContext(session.task)) {
        const p = el("p", {
          class: [
            row.highlighted ? "elaboration" : "",
            row.markedPrev ? "marked-prev" : "",
          ].join(" "),
        });
        if (row.selectable) {
          row.tokens.forEach((token, i) => {
            const selected =
              session.selection !== null &&
              session.selection.sentenceIndex === row.index &&
              i >= session.selection.startToken &&
              i < session.selection.endToken;
            const span = el("span", { class: selected ? "token selected" : "token" }, token + " ");
            span.onmousedown = () => {
              session.beginSelection(row.index, i);
              refresh();
            };
            span.onmouseover = (ev) => {
              if (ev.buttons === 1) {
                session.extendSelection(row.index, i);
                refresh();
              }
            };
            p.appendChild(span);
          });
        } else {
          p.textContent = row.text;
        }
        pane.appendChild(p);
      }
      submit.toggleAttribute("disabled", !session.canSubmit());
      status.textContent = session.selection
        ? `target: "${session.selectedText()}"`
        : "highlight the target span in the prior context";
    }

    questionInput.oninput = () => {
      session.question = questionInput.value;
      refresh();
    };
    organizational.onchange = () => {
      session.organizational = organizational.checked;
      refresh();
    };
    submit.onclick = async () => {
      const result = await submitAnnotation(session, api, queue);
      if (result.ok) {
        await loadTask();
      } else if (result.kind === "guardrail") {
        status.textContent =
          `question copies too much of the elaboration ` +
          `(overlap ${result.overlap.toFixed(2)} >= ${result.threshold}); rephrase it`;
      } else if (result.kind === "validation") {
        status.textContent = result.errors.map((e) => `${e.field}: ${e.error}`).join("; ");
      } else if (result.kind === "queued") {
        status.textContent = "offline: draft saved, will resubmit automatically";
      } else {
        status.textContent = `rejected: ${JSON.stringify(result.detail)}`;
      }
    };

    const orgLabel = el("label", {}, " organizational sentence (question optional)");
    orgLabel.prepend(organizational);
    root.replaceChildren(pane, status, questionInput, orgLabel, submit);
    refresh();
  }

  void loadTask();
}

function mountRanking(api: ApiClient, root: HTMLElement, instanceId: string): void {
  void (async () => {
    const board = new RankingBoard(await api.getElabBoard(instanceId));
    const container = el("div", { class: "ranking" });
    const status = el("p", {});
    const submit = el("button", {}, "Submit rankings");

    function refresh(): void {
      container.replaceChildren();
      for (const criterion of board.board.criteria) {
        const section = el("fieldset");
        section.appendChild(el("legend", {}, criterion));
        for (const candidate of board.candidates()) {
          const row = el("p", {}, `${candidate.alias}: ${candidate.text} `);
          for (const rank of ["first", "second"] as const) {
            const btn = el("button", {}, rank === "first" ? "#1" : "#2");
            btn.onclick = () => {
              board.pick(criterion, rank, candidate.alias);
              refresh();
            };
            row.appendChild(btn);
          }
          section.appendChild(row);
        }
        const picks = board.picksFor(criterion);
        section.appendChild(el("p", {}, `#1: ${picks.first ?? "-"}  #2: ${picks.second ?? "-"}`));
        container.appendChild(section);
      }
      submit.toggleAttribute("disabled", !board.isComplete());
    }

    submit.onclick = async () => {
      for (const body of board.buildSubmissions()) {
        await api.submitRanking(body);
      }
      status.textContent = "rankings stored";
    };

    root.replaceChildren(container, status, submit);
    refresh();
  })();
}

function boot(): void {
  const root = document.getElementById("app");
  if (!root) return;
  const params = new URLSearchParams(window.location.search);
  const token = params.get("token") ?? window.prompt("bearer token") ?? "";
  const api = new ApiClient(params.get("api") ?? "", token);
  const instanceId = params.get("rank");
  if (instanceId) {
    mountRanking(api, root, instanceId);
  } else {
    mountAnnotation(api, root);
  }
}

if (typeof document !== "undefined") {
  boot();
}
