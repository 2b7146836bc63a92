"""HTTP API for the annotation and human-evaluation workbench.

Single-file sqlite persistence (append-only annotations table), bearer-token
identities, compare-and-set task assignment with configurable redundancy,
an overlap guardrail on submitted questions, blinded seeded ordering for
elaboration ranking, and report endpoints surfacing the analysis module over
live store state.
"""

from __future__ import annotations

import json
import random
import secrets
import sqlite3
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from fastapi import Depends, FastAPI, Header, HTTPException
from pydantic import BaseModel

from . import analysis
from .backends import HeuristicQuestionClassifier, SimpleLexiconTagger
from .corpus import (
    Document,
    DocumentBundle,
    ElaborationInstance,
    QUDAnnotation,
    Sentence,
    Split,
    TargetSpan,
    extract_window,
    load_dataset,
    tokenize,
)
from .errors import EmptyInputError, IntegrityError
from .metrics import CRITERIA, ElabRanking, tally_rankings

_ALIAS_LETTERS = "ABCDEFGHIJKLMNOPQRSTUVWXYZ"

_GUARDRAIL_STOPWORDS = frozenset(
    "the a an of to in on at is are was were be been and or it its this that these "
    "those he she they we you i his her their our my do does did what why how when "
    "where who which will would can could".split()
)


@dataclass
class ServiceConfig:
    admin_token: str = "admin-token"
    redundancy_default: int = 2
    redundancy_overrides: dict[str, int] = field(default_factory=dict)
    guardrail_threshold: float = 0.5
    shuffle_seed: int = 1234
    require_qualification: bool = True


def content_tokens(text: str) -> set[str]:
    return {
        t.lower()
        for t in tokenize(text)
        if any(ch.isalnum() for ch in t) and t.lower() not in _GUARDRAIL_STOPWORDS
    }


def question_overlap_fraction(question: str, elaboration: str) -> float:
    q = content_tokens(question)
    if not q:
        return 0.0
    return len(q & content_tokens(elaboration)) / len(q)


# --------------------------------------------------------------------- store


_SCHEMA = """
CREATE TABLE IF NOT EXISTS documents (
    doc_id TEXT PRIMARY KEY, payload TEXT NOT NULL);
CREATE TABLE IF NOT EXISTS instances (
    instance_id TEXT PRIMARY KEY, doc_id TEXT NOT NULL, elab_index INTEGER NOT NULL,
    split TEXT NOT NULL, redundancy INTEGER NOT NULL);
CREATE TABLE IF NOT EXISTS identities (
    annotator_id TEXT PRIMARY KEY, token TEXT UNIQUE NOT NULL, role TEXT NOT NULL);
CREATE TABLE IF NOT EXISTS qualifications (
    annotator_id TEXT PRIMARY KEY, instance_ids TEXT NOT NULL, status TEXT NOT NULL);
CREATE TABLE IF NOT EXISTS tasks (
    task_id TEXT PRIMARY KEY, instance_id TEXT NOT NULL, annotator_id TEXT NOT NULL,
    state TEXT NOT NULL, seq INTEGER NOT NULL);
CREATE TABLE IF NOT EXISTS annotations (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    task_id TEXT, instance_id TEXT NOT NULL, annotator_id TEXT NOT NULL,
    question TEXT NOT NULL, sentence_index INTEGER NOT NULL,
    start_token INTEGER NOT NULL, end_token INTEGER NOT NULL,
    anchor_index INTEGER NOT NULL, is_organizational INTEGER NOT NULL,
    created_at TEXT NOT NULL);
CREATE TABLE IF NOT EXISTS eval_questions (
    question_id TEXT PRIMARY KEY, system_id TEXT NOT NULL,
    instance_id TEXT NOT NULL, text TEXT NOT NULL);
CREATE TABLE IF NOT EXISTS judgments (
    question_id TEXT NOT NULL, judge_id TEXT NOT NULL,
    reasonable INTEGER NOT NULL, answered INTEGER NOT NULL,
    PRIMARY KEY (question_id, judge_id));
CREATE TABLE IF NOT EXISTS eval_outputs (
    instance_id TEXT NOT NULL, system_id TEXT NOT NULL, text TEXT NOT NULL,
    PRIMARY KEY (instance_id, system_id));
CREATE TABLE IF NOT EXISTS rankings (
    instance_id TEXT NOT NULL, judge_id TEXT NOT NULL, criterion TEXT NOT NULL,
    first_system TEXT NOT NULL, second_system TEXT NOT NULL,
    PRIMARY KEY (instance_id, judge_id, criterion));
CREATE TABLE IF NOT EXISTS meta (key TEXT PRIMARY KEY, value TEXT NOT NULL);
"""


class Store:
    """Threadsafe wrapper over the embedded relational store."""

    def __init__(self, path: str | Path = ":memory:"):
        self._conn = sqlite3.connect(str(path), check_same_thread=False)
        self._conn.row_factory = sqlite3.Row
        self._conn.executescript(_SCHEMA)
        self._conn.commit()
        self.lock = threading.RLock()

    def execute(self, sql: str, params=()):
        with self.lock:
            cur = self._conn.execute(sql, params)
            self._conn.commit()
            return cur

    def query(self, sql: str, params=()):
        with self.lock:
            return self._conn.execute(sql, params).fetchall()

    def one(self, sql: str, params=()):
        rows = self.query(sql, params)
        return rows[0] if rows else None

    # ------------------------------------------------------------- corpus

    def load_corpus(
        self,
        bundles: list[DocumentBundle],
        redundancy_default: int = 2,
        redundancy_overrides: dict[str, int] | None = None,
        seed_annotations: bool = True,
    ) -> dict:
        overrides = redundancy_overrides or {}
        n_docs = n_instances = n_annotations = 0
        with self.lock:
            for doc, instances, annotations in bundles:
                payload = {
                    "doc_id": doc.doc_id,
                    "sentences": [
                        {"index": s.index, "text": s.text, "is_elaboration": s.is_elaboration}
                        for s in doc.sentences
                    ],
                    "source_level": doc.source_level,
                }
                self._conn.execute(
                    "INSERT OR REPLACE INTO documents (doc_id, payload) VALUES (?, ?)",
                    (doc.doc_id, json.dumps(payload, sort_keys=True)),
                )
                n_docs += 1
                for inst in instances:
                    self._conn.execute(
                        "INSERT OR REPLACE INTO instances "
                        "(instance_id, doc_id, elab_index, split, redundancy) VALUES (?, ?, ?, ?, ?)",
                        (
                            inst.instance_id,
                            inst.doc_id,
                            inst.elab_index,
                            inst.split.value,
                            overrides.get(inst.instance_id, redundancy_default),
                        ),
                    )
                    n_instances += 1
                if seed_annotations:
                    for ann in annotations:
                        self._conn.execute(
                            "INSERT INTO annotations "
                            "(task_id, instance_id, annotator_id, question, sentence_index, "
                            " start_token, end_token, anchor_index, is_organizational, created_at) "
                            "VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?)",
                            (
                                None,
                                ann.instance_id,
                                ann.annotator_id,
                                ann.question,
                                ann.target.sentence_index,
                                ann.target.start_token,
                                ann.target.end_token,
                                ann.anchor_index,
                                int(ann.is_organizational),
                                ann.timestamp or "seeded",
                            ),
                        )
                        n_annotations += 1
            self._conn.commit()
        return {"documents": n_docs, "instances": n_instances, "annotations": n_annotations}

    def document(self, doc_id: str) -> Document | None:
        row = self.one("SELECT payload FROM documents WHERE doc_id = ?", (doc_id,))
        if row is None:
            return None
        payload = json.loads(row["payload"])
        return Document(
            doc_id=payload["doc_id"],
            sentences=tuple(
                Sentence(s["index"], s["text"], bool(s["is_elaboration"]))
                for s in payload["sentences"]
            ),
            source_level=payload.get("source_level"),
        )

    def instance(self, instance_id: str) -> ElaborationInstance | None:
        row = self.one("SELECT * FROM instances WHERE instance_id = ?", (instance_id,))
        if row is None:
            return None
        doc = self.document(row["doc_id"])
        return ElaborationInstance(
            instance_id=row["instance_id"],
            doc_id=row["doc_id"],
            elab_index=row["elab_index"],
            context=extract_window(doc, row["elab_index"]),
            split=Split(row["split"]),
        )

    # ----------------------------------------------------------- identities

    def create_identity(self, annotator_id: str, role: str) -> str:
        token = secrets.token_hex(16)
        self.execute(
            "INSERT INTO identities (annotator_id, token, role) VALUES (?, ?, ?)",
            (annotator_id, token, role),
        )
        return token

    def identity_by_token(self, token: str):
        return self.one("SELECT * FROM identities WHERE token = ?", (token,))

    # ----------------------------------------------------------- annotations

    def approved_annotations(self) -> list[QUDAnnotation]:
        rows = self.query(
            "SELECT a.* FROM annotations a LEFT JOIN tasks t ON a.task_id = t.task_id "
            "WHERE a.task_id IS NULL OR t.state = 'approved' ORDER BY a.id"
        )
        out = []
        for r in rows:
            doc = self.document(
                self.one("SELECT doc_id FROM instances WHERE instance_id = ?", (r["instance_id"],))["doc_id"]
            )
            out.append(
                QUDAnnotation(
                    instance_id=r["instance_id"],
                    annotator_id=r["annotator_id"],
                    question=r["question"],
                    target=TargetSpan.from_offsets(
                        doc, r["sentence_index"], r["start_token"], r["end_token"]
                    ),
                    anchor_index=r["anchor_index"],
                    is_organizational=bool(r["is_organizational"]),
                    timestamp=r["created_at"],
                )
            )
        return out


# ----------------------------------------------------------------- API bodies


class NextTaskRequest(BaseModel):
    pass


class TargetBody(BaseModel):
    sentence_index: int
    start_token: int
    end_token: int


class AnnotationBody(BaseModel):
    task_id: str
    question: str = ""
    target: TargetBody
    anchor_index: int
    is_organizational: bool = False


class IdentityBody(BaseModel):
    annotator_id: str
    role: str = "annotator"


class QualificationSetBody(BaseModel):
    annotator_id: str
    instance_ids: list[str]


class QualificationDecisionBody(BaseModel):
    status: str


class LoadDatasetBody(BaseModel):
    path: str


class EvalQuestionItem(BaseModel):
    question_id: str
    system_id: str
    instance_id: str
    text: str


class EvalQuestionsBody(BaseModel):
    items: list[EvalQuestionItem]


class JudgmentBody(BaseModel):
    question_id: str
    reasonable: bool
    answered: bool


class EvalOutputItem(BaseModel):
    instance_id: str
    system_id: str
    text: str


class EvalOutputsBody(BaseModel):
    items: list[EvalOutputItem]


class RankingBody(BaseModel):
    instance_id: str
    criterion: str
    first_alias: str
    second_alias: str


# ------------------------------------------------------------------ factory


def create_app(store: Store, config: ServiceConfig | None = None) -> FastAPI:
    config = config or ServiceConfig()
    app = FastAPI(title="qudkit annotation service", version="0.1.0")
    store.execute(
        "INSERT OR REPLACE INTO meta (key, value) VALUES ('shuffle_seed', ?)",
        (str(config.shuffle_seed),),
    )

    tagger = SimpleLexiconTagger()
    classifier = HeuristicQuestionClassifier()

    # ------------------------------------------------------------- auth

    def identity(authorization: Optional[str] = Header(default=None)):
        if not authorization or not authorization.startswith("Bearer "):
            raise HTTPException(status_code=401, detail="missing bearer token")
        token = authorization.removeprefix("Bearer ").strip()
        if token == config.admin_token:
            return {"annotator_id": "__admin__", "role": "admin"}
        row = store.identity_by_token(token)
        if row is None:
            raise HTTPException(status_code=401, detail="unknown token")
        return dict(row)

    def require_admin(who=Depends(identity)):
        if who["role"] != "admin":
            raise HTTPException(status_code=403, detail="admin only")
        return who

    def require_judge(who=Depends(identity)):
        if who["role"] not in ("judge", "admin"):
            raise HTTPException(status_code=403, detail="judge only")
        return who

    # ----------------------------------------------------------- helpers

    def instance_or_404(instance_id: str) -> ElaborationInstance:
        inst = store.instance(instance_id)
        if inst is None:
            raise HTTPException(status_code=404, detail=f"no instance {instance_id}")
        return inst

    def window_payload(inst: ElaborationInstance) -> dict:
        window = inst.context
        prev_index = inst.elab_index - 1

        def sent_obj(s: Sentence) -> dict:
            return {
                "index": s.index,
                "text": s.text,
                "tokens": tokenize(s.text),
                "marked_prev": s.index == prev_index,
            }

        return {
            "pre": [sent_obj(s) for s in window.pre],
            "elaboration": {
                "index": window.elaboration.index,
                "text": window.elaboration.text,
                "highlighted": True,
            },
            "post": [{"index": s.index, "text": s.text} for s in window.post],
        }

    def context_texts(inst: ElaborationInstance) -> list[str]:
        return [s.text for s in inst.context.pre]

    def system_order_for(judge_id: str, instance_id: str, systems: list[str]) -> list[str]:
        rng = random.Random(f"{config.shuffle_seed}:{judge_id}:{instance_id}")
        ordered = sorted(systems)
        rng.shuffle(ordered)
        return ordered

    def fingerprint() -> dict:
        return analysis.config_fingerprint(
            [tagger.descriptor.backend_id, classifier.descriptor.backend_id],
            seed=config.shuffle_seed,
        )

    # ------------------------------------------------------------- routes

    @app.get("/health")
    def health():
        return {"status": "ok"}

    @app.post("/admin/annotators")
    def create_annotator(body: IdentityBody, who=Depends(require_admin)):
        if body.role not in ("annotator", "judge", "admin"):
            raise HTTPException(status_code=422, detail="role must be annotator|judge|admin")
        try:
            token = store.create_identity(body.annotator_id, body.role)
        except sqlite3.IntegrityError:
            raise HTTPException(status_code=409, detail="annotator exists")
        return {"annotator_id": body.annotator_id, "token": token}

    @app.post("/admin/load-dataset")
    def admin_load_dataset(body: LoadDatasetBody, who=Depends(require_admin)):
        bundles = load_dataset(body.path)
        counts = store.load_corpus(
            bundles, config.redundancy_default, config.redundancy_overrides
        )
        return counts

    @app.post("/admin/qualification-sets")
    def create_qualification_set(body: QualificationSetBody, who=Depends(require_admin)):
        if len(body.instance_ids) != 6:
            raise HTTPException(status_code=422, detail="qualification set must have exactly 6 instances")
        for iid in body.instance_ids:
            instance_or_404(iid)
        store.execute(
            "INSERT OR REPLACE INTO qualifications (annotator_id, instance_ids, status) "
            "VALUES (?, ?, 'pending')",
            (body.annotator_id, json.dumps(body.instance_ids)),
        )
        return {"annotator_id": body.annotator_id, "status": "pending"}

    @app.post("/qualifications/{annotator_id}/decision")
    def qualification_decision(annotator_id: str, body: QualificationDecisionBody, who=Depends(require_admin)):
        if body.status not in ("passed", "failed"):
            raise HTTPException(status_code=422, detail="status must be passed|failed")
        row = store.one("SELECT * FROM qualifications WHERE annotator_id = ?", (annotator_id,))
        if row is None:
            raise HTTPException(status_code=404, detail="no qualification record")
        store.execute(
            "UPDATE qualifications SET status = ? WHERE annotator_id = ?",
            (body.status, annotator_id),
        )
        return {"annotator_id": annotator_id, "status": body.status}

    @app.get("/qualifications/{annotator_id}")
    def get_qualification(annotator_id: str, who=Depends(identity)):
        if who["role"] != "admin" and who["annotator_id"] != annotator_id:
            raise HTTPException(status_code=403, detail="not yours")
        row = store.one("SELECT * FROM qualifications WHERE annotator_id = ?", (annotator_id,))
        if row is None:
            raise HTTPException(status_code=404, detail="no qualification record")
        return {
            "annotator_id": annotator_id,
            "instance_ids": json.loads(row["instance_ids"]),
            "status": row["status"],
        }

    @app.post("/tasks/next")
    def next_task(who=Depends(identity)):
        if who["role"] not in ("annotator", "admin"):
            raise HTTPException(status_code=403, detail="annotator only")
        annotator_id = who["annotator_id"]
        if config.require_qualification and who["role"] == "annotator":
            qual = store.one(
                "SELECT status FROM qualifications WHERE annotator_id = ?", (annotator_id,)
            )
            if qual is None or qual["status"] != "passed":
                raise HTTPException(status_code=403, detail="annotator not qualified")
        with store.lock:
            existing = store.one(
                "SELECT * FROM tasks WHERE annotator_id = ? AND state = 'open' ORDER BY seq",
                (annotator_id,),
            )
            if existing is None:
                candidate = store.one(
                    """
                    SELECT i.instance_id FROM instances i
                    WHERE i.instance_id NOT IN
                        (SELECT instance_id FROM tasks WHERE annotator_id = ?)
                      AND (SELECT COUNT(*) FROM tasks t WHERE t.instance_id = i.instance_id)
                          < i.redundancy
                    ORDER BY (SELECT COUNT(*) FROM tasks t2 WHERE t2.instance_id = i.instance_id
                              AND t2.state IN ('submitted', 'approved')) ASC,
                             i.instance_id ASC
                    LIMIT 1
                    """,
                    (annotator_id,),
                )
                if candidate is None:
                    return {"task": None}
                seq = int(time.monotonic_ns())
                task_id = f"task-{candidate['instance_id']}-{annotator_id}"
                store.execute(
                    "INSERT INTO tasks (task_id, instance_id, annotator_id, state, seq) "
                    "VALUES (?, ?, ?, 'open', ?)",
                    (task_id, candidate["instance_id"], annotator_id, seq),
                )
                existing = store.one("SELECT * FROM tasks WHERE task_id = ?", (task_id,))
        inst = instance_or_404(existing["instance_id"])
        return {
            "task": {
                "task_id": existing["task_id"],
                "instance_id": existing["instance_id"],
                "state": existing["state"],
                "payload": window_payload(inst),
            }
        }

    @app.post("/annotations")
    def submit_annotation(body: AnnotationBody, who=Depends(identity)):
        task = store.one("SELECT * FROM tasks WHERE task_id = ?", (body.task_id,))
        if task is None:
            raise HTTPException(status_code=404, detail="no such task")
        if task["annotator_id"] != who["annotator_id"] and who["role"] != "admin":
            raise HTTPException(status_code=403, detail="task belongs to another annotator")
        if task["state"] != "open":
            raise HTTPException(status_code=409, detail=f"task is {task['state']}, not open")
        inst = instance_or_404(task["instance_id"])
        doc = store.document(inst.doc_id)

        errors: list[dict] = []
        if not 0 <= body.anchor_index < len(doc.sentences):
            errors.append({"field": "anchor_index", "error": "outside document"})
        t = body.target
        if not 0 <= t.sentence_index < len(doc.sentences):
            errors.append({"field": "target.sentence_index", "error": "outside document"})
        else:
            n_tokens = len(doc.sentence(t.sentence_index).tokens())
            if not 0 <= t.start_token < t.end_token <= n_tokens:
                errors.append(
                    {"field": "target", "error": f"span [{t.start_token}, {t.end_token}) "
                                                 f"invalid for {n_tokens} tokens"}
                )
        if not body.is_organizational and not body.question.strip():
            errors.append({"field": "question", "error": "empty question on non-organizational sentence"})
        if errors:
            raise HTTPException(status_code=422, detail={"errors": errors})

        overlap = question_overlap_fraction(body.question, inst.context.elaboration.text)
        if body.question.strip() and overlap >= config.guardrail_threshold:
            raise HTTPException(
                status_code=422,
                detail={
                    "code": "question_overlaps_elaboration",
                    "overlap": overlap,
                    "threshold": config.guardrail_threshold,
                },
            )

        with store.lock:
            cur = store.execute(
                "INSERT INTO annotations (task_id, instance_id, annotator_id, question, "
                "sentence_index, start_token, end_token, anchor_index, is_organizational, created_at) "
                "VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?)",
                (
                    body.task_id,
                    task["instance_id"],
                    who["annotator_id"],
                    body.question,
                    t.sentence_index,
                    t.start_token,
                    t.end_token,
                    body.anchor_index,
                    int(body.is_organizational),
                    time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
                ),
            )
            store.execute(
                "UPDATE tasks SET state = 'submitted' WHERE task_id = ? AND state = 'open'",
                (body.task_id,),
            )
        return {"annotation_id": cur.lastrowid, "task_state": "submitted"}

    @app.get("/annotations/{annotation_id}")
    def get_annotation(annotation_id: int, who=Depends(identity)):
        row = store.one("SELECT * FROM annotations WHERE id = ?", (annotation_id,))
        if row is None:
            raise HTTPException(status_code=404, detail="no such annotation")
        if who["role"] != "admin" and row["annotator_id"] != who["annotator_id"]:
            raise HTTPException(status_code=403, detail="not yours")
        return {
            "annotation_id": row["id"],
            "task_id": row["task_id"],
            "instance_id": row["instance_id"],
            "annotator_id": row["annotator_id"],
            "question": row["question"],
            "target": {
                "sentence_index": row["sentence_index"],
                "start_token": row["start_token"],
                "end_token": row["end_token"],
            },
            "anchor_index": row["anchor_index"],
            "is_organizational": bool(row["is_organizational"]),
        }

    @app.post("/tasks/{task_id}/approve")
    def approve_task(task_id: str, who=Depends(require_admin)):
        task = store.one("SELECT * FROM tasks WHERE task_id = ?", (task_id,))
        if task is None:
            raise HTTPException(status_code=404, detail="no such task")
        if task["state"] != "submitted":
            raise HTTPException(status_code=409, detail=f"task is {task['state']}, not submitted")
        store.execute("UPDATE tasks SET state = 'approved' WHERE task_id = ?", (task_id,))
        return {"task_id": task_id, "state": "approved"}

    @app.get("/instances/{instance_id}")
    def get_instance(instance_id: str, who=Depends(identity)):
        inst = instance_or_404(instance_id)
        return {
            "instance_id": inst.instance_id,
            "doc_id": inst.doc_id,
            "elab_index": inst.elab_index,
            "split": inst.split.value,
            "payload": window_payload(inst),
        }

    # ------------------------------------------------------ question judging

    @app.post("/admin/eval-questions")
    def register_eval_questions(body: EvalQuestionsBody, who=Depends(require_admin)):
        for item in body.items:
            instance_or_404(item.instance_id)
            store.execute(
                "INSERT OR REPLACE INTO eval_questions (question_id, system_id, instance_id, text) "
                "VALUES (?, ?, ?, ?)",
                (item.question_id, item.system_id, item.instance_id, item.text),
            )
        return {"registered": len(body.items)}

    @app.get("/eval/questions/next")
    def next_eval_question(who=Depends(require_judge)):
        row = store.one(
            "SELECT q.* FROM eval_questions q WHERE q.question_id NOT IN "
            "(SELECT question_id FROM judgments WHERE judge_id = ?) ORDER BY q.question_id LIMIT 1",
            (who["annotator_id"],),
        )
        if row is None:
            return {"item": None}
        inst = instance_or_404(row["instance_id"])
        return {
            "item": {
                "question_id": row["question_id"],
                "question": row["text"],
                "context": context_texts(inst),
                "elaboration": inst.context.elaboration.text,
            }
        }

    @app.post("/judgments")
    def submit_judgment(body: JudgmentBody, who=Depends(require_judge)):
        if store.one("SELECT 1 FROM eval_questions WHERE question_id = ?", (body.question_id,)) is None:
            raise HTTPException(status_code=404, detail="no such eval question")
        try:
            store.execute(
                "INSERT INTO judgments (question_id, judge_id, reasonable, answered) VALUES (?, ?, ?, ?)",
                (body.question_id, who["annotator_id"], int(body.reasonable), int(body.answered)),
            )
        except sqlite3.IntegrityError:
            raise HTTPException(status_code=409, detail="already judged by you")
        return {"stored": True}

    # ------------------------------------------------------ elab ranking

    @app.post("/admin/eval-outputs")
    def register_eval_outputs(body: EvalOutputsBody, who=Depends(require_admin)):
        for item in body.items:
            instance_or_404(item.instance_id)
            store.execute(
                "INSERT OR REPLACE INTO eval_outputs (instance_id, system_id, text) VALUES (?, ?, ?)",
                (item.instance_id, item.system_id, item.text),
            )
        return {"registered": len(body.items)}

    def _aliased_candidates(judge_id: str, instance_id: str) -> dict[str, str]:
        rows = store.query(
            "SELECT system_id FROM eval_outputs WHERE instance_id = ?", (instance_id,)
        )
        systems = [r["system_id"] for r in rows]
        if not systems:
            raise HTTPException(status_code=404, detail="no outputs registered for instance")
        order = system_order_for(judge_id, instance_id, systems)
        return {alias: system for alias, system in zip(_ALIAS_LETTERS, order)}

    @app.get("/eval/elabs/{instance_id}")
    def elab_board(instance_id: str, who=Depends(require_judge)):
        inst = instance_or_404(instance_id)
        alias_map = _aliased_candidates(who["annotator_id"], instance_id)
        candidates = []
        for alias, system in alias_map.items():
            row = store.one(
                "SELECT text FROM eval_outputs WHERE instance_id = ? AND system_id = ?",
                (instance_id, system),
            )
            candidates.append({"alias": alias, "text": row["text"]})
        return {
            "instance_id": instance_id,
            "context": context_texts(inst),
            "candidates": candidates,
            "criteria": list(CRITERIA),
        }

    @app.post("/rankings")
    def submit_ranking(body: RankingBody, who=Depends(require_judge)):
        if body.criterion not in CRITERIA:
            raise HTTPException(status_code=422, detail=f"criterion must be one of {CRITERIA}")
        if body.first_alias == body.second_alias:
            raise HTTPException(status_code=422, detail="first and second must differ")
        alias_map = _aliased_candidates(who["annotator_id"], body.instance_id)
        try:
            first = alias_map[body.first_alias]
            second = alias_map[body.second_alias]
        except KeyError as exc:
            raise HTTPException(status_code=422, detail=f"unknown alias {exc.args[0]!r}")
        try:
            store.execute(
                "INSERT INTO rankings (instance_id, judge_id, criterion, first_system, second_system) "
                "VALUES (?, ?, ?, ?, ?)",
                (body.instance_id, who["annotator_id"], body.criterion, first, second),
            )
        except sqlite3.IntegrityError:
            raise HTTPException(status_code=409, detail="already ranked by you for this criterion")
        return {"stored": True}

    # ------------------------------------------------------------- reports

    def _corpus_maps():
        instances = {}
        documents = {}
        for row in store.query("SELECT instance_id FROM instances"):
            inst = store.instance(row["instance_id"])
            instances[inst.instance_id] = inst
            if inst.doc_id not in documents:
                documents[inst.doc_id] = store.document(inst.doc_id)
        return instances, documents

    @app.get("/reports/agreement")
    def report_agreement(who=Depends(identity)):
        annotations = store.approved_annotations()
        grouped: dict[str, list[QUDAnnotation]] = {}
        for a in annotations:
            grouped.setdefault(a.instance_id, []).append(a)
        instances, _ = _corpus_maps()
        try:
            report = analysis.anchor_agreement(grouped, instances)
            overlap = analysis.target_overlap_rate(grouped)
        except EmptyInputError:
            return {"empty": True, "fingerprint": fingerprint()}
        return {
            "fleiss_kappa": report.fleiss_kappa,
            "free_marginal_kappa": report.free_marginal_kappa,
            "percent_agreement": report.percent_agreement,
            "n_items": report.n_items,
            "n_categories": report.n_categories,
            "n_excluded": report.n_excluded,
            "target_overlap_rate": overlap,
            "fingerprint": fingerprint(),
        }

    @app.get("/reports/targets")
    def report_targets(who=Depends(identity)):
        annotations = store.approved_annotations()
        if not annotations:
            return {"empty": True, "fingerprint": fingerprint()}
        instances, documents = _corpus_maps()
        stats = analysis.target_statistics(annotations, instances, documents, tagger)
        return {
            "mean_len_tokens": stats.mean_len_tokens,
            "std_len_tokens": stats.std_len_tokens,
            "pos_histogram": stats.pos_histogram,
            "pct_with_verb": stats.pct_with_verb,
            "pct_with_proper_noun": stats.pct_with_proper_noun,
            "total_target_tokens": stats.total_target_tokens,
            "fingerprint": fingerprint(),
        }

    @app.get("/reports/qtypes")
    def report_qtypes(who=Depends(identity)):
        annotations = [a for a in store.approved_annotations() if a.question.strip()]
        if not annotations:
            return {"empty": True, "fingerprint": fingerprint()}
        dist = analysis.question_type_distribution([a.question for a in annotations], classifier)
        return {"counts": dist.counts, "proportions": dist.proportions, "fingerprint": fingerprint()}

    @app.get("/reports/rankings")
    def report_rankings(who=Depends(identity)):
        rows = store.query("SELECT * FROM rankings")
        if not rows:
            return {"empty": True, "fingerprint": fingerprint()}
        tally = tally_rankings(
            [
                ElabRanking(
                    instance_id=r["instance_id"],
                    judge_id=r["judge_id"],
                    criterion=r["criterion"],
                    first=r["first_system"],
                    second=r["second_system"],
                )
                for r in rows
            ]
        )
        return {"counts": tally.counts, "totals": tally.totals, "fingerprint": fingerprint()}

    return app
