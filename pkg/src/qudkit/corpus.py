"""Corpus data model and ingestion.

Documents are ordered simplified-article sentences with elaboration markers;
each marked elaboration gets a context window (up to 5 sentences before, 3
after), and human annotations attach an implicit question, a target span, an
anchor sentence, and an organizational flag to an elaboration instance.

All objects are immutable after construction and safe to share across threads.
The canonical tokenizer lives here because every downstream statistic (target
length, overlap, frequency) is token-denominated and must be reproducible
bit-for-bit within the artifact.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, NamedTuple

from .errors import IntegrityError, ParseError, WindowRangeError

FORMAT_VERSION = "1.0"

MAX_PRE_SENTENCES = 5
MAX_POST_SENTENCES = 3

# --------------------------------------------------------------------------
# Canonical tokenizer
#
# Frozen rule set (golden-file tested): split on whitespace runs; peel
# leading and trailing punctuation characters off each chunk one at a time;
# apostrophes and hyphens never split; chunk-internal punctuation stays put.

_PUNCT = frozenset(".,!?;:()[]{}\"“”‘’…")
_CLOSERS = frozenset(".,!?;:)]}”’…")
_OPENERS = frozenset("([{“‘")

TOKENIZER_VERSION = "ws-edge-punct-v1"
TOKENIZER_FINGERPRINT = hashlib.sha256(
    (TOKENIZER_VERSION + "".join(sorted(_PUNCT))).encode("utf-8")
).hexdigest()[:12]


def tokenize(text: str) -> list[str]:
    """Deterministic whitespace + edge-punctuation tokenizer."""
    tokens: list[str] = []
    for chunk in text.split():
        leading: list[str] = []
        while chunk and chunk[0] in _PUNCT:
            leading.append(chunk[0])
            chunk = chunk[1:]
        trailing: list[str] = []
        while chunk and chunk[-1] in _PUNCT:
            trailing.append(chunk[-1])
            chunk = chunk[:-1]
        tokens.extend(leading)
        if chunk:
            tokens.append(chunk)
        tokens.extend(reversed(trailing))
    return tokens


def detokenize(tokens: Iterable[str]) -> str:
    """Join tokens so that re-tokenizing reproduces the same token list.

    Closing punctuation attaches to the previous token; anything after an
    opening bracket/quote attaches to it. Straight double quotes alternate
    open/close by occurrence parity.
    """
    out: list[str] = []
    prev_opener = False
    quote_open = False
    for tok in tokens:
        is_straight_quote = tok == '"'
        closer = (len(tok) == 1 and tok in _CLOSERS) or (is_straight_quote and quote_open)
        if is_straight_quote:
            quote_open = not quote_open
        if not out:
            out.append(tok)
        elif closer or prev_opener:
            out[-1] += tok
        else:
            out.append(tok)
        prev_opener = (len(tok) == 1 and tok in _OPENERS) or (is_straight_quote and quote_open)
    return " ".join(out)


# --------------------------------------------------------------------------
# Domain types


class Split(str, Enum):
    TRAIN = "train"
    VALIDATION = "validation"
    TEST = "test"


@dataclass(frozen=True)
class Sentence:
    index: int
    text: str
    is_elaboration: bool = False

    def tokens(self) -> list[str]:
        return tokenize(self.text)


@dataclass(frozen=True)
class Document:
    doc_id: str
    sentences: tuple[Sentence, ...]
    source_level: str | None = None

    def __post_init__(self):
        for pos, sent in enumerate(self.sentences):
            if sent.index != pos:
                raise IntegrityError(
                    f"document {self.doc_id}: sentence index {sent.index} at position {pos}"
                )
            if not sent.text.strip():
                raise IntegrityError(f"document {self.doc_id}: empty sentence at index {pos}")

    def sentence(self, index: int) -> Sentence:
        if not 0 <= index < len(self.sentences):
            raise WindowRangeError(f"document {self.doc_id}: no sentence {index}")
        return self.sentences[index]


@dataclass(frozen=True)
class ContextWindow:
    pre: tuple[Sentence, ...]
    elaboration: Sentence
    post: tuple[Sentence, ...]

    def __post_init__(self):
        if len(self.pre) > MAX_PRE_SENTENCES:
            raise IntegrityError(f"context window has {len(self.pre)} > {MAX_PRE_SENTENCES} pre sentences")
        if len(self.post) > MAX_POST_SENTENCES:
            raise IntegrityError(f"context window has {len(self.post)} > {MAX_POST_SENTENCES} post sentences")
        indices = [s.index for s in self.pre]
        if indices != sorted(indices) or len(set(indices)) != len(indices):
            raise IntegrityError("pre-context indices are not strictly increasing")
        post_indices = [s.index for s in self.post]
        if post_indices != sorted(post_indices) or len(set(post_indices)) != len(post_indices):
            raise IntegrityError("post-context indices are not strictly increasing")
        elab = self.elaboration.index
        if any(i >= elab for i in indices) or any(i <= elab for i in post_indices):
            raise IntegrityError("context window does not bracket the elaboration")


def extract_window(
    doc: Document,
    elab_index: int,
    pre_size: int = MAX_PRE_SENTENCES,
    post_size: int = MAX_POST_SENTENCES,
) -> ContextWindow:
    """Window of up to `pre_size` sentences before and `post_size` after.

    Truncates silently at document edges (no padding sentinel).
    """
    if not 0 <= elab_index < len(doc.sentences):
        raise WindowRangeError(f"document {doc.doc_id}: index {elab_index} out of range")
    if not 0 < pre_size <= MAX_PRE_SENTENCES or not 0 <= post_size <= MAX_POST_SENTENCES:
        raise WindowRangeError(f"window sizes ({pre_size}, {post_size}) exceed caps")
    lo = max(0, elab_index - pre_size)
    hi = min(len(doc.sentences), elab_index + 1 + post_size)
    return ContextWindow(
        pre=doc.sentences[lo:elab_index],
        elaboration=doc.sentences[elab_index],
        post=doc.sentences[elab_index + 1 : hi],
    )


@dataclass(frozen=True)
class ElaborationInstance:
    instance_id: str
    doc_id: str
    elab_index: int
    context: ContextWindow
    split: Split

    def __post_init__(self):
        if not self.context.elaboration.is_elaboration:
            raise IntegrityError(
                f"instance {self.instance_id}: sentence {self.elab_index} is not marked as an elaboration"
            )
        if self.context.elaboration.index != self.elab_index:
            raise IntegrityError(f"instance {self.instance_id}: context window/elab_index mismatch")


@dataclass(frozen=True)
class TargetSpan:
    sentence_index: int
    start_token: int
    end_token: int  # exclusive
    surface_text: str

    def __post_init__(self):
        if not 0 <= self.start_token < self.end_token:
            raise IntegrityError(
                f"target span [{self.start_token}, {self.end_token}) is empty or negative"
            )

    def validate_against(self, doc: Document) -> None:
        sent = doc.sentence(self.sentence_index)
        n = len(sent.tokens())
        if self.end_token > n:
            raise IntegrityError(
                f"target span [{self.start_token}, {self.end_token}) exceeds "
                f"{n} tokens of sentence {self.sentence_index} in {doc.doc_id}"
            )

    @classmethod
    def from_offsets(cls, doc: Document, sentence_index: int, start: int, end: int) -> "TargetSpan":
        sent = doc.sentence(sentence_index)
        toks = sent.tokens()
        if not 0 <= start < end <= len(toks):
            raise IntegrityError(
                f"target span [{start}, {end}) invalid for {len(toks)}-token "
                f"sentence {sentence_index} in {doc.doc_id}"
            )
        return cls(sentence_index, start, end, detokenize(toks[start:end]))

    def tokens(self, doc: Document) -> list[str]:
        return doc.sentence(self.sentence_index).tokens()[self.start_token : self.end_token]

    def positions(self) -> set[tuple[int, int]]:
        return {(self.sentence_index, i) for i in range(self.start_token, self.end_token)}


@dataclass(frozen=True)
class QUDAnnotation:
    instance_id: str
    annotator_id: str
    question: str
    target: TargetSpan
    anchor_index: int
    is_organizational: bool = False
    timestamp: str | None = None

    def __post_init__(self):
        if not self.is_organizational and not self.question.strip():
            raise IntegrityError(
                f"annotation by {self.annotator_id} on {self.instance_id}: "
                "question empty but not flagged organizational"
            )


def anchor_distance(annotation: QUDAnnotation, instance: ElaborationInstance) -> int:
    """elab_index - anchor_index: positive means the anchor precedes the elaboration."""
    if annotation.instance_id != instance.instance_id:
        raise IntegrityError(
            f"annotation for {annotation.instance_id} paired with instance {instance.instance_id}"
        )
    return instance.elab_index - annotation.anchor_index


# --------------------------------------------------------------------------
# Dataset file format (UTF-8 JSONL, "kind"-discriminated)


class DocumentBundle(NamedTuple):
    document: Document
    instances: list[ElaborationInstance]
    annotations: list[QUDAnnotation]


@dataclass
class Corpus:
    bundles: list[DocumentBundle] = field(default_factory=list)

    @property
    def documents(self) -> dict[str, Document]:
        return {b.document.doc_id: b.document for b in self.bundles}

    @property
    def instances(self) -> dict[str, ElaborationInstance]:
        return {i.instance_id: i for b in self.bundles for i in b.instances}

    @property
    def annotations(self) -> list[QUDAnnotation]:
        return [a for b in self.bundles for a in b.annotations]

    def annotations_by_instance(self) -> dict[str, list[QUDAnnotation]]:
        grouped: dict[str, list[QUDAnnotation]] = {}
        for ann in self.annotations:
            grouped.setdefault(ann.instance_id, []).append(ann)
        return grouped

    def doc_of_instance(self) -> dict[str, str]:
        return {i.instance_id: i.doc_id for b in self.bundles for i in b.instances}


def _canonical_line(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def _require(obj: dict, key: str, line: int):
    if key not in obj:
        raise ParseError("missing field", line=line, field=key)
    return obj[key]


def load_dataset(path: str | Path, format_version: str = FORMAT_VERSION) -> list[DocumentBundle]:
    """Parse and fully validate a JSONL dataset file.

    Returns one bundle per document, in file order, with instances and
    annotations attached. Schema violations raise ParseError naming the line
    and field; dangling references raise IntegrityError.
    """
    path = Path(path)
    raw_docs: dict[str, Document] = {}
    doc_order: list[str] = []
    raw_instances: list[tuple[int, dict]] = []
    raw_annotations: list[tuple[int, dict]] = []

    with path.open("r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError("empty dataset file", line=1)

    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", line=1) from exc
    if not isinstance(header, dict) or header.get("kind") != "header":
        raise ParseError("first line must be the header object", line=1, field="kind")
    if header.get("format_version") != format_version:
        raise ParseError(
            f"format_version {header.get('format_version')!r} != expected {format_version!r}",
            line=1,
            field="format_version",
        )

    for lineno, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", line=lineno) from exc
        kind = _require(obj, "kind", lineno)
        if kind == "document":
            doc_id = _require(obj, "doc_id", lineno)
            sentences = []
            for s in _require(obj, "sentences", lineno):
                sentences.append(
                    Sentence(
                        index=_require(s, "index", lineno),
                        text=_require(s, "text", lineno),
                        is_elaboration=bool(s.get("is_elaboration", False)),
                    )
                )
            try:
                doc = Document(doc_id, tuple(sentences), obj.get("source_level"))
            except IntegrityError as exc:
                raise ParseError(str(exc), line=lineno, field="sentences") from exc
            if doc_id in raw_docs:
                raise ParseError(f"duplicate doc_id {doc_id!r}", line=lineno, field="doc_id")
            raw_docs[doc_id] = doc
            doc_order.append(doc_id)
        elif kind == "instance":
            for key in ("instance_id", "doc_id", "elab_index", "split"):
                _require(obj, key, lineno)
            raw_instances.append((lineno, obj))
        elif kind == "annotation":
            for key in ("instance_id", "annotator_id", "question", "target", "anchor_index", "is_organizational"):
                _require(obj, key, lineno)
            for key in ("sentence_index", "start_token", "end_token"):
                _require(obj["target"], key, lineno)
            raw_annotations.append((lineno, obj))
        else:
            raise ParseError(f"unknown kind {kind!r}", line=lineno, field="kind")

    instances: dict[str, ElaborationInstance] = {}
    instances_by_doc: dict[str, list[ElaborationInstance]] = {d: [] for d in doc_order}
    for lineno, obj in raw_instances:
        doc = raw_docs.get(obj["doc_id"])
        if doc is None:
            raise IntegrityError(f"instance {obj['instance_id']} references unknown doc {obj['doc_id']!r}")
        try:
            split = Split(obj["split"])
        except ValueError as exc:
            raise ParseError(f"unknown split {obj['split']!r}", line=lineno, field="split") from exc
        try:
            window = extract_window(doc, obj["elab_index"])
        except WindowRangeError as exc:
            raise IntegrityError(str(exc)) from exc
        inst = ElaborationInstance(obj["instance_id"], doc.doc_id, obj["elab_index"], window, split)
        if inst.instance_id in instances:
            raise IntegrityError(f"duplicate instance_id {inst.instance_id!r}")
        instances[inst.instance_id] = inst
        instances_by_doc[doc.doc_id].append(inst)

    annotations_by_doc: dict[str, list[QUDAnnotation]] = {d: [] for d in doc_order}
    for lineno, obj in raw_annotations:
        inst = instances.get(obj["instance_id"])
        if inst is None:
            raise IntegrityError(f"annotation references unknown instance {obj['instance_id']!r}")
        doc = raw_docs[inst.doc_id]
        if not 0 <= obj["anchor_index"] < len(doc.sentences):
            raise IntegrityError(
                f"annotation on {inst.instance_id}: anchor_index {obj['anchor_index']} "
                f"outside document {doc.doc_id} ({len(doc.sentences)} sentences)"
            )
        t = obj["target"]
        span = TargetSpan.from_offsets(doc, t["sentence_index"], t["start_token"], t["end_token"])
        ann = QUDAnnotation(
            instance_id=inst.instance_id,
            annotator_id=obj["annotator_id"],
            question=obj["question"],
            target=span,
            anchor_index=obj["anchor_index"],
            is_organizational=bool(obj["is_organizational"]),
            timestamp=obj.get("timestamp"),
        )
        annotations_by_doc[inst.doc_id].append(ann)

    return [
        DocumentBundle(raw_docs[d], instances_by_doc[d], annotations_by_doc[d])
        for d in doc_order
    ]


def serialize_dataset(bundles: Iterable[DocumentBundle]) -> str:
    """Canonical serialization: header line, then per-document lines."""
    lines = [_canonical_line({"kind": "header", "format_version": FORMAT_VERSION})]
    for bundle in bundles:
        doc = bundle.document
        doc_obj = {
            "kind": "document",
            "doc_id": doc.doc_id,
            "sentences": [
                {"index": s.index, "text": s.text, "is_elaboration": s.is_elaboration}
                for s in doc.sentences
            ],
        }
        if doc.source_level is not None:
            doc_obj["source_level"] = doc.source_level
        lines.append(_canonical_line(doc_obj))
        for inst in bundle.instances:
            lines.append(
                _canonical_line(
                    {
                        "kind": "instance",
                        "instance_id": inst.instance_id,
                        "doc_id": inst.doc_id,
                        "elab_index": inst.elab_index,
                        "split": inst.split.value,
                    }
                )
            )
        for ann in bundle.annotations:
            obj = {
                "kind": "annotation",
                "instance_id": ann.instance_id,
                "annotator_id": ann.annotator_id,
                "question": ann.question,
                "target": {
                    "sentence_index": ann.target.sentence_index,
                    "start_token": ann.target.start_token,
                    "end_token": ann.target.end_token,
                },
                "anchor_index": ann.anchor_index,
                "is_organizational": ann.is_organizational,
            }
            if ann.timestamp is not None:
                obj["timestamp"] = ann.timestamp
            lines.append(_canonical_line(obj))
    return "\n".join(lines) + "\n"


def save_dataset(bundles: Iterable[DocumentBundle], path: str | Path) -> None:
    Path(path).write_text(serialize_dataset(bundles), encoding="utf-8", newline="\n")


def dataset_fingerprint(bundles: Iterable[DocumentBundle]) -> str:
    """SHA-256 over the canonical serialization."""
    return hashlib.sha256(serialize_dataset(bundles).encode("utf-8")).hexdigest()
