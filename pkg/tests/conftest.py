from __future__ import annotations

import random
from pathlib import Path

import pytest

from qudkit.corpus import (
    Document,
    DocumentBundle,
    ElaborationInstance,
    QUDAnnotation,
    Sentence,
    Split,
    TargetSpan,
    extract_window,
    tokenize,
)

FIXTURES = Path(__file__).parent / "fixtures"

_WORDS = (
    "zebra quokka otter ferret heron badger lemur marmot gecko walrus "
    "runs sings dives naps waits jumps hides swims climbs glides "
    "quickly slowly quietly bravely often rarely together alone again soon"
).split()


def random_document(rng: random.Random, doc_id: str, n_sentences: int | None = None) -> Document:
    n = n_sentences if n_sentences is not None else rng.randint(1, 12)
    sentences = []
    for i in range(n):
        words = [rng.choice(_WORDS) for _ in range(rng.randint(2, 8))]
        sentences.append(Sentence(index=i, text=" ".join(words).capitalize() + "."))
    return Document(doc_id=doc_id, sentences=tuple(sentences))


def mark_elaboration(doc: Document, elab_index: int) -> Document:
    sentences = list(doc.sentences)
    s = sentences[elab_index]
    sentences[elab_index] = Sentence(s.index, s.text, is_elaboration=True)
    return Document(doc.doc_id, tuple(sentences), doc.source_level)


def random_bundle(rng: random.Random, doc_id: str, n_annotators: int = 2) -> DocumentBundle:
    """One document, one elaboration instance, n annotations with valid spans."""
    doc = random_document(rng, doc_id, n_sentences=rng.randint(2, 10))
    elab_index = rng.randrange(len(doc.sentences))
    doc = mark_elaboration(doc, elab_index)
    window = extract_window(doc, elab_index)
    inst = ElaborationInstance(
        instance_id=f"{doc_id}-e{elab_index}",
        doc_id=doc_id,
        elab_index=elab_index,
        context=window,
        split=rng.choice(list(Split)),
    )
    annotations = []
    anchor_pool = [s.index for s in window.pre] or [elab_index]
    for a in range(n_annotators):
        anchor = rng.choice(anchor_pool)
        toks = doc.sentence(anchor).tokens()
        start = rng.randrange(len(toks))
        end = rng.randint(start + 1, len(toks))
        annotations.append(
            QUDAnnotation(
                instance_id=inst.instance_id,
                annotator_id=f"ann{a}",
                question=f"What does the {rng.choice(_WORDS)} do?",
                target=TargetSpan.from_offsets(doc, anchor, start, end),
                anchor_index=anchor,
            )
        )
    return DocumentBundle(doc, [inst], annotations)


def fixture_document() -> Document:
    """Six-sentence document with a sentinel-bearing elaboration at index 4."""
    texts = [
        "Alpha zebra runs.",
        "Beta quokka sings.",
        "Gamma otter dives.",
        "Delta ferret naps.",
        "ELABSENTINEL is explained here.",
        "Epsilon heron waits.",
    ]
    sentences = tuple(
        Sentence(i, t, is_elaboration=(i == 4)) for i, t in enumerate(texts)
    )
    return Document("fixdoc", sentences)


def fixture_instance() -> ElaborationInstance:
    doc = fixture_document()
    return ElaborationInstance(
        instance_id="fixdoc-e4",
        doc_id="fixdoc",
        elab_index=4,
        context=extract_window(doc, 4),
        split=Split.TEST,
    )


@pytest.fixture
def fix_doc() -> Document:
    return fixture_document()


@pytest.fixture
def fix_instance() -> ElaborationInstance:
    return fixture_instance()


def simple_annotation(
    doc: Document,
    instance: ElaborationInstance,
    annotator_id: str = "ann0",
    question: str = "What does the ferret do?",
    anchor_index: int = 3,
    start: int = 1,
    end: int = 3,
    organizational: bool = False,
) -> QUDAnnotation:
    return QUDAnnotation(
        instance_id=instance.instance_id,
        annotator_id=annotator_id,
        question=question,
        target=TargetSpan.from_offsets(doc, anchor_index, start, end),
        anchor_index=anchor_index,
        is_organizational=organizational,
    )
