from __future__ import annotations

import pytest

from qudkit.backends import BackendRunner, FileCache, ScriptedMockGeneration
from qudkit.elabgen import (
    ElabPromptCondition,
    build_elab_prompt,
    generate_elaboration,
)
from qudkit.errors import ConfigError, DegenerateOutputError
from qudkit.corpus import ContextWindow, Sentence
from qudkit.metrics import bleu4
from qudkit.corpus import tokenize
from qudkit.prompts import GENERIC_INSTRUCTION

from .conftest import FIXTURES, fixture_instance

QUESTION = "What does the ferret do?"


def _golden(name: str) -> str:
    return (FIXTURES / "prompts" / name).read_bytes().decode("utf-8")


def _window():
    return fixture_instance().context


# --------------------------------------------------------------- golden files


def test_context_only_matches_golden():
    prompt = build_elab_prompt(_window(), ElabPromptCondition("context_only"))
    assert prompt.rendered == _golden("elab_context_only.txt")


def test_generic_matches_golden():
    prompt = build_elab_prompt(_window(), ElabPromptCondition("generic"))
    assert prompt.rendered == _golden("elab_generic.txt")
    assert prompt.rendered.endswith(GENERIC_INSTRUCTION)


def test_qud_matches_golden():
    prompt = build_elab_prompt(_window(), ElabPromptCondition("qud", QUESTION))
    assert prompt.rendered == _golden("elab_qud.txt")


def test_rerender_idempotent():
    for cond in (
        ElabPromptCondition("context_only"),
        ElabPromptCondition("generic"),
        ElabPromptCondition("qud", QUESTION),
    ):
        prompt = build_elab_prompt(_window(), cond)
        assert prompt.rerender() == prompt.rendered


# ----------------------------------------------------------------- invariants


def test_qud_has_single_question_cue():
    prompt = build_elab_prompt(_window(), ElabPromptCondition("qud", QUESTION))
    assert prompt.rendered.count("Question:") == 1
    after_cue = prompt.rendered.split("Question: ", 1)[1]
    assert after_cue.startswith(QUESTION)


def test_prompts_never_contain_elaboration():
    for cond in (
        ElabPromptCondition("context_only"),
        ElabPromptCondition("generic"),
        ElabPromptCondition("qud", QUESTION),
    ):
        prompt = build_elab_prompt(_window(), cond)
        assert "ELABSENTINEL" not in prompt.rendered


def test_post_context_has_no_effect():
    window = _window()
    stripped = ContextWindow(pre=window.pre, elaboration=window.elaboration, post=())
    for cond in (ElabPromptCondition("context_only"), ElabPromptCondition("generic")):
        assert (
            build_elab_prompt(window, cond).rendered
            == build_elab_prompt(stripped, cond).rendered
        )


def test_qud_differs_from_context_only_by_question_block():
    ctx = build_elab_prompt(_window(), ElabPromptCondition("context_only")).rendered
    qud = build_elab_prompt(_window(), ElabPromptCondition("qud", QUESTION)).rendered
    assert qud == f"Context: {ctx}\nQuestion: {QUESTION}\nAnswer:"


def test_condition_validation():
    with pytest.raises(ConfigError):
        ElabPromptCondition("qud")
    with pytest.raises(ConfigError):
        ElabPromptCondition("generic", question="extra")
    with pytest.raises(ConfigError):
        ElabPromptCondition("freeform")


def test_generic_requires_context():
    empty = ContextWindow(pre=(), elaboration=Sentence(0, "Elab.", True), post=())
    with pytest.raises(ConfigError):
        build_elab_prompt(empty, ElabPromptCondition("generic"))
    # context_only tolerates an empty window (renders empty string)
    prompt = build_elab_prompt(empty, ElabPromptCondition("context_only"))
    assert prompt.rendered == ""


# ----------------------------------------------------------------- generation


def test_identity_mock_scores_bleu_one(tmp_path):
    window = _window()
    gold = window.elaboration.text
    prompt = build_elab_prompt(window, ElabPromptCondition("qud", QUESTION))
    backend = ScriptedMockGeneration({prompt.rendered: gold})
    runner = BackendRunner(cache=FileCache(tmp_path / "c"))
    record = generate_elaboration(prompt, backend, runner)
    assert bleu4(tokenize(record.text), [tokenize(gold)]) == pytest.approx(1.0)


def test_multiline_output_keeps_first_line(tmp_path):
    prompt = build_elab_prompt(_window(), ElabPromptCondition("context_only"))
    backend = ScriptedMockGeneration({prompt.rendered: "\n\nx line\ny line"})
    record = generate_elaboration(prompt, backend, BackendRunner())
    assert record.text == "x line"


def test_deterministic_cached_record(tmp_path):
    prompt = build_elab_prompt(_window(), ElabPromptCondition("generic"))
    backend = ScriptedMockGeneration({}, fallback="echo")
    runner = BackendRunner(cache=FileCache(tmp_path / "c"))
    r1 = generate_elaboration(prompt, backend, runner)
    r2 = generate_elaboration(prompt, backend, runner)
    assert r1 == r2
    assert backend.dispatch_count == 1
    assert r1.layout == "elab-generic-v1"


def test_empty_output_is_degenerate():
    prompt = build_elab_prompt(_window(), ElabPromptCondition("context_only"))
    backend = ScriptedMockGeneration({prompt.rendered: "   \n  "})
    with pytest.raises(DegenerateOutputError):
        generate_elaboration(prompt, backend, BackendRunner())
