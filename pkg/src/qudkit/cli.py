"""Batch entry points for reproduction runs.

Every output file embeds a run manifest (config snapshot, dataset
fingerprint, backend ids, seed); with mock backends a manifest fully
determines the output bytes. Exit codes: 0 success, 1 usage, 2 data
integrity, 3 backend failure.
"""

from __future__ import annotations

import hashlib
import json
import sys
from pathlib import Path

import click

from . import analysis
from .backends import BackendRunner, FileCache, build_backend, canonical_json
from .corpus import (
    TOKENIZER_FINGERPRINT,
    dataset_fingerprint,
    load_dataset,
)
from .elabgen import CONDITION_KINDS, ElabPromptCondition, build_elab_prompt, generate_elaboration
from .errors import (
    BackendError,
    ConfigError,
    IntegrityError,
    ParseError,
    QudkitError,
    ValidationError,
)
from .corpus import tokenize
from .metrics import bleu4, corpus_bleu4, embedding_similarity_multi_ref
from .prompts import DecodeParams
from .questiongen import (
    QG_CONFIG_NAMES,
    QGConfig,
    assemble_qg_input,
    generate_question,
    predict_target,
)

DEFAULT_CONFIG: dict = {
    "seed": 1234,
    "cache_dir": None,
    "bleu": {"smoothing": "add-k", "k": 1},
    "oov": {"policy": "floor", "floor_per_million": 0.5},
    "decode": {"temperature": 0.0, "max_tokens": 128, "stop": []},
    "redundancy": {"default": 2, "overrides": {}},
    "guardrail_overlap_threshold": 0.5,
    "backends": {
        "generation": {"kind": "scripted_mock", "params": {"fallback": "echo"}},
        "embedding": {"kind": "hash", "params": {"dim": 32, "baseline": 0.0}},
        "classifier": {"kind": "heuristic"},
        "span": {"kind": "whole_sentence"},
        "tagger": {"kind": "lexicon"},
    },
    "service": {
        "admin_token": "admin-token",
        "shuffle_seed": 1234,
        "require_qualification": True,
    },
}


def _deep_merge(base: dict, override: dict) -> dict:
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_config(path: str | None) -> dict:
    if path is None:
        return json.loads(json.dumps(DEFAULT_CONFIG))
    user = json.loads(Path(path).read_text(encoding="utf-8"))
    return _deep_merge(DEFAULT_CONFIG, user)


def _decode_params(config: dict) -> DecodeParams:
    d = config["decode"]
    return DecodeParams(
        temperature=d["temperature"], max_tokens=d["max_tokens"], stop=tuple(d["stop"])
    )


def _runner(config: dict) -> BackendRunner:
    cache = FileCache(config["cache_dir"]) if config.get("cache_dir") else None
    return BackendRunner(cache=cache)


def build_manifest(command: str, config: dict, dataset_fp: str | None, backend_ids: list[str], extra: dict | None = None) -> dict:
    body = {
        "kind": "manifest",
        "command": command,
        # cache_dir is an environment detail: two runs with different cache
        # paths must still produce identical bytes
        "config": {k: v for k, v in config.items() if k not in ("service", "cache_dir")},
        "dataset_fingerprint": dataset_fp,
        "backend_ids": sorted(backend_ids),
        "seed": config["seed"],
        "tokenizer": TOKENIZER_FINGERPRINT,
    }
    if extra:
        body.update(extra)
    run_id = hashlib.sha256(canonical_json(body).encode("utf-8")).hexdigest()[:16]
    return {"run_id": run_id, **body}


def _dump_line(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=True, separators=(",", ":"))


def _write_jsonl(path: Path, manifest: dict, records: list[dict]) -> None:
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(_dump_line(manifest) + "\n")
        for record in records:
            fh.write(_dump_line(record) + "\n")


def _write_report(path: Path, obj: dict) -> None:
    path.write_text(
        json.dumps(obj, sort_keys=True, ensure_ascii=True, indent=2) + "\n", encoding="utf-8"
    )


def _corpus_maps(bundles):
    documents = {b.document.doc_id: b.document for b in bundles}
    instances = {i.instance_id: i for b in bundles for i in b.instances}
    annotations = [a for b in bundles for a in b.annotations]
    return documents, instances, annotations


def _grouped(annotations):
    grouped: dict[str, list] = {}
    for a in annotations:
        grouped.setdefault(a.instance_id, []).append(a)
    return grouped


# ---------------------------------------------------------------------- group


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="JSON config file; flags override file values.")
@click.option("--seed", type=int, default=None, help="Override the configured seed.")
@click.option("--cache-dir", type=click.Path(file_okay=False), default=None,
              help="Backend response cache directory.")
@click.pass_context
def cli(ctx, config_path, seed, cache_dir):
    """QUD-driven elaborative simplification pipeline."""
    config = load_config(config_path)
    if seed is not None:
        config["seed"] = seed
    if cache_dir is not None:
        config["cache_dir"] = cache_dir
    ctx.obj = config


@cli.command()
@click.argument("dataset", type=click.Path(exists=True, dir_okay=False))
@click.pass_obj
def ingest(config, dataset):
    """Validate a dataset file and print its fingerprint."""
    bundles = load_dataset(dataset)
    documents, instances, annotations = _corpus_maps(bundles)
    payload = {
        "fingerprint": dataset_fingerprint(bundles),
        "documents": len(documents),
        "instances": len(instances),
        "annotations": len(annotations),
        "tokenizer": TOKENIZER_FINGERPRINT,
    }
    click.echo(json.dumps(payload, sort_keys=True, indent=2))


@cli.command()
@click.argument("dataset", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@click.option("--lexicon", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Two-column TSV: word, log10 frequency per million.")
@click.option("--relations", "relations_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="JSON list of [instance_id, pdtb3_level2_label] pairs.")
@click.option("--overlap-mode", type=click.Choice(["any_overlap", "exact_span"]), default="any_overlap")
@click.pass_obj
def analyze(config, dataset, out_dir, lexicon, relations_path, overlap_mode):
    """Emit all corpus-statistics reports to a directory."""
    bundles = load_dataset(dataset)
    documents, instances, annotations = _corpus_maps(bundles)
    grouped = _grouped(annotations)
    doc_of = {i: inst.doc_id for i, inst in instances.items()}
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fp = dataset_fingerprint(bundles)

    embedder = build_backend("embedding", config["backends"]["embedding"])
    classifier = build_backend("classifier", config["backends"]["classifier"])
    tagger = build_backend("tagger", config["backends"]["tagger"])
    backend_ids = [embedder.descriptor.backend_id, classifier.descriptor.backend_id,
                   tagger.descriptor.backend_id]
    manifest = build_manifest("analyze", config, fp, backend_ids)

    from .errors import EmptyInputError
    from .metrics import embedding_similarity as _sim

    # agreement + overlap
    try:
        agreement = analysis.anchor_agreement(grouped, instances)
        report = {
            "manifest": manifest,
            "fleiss_kappa": agreement.fleiss_kappa,
            "free_marginal_kappa": agreement.free_marginal_kappa,
            "percent_agreement": agreement.percent_agreement,
            "n_items": agreement.n_items,
            "n_categories": agreement.n_categories,
            "n_excluded": agreement.n_excluded,
            "target_overlap_rate": analysis.target_overlap_rate(grouped, mode=overlap_mode),
            "overlap_mode": overlap_mode,
        }
    except EmptyInputError as exc:
        report = {"manifest": manifest, "empty": True, "reason": str(exc)}
    _write_report(out / "agreement.json", report)

    # question similarity
    baseline = getattr(embedder, "baseline", 0.0)
    try:
        sim = analysis.pairwise_question_similarity(
            grouped, doc_of,
            lambda a, b: _sim(a, b, embedder, baseline),
            rng_seed=config["seed"],
        )
        report = {
            "manifest": manifest,
            "same_elab_mean": {"raw": sim.same_elab_mean.raw, "rescaled": sim.same_elab_mean.rescaled},
            "random_pair_mean": {"raw": sim.random_pair_mean.raw, "rescaled": sim.random_pair_mean.rescaled},
            "n_same_pairs": sim.n_same_pairs,
            "n_random_pairs": sim.n_random_pairs,
            "baseline": baseline,
        }
    except EmptyInputError as exc:
        report = {"manifest": manifest, "empty": True, "reason": str(exc)}
    _write_report(out / "similarity.json", report)

    # target statistics
    if annotations:
        stats = analysis.target_statistics(annotations, instances, documents, tagger)
        report = {
            "manifest": manifest,
            "mean_len_tokens": stats.mean_len_tokens,
            "std_len_tokens": stats.std_len_tokens,
            "pos_histogram": stats.pos_histogram,
            "pct_with_verb": stats.pct_with_verb,
            "pct_with_proper_noun": stats.pct_with_proper_noun,
            "total_target_tokens": stats.total_target_tokens,
        }
    else:
        report = {"manifest": manifest, "empty": True}
    _write_report(out / "targets.json", report)

    # question types
    questions = [a.question for a in annotations if a.question.strip()]
    if questions:
        dist = analysis.question_type_distribution(questions, classifier)
        report = {"manifest": manifest, "counts": dist.counts, "proportions": dist.proportions}
    else:
        report = {"manifest": manifest, "empty": True}
    _write_report(out / "qtypes.json", report)

    # frequency test (needs a lexicon)
    if lexicon is not None:
        lex = analysis.FrequencyLexicon.from_tsv(lexicon)
        freq = analysis.frequency_test(
            annotations, instances, documents, lex,
            oov_policy=config["oov"]["policy"],
            floor_per_million=config["oov"]["floor_per_million"],
        )
        report = {
            "manifest": manifest,
            "mean_log_freq_targets": freq.mean_log_freq_targets,
            "mean_log_freq_document": freq.mean_log_freq_document,
            "t_statistic": freq.t_statistic,
            "p_value": freq.p_value,
            "n_target_tokens": freq.n_target_tokens,
            "n_doc_tokens": freq.n_doc_tokens,
            "oov_policy": config["oov"]["policy"],
        }
        _write_report(out / "frequency.json", report)

    # discourse relations (tally only; labels supplied externally)
    if relations_path is not None:
        pairs = [tuple(p) for p in json.loads(Path(relations_path).read_text(encoding="utf-8"))]
        dist = analysis.relation_distribution(pairs)
        report = {
            "manifest": manifest,
            "proportions": dist,
            "reference": analysis.load_pdtb_reference(),
        }
        _write_report(out / "relations.json", report)

    click.echo(f"reports written to {out}")


def _iter_annotation_examples(bundles):
    """(doc, instance, annotation) triples, deterministically ordered."""
    for bundle in bundles:
        doc = bundle.document
        instances = {i.instance_id: i for i in bundle.instances}
        for ann in sorted(bundle.annotations, key=lambda a: (a.instance_id, a.annotator_id)):
            yield doc, instances[ann.instance_id], ann


@cli.command("gen-questions")
@click.argument("dataset", type=click.Path(exists=True, dir_okay=False))
@click.option("--qg-config", "qg_config_name", required=True,
              help=f"One of {', '.join(QG_CONFIG_NAMES)}.")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
@click.pass_obj
def gen_questions(config, dataset, qg_config_name, out_path):
    """Generate implicit questions for every usable (instance, annotation) pair."""
    if qg_config_name not in QG_CONFIG_NAMES:
        raise click.UsageError(
            f"unknown QG config {qg_config_name!r}; expected one of: {', '.join(QG_CONFIG_NAMES)}"
        )
    qg_config = QGConfig.standard(qg_config_name)
    bundles = load_dataset(dataset)
    backend = build_backend("generation", config["backends"]["generation"])
    span_predictor = build_backend("span", config["backends"]["span"])
    runner = _runner(config)
    decode = _decode_params(config)

    records = []
    skipped = 0
    for doc, inst, ann in _iter_annotation_examples(bundles):
        if not ann.question.strip():  # organizational: nothing to model
            skipped += 1
            continue
        pre_indices = [s.index for s in inst.context.pre]
        if ann.anchor_index not in pre_indices:
            skipped += 1
            continue
        if qg_config.target_source == "gold":
            if ann.target.sentence_index != ann.anchor_index:
                skipped += 1
                continue
            target = ann.target
        elif qg_config.target_source == "predicted":
            target = predict_target(doc.sentence(ann.anchor_index), inst.context, span_predictor)
        else:
            target = None
        prompt = assemble_qg_input(inst, qg_config, doc, ann.anchor_index, target)
        record = generate_question(prompt, backend, runner, decode)
        records.append(
            {
                "kind": "question-record",
                "instance_id": inst.instance_id,
                "annotator_id": ann.annotator_id,
                "qg_config": qg_config_name,
                "record": record.to_obj(),
            }
        )

    fp = dataset_fingerprint(bundles)
    manifest = build_manifest(
        "gen-questions", config, fp, [backend.descriptor.backend_id],
        extra={"qg_config": qg_config_name, "n_records": len(records), "n_skipped": skipped},
    )
    _write_jsonl(Path(out_path), manifest, records)
    click.echo(f"{len(records)} question records -> {out_path} (skipped {skipped})")


def _load_generated_questions(path: Path) -> dict[tuple[str, str], str]:
    table = {}
    for line in path.read_text(encoding="utf-8").splitlines()[1:]:
        obj = json.loads(line)
        table[(obj["instance_id"], obj["annotator_id"])] = obj["record"]["text"]
    return table


@cli.command("gen-elabs")
@click.argument("dataset", type=click.Path(exists=True, dir_okay=False))
@click.option("--condition", required=True, help=f"One of {', '.join(CONDITION_KINDS)}.")
@click.option("--questions", "questions_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="gen-questions output supplying the QUD prompts.")
@click.option("--use-gold-questions", is_flag=True, default=False,
              help="Use annotated questions for the qud condition.")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
@click.pass_obj
def gen_elabs(config, dataset, condition, questions_path, use_gold_questions, out_path):
    """Generate candidate elaborations under one prompting condition."""
    if condition not in CONDITION_KINDS:
        raise click.UsageError(
            f"unknown condition {condition!r}; expected one of: {', '.join(CONDITION_KINDS)}"
        )
    if condition == "qud" and not (questions_path or use_gold_questions):
        raise click.UsageError("qud condition needs --questions FILE or --use-gold-questions")
    bundles = load_dataset(dataset)
    backend = build_backend("generation", config["backends"]["generation"])
    runner = _runner(config)
    decode = _decode_params(config)
    generated = _load_generated_questions(Path(questions_path)) if questions_path else {}

    records = []
    skipped = 0
    if condition == "qud":
        for doc, inst, ann in _iter_annotation_examples(bundles):
            question = (
                ann.question if use_gold_questions else generated.get((inst.instance_id, ann.annotator_id))
            )
            if not question or not question.strip() or not inst.context.pre:
                skipped += 1
                continue
            prompt = build_elab_prompt(inst.context, ElabPromptCondition("qud", question))
            record = generate_elaboration(prompt, backend, runner, decode)
            records.append(
                {
                    "kind": "elab-record",
                    "instance_id": inst.instance_id,
                    "annotator_id": ann.annotator_id,
                    "condition": condition,
                    "question_source": "gold" if use_gold_questions else "generated",
                    "record": record.to_obj(),
                }
            )
    else:
        for bundle in bundles:
            for inst in sorted(bundle.instances, key=lambda i: i.instance_id):
                if condition == "generic" and not inst.context.pre:
                    skipped += 1
                    continue
                prompt = build_elab_prompt(inst.context, ElabPromptCondition(condition))
                record = generate_elaboration(prompt, backend, runner, decode)
                records.append(
                    {
                        "kind": "elab-record",
                        "instance_id": inst.instance_id,
                        "annotator_id": None,
                        "condition": condition,
                        "record": record.to_obj(),
                    }
                )

    fp = dataset_fingerprint(bundles)
    manifest = build_manifest(
        "gen-elabs", config, fp, [backend.descriptor.backend_id],
        extra={"condition": condition, "n_records": len(records), "n_skipped": skipped},
    )
    _write_jsonl(Path(out_path), manifest, records)
    click.echo(f"{len(records)} elaboration records -> {out_path} (skipped {skipped})")


def _score_candidates(
    items: list[tuple[list[str], list[list[str]], str, list[str]]],
    embedder,
    baseline: float,
    bleu_cfg: dict,
) -> dict:
    """items: (candidate_tokens, reference_token_lists, candidate_text, reference_texts)."""
    sentence_scores = []
    sim_raw = []
    sim_rescaled = []
    pairs = []
    for cand_tokens, ref_token_lists, cand_text, ref_texts in items:
        sentence_scores.append(
            bleu4(cand_tokens, ref_token_lists, smoothing=bleu_cfg["smoothing"], k=bleu_cfg["k"])
        )
        pairs.append((cand_tokens, ref_token_lists))
        pair = embedding_similarity_multi_ref(cand_text, ref_texts, embedder, baseline)
        sim_raw.append(pair.raw)
        sim_rescaled.append(pair.rescaled)
    n = len(items)
    return {
        "n": n,
        "bleu4_sentence_mean": sum(sentence_scores) / n,
        "bleu4_corpus": corpus_bleu4(pairs, smoothing=bleu_cfg["smoothing"], k=bleu_cfg["k"]),
        "similarity_f1_raw": sum(sim_raw) / n,
        "similarity_f1_rescaled": sum(sim_rescaled) / n,
    }


@cli.command()
@click.option("--dataset", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--questions", "question_files", type=click.Path(exists=True, dir_okay=False),
              multiple=True, help="gen-questions outputs to score (repeatable).")
@click.option("--elabs", "elab_files", type=click.Path(exists=True, dir_okay=False),
              multiple=True, help="gen-elabs outputs to score (repeatable).")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
@click.pass_obj
def evaluate(config, dataset, question_files, elab_files, out_path):
    """Score generated questions/elaborations against the gold annotations."""
    if not question_files and not elab_files:
        raise click.UsageError("nothing to evaluate: pass --questions and/or --elabs")
    bundles = load_dataset(dataset)
    documents, instances, annotations = _corpus_maps(bundles)
    grouped = _grouped(annotations)
    embedder = build_backend("embedding", config["backends"]["embedding"])
    baseline = getattr(embedder, "baseline", 0.0)
    bleu_cfg = config["bleu"]

    question_systems = {}
    for qf in question_files:
        lines = Path(qf).read_text(encoding="utf-8").splitlines()
        manifest = json.loads(lines[0])
        label = manifest.get("qg_config", Path(qf).stem)
        items = []
        for line in lines[1:]:
            obj = json.loads(line)
            refs = [
                a.question for a in grouped.get(obj["instance_id"], []) if a.question.strip()
            ]
            if not refs:
                continue
            cand = obj["record"]["text"]
            items.append((tokenize(cand), [tokenize(r) for r in refs], cand, refs))
        if items:
            question_systems[label] = _score_candidates(items, embedder, baseline, bleu_cfg)

    elab_systems = {}
    for ef in elab_files:
        lines = Path(ef).read_text(encoding="utf-8").splitlines()
        manifest = json.loads(lines[0])
        label = manifest.get("condition", Path(ef).stem)
        if manifest.get("condition") == "qud":
            source = json.loads(lines[1])["question_source"] if len(lines) > 1 else "generated"
            label = f"qud-{source}"
        items = []
        for line in lines[1:]:
            obj = json.loads(line)
            inst = instances.get(obj["instance_id"])
            if inst is None:
                continue
            gold = inst.context.elaboration.text
            cand = obj["record"]["text"]
            items.append((tokenize(cand), [tokenize(gold)], cand, [gold]))
        if items:
            elab_systems[label] = _score_candidates(items, embedder, baseline, bleu_cfg)

    fp = dataset_fingerprint(bundles)
    manifest = build_manifest(
        "evaluate", config, fp, [embedder.descriptor.backend_id],
        extra={"baseline": baseline},
    )
    report = {
        "kind": "metric-report",
        "manifest": manifest,
        "question_systems": question_systems,
        "elab_systems": elab_systems,
    }
    _write_report(Path(out_path), report)
    click.echo(f"metric report -> {out_path}")


@cli.command()
@click.option("--db", "db_path", type=click.Path(dir_okay=False), required=True)
@click.option("--dataset", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8000)
@click.pass_obj
def serve(config, db_path, dataset, host, port):
    """Start the annotation/evaluation service."""
    import uvicorn

    from .service import ServiceConfig, Store, create_app

    store = Store(db_path)
    if dataset is not None:
        counts = store.load_corpus(
            load_dataset(dataset),
            redundancy_default=config["redundancy"]["default"],
            redundancy_overrides=config["redundancy"]["overrides"],
        )
        click.echo(f"loaded dataset: {counts}")
    svc = config["service"]
    app = create_app(
        store,
        ServiceConfig(
            admin_token=svc["admin_token"],
            redundancy_default=config["redundancy"]["default"],
            redundancy_overrides=config["redundancy"]["overrides"],
            guardrail_threshold=config["guardrail_overlap_threshold"],
            shuffle_seed=svc["shuffle_seed"],
            require_qualification=svc["require_qualification"],
        ),
    )
    uvicorn.run(app, host=host, port=port)


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.UsageError as exc:
        exc.show()
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except click.exceptions.Abort:
        return 1
    except (ParseError, IntegrityError, ValidationError) as exc:
        click.echo(f"data error: {exc}", err=True)
        return 2
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        return 1
    except BackendError as exc:
        click.echo(f"backend error: {exc}", err=True)
        return 3
    except QudkitError as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    return 0


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
