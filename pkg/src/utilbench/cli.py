"""Command-line orchestration: build benchmarks, run judges, run QA, score,
and emit report tables.

Subcommands: build, judge, qa, report. Settings come from defaults, then a
JSON config file, then command-line flags (highest precedence). Exit code
is 0 only for fully clean runs: no per-question errors and no recorded
parse failures.
"""

from __future__ import annotations

import argparse
import glob
import json
import logging
import os
import sys
from typing import Any, Sequence

from .clients import (
    GazetteerNerClient,
    HttpChatClient,
    HttpNerClient,
    HttpNliClient,
    NliLabel,
    NoisyOracleChatClient,
    OracleChatClient,
    OracleKnowledge,
    ScriptedChatClient,
    TableNliClient,
)
from .corpus import (
    CandidateSet,
    DatasetKind,
    PassageOrigin,
    PassageStore,
    Question,
    load_corpus,
    load_questions,
    load_run,
)
from .errors import ConfigurationError, UtilbenchError
from .hashing import config_hash
from .judge import (
    JudgeConfig,
    JudgeForm,
    JudgmentRecord,
    JudgmentStore,
    SelectedSet,
    judge,
)
from .metrics import as_percent, mean_of, mrr_at_k, ndcg_at_k, set_metrics
from .prompts import JudgmentType, PromptOrder, Requirement
from .qa import (
    AnswerRecord,
    EvidenceKind,
    EvidenceSource,
    evaluate_answers,
    generate_answer,
    score_answers,
    select_evidence,
)
from .report import fmt2, read_jsonl, run_meta, write_csv_table, write_jsonl, write_text_table
from .synth import build_gti_candidates, build_gtu, build_entity_corpus, with_ground_truth_at

logger = logging.getLogger(__name__)

DEFAULTS: dict[str, Any] = {
    "questions": None,
    "corpus": None,
    "run": None,
    "out": "out",
    "candidates": None,
    "judgments_dir": None,
    "answers_dir": None,
    "kind": "FQA",
    "mode": "GTI",
    "cp_mode": "auto",
    "n": 10,
    "seed": 0,
    "backend": "mock:oracle",
    "parallelism": 1,
    "gazetteer": None,
    "nli_table": None,
    "script": None,
    "endpoint": None,
    "sidecar_url": None,
    "model": "default",
    "api_key_env": "UTILBENCH_API_KEY",
    "gt_position": None,
    "noisy_max_error": 0.75,
    "grid": {
        "judgments": ["utility"],
        "forms": ["pointwise", "pairwise", "listwise_set", "listwise_rank"],
        "requirements": ["none"],
        "orders": ["question_first"],
        "k_samples": [1],
    },
    "sources": ["none", "dense", "ground-truth", "utility:listwise_set"],
}


# Pure I/O locations; excluded from the config hash so identical runs into
# different directories still produce byte-identical files.
_PATH_KEYS = frozenset(
    {"questions", "corpus", "run", "out", "candidates", "judgments_dir", "answers_dir",
     "gazetteer", "nli_table", "script"}
)


class RunConfig:
    """Effective settings for one subcommand invocation."""

    def __init__(self, values: dict[str, Any]):
        self.values = values
        semantic = {k: v for k, v in values.items() if k not in _PATH_KEYS}
        self.hash = config_hash(semantic)

    def __getattr__(self, name: str) -> Any:
        try:
            return self.values[name]
        except KeyError:
            raise AttributeError(name) from None

    @property
    def dataset_kind(self) -> DatasetKind:
        return DatasetKind(self.values["kind"])

    def meta(self) -> dict[str, Any]:
        return run_meta(self.values["seed"], self.hash)


def _merge_config(args: argparse.Namespace) -> RunConfig:
    values = dict(DEFAULTS)
    if getattr(args, "config", None):
        with open(args.config, "r", encoding="utf-8") as f:
            file_values = json.load(f)
        unknown = set(file_values) - set(DEFAULTS)
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        values.update(file_values)
    for key in DEFAULTS:
        cli_value = getattr(args, key, None)
        if cli_value is not None:
            values[key] = cli_value
    return RunConfig(values)


def _build_knowledge(
    questions: Sequence[Question],
    store: PassageStore | None,
    candidate_sets: Sequence[CandidateSet] | None,
) -> OracleKnowledge:
    knowledge = OracleKnowledge()
    by_id = {c.question_id: c for c in candidate_sets or []}
    for q in questions:
        texts: list[str] = []
        if store is not None:
            texts.extend(store.text(pid) for pid in q.ground_truth_evidence_ids if pid in store)
        cset = by_id.get(q.id)
        if cset is not None:
            texts.extend(
                p.text for p in cset.passages if p.origin is PassageOrigin.GROUND_TRUTH
            )
        knowledge.register(q.text, q.gold_answers, texts)
    return knowledge


def make_chat_client(
    config: RunConfig,
    questions: Sequence[Question],
    store: PassageStore | None = None,
    candidate_sets: Sequence[CandidateSet] | None = None,
):
    backend = config.backend
    if backend == "http":
        if not config.endpoint:
            raise ConfigurationError("http backend needs an endpoint")
        return HttpChatClient(
            config.endpoint, api_key_env=config.api_key_env, max_in_flight=config.parallelism
        )
    if backend == "mock:oracle":
        return OracleChatClient(_build_knowledge(questions, store, candidate_sets))
    if backend == "mock:noisy":
        return NoisyOracleChatClient(
            _build_knowledge(questions, store, candidate_sets),
            seed=config.seed,
            max_error=config.noisy_max_error,
        )
    if backend == "mock:scripted":
        if not config.script:
            raise ConfigurationError("scripted backend needs a script file")
        with open(config.script, "r", encoding="utf-8") as f:
            return ScriptedChatClient(json.load(f))
    raise ConfigurationError(f"unknown backend {backend!r}")


def make_ner_client(config: RunConfig):
    if config.backend == "http":
        if not config.sidecar_url:
            raise ConfigurationError("http backend needs sidecar_url for NER")
        return HttpNerClient(config.sidecar_url)
    if not config.gazetteer:
        raise ConfigurationError("mock backends need a gazetteer file for NER")
    with open(config.gazetteer, "r", encoding="utf-8") as f:
        return GazetteerNerClient(json.load(f))


def make_nli_client(config: RunConfig):
    if config.backend == "http":
        if not config.sidecar_url:
            raise ConfigurationError("http backend needs sidecar_url for NLI")
        return HttpNliClient(config.sidecar_url)
    table = {}
    if config.nli_table:
        with open(config.nli_table, "r", encoding="utf-8") as f:
            for entry in json.load(f):
                table[(entry["premise"], entry["hypothesis"])] = NliLabel(entry["label"])
    return TableNliClient(table)


# --- build --------------------------------------------------------------------


def cmd_build(config: RunConfig) -> int:
    questions = load_questions(config.questions, config.dataset_kind)
    store = load_corpus(config.corpus)
    run = load_run(config.run)
    os.makedirs(config.out, exist_ok=True)

    errors: list[str] = []
    candidate_sets: list[CandidateSet] = []
    if config.mode == "GTU":
        for question in questions:
            try:
                candidate_sets.append(build_gtu(run, store, question, n=config.n))
            except UtilbenchError as exc:
                errors.append(str(exc))
    elif config.mode == "GTI":
        ner = make_ner_client(config)
        entity_corpus = build_entity_corpus(questions, ner)
        cp_mode = config.cp_mode
        if cp_mode == "auto":
            cp_mode = "substitution" if config.dataset_kind is DatasetKind.FQA else "generated"
        llm = nli = None
        if cp_mode == "generated":
            llm = make_chat_client(config, questions, store)
            nli = make_nli_client(config)
        for question in questions:
            try:
                candidate_sets.append(
                    build_gti_candidates(
                        question,
                        store,
                        run,
                        entity_corpus,
                        seed=config.seed,
                        n=config.n,
                        cp_mode=cp_mode,
                        llm=llm,
                        nli=nli,
                    )
                )
            except UtilbenchError as exc:
                errors.append(str(exc))
    else:
        raise ConfigurationError(f"unknown benchmark mode {config.mode!r}")

    meta = config.meta()
    write_jsonl(
        os.path.join(config.out, "candidates.jsonl"),
        (c.to_dict() for c in candidate_sets),
        meta,
    )
    _write_build_summary(config, candidate_sets, meta)
    for message in errors:
        print(f"error: {message}", file=sys.stderr)
    print(f"built {len(candidate_sets)} candidate sets ({len(errors)} errors)")
    return 1 if errors else 0


_SUMMARY_ORIGINS = (
    ("ground-truth", PassageOrigin.GROUND_TRUTH),
    ("counterfactual", PassageOrigin.COUNTERFACTUAL),
    ("highly-relevant", PassageOrigin.HRNP),
    ("weakly-relevant", PassageOrigin.WRNP),
    ("retrieved", PassageOrigin.RETRIEVED),
)


def _write_build_summary(
    config: RunConfig, candidate_sets: Sequence[CandidateSet], meta: dict[str, Any]
) -> None:
    columns = ["#queries"] + [f"mean #{name}" for name, _ in _SUMMARY_ORIGINS]
    if candidate_sets:
        row = [str(len(candidate_sets))]
        for _, origin in _SUMMARY_ORIGINS:
            counts = [c.composition.get(origin.value, 0) for c in candidate_sets]
            row.append(fmt2(mean_of(counts)))
        rows = [row]
    else:
        rows = [["0"] + [""] * len(_SUMMARY_ORIGINS)]
    write_csv_table(os.path.join(config.out, "build_summary.csv"), columns, rows, meta)
    write_text_table(os.path.join(config.out, "build_summary.txt"), columns, rows, meta)


# --- judge --------------------------------------------------------------------


def expand_grid(grid: dict[str, Any], seed: int) -> list[JudgeConfig]:
    """Cross the grid factors into concrete configs.

    Combinations the judging contract forbids (relevance with
    pointwise/pairwise, k > 1 off the listwise-set form) are skipped.
    """
    configs: list[JudgeConfig] = []
    for judgment_v in grid.get("judgments", ["utility"]):
        for form_v in grid.get("forms", []):
            for requirement_v in grid.get("requirements", ["none"]):
                for order_v in grid.get("orders", ["question_first"]):
                    for k in grid.get("k_samples", [1]):
                        form = JudgeForm(form_v)
                        judgment = JudgmentType(judgment_v)
                        if judgment is JudgmentType.RELEVANCE and form not in (
                            JudgeForm.LISTWISE_SET,
                            JudgeForm.LISTWISE_RANK,
                        ):
                            continue
                        if k > 1 and form is not JudgeForm.LISTWISE_SET:
                            continue
                        configs.append(
                            JudgeConfig(
                                form=form,
                                judgment=judgment,
                                requirement=Requirement(requirement_v),
                                order=PromptOrder(order_v),
                                k_samples=k,
                                seed=seed,
                            )
                        )
    return configs


def load_candidates(path: str) -> list[CandidateSet]:
    _, records = read_jsonl(path)
    return [CandidateSet.from_dict(r) for r in records]


def _judgment_metric_row(
    records: Sequence[JudgmentRecord], candidate_sets: Sequence[CandidateSet]
) -> dict[str, float | None]:
    by_id = {c.question_id: c for c in candidate_sets}
    set_scores = []
    ndcg1 = []
    ndcg5 = []
    mrr5 = []
    for record in records:
        gt = by_id[record.question_id].indices_with_origin(PassageOrigin.GROUND_TRUTH)
        if not gt:
            continue
        if isinstance(record.result, SelectedSet):
            set_scores.append(set_metrics(record.result.indices, set(gt)))
        else:
            ranking = list(record.result.order)
            ndcg1.append(ndcg_at_k(ranking, set(gt), 1))
            ndcg5.append(ndcg_at_k(ranking, set(gt), 5))
            mrr5.append(mrr_at_k(ranking, set(gt), 5))
    row: dict[str, float | None] = {
        "P": None, "R": None, "F1": None, "NDCG@1": None, "NDCG@5": None, "MRR@5": None,
    }
    if set_scores:
        row["P"] = as_percent(mean_of(s.precision for s in set_scores))
        row["R"] = as_percent(mean_of(s.recall for s in set_scores))
        row["F1"] = as_percent(mean_of(s.f1 for s in set_scores))
    if ndcg1:
        row["NDCG@1"] = as_percent(mean_of(ndcg1))
        row["NDCG@5"] = as_percent(mean_of(ndcg5))
        row["MRR@5"] = as_percent(mean_of(mrr5))
    return row


_JUDGE_TABLE_COLUMNS = ["config", "P", "R", "F1", "NDCG@1", "NDCG@5", "MRR@5"]


def _write_judge_tables(
    out: str, rows: list[tuple[str, dict[str, float | None]]], meta: dict[str, Any]
) -> None:
    table_rows = [
        [slug] + [fmt2(row[c]) for c in _JUDGE_TABLE_COLUMNS[1:]] for slug, row in rows
    ]
    write_csv_table(os.path.join(out, "judge_metrics.csv"), _JUDGE_TABLE_COLUMNS, table_rows, meta)
    write_text_table(os.path.join(out, "judge_metrics.txt"), _JUDGE_TABLE_COLUMNS, table_rows, meta)


def cmd_judge(config: RunConfig) -> int:
    questions = load_questions(config.questions, config.dataset_kind)
    candidate_sets = load_candidates(config.candidates)
    store = load_corpus(config.corpus) if config.corpus else None
    configs = expand_grid(config.grid, config.seed)
    if not configs:
        logger.warning("empty judge grid; nothing to do")
        print("warning: empty judge grid; nothing to do")
        return 0
    if config.gt_position is not None:
        candidate_sets = [
            with_ground_truth_at(c, config.gt_position, config.seed) for c in candidate_sets
        ]
    client = make_chat_client(config, questions, store, candidate_sets)
    by_id = {q.id: q for q in questions}
    os.makedirs(config.out, exist_ok=True)
    meta = config.meta()

    parse_failures = 0
    table_rows = []
    for judge_config in configs:
        records: list[JudgmentRecord] = []
        for cset in candidate_sets:
            question = by_id[cset.question_id]
            record = judge(question, cset, client, judge_config, parallelism=config.parallelism)
            records.append(record)
            parse_failures += record.parse_failures
        write_jsonl(
            os.path.join(config.out, f"judgments-{judge_config.slug()}.jsonl"),
            (r.to_dict() for r in records),
            meta,
        )
        table_rows.append((judge_config.slug(), _judgment_metric_row(records, candidate_sets)))
    _write_judge_tables(config.out, table_rows, meta)
    print(f"judged {len(candidate_sets)} questions under {len(configs)} configs")
    return 1 if parse_failures else 0


# --- qa -----------------------------------------------------------------------


def parse_source(spec: str, seed: int) -> EvidenceSource:
    """Parse an evidence-source name like "utility:listwise_set" or
    "utility:ksampling:10" into a source description.
    """
    parts = spec.strip().lower().split(":")
    head = parts[0]
    if head in ("none", "dense", "ground-truth"):
        kind = {
            "none": EvidenceKind.NONE,
            "dense": EvidenceKind.DENSE,
            "ground-truth": EvidenceKind.GROUND_TRUTH,
        }[head]
        return EvidenceSource(kind)
    if head in ("utility", "relevance") and len(parts) >= 2:
        judgment = JudgmentType(head)
        kind = (
            EvidenceKind.UTILITY_JUDGED
            if judgment is JudgmentType.UTILITY
            else EvidenceKind.RELEVANCE_JUDGED
        )
        if parts[1] == "ksampling":
            k = int(parts[2]) if len(parts) > 2 else 5
            judge_config = JudgeConfig(
                form=JudgeForm.LISTWISE_SET, judgment=judgment, k_samples=k, seed=seed
            )
        else:
            judge_config = JudgeConfig(form=JudgeForm(parts[1]), judgment=judgment, seed=seed)
        return EvidenceSource(kind, judge_config)
    raise ConfigurationError(f"cannot parse evidence source {spec!r}")


def load_judgment_store(judgments_dir: str) -> JudgmentStore:
    store = JudgmentStore()
    for path in sorted(glob.glob(os.path.join(judgments_dir, "judgments-*.jsonl"))):
        _, records = read_jsonl(path)
        for record in records:
            store.add(JudgmentRecord.from_dict(record))
    return store


def cmd_qa(config: RunConfig) -> int:
    questions = load_questions(config.questions, config.dataset_kind)
    candidate_sets = load_candidates(config.candidates)
    store = load_corpus(config.corpus) if config.corpus else None
    judgments = load_judgment_store(config.judgments_dir) if config.judgments_dir else JudgmentStore()
    sources = [parse_source(s, config.seed) for s in config.sources]
    client = make_chat_client(config, questions, store, candidate_sets)
    by_id = {q.id: q for q in questions}
    os.makedirs(config.out, exist_ok=True)
    meta = config.meta()

    errors: list[str] = []
    report_rows: list[tuple[EvidenceSource, dict[str, float]]] = []
    for source in sources:
        records: list[AnswerRecord] = []
        for cset in candidate_sets:
            question = by_id[cset.question_id]
            gold_passages = None
            if store is not None:
                gold_passages = [
                    store.passage(pid, PassageOrigin.GROUND_TRUTH)
                    for pid in question.ground_truth_evidence_ids
                    if pid in store
                ] or None
            try:
                evidence = select_evidence(source, cset, judgments, gold_passages)
                records.append(generate_answer(question, evidence, client, source))
            except UtilbenchError as exc:
                errors.append(f"{source.slug()}/{question.id}: {exc}")
        records = score_answers(records, questions)
        write_jsonl(
            os.path.join(config.out, f"answers-{source.slug()}.jsonl"),
            (r.to_dict() for r in records),
            meta,
        )
        eval_report = evaluate_answers(records, questions)
        section = eval_report.sections.get(config.dataset_kind.value, {"metrics": {}})
        report_rows.append((source, section["metrics"]))
    _write_qa_tables(config, report_rows, meta)
    for message in errors:
        print(f"error: {message}", file=sys.stderr)
    print(f"answered {len(candidate_sets)} questions from {len(sources)} evidence sources")
    return 1 if errors else 0


def _write_qa_tables(
    config: RunConfig,
    report_rows: list[tuple[EvidenceSource, dict[str, float]]],
    meta: dict[str, Any],
) -> None:
    metric_names = ["EM", "F1"] if config.dataset_kind is DatasetKind.FQA else [
        "ROUGE-L", "BLEU-1", "BLEU-2", "BLEU-3", "BLEU-4",
    ]
    columns = ["evidence"] + metric_names
    rows = []
    last_section = ""
    for source, metrics_map in report_rows:
        section, label = source.label()
        if section and section != last_section:
            rows.append([f"[{section}]"] + [""] * len(metric_names))
        last_section = section
        rows.append([label] + [fmt2(metrics_map.get(m)) for m in metric_names])
    write_csv_table(os.path.join(config.out, "qa_report.csv"), columns, rows, meta)
    write_text_table(os.path.join(config.out, "qa_report.txt"), columns, rows, meta)


# --- report -------------------------------------------------------------------


def cmd_report(config: RunConfig) -> int:
    """Regenerate the metric tables from previously written record files."""
    candidate_sets = load_candidates(config.candidates)
    questions = load_questions(config.questions, config.dataset_kind)
    os.makedirs(config.out, exist_ok=True)
    meta = config.meta()
    wrote_any = False
    if config.judgments_dir:
        rows = []
        for path in sorted(glob.glob(os.path.join(config.judgments_dir, "judgments-*.jsonl"))):
            _, raw = read_jsonl(path)
            records = [JudgmentRecord.from_dict(r) for r in raw]
            if records:
                slug = records[0].config.slug()
                rows.append((slug, _judgment_metric_row(records, candidate_sets)))
        _write_judge_tables(config.out, rows, meta)
        wrote_any = True
    if config.answers_dir:
        report_rows = []
        for path in sorted(glob.glob(os.path.join(config.answers_dir, "answers-*.jsonl"))):
            _, raw = read_jsonl(path)
            records = [AnswerRecord.from_dict(r) for r in raw]
            if not records:
                continue
            eval_report = evaluate_answers(records, questions)
            section = eval_report.sections.get(config.dataset_kind.value, {"metrics": {}})
            report_rows.append((records[0].source, section["metrics"]))
        _write_qa_tables(config, report_rows, meta)
        wrote_any = True
    if not wrote_any:
        print("warning: nothing to report (no judgments_dir or answers_dir)")
    return 0


# --- entry point ----------------------------------------------------------------


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--backend", default=None, help="http | mock:oracle | mock:noisy | mock:scripted")
    parser.add_argument("--out", default=None)
    parser.add_argument("--questions", default=None)
    parser.add_argument("--corpus", default=None)
    parser.add_argument("--kind", default=None, choices=["FQA", "NFQA"])
    parser.add_argument("--parallelism", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="utilbench", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_build = sub.add_parser("build", help="construct candidate sets")
    _add_common(p_build)
    p_build.add_argument("--run", default=None, help="TREC run file")
    p_build.add_argument("--mode", default=None, choices=["GTI", "GTU"])
    p_build.add_argument("--cp-mode", dest="cp_mode", default=None,
                         choices=["auto", "substitution", "generated"])
    p_build.add_argument("--n", type=int, default=None)
    p_build.add_argument("--gazetteer", default=None, help="JSON surface->label map for mock NER")
    p_build.add_argument("--nli-table", dest="nli_table", default=None)
    p_build.add_argument("--script", default=None, help="JSON prompt-hash script for mock chat")
    p_build.set_defaults(func=cmd_build)

    p_judge = sub.add_parser("judge", help="run the judging grid")
    _add_common(p_judge)
    p_judge.add_argument("--candidates", default=None)
    p_judge.add_argument("--gt-position", dest="gt_position", type=int, default=None)
    p_judge.add_argument("--script", default=None)
    p_judge.set_defaults(func=cmd_judge)

    p_qa = sub.add_parser("qa", help="generate and score answers")
    _add_common(p_qa)
    p_qa.add_argument("--candidates", default=None)
    p_qa.add_argument("--judgments-dir", dest="judgments_dir", default=None)
    p_qa.add_argument("--sources", default=None,
                      help="comma-separated evidence sources, e.g. none,dense,utility:listwise_set")
    p_qa.add_argument("--script", default=None)
    p_qa.set_defaults(func=cmd_qa)

    p_report = sub.add_parser("report", help="re-emit tables from record files")
    _add_common(p_report)
    p_report.add_argument("--candidates", default=None)
    p_report.add_argument("--judgments-dir", dest="judgments_dir", default=None)
    p_report.add_argument("--answers-dir", dest="answers_dir", default=None)
    p_report.set_defaults(func=cmd_report)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "sources", None) is not None:
        args.sources = [s for s in args.sources.split(",") if s]
    try:
        config = _merge_config(args)
        return args.func(config)
    except (UtilbenchError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
