"""Shared test fixtures: a synthetic dataset generator with questions,
passage corpus, retrieval run, and NER gazetteer.

The generated data is fully deterministic. Half the questions carry a
Person answer, half a Location answer, so the entity corpus always has two
well-populated categories for both substitution modes.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

from utilbench.corpus import (
    DatasetKind,
    PassageStore,
    Question,
    RetrievalRun,
    load_corpus,
    load_questions,
    load_run,
)

RUN_DEPTH = 30
DECOY_RANKS = 2  # answer-bearing passages right after the gold one


@dataclass
class FixtureDataset:
    questions_path: str
    corpus_path: str
    run_path: str
    gazetteer_path: str
    questions: list[Question]
    store: PassageStore
    run: RetrievalRun
    gazetteer: dict[str, str]


def answer_for(i: int) -> str:
    if i % 2 == 0:
        return f"Persona{i:03d} Vex"
    return f"Loctown{i:03d}"


def label_for(i: int) -> str:
    return "PERSON" if i % 2 == 0 else "GPE"


def gt_text(i: int, answer: str) -> str:
    return (
        f"Case {i:03d} files confirm that {answer} led the inquiry, "
        f"and {answer} signed the final report."
    )


def write_fixture_dataset(
    directory: str,
    n_questions: int = 10,
    gt_per_question: int = 1,
    kind: DatasetKind = DatasetKind.FQA,
) -> FixtureDataset:
    os.makedirs(directory, exist_ok=True)
    questions_path = os.path.join(directory, "questions.jsonl")
    corpus_path = os.path.join(directory, "corpus.jsonl")
    run_path = os.path.join(directory, "run.trec")
    gazetteer_path = os.path.join(directory, "gazetteer.json")

    question_lines = []
    corpus_lines = []
    run_lines = []
    gazetteer: dict[str, str] = {}

    for i in range(n_questions):
        qid = f"q{i:03d}"
        answer = answer_for(i)
        gazetteer[answer] = label_for(i)
        gt_ids = [f"{qid}-gt{g}" for g in range(gt_per_question)]
        question_lines.append(
            json.dumps(
                {
                    "id": qid,
                    "question": f"who led the inquiry for case {i:03d}",
                    "answers": [answer],
                    "ground_truth_ids": gt_ids,
                }
            )
        )
        rank = 0
        for g, gt_id in enumerate(gt_ids):
            corpus_lines.append(json.dumps({"id": gt_id, "text": gt_text(i, answer)}))
            rank += 1
            run_lines.append(f"{qid} Q0 {gt_id} {rank} {100.0 - rank:.1f} fixture")
        for d in range(DECOY_RANKS):
            pid = f"{qid}-decoy{d}"
            corpus_lines.append(
                json.dumps(
                    {"id": pid, "text": f"A summary notes {answer} in passing, item {d}."}
                )
            )
            rank += 1
            run_lines.append(f"{qid} Q0 {pid} {rank} {100.0 - rank:.1f} fixture")
        while rank < RUN_DEPTH:
            pid = f"{qid}-noise{rank:03d}"
            corpus_lines.append(
                json.dumps(
                    {
                        "id": pid,
                        "text": (
                            f"Unrelated background on archive shelf {i:03d}-{rank:03d} "
                            "with routine administrative details."
                        ),
                    }
                )
            )
            rank += 1
            run_lines.append(f"{qid} Q0 {pid} {rank} {100.0 - rank:.1f} fixture")

    with open(questions_path, "w", encoding="utf-8") as f:
        f.write("\n".join(question_lines) + "\n")
    with open(corpus_path, "w", encoding="utf-8") as f:
        f.write("\n".join(corpus_lines) + "\n")
    with open(run_path, "w", encoding="utf-8") as f:
        f.write("\n".join(run_lines) + "\n")
    with open(gazetteer_path, "w", encoding="utf-8") as f:
        json.dump(gazetteer, f, indent=0)

    return FixtureDataset(
        questions_path=questions_path,
        corpus_path=corpus_path,
        run_path=run_path,
        gazetteer_path=gazetteer_path,
        questions=load_questions(questions_path, kind),
        store=load_corpus(corpus_path),
        run=load_run(run_path),
        gazetteer=gazetteer,
    )
