"""Acceptance suite: one test per primary criterion, all offline.

Every test prints one `ACCEPTANCE <n> <name>: PASS|FAIL` line (visible with
pytest -s) and enforces its stated runtime bound.
"""

import filecmp
import json
import os
import random
import time

from oracles import (
    oracle_bleu,
    oracle_mrr_at_k,
    oracle_ndcg_at_k,
    oracle_rouge_l,
    oracle_set_metrics,
    oracle_token_f1,
)
from helpers import write_fixture_dataset
from test_judge import make_candidates, make_question

from utilbench.cli import main
from utilbench.clients import (
    NoisyOracleChatClient,
    OracleChatClient,
    OracleKnowledge,
)
from utilbench.corpus import CandidateSet, DatasetKind, PassageOrigin, normalize_text
from utilbench.judge import (
    JudgeConfig,
    JudgeForm,
    JudgmentStore,
    judge_listwise,
    judge_pairwise,
    judge_pointwise,
    k_sampling_judge,
    sampling_permutation,
)
from utilbench.metrics import (
    bleu,
    mrr_at_k,
    ndcg_at_k,
    rouge_l,
    set_metrics,
    token_f1,
)
from utilbench.prompts import (
    PromptOrder,
    Requirement,
    render_judge_prompt,
)
from utilbench.qa import (
    EvidenceKind,
    EvidenceSource,
    evaluate_answers,
    generate_answer,
    select_evidence,
)
from utilbench.synth import EntityCorpus, SubstitutionMode, substitute_entities, with_ground_truth_at
from utilbench.clients.base import EntityCategory

TOL = 1e-9


def _report(number: int, name: str, ok: bool, detail: str = "") -> None:
    status = "PASS" if ok else "FAIL"
    suffix = f" ({detail})" if detail else ""
    print(f"\nACCEPTANCE {number} {name}: {status}{suffix}")


def _oracle_client(questions, candidate_sets):
    return OracleChatClient(OracleKnowledge.from_candidates(questions, candidate_sets))


class TestAcceptance:
    def test_01_assembly_composition(self, tmp_path):
        started = time.monotonic()
        ok = True
        dataset = write_fixture_dataset(str(tmp_path / "data1"), n_questions=50)
        out = str(tmp_path / "out1")
        code = main([
            "build", "--questions", dataset.questions_path, "--corpus", dataset.corpus_path,
            "--run", dataset.run_path, "--gazetteer", dataset.gazetteer_path,
            "--mode", "GTI", "--seed", "11", "--backend", "mock:oracle", "--out", out,
        ])
        ok &= code == 0
        from utilbench.report import read_jsonl

        _, records = read_jsonl(os.path.join(out, "candidates.jsonl"))
        ok &= len(records) == 50
        for record in records:
            composition = CandidateSet.from_dict(record).composition
            ok &= composition == {
                "GroundTruth": 1, "Counterfactual": 3, "HRNP": 3, "WRNP": 3,
            }

        dataset2 = write_fixture_dataset(str(tmp_path / "data2"), n_questions=20, gt_per_question=2)
        out2 = str(tmp_path / "out2")
        code = main([
            "build", "--questions", dataset2.questions_path, "--corpus", dataset2.corpus_path,
            "--run", dataset2.run_path, "--gazetteer", dataset2.gazetteer_path,
            "--mode", "GTI", "--seed", "11", "--backend", "mock:oracle", "--out", out2,
        ])
        ok &= code == 0
        _, records2 = read_jsonl(os.path.join(out2, "candidates.jsonl"))
        ok &= len(records2) == 20
        for record in records2:
            composition = CandidateSet.from_dict(record).composition
            ok &= composition["GroundTruth"] == 2
            ok &= sum(composition.values()) == 10
            for key in ("Counterfactual", "HRNP", "WRNP"):
                ok &= 2 <= composition.get(key, 0) <= 4
        elapsed = time.monotonic() - started
        ok &= elapsed < 5.0
        _report(1, "assembly composition (Table-1 anchor)", ok, f"{elapsed:.2f}s")
        assert ok

    def test_02_metric_oracle_equivalence(self):
        started = time.monotonic()
        rng = random.Random(90125)
        vocab = ["cat", "dog", "fox", "pie", "red", "sky", "run", "joy"]
        failures = 0

        for _ in range(1000):
            selected = set(rng.sample(range(10), rng.randint(0, 10)))
            truth = set(rng.sample(range(10), rng.randint(1, 10)))
            got = set_metrics(selected, truth)
            want = oracle_set_metrics(selected, truth)
            failures += abs(got.precision - want[0]) > TOL
            failures += abs(got.recall - want[1]) > TOL
            failures += abs(got.f1 - want[2]) > TOL

        for _ in range(1000):
            ranking = rng.sample(range(10), rng.randint(1, 10))
            relevant = set(rng.sample(range(10), rng.randint(1, 10)))
            k = rng.randint(1, 10)
            failures += abs(ndcg_at_k(ranking, relevant, k) - oracle_ndcg_at_k(ranking, relevant, k)) > TOL
            failures += abs(mrr_at_k(ranking, relevant, k) - oracle_mrr_at_k(ranking, relevant, k)) > TOL

        def words(max_len=8):
            return " ".join(rng.choice(vocab) for _ in range(rng.randint(0, max_len)))

        for _ in range(1000):
            pred, gold = words(), words()
            failures += abs(
                token_f1(pred, [gold])
                - oracle_token_f1(normalize_text(pred).split(), normalize_text(gold).split())
            ) > TOL
            failures += abs(
                rouge_l(pred, gold)
                - oracle_rouge_l(normalize_text(pred).split(), normalize_text(gold).split())
            ) > TOL

        for _ in range(1000):
            pred = words()
            refs = [words() for _ in range(rng.randint(1, 3))]
            got = bleu(pred, refs)
            want = oracle_bleu(
                normalize_text(pred).split(), [normalize_text(r).split() for r in refs]
            )
            failures += any(abs(got[n] - want[n]) > TOL for n in range(1, 5))

        elapsed = time.monotonic() - started
        ok = failures == 0 and elapsed < 30.0
        _report(2, "metric kernels match brute-force oracles", ok,
                f"{failures} mismatches, {elapsed:.2f}s")
        assert ok

    def test_03_call_count_contracts(self):
        started = time.monotonic()
        question = make_question()
        candidates = make_candidates(question, n=10, gt_positions=(3,))
        ok = True

        client = _oracle_client([question], [candidates])
        record = judge_pointwise(question, candidates, client, JudgeConfig(form=JudgeForm.POINTWISE))
        ok &= record.call_count == 10 and len(client.request_log) == 10

        client = _oracle_client([question], [candidates])
        record = judge_pairwise(question, candidates, client, JudgeConfig(form=JudgeForm.PAIRWISE))
        ok &= record.call_count == 45 and len(client.request_log) == 45

        for k in (1, 3, 10):
            client = _oracle_client([question], [candidates])
            record = k_sampling_judge(
                question, candidates, client,
                JudgeConfig(form=JudgeForm.LISTWISE_SET, k_samples=k, seed=2),
            )
            ok &= record.call_count == k and len(client.request_log) == k

        elapsed = time.monotonic() - started
        ok &= elapsed < 5.0
        _report(3, "call-count contracts (N, N(N-1)/2, k)", ok, f"{elapsed:.2f}s")
        assert ok

    def test_04_oracle_end_to_end_position_sweep(self):
        started = time.monotonic()
        questions = [make_question(qid=f"q{i}") for i in range(3)]
        base_sets = [make_candidates(q, gt_positions=(0,)) for q in questions]
        ok = True
        for position in range(10):
            for seed in range(5):
                for question, base in zip(questions, base_sets):
                    candidates = with_ground_truth_at(base, position, seed=seed)
                    gt = set(candidates.indices_with_origin(PassageOrigin.GROUND_TRUTH))
                    client = _oracle_client([question], [candidates])

                    record = judge_pointwise(
                        question, candidates, client, JudgeConfig(form=JudgeForm.POINTWISE)
                    )
                    ok &= set_metrics(record.result.indices, gt).f1 == 1.0

                    record = judge_listwise(
                        question, candidates, client,
                        JudgeConfig(form=JudgeForm.LISTWISE_SET, seed=seed),
                    )
                    ok &= set_metrics(record.result.indices, gt).f1 == 1.0

                    record = judge_pairwise(
                        question, candidates, client, JudgeConfig(form=JudgeForm.PAIRWISE)
                    )
                    ok &= ndcg_at_k(record.result.order, gt, 1) == 1.0

                    record = judge_listwise(
                        question, candidates, client,
                        JudgeConfig(form=JudgeForm.LISTWISE_RANK, seed=seed),
                    )
                    ok &= ndcg_at_k(record.result.order, gt, 1) == 1.0
        elapsed = time.monotonic() - started
        ok &= elapsed < 60.0
        _report(4, "oracle judge perfect at all gt positions and seeds", ok, f"{elapsed:.2f}s")
        assert ok

    def test_05_k_sampling_improvement(self):
        started = time.monotonic()
        n_questions = 200
        questions = [make_question(qid=f"q{i}") for i in range(n_questions)]
        candidate_sets = [
            make_candidates(q, gt_positions=(i % 10,)) for i, q in enumerate(questions)
        ]
        knowledge = OracleKnowledge.from_candidates(questions, candidate_sets)
        f1_at = {1: [], 10: []}
        bitwise_ok = True
        for i, (question, candidates) in enumerate(zip(questions, candidate_sets)):
            gt = set(candidates.indices_with_origin(PassageOrigin.GROUND_TRUTH))
            for k in (1, 10):
                client = NoisyOracleChatClient(knowledge, seed=777)
                config = JudgeConfig(form=JudgeForm.LISTWISE_SET, k_samples=k, seed=1000 + i)
                record = k_sampling_judge(question, candidates, client, config)
                f1_at[k].append(set_metrics(record.result.indices, gt).f1)
                if k == 1:
                    # k = 1 must equal plain listwise-set on the same shuffle.
                    perm = sampling_permutation(config.seed, 1, candidates.size)
                    shuffled = CandidateSet(
                        question_id=candidates.question_id,
                        passages=tuple(candidates.passages[j] for j in perm),
                        seed=config.seed,
                        composition=candidates.composition,
                    )
                    plain = judge_listwise(
                        question, shuffled, NoisyOracleChatClient(knowledge, seed=777),
                        JudgeConfig(form=JudgeForm.LISTWISE_SET, seed=config.seed),
                    )
                    mapped = frozenset(perm[pos] for pos in plain.result.indices)
                    bitwise_ok &= record.result.indices == mapped
                    bitwise_ok &= record.raw_outputs == plain.raw_outputs

        mean_1 = sum(f1_at[1]) / n_questions
        mean_10 = sum(f1_at[10]) / n_questions
        elapsed = time.monotonic() - started
        ok = bitwise_ok and mean_10 >= mean_1 and elapsed < 60.0
        _report(5, "k-sampling improves noisy-judge F1", ok,
                f"F1 k=1 {mean_1:.3f} vs k=10 {mean_10:.3f}, {elapsed:.2f}s")
        assert ok

    def test_06_evidence_source_ordering(self):
        started = time.monotonic()
        questions = [make_question(qid=f"q{i}") for i in range(20)]
        candidate_sets = [
            make_candidates(q, gt_positions=(i % 10,)) for i, q in enumerate(questions)
        ]
        client = _oracle_client(questions, candidate_sets)
        config = JudgeConfig(form=JudgeForm.LISTWISE_SET)
        judgments = JudgmentStore()
        for question, candidates in zip(questions, candidate_sets):
            judgments.add(judge_listwise(question, candidates, client, config))

        em = {}
        for source in (
            EvidenceSource(EvidenceKind.GROUND_TRUTH),
            EvidenceSource(EvidenceKind.UTILITY_JUDGED, config),
            EvidenceSource(EvidenceKind.DENSE),
            EvidenceSource(EvidenceKind.NONE),
        ):
            records = []
            for question, candidates in zip(questions, candidate_sets):
                evidence = select_evidence(source, candidates, judgments)
                records.append(generate_answer(question, evidence, client, source))
            report = evaluate_answers(records, questions)
            em[source.kind] = report.section(DatasetKind.FQA)["metrics"]["EM"] / 100.0

        ok = (
            em[EvidenceKind.GROUND_TRUTH] == em[EvidenceKind.UTILITY_JUDGED]
            and em[EvidenceKind.UTILITY_JUDGED] >= em[EvidenceKind.DENSE]
            and em[EvidenceKind.DENSE] >= em[EvidenceKind.NONE]
            and em[EvidenceKind.GROUND_TRUTH] - em[EvidenceKind.NONE] >= 0.5
        )
        elapsed = time.monotonic() - started
        ok &= elapsed < 60.0
        _report(6, "evidence-source EM ordering", ok,
                "GT {:.2f} = Utility {:.2f} >= Dense {:.2f} >= None {:.2f}, {elapsed:.2f}s".format(
                    em[EvidenceKind.GROUND_TRUTH], em[EvidenceKind.UTILITY_JUDGED],
                    em[EvidenceKind.DENSE], em[EvidenceKind.NONE], elapsed=elapsed,
                ))
        assert ok

    def test_07_full_pipeline_determinism(self, tmp_path):
        started = time.monotonic()
        dataset = write_fixture_dataset(str(tmp_path / "data"), n_questions=10)
        grid = {
            "judgments": ["utility"],
            "forms": ["pointwise", "listwise_set", "listwise_rank"],
            "requirements": ["none"],
            "orders": ["question_first"],
            "k_samples": [1, 5],
        }
        sources = "none,dense,ground-truth,utility:listwise_set,utility:listwise_rank,utility:ksampling:5"

        def run_pipeline(root):
            build_out = os.path.join(root, "build")
            judge_out = os.path.join(root, "judge")
            qa_out = os.path.join(root, "qa")
            report_out = os.path.join(root, "report")
            config_path = os.path.join(root, "grid.json")
            os.makedirs(root, exist_ok=True)
            with open(config_path, "w", encoding="utf-8") as f:
                json.dump({"grid": grid}, f)
            assert main([
                "build", "--questions", dataset.questions_path, "--corpus", dataset.corpus_path,
                "--run", dataset.run_path, "--gazetteer", dataset.gazetteer_path,
                "--mode", "GTI", "--seed", "21", "--backend", "mock:oracle", "--out", build_out,
            ]) == 0
            assert main([
                "judge", "--config", config_path, "--questions", dataset.questions_path,
                "--candidates", os.path.join(build_out, "candidates.jsonl"),
                "--backend", "mock:oracle", "--seed", "21", "--out", judge_out,
            ]) == 0
            assert main([
                "qa", "--questions", dataset.questions_path, "--corpus", dataset.corpus_path,
                "--candidates", os.path.join(build_out, "candidates.jsonl"),
                "--judgments-dir", judge_out, "--sources", sources,
                "--backend", "mock:oracle", "--seed", "21", "--out", qa_out,
            ]) == 0
            assert main([
                "report", "--questions", dataset.questions_path,
                "--candidates", os.path.join(build_out, "candidates.jsonl"),
                "--judgments-dir", judge_out, "--answers-dir", qa_out,
                "--seed", "21", "--out", report_out,
            ]) == 0
            return [build_out, judge_out, qa_out, report_out]

        dirs_a = run_pipeline(str(tmp_path / "a"))
        dirs_b = run_pipeline(str(tmp_path / "b"))
        ok = True
        compared = 0
        for dir_a, dir_b in zip(dirs_a, dirs_b):
            names_a = sorted(os.listdir(dir_a))
            names_b = sorted(os.listdir(dir_b))
            ok &= names_a == names_b
            for name in names_a:
                compared += 1
                ok &= filecmp.cmp(
                    os.path.join(dir_a, name), os.path.join(dir_b, name), shallow=False
                )
        elapsed = time.monotonic() - started
        ok &= compared > 10 and elapsed < 120.0
        _report(7, "full pipeline byte-identical across reruns", ok,
                f"{compared} files, {elapsed:.2f}s")
        assert ok

    def test_08_prompt_snapshots(self):
        snapshot_path = os.path.join(os.path.dirname(__file__), "data", "prompt_snapshots.json")
        with open(snapshot_path, "r", encoding="utf-8") as f:
            snapshots = json.load(f)
        from test_prompts import COUNTS, PASSAGES, QUESTION, TEMPLATES

        ok = True
        checked = 0
        for form, judgment in TEMPLATES:
            subset = PASSAGES[: COUNTS.get(form, len(PASSAGES))]
            for requirement in Requirement:
                for order in PromptOrder:
                    key = f"{judgment.value}|{form.value}|{requirement.value}|{order.value}"
                    rendered = render_judge_prompt(form, judgment, requirement, order, QUESTION, subset)
                    ok &= rendered == snapshots[key]
                    if requirement is Requirement.COT:
                        ok &= "Let's think step by step" in rendered
                    checked += 1
        ok &= checked == 48
        _report(8, "prompt templates byte-match pinned snapshots", ok, f"{checked} variants")
        assert ok

    def test_09_counterfactual_substitution(self):
        started = time.monotonic()
        corpus = EntityCorpus()
        for i in range(1, 13):
            corpus.add(EntityCategory.PERSON, f"Persona{i:03d} Vex")
            corpus.add(EntityCategory.LOCATION, f"Loctown{i:03d}")
            corpus.add(EntityCategory.DATE, f"{1900 + i}")
        categories = {
            EntityCategory.PERSON: [f"Persona{i:03d} Vex" for i in range(1, 13)],
            EntityCategory.LOCATION: [f"Loctown{i:03d}" for i in range(1, 13)],
            EntityCategory.DATE: [f"{1900 + i}" for i in range(1, 13)],
        }
        ok = True
        rng = random.Random(55)
        import re as _re

        from utilbench.corpus import Passage

        for case in range(100):
            category = rng.choice(list(categories))
            answer = rng.choice(categories[category])
            mode = rng.choice(list(SubstitutionMode))
            occurrences = rng.randint(1, 3)
            filler = [f"segment {case}-{j} of the record." for j in range(occurrences + 1)]
            text = filler[0]
            for j in range(occurrences):
                text += f" It names {answer} explicitly. {filler[j + 1]}"
            evidence = Passage(id=f"e{case}", text=text, origin=PassageOrigin.GROUND_TRUTH)
            passage, spec = substitute_entities(
                evidence, answer, corpus, mode, seed=case, repeat_index=(case % 5) + 1
            )
            original_parts = _re.split(_re.escape(answer), evidence.text, flags=_re.IGNORECASE)
            new_parts = passage.text.split(spec.counter_answer)
            ok &= original_parts == new_parts
            ok &= passage.text.count(spec.counter_answer) == occurrences
            counter_category = corpus.category_of(spec.counter_answer)
            if mode is SubstitutionMode.CORPUS_SUBSTITUTION:
                ok &= counter_category is category
            else:
                ok &= counter_category is not category
            ok &= spec.counter_answer != spec.original_answer
        elapsed = time.monotonic() - started
        ok &= elapsed < 5.0
        _report(9, "counterfactual substitution invariants (100 cases)", ok, f"{elapsed:.2f}s")
        assert ok
