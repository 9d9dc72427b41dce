"""Acceptance for the sidecar: contract parity with the mocks plus exact
reproduction of the pinned sanity sheets against the live service.
"""

import json
import os

import contract_suite

DATA_DIR = os.path.join(os.path.dirname(__file__), "data")


def _report(ok: bool, detail: str) -> None:
    status = "PASS" if ok else "FAIL"
    print(f"\nACCEPTANCE 10 sidecar contract parity and sanity sheets: {status} ({detail})")


class TestAcceptance:
    def test_10_contract_parity_and_sanity_sheets(self, mock_adapter, live_adapter):
        ok = True

        for check in contract_suite.ALL_CHECKS:
            for adapter in (mock_adapter, live_adapter):
                try:
                    check(adapter)
                except AssertionError:
                    ok = False

        with open(os.path.join(DATA_DIR, "ner_sanity.json"), "r", encoding="utf-8") as f:
            ner_sheet = json.load(f)
        ok &= len(ner_sheet) == 10
        for row in ner_sheet:
            status, payload = live_adapter.post_ner(row["text"])
            ok &= status == 200
            ok &= payload["entities"] == row["entities"]

        with open(os.path.join(DATA_DIR, "nli_sanity.json"), "r", encoding="utf-8") as f:
            nli_sheet = json.load(f)
        ok &= len(nli_sheet) == 20
        for row in nli_sheet:
            status, payload = live_adapter.post_nli(row["premise"], row["hypothesis"])
            ok &= status == 200
            ok &= payload["label"] == row["label"]
            ok &= payload["scores"] == row["scores"]
            ok &= abs(sum(payload["scores"]) - 1.0) <= 1e-4

        _report(ok, f"{len(contract_suite.ALL_CHECKS)} shared checks x 2 targets, "
                    f"{len(ner_sheet)} NER sentences, {len(nli_sheet)} NLI pairs")
        assert ok
