import pytest

import contract_suite


@pytest.mark.parametrize("check", contract_suite.ALL_CHECKS, ids=lambda c: c.__name__)
def test_contract(adapter, check):
    check(adapter)


def test_mock_and_live_share_wire_key_structure(mock_adapter, live_adapter):
    """Byte-compatibility of the wire shape: same key sets, same types."""
    for text in contract_suite.NER_PROBES:
        _, mock_payload = mock_adapter.post_ner(text)
        _, live_payload = live_adapter.post_ner(text)
        assert set(mock_payload) == set(live_payload)
        for payload in (mock_payload, live_payload):
            for entity in payload["entities"]:
                assert list(entity) == ["surface", "label", "start", "end"]
    for premise, hypothesis in contract_suite.NLI_PROBES:
        _, mock_payload = mock_adapter.post_nli(premise, hypothesis)
        _, live_payload = live_adapter.post_nli(premise, hypothesis)
        assert set(mock_payload) == set(live_payload) == {"label", "scores"}
