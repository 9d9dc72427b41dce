"""Service configuration.

Model identifiers select a backend and a checkpoint ("backend:name").
The deployed defaults are the deterministic rule engines; swap in
"spacy:<model>" or "hf:<model>" where those stacks are installed. The
pinned sanity-sheet fixtures are regenerated whenever the deployed
identifiers change.
"""

from __future__ import annotations

from dataclasses import dataclass

MIN_INPUT_CHARS = 512


@dataclass(frozen=True)
class SidecarConfig:
    ner_model: str = "rule:en-small"
    nli_model: str = "rule:lexical"
    host: str = "127.0.0.1"
    port: int = 8750
    max_input_chars: int = 4096

    def __post_init__(self) -> None:
        if self.max_input_chars < MIN_INPUT_CHARS:
            raise ValueError(f"max_input_chars must be >= {MIN_INPUT_CHARS}")
        for field_name in ("ner_model", "nli_model"):
            value = getattr(self, field_name)
            if ":" not in value:
                raise ValueError(f"{field_name} must look like 'backend:name', got {value!r}")
