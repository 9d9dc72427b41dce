"""HTTP sidecar serving NER and NLI inference behind a fixed JSON contract."""

__version__ = "0.1.0"
