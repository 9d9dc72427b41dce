"""Benchmark construction and evaluation harness for passage utility judgments."""

__version__ = "0.1.0"
