"""Benchmark generation and evaluation for microservice root cause analysis."""

__version__ = "0.1.0"
