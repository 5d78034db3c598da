"""Benchmark forging and evaluation for figure-grounded multiple-choice questions."""

__version__ = "0.1.0"
