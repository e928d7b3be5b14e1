"""Reproduce reported bugs as generated test cases and score them."""

__version__ = "0.1.0"

DEFAULT_INSTRUCTION = "write a Java test case for the following bug report: "
DEFAULT_SAMPLES = 5
