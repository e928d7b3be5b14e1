"""Executability/validity verdicts per sample and per bug report."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable

from .errors import InconsistentOutcome, RerunRequired
from .harness import ExecutionOutcome


class Verdict(str, Enum):
    NOT_EXECUTABLE = "NOT_EXECUTABLE"
    EXECUTABLE_INVALID = "EXECUTABLE_INVALID"
    EXECUTABLE_VALID = "EXECUTABLE_VALID"
    EXECUTABLE_UNDETERMINED = "EXECUTABLE_UNDETERMINED"

    @property
    def executable(self) -> bool:
        return self is not Verdict.NOT_EXECUTABLE


@dataclass(frozen=True)
class SampleVerdict:
    value: Verdict
    reason: str
    log_ref: str | None = None

    def to_record(self) -> dict:
        return {"value": self.value.value, "reason": self.reason, "log_ref": self.log_ref}

    @classmethod
    def from_record(cls, rec: dict) -> SampleVerdict:
        return cls(Verdict(rec["value"]), rec["reason"], rec.get("log_ref"))


# infrastructure errors get one automatic re-run before becoming a verdict
MAX_INFRA_ATTEMPTS = 2


def no_code_verdict(log_ref: str | None = None) -> SampleVerdict:
    return SampleVerdict(Verdict.NOT_EXECUTABLE, "no_code", log_ref)


def _split_test_name(name: str) -> tuple[str, str]:
    cls, sep, method = name.partition("::")
    if not sep:
        cls, _, method = name.rpartition(".")
    return cls, method


def injected_failures(failing: Iterable[str], baseline: Iterable[str],
                      injected_methods: Iterable[str], injected_class: str | None) -> list[str]:
    """Failing tests, new relative to the baseline, that belong to the injected unit."""
    base = set(baseline)
    methods = set(injected_methods)
    hits = []
    for name in failing:
        if name in base:
            continue
        cls, method = _split_test_name(name)
        if method not in methods:
            continue
        if injected_class is not None and cls != injected_class:
            continue
        hits.append(name)
    return hits


def classify_sample(outcome: ExecutionOutcome, injected_methods: Iterable[str],
                    baseline: Iterable[str], injected_class: str | None = None,
                    log_ref: str | None = None) -> SampleVerdict:
    """Map one post-injection run onto the verdict lattice.

    Raises RerunRequired for a first infrastructure failure; a repeated one
    is classified NOT_EXECUTABLE with reason ``infrastructure``.
    """
    if outcome.failing_tests and outcome.run_status != "completed":
        raise InconsistentOutcome(
            f"failing tests reported with run_status={outcome.run_status}")
    if outcome.compile_status == "failed":
        return SampleVerdict(Verdict.NOT_EXECUTABLE, "compile_failed", log_ref)
    if outcome.run_status == "infrastructure_error":
        if outcome.attempt < MAX_INFRA_ATTEMPTS:
            raise RerunRequired(f"infrastructure error on attempt {outcome.attempt}")
        return SampleVerdict(Verdict.NOT_EXECUTABLE, "infrastructure", log_ref)
    if outcome.run_status == "timed_out":
        return SampleVerdict(Verdict.EXECUTABLE_UNDETERMINED, "timed_out", log_ref)
    if outcome.run_status != "completed":
        raise InconsistentOutcome(f"compiled unit with run_status={outcome.run_status}")
    hits = injected_failures(outcome.failing_tests, baseline, injected_methods, injected_class)
    if not hits:
        return SampleVerdict(Verdict.EXECUTABLE_INVALID, "passes", log_ref)
    kinds = {outcome.failure_kinds.get(h) for h in hits}
    if "assertion" in kinds:
        reason = "fails_assertion"
    elif "error" in kinds:
        reason = "fails_error"
    else:
        reason = "fails"
    return SampleVerdict(Verdict.EXECUTABLE_VALID, reason, log_ref)


@dataclass(frozen=True)
class ReportResult:
    key: tuple[str, str]
    sample_verdicts: tuple[SampleVerdict, ...]

    @property
    def project(self) -> str:
        return self.key[0]

    @property
    def any_executable(self) -> bool:
        return any(v.value.executable for v in self.sample_verdicts)

    @property
    def any_valid(self) -> bool:
        return any(v.value is Verdict.EXECUTABLE_VALID for v in self.sample_verdicts)

    @property
    def undetermined(self) -> bool:
        return (self.any_executable and not self.any_valid and
                any(v.value is Verdict.EXECUTABLE_UNDETERMINED for v in self.sample_verdicts))

    def flags(self) -> tuple[bool, bool, bool]:
        return self.any_executable, self.any_valid, self.undetermined


def aggregate_report(verdicts: Iterable[SampleVerdict | Verdict],
                     key: tuple[str, str] = ("", "")) -> ReportResult:
    vs = tuple(v if isinstance(v, SampleVerdict) else SampleVerdict(v, "") for v in verdicts)
    if not vs:
        raise ValueError("a report needs at least one sample verdict")
    return ReportResult(key, vs)
