"""Per-project executability/validity table and its renderings."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, fields
from typing import Iterable

from .classification import ReportResult
from .corpus import Corpus
from .errors import MissingProject

CSV_HEADER = ["project", "n_reports", "exec_pct", "valid_pct", "valid_among_exec_pct",
              "n_undetermined"]
FORMATS = ("csv", "markdown", "structured")


def pct(num: int, den: int) -> int | None:
    """Integer percentage, rounding halves up; None for an empty denominator."""
    if den == 0:
        return None
    return (200 * num + den) // (2 * den)


@dataclass(frozen=True)
class Counts:
    n_reports: int = 0
    n_any_executable: int = 0
    n_any_valid: int = 0
    n_undetermined: int = 0

    def __add__(self, other: Counts) -> Counts:
        return Counts(*(getattr(self, f.name) + getattr(other, f.name) for f in fields(Counts)))

    @classmethod
    def of(cls, result: ReportResult) -> Counts:
        return cls(1, int(result.any_executable), int(result.any_valid), int(result.undetermined))


@dataclass(frozen=True)
class ProjectRow:
    project: str
    n_reports: int
    n_any_executable: int
    n_any_valid: int
    n_undetermined: int
    pct_executability: int | None
    pct_validity: int | None
    pct_valid_among_executable: int | None

    @classmethod
    def from_counts(cls, project: str, c: Counts) -> ProjectRow:
        return cls(
            project, c.n_reports, c.n_any_executable, c.n_any_valid, c.n_undetermined,
            pct(c.n_any_executable, c.n_reports),
            pct(c.n_any_valid, c.n_reports),
            pct(c.n_any_valid, c.n_any_executable),
        )

    @property
    def counts(self) -> Counts:
        return Counts(self.n_reports, self.n_any_executable, self.n_any_valid, self.n_undetermined)


@dataclass(frozen=True)
class MetricsTable:
    rows: tuple[ProjectRow, ...]
    total: ProjectRow


def count_results(results: Iterable[ReportResult]) -> dict[str, Counts]:
    out: dict[str, Counts] = {}
    for r in results:
        out[r.project] = out.get(r.project, Counts()) + Counts.of(r)
    return out


def merge_counts(*parts: dict[str, Counts]) -> dict[str, Counts]:
    out: dict[str, Counts] = {}
    for part in parts:
        for k, c in part.items():
            out[k] = out.get(k, Counts()) + c
    return out


def table_from_counts(counts: dict[str, Counts], project_order: Iterable[str]) -> MetricsTable:
    rows = []
    total = Counts()
    for name in project_order:
        c = counts.get(name)
        if c is None or c.n_reports == 0:
            continue
        rows.append(ProjectRow.from_counts(name, c))
        total = total + c
    return MetricsTable(tuple(rows), ProjectRow.from_counts("Total", total))


def aggregate_metrics(results: Iterable[ReportResult], corpus: Corpus) -> MetricsTable:
    results = list(results)
    known = set(corpus.project_names())
    for r in results:
        if r.project not in known:
            raise MissingProject(r.key)
    return table_from_counts(count_results(results), corpus.project_names())


def consistency_check(table: MetricsTable, slack: int = 0) -> list[str]:
    """Rows whose stored percentages disagree with their counts, or break ordering."""
    findings = []
    for row in (*table.rows, table.total):
        if not row.n_any_valid <= row.n_any_executable <= row.n_reports:
            findings.append(
                f"{row.project}: counts out of order (valid={row.n_any_valid}, "
                f"executable={row.n_any_executable}, reports={row.n_reports})")
        for label, stored, num, den in (
            ("executability", row.pct_executability, row.n_any_executable, row.n_reports),
            ("validity", row.pct_validity, row.n_any_valid, row.n_reports),
            ("valid-among-executable", row.pct_valid_among_executable,
             row.n_any_valid, row.n_any_executable),
        ):
            expected = pct(num, den)
            if expected is None or stored is None:
                if expected != stored:
                    findings.append(f"{row.project}: {label} {stored} but denominator is {den}")
            elif abs(stored - expected) > slack:
                findings.append(f"{row.project}: {label} {stored}% != {expected}% from counts")
    summed = sum((r.counts for r in table.rows), Counts())
    if summed != table.total.counts:
        findings.append(f"Total: counts {table.total.counts} != sum of rows {summed}")
    return findings


def compare_with_reference(table: MetricsTable, reference: dict[str, tuple], slack: int = 1) -> list[str]:
    """Compare percentages against published ``{project: (n, exec%, valid%, among%)}``."""
    findings = []
    by_name = {r.project: r for r in (*table.rows, table.total)}
    for name, (n, pe, pv, pa) in reference.items():
        row = by_name.get(name)
        if row is None:
            findings.append(f"{name}: missing row")
            continue
        if row.n_reports != n:
            findings.append(f"{name}: {row.n_reports} reports, reference has {n}")
        for label, got, want in (("executability", row.pct_executability, pe),
                                 ("validity", row.pct_validity, pv),
                                 ("valid-among-executable", row.pct_valid_among_executable, pa)):
            if got is None or abs(got - want) > slack:
                findings.append(f"{name}: {label} {got}% vs reference {want}%")
    return findings


# -- rendering --------------------------------------------------------------


def _cell(v: int | None) -> str:
    return "" if v is None else str(v)


def _render_csv(table: MetricsTable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in (*table.rows, table.total):
        w.writerow([r.project, r.n_reports, _cell(r.pct_executability), _cell(r.pct_validity),
                    _cell(r.pct_valid_among_executable), r.n_undetermined])
    return buf.getvalue()


def _md_pct(v: int | None) -> str:
    return "n/a" if v is None else f"{v}%"


def _render_markdown(table: MetricsTable) -> str:
    head = ("| Project | # of bug reports | overall executability | overall validity "
            "| validity among executable | undetermined |")
    lines = [head, "|---|---:|---:|---:|---:|---:|"]
    for r in (*table.rows, table.total):
        name = f"**{r.project}**" if r is table.total else r.project
        lines.append(f"| {name} | {r.n_reports} | {_md_pct(r.pct_executability)} "
                     f"| {_md_pct(r.pct_validity)} | {_md_pct(r.pct_valid_among_executable)} "
                     f"| {r.n_undetermined} |")
    return "\n".join(lines) + "\n"


def _row_dict(r: ProjectRow) -> dict:
    return {f.name: getattr(r, f.name) for f in fields(ProjectRow)}


def _render_structured(table: MetricsTable) -> str:
    doc = {"rows": [_row_dict(r) for r in table.rows], "total": _row_dict(table.total)}
    return json.dumps(doc, indent=2) + "\n"


def render_report(table: MetricsTable, format: str = "csv") -> str:
    if format == "csv":
        return _render_csv(table)
    if format == "markdown":
        return _render_markdown(table)
    if format == "structured":
        return _render_structured(table)
    raise ValueError(f"unknown report format {format!r}")


def parse_structured(text: str) -> MetricsTable:
    doc = json.loads(text)
    return MetricsTable(tuple(ProjectRow(**r) for r in doc["rows"]), ProjectRow(**doc["total"]))
