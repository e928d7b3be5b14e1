"""Bug-report corpus loading, validation and deduplication.

Corpus files are JSON Lines, one report per line::

    {"project": "Lang", "bug_id": "1", "report_id": "LANG-747",
     "url": "https://...", "title": "...", "body": "..."}

``report_id`` may be omitted when ``url`` is present; the URL then serves as
the canonical report key. Reports sharing a key are kept once (first
occurrence wins) and every dropped fault is recorded in the dedup log.
"""

from __future__ import annotations

import hashlib
import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DuplicateFaultId, EmptyCorpus, MalformedRecord

logger = logging.getLogger(__name__)

_REQUIRED = ("project", "bug_id", "title", "body")


@dataclass(frozen=True)
class ProjectMeta:
    name: str
    total_faults: int
    faults_with_reports: int

    def __post_init__(self):
        if self.faults_with_reports > self.total_faults:
            raise ValueError(
                f"{self.name}: faults_with_reports={self.faults_with_reports} "
                f"exceeds total_faults={self.total_faults}"
            )


@dataclass(frozen=True)
class BugReport:
    project: str
    bug_id: str
    report_id: str
    title: str
    body: str
    url: str | None = None

    @property
    def key(self) -> tuple[str, str]:
        return (self.project, self.bug_id)

    @property
    def short_body(self) -> bool:
        """True for empty or single-line bodies; such reports still run."""
        return len(self.body.strip().splitlines()) <= 1

    def to_record(self) -> dict:
        rec = {
            "project": self.project,
            "bug_id": self.bug_id,
            "report_id": self.report_id,
            "title": self.title,
            "body": self.body,
        }
        if self.url is not None:
            rec["url"] = self.url
        return rec


@dataclass(frozen=True)
class DedupEntry:
    kept_report_id: str
    dropped: tuple[tuple[str, str], ...]


@dataclass(frozen=True)
class Corpus:
    projects: tuple[ProjectMeta, ...]
    reports: tuple[BugReport, ...]
    dedup_log: tuple[DedupEntry, ...] = ()
    warnings: tuple[str, ...] = field(default=(), compare=False)
    digest: str = ""

    def project_names(self) -> list[str]:
        return [p.name for p in self.projects]

    def get(self, project: str, bug_id: str) -> BugReport:
        for r in self.reports:
            if r.key == (project, bug_id):
                return r
        raise KeyError((project, bug_id))


def _parse_record(line_no: int, text: str) -> BugReport:
    try:
        rec = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedRecord(line_no, f"invalid JSON: {exc.msg}") from None
    if not isinstance(rec, dict):
        raise MalformedRecord(line_no, "record is not an object")
    missing = [k for k in _REQUIRED if k not in rec]
    if missing:
        raise MalformedRecord(line_no, f"missing field(s): {', '.join(missing)}")
    for k in ("title", "body"):
        if not isinstance(rec[k], str):
            raise MalformedRecord(line_no, f"field {k!r} must be a string")
    project = str(rec["project"]).strip()
    bug_id = str(rec["bug_id"]).strip()
    if not project or not bug_id:
        raise MalformedRecord(line_no, "empty project or bug_id")
    url = rec.get("url") or None
    report_id = str(rec.get("report_id") or "").strip() or (url or "").strip()
    if not report_id:
        raise MalformedRecord(line_no, "record has neither report_id nor url")
    return BugReport(
        project=project,
        bug_id=bug_id,
        report_id=report_id,
        title=rec["title"],
        body=rec["body"],
        url=url,
    )


def dedup_reports(
    reports: list[BugReport],
) -> tuple[list[BugReport], list[DedupEntry]]:
    """Keep the first report per ``report_id``; log every dropped fault."""
    kept: dict[str, BugReport] = {}
    dropped: dict[str, list[tuple[str, str]]] = {}
    for r in reports:
        if r.report_id in kept:
            dropped.setdefault(r.report_id, []).append(r.key)
        else:
            kept[r.report_id] = r
    log = [DedupEntry(rid, tuple(keys)) for rid, keys in dropped.items()]
    return list(kept.values()), log


def load_projects(path: str | Path) -> list[ProjectMeta]:
    projects = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                meta = ProjectMeta(
                    name=str(rec["name"]),
                    total_faults=int(rec["total_faults"]),
                    faults_with_reports=int(rec["faults_with_reports"]),
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise MalformedRecord(line_no, f"bad project record: {exc}") from None
            if meta.name in seen:
                raise MalformedRecord(line_no, f"duplicate project {meta.name!r}")
            seen.add(meta.name)
            projects.append(meta)
    return projects


def file_digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def load_corpus(path: str | Path, projects_path: str | Path | None = None) -> Corpus:
    """Read, validate and deduplicate a corpus file.

    Without a project metadata file the project list is derived from the
    records themselves (total faults unknown, so set equal to the number of
    faults carrying a report).
    """
    raw: list[BugReport] = []
    line_of: dict[tuple[str, str], int] = {}
    seen_keys: set[tuple[str, str]] = set()
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            report = _parse_record(line_no, line)
            if report.key in seen_keys:
                raise DuplicateFaultId(*report.key)
            seen_keys.add(report.key)
            line_of[report.key] = line_no
            raw.append(report)
    if not raw:
        raise EmptyCorpus(f"no records in {path}")

    per_project = Counter(r.project for r in raw)
    if projects_path is not None:
        projects = load_projects(projects_path)
        known = {p.name for p in projects}
        for r in raw:
            if r.project not in known:
                raise MalformedRecord(line_of[r.key], f"unknown project {r.project!r}")
    else:
        projects = [ProjectMeta(n, c, c) for n, c in per_project.items()]
    projects.sort(key=lambda p: p.name)

    reports, log = dedup_reports(raw)
    warnings = []
    for r in reports:
        if r.short_body:
            warnings.append(f"{r.project}-{r.bug_id}: report body is empty or one line")
    for entry in log:
        logger.info("report %s shared by dropped faults %s", entry.kept_report_id, entry.dropped)
    return Corpus(
        projects=tuple(projects),
        reports=tuple(reports),
        dedup_log=tuple(log),
        warnings=tuple(warnings),
        digest=file_digest(path),
    )


def corpus_stats(corpus: Corpus) -> list[tuple[str, int]]:
    """Per-project report counts in corpus project order."""
    counts = Counter(r.project for r in corpus.reports)
    return [(p.name, counts[p.name]) for p in corpus.projects if counts[p.name]]


def write_corpus(path: str | Path, reports) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in reports:
            fh.write(json.dumps(r.to_record(), ensure_ascii=False) + "\n")
