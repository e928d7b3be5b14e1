"""Stage drivers: generate -> extract -> evaluate -> classify -> report.

Each stage reads what earlier stages left in the run store and records its
own artifacts there, so any stage can be re-run or resumed on its own.
"""

from __future__ import annotations

import json
import logging
import shutil
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .classification import (
    MAX_INFRA_ATTEMPTS,
    ReportResult,
    SampleVerdict,
    classify_sample,
    no_code_verdict,
)
from .config import Config
from .corpus import BugReport, Corpus, load_corpus
from .errors import (
    AdapterError,
    AdapterStageFailed,
    ConfigMismatch,
    InjectionCollision,
    NoCodeFound,
    ProviderStageFailed,
    StageOrderError,
)
from .extraction import ParsedTestCase, extract_test
from .generation import Provider, build_prompt, generate_samples, make_provider
from .harness import (
    Adapter,
    ExecutionOutcome,
    Workspace,
    checkout,
    fork_workspace,
    inject_test,
    make_adapter,
    run_suite,
)
from .metrics import MetricsTable, aggregate_metrics, consistency_check, render_report
from .runstore import STAGES, RunStore, dump_record, open_run, sample_dir

logger = logging.getLogger(__name__)

REPORT_FILES = {"csv": "report.csv", "markdown": "report.md", "structured": "report.json"}


def _jsonl(records) -> str:
    return "".join(json.dumps(r, sort_keys=True, ensure_ascii=False) + "\n" for r in records)


class Pipeline:
    def __init__(self, store: RunStore, config: Config, corpus: Corpus | None = None,
                 provider: Provider | None = None, adapter: Adapter | None = None):
        self.store = store
        self.config = config
        self.corpus = corpus if corpus is not None else load_corpus(config.corpus, config.projects)
        digest = store.manifest.get("corpus_digest")
        if digest and self.corpus.digest and digest != self.corpus.digest:
            raise ConfigMismatch("corpus file changed since the run was started")
        self._provider = provider
        self._adapter = adapter

    @classmethod
    def open(cls, run_dir, config: Config, **kwargs) -> Pipeline:
        corpus = kwargs.pop("corpus", None) or load_corpus(config.corpus, config.projects)
        store = open_run(run_dir, config.snapshot(), corpus.digest)
        return cls(store, config, corpus, **kwargs)

    @property
    def provider(self) -> Provider:
        if self._provider is None:
            self._provider = make_provider(self.config.provider)
        return self._provider

    @property
    def adapter(self) -> Adapter:
        if self._adapter is None:
            self._adapter = make_adapter(self.config.adapter)
        return self._adapter

    @property
    def work_root(self) -> Path:
        return Path(self.config.work_dir) if self.config.work_dir else self.store.work_root

    def _require(self, stage: str) -> None:
        i = STAGES.index(stage)
        if i and not self.store.stage_done(STAGES[i - 1]):
            raise StageOrderError(f"stage {stage!r} needs {STAGES[i - 1]!r} to complete first")

    def _samples(self, report: BugReport) -> list[tuple[int, dict]]:
        entry = self.store.manifest["reports"].get(f"{report.project}/{report.bug_id}", {})
        return sorted(((int(i), s) for i, s in entry.get("samples", {}).items()),
                      key=lambda t: t[0])

    def run_stage(self, stage: str):
        if stage not in STAGES:
            raise ValueError(f"unknown stage {stage!r}")
        return getattr(self, stage)()

    def run_all(self) -> MetricsTable | None:
        table = None
        for stage in STAGES:
            if stage == "report" or not self.store.stage_done(stage):
                table = self.run_stage(stage)
        return table

    # -- generate ---------------------------------------------------------

    def generate(self) -> None:
        self._require("generate")
        store, cfg = self.store, self.config
        store.begin_stage("generate")
        n = cfg.samples_per_report

        def work(report: BugReport) -> dict:
            prompt = build_prompt(report, cfg.instruction, cfg.include_title)
            base = f"{report.project}/{report.bug_id}"
            store.write(f"{base}/prompt.txt", prompt.rendered)
            missing = []
            for idx in range(1, n + 1):
                rel = f"{sample_dir(report.project, report.bug_id, idx)}/raw.txt"
                entry = store.sample_entry(report.project, report.bug_id, idx)
                if store.path(rel).is_file():
                    # written before an interruption: adopt instead of re-querying
                    if entry.get("raw") != rel:
                        store.register(rel)
                        store.update(lambda m, e=entry: e.update(raw=rel, provider_meta={"adopted": True}))
                    continue
                missing.append(idx)
            if not missing:
                return {}

            def persist(sample):
                rel = store.write(
                    f"{sample_dir(report.project, report.bug_id, sample.sample_index)}/raw.txt",
                    sample.raw_response, write_once=True)
                entry = store.sample_entry(report.project, report.bug_id, sample.sample_index)
                store.update(lambda m: entry.update(raw=rel, provider_meta=sample.provider_meta))

            batch = generate_samples(prompt, cfg.provider, report.key, self.provider,
                                     on_sample=persist, indices=missing)
            return batch.errors

        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(work, self.corpus.reports))

        failed = 0
        for report, errors in zip(self.corpus.reports, results):
            entry = store.report_entry(report.project, report.bug_id)
            if errors:
                failed += len(errors)
                entry["generation_errors"] = {
                    str(i): f"{type(e).__name__}: {e}" for i, e in sorted(errors.items())}
            else:
                entry.pop("generation_errors", None)
        store.save()
        if failed:
            raise ProviderStageFailed(f"{failed} sample request(s) failed; rerun to resume")
        store.complete_stage("generate")

    # -- extract ----------------------------------------------------------

    def extract(self) -> None:
        self._require("extract")
        store = self.store
        store.begin_stage("extract")
        records = []
        for report in self.corpus.reports:
            for idx, s in self._samples(report):
                sdir = sample_dir(report.project, report.bug_id, idx)
                rec = {"project": report.project, "bug_id": report.bug_id, "sample": idx}
                try:
                    parsed = extract_test(store.read_text(s["raw"]))
                except NoCodeFound as exc:
                    if s.get("parsed"):
                        store.unregister(s["parsed"])
                    for k in ("parsed", "class_name", "test_methods", "code_block_count", "notes"):
                        s.pop(k, None)
                    s["extraction_error"] = str(exc)
                    rec.update(status="no_code", error=str(exc))
                else:
                    rel = store.write(f"{sdir}/parsed.java", parsed.source_text)
                    s.pop("extraction_error", None)
                    s.update(parsed=rel, class_name=parsed.detected_class_name,
                             test_methods=parsed.detected_test_methods,
                             code_block_count=parsed.code_block_count,
                             notes=parsed.extraction_notes)
                    rec.update(status="ok", class_name=parsed.detected_class_name,
                               test_methods=parsed.detected_test_methods,
                               code_block_count=parsed.code_block_count,
                               notes=parsed.extraction_notes)
                records.append(rec)
        store.write("extraction.rec", _jsonl(records))
        store.complete_stage("extract")

    # -- evaluate ---------------------------------------------------------

    def _parsed(self, s: dict) -> ParsedTestCase:
        return ParsedTestCase(
            source_text=self.store.read_text(s["parsed"]),
            code_block_count=s.get("code_block_count", 0),
            detected_test_methods=list(s.get("test_methods", [])),
            detected_class_name=s.get("class_name"),
            extraction_notes=list(s.get("notes", [])),
        )

    def _evaluate_sample(self, pristine: Workspace, report: BugReport, idx: int, s: dict) -> None:
        store, spec = self.store, self.config.adapter
        sdir = sample_dir(report.project, report.bug_id, idx)
        parsed = self._parsed(s)
        ws_dir = self.work_root / report.project / report.bug_id / f"sample{idx}"
        injected = None
        for attempt in range(1, MAX_INFRA_ATTEMPTS + 1):
            ws = fork_workspace(pristine, ws_dir)
            try:
                injected = inject_test(ws, parsed, idx, spec.rename_on_collision)
            except InjectionCollision as exc:
                outcome = ExecutionOutcome("ok", "infrastructure_error", run_log=f"{exc}\n",
                                           attempt=MAX_INFRA_ATTEMPTS)
                store.write(f"{sdir}/compile.log", "")
                store.write(f"{sdir}/test.log", outcome.run_log)
                break
            try:
                outcome = run_suite(injected, self.adapter, store.path(sdir), attempt=attempt)
            finally:
                store.register(f"{sdir}/compile.log")
                store.register(f"{sdir}/test.log")
            if outcome.run_status != "infrastructure_error":
                break
            logger.warning("%s-%s sample %d: infrastructure error (attempt %d)",
                           report.project, report.bug_id, idx, attempt)
        if not self.config.keep_workspaces:
            shutil.rmtree(ws_dir, ignore_errors=True)
        record = {
            "outcome": outcome.to_record(),
            "injection": {
                "class": injected.injected_class if injected else None,
                "path": (injected.injected_class_path.relative_to(injected.root).as_posix()
                         if injected else None),
                "digest": injected.injected_digest if injected else None,
                "notes": list(injected.notes) if injected else [],
            },
            "injected_methods": parsed.detected_test_methods,
            "baseline_failing_tests": list(pristine.baseline_failing_tests),
        }
        rel = store.write(f"{sdir}/outcome.rec", dump_record(record))
        store.update(lambda m: s.update(outcome=rel, compile_log=f"{sdir}/compile.log",
                                        test_log=f"{sdir}/test.log"))

    def evaluate(self) -> None:
        self._require("evaluate")
        store = self.store
        store.begin_stage("evaluate")

        def work(report: BugReport) -> str | None:
            todo = [(i, s) for i, s in self._samples(report)
                    if s.get("parsed") and not (s.get("outcome") and store.has(s["outcome"])
                                                and json.loads(store.read_text(s["outcome"])).get("outcome"))]
            if not todo:
                return None
            entry = store.report_entry(report.project, report.bug_id)
            pristine_dir = self.work_root / report.project / report.bug_id / "pristine"
            try:
                pristine = checkout(report.project, report.bug_id, self.adapter, pristine_dir)
            except AdapterError as exc:
                msg = f"{type(exc).__name__}: {exc}"
                store.update(lambda m: entry.update(evaluate_error=msg))
                logger.error("%s-%s: %s", report.project, report.bug_id, msg)
                return msg
            store.update(lambda m: (entry.pop("evaluate_error", None),
                                    entry.update(baseline_failing_tests=list(
                                        pristine.baseline_failing_tests))))
            try:
                for idx, s in todo:
                    self._evaluate_sample(pristine, report, idx, s)
            finally:
                if not self.config.keep_workspaces:
                    shutil.rmtree(pristine_dir, ignore_errors=True)
            return None

        with ThreadPoolExecutor(max_workers=self.config.workers) as pool:
            errors = [e for e in pool.map(work, self.corpus.reports) if e]
        store.save()
        if errors:
            raise AdapterStageFailed(f"{len(errors)} bug(s) could not be evaluated")
        store.complete_stage("evaluate")

    # -- classify ---------------------------------------------------------

    def classify(self) -> None:
        self._require("classify")
        store = self.store
        store.begin_stage("classify")
        lines = []
        for report in self.corpus.reports:
            for idx, s in self._samples(report):
                sdir = sample_dir(report.project, report.bug_id, idx)
                if not s.get("parsed"):
                    verdict = no_code_verdict(log_ref=s.get("raw"))
                    rec = {"outcome": None}
                else:
                    rec = json.loads(store.read_text(s["outcome"]))
                    verdict = classify_sample(
                        ExecutionOutcome.from_record(rec["outcome"]),
                        rec["injected_methods"], rec["baseline_failing_tests"],
                        rec["injection"]["class"], log_ref=f"{sdir}/test.log")
                rec["verdict"] = verdict.to_record()
                s["outcome"] = store.write(f"{sdir}/outcome.rec", dump_record(rec))
                lines.append({"project": report.project, "bug_id": report.bug_id, "sample": idx,
                              **verdict.to_record()})
        store.write("verdicts.rec", _jsonl(lines))
        store.complete_stage("classify")

    # -- report -----------------------------------------------------------

    def results(self) -> list[ReportResult]:
        grouped = defaultdict(list)
        for line in self.store.read_text("verdicts.rec").splitlines():
            rec = json.loads(line)
            grouped[(rec["project"], rec["bug_id"])].append(SampleVerdict.from_record(rec))
        out = []
        for report in self.corpus.reports:
            vs = grouped.get(report.key, [])
            if not vs:
                logger.warning("%s-%s has no sample verdicts; counted as not executable",
                               *report.key)
            out.append(ReportResult(report.key, tuple(vs)))
        return out

    def report(self) -> MetricsTable:
        self._require("report")
        store = self.store
        store.begin_stage("report")
        table = aggregate_metrics(self.results(), self.corpus)
        for finding in consistency_check(table):
            logger.error("report inconsistency: %s", finding)
        for fmt, name in REPORT_FILES.items():
            store.write(name, render_report(table, fmt))
        store.complete_stage("report")
        return table
