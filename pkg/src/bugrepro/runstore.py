"""Run directory layout and manifest.

Layout::

    <run-dir>/manifest.rec
    <run-dir>/<project>/<bug_id>/prompt.txt
    <run-dir>/<project>/<bug_id>/sample<k>/{raw.txt, parsed.java, compile.log, test.log, outcome.rec}
    <run-dir>/{extraction.rec, verdicts.rec, report.csv, report.md, report.json}

The manifest is JSON, rewritten atomically (temp file + rename) by a single
writer. Every file under the run dir except the manifest itself and the
scratch ``.work`` tree must be listed in ``artifacts``.
"""

from __future__ import annotations

import copy
import hashlib
import json
import os
import tempfile
import threading
from datetime import datetime, timezone
from pathlib import Path

from .errors import ConfigMismatch

MANIFEST = "manifest.rec"
WORK_DIR = ".work"
STAGES = ("generate", "extract", "evaluate", "classify", "report")
# config keys that may change between resumes
RESUMABLE_KEYS = frozenset({"workers", "keep_workspaces"})
VOLATILE_KEYS = frozenset({"run_id", "created", "timestamp"})


def config_digest(snapshot: dict) -> str:
    blob = json.dumps(snapshot, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def _comparable(snapshot: dict) -> dict:
    return {k: v for k, v in snapshot.items() if k not in RESUMABLE_KEYS}


def report_key(project: str, bug_id: str) -> str:
    return f"{project}/{bug_id}"


def sample_dir(project: str, bug_id: str, index: int) -> str:
    return f"{project}/{bug_id}/sample{index}"


def atomic_write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_record(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1, ensure_ascii=False) + "\n"


class RunStore:
    """A run directory plus its in-memory manifest; all mutation goes through a lock."""

    def __init__(self, root: Path, manifest: dict):
        self.root = root
        self.manifest = manifest
        self._lock = threading.RLock()

    # -- manifest ---------------------------------------------------------

    @property
    def config(self) -> dict:
        return self.manifest["config"]

    def save(self) -> None:
        with self._lock:
            self.manifest["artifacts"] = sorted(set(self.manifest["artifacts"]))
            atomic_write(self.root / MANIFEST, dump_record(self.manifest).encode("utf-8"))

    def stage_done(self, stage: str) -> bool:
        return bool(self.manifest["stages"].get(stage))

    def begin_stage(self, stage: str) -> None:
        with self._lock:
            self.manifest["attempts"][stage] = self.manifest["attempts"].get(stage, 0) + 1
            self.manifest["stages"][stage] = False
            # later stages depend on this one
            for later in STAGES[STAGES.index(stage) + 1:]:
                self.manifest["stages"][later] = False
            self.save()

    def complete_stage(self, stage: str) -> None:
        with self._lock:
            self.manifest["stages"][stage] = True
            self.save()

    def report_entry(self, project: str, bug_id: str) -> dict:
        with self._lock:
            return self.manifest["reports"].setdefault(
                report_key(project, bug_id), {"samples": {}})

    def sample_entry(self, project: str, bug_id: str, index: int) -> dict:
        with self._lock:
            return self.report_entry(project, bug_id)["samples"].setdefault(str(index), {})

    def update(self, fn) -> None:
        """Apply ``fn(manifest)`` and persist, under the writer lock."""
        with self._lock:
            fn(self.manifest)
            self.save()

    # -- artifacts --------------------------------------------------------

    def path(self, rel: str) -> Path:
        return self.root / rel

    def write(self, rel: str, data: str | bytes, write_once: bool = False) -> str:
        if isinstance(data, str):
            data = data.encode("utf-8", errors="surrogateescape")
        path = self.path(rel)
        if write_once and path.exists():
            if path.read_bytes() != data:
                raise FileExistsError(f"{rel} is write-once and already holds different content")
        else:
            atomic_write(path, data)
        self.register(rel)
        return rel

    def register(self, rel: str) -> None:
        with self._lock:
            if rel not in self.manifest["artifacts"]:
                self.manifest["artifacts"].append(rel)

    def unregister(self, rel: str) -> None:
        with self._lock:
            if rel in self.manifest["artifacts"]:
                self.manifest["artifacts"].remove(rel)
            p = self.path(rel)
            if p.exists():
                p.unlink()

    def read_text(self, rel: str) -> str:
        return self.path(rel).read_bytes().decode("utf-8", errors="surrogateescape")

    def has(self, rel: str) -> bool:
        return rel in self.manifest["artifacts"] and self.path(rel).is_file()

    @property
    def work_root(self) -> Path:
        return self.root / WORK_DIR


def _new_manifest(snapshot: dict, corpus_digest: str) -> dict:
    now = datetime.now(timezone.utc)
    digest = config_digest(snapshot)
    return {
        "format": 1,
        "run_id": f"{now.strftime('%Y%m%dT%H%M%SZ')}-{digest[:12]}",
        "created": now.isoformat(),
        "config": snapshot,
        "config_digest": digest,
        "corpus_digest": corpus_digest,
        "stages": {s: False for s in STAGES},
        "attempts": {s: 0 for s in STAGES},
        "reports": {},
        "artifacts": [],
    }


def load_run(dir: str | Path) -> RunStore:
    root = Path(dir)
    path = root / MANIFEST
    if not path.is_file():
        raise FileNotFoundError(f"{root} has no {MANIFEST}")
    return RunStore(root, json.loads(path.read_text(encoding="utf-8")))


def open_run(dir: str | Path, config: dict, corpus_digest: str = "") -> RunStore:
    """Create a run directory, or resume one started with the same configuration."""
    root = Path(dir)
    if (root / MANIFEST).is_file():
        store = load_run(root)
        old = store.manifest
        if _comparable(old["config"]) != _comparable(config):
            changed = sorted(k for k in set(old["config"]) | set(config)
                             if k not in RESUMABLE_KEYS and old["config"].get(k) != config.get(k))
            raise ConfigMismatch(f"run {root} was started with different settings: {changed}")
        if corpus_digest and old["corpus_digest"] != corpus_digest:
            raise ConfigMismatch(f"corpus changed since run {root} was started")
        for k in RESUMABLE_KEYS & config.keys():
            old["config"][k] = config[k]
        return store
    root.mkdir(parents=True, exist_ok=True)
    store = RunStore(root, _new_manifest(config, corpus_digest))
    store.save()
    return store


def verify_run(dir: str | Path) -> list[str]:
    """Referential audit: every listed artifact exists and every file is listed."""
    root = Path(dir)
    try:
        store = load_run(root)
    except FileNotFoundError as exc:
        return [f"missing manifest: {exc}"]
    except json.JSONDecodeError as exc:
        return [f"corrupt manifest: {exc}"]
    findings = []
    listed = set(store.manifest.get("artifacts", []))
    on_disk = set()
    for p in root.rglob("*"):
        if not p.is_file():
            continue
        rel = p.relative_to(root).as_posix()
        if rel == MANIFEST or rel.startswith(WORK_DIR + "/"):
            continue
        on_disk.add(rel)
    for rel in sorted(listed - on_disk):
        findings.append(f"dangling reference: {rel}")
    for rel in sorted(on_disk - listed):
        findings.append(f"unreferenced artifact: {rel}")
    for key, entry in sorted(store.manifest.get("reports", {}).items()):
        for idx, sample in sorted(entry.get("samples", {}).items()):
            for field in ("raw", "parsed", "outcome"):
                rel = sample.get(field)
                if rel and rel not in listed:
                    findings.append(f"{key} sample {idx}: {field} {rel} not in artifact list")
    stages = store.manifest.get("stages", {})
    for i, stage in enumerate(STAGES[1:], 1):
        if stages.get(stage) and not stages.get(STAGES[i - 1]):
            findings.append(f"stage {stage} complete but {STAGES[i - 1]} is not")
    return findings


def strip_volatile(obj):
    """Copy of a manifest with timestamps removed, for run-to-run comparison."""
    obj = copy.deepcopy(obj)

    def walk(o):
        if isinstance(o, dict):
            for k in list(o):
                if k in VOLATILE_KEYS:
                    del o[k]
                else:
                    walk(o[k])
        elif isinstance(o, list):
            for v in o:
                walk(v)

    walk(obj)
    return obj
