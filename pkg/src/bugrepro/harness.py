"""Workspace checkout, test injection and suite execution.

An adapter knows how to materialize a buggy revision and how to compile and
test it. Three are provided:

* ``defects4j``: shells out to ``defects4j checkout|compile|test``
* ``generic-command``: user-supplied command templates
* ``scripted``: a JSON fixture standing in for a real build, keyed by the
  digest of the injected unit

Every suite run goes through :func:`run_command`, which enforces a wall-clock
timeout by killing the whole process group.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import shlex
import shutil
import signal
import subprocess
import sys
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from .errors import (
    BaselineCompileFailed,
    BaselineTimedOut,
    CheckoutFailed,
    ConfigError,
    InfrastructureError,
    InjectionCollision,
)
from .extraction import ParsedTestCase

logger = logging.getLogger(__name__)

ADAPTER_KINDS = ("defects4j", "generic-command", "scripted")
COMPILE_STATUSES = ("ok", "failed")
RUN_STATUSES = ("completed", "timed_out", "infrastructure_error", "not_run")
LOG_EXCERPT = 4000


@dataclass
class AdapterSpec:
    kind: str = "scripted"
    timeout: float = 1800.0
    grace: float = 10.0
    executable: str = "defects4j"
    checkout_cmd: str | None = None
    compile_cmd: str | None = None
    test_cmd: str | None = None
    failing_pattern: str | None = None
    test_source_root: str | None = None
    script: str | None = None
    rename_on_collision: bool = True

    def __post_init__(self):
        if self.kind not in ADAPTER_KINDS:
            raise ConfigError(f"unknown adapter kind {self.kind!r}")
        if self.timeout <= 0:
            raise ConfigError("adapter timeout must be positive")
        if self.grace < 0:
            raise ConfigError("grace must be non-negative")
        if self.kind == "generic-command":
            missing = [n for n in ("checkout_cmd", "compile_cmd", "test_cmd", "failing_pattern")
                       if not getattr(self, n)]
            if missing:
                raise ConfigError(f"generic-command adapter needs {', '.join(missing)}")
        if self.kind == "scripted" and not self.script:
            raise ConfigError("scripted adapter needs a script file")


@dataclass(frozen=True)
class Workspace:
    root: Path
    project: str
    bug_id: str
    test_source_root: Path
    baseline_failing_tests: tuple[str, ...] = ()
    injected_class_path: Path | None = None
    injected_class: str | None = None
    injected_digest: str | None = None
    notes: tuple[str, ...] = ()


@dataclass
class ExecutionOutcome:
    compile_status: str
    run_status: str
    failing_tests: list[str] = field(default_factory=list)
    duration: float = 0.0
    compile_log: str = ""
    run_log: str = ""
    failure_kinds: dict[str, str] = field(default_factory=dict)
    attempt: int = 1

    def __post_init__(self):
        if self.compile_status not in COMPILE_STATUSES:
            raise ValueError(f"bad compile_status {self.compile_status!r}")
        if self.run_status not in RUN_STATUSES:
            raise ValueError(f"bad run_status {self.run_status!r}")

    def to_record(self) -> dict:
        rec = asdict(self)
        rec["compile_log"] = _excerpt(self.compile_log)
        rec["run_log"] = _excerpt(self.run_log)
        return rec

    @classmethod
    def from_record(cls, rec: dict) -> ExecutionOutcome:
        return cls(**rec)


def _excerpt(text: str) -> str:
    return text if len(text) <= LOG_EXCERPT else "...\n" + text[-LOG_EXCERPT:]


def unit_digest(source_text: str) -> str:
    return hashlib.sha256(source_text.encode("utf-8", errors="surrogateescape")).hexdigest()


# -- process execution ------------------------------------------------------


@dataclass
class CommandResult:
    returncode: int | None
    output: str
    timed_out: bool
    duration: float


def run_command(argv: list[str], cwd=None, timeout: float | None = None,
                grace: float = 10.0, env=None) -> CommandResult:
    """Run ``argv`` with stdout+stderr merged; kill its process group on timeout."""
    start = time.monotonic()
    try:
        proc = subprocess.Popen(
            argv, cwd=cwd, env=env, stdout=subprocess.PIPE, stderr=subprocess.STDOUT,
            stdin=subprocess.DEVNULL, start_new_session=True,
        )
    except OSError as exc:
        return CommandResult(None, f"cannot start {argv[0]!r}: {exc}\n", False,
                             time.monotonic() - start)
    try:
        out, _ = proc.communicate(timeout=timeout)
        timed_out = False
    except subprocess.TimeoutExpired:
        timed_out = True
        try:
            os.killpg(proc.pid, signal.SIGKILL)
        except ProcessLookupError:
            pass
        try:
            out, _ = proc.communicate(timeout=max(grace, 0.1))
        except subprocess.TimeoutExpired:
            proc.kill()
            out = b""
    text = (out or b"").decode("utf-8", errors="replace")
    return CommandResult(proc.returncode, text, timed_out, time.monotonic() - start)


# -- adapters ---------------------------------------------------------------


@dataclass
class TestRun:
    status: str
    failing_tests: list[str]
    log: str
    duration: float
    failure_kinds: dict[str, str] = field(default_factory=dict)


_FAILING_HEADER = re.compile(r"^Failing tests:\s*(\d+)", re.MULTILINE)
_FAILING_ITEM = re.compile(r"^\s*-\s*(\S+)\s*$")


def parse_defects4j_failing(output: str) -> list[str] | None:
    """Names listed after ``Failing tests:``; None when the header is absent."""
    m = _FAILING_HEADER.search(output)
    if not m:
        return None
    names = []
    for line in output[m.end():].splitlines()[1:]:
        item = _FAILING_ITEM.match(line)
        if not item:
            break
        names.append(item.group(1))
    return names


class Adapter:
    def __init__(self, spec: AdapterSpec):
        self.spec = spec

    def checkout(self, project: str, bug_id: str, dest: Path) -> Path:
        """Materialize the buggy revision in ``dest``; return the test source root."""
        raise NotImplementedError

    def compile(self, ws: Workspace) -> tuple[bool, str]:
        raise NotImplementedError

    def test(self, ws: Workspace) -> TestRun:
        raise NotImplementedError


def _find_test_root(root: Path) -> Path:
    props = root / "defects4j.build.properties"
    if props.is_file():
        for line in props.read_text(errors="replace").splitlines():
            key, _, value = line.partition("=")
            if key.strip() == "d4j.dir.src.tests" and value.strip():
                return root / value.strip()
    for cand in ("src/test/java", "src/test", "tests", "test"):
        if (root / cand).is_dir():
            return root / cand
    return root / "src/test/java"


class Defects4jAdapter(Adapter):
    def _run(self, args, cwd, timeout=None):
        return run_command([self.spec.executable, *args], cwd=cwd, timeout=timeout,
                           grace=self.spec.grace)

    def checkout(self, project, bug_id, dest):
        res = self._run(["checkout", "-p", project, "-v", f"{bug_id}b", "-w", str(dest)], None,
                        self.spec.timeout)
        if res.returncode != 0 or not dest.is_dir():
            raise CheckoutFailed(f"{project}-{bug_id}b: {res.output.strip()[-500:]}")
        return _find_test_root(dest)

    def compile(self, ws):
        res = self._run(["compile"], ws.root, self.spec.timeout)
        return res.returncode == 0 and not res.timed_out, res.output

    def test(self, ws):
        res = self._run(["test"], ws.root, self.spec.timeout)
        if res.timed_out:
            return TestRun("timed_out", [], res.output, res.duration)
        failing = parse_defects4j_failing(res.output)
        if res.returncode != 0 or failing is None:
            return TestRun("infrastructure_error", [], res.output, res.duration)
        return TestRun("completed", failing, res.output, res.duration)


class GenericCommandAdapter(Adapter):
    def _argv(self, template, project="", bug_id="", workspace=""):
        return shlex.split(template.format(project=project, bug_id=bug_id, workspace=workspace))

    def checkout(self, project, bug_id, dest):
        argv = self._argv(self.spec.checkout_cmd, project, bug_id, str(dest))
        res = run_command(argv, timeout=self.spec.timeout, grace=self.spec.grace)
        if res.returncode != 0 or not dest.is_dir():
            raise CheckoutFailed(f"{project}-{bug_id}: {res.output.strip()[-500:]}")
        if self.spec.test_source_root:
            return dest / self.spec.test_source_root
        return _find_test_root(dest)

    def compile(self, ws):
        argv = self._argv(self.spec.compile_cmd, ws.project, ws.bug_id, str(ws.root))
        res = run_command(argv, cwd=ws.root, timeout=self.spec.timeout, grace=self.spec.grace)
        return res.returncode == 0 and not res.timed_out, res.output

    def test(self, ws):
        argv = self._argv(self.spec.test_cmd, ws.project, ws.bug_id, str(ws.root))
        res = run_command(argv, cwd=ws.root, timeout=self.spec.timeout, grace=self.spec.grace)
        if res.timed_out:
            return TestRun("timed_out", [], res.output, res.duration)
        if res.returncode is None:
            return TestRun("infrastructure_error", [], res.output, res.duration)
        pattern = re.compile(self.spec.failing_pattern)
        failing = []
        for line in res.output.splitlines():
            m = pattern.search(line)
            if m:
                failing.append(m.group("test") if "test" in pattern.groupindex else m.group(1))
        return TestRun("completed", failing, res.output, res.duration)


_HANG_ARGV = [sys.executable, "-c", "import time; time.sleep(3600)"]


class ScriptedAdapter(Adapter):
    """Replays outcomes from a fixture file instead of building anything.

    Fixture layout::

        {"bugs": {"<project>-<bug_id>": {"test_source_root": "src/test/java",
                                         "files": {"rel/path": "content"},
                                         "baseline": <entry>}},
         "outcomes": {"<unit digest>": <entry> | [<entry>, ...]},
         "default": <entry>}

    An entry has ``compile_status``, ``run_status``, ``failing_tests``,
    ``duration`` and optionally ``failure_kinds``, ``log`` and ``hang``.
    ``hang: true`` spawns a process that never exits, so the real timeout
    path is exercised. A list of entries is consumed one per call.
    ``{injected_class}`` in failing test names expands to the injected class.
    """

    def __init__(self, spec: AdapterSpec, table: dict | None = None):
        super().__init__(spec)
        if table is None:
            table = json.loads(Path(spec.script).read_text(encoding="utf-8"))
        self.table = table
        self._calls: dict[str, int] = {}
        self._current: dict[Path, dict] = {}

    def _bug(self, project, bug_id):
        return self.table.get("bugs", {}).get(f"{project}-{bug_id}")

    def checkout(self, project, bug_id, dest):
        bug = self._bug(project, bug_id)
        if bug is None:
            raise CheckoutFailed(f"no scripted checkout for {project}-{bug_id}")
        dest.mkdir(parents=True, exist_ok=True)
        for rel, content in bug.get("files", {}).items():
            path = dest / rel
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(content, encoding="utf-8")
        test_root = dest / bug.get("test_source_root", "src/test/java")
        test_root.mkdir(parents=True, exist_ok=True)
        return test_root

    def _entry(self, ws: Workspace) -> dict:
        if ws.injected_digest is None:
            entry = self._bug(ws.project, ws.bug_id).get("baseline", {})
            key = f"baseline:{ws.project}-{ws.bug_id}"
        else:
            key = ws.injected_digest
            entry = self.table.get("outcomes", {}).get(key, self.table.get("default"))
            if entry is None:
                raise InfrastructureError(f"scripted table has no entry for unit {key}")
        if isinstance(entry, list):
            n = self._calls.get(key, 0)
            self._calls[key] = n + 1
            entry = entry[min(n, len(entry) - 1)]
        return entry

    def compile(self, ws):
        entry = self._current[ws.root] = self._entry(ws)
        ok = entry.get("compile_status", "ok") == "ok"
        return ok, entry.get("compile_log", "" if ok else "scripted compile failure\n")

    def test(self, ws):
        entry = self._current.pop(ws.root, None) or self._entry(ws)
        if entry.get("hang"):
            res = run_command(_HANG_ARGV, timeout=self.spec.timeout, grace=self.spec.grace)
            return TestRun("timed_out" if res.timed_out else "infrastructure_error",
                           [], res.output, res.duration)
        status = entry.get("run_status", "completed")
        inj = ws.injected_class or ""
        failing = [t.replace("{injected_class}", inj) for t in entry.get("failing_tests", [])]
        kinds = {k.replace("{injected_class}", inj): v
                 for k, v in entry.get("failure_kinds", {}).items()}
        return TestRun(status, failing if status == "completed" else [],
                       entry.get("log", ""), float(entry.get("duration", 0.0)), kinds)


def make_adapter(spec: AdapterSpec) -> Adapter:
    return {
        "defects4j": Defects4jAdapter,
        "generic-command": GenericCommandAdapter,
        "scripted": ScriptedAdapter,
    }[spec.kind](spec)


# -- operations -------------------------------------------------------------


def checkout(project: str, bug_id: str, adapter: Adapter, dest: str | Path) -> Workspace:
    """Check out the buggy revision and record its baseline failing tests."""
    dest = Path(dest)
    if dest.exists():
        shutil.rmtree(dest)
    dest.parent.mkdir(parents=True, exist_ok=True)
    test_root = adapter.checkout(project, bug_id, dest)
    ws = Workspace(root=dest, project=project, bug_id=bug_id, test_source_root=test_root)
    ok, log = adapter.compile(ws)
    if not ok:
        raise BaselineCompileFailed(f"{project}-{bug_id}: {log.strip()[-500:]}")
    run = adapter.test(ws)
    if run.status == "timed_out":
        raise BaselineTimedOut(f"{project}-{bug_id}: baseline suite exceeded {adapter.spec.timeout}s")
    if run.status != "completed":
        raise InfrastructureError(run.log or f"{project}-{bug_id}: baseline run failed")
    return replace(ws, baseline_failing_tests=tuple(run.failing_tests))


def fork_workspace(pristine: Workspace, dest: str | Path) -> Workspace:
    """Independent copy of an un-injected workspace for one sample."""
    if pristine.injected_class_path is not None:
        raise ValueError("cannot fork an injected workspace")
    dest = Path(dest)
    if dest.exists():
        shutil.rmtree(dest)
    shutil.copytree(pristine.root, dest, symlinks=True)
    rel = pristine.test_source_root.relative_to(pristine.root)
    return replace(pristine, root=dest, test_source_root=dest / rel)


_PACKAGE_RE = re.compile(r"^[ \t]*package\s+([\w.]+)\s*;[ \t]*\n?", re.MULTILINE)


def placement_package(test_root: Path) -> str:
    """Package of the lexicographically first existing test class ("" if none)."""
    files = sorted(p.relative_to(test_root).as_posix() for p in test_root.rglob("*.java"))
    if not files:
        return ""
    m = _PACKAGE_RE.search((test_root / files[0]).read_text(encoding="utf-8", errors="replace"))
    return m.group(1) if m else ""


def _set_package(source: str, package: str) -> str:
    line = f"package {package};\n" if package else ""
    if _PACKAGE_RE.search(source):
        return _PACKAGE_RE.sub(lambda _: line, source, count=1)
    return line + source


def inject_test(ws: Workspace, test: ParsedTestCase, sample_index: int = 1,
                rename_on_collision: bool = True) -> Workspace:
    """Write ``test`` as a new class file under the test source root.

    Only placement is touched: the package line is set to the placement
    package, and the class is renamed ``<Name>_g<k>`` when a file of that
    name already exists there.
    """
    if ws.injected_class_path is not None:
        raise ValueError("workspace already has an injected test")
    package = placement_package(ws.test_source_root)
    pkg_dir = ws.test_source_root.joinpath(*package.split(".")) if package else ws.test_source_root
    source = _set_package(test.source_text, package)
    name = test.detected_class_name
    notes = list(ws.notes)
    if name is None:
        name = f"GeneratedTest_g{sample_index}"
        notes.append(f"no class declaration; written as {name}.java unchanged")
    elif (pkg_dir / f"{name}.java").exists():
        if not rename_on_collision:
            raise InjectionCollision(f"{name}.java already exists in {pkg_dir}")
        new = f"{name}_g{sample_index}"
        source = re.sub(rf"\b{re.escape(name)}\b", new, source)
        notes.append(f"renamed class {name} -> {new} (file name collision)")
        test.extraction_notes.append(notes[-1])
        name = new
    pkg_dir.mkdir(parents=True, exist_ok=True)
    path = pkg_dir / f"{name}.java"
    path.write_text(source, encoding="utf-8", errors="surrogateescape")
    fqn = f"{package}.{name}" if package else name
    return replace(ws, injected_class_path=path, injected_class=fqn,
                   injected_digest=unit_digest(test.source_text), notes=tuple(notes))


def run_suite(ws: Workspace, adapter: Adapter, log_dir: str | Path | None = None,
              attempt: int = 1) -> ExecutionOutcome:
    """Compile then run the full suite; logs are written even on error paths."""
    compile_log = run_log = ""
    start = time.monotonic()
    try:
        try:
            ok, compile_log = adapter.compile(ws)
        except InfrastructureError as exc:
            run_log = exc.log
            return ExecutionOutcome("ok", "infrastructure_error", [], time.monotonic() - start,
                                    compile_log, run_log, attempt=attempt)
        if not ok:
            run_log = "not run: compilation failed\n"
            return ExecutionOutcome("failed", "not_run", [], time.monotonic() - start,
                                    compile_log, run_log, attempt=attempt)
        try:
            run = adapter.test(ws)
        except InfrastructureError as exc:
            run_log = exc.log
            return ExecutionOutcome("ok", "infrastructure_error", [], time.monotonic() - start,
                                    compile_log, run_log, attempt=attempt)
        run_log = run.log
        return ExecutionOutcome("ok", run.status, run.failing_tests, run.duration,
                                compile_log, run_log, run.failure_kinds, attempt=attempt)
    finally:
        if log_dir is not None:
            log_dir = Path(log_dir)
            log_dir.mkdir(parents=True, exist_ok=True)
            (log_dir / "compile.log").write_text(compile_log, encoding="utf-8")
            (log_dir / "test.log").write_text(run_log, encoding="utf-8")
