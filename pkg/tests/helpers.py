"""Shared fixture builders and reference data for the test suite."""

from __future__ import annotations

import hashlib
import json
from fractions import Fraction
from pathlib import Path

# project -> (total faults, faults with a bug report)
PROJECT_FAULTS = {
    "Chart": (26, 6),
    "Cli": (39, 30),
    "Closure": (174, 127),
    "Lang": (64, 60),
    "Math": (106, 100),
    "Time": (26, 19),
}

# project -> (reports, executability %, validity %, valid among executable %)
PUBLISHED_RATES = {
    "Chart": (6, 33, 17, 50),
    "Cli": (30, 53, 37, 69),
    "Closure": (127, 46, 28, 59),
    "Lang": (60, 60, 43, 72),
    "Math": (100, 43, 15, 35),
    "Time": (19, 84, 68, 81),
    "Total": (342, 50, 30, 59),
}

INSTRUCTION = "write a Java test case for the following bug report: "


def round_half_up(x: Fraction) -> int:
    return int((x + Fraction(1, 2)) // 1)


def count_candidates(n: int, pe: int, pv: int, pa: int) -> list[tuple[int, int]]:
    """All (executable, valid) count pairs reproducing a row's percentages."""
    out = []
    for e in range(n + 1):
        if round_half_up(Fraction(100 * e, n)) != pe:
            continue
        for v in range(e + 1):
            if round_half_up(Fraction(100 * v, n)) != pv:
                continue
            if e and round_half_up(Fraction(100 * v, e)) == pa:
                out.append((e, v))
    return out


def published_counts() -> dict[str, tuple[int, int, int]]:
    """project -> (reports, executable, valid), requiring a unique solution per row."""
    out = {}
    for name, (n, pe, pv, pa) in PUBLISHED_RATES.items():
        if name == "Total":
            continue
        cands = count_candidates(n, pe, pv, pa)
        assert len(cands) == 1, (name, cands)
        out[name] = (n, *cands[0])
    return out


def reference_records() -> list[dict]:
    recs = []
    for project, (_, with_reports) in PROJECT_FAULTS.items():
        for i in range(1, with_reports + 1):
            recs.append({
                "project": project,
                "bug_id": str(i),
                "report_id": f"{project.upper()}-{1000 + i}",
                "url": f"https://issues.example.org/{project.upper()}-{1000 + i}",
                "title": f"{project} issue {i}",
                "body": f"Calling the API with input {i} throws an exception.\nExpected a result.",
            })
    return recs


def write_jsonl(path: Path, records) -> Path:
    path.write_text("".join(json.dumps(r) + "\n" for r in records), encoding="utf-8")
    return path


def write_reference_corpus(tmp: Path) -> tuple[Path, Path]:
    corpus = write_jsonl(tmp / "reference.jsonl", reference_records())
    projects = write_jsonl(tmp / "projects.jsonl", [
        {"name": p, "total_faults": t, "faults_with_reports": w} for p, (t, w) in PROJECT_FAULTS.items()
    ])
    return corpus, projects


# -- end-to-end fixture -----------------------------------------------------

# Independent re-statements of the wire rules; deliberately not imported
# from the package so the oracle cannot inherit its bugs.


def oracle_replay_key(rendered: str, index: int) -> str:
    return hashlib.sha256(rendered.encode() + b"\x00" + str(index).encode()).hexdigest()


def oracle_digest(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def java_test(cls: str, methods: list[str], extra: str = "", package: str | None = None) -> str:
    head = f"package {package};\n\n" if package else ""
    body = "".join(
        f"    @Test\n    public void {m}() {{\n        assertEquals(1, compute{i}());\n    }}\n"
        for i, m in enumerate(methods)
    )
    return (f"{head}import org.junit.Test;\nimport static org.junit.Assert.*;\n\n"
            f"public class {cls} {{\n{body}{extra}}}")


def fenced(code: str, lead: str = "Here is a test case:\n\n", tail: str = "\n\nThis reproduces the bug.") -> str:
    return f"{lead}```java\n{code}\n```{tail}"


E2E_PROJECTS = {"Cli": "org.apache.commons.cli", "Lang": "org.apache.commons.lang3",
                "Math": "org.apache.commons.math"}
E2E_SAMPLES = 5

# per-report sample kinds:
# V valid, P passes, C compile failure, X prose only, L file-name collision
# (valid), O unrelated new failure, H never terminates, R infrastructure error
# then valid on re-run, U unfenced answer that passes
E2E_PLAN = {
    ("Cli", "1"): "CXVPH",    # valid
    ("Cli", "2"): "CCXCX",    # not executable
    ("Cli", "3"): "POUCX",    # executable, invalid
    ("Cli", "4"): "HCXCC",    # undetermined
    ("Lang", "1"): "LCCXP",   # valid (renamed class)
    ("Lang", "2"): "XXXXX",   # not executable
    ("Lang", "3"): "RCXXX",   # valid after re-run; empty body
    ("Lang", "4"): "HPCXO",   # undetermined
    ("Math", "1"): "HHCXC",   # undetermined
    ("Math", "2"): "UPPCC",   # executable, invalid
    ("Math", "3"): "CCCCC",   # not executable
    ("Math", "4"): "VVHPC",   # valid
}


def build_e2e(tmp: Path, hang: bool = True) -> dict:
    """12 reports x 5 samples (see E2E_PLAN), a replay store, a scripted table.

    With ``hang=False`` the never-terminating samples pass instead, so every
    outcome (durations included) is deterministic.
    """
    tmp.mkdir(parents=True, exist_ok=True)
    records, bugs, outcomes = [], {}, {}
    replay = tmp / "replay"
    replay.mkdir(exist_ok=True)
    for project, pkg in E2E_PROJECTS.items():
        for b in range(1, 5):
            bug_id = str(b)
            title = f"{project} bug {b}: wrong result"
            body = f"When calling method{b} with a null argument the library throws.\nSeen in 1.{b}."
            if (project, bug_id) == ("Lang", "3"):
                body = ""  # one-line report
            records.append({"project": project, "bug_id": bug_id,
                            "report_id": f"{project.upper()}-{200 + b}",
                            "title": title, "body": body})
            existing = f"{pkg.replace('.', '/')}/ExistingTest.java"
            bugs[f"{project}-{bug_id}"] = {
                "test_source_root": "src/test/java",
                "files": {
                    f"src/test/java/{existing}": f"package {pkg};\npublic class ExistingTest {{}}\n",
                    f"src/test/java/{pkg.replace('.', '/')}/util/HelperTest.java":
                        f"package {pkg}.util;\npublic class HelperTest {{}}\n",
                },
                "baseline": {"compile_status": "ok", "run_status": "completed",
                             "failing_tests": [f"{pkg}.ExistingTest::trigger{b}"], "duration": 1.0},
            }
            rendered = f"{INSTRUCTION}\n{title}\n{body}"
            for k in range(1, E2E_SAMPLES + 1):
                kind = E2E_PLAN[(project, bug_id)][k - 1]
                cls = f"{project}Bug{b}S{k}Test"
                methods = [f"test{project}{b}_{k}"]
                entry = {"compile_status": "ok", "run_status": "completed",
                         "failing_tests": [f"{pkg}.ExistingTest::trigger{b}"], "duration": 2.0}
                if kind == "V":       # valid: injected method fails
                    code = java_test(cls, methods)
                    entry["failing_tests"].append("{injected_class}::" + methods[0])
                    entry["failure_kinds"] = {"{injected_class}::" + methods[0]: "assertion"}
                    text = fenced(code)
                elif kind == "P":     # compiles, passes
                    code = java_test(cls, methods, package="com.example.wrong")
                    text = fenced(code)
                elif kind == "C":     # compile failure
                    code = java_test(cls, methods, extra="    int broken = ;\n")
                    entry = {"compile_status": "failed", "run_status": "completed",
                             "failing_tests": [], "duration": 0.5}
                    text = fenced(code, lead="Try this:\n")
                elif kind == "X":     # prose only
                    code = None
                    text = "I am sorry, but the report lacks the details needed to write a test."
                elif kind == "L":     # file-name collision with existing test, still valid
                    code = java_test("ExistingTest", methods)
                    entry["failing_tests"].append("{injected_class}::" + methods[0])
                    text = fenced(code)
                elif kind == "O":     # only an unrelated new failure: invalid
                    code = java_test(cls, methods)
                    entry["failing_tests"].append(f"{pkg}.util.HelperTest::other")
                    text = fenced(code)
                elif kind == "H":     # never terminates (or plain pass when hang=False)
                    code = java_test(cls, methods)
                    entry = {"hang": True} if hang else dict(entry)
                    text = fenced(code, lead="", tail="")
                elif kind == "R":     # infrastructure hiccup, then valid on re-run
                    code = java_test(cls, methods)
                    entry = [{"compile_status": "ok", "run_status": "infrastructure_error",
                              "failing_tests": [], "duration": 0.1},
                             {**entry, "failing_tests": entry["failing_tests"]
                              + ["{injected_class}::" + methods[0]]}]
                    text = fenced(code)
                else:               # unfenced answer, heuristic extraction, passes
                    code = java_test(cls, methods)
                    text = f"Below is the test.\n{code}\nLet me know if it helps."
                if code is not None:
                    outcomes[oracle_digest(code)] = entry
                (replay / oracle_replay_key(rendered, k)).write_bytes(text.encode())
    corpus = write_jsonl(tmp / "corpus.jsonl", records)
    script = tmp / "script.json"
    script.write_text(json.dumps({"bugs": bugs, "outcomes": outcomes}, indent=1), encoding="utf-8")
    config = tmp / "config.ini"
    config.write_text(
        "[run]\n"
        "corpus = corpus.jsonl\n"
        f"samples_per_report = {E2E_SAMPLES}\n"
        "workers = 4\n"
        "\n[provider]\nkind = replay\nmodel = fixture-model\nreplay_dir = replay\n"
        "\n[adapter]\nkind = scripted\nscript = script.json\ntimeout = 0.5\ngrace = 0.5\n",
        encoding="utf-8",
    )
    return {"root": tmp, "corpus": corpus, "replay": replay, "script": script, "config": config}


def e2e_oracle(fixture: dict) -> str:
    """Expected report.csv, recomputed straight from the fixture files."""
    import re

    records = [json.loads(l) for l in fixture["corpus"].read_text().splitlines() if l.strip()]
    table = json.loads(fixture["script"].read_text())
    counts: dict[str, list[int]] = {}
    order = []
    for rec in records:
        project = rec["project"]
        if project not in counts:
            counts[project] = [0, 0, 0, 0]
            order.append(project)
        rendered = f"{INSTRUCTION}\n{rec['title']}\n{rec['body']}"
        baseline = set(table["bugs"][f"{project}-{rec['bug_id']}"]["baseline"]["failing_tests"])
        verdicts = []
        for k in range(1, E2E_SAMPLES + 1):
            text = (fixture["replay"] / oracle_replay_key(rendered, k)).read_text()
            if "```" in text:
                code = text.split("```", 2)[1].split("\n", 1)[1].rstrip("\n")
            else:
                lines = text.splitlines()
                starts = [i for i, l in enumerate(lines) if l.startswith("import ")]
                ends = [i for i, l in enumerate(lines) if l.rstrip().endswith("}")]
                code = "\n".join(lines[starts[0]:ends[-1] + 1]) if starts and ends else None
            if code is None:
                verdicts.append("NE")
                continue
            entry = table["outcomes"][oracle_digest(code)]
            if isinstance(entry, list):
                entry = entry[-1]
            if entry.get("hang"):
                verdicts.append("U")
                continue
            if entry["compile_status"] != "ok":
                verdicts.append("NE")
                continue
            methods = set(re.findall(r"@Test\s+public void (\w+)", code))
            new = [t for t in entry["failing_tests"] if t not in baseline]
            hit = any(t.startswith("{injected_class}::") and t.split("::")[1] in methods
                      for t in new)
            verdicts.append("V" if hit else "I")
        exe = any(v != "NE" for v in verdicts)
        val = "V" in verdicts
        und = exe and not val and "U" in verdicts
        c = counts[project]
        c[0] += 1
        c[1] += exe
        c[2] += val
        c[3] += und

    def p(a, b):
        return "" if b == 0 else str(int(Fraction(100 * a, b) + Fraction(1, 2)))

    lines = ["project,n_reports,exec_pct,valid_pct,valid_among_exec_pct,n_undetermined"]
    tot = [0, 0, 0, 0]
    for project in sorted(order):
        n, e, v, u = counts[project]
        tot = [x + y for x, y in zip(tot, counts[project])]
        lines.append(f"{project},{n},{p(e, n)},{p(v, n)},{p(v, e)},{u}")
    n, e, v, u = tot
    lines.append(f"Total,{n},{p(e, n)},{p(v, n)},{p(v, e)},{u}")
    return "\n".join(lines) + "\n"
