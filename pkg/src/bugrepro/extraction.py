"""Pull a candidate Java compilation unit out of a chat response.

Fenced blocks win: when any are present, their contents are concatenated in
order (newline-joined) and nothing else is kept. Without fences, the longest
contiguous run of code-looking lines is taken. Nothing is ever added or
repaired; compile errors are left for the compiler to report.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import NoCodeFound

FENCE = "```"
# opening fence (optionally tagged), body, optional newline, closing fence
_FENCE_RE = re.compile(r"```[^\n`]*\n(.*?)\n?```", re.DOTALL)

_CODE_START = ("import ", "package ", "@", "public", "private", "protected")
_CODE_END = (";", "{", "}")

_TEST_ANNOTATION = re.compile(r"@(?:org\.junit\.(?:jupiter\.api\.)?)?Test\b")
_METHOD_DECL = re.compile(
    r"(?P<ret>[\w$][\w$.]*(?:<[^<>(){};]*>)?(?:\[\])*)\s+(?P<name>[\w$]+)\s*\([^;{}]*?\)\s*"
    r"(?:throws\s+[\w$.,\s]+)?\{"
)
_NOT_METHODS = {
    "if", "for", "while", "switch", "catch", "synchronized", "return", "new",
    "else", "throw", "try", "do", "case", "assert",
}
_CLASS_DECL = re.compile(
    r"^[ \t]*(?P<mods>(?:(?:public|final|abstract|static)\s+)*)class\s+(?P<name>[\w$]+)",
    re.MULTILINE,
)


@dataclass
class ParsedTestCase:
    source_text: str
    code_block_count: int
    detected_test_methods: list[str] = field(default_factory=list)
    detected_class_name: str | None = None
    extraction_notes: list[str] = field(default_factory=list)


def fenced_blocks(text: str) -> list[str]:
    return _FENCE_RE.findall(text)


def _looks_like_code(line: str) -> bool:
    s = line.strip()
    if not s or FENCE in s:
        return False
    return s.startswith(_CODE_START) or s.endswith(_CODE_END)


def heuristic_code(text: str) -> str | None:
    """Longest run of code-like lines.

    Blank lines, and any line inside open braces, continue a run. A run ends
    at a non-blank, non-code line seen at brace depth zero; trailing non-code
    lines are trimmed back to the last code-like line.
    """
    lines = text.split("\n")
    best: tuple[int, int] | None = None
    i = 0
    while i < len(lines):
        if not _looks_like_code(lines[i]):
            i += 1
            continue
        start = last_code = i
        depth = 0
        j = i
        while j < len(lines):
            line = lines[j]
            if FENCE in line:
                break
            code = _looks_like_code(line)
            if not code and depth <= 0 and line.strip():
                break
            if code:
                last_code = j
            depth += line.count("{") - line.count("}")
            j += 1
        if best is None or last_code - start > best[1] - best[0]:
            best = (start, last_code)
        i = last_code + 1
    if best is None:
        return None
    return "\n".join(lines[best[0] : best[1] + 1])


def detect_test_methods(source_text: str) -> list[str]:
    """Names of test methods in textual order.

    If the unit uses ``@Test`` anywhere, only annotated methods count;
    otherwise JUnit 3 style ``public void test*()`` methods are reported.
    """
    annotated_style = bool(_TEST_ANNOTATION.search(source_text))
    names = []
    for m in _METHOD_DECL.finditer(source_text):
        ret, name = m.group("ret"), m.group("name")
        if ret in _NOT_METHODS or name in _NOT_METHODS:
            continue
        head = source_text[: m.start()]
        cut = max(head.rfind(";"), head.rfind("{"), head.rfind("}"))
        prefix = head[cut + 1 :]
        if annotated_style:
            if _TEST_ANNOTATION.search(prefix):
                names.append(name)
        elif ret == "void" and name.startswith("test") and "public" in prefix:
            names.append(name)
    return names


def detect_class_name(source_text: str) -> str | None:
    """Public top-level class if any, else the first declared class."""
    first = None
    for m in _CLASS_DECL.finditer(source_text):
        if "public" in m.group("mods"):
            return m.group("name")
        if first is None:
            first = m.group("name")
    return first


def extract_test(raw_response: str) -> ParsedTestCase:
    raw = raw_response.replace("\r\n", "\n")
    blocks = fenced_blocks(raw)
    notes = []
    if blocks:
        source = "\n".join(blocks)
        if not source.strip():
            raise NoCodeFound("fenced blocks are empty")
    else:
        source = heuristic_code(raw)
        if source is None:
            raise NoCodeFound("response has no fenced block and no code-like lines")
        notes.append("no fenced block; heuristic extraction")
    return ParsedTestCase(
        source_text=source,
        code_block_count=len(blocks),
        detected_test_methods=detect_test_methods(source),
        detected_class_name=detect_class_name(source),
        extraction_notes=notes,
    )
