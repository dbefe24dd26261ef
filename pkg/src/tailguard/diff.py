"""Unified-diff parsing and package.json ``scripts`` tracking.

Patches are the per-file bodies served by code forges: zero or more hunks,
each introduced by ``@@ -a,b +c,d @@`` with an optional section heading.
Git file headers (``diff --git``, ``---``/``+++`` ...) before the first hunk
are skipped.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from typing import Iterator, Optional

from tailguard.model import (
    DiffHunk,
    DiffLine,
    FileChange,
    FileKind,
    LineTag,
    classify_file_change,
)

__all__ = [
    "MalformedHunkHeader",
    "WrongFileKind",
    "ScriptAddition",
    "parse_unified_diff",
    "render_hunks",
    "file_change",
    "classify_file_change",
    "extract_manifest_script_additions",
]

log = logging.getLogger(__name__)

HUNK_HEADER = re.compile(r"^@@ -(\d+)(?:,(\d+))? \+(\d+)(?:,(\d+))? @@(.*)$")
_FILE_HEADER_PREFIXES = (
    "diff ",
    "index ",
    "--- ",
    "+++ ",
    "new file mode",
    "deleted file mode",
    "old mode",
    "new mode",
    "similarity index",
    "dissimilarity index",
    "rename from",
    "rename to",
    "copy from",
    "copy to",
)


class MalformedHunkHeader(ValueError):
    pass


class WrongFileKind(ValueError):
    pass


def parse_unified_diff(patch_text: str) -> list[DiffHunk]:
    """Parse a per-file patch body into hunks.

    Context and added lines get new-file line numbers derived from the hunk
    header. A body that disagrees with its header counts does not raise:
    parsing stops there and the last hunk is returned with ``truncated``
    set.
    """
    if not patch_text:
        return []
    lines = patch_text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()

    i = 0
    while i < len(lines) and lines[i].startswith(_FILE_HEADER_PREFIXES):
        i += 1

    hunks: list[DiffHunk] = []
    while i < len(lines):
        header = lines[i]
        if not header.startswith("@@"):
            if all(not ln.strip() for ln in lines[i:]):
                break
            if not hunks:
                raise MalformedHunkHeader(f"expected hunk header, got {header[:60]!r}")
            log.warning("stray line after hunk: %r", header[:60])
            hunks[-1] = _mark_truncated(hunks[-1])
            break
        m = HUNK_HEADER.match(header)
        if m is None:
            raise MalformedHunkHeader(f"unparseable hunk header {header[:60]!r}")
        old_start = int(m.group(1))
        old_left = int(m.group(2)) if m.group(2) is not None else 1
        new_start = int(m.group(3))
        new_left = int(m.group(4)) if m.group(4) is not None else 1
        i += 1

        body: list[DiffLine] = []
        new_lineno = new_start
        consistent = True
        while old_left > 0 or new_left > 0:
            if i >= len(lines):
                consistent = False
                break
            raw = lines[i]
            if raw.startswith("\\"):
                i += 1
                continue
            tag = raw[:1]
            if tag == "+" and new_left > 0:
                body.append(DiffLine(LineTag.ADDED, raw[1:], new_lineno))
                new_lineno += 1
                new_left -= 1
            elif tag == "-" and old_left > 0:
                body.append(DiffLine(LineTag.REMOVED, raw[1:]))
                old_left -= 1
            elif tag in (" ", "") and old_left > 0 and new_left > 0:
                # some tools strip the lone space of blank context lines
                body.append(DiffLine(LineTag.CONTEXT, raw[1:], new_lineno))
                new_lineno += 1
                old_left -= 1
                new_left -= 1
            else:
                consistent = False
                break
            i += 1
        while i < len(lines) and lines[i].startswith("\\"):
            i += 1

        hunks.append(DiffHunk(old_start, new_start, tuple(body), truncated=not consistent))
        if not consistent:
            log.warning("hunk at +%d disagrees with its header; parsing stopped", new_start)
            break
    return hunks


def _mark_truncated(hunk: DiffHunk) -> DiffHunk:
    return DiffHunk(hunk.old_start, hunk.new_start, hunk.lines, truncated=True)


def render_hunks(hunks) -> str:
    """Inverse of :func:`parse_unified_diff` (section headings are not kept)."""
    out: list[str] = []
    for h in hunks:
        old_n = sum(1 for ln in h.lines if ln.tag is not LineTag.ADDED)
        new_n = sum(1 for ln in h.lines if ln.tag is not LineTag.REMOVED)
        out.append(f"@@ -{h.old_start},{old_n} +{h.new_start},{new_n} @@")
        out.extend(ln.tag.value + ln.content for ln in h.lines)
    return "\n".join(out)


def file_change(path: str, patch: Optional[str]) -> FileChange:
    """Build a :class:`FileChange` keeping the patch text verbatim."""
    return FileChange(path, tuple(parse_unified_diff(patch or "")), patch)


@dataclass(frozen=True)
class ScriptAddition:
    script_name: str
    command: str
    new_lineno: int
    file_path: str
    # scripts-block membership could not be settled from the hunk alone
    low_confidence: bool = False


# --- package.json lexical tracking -------------------------------------------

_PUNCT = "{}[]:,"


def _lex(line: str) -> Iterator[tuple[str, str]]:
    """Yield ``(kind, text)`` tokens: kind is ``str``, a punctuation char or ``scalar``."""
    i, n = 0, len(line)
    while i < n:
        ch = line[i]
        if ch.isspace():
            i += 1
        elif ch == '"':
            j = i + 1
            while j < n and line[j] != '"':
                j += 2 if line[j] == "\\" else 1
            raw = line[i + 1 : min(j, n)]
            yield "str", _unescape(raw)
            i = j + 1
        elif ch in _PUNCT:
            yield ch, ch
            i += 1
        else:
            j = i
            while j < n and not line[j].isspace() and line[j] not in _PUNCT and line[j] != '"':
                j += 1
            yield "scalar", line[i:j]
            i = j


def _unescape(raw: str) -> str:
    try:
        return json.loads(f'"{raw}"')
    except ValueError:
        return raw


@dataclass
class _Frame:
    key: Optional[str]
    kind: str  # "{" or "["


@dataclass
class _Entry:
    key: str
    value: str
    line: DiffLine
    frame: Optional[_Frame]  # innermost known container, None at an unknown level
    level: int


def _hunk_entries(hunk: DiffHunk) -> tuple[list[_Entry], set[int]]:
    """Walk the post-image lines of ``hunk`` and collect ``"key": "string"`` pairs.

    Containers opened inside the hunk are tracked exactly. Containers that
    were already open when the hunk starts are unknown; they are numbered
    by relative level (0 is the innermost at hunk start, -1 its parent ...).
    The returned set lists unknown levels proven not to be a ``scripts``
    object, i.e. levels holding a non-string value or array items.
    """
    stack: list[_Frame] = []
    level = 0
    not_scripts: set[int] = set()
    entries: list[_Entry] = []
    last_str: Optional[tuple[str, DiffLine]] = None
    pending: Optional[tuple[str, DiffLine]] = None

    def mark_here() -> None:
        if not stack:
            not_scripts.add(level)

    for line in hunk.lines:
        if line.tag is LineTag.REMOVED:
            continue
        for kind, text in _lex(line.content):
            if kind == "str":
                if pending is not None:
                    key, key_line = pending
                    frame = stack[-1] if stack else None
                    entries.append(_Entry(key, text, key_line, frame, level))
                    pending = None
                    last_str = None
                else:
                    last_str = (text, line)
            elif kind == ":":
                pending = last_str
                last_str = None
            elif kind in "{[":
                key = pending[0] if pending is not None else None
                mark_here()
                stack.append(_Frame(key, kind))
                pending = last_str = None
            elif kind in "}]":
                if last_str is not None:
                    # bare string directly before a closer is an array item
                    mark_here()
                if stack:
                    stack.pop()
                else:
                    level -= 1
                    # the container just closed was a value at the new level
                    not_scripts.add(level)
                pending = last_str = None
            elif kind == ",":
                if last_str is not None:
                    mark_here()
                pending = last_str = None
            else:  # scalar: number, true/false/null or junk
                mark_here()
                pending = last_str = None
    return entries, not_scripts


def extract_manifest_script_additions(fc: FileChange) -> list[ScriptAddition]:
    """Find ``"name": "command"`` entries added inside the ``scripts`` object.

    Entries whose container is unknown from the hunk context are kept with
    ``low_confidence`` set rather than dropped.
    """
    if fc.kind is not FileKind.MANIFEST:
        raise WrongFileKind(f"{fc.path} is {fc.kind.value}, not a package.json manifest")
    found: list[ScriptAddition] = []
    for hunk in fc.hunks:
        entries, not_scripts = _hunk_entries(hunk)
        for e in entries:
            if e.line.tag is not LineTag.ADDED or not e.key:
                continue
            if e.frame is not None:
                if e.frame.kind != "{" or e.frame.key != "scripts":
                    continue
                low = False
            else:
                if e.level in not_scripts:
                    continue
                low = True
            found.append(
                ScriptAddition(e.key, e.value, e.line.new_lineno, fc.path, low or hunk.truncated)
            )
    return found
