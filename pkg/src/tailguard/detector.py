"""Line-level regex detection of the six unsafe dependency-update features.

Features: new manifest scripts; http/http2/https access; fs use; net use;
eval; require. Each JavaScript rule is a plain line regex written from
those one-line descriptions and listed in :data:`RULE_CATALOG`, so reports
can cite what fired.

Default mode adds two precision refinements over a plain regex:

* identifier boundaries, so ``evaluate(`` or ``myrequire(`` do not count;
* string masking, so ``"require('x')"`` inside a literal does not count.

``raw=True`` turns both off.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

from tailguard.diff import extract_manifest_script_additions
from tailguard.model import (
    FileKind,
    LineTag,
    PullRequest,
    UnsafeFeature,
)

RULE_CATALOG_VERSION = "1"

EXCERPT_LIMIT = 120

HTTP_MODULES = ("http", "http2", "https")
FS_MODULES = ("fs", "fs/promises")
NET_MODULES = ("net",)


@dataclass(frozen=True)
class Rule:
    id: str
    feature: UnsafeFeature
    description: str


RULE_CATALOG: tuple[Rule, ...] = (
    Rule("TG-SCRIPTS-1", UnsafeFeature.NEW_SCRIPTS,
         'added "name": "command" entry inside the "scripts" object of a package.json'),
    Rule("TG-HTTP-1", UnsafeFeature.HTTP_ACCESS,
         "require/import of module http, http2 or https (node: prefix allowed)"),
    Rule("TG-HTTP-2", UnsafeFeature.HTTP_ACCESS,
         "member call on a receiver named http, https or http2, e.g. https.get("),
    Rule("TG-FS-1", UnsafeFeature.FS_USE,
         "require/import of module fs or fs/promises (node: prefix allowed)"),
    Rule("TG-FS-2", UnsafeFeature.FS_USE,
         "member call on a receiver named fs, e.g. fs.writeFileSync("),
    Rule("TG-NET-1", UnsafeFeature.NET_USE,
         "require/import of module net (node: prefix allowed)"),
    Rule("TG-NET-2", UnsafeFeature.NET_USE,
         "member call on a receiver named net, e.g. net.connect("),
    Rule("TG-EVAL-1", UnsafeFeature.EVAL_USE, "call of eval(...)"),
    Rule("TG-EVAL-2", UnsafeFeature.EVAL_USE, "Function constructor: new Function(...)"),
    Rule("TG-REQUIRE-1", UnsafeFeature.REQUIRE_USE, "call of require(...)"),
)


def rule_catalog_document() -> dict:
    return {
        "version": RULE_CATALOG_VERSION,
        "note": "line regexes written from the six feature descriptions",
        "rules": [
            {"id": r.id, "feature": r.feature.value, "description": r.description}
            for r in RULE_CATALOG
        ],
    }


# --- comments and strings ----------------------------------------------------

_QUOTES = "'\"`"


def strip_line_comments(line: str) -> str:
    """Remove ``//`` comments and complete ``/* */`` spans outside quotes.

    Only the given line is considered: an unterminated ``/*`` is left alone.
    """
    out: list[str] = []
    i, n = 0, len(line)
    quote = None
    while i < n:
        ch = line[i]
        if quote:
            out.append(ch)
            if ch == "\\" and i + 1 < n:
                out.append(line[i + 1])
                i += 2
                continue
            if ch == quote:
                quote = None
            i += 1
            continue
        if ch in _QUOTES:
            quote = ch
            out.append(ch)
            i += 1
        elif line.startswith("//", i):
            break
        elif line.startswith("/*", i):
            end = line.find("*/", i + 2)
            if end < 0:
                out.append(line[i:])
                break
            i = end + 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


def mask_strings(line: str) -> str:
    """Blank the contents of quoted literals, keeping the quotes and the length."""
    out = list(line)
    quote = None
    i, n = 0, len(line)
    while i < n:
        ch = line[i]
        if quote:
            if ch == "\\":
                out[i] = " "
                if i + 1 < n:
                    out[i + 1] = " "
                i += 2
                continue
            if ch == quote:
                quote = None
            else:
                out[i] = " "
        elif ch in _QUOTES:
            quote = ch
        i += 1
    return "".join(out)


# --- line rules ----------------------------------------------------------------

_B = r"(?<![\w$])"  # identifier boundary on the left
_SPEC = r"""(['"`])(?:node:)?([^'"`]*)\1"""

_PATTERNS = {
    True: {  # raw
        "require": re.compile(r"require\s*\("),
        "eval": re.compile(r"eval\s*\("),
        "new_function": re.compile(r"new\s+Function\s*\("),
        "member": re.compile(r"(http2|https|http|fs|net)\s*\.\s*[\w$.]+\s*\("),
    },
    False: {
        "require": re.compile(_B + r"require\s*\("),
        "eval": re.compile(_B + r"eval\s*\("),
        "new_function": re.compile(_B + r"new\s+Function\s*\("),
        # receiver must be a bare identifier: ``this.fs.x(`` is someone else's fs
        "member": re.compile(r"(?<![\w$.])(http2|https|http|fs|net)\s*\.\s*[\w$.]+\s*\("),
    },
}
_MODULE_SOURCES = (
    re.compile(r"require\s*\(\s*" + _SPEC),
    re.compile(r"\bfrom\s*" + _SPEC),
    re.compile(r"\bimport\s*\(\s*" + _SPEC),
    re.compile(r"\bimport\s*" + _SPEC),
)
_MEMBER_FEATURE = {
    "http": UnsafeFeature.HTTP_ACCESS,
    "https": UnsafeFeature.HTTP_ACCESS,
    "http2": UnsafeFeature.HTTP_ACCESS,
    "fs": UnsafeFeature.FS_USE,
    "net": UnsafeFeature.NET_USE,
}


def _module_feature(name: str):
    if name in HTTP_MODULES:
        return UnsafeFeature.HTTP_ACCESS
    if name in FS_MODULES:
        return UnsafeFeature.FS_USE
    if name in NET_MODULES:
        return UnsafeFeature.NET_USE
    return None


def find_line_matches(line: str, raw: bool = False) -> list[tuple[UnsafeFeature, str]]:
    """Return ``(feature, matched_text)`` pairs for one comment-stripped JS line.

    Several matches of one feature may be returned; callers dedupe.
    """
    pats = _PATTERNS[raw]
    # masked has identical length, so offsets found there index into ``line``
    masked = line if raw else mask_strings(line)
    found: list[tuple[UnsafeFeature, str]] = []

    for m in pats["require"].finditer(masked):
        found.append((UnsafeFeature.REQUIRE_USE, line[m.start():m.end()]))
    for key in ("eval", "new_function"):
        for m in pats[key].finditer(masked):
            found.append((UnsafeFeature.EVAL_USE, line[m.start():m.end()]))
    for m in pats["member"].finditer(masked):
        found.append((_MEMBER_FEATURE[m.group(1)], line[m.start():m.end()]))

    for pat in _MODULE_SOURCES:
        for m in pat.finditer(line):
            # the keyword itself must be live code, not inside a literal
            if not raw and (masked[m.start()] == " " or not _left_boundary(masked, m.start())):
                continue
            feature = _module_feature(m.group(2))
            if feature is not None:
                found.append((feature, line[m.start():m.end()]))
    return found


def _left_boundary(text: str, pos: int) -> bool:
    return pos == 0 or not (text[pos - 1].isalnum() or text[pos - 1] in "_$")


def detect_features_in_line(line: str, file_kind: FileKind, raw: bool = False) -> set[UnsafeFeature]:
    """Features whose rules fire on one added, comment-stripped line.

    Manifest lines never produce per-line features; new scripts are found
    structurally by :func:`scan_pull_request`.
    """
    if file_kind is not FileKind.JAVASCRIPT:
        return set()
    return {f for f, _ in find_line_matches(line, raw=raw)}


# --- pull-request scan -----------------------------------------------------------


@dataclass(frozen=True)
class DetectorOptions:
    raw_regex: bool = False
    strict_js: bool = False


@dataclass(frozen=True)
class FeatureHit:
    feature: UnsafeFeature
    file_path: str
    new_lineno: int
    matched_text: str
    low_confidence: bool = False

    def sort_key(self):
        return (self.file_path, self.new_lineno, self.feature.order)

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.value,
            "file_path": self.file_path,
            "new_lineno": self.new_lineno,
            "matched_text": self.matched_text,
            "low_confidence": self.low_confidence,
        }


@dataclass(frozen=True)
class UnsafeReport:
    pr_id: str
    update_related: bool
    hits: tuple[FeatureHit, ...] = ()
    features_present: frozenset = field(default_factory=frozenset)

    @property
    def unsafe(self) -> bool:
        return bool(self.hits)

    def to_dict(self) -> dict:
        return {
            "pr_id": self.pr_id,
            "update_related": self.update_related,
            "unsafe": self.unsafe,
            "features_present": sorted(f.value for f in self.features_present),
            "hits": [h.to_dict() for h in self.hits],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))


def is_update_related(pr: PullRequest, strict_js: bool = False) -> bool:
    return any(
        fc.kind_for(strict_js) in (FileKind.JAVASCRIPT, FileKind.MANIFEST) for fc in pr.files
    )


def _excerpt(matched: str, original: str) -> str:
    text = matched if matched in original else original
    return text[:EXCERPT_LIMIT]


def scan_pull_request(pr: PullRequest, options: DetectorOptions = DetectorOptions()) -> UnsafeReport:
    if not is_update_related(pr, options.strict_js):
        return UnsafeReport(pr.id, False)

    hits: dict[tuple[str, int, UnsafeFeature], FeatureHit] = {}
    for fc in pr.files:
        kind = fc.kind_for(options.strict_js)
        if kind is FileKind.JAVASCRIPT:
            for hunk in fc.hunks:
                for line in hunk.lines:
                    if line.tag is not LineTag.ADDED:
                        continue
                    stripped = strip_line_comments(line.content)
                    for feature, text in find_line_matches(stripped, raw=options.raw_regex):
                        k = (fc.path, line.new_lineno, feature)
                        if k not in hits:
                            hits[k] = FeatureHit(
                                feature, fc.path, line.new_lineno,
                                _excerpt(text, line.content), hunk.truncated,
                            )
        elif kind is FileKind.MANIFEST:
            lines_by_no = {
                ln.new_lineno: ln.content
                for h in fc.hunks for ln in h.lines if ln.tag is LineTag.ADDED
            }
            for add in extract_manifest_script_additions(fc):
                k = (fc.path, add.new_lineno, UnsafeFeature.NEW_SCRIPTS)
                if k not in hits:
                    original = lines_by_no.get(add.new_lineno, "")
                    hits[k] = FeatureHit(
                        UnsafeFeature.NEW_SCRIPTS, fc.path, add.new_lineno,
                        original.strip()[:EXCERPT_LIMIT], add.low_confidence,
                    )

    ordered = tuple(sorted(hits.values(), key=FeatureHit.sort_key))
    return UnsafeReport(pr.id, True, ordered, frozenset(h.feature for h in ordered))

