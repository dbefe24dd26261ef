"""Domain types shared by every tailguard module.

All types are frozen dataclasses so they can be shared freely between
threads and used as dictionary keys where that makes sense.
"""

from __future__ import annotations

import posixpath
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional


class Outcome(str, Enum):
    MERGED = "merged"
    CLOSED = "closed"
    OPENED = "opened"


class FileKind(str, Enum):
    JAVASCRIPT = "javascript"
    MANIFEST = "manifest"
    MARKDOWN = "markdown"
    JSON_OTHER = "json_other"
    OTHER = "other"


class LineTag(str, Enum):
    CONTEXT = " "
    ADDED = "+"
    REMOVED = "-"


class UnsafeFeature(str, Enum):
    NEW_SCRIPTS = "new_scripts"
    HTTP_ACCESS = "http_access"
    FS_USE = "fs_use"
    NET_USE = "net_use"
    EVAL_USE = "eval_use"
    REQUIRE_USE = "require_use"

    @property
    def order(self) -> int:
        return _FEATURE_ORDER[self]


_FEATURE_ORDER = {f: i for i, f in enumerate(UnsafeFeature)}


class ChangeType(str, Enum):
    FEATURE = "feature"
    BUG = "bug"
    TEST_CASES = "test_cases"
    REFACTORING = "refactoring"
    DOCUMENTATION = "documentation"
    OTHER = "other"

    @property
    def label(self) -> str:
        return _CHANGE_TYPE_LABELS[self]

    @property
    def order(self) -> int:
        return _CHANGE_TYPE_ORDER[self]


_CHANGE_TYPE_LABELS = {
    ChangeType.FEATURE: "Feature",
    ChangeType.BUG: "Bug",
    ChangeType.TEST_CASES: "Test Cases",
    ChangeType.REFACTORING: "Refactoring",
    ChangeType.DOCUMENTATION: "Doc",
    ChangeType.OTHER: "Other",
}
_CHANGE_TYPE_ORDER = {t: i for i, t in enumerate(ChangeType)}


class Tier(str, Enum):
    TOP = "top"
    MIDDLE = "middle"
    BOTTOM = "bottom"
    UNSAMPLED = "unsampled"

    @property
    def label(self) -> str:
        return {
            Tier.TOP: "Top-500",
            Tier.MIDDLE: "Middle-500",
            Tier.BOTTOM: "Bottom-500",
            Tier.UNSAMPLED: "Unsampled",
        }[self]


SAMPLED_TIERS = (Tier.TOP, Tier.MIDDLE, Tier.BOTTOM)

JS_EXTENSIONS_STRICT = frozenset({".js"})
JS_EXTENSIONS_EXTENDED = frozenset({".js", ".jsx", ".mjs", ".cjs"})


def classify_file_change(path: str, strict: bool = False) -> FileKind:
    """Map a repo-relative path to its :class:`FileKind`.

    ``strict`` limits JavaScript to the literal ``.js`` extension; otherwise
    ``.jsx``, ``.mjs`` and ``.cjs`` count as well.
    """
    base = posixpath.basename(path.replace("\\", "/"))
    if base == "package.json":
        return FileKind.MANIFEST
    ext = posixpath.splitext(base)[1].lower()
    js_exts = JS_EXTENSIONS_STRICT if strict else JS_EXTENSIONS_EXTENDED
    if ext in js_exts:
        return FileKind.JAVASCRIPT
    if ext == ".md":
        return FileKind.MARKDOWN
    if ext == ".json":
        return FileKind.JSON_OTHER
    return FileKind.OTHER


@dataclass(frozen=True)
class DiffLine:
    tag: LineTag
    content: str
    new_lineno: Optional[int] = None


@dataclass(frozen=True)
class DiffHunk:
    old_start: int
    new_start: int
    lines: tuple[DiffLine, ...] = ()
    # set when the parser stopped early on a line-count inconsistency
    truncated: bool = False

    def added(self) -> list[DiffLine]:
        return [ln for ln in self.lines if ln.tag is LineTag.ADDED]


@dataclass(frozen=True)
class FileChange:
    path: str
    hunks: tuple[DiffHunk, ...] = ()
    # verbatim patch as served by the forge; not part of equality
    patch: Optional[str] = field(default=None, compare=False)

    @property
    def kind(self) -> FileKind:
        return classify_file_change(self.path)

    def kind_for(self, strict: bool) -> FileKind:
        return classify_file_change(self.path, strict=strict)

    @property
    def truncated(self) -> bool:
        return any(h.truncated for h in self.hunks)


@dataclass(frozen=True)
class PullRequest:
    id: str
    repo: str
    title: str
    body: str = ""
    outcome: Outcome = Outcome.OPENED
    files: tuple[FileChange, ...] = ()
    created_at: Optional[str] = None

    @property
    def text(self) -> str:
        return f"{self.title}\n{self.body}" if self.body else self.title


@dataclass(frozen=True)
class LibraryRecord:
    name: str
    dependents: int
    pulls: tuple[PullRequest, ...] = ()
    dependents_rank: Optional[int] = None

    def __post_init__(self):
        # canonical order keeps equality and serialization order-independent
        object.__setattr__(self, "pulls", tuple(sorted(self.pulls, key=lambda pr: pr.id)))


@dataclass(frozen=True)
class Corpus:
    libraries: tuple[LibraryRecord, ...] = ()
    snapshot_at: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(
            self, "libraries", tuple(sorted(self.libraries, key=lambda lib: lib.name))
        )

    def pull_requests(self):
        for lib in self.libraries:
            yield from lib.pulls

    def __len__(self) -> int:
        return sum(len(lib.pulls) for lib in self.libraries)


def validate_pull_request(pr: PullRequest) -> list[str]:
    """Return every invariant violation found in ``pr`` (empty when valid)."""
    problems: list[str] = []
    if not isinstance(pr.outcome, Outcome):
        problems.append(f"unknown outcome {pr.outcome!r}")
    for fc in pr.files:
        if not fc.path:
            problems.append("empty file path")
        for h_idx, hunk in enumerate(fc.hunks):
            where = f"{fc.path} hunk {h_idx}"
            last = None
            for line in hunk.lines:
                if line.tag is LineTag.REMOVED:
                    if line.new_lineno is not None:
                        problems.append(f"{where}: new_lineno on Removed line")
                    continue
                if line.new_lineno is None:
                    problems.append(f"{where}: missing new_lineno on {line.tag.name.title()} line")
                    continue
                if last is not None and line.new_lineno <= last:
                    problems.append(
                        f"{where}: non-increasing line numbers ({last} then {line.new_lineno})"
                    )
                last = line.new_lineno
    return problems


def validate_corpus(corpus: Corpus) -> list[str]:
    problems: list[str] = []
    ranks: dict[int, str] = {}
    for lib in corpus.libraries:
        if lib.dependents < 0:
            problems.append(f"{lib.name}: negative dependents")
        if lib.dependents_rank is not None:
            if lib.dependents_rank < 1:
                problems.append(f"{lib.name}: rank below 1")
            elif lib.dependents_rank in ranks:
                problems.append(
                    f"{lib.name}: rank {lib.dependents_rank} shared with {ranks[lib.dependents_rank]}"
                )
            else:
                ranks[lib.dependents_rank] = lib.name
        for pr in lib.pulls:
            problems.extend(f"{lib.name}#{pr.id}: {p}" for p in validate_pull_request(pr))
    return problems
