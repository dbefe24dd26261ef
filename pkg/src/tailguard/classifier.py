"""Keyword taxonomy classification of pull-request change types.

Matching runs on normalized text: lowercased, punctuation replaced by
whitespace, each token passed through :func:`lemmatize`. Keywords are
normalized the same way, so ``"fixing"`` and ``"fix"`` are the same key.

The lemmatizer is deliberately tiny and rule based. Rules, applied
repeatedly until the token stops changing:

1. tokens in ``KEEP`` and tokens of three letters or fewer are left alone;
2. ``-ies`` becomes ``-y`` (``dependencies`` -> ``dependency``);
3. ``-xes``, ``-zes``, ``-ches``, ``-shes``, ``-sses`` lose ``-es``;
4. other ``-s`` is dropped unless the word ends in ``ss``, ``us`` or ``is``;
5. ``-ing`` and ``-ed`` are dropped when a stem of three or more letters
   remains (not for ``-eed``); then a doubled final consonant other than
   ``l``, ``s``, ``z``, ``f`` is undoubled when three letters remain, or,
   failing that, a silent ``e`` is restored after the endings in
   ``E_RESTORE`` (``updat`` -> ``update``, ``clos`` -> ``close``).
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from tailguard.model import ChangeType, FileKind, PullRequest

# Tokens the suffix rules would mangle.
KEEP = frozenset({
    "this", "does", "goes", "always", "alias", "canvas", "perhaps", "whereas",
    "series", "species", "news", "lens", "ios", "macos", "https", "express",
    "string", "during", "thing", "nothing", "something", "anything", "everything",
    "spring", "bring", "sibling", "ceiling", "focus", "caches", "bias", "embed",
})
IRREGULAR = {
    "caches": "cache",
    "focused": "focus",
    "focusing": "focus",
    "created": "create",
    "creating": "create",
    "controlled": "control",
    "controlling": "control",
}

# Stem endings after which a dropped -ed/-ing leaves a silent e behind.
E_RESTORE = (
    "uir", "pir", "rad", "lud", "cod", "vid", "cid", "sid",
    "iz", "ur", "os", "as", "us", "rs", "ns", "ut", "rg", "ang",
    "ac", "uc", "rc", "v",
)
# as above but only when the preceding letter is a consonant
E_RESTORE_AFTER_CONSONANT = ("at", "is", "in", "il", "am", "um", "ok", "ak", "ik", "ar", "l")

_VOWELS = set("aeiouy")
_NON_WORD = re.compile(r"[\W_]+")


def _restore_e(stem: str) -> str:
    if stem.endswith(E_RESTORE):
        return stem + "e"
    for end in E_RESTORE_AFTER_CONSONANT:
        if stem.endswith(end):
            before = stem[-len(end) - 1] if len(stem) > len(end) else ""
            if before and before not in _VOWELS and not (end == "l" and before == "l"):
                return stem + "e"
    return stem


def _lemma_step(tok: str) -> str:
    if tok in IRREGULAR:
        return IRREGULAR[tok]
    if tok in KEEP or len(tok) <= 3 or not tok.isalpha():
        return tok
    if tok.endswith("ies") and len(tok) > 4:
        return tok[:-3] + "y"
    if tok.endswith(("xes", "zes", "ches", "shes", "sses")):
        return tok[:-2]
    if tok.endswith("s"):
        if tok.endswith(("ss", "us", "is")):
            return tok
        return tok[:-1]
    for suffix in ("ing", "ed"):
        if tok.endswith(suffix) and len(tok) - len(suffix) >= 3:
            if suffix == "ed" and tok.endswith("eed"):
                return tok
            stem = tok[: -len(suffix)]
            if (
                stem[-1] == stem[-2]
                and stem[-1] not in _VOWELS
                and stem[-1] not in "lszf"
            ):
                return stem[:-1] if len(stem) > 3 else stem
            return _restore_e(stem)
    return tok


def lemmatize(tok: str) -> str:
    while True:
        nxt = _lemma_step(tok)
        if nxt == tok:
            return tok
        tok = nxt


def normalize_text(text: str) -> list[str]:
    """Lowercase, drop punctuation and symbols, split, lemmatize."""
    if not text:
        return []
    return [lemmatize(t) for t in _NON_WORD.sub(" ", text.lower()).split()]


# --- taxonomy ---------------------------------------------------------------

DEFAULT_KEYWORDS: dict[ChangeType, tuple[str, ...]] = {
    ChangeType.FEATURE: (
        "integrate", "add", "feat", "update", "upgrade", "support", "dependency",
        "feature", "improve", "version", "automate", "compatibility", "bundle",
        "improvement", "bump",
    ),
    ChangeType.BUG: (
        "avoid", "fix", "resolve", "close", "bug", "solve", "solution", "issue", "fixing",
    ),
    ChangeType.TEST_CASES: ("test case", "test", "unit test", "CI", "continuous integration"),
    ChangeType.REFACTORING: ("remove", "unnecessary", "refactor", "performance", "optimise"),
    ChangeType.DOCUMENTATION: ("documentation", "doc"),
    ChangeType.OTHER: (),
}
DEFAULT_ATTENTION = ("attention", "breaking", "performance")

_TYPE_ALIASES = {}
for _t in ChangeType:
    for _alias in (_t.value, _t.name, _t.label, _t.label.replace(" ", "")):
        _TYPE_ALIASES[_alias.lower()] = _t
_TYPE_ALIASES["refactor"] = ChangeType.REFACTORING
_TYPE_ALIASES["docs"] = ChangeType.DOCUMENTATION
_TYPE_ALIASES["tests"] = ChangeType.TEST_CASES


class TaxonomyError(ValueError):
    pass


def _phrase(keyword: str) -> tuple[str, ...]:
    return tuple(normalize_text(keyword))


@dataclass(frozen=True)
class KeywordTaxonomy:
    """Normalized keyword phrases per change type plus attention keywords."""

    keywords: Mapping[ChangeType, tuple[tuple[str, ...], ...]]
    attention: tuple[tuple[str, ...], ...]
    source: str = field(default="builtin", compare=False)

    @classmethod
    def from_lists(
        cls,
        keywords: Mapping[ChangeType, Iterable[str]],
        attention: Iterable[str],
        source: str = "builtin",
    ) -> "KeywordTaxonomy":
        norm = {}
        for t in ChangeType:
            phrases = []
            for kw in keywords.get(t, ()):
                p = _phrase(kw)
                if p and p not in phrases:
                    phrases.append(p)
            norm[t] = tuple(phrases)
        att = []
        for kw in attention:
            p = _phrase(kw)
            if p and p not in att:
                att.append(p)
        return cls(norm, tuple(att), source)

    @classmethod
    def default(cls) -> "KeywordTaxonomy":
        return cls.from_lists(DEFAULT_KEYWORDS, DEFAULT_ATTENTION)

    @classmethod
    def from_mapping(cls, data: Mapping, source: str = "config") -> "KeywordTaxonomy":
        """Build from ``{"feature": [...], ..., "attention": [...]}``.

        Types missing from the mapping keep their default lists; unknown
        type names raise :class:`TaxonomyError`.
        """
        if not isinstance(data, Mapping):
            raise TaxonomyError("taxonomy config must be a JSON object")
        keywords: dict[ChangeType, Sequence[str]] = dict(DEFAULT_KEYWORDS)
        attention: Sequence[str] = DEFAULT_ATTENTION
        for name, words in data.items():
            if not isinstance(words, list) or not all(isinstance(w, str) for w in words):
                raise TaxonomyError(f"{name!r}: expected a list of strings")
            if name.lower() == "attention":
                attention = words
                continue
            t = _TYPE_ALIASES.get(name.lower())
            if t is None:
                raise TaxonomyError(f"unknown change type {name!r}")
            keywords[t] = words
        return cls.from_lists(keywords, attention, source)

    @classmethod
    def load(cls, path) -> "KeywordTaxonomy":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise TaxonomyError(f"cannot read taxonomy {path}: {exc}") from exc
        return cls.from_mapping(data, source=str(path))

    def to_dict(self) -> dict:
        out = {t.value: [" ".join(p) for p in self.keywords[t]] for t in ChangeType}
        out["attention"] = [" ".join(p) for p in self.attention]
        return out

    @property
    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:12]


def _contains(tokens: Sequence[str], phrase: tuple[str, ...]) -> bool:
    n = len(phrase)
    if n == 1:
        return phrase[0] in tokens
    return any(tuple(tokens[i : i + n]) == phrase for i in range(len(tokens) - n + 1))


@dataclass(frozen=True)
class ClassificationResult:
    pr_id: str
    types: frozenset
    attention: bool


def classify_tokens(
    tokens: Sequence[str], kinds: Sequence[FileKind], taxonomy: KeywordTaxonomy
) -> frozenset:
    types = {
        t for t, phrases in taxonomy.keywords.items()
        if any(_contains(tokens, p) for p in phrases)
    }
    if FileKind.MARKDOWN in kinds:
        types.add(ChangeType.DOCUMENTATION)
    json_only = bool(kinds) and all(k in (FileKind.JSON_OTHER, FileKind.MANIFEST) for k in kinds)
    if json_only or not types:
        types.add(ChangeType.OTHER)
    return frozenset(types)


def classify_change_types(pr: PullRequest, taxonomy: KeywordTaxonomy | None = None) -> frozenset:
    taxonomy = taxonomy or KeywordTaxonomy.default()
    tokens = normalize_text(pr.text)
    return classify_tokens(tokens, [fc.kind for fc in pr.files], taxonomy)


def has_attention_keywords(pr: PullRequest, taxonomy: KeywordTaxonomy | None = None) -> bool:
    taxonomy = taxonomy or KeywordTaxonomy.default()
    tokens = normalize_text(pr.text)
    return any(_contains(tokens, p) for p in taxonomy.attention)


def classify_pull_request(pr: PullRequest, taxonomy: KeywordTaxonomy | None = None) -> ClassificationResult:
    taxonomy = taxonomy or KeywordTaxonomy.default()
    tokens = normalize_text(pr.text)
    return ClassificationResult(
        pr.id,
        classify_tokens(tokens, [fc.kind for fc in pr.files], taxonomy),
        any(_contains(tokens, p) for p in taxonomy.attention),
    )
