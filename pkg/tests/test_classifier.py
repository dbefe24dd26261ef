from __future__ import annotations

import json

import pytest
from hypothesis import given, strategies as st

from tailguard.classifier import (
    KeywordTaxonomy,
    TaxonomyError,
    classify_change_types,
    classify_pull_request,
    has_attention_keywords,
    lemmatize,
    normalize_text,
)
from tailguard.diff import file_change
from tailguard.model import ChangeType as T, PullRequest

FEATURE, BUG, TEST, REFACTOR, DOC, OTHER = (
    T.FEATURE, T.BUG, T.TEST_CASES, T.REFACTORING, T.DOCUMENTATION, T.OTHER,
)


def pr(title: str, body: str = "", paths=("index.js",)) -> PullRequest:
    files = tuple(file_change(p, "@@ -1,0 +1,1 @@\n+x\n") for p in paths)
    return PullRequest("1", "demo", title, body, files=files)


# (title, body, files, expected types)
LABELLED = [
    ("Bump lodash from 4.17.20 to 4.17.21", "", ("package.json",), {FEATURE, OTHER}),
    ("Add retry option", "", ("lib/retry.js",), {FEATURE}),
    ("Upgrades dependencies", "", ("index.js",), {FEATURE}),
    ("Integrate with the new API", "", ("src/api.js",), {FEATURE}),
    ("Improve startup time", "", ("index.js",), {FEATURE}),
    ("feat: support ESM", "", ("index.mjs",), {FEATURE}),
    ("Fixing the bug!!!", "", ("index.js",), {BUG}),
    ("Resolve crash on empty input", "", ("lib/a.js",), {BUG}),
    ("Avoid double callback", "", ("lib/cb.js",), {BUG}),
    ("Closes #12", "", ("index.js",), {BUG}),
    ("Handle null", "This solves the issue from last week.", ("index.js",), {BUG}),
    ("Tests for parser", "", ("test/parser.js",), {TEST}),
    ("Run on continuous integration", "", (".github/workflows/ci.yml",), {TEST}),
    ("New unit test", "", ("test/a.js",), {TEST}),
    ("Set up CI", "", ("index.js",), {TEST}),
    ("Refactor the loader", "", ("lib/loader.js",), {REFACTOR}),
    ("Remove unnecessary copies", "", ("index.js",), {REFACTOR}),
    ("Optimise hot path", "", ("index.js",), {REFACTOR}),
    ("Better performance for big files", "", ("index.js",), {REFACTOR}),
    ("Documentation for options", "", ("index.js",), {DOC}),
    ("Tweak wording", "", ("README.md",), {DOC}),
    ("Docs: usage", "", ("docs/usage.md",), {DOC}),
    ("Tidy up", "", ("tsconfig.json",), {OTHER}),
    ("Tidy up", "", ("package.json", ".eslintrc.json"), {OTHER}),
    ("Misc changes", "", ("index.js",), {OTHER}),
    ("Chore", "", (), {OTHER}),
    ("Fix typo in README", "", ("README.md",), {BUG, DOC}),
    ("Add tests and fix the bug", "", ("lib/x.js", "test/x.js"), {FEATURE, TEST, BUG}),
    ("Refactor, update docs", "", ("lib/x.js", "CHANGES.md"), {REFACTOR, FEATURE, DOC}),
    ("Update version", "Removes an unnecessary dependency.", ("package.json",), {FEATURE, REFACTOR, OTHER}),
]


def test_labelled_set_covers_all_types():
    assert len(LABELLED) >= 30
    seen = set().union(*(exp for *_, exp in LABELLED))
    assert seen == set(T)
    assert sum(1 for *_, exp in LABELLED if len(exp) > 1) >= 4


@pytest.mark.parametrize("title,body,paths,expected", LABELLED)
def test_labelled(title, body, paths, expected):
    assert classify_change_types(pr(title, body, paths)) == expected


@pytest.mark.parametrize(
    "text,tokens",
    [
        ("Fixing the bug!!!", ["fix", "the", "bug"]),
        ("Upgrades dependencies", ["upgrade", "dependency"]),
        ("BREAKING: drop node 10", ["break", "drop", "node", "10"]),
        ("snake_case-words", ["snake", "case", "word"]),
        ("", []),
    ],
)
def test_normalize_text(text, tokens):
    assert normalize_text(text) == tokens


@pytest.mark.parametrize(
    "word,lemma",
    [
        ("updated", "update"), ("closing", "close"), ("resolves", "resolve"),
        ("fixes", "fix"), ("improvements", "improvement"), ("supported", "support"),
        ("stopped", "stop"), ("tests", "test"), ("this", "this"), ("status", "status"),
        ("created", "create"), ("embedded", "embed"), ("bundling", "bundle"),
    ],
)
def test_lemmatize(word, lemma):
    assert lemmatize(word) == lemma


@given(st.text(max_size=80))
def test_normalize_idempotent(text):
    once = normalize_text(text)
    assert normalize_text(" ".join(once)) == once


@given(st.text(max_size=60), st.lists(st.sampled_from(["a.js", "b.md", "c.json", "package.json", "d.ts"]), max_size=4))
def test_every_pr_gets_a_type(title, paths):
    assert classify_change_types(pr(title, "", tuple(paths)))


@pytest.mark.parametrize(
    "title,body,expected",
    [
        ("BREAKING: drop node 10", "", True),
        ("Needs attention", "", True),
        ("Speed up", "Performance regression fixed", True),
        ("Fix typo", "", False),
        ("Break loop early", "", True),
    ],
)
def test_attention(title, body, expected):
    assert has_attention_keywords(pr(title, body)) is expected


def test_classify_pull_request_combines_both():
    res = classify_pull_request(pr("Breaking: refactor the API"))
    assert res.attention and res.types == {REFACTOR}


def test_custom_taxonomy(tmp_path):
    cfg = tmp_path / "tax.json"
    cfg.write_text(json.dumps({"Bug": ["oops"], "attention": ["urgent"]}))
    tax = KeywordTaxonomy.load(cfg)
    assert classify_change_types(pr("Oops"), tax) == {BUG}
    # untouched types keep their defaults
    assert classify_change_types(pr("Add thing"), tax) == {FEATURE}
    assert has_attention_keywords(pr("URGENT"), tax)
    assert not has_attention_keywords(pr("breaking"), tax)
    assert tax.digest != KeywordTaxonomy.default().digest


@pytest.mark.parametrize("data", [{"nonsense": ["x"]}, {"bug": "fix"}, ["bug"]])
def test_bad_taxonomy(data):
    with pytest.raises(TaxonomyError):
        KeywordTaxonomy.from_mapping(data)


def test_bad_taxonomy_file(tmp_path):
    with pytest.raises(TaxonomyError):
        KeywordTaxonomy.load(tmp_path / "missing.json")


def test_default_digest_stable():
    assert KeywordTaxonomy.default().digest == KeywordTaxonomy.default().digest
    assert KeywordTaxonomy.from_mapping(KeywordTaxonomy.default().to_dict()) == KeywordTaxonomy.default()
