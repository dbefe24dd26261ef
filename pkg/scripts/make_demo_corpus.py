"""Regenerate the small demo corpus bundled with the package.

The corpus is deterministic: 10 libraries per tier plus a few unsampled
ones, with PR diffs that mix every unsafe feature, safe updates and
documentation-only changes.

    python3 scripts/make_demo_corpus.py [--out-dir src/tailguard/data]
"""

from __future__ import annotations

import argparse
import difflib
import json
import random
from pathlib import Path

from tailguard.diff import file_change
from tailguard.ingest import save_corpus
from tailguard.model import Corpus, LibraryRecord, Outcome, PullRequest

SNAPSHOT = "2024-01-15T00:00:00Z"

# (weight, snippet lines) for JavaScript changes; the weights shape the
# feature frequencies so require and new scripts dominate.
JS_SNIPPETS = [
    (9, ["const semver = require('semver');"]),
    (4, ["const { join } = require('path');", "const cfg = require('./config');"]),
    (3, ["const https = require('https');", "https.get(url, onResponse);"]),
    (2, ["const fs = require('fs');", "fs.writeFileSync(target, data);"]),
    (1, ["const net = require('net');", "const sock = net.connect(port);"]),
    (1, ["const fn = eval(source);"]),
    (4, ["export function clamp(v, lo, hi) {", "  return Math.min(hi, Math.max(lo, v));", "}"]),
]

SCRIPTS = [
    ("postinstall", "node scripts/setup.js"),
    ("prepare", "npm run build"),
    ("lint", "eslint ."),
    ("test:ci", "jest --ci"),
    ("build", "tsc -p ."),
]

TITLES = [
    ("Bump lodash to 4.17.21", ""),
    ("Fix crash when options are missing", "Resolves the issue reported by users."),
    ("Add support for custom resolvers", ""),
    ("Refactor loader to remove unnecessary copies", "Improves performance on large inputs."),
    ("Breaking: drop node 10", "This is a breaking change, needs attention."),
    ("Add unit test for parser", "Covers the CI failure."),
    ("Update documentation for the API", ""),
    ("Upgrade dependencies", ""),
    ("Chore: tidy things up", ""),
    ("Fix bug in retry logic", "Performance regression fixed as well."),
]

BASE_JS = ["'use strict';", "", "function main() {", "  return 1;", "}", "", "module.exports = main;"]


def _patch(old: list[str], new: list[str]) -> str:
    lines = difflib.unified_diff(old, new, lineterm="", n=3)
    body = [ln for ln in lines if not ln.startswith(("---", "+++"))]
    return "\n".join(body) + "\n"


def js_change(rng: random.Random, path: str) -> object:
    weights = [w for w, _ in JS_SNIPPETS]
    snippet = rng.choices([s for _, s in JS_SNIPPETS], weights=weights)[0]
    new = BASE_JS[:2] + snippet + BASE_JS[2:]
    return file_change(path, _patch(BASE_JS, new))


def manifest_change(rng: random.Random, add_script: bool) -> object:
    old = {"name": "demo", "version": "1.0.0", "scripts": {"test": "mocha"},
           "dependencies": {"lodash": "^4.17.20"}}
    new = json.loads(json.dumps(old))
    if add_script:
        name, cmd = rng.choice(SCRIPTS)
        new["scripts"][name] = cmd
    else:
        new["dependencies"]["lodash"] = "^4.17.21"
    old_lines = json.dumps(old, indent=2).splitlines()
    new_lines = json.dumps(new, indent=2).splitlines()
    return file_change("package.json", _patch(old_lines, new_lines))


def doc_change() -> object:
    return file_change("README.md", _patch(["# demo", ""], ["# demo", "", "Usage notes."]))


def make_pr(rng: random.Random, lib: str, number: int) -> PullRequest:
    files = []
    roll = rng.random()
    if roll < 0.15:
        files.append(doc_change())
    else:
        if rng.random() < 0.7:
            files.append(js_change(rng, rng.choice(["index.js", "lib/util.js", "src/main.js"])))
        if rng.random() < 0.5:
            files.append(manifest_change(rng, add_script=rng.random() < 0.55))
        if not files:
            files.append(manifest_change(rng, add_script=False))
        if rng.random() < 0.2:
            files.append(doc_change())
    title, body = rng.choice(TITLES)
    outcome = rng.choices(list(Outcome), weights=[7, 2, 1])[0]
    day = 1 + number % 28
    return PullRequest(
        f"{lib}#{number}", lib, title, body, outcome, tuple(files), f"2023-02-{day:02d}T12:00:00Z",
    )


def build(seed: int = 7) -> Corpus:
    rng = random.Random(seed)
    tiers = [
        ("top", [rng.randint(20_000, 900_000) for _ in range(10)], (6, 14)),
        ("mid", [rng.randint(500, 1000) for _ in range(10)], (3, 10)),
        ("tail", [1] * 10, (0, 4)),
        ("other", [rng.randint(2, 400) for _ in range(4)], (1, 3)),
    ]
    libs = []
    for prefix, deps, (lo, hi) in tiers:
        for i, d in enumerate(deps):
            name = f"{prefix}-pkg-{i:02d}"
            pulls = tuple(make_pr(rng, name, n) for n in range(1, rng.randint(lo, hi) + 1))
            libs.append(LibraryRecord(name, d, pulls))
    return Corpus(tuple(libs), SNAPSHOT)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out-dir", default=str(Path(__file__).resolve().parents[1] / "src/tailguard/data"))
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    corpus = build(args.seed)
    save_corpus(corpus, out / "demo_corpus.jsonl")
    cfg = {"top_n": 10, "middle_range": [500, 1000], "bottom_dependents": 1, "sample_per_tier": 10, "seed": 0}
    (out / "demo_tier_config.json").write_text(json.dumps(cfg, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {len(corpus.libraries)} libraries, {len(corpus)} PRs to {out}")


if __name__ == "__main__":
    main()
