"""Synthetic corpora built to prescribed per-tier counts.

Used to check that the aggregation code reproduces known tables from
counts alone, without any network access or real repositories.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Optional

from tailguard.diff import file_change
from tailguard.model import Corpus, LibraryRecord, Outcome, PullRequest, Tier
from tailguard.stats import TierConfig

UNSAFE_LINES = (
    "const fs = require('fs');",
    "const http = require('http');",
    "const net = require('net');",
    "eval(code);",
    "const lib = require('./lib');",
    "fs.readFileSync(path);",
)
SAFE_LINE = "const answer = 42;"


@dataclass(frozen=True)
class TierCounts:
    libs: int
    unsafe_libs: int
    merged: int
    closed: int
    opened: int
    # merged+closed unsafe PRs whose text carries an attention keyword
    attention: int = 0
    # totals used only when building the full-size corpus
    update_related: int = 0
    prs: int = 0
    dependents_max: int = 1
    dependents_min: int = 1

    @property
    def unsafe_prs(self) -> int:
        return self.merged + self.closed + self.opened


REFERENCE_COUNTS = {
    Tier.TOP: TierCounts(500, 405, 4333, 1508, 326, 1406, 29283, 40941, 850362, 46221),
    Tier.MIDDLE: TierCounts(500, 402, 3704, 1242, 266, 1136, 28088, 39341, 1000, 572),
    Tier.BOTTOM: TierCounts(500, 220, 863, 173, 50, 149, 6458, 8134, 1, 1),
}


def split_counts(total: int, parts: int, rng: random.Random, skew: float = 1.2) -> list[int]:
    """Split ``total`` into ``parts`` positive integers with a heavy tail."""
    if parts == 0:
        if total:
            raise ValueError("cannot split a positive total into zero parts")
        return []
    if total < parts:
        raise ValueError(f"total {total} smaller than {parts} parts")
    weights = [rng.paretovariate(skew) for _ in range(parts)]
    scale = (total - parts) / sum(weights)
    out = [1 + int(w * scale) for w in weights]
    # hand out the remainder left by flooring, largest weights first
    short = total - sum(out)
    for i in sorted(range(parts), key=lambda i: -weights[i])[:short]:
        out[i] += 1
    return out


def _dependents(counts: TierCounts, n: int, rng: random.Random) -> list[int]:
    if n == 1 or counts.dependents_max == counts.dependents_min:
        return [counts.dependents_max] * n
    inner = sorted(
        (rng.randint(counts.dependents_min, counts.dependents_max) for _ in range(n - 2)),
        reverse=True,
    )
    return [counts.dependents_max, *inner, counts.dependents_min]


def build_corpus(
    counts: Optional[dict] = None,
    seed: int = 0,
    full: bool = False,
) -> Corpus:
    """Build a corpus whose tiers hit ``counts`` exactly.

    Without ``full`` only the unsafe PRs are materialised and libraries with
    none carry no PRs at all. With ``full`` every library also gets safe
    update-related PRs and non-update PRs up to the tier totals.
    """
    counts = counts or REFERENCE_COUNTS
    rng = random.Random(seed)
    unsafe_files = [(file_change("index.js", f"@@ -1,0 +1,1 @@\n+{line}\n"),) for line in UNSAFE_LINES]
    safe_files = (file_change("index.js", f"@@ -1,0 +1,1 @@\n+{SAFE_LINE}\n"),)
    doc_files = (file_change("README.md", "@@ -1,0 +1,1 @@\n+Usage notes\n"),)

    libraries: list[LibraryRecord] = []
    for tier, c in counts.items():
        deps = _dependents(c, c.libs, rng)
        per_unsafe = split_counts(c.unsafe_prs, c.unsafe_libs, rng) + [0] * (c.libs - c.unsafe_libs)
        outcomes = [Outcome.MERGED] * c.merged + [Outcome.CLOSED] * c.closed + [Outcome.OPENED] * c.opened
        rng.shuffle(outcomes)
        attention_left = c.attention
        safe_extra = extra_other = [0] * c.libs
        if full:
            safe_extra = split_counts(c.update_related - c.unsafe_prs + c.libs, c.libs, rng)
            safe_extra = [n - 1 for n in safe_extra]
            extra_other = split_counts(c.prs - c.update_related + c.libs, c.libs, rng)
            extra_other = [n - 1 for n in extra_other]
        k = 0
        for i in range(c.libs):
            name = f"{tier.value}-lib-{i:04d}"
            pulls = []
            for j in range(per_unsafe[i]):
                outcome = outcomes[k]
                title = "Update dependency handling"
                if outcome is not Outcome.OPENED and attention_left > 0:
                    title = "Breaking: update dependency handling"
                    attention_left -= 1
                pulls.append(PullRequest(
                    f"u{j}", name, title, "", outcome, unsafe_files[k % len(unsafe_files)],
                ))
                k += 1
            for j in range(safe_extra[i]):
                pulls.append(PullRequest(f"s{j}", name, "Bump version", "", Outcome.MERGED, safe_files))
            for j in range(extra_other[i]):
                pulls.append(PullRequest(f"d{j}", name, "Fix typo", "", Outcome.MERGED, doc_files))
            libraries.append(LibraryRecord(name, deps[i], tuple(pulls)))
        if attention_left:
            raise ValueError(f"{tier.value}: attention count exceeds merged+closed PRs")
    return Corpus(tuple(libraries))


def tier_config_for(counts: Optional[dict] = None) -> TierConfig:
    counts = counts or REFERENCE_COUNTS
    top = counts.get(Tier.TOP)
    return TierConfig(
        top_n=top.libs if top else 0,
        sample_per_tier=max(c.libs for c in counts.values()),
    )
