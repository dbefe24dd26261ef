"""Rebuild the study tables from a synthetic corpus at the reference counts.

    python3 scripts/reproduce_tables.py            # unsafe PRs only (fast)
    python3 scripts/reproduce_tables.py --full     # also every other PR
    python3 scripts/reproduce_tables.py --format json --out tables.json
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

from tailguard.classifier import KeywordTaxonomy
from tailguard.report import FORMATS, ReportBundle, emit_report
from tailguard.stats import analyze
from tailguard.synthetic import build_corpus, tier_config_for

log = logging.getLogger("reproduce")


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--full", action="store_true",
                    help="materialise safe and non-update PRs too (88,416 PRs in all)")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--format", choices=FORMATS, default="md")
    ap.add_argument("--out")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    t0 = time.perf_counter()
    corpus = build_corpus(seed=args.seed, full=args.full)
    t1 = time.perf_counter()
    study = analyze(corpus, tier_config_for())
    t2 = time.perf_counter()
    log.info("built %d PRs in %.2fs, analysed in %.2fs", len(corpus), t1 - t0, t2 - t1)
    for ts in study.tier_stats():
        for problem in ts.identity_violations():
            log.error("%s: %s", ts.tier.value, problem)

    text = emit_report(
        ReportBundle.from_study(study, KeywordTaxonomy.default().digest, corpus="synthetic", full=args.full),
        args.format,
    )
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
