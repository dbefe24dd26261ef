"""``tailguard`` command line: ingest, scan, rules, version.

Exit codes follow sysexits: 0 ok, 2 partial ingest, 64 usage, 65 bad
corpus data, 74 I/O failure, 78 bad configuration.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

from tailguard import __version__
from tailguard.classifier import KeywordTaxonomy, TaxonomyError
from tailguard.detector import DetectorOptions, RULE_CATALOG_VERSION, rule_catalog_document
from tailguard.ingest import (
    REPO_RE,
    TOKEN_ENV,
    CorpusError,
    FetchError,
    FetchPolicy,
    ForgeClient,
    IoFailure,
    load_corpus,
    load_population_csv,
    merge_corpora,
    resolve_token,
    save_corpus,
)
from tailguard.model import Corpus, LibraryRecord
from tailguard.report import FORMATS, ReportBundle, emit_report, figure_svg
from tailguard.stats import TierConfig, TierConfigError, analyze, pr_key

log = logging.getLogger("tailguard")

EX_OK = 0
EX_PARTIAL = 2
EX_USAGE = 64
EX_DATAERR = 65
EX_IOERR = 74
EX_CONFIG = 78


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EX_USAGE, f"{self.prog}: error: {message}\n")


def demo_paths() -> tuple[Path, Path]:
    data = resources.files("tailguard") / "data"
    return Path(str(data / "demo_corpus.jsonl")), Path(str(data / "demo_tier_config.json"))


# --- ingest ------------------------------------------------------------------


def _read_repo_specs(args) -> list[tuple[str, Optional[str], Optional[int]]]:
    specs: list[tuple[str, Optional[str], Optional[int]]] = [(r, None, None) for r in args.repos]
    if args.repos_file:
        try:
            text = Path(args.repos_file).read_text(encoding="utf-8")
        except OSError as exc:
            raise UsageError(f"cannot read repo list: {exc}") from exc
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = [p.strip() for p in line.split(",")]
            name = parts[1] if len(parts) > 1 and parts[1] else None
            try:
                deps = int(parts[2]) if len(parts) > 2 and parts[2] else None
            except ValueError as exc:
                raise UsageError(f"bad dependents in repo list line {line!r}") from exc
            specs.append((parts[0], name, deps))
    if not specs:
        raise UsageError("no repositories given")
    for repo, _, _ in specs:
        if not REPO_RE.match(repo):
            raise UsageError(f"not an owner/name repository id: {repo!r}")
    return specs


def cmd_ingest(args, transport=None) -> int:
    if not args.out:
        raise UsageError("--out is required")
    specs = _read_repo_specs(args)
    population = {}
    if args.tiers:
        try:
            population = load_population_csv(args.tiers).dependents
        except (CorpusError, ValueError) as exc:
            print(f"tailguard: {exc}", file=sys.stderr)
            return EX_CONFIG
    since = None
    if args.since:
        try:
            since = datetime.fromisoformat(args.since.replace("Z", "+00:00"))
        except ValueError as exc:
            raise UsageError(f"bad --since timestamp: {args.since}") from exc
        if since.tzinfo is None:
            since = since.replace(tzinfo=timezone.utc)
    try:
        policy = FetchPolicy(
            max_in_flight=args.max_in_flight, retry_budget=args.retry_budget,
            since=since, page_size=args.page_size,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc

    libraries = []
    failures = []
    with ForgeClient(resolve_token(args.token), policy, base_url=args.api_url, transport=transport) as client:
        for repo, name, deps in specs:
            name = name or repo.split("/", 1)[1]
            deps = deps if deps is not None else population.get(name, 0)
            try:
                pulls = tuple(client.fetch_repo_pull_requests(repo))
            except FetchError as exc:
                failures.append((repo, exc))
                print(f"tailguard: {repo}: {type(exc).__name__}: {exc}", file=sys.stderr)
                continue
            log.info("%s: %d pull requests", repo, len(pulls))
            libraries.append(LibraryRecord(name, deps, pulls))

    fetched = Corpus(tuple(libraries), datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ"))
    out = Path(args.out)
    try:
        if out.exists():
            existing = load_corpus(out).corpus
            fetched = merge_corpora(existing, fetched)
        save_corpus(fetched, out)
    except IoFailure as exc:
        print(f"tailguard: {exc}", file=sys.stderr)
        return EX_IOERR
    except CorpusError as exc:
        print(f"tailguard: existing corpus unreadable: {exc}", file=sys.stderr)
        return EX_DATAERR
    return EX_PARTIAL if failures else EX_OK


# --- scan ------------------------------------------------------------------


def cmd_scan(args) -> int:
    corpus_path = args.corpus
    tier_config_path = args.tier_config
    if args.demo:
        demo_corpus, demo_cfg = demo_paths()
        corpus_path = corpus_path or demo_corpus
        tier_config_path = tier_config_path or demo_cfg
    if not corpus_path:
        raise UsageError("a corpus path (or --demo) is required")

    try:
        taxonomy = KeywordTaxonomy.load(args.taxonomy) if args.taxonomy else KeywordTaxonomy.default()
        cfg = TierConfig.load(tier_config_path) if tier_config_path else TierConfig()
        population = load_population_csv(args.tiers) if args.tiers else None
    except (TaxonomyError, TierConfigError, CorpusError, ValueError) as exc:
        print(f"tailguard: configuration error: {exc}", file=sys.stderr)
        return EX_CONFIG

    try:
        loaded = load_corpus(corpus_path, strict=args.strict)
    except CorpusError as exc:
        print(f"tailguard: {exc}", file=sys.stderr)
        return EX_DATAERR
    for err in loaded.errors:
        print(f"tailguard: {corpus_path}:{err.line_no}: {err.message}", file=sys.stderr)

    options = DetectorOptions(raw_regex=args.raw_regex, strict_js=args.strict_js)
    study = analyze(
        loaded.corpus, cfg, taxonomy, options,
        population.dependents if population else None,
    )
    meta = {
        "snapshot_at": loaded.corpus.snapshot_at,
        "detector": {"raw_regex": options.raw_regex, "strict_js": options.strict_js},
        "population": (
            {"source": population.source, "sha256": population.sha256} if population else None
        ),
        "invalid_records": len(loaded.errors),
    }
    bundle = ReportBundle.from_study(study, taxonomy.digest, **meta)
    text = emit_report(bundle, args.format)
    try:
        if args.out:
            Path(args.out).write_text(text, encoding="utf-8")
        else:
            sys.stdout.write(text)
        if args.fig1_svg:
            Path(args.fig1_svg).write_text(figure_svg(bundle.fig1), encoding="utf-8")
        if args.reports:
            with open(args.reports, "w", encoding="utf-8") as fh:
                for tier, libs in study.samples.items():
                    for lib in libs:
                        for pr in lib.pulls:
                            rep = study.reports[pr_key(lib, pr)].to_dict()
                            rep = {"library": lib.name, "tier": tier.value, **rep}
                            fh.write(json.dumps(rep, sort_keys=True) + "\n")
    except OSError as exc:
        print(f"tailguard: {exc}", file=sys.stderr)
        return EX_IOERR
    return EX_OK


def cmd_rules(args) -> int:
    doc = rule_catalog_document()
    if args.format == "md":
        lines = [f"# Rule catalog v{doc['version']}", "", doc["note"], "",
                 "| id | feature | description |", "|---|---|---|"]
        lines += [f"| {r['id']} | {r['feature']} | {r['description']} |" for r in doc["rules"]]
        sys.stdout.write("\n".join(lines) + "\n")
    else:
        sys.stdout.write(json.dumps(doc, indent=2) + "\n")
    return EX_OK


def cmd_version(args) -> int:
    print(f"tailguard {__version__}")
    print(f"rule catalog {RULE_CATALOG_VERSION}")
    print(f"default taxonomy {KeywordTaxonomy.default().digest}")
    return EX_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tailguard", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    ing = sub.add_parser("ingest", help="fetch pull requests into a corpus file")
    ing.add_argument("repos", nargs="*", help="owner/name repositories")
    ing.add_argument("--repos-file", help="lines of owner/name[,library[,dependents]]")
    ing.add_argument("--out", help="corpus file to create or extend")
    ing.add_argument("--token", help=f"API token (default: ${TOKEN_ENV})")
    ing.add_argument("--tiers", help="CSV with name,dependents used to fill dependents")
    ing.add_argument("--since", help="only PRs created at or after this ISO timestamp")
    ing.add_argument("--max-in-flight", type=int, default=4)
    ing.add_argument("--retry-budget", type=int, default=3)
    ing.add_argument("--page-size", type=int, default=100)
    ing.add_argument("--api-url", default="https://api.github.com")

    sc = sub.add_parser("scan", help="detect, classify and tabulate a corpus")
    sc.add_argument("corpus", nargs="?", help="corpus file (JSON lines)")
    sc.add_argument("--demo", action="store_true", help="use the bundled demo corpus")
    sc.add_argument("--tiers", help="CSV with name,dependents for ecosystem-wide ranking")
    sc.add_argument("--tier-config", help="JSON tier thresholds")
    sc.add_argument("--taxonomy", help="JSON keyword taxonomy")
    sc.add_argument("--format", choices=FORMATS, default="md")
    sc.add_argument("--out", help="write the report here instead of stdout")
    sc.add_argument("--fig1-svg", help="also write the feature frequency chart as SVG")
    sc.add_argument("--reports", help="also write per-PR detector reports (JSON lines)")
    sc.add_argument("--raw-regex", action="store_true",
                    help="plain regexes: no identifier boundaries, no string masking")
    sc.add_argument("--strict-js", action="store_true", help="only .js files count as JavaScript")
    sc.add_argument("--strict", action="store_true", help="fail on the first invalid corpus record")

    ru = sub.add_parser("rules", help="print the detector rule catalog")
    ru.add_argument("--format", choices=("json", "md"), default="json")

    sub.add_parser("version", help="print tool, rule catalog and taxonomy versions")
    return p


def main(argv: Optional[Sequence[str]] = None, transport=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EX_USAGE
    try:
        if args.command == "ingest":
            return cmd_ingest(args, transport=transport)
        if args.command == "scan":
            return cmd_scan(args)
        if args.command == "rules":
            return cmd_rules(args)
        return cmd_version(args)
    except UsageError as exc:
        print(f"tailguard: {exc}", file=sys.stderr)
        return EX_USAGE


if __name__ == "__main__":
    sys.exit(main())
