"""Tier assignment and the aggregate tables.

Counts are kept as integers throughout. Display values are derived with
exact rational arithmetic: means, medians and standard deviations are
truncated (not rounded) to their display precision, percentages are
rounded half up per cell.
"""

from __future__ import annotations

import json
import math
import random
from collections import Counter
from dataclasses import dataclass, field, replace
from decimal import Decimal, localcontext
from fractions import Fraction
from pathlib import Path
from statistics import median
from typing import Callable, Iterable, Mapping, Optional, Sequence

from tailguard.classifier import ClassificationResult, KeywordTaxonomy, classify_pull_request
from tailguard.detector import DetectorOptions, UnsafeReport, scan_pull_request
from tailguard.model import (
    SAMPLED_TIERS,
    ChangeType,
    Corpus,
    LibraryRecord,
    Outcome,
    PullRequest,
    Tier,
    UnsafeFeature,
)


class MissingRank(ValueError):
    pass


class EmptyTierSample(ValueError):
    pass


class TierConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TierConfig:
    top_n: int = 500
    middle_low: int = 500
    middle_high: int = 1000
    bottom_dependents: int = 1
    sample_per_tier: int = 500
    seed: int = 0

    def __post_init__(self):
        if self.top_n < 1:
            raise TierConfigError("top_n must be >= 1")
        if self.middle_low > self.middle_high:
            raise TierConfigError("middle range is empty")
        if self.sample_per_tier < 1:
            raise TierConfigError("sample_per_tier must be >= 1")

    @classmethod
    def from_mapping(cls, data: Mapping) -> "TierConfig":
        if not isinstance(data, Mapping):
            raise TierConfigError("tier config must be a JSON object")
        data = dict(data)
        if "middle_range" in data:
            low, high = data.pop("middle_range")
            data["middle_low"], data["middle_high"] = low, high
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise TierConfigError(f"unknown tier config keys: {sorted(unknown)}")
        if not all(isinstance(v, int) and not isinstance(v, bool) for v in data.values()):
            raise TierConfigError("tier config values must be integers")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "TierConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise TierConfigError(f"cannot read tier config {path}: {exc}") from exc
        return cls.from_mapping(data)

    def to_dict(self) -> dict:
        return {
            "top_n": self.top_n,
            "middle_range": [self.middle_low, self.middle_high],
            "bottom_dependents": self.bottom_dependents,
            "sample_per_tier": self.sample_per_tier,
            "seed": self.seed,
        }


# --- ranking, tiers and sampling --------------------------------------------


def rank_libraries(
    libraries: Sequence[LibraryRecord],
    population: Optional[Mapping[str, int]] = None,
) -> list[LibraryRecord]:
    """Attach 1-based ranks by descending dependents (ties broken by name).

    ``population`` holds dependents counts for the wider ecosystem; when
    given, ranks are positions within it and its counts win over the ones
    stored on the records.
    """
    pop = dict(population or {})
    for lib in libraries:
        pop.setdefault(lib.name, lib.dependents)
    order = sorted(pop.items(), key=lambda kv: (-kv[1], kv[0]))
    rank = {name: i for i, (name, _) in enumerate(order, start=1)}
    return [replace(lib, dependents=pop[lib.name], dependents_rank=rank[lib.name]) for lib in libraries]


def assign_tier(lib: LibraryRecord, cfg: TierConfig = TierConfig()) -> Tier:
    if lib.dependents_rank is None:
        raise MissingRank(f"{lib.name} has no dependents rank")
    if lib.dependents_rank <= cfg.top_n:
        return Tier.TOP
    if cfg.middle_low <= lib.dependents <= cfg.middle_high:
        return Tier.MIDDLE
    if lib.dependents == cfg.bottom_dependents:
        return Tier.BOTTOM
    return Tier.UNSAMPLED


def select_samples(
    libraries: Sequence[LibraryRecord], cfg: TierConfig = TierConfig()
) -> dict[Tier, tuple[LibraryRecord, ...]]:
    """Group ranked libraries by tier, capping each tier at ``sample_per_tier``.

    Oversized tiers are down-sampled with a seeded RNG so runs repeat.
    """
    groups: dict[Tier, list[LibraryRecord]] = {t: [] for t in SAMPLED_TIERS}
    for lib in libraries:
        tier = assign_tier(lib, cfg)
        if tier is not Tier.UNSAMPLED:
            groups[tier].append(lib)
    rng = random.Random(cfg.seed)
    out = {}
    for tier in SAMPLED_TIERS:
        libs = sorted(groups[tier], key=lambda lib: lib.name)
        if len(libs) > cfg.sample_per_tier:
            libs = sorted(rng.sample(libs, cfg.sample_per_tier), key=lambda lib: lib.name)
        out[tier] = tuple(libs)
    return out


# --- number formatting -------------------------------------------------------


def truncate(value, places: int) -> str:
    """Format a non-negative number cut (not rounded) to ``places`` decimals."""
    if isinstance(value, Decimal):
        q = int((value * (10 ** places)).to_integral_value(rounding="ROUND_FLOOR"))
    else:
        q = math.floor(Fraction(value) * 10 ** places)
    if places == 0:
        return str(q)
    whole, frac = divmod(q, 10 ** places)
    return f"{whole}.{frac:0{places}d}"


def percent(count: int, total: int) -> int:
    """Integer percentage, rounded half up; 0 for an empty denominator."""
    if total == 0:
        return 0
    return math.floor(Fraction(100 * count, total) + Fraction(1, 2))


@dataclass(frozen=True)
class PrStats:
    """Per-library PR count summary with exact and display forms."""

    counts: tuple[int, ...]

    @property
    def n(self) -> int:
        return len(self.counts)

    @property
    def total(self) -> int:
        return sum(self.counts)

    @property
    def mean_exact(self) -> Fraction:
        return Fraction(self.total, self.n)

    @property
    def median_exact(self) -> Fraction:
        return Fraction(median(self.counts))

    def variance_exact(self, sample: bool = False) -> Fraction:
        mu = self.mean_exact
        ss = sum((c - mu) ** 2 for c in self.counts)
        den = self.n - 1 if sample else self.n
        return ss / den if den > 0 else Fraction(0)

    def sd_decimal(self, sample: bool = False) -> Decimal:
        var = self.variance_exact(sample)
        with localcontext() as ctx:
            ctx.prec = 50
            return (Decimal(var.numerator) / Decimal(var.denominator)).sqrt()

    @property
    def mean(self) -> float:
        return float(self.mean_exact)

    @property
    def median(self) -> float:
        return float(self.median_exact)

    @property
    def sd(self) -> float:
        return float(self.sd_decimal())

    @property
    def sd_sample(self) -> float:
        return float(self.sd_decimal(sample=True))

    def display(self, sample_sd: bool = False) -> tuple[str, str, str]:
        return (
            truncate(self.mean_exact, 2),
            truncate(self.median_exact, 1),
            truncate(self.sd_decimal(sample_sd), 2),
        )


def per_lib_pr_stats(libs: Sequence, counter: Optional[Callable[[object], int]] = None) -> PrStats:
    """Summarize per-library PR counts.

    ``libs`` is either a sequence of libraries together with ``counter``
    (library -> count), or a sequence of plain integer counts.
    """
    counts = tuple(counter(lib) for lib in libs) if counter else tuple(int(c) for c in libs)
    if not counts:
        raise EmptyTierSample("no libraries in tier sample")
    return PrStats(counts)


# --- per-tier tables ---------------------------------------------------------


def pr_key(lib: LibraryRecord, pr: PullRequest) -> tuple[str, str]:
    return (lib.name, pr.id)


@dataclass(frozen=True)
class UpdateRow:
    """Update-related PR counts for one tier."""

    tier: Tier
    dependents_max: int
    dependents_min: int
    pr_count: int
    update_related_count: int
    per_lib: tuple[int, ...]


@dataclass(frozen=True)
class PrevalenceRow:
    tier: Tier
    lib_count: int
    unsafe_lib_count: int
    unsafe_pr_count: int
    per_lib: tuple[int, ...]

    @property
    def unsafe_lib_percent(self) -> int:
        return percent(self.unsafe_lib_count, self.lib_count)


@dataclass(frozen=True)
class AcceptanceRow:
    tier: Tier
    merged: int
    closed: int
    opened: int
    update_related_count: int

    @property
    def total(self) -> int:
        return self.merged + self.closed + self.opened

    def percent_of(self, outcome: Outcome) -> int:
        return percent(self.count(outcome), self.total)

    def count(self, outcome: Outcome) -> int:
        return {Outcome.MERGED: self.merged, Outcome.CLOSED: self.closed, Outcome.OPENED: self.opened}[outcome]

    @property
    def share_of_update_related(self) -> int:
        return percent(self.total, self.update_related_count)


def _ranked_types(counter: Counter) -> tuple[tuple[ChangeType, int], ...]:
    return tuple(sorted(
        ((t, c) for t, c in counter.items() if c > 0),
        key=lambda tc: (-tc[1], tc[0].order),
    ))


@dataclass(frozen=True)
class AttentionRow:
    tier: Tier
    merged_closed_total: int
    with_total: int
    with_types: tuple[tuple[ChangeType, int], ...]
    without_total: int
    without_types: tuple[tuple[ChangeType, int], ...]


def update_related_summary(samples, reports) -> list[UpdateRow]:
    rows = []
    for tier in SAMPLED_TIERS:
        libs = samples.get(tier, ())
        per_lib = tuple(
            sum(1 for pr in lib.pulls if reports[pr_key(lib, pr)].update_related) for lib in libs
        )
        deps = [lib.dependents for lib in libs]
        rows.append(UpdateRow(
            tier,
            max(deps, default=0),
            min(deps, default=0),
            sum(len(lib.pulls) for lib in libs),
            sum(per_lib),
            per_lib,
        ))
    return rows


def prevalence_summary(samples, reports) -> list[PrevalenceRow]:
    rows = []
    for tier in SAMPLED_TIERS:
        libs = samples.get(tier, ())
        per_lib = tuple(sum(1 for pr in lib.pulls if reports[pr_key(lib, pr)].unsafe) for lib in libs)
        rows.append(PrevalenceRow(
            tier, len(libs), sum(1 for c in per_lib if c > 0), sum(per_lib), per_lib,
        ))
    return rows


def acceptance_summary(samples, reports) -> list[AcceptanceRow]:
    rows = []
    for tier in SAMPLED_TIERS:
        outcomes: Counter = Counter()
        related = 0
        for lib in samples.get(tier, ()):
            for pr in lib.pulls:
                rep = reports[pr_key(lib, pr)]
                related += rep.update_related
                if rep.unsafe:
                    outcomes[pr.outcome] += 1
        rows.append(AcceptanceRow(
            tier, outcomes[Outcome.MERGED], outcomes[Outcome.CLOSED], outcomes[Outcome.OPENED], related,
        ))
    return rows


def feature_frequency(reports: Iterable[UnsafeReport]) -> dict[UnsafeFeature, int]:
    """Number of PRs exhibiting each feature (presence, not hit counts)."""
    counts = {f: 0 for f in UnsafeFeature}
    for rep in reports:
        for f in rep.features_present:
            counts[f] += 1
    return counts


def rank_features(freq: Mapping[UnsafeFeature, int]) -> list[tuple[UnsafeFeature, int]]:
    return sorted(freq.items(), key=lambda fc: (-fc[1], fc[0].order))


def attention_breakdown(samples, reports, classifications) -> list[AttentionRow]:
    rows = []
    for tier in SAMPLED_TIERS:
        with_types: Counter = Counter()
        without_types: Counter = Counter()
        n_with = n_without = 0
        for lib in samples.get(tier, ()):
            for pr in lib.pulls:
                key = pr_key(lib, pr)
                if not reports[key].unsafe or pr.outcome is Outcome.OPENED:
                    continue
                cls = classifications[key]
                if cls.attention:
                    n_with += 1
                    with_types.update(cls.types)
                else:
                    n_without += 1
                    without_types.update(cls.types)
        rows.append(AttentionRow(
            tier, n_with + n_without,
            n_with, _ranked_types(with_types),
            n_without, _ranked_types(without_types),
        ))
    return rows


@dataclass(frozen=True)
class TierStats:
    tier: Tier
    lib_count: int
    update_related_pr_count: int
    unsafe_lib_count: int
    unsafe_pr_count: int
    update_related_per_lib: Optional[PrStats]
    unsafe_per_lib: Optional[PrStats]
    outcome_counts: Mapping[Outcome, int]
    feature_counts: Mapping[UnsafeFeature, int]
    attention: AttentionRow

    def identity_violations(self) -> list[str]:
        bad = []
        if self.unsafe_lib_count > self.lib_count:
            bad.append("unsafe libs exceed libs")
        if self.unsafe_pr_count > self.update_related_pr_count:
            bad.append("unsafe PRs exceed update-related PRs")
        if sum(self.outcome_counts.values()) != self.unsafe_pr_count:
            bad.append("outcomes do not sum to unsafe PRs")
        a = self.attention
        mc = self.outcome_counts[Outcome.MERGED] + self.outcome_counts[Outcome.CLOSED]
        if not (a.with_total + a.without_total == a.merged_closed_total == mc):
            bad.append("attention split does not match merged+closed")
        return bad


# --- whole-study pipeline ----------------------------------------------------


@dataclass
class Study:
    config: TierConfig
    samples: dict[Tier, tuple[LibraryRecord, ...]]
    reports: dict[tuple[str, str], UnsafeReport]
    classifications: dict[tuple[str, str], ClassificationResult] = field(default_factory=dict)

    def sampled_reports(self, tier: Optional[Tier] = None) -> list[UnsafeReport]:
        tiers = [tier] if tier else SAMPLED_TIERS
        return [
            self.reports[pr_key(lib, pr)]
            for t in tiers for lib in self.samples.get(t, ()) for pr in lib.pulls
        ]

    def update_related(self) -> list[UpdateRow]:
        return update_related_summary(self.samples, self.reports)

    def prevalence(self) -> list[PrevalenceRow]:
        return prevalence_summary(self.samples, self.reports)

    def acceptance(self) -> list[AcceptanceRow]:
        return acceptance_summary(self.samples, self.reports)

    def attention(self) -> list[AttentionRow]:
        return attention_breakdown(self.samples, self.reports, self.classifications)

    def feature_frequency(self) -> dict[UnsafeFeature, int]:
        return feature_frequency(self.sampled_reports())

    def tier_stats(self) -> list[TierStats]:
        out = []
        rows = zip(self.update_related(), self.prevalence(), self.acceptance(), self.attention())
        for upd, prev, acc, att in rows:
            out.append(TierStats(
                upd.tier,
                prev.lib_count,
                upd.update_related_count,
                prev.unsafe_lib_count,
                prev.unsafe_pr_count,
                PrStats(upd.per_lib) if upd.per_lib else None,
                PrStats(prev.per_lib) if prev.per_lib else None,
                {o: acc.count(o) for o in Outcome},
                feature_frequency(self.sampled_reports(upd.tier)),
                att,
            ))
        return out


def analyze(
    corpus: Corpus,
    cfg: TierConfig = TierConfig(),
    taxonomy: Optional[KeywordTaxonomy] = None,
    options: DetectorOptions = DetectorOptions(),
    population: Optional[Mapping[str, int]] = None,
) -> Study:
    """Rank, tier, sample, scan and classify a corpus."""
    taxonomy = taxonomy or KeywordTaxonomy.default()
    libs = list(corpus.libraries)
    if population is not None or any(lib.dependents_rank is None for lib in libs):
        libs = rank_libraries(libs, population)
    samples = select_samples(libs, cfg)
    reports = {}
    classifications = {}
    for tier in SAMPLED_TIERS:
        for lib in samples[tier]:
            for pr in lib.pulls:
                key = pr_key(lib, pr)
                rep = scan_pull_request(pr, options)
                reports[key] = rep
                if rep.unsafe:
                    classifications[key] = classify_pull_request(pr, taxonomy)
    return Study(cfg, samples, reports, classifications)
