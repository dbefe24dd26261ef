from __future__ import annotations

import statistics
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from strategies import corpora
from tailguard.model import Corpus, LibraryRecord, Outcome, Tier
from tailguard.stats import (
    EmptyTierSample,
    MissingRank,
    PrStats,
    TierConfig,
    TierConfigError,
    analyze,
    assign_tier,
    per_lib_pr_stats,
    percent,
    rank_libraries,
    select_samples,
    truncate,
)


def spread(total: int, n: int) -> list[int]:
    q, r = divmod(total, n)
    return [q + 1] * r + [q] * (n - r)


@pytest.mark.parametrize(
    "total,expected",
    [(29283, "58.56"), (28088, "56.17"), (6458, "12.91"), (6167, "12.33"), (5212, "10.42"), (1086, "2.17")],
)
def test_reference_means_truncate(total, expected):
    stats = PrStats(tuple(spread(total, 500)))
    assert stats.display()[0] == expected


def test_truncation_not_rounding():
    # 58.566 would round to 58.57
    assert truncate(Fraction(58566, 1000), 2) == "58.56"
    assert truncate(Fraction(129, 10), 1) == "12.9"
    assert truncate(Fraction(5, 1), 2) == "5.00"
    assert truncate(0, 1) == "0.0"


@pytest.mark.parametrize(
    "count,total,expected",
    [(405, 500, 81), (402, 500, 80), (220, 500, 44), (4333, 6167, 70), (326, 6167, 5),
     (1, 8, 13), (1, 200, 1), (1, 201, 0), (0, 0, 0), (7, 7, 100)],
)
def test_percent_half_up(count, total, expected):
    assert percent(count, total) == expected


def test_pr_stats_values():
    s = PrStats((1, 2, 3, 10))
    assert s.mean == 4.0
    assert s.median == 2.5
    assert s.sd == pytest.approx(statistics.pstdev([1, 2, 3, 10]))
    assert s.sd_sample == pytest.approx(statistics.stdev([1, 2, 3, 10]))
    assert s.display() == ("4.00", "2.5", "3.53")


def test_per_lib_pr_stats_counter_and_empty():
    libs = [LibraryRecord("a", 1), LibraryRecord("b", 1)]
    assert per_lib_pr_stats(libs, counter=lambda lib: 3).total == 6
    with pytest.raises(EmptyTierSample):
        per_lib_pr_stats([])


@given(st.lists(st.integers(0, 500), min_size=1, max_size=40), st.integers(2, 6))
def test_scale_invariance(counts, k):
    # replicating every library k times leaves mean, median and SD unchanged
    a, b = PrStats(tuple(counts)), PrStats(tuple(counts * k))
    assert a.mean_exact == b.mean_exact
    assert a.median_exact == b.median_exact
    assert a.variance_exact() == b.variance_exact()


@given(st.lists(st.integers(0, 500), min_size=1, max_size=40), st.randoms())
def test_order_insensitive(counts, rnd):
    shuffled = list(counts)
    rnd.shuffle(shuffled)
    assert PrStats(tuple(counts)).display() == PrStats(tuple(shuffled)).display()


@given(st.lists(st.integers(0, 500), min_size=1, max_size=40))
def test_sd_matches_statistics(counts):
    assert PrStats(tuple(counts)).sd == pytest.approx(statistics.pstdev(counts), abs=1e-9)


# --- tiers --------------------------------------------------------------------


def lib(name, deps, rank=None):
    return LibraryRecord(name, deps, dependents_rank=rank)


@pytest.mark.parametrize(
    "deps,rank,tier",
    [
        (900_000, 1, Tier.TOP),
        (700, 500, Tier.TOP),   # rank wins over the middle range
        (1, 3, Tier.TOP),       # and over the bottom rule
        (700, 501, Tier.MIDDLE),
        (500, 900, Tier.MIDDLE),
        (1000, 900, Tier.MIDDLE),
        (1001, 900, Tier.UNSAMPLED),
        (499, 900, Tier.UNSAMPLED),
        (1, 9000, Tier.BOTTOM),
        (0, 9001, Tier.UNSAMPLED),
    ],
)
def test_assign_tier_precedence(deps, rank, tier):
    assert assign_tier(lib("x", deps, rank)) is tier


def test_assign_tier_requires_rank():
    with pytest.raises(MissingRank):
        assign_tier(lib("x", 10))


def test_rank_libraries_ties_by_name_and_population():
    ranked = rank_libraries([lib("b", 5), lib("a", 5), lib("c", 9)])
    assert {r.name: r.dependents_rank for r in ranked} == {"c": 1, "a": 2, "b": 3}
    ranked = rank_libraries([lib("a", 5)], population={"z": 100, "y": 50, "a": 7})
    assert ranked[0].dependents_rank == 3 and ranked[0].dependents == 7


def test_select_samples_caps_and_is_seeded():
    libs = rank_libraries([lib(f"l{i:02d}", 1) for i in range(30)] + [lib("big", 10**6)])
    cfg = TierConfig(top_n=1, sample_per_tier=10, seed=3)
    a = select_samples(libs, cfg)
    b = select_samples(libs, cfg)
    assert len(a[Tier.BOTTOM]) == 10 and a == b
    assert [x.name for x in a[Tier.TOP]] == ["big"]
    other = select_samples(libs, TierConfig(top_n=1, sample_per_tier=10, seed=4))
    assert other[Tier.BOTTOM] != a[Tier.BOTTOM]


def test_tier_config_validation(tmp_path):
    with pytest.raises(TierConfigError):
        TierConfig(top_n=0)
    with pytest.raises(TierConfigError):
        TierConfig.from_mapping({"middle_range": [10, 5]})
    with pytest.raises(TierConfigError):
        TierConfig.from_mapping({"colour": 1})
    with pytest.raises(TierConfigError):
        TierConfig.from_mapping({"top_n": "10"})
    assert TierConfig.from_mapping(TierConfig().to_dict()) == TierConfig()
    with pytest.raises(TierConfigError):
        TierConfig.load(tmp_path / "nope.json")


# --- whole-study invariants ----------------------------------------------------

CFG = TierConfig(top_n=3, sample_per_tier=5)


@settings(max_examples=100, deadline=None)
@given(corpora())
def test_study_identities(corpus):
    study = analyze(corpus, CFG)
    for ts in study.tier_stats():
        assert ts.identity_violations() == []
    for row in study.prevalence():
        assert 0 <= row.unsafe_lib_percent <= 100
    for row in study.acceptance():
        assert row.total <= row.update_related_count


@settings(max_examples=50, deadline=None)
@given(corpora())
def test_study_ignores_library_order(corpus):
    a = analyze(corpus, CFG)
    b = analyze(Corpus(tuple(reversed(corpus.libraries)), corpus.snapshot_at), CFG)
    assert a.prevalence() == b.prevalence()
    assert a.acceptance() == b.acceptance()
    assert a.attention() == b.attention()


def test_empty_corpus_study():
    study = analyze(Corpus(), CFG)
    assert [r.lib_count for r in study.prevalence()] == [0, 0, 0]
    assert all(r.total == 0 for r in study.acceptance())


def test_outcome_rows_from_synthetic():
    from tailguard.synthetic import build_corpus, tier_config_for

    study = analyze(build_corpus(), tier_config_for())
    top = study.acceptance()[0]
    assert (top.merged, top.closed, top.opened) == (4333, 1508, 326)
    assert [top.percent_of(o) for o in Outcome] == [70, 24, 5]
