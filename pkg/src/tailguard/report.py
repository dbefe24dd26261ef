"""Report bundle and its JSON, CSV and Markdown renderings.

The bundle stores counts only. Percentages and truncated means are derived
while rendering, from :meth:`ReportBundle.to_dict`, which every format
shares, so the three renderings always carry the same numbers.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Mapping, Optional
from xml.sax.saxutils import escape

from tailguard import __version__
from tailguard.detector import RULE_CATALOG_VERSION
from tailguard.model import SAMPLED_TIERS, Outcome, Tier, UnsafeFeature
from tailguard.stats import (
    AcceptanceRow,
    AttentionRow,
    PrevalenceRow,
    PrStats,
    Study,
    UpdateRow,
    rank_features,
)

REPORT_SCHEMA_VERSION = 1
FORMATS = ("json", "csv", "md")

FEATURE_LABELS = {
    UnsafeFeature.NEW_SCRIPTS: "new scripts",
    UnsafeFeature.HTTP_ACCESS: "http",
    UnsafeFeature.FS_USE: "fs",
    UnsafeFeature.NET_USE: "net",
    UnsafeFeature.EVAL_USE: "eval",
    UnsafeFeature.REQUIRE_USE: "require",
}


class UnknownFormat(ValueError):
    pass


@dataclass(frozen=True)
class ReportBundle:
    tiers: tuple[Tier, ...] = ()
    table1: tuple[UpdateRow, ...] = ()
    table2: tuple[PrevalenceRow, ...] = ()
    table3: tuple[AcceptanceRow, ...] = ()
    table4: tuple[AttentionRow, ...] = ()
    fig1: Mapping[UnsafeFeature, int] = field(default_factory=dict)
    metadata: Mapping[str, object] = field(default_factory=dict)

    @classmethod
    def from_study(cls, study: Study, taxonomy_hash: str, **metadata) -> "ReportBundle":
        meta = {
            "tool_version": __version__,
            "rule_catalog_version": RULE_CATALOG_VERSION,
            "taxonomy_hash": taxonomy_hash,
            "snapshot_at": None,
            "tier_config": study.config.to_dict(),
        }
        meta.update(metadata)
        return cls(
            SAMPLED_TIERS,
            tuple(study.update_related()),
            tuple(study.prevalence()),
            tuple(study.acceptance()),
            tuple(study.attention()),
            study.feature_frequency(),
            meta,
        )

    @classmethod
    def empty(cls, **metadata) -> "ReportBundle":
        meta = {
            "tool_version": __version__,
            "rule_catalog_version": RULE_CATALOG_VERSION,
            "taxonomy_hash": None,
            "snapshot_at": None,
        }
        meta.update(metadata)
        return cls(metadata=meta)

    def to_dict(self) -> dict:
        return {
            "report_schema_version": REPORT_SCHEMA_VERSION,
            "metadata": dict(self.metadata),
            "table1": [_table1_row(r) for r in self.table1],
            "table2": [_table2_row(r) for r in self.table2],
            "table3": [_table3_row(r) for r in self.table3],
            "table4": [_table4_row(r) for r in self.table4],
            "fig1": [
                {"feature": f.value, "label": FEATURE_LABELS[f], "prs": c}
                for f, c in rank_features(self.fig1)
            ] if self.fig1 else [],
        }


def _display(counts) -> tuple[str, str, str]:
    if not counts:
        return ("0.00", "0.0", "0.00")
    return PrStats(tuple(counts)).display()


def _table1_row(r: UpdateRow) -> dict:
    mean, med, sd = _display(r.per_lib)
    return {
        "tier": r.tier.value,
        "dependents_max": r.dependents_max,
        "dependents_min": r.dependents_min,
        "prs": r.pr_count,
        "update_related_prs": r.update_related_count,
        "libs": len(r.per_lib),
        "mean": mean,
        "median": med,
        "sd": sd,
    }


def _table2_row(r: PrevalenceRow) -> dict:
    mean, med, sd = _display(r.per_lib)
    return {
        "tier": r.tier.value,
        "libs": r.lib_count,
        "unsafe_libs": r.unsafe_lib_count,
        "unsafe_libs_percent": r.unsafe_lib_percent,
        "unsafe_prs": r.unsafe_pr_count,
        "mean": mean,
        "median": med,
        "sd": sd,
    }


def _table3_row(r: AcceptanceRow) -> dict:
    row: dict = {"tier": r.tier.value}
    for o in Outcome:
        row[o.value] = r.count(o)
        row[f"{o.value}_percent"] = r.percent_of(o)
    row["total"] = r.total
    row["update_related_prs"] = r.update_related_count
    row["share_of_update_related_percent"] = r.share_of_update_related
    return row


def _types(pairs) -> list[dict]:
    return [{"type": t.value, "label": t.label, "prs": c} for t, c in pairs]


def _table4_row(r: AttentionRow) -> dict:
    return {
        "tier": r.tier.value,
        "merged_closed_prs": r.merged_closed_total,
        "attention_prs": r.with_total,
        "attention_types": _types(r.with_types),
        "no_attention_prs": r.without_total,
        "no_attention_types": _types(r.without_types),
    }


# --- renderers -----------------------------------------------------------------


def to_json(bundle: ReportBundle) -> str:
    return json.dumps(bundle.to_dict(), indent=2, ensure_ascii=False) + "\n"


def cells(bundle: ReportBundle) -> list[tuple[str, str, str, object]]:
    """Flatten the bundle to ``(table, tier, field, value)`` cells."""
    d = bundle.to_dict()
    out: list[tuple[str, str, str, object]] = []
    for table in ("table1", "table2", "table3", "table4"):
        for row in d[table]:
            for key, value in row.items():
                if key == "tier":
                    continue
                if isinstance(value, list):
                    for item in value:
                        out.append((table, row["tier"], f"{key}.{item['type']}", item["prs"]))
                else:
                    out.append((table, row["tier"], key, value))
    for item in d["fig1"]:
        out.append(("fig1", "", item["feature"], item["prs"]))
    return out


def to_csv(bundle: ReportBundle) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["table", "tier", "field", "value"])
    for row in cells(bundle):
        w.writerow(row)
    return buf.getvalue()


def _n(value: int) -> str:
    return f"{value:,}"


def _md_table(header: list[str], rows: list[list[str]]) -> list[str]:
    lines = ["| " + " | ".join(header) + " |", "|" + "|".join("---" for _ in header) + "|"]
    lines += ["| " + " | ".join(r) + " |" for r in rows]
    return lines


def to_markdown(bundle: ReportBundle) -> str:
    d = bundle.to_dict()
    label = {t.value: t.label for t in Tier}
    out: list[str] = ["# Unsafe dependency update report", ""]
    meta = d["metadata"]
    out.append(
        f"tool {meta.get('tool_version')} | rules v{meta.get('rule_catalog_version')} | "
        f"taxonomy {meta.get('taxonomy_hash')} | snapshot {meta.get('snapshot_at')}"
    )
    out.append("")

    out += ["## Table 1: Update-related PRs per tier", ""]
    rows = [
        [label[r["tier"]], _n(r["dependents_max"]), _n(r["dependents_min"]), _n(r["prs"]),
         _n(r["update_related_prs"]), r["mean"], r["median"], r["sd"]]
        for r in d["table1"]
    ]
    if rows:
        rows.append(["**Total**", "", "", _n(sum(r["prs"] for r in d["table1"])),
                     _n(sum(r["update_related_prs"] for r in d["table1"])), "", "", ""])
    out += _md_table(["Tiers", "# dependents Max", "# dependents Min", "# PRs",
                      "# update related PRs", "Mean", "Median", "SD"], rows)

    out += ["", "## Table 2: Unsafe PRs and libraries per tier", ""]
    rows = [
        [label[r["tier"]], f"{_n(r['unsafe_libs'])} ({r['unsafe_libs_percent']}%)",
         _n(r["unsafe_prs"]), r["mean"], r["median"], r["sd"]]
        for r in d["table2"]
    ]
    if rows:
        rows.append(["**Total**", _n(sum(r["unsafe_libs"] for r in d["table2"])),
                     _n(sum(r["unsafe_prs"] for r in d["table2"])), "", "", ""])
    out += _md_table(["Tiers", "# unsafe lib", "# unsafe PRs", "Mean", "Median", "SD"], rows)

    out += ["", "## Table 3: Review outcome of unsafe PRs", ""]
    rows = []
    for r in d["table3"]:
        for o in Outcome:
            rows.append([label[r["tier"]], f"{o.value} PRs", _n(r[o.value]), f"{r[o.value + '_percent']}%"])
        rows.append([label[r["tier"]], "**Total**",
                     f"{_n(r['total'])} ({r['share_of_update_related_percent']}% of update related PRs)", ""])
    out += _md_table(["Tiers", "Outcome", "# unsafe PRs", "%"], rows)

    out += ["", "## Table 4: Attention keywords and change types of decided unsafe PRs", ""]

    def types_cell(items):
        return "<br>".join(f"{i['label']} ({_n(i['prs'])})" for i in items)

    rows = [
        [label[r["tier"]], _n(r["merged_closed_prs"]), _n(r["attention_prs"]),
         types_cell(r["attention_types"]), _n(r["no_attention_prs"]), types_cell(r["no_attention_types"])]
        for r in d["table4"]
    ]
    if rows:
        rows.append(["**Total**", _n(sum(r["merged_closed_prs"] for r in d["table4"])),
                     _n(sum(r["attention_prs"] for r in d["table4"])), "",
                     _n(sum(r["no_attention_prs"] for r in d["table4"])), ""])
    out += _md_table(["Tiers", "# merged & closed PRs", "# PRs (attention)", "PR types (#)",
                      "# PRs (no attention)", "PR types (#)"], rows)

    out += ["", "## Figure 1: PRs per unsafe feature", ""]
    out += _md_table(["Feature", "# PRs"], [[i["label"], _n(i["prs"])] for i in d["fig1"]])
    return "\n".join(out) + "\n"


def emit_report(bundle: ReportBundle, fmt: str) -> str:
    if fmt == "json":
        return to_json(bundle)
    if fmt == "csv":
        return to_csv(bundle)
    if fmt == "md":
        return to_markdown(bundle)
    raise UnknownFormat(f"unknown report format {fmt!r}; choose from {', '.join(FORMATS)}")


def figure_svg(freq: Mapping[UnsafeFeature, int], title: Optional[str] = None) -> str:
    """Horizontal bar chart of feature frequencies as a standalone SVG document."""
    ranked = rank_features(freq) if freq else [(f, 0) for f in UnsafeFeature]
    top = max((c for _, c in ranked), default=0) or 1
    bar_w, row_h, left = 360, 26, 110
    height = 40 + row_h * len(ranked)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{left + bar_w + 80}" height="{height}" '
        f'font-family="sans-serif" font-size="12">',
        f'<text x="10" y="20" font-size="14">{escape(title or "PRs per unsafe feature")}</text>',
    ]
    for i, (f, c) in enumerate(ranked):
        y = 32 + i * row_h
        w = round(bar_w * c / top)
        parts.append(f'<text x="{left - 8}" y="{y + 14}" text-anchor="end">{escape(FEATURE_LABELS[f])}</text>')
        parts.append(f'<rect x="{left}" y="{y}" width="{w}" height="{row_h - 8}" fill="#4a6fa5"/>')
        parts.append(f'<text x="{left + w + 6}" y="{y + 14}">{c:,}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"

