"""Summary tables, reference comparison, and report serialization.

The reporting layer does its arithmetic in decimal, not binary floating
point.  The embedded reference table stores two-decimal values exactly,
and averaging them must reproduce the printed averages down to the
half-cent case (the gap column averages to exactly 1.425, which rounds
up to 1.43); float64 cannot promise that, decimal can.

Display rounding is half-up to two decimals and happens only at format
time; every stored value keeps full precision.  Delta columns follow
the reference layout's own convention: they are differences of the
displayed two-decimal values, which is what makes the printed overall
deltas (+0.11, -0.23, -0.33) come out exactly.
"""

import json
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal

from fedprompt.errors import ContractError
from fedprompt.evaluation import EvalResult

TWO_PLACES = Decimal("0.01")


def dec(x) -> Decimal:
    """Exact decimal image of a number; floats go through their repr."""
    if isinstance(x, Decimal):
        return x
    if isinstance(x, int):
        return Decimal(x)
    return Decimal(repr(float(x)))


def round2(x) -> Decimal:
    """Half-up rounding to two decimals, the display convention."""
    return dec(x).quantize(TWO_PLACES, rounding=ROUND_HALF_UP)


def fmt2(x, signed: bool = False) -> str:
    r = round2(x)
    if signed:
        return f"+{r}" if r >= 0 else str(r)
    return str(r)


@dataclass(frozen=True)
class ReferenceRow:
    """One dataset's published accuracies: the original large-scale runs
    and the reproduction they were compared against."""

    name: str
    orig_base: Decimal
    ours_base: Decimal
    orig_new: Decimal
    ours_new: Decimal


# Published per-dataset base/new accuracies (percent).  These are exact
# two-decimal constants; all derived table values must reproduce from
# them by decimal arithmetic.
REFERENCE_FIXTURE: tuple[ReferenceRow, ...] = tuple(
    ReferenceRow(name, Decimal(ob), Decimal(ub), Decimal(on), Decimal(un))
    for name, ob, ub, on, un in [
        ("caltech101", "97.2", "96.84", "95.2", "95.41"),
        ("oxford_flowers", "70.8", "71.60", "78.7", "78.30"),
        ("fgvc_aircraft", "31.5", "31.63", "35.7", "35.57"),
        ("oxford_pets", "94.9", "94.95", "94.5", "94.57"),
        ("food101", "89.9", "89.82", "91.6", "91.65"),
        ("dtd", "62.5", "62.62", "61.7", "60.51"),
    ]
)

# The original report states its average gap as computed from rounded
# column averages (76.23 - 74.47), not from per-dataset gaps, so it is
# pinned here rather than derived.
ORIG_AVERAGE_GAP = Decimal("1.76")


@dataclass(frozen=True)
class SummaryTable:
    """Per-dataset decimal accuracies plus unrounded averages."""

    names: tuple[str, ...]
    base: tuple[Decimal, ...]
    new: tuple[Decimal, ...]
    gaps: tuple[Decimal, ...]
    base_avg: Decimal
    new_avg: Decimal
    gap_avg: Decimal


def summarize(results) -> SummaryTable:
    """Column averages over per-dataset results.

    The gap average is the mean of the per-dataset gaps, never the
    difference of the rounded column averages; rounding is left to the
    display layer.
    """
    rows = list(results)
    if not rows:
        raise ContractError("summarize needs at least one result")
    names, base, new, gaps = [], [], [], []
    for r in rows:
        names.append(r.dataset_name if isinstance(r, EvalResult) else r.name)
        b = dec(r.base_acc if isinstance(r, EvalResult) else r.ours_base)
        n = dec(r.new_acc if isinstance(r, EvalResult) else r.ours_new)
        base.append(b)
        new.append(n)
        gaps.append(n - b)
    count = len(rows)
    return SummaryTable(
        tuple(names),
        tuple(base),
        tuple(new),
        tuple(gaps),
        sum(base) / count,
        sum(new) / count,
        sum(gaps) / count,
    )


@dataclass(frozen=True)
class ComparisonTable:
    """Ours-versus-original layout: per-dataset rows and the overall block."""

    rows: tuple[dict, ...]  # name, orig/ours base + delta, orig/ours new + delta, gap
    overall: dict  # orig, ours, delta entries for base, new, gap


def compare_to_reference(summary: SummaryTable, fixture=REFERENCE_FIXTURE) -> ComparisonTable:
    """Delta table of a summary against the published reference.

    Dataset names must match the fixture exactly; deltas are computed on
    two-decimal displayed values, matching the reference's printed
    arithmetic.
    """
    by_name = {row.name: row for row in fixture}
    rows = []
    for i, name in enumerate(summary.names):
        if name not in by_name:
            raise KeyError(f"dataset {name!r} not in the reference fixture")
        ref = by_name[name]
        ours_base, ours_new = round2(summary.base[i]), round2(summary.new[i])
        rows.append(
            {
                "name": name,
                "orig_base": round2(ref.orig_base),
                "ours_base": ours_base,
                "delta_base": ours_base - round2(ref.orig_base),
                "orig_new": round2(ref.orig_new),
                "ours_new": ours_new,
                "delta_new": ours_new - round2(ref.orig_new),
                "gap": round2(summary.gaps[i]),
            }
        )
    orig = summarize(
        [
            ReferenceRow(r.name, r.orig_base, r.orig_base, r.orig_new, r.orig_new)
            for r in fixture
            if r.name in set(summary.names)
        ]
    )
    orig_gap = ORIG_AVERAGE_GAP if len(summary.names) == len(fixture) else orig.gap_avg
    overall = {
        "orig_base": round2(orig.base_avg),
        "ours_base": round2(summary.base_avg),
        "orig_new": round2(orig.new_avg),
        "ours_new": round2(summary.new_avg),
        "orig_gap": round2(orig_gap),
        "ours_gap": round2(summary.gap_avg),
    }
    overall["delta_base"] = overall["ours_base"] - overall["orig_base"]
    overall["delta_new"] = overall["ours_new"] - overall["orig_new"]
    overall["delta_gap"] = overall["ours_gap"] - overall["orig_gap"]
    return ComparisonTable(tuple(rows), overall)


def fixture_results() -> list[ReferenceRow]:
    """The reproduction side of the embedded reference, ready to summarize."""
    return list(REFERENCE_FIXTURE)


def summary_csv(summary: SummaryTable) -> str:
    lines = ["dataset,base,new,gap"]
    for i, name in enumerate(summary.names):
        lines.append(
            f"{name},{fmt2(summary.base[i])},{fmt2(summary.new[i])},"
            f"{fmt2(summary.gaps[i], signed=True)}"
        )
    lines.append(
        f"average,{fmt2(summary.base_avg)},{fmt2(summary.new_avg)},"
        f"{fmt2(summary.gap_avg, signed=True)}"
    )
    return "\n".join(lines) + "\n"


def summary_json(summary: SummaryTable) -> str:
    payload = {
        "datasets": [
            {
                "name": name,
                "base": float(summary.base[i]),
                "new": float(summary.new[i]),
                "gap": float(summary.gaps[i]),
                "display": {
                    "base": fmt2(summary.base[i]),
                    "new": fmt2(summary.new[i]),
                    "gap": fmt2(summary.gaps[i], signed=True),
                },
            }
            for i, name in enumerate(summary.names)
        ],
        "average": {
            "base": float(summary.base_avg),
            "new": float(summary.new_avg),
            "gap": float(summary.gap_avg),
            "display": {
                "base": fmt2(summary.base_avg),
                "new": fmt2(summary.new_avg),
                "gap": fmt2(summary.gap_avg, signed=True),
            },
        },
    }
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def comparison_csv(table: ComparisonTable) -> str:
    lines = ["dataset,orig_base,ours_base,delta_base,orig_new,ours_new,delta_new,gap"]
    for row in table.rows:
        lines.append(
            f"{row['name']},{fmt2(row['orig_base'])},{fmt2(row['ours_base'])},"
            f"{fmt2(row['delta_base'], signed=True)},{fmt2(row['orig_new'])},"
            f"{fmt2(row['ours_new'])},{fmt2(row['delta_new'], signed=True)},"
            f"{fmt2(row['gap'], signed=True)}"
        )
    o = table.overall
    lines.append(
        f"average,{fmt2(o['orig_base'])},{fmt2(o['ours_base'])},"
        f"{fmt2(o['delta_base'], signed=True)},{fmt2(o['orig_new'])},"
        f"{fmt2(o['ours_new'])},{fmt2(o['delta_new'], signed=True)},"
        f"{fmt2(o['ours_gap'], signed=True)}"
    )
    return "\n".join(lines) + "\n"


def overall_text(table: ComparisonTable) -> str:
    """Three-line overall comparison in the reference layout."""
    o = table.overall
    lines = [
        f"{'':10s} {'base':>8s} {'new':>8s} {'gap':>8s}",
        f"{'original':10s} {fmt2(o['orig_base']):>8s} {fmt2(o['orig_new']):>8s} "
        f"{fmt2(o['orig_gap'], signed=True):>8s}",
        f"{'ours':10s} {fmt2(o['ours_base']):>8s} {fmt2(o['ours_new']):>8s} "
        f"{fmt2(o['ours_gap'], signed=True):>8s}",
        f"{'delta':10s} {fmt2(o['delta_base'], signed=True):>8s} "
        f"{fmt2(o['delta_new'], signed=True):>8s} {fmt2(o['delta_gap'], signed=True):>8s}",
    ]
    return "\n".join(lines) + "\n"


def eval_result_json(result: EvalResult, baseline: EvalResult | None = None) -> str:
    payload = {
        "dataset": result.dataset_name,
        "base": result.base_acc,
        "new": result.new_acc,
        "gap": result.gap,
        "display": {
            "base": fmt2(result.base_acc),
            "new": fmt2(result.new_acc),
            "gap": fmt2(result.gap, signed=True),
        },
    }
    if baseline is not None:
        payload["zero_context_baseline"] = {
            "base": baseline.base_acc,
            "new": baseline.new_acc,
            "gap": baseline.gap,
        }
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"
