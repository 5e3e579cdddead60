"""Render result CSVs into figures.

Read-only over the CSV; the expected schema is the one documented by the
producing toolkit: strategy, snr_db, alpha, weight_u2, block_id, esr,
er_user1..K, multicast_rate, skipped, iters, wall_ms.  Only aggregate rows
(block_id == "agg") are plotted.  Styling is fixed so identical inputs give
identical output files.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

BASE_COLUMNS = ["strategy", "snr_db", "alpha", "weight_u2", "block_id", "esr"]
TAIL_COLUMNS = ["multicast_rate", "skipped", "iters", "wall_ms"]
KINDS = ("region", "esr_snr", "esr_alpha")

DB_PER_LOG2 = 10.0 * np.log10(2.0)

# fixed, colorblind-friendly cycle; order is part of the deterministic style
STRATEGY_COLORS = [
    "#0072b2", "#d55e00", "#009e73", "#cc79a7",
    "#f0e442", "#56b4e9", "#e69f00", "#000000",
]


class SchemaError(ValueError):
    """The CSV does not follow the documented results schema."""


class SelectionError(ValueError):
    """No rows survive the strategy/kind filters."""


@dataclass(frozen=True)
class PlotSpec:
    csv_path: str
    kind: str
    out_path: str
    strategies: tuple[str, ...] = ()
    reference_slopes: tuple[float, ...] = ()


@dataclass
class RenderInfo:
    kind: str
    out_path: str
    strategies: list[str] = field(default_factory=list)
    num_points: int = 0


@dataclass
class ResultTable:
    num_users: int
    rows: list[dict]


def load_table(csv_path: str) -> ResultTable:
    """Parse and schema-check a results CSV."""
    with open(csv_path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError("empty CSV") from None
        body = list(reader)

    er_columns = [c for c in header if c.startswith("er_user")]
    expected = BASE_COLUMNS + [f"er_user{i + 1}" for i in range(len(er_columns))] + TAIL_COLUMNS
    if header != expected:
        raise SchemaError(
            f"unexpected columns: got {header}, expected {expected}"
        )
    if not er_columns:
        raise SchemaError("no per-user rate columns found")

    rows = []
    for line_no, raw in enumerate(body, start=2):
        if len(raw) != len(header):
            raise SchemaError(f"line {line_no}: {len(raw)} fields, expected {len(header)}")
        row = dict(zip(header, raw))
        try:
            row["snr_db"] = float(row["snr_db"])
            row["alpha"] = float(row["alpha"])
            row["weight_u2"] = float(row["weight_u2"])
            row["esr"] = float(row["esr"])
            row["skipped"] = int(row["skipped"])
            for c in er_columns:
                row[c] = float(row[c])
        except ValueError as exc:
            raise SchemaError(f"line {line_no}: {exc}") from None
        rows.append(row)
    return ResultTable(num_users=len(er_columns), rows=rows)


def _aggregate_rows(table: ResultTable, strategies: tuple[str, ...]) -> list[dict]:
    rows = [r for r in table.rows if r["block_id"] == "agg"]
    if strategies:
        rows = [r for r in rows if r["strategy"] in strategies]
    return rows


def _strategy_order(rows: list[dict]) -> list[str]:
    seen: list[str] = []
    for r in rows:
        if r["strategy"] not in seen:
            seen.append(r["strategy"])
    return seen


def upper_right_hull(points: list[tuple[float, float]]) -> list[tuple[float, float]]:
    """Convex Pareto boundary of the points plus their axis shadows."""
    if not points:
        return []
    max_x = max(p[0] for p in points)
    max_y = max(p[1] for p in points)
    pts = set(points) | {(max_x, 0.0), (0.0, max_y)}
    staircase = []
    best_y = -np.inf
    for p in sorted(pts, key=lambda p: (-p[0], -p[1])):
        if p[1] > best_y:
            staircase.append(p)
            best_y = p[1]
    staircase.reverse()

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    hull: list[tuple[float, float]] = []
    for p in staircase:
        while len(hull) >= 2 and cross(hull[-2], hull[-1], p) >= 0:
            hull.pop()
        hull.append(p)
    if hull[0][0] > 0.0:
        hull.insert(0, (0.0, hull[0][1]))
    if hull[-1][1] > 0.0:
        hull.append((hull[-1][0], 0.0))
    return hull


def _render_region(rows: list[dict], table: ResultTable, ax) -> list[str]:
    if table.num_users < 2:
        raise SelectionError("region plots need at least two per-user rate columns")
    strategies = _strategy_order(rows)
    for idx, strategy in enumerate(strategies):
        pts = [
            (r["er_user1"], r["er_user2"]) for r in rows if r["strategy"] == strategy
        ]
        color = STRATEGY_COLORS[idx % len(STRATEGY_COLORS)]
        hull = upper_right_hull(pts)
        ax.plot(*zip(*hull), "-", color=color, label=strategy, linewidth=1.6)
        ax.plot(*zip(*pts), "o", color=color, markersize=3.0, alpha=0.7)
    ax.set_xlabel("ergodic rate of user 1 (bit/s/Hz)")
    ax.set_ylabel("ergodic rate of user 2 (bit/s/Hz)")
    ax.set_xlim(left=0.0)
    ax.set_ylim(bottom=0.0)
    return strategies


def _render_esr_snr(rows: list[dict], reference_slopes: tuple[float, ...], ax) -> list[str]:
    strategies = _strategy_order(rows)
    alphas = sorted({r["alpha"] for r in rows})
    top_point = None
    for idx, strategy in enumerate(strategies):
        color = STRATEGY_COLORS[idx % len(STRATEGY_COLORS)]
        for alpha in alphas:
            pts = sorted(
                (r["snr_db"], r["esr"]) for r in rows
                if r["strategy"] == strategy and r["alpha"] == alpha
            )
            if not pts:
                continue
            label = strategy if len(alphas) == 1 else f"{strategy} (a={alpha:g})"
            style = ["-", "--", "-.", ":"][alphas.index(alpha) % 4]
            ax.plot(*zip(*pts), style, marker="o", markersize=3.0, color=color, label=label)
            if top_point is None or pts[-1][1] > top_point[1]:
                top_point = pts[-1]
    for slope in reference_slopes:
        snr = np.array(sorted({r["snr_db"] for r in rows}))
        anchor_snr, anchor_esr = top_point
        ref = anchor_esr + slope * (snr - anchor_snr) / DB_PER_LOG2
        ax.plot(snr, ref, "--", color="#888888", linewidth=1.0,
                label=f"slope {slope:g}")
    ax.set_xlabel("SNR (dB)")
    ax.set_ylabel("ergodic sum rate (bit/s/Hz)")
    return strategies


def _render_esr_alpha(rows: list[dict], ax) -> list[str]:
    strategies = _strategy_order(rows)
    snrs = sorted({r["snr_db"] for r in rows})
    for idx, strategy in enumerate(strategies):
        color = STRATEGY_COLORS[idx % len(STRATEGY_COLORS)]
        for snr in snrs:
            pts = sorted(
                (r["alpha"], r["esr"]) for r in rows
                if r["strategy"] == strategy and r["snr_db"] == snr
            )
            if not pts:
                continue
            label = strategy if len(snrs) == 1 else f"{strategy} ({snr:g} dB)"
            ax.plot(*zip(*pts), "-", marker="s", markersize=3.0, color=color, label=label)
    ax.set_xlabel("CSIT quality exponent")
    ax.set_ylabel("ergodic sum rate (bit/s/Hz)")
    return strategies


def render(spec: PlotSpec) -> RenderInfo:
    """Render one figure; raises before writing anything on bad input."""
    if spec.kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}")
    table = load_table(spec.csv_path)
    rows = _aggregate_rows(table, spec.strategies)
    if not rows:
        raise SelectionError("no aggregate rows match the requested strategies")

    fig, ax = plt.subplots(figsize=(6.0, 4.5), dpi=150)
    try:
        if spec.kind == "region":
            strategies = _render_region(rows, table, ax)
        elif spec.kind == "esr_snr":
            strategies = _render_esr_snr(rows, spec.reference_slopes, ax)
        else:
            strategies = _render_esr_alpha(rows, ax)
        ax.grid(True, alpha=0.3)
        ax.legend(loc="best", fontsize=8)
        fig.tight_layout()
        fig.savefig(spec.out_path, metadata=_stable_metadata(spec.out_path))
    finally:
        plt.close(fig)
    return RenderInfo(
        kind=spec.kind, out_path=spec.out_path,
        strategies=strategies, num_points=len(rows),
    )


def _stable_metadata(out_path: str) -> dict | None:
    # SVG embeds a creation date unless overridden; PNG is already clean
    if out_path.endswith(".svg"):
        return {"Date": None}
    return None
