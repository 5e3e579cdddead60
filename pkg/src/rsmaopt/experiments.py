"""Multi-block studies: rate-vs-SNR curves, rate regions, multicast runs, DoF fits.

Every study fans the same unit of work over a pool: draw one fading block,
draw its conditional samples, optimize one strategy over its admissible
orders, and report the achieved rates.  Block outcomes are reduced in key
order (never completion order), so results are reproducible for a fixed
seed regardless of worker count.
"""

from __future__ import annotations

import hashlib
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from rsmaopt.channel import ChannelConfig, draw_saa_samples, generate_block
from rsmaopt.optimizer import AoConfig, QosInfeasibleError, StrategySpec, best_over_orders
from rsmaopt.strategy import Strategy

AGGREGATE = "agg"


def region_weight_grid() -> tuple[float, ...]:
    """Second-user weight sweep for two-user rate regions.

    10^-3 and 10^3 extremes plus 10^x for x from -1 to 1 in steps of 0.05
    (43 points total); the first user's weight stays at one.
    """
    exponents = np.round(np.arange(-1.0, 1.0 + 1e-9, 0.05), 10)
    return (1e-3,) + tuple(float(10.0**x) for x in exponents) + (1e3,)


@dataclass(frozen=True)
class StrategyRun:
    """One strategy entry of an experiment: the name plus layout knobs."""

    strategy: Strategy
    groups: tuple[tuple[int, ...], ...] | None = None
    order_override: tuple[int, ...] | None = None

    @property
    def label(self) -> str:
        return self.strategy.value


@dataclass(frozen=True)
class ExperimentSpec:
    """Full description of one study; shapes the CSV one row per outcome."""

    user_variances: tuple[float, ...]
    num_tx_antennas: int
    snr_db_list: tuple[float, ...]
    alpha_list: tuple[float, ...]
    strategies: tuple[StrategyRun, ...]
    num_blocks: int = 20
    num_samples: int = 200
    weight_grid: tuple[tuple[float, ...], ...] | None = None  # None = equal weights
    qos: tuple[float, ...] | None = None
    qos_by_alpha: dict[float, tuple[float, ...]] | None = None
    multicast: bool = False
    multicast_threshold: float = 0.0
    ao: AoConfig = field(default_factory=AoConfig)
    seed: int = 0
    threads: int = 1

    @property
    def num_users(self) -> int:
        return len(self.user_variances)

    def __post_init__(self) -> None:
        if self.num_blocks < 1 or self.num_samples < 1:
            raise ValueError("num_blocks and num_samples must be >= 1")
        if not self.snr_db_list or not self.alpha_list or not self.strategies:
            raise ValueError("snr, alpha and strategy axes must be non-empty")
        if any(a < 0 for a in self.alpha_list):
            raise ValueError("alpha must be >= 0")
        for snr in self.snr_db_list:
            for alpha in self.alpha_list:
                if alpha > 0 and snr < 0:
                    raise ValueError(
                        f"snr {snr} dB with alpha {alpha} > 0 would need a negative "
                        "estimate variance"
                    )
        if self.multicast and self.multicast_threshold < 0:
            raise ValueError("multicast threshold must be >= 0")

    def qos_for_alpha(self, alpha: float) -> tuple[float, ...] | None:
        if self.qos_by_alpha is not None:
            key = min(self.qos_by_alpha, key=lambda a: abs(a - alpha))
            if abs(key - alpha) > 1e-9:
                raise KeyError(f"no QoS entry for alpha {alpha}")
            return self.qos_by_alpha[key]
        return self.qos

    def weight_vectors(self) -> tuple[tuple[float, ...], ...]:
        if self.weight_grid is None:
            return ((1.0,) * self.num_users,)
        return self.weight_grid


@dataclass(frozen=True)
class ResultRecord:
    """One CSV row: a single block outcome or a per-setting aggregate."""

    strategy: str
    snr_db: float
    alpha: float
    weights: tuple[float, ...]
    block_id: int | str
    esr: float
    er_user: tuple[float, ...]
    multicast_rate: float
    skipped: int
    iters: int
    wall_ms: float
    orders: str = ""

    @property
    def weight_u2(self) -> float:
        return self.weights[1] if len(self.weights) > 1 else 1.0


@dataclass(frozen=True)
class _BlockTask:
    key: tuple[int, float, float, int, int]  # (strategy idx, snr, alpha, weight idx, block)
    run: StrategyRun
    spec: ExperimentSpec
    weights: tuple[float, ...]


def _run_block(task: _BlockTask) -> ResultRecord:
    spec = task.spec
    strategy_idx, snr_db, alpha, weight_idx, block_id = task.key
    start = time.perf_counter()
    config = ChannelConfig(
        num_users=spec.num_users,
        num_tx_antennas=spec.num_tx_antennas,
        user_variances=spec.user_variances,
        csit_alpha=alpha,
        snr_db=snr_db,
        rng_seed=spec.seed,
    )
    block = generate_block(config, block_id)
    samples = draw_saa_samples(block, config, spec.num_samples)
    strategy_spec = StrategySpec(
        strategy=task.run.strategy,
        groups=task.run.groups,
        qos=spec.qos_for_alpha(alpha),
        multicast=spec.multicast,
        multicast_threshold=spec.multicast_threshold,
        order_override=task.run.order_override,
    )
    ao = replace(spec.ao, weights=task.weights)
    try:
        result = best_over_orders(
            strategy_spec, spec.num_users, block, samples, ao, config.power_linear, alpha
        )
    except QosInfeasibleError:
        wall = (time.perf_counter() - start) * 1000.0
        return ResultRecord(
            strategy=task.run.label,
            snr_db=snr_db,
            alpha=alpha,
            weights=task.weights,
            block_id=block_id,
            esr=0.0,
            er_user=(0.0,) * spec.num_users,
            multicast_rate=0.0,
            skipped=1,
            iters=0,
            wall_ms=wall,
        )
    wall = (time.perf_counter() - start) * 1000.0
    report = result.report
    orders = ""
    if result.diagnostics.pi is not None:
        orders = "pi=" + "".join(str(u) for u in result.diagnostics.pi)
    return ResultRecord(
        strategy=task.run.label,
        snr_db=snr_db,
        alpha=alpha,
        weights=task.weights,
        block_id=block_id,
        esr=report.wsr,
        er_user=tuple(report.per_user_total[u] for u in range(spec.num_users)),
        multicast_rate=result.precoders.multicast_alloc,
        skipped=0,
        iters=result.diagnostics.iterations,
        wall_ms=wall,
        orders=orders,
    )


def _aggregate(records: list[ResultRecord]) -> ResultRecord:
    kept = [r for r in records if not r.skipped]
    skipped = sum(r.skipped for r in records)
    ref = records[0]
    if kept:
        esr = float(np.mean([r.esr for r in kept]))
        er = tuple(float(np.mean([r.er_user[u] for r in kept])) for u in range(len(ref.er_user)))
        mc = float(np.mean([r.multicast_rate for r in kept]))
        iters = int(round(np.mean([r.iters for r in kept])))
    else:
        esr, er, mc, iters = 0.0, (0.0,) * len(ref.er_user), 0.0, 0
    return ResultRecord(
        strategy=ref.strategy,
        snr_db=ref.snr_db,
        alpha=ref.alpha,
        weights=ref.weights,
        block_id=AGGREGATE,
        esr=esr,
        er_user=er,
        multicast_rate=mc,
        skipped=skipped,
        iters=iters,
        wall_ms=float(sum(r.wall_ms for r in records)),
    )


def _run_tasks(spec: ExperimentSpec, tasks: list[_BlockTask]) -> list[ResultRecord]:
    if spec.threads > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=spec.threads) as pool:
            outcomes = list(pool.map(_run_block, tasks, chunksize=1))
    else:
        outcomes = [_run_block(t) for t in tasks]
    keyed = {t.key: r for t, r in zip(tasks, outcomes)}
    ordered = [keyed[k] for k in sorted(keyed)]

    rows: list[ResultRecord] = []
    group: list[ResultRecord] = []
    group_key = None
    for task_key in sorted(keyed):
        setting = task_key[:4]
        if group and setting != group_key:
            rows.extend(group)
            rows.append(_aggregate(group))
            group = []
        group_key = setting
        group.append(keyed[task_key])
    if group:
        rows.extend(group)
        rows.append(_aggregate(group))
    return rows


def _build_tasks(spec: ExperimentSpec) -> list[_BlockTask]:
    tasks = []
    for si, run in enumerate(spec.strategies):
        for snr in spec.snr_db_list:
            for alpha in spec.alpha_list:
                for wi, weights in enumerate(spec.weight_vectors()):
                    for b in range(spec.num_blocks):
                        tasks.append(
                            _BlockTask(
                                key=(si, snr, alpha, wi, b),
                                run=run,
                                spec=spec,
                                weights=weights,
                            )
                        )
    return tasks


def run_esr_curve(spec: ExperimentSpec) -> list[ResultRecord]:
    """Ergodic (weighted) sum rate per strategy over the SNR/alpha grid.

    Per setting, every block is optimized independently and the aggregate
    row averages the per-block weighted average sum rates over the blocks
    that met their rate floors; skips are counted, not imputed.
    """
    return _run_tasks(spec, _build_tasks(spec))


def run_multicast_study(spec: ExperimentSpec) -> list[ResultRecord]:
    """ESR study with the multicast floor active; reports the multicast rate."""
    if not spec.multicast:
        raise ValueError("multicast study requires multicast=True")
    return run_esr_curve(spec)


def run_rate_region(spec: ExperimentSpec) -> list[ResultRecord]:
    """Two-user rate-region boundary sweep over the second user's weight."""
    if spec.num_users != 2:
        raise ValueError("rate regions are defined for exactly two users")
    weight_grid = spec.weight_grid
    if weight_grid is None:
        weight_grid = tuple((1.0, u2) for u2 in region_weight_grid())
    region_spec = replace(spec, weight_grid=weight_grid)
    return run_esr_curve(region_spec)


# -- DoF estimation --------------------------------------------------------------


def rs_dof_target(num_users: int, alpha: float) -> float:
    """High-SNR sum-rate slope achievable with a common stream."""
    return 1.0 + (num_users - 1) * alpha


def mulp_dof_target(num_users: int, alpha: float) -> float:
    """High-SNR sum-rate slope of private-only linear precoding."""
    return max(1.0, num_users * alpha)


def estimate_dof(
    records: list[ResultRecord],
    snr_window: tuple[float, float] | None = None,
) -> dict[tuple[str, float], float]:
    """Least-squares slope of aggregate ESR versus log2(transmit power).

    Returns {(strategy, alpha): slope}.  Requires at least three aggregate
    SNR points inside the window, uniformly spaced in dB.
    """
    agg = [r for r in records if r.block_id == AGGREGATE]
    out: dict[tuple[str, float], float] = {}
    settings = sorted({(r.strategy, r.alpha) for r in agg})
    for strategy, alpha in settings:
        pts = sorted(
            (r.snr_db, r.esr)
            for r in agg
            if r.strategy == strategy and r.alpha == alpha
            and (snr_window is None or snr_window[0] - 1e-9 <= r.snr_db <= snr_window[1] + 1e-9)
        )
        if len(pts) < 3:
            raise ValueError(
                f"need >= 3 SNR points to fit a slope for {strategy} at alpha={alpha}"
            )
        gaps = np.diff([p[0] for p in pts])
        if np.ptp(gaps) > 1e-9:
            raise ValueError("SNR points must be uniformly spaced in dB")
        x = np.array([p[0] for p in pts]) / (10.0 * np.log10(2.0))  # dB -> log2(power)
        y = np.array([p[1] for p in pts])
        slope = float(np.polyfit(x, y, 1)[0])
        out[(strategy, alpha)] = slope
    return out


# -- rate-region geometry ---------------------------------------------------------


def upper_right_hull(points: list[tuple[float, float]]) -> list[tuple[float, float]]:
    """Pareto boundary of the convex hull of the points and their axis shadows.

    Free time sharing makes every point's projections onto the axes
    achievable; the returned vertices run from the (0, max-y) corner to the
    (max-x, 0) corner, concave and with non-increasing y.
    """
    if not points:
        return []
    max_x = max(p[0] for p in points)
    max_y = max(p[1] for p in points)
    pts = set(points) | {(max_x, 0.0), (0.0, max_y)}

    # Pareto-maximal staircase: sweep x descending, keep strict y records
    staircase = []
    best_y = -np.inf
    for p in sorted(pts, key=lambda p: (-p[0], -p[1])):
        if p[1] > best_y:
            staircase.append(p)
            best_y = p[1]
    staircase.reverse()  # x ascending, y descending

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    # convexify: keep only right turns (monotone-chain upper hull)
    hull: list[tuple[float, float]] = []
    for p in staircase:
        while len(hull) >= 2 and cross(hull[-2], hull[-1], p) >= 0:
            hull.pop()
        hull.append(p)
    # close the boundary against both axes
    if hull[0][0] > 0.0:
        hull.insert(0, (0.0, hull[0][1]))
    if hull[-1][1] > 0.0:
        hull.append((hull[-1][0], 0.0))
    return hull


def hull_contains(
    hull: list[tuple[float, float]], point: tuple[float, float], slack: float = 0.0
) -> bool:
    """Whether a point is inside the region under an upper-right boundary."""
    if not hull:
        return False
    x, y = point
    if x < -slack or y < -slack:
        return False
    if x > max(p[0] for p in hull) + slack:
        return False
    # boundary runs left-to-right; interpolate the frontier height at x,
    # collapsing the vertical axis-closing segment (duplicate x, keep max y)
    heights: dict[float, float] = {}
    for px, py in hull:
        heights[px] = max(heights.get(px, -np.inf), py)
    xs = sorted(heights)
    ys = [heights[px] for px in xs]
    frontier = np.interp(min(x, xs[-1]), xs, ys)
    return y <= frontier + slack


def region_points(
    records: list[ResultRecord], strategy: str
) -> list[tuple[float, float]]:
    """Aggregate (ER1, ER2) boundary points of one strategy."""
    return [
        (r.er_user[0], r.er_user[1])
        for r in records
        if r.block_id == AGGREGATE and r.strategy == strategy
    ]


# -- serialization ----------------------------------------------------------------

CSV_BASE_COLUMNS = ["strategy", "snr_db", "alpha", "weight_u2", "block_id", "esr"]
CSV_TAIL_COLUMNS = ["multicast_rate", "skipped", "iters", "wall_ms"]


def csv_columns(num_users: int) -> list[str]:
    return CSV_BASE_COLUMNS + [f"er_user{u + 1}" for u in range(num_users)] + CSV_TAIL_COLUMNS


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.10g}"
    return str(value)


def records_to_csv(records: list[ResultRecord], num_users: int) -> str:
    lines = [",".join(csv_columns(num_users))]
    for r in records:
        row = [
            r.strategy,
            _fmt(float(r.snr_db)),
            _fmt(float(r.alpha)),
            _fmt(float(r.weight_u2)),
            str(r.block_id),
            _fmt(float(r.esr)),
        ]
        row += [_fmt(float(r.er_user[u])) for u in range(num_users)]
        row += [_fmt(float(r.multicast_rate)), str(r.skipped), str(r.iters), _fmt(float(r.wall_ms))]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def canonical_csv(csv_text: str) -> str:
    """CSV with the wall-clock column zeroed; the reproducibility contract
    covers everything except timings."""
    lines = csv_text.strip().split("\n")
    header = lines[0].split(",")
    try:
        wall_idx = header.index("wall_ms")
    except ValueError:
        return csv_text
    out = [lines[0]]
    for line in lines[1:]:
        parts = line.split(",")
        parts[wall_idx] = "0"
        out.append(",".join(parts))
    return "\n".join(out) + "\n"


def content_hash(csv_text: str) -> str:
    return hashlib.sha256(canonical_csv(csv_text).encode()).hexdigest()


def spec_manifest(spec: ExperimentSpec, csv_text: str) -> dict:
    """Run manifest: spec echo, seed, and the canonical content hash."""

    def jsonable(obj):
        if isinstance(obj, Strategy):
            return obj.value
        if isinstance(obj, dict):
            return {str(k): jsonable(v) for k, v in obj.items()}
        if isinstance(obj, (list, tuple)):
            return [jsonable(v) for v in obj]
        if hasattr(obj, "__dataclass_fields__"):
            return {k: jsonable(getattr(obj, k)) for k in obj.__dataclass_fields__}
        return obj

    return {
        "spec": jsonable(spec),
        "seed": spec.seed,
        "csv_sha256": content_hash(csv_text),
        "csv_rows": csv_text.count("\n") - 1,
    }


def write_outputs(spec: ExperimentSpec, records: list[ResultRecord], output_dir: str) -> tuple[str, str]:
    import os

    os.makedirs(output_dir, exist_ok=True)
    csv_text = records_to_csv(records, spec.num_users)
    csv_path = os.path.join(output_dir, "results.csv")
    with open(csv_path, "w") as fh:
        fh.write(csv_text)
    manifest_path = os.path.join(output_dir, "manifest.json")
    with open(manifest_path, "w") as fh:
        json.dump(spec_manifest(spec, csv_text), fh, indent=2, sort_keys=True)
    return csv_path, manifest_path
