"""Convex QCQP over complex precoders and real rate-allocation variables.

The per-iteration subproblem of the alternating optimization has a fixed
shape: a linear objective in the allocation variables plus convex quadratics
in the precoders, quadratic-plus-linear inequality constraints, one total
power ball, and upper bounds on the allocations.  Every quadratic form is
kept as a nonnegative combination of rank-one Hermitian outer products
t * h h^H, which makes it PSD by construction and lets the cone embedding
use the factors directly instead of matrix square roots.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from rsmaopt.socp import ConeDims, ConeProgram, solve_cone_program

DEFAULT_TOL = 1e-7
DEFAULT_MAX_ITERS = 200


@dataclass
class QuadExpr:
    """value = sum_s sum_f t |h^H p_s|^2 + sum_s 2 Re{b_s^H p_s} + lin_a^T a + const."""

    quad: dict[int, list[tuple[float, np.ndarray]]] = field(default_factory=dict)
    lin_p: dict[int, np.ndarray] = field(default_factory=dict)
    lin_a: np.ndarray = field(default_factory=lambda: np.zeros(0))
    const: float = 0.0
    label: str = ""

    def add_factor(self, stream: int, t: float, h: np.ndarray) -> None:
        if t < 0:
            raise ValueError("rank-one factor weights must be >= 0")
        if t > 0:
            self.quad.setdefault(stream, []).append((float(t), np.asarray(h, dtype=np.complex128)))

    def value(self, precoders: list[np.ndarray], allocs: np.ndarray) -> float:
        total = self.const
        for s, factors in self.quad.items():
            for t, hvec in factors:
                total += t * abs(np.vdot(hvec, precoders[s])) ** 2
        for s, b in self.lin_p.items():
            total += 2.0 * np.vdot(b, precoders[s]).real
        if self.lin_a.size:
            total += float(self.lin_a @ allocs)
        return float(total)

    @property
    def has_quad(self) -> bool:
        return any(factors for factors in self.quad.values())


@dataclass
class QcqpProblem:
    num_streams: int
    num_tx: int
    num_alloc: int
    objective: QuadExpr
    constraints: list[QuadExpr]
    power_limit: float
    alloc_upper: np.ndarray  # per-alloc upper bound, +inf means unbounded

    def __post_init__(self) -> None:
        if self.power_limit <= 0:
            raise ValueError("power_limit must be positive")
        if self.alloc_upper.shape != (self.num_alloc,):
            raise ValueError("alloc_upper must have one entry per allocation variable")


@dataclass
class QcqpSolution:
    precoders: list[np.ndarray]
    allocations: np.ndarray
    objective_value: float
    status: str  # optimal | infeasible | unbounded | max-iter
    primal_residual: float
    dual_residual: float
    duality_gap: float
    iterations: int
    gap_history: list[float]

    @property
    def kkt_residual(self) -> float:
        return max(self.primal_residual, self.dual_residual, self.duality_gap)


@dataclass
class ConeEmbedding:
    """Cone program for a QCQP plus the bookkeeping to map solutions back."""

    program: ConeProgram
    num_streams: int
    num_tx: int
    num_alloc: int

    @property
    def num_vars(self) -> int:
        return self.program.G.shape[1]

    def split(self, x: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
        nt = self.num_tx
        precoders = []
        for s in range(self.num_streams):
            re = x[2 * nt * s : 2 * nt * s + nt]
            im = x[2 * nt * s + nt : 2 * nt * (s + 1)]
            precoders.append(re + 1j * im)
        base = 2 * nt * self.num_streams
        allocs = x[base : base + self.num_alloc].copy()
        return precoders, allocs


def _factor_rows(stream: int, t: float, h: np.ndarray, nt: int, num_vars: int) -> np.ndarray:
    """Two real rows r with r @ x = (sqrt(t) Re(h^H p), sqrt(t) Im(h^H p))."""
    rows = np.zeros((2, num_vars))
    st = np.sqrt(t)
    re, im = h.real, h.imag
    base = 2 * nt * stream
    # h^H p = (Re h - j Im h)^T (Re p + j Im p)
    rows[0, base : base + nt] = st * re
    rows[0, base + nt : base + 2 * nt] = st * im
    rows[1, base : base + nt] = -st * im
    rows[1, base + nt : base + 2 * nt] = st * re
    return rows


def _linear_row(expr: QuadExpr, nt: int, num_streams: int, num_alloc: int, num_vars: int) -> np.ndarray:
    """Row a with a @ x = linear part of expr (excluding the constant)."""
    row = np.zeros(num_vars)
    for s, b in expr.lin_p.items():
        base = 2 * nt * s
        row[base : base + nt] = 2.0 * b.real
        row[base + nt : base + 2 * nt] = 2.0 * b.imag
    if expr.lin_a.size:
        row[2 * nt * num_streams : 2 * nt * num_streams + num_alloc] = expr.lin_a
    return row


def _quad_rows(expr: QuadExpr, nt: int, num_vars: int) -> np.ndarray:
    rows = [
        _factor_rows(s, t, h, nt, num_vars)
        for s, factors in sorted(expr.quad.items())
        for t, h in factors
    ]
    return np.vstack(rows) if rows else np.zeros((0, num_vars))


def reformulate_to_cones(problem: QcqpProblem) -> ConeEmbedding:
    """Embed the complex QCQP as a real second-order cone program.

    Each complex precoder becomes 2*Nt stacked reals.  A quadratic
    constraint q(x) = |Wx|^2 + a^T x + d <= 0 becomes the cone row group
    |(2Wx, 1 + a^T x + d)| <= 1 - a^T x - d; a purely linear constraint
    becomes an orthant row; the power ball is a plain norm cone; a quadratic
    objective is pushed into an epigraph variable that the linear cone
    objective minimizes.
    """
    nt, ns, na = problem.num_tx, problem.num_streams, problem.num_alloc
    n_base = 2 * nt * ns + na
    needs_epigraph = problem.objective.has_quad
    num_vars = n_base + (1 if needs_epigraph else 0)

    orthant_G: list[np.ndarray] = []
    orthant_h: list[float] = []
    soc_G: list[np.ndarray] = []
    soc_h: list[np.ndarray] = []
    soc_dims: list[int] = []

    # allocation upper bounds: x_a <= ub  ->  s = ub - x_a >= 0
    for a in range(na):
        ub = problem.alloc_upper[a]
        if np.isfinite(ub):
            row = np.zeros(num_vars)
            row[2 * nt * ns + a] = 1.0
            orthant_G.append(row)
            orthant_h.append(float(ub))

    def add_soc_constraint(expr: QuadExpr) -> None:
        lin = _linear_row(expr, nt, ns, na, num_vars)
        if not expr.has_quad:
            # linear constraint: lin @ x + const <= 0
            orthant_G.append(lin)
            orthant_h.append(-expr.const)
            return
        W = _quad_rows(expr, nt, num_vars)
        d = W.shape[0] + 2
        Gb = np.zeros((d, num_vars))
        hb = np.zeros(d)
        Gb[0] = lin
        hb[0] = 1.0 - expr.const
        Gb[1 : d - 1] = -2.0 * W
        Gb[d - 1] = -lin
        hb[d - 1] = 1.0 + expr.const
        soc_G.append(Gb)
        soc_h.append(hb)
        soc_dims.append(d)

    for cons in problem.constraints:
        add_soc_constraint(cons)

    # total power ball |x_P| <= sqrt(P)
    d = 2 * nt * ns + 1
    Gb = np.zeros((d, num_vars))
    hb = np.zeros(d)
    hb[0] = np.sqrt(problem.power_limit)
    Gb[1:, : 2 * nt * ns] = -np.eye(2 * nt * ns)
    soc_G.append(Gb)
    soc_h.append(hb)
    soc_dims.append(d)

    c = np.zeros(num_vars)
    if needs_epigraph:
        # quad_obj + lin_obj + const <= t, minimize t
        lin = _linear_row(problem.objective, nt, ns, na, num_vars)
        W = _quad_rows(problem.objective, nt, num_vars)
        d = W.shape[0] + 2
        Gb = np.zeros((d, num_vars))
        hb = np.zeros(d)
        Gb[0] = lin
        Gb[0, n_base] = -1.0
        hb[0] = 1.0 - problem.objective.const
        Gb[1 : d - 1] = -2.0 * W
        Gb[d - 1] = -lin
        Gb[d - 1, n_base] = 1.0
        hb[d - 1] = 1.0 + problem.objective.const
        soc_G.append(Gb)
        soc_h.append(hb)
        soc_dims.append(d)
        c[n_base] = 1.0
    else:
        c = _linear_row(problem.objective, nt, ns, na, num_vars)

    G_orth = np.array(orthant_G).reshape(len(orthant_G), num_vars) if orthant_G else np.zeros((0, num_vars))
    G = np.vstack([G_orth] + soc_G)
    h = np.concatenate([np.array(orthant_h)] + soc_h) if orthant_h else np.concatenate([np.zeros(0)] + soc_h)
    dims = ConeDims(orthant=len(orthant_h), soc=tuple(soc_dims))
    return ConeEmbedding(
        program=ConeProgram(c=c, G=G, h=h, dims=dims),
        num_streams=ns,
        num_tx=nt,
        num_alloc=na,
    )


def solve(problem: QcqpProblem, tol: float = DEFAULT_TOL, max_iters: int = DEFAULT_MAX_ITERS) -> QcqpSolution:
    """Solve the QCQP to certified KKT accuracy via the cone embedding.

    The returned objective value is the original quadratic objective
    re-evaluated at the recovered precoders/allocations, so embedding and
    problem stay consistent by construction.
    """
    embedding = reformulate_to_cones(problem)
    cone = solve_cone_program(embedding.program, tol=tol, max_iters=max_iters)
    precoders, allocs = embedding.split(cone.x)
    obj = problem.objective.value(precoders, allocs)
    return QcqpSolution(
        precoders=precoders,
        allocations=allocs,
        objective_value=obj,
        status=cone.status,
        primal_residual=cone.primal_residual,
        dual_residual=cone.dual_residual,
        duality_gap=cone.duality_gap,
        iterations=cone.iterations,
        gap_history=cone.gap_history,
    )


def constraint_violation(problem: QcqpProblem, precoders: list[np.ndarray], allocs: np.ndarray) -> float:
    """Worst relative violation over all constraints, the ball and the bounds."""
    worst = 0.0
    for cons in problem.constraints:
        worst = max(worst, cons.value(precoders, allocs) / max(1.0, abs(cons.const)))
    power = sum(float(np.vdot(p, p).real) for p in precoders)
    worst = max(worst, (power - problem.power_limit) / max(1.0, problem.power_limit))
    for a in range(problem.num_alloc):
        ub = problem.alloc_upper[a]
        if np.isfinite(ub):
            worst = max(worst, (allocs[a] - ub) / max(1.0, abs(ub)))
    return float(worst)


def dump_problem(problem: QcqpProblem, path: str) -> None:
    """Self-describing JSON dump of a problem instance for offline inspection."""

    def expr_dict(expr: QuadExpr) -> dict:
        return {
            "label": expr.label,
            "const": expr.const,
            "lin_alloc": expr.lin_a.tolist() if expr.lin_a.size else [],
            "lin_precoder": {
                str(s): {"re": b.real.tolist(), "im": b.imag.tolist()} for s, b in expr.lin_p.items()
            },
            "rank_one_factors": {
                str(s): [
                    {"weight": t, "re": h.real.tolist(), "im": h.imag.tolist()} for t, h in factors
                ]
                for s, factors in expr.quad.items()
            },
        }

    payload = {
        "format": "rsmaopt-qcqp/1",
        "description": (
            "minimize objective subject to constraints <= 0, "
            "sum_s |p_s|^2 <= power_limit, alloc <= alloc_upper; "
            "expressions are sum of weight*|h^H p_s|^2 + 2Re{b^H p_s} + lin_alloc^T a + const"
        ),
        "num_streams": problem.num_streams,
        "num_tx": problem.num_tx,
        "num_alloc": problem.num_alloc,
        "power_limit": problem.power_limit,
        "alloc_upper": [None if not np.isfinite(u) else float(u) for u in problem.alloc_upper],
        "objective": expr_dict(problem.objective),
        "constraints": [expr_dict(c) for c in problem.constraints],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
