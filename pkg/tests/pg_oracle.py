"""Independent brute-force reference for small convex QCQPs.

Accelerated projected gradient on the real embedding of the problem, with
the projection onto the feasible intersection computed by Dykstra's
alternating-projection scheme.  Shares no code path with the cone solver:
constraints are handled by Euclidean projections (closed-form for the ball,
halfspaces and the box; a one-dimensional multiplier bisection for
ellipsoids), so agreement with the interior-point path is genuine evidence.
Only meant for dimensions up to ~10.
"""

from __future__ import annotations

import numpy as np

from rsmaopt.qcqp import QcqpProblem, QuadExpr


def _embed_dim(problem: QcqpProblem) -> int:
    return 2 * problem.num_tx * problem.num_streams + problem.num_alloc


def _quad_matrix(expr: QuadExpr, problem: QcqpProblem) -> tuple[np.ndarray, np.ndarray, float]:
    """Real (B, a, const) with expr(y) = y^T B y + a^T y + const."""
    n = _embed_dim(problem)
    nt = problem.num_tx
    B = np.zeros((n, n))
    a = np.zeros(n)
    for s, factors in expr.quad.items():
        base = 2 * nt * s
        for t, h in factors:
            r1 = np.zeros(n)
            r2 = np.zeros(n)
            r1[base : base + nt] = h.real
            r1[base + nt : base + 2 * nt] = h.imag
            r2[base : base + nt] = -h.imag
            r2[base + nt : base + 2 * nt] = h.real
            B += t * (np.outer(r1, r1) + np.outer(r2, r2))
    for s, b in expr.lin_p.items():
        base = 2 * nt * s
        a[base : base + nt] += 2.0 * b.real
        a[base + nt : base + 2 * nt] += 2.0 * b.imag
    if expr.lin_a.size:
        a[2 * nt * problem.num_streams :] += expr.lin_a
    return B, a, float(expr.const)


class _QuadSet:
    """Feasible set {y : y^T B y + a^T y + const <= 0} with B PSD."""

    def __init__(self, B: np.ndarray, a: np.ndarray, const: float):
        self.B, self.a, self.const = B, a, const
        self.vals, self.vecs = np.linalg.eigh(B)
        self.vals = np.clip(self.vals, 0.0, None)

    def g(self, y: np.ndarray) -> float:
        return float(y @ self.B @ y + self.a @ y + self.const)

    def project(self, v: np.ndarray) -> np.ndarray:
        if self.g(v) <= 0.0:
            return v
        # minimize |x - v|^2 subject to g(x) = 0 via the multiplier equation
        # x(mu) = (I + 2 mu B)^{-1} (v - mu a), g decreasing in mu >= 0
        vt = self.vecs.T @ v
        at = self.vecs.T @ self.a

        def x_of(mu: float) -> np.ndarray:
            return (vt - mu * at) / (1.0 + 2.0 * mu * self.vals)

        def g_of(mu: float) -> float:
            xt = x_of(mu)
            return float(xt @ (self.vals * xt) + at @ xt + self.const)

        hi = 1.0
        for _ in range(200):
            if g_of(hi) <= 0.0:
                break
            hi *= 2.0
        lo = 0.0
        for _ in range(120):
            mid = 0.5 * (lo + hi)
            if g_of(mid) > 0.0:
                lo = mid
            else:
                hi = mid
        return self.vecs @ x_of(hi)


class _HalfspaceSet:
    """{y : a^T y + const <= 0}."""

    def __init__(self, a: np.ndarray, const: float):
        self.a, self.const = a, const
        self.norm2 = float(a @ a)

    def g(self, y: np.ndarray) -> float:
        return float(self.a @ y + self.const)

    def project(self, v: np.ndarray) -> np.ndarray:
        val = self.g(v)
        if val <= 0.0 or self.norm2 == 0.0:
            return v
        return v - (val / self.norm2) * self.a


class _BallSet:
    """{y : |y_P|^2 <= radius2} over the leading precoder coordinates."""

    def __init__(self, dim_p: int, radius2: float):
        self.dim_p, self.radius2 = dim_p, radius2

    def g(self, y: np.ndarray) -> float:
        return float(y[: self.dim_p] @ y[: self.dim_p] - self.radius2)

    def project(self, v: np.ndarray) -> np.ndarray:
        norm2 = float(v[: self.dim_p] @ v[: self.dim_p])
        if norm2 <= self.radius2:
            return v
        out = v.copy()
        out[: self.dim_p] *= np.sqrt(self.radius2 / norm2)
        return out


class _BoxSet:
    """{y : y_a <= upper} over the allocation coordinates."""

    def __init__(self, offset: int, upper: np.ndarray):
        self.offset, self.upper = offset, upper

    def g(self, y: np.ndarray) -> float:
        if self.upper.size == 0:
            return -1.0
        finite = np.isfinite(self.upper)
        if not finite.any():
            return -1.0
        return float(np.max(y[self.offset :][finite] - self.upper[finite]))

    def project(self, v: np.ndarray) -> np.ndarray:
        out = v.copy()
        out[self.offset :] = np.minimum(out[self.offset :], self.upper)
        return out


def _dykstra(sets, v: np.ndarray, max_cycles: int = 60) -> np.ndarray:
    """Dykstra projection of v onto the intersection of the sets."""
    state = [np.zeros_like(v) for _ in sets]
    x = v.copy()
    for _ in range(max_cycles):
        moved = 0.0
        for i, cset in enumerate(sets):
            y = x + state[i]
            xn = cset.project(y)
            state[i] = y - xn
            moved = max(moved, float(np.max(np.abs(xn - x))))
            x = xn
        if moved < 1e-13:
            break
    return x


def _active_set_polish(
    quads: list[tuple[np.ndarray, np.ndarray, float]],
    Q: np.ndarray,
    q: np.ndarray,
    y0: np.ndarray,
    active_tol: float = 1e-5,
) -> np.ndarray | None:
    """Newton solve of the KKT system on the constraints active at y0.

    Every feasible-set member is a quadratic y^T B y + a^T y + c <= 0
    (halfspaces have B = 0), so the stationarity system is polynomial and a
    handful of Newton steps reach machine precision.  A constraint whose
    multiplier comes out negative is dropped and the solve repeated.
    Returns None when the polish fails (singular system, no convergence).
    """

    def value(i: int, y: np.ndarray) -> float:
        B, a, c = quads[i]
        return float(y @ B @ y + a @ y + c)

    n = y0.size
    active = [i for i in range(len(quads)) if value(i, y0) >= -active_tol]
    for _ in range(len(quads) + 1):
        if not active:
            try:
                return np.linalg.solve(2.0 * Q + 1e-12 * np.eye(n), -q)
            except np.linalg.LinAlgError:
                return None
        y = y0.copy()
        mu = np.zeros(len(active))
        ok = False
        for _ in range(60):
            grad = 2.0 * Q @ y + q
            for j, i in enumerate(active):
                B, a, _ = quads[i]
                grad = grad + mu[j] * (2.0 * B @ y + a)
            gvals = np.array([value(i, y) for i in active])
            if max(np.max(np.abs(grad)), np.max(np.abs(gvals))) < 1e-11:
                ok = True
                break
            H = 2.0 * Q + sum(mu[j] * 2.0 * quads[i][0] for j, i in enumerate(active))
            Jg = np.vstack([2.0 * quads[i][0] @ y + quads[i][1] for i in active])
            m = len(active)
            kkt = np.zeros((n + m, n + m))
            kkt[:n, :n] = H
            kkt[:n, n:] = Jg.T
            kkt[n:, :n] = Jg
            kkt[np.diag_indices(n + m)] += 1e-13
            rhs = -np.concatenate([grad, gvals])
            try:
                delta = np.linalg.solve(kkt, rhs)
            except np.linalg.LinAlgError:
                return None
            if not np.all(np.isfinite(delta)):
                return None
            y = y + delta[:n]
            mu = mu + delta[n:]
        if not ok:
            return None
        if np.all(mu >= -1e-9):
            return y
        active = [i for j, i in enumerate(active) if mu[j] >= -1e-9]
    return None


def solve_reference(
    problem: QcqpProblem,
    max_pg_iters: int = 800,
    tol: float = 1e-9,
) -> tuple[np.ndarray, float]:
    """Projected-gradient solve with an active-set Newton polish."""
    n = _embed_dim(problem)
    dim_p = 2 * problem.num_tx * problem.num_streams

    Q, q, c0 = _quad_matrix(problem.objective, problem)

    sets = [_BallSet(dim_p, problem.power_limit)]
    if problem.num_alloc and np.isfinite(problem.alloc_upper).any():
        sets.append(_BoxSet(dim_p, problem.alloc_upper))
    for cons in problem.constraints:
        B, a, const = _quad_matrix(cons, problem)
        if np.any(B):
            sets.append(_QuadSet(B, a, const))
        else:
            sets.append(_HalfspaceSet(a, const))

    lip = 2.0 * float(np.linalg.eigvalsh(Q)[-1]) + 1e-9
    step = 1.0 / max(lip, 1e-6)

    def f(y: np.ndarray) -> float:
        return float(y @ Q @ y + q @ y + c0)

    y = _dykstra(sets, np.zeros(n))
    momentum = y.copy()
    t_acc = 1.0
    f_prev = f(y)
    stall = 0
    for _ in range(max_pg_iters):
        grad = 2.0 * Q @ momentum + q
        cand = _dykstra(sets, momentum - step * grad)
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_acc * t_acc))
        momentum = cand + ((t_acc - 1.0) / t_next) * (cand - y)
        f_new = f(cand)
        if f_new > f_prev:  # restart acceleration on non-monotone step
            momentum = cand.copy()
            t_next = 1.0
        y, t_acc = cand, t_next
        if abs(f_new - f_prev) <= tol * (1.0 + abs(f_prev)):
            stall += 1
            if stall >= 10:
                break
        else:
            stall = 0
        f_prev = f_new

    # polish on the PG-identified active set; keep it only if it is a
    # feasible improvement
    quads = []
    quads.append(_ball_as_quad(dim_p, problem.power_limit, n))
    for a_idx in range(problem.num_alloc):
        ub = problem.alloc_upper[a_idx]
        if np.isfinite(ub):
            a_vec = np.zeros(n)
            a_vec[dim_p + a_idx] = 1.0
            quads.append((np.zeros((n, n)), a_vec, -float(ub)))
    for cons in problem.constraints:
        quads.append(_quad_matrix(cons, problem))
    polished = _active_set_polish(quads, Q, q, y)
    if polished is not None:
        feasible = all(
            polished @ B @ polished + a @ polished + c <= 1e-8 for B, a, c in quads
        )
        if feasible and f(polished) < f(y):
            y = polished
    return y, f(y)


def _ball_as_quad(dim_p: int, radius2: float, n: int) -> tuple[np.ndarray, np.ndarray, float]:
    B = np.zeros((n, n))
    B[np.diag_indices(dim_p)] = 1.0
    return B, np.zeros(n), -float(radius2)


def reference_objective(problem: QcqpProblem, **kw) -> float:
    return solve_reference(problem, **kw)[1]


def random_instance(rng: np.random.Generator) -> QcqpProblem:
    """Random small, feasible, bounded QCQP (0 is strictly feasible)."""
    num_streams = int(rng.integers(1, 3))
    num_tx = int(rng.integers(1, 3))
    num_alloc = int(rng.integers(0, 3))

    def rand_vec() -> np.ndarray:
        return rng.standard_normal(num_tx) + 1j * rng.standard_normal(num_tx)

    objective = QuadExpr(lin_a=rng.uniform(0.2, 1.5, num_alloc))
    for s in range(num_streams):
        for _ in range(int(rng.integers(1, 3))):
            objective.add_factor(s, float(rng.uniform(0.1, 2.0)), rand_vec())
        objective.lin_p[s] = 0.5 * rand_vec()

    constraints = []
    for _ in range(int(rng.integers(1, 3))):
        cons = QuadExpr(
            lin_a=0.3 * rng.standard_normal(num_alloc),
            const=float(-rng.uniform(0.5, 2.0)),
        )
        for s in range(num_streams):
            if rng.random() < 0.8:
                cons.add_factor(s, float(rng.uniform(0.1, 1.0)), rand_vec())
        constraints.append(cons)
    # keep allocations bounded below so the objective cannot run away
    for a in range(num_alloc):
        lower = float(rng.uniform(0.5, 2.0))
        lin = np.zeros(num_alloc)
        lin[a] = -1.0
        constraints.append(QuadExpr(lin_a=lin, const=-lower))

    return QcqpProblem(
        num_streams=num_streams,
        num_tx=num_tx,
        num_alloc=num_alloc,
        objective=objective,
        constraints=constraints,
        power_limit=float(rng.uniform(0.5, 4.0)),
        alloc_upper=np.zeros(num_alloc),
    )
