"""Dense primal-dual interior-point solver for second-order cone programs.

Solves
    minimize    c^T x
    subject to  G x + s = h,   s in K,
where K is a product of a nonnegative orthant and second-order (Lorentz)
cones.  The dual is max -h^T z s.t. G^T z + c = 0, z in K.

The algorithm is a Mehrotra predictor-corrector method with Nesterov-Todd
scaling on the homogeneous self-dual embedding, so primal or dual
infeasibility is detected through the (tau, kappa) pair instead of by
divergence heuristics.  Everything is dense; the intended problem sizes are
tens of variables and a few hundred cone rows per solve.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class ConeDims:
    """Cone layout: `orthant` leading nonnegative rows, then SOC blocks."""

    orthant: int
    soc: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.orthant < 0 or any(d < 2 for d in self.soc):
            raise ValueError("orthant size must be >= 0 and every SOC dim >= 2")

    @property
    def total(self) -> int:
        return self.orthant + sum(self.soc)

    @property
    def degree(self) -> int:
        return self.orthant + len(self.soc)

    def blocks(self) -> list[tuple[int, int]]:
        """(start, end) of each SOC block."""
        out, start = [], self.orthant
        for d in self.soc:
            out.append((start, start + d))
            start += d
        return out


@dataclass(frozen=True)
class ConeProgram:
    c: np.ndarray
    G: np.ndarray
    h: np.ndarray
    dims: ConeDims

    def __post_init__(self) -> None:
        m, n = self.G.shape
        if self.c.shape != (n,) or self.h.shape != (m,) or self.dims.total != m:
            raise ValueError("inconsistent cone program dimensions")


@dataclass
class ConeSolution:
    x: np.ndarray
    s: np.ndarray
    z: np.ndarray
    status: str  # optimal | infeasible | unbounded | max-iter
    iterations: int
    primal_residual: float
    dual_residual: float
    duality_gap: float
    gap_history: list[float] = field(default_factory=list)


def _cone_identity(dims: ConeDims) -> np.ndarray:
    e = np.zeros(dims.total)
    e[: dims.orthant] = 1.0
    for start, _ in dims.blocks():
        e[start] = 1.0
    return e


def _max_step(dims: ConeDims, u: np.ndarray, du: np.ndarray) -> float:
    """Largest alpha with u + alpha*du still in the cone (u strictly inside)."""
    alpha = np.inf
    if dims.orthant:
        neg = du[: dims.orthant] < 0
        if np.any(neg):
            alpha = min(alpha, float(np.min(-u[: dims.orthant][neg] / du[: dims.orthant][neg])))
    for start, end in dims.blocks():
        u0, u1 = u[start], u[start + 1 : end]
        d0, d1 = du[start], du[start + 1 : end]
        if d0 < 0:
            alpha = min(alpha, -u0 / d0)
        # first positive root of (u0+a d0)^2 - |u1+a d1|^2 = 0
        a = d0 * d0 - d1 @ d1
        b = 2.0 * (u0 * d0 - u1 @ d1)
        cc = u0 * u0 - u1 @ u1
        disc = b * b - 4.0 * a * cc
        roots = []
        if abs(a) < 1e-14:
            if b < -1e-14:
                roots.append(-cc / b)
        elif disc >= 0.0:
            sq = np.sqrt(disc)
            roots.extend(r for r in ((-b - sq) / (2 * a), (-b + sq) / (2 * a)) if r > 1e-14)
        if roots:
            alpha = min(alpha, min(roots))
    return float(alpha)


def _soc_scaling_block(w: np.ndarray) -> np.ndarray:
    """Symmetric square root of the quadratic representation of a J-unit point."""
    d = w.shape[0]
    V = np.empty((d, d))
    V[0, 0] = w[0]
    V[0, 1:] = w[1:]
    V[1:, 0] = w[1:]
    V[1:, 1:] = np.eye(d - 1) + np.outer(w[1:], w[1:]) / (1.0 + w[0])
    return V


class ScalingBreakdown(ArithmeticError):
    """An iterate left the cone interior beyond numerical rescue."""


class _NTScaling:
    """Nesterov-Todd scaling W with W^{-T} s = W z = lambda for s, z interior."""

    def __init__(self, dims: ConeDims, s: np.ndarray, z: np.ndarray):
        self.dims = dims
        lo = dims.orthant
        if np.any(s[:lo] <= 0) or np.any(z[:lo] <= 0):
            raise ScalingBreakdown("orthant iterate not strictly positive")
        self.w_orth = np.sqrt(s[:lo] / z[:lo]) if lo else np.zeros(0)
        self.soc_W: list[np.ndarray] = []
        self.soc_Winv: list[np.ndarray] = []
        for start, end in dims.blocks():
            sb, zb = s[start:end], z[start:end]
            res_s = sb[0] ** 2 - sb[1:] @ sb[1:]
            res_z = zb[0] ** 2 - zb[1:] @ zb[1:]
            if res_s <= 0.0 or res_z <= 0.0:
                raise ScalingBreakdown("cone iterate lost strict interiority")
            sbar = sb / np.sqrt(res_s)
            zbar = zb / np.sqrt(res_z)
            gamma = np.sqrt((1.0 + sbar @ zbar) / 2.0)
            wbar = np.empty_like(sb)
            wbar[0] = (sbar[0] + zbar[0]) / (2.0 * gamma)
            wbar[1:] = (sbar[1:] - zbar[1:]) / (2.0 * gamma)
            eta = (res_s / res_z) ** 0.25
            # W = eta * V(wbar) with V(w) = [[w0, w1^T], [w1, I + w1 w1^T/(1+w0)]];
            # V(w)^2 equals the quadratic representation 2 w w^T - J, and
            # V(w)^{-1} = V(Jw), i.e. the same block with w1 negated.
            self.soc_W.append(eta * _soc_scaling_block(wbar))
            flipped = wbar.copy()
            flipped[1:] *= -1.0
            self.soc_Winv.append(_soc_scaling_block(flipped) / eta)
        self.lam = self.apply(z)

    def apply(self, v: np.ndarray) -> np.ndarray:
        """W v (also equals W^{-T} s for the defining pair)."""
        out = np.empty_like(v)
        lo = self.dims.orthant
        out[:lo] = self.w_orth * v[:lo]
        for W, (start, end) in zip(self.soc_W, self.dims.blocks()):
            out[start:end] = W @ v[start:end]
        return out

    def apply_inv(self, v: np.ndarray) -> np.ndarray:
        out = np.empty_like(v)
        lo = self.dims.orthant
        out[:lo] = v[:lo] / self.w_orth
        for Winv, (start, end) in zip(self.soc_Winv, self.dims.blocks()):
            out[start:end] = Winv @ v[start:end]
        return out

    def apply_inv_mat(self, M: np.ndarray) -> np.ndarray:
        out = np.empty_like(M)
        lo = self.dims.orthant
        out[:lo] = M[:lo] / self.w_orth[:, None]
        for Winv, (start, end) in zip(self.soc_Winv, self.dims.blocks()):
            out[start:end] = Winv @ M[start:end]
        return out


def _jordan_product(dims: ConeDims, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    out = np.empty_like(u)
    lo = dims.orthant
    out[:lo] = u[:lo] * v[:lo]
    for start, end in dims.blocks():
        ub, vb = u[start:end], v[start:end]
        out[start] = ub @ vb
        out[start + 1 : end] = ub[0] * vb[1:] + vb[0] * ub[1:]
    return out


def _jordan_solve(dims: ConeDims, lam: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Solve lam o u = d for u (arrow-matrix inverse per block)."""
    out = np.empty_like(d)
    lo = dims.orthant
    out[:lo] = d[:lo] / lam[:lo]
    for start, end in dims.blocks():
        lb, db = lam[start:end], d[start:end]
        det = lb[0] ** 2 - lb[1:] @ lb[1:]
        u0 = (lb[0] * db[0] - lb[1:] @ db[1:]) / det
        out[start] = u0
        out[start + 1 : end] = (db[1:] - u0 * lb[1:]) / lb[0]
    return out


def solve_cone_program(
    prog: ConeProgram,
    tol: float = 1e-7,
    max_iters: int = 200,
    step_fraction: float = 0.99,
) -> ConeSolution:
    """Run the predictor-corrector interior-point iteration to completion.

    Terminates at relative primal/dual residuals and duality gap below tol,
    with an infeasibility/unboundedness certificate, or at the numerical
    floor, in which case the best iterate seen is returned.
    """
    c, G, h, dims = prog.c, prog.G, prog.h, prog.dims
    m, n = G.shape
    if m == 0 or n == 0:
        raise ValueError("degenerate cone program")

    e = _cone_identity(dims)
    x = np.zeros(n)
    s = e.copy()
    z = e.copy()
    tau, kappa = 1.0, 1.0
    degree = dims.degree + 1

    gap_history: list[float] = []
    status = "max-iter"
    iters_done = max_iters
    best = None
    best_metric = np.inf

    c_scale = max(1.0, float(np.linalg.norm(c)))
    h_scale = max(1.0, float(np.linalg.norm(h)))

    for it in range(max_iters):
        r_dual = G.T @ z + c * tau
        r_primal = G @ x + s - h * tau
        r_tau = c @ x + h @ z + kappa
        mu = (s @ z + tau * kappa) / degree

        # convergence metrics at the de-homogenized point
        xs, ss, zs = x / tau, s / tau, z / tau
        pres = float(np.linalg.norm(G @ xs + ss - h) / h_scale)
        dres = float(np.linalg.norm(G.T @ zs + c) / c_scale)
        pobj = float(c @ xs)
        gap_abs = float(ss @ zs)
        relgap = gap_abs / max(1.0, abs(pobj))
        gap_history.append(gap_abs)

        metric = max(pres, dres, relgap)
        if metric < best_metric:
            best_metric = metric
            best = (xs.copy(), ss.copy(), zs.copy(), pres, dres, relgap)

        if metric <= tol:
            status = "optimal"
            iters_done = it
            break

        # infeasibility certificates (scaled so the certificate is O(1))
        hz = h @ z
        cx = c @ x
        if hz < -1e-10 and float(np.linalg.norm(G.T @ z)) / (-hz) <= tol * 10:
            status = "infeasible"
            iters_done = it
            best = (xs, ss, z / (-hz), pres, dres, relgap)
            break
        if cx < -1e-10 and float(np.linalg.norm(G @ x + s)) / (-cx) <= tol * 10:
            status = "unbounded"
            iters_done = it
            best = (x / (-cx), s / (-cx), zs, pres, dres, relgap)
            break

        if mu < 1e-14:
            iters_done = it
            break

        try:
            scaling = _NTScaling(dims, s, z)
        except ScalingBreakdown:
            iters_done = it
            break
        lam = scaling.lam

        # factor the normal equations M = G^T W^{-2} G
        Gs = scaling.apply_inv_mat(G)
        M = Gs.T @ Gs
        M[np.diag_indices_from(M)] += 1e-12 * (1.0 + np.trace(M) / n)
        try:
            L = np.linalg.cholesky(M)
        except np.linalg.LinAlgError:
            M[np.diag_indices_from(M)] += 1e-8
            L = np.linalg.cholesky(M)

        def chol_solve(b: np.ndarray) -> np.ndarray:
            return np.linalg.solve(L.T, np.linalg.solve(L, b))

        def kkt_base(bx: np.ndarray, bz: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
            # [0 G^T; G -W^2] [dx; dz] = [bx; bz]
            u = scaling.apply_inv(bz)
            dx = chol_solve(bx + Gs.T @ u)
            dz = scaling.apply_inv(Gs @ dx - u)
            return dx, dz

        def kkt_solve(bx: np.ndarray, bz: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
            dx, dz = kkt_base(bx, bz)
            # one round of iterative refinement against the augmented system
            r1 = bx - G.T @ dz
            r2 = bz - (G @ dx - scaling.apply(scaling.apply(dz)))
            ex, ez = kkt_base(r1, r2)
            return dx + ex, dz + ez

        dx2, dz2 = kkt_solve(-c, h)

        def direction(sigma: float, comp_corr: np.ndarray | None, tk_corr: float):
            rd = -(1.0 - sigma) * r_dual
            rp = -(1.0 - sigma) * r_primal
            rt = -(1.0 - sigma) * r_tau
            d_comp = sigma * mu * e - _jordan_product(dims, lam, lam)
            d_tk = sigma * mu - tau * kappa
            if comp_corr is not None:
                d_comp -= comp_corr
                d_tk -= tk_corr
            ds_scaled = _jordan_solve(dims, lam, d_comp)
            # W dz + W^{-T} ds = ds_scaled  =>  ds = W(ds_scaled) - W^2 dz
            bz = rp - scaling.apply(ds_scaled)
            dx1, dz1 = kkt_solve(rd, bz)
            denom = c @ dx2 + h @ dz2 - kappa / tau
            dtau = (rt - c @ dx1 - h @ dz1 - d_tk / tau) / denom
            dx = dx1 + dtau * dx2
            dz = dz1 + dtau * dz2
            ds = scaling.apply(ds_scaled - scaling.apply(dz))
            dkappa = (d_tk - kappa * dtau) / tau
            return dx, ds, dz, dtau, dkappa

        # near the numerical floor the scaled directions can produce inf/nan;
        # the finite-step guard below turns that into a clean stop
        with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
            # predictor
            dxa, dsa, dza, dtaua, dkappaa = direction(0.0, None, 0.0)
            alpha = min(
                _max_step(dims, s, dsa),
                _max_step(dims, z, dza),
                (-tau / dtaua) if dtaua < 0 else np.inf,
                (-kappa / dkappaa) if dkappaa < 0 else np.inf,
                1.0,
            )
            mu_aff = (
                (s + alpha * dsa) @ (z + alpha * dza)
                + (tau + alpha * dtaua) * (kappa + alpha * dkappaa)
            ) / degree
            sigma = float(np.clip((mu_aff / mu) ** 3, 0.0, 0.999))

            # corrector
            corr = _jordan_product(dims, scaling.apply_inv(dsa), scaling.apply(dza))
            dx, ds, dz, dtau, dkappa = direction(sigma, corr, dtaua * dkappaa)

            alpha = step_fraction * min(
                _max_step(dims, s, ds),
                _max_step(dims, z, dz),
                (-tau / dtau) if dtau < 0 else np.inf,
                (-kappa / dkappa) if dkappa < 0 else np.inf,
                1.0 / step_fraction,
            )
        if not np.isfinite(alpha) or alpha < 1e-10 or not np.isfinite(mu_aff):
            iters_done = it
            break
        x += alpha * dx
        s += alpha * ds
        z += alpha * dz
        tau += alpha * dtau
        kappa += alpha * dkappa

    xs, ss, zs, pres, dres, relgap = best
    if status == "max-iter" and max(pres, dres, relgap) <= tol:
        status = "optimal"
    return ConeSolution(
        x=xs,
        s=ss,
        z=zs,
        status=status,
        iterations=iters_done,
        primal_residual=pres,
        dual_residual=dres,
        duality_gap=relgap,
        gap_history=gap_history,
    )
