"""Per-block weighted average sum-rate maximization.

One alternating-optimization run repeats three closed-form/convex steps:
equalizers and MSE weights are set to their minimizers for the current
precoders on every conditional channel sample, then the precoders and rate
allocations are updated by solving a convex QCQP built from sample-averaged
constants.  The reported objective after each iteration is the true weighted
sum of SAA average rates, which is non-decreasing along the run.

The quadratic WMSE surrogate is kept in natural-log units internally: with
nu = ln(w) the closed-form updates g = MMSE and w = T/I are exact block
minimizers of the surrogate, which makes 1 - xi(P) a global lower bound on
the nat-rate and gives the monotone-ascent guarantee.  (With base-2 logs
w = T/I does not minimize w*eps - log2(w) and the ascent property provably
fails by up to 1 - (1 + ln ln 2)/ln 2 ~ 0.086 bit.)  Allocation variables
stay in bit units; their coefficients inside the subproblem carry the ln 2
conversion.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from rsmaopt import qcqp
from rsmaopt.channel import ChannelBlock, SaaSampleSet
from rsmaopt.qcqp import QcqpProblem, QuadExpr
from rsmaopt.rates import PrecoderSet, RateReport, rate_report
from rsmaopt.strategy import (
    Strategy,
    StreamId,
    StreamKind,
    StreamLayout,
    enumerate_orders,
    make_layout,
)


class QosInfeasibleError(RuntimeError):
    """QoS thresholds unsatisfiable for this block at this power."""


class SubproblemModelError(RuntimeError):
    """The subproblem is infeasible even with all QoS thresholds removed."""


@dataclass(frozen=True)
class AoConfig:
    """Alternating-optimization settings.

    epsilon is the stopping tolerance on the weighted sum of average rates
    (bit/s/Hz); num_inits multi-starts the common/private power split.
    """

    epsilon: float = 1e-4
    max_iters: int = 100
    num_inits: int = 1
    weights: tuple[float, ...] | None = None
    solver_tol: float = 1e-7
    solver_max_iters: int = 200
    accelerate: bool = True

    def __post_init__(self) -> None:
        if self.epsilon <= 0 or self.max_iters < 1 or self.num_inits < 1:
            raise ValueError("epsilon > 0, max_iters >= 1 and num_inits >= 1 required")
        if self.weights is not None and any(w <= 0 for w in self.weights):
            raise ValueError("user weights must be positive")

    def user_weights(self, num_users: int) -> tuple[float, ...]:
        if self.weights is None:
            return (1.0,) * num_users
        if len(self.weights) != num_users:
            raise ValueError("weights must have one entry per user")
        return self.weights


@dataclass
class AoState:
    """Mutable state of one AO run: precoders, allocations, (g, w) per sample."""

    precoders: PrecoderSet
    equalizers: dict[tuple[int, StreamId], np.ndarray] = field(default_factory=dict)
    mse_weights: dict[tuple[int, StreamId], np.ndarray] = field(default_factory=dict)
    iteration: int = 0
    wsr_history: list[float] = field(default_factory=list)


@dataclass
class AoDiagnostics:
    iterations: int
    converged: bool
    wsr_history: list[float]
    solver_statuses: list[str]
    init_index: int
    pi: tuple[int, ...] | None = None
    pi_prime: tuple[tuple[int, ...], ...] | None = None

    def to_json(self) -> str:
        """Per-run JSON record for offline inspection."""
        import json

        return json.dumps(
            {
                "iterations": self.iterations,
                "converged": self.converged,
                "wsr_history": self.wsr_history,
                "solver_statuses": self.solver_statuses,
                "init_index": self.init_index,
                "pi": list(self.pi) if self.pi is not None else None,
                "pi_prime": [list(p) for p in self.pi_prime] if self.pi_prime else None,
            }
        )


@dataclass
class AoResult:
    precoders: PrecoderSet
    report: RateReport
    diagnostics: AoDiagnostics


# -- initialization ------------------------------------------------------------

# multi-start schedule: (common-stream power fraction, private power profile);
# fraction None = SNR/CSIT heuristic, profile 0 = equal split across private
# streams, 1 = all on the strongest estimated user, 2 = 3/4 on the strongest.
# For layouts without a full-audience stream only the profile applies.
_INIT_SCHEDULE_COMMON = ((None, 0), (0.0, 0), (0.0, 1), (0.25, 0), (0.5, 0), (0.0, 2), (0.75, 0))
_INIT_SCHEDULE_PRIVATE_ONLY = ((None, 0), (None, 1), (None, 2))


def _unit(v: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(v)
    if norm < 1e-12:
        out = np.zeros_like(v)
        out[0] = 1.0
        return out
    return v / norm


def _private_profile(layout: StreamLayout, block: ChannelBlock, profile: int, budget: float) -> dict[StreamId, float]:
    privates = [layout.private_stream(u) for u in range(layout.num_users)]
    if profile == 0 or len(privates) == 1:
        return {s: budget / len(privates) for s in privates}
    norms = np.linalg.norm(block.h_estimate, axis=0)
    strongest = layout.private_stream(int(np.argmax(norms)))
    lead_share = 1.0 if profile == 1 else 0.75
    out = {}
    for s in privates:
        if s == strongest:
            out[s] = lead_share * budget
        else:
            out[s] = (1.0 - lead_share) * budget / max(1, len(privates) - 1)
    return out


def init_precoders(
    layout: StreamLayout,
    block: ChannelBlock,
    power: float,
    init_index: int = 0,
    csit_alpha: float = 0.5,
) -> PrecoderSet:
    """Matched-filter private precoders plus subspace-matched shared precoders.

    Private stream directions follow the estimated user channel; shared
    streams point along the dominant left singular vector of the estimated
    channels of their audience.  Multi-starts sweep the full-audience
    stream's power fraction (an SNR/CSIT-driven heuristic first, then fixed
    fractions, fraction zero giving the private-only corner) and the private
    power profile (equal split, all-to-strongest, 3/4-to-strongest), so the
    single-user and no-common corners are always among the starts.  The
    total power equals the budget exactly.
    """
    h_est = block.h_estimate
    streams = layout.streams
    full = [s for s in streams if len(s.audience) == layout.num_users and not s.is_private]

    schedule = _INIT_SCHEDULE_COMMON if full else _INIT_SCHEDULE_PRIVATE_ONLY
    fraction, profile = schedule[init_index % len(schedule)]
    if fraction is None:
        fraction = 1.0 - power ** (-(1.0 - min(csit_alpha, 1.0)))
        fraction = float(np.clip(fraction, 0.1, 0.9))
    if not full:
        fraction = 0.0

    powers: dict[StreamId, float] = {}
    if full:
        lead = full[0]
        powers[lead] = fraction * power
        other_common = [s for s in streams if not s.is_private and s != lead]
        remaining = (1.0 - fraction) * power
        # the remainder splits evenly over all non-lead streams; the private
        # share is then redistributed by the private profile
        share = remaining / (len(other_common) + layout.num_users)
        for s in other_common:
            powers[s] = share
        powers.update(_private_profile(layout, block, profile, share * layout.num_users))
    else:
        powers.update(_private_profile(layout, block, profile, power))

    vectors: dict[StreamId, np.ndarray] = {}
    for s in streams:
        if s.is_private:
            direction = _unit(h_est[:, s.owner])
        else:
            sub = h_est[:, sorted(s.audience)]
            if np.linalg.norm(sub) < 1e-12:
                direction = _unit(np.zeros(h_est.shape[0], dtype=np.complex128))
            else:
                u_mat, _, _ = np.linalg.svd(sub, full_matrices=False)
                direction = u_mat[:, 0]
        vectors[s] = np.sqrt(powers[s]) * direction
    return PrecoderSet(vectors=vectors)


# -- closed-form updates -------------------------------------------------------


def _per_user_products(
    layout: StreamLayout, precoders: PrecoderSet, samples: SaaSampleSet, user: int
) -> tuple[np.ndarray, np.ndarray]:
    pmat = precoders.as_matrix(layout)
    return np.conj(samples.samples[:, :, user]) @ pmat, np.conj(samples.errors[:, :, user]) @ pmat


def _chain_terms(
    layout: StreamLayout,
    inner_actual: np.ndarray,
    inner_error: np.ndarray,
    user: int,
    stream: StreamId,
) -> tuple[np.ndarray, np.ndarray]:
    actual_idx, error_idx = layout.interference_indices(user, stream)
    interf = np.ones(inner_actual.shape[0])
    if actual_idx:
        interf = interf + np.sum(np.abs(inner_actual[:, list(actual_idx)]) ** 2, axis=1)
    if error_idx:
        interf = interf + np.sum(np.abs(inner_error[:, list(error_idx)]) ** 2, axis=1)
    total = interf + np.abs(inner_actual[:, layout.stream_index(stream)]) ** 2
    return interf, total


def update_g(state: AoState, layout: StreamLayout, samples: SaaSampleSet) -> AoState:
    """Set every equalizer to its MMSE value at the current precoders."""
    for user in range(layout.num_users):
        inner_actual, inner_error = _per_user_products(layout, state.precoders, samples, user)
        for stream in layout.decode_chain(user):
            _, total = _chain_terms(layout, inner_actual, inner_error, user, stream)
            hp = inner_actual[:, layout.stream_index(stream)]
            state.equalizers[(user, stream)] = np.conj(hp) / total
    return state


def update_w(state: AoState, layout: StreamLayout, samples: SaaSampleSet) -> AoState:
    """Set every MSE weight to its optimal value T/I at the current precoders."""
    for user in range(layout.num_users):
        inner_actual, inner_error = _per_user_products(layout, state.precoders, samples, user)
        for stream in layout.decode_chain(user):
            interf, total = _chain_terms(layout, inner_actual, inner_error, user, stream)
            state.mse_weights[(user, stream)] = total / interf
    return state


# -- subproblem assembly -------------------------------------------------------


@dataclass(frozen=True)
class AllocIndex:
    """Deterministic numbering of the allocation variables of a layout."""

    entries: tuple[tuple[int, StreamId], ...]  # (user, stream) rate shares
    multicast_var: int | None  # index of the multicast-message variable

    @property
    def size(self) -> int:
        return len(self.entries) + (1 if self.multicast_var is not None else 0)

    def position(self, user: int, stream: StreamId) -> int:
        return self.entries.index((user, stream))


def alloc_index(layout: StreamLayout) -> AllocIndex:
    entries = []
    for stream in layout.alloc_streams:
        for user in layout.alloc_beneficiaries(stream):
            entries.append((user, stream))
    multicast_var = len(entries) if layout.multicast_stream is not None else None
    return AllocIndex(entries=tuple(entries), multicast_var=multicast_var)


@dataclass(frozen=True)
class AveragedConstants:
    """Sample averages behind one decode step's quadratic WMSE upper bound."""

    psi_factors: tuple[tuple[float, np.ndarray], ...]  # actual-channel rank-one factors
    phi_factors: tuple[tuple[float, np.ndarray], ...]  # error-channel rank-one factors
    f_bar: np.ndarray
    t_bar: float
    w_bar: float
    nu_bar: float


def _psd_factors(mat: np.ndarray) -> tuple[tuple[float, np.ndarray], ...]:
    """Eigen-factorization of a PSD Hermitian matrix into rank-one terms."""
    vals, vecs = np.linalg.eigh(mat)
    top = float(vals[-1]) if vals.size else 0.0
    keep = []
    for idx in range(vals.size):
        lam = float(vals[idx])
        if lam > max(1e-14, 1e-12 * top):
            keep.append((lam, vecs[:, idx].copy()))
    return tuple(keep)


def averaged_constants(
    state: AoState, layout: StreamLayout, samples: SaaSampleSet, user: int, stream: StreamId
) -> AveragedConstants:
    g = state.equalizers[(user, stream)]
    w = state.mse_weights[(user, stream)]
    m = samples.num_samples
    t = w * np.abs(g) ** 2
    h_act = samples.samples[:, :, user]
    psi = (h_act.T * t) @ np.conj(h_act) / m
    _, error_idx = layout.interference_indices(user, stream)
    phi_factors: tuple[tuple[float, np.ndarray], ...] = ()
    if error_idx:
        h_err = samples.errors[:, :, user]
        phi = (h_err.T * t) @ np.conj(h_err) / m
        phi_factors = _psd_factors(phi)
    f_bar = (h_act.T @ (w * np.conj(g))) / m
    return AveragedConstants(
        psi_factors=_psd_factors(psi),
        phi_factors=phi_factors,
        f_bar=f_bar,
        t_bar=float(np.mean(t)),
        w_bar=float(np.mean(w)),
        nu_bar=float(np.mean(np.log(w))),
    )


def _wmse_expr(
    layout: StreamLayout,
    constants: AveragedConstants,
    user: int,
    stream: StreamId,
    num_alloc: int,
    label: str,
) -> QuadExpr:
    """Quadratic surrogate of the average WMSE of one decode step.

    Interfering streams and the decoded stream itself carry the
    actual-channel quadratic; dirty-paper-precanceled streams carry the
    error-channel quadratic; the decoded stream additionally gets the linear
    matched term.
    """
    expr = QuadExpr(lin_a=np.zeros(num_alloc), label=label)
    actual_idx, error_idx = layout.interference_indices(user, stream)
    own = layout.stream_index(stream)
    for j in list(actual_idx) + [own]:
        for lam, vec in constants.psi_factors:
            expr.add_factor(j, lam, vec)
    for j in error_idx:
        for lam, vec in constants.phi_factors:
            expr.add_factor(j, lam, vec)
    expr.lin_p[own] = -constants.f_bar
    expr.const = constants.t_bar + constants.w_bar - constants.nu_bar
    return expr


def assemble_subproblem(
    state: AoState,
    layout: StreamLayout,
    samples: SaaSampleSet,
    ao_config: AoConfig,
    power: float,
    qos_scale: float = 1.0,
) -> QcqpProblem:
    """Build the convex precoder/allocation subproblem at the current (g, w).

    Objective: weighted sum over users of allocated shares (sign-flipped)
    plus the direct private WMSE surrogate.  Constraints: one per
    (shared stream, audience member) tying the stream's allocations to that
    member's WMSE surrogate, one QoS row per user, the total power ball, and
    nonpositivity of the share variables (the multicast share is bounded by
    minus its rate floor).
    """
    weights = ao_config.user_weights(layout.num_users)
    index = alloc_index(layout)
    na = index.size

    consts: dict[tuple[int, StreamId], AveragedConstants] = {}
    for user in range(layout.num_users):
        for stream in layout.decode_chain(user):
            consts[(user, stream)] = averaged_constants(state, layout, samples, user, stream)

    ln2 = float(np.log(2.0))
    objective = QuadExpr(lin_a=np.zeros(na), label="objective")
    for user in range(layout.num_users):
        for stream in layout.alloc_streams:
            if user in layout.alloc_beneficiaries(stream):
                objective.lin_a[index.position(user, stream)] += weights[user] * ln2
        if layout.has_direct_private(user):
            own = layout.private_stream(user)
            expr = _wmse_expr(layout, consts[(user, own)], user, own, na, "")
            for j, factors in expr.quad.items():
                for t, h in factors:
                    objective.add_factor(j, weights[user] * t, h)
            objective.lin_p[layout.stream_index(own)] = (
                objective.lin_p.get(layout.stream_index(own), 0.0) + weights[user] * expr.lin_p[layout.stream_index(own)]
            )
            objective.const += weights[user] * expr.const

    constraints: list[QuadExpr] = []

    # decodability of each shared stream at every audience member
    for stream in layout.alloc_streams:
        beneficiaries = layout.alloc_beneficiaries(stream)
        for user in sorted(stream.audience):
            expr = _wmse_expr(
                layout, consts[(user, stream)], user, stream, na,
                f"share[{stream.label()}]@u{user}",
            )
            for k in beneficiaries:
                expr.lin_a[index.position(k, stream)] -= ln2
            if stream.kind == StreamKind.MULTICAST:
                expr.lin_a[index.multicast_var] -= ln2
            expr.const -= 1.0
            constraints.append(expr)

    # per-user QoS: surrogate total rate >= threshold
    for user in range(layout.num_users):
        threshold = layout.qos_thresholds[user] * qos_scale
        if layout.has_direct_private(user):
            own = layout.private_stream(user)
            expr = _wmse_expr(layout, consts[(user, own)], user, own, na, f"qos@u{user}")
            expr.const -= 1.0 - threshold * ln2
            alloc_coeff = ln2
        else:
            expr = QuadExpr(lin_a=np.zeros(na), const=threshold, label=f"qos@u{user}")
            alloc_coeff = 1.0
        for stream in layout.alloc_streams:
            if user in layout.alloc_beneficiaries(stream):
                expr.lin_a[index.position(user, stream)] += alloc_coeff
        constraints.append(expr)

    alloc_upper = np.zeros(na)
    if index.multicast_var is not None:
        alloc_upper[index.multicast_var] = -layout.multicast_threshold * qos_scale

    return QcqpProblem(
        num_streams=len(layout.streams),
        num_tx=next(iter(state.precoders.vectors.values())).shape[0],
        num_alloc=na,
        objective=objective,
        constraints=constraints,
        power_limit=power,
        alloc_upper=alloc_upper,
    )


def _apply_solution(
    layout: StreamLayout,
    state: AoState,
    solution: qcqp.QcqpSolution,
    power: float,
) -> None:
    index = alloc_index(layout)
    vectors = {s: solution.precoders[i] for i, s in enumerate(layout.streams)}
    total = sum(float(np.vdot(p, p).real) for p in vectors.values())
    if total > power:
        scale = np.sqrt(power / total)
        vectors = {s: scale * p for s, p in vectors.items()}
    alloc = {
        (user, stream): max(0.0, -float(solution.allocations[i]))
        for i, (user, stream) in enumerate(index.entries)
    }
    multicast = 0.0
    if index.multicast_var is not None:
        multicast = max(0.0, -float(solution.allocations[index.multicast_var]))
    state.precoders = PrecoderSet(vectors=vectors, common_alloc=alloc, multicast_alloc=multicast)


def _normalize_allocations(
    layout: StreamLayout, precoders: PrecoderSet, samples: SaaSampleSet
) -> None:
    """Clamp solver-tolerance overshoot of share sums against the true rates."""
    from rsmaopt.rates import all_average_rates

    per_stream = all_average_rates(layout, precoders, samples)
    for stream in layout.alloc_streams:
        budget = min(per_stream[(u, stream)] for u in sorted(stream.audience))
        users = layout.alloc_beneficiaries(stream)
        total_users = sum(precoders.alloc(u, stream) for u in users)
        multicast = precoders.multicast_alloc if stream.kind == StreamKind.MULTICAST else 0.0
        excess = total_users + multicast - budget
        if excess <= 0:
            continue
        if multicast > budget:
            precoders.multicast_alloc = budget
            multicast = budget
        room = budget - multicast
        if total_users > 0:
            scale = max(0.0, room / total_users)
            for u in users:
                precoders.common_alloc[(u, stream)] = precoders.alloc(u, stream) * scale


def _extrapolated_candidate(
    layout: StreamLayout,
    prev_vectors: dict[StreamId, np.ndarray],
    new_vectors: dict[StreamId, np.ndarray],
    theta: float,
    power: float,
    samples: SaaSampleSet,
    weights: tuple[float, ...],
) -> tuple[PrecoderSet, RateReport]:
    """Step past the plain update along the last move, with rates re-split.

    Only used when every rate floor is zero, so the best allocation given
    the precoders is simply each shared stream's full decodable rate to its
    highest-weight beneficiary.
    """
    from rsmaopt.rates import all_average_rates

    cand = {s: prev_vectors[s] + theta * (new_vectors[s] - prev_vectors[s]) for s in layout.streams}
    total = sum(float(np.vdot(p, p).real) for p in cand.values())
    if total > power:
        scale = np.sqrt(power / total)
        cand = {s: scale * p for s, p in cand.items()}
    precoders = PrecoderSet(vectors=cand)
    rates = all_average_rates(layout, precoders, samples)
    for stream in layout.alloc_streams:
        beneficiaries = layout.alloc_beneficiaries(stream)
        if not beneficiaries:
            continue
        budget = max(0.0, min(rates[(u, stream)] for u in sorted(stream.audience)))
        top = max(weights[u] for u in beneficiaries)
        targets = [u for u in beneficiaries if weights[u] == top]
        for u in targets:  # even split among tied weights keeps symmetry
            precoders.common_alloc[(u, stream)] = budget / len(targets)
    report = rate_report(layout, precoders, samples, weights)
    return precoders, report


_EXTRAPOLATION_THETAS = (2.0, 4.0, 8.0)


def ao_optimize(
    layout: StreamLayout,
    block: ChannelBlock,
    samples: SaaSampleSet,
    ao_config: AoConfig,
    power: float,
    csit_alpha: float = 0.5,
) -> AoResult:
    """Alternate closed-form (g, w) updates with QCQP precoder updates.

    Runs num_inits multi-starts and returns the best by achieved weighted
    sum of average rates.  Raises QosInfeasibleError when the very first
    subproblem of every start is infeasible (the block cannot meet its rate
    floors at this power), after a zero-threshold probe has confirmed the
    infeasibility is genuinely QoS-driven.
    """
    weights = ao_config.user_weights(layout.num_users)
    can_accelerate = (
        ao_config.accelerate
        and all(t == 0.0 for t in layout.qos_thresholds)
        and layout.multicast_threshold == 0.0
    )
    best: AoResult | None = None
    infeasible_inits = 0

    for init_idx in range(ao_config.num_inits):
        state = AoState(precoders=init_precoders(layout, block, power, init_idx, csit_alpha))
        report = rate_report(layout, state.precoders, samples, weights)
        state.wsr_history.append(report.wsr)
        statuses: list[str] = []
        converged = False

        for iteration in range(1, ao_config.max_iters + 1):
            prev_vectors = {s: v.copy() for s, v in state.precoders.vectors.items()}
            update_g(state, layout, samples)
            update_w(state, layout, samples)
            problem = assemble_subproblem(state, layout, samples, ao_config, power)
            solution = qcqp.solve(problem, tol=ao_config.solver_tol, max_iters=ao_config.solver_max_iters)
            statuses.append(solution.status)

            if solution.status in ("infeasible", "unbounded"):
                if iteration == 1:
                    probe = assemble_subproblem(state, layout, samples, ao_config, power, qos_scale=0.0)
                    probe_sol = qcqp.solve(probe, tol=ao_config.solver_tol, max_iters=ao_config.solver_max_iters)
                    if probe_sol.status in ("infeasible", "unbounded"):
                        raise SubproblemModelError(
                            f"subproblem infeasible with zero thresholds (status {probe_sol.status})"
                        )
                    infeasible_inits += 1
                break

            _apply_solution(layout, state, solution, power)
            _normalize_allocations(layout, state.precoders, samples)
            report = rate_report(layout, state.precoders, samples, weights)

            if can_accelerate:
                # monotone safeguard: only ever replace the plain step with a
                # strictly better extrapolated point
                plain_vectors = state.precoders.vectors
                for theta in _EXTRAPOLATION_THETAS:
                    cand, cand_report = _extrapolated_candidate(
                        layout, prev_vectors, plain_vectors, theta, power, samples, weights
                    )
                    if cand_report.wsr > report.wsr:
                        state.precoders = cand
                        report = cand_report

            state.iteration = iteration
            state.wsr_history.append(report.wsr)
            if abs(state.wsr_history[-1] - state.wsr_history[-2]) <= ao_config.epsilon:
                converged = True
                break

        if statuses and statuses[0] in ("infeasible", "unbounded"):
            continue  # this start never produced a feasible point

        result = AoResult(
            precoders=state.precoders,
            report=report,
            diagnostics=AoDiagnostics(
                iterations=state.iteration,
                converged=converged,
                wsr_history=list(state.wsr_history),
                solver_statuses=statuses,
                init_index=init_idx,
            ),
        )
        if best is None or result.report.wsr > best.report.wsr:
            best = result

    if best is None:
        raise QosInfeasibleError(
            f"all {ao_config.num_inits} starts hit an infeasible first subproblem"
        )
    return best


@dataclass(frozen=True)
class StrategySpec:
    """A strategy plus the per-run knobs that shape its layout."""

    strategy: Strategy
    groups: tuple[tuple[int, ...], ...] | None = None
    qos: tuple[float, ...] | None = None
    multicast: bool = False
    multicast_threshold: float = 0.0
    order_override: tuple[int, ...] | None = None

    def resolve_order(self, pi: tuple[int, ...] | None, block: ChannelBlock) -> tuple[int, ...]:
        """Concrete user order; channel-strength based when none is given.

        For superposition decoding the convention is weakest estimated
        channel first, so every user strips the weakest user's stream first.
        """
        if pi is not None:
            return pi
        if self.order_override is not None:
            return self.order_override
        norms = np.linalg.norm(block.h_estimate, axis=0)
        return tuple(int(u) for u in np.argsort(norms, kind="stable"))

    def layout_for(
        self,
        num_users: int,
        pi: tuple[int, ...] | None,
        pi_prime: tuple[tuple[int, ...], ...] | None,
        block: ChannelBlock,
    ) -> StreamLayout:
        return make_layout(
            self.strategy,
            num_users,
            pi=self.resolve_order(pi, block),
            pi_prime=pi_prime,
            groups=self.groups,
            qos=self.qos,
            multicast=self.multicast,
            multicast_threshold=self.multicast_threshold,
        )


def best_over_orders(
    spec: StrategySpec,
    num_users: int,
    block: ChannelBlock,
    samples: SaaSampleSet,
    ao_config: AoConfig,
    power: float,
    csit_alpha: float = 0.5,
) -> AoResult:
    """Optimize every admissible (encoding, decode-priority) order and keep the best.

    A block counts as QoS-infeasible only when every order is.
    """
    results: list[AoResult] = []
    infeasible = 0
    orders = enumerate_orders(spec.strategy, num_users)
    if spec.strategy in (Strategy.SC_SIC, Strategy.SC_SIC_PER_GROUP) or spec.order_override is not None:
        orders = orders[:1] if spec.order_override is None else [(spec.order_override, orders[0][1])]
    for pi, pi_prime in orders:
        resolved_pi = spec.resolve_order(pi, block)
        layout = spec.layout_for(num_users, resolved_pi, pi_prime, block)
        try:
            result = ao_optimize(layout, block, samples, ao_config, power, csit_alpha)
        except QosInfeasibleError:
            infeasible += 1
            continue
        result.diagnostics.pi = resolved_pi
        result.diagnostics.pi_prime = pi_prime
        results.append(result)
    if not results:
        raise QosInfeasibleError(f"all {infeasible} orders are QoS-infeasible on this block")
    return max(results, key=lambda r: r.report.wsr)
