"""Per-stream rates, MSEs and MMSE quantities for any stream layout.

Noise power is normalized to one everywhere, so transmit power doubles as
SNR, and all rates are in bit/s/Hz (base-2 logs).  The decoding SINR of a
stream follows from the layout's interference set: an interferer seen
through the actual channel contributes |h^H p|^2, one seen through the
estimation error contributes |h_err^H p|^2.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from rsmaopt.channel import ChannelBlock, SaaSampleSet
from rsmaopt.strategy import StreamId, StreamKind, StreamLayout

ALLOC_FEAS_TOL = 1e-6


@dataclass
class PrecoderSet:
    """Precoding vectors per stream plus the rate split of shared streams.

    common_alloc maps (user, stream) to the slice of a shared stream's
    decodable rate assigned to that user; multicast_alloc is the rate of the
    multicast message carried by the multicast stream.
    """

    vectors: dict[StreamId, np.ndarray]
    common_alloc: dict[tuple[int, StreamId], float] = field(default_factory=dict)
    multicast_alloc: float = 0.0

    def total_power(self) -> float:
        return float(sum(np.vdot(p, p).real for p in self.vectors.values()))

    def check_power(self, power_limit: float, slack: float = 1e-8) -> None:
        if self.total_power() > power_limit + slack:
            raise ValueError(
                f"precoder power {self.total_power():.6g} exceeds limit {power_limit:.6g}"
            )

    def as_matrix(self, layout: StreamLayout) -> np.ndarray:
        """Stack precoders into an Nt x S matrix in layout stream order."""
        return np.column_stack([self.vectors[s] for s in layout.streams])

    def alloc(self, user: int, stream: StreamId) -> float:
        return float(self.common_alloc.get((user, stream), 0.0))


@dataclass(frozen=True)
class RateReport:
    """Average rates of one block: per stream/user, per shared stream, per user."""

    per_stream_user_rate: dict[tuple[int, StreamId], float]
    per_stream_common_rate: dict[StreamId, float]
    per_user_total: dict[int, float]
    wsr: float


def _user_channels(channel, user: int) -> tuple[np.ndarray, np.ndarray]:
    """Actual and error channel vectors of one user from a block-like object."""
    if isinstance(channel, ChannelBlock):
        return channel.h_actual[:, user], channel.h_error[:, user]
    actual, error = channel
    return np.asarray(actual), np.asarray(error)


def _signal_and_interference(
    layout: StreamLayout,
    precoders: PrecoderSet,
    h_actual: np.ndarray,
    h_error: np.ndarray,
    user: int,
    stream: StreamId,
) -> tuple[float, float]:
    actual_idx, error_idx = layout.interference_indices(user, stream)
    inner_actual = np.conj(h_actual) @ precoders.as_matrix(layout)
    inner_error = np.conj(h_error) @ precoders.as_matrix(layout)
    interf = 1.0
    if actual_idx:
        interf += float(np.sum(np.abs(inner_actual[list(actual_idx)]) ** 2))
    if error_idx:
        interf += float(np.sum(np.abs(inner_error[list(error_idx)]) ** 2))
    signal = float(np.abs(inner_actual[layout.stream_index(stream)]) ** 2)
    return signal, interf


def instantaneous_rate(layout: StreamLayout, precoders: PrecoderSet, channel, user: int, stream: StreamId) -> float:
    """log2(1 + SINR) of decoding `stream` at `user` in one fading state."""
    h_actual, h_error = _user_channels(channel, user)
    signal, interf = _signal_and_interference(layout, precoders, h_actual, h_error, user, stream)
    return float(np.log2(1.0 + signal / interf))


def mse(layout: StreamLayout, precoders: PrecoderSet, channel, user: int, stream: StreamId, equalizer: complex) -> float:
    """Mean square error |g|^2 T - 2 Re{g h^H p} + 1 of a scalar equalizer g."""
    h_actual, h_error = _user_channels(channel, user)
    signal, interf = _signal_and_interference(layout, precoders, h_actual, h_error, user, stream)
    t_total = interf + signal
    hp = np.conj(h_actual) @ precoders.vectors[stream]
    g = complex(equalizer)
    return float(abs(g) ** 2 * t_total - 2.0 * (g * hp).real + 1.0)


def mmse_equalizer(layout: StreamLayout, precoders: PrecoderSet, channel, user: int, stream: StreamId) -> complex:
    """MSE-minimizing equalizer p^H h / T."""
    h_actual, h_error = _user_channels(channel, user)
    signal, interf = _signal_and_interference(layout, precoders, h_actual, h_error, user, stream)
    hp = np.conj(h_actual) @ precoders.vectors[stream]
    return complex(np.conj(hp) / (interf + signal))


def mmse_weight(layout: StreamLayout, precoders: PrecoderSet, channel, user: int, stream: StreamId) -> float:
    """Optimal MSE weight T / I = 1 / mse(g*); always >= 1."""
    h_actual, h_error = _user_channels(channel, user)
    signal, interf = _signal_and_interference(layout, precoders, h_actual, h_error, user, stream)
    return float((interf + signal) / interf)


# -- vectorized sample machinery ----------------------------------------------


def stream_inner_products(
    layout: StreamLayout, precoders: PrecoderSet, samples: SaaSampleSet, user: int
) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample inner products h^H p_j for the actual and error channels.

    Returns (A, E), each of shape (M, S): A[m, j] is the product of user
    `user`'s m-th sampled channel with stream j's precoder, E the same for
    the sampled estimation error.
    """
    pmat = precoders.as_matrix(layout)
    h_act = samples.samples[:, :, user]
    h_err = samples.errors[:, :, user]
    return np.conj(h_act) @ pmat, np.conj(h_err) @ pmat


def sinr_terms(
    layout: StreamLayout,
    inner_actual: np.ndarray,
    inner_error: np.ndarray,
    user: int,
    stream: StreamId,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample (signal power, interference-plus-noise) for one decode step."""
    actual_idx, error_idx = layout.interference_indices(user, stream)
    interf = np.ones(inner_actual.shape[0])
    if actual_idx:
        interf = interf + np.sum(np.abs(inner_actual[:, list(actual_idx)]) ** 2, axis=1)
    if error_idx:
        interf = interf + np.sum(np.abs(inner_error[:, list(error_idx)]) ** 2, axis=1)
    signal = np.abs(inner_actual[:, layout.stream_index(stream)]) ** 2
    return signal, interf


def average_rate(
    layout: StreamLayout, precoders: PrecoderSet, samples: SaaSampleSet, user: int, stream: StreamId
) -> float:
    """Sample mean of instantaneous decode rates over the conditional samples.

    The precoders are held fixed across all samples; the mean approximates
    the expected rate given the channel estimate.
    """
    inner_actual, inner_error = stream_inner_products(layout, precoders, samples, user)
    signal, interf = sinr_terms(layout, inner_actual, inner_error, user, stream)
    return float(np.mean(np.log2(1.0 + signal / interf)))


def all_average_rates(
    layout: StreamLayout, precoders: PrecoderSet, samples: SaaSampleSet
) -> dict[tuple[int, StreamId], float]:
    """Average rate of every decode step of every user (one pass per user)."""
    rates: dict[tuple[int, StreamId], float] = {}
    for user in range(layout.num_users):
        inner_actual, inner_error = stream_inner_products(layout, precoders, samples, user)
        for stream in layout.decode_chain(user):
            signal, interf = sinr_terms(layout, inner_actual, inner_error, user, stream)
            rates[(user, stream)] = float(np.mean(np.log2(1.0 + signal / interf)))
    return rates


def rate_report(
    layout: StreamLayout,
    precoders: PrecoderSet,
    samples: SaaSampleSet,
    weights: tuple[float, ...] | None = None,
) -> RateReport:
    """Assemble average rates, shared-stream minima, user totals and the WSR.

    A user's total is its allocated slices of shared streams plus its own
    private rate when that stream is decoded by the user alone; the
    multicast allocation belongs to the multicast message and counts toward
    no user.  Raises if the allocations of any shared stream exceed the
    stream's decodable rate beyond feasibility tolerance.
    """
    if weights is None:
        weights = (1.0,) * layout.num_users
    per_stream = all_average_rates(layout, precoders, samples)

    common_rates: dict[StreamId, float] = {}
    for stream in layout.alloc_streams:
        common_rates[stream] = min(per_stream[(u, stream)] for u in sorted(stream.audience))

    for stream in layout.alloc_streams:
        total_alloc = sum(precoders.alloc(u, stream) for u in layout.alloc_beneficiaries(stream))
        if stream.kind == StreamKind.MULTICAST:
            total_alloc += precoders.multicast_alloc
        if total_alloc > common_rates[stream] + ALLOC_FEAS_TOL:
            raise ValueError(
                f"allocations on stream {stream.label()} ({total_alloc:.8f}) exceed its "
                f"decodable rate ({common_rates[stream]:.8f})"
            )

    totals: dict[int, float] = {}
    for user in range(layout.num_users):
        total = 0.0
        for stream in layout.alloc_streams:
            if user in layout.alloc_beneficiaries(stream):
                total += precoders.alloc(user, stream)
        if layout.has_direct_private(user):
            total += per_stream[(user, layout.private_stream(user))]
        totals[user] = total

    wsr = float(sum(weights[u] * totals[u] for u in range(layout.num_users)))
    return RateReport(
        per_stream_user_rate=per_stream,
        per_stream_common_rate=common_rates,
        per_user_total=totals,
        wsr=wsr,
    )
