"""Fading-block generation, CSIT estimates/errors, and conditional SAA samples.

The transmitter only knows a channel estimate; the true channel is the
estimate plus an i.i.d. complex Gaussian error whose per-entry variance
scales as sigma_k^2 * P_t^(-alpha).  All draws are keyed by
(seed, block_index, purpose, sample_index) so blocks and samples are
independently reproducible and safe to generate from parallel workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Stream tags for the per-(seed, block) RNG keys.  Changing these changes
# every generated channel, so they are part of the reproducibility contract.
_TAG_ESTIMATE = 0
_TAG_BLOCK_ERROR = 1
_TAG_SAMPLE_ERROR = 2


@dataclass(frozen=True)
class ChannelConfig:
    """Static description of one simulated downlink.

    Attributes:
        num_users: number of single-antenna receivers K.
        num_tx_antennas: transmit antennas Nt.
        user_variances: per-user channel gain sigma_k^2 (length K).
        csit_alpha: CSIT quality exponent alpha >= 0; the estimation-error
            variance is sigma_k^2 * P_t^(-alpha) in linear scale.
        snr_db: transmit power in dB (unit noise, so SNR == power).
        rng_seed: base seed for all channel draws.
    """

    num_users: int
    num_tx_antennas: int
    user_variances: tuple[float, ...]
    csit_alpha: float
    snr_db: float
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.num_users < 1:
            raise ValueError("num_users must be >= 1")
        if self.num_tx_antennas < 1:
            raise ValueError("num_tx_antennas must be >= 1")
        if len(self.user_variances) != self.num_users:
            raise ValueError("user_variances must have one entry per user")
        if any(v <= 0 for v in self.user_variances):
            raise ValueError("user variances must be positive")
        if self.csit_alpha < 0:
            raise ValueError("csit_alpha must be >= 0")
        # Estimate variance sigma_k^2 - sigma_e,k^2 must not be negative.
        if self.csit_alpha > 0 and self.power_linear < 1.0:
            raise ValueError(
                "csit_alpha > 0 requires snr_db >= 0 dB, otherwise the "
                "error variance would exceed the channel variance"
            )

    @property
    def power_linear(self) -> float:
        """Transmit power P_t in linear scale."""
        return float(10.0 ** (self.snr_db / 10.0))

    def error_variance(self, user: int) -> float:
        """CSIT error variance sigma_e,k^2 = sigma_k^2 * P_t^(-alpha)."""
        return float(self.user_variances[user] * self.power_linear ** (-self.csit_alpha))

    def estimate_variance(self, user: int) -> float:
        """Per-entry variance of the channel estimate, sigma_k^2 - sigma_e,k^2."""
        return float(self.user_variances[user] - self.error_variance(user))


@dataclass(frozen=True)
class ChannelBlock:
    """One flat block-fading state: actual channel, estimate, and error.

    Matrices are Nt x K with column k the channel of user k, and satisfy
    H_actual = H_estimate + H_error entrywise by construction.
    """

    h_actual: np.ndarray
    h_estimate: np.ndarray
    h_error: np.ndarray
    block_index: int


@dataclass(frozen=True)
class SaaSampleSet:
    """Conditional channel samples sharing one estimate.

    samples[m] = base_estimate + errors[m]; the errors are fresh draws from
    the CSIT error distribution, so the set approximates the conditional
    distribution of the true channel given the estimate.
    """

    base_estimate: np.ndarray
    samples: np.ndarray  # (M, Nt, K) complex
    errors: np.ndarray  # (M, Nt, K) complex
    block_index: int = field(default=0)

    @property
    def num_samples(self) -> int:
        return int(self.samples.shape[0])


def _complex_gaussian(rng: np.random.Generator, shape: tuple[int, ...], variance: float) -> np.ndarray:
    """CSCG draw: independent real/imaginary normals of variance/2 each."""
    if variance <= 0.0:
        return np.zeros(shape, dtype=np.complex128)
    std = np.sqrt(variance / 2.0)
    return std * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def _rng(seed: int, block_index: int, tag: int, sample: int = 0) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=(block_index, tag, sample))
    )


def generate_block(config: ChannelConfig, block_index: int) -> ChannelBlock:
    """Draw one fading block with its CSIT estimate.

    Column k of the estimate is CN(0, (sigma_k^2 - sigma_e,k^2) I) and the
    error column is CN(0, sigma_e,k^2 I), so the actual channel column has
    variance sigma_k^2.  Deterministic given (rng_seed, block_index).
    """
    if block_index < 0:
        raise ValueError("block_index must be >= 0")
    nt, k = config.num_tx_antennas, config.num_users
    est_rng = _rng(config.rng_seed, block_index, _TAG_ESTIMATE)
    err_rng = _rng(config.rng_seed, block_index, _TAG_BLOCK_ERROR)
    h_est = np.empty((nt, k), dtype=np.complex128)
    h_err = np.empty((nt, k), dtype=np.complex128)
    for user in range(k):
        h_est[:, user] = _complex_gaussian(est_rng, (nt,), config.estimate_variance(user))
        h_err[:, user] = _complex_gaussian(err_rng, (nt,), config.error_variance(user))
    return ChannelBlock(
        h_actual=h_est + h_err,
        h_estimate=h_est,
        h_error=h_err,
        block_index=block_index,
    )


def draw_saa_samples(block: ChannelBlock, config: ChannelConfig, num_samples: int) -> SaaSampleSet:
    """Draw conditional samples H(m) = H_estimate + fresh error draws.

    Sample m is keyed by (rng_seed, block_index, m), so a longer run shares
    its leading samples with a shorter one and samples can be regenerated
    independently.
    """
    if num_samples < 1:
        raise ValueError("num_samples must be >= 1")
    nt, k = config.num_tx_antennas, config.num_users
    errors = np.empty((num_samples, nt, k), dtype=np.complex128)
    variances = [config.error_variance(u) for u in range(k)]
    for m in range(num_samples):
        rng = _rng(config.rng_seed, block.block_index, _TAG_SAMPLE_ERROR, m)
        for user in range(k):
            errors[m, :, user] = _complex_gaussian(rng, (nt,), variances[user])
    samples = block.h_estimate[None, :, :] + errors
    return SaaSampleSet(
        base_estimate=block.h_estimate.copy(),
        samples=samples,
        # re-derived so samples - estimate == errors holds exactly in floats
        errors=samples - block.h_estimate[None, :, :],
        block_index=block.block_index,
    )
