"""Precoder optimization toolkit for the MISO broadcast channel with partial CSIT.

Eight transmission strategies (MU-LP, SC-SIC, SC-SIC per group, 1-layer RS,
generalized RS, DPC, 1-DPCRS, M-DPCRS) are optimized per fading block with a
sample-average-approximation of the average user rates and a WMMSE-based
alternating-optimization loop whose inner step is a convex QCQP solved by an
in-house second-order-cone interior-point method.
"""

from rsmaopt.channel import ChannelBlock, ChannelConfig, SaaSampleSet, draw_saa_samples, generate_block
from rsmaopt.strategy import Strategy, StreamId, StreamKind, StreamLayout, enumerate_orders, make_layout
from rsmaopt.rates import PrecoderSet, RateReport, average_rate, instantaneous_rate, rate_report
from rsmaopt.optimizer import AoConfig, ao_optimize, best_over_orders, init_precoders

__version__ = "0.1.0"

__all__ = [
    "AoConfig",
    "ChannelBlock",
    "ChannelConfig",
    "PrecoderSet",
    "RateReport",
    "SaaSampleSet",
    "Strategy",
    "StreamId",
    "StreamKind",
    "StreamLayout",
    "ao_optimize",
    "average_rate",
    "best_over_orders",
    "draw_saa_samples",
    "enumerate_orders",
    "generate_block",
    "init_precoders",
    "instantaneous_rate",
    "make_layout",
    "rate_report",
]
