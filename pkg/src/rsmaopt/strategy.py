"""Transmission strategies as stream layouts.

Every supported strategy is reduced to one structural object: the set of
streams, who decodes each stream (its audience), the per-user decode chain,
the dirty-paper encoding order for nonlinearly precoded private streams, and
the decode priority of multi-user streams.  Rate and optimizer code works off
this structure only, with no per-strategy branches.

Conventions:
  * users are 0-based indices 0..K-1;
  * a stream's audience is the set of users that must decode it, so the
    decodable rate of a multi-user stream is the minimum over its audience;
  * decode chains order streams by decreasing audience size (ties among
    two-user common streams broken by the configured priority order), with
    the user's own private stream last.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from math import factorial


class Strategy(str, Enum):
    """Strategy names as they appear in config files and result CSVs."""

    MU_LP = "MU-LP"
    SC_SIC = "SC-SIC"
    SC_SIC_PER_GROUP = "SC-SIC-per-group"
    ONE_LAYER_RS = "1-layer-RS"
    GENERALIZED_RS = "generalized-RS"
    DPC = "DPC"
    ONE_DPCRS = "1-DPCRS"
    M_DPCRS = "M-DPCRS"


DPC_FAMILY = (Strategy.DPC, Strategy.ONE_DPCRS, Strategy.M_DPCRS)
MULTI_LAYER = (Strategy.GENERALIZED_RS, Strategy.M_DPCRS)


class StreamKind(str, Enum):
    COMMON = "common"
    PRIVATE_LINEAR = "private-linear"
    PRIVATE_DPC = "private-dpc"
    MULTICAST = "multicast"


class ChannelKind(str, Enum):
    ACTUAL = "actual"
    ERROR = "error"


@dataclass(frozen=True)
class StreamId:
    """One transmitted stream: what kind it is and who decodes it.

    owner is set for private streams only and names the user whose message
    the stream carries; for superposition-coded layouts the audience of a
    private stream also contains the stronger users that strip it via SIC.
    """

    kind: StreamKind
    audience: frozenset[int]
    owner: int | None = None

    def __post_init__(self) -> None:
        if not self.audience:
            raise ValueError("stream audience must be non-empty")
        if self.kind in (StreamKind.PRIVATE_LINEAR, StreamKind.PRIVATE_DPC):
            if self.owner is None or self.owner not in self.audience:
                raise ValueError("private streams need an owner inside their audience")
        elif self.owner is not None:
            raise ValueError("only private streams have an owner")

    @property
    def is_private(self) -> bool:
        return self.kind in (StreamKind.PRIVATE_LINEAR, StreamKind.PRIVATE_DPC)

    def label(self) -> str:
        """Short human-readable name, e.g. c012, m01, p1, s1->012."""
        aud = "".join(str(u) for u in sorted(self.audience))
        if self.kind == StreamKind.MULTICAST:
            return f"m{aud}"
        if self.kind == StreamKind.COMMON:
            return f"c{aud}"
        if len(self.audience) > 1:
            return f"s{self.owner}->{aud}"
        return f"p{self.owner}"


@dataclass(frozen=True)
class InterferenceTerm:
    """A stream still present when decoding, and through which channel it is seen."""

    stream: StreamId
    channel_kind: ChannelKind


@dataclass(frozen=True)
class StreamLayout:
    """Structural description of one transmission strategy for K users.

    Two strategies that transmit identical streams with identical decode
    structure compare equal, which is how the layout-reduction identities
    (e.g. the two-user multi-layer schemes collapsing to their one-layer
    counterparts) are expressed.
    """

    num_users: int
    streams: tuple[StreamId, ...]
    dpc_order: tuple[int, ...] | None
    common_decode_order: tuple[StreamId, ...]
    qos_thresholds: tuple[float, ...]
    multicast_threshold: float = 0.0
    multicast_carries_common: bool = field(default=False)

    def __post_init__(self) -> None:
        private_kinds = {s.kind for s in self.streams if s.is_private}
        if len(private_kinds) > 1:
            raise ValueError("cannot mix linear and dirty-paper private streams")
        if StreamKind.PRIVATE_DPC in private_kinds and self.dpc_order is None:
            raise ValueError("dirty-paper streams require an encoding order")
        if self.dpc_order is not None and sorted(self.dpc_order) != list(range(self.num_users)):
            raise ValueError("dpc_order must be a permutation of all users")
        owners = sorted(s.owner for s in self.streams if s.is_private)
        if owners != list(range(self.num_users)):
            raise ValueError("each user needs exactly one private stream")
        if len(self.qos_thresholds) != self.num_users:
            raise ValueError("qos_thresholds must have one entry per user")
        if any(t < 0 for t in self.qos_thresholds) or self.multicast_threshold < 0:
            raise ValueError("rate thresholds must be >= 0")

    # -- structure queries ---------------------------------------------------

    def private_stream(self, user: int) -> StreamId:
        for s in self.streams:
            if s.is_private and s.owner == user:
                return s
        raise ValueError(f"no private stream for user {user}")

    @property
    def multicast_stream(self) -> StreamId | None:
        for s in self.streams:
            if s.kind == StreamKind.MULTICAST:
                return s
        return None

    @property
    def alloc_streams(self) -> tuple[StreamId, ...]:
        """Streams whose rate is distributed through allocation variables.

        These are the streams decoded by more than one user (their decodable
        rate is an audience minimum) plus the multicast stream.
        """
        return tuple(s for s in self.streams if len(s.audience) > 1 or s.kind == StreamKind.MULTICAST)

    def alloc_beneficiaries(self, stream: StreamId) -> tuple[int, ...]:
        """Users that may receive a share of the stream's decodable rate."""
        if stream.kind == StreamKind.COMMON:
            return tuple(sorted(stream.audience))
        if stream.kind == StreamKind.MULTICAST:
            return tuple(sorted(stream.audience)) if self.multicast_carries_common else ()
        if stream.is_private and len(stream.audience) > 1:
            return (stream.owner,)
        return ()

    def has_direct_private(self, user: int) -> bool:
        """True when the user's private rate counts directly (no audience minimum)."""
        return len(self.private_stream(user).audience) == 1

    def decode_chain(self, user: int) -> tuple[StreamId, ...]:
        return _decode_chains(self)[user]

    def stream_index(self, stream: StreamId) -> int:
        return self.streams.index(stream)

    # -- interference --------------------------------------------------------

    def interference_set(self, user: int, decoded: StreamId) -> tuple[InterferenceTerm, ...]:
        """Streams not yet removed at `user` while decoding `decoded`.

        All interferers are seen through the actual channel except
        dirty-paper streams encoded before the user's own, which were
        pre-canceled against the estimate and therefore leak only through
        the estimation error -- and only while decoding the user's own
        dirty-paper stream.
        """
        chain = self.decode_chain(user)
        if decoded not in chain:
            raise ValueError(f"stream {decoded.label()} is not decoded by user {user}")
        removed = set(chain[: chain.index(decoded)])
        own = chain[-1]
        use_error_rule = decoded == own and decoded.kind == StreamKind.PRIVATE_DPC
        enc_pos = {u: p for p, u in enumerate(self.dpc_order)} if self.dpc_order else {}
        terms = []
        for s in self.streams:
            if s == decoded or s in removed:
                continue
            kind = ChannelKind.ACTUAL
            if use_error_rule and s.kind == StreamKind.PRIVATE_DPC and enc_pos[s.owner] < enc_pos[user]:
                kind = ChannelKind.ERROR
            terms.append(InterferenceTerm(stream=s, channel_kind=kind))
        return tuple(terms)

    def interference_indices(self, user: int, decoded: StreamId) -> tuple[tuple[int, ...], tuple[int, ...]]:
        """Interference set as (actual, error) stream-index tuples, for numeric code."""
        return _interference_indices(self, user, decoded)


@lru_cache(maxsize=None)
def _decode_chains(layout: StreamLayout) -> tuple[tuple[StreamId, ...], ...]:
    common_rank = {s: r for r, s in enumerate(layout.common_decode_order)}
    chains = []
    for user in range(layout.num_users):
        own = layout.private_stream(user)
        heard = [s for s in layout.streams if user in s.audience and s != own]

        def priority(s: StreamId) -> tuple:
            if s in common_rank:
                return (0, common_rank[s])
            # superposition-coded streams of weaker users: larger audience first
            return (1, -len(s.audience))

        heard.sort(key=priority)
        chains.append(tuple(heard) + (own,))
    return tuple(chains)


@lru_cache(maxsize=None)
def _interference_indices(
    layout: StreamLayout, user: int, decoded: StreamId
) -> tuple[tuple[int, ...], tuple[int, ...]]:
    actual, error = [], []
    for term in layout.interference_set(user, decoded):
        idx = layout.stream_index(term.stream)
        (actual if term.channel_kind == ChannelKind.ACTUAL else error).append(idx)
    return tuple(actual), tuple(error)


# -- layout construction -----------------------------------------------------


def _common_audiences(num_users: int) -> list[frozenset[int]]:
    """Full-audience stream plus all two-user streams (three-user scheme layout)."""
    everyone = frozenset(range(num_users))
    if num_users <= 2:
        return [everyone]
    if num_users == 3:
        return [everyone, frozenset({0, 1}), frozenset({0, 2}), frozenset({1, 2})]
    raise ValueError("multi-layer strategies are only defined for up to 3 users")


def _canonical_pi_prime(num_users: int) -> tuple[tuple[int, ...], ...]:
    if num_users != 3:
        return ()
    return ((0, 1), (0, 2), (1, 2))


def make_layout(
    strategy: Strategy | str,
    num_users: int,
    pi: tuple[int, ...] | None = None,
    pi_prime: tuple[tuple[int, ...], ...] | None = None,
    groups: tuple[tuple[int, ...], ...] | None = None,
    qos: tuple[float, ...] | None = None,
    multicast: bool = False,
    multicast_threshold: float = 0.0,
) -> StreamLayout:
    """Build the stream layout of a named strategy.

    pi is the dirty-paper encoding order (first entry encoded first) or, for
    superposition-coded strategies, the decode order from the user whose
    stream everyone strips first (conventionally the weakest) to the user
    that strips everything.  pi_prime orders the two-user common streams of
    the three-user multi-layer schemes by decode priority.  groups is the
    user partition of SC-SIC-per-group.
    """
    strategy = Strategy(strategy)
    if num_users < 1:
        raise ValueError("num_users must be >= 1")
    everyone = frozenset(range(num_users))
    pi = tuple(pi) if pi is not None else tuple(range(num_users))
    if sorted(pi) != list(range(num_users)):
        raise ValueError("pi must be a permutation of all users")
    if strategy in MULTI_LAYER and num_users > 3:
        raise ValueError(f"{strategy.value} supports at most 3 users")

    if strategy == Strategy.SC_SIC_PER_GROUP:
        if groups is None:
            raise ValueError("SC-SIC-per-group requires a user partition")
        flat = sorted(u for g in groups for u in g)
        if flat != list(range(num_users)) or any(len(g) == 0 for g in groups):
            raise ValueError("groups must partition the users into non-empty sets")
    elif strategy == Strategy.SC_SIC:
        groups = (tuple(range(num_users)),)
    else:
        groups = None

    private_kind = StreamKind.PRIVATE_DPC if strategy in DPC_FAMILY else StreamKind.PRIVATE_LINEAR

    commons: list[StreamId] = []
    if strategy in (Strategy.ONE_LAYER_RS, Strategy.ONE_DPCRS):
        commons = [StreamId(StreamKind.COMMON, everyone)]
    elif strategy in MULTI_LAYER:
        commons = [StreamId(StreamKind.COMMON, aud) for aud in _common_audiences(num_users)]

    privates: list[StreamId] = []
    if groups is not None:
        # decode order within each group follows pi restricted to the group
        pos = {u: i for i, u in enumerate(pi)}
        for g in groups:
            ordered = sorted(g, key=lambda u: pos[u])
            for rank, u in enumerate(ordered):
                privates.append(StreamId(private_kind, frozenset(ordered[rank:]), owner=u))
        privates.sort(key=lambda s: s.owner)
    else:
        privates = [StreamId(private_kind, frozenset({u}), owner=u) for u in range(num_users)]

    if multicast:
        full = [s for s in commons if s.audience == everyone]
        if full:
            commons[commons.index(full[0])] = StreamId(StreamKind.MULTICAST, everyone)
            carries_common = True
        else:
            commons.insert(0, StreamId(StreamKind.MULTICAST, everyone))
            carries_common = False
    else:
        carries_common = False

    # decode priority: full-audience stream first, then two-user streams
    pp = pi_prime if pi_prime is not None else _canonical_pi_prime(num_users)
    two_user = {s.audience: s for s in commons if len(s.audience) > 1 and s.audience != everyone}
    ordered_two = []
    for aud in pp:
        key = frozenset(aud)
        if key in two_user:
            ordered_two.append(two_user.pop(key))
    if two_user:
        raise ValueError("pi_prime must order every two-user common stream")
    full_first = [s for s in commons if s.audience == everyone]
    decode_order = tuple(full_first + ordered_two)

    ordered_streams = tuple(decode_order) + tuple(s for s in commons if s not in decode_order) + tuple(privates)

    return StreamLayout(
        num_users=num_users,
        streams=ordered_streams,
        dpc_order=pi if private_kind == StreamKind.PRIVATE_DPC else None,
        common_decode_order=decode_order,
        qos_thresholds=tuple(qos) if qos is not None else (0.0,) * num_users,
        multicast_threshold=float(multicast_threshold) if multicast else 0.0,
        multicast_carries_common=carries_common,
    )


def enumerate_orders(
    strategy: Strategy | str, num_users: int
) -> list[tuple[tuple[int, ...] | None, tuple[tuple[int, ...], ...]]]:
    """All (encoding order, common decode priority) pairs worth optimizing over.

    Dirty-paper strategies sweep every encoding permutation; the three-user
    multi-layer schemes additionally sweep all orderings of the two-user
    common streams.  Superposition-coded strategies return a single pair
    with pi=None, meaning the order is derived from channel strength at
    layout-creation time.  Order counts grow factorially, so the sweep is
    refused beyond the sizes the schemes are defined for.
    """
    strategy = Strategy(strategy)
    canonical_pp = _canonical_pi_prime(num_users)
    if strategy in MULTI_LAYER and num_users > 3:
        raise ValueError(f"{strategy.value} supports at most 3 users")
    if strategy in DPC_FAMILY and num_users > 4:
        raise ValueError("encoding-order sweep refused beyond 4 users")

    pis: list[tuple[int, ...] | None]
    if strategy in DPC_FAMILY:
        pis = [tuple(p) for p in itertools.permutations(range(num_users))]
        assert len(pis) == factorial(num_users)
    elif strategy in (Strategy.SC_SIC, Strategy.SC_SIC_PER_GROUP):
        pis = [None]
    else:
        pis = [tuple(range(num_users))]

    if strategy in MULTI_LAYER and num_users == 3:
        pps = [tuple(p) for p in itertools.permutations(((0, 1), (0, 2), (1, 2)))]
    else:
        pps = [canonical_pp]

    return [(p, pp) for p in pis for pp in pps]
