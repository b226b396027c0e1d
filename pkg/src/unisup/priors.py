"""Rank priors from production retrieval channels, and their fusion.

A channel that retrieved an item at rank r (cap R) contributes the
bounded, monotonic prior

    max(0, 1 - log(max(1, r)) / log(R))

which is 1 at rank 1 and hits 0 at the cap. The per-pair prior is the
max over channels, and consensus is the fraction of channels that
retrieved the item at all. The log base cancels in the ratio; natural
log is used.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

from unisup.datamodel import PipelineConfig


@dataclass(frozen=True)
class PriorScore:
    """Per-channel priors, their max aggregation, and channel consensus."""

    per_channel: Mapping[str, float]
    aggregated: float
    consensus: float
    channels_hit: int


def channel_prior(rank: int, cap: int) -> float:
    """Prior score in [0, 1] for a single channel observation."""
    if cap < 2:
        raise ValueError(f"channel cap must be >= 2, got {cap}")
    return max(0.0, 1.0 - math.log(max(1, rank)) / math.log(cap))


def aggregate_priors(channel_ranks: Mapping[str, int], config: PipelineConfig) -> PriorScore:
    """Fuse one record's channel ranks into a PriorScore.

    Items retrieved by no channel get prior 0 and consensus 0 rather
    than being excluded; they may still carry human annotations.
    Raises ValueError for a channel missing from ``config.channel_caps``.
    """
    per_channel: dict[str, float] = {}
    for channel, rank in channel_ranks.items():
        cap = config.channel_caps.get(channel)
        if cap is None:
            raise ValueError(f"unknown channel {channel!r}")
        per_channel[channel] = channel_prior(rank, cap)
    aggregated = max(per_channel.values(), default=0.0)
    channels_hit = len(per_channel)
    consensus = channels_hit / len(config.channel_caps)
    return PriorScore(
        per_channel=per_channel,
        aggregated=aggregated,
        consensus=consensus,
        channels_hit=channels_hit,
    )
