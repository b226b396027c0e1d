"""Per-query engagement signal: log-compress, normalize, smooth.

Raw counts are combined into log(1 + w . counts), normalized within the
query's candidate set by the maximum raw value (plus a small guard), and
squashed through a sigmoid centered at 0.5. Zero-engagement items land
near 0.018 rather than exactly 0; that floor is a property of the
formulas, not a special case.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from unisup.datamodel import EngagementCounts, PipelineConfig


@dataclass(frozen=True)
class EngagementScore:
    """One item's engagement at each transform step."""

    raw: float
    normalized: float
    smoothed: float


def raw_engagement(counts: EngagementCounts, lambdas: Sequence[float]) -> float:
    """Weighted, log-compressed engagement: log1p of the weighted count sum."""
    if len(lambdas) != 4:
        raise ValueError(f"expected 4 count weights, got {len(lambdas)}")
    weighted = (
        lambdas[0] * counts.orders
        + lambdas[1] * counts.carts
        + lambdas[2] * counts.clicks
        + lambdas[3] * counts.views
    )
    return math.log1p(weighted)


def sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


def normalize_and_smooth(
    raws: Sequence[tuple[str, float]], config: PipelineConfig
) -> dict[str, EngagementScore]:
    """Normalize one query's raw engagement values and apply sigmoid smoothing.

    ``raws`` must cover the query's whole candidate set: the normalizer
    is the maximum raw value over that set plus ``epsilon_norm``.
    Raises ValueError on an empty candidate set.
    """
    if not raws:
        raise ValueError("empty candidate set")
    peak = max(raw for _, raw in raws)
    denom = peak + config.epsilon_norm
    k = config.sigmoid_k
    scores: dict[str, EngagementScore] = {}
    for item_id, raw in raws:
        normalized = raw / denom
        scores[item_id] = EngagementScore(
            raw=raw,
            normalized=normalized,
            smoothed=sigmoid(k * (normalized - 0.5)),
        )
    return scores
