"""Arbitration of the final 5-point relevance rating for one record.

A human annotation, when present, decides outright. Otherwise the
per-stage classifier distributions are evaluated cheapest first: the
first stage whose top-class probability clears its confidence threshold
is accepted early. If no stage is confident enough, the per-stage top
labels vote, and the most expensive stage breaks any tie.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Sequence

from unisup.datamodel import PipelineConfig, QipRecord

DECIDED_HUMAN = "human"
DECIDED_EARLY_ACCEPT = "early_accept"
DECIDED_MAJORITY = "majority"
DECIDED_FINAL_STAGE = "final_stage_tiebreak"


@dataclass(frozen=True)
class CascadeVerdict:
    """Arbitrated rating plus provenance of the decision."""

    rating: int
    decided_by: str
    accepted_stage: int | None = None
    accepted_stage_confidence: float | None = None


def argmax_label(distribution: Sequence[float], tie: str = "high") -> int:
    """Index of the largest probability; exact ties break toward the
    higher label when ``tie`` is 'high', the lower one otherwise."""
    indices = range(len(distribution))
    if tie == "high":
        return max(indices, key=lambda j: (distribution[j], j))
    if tie == "low":
        return max(indices, key=lambda j: (distribution[j], -j))
    raise ValueError(f"tie must be 'high' or 'low', got {tie!r}")


def arbitrate(record: QipRecord, config: PipelineConfig) -> CascadeVerdict:
    """Resolve a record's rating from human annotation or the stage cascade.

    Raises ValueError when the record carries no rating evidence or when
    the number of stage distributions does not match the configured
    thresholds.
    """
    if record.human_rating is not None:
        return CascadeVerdict(rating=record.human_rating, decided_by=DECIDED_HUMAN)

    dists = record.stage_distributions
    if not dists:
        raise ValueError(
            f"record {record.query_id}/{record.item_id}: "
            "neither human rating nor stage distributions present"
        )
    if len(dists) != len(config.stage_thresholds):
        raise ValueError(
            f"record {record.query_id}/{record.item_id}: "
            f"{len(dists)} stage distributions but {len(config.stage_thresholds)} thresholds"
        )

    labels = [argmax_label(d, config.stage_argmax_tie) for d in dists]
    for stage, (dist, threshold) in enumerate(zip(dists, config.stage_thresholds)):
        confidence = max(dist)
        if confidence >= threshold:
            return CascadeVerdict(
                rating=labels[stage],
                decided_by=DECIDED_EARLY_ACCEPT,
                accepted_stage=stage,
                accepted_stage_confidence=confidence,
            )

    counts = Counter(labels)
    top = max(counts.values())
    winners = [label for label, count in counts.items() if count == top]
    if top >= 2 and len(winners) == 1:
        return CascadeVerdict(rating=winners[0], decided_by=DECIDED_MAJORITY)
    return CascadeVerdict(rating=labels[-1], decided_by=DECIDED_FINAL_STAGE)
