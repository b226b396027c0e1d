"""Supervision targets: partition by rating, then score each side.

Ratings 3 and 4 are positives; 0, 1 and 2 are negatives. Positives get
a fused relevance-rank score (relevance, rank prior, channel consensus,
weighted alpha/beta/gamma) and then an engagement-augmented target
clipped to [0, 1]. Negatives keep their normalized relevance as the
target and additionally get a difficulty score (rank prior plus lexical
overlap, weighted kappa1/kappa2) that drives hard-negative sampling.
Engagement feeds positives only, so popular-but-irrelevant items are
never promoted.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from unisup.cascade import CascadeVerdict, arbitrate
from unisup.datamodel import PipelineConfig, QipRecord, RATING_MAX, RATING_MIN
from unisup.engagement import EngagementScore, normalize_and_smooth, raw_engagement
from unisup.priors import PriorScore, aggregate_priors

POSITIVE = "positive"
NEGATIVE = "negative"

#: Lowest rating treated as a positive.
POSITIVE_MIN_RATING = 3

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


@dataclass(frozen=True)
class SupervisionTarget:
    """The fused training target for one query-item pair.

    ``rel_rank`` is present exactly for positives, ``difficulty`` exactly
    for negatives. Positive targets live in [0, 1]; negative targets are
    the normalized relevance in {-1, -0.5, 0}.
    """

    polarity: str
    rel_score: float
    target: float
    token_similarity: float
    rel_rank: float | None = None
    difficulty: float | None = None


def normalize_rating(rating: int) -> float:
    """Map a 0..4 rating onto [-1, 1] with 'Okay' (2) at zero."""
    if not RATING_MIN <= rating <= RATING_MAX:
        raise ValueError(f"rating must be in 0..4, got {rating}")
    return (rating - 2) / 2


def token_similarity(query_text: str, item_text: str) -> float:
    """Jaccard similarity of lowercase alphanumeric token sets."""
    query_tokens = set(_TOKEN_RE.findall(query_text.lower()))
    item_tokens = set(_TOKEN_RE.findall(item_text.lower()))
    union = query_tokens | item_tokens
    if not union:
        return 0.0
    return len(query_tokens & item_tokens) / len(union)


def fuse_positive(
    rel_score: float,
    prior: PriorScore,
    smoothed_engagement: float,
    config: PipelineConfig,
) -> tuple[float, float]:
    """Fused relevance-rank score and the engagement-augmented target.

    Returns ``(rel_rank, target)`` where target is clipped to [0, 1].
    """
    if rel_score < 0.5:
        raise ValueError(f"fuse_positive needs a positive-polarity rel_score, got {rel_score}")
    rel_rank = (
        config.alpha * rel_score
        + config.beta * prior.aggregated
        + config.gamma * prior.consensus
    )
    raw_target = config.mu_rel * rel_rank + config.lambda_eng * smoothed_engagement
    target = min(1.0, max(0.0, raw_target))
    return rel_rank, target


def score_negative(
    rel_score: float,
    prior: PriorScore,
    token_sim: float,
    config: PipelineConfig,
) -> tuple[float, float]:
    """Difficulty score for a negative; its target is the rel_score unchanged.

    Returns ``(difficulty, target)``. High-prior or lexically close
    negatives score as harder.
    """
    if rel_score > 0.0:
        raise ValueError(f"score_negative needs a negative-polarity rel_score, got {rel_score}")
    difficulty = config.kappa1 * prior.aggregated + config.kappa2 * token_sim
    return difficulty, rel_score


def build_target(
    record: QipRecord,
    verdict: CascadeVerdict,
    prior: PriorScore,
    engagement: EngagementScore,
    config: PipelineConfig,
) -> SupervisionTarget:
    """Assemble the SupervisionTarget for one record from its per-signal scores."""
    rel_score = normalize_rating(verdict.rating)
    token_sim = token_similarity(record.query_text, record.item_text)
    if verdict.rating >= POSITIVE_MIN_RATING:
        rel_rank, target = fuse_positive(rel_score, prior, engagement.smoothed, config)
        return SupervisionTarget(
            polarity=POSITIVE,
            rel_score=rel_score,
            target=target,
            token_similarity=token_sim,
            rel_rank=rel_rank,
        )
    difficulty, target = score_negative(rel_score, prior, token_sim, config)
    return SupervisionTarget(
        polarity=NEGATIVE,
        rel_score=rel_score,
        target=target,
        token_similarity=token_sim,
        difficulty=difficulty,
    )


# --------------------------------------------------------------------------
# corpus-level scoring


@dataclass(frozen=True)
class ScoredPair:
    """A record together with everything downstream consumers need."""

    query_id: str
    item_id: str
    query_text: str
    item_text: str
    rating: int
    decided_by: str
    channels_hit: int
    prior: float
    consensus: float
    engagement_smoothed: float
    target: SupervisionTarget


def score_query_group(records: Sequence[QipRecord], config: PipelineConfig) -> list[ScoredPair]:
    """Score all records of one query's candidate set.

    Engagement normalization needs the whole candidate set, which is why
    scoring is grouped per query.
    """
    verdicts = [arbitrate(r, config) for r in records]
    priors = [aggregate_priors(r.channel_ranks, config) for r in records]
    raws = [(r.item_id, raw_engagement(r.engagement, config.lambda_counts)) for r in records]
    eng_scores = normalize_and_smooth(raws, config)

    pairs = []
    for record, verdict, prior in zip(records, verdicts, priors):
        eng = eng_scores[record.item_id]
        target = build_target(record, verdict, prior, eng, config)
        pairs.append(
            ScoredPair(
                query_id=record.query_id,
                item_id=record.item_id,
                query_text=record.query_text,
                item_text=record.item_text,
                rating=verdict.rating,
                decided_by=verdict.decided_by,
                channels_hit=prior.channels_hit,
                prior=prior.aggregated,
                consensus=prior.consensus,
                engagement_smoothed=eng.smoothed,
                target=target,
            )
        )
    return pairs


def score_corpus(
    records: Sequence[QipRecord],
    config: PipelineConfig,
    threads: int = 1,
) -> list[ScoredPair]:
    """Score a whole corpus; output order follows input record order.

    Records are grouped by query_id (contiguity not required). With
    ``threads`` > 1, query groups are scored concurrently; results are
    reassembled in input order, so the output is thread-count invariant.
    """
    groups: dict[str, list[int]] = {}
    for idx, record in enumerate(records):
        groups.setdefault(record.query_id, []).append(idx)

    out: list[ScoredPair | None] = [None] * len(records)

    def run(indices: list[int]) -> None:
        scored = score_query_group([records[i] for i in indices], config)
        for i, pair in zip(indices, scored):
            out[i] = pair

    if threads > 1 and len(groups) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run, groups.values()))
    else:
        for indices in groups.values():
            run(indices)
    return [pair for pair in out if pair is not None]


# --------------------------------------------------------------------------
# row formats: full target dump (intermediate) and training records (final)


def pair_to_row(pair: ScoredPair) -> dict:
    """Full-fidelity dump row for one scored pair."""
    t = pair.target
    return {
        "query_id": pair.query_id,
        "item_id": pair.item_id,
        "query_text": pair.query_text,
        "item_text": pair.item_text,
        "rel_rating": pair.rating,
        "decided_by": pair.decided_by,
        "polarity": t.polarity,
        "rel_score": t.rel_score,
        "rel_rank": t.rel_rank,
        "target": t.target,
        "difficulty": t.difficulty,
        "token_similarity": t.token_similarity,
        "prior": pair.prior,
        "consensus": pair.consensus,
        "channels_hit": pair.channels_hit,
        "engagement_smoothed": pair.engagement_smoothed,
    }


def pair_from_row(row: Mapping) -> ScoredPair:
    try:
        target = SupervisionTarget(
            polarity=row["polarity"],
            rel_score=row["rel_score"],
            target=row["target"],
            token_similarity=row["token_similarity"],
            rel_rank=row.get("rel_rank"),
            difficulty=row.get("difficulty"),
        )
        return ScoredPair(
            query_id=row["query_id"],
            item_id=row["item_id"],
            query_text=row["query_text"],
            item_text=row["item_text"],
            rating=row["rel_rating"],
            decided_by=row["decided_by"],
            channels_hit=row["channels_hit"],
            prior=row["prior"],
            consensus=row["consensus"],
            engagement_smoothed=row["engagement_smoothed"],
            target=target,
        )
    except KeyError as exc:
        raise ValueError(f"target row is missing field {exc.args[0]!r}") from None


def training_row(pair: ScoredPair) -> dict:
    """Training-record row: exactly what a loss would consume."""
    t = pair.target
    return {
        "query_text": pair.query_text,
        "item_text": pair.item_text,
        "polarity": t.polarity,
        "target": t.target,
        "difficulty": t.difficulty,
        "rel_rating": pair.rating,
        "channels_hit": pair.channels_hit,
    }


def iter_scored_rows(pairs: Iterable[ScoredPair]) -> Iterable[dict]:
    for pair in pairs:
        yield pair_to_row(pair)


def write_scored_rows(pairs: Iterable[ScoredPair], path) -> None:
    """Write scored pairs as JSONL with sorted keys (byte-stable output)."""
    with open(path, "w", encoding="utf-8") as fh:
        for row in iter_scored_rows(pairs):
            fh.write(json.dumps(row, sort_keys=True, ensure_ascii=False) + "\n")


def read_scored_rows(path) -> list[ScoredPair]:
    pairs = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from None
            try:
                pairs.append(pair_from_row(row))
            except ValueError as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from None
    if not pairs:
        raise ValueError(f"{path}: no target rows found")
    return pairs


def raw_engagement_of(record: QipRecord, config: PipelineConfig) -> float:
    """Raw (pre-normalization) engagement score of one record."""
    return raw_engagement(record.engagement, config.lambda_counts)
