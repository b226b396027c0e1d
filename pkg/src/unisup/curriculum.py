"""Difficulty-weighted negative sampling and training-set emission.

Negative candidates are drawn per query, without replacement, with
probability proportional to (difficulty + floor)^(1/T). Temperature 1
samples proportionally to difficulty; lowering T across epochs sharpens
the draw toward the hardest negatives, raising it flattens toward
uniform. A tiny floor keeps zero-difficulty negatives sampleable.

Determinism: every query gets its own seed derived from (root seed,
query_id), so samples do not depend on iteration order or worker count.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from unisup.datamodel import PipelineConfig, derive_seed
from unisup.fusion import NEGATIVE, POSITIVE, ScoredPair, training_row

logger = logging.getLogger(__name__)

#: Added to every difficulty so zero-difficulty negatives keep nonzero mass.
WEIGHT_FLOOR = 1e-6

DEFAULT_NEGATIVES_PER_POSITIVE = 4


@dataclass(frozen=True)
class PlanEntry:
    item_id: str
    weight: float
    probability: float


@dataclass(frozen=True)
class SamplingPlan:
    """Per-query negative-sampling distributions plus draw bookkeeping."""

    per_query: Mapping[str, tuple[PlanEntry, ...]]
    positives_per_query: Mapping[str, int]
    temperature: float
    negatives_per_positive: int
    issues: tuple[str, ...] = ()


def _temperature_probabilities(weights: np.ndarray, temperature: float) -> np.ndarray:
    # Work in log space so small weights survive extreme temperatures.
    logits = np.log(weights) / temperature
    logits -= logits.max()
    probs = np.exp(logits)
    return probs / probs.sum()


def build_plan(
    targets: Sequence[ScoredPair],
    temperature: float,
    negatives_per_positive: int = DEFAULT_NEGATIVES_PER_POSITIVE,
    config: PipelineConfig | None = None,
) -> SamplingPlan:
    """Turn scored pairs into a per-query sampling plan over negatives.

    A query holding positives but no negatives is reported in
    ``issues`` and the plan is still built for the rest. ``config`` is
    accepted for signature stability; no constant is read from it today.
    """
    del config
    if temperature <= 0:
        raise ValueError(f"temperature must be > 0, got {temperature}")
    if negatives_per_positive < 0:
        raise ValueError("negatives_per_positive must be >= 0")

    negatives: dict[str, list[ScoredPair]] = {}
    positives: dict[str, int] = {}
    for pair in targets:
        if pair.target.polarity == NEGATIVE:
            negatives.setdefault(pair.query_id, []).append(pair)
        else:
            positives[pair.query_id] = positives.get(pair.query_id, 0) + 1

    issues = []
    per_query: dict[str, tuple[PlanEntry, ...]] = {}
    for query_id in positives:
        if negatives_per_positive > 0 and not negatives.get(query_id):
            issues.append(f"query {query_id}: has positives but no negative candidates")
    for query_id, pairs in negatives.items():
        weights = np.array(
            [(p.target.difficulty or 0.0) + WEIGHT_FLOOR for p in pairs], dtype=np.float64
        )
        probs = _temperature_probabilities(weights, temperature)
        per_query[query_id] = tuple(
            PlanEntry(item_id=p.item_id, weight=float(w), probability=float(prob))
            for p, w, prob in zip(pairs, weights, probs)
        )

    for issue in issues:
        logger.warning("%s", issue)
    return SamplingPlan(
        per_query=per_query,
        positives_per_query=positives,
        temperature=temperature,
        negatives_per_positive=negatives_per_positive,
        issues=tuple(issues),
    )


def _draw_for_query(
    plan: SamplingPlan, query_id: str, seed: int
) -> list[tuple[str, str]]:
    entries = plan.per_query[query_id]
    n_pos = plan.positives_per_query.get(query_id, 0)
    n_draw = min(len(entries), plan.negatives_per_positive * n_pos)
    if n_draw == 0:
        return []
    rng = np.random.default_rng(derive_seed(seed, query_id))
    probs = np.array([e.probability for e in entries], dtype=np.float64)
    probs /= probs.sum()
    chosen = rng.choice(len(entries), size=n_draw, replace=False, p=probs)
    return [(query_id, entries[i].item_id) for i in chosen]


def sample(plan: SamplingPlan, seed: int, threads: int = 1) -> list[tuple[str, str]]:
    """Draw hard negatives per query, without replacement.

    Each query draws negatives_per_positive x (its positive count)
    negatives, or all of them if fewer exist. Output is identical for
    any worker count: queries are processed in sorted order and each
    derives its own seed.
    """
    query_ids = sorted(plan.per_query)
    if threads > 1 and len(query_ids) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            batches = list(pool.map(lambda q: _draw_for_query(plan, q, seed), query_ids))
    else:
        batches = [_draw_for_query(plan, q, seed) for q in query_ids]
    drawn: list[tuple[str, str]] = []
    for batch in batches:
        drawn.extend(batch)
    return drawn


def emit_dataset(
    targets: Sequence[ScoredPair],
    sampled_negatives: Iterable[tuple[str, str]],
    out_path: str | Path,
) -> dict:
    """Write the training dataset and return a summary.

    Every positive is kept; negatives are restricted to the sampled
    (query_id, item_id) pairs. Rows are grouped by query in sorted query
    order: positives in input order, then sampled negatives in draw
    order, which makes output files byte-stable.
    """
    by_key: dict[tuple[str, str], ScoredPair] = {}
    positives_by_query: dict[str, list[ScoredPair]] = {}
    for pair in targets:
        by_key[(pair.query_id, pair.item_id)] = pair
        if pair.target.polarity == POSITIVE:
            positives_by_query.setdefault(pair.query_id, []).append(pair)

    negatives_by_query: dict[str, list[ScoredPair]] = {}
    for query_id, item_id in sampled_negatives:
        pair = by_key.get((query_id, item_id))
        if pair is None:
            raise ValueError(f"sampled negative {query_id}/{item_id} is not among the targets")
        if pair.target.polarity != NEGATIVE:
            raise ValueError(f"sampled pair {query_id}/{item_id} is not a negative")
        negatives_by_query.setdefault(query_id, []).append(pair)

    counts = {"total": 0, "positives": 0, "negatives": 0}
    histogram = {str(r): 0 for r in range(5)}
    query_ids = sorted(set(positives_by_query) | set(negatives_by_query))
    with open(out_path, "w", encoding="utf-8") as fh:
        for query_id in query_ids:
            rows = positives_by_query.get(query_id, []) + negatives_by_query.get(query_id, [])
            for pair in rows:
                fh.write(json.dumps(training_row(pair), ensure_ascii=False, sort_keys=True))
                fh.write("\n")
                counts["total"] += 1
                if pair.target.polarity == POSITIVE:
                    counts["positives"] += 1
                else:
                    counts["negatives"] += 1
                histogram[str(pair.rating)] += 1

    return {**counts, "rating_histogram": histogram}
