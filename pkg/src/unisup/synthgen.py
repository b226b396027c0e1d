"""Synthetic desk-scale corpora with planted relevance structure.

Every generated query gets a fixed number of candidate items. Each item
carries a planted rating drawn from a mixture, and everything observable
is derived from that rating: cosine similarity to the query vector rises
with rating, channel retrieval probability and rank quality rise with
rating, classifier stage distributions peak at the rating, and the
engagement funnel (views -> clicks -> carts -> orders) can be correlated
with rating among positives to a configurable degree. Generation is
deterministic per query id, so corpora are reproducible regardless of
query count or iteration order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from unisup.datamodel import (
    DEFAULT_CHANNEL_CAPS,
    EngagementCounts,
    QipRecord,
    derive_seed,
)
from unisup.evalkit import EmbeddingTable

RATING_COUNT = 5


@dataclass(frozen=True)
class SynthSpec:
    """Knobs for one synthetic corpus."""

    n_queries: int = 200
    items_per_query: int = 40
    dimension: int = 32
    rating_mixture: tuple[float, ...] = (0.35, 0.2, 0.15, 0.15, 0.15)
    engagement_relevance_correlation: float = 0.0
    channel_noise: float = 1.0
    seed: int = 0
    stage_confidence: float = 0.9
    human_rating_fraction: float = 0.25
    channel_caps: dict[str, int] = field(
        default_factory=lambda: dict(DEFAULT_CHANNEL_CAPS)
    )


def validate_spec(spec: SynthSpec) -> list[str]:
    issues = []
    if spec.n_queries < 1:
        issues.append(f"n_queries must be >= 1, got {spec.n_queries}")
    if spec.items_per_query < 1:
        issues.append(f"items_per_query must be >= 1, got {spec.items_per_query}")
    if spec.dimension < 2:
        issues.append(f"dimension must be >= 2, got {spec.dimension}")
    if len(spec.rating_mixture) != RATING_COUNT:
        issues.append(
            f"rating_mixture needs {RATING_COUNT} weights, got {len(spec.rating_mixture)}"
        )
    elif any(w < 0 for w in spec.rating_mixture):
        issues.append("rating_mixture weights must be non-negative")
    elif abs(sum(spec.rating_mixture) - 1.0) > 1e-9:
        issues.append(f"rating_mixture must sum to 1, got {sum(spec.rating_mixture)!r}")
    if not -1.0 <= spec.engagement_relevance_correlation <= 1.0:
        issues.append(
            "engagement_relevance_correlation must lie in [-1, 1], "
            f"got {spec.engagement_relevance_correlation!r}"
        )
    if spec.channel_noise < 0:
        issues.append(f"channel_noise must be >= 0, got {spec.channel_noise!r}")
    if not 0.0 < spec.stage_confidence < 1.0:
        issues.append(f"stage_confidence must lie in (0, 1), got {spec.stage_confidence!r}")
    if not 0.0 <= spec.human_rating_fraction <= 1.0:
        issues.append(
            f"human_rating_fraction must lie in [0, 1], got {spec.human_rating_fraction!r}"
        )
    if not spec.channel_caps:
        issues.append("channel_caps must name at least one channel")
    elif any(cap < 2 for cap in spec.channel_caps.values()):
        issues.append("every channel cap must be >= 2")
    return issues


# --------------------------------------------------------------------------
# spec file round-trip (same flat key=value format as pipeline configs)


def parse_spec_text(text: str) -> SynthSpec:
    pairs: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        pairs[key.strip()] = value.strip()
    spec = SynthSpec()
    known = {f.name for f in fields(SynthSpec)}
    overrides: dict[str, object] = {}
    for key, value in pairs.items():
        if key not in known:
            raise ValueError(f"unknown synth spec key {key!r}")
        if key in ("n_queries", "items_per_query", "dimension", "seed"):
            overrides[key] = int(value)
        elif key == "rating_mixture":
            overrides[key] = tuple(float(p) for p in value.split(","))
        elif key == "channel_caps":
            caps: dict[str, int] = {}
            for part in value.split(","):
                name, _, cap = part.partition(":")
                if not name.strip() or not cap.strip():
                    raise ValueError(f"channel_caps entry {part!r} is not name:cap")
                caps[name.strip()] = int(cap)
            overrides[key] = caps
        else:
            overrides[key] = float(value)
    spec = replace(spec, **overrides)
    issues = validate_spec(spec)
    if issues:
        raise ValueError("; ".join(issues))
    return spec


def spec_to_text(spec: SynthSpec) -> str:
    lines = [
        f"n_queries={spec.n_queries}",
        f"items_per_query={spec.items_per_query}",
        f"dimension={spec.dimension}",
        "rating_mixture=" + ",".join(repr(w) for w in spec.rating_mixture),
        f"engagement_relevance_correlation={spec.engagement_relevance_correlation!r}",
        f"channel_noise={spec.channel_noise!r}",
        f"seed={spec.seed}",
        f"stage_confidence={spec.stage_confidence!r}",
        f"human_rating_fraction={spec.human_rating_fraction!r}",
        "channel_caps="
        + ",".join(f"{name}:{cap}" for name, cap in sorted(spec.channel_caps.items())),
    ]
    return "\n".join(lines) + "\n"


def load_spec(path: str | Path) -> SynthSpec:
    return parse_spec_text(Path(path).read_text(encoding="utf-8"))


def save_spec(spec: SynthSpec, path: str | Path) -> None:
    Path(path).write_text(spec_to_text(spec), encoding="utf-8")


# --------------------------------------------------------------------------
# generation


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def _orthogonal_unit(rng: np.random.Generator, anchor: np.ndarray) -> np.ndarray:
    while True:
        w = rng.standard_normal(anchor.shape[0])
        w -= (w @ anchor) * anchor
        norm = np.linalg.norm(w)
        if norm > 1e-9:
            return w / norm


def _item_vector(rng: np.random.Generator, query_vec: np.ndarray, rating: int) -> np.ndarray:
    # cosine bands: higher rating sits closer to the query direction
    c = 0.30 + 0.14 * rating + rng.uniform(-0.04, 0.04)
    c = min(max(c, -0.999), 0.999)
    w = _orthogonal_unit(rng, query_vec)
    return c * query_vec + math.sqrt(1.0 - c * c) * w


def _channel_ranks(
    rng: np.random.Generator, ratings: np.ndarray, spec: SynthSpec
) -> list[dict[str, int]]:
    """Per-item channel ranks; better-rated items retrieve more and rank higher."""
    n = ratings.shape[0]
    ranks: list[dict[str, int]] = [{} for _ in range(n)]
    for channel in sorted(spec.channel_caps):
        cap = spec.channel_caps[channel]
        p_retrieve = 1.0 / (1.0 + np.exp(-1.1 * (ratings - 1.0)))
        retrieved = rng.random(n) < p_retrieve
        idx = np.flatnonzero(retrieved)
        if idx.size == 0:
            continue
        scores = ratings[idx] + spec.channel_noise * rng.standard_normal(idx.size)
        # sort by score desc, then item index asc: noise 0 gives rating order
        order = idx[np.lexsort((idx, -scores))]
        for position, item_index in enumerate(order, start=1):
            if position >= cap:
                break
            ranks[item_index][channel] = position
    return ranks


def _engagement(
    rng: np.random.Generator, ratings: np.ndarray, spec: SynthSpec
) -> list[EngagementCounts]:
    """Funnel counts; correlation with rating applies among positive items."""
    n = ratings.shape[0]
    rho = spec.engagement_relevance_correlation
    z = np.zeros(n)
    positive = ratings >= 3
    if positive.sum() >= 2:
        pr = ratings[positive].astype(np.float64)
        std = pr.std()
        if std > 0:
            z[positive] = (pr - pr.mean()) / std
    g = rho * z + math.sqrt(max(0.0, 1.0 - rho * rho)) * rng.standard_normal(n)
    rate = np.exp(0.9 * g - 0.405)
    views = rng.poisson(18.0 * rate)
    clicks = rng.binomial(views, 0.30)
    carts = rng.binomial(clicks, 0.25)
    orders = rng.binomial(carts, 0.5)
    return [
        EngagementCounts(
            orders=int(orders[i]), carts=int(carts[i]),
            clicks=int(clicks[i]), views=int(views[i]),
        )
        for i in range(n)
    ]


def _stage_distributions(
    rng: np.random.Generator, rating: int, spec: SynthSpec
) -> tuple[tuple[float, ...], ...]:
    """Three label distributions peaked at the planted rating."""
    stages = []
    for _ in range(3):
        label = rating
        if rng.random() < 0.08:
            # occasional one-off miss to an adjacent label
            label = min(max(rating + rng.choice((-1, 1)), 0), RATING_COUNT - 1)
        conf = float(np.clip(spec.stage_confidence + rng.normal(0.0, 0.05), 0.30, 0.995))
        probs = np.full(RATING_COUNT, (1.0 - conf) / (RATING_COUNT - 1))
        probs[label] = conf
        stages.append(tuple(float(p) for p in probs))
    return tuple(stages)


def _query_records(
    qi: int, spec: SynthSpec
) -> tuple[list[QipRecord], np.ndarray, dict[str, np.ndarray]]:
    query_id = f"q{qi:06d}"
    rng = np.random.default_rng(derive_seed(spec.seed, query_id))
    query_vec = _unit(rng.standard_normal(spec.dimension))
    query_tokens = [f"term{qi}{suffix}" for suffix in "abcd"]
    query_text = " ".join(query_tokens)

    n = spec.items_per_query
    ratings = rng.choice(RATING_COUNT, size=n, p=np.asarray(spec.rating_mixture))
    ranks = _channel_ranks(rng, ratings.astype(np.float64), spec)
    engagement = _engagement(rng, ratings, spec)

    records: list[QipRecord] = []
    item_vectors: dict[str, np.ndarray] = {}
    for j in range(n):
        rating = int(ratings[j])
        item_id = f"{query_id}_i{j:03d}"
        item_vectors[item_id] = _item_vector(rng, query_vec, rating)
        # item text shares `rating` query tokens, so token overlap tracks rating
        item_tokens = query_tokens[:rating] + [f"sku{qi}x{j}", f"sku{qi}y{j}"]
        human = rating if rng.random() < spec.human_rating_fraction else None
        records.append(
            QipRecord(
                query_id=query_id,
                query_text=query_text,
                item_id=item_id,
                item_text=" ".join(item_tokens),
                human_rating=human,
                stage_distributions=_stage_distributions(rng, rating, spec),
                channel_ranks=ranks[j],
                engagement=engagement[j],
            )
        )
    return records, query_vec, item_vectors


def generate(
    spec: SynthSpec,
) -> tuple[list[QipRecord], EmbeddingTable, dict[str, np.ndarray]]:
    """Build (records, item embedding table, query_id -> unit vector)."""
    issues = validate_spec(spec)
    if issues:
        raise ValueError("; ".join(issues))
    records: list[QipRecord] = []
    item_vectors: dict[str, np.ndarray] = {}
    query_vectors: dict[str, np.ndarray] = {}
    for qi in range(spec.n_queries):
        q_records, q_vec, q_items = _query_records(qi, spec)
        records.extend(q_records)
        query_vectors[q_records[0].query_id] = q_vec
        item_vectors.update(q_items)
    return records, EmbeddingTable(item_vectors), query_vectors
