"""Shared record types, pipeline configuration, and corpus I/O.

Two on-disk formats live here:

* corpus files: UTF-8 JSON lines, one query-item record per line, with
  nested ``engagement`` counts;
* config files: flat ``key = value`` text, ``#`` comments allowed,
  comma-separated lists for vector-valued fields and ``name:cap`` pairs
  for per-channel rank caps.

All types are plain frozen dataclasses and are treated as immutable
values after construction, so they are safe to share across workers.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping

RATING_MIN = 0
RATING_MAX = 4

#: Channel identities are opaque; these are the stock trio used by the
#: default config and the synthetic generator.
DEFAULT_CHANNEL_CAPS: dict[str, int] = {"ch_a": 1000, "ch_b": 1000, "ch_c": 1000}


@dataclass(frozen=True)
class EngagementCounts:
    """Aggregated behavioral counts for one query-item pair."""

    orders: int = 0
    carts: int = 0
    clicks: int = 0
    views: int = 0


@dataclass(frozen=True)
class QipRecord:
    """One query-item pair with its rating evidence and channel/engagement observations.

    ``human_rating`` and ``stage_distributions`` are both optional, but a
    record must carry at least one of them before it can be scored.
    ``channel_ranks`` maps a channel id to the 1-based rank at which that
    channel retrieved the item; items never retrieved anywhere have an
    empty mapping.
    """

    query_id: str
    query_text: str
    item_id: str
    item_text: str
    human_rating: int | None = None
    stage_distributions: tuple[tuple[float, ...], ...] | None = None
    channel_ranks: Mapping[str, int] = field(default_factory=dict)
    engagement: EngagementCounts = field(default_factory=EngagementCounts)


@dataclass(frozen=True)
class PipelineConfig:
    """Every constant the scoring pipeline consumes.

    Weights:
      alpha, beta, gamma    relevance / rank-prior / channel-consensus mix
                            in the fused positive score
      mu_rel, lambda_eng    relevance vs engagement mix in the final
                            positive supervision target
      kappa1, kappa2        rank-prior vs lexical-overlap mix in the
                            negative difficulty score
      lambda_counts         per-count weights (orders, carts, clicks,
                            views) inside the log-compressed engagement
                            signal

    Shaping:
      sigmoid_k             slope of the engagement smoothing sigmoid
      epsilon_norm          guard added to the per-query engagement max

    Structure:
      channel_caps          channel id -> max rank considered (cap >= 2)
      stage_thresholds      per-stage confidence cutoffs, cheapest first
      stage_argmax_tie      'high' or 'low': which label wins an exact
                            probability tie inside one stage

    Evaluation:
      k_eval                retrieval depth for offline metrics
      relevant_threshold    minimum rating counted relevant for P@K
      ndcg_gain             'linear' or 'exponential'
      rng_seed              default seed for sampling commands
    """

    alpha: float = 0.6
    beta: float = 0.3
    gamma: float = 0.1
    mu_rel: float = 0.85
    lambda_eng: float = 0.15
    kappa1: float = 0.7
    kappa2: float = 0.3
    lambda_counts: tuple[float, ...] = (1.5, 0.3, 0.1, 0.01)
    sigmoid_k: float = 8.0
    epsilon_norm: float = 1e-8
    channel_caps: Mapping[str, int] = field(
        default_factory=lambda: dict(DEFAULT_CHANNEL_CAPS)
    )
    stage_thresholds: tuple[float, ...] = (0.9, 0.85, 0.8)
    stage_argmax_tie: str = "high"
    k_eval: int = 25
    relevant_threshold: int = 3
    ndcg_gain: str = "linear"
    rng_seed: int = 0


def load_default_config() -> PipelineConfig:
    """Return the stock configuration with all tuned constants filled in."""
    return PipelineConfig()


def validate_config(config: PipelineConfig) -> list[str]:
    """Check configuration invariants; returns a list of violations (empty = ok)."""
    problems: list[str] = []
    for name in ("alpha", "beta", "gamma", "mu_rel", "lambda_eng", "kappa1", "kappa2"):
        if getattr(config, name) < 0:
            problems.append(f"{name} must be >= 0")
    if len(config.lambda_counts) != 4:
        problems.append("lambda_counts must have exactly 4 entries")
    elif any(lam < 0 for lam in config.lambda_counts):
        problems.append("lambda_counts entries must be >= 0")
    if config.sigmoid_k <= 0:
        problems.append("sigmoid_k must be > 0")
    if config.epsilon_norm <= 0:
        problems.append("epsilon_norm must be > 0")
    if not config.channel_caps:
        problems.append("channel_caps must name at least one channel")
    for channel, cap in config.channel_caps.items():
        if cap < 2:
            problems.append(f"channel cap for {channel!r} must be >= 2")
    if not config.stage_thresholds:
        problems.append("stage_thresholds must not be empty")
    for i, thr in enumerate(config.stage_thresholds):
        if not 0.0 < thr <= 1.0:
            problems.append(f"stage threshold {i} must be in (0, 1]")
    if config.stage_argmax_tie not in ("high", "low"):
        problems.append("stage_argmax_tie must be 'high' or 'low'")
    if config.k_eval < 1:
        problems.append("k_eval must be >= 1")
    if not RATING_MIN <= config.relevant_threshold <= RATING_MAX:
        problems.append("relevant_threshold must be a rating in 0..4")
    if config.ndcg_gain not in ("linear", "exponential"):
        problems.append("ndcg_gain must be 'linear' or 'exponential'")
    return problems


def validate_record(record: QipRecord, config: PipelineConfig) -> list[str]:
    """Check one record against the data invariants.

    Violations are data, not failures: the result is a list of messages,
    empty when the record is admissible for scoring under ``config``.
    """
    problems: list[str] = []
    if record.human_rating is None and record.stage_distributions is None:
        problems.append("no rating evidence (need human_rating or stage_distributions)")
    if record.human_rating is not None and not (
        RATING_MIN <= record.human_rating <= RATING_MAX
    ):
        problems.append(f"human_rating {record.human_rating} outside 0..4")
    if record.stage_distributions is not None:
        if len(record.stage_distributions) == 0:
            problems.append("stage_distributions present but empty")
        for i, dist in enumerate(record.stage_distributions):
            if len(dist) != RATING_MAX + 1:
                problems.append(f"stage distribution {i} has {len(dist)} entries, expected 5")
                continue
            if any(p < 0 for p in dist):
                problems.append(f"stage distribution {i} has a negative entry")
            total = math.fsum(dist)
            if abs(total - 1.0) > 1e-6:
                problems.append(f"stage distribution {i} sums to {total!r}, not 1")
    for channel, rank in record.channel_ranks.items():
        if rank < 1:
            problems.append(f"rank < 1 for channel {channel!r}")
        if channel not in config.channel_caps:
            problems.append(f"unknown channel {channel!r}")
    for name in ("orders", "carts", "clicks", "views"):
        value = getattr(record.engagement, name)
        if not isinstance(value, int) or value < 0:
            problems.append(f"engagement count {name} must be a non-negative integer")
    return problems


def derive_seed(seed: int, key: str) -> int:
    """Stable 64-bit sub-stream seed for ``key`` under a root ``seed``.

    Keyed hashing makes per-query randomness independent of iteration
    order and worker scheduling.
    """
    packed = struct.pack("<Q", seed & 0xFFFFFFFFFFFFFFFF)
    digest = hashlib.blake2b(key.encode("utf-8"), digest_size=8, key=packed).digest()
    return int.from_bytes(digest, "little")


# --------------------------------------------------------------------------
# corpus serialization


def record_to_dict(record: QipRecord) -> dict:
    return {
        "query_id": record.query_id,
        "query_text": record.query_text,
        "item_id": record.item_id,
        "item_text": record.item_text,
        "human_rating": record.human_rating,
        "stage_distributions": (
            None
            if record.stage_distributions is None
            else [list(d) for d in record.stage_distributions]
        ),
        "channel_ranks": dict(record.channel_ranks),
        "engagement": {
            "orders": record.engagement.orders,
            "carts": record.engagement.carts,
            "clicks": record.engagement.clicks,
            "views": record.engagement.views,
        },
    }


def record_from_dict(obj: Mapping) -> QipRecord:
    try:
        eng = obj["engagement"]
        counts = EngagementCounts(
            orders=eng["orders"], carts=eng["carts"], clicks=eng["clicks"], views=eng["views"]
        )
        dists = obj.get("stage_distributions")
        return QipRecord(
            query_id=obj["query_id"],
            query_text=obj["query_text"],
            item_id=obj["item_id"],
            item_text=obj["item_text"],
            human_rating=obj.get("human_rating"),
            stage_distributions=(
                None if dists is None else tuple(tuple(float(p) for p in d) for d in dists)
            ),
            channel_ranks=dict(obj.get("channel_ranks") or {}),
            engagement=counts,
        )
    except KeyError as exc:
        raise ValueError(f"record is missing field {exc.args[0]!r}") from None


def write_corpus(path: str | Path, records: Iterable[QipRecord]) -> int:
    """Write records as JSON lines; returns the number written."""
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record_to_dict(record), ensure_ascii=False, sort_keys=True))
            fh.write("\n")
            count += 1
    return count


def read_corpus(path: str | Path) -> list[QipRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: invalid JSON: {exc}") from None
            try:
                records.append(record_from_dict(obj))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    return records


# --------------------------------------------------------------------------
# config file format


def parse_kv_text(text: str) -> dict[str, str]:
    """Parse flat ``key = value`` lines into a string map."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ValueError(f"line {lineno}: empty key")
        if key in out:
            raise ValueError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value.strip()
    return out


def _parse_float_tuple(value: str) -> tuple[float, ...]:
    parts = [p.strip() for p in value.split(",") if p.strip()]
    return tuple(float(p) for p in parts)


def _parse_channel_caps(value: str) -> dict[str, int]:
    caps: dict[str, int] = {}
    for part in value.split(","):
        part = part.strip()
        if not part:
            continue
        if ":" not in part:
            raise ValueError(f"channel cap entry {part!r} must look like name:cap")
        name, cap = part.split(":", 1)
        caps[name.strip()] = int(cap.strip())
    return caps


_CONFIG_PARSERS = {
    "alpha": float,
    "beta": float,
    "gamma": float,
    "mu_rel": float,
    "lambda_eng": float,
    "kappa1": float,
    "kappa2": float,
    "lambda_counts": _parse_float_tuple,
    "sigmoid_k": float,
    "epsilon_norm": float,
    "channel_caps": _parse_channel_caps,
    "stage_thresholds": _parse_float_tuple,
    "stage_argmax_tie": str,
    "k_eval": int,
    "relevant_threshold": int,
    "ndcg_gain": str,
    "rng_seed": int,
}


def parse_config_text(text: str) -> PipelineConfig:
    """Parse a config file body, starting from the defaults.

    Unknown keys and invariant violations raise ValueError.
    """
    raw = parse_kv_text(text)
    overrides: dict = {}
    for key, value in raw.items():
        parser = _CONFIG_PARSERS.get(key)
        if parser is None:
            raise ValueError(f"unknown config key {key!r}")
        try:
            overrides[key] = parser(value)
        except ValueError as exc:
            raise ValueError(f"config key {key!r}: {exc}") from None
    config = replace(load_default_config(), **overrides)
    problems = validate_config(config)
    if problems:
        raise ValueError("invalid config: " + "; ".join(problems))
    return config


def load_config(path: str | Path) -> PipelineConfig:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            return parse_config_text(fh.read())
        except ValueError as exc:
            raise ValueError(f"{path}: {exc}") from None


def config_to_text(config: PipelineConfig) -> str:
    """Render a config as the flat key-value file format."""

    def fmt(value) -> str:
        if isinstance(value, tuple):
            return ",".join(repr(v) for v in value)
        if isinstance(value, Mapping):
            return ",".join(f"{k}:{v}" for k, v in value.items())
        if isinstance(value, float):
            return repr(value)
        return str(value)

    lines = [f"{name} = {fmt(getattr(config, name))}" for name in _CONFIG_PARSERS]
    return "\n".join(lines) + "\n"


def save_config(config: PipelineConfig, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(config_to_text(config))
