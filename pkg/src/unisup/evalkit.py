"""Offline evaluation: exact top-K retrieval and graded list metrics.

Retrieval is exact cosine over unit-normalized vectors (dot product),
with ties broken by ascending id so results are reproducible. Metrics
follow the graded-relevance protocol: average rating over the list,
precision against a rating threshold, and NDCG against an ideal pool of
all annotated candidates for the query. The density curve reports what
share of a retrieved list sits above each within-query engagement
percentile cutoff.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from unisup.datamodel import PipelineConfig, load_default_config

DEFAULT_DENSITY_CUTOFFS = (10.0, 25.0, 50.0, 75.0, 90.0)

NORM_TOLERANCE = 1e-6


class EmbeddingTable:
    """Unit-normalized id -> vector store backing exact search.

    Construction validates that every vector has L2 norm 1 within 1e-6.
    The table is read-only after construction and safe to share.
    """

    def __init__(self, vectors: Mapping[str, Sequence[float]]):
        if not vectors:
            raise ValueError("embedding table must not be empty")
        ids = tuple(vectors.keys())
        matrix = np.asarray([np.asarray(vectors[i], dtype=np.float64) for i in ids])
        if matrix.ndim != 2:
            raise ValueError("all vectors must share one dimension")
        norms = np.linalg.norm(matrix, axis=1)
        bad = np.flatnonzero(np.abs(norms - 1.0) > NORM_TOLERANCE)
        if bad.size:
            raise ValueError(
                f"vector {ids[bad[0]]!r} has norm {norms[bad[0]]!r}, expected 1.0"
            )
        self.dimension: int = int(matrix.shape[1])
        self.ids: tuple[str, ...] = ids
        self.matrix: np.ndarray = matrix
        order = np.argsort(np.asarray(ids, dtype=object))
        rank = np.empty(len(ids), dtype=np.int64)
        rank[order] = np.arange(len(ids))
        self._id_rank = rank

    def __len__(self) -> int:
        return len(self.ids)

    def __contains__(self, item_id: str) -> bool:
        return item_id in self._index()

    def vector(self, item_id: str) -> np.ndarray:
        return self.matrix[self._index()[item_id]]

    def _index(self) -> dict[str, int]:
        cached = getattr(self, "_id_to_pos", None)
        if cached is None:
            cached = {item_id: i for i, item_id in enumerate(self.ids)}
            self._id_to_pos = cached
        return cached

    @property
    def vectors(self) -> dict[str, np.ndarray]:
        return {item_id: self.matrix[i] for i, item_id in enumerate(self.ids)}


def topk(
    query_vector: Sequence[float], table: EmbeddingTable, k: int
) -> list[tuple[str, float]]:
    """The k ids with the largest dot product, ties broken by ascending id."""
    q = np.asarray(query_vector, dtype=np.float64)
    if q.shape != (table.dimension,):
        raise ValueError(
            f"query vector has shape {q.shape}, table dimension is {table.dimension}"
        )
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    scores = table.matrix @ q
    order = np.lexsort((table._id_rank, -scores))[:k]
    return [(table.ids[i], float(scores[i])) for i in order]


@dataclass(frozen=True)
class RankedItem:
    item_id: str
    similarity: float
    rating: int
    engagement_percentile: float


@dataclass(frozen=True)
class RankedList:
    """An ordered retrieval result for one query.

    Items must arrive sorted by similarity descending; engagement
    percentiles must have been computed over the query's full candidate
    set, not just the retrieved part.
    """

    query_id: str
    items: tuple[RankedItem, ...]

    def __post_init__(self):
        sims = [it.similarity for it in self.items]
        if any(a < b for a, b in zip(sims, sims[1:])):
            raise ValueError(f"query {self.query_id}: items not sorted by similarity desc")

    def ratings(self) -> list[int]:
        return [it.rating for it in self.items]


def avg_relevance_at_k(ranked: RankedList) -> float:
    """Arithmetic mean rating over the retrieved list."""
    if not ranked.items:
        raise ValueError(f"query {ranked.query_id}: empty ranked list")
    return sum(it.rating for it in ranked.items) / len(ranked.items)


def precision_at_k(ranked: RankedList, threshold: int) -> float:
    """Fraction of retrieved items rated at or above ``threshold``."""
    if not ranked.items:
        raise ValueError(f"query {ranked.query_id}: empty ranked list")
    hits = sum(1 for it in ranked.items if it.rating >= threshold)
    return hits / len(ranked.items)


def _gain(rating: int, mode: str) -> float:
    if mode == "linear":
        return float(rating)
    if mode == "exponential":
        return float(2**rating - 1)
    raise ValueError(f"gain must be 'linear' or 'exponential', got {mode!r}")


def ndcg_at_k(ranked: RankedList, ideal_pool: Sequence[int], gain: str = "linear") -> float:
    """NDCG of the list against the best ordering of the annotated pool.

    The pool holds ratings for all annotated candidates of the query,
    retrieved or not; it is sorted descending and truncated at the list
    length to form the ideal. An all-zero pool returns 1.0 by convention.
    """
    k = len(ranked.items)
    if k > len(ideal_pool):
        raise ValueError(
            f"query {ranked.query_id}: list length {k} exceeds ideal pool size {len(ideal_pool)}"
        )
    dcg = 0.0
    for i, item in enumerate(ranked.items, start=1):
        dcg += _gain(item.rating, gain) / np.log2(i + 1)
    idcg = 0.0
    for i, rating in enumerate(sorted(ideal_pool, reverse=True)[:k], start=1):
        idcg += _gain(rating, gain) / np.log2(i + 1)
    if idcg == 0.0:
        return 1.0
    return float(dcg / idcg)


def engagement_percentiles(values: Sequence[float]) -> np.ndarray:
    """Within-query percentiles (0..100) of engagement values, mid-rank method.

    Tied values share the average of the positions they occupy, so an
    all-tied set sits at the 50th percentile.
    """
    x = np.asarray(values, dtype=np.float64)
    if x.size == 0:
        raise ValueError("cannot rank an empty candidate set")
    _, inverse, counts = np.unique(x, return_inverse=True, return_counts=True)
    below = np.concatenate(([0], np.cumsum(counts)[:-1]))
    mid_rank = below[inverse] + (counts[inverse] + 1) / 2.0
    return 100.0 * (mid_rank - 0.5) / x.size


def engagement_density_curve(
    ranked: RankedList, cutoffs: Sequence[float]
) -> dict[float, float]:
    """Share of the list at or above each engagement-percentile cutoff."""
    if not ranked.items:
        raise ValueError(f"query {ranked.query_id}: empty ranked list")
    n = len(ranked.items)
    return {
        float(cutoff): sum(
            1 for it in ranked.items if it.engagement_percentile >= cutoff
        ) / n
        for cutoff in cutoffs
    }


# --------------------------------------------------------------------------
# per-query metric rows, aggregation, and run comparison


def query_metrics(
    ranked: RankedList,
    ideal_pool: Sequence[int],
    config: PipelineConfig,
    cutoffs: Sequence[float] = DEFAULT_DENSITY_CUTOFFS,
) -> dict[str, float | str]:
    """One per-query metric row, keyed by dump column names."""
    row: dict[str, float | str] = {
        "query_id": ranked.query_id,
        "avg_rel": avg_relevance_at_k(ranked),
        "p_at_k": precision_at_k(ranked, config.relevant_threshold),
        "ndcg": ndcg_at_k(ranked, ideal_pool, config.ndcg_gain),
    }
    density = engagement_density_curve(ranked, cutoffs)
    for cutoff in cutoffs:
        row[density_column(cutoff)] = density[float(cutoff)]
    return row


def density_column(cutoff: float) -> str:
    return f"density_{cutoff:g}"


def aggregate_metrics(rows: Sequence[Mapping[str, float | str]]) -> dict[str, float]:
    """Macro-average every numeric column over queries (each query weighs equally)."""
    if not rows:
        return {}
    columns = [c for c in rows[0] if c != "query_id"]
    ordered = sorted(rows, key=lambda r: r["query_id"])
    return {
        col: float(np.mean([float(r[col]) for r in ordered])) for col in columns
    }


def lift_report(
    agg_a: Mapping[str, float], agg_b: Mapping[str, float]
) -> dict[str, dict[str, float | None]]:
    """Per-metric deltas (b - a) and relative lifts (b - a) / a.

    The lift is None where the baseline is exactly zero.
    """
    report: dict[str, dict[str, float | None]] = {}
    for col in agg_a:
        if col not in agg_b:
            continue
        a, b = agg_a[col], agg_b[col]
        delta = b - a
        report[col] = {
            "a": a,
            "b": b,
            "delta": delta,
            "lift": (delta / a) if a != 0 else None,
        }
    return report


def compare_runs(
    run_a: Sequence[RankedList],
    run_b: Sequence[RankedList],
    *,
    ideal_pools: Mapping[str, Sequence[int]] | None = None,
    config: PipelineConfig | None = None,
    cutoffs: Sequence[float] = DEFAULT_DENSITY_CUTOFFS,
) -> dict:
    """Compare two runs over the same query set.

    When ``ideal_pools`` is omitted, each list's own ratings serve as its
    NDCG pool (a weaker pool; pass the full annotated pools when
    available). Raises ValueError if the query sets differ.
    """
    config = config or load_default_config()
    ids_a = {r.query_id for r in run_a}
    ids_b = {r.query_id for r in run_b}
    if ids_a != ids_b:
        missing = sorted(ids_a ^ ids_b)
        raise ValueError(f"query sets differ between runs (e.g. {missing[:3]})")
    if len(run_a) != len(ids_a) or len(run_b) != len(ids_b):
        raise ValueError("duplicate query_id within a run")

    def rows(run: Sequence[RankedList]) -> list[dict]:
        out = []
        for ranked in run:
            pool = (
                ideal_pools[ranked.query_id] if ideal_pools is not None else ranked.ratings()
            )
            out.append(query_metrics(ranked, pool, config, cutoffs))
        return out

    agg_a = aggregate_metrics(rows(run_a))
    agg_b = aggregate_metrics(rows(run_b))
    return {"queries": len(ids_a), "metrics": lift_report(agg_a, agg_b)}


# --------------------------------------------------------------------------
# embedding file format: <u4 count, <u4 dim, then per vector
# <u2 id-length, id bytes (UTF-8), dim little-endian float32


def write_embeddings(
    path: str | Path, vectors: Mapping[str, Sequence[float]] | EmbeddingTable
) -> None:
    if isinstance(vectors, EmbeddingTable):
        items: Iterable[tuple[str, np.ndarray]] = zip(vectors.ids, vectors.matrix)
        count, dim = len(vectors.ids), vectors.dimension
    else:
        items = ((k, np.asarray(v)) for k, v in vectors.items())
        count = len(vectors)
        dim = len(next(iter(vectors.values())))
    with open(path, "wb") as fh:
        fh.write(struct.pack("<II", count, dim))
        for vec_id, vec in items:
            raw = vec_id.encode("utf-8")
            if len(raw) > 0xFFFF:
                raise ValueError(f"id too long to serialize: {vec_id[:32]!r}...")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(np.asarray(vec, dtype="<f4").tobytes())


def read_embeddings(path: str | Path) -> EmbeddingTable:
    with open(path, "rb") as fh:
        header = fh.read(8)
        if len(header) != 8:
            raise ValueError(f"{path}: truncated embedding header")
        count, dim = struct.unpack("<II", header)
        vectors: dict[str, np.ndarray] = {}
        for _ in range(count):
            len_bytes = fh.read(2)
            if len(len_bytes) != 2:
                raise ValueError(f"{path}: truncated id header")
            (id_len,) = struct.unpack("<H", len_bytes)
            id_bytes = fh.read(id_len)
            if len(id_bytes) != id_len:
                raise ValueError(f"{path}: truncated id")
            vec_id = id_bytes.decode("utf-8")
            buf = fh.read(4 * dim)
            if len(buf) != 4 * dim:
                raise ValueError(f"{path}: truncated vector for id {vec_id!r}")
            vectors[vec_id] = np.frombuffer(buf, dtype="<f4").astype(np.float64)
    return EmbeddingTable(vectors)
