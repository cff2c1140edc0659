"""Query-time translation, candidate ranking, and accuracy evaluation.

A query (user, time, place) is translated by its spatiotemporal relation
into a point of relation space; every candidate POI is projected into that
space and ranked by L1 distance to the translated point. Ranking is an
exact linear scan over the whole POI table; ties break toward the lower
POI id so results are fully deterministic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .embedding import ModelParams
from .errors import ConfigError
from .ingest.checkins import CheckIn
from .ingest.discretize import Discretizer, KMeansRegions
from .ingest.triples import IdMap, Vocab, pattern_key

DEFAULT_KS = (1, 5, 10, 15, 20)


@dataclass
class Query:
    """A resolved recommendation query over dense ids.

    ``rel_id`` is None when no training pattern was reachable under the
    fallback policy; such queries are unanswerable by the model and counted
    separately. ``truth_poi_id`` is None when the ground-truth POI never
    appeared in training (the query still ranks, it just cannot hit).
    """

    user_id: int
    rel_id: Optional[int]
    truth_poi_id: Optional[int] = None
    fallback_used: bool = False


@dataclass
class RankedResult:
    """Top-k POIs ordered by ascending distance, ties by ascending id."""

    items: list[tuple[int, float]]
    k: int


@dataclass
class EvalReport:
    acc: dict[int, float]
    queries: int
    unanswerable: int

    def to_json(self) -> str:
        return json.dumps(
            {
                "acc": {str(k): self.acc[k] for k in sorted(self.acc)},
                "queries": self.queries,
                "unanswerable": self.unanswerable,
            },
            sort_keys=True,
        )


def translate_query(params: ModelParams, user_id: int, rel_id: int) -> np.ndarray:
    """Translated point in relation space: projected user plus relation."""
    if not (0 <= user_id < params.n_users and 0 <= rel_id < params.n_relations):
        raise IndexError(f"query ids (user={user_id}, relation={rel_id}) out of range")
    u = params.user_emb[user_id]
    r = params.rel_emb[rel_id]
    if params.variant == "transR":
        return u @ params.rel_proj[rel_id] + r
    if params.variant == "transH":
        w = params.rel_normal[rel_id]
        return (u - (w @ u) * w) + r
    return u + r


def candidate_distances(params: ModelParams, rel_id: int, v_q: np.ndarray) -> np.ndarray:
    """L1 distance of every POI (projected by the relation) to the query point."""
    pois = params.poi_emb
    if params.variant == "transR":
        projected = pois @ params.rel_proj[rel_id]
    elif params.variant == "transH":
        w = params.rel_normal[rel_id]
        projected = pois - np.outer(pois @ w, w)
    else:
        projected = pois
    return np.abs(projected - v_q).sum(axis=1)


def rank_pois(
    params: ModelParams,
    v_q: np.ndarray,
    rel_id: int,
    k: int,
    block_size: Optional[int] = None,
) -> RankedResult:
    """k smallest-distance POIs by exact scan.

    ``block_size`` switches to a chunked scan that merges per-block
    candidates; it exists for memory-bound callers and returns exactly the
    same result as the reference full scan.
    """
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    n = params.n_pois
    k = min(k, n)
    if block_size is None:
        dist = candidate_distances(params, rel_id, v_q)
        order = np.argsort(dist, kind="stable")[:k]
        return RankedResult(items=[(int(i), float(dist[i])) for i in order], k=k)

    best: list[tuple[float, int]] = []
    for start in range(0, n, block_size):
        stop = min(start + block_size, n)
        chunk = ModelParams(
            variant=params.variant, d=params.d, m=params.m,
            user_emb=params.user_emb, poi_emb=params.poi_emb[start:stop],
            rel_emb=params.rel_emb, rel_proj=params.rel_proj, rel_normal=params.rel_normal,
        )
        dist = candidate_distances(chunk, rel_id, v_q)
        order = np.argsort(dist, kind="stable")[:k]
        best.extend((float(dist[i]), start + int(i)) for i in order)
        best.sort()
        best = best[:k]
    return RankedResult(items=[(i, d) for d, i in best], k=k)


def rank_of_poi(dist: np.ndarray, poi_id: int) -> int:
    """1-based rank of a POI under the (distance, id) tie rule."""
    d_star = dist[poi_id]
    ahead = int((dist < d_star).sum())
    tied_before = int((dist[:poi_id] == d_star).sum())
    return ahead + tied_before + 1


def evaluate(params: ModelParams, queries: Sequence[Query], ks: Iterable[int] = DEFAULT_KS) -> EvalReport:
    """accuracy@k over answerable queries; unanswerable ones counted apart.

    A query is a hit at k when its ground-truth POI lands in the top-k
    ranking of all POIs. Evaluation never mutates the model.
    """
    ks = sorted(set(int(k) for k in ks))
    if not queries:
        raise ConfigError("cannot evaluate an empty query set")
    hits = {k: 0 for k in ks}
    answerable = 0
    unanswerable = 0
    for q in queries:
        if q.rel_id is None:
            unanswerable += 1
            continue
        answerable += 1
        if q.truth_poi_id is None:
            continue  # rankable, but the truth POI is unknown to the model
        v_q = translate_query(params, q.user_id, q.rel_id)
        dist = candidate_distances(params, q.rel_id, v_q)
        rank = rank_of_poi(dist, q.truth_poi_id)
        for k in ks:
            if rank <= k:
                hits[k] += 1
    acc = {k: (hits[k] / answerable if answerable else 0.0) for k in ks}
    return EvalReport(acc=acc, queries=len(queries), unanswerable=unanswerable)


# ---------------------------------------------------------------------------
# pattern resolution for raw queries


def resolve_pattern(
    relations: IdMap,
    disc: Discretizer,
    timestamp: int,
    lat: float,
    lon: float,
    poi_key: Optional[str] = None,
) -> tuple[Optional[int], bool]:
    """Training relation id for a raw (time, place) query.

    Falls back when the exact <slot, region> pair never occurred in
    training: first the same slot in the nearest region (by centroid
    distance, k-means regions only), then the same region under the nearest
    slot. Returns (None, True) when nothing is reachable.
    """
    try:
        slot, region = disc.pattern(timestamp, lat, lon, poi_key)
    except KeyError:
        return None, True
    exact = relations.get(pattern_key(slot, region))
    if exact is not None:
        return exact, False
    if isinstance(disc.regions, KMeansRegions):
        for other in disc.regions.regions_by_distance(lat, lon):
            rel = relations.get(pattern_key(slot, int(other)))
            if rel is not None:
                return rel, True
    for delta in sorted(range(disc.num_slots), key=lambda s: (abs(s - slot), s)):
        rel = relations.get(pattern_key(delta, region))
        if rel is not None:
            return rel, True
    return None, True


def build_queries(
    test_checkins: Sequence[CheckIn],
    vocab: Vocab,
    disc: Discretizer,
) -> list[Query]:
    """Resolve test check-ins into evaluation queries.

    The check-in's own coordinates stand in for the user's query location,
    which matches how held-out check-ins are replayed against the model.
    """
    queries: list[Query] = []
    for rec in test_checkins:
        user_id = vocab.users.get(rec.user)
        if user_id is None:
            queries.append(Query(user_id=-1, rel_id=None))
            continue
        rel_id, fallback = resolve_pattern(vocab.relations, disc, rec.timestamp, rec.lat, rec.lon, rec.poi)
        queries.append(
            Query(
                user_id=user_id,
                rel_id=rel_id,
                truth_poi_id=vocab.pois.get(rec.poi),
                fallback_used=fallback,
            )
        )
    return queries
