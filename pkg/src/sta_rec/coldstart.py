"""Cold-start extension: POI-POI translations through shared content.

POIs that share a <word, region> pair get connected by content-pattern
edges with their own relation embeddings (and projections). Training
alternates user-edge batches with content-edge batches over a joint hinge
objective, so a POI without any check-ins still receives a meaningful
embedding through the POIs it shares content with.
"""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import IO, Iterable, Mapping, Optional

import numpy as np

from .errors import ConfigError
from .ingest.checkins import CheckIn
from .ingest.discretize import Discretizer
from .ingest.triples import TripleStore, Vocab, content_pattern_key
from .model_io import VocabTables
from .seeding import rng_for
from .training import TrainConfig, TrainResult, train

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ContentPattern:
    """A <word, region> pair acting as a POI-POI relation."""

    word: str
    region: int

    @property
    def key(self) -> str:
        return content_pattern_key(self.word, self.region)


@dataclass
class ContentTripleStore:
    """(poi, <word, region>, poi) triples between POIs sharing a pattern."""

    triples: np.ndarray  # (n, 3) int64 rows (poi, pattern, poi)
    n_patterns: int
    n_pois: int
    members: set[tuple[int, int, int]] = field(default_factory=set)

    def __post_init__(self):
        if not self.members and len(self.triples):
            self.members = {(int(v), int(r), int(s)) for v, r, s in self.triples}

    def __len__(self) -> int:
        return int(self.triples.shape[0])


def collect_poi_content(checkins: Iterable[CheckIn], vocab: Vocab, disc: Discretizer) -> dict[int, tuple[frozenset[str], int]]:
    """Per-POI word set and region, keyed by POI id.

    Words are unioned across a POI's check-ins; the region comes from the
    first observed coordinates (POIs are fixed places, so later check-ins
    agree in practice).
    """
    words: dict[int, set[str]] = defaultdict(set)
    regions: dict[int, int] = {}
    for rec in checkins:
        poi_id = vocab.pois.get(rec.poi)
        if poi_id is None:
            continue
        words[poi_id].update(rec.words)
        if poi_id not in regions:
            regions[poi_id] = disc.region(rec.lat, rec.lon, rec.poi)
    return {pid: (frozenset(words[pid]), regions[pid]) for pid in regions}


def build_content_triples(
    poi_content: Mapping[int, tuple[frozenset[str], int]],
    vocab: Vocab,
    pair_budget: int = 50,
    seed: int = 0,
) -> ContentTripleStore:
    """Enumerate POI pairs sharing a <word, region> pattern.

    Every pattern held by two or more POIs emits the ordered pairs
    (v, pattern, s) for v != s, capped at ``pair_budget`` sampled pairs per
    pattern (seeded) to bound the quadratic blowup of frequent words. The
    full pair set is symmetric; sampling happens after enumeration.
    """
    by_pattern: dict[ContentPattern, list[int]] = defaultdict(list)
    any_words = False
    for poi_id in sorted(poi_content):
        words, region = poi_content[poi_id]
        if words:
            any_words = True
        for word in sorted(words):
            by_pattern[ContentPattern(word=word, region=region)].append(poi_id)
    if not any_words:
        raise ConfigError(
            "no content words in this dataset; the content-based cold-start extension does not apply"
        )

    rows: list[tuple[int, int, int]] = []
    for pattern in sorted(by_pattern, key=lambda p: p.key):
        pois = sorted(set(by_pattern[pattern]))
        if len(pois) < 2:
            continue
        rel_id = vocab.patterns.add(pattern.key)
        pairs = [(v, rel_id, s) for v in pois for s in pois if v != s]
        if len(pairs) > pair_budget:
            rng = rng_for(seed, "content-pairs", pattern.key)
            picks = rng.choice(len(pairs), size=pair_budget, replace=False)
            pairs = [pairs[i] for i in sorted(picks)]
        rows.extend(pairs)

    triples = np.asarray(rows, dtype=np.int64).reshape(-1, 3)
    return ContentTripleStore(triples=triples, n_patterns=len(vocab.patterns), n_pois=len(vocab.pois))


def train_coldstart(
    store: TripleStore,
    content_store: ContentTripleStore,
    config: TrainConfig,
    vocab: Optional[VocabTables] = None,
    checkpoint_dir=None,
    resume_from=None,
    log_stream: Optional[IO[str]] = None,
) -> TrainResult:
    """Joint training over user edges and content edges, alternating batches.

    With an empty content store this degrades to the plain objective and
    produces exactly the same model as ``train`` for the same seed.
    """
    if len(content_store) == 0:
        log.warning("content triple store is empty; training reduces to the plain objective")
    return train(
        store,
        config,
        content_store=content_store,
        vocab=vocab,
        checkpoint_dir=checkpoint_dir,
        resume_from=resume_from,
        log_stream=log_stream,
    )


# ---------------------------------------------------------------------------
# cold-start experiment protocol


def cold_start_poi_keys(checkins: Iterable[CheckIn], threshold: int = 5) -> set[str]:
    """POIs visited by fewer than ``threshold`` distinct users."""
    visitors: dict[str, set[str]] = defaultdict(set)
    for rec in checkins:
        visitors[rec.poi].add(rec.user)
    return {poi for poi, users in visitors.items() if len(users) < threshold}


def coldstart_split(checkins: list[CheckIn], threshold: int = 5) -> tuple[list[int], list[int], set[str]]:
    """Train/test record indexes for the cold-start protocol.

    Users with at least one cold-start check-in become test users; their
    cold-start records are the test set and every other record (theirs and
    other users') is training data.
    """
    cold = cold_start_poi_keys(checkins, threshold)
    if not cold:
        raise ConfigError(
            f"no cold-start POIs under threshold {threshold}; raise the threshold or use a sparser dataset"
        )
    train_idx: list[int] = []
    test_idx: list[int] = []
    for i, rec in enumerate(checkins):
        if rec.poi in cold:
            test_idx.append(i)
        else:
            train_idx.append(i)
    return train_idx, test_idx, cold
