"""Vocabularies and the user -> pattern -> POI triple store."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .checkins import CheckIn
from .discretize import Discretizer


class IdMap:
    """Bijection between external keys and dense ids (contiguous from 0)."""

    def __init__(self):
        self._key_to_id: dict[str, int] = {}
        self._keys: list[str] = []
        self.counts: list[int] = []

    def __len__(self) -> int:
        return len(self._keys)

    def __contains__(self, key: str) -> bool:
        return key in self._key_to_id

    def add(self, key: str) -> int:
        """Id for key, inserting it (count starts at 0) when unseen."""
        found = self._key_to_id.get(key)
        if found is not None:
            return found
        new_id = len(self._keys)
        self._key_to_id[key] = new_id
        self._keys.append(key)
        self.counts.append(0)
        return new_id

    def observe(self, key: str) -> int:
        """Like add() but also bumps the occurrence count."""
        idx = self.add(key)
        self.counts[idx] += 1
        return idx

    def id_of(self, key: str) -> int:
        return self._key_to_id[key]

    def get(self, key: str) -> Optional[int]:
        return self._key_to_id.get(key)

    def key_of(self, idx: int) -> str:
        return self._keys[idx]

    @property
    def keys(self) -> list[str]:
        return list(self._keys)

    @classmethod
    def from_keys(cls, keys: Iterable[str]) -> "IdMap":
        m = cls()
        for k in keys:
            m.add(k)
        return m


def pattern_key(slot: int, region: int) -> str:
    """External key of a <time slot, region> relation."""
    return f"{slot}|{region}"


def parse_pattern_key(key: str) -> tuple[int, int]:
    slot, region = key.split("|", 1)
    return int(slot), int(region)


def content_pattern_key(word: str, region: int) -> str:
    """External key of a <word, region> content relation."""
    return f"{word}|{region}"


@dataclass
class Vocab:
    """Dense-id vocabularies for users, POIs, tl relations, and wl patterns."""

    users: IdMap = field(default_factory=IdMap)
    pois: IdMap = field(default_factory=IdMap)
    relations: IdMap = field(default_factory=IdMap)
    patterns: IdMap = field(default_factory=IdMap)  # content <word, region> pairs

    def sizes(self) -> tuple[int, int, int]:
        return len(self.users), len(self.pois), len(self.relations)


@dataclass
class TripleStore:
    """Converted (user, relation, poi) triples with corruption statistics.

    ``tph``/``hpt`` are the mean tails-per-head and heads-per-tail of each
    relation, counted over the produced triples; they drive Bernoulli
    negative sampling. ``members`` answers triple-existence in O(1).
    """

    triples: np.ndarray  # (n, 3) int64 rows (user, relation, poi)
    tph: np.ndarray  # (|R|,) float64
    hpt: np.ndarray  # (|R|,) float64
    n_users: int
    n_pois: int
    n_relations: int
    members: set[tuple[int, int, int]] = field(default_factory=set)

    def __post_init__(self):
        if not self.members and len(self.triples):
            self.members = {(int(u), int(r), int(v)) for u, r, v in self.triples}

    def __len__(self) -> int:
        return int(self.triples.shape[0])

    def __contains__(self, triple: tuple[int, int, int]) -> bool:
        return triple in self.members


def compute_relation_stats(triples: np.ndarray, n_relations: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-relation mean tails-per-head and heads-per-tail."""
    tph = np.zeros(n_relations, dtype=np.float64)
    hpt = np.zeros(n_relations, dtype=np.float64)
    for r in range(n_relations):
        mask = triples[:, 1] == r
        count = int(mask.sum())
        if count == 0:
            continue
        heads = np.unique(triples[mask, 0]).size
        tails = np.unique(triples[mask, 2]).size
        tph[r] = count / heads
        hpt[r] = count / tails
    return tph, hpt


def build_triples(checkins: Iterable[CheckIn], disc: Discretizer, vocab: Optional[Vocab] = None) -> tuple[Vocab, TripleStore]:
    """Convert check-in quadruples into (user, <slot, region>, poi) triples.

    One triple per check-in, in input order. The discretizer must have been
    fitted on training data only; ids are assigned in first-seen order so the
    conversion is deterministic for a fixed input sequence.
    """
    vocab = vocab if vocab is not None else Vocab()
    rows: list[tuple[int, int, int]] = []
    for rec in checkins:
        u = vocab.users.observe(rec.user)
        v = vocab.pois.observe(rec.poi)
        slot, region = disc.pattern(rec.timestamp, rec.lat, rec.lon, rec.poi)
        r = vocab.relations.observe(pattern_key(slot, region))
        rows.append((u, r, v))
    triples = np.asarray(rows, dtype=np.int64).reshape(-1, 3)
    tph, hpt = compute_relation_stats(triples, len(vocab.relations))
    store = TripleStore(
        triples=triples,
        tph=tph,
        hpt=hpt,
        n_users=len(vocab.users),
        n_pois=len(vocab.pois),
        n_relations=len(vocab.relations),
    )
    return vocab, store
