"""Per-user temporal train/validation/test splitting."""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import ConfigError
from ..seeding import rng_for
from .checkins import CheckIn

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SplitSpec:
    """Split fractions and optional seeded training reduction.

    ``train_frac`` of each user's chronologically ordered records become
    training data; the last ``val_frac`` share of that training portion is
    held out for validation. ``reduce_ratio`` removes that share of training
    records (uniformly, seeded) while the test set stays untouched.
    """

    train_frac: float = 0.8
    val_frac: float = 0.1
    reduce_ratio: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_frac < 1.0:
            raise ConfigError(f"train_frac must be in (0, 1), got {self.train_frac}")
        if not 0.0 <= self.val_frac < 1.0:
            raise ConfigError(f"val_frac must be in [0, 1), got {self.val_frac}")
        if not 0.0 <= self.reduce_ratio < 1.0:
            raise ConfigError(f"reduce_ratio must be in [0, 1), got {self.reduce_ratio}")


@dataclass
class Split:
    """Record indexes (into the parsed check-in list) per split label."""

    train: list[int]
    validation: list[int]
    test: list[int]
    dropped: list[int]

    def labels(self, n_records: int) -> list[str]:
        out = [""] * n_records
        for label, idxs in (
            ("train", self.train),
            ("validation", self.validation),
            ("test", self.test),
            ("dropped", self.dropped),
        ):
            for i in idxs:
                out[i] = label
        return out

    def take(self, checkins: Sequence[CheckIn], which: str) -> list[CheckIn]:
        return [checkins[i] for i in getattr(self, which)]


def split_by_user(checkins: Sequence[CheckIn], spec: SplitSpec) -> Split:
    """Split each user's records chronologically, earliest into training.

    Records are ordered per user by timestamp with ties kept in input order.
    Counts use floor arithmetic: a user with n records contributes
    floor(train_frac * n) training records (the last floor(val_frac * that)
    of them as validation) and the remainder as test. Users with fewer than
    two records keep everything in training.
    """
    per_user: dict[str, list[int]] = defaultdict(list)
    for idx, rec in enumerate(checkins):
        per_user[rec.user].append(idx)

    train: list[int] = []
    validation: list[int] = []
    test: list[int] = []
    few = 0
    for user, idxs in per_user.items():
        ordered = sorted(idxs, key=lambda i: checkins[i].timestamp)
        n = len(ordered)
        if n < 2:
            train.extend(ordered)
            few += 1
            continue
        n_train = int(spec.train_frac * n)
        n_val = int(spec.val_frac * n_train)
        train.extend(ordered[: n_train - n_val])
        validation.extend(ordered[n_train - n_val : n_train])
        test.extend(ordered[n_train:])
    if few:
        log.warning("%d users had fewer than 2 records; all their records went to train", few)

    dropped: list[int] = []
    if spec.reduce_ratio > 0.0 and train:
        n_drop = int(spec.reduce_ratio * len(train))
        if n_drop:
            rng = rng_for(spec.seed, "split-reduce")
            picks = rng.choice(len(train), size=n_drop, replace=False)
            drop_set = {train[i] for i in picks}
            dropped = sorted(drop_set)
            train = [i for i in train if i not in drop_set]

    return Split(train=train, validation=validation, test=test, dropped=dropped)
