"""Margin-ranking training loop.

Each epoch shuffles the training triples (seeded), walks them in mini
batches, pairs every positive triple with sampled corrupted triples, and
applies the summed hinge gradient of each batch in one SGD step followed by
constraint projection. All randomness of epoch ``e`` comes from generators
derived from ``(seed, e)``, so a run can be resumed at any epoch boundary
and reproduce the uninterrupted run exactly.

When a content-triple store is supplied (the cold-start extension), each
epoch interleaves user-edge batches with content-edge batches, sharing the
POI table between the two objectives.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, TYPE_CHECKING, Iterator, Optional

import numpy as np

from .embedding import (
    ModelParams,
    RelationBlock,
    audit_constraints,
    check_dims,
    init_params,
    init_relation_block,
)
from .errors import ConfigError, TrainingDivergedError
from .ingest.triples import TripleStore
from .model_io import VocabTables, load_train_state, save_model, save_train_state
from .seeding import rng_for

if TYPE_CHECKING:
    from .coldstart import ContentTripleStore


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters; defaults mirror the published settings."""

    lr: float = 0.0001
    margin: float = 2.0
    batch_size: int = 4800
    epochs: int = 1000
    seed: int = 0
    variant: str = "transR"
    dim: int = 100  # entity space d
    rel_dim: int = 100  # relation space m
    neg_mode: str = "bern"
    neg_count: int = 1
    checkpoint_every: int = 100
    audit: bool = False  # verify norm constraints after every batch

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigError(f"learning rate must be positive, got {self.lr}")
        if self.margin < 0:
            raise ConfigError(f"margin must be nonnegative, got {self.margin}")
        if self.batch_size < 1:
            raise ConfigError(f"batch size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.neg_mode not in ("bern", "unif"):
            raise ConfigError(f"neg_mode must be 'bern' or 'unif', got {self.neg_mode!r}")
        if self.neg_count < 1:
            raise ConfigError(f"neg_count must be >= 1, got {self.neg_count}")
        check_dims(self.variant, self.dim, self.rel_dim)


@dataclass
class EpochStats:
    epoch: int
    mean_loss: float
    violations: int
    seconds: float
    audit_excess: float = -math.inf  # only populated when auditing

    def to_json(self) -> str:
        return json.dumps(
            {"epoch": self.epoch, "mean_loss": self.mean_loss, "violations": self.violations, "seconds": self.seconds}
        )


@dataclass
class TrainReport:
    epochs: list[EpochStats] = field(default_factory=list)

    @property
    def final_loss(self) -> float:
        return self.epochs[-1].mean_loss if self.epochs else math.nan


@dataclass
class TrainResult:
    params: ModelParams
    report: TrainReport
    content: Optional[RelationBlock] = None


def sample_negative(
    triple: tuple[int, int, int],
    store: TripleStore,
    mode: str,
    rng: np.random.Generator,
    max_attempts: int = 100,
) -> tuple[int, int, int]:
    """Corrupt one side of a triple, avoiding known training triples.

    Under ``bern`` the head (user) is replaced with probability
    tph / (tph + hpt) of the triple's relation, otherwise the tail (POI);
    ``unif`` flips a fair coin. Candidates already present in the training
    set are redrawn, up to ``max_attempts``, then the last one is accepted.
    """
    u, r, v = triple
    if mode == "bern":
        denom = store.tph[r] + store.hpt[r]
        p_head = float(store.tph[r] / denom) if denom > 0 else 0.5
    else:
        p_head = 0.5
    replace_head = rng.random() < p_head
    candidate = (u, r, v)
    for _ in range(max_attempts):
        if replace_head:
            candidate = (int(rng.integers(store.n_users)), r, v)
        else:
            candidate = (u, r, int(rng.integers(store.n_pois)))
        if candidate not in store.members:
            return candidate
    return candidate


def _sample_content_negative(
    triple: tuple[int, int, int],
    members: set[tuple[int, int, int]],
    n_pois: int,
    rng: np.random.Generator,
    max_attempts: int = 100,
) -> tuple[int, int, int]:
    """Corrupt either endpoint POI of a (poi, wl, poi) triple."""
    v, r, s = triple
    replace_head = rng.random() < 0.5
    candidate = (v, r, s)
    for _ in range(max_attempts):
        if replace_head:
            candidate = (int(rng.integers(n_pois)), r, s)
        else:
            candidate = (v, r, int(rng.integers(n_pois)))
        if candidate not in members:
            return candidate
    return candidate


# ---------------------------------------------------------------------------
# vectorized batch step


def _batch_scores_grads(
    variant: str,
    head: np.ndarray,
    rel: np.ndarray,
    tail: np.ndarray,
    proj: Optional[np.ndarray],
    normal: Optional[np.ndarray],
):
    """Scores plus per-pair gradients for stacked (head, rel, tail) rows."""
    if variant == "transR":
        hp = np.einsum("nd,ndm->nm", head, proj)
        tp = np.einsum("nd,ndm->nm", tail, proj)
        e = hp + rel - tp
        gh = 2.0 * np.einsum("ndm,nm->nd", proj, e)
        gaux = 2.0 * np.einsum("nd,nm->ndm", head - tail, e)
    elif variant == "transH":
        diff = head - tail
        wd = np.einsum("nd,nd->n", normal, diff)
        e = diff - wd[:, None] * normal + rel
        we = np.einsum("nd,nd->n", normal, e)
        gh = 2.0 * (e - we[:, None] * normal)
        gaux = -2.0 * (we[:, None] * diff + wd[:, None] * e)
    else:
        e = head + rel - tail
        gh = 2.0 * e
        gaux = None
    scores = np.einsum("nm,nm->n", e, e)
    return scores, gh, 2.0 * e, gaux  # grad wrt tail is -gh; grad wrt rel is 2e


def _apply_sparse(table: np.ndarray, ids: np.ndarray, grads: np.ndarray, lr: float) -> None:
    """table[ids] -= lr * grads, duplicate ids accumulated first."""
    if ids.size == 0:
        return
    uniq, inv = np.unique(ids, return_inverse=True)
    acc = np.zeros((uniq.size,) + table.shape[1:], dtype=np.float64)
    np.add.at(acc, inv, grads)
    table[uniq] -= lr * acc


@dataclass
class _EdgeBatch:
    """One mini-batch of (head, rel, tail) positives with their negatives."""

    pos: np.ndarray  # (n, 3)
    neg: np.ndarray  # (n * neg_count, 3)
    is_content: bool


def _run_batch(
    params: ModelParams,
    batch: _EdgeBatch,
    config: TrainConfig,
    content: Optional[RelationBlock],
    pair_log: Optional[list] = None,
) -> tuple[float, int]:
    """One SGD step on a batch; returns (summed hinge loss, violation count)."""
    if batch.is_content:
        head_table = tail_table = params.poi_emb
        block = content
    else:
        head_table, tail_table = params.user_emb, params.poi_emb
        block = RelationBlock(rel_emb=params.rel_emb, rel_proj=params.rel_proj, rel_normal=params.rel_normal)

    reps = batch.neg.shape[0] // batch.pos.shape[0]
    pos = np.repeat(batch.pos, reps, axis=0)
    neg = batch.neg
    r_ids = pos[:, 1]
    proj = block.rel_proj[r_ids] if block.rel_proj is not None else None
    normal = block.rel_normal[r_ids] if block.rel_normal is not None else None
    rel_rows = block.rel_emb[r_ids]

    s_pos, gh_pos, gr_pos, gaux_pos = _batch_scores_grads(
        params.variant, head_table[pos[:, 0]], rel_rows, tail_table[pos[:, 2]], proj, normal
    )
    s_neg, gh_neg, gr_neg, gaux_neg = _batch_scores_grads(
        params.variant, head_table[neg[:, 0]], rel_rows, tail_table[neg[:, 2]], proj, normal
    )
    hinge = s_pos + config.margin - s_neg
    active = hinge > 0.0
    loss = float(hinge[active].sum())
    if pair_log is not None:
        for i in range(pos.shape[0]):
            pair_log.append((tuple(int(x) for x in pos[i]), tuple(int(x) for x in neg[i]), float(max(hinge[i], 0.0)), batch.is_content))

    if active.any():
        idx = np.nonzero(active)[0]
        if batch.is_content:
            # both endpoints live in the POI table
            ids = np.concatenate([pos[idx, 0], neg[idx, 0], pos[idx, 2], neg[idx, 2]])
            grads = np.concatenate([gh_pos[idx], -gh_neg[idx], -gh_pos[idx], gh_neg[idx]])
            _apply_sparse(params.poi_emb, ids, grads, config.lr)
        else:
            _apply_sparse(params.user_emb, np.concatenate([pos[idx, 0], neg[idx, 0]]), np.concatenate([gh_pos[idx], -gh_neg[idx]]), config.lr)
            _apply_sparse(params.poi_emb, np.concatenate([pos[idx, 2], neg[idx, 2]]), np.concatenate([-gh_pos[idx], gh_neg[idx]]), config.lr)
        _apply_sparse(block.rel_emb, r_ids[idx], gr_pos[idx] - gr_neg[idx], config.lr)
        if block.rel_proj is not None:
            _apply_sparse(block.rel_proj, r_ids[idx], gaux_pos[idx] - gaux_neg[idx], config.lr)
        elif block.rel_normal is not None:
            _apply_sparse(block.rel_normal, r_ids[idx], gaux_pos[idx] - gaux_neg[idx], config.lr)

    _project_after_batch(params, block, batch, pos, neg)
    return loss, int(active.sum())


def _project_after_batch(
    params: ModelParams,
    block: RelationBlock,
    batch: _EdgeBatch,
    pos: np.ndarray,
    neg: np.ndarray,
) -> None:
    from .embedding import project_constraints, _clip_rows_to_unit, _shrink_projected  # local import to avoid cycle noise

    touched = np.concatenate([pos, neg], axis=0)
    if not batch.is_content:
        project_constraints(params, touched)
        return
    # content batches touch POI rows on both ends and the wl relation block
    rel_ids = np.unique(touched[:, 1])
    _clip_rows_to_unit(block.rel_emb, rel_ids)
    if block.rel_normal is not None:
        rows = block.rel_normal[rel_ids]
        norms = np.linalg.norm(rows, axis=1)
        norms[norms == 0.0] = 1.0
        block.rel_normal[rel_ids] = rows / norms[:, None]
    poi_ids = np.unique(np.concatenate([touched[:, 0], touched[:, 2]]))
    _clip_rows_to_unit(params.poi_emb, poi_ids)
    if block.rel_proj is not None:
        ent = np.concatenate([touched[:, 0], touched[:, 2]])
        rel = np.concatenate([touched[:, 1], touched[:, 1]])
        _shrink_projected(params.poi_emb, block.rel_proj, ent, rel)


def _audit_batch(params: ModelParams, block: RelationBlock, batch: _EdgeBatch, pos: np.ndarray, neg: np.ndarray) -> float:
    touched = np.concatenate([pos, neg], axis=0)
    if not batch.is_content:
        return audit_constraints(params, touched)
    shadow = ModelParams(
        variant=params.variant, d=params.d, m=params.m,
        user_emb=params.poi_emb, poi_emb=params.poi_emb,
        rel_emb=block.rel_emb, rel_proj=block.rel_proj, rel_normal=block.rel_normal,
    )
    return audit_constraints(shadow, touched)


# ---------------------------------------------------------------------------
# epoch and run loops


def _batches(triples: np.ndarray, order: np.ndarray, batch_size: int) -> Iterator[np.ndarray]:
    for start in range(0, order.size, batch_size):
        yield triples[order[start : start + batch_size]]


def train_epoch(
    params: ModelParams,
    store: TripleStore,
    config: TrainConfig,
    epoch: int,
    content_store: Optional["ContentTripleStore"] = None,
    content: Optional[RelationBlock] = None,
    pair_log: Optional[list] = None,
) -> EpochStats:
    """One full pass over the training triples (and content triples, if any)."""
    started = time.perf_counter()
    rng_user = rng_for(config.seed, "epoch", epoch, "user")
    user_order = rng_user.permutation(len(store))
    user_batches = _batches(store.triples, user_order, config.batch_size)

    schedule: list[_EdgeBatch] = []
    for chunk in user_batches:
        negs = np.asarray(
            [
                sample_negative((int(t[0]), int(t[1]), int(t[2])), store, config.neg_mode, rng_user)
                for t in chunk
                for _ in range(config.neg_count)
            ],
            dtype=np.int64,
        ).reshape(-1, 3)
        schedule.append(_EdgeBatch(pos=chunk, neg=negs, is_content=False))

    if content_store is not None and len(content_store) > 0:
        rng_content = rng_for(config.seed, "epoch", epoch, "content")
        content_order = rng_content.permutation(len(content_store))
        content_batches = []
        for chunk in _batches(content_store.triples, content_order, config.batch_size):
            negs = np.asarray(
                [
                    _sample_content_negative((int(t[0]), int(t[1]), int(t[2])), content_store.members, params.n_pois, rng_content)
                    for t in chunk
                    for _ in range(config.neg_count)
                ],
                dtype=np.int64,
            ).reshape(-1, 3)
            content_batches.append(_EdgeBatch(pos=chunk, neg=negs, is_content=True))
        schedule = _interleave(schedule, content_batches)

    total_loss = 0.0
    total_pairs = 0
    violations = 0
    audit_excess = -math.inf
    for batch in schedule:
        loss, active = _run_batch(params, batch, config, content, pair_log)
        total_loss += loss
        total_pairs += batch.neg.shape[0]
        violations += active
        if config.audit:
            reps = batch.neg.shape[0] // batch.pos.shape[0]
            block = content if batch.is_content else _block_of(params)
            audit_excess = max(
                audit_excess, _audit_batch(params, block, batch, np.repeat(batch.pos, reps, axis=0), batch.neg)
            )

    mean_loss = total_loss / total_pairs if total_pairs else 0.0
    if not math.isfinite(mean_loss):
        raise TrainingDivergedError(
            f"epoch {epoch}: mean loss is {mean_loss}; lower the learning rate (current lr={config.lr})"
        )
    return EpochStats(
        epoch=epoch,
        mean_loss=mean_loss,
        violations=violations,
        seconds=time.perf_counter() - started,
        audit_excess=audit_excess,
    )


def _block_of(params: ModelParams) -> RelationBlock:
    return RelationBlock(rel_emb=params.rel_emb, rel_proj=params.rel_proj, rel_normal=params.rel_normal)


def _interleave(a: list[_EdgeBatch], b: list[_EdgeBatch]) -> list[_EdgeBatch]:
    """a0, b0, a1, b1, ... with the longer list's tail appended."""
    out: list[_EdgeBatch] = []
    for i in range(max(len(a), len(b))):
        if i < len(a):
            out.append(a[i])
        if i < len(b):
            out.append(b[i])
    return out


def train(
    store: TripleStore,
    config: TrainConfig,
    content_store: Optional["ContentTripleStore"] = None,
    vocab: Optional[VocabTables] = None,
    checkpoint_dir: Optional[Path] = None,
    resume_from: Optional[Path] = None,
    log_stream: Optional[IO[str]] = None,
) -> TrainResult:
    """Run the configured number of epochs and return the trained model.

    Checkpoints (model file when vocab tables are available, always the
    float64 resume state) are written every ``checkpoint_every`` epochs and
    at the end. ``resume_from`` continues from a state file and reproduces
    the uninterrupted run exactly.
    """
    if len(store) == 0:
        raise ConfigError("cannot train on an empty triple store")

    start_epoch = 0
    content: Optional[RelationBlock] = None
    if resume_from is not None:
        params, start_epoch, content = load_train_state(resume_from)
        if params.variant != config.variant or params.d != config.dim or params.m != config.rel_dim:
            raise ConfigError("resume state does not match the configured variant/dimensions")
    else:
        params = init_params(
            store.n_users, store.n_pois, store.n_relations, config.dim, config.rel_dim, config.variant, config.seed
        )
    if content_store is not None and len(content_store) > 0 and content is None:
        content = init_relation_block(
            content_store.n_patterns, config.dim, config.rel_dim, config.variant, rng_for(config.seed, "init", "content")
        )

    report = TrainReport()
    for epoch in range(start_epoch, config.epochs):
        stats = train_epoch(params, store, config, epoch, content_store, content)
        report.epochs.append(stats)
        if log_stream is not None:
            log_stream.write(stats.to_json() + "\n")
            log_stream.flush()
        if checkpoint_dir is not None and (
            (epoch + 1) % config.checkpoint_every == 0 or epoch + 1 == config.epochs
        ):
            _write_checkpoint(checkpoint_dir, params, vocab, epoch + 1, content)
    return TrainResult(params=params, report=report, content=content)


def _write_checkpoint(
    checkpoint_dir: Path,
    params: ModelParams,
    vocab: Optional[VocabTables],
    epochs_done: int,
    content: Optional[RelationBlock],
) -> None:
    checkpoint_dir = Path(checkpoint_dir)
    checkpoint_dir.mkdir(parents=True, exist_ok=True)
    save_train_state(checkpoint_dir / "model.state", params, epochs_done, content)
    if vocab is not None:
        save_model(params, vocab, checkpoint_dir / "model.sta")
