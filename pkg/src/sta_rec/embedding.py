"""Translation-embedding model: parameters, scores, gradients, constraints.

Three realizations of the translation idea are supported:

* ``transR``: entities live in a d-dim space and are projected into each
  relation's m-dim space by a relation-specific matrix before translating.
* ``transH``: entities are projected onto a relation-specific hyperplane
  (unit normal ``w``) before translating; requires m == d.
* ``transE``: plain translation in a shared space; requires m == d.

The score of a triple is the squared L2 residual of the translation, so
lower is better and a perfect translation scores 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError
from .seeding import rng_for

VARIANTS = ("transE", "transH", "transR")


@dataclass
class ModelParams:
    """Embedding tables for users, POIs, and spatiotemporal relations.

    ``rel_proj`` holds the per-relation d x m projection matrices (transR);
    ``rel_normal`` holds the per-relation unit hyperplane normals (transH).
    Exactly one of them is set, or neither for transE.
    """

    variant: str
    d: int
    m: int
    user_emb: np.ndarray  # (|U|, d)
    poi_emb: np.ndarray  # (|V|, d)
    rel_emb: np.ndarray  # (|R|, m)
    rel_proj: Optional[np.ndarray] = None  # (|R|, d, m)
    rel_normal: Optional[np.ndarray] = None  # (|R|, d)

    @property
    def n_users(self) -> int:
        return int(self.user_emb.shape[0])

    @property
    def n_pois(self) -> int:
        return int(self.poi_emb.shape[0])

    @property
    def n_relations(self) -> int:
        return int(self.rel_emb.shape[0])

    def copy(self) -> "ModelParams":
        return ModelParams(
            variant=self.variant,
            d=self.d,
            m=self.m,
            user_emb=self.user_emb.copy(),
            poi_emb=self.poi_emb.copy(),
            rel_emb=self.rel_emb.copy(),
            rel_proj=None if self.rel_proj is None else self.rel_proj.copy(),
            rel_normal=None if self.rel_normal is None else self.rel_normal.copy(),
        )


@dataclass
class RelationBlock:
    """Relation-side parameters alone (reused for content-pattern edges)."""

    rel_emb: np.ndarray
    rel_proj: Optional[np.ndarray] = None
    rel_normal: Optional[np.ndarray] = None


@dataclass
class ScoreBreakdown:
    """Score plus the projected head/tail used to compose it."""

    score: float
    head_proj: np.ndarray
    tail_proj: np.ndarray


def check_dims(variant: str, d: int, m: int) -> None:
    if variant not in VARIANTS:
        raise ConfigError(f"unknown variant {variant!r}; choose from {VARIANTS}")
    if d < 1 or m < 1:
        raise ConfigError(f"dimensions must be >= 1, got d={d}, m={m}")
    if variant in ("transE", "transH") and d != m:
        raise ConfigError(f"{variant} requires d == m, got d={d}, m={m}")


def identity_projection(d: int, m: int) -> np.ndarray:
    """d x m matrix with ones on the main diagonal."""
    return np.eye(d, m, dtype=np.float64)


def _unit_rows(rows: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(rows, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return rows / norms


def init_relation_block(n_relations: int, d: int, m: int, variant: str, rng: np.random.Generator) -> RelationBlock:
    bound = 6.0 / np.sqrt(m)
    rel_emb = _unit_rows(rng.uniform(-bound, bound, size=(n_relations, m)))
    rel_proj = rel_normal = None
    if variant == "transR":
        rel_proj = np.broadcast_to(identity_projection(d, m), (n_relations, d, m)).copy()
    elif variant == "transH":
        rel_normal = _unit_rows(rng.uniform(-6.0 / np.sqrt(d), 6.0 / np.sqrt(d), size=(n_relations, d)))
    return RelationBlock(rel_emb=rel_emb, rel_proj=rel_proj, rel_normal=rel_normal)


def init_params(
    n_users: int,
    n_pois: int,
    n_relations: int,
    d: int,
    m: int,
    variant: str,
    seed: int,
) -> ModelParams:
    """Seeded initialization: unit-normalized uniform rows, identity projections."""
    check_dims(variant, d, m)
    if n_users < 1 or n_pois < 1 or n_relations < 1:
        raise ConfigError(
            f"vocabulary sizes must be positive, got users={n_users}, pois={n_pois}, relations={n_relations}"
        )
    rng = rng_for(seed, "init")
    bound = 6.0 / np.sqrt(d)
    user_emb = _unit_rows(rng.uniform(-bound, bound, size=(n_users, d)))
    poi_emb = _unit_rows(rng.uniform(-bound, bound, size=(n_pois, d)))
    block = init_relation_block(n_relations, d, m, variant, rng)
    return ModelParams(
        variant=variant,
        d=d,
        m=m,
        user_emb=user_emb,
        poi_emb=poi_emb,
        rel_emb=block.rel_emb,
        rel_proj=block.rel_proj,
        rel_normal=block.rel_normal,
    )


# ---------------------------------------------------------------------------
# scoring


def project_entity(variant: str, e: np.ndarray, proj: Optional[np.ndarray] = None, normal: Optional[np.ndarray] = None) -> np.ndarray:
    """Entity vector as seen by one relation."""
    if variant == "transR":
        return e @ proj
    if variant == "transH":
        return e - (normal @ e) * normal
    return e


def score_vectors(
    variant: str,
    h: np.ndarray,
    r: np.ndarray,
    t: np.ndarray,
    proj: Optional[np.ndarray] = None,
    normal: Optional[np.ndarray] = None,
) -> ScoreBreakdown:
    h_p = project_entity(variant, h, proj, normal)
    t_p = project_entity(variant, t, proj, normal)
    residual = h_p + r - t_p
    return ScoreBreakdown(score=float(residual @ residual), head_proj=h_p, tail_proj=t_p)


def score(params: ModelParams, u_id: int, r_id: int, v_id: int) -> ScoreBreakdown:
    """Squared L2 translation residual of one (user, relation, poi) triple."""
    if not (0 <= u_id < params.n_users and 0 <= r_id < params.n_relations and 0 <= v_id < params.n_pois):
        raise IndexError(f"triple ({u_id}, {r_id}, {v_id}) out of vocabulary bounds")
    proj = params.rel_proj[r_id] if params.rel_proj is not None else None
    normal = params.rel_normal[r_id] if params.rel_normal is not None else None
    return score_vectors(params.variant, params.user_emb[u_id], params.rel_emb[r_id], params.poi_emb[v_id], proj, normal)


# ---------------------------------------------------------------------------
# gradients


@dataclass
class VectorGrads:
    """d(score)/d(h, r, t) plus the relation-auxiliary gradient."""

    head: np.ndarray
    rel: np.ndarray
    tail: np.ndarray
    proj: Optional[np.ndarray] = None
    normal: Optional[np.ndarray] = None


def score_grad_vectors(
    variant: str,
    h: np.ndarray,
    r: np.ndarray,
    t: np.ndarray,
    proj: Optional[np.ndarray] = None,
    normal: Optional[np.ndarray] = None,
) -> tuple[float, VectorGrads]:
    """Score and its exact gradient with respect to every involved parameter."""
    if variant == "transR":
        h_p = h @ proj
        t_p = t @ proj
        e = h_p + r - t_p
        diff = h - t
        grads = VectorGrads(head=2.0 * (proj @ e), rel=2.0 * e, tail=-2.0 * (proj @ e), proj=2.0 * np.outer(diff, e))
        return float(e @ e), grads
    if variant == "transH":
        diff = h - t
        e = diff - (normal @ diff) * normal + r
        along = e - (normal @ e) * normal
        grad_w = -2.0 * ((e @ normal) * diff + (diff @ normal) * e)
        return float(e @ e), VectorGrads(head=2.0 * along, rel=2.0 * e, tail=-2.0 * along, normal=grad_w)
    e = h + r - t
    return float(e @ e), VectorGrads(head=2.0 * e, rel=2.0 * e, tail=-2.0 * e)


@dataclass
class PairGradient:
    """Sparse gradient of one hinge term, keyed by parameter row id.

    All maps are empty when the hinge is inactive. When the positive and
    corrupted triples share a row (they always share the relation), the
    contributions are summed into one entry.
    """

    hinge: float
    users: dict[int, np.ndarray] = field(default_factory=dict)
    pois: dict[int, np.ndarray] = field(default_factory=dict)
    rels: dict[int, np.ndarray] = field(default_factory=dict)
    projs: dict[int, np.ndarray] = field(default_factory=dict)
    normals: dict[int, np.ndarray] = field(default_factory=dict)

    def _accumulate(self, table: dict[int, np.ndarray], idx: int, value: np.ndarray) -> None:
        if idx in table:
            table[idx] = table[idx] + value
        else:
            table[idx] = value


def grad_pair(
    params: ModelParams,
    positive: tuple[int, int, int],
    negative: tuple[int, int, int],
    margin: float,
) -> PairGradient:
    """Gradient of max(0, s(pos) + margin - s(neg)) for one pair.

    Corruption replaces entities only, so both triples must share the
    relation id. Inactive hinges return an all-zero (empty) gradient.
    """
    u, r, v = positive
    u2, r2, v2 = negative
    if r != r2:
        raise ValueError(f"positive and negative triples must share a relation, got {r} vs {r2}")
    proj = params.rel_proj[r] if params.rel_proj is not None else None
    normal = params.rel_normal[r] if params.rel_normal is not None else None

    s_pos, g_pos = score_grad_vectors(params.variant, params.user_emb[u], params.rel_emb[r], params.poi_emb[v], proj, normal)
    s_neg, g_neg = score_grad_vectors(params.variant, params.user_emb[u2], params.rel_emb[r], params.poi_emb[v2], proj, normal)
    hinge = s_pos + margin - s_neg
    if hinge <= 0.0:
        return PairGradient(hinge=0.0)

    out = PairGradient(hinge=hinge)
    out._accumulate(out.users, u, g_pos.head)
    out._accumulate(out.pois, v, g_pos.tail)
    out._accumulate(out.users, u2, -g_neg.head)
    out._accumulate(out.pois, v2, -g_neg.tail)
    out._accumulate(out.rels, r, g_pos.rel - g_neg.rel)
    if params.variant == "transR":
        out._accumulate(out.projs, r, g_pos.proj - g_neg.proj)
    elif params.variant == "transH":
        out._accumulate(out.normals, r, g_pos.normal - g_neg.normal)
    return out


# ---------------------------------------------------------------------------
# constraints


def _clip_rows_to_unit(table: np.ndarray, ids: np.ndarray) -> None:
    if ids.size == 0:
        return
    rows = table[ids]
    norms = np.linalg.norm(rows, axis=1)
    over = norms > 1.0
    if over.any():
        table[ids[over]] = rows[over] / norms[over, None]


def project_constraints(params: ModelParams, touched: np.ndarray) -> ModelParams:
    """Enforce the norm constraints on everything a batch touched, in place.

    ``touched`` is an (n, 3) array of (user, relation, poi) incidences: the
    positive and corrupted triples of the last batch. Relation vectors and
    entity rows above unit norm are rescaled onto the unit sphere; transH
    normals are renormalized to exactly unit length. For transR, an entity
    row is additionally shrunk by the largest of its projected norms across
    the touched relations, which drives every projected norm to at most 1.
    """
    touched = np.asarray(touched, dtype=np.int64).reshape(-1, 3)
    if touched.size == 0:
        return params
    user_ids = np.unique(touched[:, 0])
    rel_ids = np.unique(touched[:, 1])
    poi_ids = np.unique(touched[:, 2])

    _clip_rows_to_unit(params.rel_emb, rel_ids)
    if params.rel_normal is not None:
        rows = params.rel_normal[rel_ids]
        norms = np.linalg.norm(rows, axis=1)
        norms[norms == 0.0] = 1.0
        params.rel_normal[rel_ids] = rows / norms[:, None]
    _clip_rows_to_unit(params.user_emb, user_ids)
    _clip_rows_to_unit(params.poi_emb, poi_ids)

    if params.rel_proj is not None:
        _shrink_projected(params.user_emb, params.rel_proj, touched[:, 0], touched[:, 1])
        _shrink_projected(params.poi_emb, params.rel_proj, touched[:, 2], touched[:, 1])
    return params


def _shrink_projected(emb: np.ndarray, proj: np.ndarray, ent_ids: np.ndarray, rel_ids: np.ndarray) -> None:
    """Scale entity rows so every touched (entity, relation) projection fits."""
    projected = np.einsum("nd,ndm->nm", emb[ent_ids], proj[rel_ids])
    norms = np.linalg.norm(projected, axis=1)
    factor = np.ones(emb.shape[0], dtype=np.float64)
    np.maximum.at(factor, ent_ids, norms)
    over = np.unique(ent_ids[factor[ent_ids] > 1.0])
    if over.size:
        emb[over] /= factor[over, None]


def audit_constraints(params: ModelParams, triples: np.ndarray) -> float:
    """Largest excess over any norm constraint across the given incidences.

    Returns max(norm - 1) over entity/relation rows and projected entities,
    plus the deviation of transH normals from unit length; <= 0 means every
    constraint holds exactly.
    """
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    user_ids = np.unique(triples[:, 0])
    rel_ids = np.unique(triples[:, 1])
    poi_ids = np.unique(triples[:, 2])
    worst = -np.inf
    for table, ids in ((params.user_emb, user_ids), (params.poi_emb, poi_ids), (params.rel_emb, rel_ids)):
        if ids.size:
            worst = max(worst, float(np.linalg.norm(table[ids], axis=1).max() - 1.0))
    if params.rel_normal is not None and rel_ids.size:
        dev = np.abs(np.linalg.norm(params.rel_normal[rel_ids], axis=1) - 1.0)
        worst = max(worst, float(dev.max()))
    if params.rel_proj is not None and triples.size:
        for col in (0, 2):
            table = params.user_emb if col == 0 else params.poi_emb
            projected = np.einsum("nd,ndm->nm", table[triples[:, col]], params.rel_proj[triples[:, 1]])
            worst = max(worst, float(np.linalg.norm(projected, axis=1).max() - 1.0))
    return worst
