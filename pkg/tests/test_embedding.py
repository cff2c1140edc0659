import numpy as np
import pytest

from sta_rec.embedding import (
    ModelParams,
    audit_constraints,
    grad_pair,
    identity_projection,
    init_params,
    project_constraints,
    score,
)
from sta_rec.errors import ConfigError
from sta_rec.model_io import VocabTables, save_model


def _params(variant, n_users=5, n_pois=7, n_rels=3, d=4, m=4, seed=0):
    return init_params(n_users, n_pois, n_rels, d, m, variant, seed)


def _randomize(p, seed, scale=0.3):
    rng = np.random.default_rng(seed)
    p.user_emb += scale * rng.standard_normal(p.user_emb.shape)
    p.poi_emb += scale * rng.standard_normal(p.poi_emb.shape)
    p.rel_emb += scale * rng.standard_normal(p.rel_emb.shape)
    if p.rel_proj is not None:
        p.rel_proj += scale * rng.standard_normal(p.rel_proj.shape)
    if p.rel_normal is not None:
        p.rel_normal += scale * rng.standard_normal(p.rel_normal.shape)
    return p


# ---------------------------------------------------------------------------
# initialization


def test_init_transr_projections_are_identity_patterned():
    p = _params("transR", d=4, m=3)
    assert p.rel_proj.shape == (3, 4, 3)
    expected = np.eye(4, 3)
    for r in range(3):
        assert np.array_equal(p.rel_proj[r], expected)


def test_init_rows_unit_norm():
    for variant in ("transE", "transH", "transR"):
        p = _params(variant, seed=9)
        for table in (p.user_emb, p.poi_emb, p.rel_emb):
            assert np.allclose(np.linalg.norm(table, axis=1), 1.0, atol=1e-9)
        if p.rel_normal is not None:
            assert np.allclose(np.linalg.norm(p.rel_normal, axis=1), 1.0, atol=1e-9)


def test_init_deterministic_bytes():
    a = _params("transR", seed=123)
    b = _params("transR", seed=123)
    assert a.user_emb.tobytes() == b.user_emb.tobytes()
    assert a.poi_emb.tobytes() == b.poi_emb.tobytes()
    assert a.rel_emb.tobytes() == b.rel_emb.tobytes()
    c = _params("transR", seed=124)
    assert a.user_emb.tobytes() != c.user_emb.tobytes()


def test_init_serialized_checkpoints_identical(tmp_path):
    vocab = VocabTables(users=[f"u{i}" for i in range(5)], pois=[f"p{i}" for i in range(7)], relations=["0|0", "1|0", "2|0"])
    for name, seed in (("a", 77), ("b", 77)):
        save_model(_params("transH", seed=seed), vocab, tmp_path / f"{name}.sta")
    assert (tmp_path / "a.sta").read_bytes() == (tmp_path / "b.sta").read_bytes()


def test_init_rejects_bad_sizes():
    with pytest.raises(ConfigError):
        init_params(0, 5, 5, 4, 4, "transE", 0)
    with pytest.raises(ConfigError):
        init_params(5, 5, 5, 4, 3, "transE", 0)  # transE needs d == m
    with pytest.raises(ConfigError):
        init_params(5, 5, 5, 4, 0, "transR", 0)


# ---------------------------------------------------------------------------
# scoring


def test_score_transr_exact_translation_is_zero():
    p = _params("transR", d=2, m=2)
    p.user_emb[0] = [0.6, 0.0]
    p.rel_emb[0] = [0.0, 0.8]
    p.poi_emb[0] = [0.6, 0.8]
    assert p.rel_proj[0].tolist() == identity_projection(2, 2).tolist()
    sb = score(p, 0, 0, 0)
    assert sb.score == 0.0
    assert np.array_equal(sb.head_proj, [0.6, 0.0])
    assert np.array_equal(sb.tail_proj, [0.6, 0.8])


def test_score_transe_identity_case():
    p = _params("transE", d=3, m=3)
    p.user_emb[1] = [0.1, 0.2, 0.3]
    p.poi_emb[2] = [0.1, 0.2, 0.3]
    p.rel_emb[0] = [0.0, 0.0, 0.0]
    assert score(p, 1, 0, 2).score == 0.0


def test_score_matches_reimplementation_oracle():
    # straight-line re-implementation, no shared code with the library path
    for variant in ("transE", "transH", "transR"):
        p = _randomize(_params(variant, d=4, m=4, seed=5), seed=6)
        for (u, r, v) in [(0, 0, 0), (1, 2, 3), (4, 1, 6)]:
            uu, rr, vv = p.user_emb[u], p.rel_emb[r], p.poi_emb[v]
            if variant == "transR":
                M = p.rel_proj[r]
                hp = np.array([sum(uu[i] * M[i][j] for i in range(4)) for j in range(4)])
                tp = np.array([sum(vv[i] * M[i][j] for i in range(4)) for j in range(4)])
            elif variant == "transH":
                w = p.rel_normal[r]
                hp = uu - np.dot(w, uu) * w
                tp = vv - np.dot(w, vv) * w
            else:
                hp, tp = uu, vv
            expected = float(np.sum((hp + rr - tp) ** 2))
            got = score(p, u, r, v).score
            assert got == pytest.approx(expected, rel=1e-12)


def test_score_breakdown_composes():
    p = _randomize(_params("transR", seed=1), seed=2)
    sb = score(p, 2, 1, 3)
    residual = sb.head_proj + p.rel_emb[1] - sb.tail_proj
    assert sb.score == pytest.approx(float(residual @ residual), rel=1e-15)
    assert sb.score >= 0.0


def test_score_out_of_range_is_fatal():
    p = _params("transE")
    with pytest.raises(IndexError):
        score(p, 99, 0, 0)


def test_score_nonnegative_random_sweep():
    for variant in ("transE", "transH", "transR"):
        p = _randomize(_params(variant, seed=3), seed=4)
        rng = np.random.default_rng(0)
        for _ in range(50):
            u, r, v = rng.integers(5), rng.integers(3), rng.integers(7)
            assert score(p, int(u), int(r), int(v)).score >= 0.0


# ---------------------------------------------------------------------------
# variant reduction properties


def test_transr_identity_projection_equals_transe():
    pe = _randomize(_params("transE", d=4, m=4, seed=10), seed=11)
    pr = ModelParams(
        variant="transR", d=4, m=4,
        user_emb=pe.user_emb.copy(), poi_emb=pe.poi_emb.copy(), rel_emb=pe.rel_emb.copy(),
        rel_proj=np.broadcast_to(np.eye(4), (3, 4, 4)).copy(),
    )
    rng = np.random.default_rng(1)
    for _ in range(100):
        u, r, v = int(rng.integers(5)), int(rng.integers(3)), int(rng.integers(7))
        se = score(pe, u, r, v).score
        sr = score(pr, u, r, v).score
        assert sr == pytest.approx(se, rel=1e-12)


def test_transh_orthogonal_entities_reduce_to_transe():
    d = 4
    pe = _params("transE", d=d, m=d, seed=20)
    ph = _params("transH", d=d, m=d, seed=20)
    # make every entity orthogonal to the normal of relation 0
    w = np.zeros(d)
    w[0] = 1.0
    ph.rel_normal[0] = w
    for table in (pe.user_emb, pe.poi_emb):
        table[:, 0] = 0.0
    ph.user_emb = pe.user_emb.copy()
    ph.poi_emb = pe.poi_emb.copy()
    ph.rel_emb = pe.rel_emb.copy()
    for u in range(5):
        for v in range(7):
            assert score(ph, u, 0, v).score == pytest.approx(score(pe, u, 0, v).score, rel=1e-12)


def test_translation_invariance_probe():
    pe = _randomize(_params("transE", d=4, m=4, seed=30), seed=31)
    c = np.array([0.3, -0.2, 0.05, 0.4])
    before = score(pe, 1, 0, 2).score
    pe.user_emb[1] += c
    pe.poi_emb[2] += c
    assert score(pe, 1, 0, 2).score == pytest.approx(before, rel=1e-12)

    ph = _randomize(_params("transH", d=4, m=4, seed=32), seed=33)
    w = ph.rel_normal[0] / np.linalg.norm(ph.rel_normal[0])
    ph.rel_normal[0] = w
    c_perp = c - (w @ c) * w  # shift orthogonal to the hyperplane normal
    before = score(ph, 1, 0, 2).score
    ph.user_emb[1] += c_perp
    ph.poi_emb[2] += c_perp
    assert score(ph, 1, 0, 2).score == pytest.approx(before, rel=1e-10)


# ---------------------------------------------------------------------------
# gradients


def test_grad_inactive_hinge_is_zero():
    p = _params("transE", d=2, m=2)
    p.user_emb[0] = [0.0, 0.0]
    p.rel_emb[0] = [0.0, 0.0]
    p.poi_emb[0] = [1.0, 0.0]  # s_pos = 1
    p.user_emb[1] = [0.0, 0.0]
    p.poi_emb[1] = [2.0, 0.0]  # s_neg = 4
    g = grad_pair(p, (0, 0, 0), (1, 0, 1), margin=2.0)  # 1 + 2 - 4 <= 0
    assert g.hinge == 0.0
    assert not g.users and not g.pois and not g.rels


def test_grad_hand_computed_transe_case():
    # u=(0,0), r=(0,0), v=(1,0), corrupted u'=v'=(0,0), margin 0:
    # s_pos = 1, s_neg = 0, hinge active; ds/dv = 2(v-u-r) = (2,0)
    p = _params("transE", d=2, m=2)
    p.user_emb[0] = [0.0, 0.0]
    p.rel_emb[0] = [0.0, 0.0]
    p.poi_emb[0] = [1.0, 0.0]
    p.user_emb[1] = [0.0, 0.0]
    p.poi_emb[1] = [0.0, 0.0]
    g = grad_pair(p, (0, 0, 0), (1, 0, 1), margin=0.0)
    assert g.hinge == pytest.approx(1.0)
    assert np.allclose(g.pois[0], [2.0, 0.0])
    assert np.allclose(g.users[0], [-2.0, 0.0])
    # corrupted side has zero residual, so its contributions vanish
    assert np.allclose(g.users[1], [0.0, 0.0])
    assert np.allclose(g.pois[1], [0.0, 0.0])
    assert np.allclose(g.rels[0], [-2.0, 0.0] - np.array([0.0, 0.0]))


def test_grad_requires_shared_relation():
    p = _params("transE")
    with pytest.raises(ValueError):
        grad_pair(p, (0, 0, 0), (1, 1, 0), margin=1.0)


def _fd_hinge_check(variant, seed, d=6, h=1e-6, tol=1e-5):
    p = _randomize(_params(variant, d=d, m=d, seed=seed), seed=seed + 500, scale=0.2)
    rng = np.random.default_rng(seed)
    pos = (int(rng.integers(5)), int(rng.integers(3)), int(rng.integers(7)))
    neg_head = rng.random() < 0.5
    neg = (int(rng.integers(5)), pos[1], pos[2]) if neg_head else (pos[0], pos[1], int(rng.integers(7)))
    s_pos = score(p, *pos).score
    s_neg = score(p, *neg).score
    margin = (s_neg - s_pos) + 0.4  # hinge active with slack, away from the kink
    g = grad_pair(p, pos, neg, margin)
    assert g.hinge == pytest.approx(0.4)

    def hinge_value():
        return max(0.0, score(p, *pos).score + margin - score(p, *neg).score)

    tables = {"users": p.user_emb, "pois": p.poi_emb, "rels": p.rel_emb}
    if p.rel_proj is not None:
        tables["projs"] = p.rel_proj
    if p.rel_normal is not None:
        tables["normals"] = p.rel_normal
    for name, table in tables.items():
        for idx, grad in getattr(g, name).items():
            it = np.nditer(grad, flags=["multi_index"])
            for _ in it:
                mi = it.multi_index
                orig = table[idx][mi]
                table[idx][mi] = orig + h
                up = hinge_value()
                table[idx][mi] = orig - h
                down = hinge_value()
                table[idx][mi] = orig
                fd = (up - down) / (2 * h)
                denom = max(1e-8, abs(fd), abs(float(grad[mi])))
                assert abs(fd - float(grad[mi])) / denom < tol, (variant, name, idx, mi)


@pytest.mark.parametrize("variant", ["transE", "transH", "transR"])
def test_grad_matches_finite_differences(variant):
    for seed in range(6):
        _fd_hinge_check(variant, seed)


# ---------------------------------------------------------------------------
# constraint projection


def test_project_leaves_satisfied_row_unchanged():
    p = _params("transE", d=3, m=3)
    p.user_emb[0] = [0.3, 0.4, 0.0]  # norm 0.5
    before = p.user_emb[0].copy()
    project_constraints(p, np.array([[0, 0, 0]]))
    assert np.array_equal(p.user_emb[0], before)


def test_project_rescales_to_unit_same_direction():
    p = _params("transE", d=3, m=3)
    p.user_emb[0] = [2.0, 0.0, 0.0]
    project_constraints(p, np.array([[0, 0, 0]]))
    assert np.allclose(p.user_emb[0], [1.0, 0.0, 0.0])


def test_project_transr_pair_constraint():
    p = _params("transR", d=2, m=2)
    p.rel_proj[0] = np.array([[3.0, 0.0], [0.0, 3.0]])
    p.user_emb[0] = [0.6, 0.0]  # |u|=0.6 ok, |uM|=1.8 > 1
    project_constraints(p, np.array([[0, 0, 0]]))
    assert np.linalg.norm(p.user_emb[0] @ p.rel_proj[0]) == pytest.approx(1.0)


def test_project_random_batch_satisfies_all_constraints():
    for variant in ("transE", "transH", "transR"):
        p = _randomize(_params(variant, d=5, m=5, seed=40), seed=41, scale=2.0)
        rng = np.random.default_rng(42)
        touched = np.column_stack(
            [rng.integers(5, size=30), rng.integers(3, size=30), rng.integers(7, size=30)]
        )
        project_constraints(p, touched)
        assert audit_constraints(p, touched) <= 1e-9
