import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ptrb import importance
from ptrb.layers import ParamStore
from ptrb.numerics import DimensionError, Tensor, check_gradients, ops, stream

from .conftest import micro_config


def make_store(cfg, seed=0):
    store = ParamStore()
    importance.init_importance(store, cfg, stream(seed, "imp"))
    return store


def check_ordered_invariants(scores, perm, seq_scores):
    g = len(scores)
    first, second = seq_scores[:g], seq_scores[g:]
    assert np.all(np.diff(first) <= 0)
    assert np.all(np.diff(second) >= 0)
    counts = np.bincount(perm, minlength=g)
    assert (counts == 2).all()
    if len(np.unique(scores)) == g:
        assert list(perm[g:]) == list(perm[:g][::-1])
        for t in range(2 * g):
            assert perm[t] == perm[2 * g - 1 - t]


# ------------------------------------------------------------- projections


def test_projection_unit_norm_and_composition(rng):
    cfg = micro_config()
    store = make_store(cfg)
    e = rng.normal(size=(2, 4, cfg.channel))
    out = importance.project_embedding(store, Tensor(e), training=False).data
    np.testing.assert_allclose(np.linalg.norm(out, axis=-1), 1.0, atol=1e-6)
    # straight-line recomputation in eval mode
    p = "importance.embed_proj"
    h = e @ store[f"{p}.fc1.weight"].data + store[f"{p}.fc1.bias"].data
    h = (h - store.buffers[f"{p}.bn.running_mean"]) / np.sqrt(store.buffers[f"{p}.bn.running_var"] + 1e-5)
    h = np.maximum(h * store[f"{p}.bn.gamma"].data + store[f"{p}.bn.beta"].data, 0)
    h = h @ store[f"{p}.fc2.weight"].data + store[f"{p}.fc2.bias"].data
    np.testing.assert_allclose(out, h / np.linalg.norm(h, axis=-1, keepdims=True), rtol=1e-12)
    again = importance.project_embedding(store, Tensor(e), training=False).data
    assert np.array_equal(out, again)
    g = importance.project_global(store, Tensor(e[:, 0]), training=True).data
    np.testing.assert_allclose(np.linalg.norm(g, axis=-1), 1.0, atol=1e-6)


def test_projections_have_independent_parameters():
    store = make_store(micro_config())
    a = store["importance.embed_proj.fc1.weight"].data
    b = store["importance.global_proj.fc1.weight"].data
    assert a is not b and not np.array_equal(a, b)


@pytest.mark.parametrize("which", ["embed_proj", "global_proj", "head"])
def test_projection_and_head_gradients(which, rng):
    cfg = micro_config()
    store = make_store(cfg)
    names = [n for n in store.params if n.startswith(f"importance.{which}")]
    x = Tensor(rng.normal(size=(6, cfg.channel)))
    if which == "head":
        w = rng.normal(size=6)
        fn = lambda x: importance.predict_importance(store, x, training=True)  # noqa: E731
    else:
        w = rng.normal(size=(6, cfg.proj_dim))
        fn = lambda x: importance.project(store, f"importance.{which}", x, training=True)  # noqa: E731
    rep = check_gradients(lambda x, *_: ops.sum(ops.mul(fn(x), Tensor(w))),
                          [x] + [store[n] for n in names], name=which)
    assert rep.passed, str(rep)


def test_predict_importance_shape_and_determinism(rng):
    cfg = micro_config()
    store = make_store(cfg)
    e = rng.normal(size=(3, 5, cfg.channel))
    s = importance.predict_importance(store, Tensor(e)).data
    assert s.shape == (3, 5)
    e[1, 2] = e[0, 0]
    s = importance.predict_importance(store, Tensor(e)).data
    assert s[1, 2] == s[0, 0]


def test_cosine_target_examples():
    v = np.array([0.6, 0.8])
    assert importance.cosine_target(v, v) == pytest.approx(1.0)
    assert importance.cosine_target(v, np.array([-0.8, 0.6])) == 0.0
    assert importance.cosine_target(v, -v) == pytest.approx(-1.0)


# ------------------------------------------------------------------ losses


def test_importance_loss_examples():
    s = np.array([0.1, -0.3, 0.7])
    assert importance.importance_loss(Tensor(s.copy()), s).data == 0.0
    assert importance.importance_loss(Tensor(s + 2.0), s).data == 1.5
    assert importance.importance_loss(Tensor(np.array([0.4])), np.array([0.0])).data == pytest.approx(0.08)
    with pytest.raises(DimensionError):
        importance.importance_loss(Tensor(np.zeros(3)), np.zeros(2))


def test_importance_loss_target_detached(rng):
    I = Tensor(rng.normal(size=5), requires_grad=True)
    S = Tensor(rng.normal(size=5), requires_grad=True)
    importance.importance_loss(I, S).backward()
    assert S.grad is None
    assert I.grad is not None


def test_alignment_loss_examples(rng):
    e = ops.l2_normalize(Tensor(rng.normal(size=(1, 5, 4))))
    f = ops.l2_normalize(Tensor(rng.normal(size=(1, 4))))
    assert importance.alignment_loss(e, f).data == 0.0
    f2 = np.eye(2)
    e2 = np.stack([np.tile(f2[0], (3, 1)), np.tile(f2[1], (3, 1))])
    got = importance.alignment_loss(Tensor(e2), Tensor(f2)).data
    assert got == pytest.approx(-math.log(math.e / (math.e + 1)), rel=1e-14)


def test_alignment_loss_matches_logsumexp(rng):
    N, G, P, tau = 3, 4, 5, 0.7
    e = rng.normal(size=(N, G, P))
    f = rng.normal(size=(N, P))
    terms = []
    for n in range(N):
        for g in range(G):
            z = [float(e[n, g] @ f[m]) / tau for m in range(N)]
            terms.append(math.log(sum(math.exp(v) for v in z)) - z[n])
    got = importance.alignment_loss(Tensor(e), Tensor(f), tau).data
    assert got == pytest.approx(sum(terms) / len(terms), rel=1e-12)
    assert got >= 0


def test_auxiliary_loss_gradients(rng):
    e = Tensor(rng.normal(size=(3, 4, 5)))
    f = Tensor(rng.normal(size=(3, 5)))
    rep = check_gradients(lambda e, f: importance.alignment_loss(e, f, 0.5), [e, f], name="alignment")
    assert rep.passed, str(rep)
    S = rng.uniform(-1, 1, size=(3, 4))
    rep = check_gradients(lambda i: importance.importance_loss(i, S),
                          [Tensor(S + rng.normal(size=(3, 4)) * 0.8)], name="importance")
    assert rep.passed, str(rep)


# ---------------------------------------------------------------- ordering


def test_bio_examples():
    assert list(importance.importance_permutation([0.1, 0.9, 0.5])) == [1, 2, 0, 0, 2, 1]
    assert list(importance.importance_permutation([0.3] * 4)) == [0, 1, 2, 3, 3, 2, 1, 0]
    assert list(importance.importance_permutation([0.1, 0.9, 0.5], bidirectional=False)) == [1, 2, 0]


def test_ordered_sequence_invariants_many(rng):
    for _ in range(300):
        g = int(rng.integers(1, 20))
        s = rng.normal(size=g)
        if rng.random() < 0.3:
            s = np.round(s)  # force ties
        perm = importance.importance_permutation(s)
        check_ordered_invariants(s, perm, s[perm])


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, st.integers(1, 16), elements=st.floats(-10, 10, allow_nan=False)))
def test_ordered_sequence_invariants_property(s):
    perm = importance.importance_permutation(s)
    check_ordered_invariants(s, perm, s[perm])


def test_bio_reorder_gathers_embeddings_and_positions(rng):
    E, P = rng.normal(size=(3, 2)), rng.normal(size=(3, 2))
    s = np.array([0.1, 0.9, 0.5])
    seq = importance.bio_reorder(Tensor(E), Tensor(P), Tensor(s))
    for t, g in enumerate([1, 2, 0, 0, 2, 1]):
        np.testing.assert_array_equal(seq.E0.data[t], E[g] + P[g])
        assert seq.scores.data[t] == s[g]


def test_bio_reorder_order_invariance(rng):
    G, D = 6, 4
    E, P, s = rng.normal(size=(G, D)), rng.normal(size=(G, D)), rng.normal(size=G)
    ref = importance.bio_reorder(Tensor(E), Tensor(P), Tensor(s))
    for _ in range(10):
        pi = rng.permutation(G)
        got = importance.bio_reorder(Tensor(E[pi]), Tensor(P[pi]), Tensor(s[pi]))
        assert np.array_equal(got.E0.data, ref.E0.data)
        assert np.array_equal(got.scores.data, ref.scores.data)


# ----------------------------------------------------------------- pooling


def test_iap_hand_examples():
    E = Tensor(np.array([[1.0, 0.0], [0.0, 1.0], [2.0, 2.0]]))
    s = Tensor(np.array([0.5, -0.2, 1.0]))
    assert list(importance.iap_pool(E, s, "clamp").data) == [2.5, 2.0]
    assert list(importance.iap_pool(E, s, "step").data) == [3.0, 2.0]
    neg = Tensor(np.array([-0.5, -0.2, -1.0]))
    assert not importance.iap_pool(E, neg).data.any()
    assert importance.iap_degenerate(neg.data) and not importance.iap_degenerate(s.data)


def test_iap_sign_flip_invariance(rng):
    E = rng.normal(size=(6, 3))
    s = rng.normal(size=6)
    a = importance.iap_pool(Tensor(E), Tensor(s)).data
    E2 = E.copy()
    E2[s <= 0] *= -1
    np.testing.assert_array_equal(importance.iap_pool(Tensor(E2), Tensor(s)).data, a)


def test_pool_baselines(rng):
    tok = rng.normal(size=(1, 4))
    for strat in ("avg", "max"):
        np.testing.assert_array_equal(importance.pool(Tensor(tok), Tensor(np.array([0.3])), strat).data, tok[0])
    np.testing.assert_allclose(importance.pool(Tensor(tok), Tensor(np.array([0.3])), "wsum").data, 0.3 * tok[0])
    two = np.tile(tok, (2, 1))
    np.testing.assert_array_equal(importance.pool(Tensor(two), Tensor(np.zeros(2)), "avg").data, tok[0])
    E, s = rng.normal(size=(5, 3)), rng.normal(size=5)
    np.testing.assert_allclose(importance.pool(Tensor(E), Tensor(s), "avg").data, E.mean(0))
    np.testing.assert_array_equal(importance.pool(Tensor(E), Tensor(s), "max").data, E.max(0))
    np.testing.assert_allclose(importance.pool(Tensor(E), Tensor(s), "wsum").data, (E * s[:, None]).sum(0))
    with pytest.raises(ValueError):
        importance.pool(Tensor(E), Tensor(s), "median")


def test_iap_gradients(rng):
    E = Tensor(rng.normal(size=(2, 6, 3)))
    s = Tensor(rng.normal(size=(2, 6)) + 0.01)
    w = rng.normal(size=(2, 3))
    rep = check_gradients(lambda e, s: ops.sum(ops.mul(importance.iap_pool(e, s), Tensor(w))), [E, s])
    assert rep.passed, str(rep)
