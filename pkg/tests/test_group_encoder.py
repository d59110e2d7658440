import numpy as np
import pytest

from ptrb import group_encoder, layers
from ptrb.layers import ParamStore
from ptrb.numerics import Tensor, check_gradients, ops, stream
from ptrb.pipeline.config import ConfigError

from .conftest import micro_config


def make_store(cfg, seed=0):
    store = ParamStore()
    group_encoder.init_group_encoder(store, cfg, stream(seed, "enc"))
    return store


def zero_layer_weights(store, prefix):
    for name in ("attn.qkv", "attn.proj", "fc1", "fc2"):
        for suffix in ("weight", "bias"):
            store[f"{prefix}.{name}.{suffix}"].data[...] = 0.0


def test_embed_points_zero_and_identical_inputs(rng):
    cfg = micro_config()
    store = make_store(cfg)
    zero = group_encoder.embed_points(store, np.zeros((1, 3))).data
    expect = np.zeros(cfg.channel)
    for prefix in ("encoder.point_embed", "encoder.point_pos"):
        h = store[f"{prefix}.fc1.bias"].data
        h = ops.gelu(Tensor(h)).data
        expect = expect + h @ store[f"{prefix}.fc2.weight"].data + store[f"{prefix}.fc2.bias"].data
    np.testing.assert_allclose(zero[0], expect, rtol=1e-12)
    p = rng.normal(size=3)
    tok = group_encoder.embed_points(store, np.stack([p, p, p])).data
    assert np.array_equal(tok[0], tok[1]) and np.array_equal(tok[1], tok[2])
    assert tok.shape == (3, cfg.channel) and np.isfinite(tok).all()


def test_transformer_layer_residual_identity(rng):
    cfg = micro_config()
    store = make_store(cfg)
    zero_layer_weights(store, "encoder.layers.0")
    x = rng.normal(size=(5, cfg.channel))
    out = group_encoder.transformer_layer(store, "encoder.layers.0", Tensor(x), cfg.heads).data
    np.testing.assert_array_equal(out, x)


def test_single_token_attention_weight_is_one(rng):
    cfg = micro_config()
    store = make_store(cfg)
    x = Tensor(rng.normal(size=(1, cfg.channel)))
    # with one token, attention output is exactly the value projection
    out = layers.multi_head_attention(store, "encoder.layers.0.attn", x, cfg.heads).data
    qkv = x.data @ store["encoder.layers.0.attn.qkv.weight"].data + store["encoder.layers.0.attn.qkv.bias"].data
    v = qkv[:, 2 * cfg.channel:]
    expect = v @ store["encoder.layers.0.attn.proj.weight"].data + store["encoder.layers.0.attn.proj.bias"].data
    np.testing.assert_allclose(out, expect, rtol=1e-12)


def test_heads_must_divide_channel():
    with pytest.raises(ConfigError):
        micro_config(heads=3)


def test_transformer_layer_gradients(rng):
    cfg = micro_config()
    store = make_store(cfg)
    prefix = "encoder.layers.0"
    names = [n for n in store.params if n.startswith(prefix)]
    x = Tensor(rng.normal(size=(2, 4, cfg.channel)))
    w = rng.normal(size=(2, 4, cfg.channel))
    rep = check_gradients(
        lambda x, *_: ops.sum(ops.mul(group_encoder.transformer_layer(store, prefix, x, cfg.heads),
                                      Tensor(w))),
        [x] + [store[n] for n in names], name="transformer_layer")
    assert rep.passed, str(rep)


def test_keypoint_position_gradients(rng):
    cfg = micro_config()
    store = make_store(cfg)
    names = [n for n in store.params if n.startswith("pos_embed")]
    kp = Tensor(rng.normal(size=(5, 3)))
    w = rng.normal(size=(5, cfg.channel))
    rep = check_gradients(
        lambda k, *_: ops.sum(ops.mul(group_encoder.embed_keypoint_positions(store, k), Tensor(w))),
        [kp] + [store[n] for n in names], name="pos_embed")
    assert rep.passed, str(rep)
    same = group_encoder.embed_keypoint_positions(store, np.ones((3, 3))).data
    assert same.shape == (3, cfg.channel) and np.array_equal(same[0], same[2])


def test_encode_group_k1_and_composition(rng):
    cfg = micro_config()
    store = make_store(cfg)
    g = rng.normal(size=(4, cfg.channel // 2, 3))[:, :4]
    e = group_encoder.encode_group(store, g, cfg).data
    # straight-line recomposition: canonical order, embed, layers, max
    order = group_encoder.canonical_order(g)
    gs = np.take_along_axis(g, order[..., None], axis=-2)
    x = group_encoder.embed_points(store, gs)
    x = group_encoder.transformer_layer(store, "encoder.layers.0", x, cfg.heads)
    np.testing.assert_array_equal(e, x.data.max(-2))
    single = rng.normal(size=(1, 3))
    tok = group_encoder.transformer_layer(store, "encoder.layers.0",
                                          group_encoder.embed_points(store, single), cfg.heads).data
    np.testing.assert_array_equal(group_encoder.encode_group(store, single, cfg).data, tok[0])


def test_encode_group_permutation_invariant_bit_exact(rng):
    cfg = micro_config(group_size=6)
    store = make_store(cfg)
    for pool in ("max", "mean"):
        c = cfg.replace(group_pool=pool)
        g = rng.normal(size=(3, 6, 3))
        e = group_encoder.encode_group(store, g, c).data
        for _ in range(5):
            perm = rng.permutation(6)
            assert np.array_equal(group_encoder.encode_group(store, g[:, perm], c).data, e)


def test_default_depth_and_width():
    from ptrb.pipeline.config import ModelConfig
    cfg = ModelConfig()
    assert (cfg.encoder_depth, cfg.channel, cfg.heads) == (4, 384, 6)
