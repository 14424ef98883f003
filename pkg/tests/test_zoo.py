import numpy as np
import pytest

from fehforge.zoo import (KINDS, ModelSpec, build, build_default,
                          build_rnn, layer_param_counts)


@pytest.mark.parametrize("kind", KINDS)
def test_build_forward_shape(kind):
    model = build(build_default(kind), (24, 2), seed=0)
    x = np.random.default_rng(1).normal(size=(4, 24, 2))
    mask = np.ones((4, 24), dtype=bool)
    mask[0, 20:] = False
    out = model.forward(x, mask=mask, training=False)
    assert out.shape == (4, 1)
    assert np.all(np.isfinite(out))


def test_gru_layer_param_counts_match_published_table():
    model = build(build_default("gru"), (100, 2), seed=0)
    assert layer_param_counts(model) == [1440, 1824, 624, 9]
    assert model.param_count() == 3897


def test_bidirectional_doubles_recurrent_params():
    uni = build(build_default("gru"), (50, 2), seed=0)
    bi = build(build_default("bigru"), (50, 2), seed=0)
    # every recurrent layer doubles; the head grows with the wider input
    uni_counts = layer_param_counts(uni)
    bi_counts = layer_param_counts(bi)
    assert bi_counts[0] == 2 * uni_counts[0]
    assert len(bi_counts) == len(uni_counts)


def test_build_deterministic_for_seed():
    a = build(build_default("fcn"), (30, 2), seed=9)
    b = build(build_default("fcn"), (30, 2), seed=9)
    for (n1, l1, k1), (n2, l2, k2) in zip(a.named_params(), b.named_params()):
        assert n1 == n2
        np.testing.assert_array_equal(l1.params[k1], l2.params[k2])
    c = build(build_default("fcn"), (30, 2), seed=10)
    diff = any(not np.array_equal(l1.params[k1], l3.params[k3])
               for (n1, l1, k1), (n3, l3, k3)
               in zip(a.named_params(), c.named_params()))
    assert diff


def test_spec_json_roundtrip_and_hash():
    spec = build_default("convlstm")
    clone = ModelSpec.from_json(spec.to_json())
    assert clone == spec
    assert clone.spec_hash() == spec.spec_hash()
    other = build_default("convgru")
    assert other.spec_hash() != spec.spec_hash()


def test_spec_dropout_override():
    spec = build_rnn("lstm", units=(20, 16, 8), dropout=(0.2, 0.2, 0.1))
    flat = spec.with_overrides(dropout=0.5)
    assert flat.options["dropout"] == [0.5, 0.5, 0.5]
    assert flat.options["units"] == [20, 16, 8]
    assert spec.options["dropout"] == [0.2, 0.2, 0.1]   # original untouched


def test_recurrent_regularization_tags():
    uni = build(build_default("gru"), (20, 2), seed=0)
    regs = {key: val for name, leaf, _ in uni.named_params()
            for key, val in getattr(leaf, "reg", {}).items()}
    # unidirectional: l2 on the input kernel, l1 on the recurrent kernel
    assert any(k.startswith("l2") or "l2" in k for k in regs) or uni.reg_penalty() >= 0.0
    # penalty is positive once weights are nonzero
    assert uni.reg_penalty() > 0.0
    fcn = build(build_default("fcn"), (20, 2), seed=0)
    assert fcn.reg_penalty() == 0.0        # conv stacks carry no penalty


def test_state_roundtrip_changes_then_restores():
    model = build(build_default("resnet"), (16, 2), seed=0)
    x = np.random.default_rng(0).normal(size=(2, 16, 2))
    state = model.get_state()
    before = model.forward(x, training=False).copy()
    for _, leaf, key in model.named_params():
        leaf.params[key] += 0.05
    assert not np.allclose(model.forward(x, training=False), before)
    model.set_state(state)
    np.testing.assert_array_equal(model.forward(x, training=False), before)


def test_unknown_kind_rejected():
    with pytest.raises(ValueError):
        build(ModelSpec("transformer", {}), (10, 2))
    with pytest.raises(ValueError):
        build_rnn("vanilla")


def test_seed_dropout_reproducible():
    spec = build_default("gru")
    outs = []
    for _ in range(2):
        model = build(spec, (20, 2), seed=4)
        model.seed_dropout(11)
        x = np.random.default_rng(2).normal(size=(3, 20, 2))
        outs.append(model.forward(x, training=True).copy())
    np.testing.assert_array_equal(outs[0], outs[1])
