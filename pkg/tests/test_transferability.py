import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fftat import numerics as nx
from fftat.attention import tg_sa, attention_weights
from fftat.numerics import Tensor
from fftat.transferability import (PROB_EPS, TransferabilityGraph, blend_graph, build_graph,
                                   init_discriminator, pad_graph, patch_discriminate,
                                   read_graph_csv, text_heatmap, transferability_score,
                                   write_graph_csv)

from . import oracles


def disc_params(rng, d, zero=False):
    p = init_discriminator(rng, "patch_disc", d, lambda r, s: r.normal(0, 0.5, s))
    if zero:
        for v in p.values():
            v.data[...] = 0
    return p


def test_zero_discriminator_gives_half(rng):
    p = disc_params(rng, 8, zero=True)
    probs = patch_discriminate(Tensor(rng.normal(size=(3, 4, 8))), p)
    assert probs.shape == (3, 4)
    assert np.all(probs.data == 0.5)


def test_large_bias_saturates(rng, f64):
    p = disc_params(rng, 8)
    p["patch_disc.b2"].data[...] = 50.0
    probs = patch_discriminate(Tensor(rng.normal(size=(2, 4, 8))), p)
    assert probs.data.min() > 1 - 1e-12


def test_score_at_half_is_one():
    assert transferability_score(0.5) == 1.0


def test_score_at_saturation_is_near_zero():
    assert transferability_score(PROB_EPS) < 1e-5
    assert transferability_score(0.0) == transferability_score(PROB_EPS)
    assert transferability_score(1.0) < 1e-5


def test_score_quarter_against_high_precision():
    mpmath.mp.dps = 40
    p = mpmath.mpf(1) / 4
    ref = -(p * mpmath.log(p, 2) + (1 - p) * mpmath.log(1 - p, 2))
    assert float(ref) == pytest.approx(0.8112781244591328, abs=1e-15)
    assert transferability_score(0.25) == pytest.approx(float(ref), abs=1e-15)
    assert transferability_score(0.25) == pytest.approx(oracles.binary_entropy_bits(0.25), abs=1e-15)


@pytest.mark.parametrize("delta", [0.1, 0.01, 0.3])
def test_score_peaks_at_half(delta):
    assert transferability_score(0.5) > transferability_score(0.5 + delta)
    assert transferability_score(0.5) > transferability_score(0.5 - delta)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_score_range_and_concavity(a, b, t):
    sa, sb = transferability_score(a), transferability_score(b)
    assert 0.0 <= sa <= 1.0
    mid = transferability_score(t * a + (1 - t) * b)
    assert mid >= t * sa + (1 - t) * sb - 1e-6  # clamp at the edges costs < 1e-6


def test_graph_all_ones():
    g = build_graph(np.ones((3, 4)), heads=4)
    assert np.array_equal(g.matrix, np.ones((4, 4)))


def test_graph_single_outer_product(f64):
    g = build_graph(np.array([[1.0, 0.5]]), heads=2)
    np.testing.assert_array_equal(g.matrix, [[1.0, 0.5], [0.5, 0.25]])


def test_graph_average_of_outer_products(f64):
    g = build_graph(np.array([[1.0, 0.0], [0.0, 1.0]]), heads=3)
    np.testing.assert_array_equal(g.matrix, [[0.5, 0.0], [0.0, 0.5]])


def test_graph_head_count_cancels(f64, rng):
    s = rng.uniform(size=(5, 6))
    literal = sum(np.outer(c, c) for _ in range(4) for c in s) / (5 * 4)
    np.testing.assert_allclose(build_graph(s, heads=4).matrix, literal, atol=1e-15)


def test_graph_empty_batch_fails():
    with pytest.raises(ValueError, match="non-empty"):
        build_graph(np.zeros((0, 4)), heads=1)


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)), elements=st.floats(0, 1)))
def test_graph_properties(scores):
    with nx.precision("f64"):
        m = build_graph(scores, heads=2).matrix
    assert np.abs(m - m.T).max() == 0
    assert m.min() >= 0 and m.max() <= 1
    diag = np.diag(m)
    np.testing.assert_allclose(diag, (scores ** 2).mean(0), atol=1e-15)
    assert (diag <= scores.mean(0) + 1e-15).all()


def test_pad_graph():
    g = TransferabilityGraph(np.ones((2, 2)))
    assert np.array_equal(pad_graph(g), np.ones((3, 3)))
    m = np.random.default_rng(0).uniform(size=(4, 4))
    padded = pad_graph(TransferabilityGraph(m))
    assert np.array_equal(padded[1:, 1:], m)
    assert (padded[0] == 1).all() and (padded[:, 0] == 1).all()


def test_padding_leaves_class_logits_unscaled(rng, f64):
    from .test_attention import make_params
    p = make_params(rng, 4)
    x = Tensor(rng.normal(size=(1, 4, 4)))
    m = rng.uniform(0.1, 0.9, (3, 3))
    w_pad, _ = attention_weights(x, p, "attn", 1, pad_graph(TransferabilityGraph(m)))
    w_van, _ = attention_weights(x, p, "attn", 1)
    # the class-token query row sees only ones in the padded graph
    np.testing.assert_array_equal(w_pad.data[0, 0, 0], w_van.data[0, 0, 0])
    assert not np.allclose(w_pad.data[0, 0, 1:], w_van.data[0, 0, 1:])


def test_no_gradient_into_discriminator_through_graph_path(rng, f64):
    """Graph built from discriminator scores then used by TG-SA: disc params get nothing."""
    from .test_attention import make_params
    d = 4
    disc = disc_params(rng, d)
    attn = make_params(rng, d)
    feats = Tensor(rng.normal(size=(2, 3, d)))
    probs = patch_discriminate(feats, disc)
    graph = build_graph(transferability_score(probs.data), heads=2)
    x = Tensor(rng.normal(size=(2, 4, d)))
    out = tg_sa(x, attn, "attn", 2, pad_graph(graph))
    (out * out).sum().backward()
    for name, v in disc.items():
        assert v.grad is None or not v.grad.any(), name
    assert attn["attn.wq"].grad is not None and attn["attn.wq"].grad.any()


def test_blend_graph():
    old = TransferabilityGraph(np.zeros((2, 2)), 3)
    new = TransferabilityGraph(np.ones((2, 2)), 4)
    assert blend_graph(old, new, 0.0) is new
    b = blend_graph(old, new, 0.25)
    np.testing.assert_allclose(b.matrix, 0.75)
    assert b.iteration_built == 4


def test_graph_csv_roundtrip(tmp_path, rng):
    g = TransferabilityGraph(rng.uniform(size=(4, 4)))
    path = write_graph_csv(g, tmp_path / "graph_step5.csv")
    rows = path.read_text().strip().splitlines()
    assert len(rows) == 4 and all(len(r.split(",")) == 4 for r in rows)
    back = read_graph_csv(path)
    np.testing.assert_allclose(back.matrix, g.matrix, rtol=1e-5)


def test_heatmap_uniform_for_constant_graph():
    art = text_heatmap(TransferabilityGraph(np.ones((4, 4))))
    lines = art.splitlines()
    assert len(lines) == 4 and len(set("".join(lines))) == 1
