import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fftat import numerics as nx
from fftat.losses import (LossReport, classification_loss, domain_loss, mutual_information,
                          patch_loss, report, self_clustering_mi, total_loss)
from fftat.numerics import Tensor, grad_check

from . import oracles


def test_uniform_logits_cross_entropy(f64):
    assert classification_loss(Tensor(np.zeros((3, 4))), [0, 1, 3]).item() == pytest.approx(math.log(4), abs=1e-12)


def test_confident_logits_cross_entropy(f64):
    logits = np.full((2, 4), -20.0)
    logits[0, 2] = logits[1, 0] = 20.0
    assert classification_loss(Tensor(logits), [2, 0]).item() < 1e-15


def test_cross_entropy_scalar_oracle(f64):
    logits = [[0.3, -1.2, 2.0], [1.5, 0.1, -0.7]]
    got = classification_loss(Tensor(logits), [2, 1]).item()
    assert abs(got - oracles.cross_entropy(logits, [2, 1])) <= 1e-12


def test_cross_entropy_rejects_bad_label():
    with pytest.raises(ValueError, match="labels"):
        classification_loss(Tensor(np.zeros((2, 3))), [0, 3])


def test_domain_loss_half(f64):
    assert domain_loss(Tensor(np.full(6, 0.5)), [1, 1, 1, 0, 0, 0]).item() == pytest.approx(math.log(2), abs=1e-12)


def test_domain_loss_perfect(f64):
    assert domain_loss(Tensor([1.0, 1.0, 0.0, 0.0]), [1, 1, 0, 0]).item() < 1e-6


def test_patch_loss_half_and_perfect(f64):
    assert patch_loss(Tensor(np.full((4, 3), 0.5)), [1, 1, 0, 0]).item() == pytest.approx(math.log(2), abs=1e-12)
    probs = np.array([[1.0] * 3, [0.0] * 3])
    assert patch_loss(Tensor(probs), [1, 0]).item() < 1e-6


def test_patch_loss_scalar_oracle(f64):
    probs = [[0.9, 0.3], [0.2, 0.6]]
    got = patch_loss(Tensor(probs), [1, 0]).item()
    assert abs(got - oracles.patch_loss(probs, [1, 0])) <= 1e-12


def test_mi_uniform_is_zero(f64):
    assert abs(self_clustering_mi(Tensor(np.zeros((5, 4)))).item()) <= 1e-12


def test_mi_spread_one_hots_is_log_k(f64):
    mi = mutual_information(Tensor(np.eye(4))).item()
    assert abs(mi - math.log(4)) <= 1e-9


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_mi_scalar_oracle(seed, f64):
    logits = np.random.default_rng(seed).normal(0, 2, (8, 4))
    mi = self_clustering_mi(Tensor(logits)).item()
    assert 0 <= mi <= math.log(4)
    assert abs(mi - oracles.mutual_information(logits.tolist())) <= 1e-12


def test_mi_empty_batch_fails():
    with pytest.raises(ValueError):
        self_clustering_mi(Tensor(np.zeros((0, 4))))


def test_mi_bounds_many_batches(f64):
    rng = np.random.default_rng(0)
    for _ in range(1000):
        k = int(rng.integers(2, 7))
        logits = rng.normal(0, rng.uniform(0.1, 10), (int(rng.integers(1, 12)), k))
        mi = self_clustering_mi(Tensor(logits)).item()
        assert -1e-12 <= mi <= math.log(k) + 1e-12


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.randoms(use_true_random=False))
def test_losses_permutation_invariant(n, rnd):
    with nx.precision("f64"):
        rng = np.random.default_rng(n)
        logits = rng.normal(size=(n, 3))
        labels = rng.integers(0, 3, n)
        probs = rng.uniform(0.01, 0.99, (n, 4))
        dl = rng.integers(0, 2, n)
        perm = list(range(n))
        rnd.shuffle(perm)
        pairs = [
            (classification_loss(Tensor(logits), labels), classification_loss(Tensor(logits[perm]), labels[perm])),
            (domain_loss(Tensor(probs[:, 0]), dl), domain_loss(Tensor(probs[perm, 0]), dl[perm])),
            (patch_loss(Tensor(probs), dl), patch_loss(Tensor(probs[perm]), dl[perm])),
            (self_clustering_mi(Tensor(logits)), self_clustering_mi(Tensor(logits[perm]))),
        ]
        for a, b in pairs:
            assert a.item() == pytest.approx(b.item(), abs=1e-12)


def parts(**vals):
    return {k: Tensor(v) for k, v in vals.items()}


def test_total_loss_combination(f64):
    p = parts(l_clc=1.5, l_dis=0.7, l_pat=0.6, mi=0.9)
    assert total_loss(p, 0, 0, 0).item() == 1.5
    assert total_loss(p, 1.0, 0.01, 0.1).item() == pytest.approx(1.5 + 0.7 + 0.006 - 0.09, abs=1e-15)


def test_total_loss_names_nonfinite_term():
    with pytest.raises(nx.NonFiniteError, match="l_pat"):
        total_loss(parts(l_clc=1.0, l_dis=0.5, l_pat=math.nan, mi=0.1), 1, 1, 1)


def test_report_fields(f64):
    p = parts(l_clc=1.0, l_dis=0.5, l_pat=0.25, mi=0.125)
    rep = report(p, total_loss(p, 1, 1, 1))
    assert isinstance(rep, LossReport)
    assert rep.as_dict() == {"l_clc": 1.0, "l_dis": 0.5, "l_pat": 0.25, "mi": 0.125, "total": 1.625}


@pytest.mark.parametrize("name", ["ce", "bce", "patch", "mi"])
def test_loss_gradients(name, f64):
    rng = np.random.default_rng(11)
    if name == "ce":
        x = Tensor(rng.normal(size=(3, 4)), True)
        f = lambda: classification_loss(x, [0, 3, 1])
    elif name == "bce":
        x = Tensor(rng.uniform(0.1, 0.9, 4), True)
        f = lambda: domain_loss(x, [1, 0, 1, 0])
    elif name == "patch":
        x = Tensor(rng.uniform(0.1, 0.9, (2, 3)), True)
        f = lambda: patch_loss(x, [1, 0])
    else:
        x = Tensor(rng.normal(size=(5, 4)), True)
        f = lambda: self_clustering_mi(x)
    assert grad_check(f, [x]) <= 1e-6
