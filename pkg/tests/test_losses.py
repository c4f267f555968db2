import math

import numpy as np
import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st

import oracles
from s2vs.augment import BatchLabeling, labeling_from_origins
from s2vs.errors import NoPositivesError, RowWithoutNegativesError
from s2vs.losses import (LossConfig, hardest_negatives, infonce_loss, similarity_regularization, sshn_loss,
                         total_loss)


def pairs(n):
    """Standard (weak, strong) interleaved labeling for n videos."""
    return labeling_from_origins([{k // 2} for k in range(2 * n)])


def random_instance(seed, n=3, viv=False):
    rng = np.random.default_rng(seed)
    origins = [{k // 2} for k in range(2 * n)]
    if viv:
        origins[1] = origins[1] | {1}
    return torch.as_tensor(rng.uniform(0.01, 0.99, (2 * n, 2 * n))), labeling_from_origins(origins)


def test_infonce_examples():
    lab = BatchLabeling((frozenset({1}), frozenset({0})), (frozenset(), frozenset()))
    # rows without negatives reduce to -log 1 = 0
    assert float(infonce_loss(torch.tensor([[0.5, 0.3], [0.3, 0.5]]), lab)) == 0.0
    three = BatchLabeling((frozenset({1}), frozenset({0}), frozenset()), (frozenset({2}),) * 2 + (frozenset({0, 1}),))
    S = torch.tensor([[1.0, 0.4, 0.4], [0.4, 1.0, 0.4], [0.4, 0.4, 1.0]], dtype=torch.float64)
    assert float(infonce_loss(S, three, tau=0.07)) == pytest.approx(math.log(2), abs=1e-15)
    S = torch.tensor([[1.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 1.0]], dtype=torch.float64)
    assert float(infonce_loss(S, three, tau=0.03)) < 1e-10


def test_infonce_ignores_diagonal():
    S, lab = random_instance(0)
    big = S.clone()
    big.fill_diagonal_(1e4)
    assert float(infonce_loss(S, lab)) == float(infonce_loss(big, lab))


def test_infonce_requires_positives():
    lab = labeling_from_origins([{0}, {1}, {2}])
    with pytest.raises(NoPositivesError):
        infonce_loss(torch.rand(3, 3), lab)
    with pytest.raises(ValueError):
        infonce_loss(torch.rand(4, 4), lab)


def test_sshn_examples():
    lab = pairs(2)
    S = torch.eye(4, dtype=torch.float64)
    S[0, 1] = S[1, 0] = S[2, 3] = S[3, 2] = 0.9  # positives never enter the hard-negative pool
    assert float(sshn_loss(S, lab)) == 0.0
    S = torch.full((4, 4), 0.5, dtype=torch.float64)
    assert float(sshn_loss(S, lab)) == pytest.approx(2 * math.log(2), abs=1e-15)
    S = torch.eye(4, dtype=torch.float64)
    S[0, 2], S[0, 3] = 0.2, 0.7
    rows = [-math.log(0.3), 0.0, 0.0, 0.0]
    assert float(sshn_loss(S, lab)) == pytest.approx(sum(rows) / 4, abs=1e-15)


def test_sshn_floor_and_errors():
    lab = pairs(2)
    S = torch.zeros(4, 4, dtype=torch.float64)
    S[0, 2] = 1.0
    value = float(sshn_loss(S, lab))
    assert math.isfinite(value)
    assert value == pytest.approx((4 * -math.log(1e-8) - math.log(1e-8)) / 4)
    with pytest.raises(RowWithoutNegativesError):
        sshn_loss(torch.rand(2, 2), pairs(1))


def test_sshn_toggles():
    S, lab = random_instance(1)
    both = float(sshn_loss(S, lab))
    ss = float(sshn_loss(S, lab, use_hn=False))
    hn = float(sshn_loss(S, lab, use_ss=False))
    assert both == pytest.approx(ss + hn, abs=1e-14)
    assert float(sshn_loss(S, lab, use_ss=False, use_hn=False)) == 0.0


def test_hardest_negative_ties_pick_first_index():
    lab = pairs(3)
    S = torch.full((6, 6), 0.4, dtype=torch.float64, requires_grad=True)
    assert hardest_negatives(S, lab).tolist() == [2, 2, 0, 0, 0, 0]
    sshn_loss(S, lab, use_ss=False).backward()
    nonzero = (S.grad != 0).nonzero().tolist()
    assert nonzero == [[0, 2], [1, 2], [2, 0], [3, 0], [4, 0], [5, 0]]


def test_regularization_examples():
    assert float(similarity_regularization(torch.tensor([[0.5, -1.0], [1.0, 0.0]]))) == 0.0
    assert float(similarity_regularization(torch.tensor([1.5]), r=2.0)) == pytest.approx(1.0)
    assert float(similarity_regularization([torch.tensor([-2.0]), torch.tensor([[2.0, 0.3]])])) == pytest.approx(2.0)


def test_total_loss_composition():
    S, lab = random_instance(2)
    filtered = [torch.tensor([[1.5, 0.2]], dtype=torch.float64)]
    report = total_loss(S, lab, filtered, LossConfig())
    assert float(report.total) == pytest.approx(float(report.nce) + 3 * float(report.sshn) + 0.5, abs=1e-12)
    assert report.P == 6
    plain = total_loss(S, lab, filtered, LossConfig(lam=0.0, r=0.0))
    assert float(plain.total) == float(infonce_loss(S, lab, 0.03))
    assert set(report.as_dict()) == {"nce", "sshn", "reg", "total", "P"}


def test_total_loss_matches_scalar_recomputation():
    S, lab = random_instance(3, n=2)
    filtered = torch.tensor([[-1.25, 0.0], [1.1, 3.0]], dtype=torch.float64)
    cfg = LossConfig(tau=0.07, lam=3.0, r=1.0)
    rows = S.tolist()
    pos, neg = [sorted(p) for p in lab.positives], [sorted(n) for n in lab.negatives]
    expected = (oracles.infonce(rows, pos, neg, 0.07) + 3 * oracles.sshn(rows, neg)
                + sum(max(0.0, x - 1) + max(0.0, -1 - x) for x in filtered.reshape(-1).tolist()))
    assert float(total_loss(S, lab, filtered, cfg).total) == pytest.approx(expected, abs=1e-12)


def test_loss_config_validation():
    for bad in ({"tau": 0.0}, {"lam": -1.0}, {"r": -0.1}):
        with pytest.raises(ValueError):
            LossConfig(**bad)


@given(st.integers(0, 2**32 - 1), st.booleans(), st.sampled_from([0.03, 0.07, 0.5]))
def test_losses_match_oracles(seed, viv, tau):
    S, lab = random_instance(seed, viv=viv)
    rows = S.tolist()
    pos, neg = [sorted(p) for p in lab.positives], [sorted(n) for n in lab.negatives]
    assert abs(float(infonce_loss(S, lab, tau)) - oracles.infonce(rows, pos, neg, tau)) <= 1e-10
    assert abs(float(sshn_loss(S, lab)) - oracles.sshn(rows, neg)) <= 1e-10


@given(st.integers(0, 2**32 - 1))
def test_gradient_signs(seed):
    S, lab = random_instance(seed)
    S.requires_grad_(True)
    infonce_loss(S, lab).backward()
    pos, neg = lab.positive_mask(), lab.negative_mask()
    g = S.grad.numpy()
    assert np.all(g[pos] < 0)
    assert np.all(g[neg] > 0)

    S.grad = None
    sshn_loss(S, lab).backward()
    g = S.grad.numpy()
    hn = hardest_negatives(S, lab).numpy()
    assert np.all(np.diag(g) <= 0)
    for i, j in enumerate(hn):
        assert g[i, j] >= 0
        others = [k for k in lab.negatives[i] if k != j]
        assert np.all(g[i, others] == 0)


@given(st.integers(0, 2**32 - 1), st.randoms(use_true_random=False))
def test_permutation_invariance(seed, rnd):
    S, lab = random_instance(seed, viv=True)
    perm = list(range(S.shape[0]))
    rnd.shuffle(perm)
    p = torch.as_tensor(perm)
    S2, lab2 = S[p][:, p], lab.permuted(perm)
    for fn in (lambda s, l: infonce_loss(s, l), lambda s, l: sshn_loss(s, l)):
        assert float(fn(S2, lab2)) == pytest.approx(float(fn(S, lab)), abs=1e-12)


def test_total_loss_gradient_finite_differences():
    for seed in range(5):
        S, lab = random_instance(seed)
        S.requires_grad_(True)
        cfg = LossConfig()
        filtered = S * 1.3  # exercises the regularizer through the same leaf
        total_loss(S, lab, filtered, cfg).total.backward()
        analytic = S.grad.clone()

        def f(x):
            return float(total_loss(x, lab, x * 1.3, cfg).total)

        h = 1e-6
        numeric = torch.zeros_like(S)
        with torch.no_grad():
            for idx in np.ndindex(*S.shape):
                e = torch.zeros_like(S)
                e[idx] = h
                numeric[idx] = (f(S + e) - f(S - e)) / (2 * h)
        err = (analytic - numeric).abs().max() / max(numeric.abs().max(), 1e-12)
        assert err < 1e-5
