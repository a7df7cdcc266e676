import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from fetsgan import engine as E
from fetsgan.errors import ContractError, ShapeError
from fetsgan.objectives import (
    FAT,
    FULL_SUM,
    LossBreakdown,
    composite_eg_loss,
    fat_index,
    fat_indices,
    feature_adv_losses,
    latent_adv_losses,
    reconstruction_loss,
)


def linear_scan_fat(losses, eps):
    """Reference FAT: first t (1-based) with l_t > eps, else the first maximizer."""
    for t, v in enumerate(losses, start=1):
        if v > eps:
            return t
    best, arg = -1.0, 0
    for t, v in enumerate(losses, start=1):
        if v > best:
            best, arg = v, t
    return arg


@pytest.mark.parametrize("losses,eps,tau", [
    ([0.05, 0.02, 0.3, 0.4], 0.1, 3),
    ([0.01, 0.02], 0.1, 2),
    ([0.5, 0.6], 0.1, 1),
])
def test_fat_examples(losses, eps, tau):
    assert fat_index(losses, eps) == tau


def test_fat_ties_break_to_smallest_index():
    assert fat_index([0.02, 0.05, 0.05], 0.1) == 2


@pytest.mark.parametrize("bad", [[], [[0.1]]])
def test_fat_rejects_empty_or_nested(bad):
    with pytest.raises(ContractError):
        fat_index(bad, 0.1)


def test_fat_matches_linear_scan_on_10000_cases():
    rng = np.random.default_rng(0)
    for case in range(10_000):
        T = int(rng.integers(1, 30))
        regime = case % 3
        if regime == 0:  # everything below threshold
            eps = 0.5
            losses = rng.uniform(0, 0.5, size=T)
        elif regime == 1:  # everything above
            eps = 0.05
            losses = rng.uniform(0.06, 1.0, size=T)
        else:
            eps = float(rng.uniform(0.01, 0.5))
            losses = rng.uniform(0, 0.6, size=T)
        if case % 17 == 0:
            losses = np.round(losses, 1)  # exercise ties and values equal to eps
        assert fat_index(losses, eps) == linear_scan_fat(losses, eps)


@settings(max_examples=200)
@given(losses=hnp.arrays(np.float64, st.integers(1, 20), elements=st.floats(0, 10)),
       eps=st.floats(1e-3, 5))
def test_fat_invariant_under_increasing_transform(losses, eps):
    assert fat_index(losses, eps) == fat_index(np.sqrt(losses), np.sqrt(eps))


def test_fat_indices_vectorized_with_lengths():
    rng = np.random.default_rng(1)
    losses = rng.uniform(0, 0.2, size=(50, 12))
    lengths = rng.integers(1, 13, size=50)
    got = fat_indices(losses, 0.1, lengths)
    want = [linear_scan_fat(row[:n], 0.1) - 1 for row, n in zip(losses, lengths)]
    np.testing.assert_array_equal(got, want)


# ---- reconstruction -----------------------------------------------------------

def _t(x):
    return E.Tensor(np.asarray(x, dtype=np.float64), dtype=np.float64)


@pytest.mark.parametrize("mode", [FAT, FULL_SUM])
def test_perfect_reconstruction_is_zero(mode):
    x = np.random.default_rng(0).normal(size=(3, 5, 2))
    loss, _ = reconstruction_loss(_t(x), _t(x), 0.1, mode)
    assert float(loss.data) == 0.0


def test_fat_loss_single_sequence_example():
    # per-step losses [0.05, 0.2] for one feature: errors sqrt(0.05), sqrt(0.2)
    x = np.zeros((1, 2, 1))
    xb = np.array([[[np.sqrt(0.05)], [np.sqrt(0.2)]]])
    loss, tau = reconstruction_loss(_t(x), _t(xb), 0.1, FAT)
    assert float(loss.data) == pytest.approx(0.2, abs=1e-12)
    assert tau[0] + 1 == 2


def test_full_sum_matches_double_loop():
    rng = np.random.default_rng(2)
    B, T, D = 4, 7, 3
    x, xb = rng.normal(size=(B, T, D)), rng.normal(size=(B, T, D))
    lengths = [7, 3, 5, 1]
    mask = (np.arange(T)[None, :] < np.array(lengths)[:, None]).astype(float)
    total = 0.0
    for b in range(B):
        for t in range(lengths[b]):
            step = 0.0
            for d in range(D):
                step += (x[b, t, d] - xb[b, t, d]) ** 2
            total += step / D
    loss, tau = reconstruction_loss(_t(x), _t(xb), 0.1, FULL_SUM, mask)
    assert tau is None
    assert float(loss.data) == pytest.approx(total / B, abs=1e-6)


def test_fat_gradient_is_zero_off_tau():
    rng = np.random.default_rng(3)
    B, T, D = 5, 9, 2
    x = _t(rng.normal(size=(B, T, D)) * 0.3)
    xb = E.Tensor(rng.normal(size=(B, T, D)) * 0.3, requires_grad=True, dtype=np.float64)
    loss, tau = reconstruction_loss(x, xb, 0.1, FAT)
    E.backward(loss)
    off = np.ones((B, T), bool)
    off[np.arange(B), tau] = False
    assert np.all(xb.grad[off] == 0.0)
    assert np.all(np.abs(xb.grad[~off]).sum(axis=-1) > 0)


def test_reconstruction_shape_mismatch():
    with pytest.raises(ShapeError):
        reconstruction_loss(_t(np.zeros((2, 3, 1))), _t(np.zeros((2, 4, 1))))


def test_unknown_mode():
    with pytest.raises(ContractError):
        reconstruction_loss(_t(np.zeros((1, 2, 1))), _t(np.zeros((1, 2, 1))), mode="median")


# ---- adversarial losses -------------------------------------------------------

def _loop_feature_losses(y_real, y_fake, m_real, m_fake):
    real = fake = gen = 0.0
    for b in range(y_real.shape[0]):
        for t in range(y_real.shape[1]):
            if m_real[b, t]:
                real += (1 - y_real[b, t]) ** 2
    for b in range(y_fake.shape[0]):
        for t in range(y_fake.shape[1]):
            if m_fake[b, t]:
                fake += y_fake[b, t] ** 2
                gen += (1 - y_fake[b, t]) ** 2
    dx = 0.5 * real / y_real.shape[0] + 0.5 * fake / y_fake.shape[0]
    return dx, 0.5 * gen / y_fake.shape[0]


@pytest.mark.parametrize("seed", range(5))
def test_feature_losses_match_scalar_loop(seed):
    rng = np.random.default_rng(seed)
    y_real, y_fake = rng.normal(size=(6, 8)), rng.normal(size=(4, 8))
    m_real = rng.uniform(size=(6, 8)) < 0.8
    m_fake = rng.uniform(size=(4, 8)) < 0.8
    dx, fx = feature_adv_losses(_t(y_real), _t(y_fake), m_real, m_fake)
    ref_dx, ref_fx = _loop_feature_losses(y_real, y_fake, m_real, m_fake)
    assert float(dx.data) == pytest.approx(ref_dx, abs=1e-6)
    assert float(fx.data) == pytest.approx(ref_fx, abs=1e-6)


def test_feature_losses_perfect_discriminator():
    dx, _ = feature_adv_losses(_t(np.ones((2, 3))), _t(np.zeros((2, 3))))
    assert float(dx.data) == 0.0


def test_feature_losses_hand_arithmetic():
    dx, fx = feature_adv_losses(_t(np.zeros((1, 2))), _t(np.ones((1, 2))))
    assert (float(dx.data), float(fx.data)) == (2.0, 0.0)


@pytest.mark.parametrize("seed", range(5))
def test_latent_losses_match_scalar_loop(seed):
    rng = np.random.default_rng(seed)
    y_prior, y_post = rng.normal(size=9), rng.normal(size=9)
    dz, ez = latent_adv_losses(_t(y_prior), _t(y_post))
    ref_dz = 0.5 * sum((1 - v) ** 2 for v in y_prior) / 9 + 0.5 * sum(v ** 2 for v in y_post) / 9
    ref_ez = 0.5 * sum((1 - v) ** 2 for v in y_post) / 9
    assert float(dz.data) == pytest.approx(ref_dz, abs=1e-6)
    assert float(ez.data) == pytest.approx(ref_ez, abs=1e-6)


def test_latent_losses_examples():
    dz, ez = latent_adv_losses(_t(np.ones(4)), _t(np.zeros(4)))
    assert (float(dz.data), float(ez.data)) == (0.0, 0.5)
    _, ez = latent_adv_losses(_t(np.ones(4)), _t(np.ones(4)))
    assert float(ez.data) == 0.0


@settings(max_examples=100)
@given(hnp.arrays(np.float64, (3, 4), elements=st.floats(-50, 50)),
       hnp.arrays(np.float64, (3, 4), elements=st.floats(-50, 50)))
def test_all_losses_non_negative(y_real, y_fake):
    dx, fx = feature_adv_losses(_t(y_real), _t(y_fake))
    dz, ez = latent_adv_losses(_t(y_real[:, 0]), _t(y_fake[:, 0]))
    assert min(float(v.data) for v in (dx, fx, dz, ez)) >= 0.0


def test_composite_examples():
    assert composite_eg_loss(10.0, 0.1, 0.2, 0.3) == pytest.approx(1.5)
    assert composite_eg_loss(0.0, 0.1, 0.2, 0.3) == pytest.approx(0.5)
    assert composite_eg_loss(10.0, 0.1, 0.2) == pytest.approx(1.2)
    with pytest.raises(ContractError):
        composite_eg_loss(-1.0, 0.1, 0.2, 0.3)


def test_breakdown_composite_identity():
    lb = LossBreakdown(recon=0.1, fx=0.3, dx=1.0, ez=0.2, dz=0.4, lam=10.0, tau=np.array([0, 2]))
    assert lb.composite == 10.0 * 0.1 + 0.2 + 0.3
    assert lb.mean_tau == 2.0
    assert lb.finite()
