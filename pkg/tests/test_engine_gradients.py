"""Engine gradients against central finite differences, in double precision."""
import numpy as np
import pytest

from fetsgan import engine as E
from fetsgan.config import TrainConfig
from fetsgan.networks import init_models
from fetsgan.objectives import (
    FAT,
    FULL_SUM,
    composite_eg_loss,
    feature_disc_loss,
    feature_gen_loss,
    latent_disc_loss,
    latent_enc_loss,
    reconstruction_loss,
)

from .conftest import numeric_grad, rel_err

SEEDS = range(8)


def _weighted(out, seed):
    # contract every output entry with fixed random weights so all gradients are exercised
    w = np.random.default_rng(10_000 + seed).normal(size=out.shape)
    return E.tsum(out * E.Tensor(w, dtype=np.float64))


def _shape(rng, ndim):
    return tuple(int(d) for d in rng.integers(1, 5, size=ndim))


UNARY = {
    "tanh": E.tanh,
    "sigmoid": E.sigmoid,
    "square": E.square,
    "leaky_relu": lambda a: E.leaky_relu(a, 0.2),
    "sum_axis": lambda a: E.tsum(a, axis=-1),
    "sum_all": E.tsum,
    "mean_axis": lambda a: E.mean(a, axis=0),
    "sumsq": lambda a: E.sumsq(a, axis=-1),
    "reshape": lambda a: a.reshape(-1),
    "slice": lambda a: a[..., :1],
    "neg": lambda a: -a,
    "rsub": lambda a: 1.0 - a,
}


@pytest.mark.parametrize("seed", SEEDS)
@pytest.mark.parametrize("name", sorted(UNARY))
def test_unary_ops(name, seed, check_grads):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=_shape(rng, 3))
    if name == "leaky_relu":
        x = np.where(np.abs(x) < 1e-3, 0.5, x)  # keep FD away from the kink
    check_grads(lambda a: _weighted(UNARY[name](a), seed), x)


BINARY = {
    "add": lambda a, b: a + b,
    "sub": lambda a, b: a - b,
    "mul": lambda a, b: a * b,
}


@pytest.mark.parametrize("seed", SEEDS)
@pytest.mark.parametrize("bias", [False, True])
@pytest.mark.parametrize("name", sorted(BINARY))
def test_binary_ops(name, bias, seed, check_grads):
    rng = np.random.default_rng(seed)
    shape = _shape(rng, 3)
    a = rng.normal(size=shape)
    b = rng.normal(size=shape[-1:] if bias else shape)
    check_grads(lambda x, y: _weighted(BINARY[name](x, y), seed), a, b)


@pytest.mark.parametrize("seed", SEEDS)
@pytest.mark.parametrize("batched", [False, True])
def test_matmul(batched, seed, check_grads):
    rng = np.random.default_rng(seed)
    lead = _shape(rng, 2 if batched else 1)
    k, n = (int(v) for v in rng.integers(1, 6, size=2))
    check_grads(lambda a, b: _weighted(a @ b, seed), rng.normal(size=lead + (k,)), rng.normal(size=(k, n)))


@pytest.mark.parametrize("seed", SEEDS)
def test_concat_and_repeat(seed, check_grads):
    rng = np.random.default_rng(seed)
    B, T, d1, d2 = (int(v) for v in rng.integers(1, 5, size=4))

    def f(z, eta):
        return _weighted(E.concat([E.repeat_time(z, T), eta]), seed)

    check_grads(f, rng.normal(size=(B, d1)), rng.normal(size=(B, T, d2)))


@pytest.mark.parametrize("seed", SEEDS)
def test_fancy_index(seed, check_grads):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(4, 6))
    rows = np.arange(4)
    cols = rng.integers(0, 6, size=4)
    check_grads(lambda a: _weighted(a[rows, cols], seed) + _weighted(a[:, -1], seed + 1), x)


@pytest.mark.parametrize("seed", SEEDS)
def test_bce_with_logits(seed, check_grads):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=7) * 3
    t = rng.integers(0, 2, size=7)
    check_grads(lambda a: E.bce_with_logits(a, t), x)


@pytest.mark.parametrize("seed", SEEDS)
def test_spectral_normalize(seed, check_grads):
    rng = np.random.default_rng(seed)
    shape = tuple(int(v) for v in rng.integers(2, 6, size=2))
    w = rng.normal(size=shape)
    state = E.SpectralNormState(shape, rng=rng, dtype=np.float64)
    E.power_iterate(w, state, 50)
    # frozen singular vectors: the function differentiated is W / (u^T W v)
    check_grads(lambda a: _weighted(E.spectral_normalize(a, 1, state, update=False), seed), w)


@pytest.mark.parametrize("seed", SEEDS)
@pytest.mark.parametrize("masked", [False, True])
def test_gru_recurrence(masked, seed, backend, check_grads):
    rng = np.random.default_rng(seed)
    B, T, H = 3, 5, 4
    mask = None
    if masked:
        lengths = np.array([5, 2, 4])
        mask = (np.arange(T)[None, :] < lengths[:, None]).astype(np.float64)

    def f(gx, wh, bh, h0):
        return _weighted(E.gru_recurrence(gx, wh, bh, mask, h0), seed)

    check_grads(f, rng.normal(size=(B, T, 3 * H)), rng.normal(size=(H, 3 * H)) * 0.5,
                rng.normal(size=3 * H) * 0.1, rng.normal(size=(B, H)) * 0.5)


def test_leaf_used_twice_sums_paths(f64):
    a = E.Tensor(np.array([1.5, -0.5]), requires_grad=True)
    E.backward(E.tsum(a * a + E.tanh(a)))
    expected = 2 * a.data + (1 - np.tanh(a.data) ** 2)
    np.testing.assert_allclose(a.grad, expected, rtol=1e-12)


def full_model_graph_error(mode, seed=7):
    """Worst relative error of encoder -> generator -> every loss, over every parameter."""
    cfg = TrainConfig(hidden=3, depth=2, latent_dim=2, noise_dim=2, latent_disc_width=3,
                      latent_disc_depth=2, dtype="float64")
    rng = np.random.default_rng(seed)
    b = init_models(cfg, 2, rng)
    B, T = 2, 4
    x = E.Tensor(rng.uniform(-1, 1, size=(B, T, 2)))
    mask = np.array([[1, 1, 1, 1], [1, 1, 1, 0]], dtype=np.float64)
    eta_e = rng.uniform(-1, 1, size=(B, T, 2))
    eta_g = rng.uniform(-1, 1, size=(B, T, 2))
    z_prior = E.Tensor(rng.uniform(-1, 1, size=(B, 2)))
    for layer in b.latent_disc.layers() + [b.feature_disc.head]:
        E.power_iterate(layer.w.data, layer.sn, 30)

    def loss():
        z = b.encoder(x, E.Tensor(eta_e), mask)
        xb = b.generator(z, E.Tensor(eta_g))
        recon, _ = reconstruction_loss(x, xb, 0.05, mode, mask)
        y_real = b.feature_disc(x, mask)
        y_fake = b.feature_disc(xb, mask)
        total = composite_eg_loss(10.0, recon, latent_enc_loss(b.latent_disc(z)), feature_gen_loss(y_fake, mask))
        return (total + feature_disc_loss(y_real, y_fake, mask, mask)
                + latent_disc_loss(b.latent_disc(z_prior), b.latent_disc(z)))

    # freeze the spectral-norm vectors so the function is fixed during differencing
    for layer in b.latent_disc.layers() + [b.feature_disc.head]:
        layer.freeze_sn = True
    params = [p for _, p in b.named_parameters()]
    out = loss()
    for p in params:
        p.grad = None
    E.backward(out)
    worst = 0.0
    for p in params:
        num = numeric_grad(lambda: float(loss().data), p.data)
        worst = max(worst, rel_err(p.grad, num))
    return worst


@pytest.mark.parametrize("mode", [FAT, FULL_SUM])
def test_full_model_graph(mode, f64, backend):
    """Encoder -> generator -> every loss, differentiated with respect to every parameter."""
    assert full_model_graph_error(mode) < 1e-5
