"""The four networks: seq2seq encoder, generator, feature and latent discriminators."""
from dataclasses import dataclass, field

import numpy as np

from . import engine as E
from .data import Normalizer
from .errors import ContractError, ShapeError


def _uniform(rng, shape, fan_in, dtype):
    k = 1.0 / np.sqrt(fan_in)
    return E.Tensor(rng.uniform(-k, k, size=shape), requires_grad=True, dtype=dtype)


def _zeros(shape, dtype):
    return E.Tensor(np.zeros(shape), requires_grad=True, dtype=dtype)


class Linear:
    def __init__(self, n_in, n_out, rng, dtype, spectral=False, power_iters=1):
        self.w = _uniform(rng, (n_in, n_out), n_in, dtype)
        self.b = _zeros(n_out, dtype)
        self.sn = E.SpectralNormState((n_in, n_out), rng=rng, dtype=dtype) if spectral else None
        self.power_iters = power_iters
        self.freeze_sn = False

    def weight(self):
        if self.sn is None:
            return self.w
        # power iteration only while training, so inference is repeatable
        update = E.is_grad_enabled() and not self.freeze_sn
        return E.spectral_normalize(self.w, self.power_iters, self.sn, update=update)

    def __call__(self, x):
        return x @ self.weight() + self.b

    def named_parameters(self, prefix):
        return [(f"{prefix}.w", self.w), (f"{prefix}.b", self.b)]

    def named_buffers(self, prefix):
        if self.sn is None:
            return []
        return [(f"{prefix}.sn_u", self.sn, "u"), (f"{prefix}.sn_v", self.sn, "v")]


class GRUStack:
    """Stacked unidirectional GRU; returns the top layer's hidden sequence."""

    def __init__(self, n_in, hidden, depth, rng, dtype):
        self.hidden = hidden
        self.layers = []
        for i in range(depth):
            fan = n_in if i == 0 else hidden
            self.layers.append({
                "wx": _uniform(rng, (fan, 3 * hidden), fan, dtype),
                "wh": _uniform(rng, (hidden, 3 * hidden), hidden, dtype),
                "bx": _zeros(3 * hidden, dtype),
                "bh": _zeros(3 * hidden, dtype),
            })

    def __call__(self, x, mask=None):
        h = x
        for layer in self.layers:
            gx = h @ layer["wx"] + layer["bx"]
            h = E.gru_recurrence(gx, layer["wh"], layer["bh"], mask)
        return h

    def init_state(self, batch, dtype):
        return [np.zeros((batch, self.hidden), dtype) for _ in self.layers]

    def step(self, x_t, states):
        """One inference step on arrays: x_t (B, n_in); returns (top output, new states)."""
        h = x_t
        new = []
        for layer, s in zip(self.layers, states):
            proj = h @ layer["wx"].data + layer["bx"].data
            h = E.gru_step(proj, s, layer["wh"].data, layer["bh"].data)
            new.append(h)
        return h, new

    def named_parameters(self, prefix):
        out = []
        for i, layer in enumerate(self.layers):
            for key in ("wx", "wh", "bx", "bh"):
                out.append((f"{prefix}.{i}.{key}", layer[key]))
        return out


class Encoder:
    def __init__(self, data_dim, noise_dim, latent_dim, hidden, depth, rng, dtype):
        self.rnn = GRUStack(data_dim + noise_dim, hidden, depth, rng, dtype)
        self.head = Linear(hidden, latent_dim, rng, dtype)

    def __call__(self, x, eta, mask=None):
        hs = self.rnn(E.concat([x, eta]), mask)
        # masked steps carry the state, so the last column is the last valid state
        return E.tanh(self.head(hs[:, -1, :]))

    def named_parameters(self):
        return self.rnn.named_parameters("encoder.rnn") + self.head.named_parameters("encoder.head")


class Generator:
    def __init__(self, data_dim, noise_dim, latent_dim, hidden, depth, rng, dtype):
        self.rnn = GRUStack(latent_dim + noise_dim, hidden, depth, rng, dtype)
        self.head = Linear(hidden, data_dim, rng, dtype)

    def __call__(self, z, eta, mask=None):
        steps = eta.shape[1]
        hs = self.rnn(E.concat([E.repeat_time(z, steps), eta]), mask)
        return E.tanh(self.head(hs))

    def named_parameters(self):
        return self.rnn.named_parameters("generator.rnn") + self.head.named_parameters("generator.head")


class FeatureDiscriminator:
    def __init__(self, data_dim, hidden, depth, rng, dtype, power_iters=1):
        self.rnn = GRUStack(data_dim, hidden, depth, rng, dtype)
        self.head = Linear(hidden, 1, rng, dtype, spectral=True, power_iters=power_iters)

    def __call__(self, x, mask=None):
        hs = self.rnn(x, mask)
        y = self.head(hs)
        return y.reshape(y.shape[0], y.shape[1])

    def named_parameters(self):
        return self.rnn.named_parameters("feature_disc.rnn") + self.head.named_parameters("feature_disc.head")

    def named_buffers(self):
        return self.head.named_buffers("feature_disc.head")


class LatentDiscriminator:
    def __init__(self, latent_dim, width, depth, rng, dtype, slope=0.2, power_iters=1):
        dims = [latent_dim] + [width] * depth
        self.hidden = [Linear(a, b, rng, dtype, spectral=True, power_iters=power_iters)
                       for a, b in zip(dims[:-1], dims[1:])]
        self.out = Linear(dims[-1], 1, rng, dtype, spectral=True, power_iters=power_iters)
        self.slope = slope

    def __call__(self, z):
        h = z
        for layer in self.hidden:
            h = E.leaky_relu(layer(h), self.slope)
        y = self.out(h)
        return y.reshape(y.shape[0])

    def layers(self):
        return self.hidden + [self.out]

    def named_parameters(self):
        out = []
        for i, layer in enumerate(self.layers()):
            out += layer.named_parameters(f"latent_disc.{i}")
        return out

    def named_buffers(self):
        out = []
        for i, layer in enumerate(self.layers()):
            out += layer.named_buffers(f"latent_disc.{i}")
        return out


@dataclass
class ModelBundle:
    encoder: Encoder
    generator: Generator
    feature_disc: FeatureDiscriminator
    latent_disc: LatentDiscriminator
    data_dim: int
    config: object
    normalizer: Normalizer = None
    meta: dict = field(default_factory=dict)

    @property
    def dtype(self):
        return np.dtype(self.config.dtype).type

    def named_parameters(self):
        return (self.encoder.named_parameters() + self.generator.named_parameters()
                + self.feature_disc.named_parameters() + self.latent_disc.named_parameters())

    def named_buffers(self):
        return self.feature_disc.named_buffers() + self.latent_disc.named_buffers()

    def group(self, name):
        part = {"encoder": self.encoder, "generator": self.generator,
                "feature_disc": self.feature_disc, "latent_disc": self.latent_disc}[name]
        return [p for _, p in part.named_parameters()]


def init_models(config, data_dim, rng=None):
    """Build all four networks with uniform(+-1/sqrt(fan_in)) weights and zero biases."""
    if data_dim < 1:
        raise ContractError(f"data_dim must be >= 1, got {data_dim}")
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    dtype = np.dtype(config.dtype).type
    c = config
    enc = Encoder(data_dim, c.noise_dim, c.latent_dim, c.hidden, c.depth, rng, dtype)
    gen = Generator(data_dim, c.noise_dim, c.latent_dim, c.hidden, c.depth, rng, dtype)
    fd = FeatureDiscriminator(data_dim, c.hidden, c.depth, rng, dtype, c.sn_power_iters)
    ld = LatentDiscriminator(c.latent_dim, c.latent_disc_width, c.latent_disc_depth, rng, dtype,
                             c.leaky_slope, c.sn_power_iters)
    return ModelBundle(enc, gen, fd, ld, data_dim, config)


def count_parameters(bundle, include_feature_disc=True):
    total = 0
    for name, p in bundle.named_parameters():
        if not include_feature_disc and name.startswith("feature_disc."):
            continue
        total += p.data.size
    return total


def _tensor(x, dtype):
    return x if isinstance(x, E.Tensor) else E.Tensor(x, dtype=dtype)


def encode(bundle, x, eta, mask=None):
    """Latent codes (B, latent_dim) in (-1, 1) for normalized sequences x (B, T, D)."""
    x, eta = _tensor(x, bundle.dtype), _tensor(eta, bundle.dtype)
    if x.shape[:2] != eta.shape[:2]:
        raise ContractError(f"noise shape {eta.shape} does not match sequence shape {x.shape}")
    if x.shape[2] != bundle.data_dim:
        raise ShapeError(f"sequence feature dimension {x.shape[2]} != model dimension {bundle.data_dim}")
    return bundle.encoder(x, eta, mask)


def generate(bundle, z, eta, steps=None):
    """Non-autoregressive decode: (B, latent_dim) codes and (B, T, noise_dim) noise -> (B, T, D)."""
    z, eta = _tensor(z, bundle.dtype), _tensor(eta, bundle.dtype)
    if steps is not None and eta.shape[1] != steps:
        raise ContractError(f"noise has {eta.shape[1]} steps, {steps} requested")
    return bundle.generator(z, eta)


def discriminate_features(bundle, x, mask=None):
    return bundle.feature_disc(_tensor(x, bundle.dtype), mask)


def discriminate_latent(bundle, z):
    return bundle.latent_disc(_tensor(z, bundle.dtype))


def sample_noise(rng, batch, steps, dim, dtype=np.float32):
    return rng.uniform(-1.0, 1.0, size=(batch, steps, dim)).astype(dtype)


def sample_prior(rng, batch, dim, dtype=np.float32):
    return rng.uniform(-1.0, 1.0, size=(batch, dim)).astype(dtype)
