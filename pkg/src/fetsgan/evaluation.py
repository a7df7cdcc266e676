"""Post-hoc metrics: discriminative score, TSTR forecasting error, DFT diagnostics, sampling."""
import csv
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import engine as E
from .config import EvalConfig
from .data import SeqDataset, batch_iter, fit_normalizer
from .errors import ContractError
from .networks import GRUStack, Linear, encode, generate, sample_noise, sample_prior
from .objectives import FULL_SUM, reconstruction_loss

METRICS = ("dis", "pred1", "pred3", "pred5")
HORIZONS = {"pred1": 1, "pred3": 3, "pred5": 5}


@dataclass(frozen=True)
class DominantComponent:
    frequency: int
    amplitude: float
    phase: float


def dominant_component(x):
    """Largest non-DC bin of the DFT of a single-feature sequence.

    The bin index lies in [1, T // 2); amplitude is 2|X_k| / T and the
    phase is the angle of X_k, so A sin(2 pi k t / T) has phase -pi/2.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        if x.shape[1] != 1:
            raise ContractError(f"dominant_component needs one feature, got {x.shape[1]}")
        x = x[:, 0]
    if x.ndim != 1:
        raise ContractError(f"dominant_component needs a 1-D sequence, got shape {x.shape}")
    T = len(x)
    if T < 4:
        raise ContractError(f"dominant_component needs T >= 4, got {T}")
    spec = np.fft.fft(x)
    mags = np.abs(spec[1:T // 2])
    k = int(np.argmax(mags)) + 1
    return DominantComponent(k, float(2.0 * np.abs(spec[k]) / T), float(np.angle(spec[k])))


def dominant_table(dataset):
    """(N, 3) array of (frequency index, amplitude, phase) per sequence."""
    rows = [dominant_component(s) for s in dataset.sequences]
    return np.array([(c.frequency, c.amplitude, c.phase) for c in rows], dtype=np.float64).reshape(-1, 3)


def ks_statistic(a, b):
    """Two-sample Kolmogorov-Smirnov statistic (sup of the ECDF difference)."""
    return float(stats.ks_2samp(np.asarray(a, float), np.asarray(b, float)).statistic)


class _SeqModel:
    """GRU stack with a linear head; shared by the classifier, forecaster and probe."""

    def __init__(self, n_in, n_out, hidden, depth, rng, dtype):
        self.dtype = dtype
        self.rnn = GRUStack(n_in, hidden, depth, rng, dtype)
        self.head = Linear(hidden, n_out, rng, dtype)

    def parameters(self):
        return [p for _, p in self.rnn.named_parameters("rnn") + self.head.named_parameters("head")]

    def hidden(self, values, mask):
        return self.rnn(E.Tensor(values, dtype=self.dtype), mask)


class _Mlp:
    def __init__(self, n_in, width, depth, rng, dtype):
        dims = [n_in] + [width] * depth
        self.layers = [Linear(a, b, rng, dtype) for a, b in zip(dims[:-1], dims[1:])]
        self.out = Linear(dims[-1], 1, rng, dtype)

    def parameters(self):
        out = []
        for i, layer in enumerate(self.layers + [self.out]):
            out += [p for _, p in layer.named_parameters(str(i))]
        return out

    def __call__(self, x):
        h = x
        for layer in self.layers:
            h = E.leaky_relu(layer(h), 0.2)
        y = self.out(h)
        return y.reshape(y.shape[0])


def _fit(params, batches, loss_fn, cfg, rng):
    """Adam until ``cfg.epochs`` or ``cfg.patience`` epochs without a lower training loss."""
    opt = E.Adam(params)
    best, stale, history = math.inf, 0, []
    for _ in range(cfg.epochs):
        vals = []
        for batch in batches(rng):
            loss = loss_fn(batch)
            opt.zero_grad()
            E.backward(loss)
            opt.step(cfg.lr)
            vals.append(float(loss.data))
        epoch_loss = float(np.mean(vals))
        history.append(epoch_loss)
        if epoch_loss < best - 1e-7:
            best, stale = epoch_loss, 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    return history


def _split(n, fraction, rng):
    order = rng.permutation(n)
    cut = min(max(int(round(fraction * n)), 1), n - 1) if n > 1 else n
    return order[:cut], order[cut:]


def _labelled(datasets_and_labels):
    seqs, labels = [], []
    for ds, label in datasets_and_labels:
        seqs += ds.sequences
        labels += [label] * len(ds)
    return SeqDataset(seqs), np.array(labels, dtype=np.float64)


def discriminative_score(real, synthetic, config=None, seed=0, normalizer=None, details=False):
    """|0.5 - held-out accuracy| of a GRU classifier separating real (1) from synthetic (0).

    Both sets are split ``train_fraction`` / rest independently; sequences
    are scaled with a normalizer fit on ``real`` unless one is given.
    """
    if len(real) == 0 or len(synthetic) == 0:
        raise ContractError("discriminative_score needs non-empty real and synthetic sets")
    cfg = config or EvalConfig()
    rng = np.random.default_rng(seed)
    norm = normalizer or fit_normalizer(real)
    real_n, syn_n = norm.apply_dataset(real), norm.apply_dataset(synthetic)
    r_tr, r_te = _split(len(real_n), cfg.train_fraction, rng)
    s_tr, s_te = _split(len(syn_n), cfg.train_fraction, rng)
    train_set, train_y = _labelled([(real_n.subset(r_tr), 1.0), (syn_n.subset(s_tr), 0.0)])
    test_set, test_y = _labelled([(real_n.subset(r_te), 1.0), (syn_n.subset(s_te), 0.0)])

    dtype = np.float32
    model = _SeqModel(real.dim, 1, cfg.hidden, cfg.depth, rng, dtype)

    def logits(values, mask):
        hs = model.hidden(values, mask)
        # masked steps carry the state, so the last column is each sequence's final state
        y = model.head(hs[:, -1, :])
        return y.reshape(y.shape[0])

    def batches(r):
        return batch_iter(train_set, min(cfg.batch_size, len(train_set)), r, dtype=dtype)

    history = _fit(model.parameters(), batches,
                   lambda b: E.bce_with_logits(logits(b.values, b.mask), train_y[b.index]), cfg, rng)
    values, mask = test_set.padded(dtype)
    with E.no_grad():
        pred = logits(values, mask).data > 0
    acc = float(np.mean(pred == (test_y > 0.5)))
    score = abs(0.5 - acc)
    if details:
        return score, {"accuracy": acc, "epochs": len(history), "test_size": len(test_set)}
    return score


def predictive_score(real, synthetic, horizon=1, config=None, seed=0, normalizer=None, details=False):
    """Train-on-synthetic, test-on-real MAE of a GRU forecaster predicting ``horizon`` steps ahead.

    The forecaster reads x_1..x_t and predicts x_{t+horizon} at every valid
    t. It is fit with squared error on ``synthetic`` and scored by mean
    absolute error on all of ``real``, in units where the real data spans
    [-1, 1]. With ``details`` the denormalized MAE is returned too.
    """
    if len(real) == 0 or len(synthetic) == 0:
        raise ContractError("predictive_score needs non-empty real and synthetic sets")
    shortest = min(min(real.lengths), min(synthetic.lengths))
    if horizon < 1 or horizon >= shortest:
        raise ContractError(f"horizon {horizon} must lie in [1, {shortest}) for these sequences")
    cfg = config or EvalConfig()
    rng = np.random.default_rng(seed)
    norm = normalizer or fit_normalizer(real)
    real_n, syn_n = norm.apply_dataset(real), norm.apply_dataset(synthetic)
    dtype = np.float32
    model = _SeqModel(real.dim, real.dim, cfg.hidden, cfg.depth, rng, dtype)
    k = horizon

    def forecast(values, mask):
        return model.head(model.hidden(values[:, :-k], mask[:, :-k]))

    def loss(b):
        m = (b.mask[:, k:] * b.mask[:, :-k]).astype(dtype)
        err = E.mean(E.square(forecast(b.values, b.mask) - E.Tensor(b.values[:, k:], dtype=dtype)), axis=2)
        return E.tsum(err * m) * (1.0 / max(float(m.sum()), 1.0))

    def batches(r):
        return batch_iter(syn_n, min(cfg.batch_size, len(syn_n)), r, dtype=dtype)

    history = _fit(model.parameters(), batches, loss, cfg, rng)
    values, mask = real_n.padded(np.float64)
    with E.no_grad():
        pred = forecast(values.astype(dtype), mask.astype(dtype)).data.astype(np.float64)
    m = (mask[:, k:] * mask[:, :-k]) > 0
    abs_err = np.abs(pred - values[:, k:])[m]
    mae = float(abs_err.mean())
    if details:
        scale = 0.5 * (norm.hi - norm.lo)
        raw = float((abs_err * scale[None, :]).mean())
        return mae, {"mae_denormalized": raw, "epochs": len(history)}
    return mae


def latent_probe_accuracy(bundle, real, config=None, seed=0):
    """Held-out accuracy of a fresh MLP telling prior draws from encoder codes (chance 0.5)."""
    cfg = config or EvalConfig()
    rng = np.random.default_rng(seed)
    post = encode_dataset(bundle, real, rng)
    prior = sample_prior(rng, len(post), bundle.config.latent_dim, np.float64)
    x = np.concatenate([prior, post])
    y = np.concatenate([np.ones(len(prior)), np.zeros(len(post))])
    tr, te = _split(len(x), cfg.train_fraction, rng)
    dtype = np.float32
    probe = _Mlp(x.shape[1], cfg.hidden, cfg.depth, rng, dtype)

    def batches(r):
        order = r.permutation(tr)
        for s in range(0, len(order), cfg.batch_size):
            yield order[s:s + cfg.batch_size]

    _fit(probe.parameters(), batches,
         lambda idx: E.bce_with_logits(probe(E.Tensor(x[idx], dtype=dtype)), y[idx]), cfg, rng)
    with E.no_grad():
        pred = probe(E.Tensor(x[te], dtype=dtype)).data > 0
    return float(np.mean(pred == (y[te] > 0.5)))


def encode_dataset(bundle, dataset, rng):
    """Latent codes (N, latent_dim) for raw sequences, using fresh encoder noise."""
    data = bundle.normalizer.apply_dataset(dataset) if bundle.normalizer is not None else dataset
    values, mask = data.padded(bundle.dtype)
    eta = sample_noise(rng, len(data), values.shape[1], bundle.config.noise_dim, bundle.dtype)
    with E.no_grad():
        return encode(bundle, values, eta, mask).data.astype(np.float64)


def reconstruction_error(bundle, dataset, rng):
    """Batch mean over sequences of the summed per-step error of g(e(x)), in normalized units."""
    data = bundle.normalizer.apply_dataset(dataset) if bundle.normalizer is not None else dataset
    values, mask = data.padded(bundle.dtype)
    B, T = values.shape[:2]
    dim = bundle.config.noise_dim
    with E.no_grad():
        z = encode(bundle, values, sample_noise(rng, B, T, dim, bundle.dtype), mask)
        x_bar = generate(bundle, z, sample_noise(rng, B, T, dim, bundle.dtype))
        loss, _ = reconstruction_loss(E.Tensor(values, dtype=bundle.dtype), x_bar, mode=FULL_SUM, mask=mask)
    return float(loss.data)


def _decode(bundle, z, steps, rng, eta=None):
    if eta is None:
        eta = sample_noise(rng, len(z), steps, bundle.config.noise_dim, bundle.dtype)
    with E.no_grad():
        out = generate(bundle, np.asarray(z, dtype=bundle.dtype), eta, steps).data.astype(np.float64)
    if bundle.normalizer is not None:
        out = bundle.normalizer.invert(out)
    return SeqDataset(list(out))


def sample_dataset(bundle, count, steps, rng):
    """Draw ``count`` sequences of ``steps`` steps from the prior, denormalized."""
    z = sample_prior(rng, count, bundle.config.latent_dim, np.float64)
    return _decode(bundle, z, steps, rng)


def is_trained(bundle):
    return bool(bundle.meta.get("epochs_trained"))


def sample_near(bundle, anchor, noise_std=0.1, count=100, rng=None, eta=None):
    """Decode ``count`` perturbations of the anchor's latent code.

    Each draw adds N(0, noise_std^2) noise per latent component and clamps
    to [-1, 1]. ``eta`` fixes the generator noise (shape (count, T,
    noise_dim)); by default it is drawn fresh. Returns ``(dataset, info)``
    where ``info`` carries the anchor code and an untrained-model flag.
    """
    if noise_std < 0:
        raise ContractError(f"noise_std must be >= 0, got {noise_std}")
    rng = rng if rng is not None else np.random.default_rng(0)
    anchor = np.asarray(anchor, dtype=np.float64)
    if anchor.ndim == 1:
        anchor = anchor[:, None]
    if len(anchor) < 1:
        raise ContractError("anchor sequence is empty")
    steps = len(anchor)
    z_x = encode_dataset(bundle, SeqDataset([anchor]), rng)[0]
    gamma = rng.normal(0.0, 1.0, size=(count, len(z_x))) * noise_std
    z_s = np.clip(z_x[None, :] + gamma, -1.0, 1.0)
    out = _decode(bundle, z_s, steps, rng, eta)
    info = {"latent": [float(v) for v in z_x], "noise_std": float(noise_std), "untrained": not is_trained(bundle)}
    return out, info


def _shared_histograms(real_col, syn_col, bins):
    edges = np.histogram_bin_edges(np.concatenate([real_col, syn_col]), bins=bins)
    return edges, np.histogram(real_col, edges)[0], np.histogram(syn_col, edges)[0]


def pca_fit(x, components=2):
    """Mean and top principal directions of the rows of ``x`` via SVD."""
    x = np.asarray(x, dtype=np.float64)
    mu = x.mean(axis=0)
    _, _, vt = np.linalg.svd(x - mu, full_matrices=False)
    return mu, vt[:components]


def pca_project(x, mu, axes):
    return (np.asarray(x, dtype=np.float64) - mu) @ axes.T


def _flatten(dataset, steps):
    return np.stack([s[:steps].ravel() for s in dataset.sequences])


@dataclass
class DistributionReport:
    """Diagnostics comparing two datasets; DFT fields for one feature, PCA otherwise."""

    real_components: np.ndarray = None
    synthetic_components: np.ndarray = None
    histograms: dict = field(default_factory=dict)
    ks: dict = field(default_factory=dict)
    pca_real: np.ndarray = None
    pca_synthetic: np.ndarray = None

    @property
    def univariate(self):
        return self.real_components is not None


def distribution_report(real, synthetic, bins=20):
    """Dominant-component histograms and KS statistics, or PCA coordinates for D > 1."""
    rep = DistributionReport()
    if real.dim == 1 and synthetic.dim == 1:
        rep.real_components = dominant_table(real)
        rep.synthetic_components = dominant_table(synthetic)
        for j, name in enumerate(("frequency", "amplitude", "phase")):
            a, b = rep.real_components[:, j], rep.synthetic_components[:, j]
            if name == "frequency":
                top = int(max(a.max(), b.max()))
                spec = np.arange(0.5, top + 1.5)
            else:
                spec = bins
            rep.histograms[name] = _shared_histograms(a, b, spec)
            rep.ks[name] = ks_statistic(a, b)
    else:
        steps = min(min(real.lengths), min(synthetic.lengths))
        mu, axes = pca_fit(_flatten(real, steps))
        rep.pca_real = pca_project(_flatten(real, steps), mu, axes)
        rep.pca_synthetic = pca_project(_flatten(synthetic, steps), mu, axes)
    return rep


def write_report_files(report, out_dir):
    """Write the diagnostics as CSV (plus a KS JSON summary for univariate data); returns paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    if report.univariate:
        p = os.path.join(out_dir, "dominant_components.csv")
        with open(p, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["source", "index", "frequency", "amplitude", "phase"])
            for label, table in (("real", report.real_components), ("synthetic", report.synthetic_components)):
                for i, (f, a, ph) in enumerate(table):
                    w.writerow([label, i, int(f), repr(float(a)), repr(float(ph))])
        paths.append(p)
        p = os.path.join(out_dir, "histograms.csv")
        with open(p, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["quantity", "bin_low", "bin_high", "real_count", "synthetic_count"])
            for name, (edges, rc, sc) in report.histograms.items():
                for lo, hi, a, b in zip(edges[:-1], edges[1:], rc, sc):
                    w.writerow([name, repr(float(lo)), repr(float(hi)), int(a), int(b)])
        paths.append(p)
        p = os.path.join(out_dir, "ks_summary.json")
        with open(p, "w", encoding="utf-8") as fh:
            json.dump(report.ks, fh, sort_keys=True, indent=2)
        paths.append(p)
    else:
        p = os.path.join(out_dir, "pca_coordinates.csv")
        with open(p, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["source", "pc1", "pc2"])
            for label, coords in (("real", report.pca_real), ("synthetic", report.pca_synthetic)):
                for row in coords:
                    pad = list(row) + [0.0] * (2 - len(row))
                    w.writerow([label] + [repr(float(v)) for v in pad[:2]])
        paths.append(p)
    return paths


@dataclass
class EvalReport:
    """Metric name -> list of measurements, with run metadata."""

    values: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def add(self, metric, value):
        self.values.setdefault(metric, []).append(float(value))

    def summary(self, metric):
        v = np.asarray(self.values[metric], dtype=np.float64)
        return {"mean": float(v.mean()), "std": float(v.std()), "runs": int(v.size), "values": [float(x) for x in v]}

    def to_dict(self):
        out = {m: self.summary(m) for m in sorted(self.values)}
        out["meta"] = self.meta
        return out

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json() + "\n")
        return path


def evaluate_protocol(bundles, real, metrics=METRICS, config=None, seed=0, n_models=None, n_samples=None):
    """Score ``n_models`` x ``n_samples`` synthetic draws on every requested metric.

    ``bundles`` are cycled if fewer than ``n_models`` are given. Each draw
    matches the real set in size and length; every metric run gets its
    own child seed, so the report is reproducible from ``seed`` alone.
    """
    unknown = [m for m in metrics if m not in METRICS]
    if unknown:
        raise ContractError(f"unknown metric(s) {unknown}; valid names are {list(METRICS)}")
    if not bundles:
        raise ContractError("no models to evaluate")
    cfg = config or EvalConfig()
    n_models = n_models or cfg.n_models
    n_samples = n_samples or cfg.n_samples
    steps = min(real.lengths)
    report = EvalReport(meta={
        "seed": seed, "n_models": n_models, "n_samples": n_samples, "distinct_models": len(bundles),
        "discriminative_score": "abs(0.5 - held-out accuracy)", "mae_units": "normalized to real [-1, 1]",
        "eval_config": cfg.to_dict(),
    })
    children = np.random.SeedSequence(seed).spawn(n_models * n_samples)
    for i in range(n_models):
        bundle = bundles[i % len(bundles)]
        for j in range(n_samples):
            ss = children[i * n_samples + j]
            draw_seed, *metric_seeds = ss.generate_state(1 + len(metrics))
            syn = sample_dataset(bundle, len(real), steps, np.random.default_rng(draw_seed))
            for m, s in zip(metrics, metric_seeds):
                if m == "dis":
                    report.add(m, discriminative_score(real, syn, cfg, int(s)))
                else:
                    mae, extra = predictive_score(real, syn, HORIZONS[m], cfg, int(s), details=True)
                    report.add(m, mae)
                    report.add(m + "_denormalized", extra["mae_denormalized"])
    return report
