"""Alternating optimisation of the four networks, plus the teacher-forcing baseline."""
import contextlib
import csv
import logging
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import engine as E
from .checkpoint import checkpoint_save
from .data import SeqDataset, batch_iter, fit_normalizer
from .errors import ContractError, NonFiniteError
from .networks import (
    GRUStack,
    Linear,
    count_parameters,
    init_models,
    sample_noise,
    sample_prior,
)
from .objectives import (
    FAT,
    FULL_SUM,
    LossBreakdown,
    composite_eg_loss,
    feature_disc_loss,
    feature_gen_loss,
    latent_disc_loss,
    latent_enc_loss,
    reconstruction_loss,
)

log = logging.getLogger(__name__)

LOG_COLUMNS = ("epoch", "L_recon", "L_fx", "L_dx", "L_ez", "L_dz", "mean_tau", "lr")


@contextlib.contextmanager
def frozen(params):
    """Exclude ``params`` from gradient accumulation for the duration."""
    flags = [p.requires_grad for p in params]
    for p in params:
        p.requires_grad = False
    try:
        yield
    finally:
        for p, f in zip(params, flags):
            p.requires_grad = f


class TrainState:
    """A bundle plus one Adam per network and the run's random stream."""

    def __init__(self, bundle, config, rng):
        self.bundle = bundle
        self.config = config
        self.rng = rng
        self.opt = {name: E.Adam(bundle.group(name))
                    for name in ("encoder", "generator", "feature_disc", "latent_disc")}
        self.rate = config.lr

    def _step(self, names, loss):
        params = [p for n in names for p in self.opt[n].params]
        for p in params:
            p.grad = None
        E.backward(loss)
        if self.config.clip_norm > 0:
            E.clip_grad_norm(params, self.config.clip_norm)
        for n in names:
            self.opt[n].step(self.rate)


def _check(name, value, last):
    if not np.isfinite(float(value.data)):
        raise NonFiniteError(f"{name} became non-finite; last finite losses: {last}", name=name)


def train_step(state, batch, last=None):
    """One alternating update on a batch: d_x, then d_z, then encoder+generator."""
    cfg, b, rng = state.config, state.bundle, state.rng
    dtype = b.dtype
    B, T = batch.values.shape[:2]
    x = E.Tensor(batch.values, dtype=dtype)
    mask = batch.mask.astype(dtype)
    use_fd = cfg.ablation != "no_feature_disc"
    mode = FULL_SUM if cfg.ablation == "no_fat" else FAT
    disc_params = state.opt["feature_disc"].params + state.opt["latent_disc"].params

    eta_e = sample_noise(rng, B, T, cfg.noise_dim, dtype)
    eta_g = sample_noise(rng, B, T, cfg.noise_dim, dtype)
    # discriminator updates leave encoder/generator untouched, so this graph is
    # reused for the final phase instead of recomputing identical values
    z_x = b.encoder(x, eta_e, mask)
    x_bar = b.generator(z_x, eta_g)

    l_dx = None
    if use_fd:
        fake = x_bar.detach()
        fake_mask = mask
        if cfg.prior_fakes:
            with E.no_grad():
                z_p = E.Tensor(sample_prior(rng, B, cfg.latent_dim, dtype), dtype=dtype)
                g_p = b.generator(z_p, E.Tensor(sample_noise(rng, B, T, cfg.noise_dim, dtype), dtype=dtype))
            fake = E.Tensor(np.concatenate([fake.data, g_p.data]), dtype=dtype)
            fake_mask = np.concatenate([mask, mask])
        l_dx = feature_disc_loss(b.feature_disc(x, mask), b.feature_disc(fake, fake_mask), mask, fake_mask)
        _check("L_dx", l_dx, last)
        state._step(["feature_disc"], l_dx)

    z_prior = E.Tensor(sample_prior(rng, B, cfg.latent_dim, dtype), dtype=dtype)
    l_dz = latent_disc_loss(b.latent_disc(z_prior), b.latent_disc(z_x.detach()))
    _check("L_dz", l_dz, last)
    state._step(["latent_disc"], l_dz)

    with frozen(disc_params):
        recon, tau = reconstruction_loss(x, x_bar, cfg.eps, mode, mask)
        l_ez = latent_enc_loss(b.latent_disc(z_x))
        l_fx = feature_gen_loss(b.feature_disc(x_bar, mask), mask) if use_fd else None
        total = composite_eg_loss(cfg.lam, recon, l_ez, l_fx)
        for name, v in (("L_recon", recon), ("L_ez", l_ez), ("L_fx", l_fx)):
            if v is not None:
                _check(name, v, last)
        state._step(["encoder", "generator"], total)
    return LossBreakdown.from_tensors(recon, l_fx, l_dx, l_ez, l_dz, cfg.lam, tau)


@dataclass
class TrainLog:
    rows: list = field(default_factory=list)
    seconds: list = field(default_factory=list)

    def append(self, row, seconds):
        self.rows.append(row)
        self.seconds.append(seconds)

    def column(self, name):
        return np.array([np.nan if r[name] is None else r[name] for r in self.rows], dtype=float)

    def __len__(self):
        return len(self.rows)

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(LOG_COLUMNS)
            for r in self.rows:
                w.writerow(["" if r[c] is None else (r[c] if c == "epoch" else repr(float(r[c])))
                            for c in LOG_COLUMNS])


def _epoch_row(epoch, parts, rate):
    def avg(key):
        vals = [getattr(p, key) for p in parts if getattr(p, key) is not None]
        return float(np.mean(vals)) if vals else None

    taus = [p.mean_tau for p in parts if p.tau is not None]
    return {
        "epoch": epoch,
        "L_recon": avg("recon"),
        "L_fx": avg("fx"),
        "L_dx": avg("dx"),
        "L_ez": avg("ez"),
        "L_dz": avg("dz"),
        "mean_tau": float(np.mean(taus)) if taus else None,
        "lr": rate,
    }


def train(config, dataset, rng=None, normalizer=None, out_dir=None, checkpoint_every=0,
          callback=None, meta=None):
    """Fit a model bundle on raw (unnormalized) sequences.

    The normalizer is fit on ``dataset`` unless one is supplied. When
    ``out_dir`` is given, periodic checkpoints, ``final.ckpt`` and
    ``train_log.csv`` are written there. ``meta`` entries are stored in
    the checkpoint alongside the recorded parameter counts.
    """
    if len(dataset) == 0:
        raise ContractError("training dataset is empty")
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    normalizer = normalizer or fit_normalizer(dataset)
    data = normalizer.apply_dataset(dataset)
    batch_size = config.batch_size
    if len(data) < batch_size:
        log.warning("dataset has %d sequences, fewer than batch size %d; training on one smaller batch",
                    len(data), batch_size)
        batch_size = len(data)

    bundle = init_models(config, data.dim, rng)
    bundle.normalizer = normalizer
    bundle.meta.update(meta or {})
    bundle.meta["parameter_count"] = count_parameters(bundle)
    bundle.meta["parameter_count_without_feature_disc"] = count_parameters(bundle, include_feature_disc=False)
    log.info("model has %d trainable parameters", bundle.meta["parameter_count"])
    state = TrainState(bundle, config, rng)
    schedule = E.LrSchedule(config.lr, config.epochs, config.decay_fraction, config.final_ratio)
    train_log = TrainLog()
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)

    last = None
    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        state.rate = E.lr_at(schedule, epoch)
        parts = []
        try:
            for batch in batch_iter(data, batch_size, rng):
                parts.append(train_step(state, batch, last))
                last = parts[-1]
        except NonFiniteError as exc:
            log.warning("epoch %d aborted: %s", epoch, exc)
        row = _epoch_row(epoch, parts, state.rate)
        train_log.append(row, time.perf_counter() - t0)
        bundle.meta["epochs_trained"] = epoch + 1
        if callback is not None:
            callback(epoch, row)
        if out_dir and checkpoint_every and (epoch + 1) % checkpoint_every == 0 and epoch + 1 < config.epochs:
            checkpoint_save(bundle, os.path.join(out_dir, f"epoch_{epoch + 1:05d}.ckpt"), config)
    if out_dir:
        checkpoint_save(bundle, os.path.join(out_dir, "final.ckpt"), config)
        train_log.to_csv(os.path.join(out_dir, "train_log.csv"))
    return bundle, train_log


class TeacherForcingModel:
    """Autoregressive GRU forecaster trained on ground-truth histories only."""

    def __init__(self, data_dim, hidden=64, depth=3, rng=None, dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.dtype = dtype
        self.rnn = GRUStack(data_dim, hidden, depth, rng, dtype)
        self.head = Linear(hidden, data_dim, rng, dtype)

    def parameters(self):
        return [p for _, p in self.rnn.named_parameters("rnn") + self.head.named_parameters("head")]

    def __call__(self, x, mask=None):
        return E.tanh(self.head(self.rnn(x, mask)))

    def loss(self, values, mask):
        x = E.Tensor(values[:, :-1], dtype=self.dtype)
        target = E.Tensor(values[:, 1:], dtype=self.dtype)
        m = (mask[:, 1:] * mask[:, :-1]).astype(self.dtype)
        err = E.mean(E.square(self(x, mask[:, :-1]) - target), axis=2)
        return E.tsum(err * m) * (1.0 / max(float(m.sum()), 1.0))

    def predict_next(self, values, mask=None):
        """Teacher-forced one-step predictions for every prefix, shape (B, T, D)."""
        with E.no_grad():
            return self(E.Tensor(values, dtype=self.dtype), mask).data

    def sample(self, prefixes, steps):
        """Free-running generation continuing each (B, P, D) prefix to ``steps`` total."""
        prefixes = np.asarray(prefixes, dtype=self.dtype)
        B, P, D = prefixes.shape
        states = self.rnn.init_state(B, self.dtype)
        out = np.zeros((B, steps, D), self.dtype)
        out[:, :P] = prefixes
        w, b = self.head.w.data, self.head.b.data
        for t in range(steps - 1):
            h, states = self.rnn.step(out[:, t], states)
            if t + 1 >= P:
                out[:, t + 1] = np.tanh(h @ w + b)
        return out


def train_baseline_tforcing(config, dataset, rng=None, epochs=None, prefix=1):
    """Fit the teacher-forcing baseline on normalized sequences; returns (model, losses)."""
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    dtype = np.dtype(config.dtype).type
    model = TeacherForcingModel(dataset.dim, config.hidden, config.depth, rng, dtype)
    opt = E.Adam(model.parameters())
    epochs = epochs or config.epochs
    schedule = E.LrSchedule(config.lr, epochs, config.decay_fraction, config.final_ratio)
    losses = []
    for epoch in range(epochs):
        rate = E.lr_at(schedule, epoch)
        vals = []
        for batch in batch_iter(dataset, min(config.batch_size, len(dataset)), rng, dtype=dtype):
            loss = model.loss(batch.values, batch.mask)
            opt.zero_grad()
            E.backward(loss)
            opt.step(rate)
            vals.append(float(loss.data))
        losses.append(float(np.mean(vals)))
    model.prefix = prefix
    return model, losses


def sample_tforcing(model, dataset, count, rng, prefix=None):
    """Generate ``count`` sequences seeded with prefixes drawn from ``dataset``."""
    prefix = prefix or getattr(model, "prefix", 1)
    idx = rng.integers(0, len(dataset), size=count)
    steps = min(dataset.lengths)
    seeds = np.stack([dataset.sequences[i][:prefix] for i in idx])
    return SeqDataset(list(model.sample(seeds, steps)))
