"""Least-squares adversarial losses, reconstruction losses and the FAT operator."""
from dataclasses import dataclass

import numpy as np

from . import engine as E
from .errors import ContractError, ShapeError

FAT, FULL_SUM = "fat", "full_sum"


def fat_index(losses, eps):
    """First step (1-based) whose loss exceeds ``eps``; the argmax step if none does.

    >>> fat_index([0.05, 0.02, 0.3, 0.4], 0.1)
    3
    >>> fat_index([0.01, 0.02], 0.1)
    2
    """
    losses = np.asarray(losses, dtype=np.float64)
    if losses.ndim != 1 or losses.size == 0:
        raise ContractError("fat_index needs a non-empty 1-D sequence of losses")
    if eps <= 0:
        raise ContractError(f"eps must be positive, got {eps}")
    above = np.flatnonzero(losses > eps)
    return int(above[0] if above.size else np.argmax(losses)) + 1


def fat_indices(losses, eps, lengths=None):
    """Vectorised FAT over a (B, T) array; returns 0-based indices, honouring valid lengths."""
    losses = np.asarray(losses, dtype=np.float64)
    B, T = losses.shape
    if lengths is None:
        lengths = np.full(B, T)
    valid = np.arange(T)[None, :] < np.asarray(lengths)[:, None]
    above = (losses > eps) & valid
    first = np.argmax(above, axis=1)
    fallback = np.argmax(np.where(valid, losses, -np.inf), axis=1)
    return np.where(above.any(axis=1), first, fallback)


def _mask_for(shape, mask, dtype):
    if mask is None:
        return np.ones(shape, dtype)
    mask = np.asarray(mask, dtype=dtype)
    if mask.shape != shape:
        raise ShapeError(f"mask shape {mask.shape} does not match scores {shape}")
    return mask


def step_errors(x, x_bar):
    """Per-step reconstruction error: feature mean of squared error, shape (B, T)."""
    x = np.asarray(x.data if isinstance(x, E.Tensor) else x)
    if x.shape != x_bar.shape:
        raise ShapeError(f"reconstruction: target shape {x.shape} != reconstruction shape {x_bar.shape}")
    return E.mean(E.square(x_bar - E.Tensor(x, dtype=x_bar.dtype)), axis=2)


def reconstruction_loss(x, x_bar, eps=0.1, mode=FAT, mask=None):
    """Return ``(loss, tau)``; tau holds 0-based FAT indices in fat mode, else None.

    In fat mode the selection is a constant index, so the gradient reaches
    ``x_bar`` only at the chosen step of each sequence.
    """
    errs = step_errors(x, x_bar)
    B, T = errs.shape
    m = _mask_for((B, T), mask, errs.dtype)
    if mode == FAT:
        tau = fat_indices(errs.data, eps, m.sum(axis=1).astype(int))
        picked = errs[np.arange(B), tau]
        return E.mean(picked), tau
    if mode == FULL_SUM:
        return E.mean(E.tsum(errs * m, axis=1)), None
    raise ContractError(f"unknown reconstruction mode {mode!r}")


def feature_disc_loss(y_real, y_fake, mask_real=None, mask_fake=None):
    m_r = _mask_for(y_real.shape, mask_real, y_real.dtype)
    m_f = _mask_for(y_fake.shape, mask_fake, y_fake.dtype)
    real = E.mean(E.tsum(E.square(1.0 - y_real) * m_r, axis=1))
    fake = E.mean(E.tsum(E.square(y_fake) * m_f, axis=1))
    return 0.5 * real + 0.5 * fake


def feature_gen_loss(y_fake, mask_fake=None):
    m_f = _mask_for(y_fake.shape, mask_fake, y_fake.dtype)
    return 0.5 * E.mean(E.tsum(E.square(1.0 - y_fake) * m_f, axis=1))


def feature_adv_losses(y_real, y_fake, mask_real=None, mask_fake=None):
    """(L_dx, L_fx) from per-step scores; sums over valid steps, means over the batch."""
    return feature_disc_loss(y_real, y_fake, mask_real, mask_fake), feature_gen_loss(y_fake, mask_fake)


def latent_disc_loss(y_prior, y_post):
    return 0.5 * E.mean(E.square(1.0 - y_prior)) + 0.5 * E.mean(E.square(y_post))


def latent_enc_loss(y_post):
    return 0.5 * E.mean(E.square(1.0 - y_post))


def latent_adv_losses(y_prior, y_post):
    """(L_dz, L_ez) from latent-discriminator scores on prior draws and encoder codes."""
    return latent_disc_loss(y_prior, y_post), latent_enc_loss(y_post)


def composite_eg_loss(lam, recon, l_ez, l_fx=None):
    """lam * recon + l_ez + l_fx; the encoder+generator objective. ``l_fx=None`` drops it."""
    if lam < 0:
        raise ContractError(f"lam must be >= 0, got {lam}")
    total = lam * recon + l_ez
    return total if l_fx is None else total + l_fx


def _value(x):
    if x is None:
        return None
    return float(x.data) if isinstance(x, E.Tensor) else float(x)


@dataclass
class LossBreakdown:
    recon: float
    fx: float | None
    dx: float | None
    ez: float
    dz: float
    lam: float
    tau: np.ndarray | None = None

    @property
    def composite(self):
        return self.lam * self.recon + self.ez + (self.fx or 0.0)

    @property
    def mean_tau(self):
        # reported 1-based, like fat_index
        return float(np.mean(self.tau) + 1) if self.tau is not None else float("nan")

    def values(self):
        return {"L_recon": self.recon, "L_fx": self.fx, "L_dx": self.dx, "L_ez": self.ez, "L_dz": self.dz}

    def finite(self):
        return all(v is None or np.isfinite(v) for v in self.values().values())

    @classmethod
    def from_tensors(cls, recon, fx, dx, ez, dz, lam, tau=None):
        return cls(_value(recon), _value(fx), _value(dx), _value(ez), _value(dz), lam, tau)
