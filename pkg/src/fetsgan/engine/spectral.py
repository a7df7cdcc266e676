"""Spectral normalization by power iteration with persistent singular vectors."""
import numpy as np

from ..errors import ContractError
from .tensor import Tensor, _accumulate, _make

SIGMA_FLOOR = 1e-12


class SpectralNormState:
    """Left/right singular-vector estimates for one weight matrix."""

    def __init__(self, shape, rng=None, dtype=np.float64):
        rng = rng if rng is not None else np.random.default_rng(0)
        rows, cols = shape
        self.u = _unit(rng.normal(size=rows)).astype(dtype)
        self.v = _unit(rng.normal(size=cols)).astype(dtype)
        self.sigma = None


def _unit(x):
    return x / max(np.linalg.norm(x), SIGMA_FLOOR)


def power_iterate(w, state, iters):
    """Refine ``state.u``/``state.v`` in place and return the sigma estimate."""
    if iters < 1:
        raise ContractError(f"power_iters must be >= 1, got {iters}")
    w = np.asarray(w)
    u, v = state.u.astype(w.dtype), state.v.astype(w.dtype)
    for _ in range(iters):
        v = _unit(w.T @ u)
        u = _unit(w @ v)
    state.u, state.v = u, v
    state.sigma = float(u @ w @ v)
    return state.sigma


def spectral_normalize(w, power_iters=1, state=None, update=True):
    """Return ``w / sigma_max(w)`` with sigma estimated by power iteration.

    ``w`` may be a :class:`Tensor` (the result then joins the autodiff graph;
    u and v are treated as constants) or a plain 2-D array.  A matrix whose
    estimate falls under the floor, e.g. all zeros, is returned unchanged.
    With ``update=False`` the stored vectors are used as they are, so repeated
    inference calls see the same sigma.
    """
    as_array = not isinstance(w, Tensor)
    wt = Tensor(w, dtype=np.asarray(w).dtype) if as_array else w
    if wt.ndim != 2:
        raise ContractError(f"spectral_normalize needs a 2-D weight, got shape {wt.shape}")
    if state is None:
        state = SpectralNormState(wt.shape)
    if update:
        sigma = power_iterate(wt.data, state, power_iters)
    else:
        sigma = float(state.u.astype(wt.dtype) @ wt.data @ state.v.astype(wt.dtype))
    if sigma < SIGMA_FLOOR:
        return wt.data.copy() if as_array else wt
    u, v = state.u.astype(wt.dtype), state.v.astype(wt.dtype)
    w_data = wt.data

    def bw(g):
        inner = float(np.sum(g * w_data))
        _accumulate(wt, g / sigma - (inner / sigma ** 2) * np.outer(u, v))

    out = _make((w_data / sigma).astype(w_data.dtype), (wt,), bw)
    return out.data if as_array else out
