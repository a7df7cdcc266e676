"""Fused GRU recurrence op and kernel backend selection.

The compiled kernel (``_gru_ext``) is used when it imports; otherwise the
numpy fallback runs.  ``FETSGAN_BACKEND=numpy`` forces the fallback.
"""
import os

import numpy as np

from ..errors import ContractError, ShapeError
from . import _gru_numpy
from .tensor import _accumulate, _make

try:
    from . import _gru_ext
except ImportError:  # extension not built
    _gru_ext = None

_KERNELS = {"numpy": _gru_numpy}
if _gru_ext is not None:
    _KERNELS["cython"] = _gru_ext

_active = {"name": None}


def available_backends():
    return sorted(_KERNELS)


def set_backend(name):
    if name not in _KERNELS:
        raise ContractError(f"backend {name!r} unavailable; choose from {available_backends()}")
    _active["name"] = name


def get_backend():
    return _active["name"]


def _kernel():
    return _KERNELS[_active["name"]]


_requested = os.environ.get("FETSGAN_BACKEND", "").strip().lower()
set_backend(_requested if _requested in _KERNELS else ("cython" if _gru_ext is not None else "numpy"))


def gru_recurrence(gx, wh, bh, mask=None, h0=None):
    """Run the GRU recurrence over batch-major input projections.

    ``gx`` is (B, T, 3H) holding ``x @ Wx + bx``; returns hidden states
    (B, T, H).  Where ``mask[b, t]`` is 0 the state is carried unchanged.
    """
    B, T, H3 = gx.shape
    H = H3 // 3
    if wh.shape != (H, H3) or bh.shape != (H3,):
        raise ShapeError(f"gru: recurrent weight {wh.shape} / bias {bh.shape} do not fit projections {gx.shape}")
    dtype = gx.data.dtype
    if mask is None:
        mask_tm = np.ones((T, B), dtype)
    else:
        mask = np.asarray(mask)
        if mask.shape != (B, T):
            raise ShapeError(f"gru: mask shape {mask.shape} does not match input {gx.shape[:2]}")
        mask_tm = np.ascontiguousarray(mask.T, dtype=dtype)
    h0_data = np.zeros((B, H), dtype) if h0 is None else np.ascontiguousarray(h0.data, dtype)
    kernel = _kernel()
    gx_tm = np.ascontiguousarray(gx.data.transpose(1, 0, 2))
    hs, cache = kernel.gru_forward(gx_tm, wh.data, bh.data, h0_data, mask_tm)
    parents = (gx, wh, bh) if h0 is None else (gx, wh, bh, h0)

    def bw(g):
        dhs = np.ascontiguousarray(g.transpose(1, 0, 2), dtype=dtype)
        dgx, dwh, dbh, dh0 = kernel.gru_backward(dhs, wh.data, h0_data, mask_tm, hs, cache)
        _accumulate(gx, dgx.transpose(1, 0, 2))
        _accumulate(wh, dwh)
        _accumulate(bh, dbh)
        if h0 is not None:
            _accumulate(h0, dh0)

    return _make(hs.transpose(1, 0, 2), parents, bw)


def gru_step(x_proj, h, wh, bh):
    """Single inference step on raw arrays: (B, 3H) projections, (B, H) state."""
    B, H = h.shape
    mask = np.ones((1, B), h.dtype)
    hs, _ = _kernel().gru_forward(np.ascontiguousarray(x_proj[None]), wh, bh,
                                  np.ascontiguousarray(h), mask)
    return hs[0]
