"""Pure numpy GRU recurrence, time-major.

Input projections ``gx = x @ Wx + bx`` are computed by the caller; these
kernels only run the recurrence, which is the part that cannot be batched
over time.  Gate layout along the last axis is (reset, update, candidate).
Array shapes: gx (T, B, 3H), wh (H, 3H), bh (3H,), h0 (B, H), mask (T, B).
"""
import numpy as np


def _sigmoid(x):
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


def gru_forward(gx, wh, bh, h0, mask):
    T, B, H3 = gx.shape
    H = H3 // 3
    dtype = gx.dtype
    hs = np.empty((T, B, H), dtype)
    r = np.empty((T, B, H), dtype)
    z = np.empty((T, B, H), dtype)
    n = np.empty((T, B, H), dtype)
    ghn = np.empty((T, B, H), dtype)
    h = h0
    for t in range(T):
        gh = h @ wh
        gh += bh
        gxt = gx[t]
        r[t] = _sigmoid(gxt[:, :H] + gh[:, :H])
        z[t] = _sigmoid(gxt[:, H:2 * H] + gh[:, H:2 * H])
        ghn[t] = gh[:, 2 * H:]
        n[t] = np.tanh(gxt[:, 2 * H:] + r[t] * ghn[t])
        hn = n[t] + z[t] * (h - n[t])
        m = mask[t][:, None]
        h = h + m * (hn - h)
        hs[t] = h
    return hs, (r, z, n, ghn)


def gru_backward(dhs, wh, h0, mask, hs, cache):
    r, z, n, ghn = cache
    T, B, H = hs.shape
    dtype = hs.dtype
    dgx = np.empty((T, B, 3 * H), dtype)
    dwh = np.zeros_like(wh)
    dbh = np.zeros(3 * H, dtype)
    dh = np.zeros((B, H), dtype)
    for t in range(T - 1, -1, -1):
        dh = dh + dhs[t]
        m = mask[t][:, None]
        hprev = hs[t - 1] if t > 0 else h0
        dhn = m * dh
        zt, nt, rt = z[t], n[t], r[t]
        dn = dhn * (1.0 - zt)
        dz = dhn * (hprev - nt)
        dan = dn * (1.0 - nt * nt)
        dgh_n = dan * rt
        dar = dan * ghn[t] * rt * (1.0 - rt)
        daz = dz * zt * (1.0 - zt)
        dg = dgx[t]
        dg[:, :H] = dar
        dg[:, H:2 * H] = daz
        dg[:, 2 * H:] = dan
        dgh = np.concatenate([dar, daz, dgh_n], axis=1)
        dwh += hprev.T @ dgh
        dbh += dgh.sum(axis=0)
        dh = (1.0 - m) * dh + dhn * zt + dgh @ wh.T
    return dgx, dwh, dbh, dh
