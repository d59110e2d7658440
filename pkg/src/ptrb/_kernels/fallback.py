"""Pure numpy versions of the compiled kernels.

Semantics match ``_ckernels`` exactly; only the floating-point summation
order over the state dimension may differ.
"""

import numpy as np


def scan_forward(u, delta, A, Bm, C, skip, save_states, decay=None):
    nb, L, D = u.shape
    S = A.shape[1]
    state = np.zeros((nb, D, S))
    y = np.empty((nb, L, D))
    hs = np.empty((nb, L, D, S)) if save_states else None
    bad = -1
    for t in range(L):
        a = delta[:, t, :, None]
        dab = np.exp(a * A) if decay is None else decay[:, t]
        state = dab * state + a * Bm[:, t, None, :] * u[:, t, :, None]
        if bad < 0 and not np.isfinite(state).all():
            bad = t
        if save_states:
            hs[:, t] = state
        y[:, t] = np.einsum("bds,bs->bd", state, C[:, t]) + skip * u[:, t]
    return y, hs, bad


def scan_backward(gy, u, delta, A, Bm, C, skip, hs, decay=None):
    nb, L, D = u.shape
    S = A.shape[1]
    du = np.empty_like(u)
    ddelta = np.empty_like(u)
    dA = np.zeros_like(A)
    dB = np.empty_like(Bm)
    dC = np.empty_like(C)
    carry = np.zeros((nb, D, S))
    for t in range(L - 1, -1, -1):
        a = delta[:, t, :, None]
        uu = u[:, t, :, None]
        g = gy[:, t, :, None]
        adj = C[:, t, None, :] * g + carry
        dC[:, t] = np.einsum("bd,bds->bs", gy[:, t], hs[:, t])
        hprev = hs[:, t - 1] if t > 0 else np.zeros((nb, D, S))
        dab = np.exp(a * A) if decay is None else decay[:, t]
        gdab = adj * hprev * dab
        bt = Bm[:, t, None, :]
        ddelta[:, t] = (gdab * A + adj * bt * uu).sum(-1)
        dA += (gdab * a).sum(0)
        dB[:, t] = (adj * a * uu).sum(1)
        du[:, t] = (adj * a * bt).sum(-1) + skip * gy[:, t]
        carry = adj * dab
    dskip = (gy * u).sum((0, 1))
    return du, ddelta, dA, dB, dC, dskip


def scan_chunked(u, delta, A, Bm, C, skip, chunk=16):
    """Chunk-parallel scan evaluation (forward only).

    Inside a chunk the state is a weighted sum of the chunk inputs with
    decay factors exp(A * (cumdelta[t] - cumdelta[k])), plus the decayed
    carry-in state. Cost per chunk is O(chunk^2) instead of a sequential loop.
    """
    nb, L, D = u.shape
    S = A.shape[1]
    y = np.empty((nb, L, D))
    state = np.zeros((nb, D, S))
    for start in range(0, L, chunk):
        sl = slice(start, min(start + chunk, L))
        dl = delta[:, sl]                                   # b c d
        cum = np.cumsum(dl, axis=1)                         # b c d
        x = dl[..., None] * Bm[:, sl, None, :] * u[:, sl, :, None]  # b c d s
        # decay from step k (exclusive) to step t (inclusive): exp(A*(cum[t]-cum[k]))
        diff = cum[:, :, None, :] - cum[:, None, :, :]      # b t k d
        c = dl.shape[1]
        causal = np.tril(np.ones((c, c), dtype=bool))
        diff = np.where(causal[None, :, :, None], diff, 0.0)
        decay = np.exp(diff[..., None] * A)                 # b t k d s
        decay = np.where(causal[None, :, :, None, None], decay, 0.0)
        h = np.einsum("btkds,bkds->btds", decay, x)
        h = h + np.exp(cum[..., None] * A) * state[:, None]
        y[:, sl] = np.einsum("btds,bts->btd", h, C[:, sl]) + skip * u[:, sl]
        state = h[:, -1]
    return y


def fps(points, n_samples, seed_index):
    out = np.empty(n_samples, dtype=np.int64)
    mind = np.full(points.shape[0], np.inf)
    cur = seed_index
    for i in range(n_samples):
        out[i] = cur
        diff = points - points[cur]
        mind = np.minimum(mind, (diff * diff).sum(1))
        cur = int(np.argmax(mind))
    return out
