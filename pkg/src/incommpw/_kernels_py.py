"""Pure-numpy Hamiltonian fill kernel (fallback for the compiled extension).

Both backends share one contract: add the two layer-potential coupling terms to
a preinitialized (kinetic-diagonal) dense matrix and report coefficient misses.
Work is chunked over matrix rows to bound temporary memory at large N_c.
"""

import numpy as np


def _strides(shape):
    s = np.ones(len(shape), dtype=np.int64)
    for a in range(len(shape) - 2, -1, -1):
        s[a] = s[a + 1] * shape[a + 1]
    return s


def fill_potential_terms(H, m, n, v1_flat, v1_mask, v1_shape, v2_flat, v2_mask, v2_shape):
    """Add V1[(m - m')] where n == n' and V2[(n - n')] where m == m' to H.

    Parameters mirror the compiled kernel: ``v*_flat`` is the C-order raveled
    coefficient table over offsets [-D, D] per axis (shape ``v*_shape``), and
    ``v*_mask`` marks stored coefficients.  A coupling whose offset is unmasked
    or out of table range contributes 0 and counts as a miss.  Returns
    ``(miss1, miss2)``.
    """
    N, d = m.shape
    D1 = (np.asarray(v1_shape, dtype=np.int64) - 1) // 2
    D2 = (np.asarray(v2_shape, dtype=np.int64) - 1) // 2
    s1 = _strides(v1_shape)
    s2 = _strides(v2_shape)

    # Encode each d-vector of integer indices as a single key so "all axes
    # equal" reduces to one comparison.
    def encode(idx):
        lo = idx.min(axis=0)
        rng = idx.max(axis=0) - lo + 1
        st = _strides(rng)
        return (idx - lo) @ st

    mkey = encode(m)
    nkey = encode(n)

    miss1 = 0
    miss2 = 0
    chunk = max(1, min(N, 8_000_000 // max(1, N)))
    v1m = v1_mask.astype(bool)
    v2m = v2_mask.astype(bool)
    for i0 in range(0, N, chunk):
        i1 = min(i0 + chunk, N)

        same_n = nkey[i0:i1, None] == nkey[None, :]
        dm = m[i0:i1, None, :] - m[None, :, :]
        inr = np.all(np.abs(dm) <= D1, axis=2)
        idx = (np.clip(dm, -D1, D1) + D1) @ s1
        ok = inr & v1m[idx]
        H[i0:i1] += np.where(same_n & ok, v1_flat[idx], 0.0)
        miss1 += int(np.count_nonzero(same_n & ~ok))

        same_m = mkey[i0:i1, None] == mkey[None, :]
        dn = n[i0:i1, None, :] - n[None, :, :]
        inr = np.all(np.abs(dn) <= D2, axis=2)
        idx = (np.clip(dn, -D2, D2) + D2) @ s2
        ok = inr & v2m[idx]
        H[i0:i1] += np.where(same_m & ok, v2_flat[idx], 0.0)
        miss2 += int(np.count_nonzero(same_m & ~ok))

    return miss1, miss2
