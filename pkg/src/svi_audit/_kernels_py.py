"""NumPy implementations of the numeric kernels.

Used when the compiled ``_kernels`` extension is unavailable, and as the
reference the extension is checked against.  Every function here must stay
bit-identical to its counterpart in ``_kernels.pyx``.
"""

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK = (1 << 64) - 1


def _mix(z):
    # splitmix64 finalizer; uint64 arithmetic wraps
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def _mix_int(z):
    z &= _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def stream_key(seed, stream):
    return _mix_int((seed & _MASK) ^ _mix_int(stream & _MASK))


def _raw(seed, stream, start, count):
    key = np.uint64(stream_key(seed, stream))
    ctr = np.arange(start + 1, start + 1 + count, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return _mix(key + ctr * _GOLDEN)


def uniforms(seed, stream, start, count):
    """``count`` doubles in [0, 1) at counters ``start .. start+count-1``."""
    x = _raw(seed, stream, start, count)
    return (x >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


def uniform(seed, stream, counter):
    key = stream_key(seed, stream)
    x = _mix_int(key + ((counter + 1) * 0x9E3779B97F4A7C15))
    return (x >> 11) * (1.0 / 9007199254740992.0)


def resample_indices(seed, stream, n, resamples):
    """Index matrix (resamples, n); counter for row r, column j is r*n + j."""
    x = _raw(seed, stream, 0, resamples * n)
    with np.errstate(over="ignore"):
        idx = ((x >> np.uint64(32)) * np.uint64(n)) >> np.uint64(32)
    return idx.astype(np.int64).reshape(resamples, n)


def bootstrap_means(data, seed, stream, resamples):
    data = np.ascontiguousarray(data, dtype=np.float64)
    n = data.shape[0]
    out = np.empty(resamples, dtype=np.float64)
    # chunked to bound memory on large resample counts
    chunk = max(1, 2_000_000 // max(n, 1))
    for r0 in range(0, resamples, chunk):
        r1 = min(resamples, r0 + chunk)
        x = _raw(seed, stream, r0 * n, (r1 - r0) * n)
        with np.errstate(over="ignore"):
            idx = (((x >> np.uint64(32)) * np.uint64(n)) >> np.uint64(32)).astype(np.int64)
        vals = data[idx].reshape(r1 - r0, n)
        # sequential left-to-right sum to match the compiled loop exactly
        acc = np.zeros(r1 - r0, dtype=np.float64)
        for j in range(n):
            acc += vals[:, j]
        out[r0:r1] = acc / n
    return out


def cochran_q(matrix):
    m = np.asarray(matrix, dtype=np.int64)
    n, k = m.shape
    cols = m.sum(axis=0)
    rows = m.sum(axis=1)
    total = int(cols.sum())
    denom = int((rows * (k - rows)).sum())
    if denom == 0:
        return 0.0
    num = k * int((cols * cols).sum()) - total * total
    return (k - 1) * num / denom


def cochran_q_many(stack):
    s = np.asarray(stack, dtype=np.int64)
    _, n, k = s.shape
    cols = s.sum(axis=1)
    rows = s.sum(axis=2)
    total = cols.sum(axis=1)
    denom = (rows * (k - rows)).sum(axis=1)
    num = k * (cols * cols).sum(axis=1) - total * total
    out = np.zeros(s.shape[0], dtype=np.float64)
    ok = denom > 0
    out[ok] = (k - 1) * num[ok] / denom[ok]
    return out


def mann_whitney_u(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    gt = (a[:, None] > b[None, :]).sum()
    eq = (a[:, None] == b[None, :]).sum()
    return float(gt) + 0.5 * float(eq)
