"""Hot numeric kernels with a numba lane and a pure-numpy fallback.

The active lane is chosen once at import from the ``KGAUDIT_BACKEND``
environment variable: ``numba`` (default when importable) or ``numpy``.
``set_backend`` switches lanes at runtime, which the test suite and the
kernel benchmark use to compare both implementations.
"""

import os

import numpy as np

try:
    from numba import njit

    _NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _NUMBA_AVAILABLE = False

_use_numba = False


def available_backends() -> tuple[str, ...]:
    return ("numba", "numpy") if _NUMBA_AVAILABLE else ("numpy",)


def set_backend(name: str) -> None:
    """Select the kernel lane: 'numba', 'numpy' or 'auto'."""
    global _use_numba
    if name == "auto":
        _use_numba = _NUMBA_AVAILABLE
    elif name == "numba":
        if not _NUMBA_AVAILABLE:
            raise RuntimeError("numba backend requested but numba is not importable")
        _use_numba = True
    elif name == "numpy":
        _use_numba = False
    else:
        raise ValueError(f"unknown backend {name!r}")


def active_backend() -> str:
    return "numba" if _use_numba else "numpy"


# ---------------------------------------------------------------------------
# scatter-add: accumulate value rows into table rows (embedding-gradient path)

def _scatter_add_rows_np(out, ids, vals):
    np.add.at(out, ids, vals)


if _NUMBA_AVAILABLE:

    @njit(cache=True)
    def _scatter_add_rows_nb(out, ids, vals):  # pragma: no cover - jitted
        for k in range(ids.shape[0]):
            row = ids[k]
            for j in range(vals.shape[1]):
                out[row, j] += vals[k, j]


def scatter_add_rows(out: np.ndarray, ids: np.ndarray, vals: np.ndarray) -> None:
    """out[ids[k], :] += vals[k, :] with repeated ids accumulating."""
    if _use_numba:
        _scatter_add_rows_nb(out, ids, vals)
    else:
        _scatter_add_rows_np(out, ids, vals)


# ---------------------------------------------------------------------------
# weighted neighbor aggregation: out[b] = sum_s w[b,s] * values[ids[b,s]]

def _neighbor_weighted_sum_np(values, ids, weights):
    return np.einsum("bs,bsd->bd", weights, values[ids])


if _NUMBA_AVAILABLE:

    @njit(cache=True)
    def _neighbor_weighted_sum_nb(values, ids, weights):  # pragma: no cover
        n, m = ids.shape
        d = values.shape[1]
        out = np.zeros((n, d))
        for b in range(n):
            for s in range(m):
                w = weights[b, s]
                row = ids[b, s]
                for j in range(d):
                    out[b, j] += w * values[row, j]
        return out


def neighbor_weighted_sum(values: np.ndarray, ids: np.ndarray, weights: np.ndarray) -> np.ndarray:
    if _use_numba:
        return _neighbor_weighted_sum_nb(values, ids, weights)
    return _neighbor_weighted_sum_np(values, ids, weights)


def _neighbor_weighted_sum_bwd_np(gout, values, ids, weights):
    gvalues = np.zeros_like(values)
    np.add.at(gvalues, ids.ravel(), (weights[:, :, None] * gout[:, None, :]).reshape(-1, gout.shape[1]))
    gweights = np.einsum("bsd,bd->bs", values[ids], gout)
    return gvalues, gweights


if _NUMBA_AVAILABLE:

    @njit(cache=True)
    def _neighbor_weighted_sum_bwd_nb(gout, values, ids, weights):  # pragma: no cover
        n, m = ids.shape
        d = values.shape[1]
        gvalues = np.zeros_like(values)
        gweights = np.zeros((n, m))
        for b in range(n):
            for s in range(m):
                row = ids[b, s]
                w = weights[b, s]
                acc = 0.0
                for j in range(d):
                    g = gout[b, j]
                    gvalues[row, j] += w * g
                    acc += values[row, j] * g
                gweights[b, s] = acc
        return gvalues, gweights


def neighbor_weighted_sum_bwd(gout, values, ids, weights):
    """Gradients of neighbor_weighted_sum w.r.t. (values, weights)."""
    if _use_numba:
        return _neighbor_weighted_sum_bwd_nb(gout, values, ids, weights)
    return _neighbor_weighted_sum_bwd_np(gout, values, ids, weights)


# ---------------------------------------------------------------------------
# per-triple candidate-pool sizes over a CSR entity -> triples index

def _union_pool_sizes_py(indptr, indices, heads, tails):
    sizes = np.empty(len(heads), dtype=np.int64)
    for i in range(len(heads)):
        a = indices[indptr[heads[i]]:indptr[heads[i] + 1]]
        b = indices[indptr[tails[i]]:indptr[tails[i] + 1]]
        union = np.union1d(a, b)
        sizes[i] = union.size - 1  # the triple itself sits in both lists
    return sizes


if _NUMBA_AVAILABLE:

    @njit(cache=True)
    def _union_pool_sizes_nb(indptr, indices, heads, tails):  # pragma: no cover
        n = heads.shape[0]
        sizes = np.empty(n, dtype=np.int64)
        for i in range(n):
            a0, a1 = indptr[heads[i]], indptr[heads[i] + 1]
            b0, b1 = indptr[tails[i]], indptr[tails[i] + 1]
            count = 0
            p, q = a0, b0
            while p < a1 and q < b1:  # both occurrence lists are sorted
                x, y = indices[p], indices[q]
                if x < y:
                    p += 1
                elif y < x:
                    q += 1
                else:
                    p += 1
                    q += 1
                count += 1
            count += (a1 - p) + (b1 - q)
            sizes[i] = count - 1
        return sizes


def union_pool_sizes(indptr, indices, heads, tails):
    """|triples touching head_i or tail_i| - 1 (self excluded), per triple."""
    if _use_numba:
        return _union_pool_sizes_nb(indptr, indices, heads, tails)
    return _union_pool_sizes_py(indptr, indices, heads, tails)


def warmup() -> None:
    """Force JIT compilation of the numba lane on toy inputs."""
    if not _use_numba:
        return
    out = np.zeros((2, 3))
    ids = np.array([0, 1, 0], dtype=np.int64)
    scatter_add_rows(out, ids, np.ones((3, 3)))
    nids = np.array([[0, 1], [1, 1]], dtype=np.int64)
    w = np.ones((2, 2))
    res = neighbor_weighted_sum(out, nids, w)
    neighbor_weighted_sum_bwd(res, out, nids, w)
    union_pool_sizes(np.array([0, 2, 3], dtype=np.int64), np.array([0, 1, 0], dtype=np.int64),
                     np.array([0], dtype=np.int64), np.array([1], dtype=np.int64))


set_backend(os.environ.get("KGAUDIT_BACKEND", "auto"))
