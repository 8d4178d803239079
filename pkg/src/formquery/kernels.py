"""Hot numeric inner loops: numba-jitted kernels with a pure-numpy fallback.

The backend is chosen once at import time from the FORMQUERY_KERNELS env var
("numba" or "numpy"; default is numba when importable). Both variants of every
kernel remain importable so benchmarks/bench_kernels.py can compare them.
Results are deterministic within one backend; the two backends may differ in
the last ulp because numpy reductions use pairwise summation while the jitted
loops sum sequentially.
"""

import math
import os

import numpy as np
from scipy.special import erf

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)

_requested = os.environ.get("FORMQUERY_KERNELS", "auto").strip().lower() or "auto"
if _requested not in ("auto", "numba", "numpy"):
    raise ValueError(
        f"FORMQUERY_KERNELS must be 'numba' or 'numpy', got {_requested!r}"
    )

_numba_ok = False
if _requested != "numpy":
    try:
        from numba import njit

        _numba_ok = True
    except ImportError:
        if _requested == "numba":
            raise
        _numba_ok = False

BACKEND = "numba" if _numba_ok else "numpy"


# --- numpy variants ---------------------------------------------------------


def _softmax_rows_numpy(x):
    m = x.max(axis=1, keepdims=True)
    e = np.exp(x - m)
    return e / e.sum(axis=1, keepdims=True)


def _softmax_rows_bwd_numpy(p, g):
    inner = (p * g).sum(axis=1, keepdims=True)
    return p * (g - inner)


def _layernorm_rows_numpy(x, gain, bias, eps):
    mu = x.mean(axis=1)
    xc = x - mu[:, None]
    var = (xc * xc).mean(axis=1)
    rstd = 1.0 / np.sqrt(var + eps)
    y = xc * rstd[:, None] * gain + bias
    return y, mu, rstd


def _layernorm_rows_bwd_numpy(g, x, gain, mu, rstd):
    xhat = (x - mu[:, None]) * rstd[:, None]
    dgain = (g * xhat).sum(axis=0)
    dbias = g.sum(axis=0)
    dxhat = g * gain
    m1 = dxhat.mean(axis=1, keepdims=True)
    m2 = (dxhat * xhat).mean(axis=1, keepdims=True)
    dx = (dxhat - m1 - xhat * m2) * rstd[:, None]
    return dx, dgain, dbias


def _gelu_numpy(x):
    return 0.5 * x * (1.0 + erf(x * _INV_SQRT2))


def _gelu_bwd_numpy(g, x):
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    pdf = _INV_SQRT2PI * np.exp(-0.5 * x * x)
    return g * (cdf + x * pdf)


def _scatter_add_rows_numpy(table, ids, rows):
    np.add.at(table, ids, rows)


def _adam_update_numpy(p, g, m, v, t, lr, b1, b2, eps, wd):
    m *= b1
    m += (1.0 - b1) * g
    v *= b2
    v += (1.0 - b2) * (g * g)
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    step = (m / c1) / (np.sqrt(v / c2) + eps)
    if wd != 0.0:
        step = step + wd * p
    p -= lr * step


def _box_neighbors_numpy(boxes, eps, min_frac):
    x0, y0, x1, y1 = boxes[:, 0], boxes[:, 1], boxes[:, 2], boxes[:, 3]
    h = y1 - y0
    overlap = np.minimum(y1[:, None], y1[None, :]) - np.maximum(y0[:, None], y0[None, :])
    minh = np.minimum(h[:, None], h[None, :])
    gap = np.maximum(x0[:, None], x0[None, :]) - np.minimum(x1[:, None], x1[None, :])
    gap = np.maximum(gap, 0.0)
    adj = (overlap >= min_frac * minh) & (gap <= eps)
    np.fill_diagonal(adj, False)
    return adj


# --- numba variants (same math, explicit loops) -----------------------------

if _numba_ok:

    @njit(cache=True)
    def _softmax_rows_numba(x):
        n, d = x.shape
        out = np.empty((n, d))
        for i in range(n):
            m = x[i, 0]
            for j in range(1, d):
                if x[i, j] > m:
                    m = x[i, j]
            s = 0.0
            for j in range(d):
                e = np.exp(x[i, j] - m)
                out[i, j] = e
                s += e
            inv = 1.0 / s
            for j in range(d):
                out[i, j] *= inv
        return out

    @njit(cache=True)
    def _softmax_rows_bwd_numba(p, g):
        n, d = p.shape
        out = np.empty((n, d))
        for i in range(n):
            inner = 0.0
            for j in range(d):
                inner += p[i, j] * g[i, j]
            for j in range(d):
                out[i, j] = p[i, j] * (g[i, j] - inner)
        return out

    @njit(cache=True)
    def _layernorm_rows_numba(x, gain, bias, eps):
        n, d = x.shape
        y = np.empty((n, d))
        mu = np.empty(n)
        rstd = np.empty(n)
        for i in range(n):
            s = 0.0
            for j in range(d):
                s += x[i, j]
            m = s / d
            ss = 0.0
            for j in range(d):
                c = x[i, j] - m
                ss += c * c
            r = 1.0 / np.sqrt(ss / d + eps)
            mu[i] = m
            rstd[i] = r
            for j in range(d):
                y[i, j] = (x[i, j] - m) * r * gain[j] + bias[j]
        return y, mu, rstd

    @njit(cache=True)
    def _layernorm_rows_bwd_numba(g, x, gain, mu, rstd):
        n, d = x.shape
        dx = np.empty((n, d))
        dgain = np.zeros(d)
        dbias = np.zeros(d)
        for i in range(n):
            m1 = 0.0
            m2 = 0.0
            for j in range(d):
                xhat = (x[i, j] - mu[i]) * rstd[i]
                dgain[j] += g[i, j] * xhat
                dbias[j] += g[i, j]
                dxh = g[i, j] * gain[j]
                m1 += dxh
                m2 += dxh * xhat
            m1 /= d
            m2 /= d
            for j in range(d):
                xhat = (x[i, j] - mu[i]) * rstd[i]
                dx[i, j] = (g[i, j] * gain[j] - m1 - xhat * m2) * rstd[i]
        return dx, dgain, dbias

    @njit(cache=True)
    def _gelu_numba(x):
        out = np.empty_like(x)
        flat_in = x.ravel()
        flat_out = out.ravel()
        for i in range(flat_in.size):
            v = flat_in[i]
            flat_out[i] = 0.5 * v * (1.0 + math.erf(v * _INV_SQRT2))
        return out

    @njit(cache=True)
    def _gelu_bwd_numba(g, x):
        out = np.empty_like(x)
        fg = g.ravel()
        fx = x.ravel()
        fo = out.ravel()
        for i in range(fx.size):
            v = fx[i]
            cdf = 0.5 * (1.0 + math.erf(v * _INV_SQRT2))
            pdf = _INV_SQRT2PI * np.exp(-0.5 * v * v)
            fo[i] = fg[i] * (cdf + v * pdf)
        return out

    @njit(cache=True)
    def _scatter_add_rows_numba(table, ids, rows):
        d = table.shape[1]
        for i in range(ids.shape[0]):
            r = ids[i]
            for j in range(d):
                table[r, j] += rows[i, j]

    @njit(cache=True)
    def _adam_update_numba(p, g, m, v, t, lr, b1, b2, eps, wd):
        c1 = 1.0 - b1**t
        c2 = 1.0 - b2**t
        for i in range(p.size):
            m[i] = b1 * m[i] + (1.0 - b1) * g[i]
            v[i] = b2 * v[i] + (1.0 - b2) * (g[i] * g[i])
            step = (m[i] / c1) / (np.sqrt(v[i] / c2) + eps)
            if wd != 0.0:
                step = step + wd * p[i]
            p[i] -= lr * step

    @njit(cache=True)
    def _box_neighbors_numba(boxes, eps, min_frac):
        n = boxes.shape[0]
        adj = np.zeros((n, n), dtype=np.bool_)
        for i in range(n):
            hi = boxes[i, 3] - boxes[i, 1]
            for j in range(i + 1, n):
                hj = boxes[j, 3] - boxes[j, 1]
                overlap = min(boxes[i, 3], boxes[j, 3]) - max(boxes[i, 1], boxes[j, 1])
                minh = min(hi, hj)
                gap = max(boxes[i, 0], boxes[j, 0]) - min(boxes[i, 2], boxes[j, 2])
                if gap < 0.0:
                    gap = 0.0
                if overlap >= min_frac * minh and gap <= eps:
                    adj[i, j] = True
                    adj[j, i] = True
        return adj

else:
    _softmax_rows_numba = None
    _softmax_rows_bwd_numba = None
    _layernorm_rows_numba = None
    _layernorm_rows_bwd_numba = None
    _gelu_numba = None
    _gelu_bwd_numba = None
    _scatter_add_rows_numba = None
    _adam_update_numba = None
    _box_neighbors_numba = None


VARIANTS = {
    "softmax_rows": {"numpy": _softmax_rows_numpy, "numba": _softmax_rows_numba},
    "softmax_rows_bwd": {"numpy": _softmax_rows_bwd_numpy, "numba": _softmax_rows_bwd_numba},
    "layernorm_rows": {"numpy": _layernorm_rows_numpy, "numba": _layernorm_rows_numba},
    "layernorm_rows_bwd": {"numpy": _layernorm_rows_bwd_numpy, "numba": _layernorm_rows_bwd_numba},
    "gelu": {"numpy": _gelu_numpy, "numba": _gelu_numba},
    "gelu_bwd": {"numpy": _gelu_bwd_numpy, "numba": _gelu_bwd_numba},
    "scatter_add_rows": {"numpy": _scatter_add_rows_numpy, "numba": _scatter_add_rows_numba},
    "adam_update": {"numpy": _adam_update_numpy, "numba": _adam_update_numba},
    "box_neighbors": {"numpy": _box_neighbors_numpy, "numba": _box_neighbors_numba},
}

_softmax_rows = VARIANTS["softmax_rows"][BACKEND]
_softmax_rows_bwd = VARIANTS["softmax_rows_bwd"][BACKEND]
_layernorm_rows = VARIANTS["layernorm_rows"][BACKEND]
_layernorm_rows_bwd = VARIANTS["layernorm_rows_bwd"][BACKEND]
_gelu = VARIANTS["gelu"][BACKEND]
_gelu_bwd = VARIANTS["gelu_bwd"][BACKEND]
_scatter_add_rows = VARIANTS["scatter_add_rows"][BACKEND]
_adam_update = VARIANTS["adam_update"][BACKEND]
_box_neighbors = VARIANTS["box_neighbors"][BACKEND]


# --- public wrappers (shape/dtype handling) ---------------------------------


def _as_rows(x):
    x = np.ascontiguousarray(x, dtype=np.float64)
    return x.reshape(-1, x.shape[-1]), x.shape


def softmax_rows(x: np.ndarray) -> np.ndarray:
    """Softmax over the last axis, stabilized by row-max subtraction."""
    flat, shape = _as_rows(x)
    return _softmax_rows(flat).reshape(shape)


def softmax_rows_bwd(p: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Backward of softmax_rows: p * (g - sum(p*g)) per row."""
    pf, shape = _as_rows(p)
    gf, _ = _as_rows(g)
    return _softmax_rows_bwd(pf, gf).reshape(shape)


def layernorm_rows(x, gain, bias, eps=1e-5):
    """Layer norm over the last axis. Returns (y, mean, rstd) with row stats."""
    flat, shape = _as_rows(x)
    gain = np.ascontiguousarray(gain, dtype=np.float64)
    bias = np.ascontiguousarray(bias, dtype=np.float64)
    y, mu, rstd = _layernorm_rows(flat, gain, bias, eps)
    return y.reshape(shape), mu.reshape(shape[:-1]), rstd.reshape(shape[:-1])


def layernorm_rows_bwd(g, x, gain, mu, rstd):
    """Backward of layernorm_rows. Returns (dx, dgain, dbias)."""
    gf, shape = _as_rows(g)
    xf, _ = _as_rows(x)
    gain = np.ascontiguousarray(gain, dtype=np.float64)
    dx, dgain, dbias = _layernorm_rows_bwd(
        gf, xf, gain, np.ascontiguousarray(mu.ravel()), np.ascontiguousarray(rstd.ravel())
    )
    return dx.reshape(shape), dgain, dbias


def gelu(x: np.ndarray) -> np.ndarray:
    """Exact (erf-based) GELU."""
    return _gelu(np.ascontiguousarray(x, dtype=np.float64))


def gelu_bwd(g: np.ndarray, x: np.ndarray) -> np.ndarray:
    return _gelu_bwd(
        np.ascontiguousarray(g, dtype=np.float64),
        np.ascontiguousarray(x, dtype=np.float64),
    )


def scatter_add_rows(table: np.ndarray, ids: np.ndarray, rows: np.ndarray) -> None:
    """In-place table[ids[i]] += rows[i]; duplicate ids accumulate in order."""
    _scatter_add_rows(table, np.ascontiguousarray(ids.ravel(), dtype=np.int64),
                      np.ascontiguousarray(rows.reshape(-1, table.shape[1])))


def adam_update(p, g, m, v, t, lr, b1, b2, eps, wd):
    """Fused in-place Adam step with bias correction and decoupled weight decay."""
    _adam_update(p.ravel(), np.ascontiguousarray(g.ravel()), m.ravel(), v.ravel(),
                 t, lr, b1, b2, eps, wd)


def box_neighbors(boxes: np.ndarray, eps: float, min_frac: float) -> np.ndarray:
    """Symmetric adjacency over word boxes (n,4): neighbors iff the vertical
    overlap is >= min_frac * min(height) and the horizontal edge gap <= eps."""
    boxes = np.ascontiguousarray(boxes, dtype=np.float64)
    return _box_neighbors(boxes, float(eps), float(min_frac))


def warmup() -> None:
    """Trigger JIT compilation of every kernel (no-op on the numpy backend)."""
    x = np.random.default_rng(0).normal(size=(4, 8))
    g = np.ones((4, 8))
    softmax_rows_bwd(softmax_rows(x), g)
    y, mu, rstd = layernorm_rows(x, np.ones(8), np.zeros(8))
    layernorm_rows_bwd(g, x, np.ones(8), mu, rstd)
    gelu_bwd(g, gelu(x))
    scatter_add_rows(np.zeros((3, 8)), np.array([0, 2, 2, 1]), np.ones((4, 8)))
    adam_update(x.copy(), g, np.zeros((4, 8)), np.zeros((4, 8)), 1, 1e-3, 0.9, 0.999, 1e-8, 0.0)
    box_neighbors(np.array([[0.0, 0.0, 10.0, 10.0], [12.0, 0.0, 20.0, 10.0]]), 5.0, 0.5)
