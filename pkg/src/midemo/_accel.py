"""Hot inner loops, with numba kernels and a pure-numpy fallback.

The numba path is used when numba imports cleanly and ``MIDEMO_PURE_NUMPY``
is unset (or ``0``). Both paths produce identical results up to float
reassociation in the scatter-add of ``col2im``.
"""

import os

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

_FLAG = "MIDEMO_PURE_NUMPY"


def _want_numba():
    return os.environ.get(_FLAG, "0").strip().lower() in ("", "0", "false", "no")


try:
    if not _want_numba():
        raise ImportError("numba disabled via " + _FLAG)
    from numba import njit

    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False

BACKEND = "numba" if HAS_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# numpy reference path
# ---------------------------------------------------------------------------


def im2col_numpy(xp, kh, kw, out_h, out_w):
    """Patch matrix of one padded (C, H+kh-1, W+kw-1) map, shape (C*kh*kw, out_h*out_w)."""
    c = xp.shape[0]
    v = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, :out_h, :out_w]
    return v.transpose(0, 3, 4, 1, 2).reshape(c * kh * kw, out_h * out_w)


def col2im_numpy(cols, c, kh, kw, out_h, out_w):
    xp = np.zeros((c, out_h + kh - 1, out_w + kw - 1), dtype=cols.dtype)
    cols = cols.reshape(c, kh, kw, out_h, out_w)
    for i in range(kh):
        for j in range(kw):
            xp[:, i:i + out_h, j:j + out_w] += cols[:, i, j]
    return xp


def maxpool_forward_numpy(x, k):
    n, c, h, w = x.shape
    ho, wo = h // k, w // k
    blocks = x[:, :, :ho * k, :wo * k].reshape(n, c, ho, k, wo, k)
    blocks = blocks.transpose(0, 1, 2, 4, 3, 5).reshape(n, c, ho, wo, k * k)
    arg = blocks.argmax(axis=-1).astype(np.int64)
    out = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]
    return out, arg


def maxpool_backward_numpy(grad, arg, k, h, w):
    n, c, ho, wo = grad.shape
    blocks = np.zeros((n, c, ho, wo, k * k), dtype=grad.dtype)
    np.put_along_axis(blocks, arg[..., None], grad[..., None], axis=-1)
    blocks = blocks.reshape(n, c, ho, wo, k, k).transpose(0, 1, 2, 4, 3, 5)
    dx = np.zeros((n, c, h, w), dtype=grad.dtype)
    dx[:, :, :ho * k, :wo * k] = blocks.reshape(n, c, ho * k, wo * k)
    return dx


# ---------------------------------------------------------------------------
# numba path
# ---------------------------------------------------------------------------

if HAS_NUMBA:

    @njit(cache=True)
    def _im2col_kernel(xp, kh, kw, out_h, out_w, cols):
        c = xp.shape[0]
        for ch in range(c):
            for i in range(kh):
                for j in range(kw):
                    r = (ch * kh + i) * kw + j
                    for y in range(out_h):
                        base = y * out_w
                        for x in range(out_w):
                            cols[r, base + x] = xp[ch, y + i, x + j]

    @njit(cache=True)
    def _col2im_kernel(cols, kh, kw, out_h, out_w, xp):
        c = xp.shape[0]
        for ch in range(c):
            for i in range(kh):
                for j in range(kw):
                    r = (ch * kh + i) * kw + j
                    for y in range(out_h):
                        base = y * out_w
                        for x in range(out_w):
                            xp[ch, y + i, x + j] += cols[r, base + x]

    @njit(cache=True)
    def _maxpool_fwd_kernel(x, k, out, arg):
        n, c, ho, wo = out.shape
        for a in range(n):
            for b in range(c):
                for y in range(ho):
                    for z in range(wo):
                        best = x[a, b, y * k, z * k]
                        idx = 0
                        for i in range(k):
                            for j in range(k):
                                v = x[a, b, y * k + i, z * k + j]
                                if v > best:
                                    best = v
                                    idx = i * k + j
                        out[a, b, y, z] = best
                        arg[a, b, y, z] = idx

    @njit(cache=True)
    def _maxpool_bwd_kernel(grad, arg, k, dx):
        n, c, ho, wo = grad.shape
        for a in range(n):
            for b in range(c):
                for y in range(ho):
                    for z in range(wo):
                        idx = arg[a, b, y, z]
                        dx[a, b, y * k + idx // k, z * k + idx % k] += grad[a, b, y, z]

    def im2col(xp, kh, kw, out_h, out_w):
        cols = np.empty((xp.shape[0] * kh * kw, out_h * out_w), dtype=xp.dtype)
        _im2col_kernel(np.ascontiguousarray(xp), kh, kw, out_h, out_w, cols)
        return cols

    def col2im(cols, c, kh, kw, out_h, out_w):
        xp = np.zeros((c, out_h + kh - 1, out_w + kw - 1), dtype=cols.dtype)
        _col2im_kernel(np.ascontiguousarray(cols), kh, kw, out_h, out_w, xp)
        return xp

    def maxpool_forward(x, k):
        n, c, h, w = x.shape
        out = np.empty((n, c, h // k, w // k), dtype=x.dtype)
        arg = np.empty(out.shape, dtype=np.int64)
        _maxpool_fwd_kernel(np.ascontiguousarray(x), k, out, arg)
        return out, arg

    def maxpool_backward(grad, arg, k, h, w):
        dx = np.zeros((grad.shape[0], grad.shape[1], h, w), dtype=grad.dtype)
        _maxpool_bwd_kernel(np.ascontiguousarray(grad), arg, k, dx)
        return dx

else:
    im2col = im2col_numpy
    col2im = col2im_numpy
    maxpool_forward = maxpool_forward_numpy
    maxpool_backward = maxpool_backward_numpy
