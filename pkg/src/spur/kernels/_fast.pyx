# cython: language_level=3, boundscheck=False, wraparound=False, initializedcheck=False
"""Compiled kernel backend.

Line-for-line mirror of ``pyref.py``: same loop order, same left-to-right
accumulation, same libm calls, compiled with -ffp-contract=off so no
fused multiply-adds change the rounding. The two backends must stay
bit-identical; edit the two files together.
"""

import numpy as np

from libc.math cimport exp, log, sqrt


def softmax_rows(double[:, ::1] x):
    """Row-wise softmax with max subtraction. Returns an (r, c) array."""
    cdef Py_ssize_t r = x.shape[0]
    cdef Py_ssize_t c = x.shape[1]
    out_arr = np.empty((r, c), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef double m, s, e
    for i in range(r):
        m = x[i, 0]
        for j in range(1, c):
            if x[i, j] > m:
                m = x[i, j]
        s = 0.0
        for j in range(c):
            e = exp(x[i, j] - m)
            out[i, j] = e
            s = s + e
        for j in range(c):
            out[i, j] = out[i, j] / s
    return out_arr


def softmax_rows_backward(double[:, ::1] y, double[:, ::1] dy):
    """Gradient of row softmax: dx = y * (dy - sum(dy * y) per row)."""
    cdef Py_ssize_t r = y.shape[0]
    cdef Py_ssize_t c = y.shape[1]
    dx_arr = np.empty((r, c), dtype=np.float64)
    cdef double[:, ::1] dx = dx_arr
    cdef Py_ssize_t i, j
    cdef double s
    for i in range(r):
        s = 0.0
        for j in range(c):
            s = s + dy[i, j] * y[i, j]
        for j in range(c):
            dx[i, j] = y[i, j] * (dy[i, j] - s)
    return dx_arr


def cross_entropy_mean(double[:, ::1] logits, const Py_ssize_t[::1] labels):
    """Mean negative log softmax probability of the labeled class.

    Returns (loss, probs) where probs is the (n, k) softmax of the logits,
    cached for the backward pass.
    """
    cdef Py_ssize_t n = logits.shape[0]
    cdef Py_ssize_t k = logits.shape[1]
    probs_arr = np.empty((n, k), dtype=np.float64)
    cdef double[:, ::1] probs = probs_arr
    cdef Py_ssize_t i, j
    cdef double m, s, e, li
    cdef double total = 0.0
    for i in range(n):
        m = logits[i, 0]
        for j in range(1, k):
            if logits[i, j] > m:
                m = logits[i, j]
        s = 0.0
        for j in range(k):
            e = exp(logits[i, j] - m)
            probs[i, j] = e
            s = s + e
        for j in range(k):
            probs[i, j] = probs[i, j] / s
        li = (m + log(s)) - logits[i, labels[i]]
        total = total + li
    return total / (<double> n), probs_arr


def cross_entropy_mean_backward(double[:, ::1] probs,
                                const Py_ssize_t[::1] labels, double g):
    """Gradient of cross_entropy_mean with respect to the logits."""
    cdef Py_ssize_t n = probs.shape[0]
    cdef Py_ssize_t k = probs.shape[1]
    cdef double scale = g / (<double> n)
    dx_arr = np.empty((n, k), dtype=np.float64)
    cdef double[:, ::1] dx = dx_arr
    cdef Py_ssize_t i, j, lab
    cdef double d
    for i in range(n):
        lab = labels[i]
        for j in range(k):
            d = probs[i, j]
            if j == lab:
                d = d - 1.0
            dx[i, j] = d * scale
    return dx_arr


def layer_norm_rows(double[:, ::1] x, double[:, ::1] gain,
                    double[:, ::1] bias, double eps):
    """Per-row normalization (population variance), then gain and bias.

    Returns (y, xhat, inv) where xhat is the normalized input before the
    affine transform and inv is the (r, 1) array of 1/sqrt(var + eps),
    both cached for the backward pass.
    """
    cdef Py_ssize_t r = x.shape[0]
    cdef Py_ssize_t c = x.shape[1]
    y_arr = np.empty((r, c), dtype=np.float64)
    xhat_arr = np.empty((r, c), dtype=np.float64)
    inv_arr = np.empty((r, 1), dtype=np.float64)
    cdef double[:, ::1] y = y_arr
    cdef double[:, ::1] xhat = xhat_arr
    cdef double[:, ::1] inv = inv_arr
    cdef Py_ssize_t i, j
    cdef double s, mu, q, d, var, iv, xh
    for i in range(r):
        s = 0.0
        for j in range(c):
            s = s + x[i, j]
        mu = s / (<double> c)
        q = 0.0
        for j in range(c):
            d = x[i, j] - mu
            q = q + d * d
        var = q / (<double> c)
        iv = 1.0 / sqrt(var + eps)
        inv[i, 0] = iv
        for j in range(c):
            xh = (x[i, j] - mu) * iv
            xhat[i, j] = xh
            y[i, j] = xh * gain[0, j] + bias[0, j]
    return y_arr, xhat_arr, inv_arr


def layer_norm_rows_backward(double[:, ::1] xhat, double[:, ::1] inv,
                             double[:, ::1] gain, double[:, ::1] dy):
    """Gradients of layer_norm_rows: returns (dx, dgain, dbias)."""
    cdef Py_ssize_t r = xhat.shape[0]
    cdef Py_ssize_t c = xhat.shape[1]
    dx_arr = np.empty((r, c), dtype=np.float64)
    dgain_arr = np.zeros((1, c), dtype=np.float64)
    dbias_arr = np.zeros((1, c), dtype=np.float64)
    buf_arr = np.empty(c, dtype=np.float64)
    cdef double[:, ::1] dx = dx_arr
    cdef double[:, ::1] dgain = dgain_arr
    cdef double[:, ::1] dbias = dbias_arr
    cdef double[::1] buf = buf_arr
    cdef Py_ssize_t i, j
    cdef double iv, a, b, dxh, am, bm
    for i in range(r):
        iv = inv[i, 0]
        a = 0.0
        b = 0.0
        for j in range(c):
            dgain[0, j] = dgain[0, j] + dy[i, j] * xhat[i, j]
            dbias[0, j] = dbias[0, j] + dy[i, j]
            dxh = dy[i, j] * gain[0, j]
            buf[j] = dxh
            a = a + dxh
            b = b + dxh * xhat[i, j]
        am = a / (<double> c)
        bm = b / (<double> c)
        for j in range(c):
            dx[i, j] = ((buf[j] - am) - xhat[i, j] * bm) * iv
    return dx_arr, dgain_arr, dbias_arr


def sum_all(double[:, ::1] x):
    """Full sum in row-major, left-to-right order. Returns a float."""
    cdef Py_ssize_t r = x.shape[0]
    cdef Py_ssize_t c = x.shape[1]
    cdef Py_ssize_t i, j
    cdef double s = 0.0
    for i in range(r):
        for j in range(c):
            s = s + x[i, j]
    return s


def sum_rows(double[:, ::1] x):
    """Left-to-right sum of each row. Returns an (r, 1) array."""
    cdef Py_ssize_t r = x.shape[0]
    cdef Py_ssize_t c = x.shape[1]
    out_arr = np.empty((r, 1), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef double s
    for i in range(r):
        s = 0.0
        for j in range(c):
            s = s + x[i, j]
        out[i, 0] = s
    return out_arr


def sum_cols(double[:, ::1] x):
    """Column sums, accumulated top to bottom. Returns a (1, c) array."""
    cdef Py_ssize_t r = x.shape[0]
    cdef Py_ssize_t c = x.shape[1]
    out_arr = np.zeros((1, c), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    for i in range(r):
        for j in range(c):
            out[0, j] = out[0, j] + x[i, j]
    return out_arr


def mean_all(double[:, ::1] x):
    """Full mean: the fixed-order sum divided by the element count."""
    cdef Py_ssize_t r = x.shape[0]
    cdef Py_ssize_t c = x.shape[1]
    cdef Py_ssize_t i, j
    cdef double s = 0.0
    for i in range(r):
        for j in range(c):
            s = s + x[i, j]
    return s / (<double> (r * c))


def adam_step(double[:, ::1] w, double[:, ::1] g, double[:, ::1] m,
              double[:, ::1] v, double[:, ::1] mask, double lr, double b1,
              double b2, double eps, double c1, double c2):
    """One Adam update, in place on w, m and v.

    Entries whose mask is 0 are skipped entirely: the weight stays put and
    its first/second moment estimates are not advanced. c1 and c2 are the
    bias corrections (1 - b1**t and 1 - b2**t), computed by the caller so
    both backends see identical values.
    """
    cdef Py_ssize_t r = w.shape[0]
    cdef Py_ssize_t c = w.shape[1]
    cdef Py_ssize_t i, j
    cdef double gij, mij, vij, mh, vh
    for i in range(r):
        for j in range(c):
            if mask[i, j] == 0.0:
                continue
            gij = g[i, j]
            mij = b1 * m[i, j] + (1.0 - b1) * gij
            vij = b2 * v[i, j] + (1.0 - b2) * (gij * gij)
            m[i, j] = mij
            v[i, j] = vij
            mh = mij / c1
            vh = vij / c2
            w[i, j] = w[i, j] - (lr * mh) / (sqrt(vh) + eps)
