"""Pure-Python kernel backend.

These are the reference implementations of the numeric hot spots: row
softmax, cross-entropy, layer normalization, fixed-order reductions, and
the Adam update. The compiled backend in ``_fast.pyx`` mirrors each
function line for line; both use the same loop order (row-major,
left-to-right accumulation) and the same libm calls, so the two backends
produce bit-identical float64 results. Keep the two files in sync: any
change to an expression here must be mirrored exactly in the .pyx file.

All functions take C-contiguous float64 ndarrays and trust the caller to
have validated shapes and values.
"""

import math

import numpy as np


def softmax_rows(x):
    """Row-wise softmax with max subtraction. Returns an (r, c) array."""
    r, c = x.shape
    xs = x.tolist()
    out = np.empty((r, c), dtype=np.float64)
    for i in range(r):
        row = xs[i]
        m = row[0]
        for j in range(1, c):
            if row[j] > m:
                m = row[j]
        ex = [0.0] * c
        s = 0.0
        for j in range(c):
            e = math.exp(row[j] - m)
            ex[j] = e
            s = s + e
        for j in range(c):
            out[i, j] = ex[j] / s
    return out


def softmax_rows_backward(y, dy):
    """Gradient of row softmax: dx = y * (dy - sum(dy * y) per row)."""
    r, c = y.shape
    ys = y.tolist()
    dys = dy.tolist()
    dx = np.empty((r, c), dtype=np.float64)
    for i in range(r):
        yr = ys[i]
        dr = dys[i]
        s = 0.0
        for j in range(c):
            s = s + dr[j] * yr[j]
        for j in range(c):
            dx[i, j] = yr[j] * (dr[j] - s)
    return dx


def cross_entropy_mean(logits, labels):
    """Mean negative log softmax probability of the labeled class.

    Returns (loss, probs) where probs is the (n, k) softmax of the logits,
    cached for the backward pass.
    """
    n, k = logits.shape
    xs = logits.tolist()
    probs = np.empty((n, k), dtype=np.float64)
    total = 0.0
    for i in range(n):
        row = xs[i]
        m = row[0]
        for j in range(1, k):
            if row[j] > m:
                m = row[j]
        ex = [0.0] * k
        s = 0.0
        for j in range(k):
            e = math.exp(row[j] - m)
            ex[j] = e
            s = s + e
        for j in range(k):
            probs[i, j] = ex[j] / s
        li = (m + math.log(s)) - row[labels[i]]
        total = total + li
    return total / n, probs


def cross_entropy_mean_backward(probs, labels, g):
    """Gradient of cross_entropy_mean with respect to the logits."""
    n, k = probs.shape
    ps = probs.tolist()
    scale = g / n
    dx = np.empty((n, k), dtype=np.float64)
    for i in range(n):
        pr = ps[i]
        lab = labels[i]
        for j in range(k):
            d = pr[j]
            if j == lab:
                d = d - 1.0
            dx[i, j] = d * scale
    return dx


def layer_norm_rows(x, gain, bias, eps):
    """Per-row normalization (population variance), then gain and bias.

    Returns (y, xhat, inv) where xhat is the normalized input before the
    affine transform and inv is the (r, 1) array of 1/sqrt(var + eps),
    both cached for the backward pass.
    """
    r, c = x.shape
    xs = x.tolist()
    gn = gain.tolist()[0]
    bs = bias.tolist()[0]
    y = np.empty((r, c), dtype=np.float64)
    xhat = np.empty((r, c), dtype=np.float64)
    inv = np.empty((r, 1), dtype=np.float64)
    for i in range(r):
        row = xs[i]
        s = 0.0
        for j in range(c):
            s = s + row[j]
        mu = s / c
        q = 0.0
        for j in range(c):
            d = row[j] - mu
            q = q + d * d
        var = q / c
        iv = 1.0 / math.sqrt(var + eps)
        inv[i, 0] = iv
        for j in range(c):
            xh = (row[j] - mu) * iv
            xhat[i, j] = xh
            y[i, j] = xh * gn[j] + bs[j]
    return y, xhat, inv


def layer_norm_rows_backward(xhat, inv, gain, dy):
    """Gradients of layer_norm_rows: returns (dx, dgain, dbias)."""
    r, c = xhat.shape
    xh = xhat.tolist()
    dys = dy.tolist()
    gn = gain.tolist()[0]
    dx = np.empty((r, c), dtype=np.float64)
    dgain = [0.0] * c
    dbias = [0.0] * c
    buf = [0.0] * c
    for i in range(r):
        xr = xh[i]
        dr = dys[i]
        iv = float(inv[i, 0])
        a = 0.0
        b = 0.0
        for j in range(c):
            dgain[j] = dgain[j] + dr[j] * xr[j]
            dbias[j] = dbias[j] + dr[j]
            dxh = dr[j] * gn[j]
            buf[j] = dxh
            a = a + dxh
            b = b + dxh * xr[j]
        am = a / c
        bm = b / c
        for j in range(c):
            dx[i, j] = ((buf[j] - am) - xr[j] * bm) * iv
    return (
        dx,
        np.array([dgain], dtype=np.float64),
        np.array([dbias], dtype=np.float64),
    )


def sum_all(x):
    """Full sum in row-major, left-to-right order. Returns a float."""
    s = 0.0
    for row in x.tolist():
        for v in row:
            s = s + v
    return s


def sum_rows(x):
    """Left-to-right sum of each row. Returns an (r, 1) array."""
    r, c = x.shape
    xs = x.tolist()
    out = np.empty((r, 1), dtype=np.float64)
    for i in range(r):
        row = xs[i]
        s = 0.0
        for j in range(c):
            s = s + row[j]
        out[i, 0] = s
    return out


def sum_cols(x):
    """Column sums, accumulated top to bottom. Returns a (1, c) array."""
    r, c = x.shape
    xs = x.tolist()
    acc = [0.0] * c
    for i in range(r):
        row = xs[i]
        for j in range(c):
            acc[j] = acc[j] + row[j]
    return np.array([acc], dtype=np.float64)


def mean_all(x):
    """Full mean: the fixed-order sum divided by the element count."""
    r, c = x.shape
    return sum_all(x) / (r * c)


def adam_step(w, g, m, v, mask, lr, b1, b2, eps, c1, c2):
    """One Adam update, in place on w, m and v.

    Entries whose mask is 0 are skipped entirely: the weight stays put and
    its first/second moment estimates are not advanced. c1 and c2 are the
    bias corrections (1 - b1**t and 1 - b2**t), computed by the caller so
    both backends see identical values.
    """
    r, c = w.shape
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
            w[i, j] = w[i, j] - (lr * mh) / (math.sqrt(vh) + eps)
