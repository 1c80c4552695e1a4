"""Eager reverse-mode automatic differentiation over 2-D float64 matrices.

An ExprGraph is an append-only list of operation nodes. Constructor
methods (add, matmul, softmax_rows, ...) evaluate immediately, cache the
result, and return an integer node id; inputs always have smaller ids, so
the node list is topologically ordered by construction. ``backward`` runs
one reverse sweep from a 1x1 loss node and returns a gradient matrix per
requested leaf.

Elementwise arithmetic and matrix products go through numpy (the same
BLAS for every backend); reductions, softmax, cross-entropy, layer
normalization and their gradients go through the selected kernel backend,
which fixes the accumulation order so results are reproducible bit for
bit.
"""

import numbers

import numpy as np

from . import kernels as K
from .errors import ContractError, InputError, ShapeError
from .matrix import Matrix

LAYER_NORM_EPS = 1e-5


class Node:
    __slots__ = ("op", "inputs", "out", "ctx", "vjp")

    def __init__(self, op, inputs, out, ctx=None, vjp=None):
        self.op = op
        self.inputs = inputs
        self.out = out
        self.ctx = ctx
        self.vjp = vjp


class ExprGraph:
    """A single differentiable expression, built eagerly node by node."""

    def __init__(self):
        self._nodes = []

    def __len__(self):
        return len(self._nodes)

    def _push(self, op, inputs, out, ctx=None, vjp=None):
        self._nodes.append(Node(op, inputs, out, ctx, vjp))
        return len(self._nodes) - 1

    def _node(self, i):
        if not isinstance(i, (int, np.integer)) or isinstance(i, bool):
            raise ContractError(f"node id must be an integer, got {type(i).__name__}")
        if i < 0 or i >= len(self._nodes):
            raise ContractError(f"node id {i} not in graph of {len(self._nodes)} nodes")
        return self._nodes[i]

    def value(self, i):
        """The cached output of node i, as a read-only Matrix."""
        v = self._node(i).out.view()
        v.flags.writeable = False
        return Matrix._wrap(v)

    def scalar(self, i):
        """The value of a 1x1 node as a plain float (finite or not)."""
        out = self._node(i).out
        if out.shape != (1, 1):
            raise ShapeError(f"scalar() requires a 1x1 node, got {out.shape}")
        return float(out[0, 0])

    # ----- leaves -----

    def leaf(self, m, name=None):
        """Add an input node holding a copy of matrix m."""
        if not isinstance(m, Matrix):
            m = Matrix(m)
        return self._push("leaf", (), m.a.copy(), name)

    def constant(self, m, name=None):
        """Leaf that shares the caller's array instead of copying it.

        Gradients flow to it exactly like a leaf; the caller promises not
        to mutate the matrix while this graph is still in use.
        """
        if not isinstance(m, Matrix):
            m = Matrix(m)
        return self._push("leaf", (), m.a, name)

    def custom(self, name, inputs, out, ctx, vjp):
        """Add a node with a caller-supplied backward rule.

        out is the precomputed float64 result. vjp(g, input_values, ctx)
        must return one gradient array (or None) per input, each matching
        that input's shape. Intended for fusing a fixed formula whose
        primitive expansion would dominate graph-building time.
        """
        inputs = tuple(inputs)
        for i in inputs:
            self._node(i)
        out = np.asarray(out, dtype=np.float64)
        if out.ndim != 2:
            raise ShapeError(f"custom op output must be 2-D, got {out.shape}")
        return self._push("custom:" + name, inputs, out, ctx, vjp=vjp)

    # ----- elementwise and structural operations -----

    def add(self, a, b):
        """Elementwise sum; b may also be a 1xc row vector added to every
        row of a."""
        av, bv = self._node(a).out, self._node(b).out
        if av.shape == bv.shape:
            return self._push("add", (a, b), av + bv)
        if bv.shape == (1, av.shape[1]):
            return self._push("add_rowvec", (a, b), av + bv)
        raise ShapeError(f"cannot add {av.shape} and {bv.shape}")

    def sub(self, a, b):
        av, bv = self._node(a).out, self._node(b).out
        if av.shape != bv.shape:
            raise ShapeError(f"cannot subtract {bv.shape} from {av.shape}")
        return self._push("sub", (a, b), av - bv)

    def mul(self, a, b):
        av, bv = self._node(a).out, self._node(b).out
        if av.shape != bv.shape:
            raise ShapeError(f"cannot multiply {av.shape} and {bv.shape} elementwise")
        return self._push("mul", (a, b), av * bv)

    def div(self, a, b):
        av, bv = self._node(a).out, self._node(b).out
        if av.shape != bv.shape:
            raise ShapeError(f"cannot divide {av.shape} by {bv.shape} elementwise")
        if np.any(bv == 0.0):
            raise InputError("division by a zero entry")
        return self._push("div", (a, b), av / bv)

    def scalar_mul(self, a, s):
        if not isinstance(s, numbers.Real) or not np.isfinite(float(s)):
            raise InputError(f"scalar multiplier must be a finite real, got {s!r}")
        s = float(s)
        return self._push("scalar_mul", (a,), self._node(a).out * s, s)

    def scale_by(self, a, s):
        """Multiply every entry of a by the value of 1x1 node s; the
        gradient flows into both operands."""
        sv = self._node(s).out
        if sv.shape != (1, 1):
            raise ShapeError(f"scale factor must be 1x1, got {sv.shape}")
        return self._push("scale_by", (a, s), self._node(a).out * sv[0, 0])

    def abs(self, a):
        return self._push("abs", (a,), np.abs(self._node(a).out))

    def square(self, a):
        av = self._node(a).out
        return self._push("square", (a,), av * av)

    def sqrt(self, a):
        av = self._node(a).out
        if np.any(av < 0.0):
            raise InputError("square root of a negative entry")
        return self._push("sqrt", (a,), np.sqrt(av))

    def relu(self, a):
        return self._push("relu", (a,), np.maximum(self._node(a).out, 0.0))

    def transpose(self, a):
        return self._push("transpose", (a,), np.ascontiguousarray(self._node(a).out.T))

    # ----- reductions -----

    def sum_rows(self, a):
        """Sum each row; r x c becomes r x 1."""
        return self._push("sum_rows", (a,), K.sum_rows(self._node(a).out))

    def sum_all(self, a):
        """Sum every entry; result is 1x1."""
        s = K.sum_all(self._node(a).out)
        return self._push("sum_all", (a,), np.array([[s]], dtype=np.float64))

    def mean_all(self, a):
        """Mean of every entry; result is 1x1."""
        s = K.mean_all(self._node(a).out)
        return self._push("mean_all", (a,), np.array([[s]], dtype=np.float64))

    # ----- linear algebra -----

    def matmul(self, a, b):
        av, bv = self._node(a).out, self._node(b).out
        if av.shape[1] != bv.shape[0]:
            raise ShapeError(f"cannot matrix-multiply {av.shape} by {bv.shape}")
        return self._push("matmul", (a, b), np.matmul(av, bv))

    def linear(self, x, w, b):
        """x @ w + b with b a 1xc row vector: the dense-layer staple,
        fused into one node. Equal bits to matmul followed by add."""
        xv = self._node(x).out
        wv = self._node(w).out
        bv = self._node(b).out
        if xv.shape[1] != wv.shape[0]:
            raise ShapeError(f"cannot matrix-multiply {xv.shape} by {wv.shape}")
        if bv.shape != (1, wv.shape[1]):
            raise ShapeError(
                f"bias must be (1, {wv.shape[1]}), got {bv.shape}"
            )
        return self._push("linear", (x, w, b), np.matmul(xv, wv) + bv)

    # ----- fused neural-network operations -----

    def softmax_rows(self, a):
        """Softmax over each row, computed with max subtraction."""
        return self._push("softmax_rows", (a,), K.softmax_rows(self._node(a).out))

    def cross_entropy_mean(self, logits, labels):
        """Mean over rows of -log softmax(logits)[label]; result is 1x1."""
        lv = self._node(logits).out
        n, k = lv.shape
        idx = np.asarray(labels, dtype=np.intp)
        if idx.ndim != 1 or idx.shape[0] != n:
            raise ShapeError(
                f"need one label per row: {n} rows, {idx.shape} labels"
            )
        if np.any(idx < 0) or np.any(idx >= k):
            raise InputError(f"label out of range for {k} classes")
        loss, probs = K.cross_entropy_mean(lv, idx)
        return self._push(
            "cross_entropy_mean",
            (logits,),
            np.array([[loss]], dtype=np.float64),
            (idx, probs),
        )

    def layer_norm_rows(self, x, gain, bias):
        """Normalize each row to zero mean and unit variance (population
        variance, epsilon 1e-5 inside the square root), then scale by gain
        and shift by bias, both 1xc."""
        xv = self._node(x).out
        r, c = xv.shape
        if c < 2:
            raise ShapeError(f"layer norm needs at least 2 columns, got {c}")
        gv, bv = self._node(gain).out, self._node(bias).out
        if gv.shape != (1, c) or bv.shape != (1, c):
            raise ShapeError(
                f"gain and bias must be (1, {c}), got {gv.shape} and {bv.shape}"
            )
        y, xhat, inv = K.layer_norm_rows(xv, gv, bv, LAYER_NORM_EPS)
        return self._push("layer_norm_rows", (x, gain, bias), y, (xhat, inv))

    def gather_rows(self, table, indices):
        """Select rows of a table by index; the backward pass scatter-adds
        gradients into the table."""
        tv = self._node(table).out
        idx = np.asarray(indices, dtype=np.intp)
        if idx.ndim != 1 or idx.shape[0] == 0:
            raise ShapeError("indices must be a non-empty 1-D sequence")
        if np.any(idx < 0) or np.any(idx >= tv.shape[0]):
            raise InputError(f"row index out of range for {tv.shape[0]} rows")
        return self._push("gather_rows", (table,), tv[idx].copy(), idx)

    def attention_context(self, q, k, v, n_seqs, n_heads, scale):
        """Scaled dot-product attention over a batch of equal-length
        sequences stacked row-wise.

        q, k and v are (n_seqs * len, d) matrices; rows i*len .. (i+1)*len
        belong to sequence i and attend only within it. Columns are split
        into n_heads contiguous blocks of d / n_heads, each attending
        independently. Returns the (n_seqs * len, d) context matrix with
        head outputs re-interleaved into the same column layout.
        """
        qv, kv, vv = self._node(q).out, self._node(k).out, self._node(v).out
        if not (qv.shape == kv.shape == vv.shape):
            raise ShapeError(
                f"q, k, v must share a shape: {qv.shape}, {kv.shape}, {vv.shape}"
            )
        t, d = qv.shape
        if n_seqs < 1 or t % n_seqs != 0:
            raise ShapeError(f"{t} rows do not split into {n_seqs} sequences")
        if n_heads < 1 or d % n_heads != 0:
            raise ShapeError(f"{d} columns do not split into {n_heads} heads")
        if not np.isfinite(float(scale)):
            raise InputError("attention scale must be finite")
        scale = float(scale)
        length = t // n_seqs
        dh = d // n_heads
        q4 = qv.reshape(n_seqs, length, n_heads, dh).transpose(0, 2, 1, 3)
        k4 = kv.reshape(n_seqs, length, n_heads, dh).transpose(0, 2, 1, 3)
        v4 = vv.reshape(n_seqs, length, n_heads, dh).transpose(0, 2, 1, 3)
        scores = np.matmul(q4, k4.transpose(0, 1, 3, 2)) * scale
        probs = K.softmax_rows(scores.reshape(n_seqs * n_heads * length, length))
        ctx4 = np.matmul(probs.reshape(n_seqs, n_heads, length, length), v4)
        out = np.ascontiguousarray(ctx4.transpose(0, 2, 1, 3)).reshape(t, d)
        return self._push(
            "attention_context",
            (q, k, v),
            out,
            (n_seqs, n_heads, length, dh, scale, probs),
        )

    # ----- differentiation -----

    def backward(self, loss, leaves):
        """Differentiate node ``loss`` with respect to the given leaf ids.

        Returns a dict mapping each requested leaf id to a Matrix of the
        same shape as the leaf; leaves the loss does not depend on get a
        zero matrix. abs contributes subgradient 0 at 0, relu derivative 0
        at 0.
        """
        loss_node = self._node(loss)
        if loss_node.out.shape != (1, 1):
            raise ContractError(
                f"loss must be 1x1 to differentiate, got {loss_node.out.shape}"
            )
        leaves = list(leaves)
        for lf in leaves:
            if self._node(lf).op != "leaf":
                raise ContractError(f"node {lf} is not a leaf")

        grads = {loss: np.ones((1, 1), dtype=np.float64)}

        def acc(i, g):
            if i in grads:
                grads[i] = grads[i] + g
            else:
                grads[i] = g

        for i in range(loss, -1, -1):
            if i not in grads:
                continue
            node = self._nodes[i]
            g = grads[i]
            op = node.op
            if op == "leaf":
                continue
            elif node.vjp is not None:
                gs = node.vjp(g, [self._nodes[j].out for j in node.inputs],
                              node.ctx)
                for j, gj in zip(node.inputs, gs):
                    if gj is not None:
                        acc(j, gj)
            elif op == "add":
                acc(node.inputs[0], g)
                acc(node.inputs[1], g)
            elif op == "add_rowvec":
                acc(node.inputs[0], g)
                acc(node.inputs[1], K.sum_cols(g))
            elif op == "sub":
                acc(node.inputs[0], g)
                acc(node.inputs[1], -g)
            elif op == "mul":
                a, b = node.inputs
                acc(a, g * self._nodes[b].out)
                acc(b, g * self._nodes[a].out)
            elif op == "div":
                a, b = node.inputs
                bv = self._nodes[b].out
                acc(a, g / bv)
                acc(b, -(g * node.out) / bv)
            elif op == "scalar_mul":
                acc(node.inputs[0], g * node.ctx)
            elif op == "scale_by":
                a, s = node.inputs
                av = self._nodes[a].out
                acc(a, g * self._nodes[s].out[0, 0])
                acc(s, np.array([[K.sum_all(g * av)]], dtype=np.float64))
            elif op == "abs":
                acc(node.inputs[0], g * np.sign(self._nodes[node.inputs[0]].out))
            elif op == "square":
                acc(node.inputs[0], g * (2.0 * self._nodes[node.inputs[0]].out))
            elif op == "sqrt":
                acc(node.inputs[0], g / (2.0 * node.out))
            elif op == "relu":
                av = self._nodes[node.inputs[0]].out
                acc(node.inputs[0], np.where(av > 0.0, g, 0.0))
            elif op == "transpose":
                acc(node.inputs[0], np.ascontiguousarray(g.T))
            elif op == "sum_rows":
                r, c = self._nodes[node.inputs[0]].out.shape
                acc(node.inputs[0], np.broadcast_to(g, (r, c)).copy())
            elif op == "sum_all":
                r, c = self._nodes[node.inputs[0]].out.shape
                acc(node.inputs[0], np.full((r, c), g[0, 0]))
            elif op == "mean_all":
                r, c = self._nodes[node.inputs[0]].out.shape
                acc(node.inputs[0], np.full((r, c), g[0, 0] / (r * c)))
            elif op == "matmul":
                a, b = node.inputs
                av, bv = self._nodes[a].out, self._nodes[b].out
                acc(a, np.matmul(g, bv.T))
                acc(b, np.matmul(av.T, g))
            elif op == "linear":
                x, w, b = node.inputs
                xv, wv = self._nodes[x].out, self._nodes[w].out
                acc(x, np.matmul(g, wv.T))
                acc(w, np.matmul(xv.T, g))
                acc(b, K.sum_cols(g))
            elif op == "softmax_rows":
                acc(node.inputs[0], K.softmax_rows_backward(node.out, g))
            elif op == "cross_entropy_mean":
                idx, probs = node.ctx
                acc(
                    node.inputs[0],
                    K.cross_entropy_mean_backward(probs, idx, float(g[0, 0])),
                )
            elif op == "layer_norm_rows":
                x, gain, bias = node.inputs
                xhat, inv = node.ctx
                dx, dgain, dbias = K.layer_norm_rows_backward(
                    xhat, inv, self._nodes[gain].out, g
                )
                acc(x, dx)
                acc(gain, dgain)
                acc(bias, dbias)
            elif op == "gather_rows":
                table = node.inputs[0]
                dt = np.zeros_like(self._nodes[table].out)
                np.add.at(dt, node.ctx, g)
                acc(table, dt)
            elif op == "attention_context":
                qn, kn, vn = node.inputs
                n_seqs, n_heads, length, dh, scale, probs = node.ctx
                t = n_seqs * length
                d = n_heads * dh

                def heads(a):
                    return a.reshape(n_seqs, length, n_heads, dh).transpose(
                        0, 2, 1, 3
                    )

                def flat(a4):
                    return np.ascontiguousarray(
                        a4.transpose(0, 2, 1, 3)
                    ).reshape(t, d)

                g4 = heads(g)
                p4 = probs.reshape(n_seqs, n_heads, length, length)
                q4 = heads(self._nodes[qn].out)
                k4 = heads(self._nodes[kn].out)
                v4 = heads(self._nodes[vn].out)
                dv4 = np.matmul(p4.transpose(0, 1, 3, 2), g4)
                dprobs = np.matmul(g4, v4.transpose(0, 1, 3, 2))
                dscores = K.softmax_rows_backward(
                    probs,
                    np.ascontiguousarray(
                        dprobs.reshape(n_seqs * n_heads * length, length)
                    ),
                )
                ds4 = dscores.reshape(n_seqs, n_heads, length, length) * scale
                dq4 = np.matmul(ds4, k4)
                dk4 = np.matmul(ds4.transpose(0, 1, 3, 2), q4)
                acc(qn, flat(dq4))
                acc(kn, flat(dk4))
                acc(vn, flat(dv4))
            else:
                raise ContractError(f"no backward rule for op {op!r}")

        result = {}
        for lf in leaves:
            if lf in grads:
                result[lf] = Matrix._wrap(np.ascontiguousarray(grads[lf]))
            else:
                result[lf] = Matrix._wrap(np.zeros_like(self._nodes[lf].out))
        return result


def finite_difference_gradient(f, w, h):
    """Central-difference gradient of a scalar function of a Matrix.

    Perturbs one entry at a time by +/- h and returns the matrix of
    (f(w + h e_ij) - f(w - h e_ij)) / (2 h). Test oracle; O(size) calls
    to f.
    """
    if not h > 0:
        raise InputError(f"step must be positive, got {h}")
    base = w.a
    out = np.empty_like(base)
    for i in range(base.shape[0]):
        for j in range(base.shape[1]):
            plus = base.copy()
            plus[i, j] += h
            minus = base.copy()
            minus[i, j] -= h
            out[i, j] = (f(Matrix._wrap(plus)) - f(Matrix._wrap(minus))) / (2.0 * h)
    return Matrix._wrap(out)
