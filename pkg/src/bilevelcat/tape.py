"""Reverse-mode automatic differentiation over scalars and flat vectors.

A `Tape` records every operation as an append-only node list; `backward`
sweeps it once in reverse to produce the gradient of a scalar output with
respect to every node. This is enough to differentiate an unrolled
adaptation loop end to end without a framework dependency.

Values are python floats or 1-D float arrays. Binary operations broadcast a
scalar against a vector; gradients accumulate by summation on fan-out.
Raw floats/arrays passed where a `Var` is expected are treated as constants
and receive no gradient.

Beyond the public primitive set (`add, sub, mul, div, neg, exp, log,
sigmoid, tanh, relu, max, sum, dot`) the tape provides a few fused nodes
(`matvec`, `matvec_t`, `masked_softmax`, `entropy`, `clip`,
`straight_through`) used to keep training graphs small; each has the same
recording/backward contract as the primitives.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ArgumentError, DomainError, NumericError, StateError

PRIMITIVE_KINDS = (
    "add", "sub", "mul", "div", "neg", "exp", "log",
    "sigmoid", "tanh", "relu", "max", "sum", "dot",
)


class Var:
    """Handle to one tape node: the tape plus a node index."""

    __slots__ = ("tape", "index")

    def __init__(self, tape: "Tape", index: int):
        self.tape = tape
        self.index = index

    @property
    def value(self):
        return self.tape._values[self.index]

    def __repr__(self):
        return f"Var(index={self.index}, value={self.value!r})"

    def __add__(self, other):
        return self.tape.add(self, other)

    def __radd__(self, other):
        return self.tape.add(other, self)

    def __sub__(self, other):
        return self.tape.sub(self, other)

    def __rsub__(self, other):
        return self.tape.sub(other, self)

    def __mul__(self, other):
        return self.tape.mul(self, other)

    def __rmul__(self, other):
        return self.tape.mul(other, self)

    def __truediv__(self, other):
        return self.tape.div(self, other)

    def __rtruediv__(self, other):
        return self.tape.div(other, self)

    def __neg__(self):
        return self.tape.neg(self)


def _unbroadcast(g, ref_value):
    """Reduce an upstream gradient to the shape of the parent it flows to."""
    if isinstance(g, np.ndarray) and not isinstance(ref_value, np.ndarray):
        return float(g.sum())
    return g


class Tape:
    """Append-only record of a differentiable computation."""

    def __init__(self):
        self._values: list = []
        self._backwards: list = []

    def __len__(self) -> int:
        return len(self._values)

    # -- recording ---------------------------------------------------------

    def _normalize(self, value):
        if isinstance(value, np.ndarray):
            if value.ndim == 0:
                return float(value)
            if value.ndim != 1:
                raise ArgumentError("tape values must be scalars or flat vectors")
            return value.astype(float, copy=False)
        return float(value)

    def _push(self, kind: str, value, backward) -> Var:
        value = self._normalize(value)
        if isinstance(value, np.ndarray):
            if not np.isfinite(value).all():
                raise NumericError(f"{kind} produced a non-finite value")
        elif not math.isfinite(value):
            raise NumericError(f"{kind} produced a non-finite value")
        self._values.append(value)
        self._backwards.append(backward)
        return Var(self, len(self._values) - 1)

    def lift(self, value) -> Var:
        """Record a leaf holding a copy of `value`."""
        arr = np.array(value, dtype=float) if not np.isscalar(value) else value
        return self._push("lift", arr, None)

    def _val_idx(self, x):
        """(value, node index) for a Var, or (value, None) for a constant."""
        if isinstance(x, Var):
            if x.tape is not self:
                raise ArgumentError("arguments must live on the same tape")
            return self._values[x.index], x.index
        return self._normalize(x), None

    def _binary(self, kind, a, b, value_fn, back_a, back_b) -> Var:
        av, ai = self._val_idx(a)
        bv, bi = self._val_idx(b)
        out = value_fn(av, bv)
        if ai is None and bi is None:
            return self._push(kind, out, None)

        def back(g):
            contribs = []
            if ai is not None:
                contribs.append((ai, _unbroadcast(back_a(g, av, bv), av)))
            if bi is not None:
                contribs.append((bi, _unbroadcast(back_b(g, av, bv), bv)))
            return contribs

        return self._push(kind, out, back)

    def _unary(self, kind, a, value, back_fn) -> Var:
        av, ai = self._val_idx(a)
        if ai is None:
            return self._push(kind, value, None)
        return self._push(kind, value, lambda g: [(ai, back_fn(g))])

    # -- primitives ----------------------------------------------------------

    def add(self, a, b) -> Var:
        return self._binary(
            "add", a, b, lambda x, y: x + y,
            lambda g, x, y: g, lambda g, x, y: g,
        )

    def sub(self, a, b) -> Var:
        return self._binary(
            "sub", a, b, lambda x, y: x - y,
            lambda g, x, y: g, lambda g, x, y: -g,
        )

    def mul(self, a, b) -> Var:
        return self._binary(
            "mul", a, b, lambda x, y: x * y,
            lambda g, x, y: g * y, lambda g, x, y: g * x,
        )

    def div(self, a, b) -> Var:
        bv, _ = self._val_idx(b)
        if np.any(np.asarray(bv) == 0.0):
            raise DomainError("division by zero")
        return self._binary(
            "div", a, b, lambda x, y: x / y,
            lambda g, x, y: g / y, lambda g, x, y: -g * x / (y * y),
        )

    def neg(self, a) -> Var:
        av, _ = self._val_idx(a)
        return self._unary("neg", a, -av, lambda g: -g)

    def exp(self, a) -> Var:
        av, _ = self._val_idx(a)
        with np.errstate(over="ignore"):
            out = np.exp(av)
        return self._unary("exp", a, out, lambda g: g * out)

    def log(self, a) -> Var:
        av, _ = self._val_idx(a)
        if np.any(np.asarray(av) <= 0.0):
            raise DomainError("log requires a positive argument")
        return self._unary("log", a, np.log(av), lambda g: g / av)

    def sigmoid(self, a) -> Var:
        av, _ = self._val_idx(a)
        if isinstance(av, np.ndarray):
            out = np.empty_like(av)
            pos = av >= 0
            out[pos] = 1.0 / (1.0 + np.exp(-av[pos]))
            ex = np.exp(av[~pos])
            out[~pos] = ex / (1.0 + ex)
        elif av >= 0:
            out = 1.0 / (1.0 + math.exp(-av))
        else:
            ex = math.exp(av)
            out = ex / (1.0 + ex)
        return self._unary("sigmoid", a, out, lambda g: g * out * (1.0 - out))

    def tanh(self, a) -> Var:
        av, _ = self._val_idx(a)
        out = np.tanh(av)
        return self._unary("tanh", a, out, lambda g: g * (1.0 - out * out))

    def relu(self, a) -> Var:
        av, _ = self._val_idx(a)
        gate = np.asarray(av) > 0
        out = np.where(gate, av, 0.0) if isinstance(av, np.ndarray) else (av if av > 0 else 0.0)
        return self._unary("relu", a, out, lambda g: g * gate)

    def max(self, a, b) -> Var:
        return self._binary(
            "max", a, b, np.maximum,
            lambda g, x, y: g * (np.asarray(x) >= np.asarray(y)),
            lambda g, x, y: g * (np.asarray(x) < np.asarray(y)),
        )

    def sum(self, a) -> Var:
        av, ai = self._val_idx(a)
        if not isinstance(av, np.ndarray):
            raise ArgumentError("sum expects a vector")
        return self._unary("sum", a, float(av.sum()), lambda g: np.full(len(av), g))

    def dot(self, a, b) -> Var:
        av, _ = self._val_idx(a)
        bv, _ = self._val_idx(b)
        if not (isinstance(av, np.ndarray) and isinstance(bv, np.ndarray)):
            raise ArgumentError("dot expects two vectors")
        if len(av) != len(bv):
            raise ArgumentError("dot arguments must have equal length")
        return self._binary(
            "dot", a, b, lambda x, y: float(x @ y),
            lambda g, x, y: g * y, lambda g, x, y: g * x,
        )

    def primitive(self, kind: str, *args) -> Var:
        """Dispatch one of the named primitive operations."""
        if kind not in PRIMITIVE_KINDS:
            raise ArgumentError(f"unknown primitive kind {kind!r}")
        return getattr(self, kind)(*args)

    # -- fused nodes ---------------------------------------------------------

    def matvec(self, w, x, rows: int, cols: int) -> Var:
        """Matrix-vector product; `w` is the row-major flattening of the matrix."""
        wv, wi = self._val_idx(w)
        xv, xi = self._val_idx(x)
        if len(wv) != rows * cols or len(xv) != cols:
            raise ArgumentError("matvec shape mismatch")
        mat = wv.reshape(rows, cols)
        out = mat @ xv

        def back(g):
            contribs = []
            if wi is not None:
                contribs.append((wi, np.outer(g, xv).ravel()))
            if xi is not None:
                contribs.append((xi, mat.T @ g))
            return contribs

        return self._push("matvec", out, back if (wi is not None or xi is not None) else None)

    def matvec_t(self, w, x, rows: int, cols: int) -> Var:
        """Transposed product: (matrix from `w`).T @ x, with x of length `rows`."""
        wv, wi = self._val_idx(w)
        xv, xi = self._val_idx(x)
        if len(wv) != rows * cols or len(xv) != rows:
            raise ArgumentError("matvec_t shape mismatch")
        mat = wv.reshape(rows, cols)
        out = mat.T @ xv

        def back(g):
            contribs = []
            if wi is not None:
                contribs.append((wi, np.outer(xv, g).ravel()))
            if xi is not None:
                contribs.append((xi, mat @ g))
            return contribs

        return self._push("matvec_t", out, back if (wi is not None or xi is not None) else None)

    def masked_softmax(self, logits, mask) -> Var:
        """Softmax over unmasked entries; masked entries get exactly 0.

        Subtracts the unmasked maximum before exponentiating for stability.
        """
        lv, li = self._val_idx(logits)
        mask = np.asarray(mask, dtype=bool)
        if not mask.any():
            raise StateError("masked_softmax requires at least one unmasked entry")
        z = np.zeros(len(lv))
        shifted = lv[mask] - lv[mask].max()
        z[mask] = np.exp(shifted)
        p = z / z.sum()

        def back(g):
            return [(li, p * (g - float(g @ p)))]

        return self._push("masked_softmax", p, back if li is not None else None)

    def entropy(self, probs) -> Var:
        """Shannon entropy -sum(p log p) with the 0 log 0 := 0 convention."""
        pv, pi = self._val_idx(probs)
        live = pv > 0.0
        logs = np.zeros(len(pv))
        logs[live] = np.log(pv[live])
        out = float(-(pv[live] @ logs[live]))

        def back(g):
            contrib = np.zeros(len(pv))
            contrib[live] = -g * (logs[live] + 1.0)
            return [(pi, contrib)]

        return self._push("entropy", out, back if pi is not None else None)

    def clip(self, a, lo: float, hi: float) -> Var:
        """Clamp values to [lo, hi]; gradient is zero in the clamped region."""
        av, ai = self._val_idx(a)
        out = np.clip(av, lo, hi)
        inside = (np.asarray(av) > lo) & (np.asarray(av) < hi)
        if not isinstance(av, np.ndarray):
            out = float(out)
        return self._unary("clip", a, out, lambda g: g * inside)

    def slice(self, a, start: int, stop: int) -> Var:
        """Contiguous subvector; the gradient scatters back into place."""
        av, ai = self._val_idx(a)
        if not isinstance(av, np.ndarray) or not 0 <= start < stop <= len(av):
            raise ArgumentError("slice bounds must select a nonempty subvector")
        out = av[start:stop].copy()

        def back(g):
            full = np.zeros(len(av))
            full[start:stop] = g
            return [(ai, full)]

        return self._push("slice", out, back if ai is not None else None)

    def index(self, a, i: int) -> Var:
        """One entry of a vector as a scalar Var."""
        av, ai = self._val_idx(a)
        if not isinstance(av, np.ndarray) or not 0 <= i < len(av):
            raise ArgumentError("index out of range")

        def back(g):
            full = np.zeros(len(av))
            full[i] = g
            return [(ai, full)]

        return self._push("index", float(av[i]), back if ai is not None else None)

    def straight_through(self, soft, hard_value) -> Var:
        """Forward the hard value; route the gradient to the soft parent unchanged."""
        _, si = self._val_idx(soft)
        if si is None:
            raise ArgumentError("straight_through needs a Var soft parent")
        return self._push(
            "straight_through",
            np.array(hard_value, dtype=float),
            lambda g: [(si, g)],
        )

    # -- batched fused nodes ---------------------------------------------------
    #
    # These treat a flat vector of length B*n as B stacked rows and apply the
    # same operation to every row, so one node covers a whole training batch.

    def tile(self, a, reps: int) -> Var:
        """Concatenate `reps` copies of a vector; gradients sum over copies."""
        av, ai = self._val_idx(a)
        if not isinstance(av, np.ndarray) or reps < 1:
            raise ArgumentError("tile expects a vector and reps >= 1")
        n = len(av)
        out = np.tile(av, reps)
        return self._push(
            "tile", out,
            (lambda g: [(ai, g.reshape(reps, n).sum(axis=0))]) if ai is not None else None,
        )

    def repeat_each(self, a, reps: int) -> Var:
        """Repeat every entry `reps` times; gradients sum within each block."""
        av, ai = self._val_idx(a)
        if not isinstance(av, np.ndarray) or reps < 1:
            raise ArgumentError("repeat_each expects a vector and reps >= 1")
        n = len(av)
        out = np.repeat(av, reps)
        return self._push(
            "repeat_each", out,
            (lambda g: [(ai, g.reshape(n, reps).sum(axis=1))]) if ai is not None else None,
        )

    def block_sum(self, a, batch: int, width: int) -> Var:
        """Row sums of a (batch x width) stack, as a length-`batch` vector."""
        av, ai = self._val_idx(a)
        if not isinstance(av, np.ndarray) or len(av) != batch * width:
            raise ArgumentError("block_sum shape mismatch")
        out = av.reshape(batch, width).sum(axis=1)
        return self._push(
            "block_sum", out,
            (lambda g: [(ai, np.repeat(g, width))]) if ai is not None else None,
        )

    def batched_matvec(self, w, x, batch: int, rows: int, cols: int) -> Var:
        """Apply one (rows x cols) matrix to a stack of `batch` input rows."""
        wv, wi = self._val_idx(w)
        xv, xi = self._val_idx(x)
        if len(wv) != rows * cols or len(xv) != batch * cols:
            raise ArgumentError("batched_matvec shape mismatch")
        mat = wv.reshape(rows, cols)
        xmat = xv.reshape(batch, cols)
        out = (xmat @ mat.T).ravel()

        def back(g):
            gmat = g.reshape(batch, rows)
            contribs = []
            if wi is not None:
                contribs.append((wi, (gmat.T @ xmat).ravel()))
            if xi is not None:
                contribs.append((xi, (gmat @ mat).ravel()))
            return contribs

        return self._push("batched_matvec", out, back if (wi is not None or xi is not None) else None)

    def batched_matvec_t(self, w, x, batch: int, rows: int, cols: int) -> Var:
        """Apply the transposed matrix to a stack of `batch` rows of length `rows`."""
        wv, wi = self._val_idx(w)
        xv, xi = self._val_idx(x)
        if len(wv) != rows * cols or len(xv) != batch * rows:
            raise ArgumentError("batched_matvec_t shape mismatch")
        mat = wv.reshape(rows, cols)
        xmat = xv.reshape(batch, rows)
        out = (xmat @ mat).ravel()

        def back(g):
            gmat = g.reshape(batch, cols)
            contribs = []
            if wi is not None:
                contribs.append((wi, (xmat.T @ gmat).ravel()))
            if xi is not None:
                contribs.append((xi, (gmat @ mat.T).ravel()))
            return contribs

        return self._push("batched_matvec_t", out, back if (wi is not None or xi is not None) else None)

    def batched_masked_softmax(self, logits, mask) -> Var:
        """Row-wise masked softmax over a (batch x width) stack."""
        lv, li = self._val_idx(logits)
        mask = np.asarray(mask, dtype=bool)
        batch, width = mask.shape
        if len(lv) != batch * width:
            raise ArgumentError("batched_masked_softmax shape mismatch")
        if not mask.any(axis=1).all():
            raise StateError("every row needs at least one unmasked entry")
        lmat = lv.reshape(batch, width)
        shifted = np.where(mask, lmat, -np.inf)
        shifted = shifted - shifted.max(axis=1, keepdims=True)
        z = np.where(mask, np.exp(shifted), 0.0)
        p = z / z.sum(axis=1, keepdims=True)

        def back(g):
            gmat = g.reshape(batch, width)
            inner = (gmat * p).sum(axis=1, keepdims=True)
            return [(li, (p * (gmat - inner)).ravel())]

        return self._push("batched_masked_softmax", p.ravel(), back if li is not None else None)

    def batched_entropy(self, probs, batch: int, width: int) -> Var:
        """Row-wise Shannon entropy of a (batch x width) stack of distributions."""
        pv, pi = self._val_idx(probs)
        if len(pv) != batch * width:
            raise ArgumentError("batched_entropy shape mismatch")
        pmat = pv.reshape(batch, width)
        live = pmat > 0.0
        logs = np.zeros_like(pmat)
        logs[live] = np.log(pmat[live])
        out = -(pmat * logs).sum(axis=1)

        def back(g):
            contrib = np.zeros_like(pmat)
            contrib[live] = -(logs[live] + 1.0)
            contrib *= g[:, None]
            return [(pi, contrib.ravel())]

        return self._push("batched_entropy", out, back if pi is not None else None)

    # -- reverse sweep -------------------------------------------------------

    def backward(self, output: Var) -> list:
        """Gradient of a scalar `output` w.r.t. every node (0 for non-ancestors)."""
        if not isinstance(output, Var) or output.tape is not self:
            raise ArgumentError("output must be a Var on this tape")
        if isinstance(self._values[output.index], np.ndarray):
            raise ArgumentError("backward requires a scalar output")
        grads: list = [None] * len(self._values)
        grads[output.index] = 1.0
        for k in range(output.index, -1, -1):
            g = grads[k]
            back = self._backwards[k]
            if g is None or back is None:
                continue
            for parent, contrib in back(g):
                cur = grads[parent]
                if cur is None:
                    if isinstance(contrib, np.ndarray):
                        grads[parent] = contrib.copy() if contrib is g else contrib
                    else:
                        grads[parent] = float(contrib)
                elif isinstance(cur, np.ndarray):
                    cur += contrib
                else:
                    grads[parent] = cur + float(contrib)
        for k, g in enumerate(grads):
            if g is None:
                v = self._values[k]
                grads[k] = np.zeros(len(v)) if isinstance(v, np.ndarray) else 0.0
        return grads


def grad_check(fn, point, eps: float = 1e-5) -> float:
    """Max relative disagreement between reverse-mode and central differences.

    `fn(tape, x)` must build and return a scalar Var from the parameter
    vector `x`. The finite-difference probe reruns `fn` on fresh tapes at
    point +/- eps per coordinate, so it is independent of the recorded
    backward pass it is checking.
    """
    if not 0.0 < eps <= 1e-2:
        raise ArgumentError("eps must be in (0, 1e-2]")
    point = np.asarray(point, dtype=float)
    tape = Tape()
    x = tape.lift(point)
    out = fn(tape, x)
    g_ad = np.atleast_1d(tape.backward(out)[x.index]).astype(float)

    def value_at(p) -> float:
        t = Tape()
        v = fn(t, t.lift(p))
        val = v.value
        if isinstance(val, np.ndarray) or not math.isfinite(val):
            raise NumericError("fn must produce a finite scalar")
        return float(val)

    worst = 0.0
    for i in range(len(point)):
        bumped = point.copy()
        bumped[i] = point[i] + eps
        hi = value_at(bumped)
        bumped[i] = point[i] - eps
        lo = value_at(bumped)
        g_fd = (hi - lo) / (2.0 * eps)
        scale = max(1.0, abs(g_ad[i]), abs(g_fd))
        worst = max(worst, abs(g_ad[i] - g_fd) / scale)
    return worst
