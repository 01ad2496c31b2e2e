"""Reverse-mode differentiation over dense float64 arrays.

A :class:`Tape` records every primitive application as a node (kind, input
ids, output value).  Nodes are appended in execution order, so the tape is
topologically sorted by construction and :meth:`Tape.backward` is a single
reverse sweep.

Tensors are plain ``numpy.ndarray`` values of dtype float64.  Shapes are
checked strictly: the only implicit broadcast is adding a bias row to the
rows of a matrix (or of each matrix in a batch).
"""

from __future__ import annotations

import numpy as np

from ..exceptions import ContractError, DimensionError, IndexRangeError

PRIMITIVES = (
    "matmul",
    "add",
    "sub",
    "mul",
    "tanh",
    "sigmoid",
    "softmax_masked",
    "concat",
    "gather_rows",
    "reduce_mean",
    "mse",
    "reshape",
    "transpose",
)


def _shape_error(kind, *shapes, detail=""):
    shown = ", ".join(str(tuple(s)) for s in shapes)
    msg = f"{kind}: incompatible shapes {shown}"
    if detail:
        msg += f" ({detail})"
    return DimensionError(msg)


def _as_tensor(value):
    arr = np.asarray(value, dtype=np.float64)
    return arr


# forward functions: (values, attrs) -> (output, ctx)
# backward functions: (grad_out, values, output, ctx, attrs, needs) -> list of grads


def _matmul_fwd(vals, attrs):
    a, b = vals
    if a.ndim != b.ndim or a.ndim not in (2, 3):
        raise _shape_error("matmul", a.shape, b.shape, detail="operands must both be 2-D or both 3-D")
    if a.shape[-1] != b.shape[-2] or a.shape[:-2] != b.shape[:-2]:
        raise _shape_error("matmul", a.shape, b.shape)
    return np.matmul(a, b), None


def _matmul_bwd(g, vals, out, ctx, attrs, needs):
    a, b = vals
    ga = np.matmul(g, np.swapaxes(b, -1, -2)) if needs[0] else None
    gb = np.matmul(np.swapaxes(a, -1, -2), g) if needs[1] else None
    return [ga, gb]


def _bias_axes(a_shape, b_shape):
    """Axes of ``a`` that ``b`` is summed over in the bias backward pass, or
    None when the shapes are not a permitted bias pairing."""
    if a_shape == b_shape:
        return ()
    if len(a_shape) >= 2 and b_shape == a_shape[-1:]:
        return tuple(range(len(a_shape) - 1))
    if (
        len(a_shape) == 3
        and len(b_shape) == 3
        and b_shape[1] == 1
        and b_shape[0] == a_shape[0]
        and b_shape[2] == a_shape[2]
    ):
        return (1,)
    return None


def _add_fwd(vals, attrs):
    a, b = vals
    axes = _bias_axes(a.shape, b.shape)
    if axes is None:
        raise _shape_error("add", a.shape, b.shape, detail="only equal shapes or a row bias are allowed")
    return a + b, axes


def _add_bwd(g, vals, out, ctx, attrs, needs):
    gb = None
    if needs[1]:
        gb = g.sum(axis=ctx, keepdims=len(vals[1].shape) == g.ndim) if ctx else g
    return [g if needs[0] else None, gb]


def _same_shape(kind, a, b):
    if a.shape != b.shape:
        raise _shape_error(kind, a.shape, b.shape)


def _sub_fwd(vals, attrs):
    a, b = vals
    _same_shape("sub", a, b)
    return a - b, None


def _sub_bwd(g, vals, out, ctx, attrs, needs):
    return [g if needs[0] else None, -g if needs[1] else None]


def _mul_fwd(vals, attrs):
    a, b = vals
    _same_shape("mul", a, b)
    return a * b, None


def _mul_bwd(g, vals, out, ctx, attrs, needs):
    a, b = vals
    return [g * b if needs[0] else None, g * a if needs[1] else None]


def _tanh_fwd(vals, attrs):
    return np.tanh(vals[0]), None


def _tanh_bwd(g, vals, out, ctx, attrs, needs):
    return [g * (1.0 - out * out)]


def sigmoid_array(x):
    # tanh form avoids exp overflow and gives exactly 0.5 at 0
    y = np.multiply(x, 0.5, dtype=np.float64)
    if not isinstance(y, np.ndarray):
        return 0.5 * (np.tanh(y) + 1.0)
    np.tanh(y, out=y)
    y += 1.0
    y *= 0.5
    return y


def _sigmoid_fwd(vals, attrs):
    return sigmoid_array(vals[0]), None


def _sigmoid_bwd(g, vals, out, ctx, attrs, needs):
    return [g * out * (1.0 - out)]


def _softmax_masked_fwd(vals, attrs):
    (x,) = vals
    mask = np.asarray(attrs["mask"])
    if mask.shape != x.shape:
        raise _shape_error("softmax_masked", x.shape, mask.shape, detail="mask must match logits")
    keep = mask > 0
    if not keep.any(axis=-1).all():
        raise ContractError("softmax_masked: a row has every position masked (sentence has no tokens)")
    z = np.where(keep, x, -np.inf)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True), None


def _softmax_masked_bwd(g, vals, out, ctx, attrs, needs):
    inner = (g * out).sum(axis=-1, keepdims=True)
    return [out * (g - inner)]


def _concat_fwd(vals, attrs):
    axis = attrs.get("axis", 0)
    try:
        out = np.concatenate(vals, axis=axis)
    except ValueError as exc:
        raise _shape_error("concat", *(v.shape for v in vals), detail=f"axis={axis}") from exc
    sizes = np.cumsum([v.shape[axis] for v in vals])[:-1]
    return out, sizes


def _concat_bwd(g, vals, out, ctx, attrs, needs):
    return np.split(g, ctx, axis=attrs.get("axis", 0))


def _gather_rows_fwd(vals, attrs):
    (m,) = vals
    axis = attrs.get("axis", 0)
    index = attrs["index"]
    if m.ndim < 2 or axis >= m.ndim - 1:
        raise _shape_error("gather_rows", m.shape, detail=f"axis={axis} must select rows of a matrix")
    if isinstance(index, slice):
        start, stop, step = index.indices(m.shape[axis])
        if step != 1 or stop <= start or index.stop is not None and index.stop > m.shape[axis]:
            raise IndexRangeError(f"gather_rows: slice {index} out of range for {m.shape[axis]} rows")
        sl = [slice(None)] * m.ndim
        sl[axis] = index
        return m[tuple(sl)], tuple(sl)
    index = np.asarray(index)
    if index.size and (index.min() < 0 or index.max() >= m.shape[axis]):
        bad = index[(index < 0) | (index >= m.shape[axis])][0]
        raise IndexRangeError(f"gather_rows: index {int(bad)} out of range for {m.shape[axis]} rows")
    return np.take(m, index, axis=axis), None


def _gather_rows_accumulate(buffer, g, ctx, attrs):
    if ctx is not None:
        buffer[ctx] += g
        return
    axis = attrs.get("axis", 0)
    index = np.asarray(attrs["index"])
    if axis == 0:
        np.add.at(buffer, index, g)
    else:
        np.add.at(np.moveaxis(buffer, axis, 0), index, np.moveaxis(g, axis, 0))


def _gather_rows_bwd(g, vals, out, ctx, attrs, needs):
    grad = np.zeros_like(vals[0])
    _gather_rows_accumulate(grad, g, ctx, attrs)
    return [grad]


def _reduce_mean_fwd(vals, attrs):
    return np.asarray(vals[0].mean()), None


def _reduce_mean_bwd(g, vals, out, ctx, attrs, needs):
    x = vals[0]
    return [np.full_like(x, g / x.size)]


def _mse_fwd(vals, attrs):
    p, y = vals
    _same_shape("mse", p, y)
    d = p - y
    return np.asarray(np.mean(d * d)), d


def _mse_bwd(g, vals, out, ctx, attrs, needs):
    d = ctx
    gp = g * 2.0 * d / d.size
    return [gp if needs[0] else None, -gp if needs[1] else None]


def _reshape_fwd(vals, attrs):
    (x,) = vals
    shape = tuple(attrs["shape"])
    if int(np.prod(shape)) != x.size:
        raise _shape_error("reshape", x.shape, shape)
    return x.reshape(shape), None


def _reshape_bwd(g, vals, out, ctx, attrs, needs):
    return [g.reshape(vals[0].shape)]


def _transpose_fwd(vals, attrs):
    (x,) = vals
    axes = tuple(attrs["axes"])
    if sorted(axes) != list(range(x.ndim)):
        raise _shape_error("transpose", x.shape, detail=f"axes={axes}")
    return np.transpose(x, axes), None


def _transpose_bwd(g, vals, out, ctx, attrs, needs):
    return [np.transpose(g, np.argsort(attrs["axes"]))]


_REGISTRY = {
    "matmul": (_matmul_fwd, _matmul_bwd, 2),
    "add": (_add_fwd, _add_bwd, 2),
    "sub": (_sub_fwd, _sub_bwd, 2),
    "mul": (_mul_fwd, _mul_bwd, 2),
    "tanh": (_tanh_fwd, _tanh_bwd, 1),
    "sigmoid": (_sigmoid_fwd, _sigmoid_bwd, 1),
    "softmax_masked": (_softmax_masked_fwd, _softmax_masked_bwd, 1),
    "concat": (_concat_fwd, _concat_bwd, None),
    "gather_rows": (_gather_rows_fwd, _gather_rows_bwd, 1),
    "reduce_mean": (_reduce_mean_fwd, _reduce_mean_bwd, 1),
    "mse": (_mse_fwd, _mse_bwd, 2),
    "reshape": (_reshape_fwd, _reshape_bwd, 1),
    "transpose": (_transpose_fwd, _transpose_bwd, 1),
}


def _lookup(kind, n_inputs):
    try:
        fwd, bwd, arity = _REGISTRY[kind]
    except KeyError:
        raise ContractError(f"unknown primitive {kind!r}; expected one of {PRIMITIVES}") from None
    if arity is not None and n_inputs != arity:
        raise ContractError(f"{kind}: expected {arity} inputs, got {n_inputs}")
    if arity is None and n_inputs == 0:
        raise ContractError(f"{kind}: needs at least one input")
    return fwd, bwd


def apply_primitive(kind, *inputs, **attrs):
    """Evaluate one primitive on plain arrays without recording anything."""
    fwd, _ = _lookup(kind, len(inputs))
    out, _ = fwd([_as_tensor(x) for x in inputs], attrs)
    return out


class Node:
    """Handle to a value recorded on a :class:`Tape`."""

    __slots__ = ("tape", "id")

    def __init__(self, tape, node_id):
        self.tape = tape
        self.id = node_id

    @property
    def value(self):
        return self.tape.values[self.id]

    @property
    def shape(self):
        return self.tape.values[self.id].shape

    @property
    def grad(self):
        return self.tape.grads[self.id] if self.tape.grads is not None else None

    def __add__(self, other):
        return self.tape.apply("add", self, other)

    def __sub__(self, other):
        return self.tape.apply("sub", self, other)

    def __mul__(self, other):
        return self.tape.apply("mul", self, other)

    def __matmul__(self, other):
        return self.tape.apply("matmul", self, other)

    def __repr__(self):
        return f"Node(id={self.id}, kind={self.tape.kinds[self.id]}, shape={self.shape})"


class Tape:
    """Ordered record of primitive applications.

    Leaves are created with :meth:`parameter` (differentiable, named) or
    :meth:`constant`.  A tape is meant for one forward/backward pass and is
    not thread-safe; use one tape per thread.
    """

    def __init__(self):
        self.kinds = []
        self.inputs = []
        self.values = []
        self.attrs = []
        self.ctxs = []
        self.requires = []
        self.params = {}
        self.grads = None

    def __len__(self):
        return len(self.values)

    def _push(self, kind, inputs, value, attrs, ctx, requires):
        self.kinds.append(kind)
        self.inputs.append(inputs)
        self.values.append(value)
        self.attrs.append(attrs)
        self.ctxs.append(ctx)
        self.requires.append(requires)
        return Node(self, len(self.values) - 1)

    def parameter(self, value, name):
        if name in self.params:
            raise ContractError(f"parameter {name!r} already on tape")
        node = self._push("param", (), _as_tensor(value), None, None, True)
        self.params[name] = node.id
        return node

    def constant(self, value):
        return self._push("const", (), _as_tensor(value), None, None, False)

    def _node(self, x):
        if isinstance(x, Node):
            if x.tape is not self:
                raise ContractError("node belongs to a different tape")
            return x
        return self.constant(x)

    def apply(self, kind, *inputs, **attrs):
        """Apply primitive ``kind`` and record it; returns the output node."""
        fwd, _ = _lookup(kind, len(inputs))
        nodes = [self._node(x) for x in inputs]
        ids = tuple(n.id for n in nodes)
        out, ctx = fwd([self.values[i] for i in ids], attrs)
        requires = any(self.requires[i] for i in ids)
        return self._push(kind, ids, out, attrs, ctx, requires)

    def backward(self, loss):
        """Sweep the tape in reverse from scalar ``loss``.

        Returns a dict mapping every parameter name to d(loss)/d(param);
        parameters the loss does not depend on get zeros.  Gradients of
        intermediate nodes stay available on ``self.grads``.
        """
        if not isinstance(loss, Node) or loss.tape is not self:
            raise ContractError("loss must be a node on this tape")
        if loss.value.size != 1 or loss.value.ndim > 1:
            raise ContractError(f"loss must be a scalar, got shape {loss.shape}")
        grads = [None] * len(self.values)
        owned = [False] * len(self.values)  # grads[i] is a private buffer safe to update in place
        grads[loss.id] = np.ones_like(loss.value)
        for i in range(loss.id, -1, -1):
            g = grads[i]
            kind = self.kinds[i]
            if g is None or kind in ("param", "const") or not self.requires[i]:
                continue
            ids = self.inputs[i]
            needs = [self.requires[j] for j in ids]
            if kind == "gather_rows":
                # scatter straight into the input's buffer instead of
                # materializing a full-size gradient per gather
                j = ids[0]
                if not owned[j]:
                    grads[j] = np.zeros_like(self.values[j]) if grads[j] is None else grads[j].copy()
                    owned[j] = True
                _gather_rows_accumulate(grads[j], g, self.ctxs[i], self.attrs[i])
                continue
            bwd = _REGISTRY[kind][1]
            in_grads = bwd(g, [self.values[j] for j in ids], self.values[i], self.ctxs[i], self.attrs[i], needs)
            for j, gj, need in zip(ids, in_grads, needs):
                if not need or gj is None:
                    continue
                if grads[j] is None:
                    grads[j] = gj
                elif owned[j]:
                    grads[j] += gj
                else:
                    grads[j] = grads[j] + gj
                    owned[j] = True
        self.grads = grads
        return {
            name: grads[i] if grads[i] is not None else np.zeros_like(self.values[i])
            for name, i in self.params.items()
        }


# functional helpers; each records on the tape of its first node argument


def _tape_of(*xs):
    for x in xs:
        if isinstance(x, Node):
            return x.tape
    raise ContractError("at least one argument must be a tape node")


def matmul(a, b):
    return _tape_of(a, b).apply("matmul", a, b)


def add(a, b):
    return _tape_of(a, b).apply("add", a, b)


def sub(a, b):
    return _tape_of(a, b).apply("sub", a, b)


def mul(a, b):
    return _tape_of(a, b).apply("mul", a, b)


def tanh(x):
    return x.tape.apply("tanh", x)


def sigmoid(x):
    return x.tape.apply("sigmoid", x)


def softmax_masked(x, mask):
    return x.tape.apply("softmax_masked", x, mask=mask)


def concat(xs, axis=0):
    return _tape_of(*xs).apply("concat", *xs, axis=axis)


def gather_rows(m, index, axis=0):
    return m.tape.apply("gather_rows", m, index=index, axis=axis)


def reduce_mean(x):
    return x.tape.apply("reduce_mean", x)


def mse(pred, target):
    return _tape_of(pred, target).apply("mse", pred, target)


def reshape(x, shape):
    return x.tape.apply("reshape", x, shape=tuple(shape))


def transpose(x, axes):
    return x.tape.apply("transpose", x, axes=tuple(axes))
