"""Dense 64-bit compute graphs with reverse-mode differentiation.

Small define-then-run engine: build a DAG of `Node` objects, call
:func:`forward` with input feeds, then :func:`backward` to populate
adjoints.  Supports exactly what MLP training and the adversarial
objectives need -- affine layers, ReLU, log-softmax, means, masked
means, constant masks (dropout), matmul/transpose (for input-gradient
graphs) and a gradient-reversal node that is forward-identity and
negates adjoints on the way back.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np


class GraphError(Exception):
    """Base class for graph construction/execution failures."""


class GraphShapeError(GraphError):
    """Shape mismatch; message names the offending node."""


class BackwardBeforeForwardError(GraphError):
    pass


class NonScalarOutputError(GraphError):
    pass


_node_counter = itertools.count()

# Kinds whose value is supplied rather than computed.
_LEAF_KINDS = ("input", "param", "const")


class Node:
    """One operation in the compute graph.

    Holds the op kind, references to input nodes, and (after a forward
    pass) the cached value; after a backward pass, the cached adjoint.
    """

    __slots__ = ("kind", "inputs", "name", "extras", "value", "adjoint", "uid")

    def __init__(self, kind, inputs=(), name=None, **extras):
        self.kind = kind
        self.inputs = tuple(inputs)
        self.uid = next(_node_counter)
        self.name = name if name is not None else f"{kind}#{self.uid}"
        self.extras = extras
        self.value = None
        self.adjoint = None

    def __repr__(self):
        return f"<Node {self.name} kind={self.kind}>"


def _as_f64(a):
    out = np.asarray(a, dtype=np.float64)
    if not np.all(np.isfinite(out)):
        raise GraphShapeError(f"non-finite entries in array of shape {out.shape}")
    return out


# ---------------------------------------------------------------------------
# constructors


def input_node(name, shape):
    """Placeholder fed at forward time; `shape` is (rows, cols)."""
    return Node("input", name=name, shape=tuple(shape))


def param(array, name=None):
    """Trainable leaf bound to a numpy array (any shape)."""
    return Node("param", name=name, array=_as_f64(array))


def const(array, name=None):
    """Non-trainable leaf."""
    return Node("const", name=name, array=_as_f64(array))


def affine(x, w, b, name=None):
    """x @ w + b with x:(n,din), w:(din,dout), b:(dout,)."""
    return Node("affine", (x, w, b), name=name)


def matmul(a, b, name=None):
    return Node("matmul", (a, b), name=name)


def transpose(x, name=None):
    return Node("transpose", (x,), name=name)


def relu(x, name=None):
    return Node("relu", (x,), name=name)


def log_softmax(x, name=None):
    """Row-wise log-softmax."""
    return Node("log_softmax", (x,), name=name)


def mean(x, name=None):
    """Scalar mean over all entries."""
    return Node("mean", (x,), name=name)


def masked_mean(x, mask_array, name=None):
    """sum(x * mask) / n_rows; the batch-mean reducer for picked entries."""
    return Node("masked_mean", (x,), name=name, mask=_as_f64(mask_array))


def scale(x, c, name=None):
    return Node("scale", (x,), name=name, factor=float(c))


def add(a, b, name=None):
    return Node("add", (a, b), name=name)


def square(x, name=None):
    return Node("square", (x,), name=name)


def mask(x, mask_array, name=None):
    """Elementwise multiply by a constant array of the same shape."""
    return Node("mask", (x,), name=name, mask=_as_f64(mask_array))


def dropout(x, rate, name=None):
    """Inverted dropout; the keep mask is drawn from the rng passed to
    forward() and is treated as a constant during backward.  When forward
    is called without an rng the previously drawn mask is reused, which
    keeps finite-difference probes consistent."""
    if not 0.0 <= rate < 1.0:
        raise GraphError(f"dropout rate {rate} outside [0, 1)")
    return Node("dropout", (x,), name=name, rate=float(rate), drawn=None)


def neg_grad(x, lam=1.0, name=None):
    """Forward identity; backward multiplies the adjoint by -lam."""
    return Node("neg_grad", (x,), name=name, lam=float(lam))


# ---------------------------------------------------------------------------
# execution


def topo_order(root):
    """Ancestors of root in dependency order (iterative, no recursion)."""
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if node.uid in seen:
            continue
        seen.add(node.uid)
        stack.append((node, True))
        for parent in node.inputs:
            stack.append((parent, False))
    return order


def _shape_err(node, msg):
    raise GraphShapeError(f"{node.kind} node '{node.name}': {msg}")


def _eval(node, rng):
    k = node.kind
    vals = [p.value for p in node.inputs]
    if k == "affine":
        x, w, b = vals
        if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[0]:
            _shape_err(node, f"cannot multiply {x.shape} by {w.shape}")
        if b.shape != (w.shape[1],):
            _shape_err(node, f"bias {b.shape} does not match output width {w.shape[1]}")
        return x @ w + b
    if k == "matmul":
        a, b = vals
        if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
            _shape_err(node, f"cannot multiply {a.shape} by {b.shape}")
        return a @ b
    if k == "transpose":
        return vals[0].T
    if k == "relu":
        return np.maximum(vals[0], 0.0)
    if k == "log_softmax":
        x = vals[0]
        if x.ndim != 2:
            _shape_err(node, f"expected 2-D logits, got {x.shape}")
        m = np.max(x, axis=1, keepdims=True)
        z = x - m
        return z - np.log(np.sum(np.exp(z), axis=1, keepdims=True))
    if k == "mean":
        return np.asarray(np.mean(vals[0]))
    if k == "masked_mean":
        x = vals[0]
        if x.shape != node.extras["mask"].shape:
            _shape_err(node, f"mask {node.extras['mask'].shape} vs value {x.shape}")
        return np.asarray(np.sum(x * node.extras["mask"]) / x.shape[0])
    if k == "scale":
        return vals[0] * node.extras["factor"]
    if k == "add":
        a, b = vals
        if a.shape != b.shape:
            _shape_err(node, f"operand shapes {a.shape} vs {b.shape}")
        return a + b
    if k == "square":
        return vals[0] * vals[0]
    if k == "mask":
        x = vals[0]
        if x.shape != node.extras["mask"].shape:
            _shape_err(node, f"mask {node.extras['mask'].shape} vs value {x.shape}")
        return x * node.extras["mask"]
    if k == "dropout":
        x = vals[0]
        if rng is not None:
            keep = 1.0 - node.extras["rate"]
            node.extras["drawn"] = (rng.random(x.shape) < keep) / keep
        if node.extras["drawn"] is None:
            _shape_err(node, "dropout needs an rng on the first forward pass")
        if node.extras["drawn"].shape != x.shape:
            _shape_err(node, f"cached mask {node.extras['drawn'].shape} vs value {x.shape}")
        return x * node.extras["drawn"]
    if k == "neg_grad":
        return vals[0]
    raise GraphError(f"unknown op kind '{k}'")


def forward(root, feeds=None, rng=None):
    """Evaluate the graph under `feeds` (input name or node -> array).

    Caches every intermediate value on the nodes for the backward pass
    and returns the root value.
    """
    feeds = feeds or {}
    named = {}
    for key, val in feeds.items():
        if isinstance(key, Node):
            key.extras["fed"] = _as_f64(val)
        else:
            named[key] = _as_f64(val)
    for node in topo_order(root):
        node.adjoint = None
        if node.kind == "input":
            if node.name in named:
                node.extras["fed"] = named[node.name]
            if "fed" not in node.extras:
                _shape_err(node, "no value fed")
            v = node.extras["fed"]
            want = node.extras["shape"]
            if v.shape != want:
                _shape_err(node, f"fed shape {v.shape}, declared {want}")
            node.value = v
        elif node.kind in ("param", "const"):
            node.value = node.extras["array"]
        else:
            node.value = _eval(node, rng)
    return root.value


def backward(root, seed=None):
    """Reverse sweep from root; returns {param node: gradient array}.

    `seed` is the adjoint of the root (defaults to 1.0, which requires
    a scalar root).  Adjoints for every node, inputs included, are left
    in node.adjoint.
    """
    if root.value is None:
        raise BackwardBeforeForwardError("backward called before forward")
    if seed is None:
        if root.value.size != 1:
            raise NonScalarOutputError(
                f"root '{root.name}' has shape {root.value.shape}; pass an explicit seed")
        seed = np.ones_like(root.value)
    seed = _as_f64(seed)
    if seed.shape != root.value.shape:
        raise GraphShapeError(f"seed shape {seed.shape} vs root {root.value.shape}")

    order = topo_order(root)
    for node in order:
        node.adjoint = None
    root.adjoint = seed
    grads = {}
    for node in reversed(order):
        if node.adjoint is None:
            continue
        g = node.adjoint
        k = node.kind
        if k == "param":
            grads[node] = g
            continue
        if k in ("input", "const"):
            continue
        parents = node.inputs
        if k == "affine":
            x, w, b = parents
            _acc(x, g @ w.value.T)
            _acc(w, x.value.T @ g)
            _acc(b, g.sum(axis=0))
        elif k == "matmul":
            a, b = parents
            _acc(a, g @ b.value.T)
            _acc(b, a.value.T @ g)
        elif k == "transpose":
            _acc(parents[0], g.T)
        elif k == "relu":
            _acc(parents[0], g * (parents[0].value > 0.0))
        elif k == "log_softmax":
            x = parents[0].value
            m = np.max(x, axis=1, keepdims=True)
            e = np.exp(x - m)
            p = e / e.sum(axis=1, keepdims=True)
            _acc(parents[0], g - p * g.sum(axis=1, keepdims=True))
        elif k == "mean":
            _acc(parents[0], np.full(parents[0].value.shape, float(g) / parents[0].value.size))
        elif k == "masked_mean":
            n = parents[0].value.shape[0]
            _acc(parents[0], float(g) * node.extras["mask"] / n)
        elif k == "scale":
            _acc(parents[0], g * node.extras["factor"])
        elif k == "add":
            _acc(parents[0], g)
            _acc(parents[1], g)
        elif k == "square":
            _acc(parents[0], 2.0 * parents[0].value * g)
        elif k == "mask":
            _acc(parents[0], g * node.extras["mask"])
        elif k == "dropout":
            _acc(parents[0], g * node.extras["drawn"])
        elif k == "neg_grad":
            _acc(parents[0], -node.extras["lam"] * g)
        else:
            raise GraphError(f"unknown op kind '{k}'")
    return grads


def _acc(node, g):
    node.adjoint = g if node.adjoint is None else node.adjoint + g


def finite_diff_check(root, feeds=None, step=1e-6, rng=None):
    """Max relative error between backward() and central differences,
    taken over every coordinate of every param node of a scalar graph.
    """
    forward(root, feeds, rng=rng)
    if root.value.size != 1:
        raise NonScalarOutputError("finite_diff_check requires a scalar-valued graph")
    grads = backward(root)
    params = [n for n in topo_order(root) if n.kind == "param"]
    worst = 0.0
    for p in params:
        a = p.extras["array"]
        analytic = grads.get(p, np.zeros_like(a))
        flat = a.ravel()
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + step
            hi = float(forward(root, feeds))
            flat[i] = keep - step
            lo = float(forward(root, feeds))
            flat[i] = keep
            central = (hi - lo) / (2.0 * step)
            an = float(analytic.ravel()[i])
            err = abs(an - central) / (abs(an) + abs(central) + 1e-12)
            worst = max(worst, err)
    forward(root, feeds)
    return worst


# ---------------------------------------------------------------------------
# flat parameter blocks


@dataclass
class ParameterVector:
    """Flat float64 parameter storage with a layout back to named arrays.

    Layer matrices are exposed as reshaped views of the flat buffer, so
    updating `values` in place updates every view and vice versa.
    """

    values: np.ndarray
    layout: tuple = field(default_factory=tuple)  # ((name, shape, offset), ...)

    @classmethod
    def from_arrays(cls, named_arrays):
        """Build from [(name, array), ...]; copies into one flat buffer."""
        chunks, layout, offset = [], [], 0
        for name, arr in named_arrays:
            arr = _as_f64(arr)
            chunks.append(arr.ravel())
            layout.append((name, arr.shape, offset))
            offset += arr.size
        values = np.concatenate(chunks) if chunks else np.zeros(0)
        return cls(values=values, layout=tuple(layout))

    def view(self, name):
        for nm, shape, offset in self.layout:
            if nm == name:
                size = int(np.prod(shape))
                return self.values[offset:offset + size].reshape(shape)
        raise KeyError(name)

    def unflatten(self):
        return {nm: self.view(nm) for nm, _, _ in self.layout}

    def copy(self):
        return ParameterVector(values=self.values.copy(), layout=self.layout)

    def replaced(self, values):
        """Same layout, new flat buffer."""
        values = np.asarray(values, dtype=np.float64)
        if values.shape != self.values.shape:
            raise GraphShapeError(
                f"replacement length {values.shape} vs layout length {self.values.shape}")
        return ParameterVector(values=values, layout=self.layout)

    @property
    def size(self):
        return self.values.size

    def sq_norm(self):
        return float(self.values @ self.values)


def flatten_grads(grads, param_nodes, layout_vector):
    """Assemble backward() output for the given [(name, node), ...] into a
    flat gradient aligned with `layout_vector`; absent grads are zero."""
    out = np.zeros_like(layout_vector.values)
    for name, node in param_nodes:
        g = grads.get(node)
        if g is None:
            continue
        for nm, shape, offset in layout_vector.layout:
            if nm == name:
                out[offset:offset + int(np.prod(shape))] = np.asarray(g).ravel()
                break
        else:
            raise KeyError(name)
    return out
