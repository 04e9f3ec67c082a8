"""Minimal differentiable-computation core.

Every recorded value carries an optional pair of directional tangents
(first and second order, along one input direction) that are propagated
forward through each operation, while the operation itself is appended to
a tape.  A reverse pass over the tape then yields gradients of a scalar
output with respect to parameter leaves -- including outputs that were
assembled from the *tangents* of other nodes, which is what makes PDE
residual losses differentiable with respect to network parameters.

Node values are numpy float64 arrays of any shape, so the same machinery
serves scalar analytic oracles and batched network evaluation.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "AutodiffError",
    "DivisionByZero",
    "MixedRecords",
    "UnknownNode",
    "UnsupportedPrimitive",
    "ComputationRecord",
    "DiffValue",
    "GradientVector",
    "record_op",
    "backward",
    "directional_derivatives",
    "SCALAR_PRIMITIVES",
    "sin",
    "cos",
    "tanh",
    "exp",
    "pow_int",
]


class AutodiffError(Exception):
    pass


class DivisionByZero(AutodiffError):
    pass


class MixedRecords(AutodiffError):
    pass


class UnknownNode(AutodiffError):
    pass


class UnsupportedPrimitive(AutodiffError):
    pass


SCALAR_PRIMITIVES = frozenset(
    {"add", "sub", "mul", "div", "neg", "tanh", "sin", "cos", "exp", "pow_int"}
)

_UNARY = {"neg", "tanh", "sin", "cos", "exp", "pow_int"}


def _arr(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def _norm_slot(x, shape):
    """Broadcast a tangent slot to the value shape (None stays None)."""
    if x is None:
        return None
    x = _arr(x)
    if x.shape == shape:
        return x
    return np.broadcast_to(x, shape)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Reduce an adjoint back to the shape it was broadcast from."""
    g = _arr(g)
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, (gs, ss) in enumerate(zip(g.shape, shape)):
        if ss == 1 and gs != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


class _Node:
    __slots__ = ("kind", "inputs", "aux", "value", "tangent", "tangent2", "param")

    def __init__(self, kind, inputs, aux, value, tangent, tangent2, param=False):
        self.kind = kind
        self.inputs = inputs
        self.aux = aux
        self.value = value
        self.tangent = tangent
        self.tangent2 = tangent2
        self.param = param


class DiffValue:
    """Handle to one node of a :class:`ComputationRecord`.

    Supports the arithmetic operators; mixing handles from different
    records raises :class:`MixedRecords`.  When no tangents are attached,
    arithmetic reduces to plain float64 arithmetic.
    """

    __slots__ = ("record", "node_id")

    def __init__(self, record: "ComputationRecord", node_id: int):
        self.record = record
        self.node_id = node_id

    @property
    def _node(self) -> _Node:
        return self.record._nodes[self.node_id]

    @property
    def value(self):
        v = self._node.value
        return v.item() if v.ndim == 0 else v

    @property
    def tangent(self):
        t = self._node.tangent
        if t is None:
            return None
        return t.item() if t.ndim == 0 else t

    @property
    def tangent2(self):
        s = self._node.tangent2
        if s is None:
            return None
        return s.item() if s.ndim == 0 else s

    def __repr__(self):
        return f"DiffValue(value={self.value!r}, tangent={self.tangent!r}, tangent2={self.tangent2!r})"

    # arithmetic sugar over record_op
    def __add__(self, other):
        return record_op("add", (self, other))

    __radd__ = __add__

    def __sub__(self, other):
        return record_op("sub", (self, other))

    def __rsub__(self, other):
        return record_op("sub", (self.record._coerce(other), self))

    def __mul__(self, other):
        return record_op("mul", (self, other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return record_op("div", (self, other))

    def __rtruediv__(self, other):
        return record_op("div", (self.record._coerce(other), self))

    def __neg__(self):
        return record_op("neg", (self,))

    def __pow__(self, n):
        if not isinstance(n, (int, np.integer)):
            raise TypeError("only integer exponents are supported")
        return record_op("pow_int", (self,), aux=int(n))


class GradientVector:
    """Flat gradient with one entry per scalar parameter, in leaf order."""

    __slots__ = ("entries",)

    def __init__(self, entries: np.ndarray):
        self.entries = _arr(entries).ravel()

    def __len__(self):
        return self.entries.size

    def __repr__(self):
        return f"GradientVector(n={len(self)})"


class ComputationRecord:
    """Append-only tape of operations with value/tangent propagation."""

    def __init__(self):
        self._nodes: list[_Node] = []
        self._param_ids: list[int] = []
        self.outputs: list[int] = []

    def __len__(self):
        return len(self._nodes)

    # ---------------- leaves ----------------

    def variable(self, value, tangent=None, tangent2=None, param=False) -> DiffValue:
        """Create a leaf.  ``tangent``/``tangent2`` seed directional derivatives;
        ``param=True`` registers the leaf for gradient collection."""
        v = _arr(value)
        t = _norm_slot(_arr(tangent) * np.ones_like(v), v.shape) if tangent is not None else None
        s = _norm_slot(_arr(tangent2) * np.ones_like(v), v.shape) if tangent2 is not None else None
        nid = self._append(_Node("var", (), None, v, t, s, param=param))
        if param:
            self._param_ids.append(nid)
        return DiffValue(self, nid)

    def constant(self, value) -> DiffValue:
        return DiffValue(self, self._append(_Node("const", (), None, _arr(value), None, None)))

    def _append(self, node: _Node) -> int:
        self._nodes.append(node)
        return len(self._nodes) - 1

    def _coerce(self, x) -> DiffValue:
        if isinstance(x, DiffValue):
            if x.record is not self:
                raise MixedRecords("inputs belong to different computation records")
            return x
        return self.constant(x)

    def mark_output(self, dv: DiffValue):
        self.outputs.append(self._coerce(dv).node_id)

    # ---------------- structural ops ----------------

    def _emit(self, kind, inputs, aux=None) -> DiffValue:
        nodes = tuple(self._nodes[i.node_id] for i in inputs)
        v, t, s = _forward_slots(kind, aux, nodes)
        return DiffValue(self, self._append(_Node(kind, tuple(i.node_id for i in inputs), aux, v, t, s)))

    def matmul(self, a: DiffValue, b: DiffValue, transpose_b: bool = False) -> DiffValue:
        return self._emit("matmul", (self._coerce(a), self._coerce(b)), aux=bool(transpose_b))

    def total(self, a: DiffValue) -> DiffValue:
        """Sum of all entries (scalar node)."""
        return self._emit("sum", (self._coerce(a),))

    def mean(self, a: DiffValue) -> DiffValue:
        return self._emit("mean", (self._coerce(a),))

    def concat(self, a: DiffValue, b: DiffValue) -> DiffValue:
        """Concatenate along the last axis."""
        return self._emit("concat", (self._coerce(a), self._coerce(b)))

    def col(self, a: DiffValue, j: int) -> DiffValue:
        """Extract column ``j`` (kept as a trailing axis of size 1)."""
        return self._emit("col", (self._coerce(a),), aux=int(j))

    def rows(self, a: DiffValue, start: int, stop: int) -> DiffValue:
        """Extract leading-axis rows ``[start, stop)`` (block extraction)."""
        return self._emit("rows", (self._coerce(a),), aux=(int(start), int(stop)))

    def d1(self, a: DiffValue) -> DiffValue:
        """First directional derivative of ``a`` as a value node.

        The result stays differentiable with respect to parameters: its
        value-adjoint is routed into the tangent slot of ``a`` during the
        reverse pass.
        """
        a = self._coerce(a)
        node = self._nodes[a.node_id]
        if node.tangent is None:
            # no tangent ever reached this node: structurally zero derivative
            return self.constant(np.zeros_like(node.value))
        return self._emit("d1", (a,))

    def d2(self, a: DiffValue) -> DiffValue:
        """Second directional derivative of ``a`` as a value node."""
        a = self._coerce(a)
        node = self._nodes[a.node_id]
        if node.tangent2 is None:
            # structurally zero second derivative
            return self.constant(np.zeros_like(node.value))
        return self._emit("d2", (a,))

    def detach(self, a: DiffValue) -> DiffValue:
        """Value of ``a`` with tangents stripped (still parameter-differentiable)."""
        return self._emit("detach", (self._coerce(a),))

    # ---------------- replay ----------------

    def replay(self) -> bool:
        """Recompute every node from its inputs; True if all slots are
        bit-identical to the stored ones."""
        for node in self._nodes:
            if node.kind in ("var", "const"):
                continue
            ins = tuple(self._nodes[i] for i in node.inputs)
            v, t, s = _forward_slots(node.kind, node.aux, ins)
            same = np.array_equal(v, node.value, equal_nan=True)
            for fresh, stored in ((t, node.tangent), (s, node.tangent2)):
                if (fresh is None) != (stored is None):
                    same = False
                elif fresh is not None and not np.array_equal(fresh, stored, equal_nan=True):
                    same = False
            if not same:
                return False
        return True


# ---------------------------------------------------------------------------
# forward slot propagation
# ---------------------------------------------------------------------------


def _sum_terms(terms):
    out = None
    for t in terms:
        if t is None:
            continue
        out = t if out is None else out + t
    return out


def _forward_slots(kind, aux, nodes):
    if kind in _UNARY:
        return _unary_forward(kind, aux, nodes[0])
    if kind == "add":
        a, b = nodes
        v = a.value + b.value
        t = _sum_terms((a.tangent, b.tangent))
        s = _sum_terms((a.tangent2, b.tangent2))
    elif kind == "sub":
        a, b = nodes
        v = a.value - b.value
        t = _sum_terms((a.tangent, None if b.tangent is None else -b.tangent))
        s = _sum_terms((a.tangent2, None if b.tangent2 is None else -b.tangent2))
    elif kind == "mul":
        a, b = nodes
        v = a.value * b.value
        t = _sum_terms(
            (
                None if a.tangent is None else a.tangent * b.value,
                None if b.tangent is None else a.value * b.tangent,
            )
        )
        s = _sum_terms(
            (
                None if a.tangent2 is None else a.tangent2 * b.value,
                None if (a.tangent is None or b.tangent is None) else 2.0 * a.tangent * b.tangent,
                None if b.tangent2 is None else a.value * b.tangent2,
            )
        )
    elif kind == "matmul":
        a, b = nodes
        mm = (lambda x, y: x @ y.swapaxes(-1, -2)) if aux else (lambda x, y: x @ y)
        v = mm(a.value, b.value)
        t = _sum_terms(
            (
                None if a.tangent is None else mm(a.tangent, b.value),
                None if b.tangent is None else mm(a.value, b.tangent),
            )
        )
        s = _sum_terms(
            (
                None if a.tangent2 is None else mm(a.tangent2, b.value),
                None if (a.tangent is None or b.tangent is None) else 2.0 * mm(a.tangent, b.tangent),
                None if b.tangent2 is None else mm(a.value, b.tangent2),
            )
        )
        return v, t, s
    elif kind in ("sum", "mean"):
        (a,) = nodes
        red = np.sum if kind == "sum" else np.mean
        v = _arr(red(a.value))
        t = None if a.tangent is None else _arr(red(a.tangent))
        s = None if a.tangent2 is None else _arr(red(a.tangent2))
        return v, t, s
    elif kind == "concat":
        a, b = nodes

        def cat(xa, xb, any_present):
            if not any_present:
                return None
            xa = np.broadcast_to(0.0 if xa is None else xa, a.value.shape)
            xb = np.broadcast_to(0.0 if xb is None else xb, b.value.shape)
            return np.concatenate((xa, xb), axis=-1)

        v = np.concatenate((a.value, b.value), axis=-1)
        t = cat(a.tangent, b.tangent, a.tangent is not None or b.tangent is not None)
        s = cat(a.tangent2, b.tangent2, a.tangent2 is not None or b.tangent2 is not None)
        return v, t, s
    elif kind == "col":
        (a,) = nodes
        v = a.value[..., aux : aux + 1]
        t = None if a.tangent is None else a.tangent[..., aux : aux + 1]
        s = None if a.tangent2 is None else a.tangent2[..., aux : aux + 1]
        return v, t, s
    elif kind == "rows":
        (a,) = nodes
        lo, hi = aux
        v = a.value[lo:hi]
        t = None if a.tangent is None else a.tangent[lo:hi]
        s = None if a.tangent2 is None else a.tangent2[lo:hi]
        return v, t, s
    elif kind == "d1":
        (a,) = nodes
        return a.tangent.copy(), (None if a.tangent2 is None else a.tangent2.copy()), None
    elif kind == "d2":
        (a,) = nodes
        return a.tangent2.copy(), None, None
    elif kind == "detach":
        (a,) = nodes
        return a.value, None, None
    else:
        raise UnsupportedPrimitive(kind)
    return v, _norm_slot(t, v.shape), _norm_slot(s, v.shape)


def _unary_forward(kind, aux, a):
    va, ta, sa = a.value, a.tangent, a.tangent2
    if kind == "neg":
        return -va, (None if ta is None else -ta), (None if sa is None else -sa)
    if kind == "tanh":
        v = np.tanh(va)
        p1 = 1.0 - v * v
        p2 = -2.0 * v * p1
    elif kind == "sin":
        v = np.sin(va)
        p1 = np.cos(va)
        p2 = -v
    elif kind == "cos":
        v = np.cos(va)
        p1 = -np.sin(va)
        p2 = -v
    elif kind == "exp":
        v = np.exp(va)
        p1 = v
        p2 = v
    elif kind == "pow_int":
        n = aux
        if n == 0:
            return np.ones_like(va), None, None
        v = va ** n
        p1 = n * va ** (n - 1)
        p2 = n * (n - 1) * va ** (n - 2) if n != 1 else 0.0
    else:  # pragma: no cover
        raise UnsupportedPrimitive(kind)
    t = None if ta is None else p1 * ta
    s = _sum_terms(
        (
            None if sa is None else p1 * sa,
            None if ta is None else p2 * ta * ta,
        )
    )
    return v, _norm_slot(t, v.shape), _norm_slot(s, v.shape)


def _unary_p123(kind, aux, vin, vout):
    """First three derivatives of a unary primitive at ``vin``."""
    if kind == "tanh":
        w = 1.0 - vout * vout
        return w, -2.0 * vout * w, w * (6.0 * vout * vout - 2.0)
    if kind == "sin":
        c = np.cos(vin)
        return c, -vout, -c
    if kind == "cos":
        sn = np.sin(vin)
        return -sn, -vout, sn
    if kind == "exp":
        return vout, vout, vout
    if kind == "pow_int":
        n = aux
        p1 = n * vin ** (n - 1) if n != 0 else np.zeros_like(vin)
        p2 = n * (n - 1) * vin ** (n - 2) if n not in (0, 1) else np.zeros_like(vin)
        p3 = n * (n - 1) * (n - 2) * vin ** (n - 3) if n not in (0, 1, 2) else np.zeros_like(vin)
        return p1, p2, p3
    raise UnsupportedPrimitive(kind)  # pragma: no cover


# ---------------------------------------------------------------------------
# public op recording
# ---------------------------------------------------------------------------


def record_op(kind, inputs, aux=None) -> DiffValue:
    """Apply a supported primitive to DiffValues (numbers are lifted to
    constants) and append the operation to their record."""
    if kind not in SCALAR_PRIMITIVES:
        raise UnsupportedPrimitive(kind)
    rec = None
    for x in inputs:
        if isinstance(x, DiffValue):
            if rec is None:
                rec = x.record
            elif x.record is not rec:
                raise MixedRecords("inputs belong to different computation records")
    if rec is None:
        raise AutodiffError("record_op needs at least one DiffValue input")
    ins = tuple(rec._coerce(x) for x in inputs)
    if kind == "div":
        a, b = ins
        if np.any(rec._nodes[b.node_id].value == 0.0):
            raise DivisionByZero("division by zero")
        return rec._emit("mul", (a, rec._emit("pow_int", (b,), aux=-1)))
    return rec._emit(kind, ins, aux=aux)


def sin(x):
    return record_op("sin", (x,)) if isinstance(x, DiffValue) else np.sin(x)


def cos(x):
    return record_op("cos", (x,)) if isinstance(x, DiffValue) else np.cos(x)


def tanh(x):
    return record_op("tanh", (x,)) if isinstance(x, DiffValue) else np.tanh(x)


def exp(x):
    return record_op("exp", (x,)) if isinstance(x, DiffValue) else np.exp(x)


def pow_int(x, n: int):
    return record_op("pow_int", (x,), aux=int(n)) if isinstance(x, DiffValue) else np.asarray(x) ** int(n)


# ---------------------------------------------------------------------------
# reverse pass
# ---------------------------------------------------------------------------


def backward(record: ComputationRecord, output) -> GradientVector:
    """Gradient of a scalar node with respect to every parameter leaf.

    Adjoints are tracked per slot (value, tangent, tangent2), so outputs
    built from extracted tangents differentiate correctly.
    """
    if isinstance(output, DiffValue):
        if output.record is not record:
            raise MixedRecords("output belongs to a different record")
        oid = output.node_id
    else:
        oid = int(output)
    if not (0 <= oid < len(record._nodes)):
        raise UnknownNode(oid)
    out_node = record._nodes[oid]
    if out_node.value.size != 1:
        raise AutodiffError("backward output must be scalar")

    adj: dict[tuple[int, int], np.ndarray] = {}
    nodes = record._nodes

    def acc(nid, slot, g):
        node = nodes[nid]
        if slot == 1 and node.tangent is None:
            return
        if slot == 2 and node.tangent2 is None:
            return
        g = _unbroadcast(g, node.value.shape)
        key = (nid, slot)
        if key in adj:
            adj[key] = adj[key] + g
        else:
            adj[key] = g

    acc(oid, 0, np.ones_like(out_node.value))

    for nid in range(oid, -1, -1):
        node = nodes[nid]
        if node.kind in ("var", "const"):
            continue
        G = (adj.get((nid, 0)), adj.get((nid, 1)), adj.get((nid, 2)))
        if G[0] is None and G[1] is None and G[2] is None:
            continue
        _backward_node(nodes, nid, node, G, acc)

    grads = []
    for pid in record._param_ids:
        g = adj.get((pid, 0))
        grads.append((np.zeros_like(nodes[pid].value) if g is None else g).ravel())
    return GradientVector(np.concatenate(grads) if grads else np.zeros(0))


def _backward_node(nodes, nid, node, G, acc):
    Gv, Gt, Gs = G
    kind = node.kind
    ins = node.inputs

    if kind in ("add", "sub"):
        a, b = ins
        for slot, g in enumerate(G):
            if g is None:
                continue
            acc(a, slot, g)
            acc(b, slot, g if kind == "add" else -g)
        return

    if kind == "neg":
        (a,) = ins
        for slot, g in enumerate(G):
            if g is not None:
                acc(a, slot, -g)
        return

    if kind == "mul":
        a, b = ins
        na, nb = nodes[a], nodes[b]
        for x, nx, y, ny in ((a, na, b, nb), (b, nb, a, na)):
            vy, ty, sy = ny.value, ny.tangent, ny.tangent2
            terms0 = []
            if Gv is not None:
                terms0.append(Gv * vy)
            if Gt is not None and ty is not None:
                terms0.append(Gt * ty)
            if Gs is not None and sy is not None:
                terms0.append(Gs * sy)
            if terms0:
                acc(x, 0, sum(terms0))
            terms1 = []
            if Gt is not None:
                terms1.append(Gt * vy)
            if Gs is not None and ty is not None:
                terms1.append(2.0 * Gs * ty)
            if terms1:
                acc(x, 1, sum(terms1))
            if Gs is not None:
                acc(x, 2, Gs * vy)
        return

    if kind in _UNARY and kind != "neg":
        (a,) = ins
        na = nodes[a]
        va, ta, sa = na.value, na.tangent, na.tangent2
        p1, p2, p3 = _unary_p123(kind, node.aux, va, node.value)
        terms0 = []
        if Gv is not None:
            terms0.append(Gv * p1)
        if Gt is not None and ta is not None:
            terms0.append(Gt * p2 * ta)
        if Gs is not None:
            if sa is not None:
                terms0.append(Gs * p2 * sa)
            if ta is not None:
                terms0.append(Gs * p3 * ta * ta)
        if terms0:
            acc(a, 0, sum(terms0))
        terms1 = []
        if Gt is not None:
            terms1.append(Gt * p1)
        if Gs is not None and ta is not None:
            terms1.append(2.0 * Gs * p2 * ta)
        if terms1:
            acc(a, 1, sum(terms1))
        if Gs is not None:
            acc(a, 2, Gs * p1)
        return

    if kind == "matmul":
        a, b = ins
        na, nb = nodes[a], nodes[b]
        T = node.aux
        a_slots = (na.value, na.tangent, na.tangent2)
        b_slots = (nb.value, nb.tangent, nb.tangent2)
        # forward: C_cs += coef * M(A_as, B_bs)
        terms = ((0, 0, 0, 1.0), (1, 1, 0, 1.0), (1, 0, 1, 1.0), (2, 2, 0, 1.0), (2, 1, 1, 2.0), (2, 0, 2, 1.0))
        for cs, as_, bs, coef in terms:
            g = G[cs]
            if g is None:
                continue
            B = b_slots[bs]
            A = a_slots[as_]
            if B is not None:
                # d/dA of A@B is g@B.T; of A@B.T is g@B
                acc(a, as_, coef * (g @ B if T else g @ B.swapaxes(-1, -2)))
            if A is not None:
                acc(b, bs, coef * (g.swapaxes(-1, -2) @ A if T else A.swapaxes(-1, -2) @ g))
        return

    if kind in ("sum", "mean"):
        (a,) = ins
        shape = nodes[a].value.shape
        scale = 1.0 if kind == "sum" else 1.0 / max(1, nodes[a].value.size)
        for slot, g in enumerate(G):
            if g is not None:
                acc(a, slot, np.broadcast_to(g * scale, shape))
        return

    if kind == "concat":
        a, b = ins
        wa = nodes[a].value.shape[-1]
        for slot, g in enumerate(G):
            if g is None:
                continue
            acc(a, slot, g[..., :wa])
            acc(b, slot, g[..., wa:])
        return

    if kind == "col":
        (a,) = ins
        j = node.aux
        shape = nodes[a].value.shape
        for slot, g in enumerate(G):
            if g is None:
                continue
            full = np.zeros(shape)
            full[..., j : j + 1] = g
            acc(a, slot, full)
        return

    if kind == "rows":
        (a,) = ins
        lo, hi = node.aux
        shape = nodes[a].value.shape
        for slot, g in enumerate(G):
            if g is None:
                continue
            full = np.zeros(shape)
            full[lo:hi] = g
            acc(a, slot, full)
        return

    if kind == "d1":
        (a,) = ins
        if Gv is not None:
            acc(a, 1, Gv)
        if Gt is not None:
            acc(a, 2, Gt)
        return

    if kind == "d2":
        (a,) = ins
        if Gv is not None:
            acc(a, 2, Gv)
        return

    if kind == "detach":
        (a,) = ins
        if Gv is not None:
            acc(a, 0, Gv)
        return

    raise UnsupportedPrimitive(kind)  # pragma: no cover


# ---------------------------------------------------------------------------
# directional derivatives
# ---------------------------------------------------------------------------

_DIRECTIONS = {"x": 0, "y": 1, "t": 2}


def directional_derivatives(func, point, direction: str):
    """Value and first/second derivative of ``func(x, y, t, nu)`` along one
    input coordinate, via tangent seeding.

    ``func`` must be built from the supported primitives and return a
    single DiffValue.
    """
    if direction not in _DIRECTIONS:
        raise ValueError(f"direction must be one of {sorted(_DIRECTIONS)}, got {direction!r}")
    idx = _DIRECTIONS[direction]
    rec = ComputationRecord()
    leaves = [rec.variable(float(p), tangent=(1.0 if i == idx else None)) for i, p in enumerate(point)]
    out = func(*leaves)
    if not isinstance(out, DiffValue):
        raise UnsupportedPrimitive("field evaluator must return a DiffValue")
    node = out._node

    def scalar(a):
        return 0.0 if a is None else float(np.asarray(a).reshape(-1)[0])

    return scalar(node.value), scalar(node.tangent), scalar(node.tangent2)
