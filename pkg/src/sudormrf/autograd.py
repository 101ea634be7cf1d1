"""Minimal reverse-mode tape over the kernel library.

Forward calls on :class:`TapedOps` compute values eagerly with the kernels
from :mod:`.ops` and record one node per op.  ``Tape.backward`` then walks
the nodes in reverse creation order, calling each kernel's hand-written VJP.
There is no graph optimization, no broadcasting resolution, and no operator
overloading; the tape exists so the block stack does not need a second,
hand-chained backward implementation.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from . import ops
from .errors import ValidationError

Array = np.ndarray


class Node:
    """One value in the computation; leaves have no vjp."""

    __slots__ = ("value", "parents", "vjp", "grad")

    def __init__(self, value: Array, parents: tuple["Node", ...] = (),
                 vjp: Callable[[Array], tuple] | None = None) -> None:
        self.value = value
        self.parents = parents
        self.vjp = vjp
        self.grad: Array | None = None


class Tape:
    def __init__(self) -> None:
        self.nodes: list[Node] = []

    def leaf(self, value: Array) -> Node:
        node = Node(np.asarray(value))
        self.nodes.append(node)
        return node

    def record(self, value: Array, parents: tuple[Node, ...],
               vjp: Callable[[Array], tuple]) -> Node:
        node = Node(value, parents, vjp)
        self.nodes.append(node)
        return node

    def backward(self, seeds: Sequence[tuple[Node, Array]]) -> None:
        """Accumulate gradients from seeded output nodes into every node."""
        for node in self.nodes:
            node.grad = None
        for node, seed in seeds:
            if seed.shape != node.value.shape:
                raise ValidationError("backward seed shape mismatch")
            node.grad = seed if node.grad is None else node.grad + seed
        # creation order is topological, so one reverse sweep suffices
        for node in reversed(self.nodes):
            if node.grad is None or node.vjp is None:
                continue
            for parent, g in zip(node.parents, node.vjp(node.grad)):
                if g is None:
                    continue
                parent.grad = g if parent.grad is None else parent.grad + g


def leaf_grads(named: dict[str, Node]) -> dict[str, Array]:
    """Gradients for a named leaf set; untouched leaves get zeros."""
    return {name: (n.grad if n.grad is not None else np.zeros_like(n.value))
            for name, n in named.items()}


class TapedOps:
    """Backend with the same surface as ``model.EagerOps``, recording VJPs."""

    def __init__(self, tape: Tape) -> None:
        self.tape = tape

    def conv1d(self, x: Node, w: Node, b: Node, stride=1, groups=1, causal=False):
        y = ops.conv1d(x.value, w.value, b.value, stride, groups, causal)

        def vjp(up, xv=x.value, wv=w.value):
            return ops.conv1d_vjp(up, xv, wv, stride, groups, causal)
        return self.tape.record(y, (x, w, b), vjp)

    def conv_transpose1d(self, v: Node, w: Node, b: Node, stride=1, groups=1,
                         causal=False, left=None):
        y = ops.conv_transpose1d(v.value, w.value, b.value, stride, groups,
                                 causal, left)

        def vjp(up, vv=v.value, wv=w.value):
            return ops.conv_transpose1d_vjp(up, vv, wv, stride, groups, causal, left)
        return self.tape.record(y, (v, w, b), vjp)

    def relu(self, x: Node):
        y = ops.relu(x.value)

        def vjp(up, xv=x.value):
            return (ops.relu_vjp(up, xv),)
        return self.tape.record(y, (x,), vjp)

    def prelu(self, x: Node, slope: Node):
        y = ops.prelu(x.value, slope.value)

        def vjp(up, xv=x.value, sv=slope.value):
            return ops.prelu_vjp(up, xv, sv)
        return self.tape.record(y, (x, slope), vjp)

    def layer_norm(self, x: Node, gain: Node, shift: Node):
        y = ops.layer_norm(x.value, gain.value, shift.value)

        def vjp(up, xv=x.value, gv=gain.value):
            return ops.layer_norm_vjp(up, xv, gv)
        return self.tape.record(y, (x, gain, shift), vjp)

    def global_layer_norm(self, x: Node, gain: Node, shift: Node):
        y = ops.global_layer_norm(x.value, gain.value, shift.value)

        def vjp(up, xv=x.value, gv=gain.value):
            return ops.global_layer_norm_vjp(up, xv, gv)
        return self.tape.record(y, (x, gain, shift), vjp)

    def nearest_interp(self, x: Node, factor: int, out_len: int):
        y = ops.nearest_interp(x.value, factor, out_len)
        in_len = x.value.shape[1]

        def vjp(up):
            return (ops.nearest_interp_vjp(up, in_len, factor),)
        return self.tape.record(y, (x,), vjp)

    def softmax_sources(self, z: Node):
        m = ops.softmax_over_sources(z.value)

        def vjp(up, mv=m):
            return (ops.softmax_over_sources_vjp(up, mv),)
        return self.tape.record(m, (z,), vjp)

    def multiply(self, a: Node, b: Node):
        y = ops.multiply(a.value, b.value)

        def vjp(up, av=a.value, bv=b.value):
            return (up * bv, up * av)
        return self.tape.record(y, (a, b), vjp)

    def add(self, a: Node, b: Node):
        y = ops.add(a.value, b.value)

        def vjp(up):
            return (up, up)
        return self.tape.record(y, (a, b), vjp)

    def group_shared_linear(self, x: Node, w: Node, b: Node, groups: int):
        y = ops.group_shared_linear(x.value, w.value, b.value, groups)

        def vjp(up, xv=x.value, wv=w.value):
            return ops.group_shared_linear_vjp(up, xv, wv, groups)
        return self.tape.record(y, (x, w, b), vjp)

    def group_attention(self, x: Node, wq: Node, wk: Node, wv: Node, groups: int):
        y = ops.group_attention(x.value, wq.value, wk.value, wv.value, groups)

        def vjp(up, xv=x.value, q=wq.value, k=wk.value, v=wv.value):
            return ops.group_attention_vjp(up, xv, q, k, v, groups)
        return self.tape.record(y, (x, wq, wk, wv), vjp)

    def stack(self, items: Sequence[Node]):
        y = np.stack([n.value for n in items], axis=0)

        def vjp(up):
            return tuple(up[j] for j in range(len(items)))
        return self.tape.record(y, tuple(items), vjp)

    def pick(self, z: Node, j: int):
        y = np.ascontiguousarray(z.value[j])

        def vjp(up, shape=z.value.shape):
            g = np.zeros(shape, dtype=up.dtype)
            g[j] = up
            return (g,)
        return self.tape.record(y, (z,), vjp)

    def length(self, x: Node) -> int:
        return x.value.shape[1]
