"""Tape-based reverse-mode autodiff over dense float32 numpy arrays.

A `Tape` records every primitive application in execution order; creation
order is therefore already a valid topological order and the reverse pass is
a single backwards sweep over the node list. Arrays are treated as immutable
once created: op outputs are marked read-only, and leaves wrapping caller
buffers must not be mutated while a tape that references them is alive.

Ops live in `pluralfill.nd.ops`. An op records onto a tape only when at least
one operand is tape-attached; pure-ndarray inputs run as plain numpy, which
makes inference tape-free and allocation-light.
"""

from __future__ import annotations

import os

import numpy as np

# When enabled, every recorded op output is checked for NaN/Inf (an error
# state per the array contract). Off by default: losses and training steps
# carry explicit guards instead.
STRICT_FINITE = os.environ.get("PLURALFILL_STRICT_FINITE", "0") == "1"


class TapeError(Exception):
    """Raised for invalid tape operations (off-tape output, non-scalar backward)."""


class Array:
    """A float32 ndarray plus optional autodiff bookkeeping.

    `tape` is None for constants; tape-attached arrays carry the index of
    their node (`node_id`), their parent arrays, and a vector-Jacobian
    closure mapping the upstream gradient to one gradient per parent
    (None for non-differentiable slots).
    """

    __slots__ = ("data", "tape", "node_id", "parents", "vjp", "trainable", "name")

    def __init__(self, data, tape=None, parents=(), vjp=None, trainable=False, name=None):
        self.data = data
        self.tape = tape
        self.node_id = -1
        self.parents = parents
        self.vjp = vjp
        self.trainable = trainable
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Array(shape={self.data.shape}, tape={'yes' if self.tape else 'no'}{tag})"


class Tape:
    """Ordered record of primitive applications for one reverse pass."""

    def __init__(self):
        self.nodes: list[Array] = []

    def leaf(self, data, trainable=False, name=None) -> Array:
        """Wrap `data` as a tape leaf. The buffer is not copied."""
        arr = np.asarray(data, dtype=np.float32)
        out = Array(arr, tape=self, trainable=trainable, name=name)
        out.node_id = len(self.nodes)
        self.nodes.append(out)
        return out

    def record(self, data, parents, vjp) -> Array:
        data = np.ascontiguousarray(data, dtype=np.float32)
        if STRICT_FINITE and not np.all(np.isfinite(data)):
            raise FloatingPointError("non-finite value produced by a forward op")
        # Never flip the writeable flag on a buffer shared with a parent
        # (identity-forward ops like stop_gradient reuse the parent's data,
        # and leaves may wrap trainer-owned buffers).
        if not any(data is getattr(p, "data", None) for p in parents):
            try:
                data.flags.writeable = False
            except ValueError:
                pass
        out = Array(data, tape=self, parents=tuple(parents), vjp=vjp)
        out.node_id = len(self.nodes)
        self.nodes.append(out)
        return out


def as_f32(x) -> np.ndarray:
    """Raw float32 ndarray view of an Array / array-like."""
    if isinstance(x, Array):
        return x.data
    return np.asarray(x, dtype=np.float32)


def find_tape(*operands) -> Tape | None:
    """The unique tape among operands, or None when all are constants."""
    tape = None
    for x in operands:
        if isinstance(x, Array) and x.tape is not None:
            if tape is None:
                tape = x.tape
            elif tape is not x.tape:
                raise TapeError("operands belong to different tapes")
    return tape


class Gradients:
    """Result of a reverse pass: node id -> float32 gradient array."""

    def __init__(self, by_id: dict[int, np.ndarray]):
        self._by_id = by_id

    def __getitem__(self, key) -> np.ndarray:
        if isinstance(key, Array):
            key = key.node_id
        return self._by_id[key]

    def __contains__(self, key) -> bool:
        if isinstance(key, Array):
            key = key.node_id
        return key in self._by_id

    def items(self):
        return self._by_id.items()


def backward(output: Array) -> Gradients:
    """Reverse pass from a scalar output to every trainable leaf on its tape.

    Returns gradients for all trainable leaves (zeros when the leaf does not
    influence the output); leaf gradients match the leaf's shape.
    """
    tape = output.tape
    if tape is None or tape.nodes[output.node_id] is not output:
        raise TapeError("output was not produced on a live tape")
    if output.data.size != 1:
        raise TapeError(f"backward requires a scalar output, got shape {output.data.shape}")

    grads: dict[int, np.ndarray] = {
        output.node_id: np.ones_like(output.data)
    }
    for node in reversed(tape.nodes[: output.node_id + 1]):
        g = grads.get(node.node_id)
        if g is None or node.vjp is None:
            continue
        parent_grads = node.vjp(g)
        for parent, pg in zip(node.parents, parent_grads):
            if pg is None or not isinstance(parent, Array) or parent.tape is None:
                continue
            pg = np.asarray(pg, dtype=np.float32)
            acc = grads.get(parent.node_id)
            if acc is None:
                # Accumulators must own unaliased storage: a vjp may hand back
                # the upstream gradient itself or a view into saved data.
                if pg is g or pg.base is not None or not pg.flags.owndata or not pg.flags.writeable:
                    pg = pg.copy()
                grads[parent.node_id] = pg
            else:
                acc += pg

    out: dict[int, np.ndarray] = {}
    for node in tape.nodes:
        if node.trainable:
            g = grads.get(node.node_id)
            if g is None:
                g = np.zeros_like(node.data)
            out[node.node_id] = g
    # Non-leaf gradients are kept too: useful for probes and tests.
    for nid, g in grads.items():
        out.setdefault(nid, g)
    return Gradients(out)


def stop_gradient(x) -> Array:
    """Identity forward (bit-exact), zero gradient through this edge."""
    tape = find_tape(x)
    data = as_f32(x)
    if tape is None:
        return Array(data)
    return tape.record(data, (x,), lambda g: (None,))
