"""Boolean circuits built with vectorized gate emission.

A builder call such as ``b.and_(x, y)`` takes arrays of wire ids and emits
one *chunk* of mutually independent gates.  Chunks are stored in emission
order, which is a valid topological order, so both the plaintext evaluator
and the garbler process a whole chunk with a handful of numpy operations.

Wires 0 and 1 are the constants 0 and 1.  Gates touching constants are folded
away at build time, so constant wires reach the garbler only when a constant
is routed straight to an output.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

XOR, AND, NOT = 0, 1, 2
ZERO, ONE = 0, 1


@dataclass
class Group:
    name: str
    wires: np.ndarray           # (..., width) wire ids, least significant bit first
    party: int = 0              # input owner; 0 for outputs
    kind: str = "arith"         # "arith" words or "bool" single bits


@dataclass
class Chunk:
    op: int
    a: np.ndarray
    b: np.ndarray | None
    out: np.ndarray


@dataclass
class Circuit:
    n_wires: int
    chunks: list[Chunk]
    inputs: list[Group]
    outputs: list[Group]
    name: str = ""

    def count(self, op: int) -> int:
        return int(sum(c.out.size for c in self.chunks if c.op == op))

    @property
    def and_count(self) -> int:
        return self.count(AND)

    @property
    def xor_count(self) -> int:
        return self.count(XOR)

    @property
    def not_count(self) -> int:
        return self.count(NOT)

    def stats(self) -> dict:
        return {"name": self.name, "and": self.and_count, "xor": self.xor_count,
                "not": self.not_count, "wires": self.n_wires}

    def input(self, name: str) -> Group:
        for g in self.inputs:
            if g.name == name:
                return g
        raise KeyError(name)

    def party_inputs(self, party: int) -> list[Group]:
        return [g for g in self.inputs if g.party == party]


class Builder:
    def __init__(self, name: str = ""):
        self.name = name
        self.n = 2
        self.chunks: list[Chunk] = []
        self.inputs: list[Group] = []
        self.outputs: list[Group] = []

    # -- wires ---------------------------------------------------------------
    def _new(self, shape) -> np.ndarray:
        k = int(np.prod(shape, dtype=np.int64))
        w = np.arange(self.n, self.n + k, dtype=np.int64).reshape(shape)
        self.n += k
        return w

    def input(self, party: int, name: str, shape, kind: str = "arith") -> np.ndarray:
        shape = tuple(np.atleast_1d(shape))
        w = self._new(shape)
        self.inputs.append(Group(name, w, party, kind))
        return w

    def output(self, name: str, wires, kind: str = "arith"):
        self.outputs.append(Group(name, np.asarray(wires, dtype=np.int64), 0, kind))

    @staticmethod
    def const(value: int, width: int, shape=()) -> np.ndarray:
        bits = [(int(value) >> i) & 1 for i in range(width)]
        return np.broadcast_to(np.array(bits, dtype=np.int64), tuple(shape) + (width,)).copy()

    def build(self) -> Circuit:
        return Circuit(self.n, self.chunks, self.inputs, self.outputs, self.name)

    # -- gates ---------------------------------------------------------------
    def _emit(self, op, a, b=None):
        out = self._new(a.shape)
        self.chunks.append(Chunk(op, a.copy(), None if b is None else b.copy(), out))
        return out

    def not_(self, a) -> np.ndarray:
        a = np.asarray(a, dtype=np.int64)
        out = np.where(a == ZERO, ONE, np.where(a == ONE, ZERO, -1))
        live = out < 0
        if live.any():
            out[live] = self._emit(NOT, a[live])
        return out

    def xor(self, a, b) -> np.ndarray:
        a, b = np.broadcast_arrays(np.asarray(a, dtype=np.int64), np.asarray(b, dtype=np.int64))
        out = np.full(a.shape, -1, dtype=np.int64)
        out[a == ZERO] = b[a == ZERO]
        m = (out < 0) & (b == ZERO)
        out[m] = a[m]
        m = (out < 0) & (a == b)
        out[m] = ZERO
        m = (out < 0) & (a == ONE)
        if m.any():
            out[m] = self.not_(b[m])
        m = (out < 0) & (b == ONE)
        if m.any():
            out[m] = self.not_(a[m])
        live = out < 0
        if live.any():
            out[live] = self._emit(XOR, a[live], b[live])
        return out

    def and_(self, a, b) -> np.ndarray:
        a, b = np.broadcast_arrays(np.asarray(a, dtype=np.int64), np.asarray(b, dtype=np.int64))
        out = np.full(a.shape, -1, dtype=np.int64)
        out[(a == ZERO) | (b == ZERO)] = ZERO
        m = (out < 0) & (a == ONE)
        out[m] = b[m]
        m = (out < 0) & (b == ONE)
        out[m] = a[m]
        m = (out < 0) & (a == b)
        out[m] = a[m]
        live = out < 0
        if live.any():
            out[live] = self._emit(AND, a[live], b[live])
        return out

    def or_(self, a, b) -> np.ndarray:
        return self.not_(self.and_(self.not_(a), self.not_(b)))

    def mux(self, s, a, b) -> np.ndarray:
        """``a`` where ``s`` else ``b``; ``s`` broadcasts over the bit axis."""
        s = np.asarray(s, dtype=np.int64)
        return self.xor(b, self.and_(s, self.xor(a, b)))


# ---------------------------------------------------------------------------
# value <-> bit conversions and plaintext evaluation

def to_bits(values, width: int) -> np.ndarray:
    """``(T, ...)`` integers to ``(T, ..., width)`` bits, LSB first."""
    v = np.asarray(values)
    if v.dtype != np.uint64:
        v = v.astype(np.int64).astype(np.uint64)
    sh = np.arange(width, dtype=np.uint64)
    return ((v[..., None] >> sh) & np.uint64(1)).astype(np.uint8)


def from_bits(bits: np.ndarray) -> np.ndarray:
    """Inverse of ``to_bits``; returns unsigned uint64 words."""
    width = bits.shape[-1]
    sh = np.arange(width, dtype=np.uint64)
    return (bits.astype(np.uint64) << sh).sum(axis=-1, dtype=np.uint64)


def group_bits(group: Group, values, T: int) -> np.ndarray:
    """Flatten one input group's values to ``(T, n_group_wires)`` bits."""
    width = group.wires.shape[-1]
    v = np.asarray(values)
    v = np.broadcast_to(v, (T,) + group.wires.shape[:-1]) if v.ndim < group.wires.ndim else v
    if v.shape != (T,) + group.wires.shape[:-1]:
        raise ValueError(f"input {group.name!r}: shape {v.shape}, expected "
                         f"{(T,) + group.wires.shape[:-1]}")
    return to_bits(v, width).reshape(T, -1)


def evaluate_plain(circuit: Circuit, inputs: dict, T: int | None = None) -> dict:
    """Evaluate on cleartext values.  ``inputs`` maps group name to ``(T, ...)`` values."""
    if T is None:
        T = len(next(iter(inputs.values())))
    vals = np.zeros((circuit.n_wires, T), dtype=np.uint8)
    vals[ONE] = 1
    for g in circuit.inputs:
        vals[g.wires.ravel()] = group_bits(g, inputs[g.name], T).T
    for c in circuit.chunks:
        if c.op == XOR:
            vals[c.out] = vals[c.a] ^ vals[c.b]
        elif c.op == AND:
            vals[c.out] = vals[c.a] & vals[c.b]
        else:
            vals[c.out] = vals[c.a] ^ 1
    out = {}
    for g in circuit.outputs:
        bits = vals[g.wires.reshape(-1)].T.reshape((T,) + g.wires.shape)
        out[g.name] = from_bits(bits) if g.kind == "arith" else bits[..., 0]
    return out
