"""Half-gates garbling with free-XOR and point-and-permute.

Labels are 128-bit values stored as ``(..., 2)`` uint64 arrays; the global
offset ``delta`` has its least significant bit set so the low bit of a label
is its permute bit.  A garbling processes ``T`` independent instances of the
same circuit at once (axis 1 of every label array).  Each AND gate costs two
ciphertexts per instance; XOR and NOT cost nothing.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..crypto import Prg, hash_blocks
from .circuit import AND, NOT, XOR, ONE, ZERO, Circuit

_DOMAIN = np.uint64(0x47 << 56)
_ONE = np.uint64(1)


def _hash(x: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """H(x, idx) for ``x`` of shape (k, 2) uint64 and tweak indices (k,)."""
    k = x.shape[0]
    tw = np.empty((k, 2), dtype=np.uint64)
    tw[:, 0] = idx
    tw[:, 1] = _DOMAIN
    h = hash_blocks(np.ascontiguousarray(x).view(np.uint8).reshape(k, 16),
                    tw.view(np.uint8).reshape(k, 16))
    return h.view(np.uint64).reshape(k, 2)


def lsb(labels: np.ndarray) -> np.ndarray:
    return (labels[..., 0] & _ONE).astype(np.uint8)


def random_labels(prg: Prg, shape) -> np.ndarray:
    n = int(np.prod(shape, dtype=np.int64))
    return np.frombuffer(prg.bytes(16 * n), dtype=np.uint64).reshape(tuple(shape) + (2,)).copy()


def new_delta(prg: Prg) -> np.ndarray:
    d = random_labels(prg, ())
    d[0] |= _ONE
    return d


def input_wires(circuit: Circuit, party: int) -> np.ndarray:
    ws = [g.wires.ravel() for g in circuit.party_inputs(party)]
    return np.concatenate(ws) if ws else np.zeros(0, dtype=np.int64)


@dataclass
class Garbling:
    delta: np.ndarray
    label0: np.ndarray          # (n_wires, T, 2) zero-labels of every wire
    tables: np.ndarray          # (n_and, T, 2, 2): (T_G, T_E) per gate

    def encode(self, wires: np.ndarray, bits: np.ndarray) -> np.ndarray:
        """Active labels for ``wires`` given ``bits`` of shape (T, len(wires))."""
        l0 = self.label0[wires]                      # (k, T, 2)
        b = bits.T.astype(np.uint64)[..., None]      # (k, T, 1)
        return l0 ^ (b * self.delta)

    def decode_bits(self, wires: np.ndarray) -> np.ndarray:
        return lsb(self.label0[wires])               # (k, T)


def garble(circuit: Circuit, T: int, prg: Prg, delta: np.ndarray | None = None,
           preset: tuple[np.ndarray, np.ndarray] | None = None) -> Garbling:
    """Garble ``T`` instances.  ``preset = (wires, labels)`` fixes zero-labels
    of some input wires (the evaluator's, obtained by correlated OT)."""
    delta = new_delta(prg) if delta is None else delta
    L = np.zeros((circuit.n_wires, T, 2), dtype=np.uint64)
    ins = np.concatenate([np.array([ZERO, ONE])] + [g.wires.ravel() for g in circuit.inputs])
    L[ins] = random_labels(prg, (len(ins), T))
    if preset is not None:
        L[preset[0]] = preset[1]
    n_and = circuit.and_count
    tables = np.empty((n_and, T, 2, 2), dtype=np.uint64)
    g0 = 0
    tix = np.arange(T, dtype=np.uint64)
    for c in circuit.chunks:
        if c.op == XOR:
            L[c.out] = L[c.a] ^ L[c.b]
        elif c.op == NOT:
            L[c.out] = L[c.a] ^ delta
        else:
            k = len(c.out)
            A0 = L[c.a].reshape(-1, 2)
            B0 = L[c.b].reshape(-1, 2)
            idx = ((np.arange(g0, g0 + k, dtype=np.uint64)[:, None] * np.uint64(T) + tix)
                   * np.uint64(2)).ravel()
            pa = (A0[:, 0] & _ONE)[:, None]
            pb = (B0[:, 0] & _ONE)[:, None]
            hA0 = _hash(A0, idx)
            hA1 = _hash(A0 ^ delta, idx)
            hB0 = _hash(B0, idx + _ONE)
            hB1 = _hash(B0 ^ delta, idx + _ONE)
            TG = hA0 ^ hA1 ^ (pb * delta)
            WG = hA0 ^ (pa * TG)
            TE = hB0 ^ hB1 ^ A0
            WE = hB0 ^ (pb * (TE ^ A0))
            L[c.out] = (WG ^ WE).reshape(k, T, 2)
            tables[g0:g0 + k, :, 0] = TG.reshape(k, T, 2)
            tables[g0:g0 + k, :, 1] = TE.reshape(k, T, 2)
            g0 += k
    return Garbling(delta, L, tables)


def evaluate(circuit: Circuit, tables: np.ndarray, active: np.ndarray) -> np.ndarray:
    """Evaluate given active labels ``active`` (n_wires, T, 2), filled for the
    constant and input wires.  Returns the completed label array."""
    L = active
    T = L.shape[1]
    g0 = 0
    tix = np.arange(T, dtype=np.uint64)
    for c in circuit.chunks:
        if c.op == XOR:
            L[c.out] = L[c.a] ^ L[c.b]
        elif c.op == NOT:
            L[c.out] = L[c.a]
        else:
            k = len(c.out)
            A = L[c.a].reshape(-1, 2)
            B = L[c.b].reshape(-1, 2)
            idx = ((np.arange(g0, g0 + k, dtype=np.uint64)[:, None] * np.uint64(T) + tix)
                   * np.uint64(2)).ravel()
            TG = tables[g0:g0 + k, :, 0].reshape(-1, 2)
            TE = tables[g0:g0 + k, :, 1].reshape(-1, 2)
            sa = (A[:, 0] & _ONE)[:, None]
            sb = (B[:, 0] & _ONE)[:, None]
            WG = _hash(A, idx) ^ (sa * TG)
            WE = _hash(B, idx + _ONE) ^ (sb * (TE ^ A))
            L[c.out] = (WG ^ WE).reshape(k, T, 2)
            g0 += k
    return L
