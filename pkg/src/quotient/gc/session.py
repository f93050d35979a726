"""Two-party execution of a circuit: P1 garbles, P2 evaluates.

P2's input labels arrive through XOR-correlated OT (``x`` and ``x ^ delta``)
so no separate label OT is needed.  Circuits are written so their outputs are
already masked by P1's random inputs; P2 then decodes exactly its shares.
"""
from __future__ import annotations

import numpy as np

from ..net import Msg, ProtocolError
from ..ot import cot_recv_xor, cot_send_xor
from .circuit import ONE, ZERO, Circuit, from_bits, group_bits
from .garble import Garbling, evaluate, garble, input_wires, lsb, new_delta

MAX_LABELS = 1 << 22   # wires x instances per garbling pass (64 MiB of labels)


def _own_bits(circuit: Circuit, party: int, inputs: dict, T: int) -> np.ndarray:
    groups = circuit.party_inputs(party)
    if not groups:
        return np.zeros((T, 0), dtype=np.uint8)
    return np.concatenate([group_bits(g, inputs[g.name], T) for g in groups], axis=1)


def _slice_inputs(inputs: dict, lo: int, hi: int) -> dict:
    return {k: np.asarray(v)[lo:hi] for k, v in inputs.items()}


def run_circuit(session, circuit: Circuit, inputs: dict, T: int = 1) -> dict | None:
    """Run ``T`` instances.  ``inputs`` holds this party's groups as ``(T, ...)``
    arrays.  P2 returns ``{output name: values}``; P1 returns ``None``."""
    step = max(1, MAX_LABELS // max(circuit.n_wires, 1))
    if T > step:
        parts = [run_circuit(session, circuit, _slice_inputs(inputs, lo, min(T, lo + step)),
                             min(T, lo + step) - lo) for lo in range(0, T, step)]
        if session.role == 1:
            return None
        return {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}
    with session.phase("gc"):
        if session.role == 1:
            _garbler(session, circuit, inputs, T)
            return None
        return _evaluator(session, circuit, inputs, T)


def _garbler(session, circuit: Circuit, inputs: dict, T: int):
    ch = session.channel
    delta = new_delta(session.prg)
    ev = input_wires(circuit, 2)
    x = cot_send_xor(session, delta.view(np.uint8), len(ev) * T)
    preset = (ev, x.view(np.uint64).reshape(len(ev), T, 2))
    gb: Garbling = garble(circuit, T, session.prg, delta, preset)
    ch.send_array(Msg.GC_TABLES, gb.tables)
    mine = np.concatenate([np.array([ZERO, ONE]), input_wires(circuit, 1)])
    bits = np.concatenate([np.tile([[0, 1]], (T, 1)).astype(np.uint8),
                           _own_bits(circuit, 1, inputs, T)], axis=1)
    ch.send_array(Msg.GC_INPUT_LABELS_GARBLER, gb.encode(mine, bits))
    outs = np.concatenate([g.wires.ravel() for g in circuit.outputs])
    ch.send_array(Msg.GC_OUTPUT_DECODE, np.packbits(gb.decode_bits(outs)))


def _evaluator(session, circuit: Circuit, inputs: dict, T: int) -> dict:
    ch = session.channel
    ev = input_wires(circuit, 2)
    bits = _own_bits(circuit, 2, inputs, T)
    y = cot_recv_xor(session, bits.T.ravel(), 16)
    L = np.zeros((circuit.n_wires, T, 2), dtype=np.uint64)
    L[ev] = y.view(np.uint64).reshape(len(ev), T, 2)
    tables = ch.recv_array(Msg.GC_TABLES, np.uint64, (circuit.and_count, T, 2, 2))
    mine = np.concatenate([np.array([ZERO, ONE]), input_wires(circuit, 1)])
    L[mine] = ch.recv_array(Msg.GC_INPUT_LABELS_GARBLER, np.uint64, (len(mine), T, 2))
    outs = np.concatenate([g.wires.ravel() for g in circuit.outputs])
    packed = ch.recv(Msg.GC_OUTPUT_DECODE)
    if len(packed) != -(-len(outs) * T // 8):
        raise ProtocolError("output decode table has the wrong size")
    dec = np.unpackbits(np.frombuffer(packed, np.uint8))[:len(outs) * T].reshape(len(outs), T)
    L = evaluate(circuit, tables, L)
    ob = lsb(L[outs]) ^ dec                  # (k, T)
    res, k0 = {}, 0
    for g in circuit.outputs:
        k = g.wires.size
        b = ob[k0:k0 + k].T.reshape((T,) + g.wires.shape)
        res[g.name] = from_bits(b) if g.kind == "arith" else b[..., 0]
        k0 += k
    return res


def masked_output_session(session, circuit: Circuit, inputs: dict, T: int = 1):
    """Run a masked-output circuit.  P1's ``inputs`` include its output masks;
    P2 receives ``out - r`` (arithmetic) or ``out ^ r`` (Boolean) per output."""
    return run_circuit(session, circuit, inputs, T)
