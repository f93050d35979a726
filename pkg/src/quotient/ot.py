"""Oblivious transfer: base OTs, IKNP extension, and correlated OT.

Base OTs use the "simplest OT" of Chou and Orlandi over the 2048-bit MODP
group of RFC 3526 (prime-order subgroup generated by 2).  They run once per
session in both directions so either party can act as extension sender.

The extension follows IKNP with the correlated-OT shortcut of ALSZ: the
chooser sends the ``m x tau`` matrix ``U`` and the sender answers with one
``ell``-bit correction per OT, for ``m (tau + ell)`` bits in total.
Correlations are either lane-wise additive (``y = x + addend`` on unsigned
lanes) or XOR with ``Delta`` (garbled-circuit input labels).
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import gmpy2
import numpy as np

from .crypto import hash_wide, prg_stream
from .net import Msg, ProtocolError

# RFC 3526, 2048-bit MODP group (id 14)
_P_HEX = (
    "FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD129024E088A67CC74"
    "020BBEA63B139B22514A08798E3404DDEF9519B3CD3A431B302B0A6DF25F1437"
    "4FE1356D6D51C245E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7ED"
    "EE386BFB5A899FA5AE9F24117C4B1FE649286651ECE45B3DC2007CB8A163BF05"
    "98DA48361C55D39A69163FA8FD24CF5F83655D23DCA3AD961C62F356208552BB"
    "9ED529077096966D670C354E4ABC9804F1746C08CA18217C32905E462E36CE3B"
    "E39E772C180E86039B2783A2EC07A28FB5C55DF06F4C52C9DE2BCBF695581718"
    "3995497CEA956AE515D2261898FA051015728E5A8AACAA68FFFFFFFFFFFFFFFF"
)
P = gmpy2.mpz(int(_P_HEX, 16))
Q = (P - 1) // 2
G = gmpy2.mpz(2)
ELEM_BYTES = 256
TAU = 128
BASE_OT_ID = "co15-modp2048-sha256"


def _rand_exp(prg) -> gmpy2.mpz:
    # 256-bit exponents give 128-bit security in this group
    return gmpy2.mpz(int.from_bytes(prg.bytes(32), "big")) % Q or gmpy2.mpz(1)


def _elem_bytes(x) -> bytes:
    return int(x).to_bytes(ELEM_BYTES, "big")


def _parse_elem(b: bytes) -> gmpy2.mpz:
    x = gmpy2.mpz(int.from_bytes(b, "big"))
    if not 1 < x < P - 1:
        raise ProtocolError("malformed group element")
    return x


def _kdf(i: int, a: bytes, b: bytes, shared) -> bytes:
    return hashlib.sha256(i.to_bytes(4, "big") + a + b + _elem_bytes(shared)).digest()[:16]


def base_ot_send(session, count: int = TAU) -> list[tuple[bytes, bytes]]:
    """Sender side: returns ``count`` pairs of 16-byte seeds."""
    ch = session.channel
    a = _rand_exp(session.prg)
    A = gmpy2.powmod(G, a, P)
    a_b = _elem_bytes(A)
    ch.send_frame(Msg.BASE_OT_A, a_b)
    blob = ch.recv(Msg.BASE_OT_B)
    if len(blob) != count * ELEM_BYTES:
        raise ProtocolError("base OT: wrong number of group elements")
    t_inv = gmpy2.invert(gmpy2.powmod(A, a, P), P)
    out = []
    for i in range(count):
        b_b = blob[i * ELEM_BYTES:(i + 1) * ELEM_BYTES]
        B = _parse_elem(b_b)
        Ba = gmpy2.powmod(B, a, P)
        out.append((_kdf(i, a_b, b_b, Ba), _kdf(i, a_b, b_b, Ba * t_inv % P)))
    return out


def base_ot_receive(session, choices) -> list[bytes]:
    """Chooser side: returns the seed selected by each choice bit."""
    ch = session.channel
    a_b = ch.recv(Msg.BASE_OT_A)
    if len(a_b) != ELEM_BYTES:
        raise ProtocolError("base OT: bad sender element")
    A = _parse_elem(a_b)
    if gmpy2.powmod(A, Q, P) != 1:
        raise ProtocolError("malformed group element: not in the prime-order subgroup")
    bs, parts = [], []
    for c in choices:
        b = _rand_exp(session.prg)
        B = gmpy2.powmod(G, b, P)
        if c:
            B = B * A % P
        bs.append(b)
        parts.append(_elem_bytes(B))
    ch.send_frame(Msg.BASE_OT_B, b"".join(parts))
    return [_kdf(i, a_b, parts[i], gmpy2.powmod(A, b, P)) for i, b in enumerate(bs)]


# ---------------------------------------------------------------------------

def _pack(bits: np.ndarray) -> np.ndarray:
    return np.packbits(np.asarray(bits, dtype=np.uint8), bitorder="little")


def transpose_bits(mat: np.ndarray, chunk: int = 1 << 16) -> np.ndarray:
    """``(128, mb)`` uint8 bit matrix to ``(8*mb, 16)`` rows, 128-bit each."""
    rows, mb = mat.shape
    out = np.empty((mb * 8, rows // 8), dtype=np.uint8)
    step = chunk // 8
    for c0 in range(0, mb, step):
        sub = np.unpackbits(mat[:, c0:c0 + step], axis=1, bitorder="little")
        out[c0 * 8:c0 * 8 + sub.shape[1]] = np.packbits(sub.T, axis=1, bitorder="little")
    return out


@dataclass
class OtState:
    """Seeds from the base OTs, for both extension directions."""

    s_bits: np.ndarray          # my choice bits when I am the extension sender
    s_packed: np.ndarray        # same, packed into 16 bytes
    sender_keys: list           # k_i^{s_i}
    chooser_keys: list          # (k_i^0, k_i^1) when I am the extension chooser
    sender_offset: int = 0      # PRG blocks consumed per column
    chooser_offset: int = 0
    sender_tweak: int = 0       # OT index counters, mirrored by the peer
    chooser_tweak: int = 0

    @classmethod
    def setup(cls, session) -> "OtState":
        # direction 1: P1 is base-OT sender (extension chooser); then reversed
        s_bits = session.prg.bits(TAU)
        if session.role == 1:
            pairs = base_ot_send(session, TAU)
            keys = base_ot_receive(session, s_bits)
        else:
            keys = base_ot_receive(session, s_bits)
            pairs = base_ot_send(session, TAU)
        return cls(s_bits, _pack(s_bits), keys, pairs)


def _chooser_matrix(session, r: np.ndarray):
    """Chooser half of the extension: send U, return rows t_j and tweak base."""
    st = session.ot
    m = len(r)
    mp = -(-m // 128) * 128
    mb = mp // 8
    rp = np.zeros(mp, dtype=np.uint8)
    rp[:m] = r
    r_packed = _pack(rp)
    T = np.empty((TAU, mb), dtype=np.uint8)
    U = np.empty((TAU, mb), dtype=np.uint8)
    for i, (k0, k1) in enumerate(st.chooser_keys):
        T[i] = prg_stream(k0, st.chooser_offset, mb)
        U[i] = T[i] ^ prg_stream(k1, st.chooser_offset, mb) ^ r_packed
    st.chooser_offset += mb // 16
    session.channel.send_array(Msg.EXT_MATRIX, U)
    tw = st.chooser_tweak
    st.chooser_tweak += m
    return transpose_bits(T)[:m], tw


def _sender_matrix(session, m: int):
    st = session.ot
    mp = -(-m // 128) * 128
    mb = mp // 8
    U = session.channel.recv_array(Msg.EXT_MATRIX, np.uint8, (TAU, mb))
    Qm = np.empty((TAU, mb), dtype=np.uint8)
    for i, k in enumerate(st.sender_keys):
        Qm[i] = prg_stream(k, st.sender_offset, mb)
        if st.s_bits[i]:
            Qm[i] ^= U[i]
    st.sender_offset += mb // 16
    tw = st.sender_tweak
    st.sender_tweak += m
    return transpose_bits(Qm)[:m], tw


def _tweaks(start: int, m: int) -> np.ndarray:
    t = np.zeros((m, 16), dtype=np.uint8)
    t[:, :8] = np.arange(start, start + m, dtype=np.uint64).view(np.uint8).reshape(m, 8)
    return t


def _lane_view(b: np.ndarray, dtype) -> np.ndarray:
    dt = np.dtype(dtype).newbyteorder("<")
    return np.ascontiguousarray(b).view(dt)


# ---------------------------------------------------------------------------
# correlated OT, additive lanes

@dataclass
class CotBatchResult:
    sender_x: np.ndarray | None = None
    chooser_y: np.ndarray | None = None
    choices: np.ndarray | None = None


def cot_send(session, addend: np.ndarray) -> np.ndarray:
    """Extension sender with lane-wise additive correlations.

    ``addend`` has shape ``(m, k)`` and an unsigned dtype (the lane width).
    Returns random ``x`` of the same shape; the chooser obtains ``x`` when
    its bit is 0 and ``x + addend`` (mod lane) when it is 1.
    """
    addend = np.asarray(addend)
    m, k = addend.shape
    if m == 0:
        return addend.copy()
    dt = np.dtype(addend.dtype).newbyteorder("<")
    nbytes = k * dt.itemsize
    q, tw0 = _sender_matrix(session, m)
    tw = _tweaks(tw0, m)
    x = _lane_view(hash_wide(q, tw, nbytes), dt).astype(addend.dtype)
    h1 = _lane_view(hash_wide(q ^ session.ot.s_packed, tw, nbytes), dt).astype(addend.dtype)
    corr = (x + addend - h1).astype(dt)
    session.channel.send_array(Msg.EXT_CORRECTION, corr)
    return x


def cot_recv(session, choices, k: int, dtype) -> np.ndarray:
    r = np.asarray(choices, dtype=np.uint8) & 1
    m = len(r)
    dt = np.dtype(dtype).newbyteorder("<")
    if m == 0:
        return np.zeros((0, k), dtype=dtype)
    nbytes = k * dt.itemsize
    t, tw0 = _chooser_matrix(session, r)
    h = _lane_view(hash_wide(t, _tweaks(tw0, m), nbytes), dt).astype(dtype)
    corr = session.channel.recv_array(Msg.EXT_CORRECTION, dt, (m, k)).astype(dtype)
    return np.where(r[:, None] == 1, h + corr, h).astype(dtype)


# correlated OT, XOR with Delta

def cot_send_xor(session, delta: np.ndarray, m: int) -> np.ndarray:
    """Returns ``x`` (m, nbytes); chooser with bit 1 gets ``x ^ delta``."""
    delta = np.asarray(delta, dtype=np.uint8)
    nbytes = delta.shape[-1]
    if m == 0:
        return np.zeros((0, nbytes), dtype=np.uint8)
    q, tw0 = _sender_matrix(session, m)
    tw = _tweaks(tw0, m)
    x = hash_wide(q, tw, nbytes)
    corr = x ^ delta ^ hash_wide(q ^ session.ot.s_packed, tw, nbytes)
    session.channel.send_array(Msg.EXT_CORRECTION, corr)
    return x


def cot_recv_xor(session, choices, nbytes: int) -> np.ndarray:
    r = np.asarray(choices, dtype=np.uint8) & 1
    m = len(r)
    if m == 0:
        return np.zeros((0, nbytes), dtype=np.uint8)
    t, tw0 = _chooser_matrix(session, r)
    h = hash_wide(t, _tweaks(tw0, m), nbytes)
    corr = session.channel.recv_array(Msg.EXT_CORRECTION, np.uint8, (m, nbytes))
    return np.where(r[:, None] == 1, h ^ corr, h)


def cot_extension(session, *, addend=None, choices=None, k=None, dtype=None) -> CotBatchResult:
    """Role-neutral entry point: the party passing ``addend`` is the sender."""
    if addend is not None:
        return CotBatchResult(sender_x=cot_send(session, addend))
    y = cot_recv(session, choices, k, dtype)
    return CotBatchResult(chooser_y=y, choices=np.asarray(choices, dtype=np.uint8))


# ---------------------------------------------------------------------------
# chosen-message OT

def ot_send(session, m0: np.ndarray, m1: np.ndarray) -> None:
    m0 = np.asarray(m0, dtype=np.uint8)
    m1 = np.asarray(m1, dtype=np.uint8)
    m, nbytes = m0.shape
    if m == 0:
        return
    q, tw0 = _sender_matrix(session, m)
    tw = _tweaks(tw0, m)
    c0 = m0 ^ hash_wide(q, tw, nbytes)
    c1 = m1 ^ hash_wide(q ^ session.ot.s_packed, tw, nbytes)
    session.channel.send_array(Msg.EXT_CORRECTION, np.concatenate([c0, c1], axis=1))


def ot_recv(session, choices, nbytes: int) -> np.ndarray:
    r = np.asarray(choices, dtype=np.uint8) & 1
    m = len(r)
    if m == 0:
        return np.zeros((0, nbytes), dtype=np.uint8)
    t, tw0 = _chooser_matrix(session, r)
    h = hash_wide(t, _tweaks(tw0, m), nbytes)
    c = session.channel.recv_array(Msg.EXT_CORRECTION, np.uint8, (m, 2 * nbytes))
    return np.where(r[:, None] == 1, c[:, nbytes:], c[:, :nbytes]) ^ h


def ot_extension(session, *, msgs=None, choices=None, nbytes=None):
    if msgs is not None:
        return ot_send(session, *msgs)
    return ot_recv(session, choices, nbytes)
