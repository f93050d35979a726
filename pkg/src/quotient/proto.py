"""Share-level protocols built on correlated OT.

* ``inner_product_ot``  Boolean-integer inner product from general OT.
* ``inner_product_cot`` the same from two batches of correlated OT, with
  correlation ``f(x) = x + (1 - 2 w_i) a_i`` on each side.
* ``componentwise_mult_cot`` the per-element variant (no final sum).
* ``ternary_matvec`` / ``packed_matvec``  ``W+ a - W- a`` for a Boolean-shared
  ternary matrix; a batch of vectors rides in the lanes of each message.
* ``gilboa_mult`` / ``outer_product``  integer products, one COT per bit of
  one operand.

Every OT message is padded to whole 128-bit blocks, the message length
``ell`` of the cost model ``m (tau + ell)``.  Both parties call each function
with their own shares; which COT batch a party sends or receives is decided
by its role so that the two call sequences line up.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .net import Msg, ProtocolError
from .ot import cot_recv, cot_send, ot_recv, ot_send
from .shares import ArithShare, BoolShare, SharedTernaryMatrix

LANE_DTYPES = {8: np.uint8, 16: np.uint16, 32: np.uint32, 64: np.uint64}
BLOCK_BITS = 128


@dataclass(frozen=True)
class PackedLaneConfig:
    lane_bits: int = 16

    def __post_init__(self):
        if self.lane_bits not in LANE_DTYPES:
            raise ValueError("lane width must be 8, 16, 32 or 64")

    @property
    def lanes_per_block(self) -> int:
        return BLOCK_BITS // self.lane_bits

    @property
    def dtype(self):
        return LANE_DTYPES[self.lane_bits]

    def padded(self, lanes: int) -> int:
        k = self.lanes_per_block
        return max(k, -(-lanes // k) * k)


@dataclass
class MatVecJob:
    matrix: SharedTernaryMatrix
    vector: ArithShare
    lanes: PackedLaneConfig


# ---------------------------------------------------------------------------
# helpers

_OPS = {"ip_ot": 1, "ip_cot": 2, "cmul": 3, "matvec": 4, "gilboa": 5, "outer": 6}


def _job_header(session, op: str, n: int, m: int, lane_bits: int):
    """P1 announces the job; P2 checks it against its own view."""
    hdr = struct.pack(">BIIB", _OPS[op], n, m, lane_bits)
    if session.role == 1:
        session.channel.send_frame(Msg.PROTO_COT_JOB_HEADER, hdr)
    else:
        got = session.channel.recv(Msg.PROTO_COT_JOB_HEADER)
        if got != hdr:
            raise ProtocolError(f"job mismatch: peer {got.hex()} vs local {hdr.hex()}")


def _lanes(v: np.ndarray, dtype, width: int) -> np.ndarray:
    """Rows of lane values, zero-padded to ``width`` lanes."""
    v = np.asarray(v).astype(dtype)
    out = np.zeros((v.shape[0], width), dtype=dtype)
    out[:, :v.shape[1]] = v
    return out


def _two_way_cot(session, addend: np.ndarray, choices: np.ndarray, dtype):
    """Protocol 2 lines 2-3: P1 sends first, then P2.

    Returns ``(x, y)``: this party's sender outputs and chooser outputs.
    """
    k = addend.shape[1]
    if session.role == 1:
        x = cot_send(session, addend)
        y = cot_recv(session, choices, k, dtype)
    else:
        y = cot_recv(session, choices, k, dtype)
        x = cot_send(session, addend)
    return x, y


def _bool_int_products(session, w: np.ndarray, a: np.ndarray, lanes: PackedLaneConfig):
    """Per-pair shares of ``w_j * a_j`` where ``a_j`` is a row of lanes.

    ``w`` has shape (k,), ``a`` shape (k, L).  Returns (k, L) lane shares.
    """
    dt = lanes.dtype
    k, L = a.shape
    width = lanes.padded(L)
    a = np.asarray(a).astype(dt)
    w = np.asarray(w, dtype=np.uint8) & 1
    sign = (np.ones(k, dtype=np.int64) - 2 * w).astype(dt)      # 1 - 2w mod 2^lane
    addend = _lanes(sign[:, None] * a, dt, width)
    x, y = _two_way_cot(session, addend, w, dt)
    own = w.astype(dt)[:, None] * a
    return (own - x[:, :L] + y[:, :L]).astype(dt)


# ---------------------------------------------------------------------------
# inner products

def inner_product_ot(session, w: BoolShare, a: ArithShare) -> ArithShare:
    """Protocol 1: two OTs per element, messages masked with fresh randomness."""
    sigma = a.sigma
    m = len(w.bits)
    if a.value.shape != (m,):
        raise ValueError("length mismatch")
    _job_header(session, "ip_ot", 1, m, sigma)
    dt = LANE_DTYPES[sigma]
    nbytes = BLOCK_BITS // 8
    wi = w.bits.astype(dt)
    ai = a.value.astype(dt)
    z = session.prg.ring((m,), sigma).astype(dt)
    m0 = np.zeros((m, nbytes), dtype=np.uint8)
    m1 = np.zeros((m, nbytes), dtype=np.uint8)
    isz = np.dtype(dt).itemsize
    m0[:, :isz] = ((wi * ai - z).astype(dt)).reshape(m, 1).view(np.uint8)
    m1[:, :isz] = (((1 - wi) * ai - z).astype(dt)).reshape(m, 1).view(np.uint8)
    if session.role == 1:
        with session.phase("ot"):
            ot_send(session, m0, m1)
            got = ot_recv(session, w.bits, nbytes)
    else:
        with session.phase("ot"):
            got = ot_recv(session, w.bits, nbytes)
            ot_send(session, m0, m1)
    zp = np.ascontiguousarray(got[:, :isz]).view(dt).ravel()
    total = np.concatenate([z, zp]).sum(dtype=dt)
    return ArithShare(np.array([total], dtype=np.uint64), sigma, session.role)


def inner_product_cot(session, w: BoolShare, a: ArithShare) -> ArithShare:
    """Protocol 2: two batches of m correlated OTs plus local sums."""
    m = len(w.bits)
    if a.value.shape != (m,):
        raise ValueError("length mismatch")
    _job_header(session, "ip_cot", 1, m, a.sigma)
    lanes = PackedLaneConfig(a.sigma)
    with session.phase("cot"):
        p = _bool_int_products(session, w.bits, a.value[:, None], lanes)
    total = p.sum(axis=0, dtype=lanes.dtype)
    return ArithShare(total.astype(np.uint64), a.sigma, session.role)


def componentwise_mult_cot(session, w: BoolShare, a: ArithShare) -> ArithShare:
    """Shares of ``w_j * a_j`` for each j (Protocol 2 without the final sum)."""
    shape = a.value.shape
    if w.bits.shape != shape:
        raise ValueError("shape mismatch")
    k = int(np.prod(shape, dtype=np.int64))
    _job_header(session, "cmul", 1, k, a.sigma)
    lanes = PackedLaneConfig(a.sigma)
    with session.phase("cot"):
        p = _bool_int_products(session, w.bits.ravel(), a.value.reshape(k, 1), lanes)
    return ArithShare(p[:, 0].astype(np.uint64).reshape(shape), a.sigma, session.role)


# ---------------------------------------------------------------------------
# ternary matrix-vector products

MAX_COT_BYTES = 1 << 26


def packed_matvec(session, W: SharedTernaryMatrix, a: ArithShare,
                  lanes: PackedLaneConfig | None = None) -> ArithShare:
    """``W a`` for ``a`` of shape (m,) or (m, B), result mod ``2^lane_bits``.

    All ``2nm`` COTs of one direction (W+ rows then W- rows) form one batch,
    split only to bound memory; a batch of B vectors shares each COT.
    """
    lanes = lanes or PackedLaneConfig(16)
    dt = lanes.dtype
    n, m = W.shape
    vec = a.value.ndim == 1
    av = a.value.reshape(m, -1)
    B = av.shape[1]
    _job_header(session, "matvec", n, m, lanes.lane_bits)
    bits = np.concatenate([W.plus.bits, W.minus.bits])           # (2n, m)
    width = lanes.padded(B)
    rows_per = max(1, MAX_COT_BYTES // max(1, m * width * np.dtype(dt).itemsize))
    acc = np.zeros((2 * n, B), dtype=dt)
    with session.phase("cot"):
        for r0 in range(0, 2 * n, rows_per):
            blk = bits[r0:r0 + rows_per]
            rr = blk.shape[0]
            a_rep = np.broadcast_to(av.astype(dt)[None], (rr, m, B)).reshape(rr * m, B)
            p = _bool_int_products(session, blk.ravel(), a_rep, lanes)
            acc[r0:r0 + rr] = p.reshape(rr, m, B).sum(axis=1, dtype=dt)
    z = (acc[:n] - acc[n:]).astype(dt)
    z = z[:, 0] if vec else z
    return ArithShare(z.astype(np.uint64), lanes.lane_bits, session.role)


def ternary_matvec(session, job_or_W, a: ArithShare | None = None,
                   lanes: PackedLaneConfig | None = None) -> ArithShare:
    """Protocol 3 for a single vector (also accepts a ``MatVecJob``)."""
    if isinstance(job_or_W, MatVecJob):
        return packed_matvec(session, job_or_W.matrix, job_or_W.vector, job_or_W.lanes)
    return packed_matvec(session, job_or_W, a, lanes)


# ---------------------------------------------------------------------------
# Gilboa products

def _bit_decompose(v: np.ndarray, sigma: int) -> np.ndarray:
    """(k,) ring elements -> (k, sigma) bits, LSB first."""
    sh = np.arange(sigma, dtype=np.uint64)
    return ((v.astype(np.uint64)[:, None] >> sh) & np.uint64(1)).astype(np.uint8)


def _cross_terms(session, xbits_own, y_own, sigma):
    """Shares of ``sum_k 2^k x_k * y_row`` for both cross terms.

    ``xbits_own`` (k, sigma) are this party's choice bits, ``y_own`` (k, L)
    the lane vectors this party sends scaled by powers of two.
    Returns (k, L): this party's share of ``x_own * y_other + x_other * y_own``.
    """
    dt = LANE_DTYPES[sigma]
    k, L = y_own.shape
    nb = xbits_own.shape[1]
    lanes = PackedLaneConfig(sigma)
    width = lanes.padded(L)
    pw = (np.uint64(1) << np.arange(nb, dtype=np.uint64)).astype(dt)
    addend = (y_own.astype(dt)[:, None, :] * pw[None, :, None]).reshape(k * nb, L)
    addend = _lanes(addend, dt, width)
    choices = xbits_own.reshape(k * nb)
    # direction 1: P2 sends (y2 scaled), P1 chooses with bits of x1
    if session.role == 1:
        y = cot_recv(session, choices, width, dt)
        x = cot_send(session, addend)
    else:
        x = cot_send(session, addend)
        y = cot_recv(session, choices, width, dt)
    part = (y[:, :L] - x[:, :L]).astype(dt).reshape(k, nb, L)
    return part.sum(axis=1, dtype=dt)


def gilboa_mult(session, x: ArithShare, y: ArithShare, bit_width: int | None = None) -> ArithShare:
    """Element-wise ``x * y`` mod ``2^sigma``; one COT per bit of ``x`` per element.

    ``bit_width`` defaults to sigma (the shares are uniform ring elements, so
    all their bits matter).
    """
    sigma = x.sigma
    if y.sigma != sigma or x.shape != y.shape:
        raise ValueError("operands differ in ring or shape")
    bw = bit_width or sigma
    shape = x.shape
    k = int(np.prod(shape, dtype=np.int64))
    _job_header(session, "gilboa", 1, k, sigma)
    dt = LANE_DTYPES[sigma]
    xv = x.value.reshape(k)
    yv = y.value.reshape(k, 1)
    with session.phase("cot"):
        cross = _cross_terms(session, _bit_decompose(xv, bw), yv, sigma)
    own = (xv.astype(dt) * yv[:, 0].astype(dt)).astype(dt)
    out = (own + cross[:, 0]).astype(dt)
    return ArithShare(out.astype(np.uint64).reshape(shape), sigma, session.role)


def outer_product(session, x: ArithShare, y: ArithShare) -> ArithShare:
    """``sum_b x_b y_b^T`` for ``x`` (B, p) and ``y`` (B, q); 1-D inputs mean B = 1.

    Bits of the operand with fewer columns are the COT choices, so each COT
    carries a whole row of the other operand in its lanes.
    """
    sigma = x.sigma
    xv = x.value.reshape(1, -1) if x.value.ndim == 1 else x.value
    yv = y.value.reshape(1, -1) if y.value.ndim == 1 else y.value
    if xv.shape[0] != yv.shape[0] or y.sigma != sigma:
        raise ValueError("batch or ring mismatch")
    B, p = xv.shape
    q = yv.shape[1]
    _job_header(session, "outer", p, q, sigma)
    dt = LANE_DTYPES[sigma]
    flip = q < p
    if flip:
        xv, yv, p, q = yv, xv, q, p
    # bits of x[b, i] select rows y[b, :]
    bits = _bit_decompose(xv.reshape(B * p), sigma)
    rows = np.repeat(yv.astype(dt), p, axis=0)                  # (B*p, q) aligned with bits
    with session.phase("cot"):
        cross = _cross_terms(session, bits, rows, sigma)        # (B*p, q)
    own = xv.astype(dt)[:, :, None] * yv.astype(dt)[:, None, :]
    tot = (own.sum(axis=0, dtype=dt) + cross.reshape(B, p, q).sum(axis=0, dtype=dt)).astype(dt)
    if flip:
        tot = tot.T
    return ArithShare(np.ascontiguousarray(tot).astype(np.uint64), sigma, session.role)
