"""Additive and XOR secret sharing, plus the ternary weight decomposition.

Arithmetic shares live in ``uint64`` arrays reduced mod ``2**sigma``; Boolean
shares are ``uint8`` arrays of 0/1 (packed only on the wire and on disk).
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .crypto import Prg

SIGMAS = (8, 16, 32, 64)


def ring_mask(sigma: int) -> np.uint64:
    return np.uint64((1 << sigma) - 1) if sigma < 64 else np.uint64(0xFFFFFFFFFFFFFFFF)


def to_ring(x, sigma: int) -> np.ndarray:
    """Signed integers to ring elements."""
    x = np.asarray(x)
    if x.dtype == np.uint64:
        return x & ring_mask(sigma)
    return np.asarray(x, dtype=np.int64).astype(np.uint64) & ring_mask(sigma)


def from_ring(v, sigma: int) -> np.ndarray:
    """Ring elements to signed integers in ``[-2**(sigma-1), 2**(sigma-1))``."""
    v = np.asarray(v, dtype=np.uint64) & ring_mask(sigma)
    if sigma == 64:
        return v.view(np.int64)
    s = v.astype(np.int64)
    return np.where(s >= (1 << (sigma - 1)), s - (1 << sigma), s)


@dataclass(frozen=True)
class ArithShare:
    value: np.ndarray
    sigma: int
    party: int

    def __post_init__(self):
        object.__setattr__(self, "value", to_ring(self.value, self.sigma))

    @property
    def shape(self):
        return self.value.shape

    def _check(self, other: "ArithShare"):
        if other.sigma != self.sigma or other.party != self.party:
            raise ValueError("shares from different rings or parties")

    def __add__(self, other):
        if isinstance(other, ArithShare):
            self._check(other)
            return ArithShare(self.value + other.value, self.sigma, self.party)
        return NotImplemented

    def __sub__(self, other):
        if isinstance(other, ArithShare):
            self._check(other)
            return ArithShare(self.value - other.value, self.sigma, self.party)
        return NotImplemented

    def __neg__(self):
        return ArithShare(np.uint64(0) - self.value, self.sigma, self.party)

    def __getitem__(self, idx):
        return ArithShare(self.value[idx], self.sigma, self.party)

    def mul_const(self, c) -> "ArithShare":
        return ArithShare(self.value * to_ring(c, 64), self.sigma, self.party)

    def add_const(self, c) -> "ArithShare":
        """Add a public constant; only party 1 actually adds it."""
        if self.party != 1:
            return self
        return ArithShare(self.value + to_ring(c, 64), self.sigma, self.party)

    def reduce(self, sigma: int) -> "ArithShare":
        """Reinterpret in a smaller ring (valid: reduction is a homomorphism)."""
        if sigma > self.sigma:
            raise ValueError("cannot lift a share to a larger ring locally")
        return ArithShare(self.value, sigma, self.party)

    def reshape(self, *shape) -> "ArithShare":
        return ArithShare(self.value.reshape(*shape), self.sigma, self.party)


@dataclass(frozen=True)
class BoolShare:
    bits: np.ndarray
    party: int

    def __post_init__(self):
        object.__setattr__(self, "bits", np.asarray(self.bits, dtype=np.uint8) & 1)

    @property
    def shape(self):
        return self.bits.shape

    def __xor__(self, other: "BoolShare") -> "BoolShare":
        return BoolShare(self.bits ^ other.bits, self.party)

    def __getitem__(self, idx):
        return BoolShare(self.bits[idx], self.party)

    def xor_const(self, c) -> "BoolShare":
        if self.party != 1:
            return self
        return BoolShare(self.bits ^ (np.asarray(c, dtype=np.uint8) & 1), self.party)

    @property
    def T(self) -> "BoolShare":
        return BoolShare(self.bits.T, self.party)

    def reshape(self, *shape) -> "BoolShare":
        return BoolShare(self.bits.reshape(*shape), self.party)


@dataclass(frozen=True)
class SharedTernaryMatrix:
    plus: BoolShare
    minus: BoolShare

    @property
    def shape(self):
        return self.plus.shape

    @property
    def T(self) -> "SharedTernaryMatrix":
        return SharedTernaryMatrix(self.plus.T, self.minus.T)

    @property
    def party(self) -> int:
        return self.plus.party


def share_arith(x, sigma: int, rng: Prg) -> tuple[ArithShare, ArithShare]:
    x = to_ring(x, sigma)
    s2 = rng.ring(x.shape, sigma)
    return ArithShare(x - s2, sigma, 1), ArithShare(s2, sigma, 2)


def share_bool(bits, rng: Prg) -> tuple[BoolShare, BoolShare]:
    bits = np.asarray(bits, dtype=np.uint8) & 1
    s2 = rng.bits(bits.shape)
    return BoolShare(bits ^ s2, 1), BoolShare(s2, 2)


def reconstruct_arith(s1: ArithShare, s2: ArithShare, signed: bool = True) -> np.ndarray:
    if s1.sigma != s2.sigma:
        raise ValueError("sigma mismatch")
    v = (s1.value + s2.value) & ring_mask(s1.sigma)
    return from_ring(v, s1.sigma) if signed else v


def reconstruct_bool(b1: BoolShare, b2: BoolShare) -> np.ndarray:
    return b1.bits ^ b2.bits


def local_add(a: ArithShare, b: ArithShare) -> ArithShare:
    return a + b


def local_sub(a: ArithShare, b: ArithShare) -> ArithShare:
    return a - b


def local_const_mul(a: ArithShare, c) -> ArithShare:
    return a.mul_const(c)


def ternary_parts(w) -> tuple[np.ndarray, np.ndarray]:
    w = np.asarray(w, dtype=np.int64)
    if np.any(np.abs(w) > 1):
        raise ValueError("matrix is not ternary")
    return (w == 1).astype(np.uint8), (w == -1).astype(np.uint8)


def decompose_ternary(w, rng: Prg) -> tuple[SharedTernaryMatrix, SharedTernaryMatrix]:
    wp, wm = ternary_parts(getattr(w, "data", w))
    p1, p2 = share_bool(wp, rng)
    m1, m2 = share_bool(wm, rng)
    return SharedTernaryMatrix(p1, m1), SharedTernaryMatrix(p2, m2)


def reconstruct_ternary(a: SharedTernaryMatrix, b: SharedTernaryMatrix) -> np.ndarray:
    wp = reconstruct_bool(a.plus, b.plus).astype(np.int64)
    wm = reconstruct_bool(a.minus, b.minus).astype(np.int64)
    if np.any(wp & wm):
        raise ValueError("W+ and W- overlap")
    return wp - wm


# ---------------------------------------------------------------------------
# share files

MAGIC = b"QSHR"
FILE_VERSION = 1
_DTYPES = {1: np.uint8, 8: np.uint8, 16: np.uint16, 32: np.uint32, 64: np.uint64}


class ShareFileError(ValueError):
    pass


def dump_share(share: ArithShare | BoolShare) -> bytes:
    """Serialize a share; Boolean shares are stored with sigma = 1, one byte per bit."""
    if isinstance(share, BoolShare):
        sigma, data = 1, share.bits
    else:
        sigma, data = share.sigma, share.value
    shape = data.shape
    head = MAGIC + struct.pack(">HBI", FILE_VERSION, sigma, len(shape))
    head += struct.pack(f">{len(shape)}I", *shape)
    body = np.ascontiguousarray(data).astype(np.dtype(_DTYPES[sigma]).newbyteorder("<"))
    return head + body.tobytes()


def load_share(blob: bytes, party: int) -> ArithShare | BoolShare:
    if blob[:4] != MAGIC:
        raise ShareFileError("bad magic")
    version, sigma, rank = struct.unpack(">HBI", blob[4:11])
    if version != FILE_VERSION:
        raise ShareFileError(f"unsupported share-file version {version}")
    if sigma not in _DTYPES:
        raise ShareFileError(f"unsupported sigma {sigma}")
    shape = struct.unpack(f">{rank}I", blob[11:11 + 4 * rank])
    dt = np.dtype(_DTYPES[sigma]).newbyteorder("<")
    n = int(np.prod(shape, dtype=np.int64))
    body = blob[11 + 4 * rank:]
    if len(body) != n * dt.itemsize:
        raise ShareFileError("truncated share file")
    data = np.frombuffer(body, dtype=dt).reshape(shape)
    if sigma == 1:
        return BoolShare(data.astype(np.uint8), party)
    return ArithShare(data.astype(np.uint64), sigma, party)


def write_share_file(path, share) -> None:
    Path(path).write_bytes(dump_share(share))


def read_share_file(path, party: int):
    return load_share(Path(path).read_bytes(), party)
