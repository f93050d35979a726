"""Symmetric primitives: a seekable AES-CTR PRG and a fixed-key AES hash.

The hash is the tweakable correlation-robust construction
``H(x, i) = pi(sigma(x) ^ i) ^ sigma(x)`` with ``pi`` a fixed-key AES-128
permutation and ``sigma(xL || xR) = (xL ^ xR) || xL`` a linear orthomorphism.
It serves both the OT extension and half-gates garbling.  Everything works on
numpy ``uint8`` arrays of 16-byte blocks so large batches cost one AES call.
"""
from __future__ import annotations

import hashlib
import os

import numpy as np
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

HASH_ID = "aes128-mmo-sigma-v1"
_FIXED_KEY = hashlib.sha256(b"quotient fixed-key hash").digest()[:16]
_ECB = Cipher(algorithms.AES(_FIXED_KEY), modes.ECB())


def aes_ecb(blocks: np.ndarray) -> np.ndarray:
    """Fixed-key AES over an ``(..., 16)`` uint8 array."""
    blocks = np.ascontiguousarray(blocks, dtype=np.uint8)
    enc = _ECB.encryptor()
    out = enc.update(blocks.tobytes()) + enc.finalize()
    return np.frombuffer(out, dtype=np.uint8).reshape(blocks.shape)


def _sigma(x: np.ndarray) -> np.ndarray:
    lo, hi = x[..., :8], x[..., 8:]
    return np.concatenate([lo ^ hi, lo], axis=-1)


def tweaks(start: int, count: int) -> np.ndarray:
    """``count`` consecutive 128-bit little-endian tweak blocks."""
    t = np.zeros((count, 16), dtype=np.uint8)
    idx = np.arange(start, start + count, dtype=np.uint64)
    t[:, :8] = idx.view(np.uint8).reshape(count, 8)
    return t


def hash_blocks(x: np.ndarray, tw: np.ndarray) -> np.ndarray:
    """``H(x, tw)`` for matching ``(..., 16)`` arrays of inputs and tweaks."""
    s = _sigma(np.asarray(x, dtype=np.uint8)) ^ tw
    return aes_ecb(s) ^ s


def hash_wide(x: np.ndarray, tw: np.ndarray, nbytes: int) -> np.ndarray:
    """Hash 16-byte rows of ``x`` to ``nbytes`` bytes each.

    Output block ``c`` of row ``j`` uses tweak ``tw[j]`` with byte 15 set to
    ``c`` (tweak counters never reach that byte).
    """
    m = x.shape[0]
    nblk = -(-nbytes // 16)
    s = _sigma(np.asarray(x, dtype=np.uint8))
    rep = np.repeat((s ^ tw)[:, None, :], nblk, axis=1)
    rep[:, :, 15] ^= np.arange(nblk, dtype=np.uint8)[None, :]
    out = aes_ecb(rep) ^ rep
    return out.reshape(m, nblk * 16)[:, :nbytes]


class Prg:
    """AES-CTR keystream with an explicit block counter, so it can be saved
    and restored (checkpoints record ``counter``)."""

    def __init__(self, seed: bytes | str | int | None = None, counter: int = 0):
        if isinstance(seed, str):
            seed = seed.encode()
        if seed is None:
            seed = os.urandom(16)
        if isinstance(seed, int):
            seed = hashlib.sha256(b"prg" + seed.to_bytes(16, "little", signed=True)).digest()[:16]
        if len(seed) != 16:
            seed = hashlib.sha256(seed).digest()[:16]
        self.key = bytes(seed)
        self.counter = counter

    def bytes(self, n: int) -> bytes:
        if n <= 0:
            return b""
        nblk = -(-n // 16)
        iv = (self.counter % (1 << 128)).to_bytes(16, "big")
        enc = Cipher(algorithms.AES(self.key), modes.CTR(iv)).encryptor()
        out = enc.update(bytes(nblk * 16))
        self.counter += nblk
        return out[:n]

    def array(self, n: int) -> np.ndarray:
        return np.frombuffer(self.bytes(n), dtype=np.uint8).copy()

    def ring(self, shape, sigma: int) -> np.ndarray:
        """Uniform elements of Z_{2^sigma} as uint64."""
        shape = tuple(np.atleast_1d(shape)) if not isinstance(shape, tuple) else shape
        n = int(np.prod(shape, dtype=np.int64))
        v = np.frombuffer(self.bytes(8 * n), dtype=np.uint64).copy()
        if sigma < 64:
            v &= np.uint64((1 << sigma) - 1)
        return v.reshape(shape)

    def bits(self, shape) -> np.ndarray:
        shape = tuple(np.atleast_1d(shape)) if not isinstance(shape, tuple) else shape
        n = int(np.prod(shape, dtype=np.int64))
        packed = self.array(-(-n // 8))
        return np.unpackbits(packed)[:n].reshape(shape)

    def block(self) -> bytes:
        return self.bytes(16)

    def child(self, label: bytes) -> "Prg":
        """Independent PRG derived from this one's key and a label."""
        return Prg(hashlib.sha256(self.key + label).digest()[:16])


def prg_stream(key: bytes, offset_blocks: int, nbytes: int) -> np.ndarray:
    """Bytes ``[16*offset, 16*offset + nbytes)`` of the AES-CTR stream of ``key``."""
    nblk = -(-nbytes // 16)
    iv = offset_blocks.to_bytes(16, "big")
    enc = Cipher(algorithms.AES(key), modes.CTR(iv)).encryptor()
    return np.frombuffer(enc.update(bytes(nblk * 16))[:nbytes], dtype=np.uint8)
