"""Fixed-point numbers, quantization and gradient normalization.

A fixed-point value is an integer ``a`` read as ``a / 2**prec``.  The
array-level helpers (``round_shift``, ``sat``, ``act_grad_int`` ...) work on
plain ``int64`` numpy arrays and are what the training engine uses in its hot
loops.  ``FixedTensor`` wraps them with bit-width and precision bookkeeping.

Every rounding is round-half-away-from-zero, and every data-dependent max is
approximated by the bitwise OR of magnitudes so that the garbled circuits in
``quotient.gc`` reproduce these functions bit for bit.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, asdict
from fractions import Fraction

import numpy as np

__all__ = [
    "FixedTensor", "PrecisionConfig", "round_shift", "sat", "or_magnitude",
    "quant_nearest", "saturate", "quantize", "ternarize", "quant_activation",
    "npow_exact", "npow_smear", "npow_exact_array", "cpow", "quant_act_grad",
    "quant_weight_grad", "quant_weight_grad_wage", "act_grad_int",
    "weight_grad_int", "ternarize_int", "activation_int",
]


# ---------------------------------------------------------------------------
# array-level primitives

def round_shift(a, k: int) -> np.ndarray:
    """Return ``round(a / 2**k)`` with ties away from zero.

    ``k <= 0`` is an exact left shift.  Works element-wise on int64 arrays.
    """
    a = np.asarray(a, dtype=np.int64)
    if k <= 0:
        return a << np.int64(-k)
    half = np.int64(1) << np.int64(k - 1)
    return (a + half - (a < 0)) >> np.int64(k)


def round_shift_var(a, k) -> np.ndarray:
    """``round_shift`` with a per-element shift amount ``k`` (may be negative)."""
    a = np.asarray(a, dtype=np.int64)
    k = np.broadcast_to(np.asarray(k, dtype=np.int64), a.shape)
    left = a << np.maximum(-k, 0)
    kk = np.maximum(k, 1)
    half = np.int64(1) << (kk - 1)
    right = (a + half - (a < 0)) >> kk
    return np.where(k > 0, right, left)


def sat(a, q: int) -> np.ndarray:
    """Clamp integers to ``[-(2**q - 1), 2**q - 1]``."""
    m = (1 << q) - 1
    return np.clip(np.asarray(a, dtype=np.int64), -m, m)


def or_magnitude(a) -> int:
    """Bitwise OR of all ``|a_i|``; an upper bound on the max within 2x."""
    a = np.abs(np.asarray(a, dtype=np.int64)).ravel()
    if a.size == 0:
        return 0
    return int(np.bitwise_or.reduce(a))


def npow_exact(x: int) -> int:
    """Smallest ``s`` with ``2**s >= x``; 0 for ``x`` in {0, 1}."""
    x = int(x)
    if x < 0:
        raise ValueError("npow of a negative magnitude")
    return 0 if x <= 1 else (x - 1).bit_length()


def npow_exact_array(x) -> np.ndarray:
    """Vectorized ``npow_exact`` for non-negative int64 arrays below 2**62."""
    x = np.asarray(x, dtype=np.int64)
    y = np.maximum(x - 1, 0)
    s = np.zeros(x.shape, dtype=np.int64)
    # bit_length via repeated halving over at most 63 steps, done with masks
    for sh in (32, 16, 8, 4, 2, 1):
        big = y >= (np.int64(1) << sh)
        s += np.where(big, sh, 0)
        y = np.where(big, y >> sh, y)
    s += (y > 0)
    return s


def npow_smear(x: int, b: int) -> int:
    """Next-power exponent the way the circuit computes it.

    Smear ``x - 1`` rightwards with ceil(log2 b) shift/OR rounds, add one,
    and read off the position of the single set bit.
    """
    x = int(x)
    if not 0 <= x < (1 << b):
        raise ValueError(f"x={x} outside [0, 2^{b})")
    if x == 0:
        return 0
    y = x - 1
    sh = 1
    while sh < b:
        y |= y >> sh
        sh <<= 1
    return (y + 1).bit_length() - 1


def cpow(x) -> int:
    """Exponent of the power of two closest to ``x > 0``; ties go up."""
    x = Fraction(x)
    if x <= 0:
        raise ValueError("cpow needs a positive argument")
    lo = math.floor(math.log2(x))
    # guard against float error in log2 for huge/small rationals
    while Fraction(2) ** lo > x:
        lo -= 1
    while Fraction(2) ** (lo + 1) <= x:
        lo += 1
    d_lo = x - Fraction(2) ** lo
    d_hi = Fraction(2) ** (lo + 1) - x
    return lo + 1 if d_hi <= d_lo else lo


def ternarize_int(w, pw_bar: int) -> np.ndarray:
    """Ternary weights in {-1, 0, 1}: the value 2 Q(w, 1) read at precision 0."""
    return sat(round_shift(w, pw_bar - 1), 1)


def activation_int(r, alpha: int, p_a: int) -> tuple[np.ndarray, np.ndarray]:
    """Scale a non-negative accumulator by ``2**-alpha``.

    Returns ``(a, unsaturated)`` where ``unsaturated`` is the saturation
    derivative evaluated on the scaled value before clamping.
    """
    ra = round_shift(r, alpha)
    m = (1 << p_a) - 1
    return sat(ra, p_a), np.abs(ra) <= m


def _norm_exponent(a) -> int:
    return npow_exact(or_magnitude(a))


def act_grad_int(e, p_e: int) -> np.ndarray:
    """Integer core of ``quant_act_grad`` over the whole array."""
    s = _norm_exponent(e)
    return sat(round_shift(e, s - p_e), p_e)


def weight_grad_int(g, p_g: int) -> np.ndarray:
    """Integer core of ``quant_weight_grad`` (no saturation)."""
    s = _norm_exponent(g)
    return round_shift(g, s - p_g)


# ---------------------------------------------------------------------------
# typed wrappers

@dataclass(frozen=True)
class FixedTensor:
    """Integer tensor ``data`` read as ``data / 2**prec`` with ``bits`` of storage."""

    data: np.ndarray
    bits: int = 32
    prec: int = 0

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.int64)
        object.__setattr__(self, "data", d)
        if self.prec < 0:
            raise ValueError("precision must be non-negative")
        if d.size:
            lo, hi = -(1 << (self.bits - 1)), (1 << (self.bits - 1)) - 1
            if d.min() < lo or d.max() > hi:
                raise OverflowError(
                    f"value outside {self.bits}-bit range [{lo}, {hi}]")

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def values(self) -> np.ndarray:
        """Float view, for display and float baselines only."""
        return self.data / float(1 << self.prec)

    @classmethod
    def from_float(cls, x, prec: int, bits: int = 8) -> "FixedTensor":
        # np.round rounds half to even, so do it by hand
        y = np.asarray(x, dtype=np.float64) * (1 << prec)
        a = np.sign(y) * np.floor(np.abs(y) + 0.5)
        return cls(a.astype(np.int64), bits, prec)

    def with_data(self, data, prec=None, bits=None) -> "FixedTensor":
        return FixedTensor(data, self.bits if bits is None else bits,
                           self.prec if prec is None else prec)


def quant_nearest(v: FixedTensor, q: int) -> FixedTensor:
    if q < 1:
        raise ValueError("target precision must be >= 1")
    return v.with_data(round_shift(v.data, v.prec - q), prec=q)


def saturate(v: FixedTensor, q: int) -> FixedTensor:
    if v.prec != q:
        raise ValueError("saturate expects the value already at precision q")
    return v.with_data(sat(v.data, q))


def quantize(v: FixedTensor, q: int) -> FixedTensor:
    # round in the wide domain first so out-of-range inputs do not trip the
    # bit-width check before the clamp
    return v.with_data(sat(round_shift(v.data, v.prec - q), q), prec=q)


def ternarize(w: FixedTensor) -> FixedTensor:
    return w.with_data(ternarize_int(w.data, w.prec), prec=0)


def quant_activation(v: FixedTensor, alpha: int, p_a: int) -> FixedTensor:
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    r = round_shift(v.data, alpha + v.prec - p_a)
    return v.with_data(sat(r, p_a), prec=p_a)


def quant_act_grad(e: FixedTensor, p_e: int) -> FixedTensor:
    return e.with_data(act_grad_int(e.data, p_e), prec=p_e)


def quant_weight_grad(g: FixedTensor, p_g: int) -> FixedTensor:
    return g.with_data(weight_grad_int(g.data, p_g), prec=p_g)


def quant_weight_grad_wage(g: FixedTensor, p_g: int, rng: np.random.Generator,
                           eta: float = 1.0) -> FixedTensor:
    """Stochastic WAGE gradient quantizer, kept as a plaintext baseline.

    ``G_n = eta * G / 2**cpow(max|G|)``, then floor plus a Bernoulli draw on
    the fractional part, scaled by ``2**-(p_g-1)``.  Output is at precision
    ``p_g`` so each unit step is the integer 2.
    """
    x = g.values()
    mx = np.max(np.abs(x)) if x.size else 0.0
    if mx == 0:
        return g.with_data(np.zeros_like(g.data), prec=p_g)
    gn = eta * x / 2.0 ** cpow(Fraction(float(mx)))
    mag = np.abs(gn)
    fl = np.floor(mag)
    k = fl + (rng.random(mag.shape) < (mag - fl))
    return g.with_data((2 * np.sign(gn) * k).astype(np.int64), prec=p_g)


# ---------------------------------------------------------------------------

@dataclass
class PrecisionConfig:
    """Precisions of every quantity in training, plus learning-rate exponent."""

    p_w: int = 1
    p_w_bar: int = 7
    p_a: int = 7
    p_e: int = 7
    p_g: int = 7
    p_m: int = 7
    p_v: int = 7
    eta: int = 0
    eps_exp: int | None = None
    alpha: list[int] = field(default_factory=list)

    def __post_init__(self):
        if self.p_w != 1:
            raise ValueError("ternary target precision p_w is fixed at 1")
        for k in ("p_w_bar", "p_a", "p_e", "p_g", "p_m", "p_v"):
            v = getattr(self, k)
            if not 1 <= v <= 30:
                raise ValueError(f"{k}={v} outside [1, 30]")
        if self.eps_exp is None:
            self.eps_exp = -self.p_v
        if self.eps_exp < -self.p_v:
            raise ValueError("epsilon must be representable at precision p_v")

    @property
    def eps_int(self) -> int:
        """epsilon as an integer at precision p_v."""
        return 1 << (self.eps_exp + self.p_v)

    def digest(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()
