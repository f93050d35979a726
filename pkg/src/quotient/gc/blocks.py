"""Word-level circuit helpers and the training circuit blocks.

Words are arrays of wire ids with the bit axis last, least significant bit
first; every helper is vectorized over the leading axes.  Signed words are
two's complement.  Each block reconstructs its arguments from the two
parties' additive shares (``*1`` from P1, ``*2`` from P2), computes, and
masks every output with P1's random inputs, so P2 decodes only its shares.

Rounding right shifts go through sign-magnitude form: rounding half away
from zero is symmetric, so ``round(x / 2^k) = sign(x) * round(|x| / 2^k)``,
and for a magnitude the rounding is just ``floor`` plus the bit ``k - 1``.
"""
from __future__ import annotations

import numpy as np

from .circuit import ONE, ZERO, Builder, Circuit

# ---------------------------------------------------------------------------
# word helpers


def const_word(value: int, width: int, shape=()) -> np.ndarray:
    return Builder.const(value & ((1 << width) - 1), width, shape)


def resize(x: np.ndarray, width: int, signed: bool = True) -> np.ndarray:
    """Sign- or zero-extend, or truncate, to ``width`` bits."""
    w = x.shape[-1]
    if width <= w:
        return x[..., :width]
    fill = x[..., -1:] if signed else np.full(x.shape[:-1] + (1,), ZERO, dtype=np.int64)
    return np.concatenate([x, np.repeat(fill, width - w, axis=-1)], axis=-1)


def add(b: Builder, x, y, cin=ZERO) -> np.ndarray:
    """Ripple-carry ``x + y + cin`` modulo ``2**width``; one AND per bit but the last."""
    x, y = np.broadcast_arrays(np.asarray(x), np.asarray(y))
    w = x.shape[-1]
    c = np.broadcast_to(np.asarray(cin, dtype=np.int64), x.shape[:-1]).copy()
    out = np.empty(x.shape, dtype=np.int64)
    for i in range(w):
        xc = b.xor(x[..., i], c)
        out[..., i] = b.xor(xc, y[..., i])
        if i < w - 1:
            c = b.xor(c, b.and_(xc, b.xor(y[..., i], c)))
    return out


def sub(b: Builder, x, y) -> np.ndarray:
    return add(b, x, b.not_(y), ONE)


def increment(b: Builder, x, bit) -> np.ndarray:
    """``x + bit`` for a single-bit ``bit`` broadcast over the word."""
    x = np.asarray(x)
    c = np.broadcast_to(np.asarray(bit, dtype=np.int64), x.shape[:-1]).copy()
    out = np.empty(x.shape, dtype=np.int64)
    for i in range(x.shape[-1]):
        out[..., i] = b.xor(x[..., i], c)
        if i < x.shape[-1] - 1:
            c = b.and_(x[..., i], c)
    return out


def cond_neg(b: Builder, x, s) -> np.ndarray:
    """``-x`` where the bit ``s`` is set, else ``x``."""
    s = np.asarray(s, dtype=np.int64)
    return increment(b, b.xor(x, s[..., None]), s)


def sign(x) -> np.ndarray:
    return np.asarray(x)[..., -1]


def absolute(b: Builder, x) -> np.ndarray:
    return cond_neg(b, x, sign(x))


def geq_unsigned(b: Builder, x, y) -> np.ndarray:
    """Bit ``[x >= y]`` for unsigned words: carry out of ``x - y``."""
    x, y = np.broadcast_arrays(np.asarray(x), np.asarray(y))
    c = np.full(x.shape[:-1], ONE, dtype=np.int64)
    for i in range(x.shape[-1]):
        ny = b.not_(y[..., i])
        c = b.xor(c, b.and_(b.xor(x[..., i], c), b.xor(ny, c)))
    return c


def lt_signed(b: Builder, x, y) -> np.ndarray:
    """Bit ``[x < y]`` for two's complement words."""
    x, y = np.broadcast_arrays(np.asarray(x), np.asarray(y))
    xf = np.concatenate([x[..., :-1], b.not_(x[..., -1:])], axis=-1)
    yf = np.concatenate([y[..., :-1], b.not_(y[..., -1:])], axis=-1)
    return b.not_(geq_unsigned(b, xf, yf))


def or_bits(b: Builder, x, axis: int = -1) -> np.ndarray:
    """OR-reduce along ``axis`` with a balanced tree."""
    x = np.moveaxis(np.asarray(x), axis, 0)
    while x.shape[0] > 1:
        h = x.shape[0] // 2
        y = b.or_(x[:h], x[h:2 * h])
        x = np.concatenate([y, x[2 * h:]], axis=0) if x.shape[0] % 2 else y
    return x[0]


def xor_reduce(b: Builder, x, axis: int = 0) -> np.ndarray:
    x = np.moveaxis(np.asarray(x), axis, 0)
    acc = x[0]
    for i in range(1, x.shape[0]):
        acc = b.xor(acc, x[i])
    return acc


def shift_floor(x, k: int, width: int) -> np.ndarray:
    """Unsigned ``x >> k`` (``k`` may be negative: left shift), as ``width`` bits."""
    x = np.asarray(x)
    lead = x.shape[:-1]
    if k >= 0:
        y = x[..., k:]
    else:
        y = np.concatenate([np.full(lead + (-k,), ZERO, dtype=np.int64), x], axis=-1)
    return resize(y, width, signed=False) if y.shape[-1] else np.full(lead + (width,), ZERO, dtype=np.int64)


def round_bit(x, k: int) -> np.ndarray:
    """The bit that rounds an unsigned ``x >> k`` to nearest (ties up)."""
    x = np.asarray(x)
    if 0 < k <= x.shape[-1]:
        return x[..., k - 1]
    return np.full(x.shape[:-1], ZERO, dtype=np.int64)


def round_shift_mag(b: Builder, m, k: int, width: int) -> np.ndarray:
    """``round(m / 2^k)`` of an unsigned word."""
    return increment(b, shift_floor(m, k, width), round_bit(m, k))


def round_shift_signed(b: Builder, x, k: int, width: int) -> np.ndarray:
    """Signed ``round(x / 2^k)`` half away from zero, result on ``width`` bits."""
    if k <= 0:
        return resize(np.concatenate([np.full(x.shape[:-1] + (-k,), ZERO, dtype=np.int64), x],
                                     axis=-1), width)
    s = sign(x)
    m = round_shift_mag(b, absolute(b, x), k, width)
    return cond_neg(b, m, s)


def thermometer(b: Builder, y) -> np.ndarray:
    """``t_i = OR_{j >= i} y_j``: smear of ``y`` toward the low end."""
    y = np.asarray(y)
    t = np.empty(y.shape, dtype=np.int64)
    t[..., -1] = y[..., -1]
    for i in range(y.shape[-1] - 2, -1, -1):
        t[..., i] = b.or_(y[..., i], t[..., i + 1])
    return t


def npow_onehot(b: Builder, x) -> np.ndarray:
    """One-hot encoding of ``npow(x)`` over exponents ``0..width``.

    Decrement, smear, then adjacent XORs of the thermometer code.  For
    ``x = 0`` the decrement wraps and the exponent reads ``width``; callers
    only use it to scale values that are then all zero.
    """
    w = x.shape[-1]
    y = add(b, x, const_word(-1, w))
    t = thermometer(b, y)
    h = np.empty(x.shape[:-1] + (w + 1,), dtype=np.int64)
    h[..., 0] = b.not_(t[..., 0])
    for s in range(1, w):
        h[..., s] = b.xor(t[..., s - 1], t[..., s])
    h[..., w] = t[..., w - 1]
    return h


def select_shift(b: Builder, m, onehot, offset: int, width: int) -> np.ndarray:
    """``round(m / 2^(s + offset))`` with ``s`` given one-hot.

    All candidate shifts are formed by wiring, ANDed with their selector bit
    and XOR-combined (only one selector is set); the rounding bit is selected
    the same way and added once at the end.
    """
    m = np.asarray(m)
    S = onehot.shape[-1]
    cand = np.stack([shift_floor(m, s + offset, width) for s in range(S)])      # (S, ..., width)
    rb = np.stack([round_bit(m, s + offset) for s in range(S)])                 # (S, ...)
    h = np.moveaxis(onehot, -1, 0)                                              # (S, ...)
    sel = xor_reduce(b, b.and_(h[..., None], cand))
    r = xor_reduce(b, b.and_(h, rb))
    return increment(b, sel, r)


def saturate_mag(b: Builder, m, q: int) -> np.ndarray:
    """Clamp an unsigned word to ``2^q - 1``; returns ``q`` bits."""
    if m.shape[-1] <= q:
        return resize(m, q, signed=False)
    over = or_bits(b, m[..., q:])
    return b.or_(m[..., :q], over[..., None])


def saturate_signed(b: Builder, x, q: int) -> np.ndarray:
    """Clamp a signed word to ``[-(2^q - 1), 2^q - 1]``."""
    w = x.shape[-1]
    hi = const_word((1 << q) - 1, w)
    lo = const_word(-((1 << q) - 1), w)
    over = lt_signed(b, hi, x)
    under = lt_signed(b, x, lo)
    y = b.mux(over[..., None], np.broadcast_to(hi, x.shape), x)
    return b.mux(under[..., None], np.broadcast_to(lo, x.shape), y)


def shared_input(b: Builder, name: str, shape, width: int) -> np.ndarray:
    """Declare both parties' shares of ``name`` and return the reconstruction."""
    x1 = b.input(1, name + "1", tuple(shape) + (width,))
    x2 = b.input(2, name + "2", tuple(shape) + (width,))
    return add(b, x1, x2)


def masked_output(b: Builder, name: str, value, width: int):
    r = b.input(1, "r_" + name, value.shape[:-1] + (width,))
    b.output(name, sub(b, resize(value, width), r))


def masked_bit_output(b: Builder, name: str, bits):
    bits = np.asarray(bits)
    m = b.input(1, "m_" + name, bits.shape + (1,), kind="bool")
    b.output(name, b.xor(bits[..., None], m), kind="bool")


# ---------------------------------------------------------------------------
# blocks


def relu(b: Builder, z) -> np.ndarray:
    """Zero a signed word when its sign bit is set: one AND per bit."""
    return b.and_(z, b.not_(sign(z))[..., None])


def _forward_core(b: Builder, z, alpha: int, p_a: int):
    relu_ = relu(b, z)
    w = z.shape[-1]
    ra = round_shift_mag(b, relu_, alpha, w)
    over = or_bits(b, ra[..., p_a:]) if w > p_a else np.full(z.shape[:-1], ZERO, dtype=np.int64)
    a = b.or_(ra[..., :p_a], over[..., None])
    return a, relu_, over


def build_forward_block(n: int, sigma: int, alpha: int, p_a: int, sigma_out: int = 32,
                        with_mask: bool = False) -> Circuit:
    """Reconstruct ``z``, ReLU, rounding shift by ``alpha``, saturate to ``p_a``,
    mask.  Inputs ``z1, z2, r_a`` (and ``m_d`` with ``with_mask``)."""
    b = Builder(f"forward(n={n},sigma={sigma},alpha={alpha})")
    z = shared_input(b, "z", (n,), sigma)
    a, relu, over = _forward_core(b, z, alpha, p_a)
    masked_output(b, "a", resize(a, sigma_out, signed=False), sigma_out)
    if with_mask:
        pos = or_bits(b, relu)
        masked_bit_output(b, "d", b.and_(pos, b.not_(over)))
    return b.build()


def build_deriv_mask_block(n: int, sigma: int, alpha: int, p_a: int) -> Circuit:
    """Boolean shares of ``d = [z > 0] and [round(z / 2^alpha) < 2^p_a]``."""
    b = Builder(f"deriv_mask(n={n},sigma={sigma})")
    z = shared_input(b, "z", (n,), sigma)
    _, relu, over = _forward_core(b, z, alpha, p_a)
    masked_bit_output(b, "d", b.and_(or_bits(b, relu), b.not_(over)))
    return b.build()


def build_backward_norm_block(n: int, sigma: int, p: int, sigma_out: int = 32,
                              saturate: bool = True) -> Circuit:
    """``Q(e / 2^npow(OR|e_i|), p)`` over all ``n`` elements jointly.

    With ``saturate=False`` it is the weight-gradient variant (nearest only).
    """
    b = Builder(f"norm(n={n},sigma={sigma},p={p},sat={saturate})")
    e = shared_input(b, "e", (n,), sigma)
    sgn = sign(e)
    mag = absolute(b, e)
    h = npow_onehot(b, or_bits(b, mag, axis=0))             # (sigma+1,)
    q = select_shift(b, mag, np.broadcast_to(h, (n, sigma + 1)), -p, p + 1)
    if saturate:
        q = saturate_mag(b, q, p)
    v = cond_neg(b, resize(q, sigma_out, signed=False), sgn)
    masked_output(b, "e", v, sigma_out)
    return b.build()


def build_ternarize_block(n: int, sigma: int = 16, pw_bar: int = 7) -> Circuit:
    """Boolean shares of ``W+ = [w >= 2^(pw_bar-2)]`` and ``W- = [w <= -2^(pw_bar-2)]``."""
    b = Builder(f"ternarize(n={n},sigma={sigma})")
    w = shared_input(b, "w", (n,), sigma)
    plus, minus = _ternary_bits(b, w, pw_bar)
    masked_bit_output(b, "plus", plus)
    masked_bit_output(b, "minus", minus)
    return b.build()


def _ternary_bits(b: Builder, w, pw_bar: int):
    c = 1 << (pw_bar - 2)
    width = w.shape[-1] + 1              # one guard bit so w -/+ c cannot wrap
    w = resize(w, width)
    plus = b.not_(sign(add(b, w, const_word(-c, width))))
    minus = sign(add(b, w, const_word(c - 1, width)))
    return plus, minus


def build_elementwise_max_block(n: int, sigma: int = 16) -> Circuit:
    b = Builder(f"max(n={n},sigma={sigma})")
    x = shared_input(b, "x", (n,), sigma)
    y = shared_input(b, "y", (n,), sigma)
    lt = lt_signed(b, x, y)
    masked_output(b, "max", b.mux(lt[..., None], y, x), sigma)
    return b.build()


def build_private_shift_block(n: int, sigma: int = 16, offset: int = 0, eps: int = 1,
                              sigma_out: int = 16) -> Circuit:
    """Per element ``round(m / 2^(npow(v + eps) + offset))``.

    With ``offset = p_m - p_v - p_g`` this is the history-based scaling of
    fixed-point AMSgrad, producing the gradient at precision ``p_g``.
    """
    b = Builder(f"private_shift(n={n},sigma={sigma},offset={offset})")
    m = shared_input(b, "m", (n,), sigma)
    v = shared_input(b, "v", (n,), sigma)
    h = npow_onehot(b, add(b, v, const_word(eps, sigma)))    # (n, sigma+1)
    q = select_shift(b, absolute(b, m), h, offset, sigma_out)
    masked_output(b, "g", cond_neg(b, q, sign(m)), sigma_out)
    return b.build()


def build_moment_block(n: int, sigma: int = 16, cp: int = 7, p_m: int = 7,
                       p_v: int = 7) -> Circuit:
    """Requantize the locally scaled moment terms.

    Inputs are shares of ``t1 = c1*M``, ``t2 = c2*G``, ``t3 = c3*V``,
    ``t4 = c4*G``; outputs ``M' = N(t1) + N(t2)`` and ``V' = N(t3) + N(|t4|)``.
    """
    b = Builder(f"moment(n={n},sigma={sigma})")
    t = [shared_input(b, f"t{i}", (n,), sigma) for i in (1, 2, 3, 4)]
    m = add(b, round_shift_signed(b, t[0], cp, sigma), round_shift_signed(b, t[1], cp, sigma))
    v = add(b, round_shift_signed(b, t[2], cp, sigma),
            round_shift_signed(b, absolute(b, t[3]), cp + p_m - p_v, sigma))
    masked_output(b, "m", m, sigma)
    masked_output(b, "v", v, sigma)
    return b.build()


def build_weight_update_block(n: int, sigma: int = 16, shift: int = 0, pw_bar: int = 7,
                              ternarize: bool = True) -> Circuit:
    """``W' = S(W - round(G / 2^shift), pw_bar)``, plus its ternary bits.

    ``shift = -(eta + pw_bar - p_g)`` aligns a precision-``p_g`` gradient
    scaled by ``2^eta`` with the stored weights.
    """
    b = Builder(f"weight_update(n={n},sigma={sigma},shift={shift})")
    w = shared_input(b, "w", (n,), sigma)
    g = shared_input(b, "g", (n,), sigma)
    nw = saturate_signed(b, sub(b, w, round_shift_signed(b, g, shift, sigma)), pw_bar)
    masked_output(b, "w", nw, sigma)
    if ternarize:
        plus, minus = _ternary_bits(b, nw, pw_bar)
        masked_bit_output(b, "plus", plus)
        masked_bit_output(b, "minus", minus)
    return b.build()


def build_maxpool_block(n: int, k2: int, sigma: int, sigma_out: int = 32) -> Circuit:
    """Window max (first maximum wins ties) and its one-hot position."""
    b = Builder(f"maxpool(n={n},k2={k2},sigma={sigma})")
    v = shared_input(b, "v", (n, k2), sigma)
    cur = v[:, 0]
    hot = [np.full(n, ONE, dtype=np.int64)]
    for j in range(1, k2):
        gt = lt_signed(b, cur, v[:, j])
        cur = b.mux(gt[..., None], v[:, j], cur)
        ngt = b.not_(gt)
        hot = [b.and_(h, ngt) for h in hot] + [gt]
    masked_output(b, "max", cur, sigma_out)
    masked_bit_output(b, "hot", np.stack(hot, axis=1))
    return b.build()


def build_adder(width: int) -> Circuit:
    """Plain adder of one P1 word and one P2 word (engine test fixture)."""
    b = Builder(f"adder({width})")
    x = b.input(1, "x", (width,))
    y = b.input(2, "y", (width,))
    b.output("s", add(b, x, y))
    return b.build()


def build_gc_matvec(n: int, m: int, lane_bits: int) -> Circuit:
    """Ternary matrix-vector product entirely inside a garbled circuit.

    Baseline for comparing against the OT protocols: shares of ``W+``,
    ``W-`` and ``a`` are reconstructed in the circuit, each product is a
    selection (AND with the indicator bit) and the row sums use adders.
    """
    b = Builder(f"gc_matvec({n}x{m},{lane_bits})")
    p1 = b.input(1, "wp1", (n, m, 1), kind="bool")[..., 0]
    p2 = b.input(2, "wp2", (n, m, 1), kind="bool")[..., 0]
    n1 = b.input(1, "wm1", (n, m, 1), kind="bool")[..., 0]
    n2 = b.input(2, "wm2", (n, m, 1), kind="bool")[..., 0]
    a = shared_input(b, "a", (m,), lane_bits)
    wp = b.xor(p1, p2)
    wm = b.xor(n1, n2)
    pos = b.and_(wp[..., None], a[None])
    neg = b.and_(wm[..., None], a[None])
    acc = sub(b, pos, neg)                                   # (n, m, lane)
    while acc.shape[1] > 1:
        h = acc.shape[1] // 2
        s = add(b, acc[:, :h], acc[:, h:2 * h])
        acc = np.concatenate([s, acc[:, 2 * h:]], axis=1) if acc.shape[1] % 2 else s
    masked_output(b, "z", acc[:, 0], lane_bits)
    return b.build()


def build_gc_componentwise(k: int, lane_bits: int) -> Circuit:
    """Component-wise Boolean-times-integer product inside a garbled circuit."""
    b = Builder(f"gc_cmul({k},{lane_bits})")
    w1 = b.input(1, "w1", (k, 1), kind="bool")[..., 0]
    w2 = b.input(2, "w2", (k, 1), kind="bool")[..., 0]
    a = shared_input(b, "a", (k,), lane_bits)
    masked_output(b, "z", b.and_(b.xor(w1, w2)[..., None], a), lane_bits)
    return b.build()


BLOCKS = {
    "forward": lambda: build_forward_block(1, 16, 2, 7),
    "forward+mask": lambda: build_forward_block(1, 16, 2, 7, with_mask=True),
    "deriv_mask": lambda: build_deriv_mask_block(1, 16, 2, 7),
    "norm_e": lambda: build_backward_norm_block(16, 16, 7, 32, True),
    "norm_g": lambda: build_backward_norm_block(16, 32, 7, 16, False),
    "ternarize": lambda: build_ternarize_block(1, 16, 7),
    "max": lambda: build_elementwise_max_block(1, 16),
    "private_shift": lambda: build_private_shift_block(1, 16, -7, 1, 16),
    "moment": lambda: build_moment_block(1, 16),
    "weight_update": lambda: build_weight_update_block(1, 16, 0, 7),
    "maxpool2x2": lambda: build_maxpool_block(1, 4, 32),
    "adder8": lambda: build_adder(8),
}
