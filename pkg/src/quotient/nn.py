"""Plaintext fixed-point networks: forward, backward, SGD and AMSgrad.

All tensors are int64 arrays with a leading batch axis.  Activations sit at
precision ``p_a``, ternary weights at precision 0, so a matrix product lands
directly at ``p_a`` in the wide accumulator.  This engine is both the accuracy
workhorse and the bit-exact oracle for the secure path in
``quotient.secure``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .fxp import (PrecisionConfig, act_grad_int, activation_int, cpow, npow_exact_array,
                  round_shift, round_shift_var, sat, ternarize_int, weight_grad_int)

# AMSgrad constants at precision 7: 0.9, 0.1, 0.99, 0.01
C_PREC = 7
C_M, C_G, C_V, C_A = 115, 13, 127, 1
INIT_RANGE = 64


@dataclass
class LayerSpec:
    kind: str                        # "fc", "conv" or "maxpool"
    in_shape: tuple
    out_shape: tuple
    kernel: int = 0
    stride: int = 1
    pad: int = 0
    alpha: int = 0
    residual_from: int | None = None  # index k of activation a^k added to z

    @property
    def has_weights(self) -> bool:
        return self.kind in ("fc", "conv")

    @property
    def weight_shape(self) -> tuple:
        if self.kind == "fc":
            return (self.out_shape[0], self.in_shape[0])
        if self.kind == "conv":
            return (self.out_shape[0], self.in_shape[0] * self.kernel ** 2)
        return ()

    @property
    def fan_in(self) -> int:
        return self.weight_shape[1] if self.has_weights else 0


def default_alpha(fan_in: int) -> int:
    """``max(0, round(log2 sqrt(fan_in)))`` with ties up."""
    if fan_in <= 1:
        return 0
    return max(0, math.floor(0.5 * math.log2(fan_in) + 0.5))


def fc(in_dim: int, out_dim: int, alpha: int | None = None, residual_from=None) -> LayerSpec:
    a = default_alpha(in_dim) if alpha is None else alpha
    return LayerSpec("fc", (in_dim,), (out_dim,), alpha=a, residual_from=residual_from)


def conv(in_shape, c_out: int, k: int, stride: int = 1, pad: int = 0,
         alpha: int | None = None, residual_from=None) -> LayerSpec:
    c, h, w = in_shape
    ho = (h + 2 * pad - k) // stride + 1
    wo = (w + 2 * pad - k) // stride + 1
    if ho < 1 or wo < 1:
        raise ValueError("kernel larger than padded input")
    a = default_alpha(c * k * k) if alpha is None else alpha
    return LayerSpec("conv", tuple(in_shape), (c_out, ho, wo), k, stride, pad, a, residual_from)


def maxpool(in_shape, k: int) -> LayerSpec:
    c, h, w = in_shape
    if h % k or w % k:
        raise ValueError("max-pool window must tile the input")
    return LayerSpec("maxpool", tuple(in_shape), (c, h // k, w // k), k, k)


def mlp(sizes: list[int], **kw) -> list[LayerSpec]:
    """Fully connected chain, e.g. ``mlp([784, 128, 128, 10])``."""
    return [fc(a, b, **kw) for a, b in zip(sizes[:-1], sizes[1:])]


def check_layers(layers: list[LayerSpec]):
    for i, L in enumerate(layers):
        prev = tuple(layers[i - 1].out_shape) if i else None
        # fc layers flatten their input
        if L.kind == "fc" and prev is not None:
            prev = (math.prod(prev),)
        if i and prev != tuple(L.in_shape):
            raise ValueError(f"layer {i + 1}: input {L.in_shape} != previous output "
                             f"{layers[i - 1].out_shape}")
        if L.residual_from is not None:
            k = L.residual_from
            src = layers[0].in_shape if k == 0 else layers[k - 1].out_shape if 0 < k <= i else None
            if src is None:
                raise ValueError(f"layer {i + 1}: residual source {k} is not an earlier layer")
            if tuple(src) != tuple(L.out_shape):
                raise ValueError(f"layer {i + 1}: residual shape {src} != {L.out_shape}")


# ---------------------------------------------------------------------------
# model

@dataclass
class Model:
    layers: list[LayerSpec]
    weights: list                       # stored weights at p_w_bar; None for max-pool
    config: PrecisionConfig = field(default_factory=PrecisionConfig)

    def __post_init__(self):
        check_layers(self.layers)

    @classmethod
    def init(cls, layers, config: PrecisionConfig | None = None, seed: int = 0) -> "Model":
        """Stored weights drawn uniformly from ``[-64, 64]`` (at p_w_bar = 7 about
        half the weights start non-zero after ternarization)."""
        config = config or PrecisionConfig()
        rng = np.random.default_rng(seed)
        lim = min(INIT_RANGE, (1 << config.p_w_bar) - 1)
        ws = [rng.integers(-lim, lim + 1, L.weight_shape).astype(np.int64) if L.has_weights
              else None for L in layers]
        if config.alpha:
            for L, a in zip(layers, config.alpha):
                L.alpha = a
        return cls(list(layers), ws, config)

    @property
    def weights_ternary(self) -> list:
        return [None if w is None else ternarize_int(w, self.config.p_w_bar) for w in self.weights]

    def copy(self) -> "Model":
        return Model(self.layers, [None if w is None else w.copy() for w in self.weights],
                     self.config)


@dataclass
class OptimizerState:
    M: list
    V: list
    V_hat: list

    @classmethod
    def zeros(cls, model: Model) -> "OptimizerState":
        z = [None if w is None else np.zeros_like(w) for w in model.weights]
        return cls(list(z), [None if w is None else w.copy() for w in z],
                   [None if w is None else w.copy() for w in z])


@dataclass
class TapeEntry:
    z: np.ndarray | None          # pre-activation accumulator (residual included)
    a: np.ndarray                 # quantized activation a^l
    d: np.ndarray | None          # derivative mask bits
    argmax: np.ndarray | None = None   # max-pool winner per window


@dataclass
class Tape:
    a0: np.ndarray
    entries: list[TapeEntry]

    def act(self, k: int) -> np.ndarray:
        return self.a0 if k == 0 else self.entries[k - 1].a

    @property
    def output(self) -> np.ndarray:
        return self.entries[-1].a


# ---------------------------------------------------------------------------
# im2col

def im2col(a: np.ndarray, k: int, stride: int = 1, pad: int = 0) -> np.ndarray:
    """``(B, c, h, w)`` (or ``(c, h, w)``) images to ``(B, c*k*k, P)`` patch columns.

    Column ``p`` is patch ``(p // wo, p % wo)``; rows run over channel, then
    kernel row, then kernel column.
    """
    single = a.ndim == 3
    if single:
        a = a[None]
    if pad:
        a = np.pad(a, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    B, c, h, w = a.shape
    win = np.lib.stride_tricks.sliding_window_view(a, (k, k), axis=(2, 3))
    win = win[:, :, ::stride, ::stride]                      # (B, c, ho, wo, k, k)
    ho, wo = win.shape[2], win.shape[3]
    cols = win.transpose(0, 1, 4, 5, 2, 3).reshape(B, c * k * k, ho * wo)
    return cols[0] if single else np.ascontiguousarray(cols)


def col2im(cols: np.ndarray, shape, k: int, stride: int = 1, pad: int = 0) -> np.ndarray:
    """Adjoint of ``im2col``: scatter-add columns back to ``(B, c, h, w)``."""
    B = cols.shape[0]
    c, h, w = shape
    hp, wp = h + 2 * pad, w + 2 * pad
    ho = (hp - k) // stride + 1
    wo = (wp - k) // stride + 1
    out = np.zeros((B, c, hp, wp), dtype=cols.dtype)
    blk = cols.reshape(B, c, k, k, ho, wo)
    for i in range(k):
        for j in range(k):
            out[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += blk[:, :, i, j]
    return out[:, :, pad:pad + h, pad:pad + w]


def pool_windows(a: np.ndarray, k: int) -> np.ndarray:
    """``(B, c, h, w)`` to ``(B, c, h/k, w/k, k*k)`` non-overlapping windows."""
    B, c, h, w = a.shape
    x = a.reshape(B, c, h // k, k, w // k, k).transpose(0, 1, 2, 4, 3, 5)
    return x.reshape(B, c, h // k, w // k, k * k)


def pool_unwindow(win: np.ndarray, k: int) -> np.ndarray:
    """Inverse of ``pool_windows``."""
    B, c, ho, wo, _ = win.shape
    x = win.reshape(B, c, ho, wo, k, k).transpose(0, 1, 2, 4, 3, 5)
    return x.reshape(B, c, ho * k, wo * k)


def pool_scatter(vals: np.ndarray, hot: np.ndarray, k: int) -> np.ndarray:
    """Route window values to the positions flagged in ``hot``."""
    return pool_unwindow(hot * vals[..., None], k)


# ---------------------------------------------------------------------------
# forward / backward

def layer_preact(L: LayerSpec, wt: np.ndarray, x: np.ndarray) -> np.ndarray:
    B = x.shape[0]
    if L.kind == "fc":
        return x.reshape(B, -1) @ wt.T
    cols = im2col(x, L.kernel, L.stride, L.pad)              # (B, K, P)
    z = np.einsum("ok,bkp->bop", wt, cols)
    return z.reshape((B,) + tuple(L.out_shape))


def forward(model: Model, a0: np.ndarray) -> Tape:
    a0 = np.asarray(a0, dtype=np.int64)
    cfg = model.config
    m = (1 << cfg.p_a) - 1
    if a0.size and np.abs(a0).max() > m:
        raise ValueError("input outside the p_a range")
    B = a0.shape[0]
    if a0.shape[1:] != tuple(model.layers[0].in_shape):
        a0 = a0.reshape((B,) + tuple(model.layers[0].in_shape))
    tape = Tape(a0, [])
    wts = model.weights_ternary
    for i, L in enumerate(model.layers):
        x = tape.act(i)
        got = (math.prod(x.shape[1:]),) if L.kind == "fc" else x.shape[1:]
        if got != tuple(L.in_shape):
            raise ValueError(f"layer {i + 1}: got input {x.shape[1:]}, expected {L.in_shape}")
        if L.kind == "maxpool":
            win = pool_windows(x, L.kernel)
            idx = win.argmax(axis=-1)
            tape.entries.append(TapeEntry(None, win.max(axis=-1), None, idx))
            continue
        z = layer_preact(L, wts[i], x)
        if L.residual_from is not None:
            z = z + tape.act(L.residual_from)
        a, unsat = activation_int(np.maximum(z, 0), L.alpha, cfg.p_a)
        d = ((z > 0) & unsat).astype(np.int64)
        tape.entries.append(TapeEntry(z, a, d))
    return tape


def mse_loss_grad(aL: np.ndarray, y: np.ndarray) -> np.ndarray:
    return np.asarray(aL, dtype=np.int64) - np.asarray(y, dtype=np.int64)


@dataclass
class BackwardResult:
    grads: list                   # G^l, summed over the batch, raw accumulator
    e_q: list                     # quantized activation gradients per layer
    u: list                       # e_q * d
    e_in: list                    # gradient arriving at each layer (skip terms included)


def backward(model: Model, tape: Tape, e_L: np.ndarray, input_grad: bool = False) -> BackwardResult:
    cfg = model.config
    n = len(model.layers)
    wts = model.weights_ternary
    res = BackwardResult([None] * n, [None] * n, [None] * n, [None] * n)
    skip: dict[int, np.ndarray] = {}
    e = np.asarray(e_L, dtype=np.int64)
    for i in range(n - 1, -1, -1):
        L = model.layers[i]
        ent = tape.entries[i]
        if i + 1 in skip:
            e = e + skip.pop(i + 1)
        res.e_in[i] = e
        a_prev = tape.act(i)
        B = e.shape[0]
        if L.kind == "maxpool":
            hot = (np.arange(L.kernel ** 2) == ent.argmax[..., None]).astype(np.int64)
            e = pool_scatter(e, hot, L.kernel)
            continue
        eq = act_grad_int(e, cfg.p_e)
        u = eq * ent.d
        res.e_q[i], res.u[i] = eq, u
        if L.kind == "fc":
            res.grads[i] = eq.reshape(B, -1).T @ a_prev.reshape(B, -1)
        else:
            cols = im2col(a_prev, L.kernel, L.stride, L.pad)
            res.grads[i] = np.einsum("bop,bkp->ok", eq.reshape(B, L.out_shape[0], -1), cols)
        if L.residual_from is not None and L.residual_from > 0:
            k = L.residual_from
            skip[k] = skip.get(k, 0) + u
        if i == 0 and not input_grad:
            break
        if L.kind == "fc":
            e = (u.reshape(B, -1) @ wts[i]).reshape(a_prev.shape)
        else:
            cg = np.einsum("ok,bop->bkp", wts[i], u.reshape(B, L.out_shape[0], -1))
            e = col2im(cg, L.in_shape, L.kernel, L.stride, L.pad)
    return res


# ---------------------------------------------------------------------------
# optimizers

def update_weights(w: np.ndarray, g_pg: np.ndarray, cfg: PrecisionConfig) -> np.ndarray:
    """``S(W - eta * G, p_w_bar)`` with ``G`` at precision ``p_g``."""
    step = round_shift(g_pg, -(cfg.eta + cfg.p_w_bar - cfg.p_g))
    return sat(w - step, cfg.p_w_bar)


def gradients(model: Model, a0, y) -> tuple[Tape, BackwardResult]:
    tape = forward(model, a0)
    return tape, backward(model, tape, mse_loss_grad(tape.output, y))


def sgd_step(model: Model, a0, y) -> Model:
    """One fixed-point SGD iteration, in place.  Returns the model."""
    cfg = model.config
    _, res = gradients(model, a0, y)
    for i, g in enumerate(res.grads):
        if g is None:
            continue
        model.weights[i] = update_weights(model.weights[i], weight_grad_int(g, cfg.p_g), cfg)
    return model


def amsgrad_update(g: np.ndarray, M, V, Vh, cfg: PrecisionConfig, norm: str = "npow"):
    """Fixed-point AMSgrad on one layer.  Returns ``(G_pg, M, V, V_hat)``.

    ``norm="cpow"`` swaps the gradient scaling for the closest power of two
    (the WAGE-style comparison variant, plaintext only).
    """
    if norm == "npow":
        gs = weight_grad_int(g, cfg.p_m)
    else:
        mx = int(np.abs(g).max()) if g.size else 0
        s = cpow(mx) if mx else 0
        gs = round_shift(g, s - cfg.p_m)
    M = round_shift(C_M * M, C_PREC) + round_shift(C_G * gs, C_PREC)
    V = round_shift(C_V * V, C_PREC) + round_shift(C_A * np.abs(gs), C_PREC + cfg.p_m - cfg.p_v)
    Vh = np.maximum(Vh, V)
    s = npow_exact_array(Vh + cfg.eps_int)
    g_pg = round_shift_var(M, s - cfg.p_v + cfg.p_m - cfg.p_g)
    return g_pg, M, V, Vh


def amsgrad_step(model: Model, state: OptimizerState, a0, y, norm: str = "npow"):
    cfg = model.config
    _, res = gradients(model, a0, y)
    for i, g in enumerate(res.grads):
        if g is None:
            continue
        g_pg, state.M[i], state.V[i], state.V_hat[i] = amsgrad_update(
            g, state.M[i], state.V[i], state.V_hat[i], cfg, norm)
        model.weights[i] = update_weights(model.weights[i], g_pg, cfg)
    return model, state


def wage_sgd_step(model: Model, a0, y, rng: np.random.Generator, lr: float = 1.0) -> Model:
    """SGD with the stochastic WAGE gradient quantizer (comparison baseline)."""
    from .fxp import FixedTensor, quant_weight_grad_wage
    cfg = model.config
    _, res = gradients(model, a0, y)
    for i, g in enumerate(res.grads):
        if g is None:
            continue
        q = quant_weight_grad_wage(FixedTensor(g, 64, 0), cfg.p_g, rng, lr).data
        model.weights[i] = update_weights(model.weights[i], q, cfg)
    return model


# ---------------------------------------------------------------------------
# floating-point AMSgrad

@dataclass
class FloatAMSGradState:
    M: list
    V: list
    V_hat: list

    @classmethod
    def zeros(cls, params) -> "FloatAMSGradState":
        return cls([np.zeros_like(p, dtype=float) for p in params],
                   [np.zeros_like(p, dtype=float) for p in params],
                   [np.zeros_like(p, dtype=float) for p in params])


def standard_amsgrad_update(p: np.ndarray, g: np.ndarray, M, V, Vh, eta: float = 1e-3,
                            eps: float = 1e-8, b1: float = 0.9, b2: float = 0.99):
    """Textbook AMSgrad (square and square root kept).  Returns updated arrays."""
    M = b1 * M + (1 - b1) * g
    V = b2 * V + (1 - b2) * g * g
    Vh = np.maximum(Vh, V)
    step = M / (np.sqrt(Vh) + eps)
    return p - eta * step, M, V, Vh


def standard_amsgrad_step(params: list, grads: list, state: FloatAMSGradState,
                          eta: float = 1e-3, eps: float = 1e-8):
    out = []
    for i, (p, g) in enumerate(zip(params, grads)):
        p2, state.M[i], state.V[i], state.V_hat[i] = standard_amsgrad_update(
            p, g, state.M[i], state.V[i], state.V_hat[i], eta, eps)
        out.append(p2)
    return out, state


def std_amsgrad_fixed_step(model: Model, state: FloatAMSGradState, a0, y):
    """Fixed-point network trained with textbook AMSgrad on normalized gradients.

    The moment estimates are floats; the resulting step is rounded to
    precision ``p_g`` and applied as in the fixed-point optimizers.
    """
    cfg = model.config
    _, res = gradients(model, a0, y)
    for i, g in enumerate(res.grads):
        if g is None:
            continue
        gs = weight_grad_int(g, cfg.p_m) / float(1 << cfg.p_m)
        M = 0.9 * state.M[i] + 0.1 * gs
        V = 0.99 * state.V[i] + 0.01 * gs * gs
        Vh = np.maximum(state.V_hat[i], V)
        step = M / (np.sqrt(Vh) + 2.0 ** cfg.eps_exp)
        state.M[i], state.V[i], state.V_hat[i] = M, V, Vh
        y_ = step * (1 << cfg.p_g)
        g_pg = (np.sign(y_) * np.floor(np.abs(y_) + 0.5)).astype(np.int64)
        model.weights[i] = update_weights(model.weights[i], g_pg, cfg)
    return model, state


# ---------------------------------------------------------------------------
# training utilities

def batch_schedule(n: int, batch: int, seed: int, epoch: int) -> list[np.ndarray]:
    """Public per-epoch shuffle; both parties derive identical batches.

    The last partial batch is dropped so every step sees ``batch`` samples.
    """
    perm = np.random.default_rng([seed, epoch]).permutation(n)
    k = max(1, n // batch)
    return [perm[i * batch:(i + 1) * batch] for i in range(k)] if n >= batch else [perm]


def predict(model: Model, a0: np.ndarray, chunk: int = 2048) -> np.ndarray:
    out = [forward(model, a0[i:i + chunk]).output.reshape(len(a0[i:i + chunk]), -1).argmax(1)
           for i in range(0, len(a0), chunk)]
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)


def accuracy(model: Model, x: np.ndarray, labels: np.ndarray) -> float:
    return float((predict(model, x) == labels).mean())


def mse(model: Model, x, y) -> float:
    out = forward(model, x).output.reshape(len(x), -1)
    return float(((out - y) ** 2).mean() / (1 << (2 * model.config.p_a)))


def train(model: Model, x, y, *, epochs: int = 1, batch: int = 128, optimizer: str = "amsgrad",
          seed: int = 0, eval_fn=None, eval_every: int = 0, log=None, max_iters: int | None = None):
    """Plaintext training loop.  ``log(row)`` receives metric dicts.

    Returns ``(model, state)``.
    """
    state = OptimizerState.zeros(model) if optimizer == "amsgrad" else None
    wage_rng = np.random.default_rng(seed + 1)
    fstate = None
    it = 0
    for ep in range(epochs):
        for idx in batch_schedule(len(x), batch, seed, ep):
            if optimizer == "amsgrad":
                amsgrad_step(model, state, x[idx], y[idx])
            elif optimizer == "sgd":
                sgd_step(model, x[idx], y[idx])
            elif optimizer == "amsgrad-cpow":
                amsgrad_step(model, state, x[idx], y[idx], norm="cpow")
            elif optimizer == "wage":
                wage_sgd_step(model, x[idx], y[idx], wage_rng)
            elif optimizer == "amsgrad-std":
                if fstate is None:
                    fstate = FloatAMSGradState.zeros(
                        [np.zeros(0) if w is None else w for w in model.weights])
                std_amsgrad_fixed_step(model, fstate, x[idx], y[idx])
            else:
                raise ValueError(f"unknown optimizer {optimizer!r}")
            it += 1
            if log is not None and eval_every and it % eval_every == 0:
                row = {"epoch": ep, "iter": it}
                if eval_fn is not None:
                    row.update(eval_fn(model))
                log(row)
            if max_iters and it >= max_iters:
                return model, state
        if log is not None and not eval_every:
            row = {"epoch": ep, "iter": it}
            if eval_fn is not None:
                row.update(eval_fn(model))
            log(row)
    return model, state
