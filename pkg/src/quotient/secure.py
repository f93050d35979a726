"""Secure two-party training and prediction.

Both parties run the same code on their own shares (SPMD, branching on
``session.role``).  Linear algebra goes through the COT protocols of
``quotient.proto``; every non-linear step (ReLU, quantization, gradient
normalization, optimizer updates, ternarization) is a masked-output garbled
circuit from ``quotient.gc.blocks``.  Reconstructed values are bit-identical
to the plaintext engine in ``quotient.nn``.

Rings used:

* activations, labels, quantized errors and weight gradients: ``Z_2^32``
* matrix products and the errors they produce: the model's lane ring
  (16 or 32 bits, see ``lane_bits_for``)
* stored weights and optimizer moments: ``Z_2^16``
"""
from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import nn
from .crypto import HASH_ID, Prg
from .fxp import PrecisionConfig, ternarize_int
from .gc import blocks
from .gc.session import run_circuit
from .net import Msg, ProtocolError, handshake
from .proto import PackedLaneConfig, componentwise_mult_cot, outer_product, packed_matvec
from .session import SecurityParams, Session
from .shares import (ArithShare, BoolShare, SharedTernaryMatrix, decompose_ternary,
                     from_ring, read_share_file, share_arith, to_ring, write_share_file)

ACC_BITS = 32       # activations, errors after quantization, weight gradients
OPT_BITS = 16       # stored weights and optimizer moments


def lane_bits_for(layers: list[nn.LayerSpec], config: PrecisionConfig) -> int:
    """Smallest lane width whose signed range holds every matvec result.

    Forward sums have at most ``fan_in`` terms of magnitude ``2^p_a - 1``;
    backward sums at most ``c_out * k^2`` terms of magnitude ``2^p_e``.
    Residual and loss terms add a little on top.
    """
    worst = 2 << config.p_a                        # a^L - y
    for L in layers:
        if not L.has_weights:
            continue
        back_terms = L.out_shape[0] * max(1, L.kernel) ** 2
        f = L.fan_in * ((1 << config.p_a) - 1) + (1 << config.p_a)
        b = back_terms * (1 << config.p_e) + (len(layers) << config.p_e)
        worst = max(worst, f, b)
    for bits in (16, 32):
        if worst < 1 << (bits - 1):
            return bits
    raise ValueError("layer too wide for a 32-bit lane")


# ---------------------------------------------------------------------------
# session

class SecureSession(Session):
    """A ``Session`` plus the public training parameters both parties share."""

    def __init__(self, role, channel, prg=None, config: PrecisionConfig | None = None,
                 lane_bits: int = 16, security: SecurityParams | None = None,
                 batch_seed: int = 0):
        super().__init__(role, channel, prg, security)
        self.config = config or PrecisionConfig()
        self.lanes = PackedLaneConfig(lane_bits)
        self.batch_seed = batch_seed

    @classmethod
    def establish(cls, role, channel, prg, config: PrecisionConfig, lane_bits: int,
                  model_digest: str = "", seed_share: int | None = None,
                  security: SecurityParams | None = None,
                  job: dict | None = None) -> "SecureSession":
        """Run the parameter handshake; aborts with ``HandshakeError`` on mismatch.

        ``job`` holds extra public settings that steer the message flow (batch
        size, iteration count, what gets revealed); both parties must agree on
        them or they would desynchronise later.
        """
        security = security or SecurityParams()
        if seed_share is None:
            seed_share = int.from_bytes(prg.child(b"batch-seed").bytes(4), "big")
        params = {"tau": security.tau, "cot_block": security.cot_block, "lane_bits": lane_bits,
                  "precision": config.digest(), "model": model_digest, "hash": HASH_ID,
                  "seed_share": seed_share}
        if job:
            params["job"] = job
        agreed = handshake(channel, role, params)
        return cls(role, channel, prg, config, lane_bits, security, agreed["batch_seed"])


def reveal(session: Session, share, to: int | None = None):
    """Open a shared value.  ``to`` restricts the output to one party
    (the other gets ``None``)."""
    ch = session.channel
    if isinstance(share, ArithShare):
        mine = share.value
    else:
        mine = share.bits.astype(np.uint64)
    # P1 sends its share when P2 is to learn the value, and vice versa
    p2_learns = to in (None, 2)
    p1_learns = to in (None, 1)
    theirs = None
    if session.role == 1:
        if p2_learns:
            ch.send_array(Msg.REVEAL, mine.astype(np.uint64))
        if p1_learns:
            theirs = ch.recv_array(Msg.REVEAL, np.uint64, mine.shape)
    else:
        if p2_learns:
            theirs = ch.recv_array(Msg.REVEAL, np.uint64, mine.shape)
        if p1_learns:
            ch.send_array(Msg.REVEAL, mine.astype(np.uint64))
    if theirs is None:
        return None
    if isinstance(share, ArithShare):
        return from_ring(to_ring(mine + theirs, share.sigma), share.sigma)
    return (mine ^ theirs).astype(np.uint8)


# ---------------------------------------------------------------------------
# garbled-circuit calls

_cached = lru_cache(maxsize=256)
forward_block = _cached(blocks.build_forward_block)
norm_block = _cached(blocks.build_backward_norm_block)
ternarize_block = _cached(blocks.build_ternarize_block)
max_block = _cached(blocks.build_elementwise_max_block)
shift_block = _cached(blocks.build_private_shift_block)
moment_block = _cached(blocks.build_moment_block)
update_block = _cached(blocks.build_weight_update_block)
maxpool_block = _cached(blocks.build_maxpool_block)


def run_block(session: Session, circuit, T: int, shared: dict, outputs: dict) -> dict:
    """Evaluate a masked-output block on shares.

    ``shared`` maps each shared input's base name to this party's values of
    shape ``(T, ...)``; ``outputs`` maps output names to their ring size
    (``None`` for Boolean outputs).  Returns this party's output shares.
    P1 draws the output masks and keeps them as its shares.
    """
    inputs = {f"{k}{session.role}": np.asarray(v) for k, v in shared.items()}
    res = {}
    if session.role == 1:
        for name, sigma in outputs.items():
            g = circuit.input(("r_" if sigma else "m_") + name)
            shape = (T,) + g.wires.shape[:-1]
            if sigma:
                r = session.prg.ring(shape, sigma)
                res[name] = ArithShare(r, sigma, 1)
            else:
                r = session.prg.bits(shape)
                res[name] = BoolShare(r, 1)
            inputs[g.name] = r
        run_circuit(session, circuit, inputs, T)
        return res
    got = run_circuit(session, circuit, inputs, T)
    for name, sigma in outputs.items():
        res[name] = ArithShare(got[name], sigma, 2) if sigma else BoolShare(got[name], 2)
    return res


def _elementwise(session, circuit, shared: dict, outputs: dict, shape) -> dict:
    """Run a one-element block over every element of ``shape``."""
    T = int(np.prod(shape, dtype=np.int64))
    flat = {k: np.asarray(v).reshape(T, 1) for k, v in shared.items()}
    out = run_block(session, circuit, T, flat, outputs)
    return {k: v.reshape(*shape) for k, v in out.items()}


def _joint(session, circuit, shared: dict, outputs: dict, shape) -> dict:
    """Run a block whose elements interact (normalization): one instance."""
    flat = {k: np.asarray(v).reshape(1, -1) for k, v in shared.items()}
    out = run_block(session, circuit, 1, flat, outputs)
    return {k: v.reshape(*shape) for k, v in out.items()}


def secure_quantize_error(session: SecureSession, e: ArithShare, p: int,
                          sigma_out: int = ACC_BITS, saturate: bool = True) -> ArithShare:
    """Shares of ``Q(e / 2^npow(OR|e|), p)`` (or the nearest-only variant)."""
    c = norm_block(int(np.prod(e.shape)), e.sigma, p, sigma_out, saturate)
    return _joint(session, c, {"e": e.value}, {"e": sigma_out}, e.shape)["e"]


# ---------------------------------------------------------------------------
# model shares

@dataclass
class SecureModelShares:
    """One party's view of the model: stored-weight shares, ternary shares and
    optimizer moments, all per layer (``None`` for weightless layers)."""
    layers: list
    config: PrecisionConfig
    party: int
    wbar: list                      # ArithShare in Z_2^16
    tern: list                      # SharedTernaryMatrix
    M: list = field(default_factory=list)
    V: list = field(default_factory=list)
    V_hat: list = field(default_factory=list)
    iteration: int = 0

    def __post_init__(self):
        n = len(self.layers)
        for attr in ("M", "V", "V_hat"):
            if not getattr(self, attr):
                setattr(self, attr, [None if w is None else
                                     ArithShare(np.zeros(w.shape, np.uint64), OPT_BITS, self.party)
                                     for w in self.wbar])
        if len(self.wbar) != n or len(self.tern) != n:
            raise ValueError("one weight entry per layer expected")

    @property
    def lane_bits(self) -> int:
        return lane_bits_for(self.layers, self.config)

    def digest(self) -> str:
        return model_digest(self.layers)


def model_digest(layers) -> str:
    """Short hash of the architecture, exchanged in the handshake."""
    import hashlib
    desc = [(L.kind, tuple(L.in_shape), tuple(L.out_shape), L.kernel, L.stride, L.pad,
             L.alpha, L.residual_from) for L in layers]
    return hashlib.sha256(repr(desc).encode()).hexdigest()[:16]


def deal_model(model: nn.Model, prg: Prg) -> tuple[SecureModelShares, SecureModelShares]:
    """Trusted-dealer sharing of a plaintext model (tests and benchmarks)."""
    views = ([], []), ([], [])
    for w in model.weights:
        if w is None:
            for v in views:
                v[0].append(None)
                v[1].append(None)
            continue
        a1, a2 = share_arith(w, OPT_BITS, prg)
        t1, t2 = decompose_ternary(ternarize_int(w, model.config.p_w_bar), prg)
        views[0][0].append(a1)
        views[0][1].append(t1)
        views[1][0].append(a2)
        views[1][1].append(t2)
    return tuple(SecureModelShares(model.layers, model.config, p + 1, *views[p])
                 for p in range(2))


def secure_init(session: SecureSession, layers, wbar: list) -> SecureModelShares:
    """Initialization ceremony: from stored-weight shares alone, derive the
    ternary shares with the ternarize block."""
    tern = []
    for w in wbar:
        if w is None:
            tern.append(None)
            continue
        c = ternarize_block(1, OPT_BITS, session.config.p_w_bar)
        out = _elementwise(session, c, {"w": w.value}, {"plus": None, "minus": None}, w.shape)
        tern.append(SharedTernaryMatrix(out["plus"], out["minus"]))
    return SecureModelShares(layers, session.config, session.role, list(wbar), tern)


def random_init_shares(session: SecureSession, layers, seed_prg: Prg) -> SecureModelShares:
    """Each party draws its stored-weight share uniformly from ``[-32, 32]``,
    so the joint weights lie in ``[-64, 64]`` and no party knows them."""
    wbar = []
    lim = min(nn.INIT_RANGE, (1 << session.config.p_w_bar) - 1)
    for L in layers:
        if not L.has_weights:
            wbar.append(None)
            continue
        half = lim // 2
        r = seed_prg.ring(L.weight_shape, 16).astype(np.int64) % (2 * half + 1) - half
        wbar.append(ArithShare(to_ring(r, OPT_BITS), OPT_BITS, session.role))
    return secure_init(session, layers, wbar)


def reconstruct_model(s1: SecureModelShares, s2: SecureModelShares) -> nn.Model:
    from .shares import reconstruct_arith
    ws = [None if a is None else reconstruct_arith(a, b) for a, b in zip(s1.wbar, s2.wbar)]
    return nn.Model(s1.layers, ws, s1.config)


def reveal_model(session: Session, ms: SecureModelShares) -> nn.Model:
    ws = [None if w is None else reveal(session, w) for w in ms.wbar]
    return nn.Model(ms.layers, ws, ms.config)


# ---------------------------------------------------------------------------
# forward

@dataclass
class SecureTapeEntry:
    a: ArithShare                    # Z_2^32, shape (B,) + out_shape
    d: BoolShare | None = None
    z: ArithShare | None = None      # lane ring
    hot: BoolShare | None = None     # max-pool winners (B, c, ho, wo, k*k)


def _matvec_in(L: nn.LayerSpec, x: np.ndarray) -> np.ndarray:
    """Share values of the layer input to the (K, lanes) matvec operand."""
    B = x.shape[0]
    if L.kind == "fc":
        return x.reshape(B, -1).T
    cols = nn.im2col(x, L.kernel, L.stride, L.pad)              # (B, K, P)
    return cols.transpose(1, 0, 2).reshape(cols.shape[1], -1)


def _matvec_out(L: nn.LayerSpec, z: np.ndarray, B: int) -> np.ndarray:
    if L.kind == "fc":
        return z.T
    c = L.out_shape[0]
    return z.reshape(c, B, -1).transpose(1, 0, 2).reshape((B,) + tuple(L.out_shape))


def secure_forward_layer(session: SecureSession, L: nn.LayerSpec, W: SharedTernaryMatrix | None,
                         a_prev: ArithShare, skip: ArithShare | None = None) -> SecureTapeEntry:
    cfg = session.config
    lanes = session.lanes
    B = a_prev.shape[0]
    x = a_prev.reduce(lanes.lane_bits)
    if L.kind == "maxpool":
        win = nn.pool_windows(x.value, L.kernel)                 # (B, c, ho, wo, k2)
        k2 = L.kernel ** 2
        c = maxpool_block(1, k2, lanes.lane_bits, ACC_BITS)
        T = int(np.prod(win.shape[:-1]))
        out = run_block(session, c, T, {"v": win.reshape(T, 1, k2)}, {"max": ACC_BITS, "hot": None})
        return SecureTapeEntry(out["max"].reshape(*win.shape[:-1]),
                               hot=out["hot"].reshape(*win.shape))
    zv = packed_matvec(session, W, ArithShare(_matvec_in(L, x.value), lanes.lane_bits,
                                              session.role), lanes)
    z = ArithShare(_matvec_out(L, zv.value, B), lanes.lane_bits, session.role)
    if L.residual_from is not None:
        if skip is None:
            raise ValueError("residual layer needs its skip activation")
        z = z + skip.reduce(lanes.lane_bits)
    c = forward_block(1, lanes.lane_bits, L.alpha, cfg.p_a, ACC_BITS, True)
    out = _elementwise(session, c, {"z": z.value}, {"a": ACC_BITS, "d": None}, z.shape)
    return SecureTapeEntry(out["a"], out["d"], z)


def secure_forward(session: SecureSession, ms: SecureModelShares, a0: ArithShare) -> list:
    acts = [a0]
    tape = []
    for i, L in enumerate(ms.layers):
        skip = acts[L.residual_from] if L.residual_from is not None else None
        ent = secure_forward_layer(session, L, ms.tern[i], acts[-1], skip)
        tape.append(ent)
        acts.append(ent.a)
    return tape


def secure_predict(session: SecureSession, ms: SecureModelShares, a0: ArithShare,
                   reveal_to: int | None = None):
    """Class scores as shares; with ``reveal_to`` that party gets the argmax labels."""
    scores = secure_forward(session, ms, a0)[-1].a
    if reveal_to is None:
        return scores
    opened = reveal(session, scores, to=reveal_to)
    if opened is None:
        return None
    return opened.reshape(len(opened), -1).argmax(axis=1)


def secure_loss_grad(aL: ArithShare, y: ArithShare) -> ArithShare:
    return aL - y


# ---------------------------------------------------------------------------
# backward

@dataclass
class SecureGrads:
    G: ArithShare | None              # Z_2^32
    e_q: ArithShare | None = None     # Z_2^32
    u: ArithShare | None = None       # lane ring
    e_prev: ArithShare | None = None  # lane ring


def secure_backward_layer(session: SecureSession, L: nn.LayerSpec, W: SharedTernaryMatrix | None,
                          e: ArithShare, ent: SecureTapeEntry, a_prev: ArithShare,
                          need_prev: bool = True) -> SecureGrads:
    cfg = session.config
    lanes = session.lanes
    lb = lanes.lane_bits
    e = e.reduce(lb)
    B = e.shape[0]
    if L.kind == "maxpool":
        k2 = L.kernel ** 2
        eb = np.broadcast_to(e.value[..., None], e.shape + (k2,))
        routed = componentwise_mult_cot(session, ent.hot, ArithShare(eb, lb, session.role))
        return SecureGrads(None, e_prev=ArithShare(nn.pool_unwindow(routed.value, L.kernel),
                                                   lb, session.role))
    eq = secure_quantize_error(session, e, cfg.p_e, ACC_BITS, True)
    u = componentwise_mult_cot(session, ent.d, eq.reduce(lb))
    c_out = L.out_shape[0]
    if L.kind == "fc":
        ex, ax = eq.value.reshape(B, -1), a_prev.value.reshape(B, -1)
    else:
        ex = eq.value.reshape(B, c_out, -1).transpose(0, 2, 1).reshape(-1, c_out)
        cols = nn.im2col(a_prev.value, L.kernel, L.stride, L.pad)
        ax = cols.transpose(0, 2, 1).reshape(-1, cols.shape[1])
    G = outer_product(session, ArithShare(ex, ACC_BITS, session.role),
                      ArithShare(ax, ACC_BITS, session.role))
    res = SecureGrads(G, eq, u)
    if need_prev:
        un = u.value.reshape(B, c_out, -1).transpose(1, 0, 2).reshape(c_out, -1)
        ep = packed_matvec(session, W.T, ArithShare(un, lb, session.role), lanes).value
        if L.kind == "fc":
            ep = ep.T.reshape(a_prev.shape)
        else:
            K = W.shape[1]
            cg = ep.reshape(K, B, -1).transpose(1, 0, 2)
            ep = nn.col2im(cg, L.in_shape, L.kernel, L.stride, L.pad)
        res.e_prev = ArithShare(ep, lb, session.role)
    return res


def secure_backward(session: SecureSession, ms: SecureModelShares, a0: ArithShare,
                    tape: list, e_L: ArithShare) -> list[SecureGrads]:
    n = len(ms.layers)
    out: list = [None] * n
    skip: dict = {}
    e = e_L.reduce(session.lanes.lane_bits)
    for i in range(n - 1, -1, -1):
        L = ms.layers[i]
        if i + 1 in skip:
            e = e + skip.pop(i + 1)
        a_prev = a0 if i == 0 else tape[i - 1].a
        r = secure_backward_layer(session, L, ms.tern[i], e, tape[i], a_prev, need_prev=i > 0)
        out[i] = r
        if L.residual_from is not None and L.residual_from > 0:
            k = L.residual_from
            skip[k] = r.u if k not in skip else skip[k] + r.u
        e = r.e_prev
    return out


# ---------------------------------------------------------------------------
# optimizer steps

def _apply_update(session: SecureSession, ms: SecureModelShares, i: int, g: ArithShare):
    cfg = session.config
    shift = -(cfg.eta + cfg.p_w_bar - cfg.p_g)
    c = update_block(1, OPT_BITS, shift, cfg.p_w_bar, True)
    out = _elementwise(session, c, {"w": ms.wbar[i].value, "g": g.value},
                       {"w": OPT_BITS, "plus": None, "minus": None}, g.shape)
    ms.wbar[i] = out["w"]
    ms.tern[i] = SharedTernaryMatrix(out["plus"], out["minus"])


def _gradients(session, ms, a0, y):
    tape = secure_forward(session, ms, a0)
    return secure_backward(session, ms, a0, tape, secure_loss_grad(tape[-1].a, y))


def secure_sgd_step(session: SecureSession, ms: SecureModelShares, a0: ArithShare,
                    y: ArithShare) -> SecureModelShares:
    cfg = session.config
    for i, r in enumerate(_gradients(session, ms, a0, y)):
        if r.G is None:
            continue
        g = secure_quantize_error(session, r.G, cfg.p_g, OPT_BITS, saturate=False)
        _apply_update(session, ms, i, g)
    ms.iteration += 1
    return ms


def secure_amsgrad_step(session: SecureSession, ms: SecureModelShares, a0: ArithShare,
                        y: ArithShare) -> SecureModelShares:
    cfg = session.config
    for i, r in enumerate(_gradients(session, ms, a0, y)):
        if r.G is None:
            continue
        gs = secure_quantize_error(session, r.G, cfg.p_m, OPT_BITS, saturate=False)
        terms = {"t1": ms.M[i].mul_const(nn.C_M).value, "t2": gs.mul_const(nn.C_G).value,
                 "t3": ms.V[i].mul_const(nn.C_V).value, "t4": gs.mul_const(nn.C_A).value}
        shape = gs.shape
        out = _elementwise(session, moment_block(1, OPT_BITS, nn.C_PREC, cfg.p_m, cfg.p_v),
                           terms, {"m": OPT_BITS, "v": OPT_BITS}, shape)
        ms.M[i], ms.V[i] = out["m"], out["v"]
        ms.V_hat[i] = _elementwise(session, max_block(1, OPT_BITS),
                                   {"x": ms.V_hat[i].value, "y": ms.V[i].value},
                                   {"max": OPT_BITS}, shape)["max"]
        c = shift_block(1, OPT_BITS, cfg.p_m - cfg.p_v - cfg.p_g, cfg.eps_int, OPT_BITS)
        g = _elementwise(session, c, {"m": ms.M[i].value, "v": ms.V_hat[i].value},
                         {"g": OPT_BITS}, shape)["g"]
        _apply_update(session, ms, i, g)
    ms.iteration += 1
    return ms


STEPS = {"sgd": secure_sgd_step, "amsgrad": secure_amsgrad_step}


# ---------------------------------------------------------------------------
# checkpoints

def save_checkpoint(path, session: Session, ms: SecureModelShares):
    """Share files for every tensor plus ``manifest.json`` for this party."""
    write_model_shares(path, ms, session.prg.counter)


def write_model_shares(path, ms: SecureModelShares, prg_counter: int = 0):
    """Checkpoint layout without a live session (the dealer uses this too)."""
    d = Path(path) / f"p{ms.party}"
    d.mkdir(parents=True, exist_ok=True)
    tensors = []
    for i in range(len(ms.layers)):
        if ms.wbar[i] is None:
            continue
        for name, sh in (("wbar", ms.wbar[i]), ("plus", ms.tern[i].plus),
                         ("minus", ms.tern[i].minus), ("M", ms.M[i]), ("V", ms.V[i]),
                         ("V_hat", ms.V_hat[i])):
            fn = f"{name}{i}.qshr"
            write_share_file(d / fn, sh)
            tensors.append({"layer": i, "name": name, "file": fn})
    manifest = {"iteration": ms.iteration, "party": ms.party,
                "prg_counter": prg_counter, "precision": ms.config.digest(),
                "model": ms.digest(), "tensors": tensors}
    tmp = d / "manifest.json.tmp"
    tmp.write_text(json.dumps(manifest, indent=1))
    os.replace(tmp, d / "manifest.json")


def load_checkpoint(path, session: Session, layers, config: PrecisionConfig) -> SecureModelShares:
    d = Path(path) / f"p{session.role}"
    manifest = json.loads((d / "manifest.json").read_text())
    if manifest["party"] != session.role:
        raise ProtocolError("checkpoint belongs to the other party")
    n = len(layers)
    slots = {k: [None] * n for k in ("wbar", "plus", "minus", "M", "V", "V_hat")}
    for t in manifest["tensors"]:
        slots[t["name"]][t["layer"]] = read_share_file(d / t["file"], session.role)
    tern = [None if p is None else SharedTernaryMatrix(p, m)
            for p, m in zip(slots["plus"], slots["minus"])]
    ms = SecureModelShares(layers, config, session.role, slots["wbar"], tern,
                           slots["M"], slots["V"], slots["V_hat"], manifest["iteration"])
    if manifest["precision"] != config.digest() or manifest["model"] != ms.digest():
        raise ProtocolError("checkpoint was written for a different model or precision")
    session.prg.counter = max(session.prg.counter, manifest["prg_counter"])
    return ms


# ---------------------------------------------------------------------------
# training loop

def secure_train(session: SecureSession, ms: SecureModelShares, x: ArithShare, y: ArithShare, *,
                 epochs: int = 1, batch: int = 16, optimizer: str = "amsgrad",
                 max_iters: int | None = None, log=None, eval_fn=None, eval_every: int = 0,
                 checkpoint_dir=None, checkpoint_every: int = 0) -> tuple[SecureModelShares, list]:
    """Train on shared data ``x`` (N, ...) and one-hot labels ``y`` (N, classes).

    Batches follow ``nn.batch_schedule`` with the session's public seed, so a
    run resumed from a checkpoint (``ms.iteration > 0``) continues the same
    trajectory.  ``eval_fn(session, ms)`` may return extra metric fields; it
    typically reveals the weights and scores them in the clear.
    """
    step = STEPS[optimizer]
    n = x.shape[0]
    per_epoch = len(nn.batch_schedule(n, batch, session.batch_seed, 0))
    rows = []
    t0 = time.perf_counter()
    start = ms.iteration
    total = epochs * per_epoch if max_iters is None else min(max_iters, epochs * per_epoch)
    for it in range(start, total):
        ep, k = divmod(it, per_epoch)
        idx = nn.batch_schedule(n, batch, session.batch_seed, ep)[k]
        step(session, ms, x[idx], y[idx])
        tot = session.meter.total
        row = {"epoch": ep, "iter": ms.iteration,
               "wall_ms": round(1000 * (time.perf_counter() - t0), 1),
               "bytes": tot.bytes_sent + tot.bytes_received,
               "train_loss": "", "test_acc": ""}
        if eval_fn is not None and eval_every and ms.iteration % eval_every == 0:
            row.update(eval_fn(session, ms))
        rows.append(row)
        if log is not None:
            log(row)
        if checkpoint_dir is not None and checkpoint_every and ms.iteration % checkpoint_every == 0:
            save_checkpoint(checkpoint_dir, session, ms)
    return ms, rows
