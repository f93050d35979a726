"""Secure training reproduces the plaintext fixed-point trainer bit for bit.

A dealer splits a synthetic dataset and an initial ternary network into
shares.  The two parties then run AMSgrad over TCP loopback.  After every
epoch they reveal the weights so we can compare them with a plaintext run
from the same seed.  The plaintext engine is the reference for everything
the secure path computes, down to the last rounding bit.
"""
import time

import numpy as np

from quotient import nn, secure
from quotient.crypto import Prg
from quotient.data import synthetic
from quotient.fxp import PrecisionConfig
from quotient.net import loopback_pair
from quotient.secure import SecureSession
from quotient.session import run_pair
from quotient.shares import share_arith

SIZES = [16, 16, 16, 2]
BATCH, EPOCHS, SEED = 16, 3, 7


def main():
    cfg = PrecisionConfig()
    ds = synthetic(128, SIZES[0], SIZES[-1], seed=SEED)
    layers = nn.mlp(SIZES)
    model = nn.Model.init(layers, cfg, seed=SEED)

    dealer = Prg(b"dealer")
    ms = secure.deal_model(model, dealer)
    xs, ys = share_arith(ds.x, 32, dealer), share_arith(ds.y, 32, dealer)

    c1, c2 = loopback_pair()
    lane = secure.lane_bits_for(layers, cfg)
    s1 = SecureSession(1, c1, Prg(b"p1"), cfg, lane, batch_seed=SEED)
    s2 = SecureSession(2, c2, Prg(b"p2"), cfg, lane, batch_seed=SEED)

    ref = model.copy()
    state = nn.OptimizerState.zeros(ref)
    for ep in range(EPOCHS):
        t0 = time.perf_counter()
        sent = s1.meter.total.bytes_sent
        for idx in nn.batch_schedule(len(ds.x), BATCH, SEED, ep):
            run_pair(lambda s: secure.secure_amsgrad_step(s, ms[0], xs[0][idx], ys[0][idx]),
                     lambda s: secure.secure_amsgrad_step(s, ms[1], xs[1][idx], ys[1][idx]),
                     sessions=(s1, s2))
            nn.amsgrad_step(ref, state, ds.x[idx], ds.y[idx])
        got = secure.reconstruct_model(*ms)
        same = all(np.array_equal(a, b) for a, b in zip(got.weights, ref.weights))
        acc = nn.accuracy(got, ds.x, ds.labels)
        print(f"epoch {ep}: {time.perf_counter() - t0:5.1f} s, "
              f"{(s1.meter.total.bytes_sent - sent) / 1e6:6.2f} MB sent by P1, "
              f"train acc {acc:.3f}, identical to plaintext: {same}")
    s1.close()
    s2.close()


if __name__ == "__main__":
    main()
