"""ReLU, rescale and saturate inside a garbled circuit with a masked output.

The circuit reconstructs z = z1 + z2, applies ReLU and the fixed-point
normalizer, and outputs a - r where r is P1's private mask.  P2 therefore
learns a fresh additive share, never the activation itself.
"""
import numpy as np

from quotient import fxp
from quotient.crypto import Prg
from quotient.gc import blocks
from quotient.secure import run_block
from quotient.session import SessionPair
from quotient.shares import from_ring, share_arith

ALPHA, P_A = 2, 7


def main():
    z = np.array([-300, -1, 0, 3, 40, 255, 509, 4000])
    dealer = Prg(b"demo")
    z1, z2 = share_arith(z, 32, dealer)
    c = blocks.build_forward_block(len(z), 32, ALPHA, P_A)
    print(f"circuit: {c.and_count} AND gates, {c.and_count * 32} bytes of tables")
    print(f"ReLU stage alone: one AND per bit per element = {len(z) * 32}")

    pair = SessionPair(seeds=(3, 4))
    out = pair.run(lambda s: run_block(s, c, 1, {"z": z1.value[None]}, {"a": 32}),
                   lambda s: run_block(s, c, 1, {"z": z2.value[None]}, {"a": 32}))
    a1, a2 = out[0]["a"], out[1]["a"]
    opened = from_ring(a1.value + a2.value, 32)[0]
    want, _ = fxp.activation_int(np.maximum(z, 0), ALPHA, P_A)
    for zi, ai, wi, si in zip(z, opened, want, a2.value[0]):
        print(f"z={zi:>6}  P2 share={int(si):>10}  opened={ai:>4}  plaintext={wi:>4}")
    pair.close()


if __name__ == "__main__":
    main()
