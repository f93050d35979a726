"""Two parties compute <w, a> on secret shares with correlated OT.

P1 and P2 each hold a Boolean share of a 0/1 vector ``w`` and an additive
share of an integer vector ``a``.  Neither learns the other's inputs; the
output is again an additive share.  We run the OT-based and the COT-based
variants side by side and compare what each put on the wire.
"""
import numpy as np

from quotient import proto
from quotient.crypto import Prg
from quotient.session import SessionPair
from quotient.shares import from_ring, share_arith, share_bool


def main(m=4096):
    rng = np.random.default_rng(0)
    w = rng.integers(0, 2, m)
    a = rng.integers(-1000, 1000, m)
    dealer = Prg(b"demo dealer")
    ws, as_ = share_bool(w, dealer), share_arith(a, 32, dealer)

    pair = SessionPair(seeds=(1, 2))     # connects over loopback and runs the base OTs
    print(f"plaintext <w, a> = {int(w @ a)}")
    for name, fn in (("OT ", proto.inner_product_ot), ("COT", proto.inner_product_cot)):
        before = pair.s1.meter.snapshot()
        r1, r2 = pair.run(lambda s: fn(s, ws[0], as_[0]), lambda s: fn(s, ws[1], as_[1]))
        sent = pair.s1.meter.total.payload_sent - before.payload_sent
        print(f"{name}: P1 holds {int(r1.value[0]):>10}, P2 holds {int(r2.value[0]):>10}, "
              f"opened {int(from_ring(r1.value + r2.value, 32)[0]):>7}, "
              f"P1 sent {sent} bytes")
    # COT sends one tau-bit matrix row and one ell-bit correction per element
    print(f"formula m(tau + ell) / 8 = {m * 256 // 8} bytes per party")
    pair.close()


if __name__ == "__main__":
    main()
