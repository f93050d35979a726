import threading

import numpy as np
import pytest

from quotient import proto
from quotient.crypto import Prg
from quotient.net import ProtocolError
from quotient.proto import PackedLaneConfig
from quotient.session import SessionPair
from quotient.shares import (ArithShare, BoolShare, decompose_ternary, from_ring, share_arith,
                             share_bool)


@pytest.fixture(scope="module")
def pair():
    p = SessionPair(seeds=(31, 32))
    yield p
    p.close()


def recon(s1, s2, sigma=None):
    sigma = sigma or s1.sigma
    return from_ring(s1.value + s2.value, sigma)


def run(pair, fn, sh1, sh2, **kw):
    """Call ``fn(session, *shares)`` on both sides and reconstruct."""
    r1, r2 = pair.run(lambda s: fn(s, *sh1, **kw), lambda s: fn(s, *sh2, **kw))
    return recon(r1, r2)


def payload(pair, fn):
    b1, b2 = pair.s1.meter.snapshot(), pair.s2.meter.snapshot()
    fn()
    t1, t2 = pair.s1.meter.total, pair.s2.meter.total
    return t1.payload_sent - b1.payload_sent, t2.payload_sent - b2.payload_sent


def plain_inner(w, a, sigma):
    return from_ring(np.array([int(np.dot(w.astype(object), a.astype(object)))]), sigma)[0]


# ---------------------------------------------------------------------------
# inner products


@pytest.mark.parametrize("f", [proto.inner_product_ot, proto.inner_product_cot])
def test_inner_product_examples(pair, f):
    rng = Prg(1)
    w = share_bool([1], rng)
    a = share_arith([5], 16, rng)
    assert run(pair, f, (w[0], a[0]), (w[1], a[1])).tolist() == [5]
    w = share_bool(np.zeros(6, dtype=np.uint8), rng)
    a = share_arith([3, -4, 9, 1, 2, 100], 16, rng)
    assert run(pair, f, (w[0], a[0]), (w[1], a[1])).tolist() == [0]


# (w share of P1, w share of P2) for each of the four cases of the correctness proof
CASES = {"I": (1, 1), "II": (0, 0), "III": (0, 1), "IV": (1, 0)}


@pytest.mark.parametrize("case", list(CASES))
def test_cot_share_cases(pair, case):
    b1, b2 = CASES[case]
    rng = Prg(case)
    for a in (0, 1, 77, -5, 32767, -32768):
        a1, a2 = share_arith([a], 16, rng)
        w1, w2 = BoolShare(np.array([b1], dtype=np.uint8), 1), BoolShare(np.array([b2], dtype=np.uint8), 2)
        got = run(pair, proto.inner_product_cot, (w1, a1), (w2, a2))
        assert got.tolist() == [a * (b1 ^ b2)]


def test_inner_product_random_m32(pair):
    rng = np.random.default_rng(2)
    prg = Prg(2)
    for _ in range(200):
        w = rng.integers(0, 2, 32).astype(np.uint8)
        a = rng.integers(-2**15, 2**15, 32)
        ws, as_ = share_bool(w, prg), share_arith(a, 16, prg)
        got = run(pair, proto.inner_product_ot, (ws[0], as_[0]), (ws[1], as_[1]))
        assert got[0] == plain_inner(w, a, 16)


@pytest.mark.slow
def test_inner_product_ot_random_10k(pair):
    rng = np.random.default_rng(3)
    prg = Prg(3)
    for _ in range(10_000):
        w = rng.integers(0, 2, 32).astype(np.uint8)
        a = rng.integers(0, 2**32, 32)
        ws, as_ = share_bool(w, prg), share_arith(a, 32, prg)
        got = run(pair, proto.inner_product_ot, (ws[0], as_[0]), (ws[1], as_[1]))
        assert got[0] == plain_inner(w, a, 32)


def test_inner_product_cot_matches_ot_m1000(pair):
    rng = np.random.default_rng(4)
    prg = Prg(4)
    w = rng.integers(0, 2, 1000).astype(np.uint8)
    a = rng.integers(-2**31, 2**31, 1000)
    ws, as_ = share_bool(w, prg), share_arith(a, 32, prg)
    cot = run(pair, proto.inner_product_cot, (ws[0], as_[0]), (ws[1], as_[1]))
    ot = run(pair, proto.inner_product_ot, (ws[0], as_[0]), (ws[1], as_[1]))
    assert cot[0] == ot[0] == plain_inner(w, a, 32)


def test_inner_product_length_mismatch(pair):
    prg = Prg(5)
    w = share_bool([1, 0], prg)
    a = share_arith([1, 2, 3], 16, prg)
    with pytest.raises(ValueError):
        proto.inner_product_cot(pair.s1, w[0], a[0])


def test_cot_payload_formula(pair):
    m = 1000
    prg = Prg(6)
    ws, as_ = share_bool(np.ones(m, dtype=np.uint8), prg), share_arith(np.arange(m), 16, prg)
    sent = payload(pair, lambda: pair.run(lambda s: proto.inner_product_cot(s, ws[0], as_[0]),
                                          lambda s: proto.inner_product_cot(s, ws[1], as_[1])))
    # m (tau + ell) bits with tau = ell = 128; the extension matrix is padded
    # to a multiple of 128 rows and the job header adds a few bytes
    base = m * (128 + 128) // 8
    for s in sent:
        assert base <= s <= base + 128 * 16 + 64


def test_ot_payload_exceeds_cot(pair):
    m = 1000
    prg = Prg(7)
    ws, as_ = share_bool(np.ones(m, dtype=np.uint8), prg), share_arith(np.arange(m), 16, prg)

    def go(f):
        return sum(payload(pair, lambda: pair.run(lambda s: f(s, ws[0], as_[0]),
                                                  lambda s: f(s, ws[1], as_[1]))))

    assert go(proto.inner_product_ot) > go(proto.inner_product_cot)


# ---------------------------------------------------------------------------
# component-wise


def test_componentwise_examples(pair):
    prg = Prg(8)
    w = share_bool([1, 0], prg)
    a = share_arith([7, 9], 16, prg)
    assert run(pair, proto.componentwise_mult_cot, (w[0], a[0]), (w[1], a[1])).tolist() == [7, 0]
    vals = np.array([3, -8, 0, 1000])
    w = share_bool(np.ones(4, dtype=np.uint8), prg)
    a = share_arith(vals, 16, prg)
    assert np.array_equal(run(pair, proto.componentwise_mult_cot, (w[0], a[0]), (w[1], a[1])), vals)


@pytest.mark.parametrize("sigma", [8, 16, 32])
def test_componentwise_random(pair, sigma):
    rng = np.random.default_rng(sigma)
    prg = Prg(sigma)
    w = rng.integers(0, 2, (40, 25)).astype(np.uint8)
    a = rng.integers(-2**(sigma - 1), 2**(sigma - 1), (40, 25))
    ws, as_ = share_bool(w, prg), share_arith(a, sigma, prg)
    got = run(pair, proto.componentwise_mult_cot, (ws[0], as_[0]), (ws[1], as_[1]))
    assert np.array_equal(got, w * a)


# ---------------------------------------------------------------------------
# ternary matrix-vector products


def matvec_oracle(W, a, bits):
    """Selections only: add where W = 1, subtract where W = -1."""
    n, m = W.shape
    out = np.zeros((n,) + a.shape[1:], dtype=object)
    for i in range(n):
        for j in range(m):
            if W[i, j] == 1:
                out[i] = out[i] + a[j].astype(object)
            elif W[i, j] == -1:
                out[i] = out[i] - a[j].astype(object)
    return from_ring(np.array(out.tolist(), dtype=object) % (1 << bits), bits)


def test_ternary_matvec_hand(pair):
    prg = Prg(9)
    W = np.array([[1, -1], [0, 1]])
    Ws = decompose_ternary(W, prg)
    a = share_arith([2, 3], 16, prg)
    assert run(pair, proto.ternary_matvec, (Ws[0], a[0]), (Ws[1], a[1])).tolist() == [-1, 3]
    Ws = decompose_ternary(np.zeros((3, 2), dtype=np.int64), prg)
    assert run(pair, proto.ternary_matvec, (Ws[0], a[0]), (Ws[1], a[1])).tolist() == [0, 0, 0]


def test_ternary_matvec_accepts_job(pair):
    prg = Prg(10)
    W = np.array([[1, 0, -1]])
    Ws = decompose_ternary(W, prg)
    a = share_arith([4, 5, 6], 16, prg)
    lanes = PackedLaneConfig(16)
    r1, r2 = pair.run(lambda s: proto.ternary_matvec(s, proto.MatVecJob(Ws[0], a[0], lanes)),
                      lambda s: proto.ternary_matvec(s, proto.MatVecJob(Ws[1], a[1], lanes)))
    assert recon(r1, r2).tolist() == [-2]


def _random_matvec(pair, rng, prg, n=64, m=64, bits=16):
    W = rng.integers(-1, 2, (n, m))
    a = rng.integers(-128, 128, m)
    Ws = decompose_ternary(W, prg)
    as_ = share_arith(a, bits, prg)
    lanes = PackedLaneConfig(bits)
    got = run(pair, proto.ternary_matvec, (Ws[0], as_[0]), (Ws[1], as_[1]), lanes=lanes)
    assert np.array_equal(got, matvec_oracle(W, a, bits))


def test_ternary_matvec_random(pair):
    rng, prg = np.random.default_rng(11), Prg(11)
    for bits in (8, 16, 32):
        for _ in range(10):
            _random_matvec(pair, rng, prg, bits=bits)


@pytest.mark.slow
def test_ternary_matvec_random_1000(pair):
    rng, prg = np.random.default_rng(12), Prg(12)
    for _ in range(1000):
        _random_matvec(pair, rng, prg)


def test_packed_b1_equals_single(pair):
    prg = Prg(13)
    rng = np.random.default_rng(13)
    W = rng.integers(-1, 2, (5, 7))
    a = rng.integers(-100, 100, 7)
    Ws = decompose_ternary(W, prg)
    as_ = share_arith(a, 16, prg)
    single = run(pair, proto.ternary_matvec, (Ws[0], as_[0]), (Ws[1], as_[1]))
    col = ArithShare(as_[0].value[:, None], 16, 1), ArithShare(as_[1].value[:, None], 16, 2)
    packed = run(pair, proto.packed_matvec, (Ws[0], col[0]), (Ws[1], col[1]))
    assert np.array_equal(packed[:, 0], single)


def test_packed_b16_8bit_lanes(pair):
    prg = Prg(14)
    rng = np.random.default_rng(14)
    n, m, B = 32, 48, 16
    W = rng.integers(-1, 2, (n, m))
    A = rng.integers(-128, 128, (m, B))
    Ws = decompose_ternary(W, prg)
    As = share_arith(A, 8, prg)
    lanes = PackedLaneConfig(8)
    out = {}

    def go(k, sh):
        out[k] = pair.run(lambda s: proto.packed_matvec(s, Ws[0], sh[0], lanes),
                          lambda s: proto.packed_matvec(s, Ws[1], sh[1], lanes))

    batch = payload(pair, lambda: go("batch", As))
    a1 = share_arith(A[:, 0], 8, prg)
    one = payload(pair, lambda: go("one", a1))
    assert sum(batch) <= 1.05 * sum(one)
    got = recon(*out["batch"])
    for b in range(B):
        assert np.array_equal(got[:, b], matvec_oracle(W, A[:, b], 8))


def test_lane_config():
    for bits in (8, 16, 32):
        c = PackedLaneConfig(bits)
        assert c.lanes_per_block * c.lane_bits == 128
    with pytest.raises(ValueError):
        PackedLaneConfig(12)


def test_parallel_jobs_match_sequential():
    prg = Prg(15)
    rng = np.random.default_rng(15)
    jobs = []
    for _ in range(2):
        W = rng.integers(-1, 2, (20, 30))
        a = rng.integers(-100, 100, 30)
        jobs.append((W, decompose_ternary(W, prg), share_arith(a, 16, prg), a))
    pairs = [SessionPair(seeds=(40 + i, 50 + i)) for i in range(2)]
    results = [None, None]

    def work(i):
        _, Ws, as_, _ = jobs[i]
        results[i] = run(pairs[i], proto.ternary_matvec, (Ws[0], as_[0]), (Ws[1], as_[1]))

    threads = [threading.Thread(target=work, args=(i,)) for i in range(2)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    for i, (W, Ws, as_, a) in enumerate(jobs):
        seq = run(pairs[0], proto.ternary_matvec, (Ws[0], as_[0]), (Ws[1], as_[1]))
        assert np.array_equal(results[i], seq)
        assert np.array_equal(seq, matvec_oracle(W, a, 16))
    for p in pairs:
        p.close()


def test_job_header_mismatch(pair):
    prg = Prg(16)
    Ws = decompose_ternary(np.ones((2, 3), dtype=np.int64), prg)
    Wt = decompose_ternary(np.ones((3, 3), dtype=np.int64), prg)
    a = share_arith([1, 2, 3], 16, prg)
    p = SessionPair(seeds=(60, 61))
    with pytest.raises(ProtocolError):
        p.run(lambda s: proto.ternary_matvec(s, Ws[0], a[0]),
              lambda s: proto.ternary_matvec(s, Wt[1], a[1]))
    p.close()


# ---------------------------------------------------------------------------
# Gilboa products


def test_gilboa_examples(pair):
    prg = Prg(17)
    x, y = share_arith([0, 3], 16, prg), share_arith([123, 5], 16, prg)
    assert run(pair, proto.gilboa_mult, (x[0], y[0]), (x[1], y[1])).tolist() == [0, 15]


def test_gilboa_exhaustive_8bit(pair):
    v = np.arange(256)
    xv, yv = np.meshgrid(v, v, indexing="ij")
    xv, yv = xv.ravel(), yv.ravel()
    # fixed shares: P1 holds the value, P2 holds zero
    x = ArithShare(xv.astype(np.uint64), 16, 1), ArithShare(np.zeros_like(xv, dtype=np.uint64), 16, 2)
    y = ArithShare(yv.astype(np.uint64), 16, 1), ArithShare(np.zeros_like(yv, dtype=np.uint64), 16, 2)
    r1, r2 = pair.run(lambda s: proto.gilboa_mult(s, x[0], y[0]),
                      lambda s: proto.gilboa_mult(s, x[1], y[1]))
    got = (r1.value + r2.value) % (1 << 16)
    assert np.array_equal(got, (xv * yv) % (1 << 16))


@pytest.mark.parametrize("sigma", [16, 32])
def test_gilboa_random(pair, sigma):
    rng = np.random.default_rng(sigma)
    prg = Prg(sigma + 1)
    xv = rng.integers(0, 2**sigma, 2000, dtype=np.uint64)
    yv = rng.integers(0, 2**sigma, 2000, dtype=np.uint64)
    x, y = share_arith(xv, sigma, prg), share_arith(yv, sigma, prg)
    r1, r2 = pair.run(lambda s: proto.gilboa_mult(s, x[0], y[0]),
                      lambda s: proto.gilboa_mult(s, x[1], y[1]))
    want = [(int(a) * int(b)) % (1 << sigma) for a, b in zip(xv, yv)]
    assert ((r1.value + r2.value) % (1 << sigma)).tolist() == want


def test_outer_product_hand(pair):
    prg = Prg(18)
    a = share_arith([2, -3], 32, prg)
    e = share_arith([5, 7], 32, prg)
    got = run(pair, proto.outer_product, (a[0], e[0]), (a[1], e[1]))
    assert got.tolist() == [[10, 14], [-15, -21]]
    z = share_arith([0, 0], 32, prg)
    assert run(pair, proto.outer_product, (a[0], z[0]), (a[1], z[1])).tolist() == [[0, 0], [0, 0]]


@pytest.mark.parametrize("p,q", [(5, 9), (9, 5)])
def test_outer_product_batched(pair, p, q):
    rng = np.random.default_rng(p * q)
    prg = Prg(p + q)
    A = rng.integers(-128, 128, (6, p))
    E = rng.integers(-128, 128, (6, q))
    a, e = share_arith(A, 32, prg), share_arith(E, 32, prg)
    got = run(pair, proto.outer_product, (a[0], e[0]), (a[1], e[1]))
    assert np.array_equal(got, A.T @ E)
