"""Command-line entry points.

Every command writes a CSV metrics file (``--out``, default stdout).  Exit
codes: 0 success, 2 configuration error, 3 protocol abort.  ``QUOTIENT_SEED``
in the environment overrides all PRG seeds.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import threading
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import data as qdata
from . import nn
from .config import ConfigError, ModelConfig, from_arch, load_model_config
from .crypto import Prg
from .fxp import PrecisionConfig
from .net import (ChannelConfig, NetError, connect, emulate, listen, loopback_pair)
from .session import Session
from .shares import (ShareFileError, read_share_file, share_arith, write_share_file)

EXIT_OK, EXIT_CONFIG, EXIT_PROTOCOL = 0, 2, 3

BENCH_FIELDS = ["op", "size", "mode", "wall_ms", "bytes_sent", "bytes_recv", "rounds"]
TRAIN_FIELDS = ["epoch", "iter", "wall_ms", "bytes", "train_loss", "test_acc"]
PREDICT_FIELDS = ["n", "wall_ms", "bytes_sent", "bytes_recv", "rounds", "test_acc"]
SHARE_FIELDS = ["party", "file", "rows", "sigma", "bytes"]
CIRCUIT_FIELDS = ["block", "and", "xor", "not", "wires", "inputs", "outputs"]
DATA_SIGMA = 32


# ---------------------------------------------------------------------------
# helpers

def env_seed(default: int | None) -> int | None:
    v = os.environ.get("QUOTIENT_SEED")
    if v is None or v == "":
        return default
    try:
        return int(v)
    except ValueError:
        raise ConfigError(f"QUOTIENT_SEED must be an integer, got {v!r}") from None


def party_prg(role: int, seed: int | None) -> Prg:
    seed = env_seed(seed)
    return Prg(None if seed is None else f"party{role}:{seed}".encode())


@contextmanager
def metrics_writer(path, fields):
    """CSV writer over ``path`` (or stdout for ``-``); rows flush as they come."""
    fh = sys.stdout if path in (None, "-") else open(path, "w", newline="")
    try:
        w = csv.DictWriter(fh, fieldnames=fields, extrasaction="ignore")
        w.writeheader()

        def emit(row):
            w.writerow(row)
            fh.flush()
        yield emit
    finally:
        if fh is not sys.stdout:
            fh.close()


def parse_precision(items) -> PrecisionConfig:
    kw = {}
    for it in items or []:
        key, sep, val = it.partition("=")
        if not sep:
            raise ConfigError(f"--precision expects key=value, got {it!r}")
        key = key.strip().replace("-", "_")
        try:
            kw[key] = [int(v) for v in val.split(",")] if key == "alpha" else int(val)
        except ValueError:
            raise ConfigError(f"--precision {key}: not an integer") from None
    try:
        return PrecisionConfig(**kw)
    except TypeError as exc:
        raise ConfigError(f"unknown precision field: {exc}") from None


def load_model(args, input_size: int | None = None) -> ModelConfig:
    if getattr(args, "model", None):
        return load_model_config(args.model)
    if getattr(args, "arch", None):
        if input_size is None:
            raise ConfigError("--arch needs a dataset to infer the input size")
        return from_arch(args.arch, input_size)
    raise ConfigError("give --model FILE or --arch STRING")


def load_dataset(spec: str, p_a: int, seed: int, test_frac: float = 0.2):
    """``mnist:DIR``, ``german:FILE``, ``thyroid:DIR``, ``csv:FILE[:label]`` or
    ``synthetic:N:DIM[:CLASSES]``.  Returns ``(train, test)``."""
    kind, _, rest = spec.partition(":")
    if kind == "mnist":
        return qdata.load_mnist(rest or qdata.default_data_dir(), p_a)
    if kind == "thyroid":
        return qdata.load_thyroid(rest or qdata.default_data_dir(), p_a)
    if kind == "german":
        ds = qdata.load_german(rest, p_a)
    elif kind == "csv":
        path, _, label = rest.partition(":")
        ds = qdata.ingest_csv(qdata.CsvSpec(path, label if label else -1), p_a)
    elif kind == "synthetic":
        parts = [int(v) for v in rest.split(":") if v]
        if len(parts) not in (2, 3):
            raise ConfigError("synthetic:N:DIM[:CLASSES]")
        ds = qdata.synthetic(*parts, seed=seed, p_a=p_a)
    else:
        raise ConfigError(f"unknown dataset kind {kind!r}")
    return qdata.train_test_split(ds, test_frac, seed)


def _limit(ds, n):
    return ds if not n or n >= len(ds) else ds.subset(np.arange(n))


def _check_input(mc: ModelConfig, ds, classes: int | None = None):
    feats = int(np.prod(ds.x.shape[1:]))
    if feats != mc.input_size:
        raise ConfigError(f"dataset has {feats} features, model expects {mc.input_size}")
    if (classes or ds.classes) != mc.classes:
        raise ConfigError(f"dataset has {classes or ds.classes} classes, model outputs {mc.classes}")


def _open_channel(args, role: int):
    host, _, port = args.peer.rpartition(":")
    try:
        addr = (host or "127.0.0.1", int(port))
    except ValueError:
        raise ConfigError(f"--peer must be HOST:PORT, got {args.peer!r}") from None
    ch = listen(addr, args.timeout) if role == 1 else connect(addr, args.timeout)
    return emulate(ch, ChannelConfig.preset(args.mode))


# ---------------------------------------------------------------------------
# plaintext-train

def cmd_plaintext_train(args) -> int:
    cfg = parse_precision(args.precision)
    seed = env_seed(args.seed)
    train, test = load_dataset(args.data, cfg.p_a, seed)
    train, test = _limit(train, args.limit), _limit(test, args.test_limit)
    mc = load_model(args, int(np.prod(train.x.shape[1:])))
    _check_input(mc, train)
    model = nn.Model.init(mc.layers, cfg, seed)
    x, y = train.x.reshape(len(train), -1), train.y
    probe = np.arange(min(len(train), 1000))
    t0 = time.perf_counter()

    def eval_fn(m):
        out = {"wall_ms": round(1000 * (time.perf_counter() - t0), 1), "bytes": 0,
               "train_loss": round(nn.mse(m, x[probe], y[probe]), 6)}
        if len(test):
            out["test_acc"] = round(nn.accuracy(m, test.x.reshape(len(test), -1), test.labels), 6)
        return out

    with metrics_writer(args.out, TRAIN_FIELDS) as emit:
        nn.train(model, x, y, epochs=args.epochs, batch=args.batch, optimizer=args.optimizer,
                 seed=seed, eval_fn=eval_fn, eval_every=args.eval_every, log=emit,
                 max_iters=args.max_iters)
    if args.save_weights:
        save_weights(args.save_weights, model)
    return EXIT_OK


def save_weights(path, model: nn.Model):
    np.savez(path, **{f"w{i}": w for i, w in enumerate(model.weights) if w is not None})


def load_weights(path, layers, cfg) -> nn.Model:
    z = np.load(path)
    ws = [z[f"w{i}"] if L.has_weights else None for i, L in enumerate(layers)]
    return nn.Model(list(layers), ws, cfg)


# ---------------------------------------------------------------------------
# share-data

def share_dataset(ds, out_dir, prg: Prg, prefix: str = "") -> list[dict]:
    """Dealer sharing: ``out/p{1,2}/{prefix}x.qshr`` and ``{prefix}y.qshr``."""
    rows = []
    for name, arr in ((prefix + "x", ds.x.reshape(len(ds), -1)), (prefix + "y", ds.y)):
        s1, s2 = share_arith(arr, DATA_SIGMA, prg)
        for party, s in ((1, s1), (2, s2)):
            d = Path(out_dir) / f"p{party}"
            d.mkdir(parents=True, exist_ok=True)
            f = d / f"{name}.qshr"
            write_share_file(f, s)
            rows.append({"party": party, "file": str(f), "rows": len(arr),
                         "sigma": DATA_SIGMA, "bytes": f.stat().st_size})
    return rows


def cmd_share_data(args) -> int:
    from .secure import deal_model, write_model_shares
    cfg = parse_precision(args.precision)
    seed = env_seed(args.seed)
    train, test = load_dataset(args.data, cfg.p_a, seed)
    train, test = _limit(train, args.limit), _limit(test, args.test_limit)
    dealer = Prg(None if seed is None else f"dealer:{seed}".encode())
    out = Path(args.out)
    rows = share_dataset(train, out, dealer)
    if args.with_test and len(test):
        rows += share_dataset(test, out, dealer, "test_")
    # the public batch seed is the XOR of the two parties' contributions
    r = int.from_bytes(dealer.bytes(4), "big")
    seed_shares = (r, r ^ (seed & 0xFFFFFFFF))
    for party in (1, 2):
        meta = {"party": party, "seed_share": seed_shares[party - 1], "rows": len(train),
                "classes": train.classes, "p_a": cfg.p_a, "test_rows": len(test) if args.with_test else 0}
        (out / f"p{party}" / "meta.json").write_text(json.dumps(meta, indent=1))
    if args.model:
        mc = load_model_config(args.model)
        _check_input(mc, train)
        model = nn.Model.init(mc.layers, cfg, seed)
        for ms in deal_model(model, dealer):
            write_model_shares(out / "model", ms)
    with metrics_writer(args.metrics, SHARE_FIELDS) as emit:
        for row in rows:
            emit(row)
    return EXIT_OK


def _read_party_data(d: Path, role: int, prefix: str = ""):
    x = read_share_file(d / f"{prefix}x.qshr", role)
    y = read_share_file(d / f"{prefix}y.qshr", role)
    if x.shape[0] != y.shape[0]:
        raise ConfigError("feature and label share files disagree on row count")
    return x, y


def _read_meta(d: Path, role: int) -> dict:
    try:
        meta = json.loads((d / "meta.json").read_text())
    except OSError as exc:
        raise ConfigError(f"missing share metadata: {exc}") from None
    if meta.get("party") != role:
        raise ConfigError(f"{d} holds party {meta.get('party')}'s shares, not party {role}'s")
    return meta


# ---------------------------------------------------------------------------
# secure train / predict

def _establish(args, role, cfg, mc, seed_share=None, job=None):
    from .secure import SecureSession, lane_bits_for, model_digest
    prg = party_prg(role, args.seed)
    ch = _open_channel(args, role)
    try:
        return SecureSession.establish(role, ch, prg, cfg, lane_bits_for(mc.layers, cfg),
                                       model_digest(mc.layers), seed_share, job=job)
    except BaseException:
        ch.close()
        raise


def cmd_train(args) -> int:
    from .secure import load_checkpoint, random_init_shares, reveal, reveal_model, secure_forward, secure_train
    if args.workers != 1:
        raise ConfigError("secure training runs a single worker session")
    cfg = parse_precision(args.precision)
    role = args.role
    mc = load_model_config(args.model)
    d = Path(args.shares) / f"p{role}"
    meta = _read_meta(d, role)
    x, y = _read_party_data(d, role)
    if x.shape[1] != mc.input_size or y.shape[1] != mc.classes:
        raise ConfigError("share files do not match the model input/classes")
    evalset = None
    if args.eval_data:
        _, evalset = load_dataset(args.eval_data, cfg.p_a, args.data_seed)
        if args.eval_data.startswith(("mnist", "thyroid")):
            evalset = _limit(evalset, args.test_limit)
    job = {"cmd": "train", "n": int(x.shape[0]), "epochs": args.epochs, "batch": args.batch,
           "optimizer": args.optimizer, "max_iters": args.max_iters,
           "eval_every": args.eval_every, "reveal": bool(args.reveal)}
    session = _establish(args, role, cfg, mc, meta["seed_share"], job)
    try:
        ckpt = Path(args.checkpoint) if args.checkpoint else None
        init_dir = Path(args.shares) / "model"
        if args.resume and ckpt and (ckpt / f"p{role}" / "manifest.json").exists():
            ms = load_checkpoint(ckpt, session, mc.layers, cfg)
        elif (init_dir / f"p{role}" / "manifest.json").exists():
            ms = load_checkpoint(init_dir, session, mc.layers, cfg)
        else:
            ms = random_init_shares(session, mc.layers, session.prg.child(b"init"))
        probe = np.arange(min(x.shape[0], 64))

        def eval_fn(s, m):
            # diagnostics on revealed values: loss on a fixed training probe
            # and accuracy of the revealed weights on public test data
            aL = secure_forward(s, m, x[probe])[-1].a
            diff = reveal(s, aL - y[probe])
            out = {"train_loss": round(float(np.mean(diff.astype(float) ** 2))
                                       / float(1 << (2 * cfg.p_a)), 6)}
            model = reveal_model(s, m)
            if evalset is not None:
                out["test_acc"] = round(nn.accuracy(model, evalset.x.reshape(len(evalset), -1),
                                                    evalset.labels), 6)
            return out

        with metrics_writer(args.out, TRAIN_FIELDS) as emit:
            ms, _ = secure_train(session, ms, x, y, epochs=args.epochs, batch=args.batch,
                                 optimizer=args.optimizer, max_iters=args.max_iters, log=emit,
                                 eval_fn=eval_fn, eval_every=args.eval_every,
                                 checkpoint_dir=ckpt, checkpoint_every=args.checkpoint_every)
        if ckpt:
            from .secure import save_checkpoint
            save_checkpoint(ckpt, session, ms)
        if args.reveal:
            model = reveal_model(session, ms)
            save_weights(args.reveal, model)
    finally:
        session.close()
    return EXIT_OK


def cmd_predict(args) -> int:
    from .secure import load_checkpoint, reveal, secure_predict
    cfg = parse_precision(args.precision)
    role = args.role
    mc = load_model_config(args.model)
    d = Path(args.shares) / f"p{role}"
    _read_meta(d, role)
    x, y = _read_party_data(d, role, args.prefix)
    job = {"cmd": "predict", "n": int(x.shape[0]), "batch": args.batch,
           "score": bool(args.score), "reveal_to": args.reveal_to}
    session = _establish(args, role, cfg, mc, job=job)
    try:
        ms = load_checkpoint(args.weights, session, mc.layers, cfg)
        before = session.meter.snapshot()
        t0 = time.perf_counter()
        preds = []
        for lo in range(0, x.shape[0], args.batch):
            preds.append(secure_predict(session, ms, x[lo:lo + args.batch], reveal_to=args.reveal_to))
        row = {"n": x.shape[0], "wall_ms": round(1000 * (time.perf_counter() - t0), 1)}
        acc = ""
        if args.score:
            # open the labels to the learning party to score its predictions
            labels = reveal(session, y, to=args.reveal_to)
            if labels is not None:
                acc = round(float(np.mean(np.concatenate(preds) == labels.argmax(1))), 6)
        tot = session.meter.total
        row.update(bytes_sent=tot.bytes_sent - before.bytes_sent,
                   bytes_recv=tot.bytes_received - before.bytes_received,
                   rounds=tot.round_trips - before.round_trips, test_acc=acc)
        if role == args.reveal_to and args.labels_out:
            np.savetxt(args.labels_out, np.concatenate(preds), fmt="%d")
        with metrics_writer(args.out, PREDICT_FIELDS) as emit:
            emit(row)
    finally:
        session.close()
    return EXIT_OK


# ---------------------------------------------------------------------------
# bench

def _bench_job(op: str, size: int, impl: str, batch: int, seed: int):
    """Returns ``fn(session)`` running one instance of the benchmarked operation."""
    from . import proto
    from .gc.blocks import build_gc_componentwise, build_gc_matvec
    from .secure import run_block
    from .shares import ArithShare, BoolShare, SharedTernaryMatrix, share_arith, share_bool

    dealer = Prg(f"bench:{seed}".encode())
    rng = np.random.default_rng(seed)
    lb = 16
    if op == "cot":
        choices = rng.integers(0, 2, size).astype(np.uint8)
        addend = dealer.ring((size, 2), 64)

        def fn(s):
            from .ot import cot_extension
            if s.role == 1:
                return cot_extension(s, addend=addend)
            return cot_extension(s, choices=choices, k=2, dtype=np.uint64)
        return fn
    if op == "cmul":
        w = share_bool(rng.integers(0, 2, size), dealer)
        a = share_arith(rng.integers(-100, 100, size), 32, dealer)
        if impl == "gc":
            c = build_gc_componentwise(size, 32)
            return lambda s: run_block(s, c, 1, {"w": w[s.role - 1].bits[None],
                                                 "a": a[s.role - 1].value[None]}, {"z": 32})
        return lambda s: proto.componentwise_mult_cot(s, w[s.role - 1], a[s.role - 1])
    if op == "matvec":
        W = rng.integers(-1, 2, (128, size))
        from .shares import decompose_ternary
        Ws = decompose_ternary(W, dealer)
        a = share_arith(rng.integers(-100, 100, (size, batch)), lb, dealer)
        if impl == "gc":
            c = build_gc_matvec(128, size, lb)

            def fn(s):
                t = Ws[s.role - 1]
                return run_block(s, c, batch, {"wp": np.broadcast_to(t.plus.bits, (batch,) + t.shape),
                                               "wm": np.broadcast_to(t.minus.bits, (batch,) + t.shape),
                                               "a": a[s.role - 1].value.T}, {"z": lb})
            return fn
        lanes = proto.PackedLaneConfig(lb)
        return lambda s: proto.packed_matvec(s, Ws[s.role - 1], a[s.role - 1], lanes)
    if op in ("forward", "backward"):
        from .secure import (OPT_BITS, SecureSession, deal_model, secure_backward_layer,
                             secure_forward_layer)
        cfg = PrecisionConfig()
        layers = [nn.fc(size, 128)]
        model = nn.Model.init(layers, cfg, seed)
        shares = deal_model(model, dealer)
        x = share_arith(rng.integers(0, 128, (batch, size)), 32, dealer)
        e = share_arith(rng.integers(-128, 128, (batch, 128)), 32, dealer)

        def fn(s):
            ss = SecureSession(s.role, s.channel, s.prg, cfg, 16)
            ss._ot = s._ot
            ms = shares[s.role - 1]
            ent = secure_forward_layer(ss, layers[0], ms.tern[0], x[s.role - 1])
            if op == "forward":
                return ent
            return secure_backward_layer(ss, layers[0], ms.tern[0], e[s.role - 1], ent,
                                         x[s.role - 1], need_prev=True)
        return fn
    raise ConfigError(f"unknown bench op {op!r}")


def run_bench(op: str, size: int, mode: str = "real", impl: str = "cot", batch: int = 1,
              workers: int = 1, seed: int = 0) -> dict:
    """Run ``op`` between two in-process parties over loopback TCP.  Base OTs
    are set up before the clock starts.  Traffic is party 1's view."""
    if workers < 1:
        raise ConfigError("--workers must be >= 1")
    conf = ChannelConfig.preset(mode)
    # each worker owns a session pair and a slice of the instance
    sizes = [size // workers + (i < size % workers) for i in range(workers)]
    pairs = []
    for i, n in enumerate(sizes):
        c1, c2 = loopback_pair()
        s1 = Session(1, emulate(c1, conf), party_prg(1, seed * 1000 + i))
        s2 = Session(2, emulate(c2, conf), party_prg(2, seed * 1000 + i))
        pairs.append((s1, s2, _bench_job(op, n, impl, batch, seed + i)))
    from .session import run_pair
    for s1, s2, _ in pairs:
        run_pair(lambda s: s.ot, sessions=(s1, s2))
    before = [s1.meter.snapshot() for s1, _, _ in pairs]
    errors = []

    def go(s1, s2, fn):
        try:
            run_pair(fn, sessions=(s1, s2))
        except BaseException as exc:
            errors.append(exc)

    t0 = time.perf_counter()
    threads = [threading.Thread(target=go, args=p) for p in pairs]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    wall = time.perf_counter() - t0
    if errors:
        raise errors[0]
    row = {"op": op if impl == "cot" else f"{op}-gc", "size": size, "mode": mode,
           "wall_ms": round(1000 * wall, 2), "bytes_sent": 0, "bytes_recv": 0, "rounds": 0}
    for (s1, _, _), b in zip(pairs, before):
        t = s1.meter.total
        row["bytes_sent"] += t.bytes_sent - b.bytes_sent
        row["bytes_recv"] += t.bytes_received - b.bytes_received
        row["rounds"] = max(row["rounds"], t.round_trips - b.round_trips)
    for s1, s2, _ in pairs:
        s1.close()
        s2.close()
    return row


def cmd_bench(args) -> int:
    if args.impl == "gc" and args.op not in ("cmul", "matvec"):
        raise ConfigError("--impl gc is available for cmul and matvec")
    seed = env_seed(args.seed) or 0
    with metrics_writer(args.out, BENCH_FIELDS) as emit:
        for size in args.size:
            for _ in range(args.repeat):
                emit(run_bench(args.op, size, args.mode, args.impl, args.batch, args.workers, seed))
    return EXIT_OK


# ---------------------------------------------------------------------------
# circuit-stats

def cmd_circuit_stats(args) -> int:
    from .gc.blocks import BLOCKS
    names = args.block or sorted(BLOCKS)
    with metrics_writer(args.out, CIRCUIT_FIELDS) as emit:
        for name in names:
            if name not in BLOCKS:
                raise ConfigError(f"unknown block {name!r}; known: {', '.join(sorted(BLOCKS))}")
            c = BLOCKS[name]()
            emit({"block": name, "and": c.and_count, "xor": c.xor_count, "not": c.not_count,
                  "wires": c.n_wires, "inputs": sum(g.wires.size for g in c.inputs),
                  "outputs": sum(g.wires.size for g in c.outputs)})
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="quotient", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed_default=0):
        sp.add_argument("--precision", action="append", metavar="KEY=VALUE",
                        help="override a precision field, e.g. eta=-10 (repeatable)")
        sp.add_argument("--seed", type=int, default=seed_default)
        sp.add_argument("--out", default="-", help="CSV metrics path (default stdout)")

    def party(sp):
        sp.add_argument("--role", type=int, choices=(1, 2), required=True)
        sp.add_argument("--peer", default="127.0.0.1:7700",
                        help="party 1 listens on HOST:PORT, party 2 connects to it")
        sp.add_argument("--mode", choices=("real", "lan-sim", "wan-sim"), default="real")
        sp.add_argument("--timeout", type=float, default=60.0)
        sp.add_argument("--model", required=True, help="model config file")
        sp.add_argument("--shares", required=True, help="directory written by share-data")
        sp.add_argument("--workers", type=int, default=1)

    sp = sub.add_parser("plaintext-train", help="fixed-point training in the clear")
    common(sp)
    sp.add_argument("--data", required=True)
    g = sp.add_mutually_exclusive_group(required=True)
    g.add_argument("--model")
    g.add_argument("--arch", help="e.g. 2x(128FC)-10MSE")
    sp.add_argument("--epochs", type=int, default=1)
    sp.add_argument("--batch", type=int, default=128)
    sp.add_argument("--optimizer", choices=("amsgrad", "sgd"), default="amsgrad")
    sp.add_argument("--eval-every", type=int, default=0, help="iterations; 0 = per epoch")
    sp.add_argument("--max-iters", type=int)
    sp.add_argument("--limit", type=int, help="use the first N training rows")
    sp.add_argument("--test-limit", type=int)
    sp.add_argument("--save-weights", help="write final stored weights (.npz)")
    sp.set_defaults(func=cmd_plaintext_train)

    sp = sub.add_parser("share-data", help="trusted-dealer sharing for tests and benchmarks")
    sp.add_argument("--precision", action="append", metavar="KEY=VALUE")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--metrics", default="-", help="CSV listing of written files")
    sp.add_argument("--model", help="also deal an initial model drawn with --seed")
    sp.add_argument("--with-test", action="store_true", help="share the test split too")
    sp.add_argument("--limit", type=int)
    sp.add_argument("--test-limit", type=int)
    sp.set_defaults(func=cmd_share_data)

    sp = sub.add_parser("train", help="secure training as one party")
    common(sp, seed_default=None)
    party(sp)
    sp.add_argument("--epochs", type=int, default=1)
    sp.add_argument("--batch", type=int, default=128)
    sp.add_argument("--optimizer", choices=("amsgrad", "sgd"), default="amsgrad")
    sp.add_argument("--max-iters", type=int)
    sp.add_argument("--eval-every", type=int, default=0,
                    help="reveal weights and score them every N iterations")
    sp.add_argument("--eval-data", help="public test data for --eval-every")
    sp.add_argument("--data-seed", type=int, default=0,
                    help="split seed for --eval-data (match the share-data seed)")
    sp.add_argument("--test-limit", type=int)
    sp.add_argument("--checkpoint", help="checkpoint directory")
    sp.add_argument("--checkpoint-every", type=int, default=0)
    sp.add_argument("--resume", action="store_true")
    sp.add_argument("--reveal", help="reveal the final weights to both parties (.npz)")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("predict", help="secure inference as one party")
    common(sp, seed_default=None)
    party(sp)
    sp.add_argument("--weights", required=True, help="checkpoint directory")
    sp.add_argument("--prefix", default="test_", help="share-file prefix of the inputs")
    sp.add_argument("--batch", type=int, default=256)
    sp.add_argument("--reveal-to", type=int, choices=(1, 2), default=1)
    sp.add_argument("--score", action="store_true", help="open labels to the learner and report accuracy")
    sp.add_argument("--labels-out", help="predicted labels, one per line")
    sp.set_defaults(func=cmd_predict)

    sp = sub.add_parser("bench", help="two in-process parties over loopback")
    common(sp)
    sp.add_argument("--op", choices=("cmul", "matvec", "forward", "backward", "cot"), required=True)
    sp.add_argument("--size", type=int, nargs="+", required=True)
    sp.add_argument("--mode", choices=("real", "lan-sim", "wan-sim"), default="real")
    sp.add_argument("--impl", choices=("cot", "gc"), default="cot")
    sp.add_argument("--batch", type=int, default=1)
    sp.add_argument("--repeat", type=int, default=1)
    sp.add_argument("--workers", type=int, default=1)
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("circuit-stats", help="gate counts of the garbled-circuit blocks")
    sp.add_argument("--block", action="append")
    sp.add_argument("--out", default="-")
    sp.set_defaults(func=cmd_circuit_stats)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (NetError, ConnectionError) as exc:
        # a peer that drops the connection mid-session is a protocol abort too
        print(f"quotient: protocol abort: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL
    except (ConfigError, qdata.DataError, ShareFileError, ValueError, OSError) as exc:
        print(f"quotient: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
