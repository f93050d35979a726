"""Per-party execution context shared by the ot, gc, proto and secure layers.

Protocol code is written SPMD style: both parties call the same function with
their own ``Session`` and branch on ``session.role``.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field

from .crypto import Prg
from .net import Channel, NetError, TrafficMeter, loopback_pair


@dataclass(frozen=True)
class SecurityParams:
    tau: int = 128
    cot_block: int = 128

    def __post_init__(self):
        if self.tau != 128 or self.cot_block != 128:
            raise ValueError("only tau = cot_block = 128 is supported")


class Session:
    def __init__(self, role: int, channel: Channel, prg: Prg | None = None,
                 security: SecurityParams | None = None):
        if role not in (1, 2):
            raise ValueError("role must be 1 or 2")
        self.role = role
        self.channel = channel
        self.prg = prg or Prg()
        self.security = security or SecurityParams()
        self._ot = None

    @property
    def peer(self) -> int:
        return 3 - self.role

    @property
    def meter(self) -> TrafficMeter:
        return self.channel.meter

    def phase(self, name: str):
        return self.channel.meter.phase(name)

    @property
    def ot(self):
        """OT-extension state, with base OTs run lazily on first use."""
        if self._ot is None:
            from .ot import OtState
            with self.phase("setup"):
                self._ot = OtState.setup(self)
        return self._ot

    def close(self):
        self.channel.close()


def run_pair(fn1, fn2=None, *, seeds=(1, 2), sessions=None, timeout=None):
    """Run ``fn1(session1)`` and ``fn2(session2)`` concurrently over loopback.

    ``fn2`` defaults to ``fn1``.  Pass existing ``sessions`` to reuse base
    OTs across calls.  Returns both results; re-raises the first exception.
    """
    fn2 = fn2 or fn1
    if sessions is None:
        c1, c2 = loopback_pair()
        sessions = (Session(1, c1, Prg(seeds[0])), Session(2, c2, Prg(seeds[1])))
    res = [None, None]
    err = [None, None]

    def work(i, fn, s):
        try:
            res[i] = fn(s)
        except BaseException as e:
            err[i] = e
            # unblock the peer
            s.channel.close()

    t = threading.Thread(target=work, args=(1, fn2, sessions[1]), daemon=True)
    t.start()
    work(0, fn1, sessions[0])
    t.join(timeout)
    errs = [e for e in err if e is not None]
    if errs:
        # the peer of a failing party usually sees only a closed channel
        errs.sort(key=lambda e: (isinstance(e, NetError), type(e) is NetError))
        raise errs[0]
    return res[0], res[1]


class SessionPair:
    """Two connected sessions kept alive across many ``run`` calls (tests, benches)."""

    def __init__(self, seeds=(1, 2)):
        c1, c2 = loopback_pair()
        self.s1 = Session(1, c1, Prg(seeds[0]))
        self.s2 = Session(2, c2, Prg(seeds[1]))
        self.run(lambda s: s.ot)

    def run(self, fn1, fn2=None):
        return run_pair(fn1, fn2, sessions=(self.s1, self.s2))

    def close(self):
        self.s1.close()
        self.s2.close()
