"""Detailed single-flow chain following the real compressor schedule.

State at the end of a slot is (phase, decompressor status, channel):

* phase: position inside the deterministic IR period, which fixes the
  type of the next packet (L IR repeats, FO refreshes, SO otherwise);
* ``sync``: context good, ``w`` losses in a row since the last
  reception (w = 0 means the last slot was G, w >= 1 means B);
* ``over_w``: more than W losses, the decompressor does not know yet;
* ``oos``: context damaged. ``level`` is FC or SC (an FO or IR repairs
  it) or NC (only IR does); ``fails`` counts CRC failures since the
  level was entered, a k-in-a-row stand-in for the k-of-n windows.

A first-pass decode in the wraparound band (W1 < w <= W) is accepted by
mistake with probability crc_fn, which damages the context.
"""

from __future__ import annotations

from typing import NamedTuple

from .chain import ChainBuilder, SparseChain, StateSpaceTooLarge, probability_mass, solve
from .channel import ChannelParams
from .sim import FC, FO, IR, NC, SC, SO, RohcConfig, emission_schedule

DEFAULT_MAX_STATES = 500_000


class Model1Label(NamedTuple):
    phase: int
    regime: str
    w: int | None
    level: str | None
    fails: int
    channel: str


def _sync(j, w):
    return Model1Label(j, "sync", w, FC, 0, "G" if w == 0 else "B")


def _over(j):
    return Model1Label(j, "over_w", None, FC, 0, "B")


def _oos(j, level, fails, ch):
    return Model1Label(j, "oos", None, level, fails, ch)


def is_oos(label) -> bool:
    return label.regime == "oos"


def _emissions(cfg: RohcConfig, geometric_ir: bool):
    """Per phase: list of (next phase, packet type, probability)."""
    if geometric_ir:
        if cfg.l != 1 or cfg.fo_timeout is not None:
            raise ValueError("geometric IR emission needs L = 1 and FO disabled")
        p = 1.0 / cfg.irt
        return [[(0, IR, p), (0, SO, 1.0 - p)]]
    sched = emission_schedule(cfg.irt, cfg.l, cfg.fo_timeout)
    n = len(sched)
    return [[((j + 1) % n, sched[(j + 1) % n], 1.0)] for j in range(n)]


def build_model1(cfg: RohcConfig, chan: ChannelParams, max_states: int = DEFAULT_MAX_STATES,
                 geometric_ir: bool = False) -> SparseChain:
    """Build the full chain for one flow.

    ``geometric_ir`` replaces the deterministic IR period with an IR
    emitted with probability 1/IRT in every slot (one phase only).
    """
    if cfg.m != 1:
        raise ValueError("the full model covers a single flow (m = 1)")
    W, W1 = cfg.windows.w, cfg.windows.w1
    fn = cfg.crc_fn
    k1, k2 = cfg.k1, cfg.k2
    kofn = cfg.kofn
    emis = _emissions(cfg, geometric_ir)
    nph = len(emis)
    est = nph * (W + 2 + 2 * (k1 + k2 + 1))
    if est > max_states:
        raise StateSpaceTooLarge(f"state space of ~{est} states exceeds the cap of {max_states}")

    P = {"G": {"G": chan.p_gg, "B": chan.p_gb}, "B": {"G": chan.p_bg, "B": chan.p_bb}}
    b = ChainBuilder(max_states=max_states)

    def fail(j, level, fails):
        """State after one more CRC failure in a damaged context."""
        if not kofn:
            return _oos(j, NC, 0, "G")
        if level == FC:
            return _oos(j, SC, 0, "G") if fails + 1 >= k1 else _oos(j, FC, fails + 1, "G")
        if level == SC:
            return _oos(j, NC, 0, "G") if fails + 1 >= k2 else _oos(j, SC, fails + 1, "G")
        return _oos(j, NC, 0, "G")

    def damaged(j):
        # a wrong header got through the CRC
        return _oos(j, FC if kofn else NC, 0, "G")

    def arrivals(src, j2, ptype, p):
        """Edges for a packet of ``ptype`` received at phase j2."""
        if src.regime == "sync":
            if ptype != SO or src.w <= W1:
                b.add(src, _sync(j2, 0), p)
            else:
                b.add(src, damaged(j2), p * fn)
                b.add(src, _sync(j2, 0), p * (1 - fn))
        elif src.regime == "over_w":
            if ptype != SO:
                b.add(src, _sync(j2, 0), p)
            else:
                b.add(src, damaged(j2), p * fn)
                b.add(src, fail(j2, FC, 0), p * (1 - fn))
        else:
            lvl = src.level
            if ptype == IR or (ptype == FO and lvl in (FC, SC)):
                b.add(src, _sync(j2, 0), p)
            elif ptype == SO and lvl == FC:
                b.add(src, _oos(j2, FC, src.fails, "G"), p * fn)
                b.add(src, fail(j2, FC, src.fails), p * (1 - fn))
            elif ptype == SO and lvl == SC:
                b.add(src, fail(j2, SC, src.fails), p)
            else:
                b.add(src, _oos(j2, lvl, src.fails, "G"), p)

    def losses(src, j2, p):
        if src.regime == "sync":
            dst = _sync(j2, src.w + 1) if src.w < W else _over(j2)
        elif src.regime == "over_w":
            dst = _over(j2)
        else:
            dst = _oos(j2, src.level, src.fails, "B")
        b.add(src, dst, p)

    # breadth-first from the synchronised start keeps only reachable states
    start = _sync(0, 0)
    b.state(start)
    frontier = [start]
    seen = {start}
    while frontier:
        nxt = []
        for src in frontier:
            before = len(b._labels)
            for j2, ptype, pe in emis[src.phase]:
                pr = P[src.channel]
                losses(src, j2, pe * pr["B"])
                arrivals(src, j2, ptype, pe * pr["G"])
            for lab in b._labels[before:]:
                if lab not in seen:
                    seen.add(lab)
                    nxt.append(lab)
        frontier = nxt
    return b.build()


def p_oos_model1(cfg: RohcConfig, chan: ChannelParams, tol: float = 1e-10, **kw) -> float:
    chain = build_model1(cfg, chan, **kw)
    return probability_mass(solve(chain, tol=tol), is_oos)


def oos_breakdown(cfg: RohcConfig, chan: ChannelParams, **kw) -> dict:
    """Steady-state mass per regime (and per oos level)."""
    chain = build_model1(cfg, chan, **kw)
    ss = solve(chain)
    out = {}
    for lab, pi in zip(ss.labels, ss.distribution):
        key = lab.regime if lab.regime != "oos" else f"oos_{lab.level}"
        out[key] = out.get(key, 0.0) + float(pi)
    return out
