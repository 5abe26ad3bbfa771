"""Tagged-flow OoS probability when M flows share one compressor.

Each slot carries a packet of a uniformly chosen flow. Besides the SN
window W, the tagged flow now loses its context when the IP-ID jumps by
too much between two of its correctly received packets (window W_o).
The chain is the simplified single-flow chain driven by the channel
matrix averaged over the geometric inter-packet distance, plus an edge
from every w state to (oos, G).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

from .chain import ChainBuilder, SparseChain, probability_mass, solve
from .channel import ChannelParams, averaged_matrix
from .model_closed import OOS_B, OOS_G, W_PLUS, _pow, is_oos

log = logging.getLogger(__name__)

_TINY = 1e-300
_EPS = 1e-16


@dataclass(frozen=True)
class MultiflowParams:
    m: int
    w: int
    w_o: int
    irt: float
    chan: ChannelParams

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 1:
            raise ValueError(f"m must be an integer >= 1, got {self.m!r}")
        if int(self.w) != self.w or self.w < 0:
            raise ValueError(f"w must be an integer >= 0, got {self.w!r}")
        if int(self.w_o) != self.w_o or self.w_o < 0:
            raise ValueError(f"w_o must be an integer >= 0, got {self.w_o!r}")
        if self.irt < 1:
            raise ValueError(f"irt must be >= 1, got {self.irt!r}")


def _betacf(a, b, x, max_iter=10_000):
    # modified Lentz evaluation of the incomplete beta continued fraction
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise ArithmeticError(f"incomplete beta fraction did not converge for a={a}, b={b}, x={x}")


def betainc_reg(a: float, b: float, x: float) -> float:
    """Regularised incomplete beta I_x(a, b) for a, b > 0 and 0 <= x <= 1."""
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    lbt = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
           + a * math.log(x) + b * math.log1p(-x))
    bt = math.exp(lbt)
    # the fraction converges fast on the side of the mean
    if x < (a + 1.0) / (a + b + 2.0):
        return bt * _betacf(a, b, x) / a
    return 1.0 - bt * _betacf(b, a, 1.0 - x) / b


def pascal_survival(w: int, w_o: int, m: int) -> float:
    """Probability that the tagged flow's IP-ID window survives ``w`` losses.

    Ratio of the integrals of u**w (1-u)**(w_o-w) over [0, 1/m] and
    [0, 1], i.e. I_{1/m}(w + 1, w_o - w + 1).
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    if w < 0 or w_o < 0:
        raise ValueError("w and w_o must be >= 0")
    if m == 1:
        return 1.0
    if w > w_o:
        return 0.0
    return min(1.0, max(0.0, betainc_reg(w + 1.0, w_o - w + 1.0, 1.0 / m)))


def effective_lb(chan: ChannelParams, m: int) -> float:
    """Mean bad-burst length in tagged-flow packets."""
    if m == 1:
        return chan.lb
    return 1.0 / averaged_matrix(chan, m)[1, 0]


def p_oos_multiflow(p: MultiflowParams) -> float:
    """Small-eps closed form for the tagged-flow OoS probability.

    Uses the stationary eps (unchanged by averaging) and the burst length
    seen by the tagged flow. Reduces to the single-flow approximation
    when m = 1.
    """
    eps = p.chan.eps
    lb = effective_lb(p.chan, p.m)
    q = 1.0 - 1.0 / lb
    miss0 = 1.0 - pascal_survival(0, p.w_o, p.m)
    s = 0.0
    if p.m > 1:
        s = math.fsum(_pow(q, w - 1) * (1.0 - pascal_survival(w, p.w_o, p.m)) for w in range(1, p.w + 1)) / lb
    # same operation order as the single-flow formula so m = 1 matches bit for bit
    val = eps / lb * (s - miss0 + _pow(q, p.w)) * p.irt + p.irt * miss0
    if not 0.0 <= val <= 1.0:
        log.warning("multi-flow OoS formula gave %.6g for %s; clamped to [0, 1]", val, p)
        val = min(1.0, max(0.0, val))
    return val


def build_model3_chain(p: MultiflowParams) -> SparseChain:
    Pb = averaged_matrix(p.chan, p.m)
    gg, gb = Pb[0]
    bg, bb = Pb[1]
    p_ir = 1.0 / p.irt
    W = p.w
    b = ChainBuilder()
    for i in range(W + 1):
        b.state(i)
    for i in range(W + 1):
        good, bad = (gg, gb) if i == 0 else (bg, bb)
        keep = pascal_survival(i, p.w_o, p.m)
        b.add(i, 0, good * keep)
        b.add(i, OOS_G, good * (1.0 - keep))
        b.add(i, i + 1 if i < W else W_PLUS, bad)
    b.add(W_PLUS, W_PLUS, bb)
    b.add(W_PLUS, 0, bg * p_ir)
    b.add(W_PLUS, OOS_G, bg * (1 - p_ir))
    b.add(OOS_G, 0, gg * p_ir)
    b.add(OOS_G, OOS_G, gg * (1 - p_ir))
    b.add(OOS_G, OOS_B, gb)
    b.add(OOS_B, 0, bg * p_ir)
    b.add(OOS_B, OOS_G, bg * (1 - p_ir))
    b.add(OOS_B, OOS_B, bb)
    for lab in (W_PLUS, OOS_G, OOS_B):
        b.state(lab)
    return b.build()


def p_oos_model3_chain(p: MultiflowParams) -> float:
    return probability_mass(solve(build_model3_chain(p)), is_oos)
