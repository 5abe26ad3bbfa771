"""Simplified single-flow model with a closed-form steady state.

Compressor emits IR with probability 1/IRT in every slot and SO
otherwise (no FO, L = 1); the decompressor tracks only the number of
consecutive losses ``w`` and drops to an out-of-sync pair of states
(G and B channel) once an SO packet arrives after more than W losses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .chain import ChainBuilder, SparseChain
from .channel import ChannelParams

W_PLUS = "W+"
OOS_G = ("oos", "G")
OOS_B = ("oos", "B")


@dataclass(frozen=True)
class Model2Solution:
    pi0: float
    pi_w: np.ndarray  # index 0 holds w = 1
    pi_w_plus: float
    pi_oos_g: float
    pi_oos_b: float
    p_oos_exact: float
    p_oos_approx: float

    @property
    def total(self) -> float:
        return self.pi0 + float(self.pi_w.sum()) + self.pi_w_plus + self.pi_oos_g + self.pi_oos_b


def _pow(base, w):
    # exp-of-log keeps large W well-behaved
    if w == 0:
        return 1.0
    if base == 0.0:
        return 0.0
    return math.exp(w * math.log(base))


def _check(w, irt):
    if int(w) != w or w < 0:
        raise ValueError(f"W must be an integer >= 0, got {w!r}")
    if irt < 1:
        raise ValueError(f"IRT must be >= 1, got {irt!r}")


def solve_model2(chan: ChannelParams, w: int, irt: float) -> Model2Solution:
    _check(w, irt)
    p_ir = 1.0 / irt
    p_gb, p_bg, p_bb = chan.p_gb, chan.p_bg, chan.p_bb
    r = p_gb / p_bg
    bbw = _pow(p_bb, w)
    f_w = r
    f_oos = r * bbw * (p_bg + p_gb) * (1.0 - p_ir) / p_ir
    pi0 = 1.0 / (1.0 + f_w + f_oos)
    pi_w = p_gb * np.array([_pow(p_bb, i - 1) for i in range(1, w + 1)]) * pi0
    pi_w_plus = p_gb * bbw / p_bg * pi0
    pi_oos_g = p_gb * bbw * (1.0 - p_ir) / p_ir * pi0
    pi_oos_b = pi_oos_g * r
    return Model2Solution(
        pi0=pi0,
        pi_w=pi_w,
        pi_w_plus=pi_w_plus,
        pi_oos_g=pi_oos_g,
        pi_oos_b=pi_oos_b,
        p_oos_exact=pi_oos_g + pi_oos_b,
        p_oos_approx=p_oos_approx(chan.eps, chan.lb, w, irt),
    )


def p_oos_exact(chan: ChannelParams, w: int, irt: float) -> float:
    return solve_model2(chan, w, irt).p_oos_exact


def p_oos_approx(eps: float, lb: float, w: int, irt: float) -> float:
    """Small-eps, large-IRT approximation (eps/lb) * (1 - 1/lb)**W * IRT, clamped to [0, 1]."""
    if not 0 <= eps < 1:
        raise ValueError("eps must lie in [0, 1)")
    if lb < 1:
        raise ValueError("lb must be >= 1")
    if irt < 1:
        raise ValueError("IRT must be >= 1")
    val = eps / lb * _pow(1.0 - 1.0 / lb, w) * irt
    return min(1.0, max(0.0, val))


@dataclass(frozen=True)
class MinW:
    exact: float
    asymptotic: float

    @property
    def ceil(self) -> int:
        return math.ceil(self.exact - 1e-12)


def min_w(a: float, lb: float, irt: float) -> MinW:
    """Smallest W keeping P_OoS / eps below ``a`` (approximate formula inverted)."""
    if not 0 < a < 1:
        raise ValueError("target ratio a must lie in (0, 1)")
    if lb <= 1:
        raise ValueError("lb must be > 1")
    if irt <= a * lb:
        raise ValueError(f"IRT={irt} <= a*lb={a * lb}: any W >= 0 already meets the target")
    x = a * lb / irt
    exact = math.log(x) / math.log1p(-1.0 / lb)
    asym = lb * math.log(1.0 / x)
    return MinW(exact, asym)


def max_irt(a: float, lb: float, w: float) -> float:
    """Largest mean IR timeout keeping P_OoS / eps at ``a`` for window ``w``."""
    if lb <= 1:
        raise ValueError("lb must be > 1")
    return a * lb * math.exp(w * math.log1p(1.0 / (lb - 1.0)))


def build_model2_chain(chan: ChannelParams, w: int, irt: float) -> SparseChain:
    """Explicit chain: states 0..W, W+, (oos, G), (oos, B)."""
    _check(w, irt)
    p_ir = 1.0 / irt
    gg, gb, bg, bb = chan.p_gg, chan.p_gb, chan.p_bg, chan.p_bb
    b = ChainBuilder()
    for i in range(w + 1):
        b.state(i)
    b.add(0, 0, gg)
    b.add(0, 1 if w >= 1 else W_PLUS, gb)
    for i in range(1, w + 1):
        b.add(i, 0, bg)
        b.add(i, i + 1 if i < w else W_PLUS, bb)
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


def is_oos(label) -> bool:
    return isinstance(label, tuple) and label[0] == "oos"
