"""Window-based LSB encoding of sequence-number-like fields.

A value is sent as its ``k`` least significant bits and decoded against
the last correctly received value ``ref`` using the interpretation
interval ``[ref - p, ref + 2**k - 1 - p]``. The LSB wraparound step
retries once in the interval shifted by ``2**k``.

Field values are plain Python ints; there is no 16-bit wrap.
"""

from __future__ import annotations

from dataclasses import dataclass


class OutOfWindow(Exception):
    """No decode candidate reproduced the original field value."""


@dataclass(frozen=True)
class WlsbParams:
    k: int
    p: int

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise ValueError(f"k must be an integer >= 1, got {self.k!r}")
        if int(self.p) != self.p or self.p < 0:
            raise ValueError(f"p must be an integer >= 0, got {self.p!r}")
        if self.w1 < 0:
            raise ValueError(
                f"(k={self.k}, p={self.p}) leaves no room for a single loss: "
                f"2**k - 2 - p = {self.w1} < 0"
            )

    @property
    def w1(self) -> int:
        """Consecutive losses tolerated by the plain interval."""
        return (2**self.k - 1 - self.p) - 1

    @property
    def w2(self) -> int:
        """Extra losses covered by one wraparound shift."""
        return 2**self.k


@dataclass(frozen=True)
class RobustnessWindows:
    w: int
    w1: int
    w2: int
    w_o: int | None = None

    @property
    def wraparound(self) -> bool:
        return self.w > self.w1


def window_w(params: WlsbParams) -> int:
    return 2 ** (params.k + 1) - 2 - params.p


def window_wo(params: WlsbParams) -> int:
    # IP-ID has no wraparound, so only the plain interval counts
    return 2**params.k - 2 - params.p


def robustness_windows(sn: WlsbParams, ipid: WlsbParams | None = None, wraparound=True):
    w1 = sn.w1
    if wraparound:
        return RobustnessWindows(window_w(sn), w1, sn.w2, None if ipid is None else window_wo(ipid))
    return RobustnessWindows(w1, w1, 0, None if ipid is None else window_wo(ipid))


def split_window(w: int) -> tuple[int, int]:
    """Split a directly configured W into (W1, W2).

    Uses the p = 1 family W = 2**(k+1) - 3, for which W1 = (W - 3) / 2,
    extended to every W by flooring. W = 29 gives (13, 16), as for
    k = 4, p = 1.
    """
    if w < 0:
        raise ValueError("W must be >= 0")
    w1 = max(0, min(w, (w - 3) // 2))
    return w1, w - w1


def encode(value: int, k: int) -> int:
    return value % (1 << k)


def candidates(ref: int, code: int, params: WlsbParams, wraparound: bool = True) -> list[int]:
    """Decode candidates in trial order: plain interval, then shifted interval."""
    mod = 1 << params.k
    if not 0 <= code < mod:
        raise ValueError(f"code {code} does not fit in {params.k} bits")
    lo = ref - params.p
    v = lo + ((code - lo) % mod)
    if wraparound:
        return [v, v + mod]
    return [v]


def decode(ref: int, code: int, params: WlsbParams, wraparound: bool = True, accept=None) -> int:
    """Return the first candidate accepted by ``accept`` (the CRC check).

    Without ``accept`` the plain-interval candidate is returned. Raises
    OutOfWindow when every candidate is rejected.
    """
    cands = candidates(ref, code, params, wraparound)
    if accept is None:
        return cands[0]
    for v in cands:
        if accept(v):
            return v
    raise OutOfWindow(f"no candidate in {cands} accepted (ref={ref}, code={code})")
