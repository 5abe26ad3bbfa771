"""Gilbert-Elliott packet-deletion channel.

State 0 is Good (packet delivered), state 1 is Bad (packet silently
deleted). Matrices are always ordered (G, B).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

GOOD = 0
BAD = 1


def _check_prob(name, value):
    value = float(value)
    if math.isnan(value) or not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must be a probability in [0, 1], got {value!r}")
    return value


@dataclass(frozen=True)
class ChannelParams:
    """Per-slot transition probabilities of the two-state deletion channel."""

    p_gb: float
    p_bg: float

    def __post_init__(self):
        object.__setattr__(self, "p_gb", _check_prob("p_gb", self.p_gb))
        object.__setattr__(self, "p_bg", _check_prob("p_bg", self.p_bg))
        if self.p_bg == 0.0:
            raise ValueError("p_bg must be > 0: the bad state has to be leavable")

    @property
    def eps(self) -> float:
        """Average deletion probability (stationary mass of B)."""
        return self.p_gb / (self.p_gb + self.p_bg)

    @property
    def lb(self) -> float:
        """Mean bad-burst length in slots."""
        return 1.0 / self.p_bg

    @property
    def lg(self) -> float:
        """Mean good-run length in slots; infinite for an error-free channel."""
        return math.inf if self.p_gb == 0 else 1.0 / self.p_gb

    @property
    def p_gg(self) -> float:
        return 1.0 - self.p_gb

    @property
    def p_bb(self) -> float:
        return 1.0 - self.p_bg

    def stationary(self) -> np.ndarray:
        return np.array([1.0 - self.eps, self.eps])


def from_eps_lb(eps: float, lb: float) -> ChannelParams:
    """Build channel parameters from mean deletion rate and mean burst length."""
    eps = float(eps)
    lb = float(lb)
    if math.isnan(eps) or not 0.0 <= eps < 1.0:
        raise ValueError(f"eps must lie in [0, 1), got {eps!r}")
    if math.isnan(lb) or lb < 1.0:
        raise ValueError(f"lb must be >= 1, got {lb!r}")
    p_bg = 1.0 / lb
    p_gb = eps * p_bg / (1.0 - eps)
    if p_gb > 1.0 + 1e-12:
        raise ValueError(f"(eps={eps}, lb={lb}) needs p_gb={p_gb:.6g} > 1")
    # rounding can overshoot 1 by an ulp at the boundary
    return ChannelParams(min(p_gb, 1.0), p_bg)


def one_step_matrix(c: ChannelParams) -> np.ndarray:
    return np.array([[1.0 - c.p_gb, c.p_gb], [c.p_bg, 1.0 - c.p_bg]])


def averaged_matrix(c: ChannelParams, m: int) -> np.ndarray:
    """Channel transition matrix seen between two packets of one flow.

    With ``m`` flows picked uniformly per slot the distance D between
    consecutive packets of a flow is geometric with parameter 1/m, so
    the flow sees E[P^D] = P/m * (I - P(1 - 1/m))^-1.
    """
    if int(m) != m or m < 1:
        raise ValueError(f"flow count must be an integer >= 1, got {m!r}")
    P = one_step_matrix(c)
    if m == 1:
        return P
    q = 1.0 - 1.0 / m
    A = np.eye(2) - q * P
    # explicit 2x2 inverse
    det = A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
    inv = np.array([[A[1, 1], -A[0, 1]], [-A[1, 0], A[0, 0]]]) / det
    out = (P @ inv) / m
    # rows are stochastic analytically; strip rounding drift
    return out / out.sum(axis=1, keepdims=True)


def sample_path(c: ChannelParams, n: int, seed=None) -> np.ndarray:
    """Sample ``n`` slots of channel state; True marks a deleted (B) slot.

    The first slot is drawn from the stationary distribution. Runs are
    drawn as alternating geometric sojourns, which is equivalent to
    stepping the one-step matrix but vectorises.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    bad = bool(rng.random() < c.eps)
    if c.p_gb == 0.0:
        out = np.zeros(n, dtype=bool)
        if bad:
            out[: min(n, int(rng.geometric(c.p_bg)))] = True
        return out

    chunks = []
    total = 0
    # mean sojourn pair length bounds how many runs we need
    batch = max(16, int(2 * n / (c.lg + c.lb)) + 16)
    while total < n:
        # sojourns longer than n are cut to n: same first n slots, no overflow
        g = np.minimum(rng.geometric(c.p_gb, size=batch), n)
        b = np.minimum(rng.geometric(c.p_bg, size=batch), n)
        if bad:
            runs = np.column_stack([b, g]).ravel()
        else:
            runs = np.column_stack([g, b]).ravel()
        chunks.append(runs)
        total += int(runs.sum())
    runs = np.concatenate(chunks)
    states = np.zeros(runs.size, dtype=bool)
    states[(0 if bad else 1)::2] = True
    return np.repeat(states, runs)[:n]


def burst_lengths(path: np.ndarray) -> np.ndarray:
    """Lengths of maximal runs of deleted slots in a sampled path."""
    x = np.concatenate([[False], np.asarray(path, dtype=bool), [False]])
    d = np.diff(x.astype(np.int8))
    return np.flatnonzero(d == -1) - np.flatnonzero(d == 1)


def channel_from_mapping(cfg) -> ChannelParams:
    """Resolve a channel from a config mapping holding either (p_gb, p_bg) or (eps, lb)."""
    has_p = "p_gb" in cfg or "p_bg" in cfg
    has_e = "eps" in cfg or "lb" in cfg
    if has_p and has_e:
        raise ValueError("channel given both as (p_gb, p_bg) and (eps, lb); pick one")
    if has_p:
        try:
            return ChannelParams(float(cfg["p_gb"]), float(cfg["p_bg"]))
        except KeyError as e:
            raise ValueError(f"channel spec missing {e.args[0]}") from None
    if has_e:
        try:
            return from_eps_lb(float(cfg["eps"]), float(cfg["lb"]))
        except KeyError as e:
            raise ValueError(f"channel spec missing {e.args[0]}") from None
    raise ValueError("no channel given: set eps and lb, or p_gb and p_bg")
