"""Slot-by-slot Monte-Carlo simulation of U-mode ROHC over a deletion channel.

One packet is sent per slot. Each flow has its own compressor (IR/FO/SO
driven by packet-count timeouts) and decompressor (NC/SC/FC with k-of-n
downward rules). Headers carry only what the decoder needs: packet
type, flow, SN and IP-ID. The CRC is a Bernoulli false-negative model.
"""

from __future__ import annotations

import csv
import enum
import math
from collections import deque
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import stats as sstats

from .channel import ChannelParams, sample_path
from .wlsb import RobustnessWindows, WlsbParams, candidates, encode, robustness_windows, split_window, window_wo

IR, FO, SO = "IR", "FO", "SO"
NC, SC, FC = "NC", "SC", "FC"

DELIVERED = "delivered"
DROPPED_CHANNEL = "dropped-channel"
DROPPED_CONTEXT = "dropped-context"
DROPPED_CRC = "dropped-crc"
FALSE_NEGATIVE = "false-negative-forward"

CRC_FALSE_NEGATIVE = 1.0 / 32


class ConfigError(ValueError):
    pass


class Profile(enum.Enum):
    RTP = "RTP/UDP/IP"
    UDP = "UDP/IP"
    ESP = "ESP/IP"
    IP = "IP"

    @classmethod
    def parse(cls, s):
        if isinstance(s, cls):
            return s
        key = str(s).strip().upper()
        for p in cls:
            if key in (p.name, p.value.upper(), str(list(cls).index(p) + 1)):
                return p
        raise ConfigError(f"unknown profile {s!r}")


@dataclass(frozen=True)
class RohcConfig:
    """Compressor/decompressor settings for one run or model evaluation.

    The SN window is given either by ``wlsb`` (k, p) or directly by
    ``w`` (optionally with ``w1``); with neither, k=4, p=1 (W = 29).
    ``fot="auto"`` resolves to irt // 3, ``fot=None`` disables FO refresh.
    """

    irt: int = 300
    l: int = 1
    fot: int | None | str = "auto"
    w: int | None = None
    w1: int | None = None
    wlsb: WlsbParams | None = None
    wraparound: bool = True
    k1: int = 3
    n1: int = 6
    k2: int = 3
    n2: int = 6
    kofn: bool = True
    crc_fn: float = CRC_FALSE_NEGATIVE
    m: int = 1
    w_o: int | None = None
    wlsb_ipid: WlsbParams | None = None
    profile: Profile = Profile.RTP
    windows: RobustnessWindows = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        def err(msg):
            raise ConfigError(msg)

        for name in ("irt", "l", "k1", "n1", "k2", "n2", "m"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                err(f"{name} must be an integer >= 1, got {v!r}")
        if self.l > self.irt:
            err(f"l={self.l} exceeds irt={self.irt}")
        fot = self.fot
        if fot != "auto" and fot is not None:
            if int(fot) != fot or fot <= self.l:
                err(f"fot must be an integer > l={self.l}, got {fot!r}")
            if fot > self.irt:
                err(f"fot={fot} exceeds irt={self.irt}: FO refresh must not be rarer than IR refresh")
        if self.k1 > self.n1:
            err(f"k1={self.k1} > n1={self.n1}")
        if self.k2 > self.n2:
            err(f"k2={self.k2} > n2={self.n2}")
        if not 0.0 <= self.crc_fn <= 1.0:
            err(f"crc_fn must lie in [0, 1], got {self.crc_fn!r}")
        object.__setattr__(self, "profile", Profile.parse(self.profile))

        wlsb = self.wlsb
        if wlsb is None and self.w is None:
            wlsb = WlsbParams(4, 1)
            object.__setattr__(self, "wlsb", wlsb)
        if wlsb is not None:
            win = robustness_windows(wlsb, wraparound=self.wraparound)
            if self.w is not None and self.w != win.w:
                err(f"w={self.w} disagrees with (k={wlsb.k}, p={wlsb.p}) giving W={win.w}")
            if self.w1 is not None and self.w1 != win.w1:
                err(f"w1={self.w1} disagrees with (k={wlsb.k}, p={wlsb.p}) giving W1={win.w1}")
        else:
            if int(self.w) != self.w or self.w < 0:
                err(f"w must be an integer >= 0, got {self.w!r}")
            if not self.wraparound:
                w1 = self.w
            elif self.w1 is not None:
                w1 = self.w1
            else:
                w1 = split_window(self.w)[0]
            if not 0 <= w1 <= self.w:
                err(f"w1={w1} must lie in [0, w={self.w}]")
            win = RobustnessWindows(self.w, w1, self.w - w1)

        w_o = self.w_o
        if self.wlsb_ipid is not None:
            wo2 = window_wo(self.wlsb_ipid)
            if w_o is not None and w_o != wo2:
                err(f"w_o={w_o} disagrees with IP-ID (k, p) giving W_o={wo2}")
            w_o = wo2
        if self.m > 1 and w_o is None:
            err("m > 1 needs an IP-ID window: set w_o or wlsb_ipid")
        if w_o is not None and (int(w_o) != w_o or w_o < 0):
            err(f"w_o must be an integer >= 0, got {w_o!r}")
        object.__setattr__(self, "w_o", w_o)
        object.__setattr__(self, "windows", RobustnessWindows(win.w, win.w1, win.w2, w_o))

    @property
    def fo_timeout(self) -> int | None:
        """Resolved FO timeout in packets, None when FO refresh is off."""
        if self.fot == "auto":
            fot = self.irt // 3
            return fot if fot > self.l else None
        return self.fot

    def replace(self, **kw) -> "RohcConfig":
        base = {k: getattr(self, k) for k, f in self.__dataclass_fields__.items() if f.init}
        if ("w" in kw or "w1" in kw) and "wlsb" not in kw:
            base["wlsb"] = None
            if base["w"] is None:
                base["w"] = self.windows.w
            if "w" in kw and "w1" not in kw:
                base["w1"] = None
        if "wlsb" in kw:
            base["w"] = None
            base["w1"] = None
        base.update(kw)
        return RohcConfig(**base)


def emission_schedule(irt: int, l: int = 1, fot: int | None = None) -> list[str]:
    """Packet type at each position of one IR period (length irt)."""
    out = []
    for j in range(irt):
        if j < l:
            out.append(IR)
        elif fot is not None and j >= fot and j % fot < l:
            out.append(FO)
        else:
            out.append(SO)
    return out


class Compressor:
    """U-mode compressor state machine for one flow.

    Downward on IR timeout (to IR) or FO timeout (SO to FO); upward to
    SO once L packets of the current refresh type have gone out.
    """

    def __init__(self, cfg: RohcConfig):
        self.irt = cfg.irt
        self.fot = cfg.fo_timeout
        self.l = cfg.l
        self.state = IR
        self.repeats = 0
        self.since_ir = 0
        self.since_fo = 0

    def next_type(self) -> str:
        if self.since_ir >= self.irt:
            self.state = IR
            self.repeats = 0
            self.since_ir = 0
            self.since_fo = 0
        elif self.fot is not None and self.state == SO and self.since_fo >= self.fot:
            self.state = FO
            self.repeats = 0
            self.since_fo = 0
        t = self.state
        self.repeats += 1
        self.since_ir += 1
        self.since_fo += 1
        if t != SO and self.repeats >= self.l:
            self.state = SO
        return t


class Packet(NamedTuple):
    ptype: str
    flow: int
    sn: int
    ipid: int


class Decompressor:
    """Per-flow decompressor context."""

    def __init__(self, cfg: RohcConfig):
        self.state = NC
        self.ref_sn = None
        self.ref_ipid = None
        self.damaged = False
        self.oos = True
        self.win1 = deque(maxlen=cfg.n1)
        self.win2 = deque(maxlen=cfg.n2)


def crc_check(correct: bool, rng, crc_fn: float = CRC_FALSE_NEGATIVE) -> bool:
    """True when the header is accepted. Wrong headers slip through with prob crc_fn."""
    if correct:
        return True
    return bool(rng.random() < crc_fn)


def multiflow_scheduler(m: int, rng, n: int) -> np.ndarray:
    """Flow id (1..m) active in each of ``n`` slots, uniform and independent."""
    if m < 1:
        raise ValueError("m must be >= 1")
    if m == 1:
        return np.ones(n, dtype=np.int64)
    return rng.integers(1, m + 1, size=n)


def _record(dec, cfg, failed):
    if not cfg.kofn:
        if failed:
            dec.state = NC
        return
    if dec.state == FC:
        dec.win1.append(failed)
        if sum(dec.win1) >= cfg.k1:
            dec.state = SC
            dec.win1.clear()
            dec.win2.clear()
    elif dec.state == SC:
        dec.win2.append(failed)
        if sum(dec.win2) >= cfg.k2:
            dec.state = NC
            dec.win2.clear()


def _resync(dec, pkt):
    dec.ref_sn = pkt.sn
    dec.ref_ipid = pkt.ipid
    dec.damaged = False


def _so_candidates(dec, pkt, cfg):
    """(first-pass candidate correct?, wraparound candidate correct or None, wrong first value)."""
    win = cfg.windows
    if cfg.wlsb is not None:
        cands = candidates(dec.ref_sn, encode(pkt.sn, cfg.wlsb.k), cfg.wlsb, cfg.wraparound)
    else:
        # direct W: only the window arithmetic matters
        gap = pkt.sn - dec.ref_sn
        first = pkt.sn if 1 <= gap <= win.w1 + 1 else pkt.sn - 1 - win.w
        cands = [first]
        if win.w2:
            cands.append(pkt.sn if win.w1 + 1 < gap <= win.w + 1 else first + win.w2)
    ipid_ok = cfg.m == 1 or pkt.ipid - dec.ref_ipid <= win.w_o
    if dec.damaged or not ipid_ok:
        return False, (False if len(cands) > 1 else None), cands[0]
    return cands[0] == pkt.sn, (cands[1] == pkt.sn if len(cands) > 1 else None), cands[0]


def decompressor_step(dec: Decompressor, pkt: Packet, cfg: RohcConfig, rng) -> str:
    """Process one packet that survived the channel; return its disposition."""
    if pkt.ptype == IR:
        _resync(dec, pkt)
        dec.state = FC
        dec.win1.clear()
        dec.win2.clear()
        dec.oos = False
        return DELIVERED
    if dec.state == NC:
        dec.oos = True
        return DROPPED_CONTEXT
    if pkt.ptype == FO:
        # FO carries the dynamic fields uncompressed
        _resync(dec, pkt)
        if dec.state == SC:
            dec.state = FC
            dec.win1.clear()
            dec.win2.clear()
        else:
            _record(dec, cfg, False)
        dec.oos = False
        return DELIVERED
    if dec.state == SC:
        _record(dec, cfg, True)
        dec.oos = True
        return DROPPED_CONTEXT

    first_ok, second_ok, first_val = _so_candidates(dec, pkt, cfg)
    if first_ok:
        _resync(dec, pkt)
        _record(dec, cfg, False)
        dec.oos = False
        return DELIVERED
    # one false-negative opportunity per packet, on the first wrong reconstruction
    if crc_check(False, rng, cfg.crc_fn):
        dec.ref_sn = first_val
        dec.ref_ipid = pkt.ipid
        dec.damaged = True
        _record(dec, cfg, False)
        dec.oos = True
        return FALSE_NEGATIVE
    if second_ok:
        _resync(dec, pkt)
        _record(dec, cfg, False)
        dec.oos = False
        return DELIVERED
    _record(dec, cfg, True)
    dec.oos = True
    return DROPPED_CRC


@dataclass(frozen=True)
class HeaderSizeModel:
    h_ir: int = 60
    h_fo: int = 6
    h_so: int = 3

    def __post_init__(self):
        if not self.h_ir >= self.h_fo >= self.h_so >= 1:
            raise ValueError(f"need h_ir >= h_fo >= h_so >= 1, got {self}")

    def size(self, ptype):
        return {IR: self.h_ir, FO: self.h_fo, SO: self.h_so}[ptype]


@dataclass
class SimStats:
    sent: int = 0
    delivered: int = 0
    dropped_channel: int = 0
    dropped_context: int = 0
    dropped_crc: int = 0
    false_negative: int = 0
    oos_slots: int = 0
    episodes: int = 0
    header_bytes: int = 0
    h_ir: int = 60
    batch_oos: list = field(default_factory=list, repr=False)

    @property
    def undecodable(self) -> int:
        return self.dropped_context + self.dropped_crc

    @property
    def oos_fraction(self) -> float:
        return self.oos_slots / self.sent if self.sent else 0.0

    @property
    def efficiency(self) -> float:
        if not self.sent:
            return 0.0
        return (self.h_ir - self.header_bytes / self.sent) / self.h_ir

    @property
    def ci_half_width(self) -> float:
        """95% half-width of oos_fraction from batch means within the run."""
        return t_half_width(self.batch_oos)


def t_half_width(values, level=0.95) -> float:
    x = np.asarray(values, dtype=float)
    if x.size < 2:
        return math.nan
    return float(sstats.t.ppf(0.5 + level / 2, x.size - 1) * x.std(ddof=1) / math.sqrt(x.size))


EVENT_FIELDS = [
    "slot", "flow", "channel", "ptype", "disposition", "comp_state",
    "dec_state", "oos", "loss_run", "ipid_gap",
]


def run_simulation(
    cfg: RohcConfig,
    chan: ChannelParams,
    n_packets: int,
    seed=0,
    headers: HeaderSizeModel | None = None,
    log=None,
    n_batches: int = 10,
) -> SimStats:
    """Simulate ``n_packets`` slots and count what happened to each packet.

    ``oos_fraction`` is the share of slots whose flow was out of
    synchronisation at the end of the slot. ``log`` may be a path or
    a text stream; it receives one CSV row per slot.
    """
    if n_packets < 1:
        raise ValueError("n_packets must be >= 1")
    headers = headers or HeaderSizeModel()
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    s_chan, s_flow, s_crc = ss.spawn(3)
    deleted = sample_path(chan, n_packets, s_chan).tolist()
    flows = multiflow_scheduler(cfg.m, np.random.default_rng(s_flow), n_packets).tolist()
    crc_rng = np.random.default_rng(s_crc)

    comps = {f: Compressor(cfg) for f in range(1, cfg.m + 1)}
    decs = {f: Decompressor(cfg) for f in range(1, cfg.m + 1)}
    sn = dict.fromkeys(comps, 0)
    loss_run = dict.fromkeys(comps, 0)
    size = {IR: headers.h_ir, FO: headers.h_fo, SO: headers.h_so}
    st = SimStats(h_ir=headers.h_ir)
    batch_len = max(1, n_packets // n_batches)
    batch_hits = 0

    writer = fh = None
    if log is not None:
        if hasattr(log, "write"):
            fh = log
        else:
            fh = open(log, "w", newline="")
        writer = csv.writer(fh)
        writer.writerow(EVENT_FIELDS)

    oos_slots = 0
    try:
        for t in range(n_packets):
            f = flows[t]
            comp = comps[f]
            dec = decs[f]
            ptype = comp.next_type()
            st.header_bytes += size[ptype]
            was_oos = dec.oos
            if deleted[t]:
                disp = DROPPED_CHANNEL
                loss_run[f] += 1
                run = None
            else:
                pkt = Packet(ptype, f, sn[f], t)
                run = loss_run[f]
                gap = None if dec.ref_ipid is None else t - dec.ref_ipid
                disp = decompressor_step(dec, pkt, cfg, crc_rng)
                loss_run[f] = 0
            sn[f] += 1
            if dec.oos:
                oos_slots += 1
                batch_hits += 1
                if not was_oos:
                    st.episodes += 1
            if disp == DELIVERED:
                st.delivered += 1
            elif disp == DROPPED_CHANNEL:
                st.dropped_channel += 1
            elif disp == DROPPED_CONTEXT:
                st.dropped_context += 1
            elif disp == DROPPED_CRC:
                st.dropped_crc += 1
            else:
                st.false_negative += 1
            if (t + 1) % batch_len == 0 and len(st.batch_oos) < n_batches:
                st.batch_oos.append(batch_hits / batch_len)
                batch_hits = 0
            if writer is not None:
                writer.writerow([
                    t, f, "B" if deleted[t] else "G", ptype, disp, comp.state, dec.state,
                    int(dec.oos), "" if run is None else run, "" if run is None or gap is None else gap,
                ])
    finally:
        if fh is not None and fh is not log:
            fh.close()
    st.sent = n_packets
    st.oos_slots = oos_slots
    return st


@dataclass(frozen=True)
class SimSummary:
    mean: float
    half_width: float
    runs: tuple

    @property
    def lo(self):
        return self.mean - self.half_width

    @property
    def hi(self):
        return self.mean + self.half_width

    def contains(self, x) -> bool:
        return self.lo <= x <= self.hi


def summarize(runs) -> SimSummary:
    """Mean and 95% Student-t interval of oos_fraction across independent runs."""
    vals = [r.oos_fraction for r in runs]
    return SimSummary(float(np.mean(vals)), t_half_width(vals), tuple(runs))


def run_seeds(cfg, chan, n_packets, n_seeds, base_seed=0, headers=None) -> SimSummary:
    seeds = np.random.SeedSequence(base_seed).spawn(n_seeds)
    return summarize([run_simulation(cfg, chan, n_packets, s, headers) for s in seeds])
