"""Config files, parameter sweeps, ratio surfaces and compression efficiency.

Config files are flat ``key = value`` text with ``#`` comments::

    eps = 0.02
    lb = 5
    k = 4
    p = 1
    sweep = irt:100:500:100
    engines = model1, model2, simulate

Results are long-format CSV rows, one per (series, sweep point, engine,
metric); floats are written with ``repr`` so reruns are byte-identical.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .channel import ChannelParams, channel_from_mapping
from .model_closed import max_irt, min_w, p_oos_approx, solve_model2
from .model_full import p_oos_model1
from .model_multiflow import MultiflowParams, p_oos_model3_chain, p_oos_multiflow
from .sim import FO, IR, SO, ConfigError, HeaderSizeModel, RohcConfig, emission_schedule, run_simulation, summarize
from .wlsb import WlsbParams

ENGINES = ("model1", "model2", "model2_approx", "model3", "model3_chain", "simulate", "design", "efficiency")
P_OOS_ENGINES = ("model1", "model2", "model2_approx", "model3", "model3_chain", "simulate")

_INT = {"irt", "l", "w", "w1", "k", "p", "w_o", "k_o", "p_o", "k1", "n1", "k2", "n2", "m",
        "n_packets", "n_seeds", "seed", "h_ir", "h_fo", "h_so", "irt_cap", "jobs"}
_FLOAT = {"eps", "lb", "p_gb", "p_bg", "crc_fn", "a"}
_BOOL = {"wraparound", "kofn"}
_STR = {"profile", "engines", "sweep", "series", "ratio", "grid_irt", "grid_w", "out", "fot"}
KNOWN_KEYS = _INT | _FLOAT | _BOOL | _STR

COLUMNS = ["engine", "series_var", "series", "sweep_var", "sweep", "eps", "lb", "irt", "w", "w1",
           "w_o", "m", "l", "metric", "value", "ci_half", "n_runs"]


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Parse ``key = value`` lines into a dict of raw strings."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        key = key.lower()
        if key not in KNOWN_KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = val
    return out


def convert(key: str, val):
    """Typed value for a config key; raises ConfigError naming the key."""
    if not isinstance(val, str):
        return val
    try:
        if key in _INT:
            f = float(val)
            if f != int(f):
                raise ValueError
            return int(f)
        if key in _FLOAT:
            return float(val)
        if key in _BOOL:
            v = val.lower()
            if v in ("1", "true", "yes", "on"):
                return True
            if v in ("0", "false", "no", "off"):
                return False
            raise ValueError
        if key == "fot":
            v = val.lower()
            if v == "auto":
                return "auto"
            if v in ("off", "none", "inf"):
                return None
            return int(v)
    except ValueError:
        kind = "integer" if key in _INT else "number" if key in _FLOAT else "boolean" if key in _BOOL else "integer, auto or off"
        raise ConfigError(f"{key}: expected {kind}, got {val!r}") from None
    return val


def parse_range(spec: str, key: str) -> list:
    """``start:stop:step`` (inclusive) or ``v1,v2,...``."""
    try:
        if ":" in spec:
            parts = spec.split(":")
            if len(parts) != 3:
                raise ValueError
            start, stop, step = (float(x) for x in parts)
            if step <= 0 or stop < start:
                raise ValueError
            n = int(math.floor((stop - start) / step + 1e-9)) + 1
            vals = [start + i * step for i in range(n)]
        else:
            vals = [s.strip() for s in spec.split(",") if s.strip()]
            if not vals:
                raise ValueError
            return [convert(key, v) for v in vals]
    except ValueError:
        raise ConfigError(f"bad range for {key}: {spec!r} (use start:stop:step or a comma list)") from None
    if key in _INT:
        return [int(round(v)) for v in vals]
    return [round(v, 12) for v in vals]


def parse_var_range(spec: str, what: str):
    if ":" not in spec:
        raise ConfigError(f"{what}: expected 'name:range', got {spec!r}")
    var, rng = spec.split(":", 1)
    var = var.strip().lower()
    if var not in _INT | _FLOAT | _BOOL | {"fot"}:
        raise ConfigError(f"{what}: {var!r} cannot be swept")
    return var, parse_range(rng.strip(), var)


def build_channel(params: dict) -> ChannelParams:
    try:
        return channel_from_mapping(params)
    except ValueError as e:
        raise ConfigError(f"channel: {e}") from None


def build_rohc(params: dict) -> RohcConfig:
    kw = {}
    for key in ("irt", "l", "fot", "w", "w1", "wraparound", "k1", "n1", "k2", "n2", "kofn",
                "crc_fn", "m", "w_o", "profile"):
        if key in params:
            kw[key] = params[key]
    if ("k" in params) != ("p" in params):
        raise ConfigError("SN window: give both k and p, or neither")
    if "k" in params:
        try:
            kw["wlsb"] = WlsbParams(params["k"], params["p"])
        except ValueError as e:
            raise ConfigError(f"k/p: {e}") from None
    if ("k_o" in params) != ("p_o" in params):
        raise ConfigError("IP-ID window: give both k_o and p_o, or neither")
    if "k_o" in params:
        try:
            kw["wlsb_ipid"] = WlsbParams(params["k_o"], params["p_o"])
        except ValueError as e:
            raise ConfigError(f"k_o/p_o: {e}") from None
    try:
        return RohcConfig(**kw)
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from None


@dataclass
class ExperimentConfig:
    params: dict
    engines: tuple = ()
    sweep: tuple | None = None
    series: tuple | None = None
    grid_irt: list | None = None
    grid_w: list | None = None
    ratio: tuple | None = None
    n_packets: int = 100_000
    n_seeds: int = 11
    seed: int = 0
    a: float = 0.1
    irt_cap: int | None = None
    headers: HeaderSizeModel = field(default_factory=HeaderSizeModel)
    out: str | None = None
    jobs: int = 1

    @classmethod
    def from_mapping(cls, raw: dict) -> "ExperimentConfig":
        params = {}
        for key, val in raw.items():
            if key not in KNOWN_KEYS:
                raise ConfigError(f"unknown key {key!r}")
            params[key] = convert(key, val)
        kw = {}
        if "engines" in params:
            engines = tuple(e.strip().lower() for e in str(params.pop("engines")).split(",") if e.strip())
            bad = [e for e in engines if e not in ENGINES]
            if bad or not engines:
                raise ConfigError(f"engines: unknown {bad or engines}; choose from {', '.join(ENGINES)}")
            kw["engines"] = engines
        if "sweep" in params:
            kw["sweep"] = parse_var_range(params.pop("sweep"), "sweep")
        if "series" in params:
            kw["series"] = parse_var_range(params.pop("series"), "series")
        if "grid_irt" in params:
            kw["grid_irt"] = parse_range(params.pop("grid_irt"), "irt")
        if "grid_w" in params:
            kw["grid_w"] = parse_range(params.pop("grid_w"), "w")
        if "ratio" in params:
            parts = str(params.pop("ratio")).split("/")
            if len(parts) != 2 or any(p.strip() not in P_OOS_ENGINES for p in parts):
                raise ConfigError(f"ratio: expected 'engine_a/engine_b' over {P_OOS_ENGINES}")
            kw["ratio"] = tuple(p.strip() for p in parts)
        for key in ("n_packets", "n_seeds", "seed", "a", "irt_cap", "out", "jobs"):
            if key in params:
                kw[key] = params.pop(key)
        hs = {k: params.pop(k) for k in ("h_ir", "h_fo", "h_so") if k in params}
        try:
            kw["headers"] = HeaderSizeModel(**hs)
        except ValueError as e:
            raise ConfigError(f"headers: {e}") from None
        cfg = cls(params=params, **kw)
        cfg.validate()
        return cfg

    def validate(self):
        if self.sweep is not None and (self.grid_irt is not None or self.grid_w is not None):
            raise ConfigError("use either sweep or grid_irt/grid_w, not both")
        if (self.grid_irt is None) != (self.grid_w is None):
            raise ConfigError("grid needs both grid_irt and grid_w")
        if self.sweep is not None and self.series is not None and self.sweep[0] == self.series[0]:
            raise ConfigError("sweep and series vary the same key")
        if self.n_packets < 1 or self.n_seeds < 1:
            raise ConfigError("n_packets and n_seeds must be >= 1")
        # every point must build; this surfaces field errors before any work
        for point in self.points():
            chan = build_channel(point)
            cfg = build_rohc(point)
            for eng in self.engines:
                _check_engine(eng, cfg, chan)

    def base_point(self) -> dict:
        return dict(self.params)

    def points(self):
        """Yield one parameter dict per (series value, sweep value)."""
        series = [(None, None)] if self.series is None else [(self.series[0], v) for v in self.series[1]]
        if self.grid_irt is not None:
            sweep = [(("irt", "w"), (i, w)) for i in self.grid_irt for w in self.grid_w]
        elif self.sweep is not None:
            sweep = [(self.sweep[0], v) for v in self.sweep[1]]
        else:
            sweep = [(None, None)]
        for svar, sval in series:
            for wvar, wval in sweep:
                p = dict(self.params)
                if svar is not None:
                    p[svar] = sval
                if isinstance(wvar, tuple):
                    p.update(zip(wvar, wval))
                elif wvar is not None:
                    p[wvar] = wval
                if "w" in p and ("w" == wvar or "w" == svar or isinstance(wvar, tuple)):
                    # a swept W replaces any (k, p) pair
                    p.pop("k", None)
                    p.pop("p", None)
                if "w_o" in p and ("w_o" == wvar or "w_o" == svar):
                    p.pop("k_o", None)
                    p.pop("p_o", None)
                p["_series"] = (svar, sval)
                p["_sweep"] = (wvar, wval)
                yield p


def load_config(path=None, preset=None, overrides=None) -> ExperimentConfig:
    if (path is None) == (preset is None):
        raise ConfigError("give exactly one of a config path or a preset name")
    if preset is not None:
        text, source = preset_text(preset), f"preset {preset}"
    else:
        try:
            text = Path(path).read_text()
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}") from None
        source = str(path)
    raw = parse_config_text(text, source)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r}: expected key=value")
        k, v = (s.strip() for s in item.split("=", 1))
        k = k.lower()
        if k not in KNOWN_KEYS:
            raise ConfigError(f"override: unknown key {k!r}")
        raw[k] = v
        _drop_conflicts(raw, k)
    return ExperimentConfig.from_mapping(raw)


def _drop_conflicts(raw, key):
    # an override of one channel/window form replaces the other form
    groups = [({"eps", "lb"}, {"p_gb", "p_bg"}), ({"w", "w1"}, {"k", "p"}), ({"w_o"}, {"k_o", "p_o"})]
    for a, b in groups:
        if key in a:
            for k in b:
                raw.pop(k, None)
        elif key in b:
            for k in a:
                raw.pop(k, None)


def preset_names() -> list:
    return sorted(p.name[:-4] for p in resources.files("rohcge.presets").iterdir() if p.name.endswith(".cfg"))


def preset_text(name: str) -> str:
    f = resources.files("rohcge.presets") / f"{name}.cfg"
    if not f.is_file():
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return f.read_text()


def _check_engine(eng, cfg: RohcConfig, chan: ChannelParams):
    if eng == "model1" and cfg.m != 1:
        raise ConfigError("engine model1 needs m = 1")
    if eng in ("model3", "model3_chain") and cfg.w_o is None:
        raise ConfigError(f"engine {eng} needs w_o (or k_o, p_o)")
    if eng in ("model2", "model2_approx") and cfg.m != 1:
        raise ConfigError(f"engine {eng} is single-flow; use model3 for m > 1")


def compression_efficiency(hs: HeaderSizeModel, cfg: RohcConfig, measured=False, chan=None, n_packets=None, seed=0) -> float:
    """Share of header bytes saved, (H_IR - E[H]) / H_IR.

    E[H] comes from the deterministic emission schedule, or from a
    simulated run when ``measured`` is set.
    """
    if measured:
        if chan is None:
            chan = ChannelParams(0.0, 1.0)
        st = run_simulation(cfg, chan, n_packets or 10 * cfg.irt, seed, headers=hs)
        return st.efficiency
    sched = emission_schedule(cfg.irt, cfg.l, cfg.fo_timeout)
    size = {IR: hs.h_ir, FO: hs.h_fo, SO: hs.h_so}
    mean_h = sum(size[t] for t in sched) / len(sched)
    return (hs.h_ir - mean_h) / hs.h_ir


def shrink_factor(mu: float) -> float:
    return math.inf if mu >= 1 else 1.0 / (1.0 - mu)


def retuned_irt(a: float, lb: float, w: int, cap: int | None = None) -> int:
    """Integer IR timeout from the max-IRT design rule, optionally capped."""
    irt = max(1, int(math.floor(max_irt(a, lb, w))))
    if cap is not None:
        irt = min(irt, cap)
    return irt


def p_oos(engine: str, chan: ChannelParams, cfg: RohcConfig, n_packets=100_000, n_seeds=11, seed=0):
    """(value, ci_half, n_runs) of the OoS probability under one engine."""
    win = cfg.windows
    if engine == "model1":
        return p_oos_model1(cfg, chan), None, None
    if engine == "model2":
        return solve_model2(chan, win.w, cfg.irt).p_oos_exact, None, None
    if engine == "model2_approx":
        return p_oos_approx(chan.eps, chan.lb, win.w, cfg.irt), None, None
    if engine in ("model3", "model3_chain"):
        mp = MultiflowParams(cfg.m, win.w, win.w_o, cfg.irt, chan)
        val = p_oos_multiflow(mp) if engine == "model3" else p_oos_model3_chain(mp)
        return val, None, None
    if engine == "simulate":
        seeds = np.random.SeedSequence(seed).spawn(n_seeds)
        s = summarize([run_simulation(cfg, chan, n_packets, sd) for sd in seeds])
        return s.mean, s.half_width, n_seeds
    raise ValueError(f"{engine} does not produce an OoS probability")


def _eval_point(args):
    point, engine, exp = args
    chan = build_channel(point)
    cfg = build_rohc(point)
    win = cfg.windows
    base = {
        "engine": engine,
        "series_var": point["_series"][0] or "",
        "series": _fmt(point["_series"][1]),
        "sweep_var": _fmt_var(point["_sweep"][0]),
        "sweep": _fmt(point["_sweep"][1]),
        "eps": chan.eps, "lb": chan.lb, "irt": cfg.irt, "w": win.w, "w1": win.w1,
        "w_o": win.w_o, "m": cfg.m, "l": cfg.l,
    }
    rows = []

    def row(metric, value, ci=None, n=None, **over):
        r = dict(base, metric=metric, value=value, ci_half=ci, n_runs=n)
        r.update(over)
        rows.append(r)

    if engine in P_OOS_ENGINES:
        v, ci, n = p_oos(engine, chan, cfg, exp.n_packets, exp.n_seeds, exp.seed)
        row("p_oos", v, ci, n)
    elif engine == "design":
        mw = min_w(exp.a, chan.lb, cfg.irt)
        row("min_w", mw.ceil)
        row("min_w_exact", mw.exact)
        row("min_w_asymptotic", mw.asymptotic)
        row("min_w_over_lb", mw.ceil / chan.lb)
        row("max_irt", max_irt(exp.a, chan.lb, win.w))
    elif engine == "efficiency":
        if exp.irt_cap is not None:
            irt = retuned_irt(exp.a, chan.lb, win.w, exp.irt_cap)
            cfg = cfg.replace(irt=irt)
        mu = compression_efficiency(exp.headers, cfg)
        row("efficiency", mu, irt=cfg.irt)
        row("shrink_factor", shrink_factor(mu), irt=cfg.irt)
    return rows


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, tuple):
        return "/".join(_fmt(x) for x in v)
    return repr(v) if isinstance(v, float) else str(v)


def _fmt_var(v):
    if v is None:
        return ""
    if isinstance(v, tuple):
        return "/".join(v)
    return v


def run_experiment(exp: ExperimentConfig, jobs: int | None = None) -> list:
    """Evaluate every engine at every point; rows come back in sweep order."""
    tasks = [(pt, eng, exp) for pt in exp.points() for eng in exp.engines]
    jobs = jobs or exp.jobs or 1
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(jobs) as ex:
            results = list(ex.map(_eval_point, tasks))
    else:
        results = [_eval_point(t) for t in tasks]
    rows = [r for rs in results for r in rs]
    if exp.ratio is not None:
        rows.extend(_ratio_rows(rows, *exp.ratio))
    return rows


def _ratio_rows(rows, a, b):
    key = lambda r: (r["series"], r["sweep"])
    va = {key(r): r for r in rows if r["engine"] == a and r["metric"] == "p_oos"}
    vb = {key(r): r for r in rows if r["engine"] == b and r["metric"] == "p_oos"}
    out = []
    for k, ra in va.items():
        if k in vb:
            den = vb[k]["value"]
            ratio = ra["value"] / den if den else math.nan
            out.append(dict(ra, engine=f"{a}/{b}", metric="ratio", value=ratio, ci_half=None, n_runs=None))
    return out


def ratio_surface(model_a: str, model_b: str, chan: ChannelParams, base: RohcConfig, irts, ws) -> list:
    """P_OoS(model_a) / P_OoS(model_b) over an (IRT, W) grid."""
    out = []
    for irt in irts:
        for w in ws:
            cfg = base.replace(irt=int(irt), w=int(w))
            pa = p_oos(model_a, chan, cfg)[0]
            pb = pa if model_b == model_a else p_oos(model_b, chan, cfg)[0]
            out.append({"irt": int(irt), "w": int(w), "p_a": pa, "p_b": pb, "ratio": pa / pb if pb else math.nan})
    return out


def write_csv(rows, path=None, columns=COLUMNS) -> str:
    """Write rows as CSV to ``path`` (or return the text when path is None)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(r.get(c)) for c in columns])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)
