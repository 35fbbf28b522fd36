"""FUJIMI save/reset protocol as an explicit labeled DTMC.

One DTMC step is one timer tick.  Within a cycle of ``tc`` ticks the
system runs the user application on ticks ``[0, t_nmi)``, saves (or
waits, when the NMI check catches corrupted data) on ``[t_nmi, t_rst)``
and resets on ``[t_rst, tc)``.  Backup buffers carry a correctness bit
and a remaining-usage counter; a counter of 0 marks the buffer invalid.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .dtmc import Dtmc, DtmcError, RewardStructure, build_dtmc

USER = "user_application"
COPY = "copy_process"
WAIT = "reset_waiting"
RESET = "fujimi_reset"
HOT = "hot_start"
COLD = "cold_start"
PHASES = (USER, COPY, WAIT, RESET, HOT)

DEFAULT_MAX_STATES = 5_000_000


class ConfigError(DtmcError, ValueError):
    pass


class StateSpaceLimit(DtmcError):
    pass


class CycleTooShort(ConfigError):
    pass


@dataclass(frozen=True)
class FujimiConfig:
    n: int = 2
    m: int = 2
    tc: int = 3
    t_nmi: int = 1
    t_rst: int = 2
    p_noise: float = 0.005
    p_detect: float = 0.5
    cost_hot_start: float = 7600.0
    cost_cold_start: float = 78000.0
    reward_scale: float = 1.0
    noise_while_waiting: bool = True
    noise_in_overhead: bool = False

    def __post_init__(self):
        for name in ("n", "m", "tc", "t_nmi", "t_rst"):
            v = getattr(self, name)
            if isinstance(v, bool) or int(v) != v:
                raise ConfigError(f"{name} must be an integer, got {v!r}")
        if self.n < 1 or self.m < 1:
            raise ConfigError("n and m must be at least 1")
        if self.tc < 3:
            raise ConfigError("tc must be at least 3 ticks")
        if not 0 < self.t_nmi < self.t_rst < self.tc:
            raise ConfigError(f"need 0 < t_nmi < t_rst < tc, got t_nmi={self.t_nmi}, "
                              f"t_rst={self.t_rst}, tc={self.tc}")
        for name in ("p_noise", "p_detect"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {v!r}")
        for name in ("cost_hot_start", "cost_cold_start", "reward_scale"):
            v = getattr(self, name)
            if not v > 0.0 or math.isinf(v):
                raise ConfigError(f"{name} must be a positive number, got {v!r}")

    @property
    def noisy_phases(self) -> frozenset:
        phases = {USER}
        if self.noise_while_waiting:
            phases.add(WAIT)
        if self.noise_in_overhead:
            phases.update((COPY, RESET, HOT))
        return frozenset(phases)

    @property
    def hot_weight(self) -> float:
        return self.cost_hot_start / self.reward_scale

    @property
    def cold_ticks(self) -> int:
        return max(1, math.ceil(self.cost_cold_start / self.reward_scale - 1e-9))

    def with_(self, **changes) -> "FujimiConfig":
        return replace(self, **changes)


CONFIG_FIELDS = {f.name: f.type for f in fields(FujimiConfig)}


def parse_config_text(text: str, base: FujimiConfig | None = None) -> FujimiConfig:
    """Read ``key = value`` lines (``#`` comments) over ``base`` defaults."""
    changes = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or key not in CONFIG_FIELDS:
            raise ConfigError(f"line {lineno}: expected '<field> = <value>' with a FujimiConfig field, got {raw!r}")
        changes[key] = coerce_field(key, value, lineno)
    return replace(base or FujimiConfig(), **changes)


def coerce_field(key: str, value, lineno: int | None = None):
    where = f"line {lineno}: " if lineno else ""
    kind = CONFIG_FIELDS[key]
    try:
        if kind == "bool":
            if isinstance(value, bool):
                return value
            low = str(value).lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError
            return low in ("true", "1", "yes")
        if kind == "int":
            f = float(value)
            if f != int(f):
                raise ValueError
            return int(f)
        return float(value)
    except ValueError:
        noun = {"bool": "boolean", "int": "integer", "float": "number"}[kind]
        raise ConfigError(f"{where}{key} expects a {noun}, got {value!r}") from None


def load_config(path, base: FujimiConfig | None = None) -> FujimiConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror or exc}") from exc
    return parse_config_text(text, base)


class FujimiState(NamedTuple):
    t: int
    phase: str
    cdata_ok: bool
    noise: bool  # noise struck during the previous tick
    buffers: tuple  # ((correct, usage), ...) for pdata_1..pdata_n


def initial_state(cfg: FujimiConfig) -> FujimiState:
    return FujimiState(0, USER, True, False, ((True, cfg.m),) * cfg.n)


def has_valid(s: FujimiState) -> bool:
    return any(u > 0 for _, u in s.buffers)


def save(cfg: FujimiConfig, s_ok: bool, buffers: tuple) -> tuple:
    """Shift pdata_i into pdata_i+1, store cdata in pdata_1, revalidate all."""
    shifted = ((s_ok, cfg.m),) + tuple((ok, cfg.m) for ok, _ in buffers[:-1])
    return shifted


def restore(buffers: tuple) -> tuple[int | None, tuple]:
    """Consume one use of the newest valid buffer; returns its index (or None)."""
    for i, (ok, u) in enumerate(buffers):
        if u > 0:
            return i, buffers[:i] + ((ok, u - 1),) + buffers[i + 1:]
    return None, buffers


def noise_possible(cfg: FujimiConfig, s: FujimiState) -> bool:
    return s.phase in cfg.noisy_phases


def detection_pending(cfg: FujimiConfig, s: FujimiState, noise: bool) -> bool:
    """Whether the coming tick is an NMI that finds corrupted cdata."""
    return (s.t + 1) % cfg.tc == cfg.t_nmi and not (s.cdata_ok and not noise)


def advance(cfg: FujimiConfig, s: FujimiState, noise: bool, detected: bool) -> FujimiState:
    """Deterministic one-tick successor given the noise and detection outcomes."""
    noise = noise and noise_possible(cfg, s)
    ok = s.cdata_ok and not noise
    bufs = s.buffers
    t = (s.t + 1) % cfg.tc
    if t == 0:
        if s.phase == HOT:
            ok, bufs = True, ((True, cfg.m),) * cfg.n
        phase = USER
    elif t < cfg.t_nmi:
        phase = s.phase
    elif t == cfg.t_nmi:
        if not ok and detected:
            phase = WAIT
        else:
            phase = COPY
            bufs = save(cfg, ok, bufs)
    elif t < cfg.t_rst:
        phase = s.phase
    elif t == cfg.t_rst:
        i, bufs = restore(bufs)
        if i is None:
            phase = HOT
        else:
            phase = RESET
            ok = bufs[i][0]
    else:
        phase = s.phase
    return FujimiState(t, phase, ok, noise, bufs)


def outcomes(cfg: FujimiConfig, s: FujimiState):
    """Yield ``(probability, noise, detected)`` for every positive-probability branch."""
    p = cfg.p_noise if noise_possible(cfg, s) else 0.0
    for noise, pn in ((True, p), (False, 1.0 - p)):
        if pn <= 0.0:
            continue
        if detection_pending(cfg, s, noise):
            for detected, pd in ((True, cfg.p_detect), (False, 1.0 - cfg.p_detect)):
                if pd > 0.0:
                    yield pn * pd, noise, detected
        else:
            yield pn, noise, False


def successors(cfg: FujimiConfig, s: FujimiState) -> dict[FujimiState, float]:
    out: dict[FujimiState, float] = {}
    for prob, noise, detected in outcomes(cfg, s):
        nxt = advance(cfg, s, noise, detected)
        out[nxt] = out.get(nxt, 0.0) + prob
    return out


def state_labels(cfg: FujimiConfig, s: FujimiState) -> list[str]:
    names = [s.phase]
    if not s.cdata_ok:
        names.append("cdata_error")
    if s.noise:
        names.append("noise")
    if has_valid(s):
        names.append("has_valid")
    if s.phase == USER and s.cdata_ok:
        names.append("available")
    for i, (_, u) in enumerate(s.buffers, 1):
        if u > 0:
            names.append(f"usage_pdata{i}_gt0")
        if u == cfg.m:
            names.append(f"usage_pdata{i}_full")
    return names


def label_names(cfg: FujimiConfig) -> list[str]:
    return list(PHASES) + ["cdata_error", "noise", "has_valid", "available"] + \
        [f"usage_pdata{i}_{k}" for i in range(1, cfg.n + 1) for k in ("gt0", "full")]


@dataclass(frozen=True)
class LabeledModel:
    dtmc: Dtmc
    states: tuple = field(repr=False)
    rewards: dict = field(repr=False)
    config: FujimiConfig | None = None

    def index(self, state) -> int:
        idx = self.__dict__.get("_index")
        if idx is None:
            idx = {s: i for i, s in enumerate(self.states)}
            object.__setattr__(self, "_index", idx)
        return idx[state]

    @property
    def state_count(self) -> int:
        return self.dtmc.state_count


def _explore(initial, step, max_states: int):
    """Breadth-first reachable-state enumeration; ``step(s)`` maps to {succ: prob}."""
    index = {initial: 0}
    order = [initial]
    src, dst, prob = [], [], []
    queue = deque([initial])
    while queue:
        s = queue.popleft()
        i = index[s]
        for nxt, p in sorted(step(s).items(), key=lambda kv: repr(kv[0])):
            j = index.get(nxt)
            if j is None:
                if len(order) >= max_states:
                    raise StateSpaceLimit(f"reachable state space exceeds {max_states} states")
                j = index[nxt] = len(order)
                order.append(nxt)
                queue.append(nxt)
            src.append(i)
            dst.append(j)
            prob.append(p)
    return order, (np.array(src, dtype=np.int64), np.array(dst, dtype=np.int64), np.array(prob))


def _rewards(cfg: FujimiConfig, phases, available) -> dict[str, RewardStructure]:
    total, avail = {}, {}
    for i, (phase, ok) in enumerate(zip(phases, available)):
        total[i] = cfg.hot_weight if phase == HOT else 1.0
        if ok:
            avail[i] = 1.0
    return {"weight_total": RewardStructure("weight_total", total),
            "weight_available": RewardStructure("weight_available", avail)}


def build_fujimi(cfg: FujimiConfig, max_states: int = DEFAULT_MAX_STATES) -> LabeledModel:
    """Reachable labeled DTMC of the protocol under ``cfg``."""
    order, arrays = _explore(initial_state(cfg), lambda s: successors(cfg, s), max_states)
    labels = {name: [] for name in label_names(cfg)}
    for i, s in enumerate(order):
        for name in state_labels(cfg, s):
            labels[name].append(i)
    labels["noise_env"] = range(len(order))  # the noisy environment never lets up
    d = build_dtmc(len(order), 0, arrays, labels)
    rewards = _rewards(cfg, [s.phase for s in order], [s.phase == USER and s.cdata_ok for s in order])
    return LabeledModel(d, tuple(order), rewards, cfg)


def build_recovery_variant(cfg: FujimiConfig, switch_prob: float = 0.01,
                           max_states: int = DEFAULT_MAX_STATES) -> LabeledModel:
    """Noisy model whose every tick may switch, for good, to a noise-free environment.

    States are ``(noisy_env, FujimiState)``; ``noise_env`` labels the noisy
    half.  The quiet half replays the protocol with ``p_noise = 0`` from
    every reachable noisy configuration.
    """
    if not 0.0 < switch_prob < 1.0:
        raise ConfigError("switch_prob must lie in (0, 1)")
    quiet = replace(cfg, p_noise=0.0)

    def step(es):
        env, s = es
        if not env:
            return {(False, t): p for t, p in successors(quiet, s).items()}
        out = {}
        for t, p in successors(cfg, s).items():
            out[(True, t)] = out.get((True, t), 0.0) + p * (1.0 - switch_prob)
        for t, p in successors(quiet, s).items():
            out[(False, t)] = out.get((False, t), 0.0) + p * switch_prob
        return out

    order, arrays = _explore((True, initial_state(cfg)), step, max_states)
    labels = {name: [] for name in label_names(cfg) + ["noise_env"]}
    for i, (env, s) in enumerate(order):
        for name in state_labels(cfg, s):
            labels[name].append(i)
        if env:
            labels["noise_env"].append(i)
    d = build_dtmc(len(order), 0, arrays, labels)
    rewards = _rewards(cfg, [s.phase for _, s in order], [s.phase == USER and s.cdata_ok for _, s in order])
    return LabeledModel(d, tuple(order), rewards, cfg)


def build_baseline(cfg: FujimiConfig) -> LabeledModel:
    """Same environment without FUJIMI: every noise hit forces a cold restart.

    State 0 is the running application; states ``1..L`` are the ticks of a
    cold restart of ``L = cfg.cold_ticks`` ticks.
    """
    p = cfg.p_noise
    length = cfg.cold_ticks
    if p == 0.0:
        d = build_dtmc(1, 0, [(0, 0, 1.0)], {USER: [0], COLD: [], "available": [0]})
        states = (USER,)
    else:
        edges = [(0, 1, p)] if p == 1.0 else [(0, 0, 1.0 - p), (0, 1, p)]
        edges += [(k, k + 1, 1.0) for k in range(1, length)] + [(length, 0, 1.0)]
        cold = list(range(1, length + 1))
        d = build_dtmc(length + 1, 0, edges, {USER: [0], COLD: cold, "available": [0]})
        states = (USER,) + tuple(f"{COLD}_{k}" for k in cold)
    total = RewardStructure("weight_total", {i: 1.0 for i in range(d.state_count)})
    avail = RewardStructure("weight_available", {0: 1.0})
    return LabeledModel(d, states, {"weight_total": total, "weight_available": avail}, cfg)


# ---------------------------------------------------------------------------
# physical timing


@dataclass(frozen=True)
class TickTiming:
    tc: int
    t_nmi: int
    t_rst: int
    hot_start_ticks: int
    cold_start_ticks: int


def _ticks(duration: float, tick: float) -> int:
    return max(1, math.ceil(duration / tick - 1e-9))


def ticks_from_timing(nmi_process: float, rst_process: float, ntor_duration: float, user_app_time: float,
                      hot_start_time: float, cold_start_time: float, tick_duration: float,
                      tc: int | None = None) -> TickTiming:
    """Map physical durations (any common unit) onto integer ticks.

    The user window fills the cycle up to NMI; NMI to RST spans the NtoR
    duration and the RST process closes the cycle.
    """
    for name, v in (("nmi_process", nmi_process), ("rst_process", rst_process),
                    ("ntor_duration", ntor_duration), ("user_app_time", user_app_time),
                    ("hot_start_time", hot_start_time), ("cold_start_time", cold_start_time),
                    ("tick_duration", tick_duration)):
        if not v > 0:
            raise ConfigError(f"{name} must be positive, got {v!r}")
    user, ntor, rst = _ticks(user_app_time, tick_duration), _ticks(ntor_duration, tick_duration), \
        _ticks(rst_process, tick_duration)
    minimum = user + ntor + rst
    if tc is None:
        tc = minimum
    elif tc < minimum:
        raise CycleTooShort(f"cycle of {tc} ticks is shorter than user application + NtoR + RST = {minimum} ticks")
    t_rst = tc - rst
    return TickTiming(tc, t_rst - ntor, t_rst, _ticks(hot_start_time, tick_duration),
                      _ticks(cold_start_time, tick_duration))
