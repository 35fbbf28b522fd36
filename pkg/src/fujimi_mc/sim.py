"""Monte-Carlo trajectories and scripted-noise replay.

Random draws come from numpy's ``PCG64`` generator (128-bit state); the
generator name and seed travel with every estimate.
"""

from __future__ import annotations

import bisect
import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import fujimi as fj
from .dtmc import Dtmc, DtmcError

GENERATOR = "PCG64"
BURN_IN_FRACTION = 0.1
MIN_BATCHES = 30


class ScriptError(DtmcError, ValueError):
    pass


class ScriptExhausted(DtmcError):
    pass


class TrajectoryEntry(NamedTuple):
    tick: int
    state: int | None
    phase: str | None
    cdata_correct: bool | None
    buffers: tuple | None


class ReplayEvent(NamedTuple):
    step: int
    tick: int
    kind: str  # noise, nmi_save, nmi_detected, restore, hot_start
    buffer: int | None  # 1-based buffer used by a restore
    cdata_correct: bool
    buffers: tuple


class Trajectory:
    """Sequence of visited states, one entry per tick starting at tick 0."""

    def __init__(self, indices=None, fujimi_states=None, model=None, events=(), snapshots=()):
        if indices is None and fujimi_states is None:
            raise ValueError("a trajectory needs state indices or protocol states")
        self.indices = None if indices is None else np.asarray(indices, dtype=np.int64)
        self.fujimi_states = fujimi_states
        self.model = model
        self.events = list(events)
        self.snapshots = list(snapshots)

    def __len__(self):
        return len(self.indices) if self.indices is not None else len(self.fujimi_states)

    def protocol_state(self, k: int):
        if self.fujimi_states is not None:
            return self.fujimi_states[k]
        if self.model is not None and self.model.states and isinstance(self.model.states[0], fj.FujimiState):
            return self.model.states[int(self.indices[k])]
        return None

    def __getitem__(self, k: int) -> TrajectoryEntry:
        if k < 0:
            k += len(self)
        if not 0 <= k < len(self):
            raise IndexError(k)
        idx = None if self.indices is None else int(self.indices[k])
        s = self.protocol_state(k)
        if s is None:
            return TrajectoryEntry(k, idx, None, None, None)
        return TrajectoryEntry(k, idx, s.phase, s.cdata_ok, s.buffers)

    def __iter__(self):
        return (self[k] for k in range(len(self)))

    def write_csv(self, fh, n: int | None = None) -> None:
        first = self.protocol_state(0) if len(self) else None
        n = n if n is not None else (len(first.buffers) if first is not None else 0)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tick", "state", "phase", "cdata_correct"] + [f"usage_{i}" for i in range(1, n + 1)])
        for e in self:
            usages = [u for _, u in e.buffers] if e.buffers is not None else [""] * n
            w.writerow([e.tick, "" if e.state is None else e.state, e.phase or "",
                        "" if e.cdata_correct is None else int(e.cdata_correct)] + usages)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        self.write_csv(buf)
        if path is not None:
            Path(path).write_text(buf.getvalue())
        return buf.getvalue()


def _as_dtmc(model) -> Dtmc:
    return model if isinstance(model, Dtmc) else model.dtmc


def _sample_path(d: Dtmc, steps: int, seed: int) -> np.ndarray:
    rng = np.random.Generator(np.random.PCG64(seed))
    draws = rng.random(steps).tolist()
    cum = np.empty_like(d.probs)
    indptr = d.indptr.tolist()
    for s in range(d.state_count):
        lo, hi = indptr[s], indptr[s + 1]
        cum[lo:hi] = np.cumsum(d.probs[lo:hi])
        cum[hi - 1] = np.inf  # absorb row-sum round-off
    cum_l = cum.tolist()
    targets = d.targets.tolist()
    out = [0] * (steps + 1)
    s = out[0] = d.initial
    for k, u in enumerate(draws, 1):
        s = targets[bisect.bisect_right(cum_l, u, indptr[s], indptr[s + 1])]
        out[k] = s
    return np.array(out, dtype=np.int64)


def simulate(model, steps: int, seed: int) -> Trajectory:
    """Sample ``steps`` transitions from the initial state (``steps + 1`` entries)."""
    if steps < 1:
        raise ValueError("steps must be at least 1")
    d = _as_dtmc(model)
    return Trajectory(indices=_sample_path(d, steps, seed), model=None if isinstance(model, Dtmc) else model)


@dataclass(frozen=True)
class FrequencyEstimate:
    label: str
    estimate: float
    standard_error: float
    sample_ticks: int
    seed: int
    generator: str = GENERATOR
    batches: int = MIN_BATCHES


def estimate_label_frequency(model, label, steps: int, seed: int, batches: int = MIN_BATCHES) -> FrequencyEstimate:
    """Long-run fraction of ticks carrying ``label`` with a batch-means standard error.

    The first 10% of ticks are discarded as burn-in.
    """
    if steps < 10_000:
        raise ValueError("frequency estimation needs at least 10^4 steps")
    if batches < MIN_BATCHES:
        raise ValueError(f"need at least {MIN_BATCHES} batches")
    d = _as_dtmc(model)
    name = label if isinstance(label, str) else "<set>"
    mask = d.mask(d.labels[label] if isinstance(label, str) else label)
    path = _sample_path(d, steps, seed)
    kept = mask[path[int(len(path) * BURN_IN_FRACTION):]]
    size = len(kept) // batches
    means = kept[: size * batches].reshape(batches, size).mean(axis=1)
    se = float(means.std(ddof=1) / np.sqrt(batches))
    return FrequencyEstimate(name, float(kept.mean()), se, int(len(kept)), seed, GENERATOR, batches)


# ---------------------------------------------------------------------------
# scripted replay


@dataclass(frozen=True)
class NoiseScript:
    noise_ticks: tuple = ()
    detections: tuple = ()  # True = detected, consumed at NMI checks of corrupt data

    def __post_init__(self):
        ticks = tuple(int(t) for t in self.noise_ticks)
        if any(t < 0 for t in ticks) or any(b <= a for a, b in zip(ticks, ticks[1:])):
            raise ScriptError("noise ticks must be nonnegative and strictly increasing")
        object.__setattr__(self, "noise_ticks", ticks)
        object.__setattr__(self, "detections", tuple(bool(x) for x in self.detections))


_OUTCOMES = {"detected": True, "d": True, "1": True, "missed": False, "m": False, "0": False}


def parse_script(text: str) -> NoiseScript:
    """Two columns per line: ``<tick> <outcome>``.

    ``tick`` fires a noise at that global tick, or is ``-`` for none;
    ``outcome`` (``detected``/``missed``, or ``-``) is appended to the
    detection outcomes consumed in order.
    """
    ticks, detections = [], []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ScriptError(f"line {lineno}: expected '<tick|-> <detected|missed|->'")
        tick, outcome = parts
        if tick != "-":
            if not tick.isdigit():
                raise ScriptError(f"line {lineno}: bad tick {tick!r}")
            ticks.append(int(tick))
        if outcome != "-":
            if outcome.lower() not in _OUTCOMES:
                raise ScriptError(f"line {lineno}: bad detection outcome {outcome!r}")
            detections.append(_OUTCOMES[outcome.lower()])
    return NoiseScript(tuple(ticks), tuple(detections))


def load_script(path) -> NoiseScript:
    try:
        return parse_script(Path(path).read_text())
    except OSError as exc:
        raise ScriptError(f"{path}: {exc.strerror or exc}") from exc


def replay(cfg: fj.FujimiConfig, script: NoiseScript, ticks: int | None = None, model=None) -> Trajectory:
    """Run the protocol with noise and detection outcomes taken from ``script``.

    Without ``ticks`` the run stops at the end of the cycle after the one
    holding the last scripted noise.  Passing the built ``model`` adds
    state indices to the entries.
    """
    if ticks is None:
        last = script.noise_ticks[-1] if script.noise_ticks else 0
        ticks = (last // cfg.tc + 2) * cfg.tc
    noise_at = set(script.noise_ticks)
    pending = list(reversed(script.detections))
    s = fj.initial_state(cfg)
    states = [s]
    events, snapshots = [], []
    step = 1
    for k in range(ticks):
        noise = k in noise_at and fj.noise_possible(cfg, s)
        detected = False
        if fj.detection_pending(cfg, s, noise):
            if not pending:
                raise ScriptExhausted(f"no detection outcome left for the NMI check at tick {k + 1}")
            detected = pending.pop()
        nxt = fj.advance(cfg, s, noise, detected)
        if noise and s.cdata_ok:
            step += 1
            events.append(ReplayEvent(step, k, "noise", None, False, s.buffers))
        if nxt.t == cfg.t_nmi:
            step += 1
            kind = "nmi_detected" if nxt.phase == fj.WAIT else "nmi_save"
            events.append(ReplayEvent(step, k + 1, kind, None, nxt.cdata_ok, nxt.buffers))
        elif nxt.t == cfg.t_rst:
            step += 1
            if nxt.phase == fj.HOT:
                events.append(ReplayEvent(step, k + 1, "hot_start", None, nxt.cdata_ok, nxt.buffers))
            else:
                used = next(i for i, (a, b) in enumerate(zip(s.buffers, nxt.buffers)) if a != b)
                events.append(ReplayEvent(step, k + 1, "restore", used + 1, nxt.cdata_ok, nxt.buffers))
        if nxt.t == cfg.tc - 1:
            snapshots.append((k // cfg.tc, nxt.phase, nxt.cdata_ok, nxt.buffers))
        states.append(nxt)
        s = nxt
    indices = None
    if model is not None:
        indices = [model.index(x) for x in states]
    return Trajectory(indices=indices, fujimi_states=states, model=model, events=events, snapshots=snapshots)


def script_from_trajectory(cfg: fj.FujimiConfig, traj: Trajectory) -> NoiseScript:
    """Recover the noise/detection outcomes that produced a protocol trajectory."""
    ticks, detections = [], []
    for k in range(len(traj) - 1):
        s, nxt = traj.protocol_state(k), traj.protocol_state(k + 1)
        if nxt.noise:
            ticks.append(k)
        if fj.detection_pending(cfg, s, nxt.noise):
            detections.append(nxt.phase == fj.WAIT)
    return NoiseScript(tuple(ticks), tuple(detections))


def demo_config(**overrides) -> fj.FujimiConfig:
    return fj.FujimiConfig(**{"n": 2, "m": 2, "tc": 3, "t_nmi": 1, "t_rst": 2, **overrides})


def demo_script(cfg: fj.FujimiConfig) -> NoiseScript:
    """Noise at the first tick of cycles 1, 4 and 5; the first corrupt save goes unnoticed."""
    return NoiseScript((0, 3 * cfg.tc, 4 * cfg.tc), (False, True, True, True, True))
