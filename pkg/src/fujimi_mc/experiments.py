"""Named evaluations: the qualitative suite, failure, effectiveness, ADT and sweeps."""

from __future__ import annotations

import csv
import io
import math
import time
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import dtmc as core
from . import fujimi as fj
from .checker import Checker, Value, Verdict
from .formula import parse_formula, parse_properties
from .fujimi import FujimiConfig

HOURS_PER_YEAR = 8760.0
PER_10K = 10_000.0
DEFAULT_TICK_US = 100.0
COST_UNIT_US = 10.0  # hot/cold start costs are expressed in 10 microsecond units


# ---------------------------------------------------------------------------
# application presets


@dataclass(frozen=True)
class Application:
    """Measured timings in microseconds; ``hot_start_cost`` in 10 us units."""

    name: str
    nmi_process: float
    rst_process: float
    ntor_duration: float
    user_app_time: float
    hot_start_time: float
    cold_start_time: float
    hot_start_cost: float


APPLICATIONS = {
    "sensor": Application("sensor", 9.6, 16.2, 500.0, 14_900.0, 110.0, 117.0, 11.0),
    "logger": Application("logger", 94.0, 114.0, 300.0, 49_600.0, 170_000.0, 220_000.0, 17_000.0),
    "balloon": Application("balloon", 66.0, 84.0, 25.0, 14_400.0, 76_000.0, 780_000.0, 7_600.0),
}

# mean time between noise hits, microseconds
NOISE_ENVIRONMENTS_US = {
    "1/10ms": 10_000.0,
    "1/40ms": 40_000.0,
    "1/70ms": 70_000.0,
    "1/100ms": 100_000.0,
    "1/1s": 1_000_000.0,
}


def noise_probability(mean_interval_us: float, tick_duration_us: float) -> float:
    """Per-tick noise probability for a noise rate of one hit per ``mean_interval_us``."""
    if not mean_interval_us > 0 or not tick_duration_us > 0:
        raise fj.ConfigError("noise interval and tick duration must be positive")
    return min(1.0, tick_duration_us / mean_interval_us)


def application_config(app: str | Application, tick_duration_us: float = DEFAULT_TICK_US,
                       tc: int | None = None, **overrides) -> FujimiConfig:
    """Tick-level configuration for an application preset."""
    if isinstance(app, str):
        if app not in APPLICATIONS:
            raise fj.ConfigError(f"unknown application {app!r}; choose from {', '.join(APPLICATIONS)}")
        app = APPLICATIONS[app]
    t = fj.ticks_from_timing(app.nmi_process, app.rst_process, app.ntor_duration, app.user_app_time,
                             app.hot_start_time, app.cold_start_time, tick_duration_us, tc)
    base = dict(n=2, m=2, tc=t.tc, t_nmi=t.t_nmi, t_rst=t.t_rst, cost_hot_start=app.hot_start_cost,
                cost_cold_start=app.cold_start_time / COST_UNIT_US,
                reward_scale=tick_duration_us / COST_UNIT_US)
    base.update(overrides)
    return FujimiConfig(**base)


def with_cycle(cfg: FujimiConfig, tc: int) -> FujimiConfig:
    """Change the cycle length keeping the NMI and RST offsets from the cycle end."""
    return cfg.with_(tc=tc, t_nmi=tc - (cfg.tc - cfg.t_nmi), t_rst=tc - (cfg.tc - cfg.t_rst))


# ---------------------------------------------------------------------------
# metrics

VARIANTS = ("fujimi", "baseline")


def build_model(cfg: FujimiConfig, variant: str = "fujimi", max_states: int = fj.DEFAULT_MAX_STATES):
    if variant == "fujimi":
        return fj.build_fujimi(cfg, max_states)
    if variant == "baseline":
        return fj.build_baseline(cfg)
    raise fj.ConfigError(f"variant must be one of {VARIANTS}, got {variant!r}")


def _failure_label(model) -> str:
    return fj.HOT if fj.HOT in model.dtmc.labels else fj.COLD


def failure_of(model) -> float:
    d = model.dtmc
    return float(core.steady_state(d)[d.mask(d.labels[_failure_label(model)])].sum())


def effectiveness_of(model) -> float:
    return core.long_run_ratio(model.dtmc, model.rewards["weight_available"], model.rewards["weight_total"])


def adt_of(model) -> float:
    return HOURS_PER_YEAR * (1.0 - effectiveness_of(model))


def compute_failure(cfg: FujimiConfig, variant: str = "fujimi", max_states: int = fj.DEFAULT_MAX_STATES) -> float:
    """Long-run fraction of ticks spent restarting (hot start, or cold start for the baseline)."""
    return failure_of(build_model(cfg, variant, max_states))


def compute_effectiveness(cfg: FujimiConfig, variant: str = "fujimi",
                          max_states: int = fj.DEFAULT_MAX_STATES) -> float:
    return effectiveness_of(build_model(cfg, variant, max_states))


def compute_adt(cfg: FujimiConfig, variant: str = "fujimi", max_states: int = fj.DEFAULT_MAX_STATES) -> float:
    """Average downtime in hours per year."""
    return adt_of(build_model(cfg, variant, max_states))


METRICS = {
    "failure": ("fujimi", failure_of),
    "effectiveness": ("fujimi", effectiveness_of),
    "adt": ("fujimi", adt_of),
    "failure_baseline": ("baseline", failure_of),
    "effectiveness_baseline": ("baseline", effectiveness_of),
    "adt_baseline": ("baseline", adt_of),
}


# ---------------------------------------------------------------------------
# qualitative suite


@dataclass(frozen=True)
class FormulaResult:
    id: int
    text: str
    passed: bool
    value: float | None
    counterexample: int | None
    wall_time: float
    note: str = ""

    def line(self) -> str:
        shown = "" if self.value is None else f" value={self.value:.12g}"
        cex = "" if self.counterexample is None else f" counterexample=state {self.counterexample}"
        note = f" ({self.note})" if self.note else ""
        return f"({self.id}) {'PASS' if self.passed else 'FAIL'} {self.text}{shown}{cex}{note}"


@dataclass(frozen=True)
class QualitativeReport:
    config: FujimiConfig
    state_count: int
    entries: tuple

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    def entry(self, formula_id: int) -> FormulaResult:
        return next(e for e in self.entries if e.id == formula_id)

    def text(self) -> str:
        return "\n".join(e.line() for e in self.entries) + "\n"


FORMULA_1 = "P=? [ F G cdata_error ]"
FORMULA_3 = "AG P>=1 [ F hot_start ]"
FORMULA_4 = "AG ((reset_waiting & has_valid & !noise_env) => P>=1 [ F !cdata_error ])"
FORMULA_5 = "AG ((noise & reset_waiting & !has_valid) => P>=1 [ F hot_start ])"
FORMULA_6 = ("S=? [ hot_start ]", "S=? [ cdata_error ]")
RESET_ORDER_TEXT = "A [ G every restore consumes the lowest-index valid pdata ]"


def reset_order_formula(n: int) -> str:
    """Label-level form of the reset-order invariant.

    Usage only drops through restores and a save refills every buffer, so
    "a partly used pdata_j implies pdata_i is exhausted for all i < j"
    holds in every reachable state exactly when restores go in index order.
    """
    parts = [f"(!usage_pdata{j}_full => !usage_pdata{i}_gt0)" for j in range(2, n + 1) for i in range(1, j)]
    return "AG " + ("(" + " & ".join(parts) + ")" if parts else "true")


def qualitative_properties(n: int) -> dict[str, list[str]]:
    """Properties files for the six checks, keyed by the model they run on."""
    return {"fujimi": [FORMULA_1, reset_order_formula(n), FORMULA_3, FORMULA_5, *FORMULA_6],
            "recovery": [FORMULA_4]}


def reset_order_violations(model) -> list[tuple[int, int]]:
    """Transitions whose restore skips a valid lower-index buffer."""
    d = model.dtmc
    bad = []
    for s, t in zip(np.repeat(np.arange(d.state_count), np.diff(d.indptr)).tolist(), d.targets.tolist()):
        a, b = model.states[s], model.states[t]
        if b.t != model.config.t_rst or b.phase != fj.RESET:
            continue
        used = [i for i, (x, y) in enumerate(zip(a.buffers, b.buffers)) if x[1] != y[1]]
        if len(used) != 1 or any(u > 0 for _, u in a.buffers[:used[0]]):
            bad.append((s, t))
    return bad


def _bscc_witness(d: core.Dtmc, target: np.ndarray) -> int | None:
    """A state of a bottom component lying wholly inside ``target``, nearest the initial state."""
    inside = np.zeros(d.state_count, dtype=bool)
    for comp in core.bsccs(d).components:
        members = np.fromiter(comp, dtype=np.int64)
        if target[members].all():
            inside[members] = True
    seen, queue = {d.initial}, deque([d.initial])
    while queue:
        s = queue.popleft()
        if inside[s]:
            return s
        for t in d.successors(s)[0].tolist():
            if t not in seen:
                seen.add(t)
                queue.append(t)
    return None


def _timed(fn):
    start = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - start


def verify_qualitative(cfg: FujimiConfig, max_states: int = fj.DEFAULT_MAX_STATES,
                       switch_prob: float = 0.01) -> QualitativeReport:
    model = fj.build_fujimi(cfg, max_states)
    d = model.dtmc
    ck = Checker(d)
    entries = []
    precondition = "" if 0.0 < cfg.p_noise < 1.0 else "precondition violated: p_noise must lie in (0, 1)"

    def one():
        zero = ck.check(parse_formula("P<=0 [ F G cdata_error ]"))
        if zero.holds:
            return True, 0.0, None
        v = ck.check(parse_formula(FORMULA_1)).value
        return False, v, _bscc_witness(d, ck.sat(parse_formula("cdata_error")))
    (ok, v, cex), dt = _timed(one)
    entries.append(FormulaResult(1, FORMULA_1, ok, v, cex, dt))

    bad, dt = _timed(lambda: reset_order_violations(model))
    entries.append(FormulaResult(2, RESET_ORDER_TEXT, not bad, None, bad[0][0] if bad else None, dt))

    for fid, text in ((3, FORMULA_3), (5, FORMULA_5)):
        r, dt = _timed(lambda: ck.check(parse_formula(text)))
        note = precondition if fid == 3 and not r.holds else ""
        entries.append(FormulaResult(fid, text, r.holds, None, r.counterexample, dt, note))

    def four():
        variant = fj.build_recovery_variant(cfg, switch_prob, max_states)
        return Checker(variant.dtmc).check(parse_formula(FORMULA_4))
    r, dt = _timed(four)
    entries.append(FormulaResult(4, FORMULA_4, r.holds, None, r.counterexample, dt))

    def six():
        hot = ck.check(parse_formula(FORMULA_6[0])).value
        err = ck.check(parse_formula(FORMULA_6[1])).value
        if err > 0.0:
            return hot / err
        return 0.0 if hot == 0.0 else math.inf
    ratio, dt = _timed(six)
    entries.append(FormulaResult(6, f"{FORMULA_6[0]} / {FORMULA_6[1]} <= 1", ratio <= 1.0, ratio, None, dt))

    entries.sort(key=lambda e: e.id)
    return QualitativeReport(cfg, d.state_count, tuple(entries))


# ---------------------------------------------------------------------------
# properties files


@dataclass(frozen=True)
class PropertyResult:
    lineno: int
    text: str
    result: object

    @property
    def violated(self) -> bool:
        return isinstance(self.result, Verdict) and not self.result.holds

    def line(self) -> str:
        r = self.result
        if isinstance(r, Verdict):
            cex = "" if r.holds else (f" counterexample=state {r.counterexample}"
                                      if r.counterexample is not None else "")
            return f"{self.text}: {'true' if r.holds else 'false'}{cex}"
        if isinstance(r, Value):
            return f"{self.text}: {r.value:.12g}"
        return f"{self.text}: vector[{len(r.values)}]"


def run_properties(d: core.Dtmc, text: str) -> list[PropertyResult]:
    ck = Checker(d)
    return [PropertyResult(lineno, line, ck.check(f)) for lineno, line, f in parse_properties(text)]


def read_text(path) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise OSError(f"{path}: {exc.strerror or exc}") from exc


# ---------------------------------------------------------------------------
# sweeps

SWEEP_EXTRA = ("p_noise_per_10k",)


@dataclass(frozen=True)
class SweepSpec:
    base: FujimiConfig
    parameter: str
    values: tuple
    metric: str = "failure"
    max_states: int = fj.DEFAULT_MAX_STATES

    def __post_init__(self):
        names = {f.name for f in fields(FujimiConfig)} | set(SWEEP_EXTRA)
        if self.parameter not in names:
            raise fj.ConfigError(f"unknown sweep parameter {self.parameter!r}")
        if self.metric not in METRICS:
            raise fj.ConfigError(f"metric must be one of {', '.join(METRICS)}, got {self.metric!r}")
        object.__setattr__(self, "values", tuple(self.values))

    def config_at(self, value) -> FujimiConfig:
        if self.parameter == "p_noise_per_10k":
            return self.base.with_(p_noise=float(value) / PER_10K)
        if self.parameter == "tc":
            return with_cycle(self.base, int(value))
        return replace(self.base, **{self.parameter: fj.coerce_field(self.parameter, value)})


@dataclass(frozen=True)
class SweepRow:
    value: object
    metric: float | None
    state_count: int | None
    wall_time: float
    error: str = ""


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.12g}"


def sweep_point(spec: SweepSpec, value) -> SweepRow:
    start = time.perf_counter()
    try:
        variant, fn = METRICS[spec.metric]
        model = build_model(spec.config_at(value), variant, spec.max_states)
        out = fn(model)
        return SweepRow(value, out, model.state_count, time.perf_counter() - start)
    except (core.DtmcError, ValueError, ArithmeticError, MemoryError) as exc:
        return SweepRow(value, None, None, time.perf_counter() - start, f"{type(exc).__name__}: {exc}")


def _point(args):
    return sweep_point(*args)


def sweep_header(spec: SweepSpec, timing: bool = False) -> list[str]:
    return [spec.parameter, spec.metric, "state_count"] + (["wall_time_s"] if timing else []) + ["error"]


def sweep_record(row: SweepRow, timing: bool = False) -> list[str]:
    out = [_fmt(row.value), _fmt(row.metric), _fmt(row.state_count)]
    if timing:
        out.append(f"{row.wall_time:.6f}")
    return out + [row.error]


def run_sweep(spec: SweepSpec, out=None, workers: int = 1, timing: bool = False) -> list[SweepRow]:
    """Evaluate every value in order; rows are written (and flushed) to ``out`` as they finish.

    Wall time is left out of the CSV unless ``timing`` is set, keeping
    repeated runs byte-identical.
    """
    writer = csv.writer(out, lineterminator="\n") if out is not None else None
    if writer:
        writer.writerow(sweep_header(spec, timing))
        out.flush()
    jobs = [(spec, v) for v in spec.values]
    rows = []
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = pool.map(_point, jobs)
            for row in results:
                rows.append(row)
                if writer:
                    writer.writerow(sweep_record(row, timing))
                    out.flush()
    else:
        for job in jobs:
            row = _point(job)
            rows.append(row)
            if writer:
                writer.writerow(sweep_record(row, timing))
                out.flush()
    return rows


def sweep_csv(spec: SweepSpec, workers: int = 1, timing: bool = False) -> str:
    buf = io.StringIO()
    run_sweep(spec, buf, workers, timing)
    return buf.getvalue()


@dataclass(frozen=True)
class SpotCheck:
    value: object
    analytic: float
    estimate: object  # FrequencyEstimate
    within: bool


def spot_check(spec: SweepSpec, k: int = 5, seed: int = 0, steps: int = 1_000_000) -> list[SpotCheck]:
    """Monte-Carlo cross-check of the failure value at ``k`` random sweep points."""
    from .sim import estimate_label_frequency

    variant = METRICS[spec.metric][0]
    rng = np.random.Generator(np.random.PCG64(seed))
    picks = sorted(rng.choice(len(spec.values), size=min(k, len(spec.values)), replace=False).tolist())
    out = []
    for j, i in enumerate(picks):
        model = build_model(spec.config_at(spec.values[i]), variant, spec.max_states)
        analytic = failure_of(model)
        est = estimate_label_frequency(model, _failure_label(model), steps, seed + j + 1)
        within = abs(est.estimate - analytic) <= max(3 * est.standard_error, 1e-3)
        out.append(SpotCheck(spec.values[i], analytic, est, within))
    return out
