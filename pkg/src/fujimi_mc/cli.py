"""``fujimi-mc`` command-line front end.

Exit status: 0 on success, 1 when a checked property is violated, 2 on a
usage or configuration error.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import experiments as ex
from . import fujimi as fj
from . import sim
from .checker import Checker, UnknownLabel
from .dtmc import DtmcError
from .experiments import SweepSpec
from .formula import ParseError, parse_formula
from .modelio import export_explicit, import_explicit

OK, VIOLATED, USAGE = 0, 1, 2


class UsageError(Exception):
    pass


# flag -> FujimiConfig field (value conversion)
CONFIG_FLAGS = {
    "n": int, "m": int, "tc": int, "t_nmi": int, "t_rst": int, "p_detect": float,
    "cost_hot_start": float, "cost_cold_start": float, "reward_scale": float,
}


def _config_parent() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("model configuration")
    g.add_argument("--config", metavar="FILE", help="key = value file of FujimiConfig fields")
    g.add_argument("--app", choices=sorted(ex.APPLICATIONS), help="start from an application preset")
    for name, kind in CONFIG_FLAGS.items():
        g.add_argument("--" + name.replace("_", "-"), dest=name, type=kind)
    g.add_argument("--p-noise", type=float, help="per-tick noise probability")
    g.add_argument("--p-noise-per-10k", type=float, help="per-tick noise probability in units of 1/10,000")
    g.add_argument("--noise-interval-us", type=float,
                   help="mean time between noise hits; converted through --tick-duration-us")
    g.add_argument("--tick-duration-us", type=float,
                   help=f"tick length for presets and noise intervals (default {ex.DEFAULT_TICK_US:g})")
    g.add_argument("--no-noise-while-waiting", dest="noise_while_waiting", action="store_false", default=None)
    g.add_argument("--noise-in-overhead", dest="noise_in_overhead", action="store_true", default=None)
    g.add_argument("--max-states", type=int, default=fj.DEFAULT_MAX_STATES)
    return p


def resolve_config(args) -> fj.FujimiConfig:
    tick = args.tick_duration_us
    if args.app:
        cfg = ex.application_config(args.app, tick or ex.DEFAULT_TICK_US)
    else:
        cfg = fj.FujimiConfig()
        if tick is not None:
            cfg = cfg.with_(reward_scale=tick / ex.COST_UNIT_US)
    if args.config:
        cfg = fj.load_config(args.config, cfg)
    changes = {name: getattr(args, name) for name in CONFIG_FLAGS if getattr(args, name) is not None}
    for name in ("noise_while_waiting", "noise_in_overhead"):
        if getattr(args, name) is not None:
            changes[name] = getattr(args, name)
    noise = [x for x in (args.p_noise, args.p_noise_per_10k, args.noise_interval_us) if x is not None]
    if len(noise) > 1:
        raise UsageError("give at most one of --p-noise, --p-noise-per-10k, --noise-interval-us")
    if args.p_noise is not None:
        changes["p_noise"] = args.p_noise
    elif args.p_noise_per_10k is not None:
        changes["p_noise"] = args.p_noise_per_10k / ex.PER_10K
    elif args.noise_interval_us is not None:
        changes["p_noise"] = ex.noise_probability(args.noise_interval_us, tick or ex.DEFAULT_TICK_US)
    if "tc" in changes and not {"t_nmi", "t_rst"} & changes.keys():
        cfg = ex.with_cycle(cfg, changes.pop("tc"))
    return cfg.with_(**changes)


def _build(args, cfg, variant=None):
    variant = variant or args.variant
    if variant == "recovery":
        return fj.build_recovery_variant(cfg, max_states=args.max_states)
    return ex.build_model(cfg, variant, args.max_states)


def _out(path):
    return sys.stdout if path in (None, "-") else open(path, "w", newline="")


def cmd_build(args) -> int:
    cfg = resolve_config(args)
    model = _build(args, cfg)
    d = model.dtmc
    print(f"states {d.state_count} transitions {len(d.targets)} labels {len(d.labels)}")
    if args.out:
        for p in export_explicit(d, args.out, model.rewards.values()):
            print(f"wrote {p}")
    return OK


def cmd_check(args) -> int:
    if (args.formula is None) == (args.props is None):
        raise UsageError("give exactly one of --formula or --props")
    if args.model:
        d, _ = import_explicit(args.model)
    else:
        d = _build(args, resolve_config(args)).dtmc
    if args.props:
        results = ex.run_properties(d, ex.read_text(args.props))
    else:
        f = parse_formula(args.formula)
        results = [ex.PropertyResult(0, args.formula, Checker(d).check(f))]
    for r in results:
        print(r.line())
    return VIOLATED if any(r.violated for r in results) else OK


def cmd_verify(args) -> int:
    report = ex.verify_qualitative(resolve_config(args), args.max_states)
    print(f"states {report.state_count}")
    sys.stdout.write(report.text())
    return OK if report.passed else VIOLATED


def _metric(fn):
    def run(args) -> int:
        cfg = resolve_config(args)
        variant = "baseline" if args.baseline else "fujimi"
        print(f"{fn(cfg, variant, args.max_states):.12g}")
        return OK
    return run


def _values(text: str) -> list:
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if ":" in part:
            bits = part.split(":")
            if len(bits) != 3:
                raise UsageError(f"range {part!r} must be start:stop:step")
            start, stop, step = (float(b) for b in bits)
            if step <= 0:
                raise UsageError("range step must be positive")
            k = 0
            while start + k * step <= stop + 1e-12 * max(1.0, abs(stop)):
                out.append(start + k * step)
                k += 1
        else:
            out.append(float(part))
    return [int(v) if float(v).is_integer() else v for v in out]


def cmd_sweep(args) -> int:
    spec = SweepSpec(resolve_config(args), args.param, tuple(_values(args.values)), args.metric, args.max_states)
    fh = _out(args.out)
    try:
        rows = ex.run_sweep(spec, fh, args.workers, args.timing)
    finally:
        if fh is not sys.stdout:
            fh.close()
    status = OK
    if args.spot_check:
        for c in ex.spot_check(spec, args.spot_check, args.seed, args.steps):
            e = c.estimate
            print(f"spot-check {spec.parameter}={c.value}: failure analytic {c.analytic:.6g} simulated "
                  f"{e.estimate:.6g} (SE {e.standard_error:.2g}) {'ok' if c.within else 'MISMATCH'}",
                  file=sys.stderr)
            if not c.within:
                status = VIOLATED
    return VIOLATED if any(r.error for r in rows) else status


def cmd_simulate(args) -> int:
    cfg = resolve_config(args)
    model = _build(args, cfg)
    if args.label:
        if args.label not in model.dtmc.labels:
            raise UnknownLabel(f"label {args.label!r} is not defined in the model")
        e = sim.estimate_label_frequency(model, args.label, args.steps, args.seed)
        print(f"{e.label} {e.estimate:.12g} se {e.standard_error:.6g} ticks {e.sample_ticks} "
              f"seed {e.seed} generator {e.generator}")
        return OK
    traj = sim.simulate(model, args.steps, args.seed)
    fh = _out(args.out)
    try:
        traj.write_csv(fh, cfg.n)
    finally:
        if fh is not sys.stdout:
            fh.close()
    return OK


def cmd_replay(args) -> int:
    if args.demo:
        cfg = sim.demo_config()
        script = sim.demo_script(cfg)
    elif args.script:
        cfg = resolve_config(args)
        script = sim.load_script(args.script)
    else:
        raise UsageError("give --script FILE or --demo")
    traj = sim.replay(cfg, script, args.ticks)
    print("step 1 tick 0 start " + _buffers(traj.protocol_state(0).buffers))
    for e in traj.events:
        used = f" pdata_{e.buffer}" if e.buffer else ""
        state = "correct" if e.cdata_correct else "corrupt"
        print(f"step {e.step} tick {e.tick} {e.kind}{used} cdata {state} {_buffers(e.buffers)}")
    if args.out:
        traj.to_csv(args.out)
    return OK


def _buffers(bufs) -> str:
    return " ".join(f"pdata_{i}={'ok' if ok else 'bad'}/{u}" for i, (ok, u) in enumerate(bufs, 1))


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fujimi-mc", description="FUJIMI DTMC model checking experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    cfgp = _config_parent()

    def add(name, fn, help_text, config=True):
        p = sub.add_parser(name, parents=[cfgp] if config else [], help=help_text)
        p.set_defaults(func=fn)
        return p

    p = add("build", cmd_build, "build a model and optionally export it")
    p.add_argument("--variant", choices=("fujimi", "baseline", "recovery"), default="fujimi")
    p.add_argument("--out", metavar="PREFIX", help="write PREFIX.states/.tra/.lab/.rew files")

    p = add("check", cmd_check, "evaluate a formula or properties file")
    p.add_argument("--variant", choices=("fujimi", "baseline", "recovery"), default="fujimi")
    p.add_argument("--formula")
    p.add_argument("--props", metavar="FILE")
    p.add_argument("--model", metavar="PREFIX", help="check an exported model instead of building one")

    add("verify", cmd_verify, "run the six-formula qualitative suite")

    for name, fn in (("failure", ex.compute_failure), ("effectiveness", ex.compute_effectiveness),
                     ("adt", ex.compute_adt)):
        p = add(name, _metric(fn), f"compute {name}")
        p.add_argument("--baseline", action="store_true", help="evaluate the model without FUJIMI")

    p = add("sweep", cmd_sweep, "sweep one parameter and write CSV")
    p.add_argument("--param", required=True, help="FujimiConfig field or p_noise_per_10k")
    p.add_argument("--values", required=True, help="comma list; start:stop:step ranges allowed")
    p.add_argument("--metric", choices=sorted(ex.METRICS), default="failure")
    p.add_argument("--out", metavar="CSV")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--timing", action="store_true", help="add a wall-time column")
    p.add_argument("--spot-check", type=int, default=0, metavar="K",
                   help="cross-check K random points by simulation")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int, default=1_000_000)

    p = add("simulate", cmd_simulate, "simulate a trajectory or estimate a label frequency")
    p.add_argument("--variant", choices=("fujimi", "baseline"), default="fujimi")
    p.add_argument("--steps", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--label", help="estimate the long-run frequency of this label")
    p.add_argument("--out", metavar="CSV")

    p = add("replay", cmd_replay, "replay a scripted noise scenario")
    p.add_argument("--script", metavar="FILE", help="two-column file: <tick|-> <detected|missed|->")
    p.add_argument("--demo", action="store_true", help="the built-in n=2, m=2 scenario")
    p.add_argument("--ticks", type=int)
    p.add_argument("--out", metavar="CSV")
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    if getattr(args, "seed", 0) < 0:
        parser.error("--seed must be nonnegative")
    try:
        return args.func(args)
    except BrokenPipeError:
        # reader went away (e.g. piped into head); silence the flush at exit
        sys.stdout = open(os.devnull, "w")
        return OK
    except (UsageError, DtmcError, ParseError, OSError) as exc:
        print(f"fujimi-mc: error: {exc}", file=sys.stderr)
        return USAGE


if __name__ == "__main__":
    sys.exit(main())
