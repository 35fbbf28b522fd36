"""Explicit-state DTMC model checking of the FUJIMI save/reset protocol."""

from .checker import Checker, UnknownLabel, Value, Vector, Verdict, check, sat_set
from .dtmc import (BsccDecomposition, Dtmc, DtmcError, RewardStructure, bsccs, build_dtmc, long_run_ratio,
                   prob_bounded_until, prob_fg, prob_next, prob_until, reachable, steady_state)
from .experiments import (APPLICATIONS, SweepSpec, application_config, compute_adt, compute_effectiveness,
                          compute_failure, run_sweep, verify_qualitative)
from .formula import ParseError, parse_formula, parse_properties, to_text
from .fujimi import (FujimiConfig, build_baseline, build_fujimi, build_recovery_variant, load_config,
                     ticks_from_timing)
from .modelio import export_explicit, import_explicit
from .sim import NoiseScript, ScriptExhausted, estimate_label_frequency, replay, simulate

__all__ = [
    "APPLICATIONS", "BsccDecomposition", "Checker", "Dtmc", "DtmcError", "FujimiConfig", "NoiseScript",
    "ParseError", "RewardStructure", "ScriptExhausted", "SweepSpec", "UnknownLabel", "Value", "Vector",
    "Verdict", "application_config", "bsccs", "build_baseline", "build_dtmc", "build_fujimi",
    "build_recovery_variant", "check", "compute_adt", "compute_effectiveness", "compute_failure",
    "estimate_label_frequency", "export_explicit", "import_explicit", "load_config", "long_run_ratio",
    "parse_formula", "parse_properties", "prob_bounded_until", "prob_fg", "prob_next", "prob_until",
    "reachable", "replay", "run_sweep", "sat_set", "simulate", "steady_state", "ticks_from_timing",
    "to_text", "verify_qualitative",
]
