import csv
import io

import pytest

from fujimi_mc import dtmc as core
from fujimi_mc import experiments as ex
from fujimi_mc import fujimi as fj
from fujimi_mc.experiments import SweepSpec
from fujimi_mc.fujimi import FujimiConfig


def _no_decrement(buffers):
    for i, (_, u) in enumerate(buffers):
        if u > 0:
            return i, buffers
    return None, buffers


def _newest_last(buffers):
    for i in reversed(range(len(buffers))):
        ok, u = buffers[i]
        if u > 0:
            return i, buffers[:i] + ((ok, u - 1),) + buffers[i + 1:]
    return None, buffers


# -- qualitative suite ---------------------------------------------------------------

def test_default_config_passes_all_six():
    report = ex.verify_qualitative(FujimiConfig())
    assert [e.id for e in report.entries] == [1, 2, 3, 4, 5, 6]
    assert report.passed
    assert report.entry(1).value == 0.0
    assert 0.0 <= report.entry(6).value <= 1.0
    assert all(e.wall_time >= 0.0 for e in report.entries)
    assert report.text().count("PASS") == 6


def test_noise_free_config_flags_precondition():
    report = ex.verify_qualitative(FujimiConfig(p_noise=0.0))
    three = report.entry(3)
    assert not three.passed and "precondition" in three.note
    assert three.counterexample is not None


def test_skipped_usage_decrement_is_caught(monkeypatch):
    monkeypatch.setattr(fj, "restore", _no_decrement)
    report = ex.verify_qualitative(FujimiConfig())
    one = report.entry(1)
    assert not one.passed and one.value > 0.0
    model = fj.build_fujimi(FujimiConfig())
    assert not model.states[one.counterexample].cdata_ok
    assert "counterexample=state" in one.line()


def test_out_of_order_restore_is_caught(monkeypatch):
    monkeypatch.setattr(fj, "restore", _newest_last)
    report = ex.verify_qualitative(FujimiConfig())
    assert not report.entry(2).passed
    assert report.entry(2).counterexample is not None


def _props_report(cfg):
    out = {}
    props = ex.qualitative_properties(cfg.n)
    main = ex.run_properties(fj.build_fujimi(cfg).dtmc, "\n".join(props["fujimi"]))
    rec = ex.run_properties(fj.build_recovery_variant(cfg).dtmc, "\n".join(props["recovery"]))
    one, two, three, five, hot, err = main
    out[1] = one.result.value == 0.0
    out[2] = two.result.holds
    out[3] = three.result.holds
    out[4] = rec[0].result.holds
    out[5] = five.result.holds
    h, e = hot.result.value, err.result.value
    out[6] = (h / e <= 1.0) if e > 0 else h == 0.0
    return out


@pytest.mark.parametrize("cfg", [FujimiConfig(), FujimiConfig(n=3, m=1, p_noise=0.02),
                                 FujimiConfig(n=1, m=3, p_detect=0.0), FujimiConfig(p_noise=0.0),
                                 FujimiConfig(n=3, m=2, tc=6, t_nmi=2, t_rst=4, p_detect=1.0)])
def test_properties_file_matches_report(cfg):
    report = ex.verify_qualitative(cfg)
    assert _props_report(cfg) == {e.id: e.passed for e in report.entries}


def test_properties_file_matches_report_under_out_of_order_restore(monkeypatch):
    monkeypatch.setattr(fj, "restore", _newest_last)
    cfg = FujimiConfig(n=3)
    report = ex.verify_qualitative(cfg)
    assert _props_report(cfg) == {e.id: e.passed for e in report.entries}


def test_label_form_cannot_see_a_missing_decrement(monkeypatch):
    # usage labels never change, so only the transition-level check notices the restore consumed nothing
    monkeypatch.setattr(fj, "restore", _no_decrement)
    cfg = FujimiConfig(n=3)
    report = ex.verify_qualitative(cfg)
    via_props = _props_report(cfg)
    assert not report.entry(2).passed and via_props[2]
    assert via_props[1] == report.entry(1).passed is False


def test_reset_order_formula_text():
    assert ex.reset_order_formula(1) == "AG true"
    assert ex.reset_order_formula(3).count("=>") == 3


# -- metrics -------------------------------------------------------------------------

def test_failure_zero_without_noise():
    assert ex.compute_failure(FujimiConfig(p_noise=0.0)) == 0.0
    assert ex.compute_failure(FujimiConfig(p_noise=0.0), "baseline") == 0.0


def test_effectiveness_examples():
    assert ex.compute_effectiveness(FujimiConfig(p_noise=0.0)) == pytest.approx(1 / 3, abs=1e-12)
    assert ex.compute_effectiveness(FujimiConfig(p_noise=0.0, tc=10, t_nmi=8, t_rst=9)) < 1.0


@pytest.mark.parametrize("cfg", [FujimiConfig(), FujimiConfig(p_noise=0.03, n=3),
                                 ex.application_config("sensor", p_noise=0.001)])
def test_adt_identity(cfg):
    for variant in ex.VARIANTS:
        eff = ex.compute_effectiveness(cfg, variant)
        assert ex.compute_adt(cfg, variant) == 8760.0 * (1.0 - eff)


def test_adt_arithmetic():
    assert 8760.0 * (1 - 0.999) == pytest.approx(8.76)
    assert ex.compute_adt(FujimiConfig(p_noise=0.0), "baseline") == 0.0


def test_unknown_variant():
    with pytest.raises(fj.ConfigError):
        ex.compute_failure(FujimiConfig(), "other")


# -- presets ---------------------------------------------------------------------------

def test_application_presets():
    balloon = ex.application_config("balloon")
    assert (balloon.tc, balloon.t_nmi, balloon.t_rst) == (146, 144, 145)
    assert (balloon.cost_hot_start, balloon.cost_cold_start, balloon.reward_scale) == (7600.0, 78000.0, 10.0)
    assert ex.application_config("logger").cost_hot_start == 17000.0
    assert ex.application_config("sensor").cost_hot_start == 11.0
    assert ex.application_config("balloon", p_detect=0.9).p_detect == 0.9
    with pytest.raises(fj.ConfigError):
        ex.application_config("toaster")


def test_noise_environment_conversion():
    assert ex.noise_probability(ex.NOISE_ENVIRONMENTS_US["1/10ms"], 1000.0) == 0.1
    assert ex.noise_probability(50.0, 100.0) == 1.0
    with pytest.raises(fj.ConfigError):
        ex.noise_probability(0.0, 100.0)


def test_with_cycle_keeps_overhead():
    cfg = ex.with_cycle(FujimiConfig(), 9)
    assert (cfg.tc, cfg.t_nmi, cfg.t_rst) == (9, 7, 8)


# -- sweeps ----------------------------------------------------------------------------

def test_single_point_sweep_equals_direct_call():
    base = FujimiConfig(p_noise=0.004)
    for metric, fn, variant in (("failure", ex.compute_failure, "fujimi"),
                                ("effectiveness", ex.compute_effectiveness, "fujimi"),
                                ("adt", ex.compute_adt, "fujimi"),
                                ("adt_baseline", ex.compute_adt, "baseline"),
                                ("failure_baseline", ex.compute_failure, "baseline")):
        rows = ex.run_sweep(SweepSpec(base, "m", (3,), metric))
        assert rows[0].metric == fn(base.with_(m=3), variant)


def test_empty_sweep_is_header_only():
    assert ex.sweep_csv(SweepSpec(FujimiConfig(), "m", ())) == "m,failure,state_count,error\n"


def test_sweep_csv_is_deterministic_with_12_digits():
    spec = SweepSpec(FujimiConfig(), "p_noise_per_10k", (10, 57.5, 200), "failure")
    a, b = ex.sweep_csv(spec), ex.sweep_csv(spec)
    assert a == b
    rows = list(csv.reader(io.StringIO(a)))
    assert rows[0] == ["p_noise_per_10k", "failure", "state_count", "error"]
    assert [r[0] for r in rows[1:]] == ["10", "57.5", "200"]
    value = rows[2][1]
    assert float(value) == pytest.approx(ex.compute_failure(FujimiConfig(p_noise=0.00575)), rel=1e-11)
    assert len(value.replace(".", "").lstrip("0").split("e")[0]) <= 12


def test_parallel_sweep_preserves_order():
    spec = SweepSpec(FujimiConfig(), "n", (3, 1, 2), "effectiveness")
    assert ex.sweep_csv(spec, workers=2) == ex.sweep_csv(spec)


def test_sweep_point_failure_recorded():
    spec = SweepSpec(FujimiConfig(), "t_nmi", (1, 5), "failure")
    rows = ex.run_sweep(spec)
    assert rows[0].error == "" and rows[0].metric is not None
    assert rows[1].metric is None and "ConfigError" in rows[1].error


def test_sweep_timing_column():
    text = ex.sweep_csv(SweepSpec(FujimiConfig(), "m", (1,)), timing=True)
    assert text.splitlines()[0] == "m,failure,state_count,wall_time_s,error"


def test_tc_sweep_shifts_offsets():
    spec = SweepSpec(FujimiConfig(), "tc", (3, 6))
    assert spec.config_at(6).t_rst == 5


@pytest.mark.parametrize("kwargs", [{"parameter": "bogus"}, {"parameter": "m", "metric": "speed"}])
def test_bad_sweep_spec(kwargs):
    with pytest.raises(fj.ConfigError):
        SweepSpec(FujimiConfig(), values=(1,), **{"metric": "failure", **kwargs})


def test_spot_check_agrees():
    spec = SweepSpec(FujimiConfig(), "p_noise_per_10k", (57.5, 100, 150, 200), "failure")
    checks = ex.spot_check(spec, k=2, seed=5, steps=200_000)
    assert len(checks) == 2 and all(c.within for c in checks)


def test_usage_sweep_rows_carry_state_counts():
    rows = ex.run_sweep(SweepSpec(FujimiConfig(), "m", (1, 2, 3)))
    counts = [r.state_count for r in rows]
    assert counts == sorted(counts) and counts[0] > 0


def test_formula_six_ratio_bounded_on_sweep_grid():
    for g in (10, 57.5, 200):
        for n in (1, 2, 3):
            model = fj.build_fujimi(FujimiConfig(n=n, p_noise=g / 1e4))
            pi = core.steady_state(model.dtmc)
            hot = pi[sorted(model.dtmc.labels[fj.HOT])].sum()
            err = pi[sorted(model.dtmc.labels["cdata_error"])].sum()
            assert hot <= err
