import math

import numpy as np
import pytest

import phaselock


def test_output_loss_example():
    est = math.degrees(phaselock.estimate_phase_eq1(1.0, 1.0, 1.0, 1.0, 0.01))
    assert est == pytest.approx(89.712, abs=0.002)
    with pytest.raises(ValueError):
        phaselock.estimate_phase_eq1(1.0, 1.0, 0.0, 1.0, 0.0)


def test_arm_loss_example_and_balanced_coupler():
    err = math.degrees(phaselock.predicted_phase_eq2(math.pi / 2, 0.35, 0.35, 0.01) - math.pi / 2)
    assert abs(err) == pytest.approx(0.0862, abs=0.001)
    for mu in np.linspace(0.0, 0.1, 11):
        assert abs(phaselock.predicted_phase_eq2(math.pi / 2, 0.5, 0.35, mu) - math.pi / 2) < 1e-14


def test_coupler_conserves_energy():
    i1, i2 = phaselock.coupler_model(0.7, 0.35, 0.35, 0.0)
    assert i1 + i2 == pytest.approx(1.0)


def test_presets_round_trip():
    names = phaselock.preset_names()
    assert "fig5-closedloop" in names
    cfg = phaselock.preset("fig1-adaptive")
    assert cfg["mode"] == "closed-loop-adaptive"
    assert phaselock.preset("fig5-openloop", full_duration=True)["duration_s"] == 54000.0


def test_short_run_is_deterministic():
    a = phaselock.run("fig5-closedloop", seed=3, duration_s=20)
    b = phaselock.run("fig5-closedloop", seed=3, duration_s=20)
    assert a["csv"] == b["csv"]
    assert a["metadata"]["seed"] == 3
    s = a["series"]
    assert len(s["t_s"]) == 20
    assert np.all(np.abs(s["phi_ref_deg"][2:] - 90.0) < 0.01)


def test_override_and_config_error():
    r = phaselock.run("fig1-adaptive", duration_s=4, reference_lsd__mu_out=0.01)
    assert r["metadata"]["config"]["reference_lsd"]["mu_out"] == 0.01
    bad = phaselock.preset("fig1-adaptive")
    bad["duration_s"] = -1.0
    with pytest.raises(phaselock.ConfigError):
        phaselock.run(bad)


def test_metrics():
    d = 0.05
    x = d * np.arange(2000.0)
    taus, dev, terms = phaselock.allan_deviation(x, 1.0, [1.0, 10.0, 1500.0])
    assert dev[0] == pytest.approx(d / math.sqrt(2), rel=1e-9)
    assert dev[1] == pytest.approx(10 * d / math.sqrt(2), rel=1e-9)
    assert dev[2] is None
    rng = np.random.default_rng(1)
    w = rng.normal(size=20000)
    f, p = phaselock.power_spectral_density(w, 2.0, 1000)
    assert np.sum(p) * f[1] == pytest.approx(1.0, rel=0.05)
    assert phaselock.windowed_std(np.full(30, 2.0)) == pytest.approx(0.0, abs=1e-12)


def test_cli_in_process(tmp_path):
    code, out, err = phaselock.cli("run", "--preset", "fig1-constant", "--noiseless", "--out", tmp_path / "r")
    assert code == 0, err
    assert "lock_shift_deg" in out
    assert (tmp_path / "r" / "run.csv").exists()
    code, _, _ = phaselock.cli("run", "--config", tmp_path / "missing.json", "--out", tmp_path / "x")
    assert code == 3
