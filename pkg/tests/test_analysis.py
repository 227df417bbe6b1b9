import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from ncquapi.analysis import (
    ConvergenceReport,
    FitError,
    FitResult,
    convergence_scan,
    damped_cosine,
    dephasing_exponent,
    estimate_frequency,
    exact_pure_dephasing,
    fit_damped_cosine,
    redfield_dephasing_x,
    redfield_dephasing_z,
)
from ncquapi.kernels import ThermalBath
from ncquapi.model import SIGMA_Y, SIGMA_Z, Ohmic, ValidationError, tls
from ncquapi.propagator import Trajectory, evolve_single_bath


def synthetic(pz, t, py=None):
    py = np.zeros_like(t) if py is None else py
    eye = np.eye(2, dtype=complex)
    rhos = 0.5 * (eye[None] + py[:, None, None] * SIGMA_Y + pz[:, None, None] * SIGMA_Z)
    return Trajectory(t, rhos, {"dt": float(t[1] - t[0]), "dj_max": 1})


# -- reference rates ----------------------------------------------------------


def test_redfield_rates_examples():
    assert redfield_dephasing_z(1 / 16, 1.0, 0.2) == pytest.approx(0.0633, abs=5e-5)
    assert redfield_dephasing_x(1 / 16, 0.2) == pytest.approx(0.05, abs=1e-15)
    # high temperature limit of gamma coth(1/2T) is 2 gamma T
    assert redfield_dephasing_z(0.1, 1.0, 500.0) == pytest.approx(2 * 0.1 * 500, rel=1e-6)
    # zero temperature limit
    assert redfield_dephasing_z(0.1, 1.0, 1e-3) == pytest.approx(0.1, rel=1e-12)


@given(st.floats(0.0, 1.0), st.floats(0.01, 10.0), st.floats(0.01, 10.0))
def test_redfield_z_linear_and_monotone(g, T1, T2):
    lo, hi = sorted((T1, T2))
    assert redfield_dephasing_z(g, 1.0, lo) <= redfield_dephasing_z(g, 1.0, hi) + 1e-15
    assert redfield_dephasing_z(2 * g, 1.0, lo) == pytest.approx(2 * redfield_dephasing_z(g, 1.0, lo))


@pytest.mark.parametrize("args", [(-1, 0.2), (0.1, 0.0)])
def test_redfield_rejects_bad_input(args):
    with pytest.raises(ValidationError):
        redfield_dephasing_x(*args)
    with pytest.raises(ValidationError):
        redfield_dephasing_z(args[0], 1.0, args[1])


# -- exact pure dephasing ---------------------------------------------------------


def _gamma_d_oracle(g, wc, T, t):
    f = lambda w: 4 * g / np.pi * np.exp(-w / wc) / w / np.tanh(w / (2 * T)) * (1 - np.cos(w * t))
    return quad(f, 0, np.inf, limit=800, epsabs=1e-13, epsrel=1e-11)[0]


def test_exact_pure_dephasing_against_quadrature():
    b = ThermalBath(Ohmic(1 / 16, 10.0), 0.2)
    t = np.array([0.0, 0.3, 1.7, 5.0, 12.0])
    ours = dephasing_exponent(b, t)
    ref = [_gamma_d_oracle(1 / 16, 10.0, 0.2, x) for x in t]
    assert np.allclose(ours, ref, rtol=1e-8, atol=1e-12)
    traj = exact_pure_dephasing(b, 1.0, t)
    assert traj.pz[0] == 1.0
    assert np.allclose(traj.pz, np.cos(t) * np.exp(-np.array(ref)), atol=1e-10)


def test_exact_pure_dephasing_limits():
    t = np.linspace(0, 30, 61)
    free = exact_pure_dephasing(ThermalBath(Ohmic(0.0, 10.0), 0.2), 1.0, t)
    assert np.max(np.abs(free.pz - np.cos(t))) < 1e-15
    b = ThermalBath(Ohmic(1 / 16, 10.0), 0.2)
    env = np.exp(-dephasing_exponent(b, t))
    assert np.all(np.diff(env) <= 0)
    # long-time slope of Gamma_d approaches the weak-coupling rate (finite cutoff shifts it slightly)
    slope = np.polyfit(t[-20:], dephasing_exponent(b, t[-20:]), 1)[0]
    assert slope == pytest.approx(redfield_dephasing_x(1 / 16, 0.2), rel=5e-3)


def test_exact_pure_dephasing_matches_engine():
    b = ThermalBath(Ohmic(1 / 16, 10.0), 0.2)
    s = tls()
    eng = evolve_single_bath(s.H_S, s.sigma1, s.rho0, b, 0.5, 8, 8)
    ref = exact_pure_dephasing(b, 1.0, eng.times)
    # with full memory and a coupling that commutes with H_S the discretization is exact
    assert np.max(np.abs(eng.pz - ref.pz)) < 1e-8


# -- fitting ------------------------------------------------------------------------


def test_fit_recovers_synthetic_parameters():
    t = np.arange(0, 60, 0.3)
    tr = synthetic(damped_cosine(t, 0.9, 0.1, 0.94, 0.2, 0.01), t)
    r = fit_damped_cosine(tr)
    assert r.rate == pytest.approx(0.1, abs=1e-6)
    assert r.frequency == pytest.approx(0.94, abs=1e-6)
    assert r.offset == pytest.approx(0.01, abs=1e-6)
    assert r.residual_rms < 1e-9
    assert r.window[0] == pytest.approx(2 * np.pi / 0.94, rel=0.05)


def test_fit_short_record():
    t = np.arange(0, 30 + 1e-9, 0.3)
    r = fit_damped_cosine(synthetic(0.9 * np.exp(-0.1 * t) * np.cos(0.94 * t), t))
    assert r.rate == pytest.approx(0.1, abs=1e-6)
    assert r.frequency == pytest.approx(0.94, abs=1e-6)


def test_fit_undamped_cosine_has_zero_rate():
    t = np.arange(0, 40, 0.25)
    r = fit_damped_cosine(synthetic(np.cos(t), t))
    assert 0 <= r.rate < 1e-8
    assert r.frequency == pytest.approx(1.0, abs=1e-9)


def test_fit_on_other_channel():
    t = np.arange(0, 40, 0.25)
    y = -np.sin(t) * np.exp(-0.05 * t)
    r = fit_damped_cosine(synthetic(np.cos(t), t, py=y), channel="py")
    assert r.rate == pytest.approx(0.05, abs=1e-6)


@pytest.mark.parametrize("signal", [lambda t: 0 * t + 0.3, lambda t: np.exp(-t)])
def test_fit_rejects_nonoscillating(signal):
    t = np.arange(0, 40, 0.25)
    with pytest.raises(FitError):
        fit_damped_cosine(synthetic(signal(t), t))


def test_fit_rejects_short_window():
    t = np.arange(0, 40, 0.25)
    tr = synthetic(np.cos(t), t)
    with pytest.raises(FitError):
        fit_damped_cosine(tr, window=(0, 1.0))
    with pytest.raises(FitError):
        fit_damped_cosine(tr, window=(0, 12.0))
    with pytest.raises(ValidationError):
        fit_damped_cosine(tr, window=(5, 5))


def test_estimate_frequency():
    t = np.linspace(0, 50, 2001)
    assert estimate_frequency(t, np.cos(0.7 * t) + 2) == pytest.approx(0.7, rel=1e-3)


@settings(max_examples=25)
@given(st.floats(0.0, 0.3), st.floats(0.5, 1.5), st.floats(-np.pi, np.pi), st.floats(-0.2, 0.2))
def test_fit_roundtrip_property(rate, freq, phase, offset):
    t = np.arange(0, 12 * np.pi / freq, 0.2)
    tr = synthetic(0.8 * damped_cosine(t, 1.0, rate, freq, phase, 0.0) + offset, t)
    r = fit_damped_cosine(tr, window=(t[0], t[-1]))
    assert r.rate == pytest.approx(rate, abs=1e-6)
    assert r.frequency == pytest.approx(freq, abs=1e-6)
    assert r.offset == pytest.approx(offset, abs=1e-6)


def test_fit_result_validation_and_json():
    r = FitResult(0.9, 0.1, 0.94, 0.2, 0.0, 1e-12, (6.0, 60.0), "pz", 7)
    assert FitResult.from_json(r.to_json()) == r
    with pytest.raises(ValidationError):
        FitResult(0.9, -0.1, 0.94, 0.2, 0.0, 1e-12, (6.0, 60.0))
    with pytest.raises(ValidationError):
        FitResult(0.9, 0.1, 0.0, 0.2, 0.0, 1e-12, (6.0, 60.0))


# -- convergence ----------------------------------------------------------------------


def _run(dt, dj, f=np.cos, t_max=10.0):
    t = np.arange(0, t_max + 1e-9, dt)
    tr = synthetic(f(t), t)
    tr.metadata.update(dt=dt, dj_max=dj, tau_mem=dt * dj)
    return tr


def test_convergence_identical_runs():
    rep = convergence_scan([_run(0.2, 3), _run(0.3, 2), _run(0.2, 6)])
    assert [g.tau_mem for g in rep.groups] == pytest.approx([0.6, 1.2])
    assert rep.groups[0].max_pairwise_deviation < 1e-2
    assert rep.converged
    assert ConvergenceReport.from_json(rep.to_json()) == rep


def test_convergence_detects_drift():
    runs = [_run(0.2, 3), _run(0.2, 6, lambda t: np.cos(t) * np.exp(-0.1 * t))]
    rep = convergence_scan(runs, threshold=0.01)
    assert rep.inter_group_deviations[0] > 0.1
    assert not rep.converged


def test_convergence_single_run_and_window():
    rep = convergence_scan([_run(0.2, 3)], window=(2.0, 5.0))
    assert rep.converged and rep.window == (2.0, 5.0)
    assert rep.inter_group_deviations == []


def test_convergence_rejects_disjoint_ranges():
    a = _run(0.2, 3)
    b = _run(0.2, 6)
    b.times = b.times + 20.0
    with pytest.raises(ValidationError):
        convergence_scan([a, b])
    with pytest.raises(ValidationError):
        convergence_scan([])
