import math
import warnings

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from talbotlau.analysis import (
    CountEstimate, DegenerateWeightsError, FitError, FringeFit, SaturationError, UnphysicalError, classify_frames,
    counts_from_frames, divergence_from_width, extract_beam_angles, fit_cross_section, fit_fringe_model,
    fringe_jacobian, fringe_model, noise_trials, normalized_signal_from_counts, poisson_counts,
    saturation_counts, tilt_from_period,
)

TAU = np.linspace(-200e-9, 200e-9, 81)
TRUTH = (0.2, 76.5e-9, 77.3e-9, 200e-9)
D, V = 78.8e-9, 600.0
SIGMA_PI = 4.7e-20  # m^2


def _fit_from(p, cov_dim=3):
    return FringeFit(*p, covariance=np.zeros((cov_dim, cov_dim)), residual_rms=0.0)


def test_noiseless_round_trip():
    fit = fit_fringe_model((TAU, fringe_model(TAU, *TRUTH)), tau_off=TRUTH[3])
    for got, want in zip((fit.V0, fit.sigma_w, fit.sigma_p), TRUTH):
        assert got == pytest.approx(want, rel=1e-6)
    assert not fit.free_phase and fit.names == ["V0", "sigma_w", "sigma_p"]


def test_coarse_grid_round_trip():
    tau = np.linspace(-200e-9, 200e-9, 21)
    fit = fit_fringe_model((tau, fringe_model(tau, *TRUTH)), tau_off=TRUTH[3])
    assert fit.sigma_p == pytest.approx(TRUTH[2], rel=1e-6)
    assert fit.sigma_w == pytest.approx(TRUTH[1], rel=1e-6)


@settings(max_examples=60, deadline=None)
@given(V0=st.floats(0.05, 0.5), sw=st.floats(20e-9, 500e-9), sp=st.floats(20e-9, 500e-9),
       k=st.lists(st.floats(-0.3, 0.3), min_size=3, max_size=3))
def test_identifiable_from_perturbed_start(V0, sw, sp, k):
    y = fringe_model(TAU, V0, sw, sp, 0.0)
    start = _fit_from((V0 * (1 + k[0]), sw * (1 + k[1]), sp * (1 + k[2]), 0.0))
    fit = fit_fringe_model((TAU, y), tau_off=0.0, initial=start)
    assert fit.V0 == pytest.approx(V0, rel=1e-6)
    assert fit.sigma_w == pytest.approx(sw, rel=1e-6)
    assert fit.sigma_p == pytest.approx(sp, rel=1e-6)


def test_free_phase_round_trip():
    fit = fit_fringe_model((TAU, fringe_model(TAU, 0.2, 76.5e-9, 77.3e-9, 13e-9)), free_phase=True)
    assert fit.tau_off == pytest.approx(13e-9, rel=1e-6)
    assert fit.names[-1] == "tau_off"
    assert "tau_off" in fit.to_json()


def test_zero_visibility():
    rng = np.random.default_rng(4)
    y = 0.002 * rng.standard_normal(TAU.size)
    fit = fit_fringe_model((TAU, y, np.full(TAU.size, 0.002)), tau_off=0.0)
    assert abs(fit.V0) < 3 * fit.errors["V0"]


def test_sign_flip_canonical():
    y = fringe_model(TAU, -0.2, 76.5e-9, 77.3e-9, 0.0)
    fit = fit_fringe_model((TAU, y), tau_off=0.0)
    assert fit.V0 == pytest.approx(0.2, rel=1e-6) and fit.phase_flipped
    assert fit.tau_off == pytest.approx(0.5 * 77.3e-9, rel=1e-6)
    assert np.allclose(fit(TAU), y, atol=1e-9)


def test_jacobian_matches_finite_differences():
    p = np.array(TRUTH)
    J = fringe_jacobian(TAU, *p)
    for i in range(4):
        h = 1e-7 * abs(p[i])
        up, dn = p.copy(), p.copy()
        up[i] += h
        dn[i] -= h
        num = (fringe_model(TAU, *up) - fringe_model(TAU, *dn)) / (2 * h)
        assert np.allclose(J[:, i], num, rtol=1e-5, atol=1e-6 * np.max(np.abs(num)))


def test_numeric_jacobian_mode_agrees():
    y = fringe_model(TAU, *TRUTH) + 1e-3 * np.sin(1e7 * TAU)
    a = fit_fringe_model((TAU, y), tau_off=TRUTH[3])
    b = fit_fringe_model((TAU, y), tau_off=TRUTH[3], jacobian="numeric")
    assert b.sigma_w == pytest.approx(a.sigma_w, rel=1e-6)
    assert np.allclose(np.sqrt(np.diag(a.covariance)), np.sqrt(np.diag(b.covariance)), rtol=1e-3)
    with pytest.raises(ValueError):
        fit_fringe_model((TAU, y), tau_off=0.0, jacobian="magic")


def test_fit_input_errors():
    y = fringe_model(TAU, *TRUTH)
    with pytest.raises(ValueError):
        fit_fringe_model((TAU[:5], y[:5]), tau_off=0.0)
    with pytest.raises(ValueError):
        fit_fringe_model((TAU, y))
    sigma = np.full(TAU.size, 0.01)
    sigma[3] = 0.0
    with pytest.raises(DegenerateWeightsError):
        fit_fringe_model((TAU, y, sigma), tau_off=0.0)
    with pytest.raises(DegenerateWeightsError):
        fit_fringe_model((TAU, y, np.full(TAU.size, np.nan)), tau_off=0.0)


def test_fit_error_has_diagnostics():
    y = fringe_model(TAU, *TRUTH)
    start = _fit_from((0.2, 76.5e-9, 77.3e-9, 0.0))
    import talbotlau.analysis as an
    with pytest.raises(FitError) as exc:
        an._levenberg_marquardt(lambda p: np.array([math.exp(p[0]), 1.0]), lambda p: np.array([[math.exp(p[0])], [0.0]]),
                                np.array([0.0]), max_iter=1, xtol=0.0)
    assert exc.value.diagnostics
    # the public fit succeeds from the same data
    assert fit_fringe_model((TAU, y), tau_off=TRUTH[3], initial=start).sigma_p == pytest.approx(77.3e-9, rel=1e-6)


def test_inversions_reference_values():
    assert divergence_from_width(76.5e-9, D, V) == pytest.approx(0.4e-3, rel=2e-3)
    assert tilt_from_period(77.3e-9, D, V) == pytest.approx(1.7e-3, rel=2e-3)
    assert divergence_from_width(76.5e-9, D, 2 * V) == pytest.approx(0.5 * divergence_from_width(76.5e-9, D, V), rel=1e-6)
    assert tilt_from_period(1e3, D, V) < 1e-12


def test_inversion_errors():
    with pytest.raises(UnphysicalError):
        divergence_from_width(1e-12, D, V)
    with pytest.raises(UnphysicalError):
        tilt_from_period(1e-12, D, V)
    with pytest.raises(ValueError):
        tilt_from_period(-1.0, D, V)


def test_extract_angles_with_errors():
    tau = np.linspace(-200e-9, 200e-9, 21)
    y = fringe_model(tau, *TRUTH)
    sigma = np.full(tau.size, 0.01)
    ang = extract_beam_angles(fit_fringe_model((tau, y, sigma), tau_off=TRUTH[3]), D, V)
    assert ang.divergence == pytest.approx(divergence_from_width(76.5e-9, D, V), rel=1e-6)
    assert ang.tilt == pytest.approx(tilt_from_period(77.3e-9, D, V), rel=1e-6)
    assert 0 < ang.tilt_error < ang.tilt and 0 < ang.divergence_error < ang.divergence


def test_noise_trials_coverage():
    tau = np.linspace(-200e-9, 200e-9, 21)
    clean = fringe_model(tau, *TRUTH)
    out = noise_trials(tau, clean, 0.05 * TRUTH[0], 200, 11, {"V0": TRUTH[0], "sigma_p": TRUTH[2]},
                       tau_off=TRUTH[3])
    assert out["failures"] == 0
    assert out["coverage"]["V0"] >= 0.95 and out["coverage"]["sigma_p"] >= 0.95
    again = noise_trials(tau, clean, 0.05 * TRUTH[0], 20, 11, {"V0": TRUTH[0]}, tau_off=TRUTH[3])
    assert again == noise_trials(tau, clean, 0.05 * TRUTH[0], 20, 11, {"V0": TRUTH[0]}, tau_off=TRUTH[3])


# -- cross section --------------------------------------------------------

def test_saturation_model():
    assert saturation_counts(1 / SIGMA_PI, SIGMA_PI, 1000) == pytest.approx(632.1, abs=0.05)
    assert saturation_counts(0.0, SIGMA_PI, 1000) == 0.0


def test_cross_section_round_trip():
    phi = np.linspace(0.1, 5, 12) / SIGMA_PI
    fit = fit_cross_section(phi, saturation_counts(phi, SIGMA_PI, 1000))
    assert fit.sigma_PI == pytest.approx(SIGMA_PI, rel=1e-6)
    assert fit.N0 == pytest.approx(1000, rel=1e-6)
    assert np.max(np.abs(fit.residuals)) < 1e-6


@settings(max_examples=25, deadline=None)
@given(s=st.floats(1e-21, 1e-18), n0=st.floats(10, 1e5))
def test_cross_section_unbiased(s, n0):
    phi = np.linspace(0.05, 4, 10) / s
    fit = fit_cross_section(phi, saturation_counts(phi, s, n0))
    assert fit.sigma_PI == pytest.approx(s, rel=1e-2)


def test_cross_section_errors_and_warnings():
    phi = np.array([1.0, 2.0, 3.0]) / SIGMA_PI * 0.01
    with pytest.warns(UserWarning, match="saturation"):
        fit_cross_section(phi, saturation_counts(phi, SIGMA_PI, 1000))
    with pytest.raises(ValueError):
        fit_cross_section(phi, [0, 0, 0])
    with pytest.raises(ValueError):
        fit_cross_section(phi[:2], [1, 2])


# -- counting -------------------------------------------------------------

def test_poisson_counts_examples():
    c = poisson_counts(500, 1000)
    assert c.lambda_P == pytest.approx(math.log(2)) and c.N == pytest.approx(693.1, abs=0.05)
    assert c.sigma_N == pytest.approx(1000 * math.sqrt(0.25 / 1000) / 0.5)
    assert poisson_counts(1000, 1000).N == 0.0
    with pytest.warns(UserWarning, match="near-saturated"):
        sat = poisson_counts(1, 1000)
    assert sat.near_saturated and sat.N > 6000 and sat.sigma_N > 900
    with pytest.raises(SaturationError):
        poisson_counts(0, 1000)
    with pytest.raises(ValueError):
        poisson_counts(5, 3)


def test_normalized_from_counts():
    off = CountEstimate(N=1000.0, sigma_N=30.0, lambda_P=1.0, N_frames=1000)
    s, sig = normalized_signal_from_counts(off, off)
    assert s == 0.0 and sig == pytest.approx(math.sqrt(2) * 0.03)
    res = CountEstimate(N=1200.0, sigma_N=1e-9, lambda_P=1.2, N_frames=1000)
    exact = CountEstimate(N=1000.0, sigma_N=1e-9, lambda_P=1.0, N_frames=1000)
    assert normalized_signal_from_counts(res, exact)[0] == pytest.approx(0.2)
    double = CountEstimate(N=1000.0, sigma_N=60.0, lambda_P=1.0, N_frames=1000)
    assert normalized_signal_from_counts(double, double)[1] == pytest.approx(2 * sig)
    with pytest.raises(ValueError):
        normalized_signal_from_counts(off, CountEstimate(N=0.0, sigma_N=0.0, lambda_P=0.0, N_frames=10))


def test_frame_classification():
    rng = np.random.default_rng(0)
    background = rng.normal(10.0, 1.0, 5000)
    frames = rng.normal(10.0, 1.0, (400, 16))
    frames[:100, 3] += 50.0  # one bright event in each of the first 100 frames
    zero = classify_frames(frames, background, multiplier=5)
    assert zero == 300
    est = counts_from_frames(frames, background, multiplier=5)
    assert est.N == pytest.approx(400 * math.log(4 / 3))
    with pytest.raises(ValueError):
        classify_frames(frames, [1.0])
