"""Fits and count statistics for measured or simulated interferograms.

The fringe model is a sinusoid under a Gaussian envelope,

    S_N(tau) = V0 exp(-tau^2 / (2 sigma_w^2)) cos(2 pi (tau - tau_off) / sigma_p),

with the divergence and tilt following from sigma_w and sigma_p. The
photo-depletion cross section comes from the single-photon saturation
curve N0 (1 - exp(-sigma phi)). Counts are estimated from the fraction of
empty detector frames.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .interferometer import SQRT_2LN10, SignalCurve

V0_BOUND = 1.5
MAX_ITER = 200
XTOL = 1e-9


class FitError(RuntimeError):
    """Fit failed to converge; ``diagnostics`` holds the last iterate."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class DegenerateWeightsError(ValueError):
    pass


class UnphysicalError(ValueError):
    pass


class SaturationError(ValueError):
    pass


# --------------------------------------------------------------------------
# Damped Gauss-Newton
# --------------------------------------------------------------------------

@dataclass
class _Solution:
    params: np.ndarray
    jac: np.ndarray
    resid: np.ndarray
    iterations: int


def _levenberg_marquardt(resid_fn, jac_fn, p0, project=None, scale=None, max_iter=MAX_ITER, xtol=XTOL):
    """Minimise |r(p)|^2 with Levenberg-damped Gauss-Newton steps.

    ``project`` maps a trial point back into the feasible region (or
    returns None to reject it). Converged when every parameter moves by
    less than ``xtol`` relative to max(|p|, scale).
    """
    p = np.asarray(p0, dtype=float).copy()
    scale = np.full(p.size, 1e-300) if scale is None else np.asarray(scale, dtype=float)
    r = resid_fn(p)
    cost = float(r @ r)
    lam = 1e-3
    for it in range(1, max_iter + 1):
        J = jac_fn(p)
        A = J.T @ J
        g = J.T @ r
        diag = np.diag(A).copy()
        diag[diag == 0] = 1.0
        accepted = False
        for _ in range(60):
            try:
                step = np.linalg.solve(A + lam * np.diag(diag), -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            trial = p + step
            if project is not None:
                trial = project(trial)
            if trial is None or not np.all(np.isfinite(trial)):
                lam *= 10.0
                continue
            r_new = resid_fn(trial)
            cost_new = float(r_new @ r_new)
            if np.isfinite(cost_new) and cost_new <= cost:
                accepted = True
                break
            lam *= 10.0
        if not accepted:
            # no downhill step at any damping: already at a minimum
            return _Solution(p, J, r, it)
        moved = np.abs(trial - p) / np.maximum(np.abs(p), scale)
        p, r, cost = trial, r_new, cost_new
        lam = max(lam / 10.0, 1e-12)
        if np.all(moved < xtol):
            return _Solution(p, jac_fn(p), r, it)
    raise FitError(f"no convergence after {max_iter} iterations",
                   {"params": p.tolist(), "cost": cost, "damping": lam})


def _covariance(jac: np.ndarray, resid: np.ndarray, absolute_sigma: bool) -> np.ndarray:
    # equilibrate columns first: V0 and the widths differ by ~1e7 in scale
    norm = np.linalg.norm(jac, axis=0)
    norm[norm == 0] = 1.0
    js = jac / norm
    cov = np.linalg.pinv(js.T @ js) / np.outer(norm, norm)
    if not absolute_sigma:
        dof = max(resid.size - jac.shape[1], 1)
        cov = cov * float(resid @ resid) / dof
    return cov


def _finite_difference(fn, p, rel=1e-6):
    p = np.asarray(p, dtype=float)
    cols = []
    for i in range(p.size):
        h = rel * max(abs(p[i]), 1e-12)
        up, dn = p.copy(), p.copy()
        up[i] += h
        dn[i] -= h
        cols.append((fn(up) - fn(dn)) / (2.0 * h))
    return np.stack(cols, axis=-1)


# --------------------------------------------------------------------------
# Fringe model
# --------------------------------------------------------------------------

def fringe_model(tau, V0: float, sigma_w: float, sigma_p: float, tau_off: float):
    tau = np.asarray(tau, dtype=float)
    return V0 * np.exp(-0.5 * (tau / sigma_w) ** 2) * np.cos(2.0 * np.pi * (tau - tau_off) / sigma_p)


def fringe_jacobian(tau, V0: float, sigma_w: float, sigma_p: float, tau_off: float) -> np.ndarray:
    """Columns d/dV0, d/dsigma_w, d/dsigma_p, d/dtau_off."""
    tau = np.asarray(tau, dtype=float)
    env = np.exp(-0.5 * (tau / sigma_w) ** 2)
    arg = 2.0 * np.pi * (tau - tau_off) / sigma_p
    c, s = np.cos(arg), np.sin(arg)
    return np.stack([
        env * c,
        V0 * env * c * tau**2 / sigma_w**3,
        V0 * env * s * arg / sigma_p,
        V0 * env * s * 2.0 * np.pi / sigma_p,
    ], axis=-1)


@dataclass
class FringeFit:
    V0: float
    sigma_w: float
    sigma_p: float
    tau_off: float
    covariance: np.ndarray
    residual_rms: float
    free_phase: bool = False
    iterations: int = 0
    phase_flipped: bool = False
    residuals: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        if not (self.sigma_w > 0 and self.sigma_p > 0):
            raise ValueError("sigma_w and sigma_p must be > 0")

    @property
    def names(self) -> list[str]:
        return ["V0", "sigma_w", "sigma_p", "tau_off"][: self.covariance.shape[0]]

    @property
    def errors(self) -> dict:
        return dict(zip(self.names, np.sqrt(np.maximum(np.diag(self.covariance), 0.0)).tolist()))

    def __call__(self, tau):
        return fringe_model(tau, self.V0, self.sigma_w, self.sigma_p, self.tau_off)

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in ("V0", "sigma_w", "sigma_p", "tau_off", "residual_rms",
                                              "free_phase", "iterations", "phase_flipped")}
        out["uncertainties"] = self.errors
        out["covariance"] = np.asarray(self.covariance).tolist()
        out["parameters"] = self.names
        out["residuals"] = np.asarray(self.residuals).tolist()
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _weights(sigma, n: int) -> tuple[np.ndarray, bool]:
    """1/sigma weights; all-zero sigma (noiseless simulation) means unit weights."""
    if sigma is None:
        return np.ones(n), False
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), (n,))
    if not np.all(np.isfinite(sigma)) or np.any(sigma < 0):
        raise DegenerateWeightsError("sigma must be finite and non-negative")
    if np.all(sigma == 0):
        return np.ones(n), False
    if np.any(sigma == 0):
        raise DegenerateWeightsError("some but not all data points have zero uncertainty")
    return 1.0 / sigma, True


def _initial_guesses(tau, y, w=None, n_candidates: int = 3):
    """Start points (V0, sigma_w, sigma_p, tau_off).

    sigma_p comes from the strongest peaks of the periodogram of the
    detrended curve and sigma_w from the second moment of |y|. For each
    candidate period the curve is linear in (a cos + b sin) under the
    envelope, so amplitude and phase follow from a weighted linear fit.
    """
    w = np.ones_like(y) if w is None else w
    span = tau.max() - tau.min()
    dt = np.min(np.diff(np.sort(tau))) if tau.size > 1 else span
    yd = y - np.mean(y)
    # periodogram on a fine frequency grid (also valid for uneven sampling)
    freqs = np.linspace(0.5 / span, 0.5 / dt, 4096)
    power = np.abs(np.exp(-2j * np.pi * np.outer(freqs, tau)) @ yd)
    peaks = [i for i in range(1, freqs.size - 1) if power[i] >= power[i - 1] and power[i] >= power[i + 1]]
    if not peaks:
        peaks = [int(np.argmax(power))]
    peaks = sorted(peaks, key=lambda i: -power[i])[:n_candidates]
    weight = np.abs(y)
    second = float(np.sum(weight * tau**2) / np.sum(weight)) if weight.sum() > 0 else span**2
    sigma_w = max(math.sqrt(second), 2.0 * dt)
    env = np.exp(-0.5 * (tau / sigma_w) ** 2)
    out = []
    for i in peaks:
        k = 2.0 * np.pi * freqs[i]
        basis = w[:, None] * np.stack([env * np.cos(k * tau), env * np.sin(k * tau)], axis=-1)
        (a, b), *_ = np.linalg.lstsq(basis, w * y, rcond=None)
        out.append((float(np.hypot(a, b)), sigma_w, 1.0 / freqs[i], float(np.arctan2(b, a) / k)))
    return out


def fit_fringe_model(curve, tau_off: float | None = None, initial: FringeFit | None = None,
                     free_phase: bool = False, jacobian: str = "analytic") -> FringeFit:
    """Weighted least-squares fit of the fringe model to a curve.

    ``curve`` is a SignalCurve or a (tau, S_N[, sigma]) tuple. With
    ``free_phase`` the phase reference tau_off is fitted as well (not part
    of the standard model, useful for simulated curves with an unknown
    fringe offset); otherwise ``tau_off`` is held at the given value.
    ``jacobian="numeric"`` swaps in central finite differences. The fringe
    period is kept above twice the sample spacing (the Nyquist limit).
    """
    if isinstance(curve, SignalCurve):
        tau, y, sigma = curve.tau, curve.s_n, curve.sigma
        if tau_off is None:
            tau_off = float(curve.meta.get("tau_off", np.nan))
    else:
        tau, y, *rest = curve
        sigma = rest[0] if rest else None
    tau = np.asarray(tau, dtype=float)
    y = np.asarray(y, dtype=float)
    if tau.size < 8:
        raise ValueError("need at least 8 data points")
    if tau_off is None or not math.isfinite(tau_off):
        if not free_phase:
            raise ValueError("fixed-phase fit needs tau_off")
        tau_off = 0.0
    w, absolute = _weights(sigma, tau.size)
    n_par = 4 if free_phase else 3

    def full(p):
        return (p[0], p[1], p[2], p[3] if free_phase else tau_off)

    def resid(p):
        return w * (fringe_model(tau, *full(p)) - y)

    if jacobian == "analytic":
        def jac(p):
            return w[:, None] * fringe_jacobian(tau, *full(p))[:, :n_par]
    elif jacobian == "numeric":
        def jac(p):
            return _finite_difference(resid, p)
    else:
        raise ValueError("jacobian must be 'analytic' or 'numeric'")

    # periods below twice the sample spacing alias onto longer ones; an
    # envelope far wider than the scan is unidentifiable
    min_period = 2.0 * float(np.min(np.diff(np.sort(tau))))
    max_width = 1e3 * float(np.ptp(tau))

    def project(p):
        if not 0 < p[1] <= max_width or p[2] < min_period:
            return None
        p = p.copy()
        p[0] = min(max(p[0], -V0_BOUND), V0_BOUND)
        return p

    # a supplied start is tried first, the automatic ones guard against it
    # sitting in a neighbouring period minimum
    starts = _initial_guesses(tau, y, w)
    if initial is not None:
        starts.insert(0, (initial.V0, initial.sigma_w, initial.sigma_p, initial.tau_off))
    span = float(np.ptp(tau))
    scale = np.array([1e-12, span, span, span])[:n_par]
    best = None
    last_error = None
    for start in starts:
        p0 = np.array(start[:n_par], dtype=float)
        if not free_phase:
            # V0 enters linearly: start from its least-squares value
            g = w * fringe_model(tau, 1.0, p0[1], p0[2], tau_off)
            p0[0] = float(np.clip((g @ (w * y)) / max(g @ g, 1e-300), -V0_BOUND, V0_BOUND))
        try:
            sol = _levenberg_marquardt(resid, jac, p0, project=project, scale=scale)
        except FitError as exc:
            last_error = exc
            continue
        if best is None or sol.resid @ sol.resid < best.resid @ best.resid:
            best = sol
    if best is None:
        raise last_error or FitError("all starting points failed")

    p = best.params.copy()
    flipped = False
    if p[0] < 0:
        # -V0 cos(x) = V0 cos(x - pi): move the phase reference by half a period
        flipped = True
        p[0] = -p[0]
        if free_phase:
            p[3] += 0.5 * p[2]
        else:
            tau_off = tau_off + 0.5 * p[2]
    if free_phase:
        # report tau_off within half a period of the origin
        p[3] = (p[3] + 0.5 * p[2]) % p[2] - 0.5 * p[2]
    J = jac(p)
    r = resid(p)
    cov = _covariance(J, r, absolute)
    V0, sw, sp, to = full(p)
    raw = fringe_model(tau, V0, sw, sp, to) - y
    return FringeFit(V0=float(V0), sigma_w=float(sw), sigma_p=float(sp), tau_off=float(to), covariance=cov,
                     residual_rms=float(np.sqrt(np.mean(raw**2))), free_phase=free_phase,
                     iterations=best.iterations, phase_flipped=flipped, residuals=raw)


# --------------------------------------------------------------------------
# Beam angles from fit widths
# --------------------------------------------------------------------------

def _check_positive(**kw):
    for k, v in kw.items():
        if not v > 0:
            raise ValueError(f"{k} must be > 0")


def divergence_from_width(sigma_w: float, d: float, v: float) -> float:
    """alpha = arcsin(d / (2 v sigma_w sqrt(2 ln 10)))."""
    _check_positive(sigma_w=sigma_w, d=d, v=v)
    arg = d / (2.0 * v * sigma_w * SQRT_2LN10)
    if arg > 1:
        raise UnphysicalError(f"dip width {sigma_w:.3g} s is too narrow (arcsin argument {arg:.3g})")
    return math.asin(arg)


def tilt_from_period(sigma_p: float, d: float, v: float) -> float:
    """gamma = arcsin(d / (v sigma_p))."""
    _check_positive(sigma_p=sigma_p, d=d, v=v)
    arg = d / (v * sigma_p)
    if arg > 1:
        raise UnphysicalError(f"fringe period {sigma_p:.3g} s is too short (arcsin argument {arg:.3g})")
    return math.asin(arg)


def angle_uncertainty(fn, value: float, error: float, d: float, v: float) -> float:
    """Linear error propagation through divergence_from_width / tilt_from_period."""
    h = 1e-6 * value
    return abs(fn(value + h, d, v) - fn(value - h, d, v)) / (2.0 * h) * error


@dataclass
class BeamAngles:
    divergence: float
    tilt: float
    divergence_error: float
    tilt_error: float
    fit: FringeFit


def extract_beam_angles(fit: FringeFit, d: float, v: float) -> BeamAngles:
    err = fit.errors
    return BeamAngles(
        divergence=divergence_from_width(fit.sigma_w, d, v),
        tilt=tilt_from_period(fit.sigma_p, d, v),
        divergence_error=angle_uncertainty(divergence_from_width, fit.sigma_w, err["sigma_w"], d, v),
        tilt_error=angle_uncertainty(tilt_from_period, fit.sigma_p, err["sigma_p"], d, v),
        fit=fit,
    )


def noise_trials(tau, clean, noise: float, n_trials: int, seed: int, truth: dict,
                 tau_off: float | None = None, free_phase: bool = False,
                 d: float | None = None, v: float | None = None) -> dict:
    """Refit Gaussian-noise realisations of a clean curve.

    ``truth`` maps parameter names (V0, sigma_w, sigma_p, and with d and v
    also divergence, tilt) to their true values. Returns, per parameter,
    the fraction of trials landing within 3 fitted standard errors.
    """
    from .oracle import portable_streams

    tau = np.asarray(tau, dtype=float)
    clean = np.asarray(clean, dtype=float)
    hits = dict.fromkeys(truth, 0)
    failures = 0
    sigma = np.full(tau.size, noise)
    for rng in portable_streams(seed, n_trials):
        y = clean + noise * rng.standard_normal(tau.size)
        try:
            fit = fit_fringe_model((tau, y, sigma), tau_off=tau_off, free_phase=free_phase)
        except (FitError, ValueError):
            failures += 1
            continue
        got = {"V0": fit.V0, "sigma_w": fit.sigma_w, "sigma_p": fit.sigma_p, "tau_off": fit.tau_off}
        err = dict(fit.errors)
        if d is not None:
            ang = extract_beam_angles(fit, d, v)
            got.update(divergence=ang.divergence, tilt=ang.tilt)
            err.update(divergence=ang.divergence_error, tilt=ang.tilt_error)
        for k, want in truth.items():
            if abs(got[k] - want) <= 3.0 * err[k]:
                hits[k] += 1
    return {"coverage": {k: hits[k] / n_trials for k in truth}, "failures": failures, "trials": n_trials}


# --------------------------------------------------------------------------
# Cross-section saturation fit
# --------------------------------------------------------------------------

def saturation_counts(fluence, sigma_pi: float, n0: float):
    """N_I = N0 (1 - exp(-sigma_PI phi)) for fluence phi in photons per m^2."""
    return n0 * -np.expm1(-sigma_pi * np.asarray(fluence, dtype=float))


@dataclass
class CrossSectionFit:
    sigma_PI: float
    N0: float
    sigma_PI_error: float
    N0_error: float
    covariance: np.ndarray
    residuals: np.ndarray

    def __post_init__(self):
        if not (self.sigma_PI > 0 and self.N0 > 0):
            raise ValueError("sigma_PI and N0 must be > 0")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["covariance"] = np.asarray(self.covariance).tolist()
        out["residuals"] = np.asarray(self.residuals).tolist()
        return out


def fit_cross_section(fluence, counts, sigma=None) -> CrossSectionFit:
    """Least-squares fit of the single-photon saturation curve.

    The cross section is fitted on a log scale internally, which keeps it
    positive and well conditioned.
    """
    phi = np.asarray(fluence, dtype=float)
    n = np.asarray(counts, dtype=float)
    if phi.size < 3:
        raise ValueError("need at least 3 fluence points")
    if np.all(n == 0):
        raise ValueError("all counts are zero")
    if np.any(phi < 0):
        raise ValueError("fluence must be non-negative")
    w, absolute = _weights(sigma, phi.size)
    order = np.argsort(phi)
    phi_s, n_s = phi[order], n[order]
    n0_guess = 1.05 * float(n.max())
    # invert the model on the points below saturation for a starting cross section
    frac = np.clip(n_s / n0_guess, 1e-9, 0.95)
    ok = phi_s > 0
    s_guess = float(np.median(-np.log1p(-frac[ok]) / phi_s[ok]))
    ref = 1.0 / s_guess

    def unpack(p):
        return math.exp(p[0]) / ref, p[1]

    def resid(p):
        s, n0 = unpack(p)
        return w * (saturation_counts(phi, s, n0) - n)

    def jac(p):
        s, n0 = unpack(p)
        e = np.exp(-s * phi)
        return w[:, None] * np.stack([n0 * phi * e * s, -np.expm1(-s * phi)], axis=-1)

    def project(p):
        return p if p[1] > 0 else None

    sol = _levenberg_marquardt(resid, jac, np.array([0.0, n0_guess]), project=project,
                               scale=np.array([1e-3, 1.0]))
    s, n0 = unpack(sol.params)
    if s * phi.max() < 1.0:
        warnings.warn("no data point reaches saturation (sigma*phi < 1); N0 is poorly constrained", stacklevel=2)
    J = jac(sol.params)
    cov_log = _covariance(J, sol.resid, absolute)
    # back to (sigma_PI, N0)
    T = np.diag([s, 1.0])
    cov = T @ cov_log @ T
    return CrossSectionFit(sigma_PI=s, N0=float(n0), sigma_PI_error=float(math.sqrt(max(cov[0, 0], 0))),
                           N0_error=float(math.sqrt(max(cov[1, 1], 0))), covariance=cov,
                           residuals=saturation_counts(phi, s, n0) - n)


# --------------------------------------------------------------------------
# Counting statistics
# --------------------------------------------------------------------------

NEAR_SATURATION = 0.01


@dataclass(frozen=True)
class CountEstimate:
    N: float
    sigma_N: float
    lambda_P: float
    N_frames: int
    near_saturated: bool = False

    def __post_init__(self):
        if self.N < 0 or self.lambda_P < 0:
            raise ValueError("counts must be non-negative")


def poisson_counts(n_zero_frames: int, n_frames: int) -> CountEstimate:
    """Molecule number from the fraction of frames without an event.

    Each frame holds a Poisson number of events, so P_zero = exp(-lambda)
    and N = n_frames * lambda. The binomial error of P_zero propagates to
    sigma_N = n_frames * sigma_P / P_zero.
    """
    n_zero_frames, n_frames = int(n_zero_frames), int(n_frames)
    if n_frames <= 0 or n_zero_frames > n_frames or n_zero_frames < 0:
        raise ValueError("need 0 < n_zero_frames <= n_frames")
    if n_zero_frames == 0:
        raise SaturationError("every frame has an event; the zero-frame estimator is undefined")
    p0 = n_zero_frames / n_frames
    lam = -math.log(p0)
    sigma_p = math.sqrt(p0 * (1.0 - p0) / n_frames)
    near = p0 < NEAR_SATURATION
    if near:
        warnings.warn(f"near-saturated count estimate (P_zero = {p0:.3g})", stacklevel=2)
    return CountEstimate(N=n_frames * lam + 0.0, sigma_N=n_frames * sigma_p / p0, lambda_P=lam,
                         N_frames=n_frames, near_saturated=near)


def normalized_signal_from_counts(res: CountEstimate, off: CountEstimate) -> tuple[float, float]:
    """S_N = (N_res - N_off) / N_off with independent Gaussian errors."""
    if not off.N > 0:
        raise ValueError("off-resonant count must be > 0")
    s = (res.N - off.N) / off.N
    sigma = math.hypot(res.sigma_N / off.N, res.N * off.sigma_N / off.N**2)
    return s, sigma


def classify_frames(frames, background, multiplier: float = 3.0) -> int:
    """Number of frames without a detected event.

    A frame counts as a hit when its peak signal exceeds the background
    mean by ``multiplier`` background standard deviations; each hit is
    treated as a single molecule.
    """
    frames = np.asarray(frames, dtype=float)
    bg = np.asarray(background, dtype=float).ravel()
    if bg.size < 2:
        raise ValueError("need at least two background samples")
    threshold = bg.mean() + multiplier * bg.std(ddof=1)
    peak = frames.max(axis=tuple(range(1, frames.ndim))) if frames.ndim > 1 else frames
    return int(np.sum(peak <= threshold))


def counts_from_frames(frames, background, multiplier: float = 3.0) -> CountEstimate:
    frames = np.asarray(frames, dtype=float)
    return poisson_counts(classify_frames(frames, background, multiplier), frames.shape[0])
