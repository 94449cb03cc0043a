"""Brute-force validators for the analytic signal.

``quantum_wave_scan`` propagates matter waves through the three pulsed
gratings on a grid; ``classical_mc_scan`` tracks ballistic particles
with depletion and dipole kicks. Neither uses Talbot coefficients.

Wave oracle
-----------
The incoherent source is a mixture of plane waves with transverse
momentum p. On a periodic domain of ``periods`` grating periods the
allowed momenta are p = u h/d with u on a grid of spacing 1/periods, and
every such plane wave stays a Bloch wave exp(2 pi i u x/d) phi(x) with
d-periodic phi under the gratings and free flight. Each momentum
component is therefore carried on a single period of
``points_per_period`` samples; free flight over a time t multiplies the
Fourier component k by exp(-i pi ((u+k)^2 - u^2) t / T_T) exactly.
Gravity is handled in the freely falling frame, where grating k fired at
time t_k appears displaced by -g t_k^2 / 2. The beam tilt and the speed
spread enter through the momentum weights.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .grating import coherent_transmission, grating_strength
from .interferometer import MomentumEnvelope, SignalCurve, speed_nodes
from .scenario import H, HBAR, Scenario


class ResolutionError(RuntimeError):
    """Grid refinement changed the oracle result beyond tolerance."""


@dataclass(frozen=True)
class GridSpec:
    periods: int = 32
    points_per_period: int = 64
    padding_factor: int = 1
    momentum_range: float = 7.0  # half-width of the momentum window in units of the spread

    def __post_init__(self):
        if self.points_per_period < 64:
            raise ValueError("points_per_period must be >= 64")
        if self.periods < 32:
            raise ValueError("periods must be >= 32")
        if self.padding_factor < 1:
            raise ValueError("padding_factor must be >= 1")

    def refined(self) -> "GridSpec":
        return GridSpec(self.periods, 2 * self.points_per_period, self.padding_factor, self.momentum_range)


@dataclass(frozen=True)
class McSpec:
    n_particles: int = 1_000_000
    seed: int = 20190101
    batch_size: int = 1 << 17

    def __post_init__(self):
        if self.n_particles < 1:
            raise ValueError("n_particles must be positive")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


# --------------------------------------------------------------------------
# Fourier coefficient by quadrature
# --------------------------------------------------------------------------

def fourier_coefficient(order: int, chi: float, n0_eff: float, phi0_eff: float, model: str = "quantum",
                        points: int = 2048) -> float:
    """Talbot coefficient by direct quadrature of the transmission product.

    quantum:   (1/d) int t(x - chi d/2) t*(x + chi d/2) e^{-2 pi i n x/d} dx
    classical: (1/d) int |t(x)|^2 exp(i pi chi phi0 sin(2 pi x/d)) e^{-2 pi i n x/d} dx

    The trapezoid rule on a full period is spectrally accurate here.
    """
    x = np.arange(points) / points
    if model == "quantum":
        prod = coherent_transmission(x - 0.5 * chi, n0_eff, phi0_eff, 1.0) * np.conj(
            coherent_transmission(x + 0.5 * chi, n0_eff, phi0_eff, 1.0))
    elif model == "classical":
        prod = np.exp(-n0_eff * np.cos(np.pi * x) ** 2 + 1j * np.pi * chi * phi0_eff * np.sin(2 * np.pi * x))
    else:
        raise ValueError(f"unknown model {model!r}")
    return float(np.mean(prod * np.exp(-2j * np.pi * order * x)).real)


# --------------------------------------------------------------------------
# Wave oracle
# --------------------------------------------------------------------------

def _momentum_grid(scen: Scenario, grid: GridSpec):
    """Momentum grid (units of h/d) and normalised mixture weights."""
    d = scen.period
    unit = H / d
    m = scen.molecule.mass
    speeds, sw = speed_nodes(scen.beam)
    centres = m * speeds * math.tan(scen.beam.tilt) / unit
    spreads = np.array([MomentumEnvelope(scen.beam.divergence, v, m).momentum_std / unit for v in speeds])
    delta = 1.0 / grid.periods
    if spreads.max() == 0:
        u = np.unique(centres)
        return u, np.array([sw[centres == c].sum() for c in u])
    lo = math.floor((centres.min() - grid.momentum_range * spreads.max()) / delta)
    hi = math.ceil((centres.max() + grid.momentum_range * spreads.max()) / delta)
    u = np.arange(lo, hi + 1) * delta
    w = np.zeros_like(u)
    for c, s, wt in zip(centres, spreads, sw):
        w += wt * np.exp(-0.5 * ((u - c) / s) ** 2) / s
    return u, w / w.sum()


def _free_flight(phi_hat: np.ndarray, u: np.ndarray, k: np.ndarray, t_over_tt: float) -> np.ndarray:
    # (u+k)^2 - u^2 = 2uk + k^2; the u^2 part is a global phase
    phase = np.pi * t_over_tt * (2.0 * np.outer(u, k) + k**2)
    return phi_hat * np.exp(-1j * phase)


def _wave_signals(scen: Scenario, taus: np.ndarray, grid: GridSpec, chunk: int = 4096) -> np.ndarray:
    d = scen.period
    n = grid.points_per_period * grid.padding_factor
    x = np.arange(n) / n  # units of d
    k = np.fft.fftfreq(n, 1.0 / n)
    t_t = scen.talbot_time
    T = scen.timing.pulse_separation
    g = scen.beam.gravity
    strengths = [grating_strength(gr, scen.molecule) for gr in scen.gratings]
    if scen.model != "quantum":
        raise ValueError("the wave oracle simulates the quantum model")

    def mask_position(k_idx: int, t: float) -> float:
        # grating displacement in the freely falling frame, units of d
        return (scen.gratings[k_idx].shift - 0.5 * g * t**2) / d

    s1, s2, s3 = strengths
    t1 = coherent_transmission(x - mask_position(0, 0.0), s1.n0_eff, s1.phi0_eff, 1.0)
    t2 = coherent_transmission(x - mask_position(1, T), s2.n0_eff, s2.phi0_eff, 1.0)
    masks = np.array([
        np.exp(-s3.n0_eff * np.cos(np.pi * (x - mask_position(2, 2 * T + tau))) ** 2) for tau in taus
    ])

    u_all, w_all = _momentum_grid(scen, grid)
    out = np.zeros(len(taus))
    partial = []
    for start in range(0, u_all.size, chunk):
        u = u_all[start:start + chunk]
        w = w_all[start:start + chunk]
        psi = np.broadcast_to(t1, (u.size, n))
        psi = np.fft.ifft(_free_flight(np.fft.fft(psi, axis=1), u, k, T / t_t), axis=1) * t2
        psi_hat = np.fft.fft(psi, axis=1)
        sums = []
        for j, tau in enumerate(taus):
            phi = np.fft.ifft(_free_flight(psi_hat, u, k, (T + tau) / t_t), axis=1)
            density = np.abs(phi) ** 2
            sums.append(w @ (density @ masks[j]) / n)
        partial.append(sums)
    # fixed-order reduction over chunks
    partial = np.array(partial)
    for j in range(len(taus)):
        out[j] = math.fsum(partial[:, j])
    return out


def quantum_wave_oracle(scen: Scenario, tau: float, grid: GridSpec | None = None) -> float:
    """Transmitted fraction at delay tau from grid wave propagation."""
    return float(_wave_signals(scen.with_model("quantum"), np.array([tau]), grid or GridSpec())[0])


def quantum_wave_scan(scen: Scenario, taus=None, grid: GridSpec | None = None, check: bool = True,
                      tolerance: float = 1e-3) -> SignalCurve:
    """Oracle resonance scan; with ``check`` the grid is refined once and compared."""
    grid = grid or GridSpec()
    scen = scen.with_model("quantum")
    taus = scen.timing.tau_grid() if taus is None else np.asarray(taus, dtype=float)
    all_taus = np.append(taus, scen.timing.tau_off)
    vals = _wave_signals(scen, all_taus, grid)
    meta = {"oracle": "wave", "grid": grid.__dict__}
    if check:
        fine = _wave_signals(scen, all_taus, grid.refined())
        change = float(np.max(np.abs(fine - vals)) / np.max(np.abs(vals)))
        meta["refinement_change"] = change
        if change > tolerance:
            raise ResolutionError(f"doubling points_per_period changed the signal by {change:.2e}")
    s_off = vals[-1]
    s_res = vals[:-1]
    return SignalCurve(taus, s_res, s_off, (s_res - s_off) / s_off, np.zeros_like(taus), meta=meta)


# --------------------------------------------------------------------------
# Classical Monte Carlo
# --------------------------------------------------------------------------

def portable_streams(seed: int, count: int) -> list[np.random.Generator]:
    """Independent Philox4x32-10 generators, one per batch or trial.

    Philox is counter based, so the streams do not depend on platform or
    on how batches are distributed over workers.
    """
    return [np.random.Generator(np.random.Philox(ss)) for ss in np.random.SeedSequence(seed).spawn(count)]


def _mc_batches(scen: Scenario, taus: np.ndarray, mc: McSpec, extra_shifts=None):
    """Yield per-batch weight arrays, one row per probe; deterministic stream per batch.

    Probe k masks at delay taus[k] with the third grating moved by
    extra_shifts[k] (default 0).
    """
    extra = np.zeros(len(taus)) if extra_shifts is None else np.asarray(extra_shifts, dtype=float)
    d = scen.period
    m = scen.molecule.mass
    T = scen.timing.pulse_separation
    g = scen.beam.gravity
    beam = scen.beam
    strengths = [grating_strength(gr, scen.molecule) for gr in scen.gratings]
    shifts = [gr.shift for gr in scen.gratings]
    n_batches = -(-mc.n_particles // mc.batch_size)
    streams = portable_streams(mc.seed, n_batches)

    def grating(x, p, idx):
        s = strengths[idx]
        arg = np.pi * (x - shifts[idx]) / d
        w = np.exp(-s.n0_eff * np.cos(arg) ** 2)
        # p += hbar dphi/dx for phi(x) = phi0 cos^2(pi x / d)
        p = p - HBAR * s.phi0_eff * (np.pi / d) * np.sin(2.0 * arg)
        return w, p

    for b in range(n_batches):
        size = min(mc.batch_size, mc.n_particles - b * mc.batch_size)
        rng = streams[b]
        x = rng.uniform(0.0, d, size)
        v = beam.speed * (1.0 + beam.relative_speed_spread * rng.standard_normal(size))
        # momentum spread scales linearly with speed
        sigma_p = MomentumEnvelope(beam.divergence, 1.0, m).momentum_std * v
        p = m * v * math.tan(beam.tilt) + sigma_p * rng.standard_normal(size)
        w1, p = grating(x, p, 0)
        x = x + p * T / m + 0.5 * g * T**2
        p = p + m * g * T
        w2, p = grating(x, p, 1)
        w12 = w1 * w2
        rows = []
        s3 = strengths[2]
        for tau, dx in zip(taus, extra):
            t2 = T + tau
            x3 = x + p * t2 / m + 0.5 * g * t2**2
            rows.append(w12 * np.exp(-s3.n0_eff * np.cos(np.pi * (x3 - shifts[2] - dx) / d) ** 2))
        yield np.array(rows)


def classical_mc_scan(scen: Scenario, taus=None, mc: McSpec | None = None) -> SignalCurve:
    """Monte-Carlo resonance scan of the classical model with delta-method errors.

    Every particle is kept with a survival weight equal to its depletion
    probability at each grating, which has the same mean as sampling
    survival but lower variance. S_res and S_off use the same particles,
    so their covariance enters the error of S_N.
    """
    mc = mc or McSpec()
    taus = scen.timing.tau_grid() if taus is None else np.asarray(taus, dtype=float)
    all_taus = np.append(taus, scen.timing.tau_off)
    first, second, cross = [], [], []
    for rows in _mc_batches(scen, all_taus, mc):
        first.append(rows.sum(axis=1))
        second.append((rows**2).sum(axis=1))
        cross.append(rows @ rows[-1])
    n = mc.n_particles

    def reduce(parts):
        # fixed-order compensated reduction over batches
        return np.array([math.fsum(col) for col in np.array(parts).T]) / n

    s, sq, sx = reduce(first), reduce(second), reduce(cross)
    mean_res, mean_off = s[:-1], s[-1]
    var_res = (sq[:-1] - mean_res**2) / n
    var_off = (sq[-1] - mean_off**2) / n
    cov = (sx[:-1] - mean_res * mean_off) / n
    s_n = mean_res / mean_off - 1.0
    var_sn = var_res / mean_off**2 + mean_res**2 * var_off / mean_off**4 - 2.0 * mean_res * cov / mean_off**3
    return SignalCurve(
        taus, mean_res, mean_off, s_n, np.sqrt(np.maximum(var_sn, 0.0)),
        meta={"oracle": "classical-mc", "n_particles": n, "seed": mc.seed, "generator": "Philox4x32-10",
              "sigma_S_res": np.sqrt(var_res).tolist()},
    )


def classical_mc_profile(scen: Scenario, dx, tau: float = 0.0, mc: McSpec | None = None):
    """Surviving fraction and standard error versus an extra shift of the third grating."""
    mc = mc or McSpec()
    dx = np.asarray(dx, dtype=float)
    first, second = [], []
    for rows in _mc_batches(scen, np.full(dx.size, tau), mc, extra_shifts=dx):
        first.append(rows.sum(axis=1))
        second.append((rows**2).sum(axis=1))
    n = mc.n_particles
    mean = np.array([math.fsum(col) for col in np.array(first).T]) / n
    sq = np.array([math.fsum(col) for col in np.array(second).T]) / n
    return mean, np.sqrt(np.maximum(sq - mean**2, 0.0) / n)


def classical_mc_oracle(scen: Scenario, tau: float, mc: McSpec | None = None) -> tuple[float, float]:
    """Surviving fraction at delay tau and its standard error."""
    mc = mc or McSpec()
    rows = np.concatenate([r[0] for r in _mc_batches(scen, np.array([tau]), mc)])
    mean = math.fsum(rows) / rows.size
    return mean, float(rows.std(ddof=1) / math.sqrt(rows.size))


# --------------------------------------------------------------------------
# Comparison
# --------------------------------------------------------------------------

class GridMismatchError(ValueError):
    pass


@dataclass
class ComparisonReport:
    max_deviation: float
    rms_deviation: float
    worst_tau: float
    tolerance: float
    passed: bool
    scale: float
    deviations: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2)


def compare(analytic: SignalCurve, oracle: SignalCurve, tolerance: float) -> ComparisonReport:
    """Deviation of S_N curves relative to max |S_N| of the analytic curve."""
    if len(analytic) != len(oracle) or not np.allclose(analytic.tau, oracle.tau, rtol=0, atol=1e-15):
        raise GridMismatchError("analytic and oracle curves use different tau grids")
    scale = float(np.max(np.abs(analytic.s_n)))
    if scale == 0:
        scale = 1.0
    dev = np.abs(analytic.s_n - oracle.s_n) / scale
    i = int(np.argmax(dev))
    return ComparisonReport(
        max_deviation=float(dev[i]),
        rms_deviation=float(np.sqrt(np.mean(dev**2))),
        worst_tau=float(analytic.tau[i]),
        tolerance=tolerance,
        passed=bool(dev[i] <= tolerance),
        scale=scale,
        deviations=dev.tolist(),
    )
