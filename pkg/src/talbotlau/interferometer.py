"""Time-domain three-grating signal in the near-resonant approximation.

With pulse separations T and T + tau the detected signal is the Fourier
series

    S(dx) = sum_l S_l exp(2 pi i l dx / d)
    S_l   = D~(l tau d / T_T) B1_{-l}(chi1) B2_{2l}(l (T + tau) / T_T) B3_{-l}(0)

where D~ is the Fourier transform of the transverse momentum
distribution and dx the net fringe displacement (grating shifts, beam
tilt and gravity). The third grating is a pure mask. The first grating
is evaluated either at its exact shear chi1 = l tau / T_T (default) or
in the purely absorptive limit chi1 = 0.

The longitudinal speed spread is averaged incoherently with an 11-node
Gauss-Hermite rule.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .grating import absorptive_coefficient, grating_strength, talbot_coefficients
from .scenario import H, BeamKinematics, Scenario

SQRT_2LN10 = math.sqrt(2.0 * math.log(10.0))
SPEED_NODES = 11
TRUNCATION = 1e-12
MAX_HARMONIC = 64
FIRST_GRATING_MODES = ("shear", "absorptive")


class DegenerateScenarioError(ValueError):
    """The interferometer transmits nothing (S_0 = 0)."""


# --------------------------------------------------------------------------
# Kinematics
# --------------------------------------------------------------------------

def fringe_shift(shifts, T: float, tau: float, beam: BeamKinematics) -> float:
    """Net fringe displacement entering the signal phase (m).

    dx = (dx1 - 2 dx2 + dx3) - v tan(gamma) tau - g T^2 - 2 g tau T - g tau^2 / 2
    """
    dx1, dx2, dx3 = shifts
    static = dx1 - 2.0 * dx2 + dx3
    g = beam.gravity
    return static - beam.speed * math.tan(beam.tilt) * tau - g * T**2 - 2.0 * g * tau * T - 0.5 * g * tau**2


def envelope_width(beam: BeamKinematics, d: float) -> float:
    """Resonance-dip width sigma_w = d / (2 v sin(alpha) sqrt(2 ln 10))."""
    sa = math.sin(beam.divergence)
    if sa == 0:
        return math.inf
    return d / (2.0 * beam.speed * sa * SQRT_2LN10)


def fringe_period(beam: BeamKinematics, d: float) -> float:
    """Fringe period in tau whose arcsin inversion returns the tilt, d / (v sin(gamma)).

    The signal itself moves by v tan(gamma) per unit delay; the two agree
    to O(gamma^2).
    """
    sg = math.sin(beam.tilt)
    if sg == 0:
        return math.inf
    return d / (beam.speed * abs(sg))


@dataclass(frozen=True)
class MomentumEnvelope:
    """Gaussian transverse momentum distribution set by the beam divergence.

    Its Fourier transform D~(x) = exp(-x^2 / 2 s^2) uses
    s = h / (2 sqrt(2 ln 10) m v sin(alpha)), so that the envelope of the
    l = 1 term, D~(tau d / T_T), has exactly the dip width sigma_w of
    ``envelope_width``.
    """

    divergence: float
    speed: float
    mass: float
    shape: str = "gaussian"

    def __post_init__(self):
        if self.shape != "gaussian":
            raise ValueError(f"unsupported envelope shape {self.shape!r}")

    @property
    def coherence_length(self) -> float:
        sa = math.sin(self.divergence)
        if sa == 0:
            return math.inf
        return H / (2.0 * SQRT_2LN10 * self.mass * self.speed * sa)

    @property
    def momentum_std(self) -> float:
        """Standard deviation of D(p), hbar / s."""
        return H / (2.0 * math.pi * self.coherence_length)

    def value(self, x):
        s = self.coherence_length
        x = np.asarray(x, dtype=float)
        if math.isinf(s):
            return np.ones_like(x) if x.ndim else 1.0
        out = np.exp(-0.5 * (x / s) ** 2)
        return out if out.ndim else float(out)


def momentum_envelope_value(env: MomentumEnvelope, x):
    return env.value(x)


def speed_nodes(beam: BeamKinematics) -> tuple[np.ndarray, np.ndarray]:
    """Speeds and weights for the incoherent average over the speed spread."""
    if beam.relative_speed_spread == 0:
        return np.array([beam.speed]), np.array([1.0])
    x, w = np.polynomial.hermite_e.hermegauss(SPEED_NODES)
    return beam.speed * (1.0 + beam.relative_speed_spread * x), w / w.sum()


# --------------------------------------------------------------------------
# Signal coefficients
# --------------------------------------------------------------------------

@dataclass
class SignalCoefficients:
    terms: dict[int, float]
    truncation_order: int
    truncation_residual: float

    def harmonic(self, l: int) -> float:
        return self.terms.get(l, 0.0)


def _strengths(scen: Scenario):
    return [grating_strength(g, scen.molecule) for g in scen.gratings]


def _grating_products(scen: Scenario, tau: float, orders: np.ndarray, first_grating: str) -> np.ndarray:
    """B1_{-l} B2_{2l} B3_{-l} for each l in ``orders`` (everything but D~)."""
    s1, s2, s3 = _strengths(scen)
    t_t = scen.talbot_time
    T = scen.timing.pulse_separation
    model = scen.model
    if first_grating == "shear":
        b1 = talbot_coefficients(-orders, orders * tau / t_t, s1.n0_eff, s1.phi0_eff, model)
    elif first_grating == "absorptive":
        b1 = absorptive_coefficient(-orders, s1.n0_eff)
    else:
        raise ValueError(f"first_grating must be one of {FIRST_GRATING_MODES}")
    b2 = talbot_coefficients(2 * orders, orders * (T + tau) / t_t, s2.n0_eff, s2.phi0_eff, model)
    b3 = absorptive_coefficient(-orders, s3.n0_eff)
    return b1 * b2 * b3


def _harmonic_limit(scen: Scenario) -> int:
    """Smallest L with |B1_L(0) B3_L(0)| < TRUNCATION |B1_0(0) B3_0(0)|, capped.

    |B_n(chi)| <= 1, so this bounds every dropped term of the series.
    """
    s1, _, s3 = _strengths(scen)
    ls = np.arange(MAX_HARMONIC + 2)
    bound = np.abs(absorptive_coefficient(ls, s1.n0_eff) * absorptive_coefficient(ls, s3.n0_eff))
    below = np.flatnonzero(bound < TRUNCATION * bound[0])
    return int(min(below[0], MAX_HARMONIC)) if below.size else MAX_HARMONIC


def _check_tau(scen: Scenario, tau: float) -> None:
    if abs(tau) > scen.talbot_time / 100.0:
        warnings.warn(
            f"|tau| = {abs(tau) * 1e9:.1f} ns exceeds T_T/100; near-resonant series is approximate",
            stacklevel=3,
        )


def signal_coefficients(scen: Scenario, tau: float, speed: float | None = None,
                        first_grating: str = "shear") -> SignalCoefficients:
    """S_l for l = -L..L at one speed (default: the mean speed)."""
    _check_tau(scen, tau)
    L = _harmonic_limit(scen)
    orders = np.arange(-L, L + 1)
    env = MomentumEnvelope(scen.beam.divergence, speed or scen.beam.speed, scen.molecule.mass)
    dt = env.value(orders * tau * scen.period / scen.talbot_time)
    vals = dt * _grating_products(scen, tau, orders, first_grating)
    s0 = vals[L]
    if s0 <= 0:
        raise DegenerateScenarioError("S_0 = 0: the gratings transmit nothing")
    s1, _, s3 = _strengths(scen)
    tail = abs(absorptive_coefficient(L + 1, s1.n0_eff) * absorptive_coefficient(L + 1, s3.n0_eff))
    return SignalCoefficients(
        terms={int(l): float(v) for l, v in zip(orders, vals)},
        truncation_order=L,
        truncation_residual=float(tail / s0),
    )


@dataclass
class _Prepared:
    """Per-tau quantities shared by every phase/speed evaluation."""

    orders: np.ndarray
    products: np.ndarray
    speeds: np.ndarray
    weights: np.ndarray
    envelopes: np.ndarray  # (speeds, orders)
    shifts: np.ndarray  # (speeds,) fringe displacement without static offset


def _prepare(scen: Scenario, tau: float, first_grating: str) -> _Prepared:
    L = _harmonic_limit(scen)
    orders = np.arange(-L, L + 1)
    products = _grating_products(scen, tau, orders, first_grating)
    speeds, weights = speed_nodes(scen.beam)
    x = orders * tau * scen.period / scen.talbot_time
    envelopes = np.array([MomentumEnvelope(scen.beam.divergence, v, scen.molecule.mass).value(x) for v in speeds])
    T = scen.timing.pulse_separation
    shifts = np.array([
        fringe_shift((0.0, 0.0, 0.0), T, tau, _with_speed(scen.beam, v)) for v in speeds
    ])
    return _Prepared(orders, products, speeds, weights, np.atleast_2d(envelopes), shifts)


def _with_speed(beam: BeamKinematics, v: float) -> BeamKinematics:
    return BeamKinematics(v, beam.relative_speed_spread, beam.divergence, beam.tilt, beam.gravity)


def _static_shift(scen: Scenario) -> float:
    g1, g2, g3 = scen.gratings
    return g1.shift - 2.0 * g2.shift + g3.shift


def _evaluate(prep: _Prepared, d: float, static, with_imag: bool = False):
    """Speed-averaged signal for an array of static shifts."""
    static = np.atleast_1d(np.asarray(static, dtype=float))
    total = np.zeros(static.shape, dtype=complex)
    for w, env, sh in zip(prep.weights, prep.envelopes, prep.shifts):
        phase = np.exp(2j * np.pi * np.outer(static + sh, prep.orders) / d)
        total += w * phase @ (env * prep.products)
    if with_imag:
        return total.real, total.imag
    return total.real


def signal(scen: Scenario, tau: float, first_grating: str = "shear", static_shift: float | None = None) -> float:
    """Detected (transmitted) signal at delay tau, averaged over speeds."""
    _check_tau(scen, tau)
    prep = _prepare(scen, tau, first_grating)
    if prep.products[len(prep.orders) // 2] <= 0:
        raise DegenerateScenarioError("S_0 = 0: the gratings transmit nothing")
    shift = _static_shift(scen) if static_shift is None else static_shift
    return float(_evaluate(prep, scen.period, shift)[0])


def signal_imaginary_residue(scen: Scenario, tau: float, first_grating: str = "shear") -> float:
    """|Im S| / S_0 of the complex series summed over +l and -l independently."""
    prep = _prepare(scen, tau, first_grating)
    re, im = _evaluate(prep, scen.period, _static_shift(scen), with_imag=True)
    return float(abs(im[0]) / prep.products[len(prep.orders) // 2])


def fringe_profile(scen: Scenario, tau: float = 0.0, n_points: int = 256, first_grating: str = "shear",
                   periods: float = 1.0):
    """Dense scan of S over the static shift; returns (delta_x, S)."""
    prep = _prepare(scen, tau, first_grating)
    dx = np.linspace(0.0, periods * scen.period, n_points, endpoint=False)
    return dx, _evaluate(prep, scen.period, _static_shift(scen) + dx)


def normalized_signal(scen: Scenario, tau: float, first_grating: str = "shear") -> float:
    """(S(tau) - S(tau_off)) / S(tau_off)."""
    s_off = signal(scen, scen.timing.tau_off, first_grating)
    return (signal(scen, tau, first_grating) - s_off) / s_off


def reference_residual(scen: Scenario) -> float:
    """|S_1(tau_off) / S_0|: fringe contrast left in the off-resonant reference."""
    co = signal_coefficients(scen, scen.timing.tau_off)
    return abs(co.harmonic(1) / co.harmonic(0))


# --------------------------------------------------------------------------
# Curves
# --------------------------------------------------------------------------

@dataclass
class SignalCurve:
    tau: np.ndarray
    s_res: np.ndarray
    s_off: np.ndarray
    s_n: np.ndarray
    sigma: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.tau = np.asarray(self.tau, dtype=float)
        n = self.tau.size
        self.s_res = np.broadcast_to(np.asarray(self.s_res, dtype=float), (n,)).copy()
        self.s_off = np.broadcast_to(np.asarray(self.s_off, dtype=float), (n,)).copy()
        self.s_n = np.asarray(self.s_n, dtype=float)
        self.sigma = np.broadcast_to(np.asarray(self.sigma, dtype=float), (n,)).copy()
        if self.s_n.shape != (n,):
            raise ValueError("S_N must have one value per tau")
        if n > 1 and np.any(np.diff(self.tau) <= 0):
            raise ValueError("tau must be strictly increasing")
        if np.any(self.s_off <= 0):
            raise ValueError("S_off must be positive")
        if np.any(self.sigma < 0):
            raise ValueError("sigma_SN must be non-negative")

    def __len__(self) -> int:
        return self.tau.size


def resonance_scan(scen: Scenario, taus=None, first_grating: str = "shear") -> SignalCurve:
    """S_res, S_off and S_N on the scenario's tau grid."""
    taus = scen.timing.tau_grid() if taus is None else np.asarray(taus, dtype=float)
    if taus.size == 0:
        raise ValueError("empty tau grid")
    s_off = signal(scen, scen.timing.tau_off, first_grating)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        s_res = np.array([signal(scen, t, first_grating) for t in taus])
    return SignalCurve(
        tau=taus, s_res=s_res, s_off=s_off, s_n=(s_res - s_off) / s_off, sigma=np.zeros_like(taus),
        meta={
            "model": scen.model,
            "first_grating": first_grating,
            "tau_off": scen.timing.tau_off,
            "reference": "near-resonant series evaluated at tau_off",
            "reference_residual_S1_over_S0": reference_residual(scen),
        },
    )


@dataclass(frozen=True)
class Visibility:
    sinusoidal: float  # 2 |S_1| / S_0
    extremal: float  # (S_max - S_min) / (S_max + S_min)
    sign: float  # sign of S_1


def visibility(scen: Scenario, tau: float = 0.0, first_grating: str = "shear") -> Visibility:
    """Fringe visibility at delay tau for the mean speed."""
    co = signal_coefficients(scen, tau, first_grating=first_grating)
    s0, s1 = co.harmonic(0), co.harmonic(1)
    mono = scen.replace(beam=dataclasses.replace(scen.beam, relative_speed_spread=0.0))
    prep = _prepare(mono, tau, first_grating)
    prof = _evaluate(prep, scen.period, np.linspace(0.0, scen.period, 512, endpoint=False))
    smax, smin = prof.max(), prof.min()
    return Visibility(
        sinusoidal=2.0 * abs(s1) / s0,
        extremal=float((smax - smin) / (smax + smin)),
        sign=float(np.sign(s1)),
    )


def gravity_visibility_curve(scen: Scenario, T_values, b: float = 0.0, V0: float | None = None):
    """[(T, S_N)] with S_N = V0 sin(2 pi (b - g T^2) / d).

    V0 defaults to the sinusoidal visibility at tau = 0 for the scenario's
    own pulse separation; ``b`` is a static offset supplied by the caller.
    """
    d = scen.period
    g = scen.beam.gravity
    if V0 is None:
        V0 = visibility(scen).sinusoidal
    return [(float(T), V0 * math.sin(2.0 * math.pi / d * (b - g * T**2))) for T in T_values]


# --------------------------------------------------------------------------
# CSV
# --------------------------------------------------------------------------

CURVE_COLUMNS = ["tau_ns", "S_res", "S_off", "S_N", "sigma_SN"]


def curve_to_csv(curves: dict[str, SignalCurve] | SignalCurve) -> str:
    """CSV text; several curves get an extra ``model`` column."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if isinstance(curves, SignalCurve):
        w.writerow(CURVE_COLUMNS)
        for row in zip(curves.tau * 1e9, curves.s_res, curves.s_off, curves.s_n, curves.sigma):
            w.writerow([f"{v:.12g}" for v in row])
        return buf.getvalue()
    w.writerow(CURVE_COLUMNS + ["model"])
    for name, c in curves.items():
        for row in zip(c.tau * 1e9, c.s_res, c.s_off, c.s_n, c.sigma):
            w.writerow([f"{v:.12g}" for v in row] + [name])
    return buf.getvalue()


class CsvFormatError(ValueError):
    pass


def read_curve_csv(path_or_text: str | Path, model: str | None = None) -> SignalCurve:
    """Parse a SignalCurve CSV (tau_ns, S_res, S_off, S_N, sigma_SN[, model]).

    Files holding several models need ``model`` to pick one.
    """
    text = Path(path_or_text).read_text() if isinstance(path_or_text, Path) or (
        "\n" not in str(path_or_text) and Path(path_or_text).is_file()) else str(path_or_text)
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or [c.strip() for c in rows[0][:5]] != CURVE_COLUMNS:
        raise CsvFormatError(f"line 1: expected header {','.join(CURVE_COLUMNS)}")
    has_model = len(rows[0]) > 5 and rows[0][5].strip() == "model"
    data = []
    seen = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) < 5:
            raise CsvFormatError(f"line {lineno}: expected 5 columns, got {len(row)}")
        if has_model:
            name = row[5].strip() if len(row) > 5 else ""
            if name not in seen:
                seen.append(name)
            if model is not None and name != model:
                continue
        try:
            data.append([float(c) for c in row[:5]])
        except ValueError:
            raise CsvFormatError(f"line {lineno}: non-numeric value in {row!r}") from None
    if has_model and model is None and len(seen) > 1:
        raise CsvFormatError(f"file holds models {seen}; choose one")
    if not data:
        raise CsvFormatError("no data rows" + (f" for model {model!r}" if model else ""))
    arr = np.array(data)
    try:
        return SignalCurve(arr[:, 0] * 1e-9, arr[:, 1], arr[:, 2], arr[:, 3], arr[:, 4],
                           meta={"model": model or (seen[0] if seen else None)})
    except ValueError as exc:
        raise CsvFormatError(str(exc)) from None


def profile_to_csv(profiles: dict[str, tuple[np.ndarray, np.ndarray]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["delta_x_nm", "S", "model"])
    for name, (dx, s) in profiles.items():
        for a, b in zip(dx * 1e9, s):
            w.writerow([f"{a:.12g}", f"{b:.12g}", name])
    return buf.getvalue()
