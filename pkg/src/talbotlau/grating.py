"""Pulsed standing-wave photo-depletion gratings.

A grating imprints, per antinode, a mean number of absorbed photons
``n0`` (depletion) and an eikonal phase ``phi0``. Mirror reflectivity R
and the coherence factor C reduce both to the effective values
``n0_eff = R C n0`` and ``phi0_eff = R C phi0`` that enter the Talbot
coefficients.

Talbot coefficients
-------------------
The coefficient of order n at reduced shear chi is

    B_n(chi) = (1/d) int dx t(x - chi d/2) t*(x + chi d/2) exp(-2 pi i n x / d)

for the coherent transmission t(x) = exp[(-n0_eff/2 + i phi0_eff) cos^2(pi x/d)].
With  zc = phi0_eff sin(pi chi),  zi = n0_eff cos(pi chi) / 2,
a = zc + zi and b = zc - zi, the closed form is

    B_n  = exp(-n0_eff/2) (b/2)^n   F_n(-a b / 4)     n >= 0
    B_-m = exp(-n0_eff/2) (-a/2)^m  F_m(-a b / 4)     m > 0

with F_m(y) = sum_k y^k / (k! (m+k)!), i.e. J_m for a b > 0 and I_m for
a b < 0. Written this way the coefficient is manifestly real and the
apparent pole at a = 0 of the ratio/square-root form disappears. The
classical coefficients follow from sin(pi chi) -> pi chi and
cos(pi chi) -> 1; the absorptive limit is chi = 0 of either.

B_n(chi + 1) = (-1)^n B_n(chi): only even orders are 1-periodic in chi.
The interferometer signal uses even orders for the middle grating.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .scenario import C_LIGHT, H, GratingConfig, Molecule, beta_parameter
from .special import bessel_ie_orders, bessel_j_orders

COEFFICIENT_MODELS = ("quantum", "classical", "absorptive")


@dataclass(frozen=True)
class GratingStrength:
    n0: float
    phi0: float
    n0_eff: float
    phi0_eff: float
    beta: float

    def __post_init__(self):
        if self.n0 < 0 or self.n0_eff < 0:
            raise ValueError("photon numbers must be non-negative")

    @classmethod
    def from_effective(cls, n0_eff: float, beta: float | None = None, phi0_eff: float | None = None,
                       R: float = 1.0, C: float = 1.0) -> "GratingStrength":
        """Build from n0_eff and either beta or phi0_eff."""
        if phi0_eff is None:
            if beta is None:
                raise ValueError("need beta or phi0_eff")
            if beta == 0:
                if n0_eff:
                    raise ValueError("beta = 0 with n0_eff > 0 needs an explicit phi0_eff")
                phi0_eff = 0.0
            else:
                phi0_eff = n0_eff / (2.0 * beta)
        if beta is None:
            beta = n0_eff / (2.0 * phi0_eff) if phi0_eff > 0 else math.inf
        rc = R * C
        return cls(n0=n0_eff / rc, phi0=phi0_eff / rc, n0_eff=n0_eff, phi0_eff=phi0_eff, beta=beta)


def mean_absorbed_photons(energy: float, cross_section: float, wavelength: float, area: float) -> float:
    """Mean photons absorbed in an antinode, 4 sigma E lambda / (h c A)."""
    if not area > 0:
        raise ValueError("illuminated area must be > 0")
    return 4.0 * cross_section * energy * wavelength / (H * C_LIGHT * area)


def eikonal_phase(energy: float, polarizability_volume: float, area: float) -> float:
    """Antinode eikonal phase 16 pi^2 E alpha_vol / (h c A)."""
    if not area > 0:
        raise ValueError("illuminated area must be > 0")
    return 16.0 * math.pi**2 * energy * polarizability_volume / (H * C_LIGHT * area)


def grating_strength(grating: GratingConfig, molecule: Molecule) -> GratingStrength:
    """Strengths of one grating for one molecule.

    If the grating carries an explicit ``n0_eff`` the phase follows from
    beta; a ``beta_override`` on the molecule keeps the eikonal phase and
    rescales the depletion.
    """
    rc = grating.mirror_reflectivity * grating.coherence_factor
    beta = beta_parameter(molecule, grating.wavelength)
    if grating.n0_eff is not None:
        return GratingStrength.from_effective(grating.n0_eff, beta=beta, R=grating.mirror_reflectivity,
                                              C=grating.coherence_factor)
    phi0 = eikonal_phase(grating.pulse_energy, molecule.polarizability_volume, grating.illuminated_area)
    if molecule.beta_override is not None:
        n0 = 2.0 * beta * phi0
    else:
        n0 = mean_absorbed_photons(grating.pulse_energy, molecule.absorption_cross_section,
                                   grating.wavelength, grating.illuminated_area)
    return GratingStrength(n0=n0, phi0=phi0, n0_eff=rc * n0, phi0_eff=rc * phi0, beta=beta)


def transmission_function(x, strength: GratingStrength, d: float, R: float, C: float):
    """Complex amplitude transmission including mirror losses.

    t(x) = exp(-n_eff(x) (1 + R) / (4 R C) + i phi_eff(x)), with the
    effective profiles n0_eff cos^2(pi x/d) and phi0_eff cos^2(pi x/d).
    """
    if not R * C > 0:
        raise ValueError("R*C must be > 0")
    profile = np.cos(np.pi * np.asarray(x, dtype=float) / d) ** 2
    return np.exp(-strength.n0_eff * profile * (1.0 + R) / (4.0 * R * C) + 1j * strength.phi0_eff * profile)


def coherent_transmission(x, n0_eff: float, phi0_eff: float, d: float):
    """exp[(-n0_eff/2 + i phi0_eff) cos^2(pi x/d)], whose Fourier pairs give B_n."""
    profile = np.cos(np.pi * np.asarray(x, dtype=float) / d) ** 2
    return np.exp((-0.5 * n0_eff + 1j * phi0_eff) * profile)


def _shear_terms(chi, model: str):
    chi = np.asarray(chi, dtype=float)
    if model == "quantum":
        return np.sin(np.pi * chi), np.cos(np.pi * chi)
    if model == "classical":
        return np.pi * chi, np.ones_like(chi)
    if model == "absorptive":
        return np.zeros_like(chi), np.ones_like(chi)
    raise ValueError(f"unknown coefficient model {model!r}")


# |a b| below this uses the power series of F_m directly
_SERIES_LIMIT = 4.0


def _f_series(m: np.ndarray, y: np.ndarray) -> np.ndarray:
    """F_m(y) = sum_k y^k / (k! (m+k)!) for |y| <= 1, elementwise."""
    lgam = np.array([math.lgamma(int(v) + 1) for v in m.ravel()]).reshape(m.shape)
    term = np.exp(-lgam)
    total = term.copy()
    for k in range(1, 40):
        term = term * y / (k * (m + k))
        total += term
    return total


def talbot_coefficients(order, chi, n0_eff: float, phi0_eff: float, model: str = "quantum") -> np.ndarray:
    """Elementwise B_n(chi) (or C_n, or the absorptive limit) for broadcast arrays."""
    order, chi = np.broadcast_arrays(np.asarray(order, dtype=int), np.asarray(chi, dtype=float))
    s, c = _shear_terms(chi, model)
    zc = phi0_eff * s
    zi = 0.5 * n0_eff * c
    a = zc + zi
    b = zc - zi
    p = a * b
    m = np.abs(order)
    base = np.where(order >= 0, b, -a)
    out = np.empty(order.shape)
    pref = math.exp(-0.5 * n0_eff)

    small = np.abs(p) <= _SERIES_LIMIT
    if np.any(small):
        mm = m[small]
        out[small] = pref * np.power(0.5 * base[small], mm) * _f_series(mm, -0.25 * p[small])

    big = ~small
    if np.any(big):
        root = np.sqrt(np.abs(p[big]))
        mm = m[big]
        ratio = np.power(base[big] / root, mm)
        mmax = int(mm.max())
        osc = p[big] > 0
        vals = np.empty(root.shape)
        if np.any(osc):
            table = bessel_j_orders(mmax, root[osc])
            vals[osc] = pref * np.take_along_axis(table, mm[osc][:, None], axis=1)[:, 0]
        if np.any(~osc):
            table = bessel_ie_orders(mmax, root[~osc])
            # y <= n0_eff/2: fold e^y into the e^{-n0/2} prefactor so neither overflows
            scaled = np.take_along_axis(table, mm[~osc][:, None], axis=1)[:, 0]
            vals[~osc] = scaled * np.exp(root[~osc] - 0.5 * n0_eff)
        out[big] = ratio * vals
    return out


def talbot_coefficient(order: int, chi: float, strength: GratingStrength, model: str = "quantum") -> float:
    """Single Talbot coefficient for a grating strength (uses the effective values)."""
    return float(talbot_coefficients(order, chi, strength.n0_eff, strength.phi0_eff, model))


def absorptive_coefficient(order, n0_eff: float) -> np.ndarray:
    """(-1)^n exp(-n0/2) I_n(n0/2): the chi = 0 limit of both models."""
    order = np.asarray(order, dtype=int)
    m = np.abs(order)
    table = bessel_ie_orders(int(m.max()) if m.size else 0, 0.5 * n0_eff)
    vals = table[m]
    return np.where(m % 2, -vals, vals)
