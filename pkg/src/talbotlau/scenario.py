"""Domain types, unit handling and scenario files.

Everything inside the package is strict SI. Scenario files are YAML with
explicit unit suffixes on every dimensional key (``mass_amu``,
``wavelength_nm``, ``divergence_mrad`` ...); see ``SCHEMA`` below and
the files in ``scenarios/``.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Mapping

import yaml
from scipy import constants as sc

H = sc.h
HBAR = sc.hbar
C_LIGHT = sc.c
EPS0 = sc.epsilon_0
AMU = sc.atomic_mass
G_EARTH = 9.81


class ScenarioError(ValueError):
    """A scenario file or value failed validation. ``field`` names the culprit."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


def polarizability_si(polarizability_volume: float) -> float:
    """SI polarizability (C m^2/V) from the volume alpha/(4 pi eps0) in m^3."""
    return 4.0 * math.pi * EPS0 * polarizability_volume


def talbot_time(mass: float, period: float) -> float:
    """Talbot time m d^2 / h."""
    if not mass > 0 or not period > 0:
        raise ValueError("talbot_time needs positive mass and period")
    return mass * period**2 / H


def de_broglie_wavelength(mass: float, speed: float) -> float:
    if not mass > 0 or not speed > 0:
        raise ValueError("de Broglie wavelength needs positive mass and speed")
    return H / (mass * speed)


@dataclass(frozen=True)
class Molecule:
    mass: float
    absorption_cross_section: float
    polarizability_volume: float
    label: str = ""
    beta_override: float | None = None

    def __post_init__(self):
        if not self.mass > 0:
            raise ScenarioError("molecule.mass", "must be > 0")
        if not self.absorption_cross_section >= 0:
            raise ScenarioError("molecule.absorption_cross_section", "must be >= 0")
        if not self.polarizability_volume > 0:
            raise ScenarioError("molecule.polarizability_volume", "must be > 0")
        if self.beta_override is not None and not self.beta_override >= 0:
            raise ScenarioError("molecule.beta_override", "must be >= 0")


def beta_parameter(molecule: Molecule, wavelength: float) -> float:
    """Absorption-to-phase ratio lambda sigma / (8 pi^2 alpha_vol).

    Equal to n0 / (2 phi0) for any pulse energy and area. An explicit
    ``beta_override`` on the molecule takes precedence.
    """
    if molecule.beta_override is not None:
        return molecule.beta_override
    if not molecule.polarizability_volume > 0:
        raise ValueError("beta undefined for zero polarizability")
    return wavelength * molecule.absorption_cross_section / (
        8.0 * math.pi**2 * molecule.polarizability_volume
    )


@dataclass(frozen=True)
class GratingConfig:
    pulse_energy: float
    wavelength: float
    illuminated_area: float
    mirror_reflectivity: float = 1.0
    coherence_factor: float = 1.0
    shift: float = 0.0
    # Effective antinode photon number; when set it replaces R*C*n0 from
    # the pulse energy (the experiment quotes n0_eff directly).
    n0_eff: float | None = None

    def __post_init__(self):
        if not 0 < self.mirror_reflectivity <= 1:
            raise ScenarioError("mirror_reflectivity", f"must lie in (0, 1], got {self.mirror_reflectivity}")
        if not 0 < self.coherence_factor <= 1:
            raise ScenarioError("coherence_factor", f"must lie in (0, 1], got {self.coherence_factor}")
        if not self.pulse_energy >= 0:
            raise ScenarioError("pulse_energy", "must be >= 0")
        if not self.wavelength > 0:
            raise ScenarioError("wavelength", "must be > 0")
        if not self.illuminated_area > 0:
            raise ScenarioError("illuminated_area", "must be > 0")
        if self.n0_eff is not None and not self.n0_eff >= 0:
            raise ScenarioError("n0_eff", "must be >= 0")

    @property
    def period(self) -> float:
        return self.wavelength / 2.0


@dataclass(frozen=True)
class BeamKinematics:
    speed: float
    relative_speed_spread: float = 0.0
    divergence: float = 0.0
    tilt: float = 0.0
    gravity: float = G_EARTH

    def __post_init__(self):
        if not self.speed > 0:
            raise ScenarioError("beam.speed", "must be > 0")
        if not self.relative_speed_spread >= 0:
            raise ScenarioError("beam.relative_speed_spread", "must be >= 0")
        if not self.divergence >= 0:
            raise ScenarioError("beam.divergence", "must be >= 0")
        if not abs(self.tilt) < math.pi / 2:
            raise ScenarioError("beam.tilt", "must satisfy |tilt| < pi/2")


@dataclass(frozen=True)
class TimingConfig:
    talbot_order: Fraction
    pulse_separation: float
    tau_range: tuple[float, float]
    tau_step: float
    tau_off: float

    def __post_init__(self):
        object.__setattr__(self, "talbot_order", Fraction(self.talbot_order))
        object.__setattr__(self, "tau_range", tuple(float(t) for t in self.tau_range))
        if not self.pulse_separation > 0:
            raise ScenarioError("timing.pulse_separation", "must be > 0")
        if not self.tau_step > 0:
            raise ScenarioError("timing.tau_step", "must be > 0")
        if self.tau_range[1] < self.tau_range[0]:
            raise ScenarioError("timing.tau_range", "stop must not precede start")

    def tau_grid(self):
        import numpy as np

        lo, hi = self.tau_range
        count = int(math.floor((hi - lo) / self.tau_step + 1e-9)) + 1
        return lo + self.tau_step * np.arange(count)


MODELS = ("quantum", "classical")


@dataclass(frozen=True)
class Scenario:
    molecule: Molecule
    gratings: tuple[GratingConfig, GratingConfig, GratingConfig]
    beam: BeamKinematics
    timing: TimingConfig
    model: str = "quantum"
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "gratings", tuple(self.gratings))
        if len(self.gratings) != 3:
            raise ScenarioError("gratings", f"exactly three gratings required, got {len(self.gratings)}")
        lam = self.gratings[0].wavelength
        if any(abs(g.wavelength - lam) > 1e-12 * lam for g in self.gratings):
            raise ScenarioError("gratings.wavelength", "all gratings must share one wavelength")
        if self.model not in MODELS:
            raise ScenarioError("model", f"must be one of {MODELS}")

    @property
    def period(self) -> float:
        return self.gratings[0].period

    @property
    def wavelength(self) -> float:
        return self.gratings[0].wavelength

    @property
    def talbot_time(self) -> float:
        return talbot_time(self.molecule.mass, self.period)

    @property
    def beta(self) -> float:
        return beta_parameter(self.molecule, self.wavelength)

    def replace(self, **changes) -> "Scenario":
        return dataclasses.replace(self, **changes)

    def with_model(self, model: str) -> "Scenario":
        return dataclasses.replace(self, model=model)


# --------------------------------------------------------------------------
# Scenario files
# --------------------------------------------------------------------------

# field -> {suffix: factor to SI}; the key in the file is f"{field}_{suffix}"
UNITS: dict[str, dict[str, dict[str, float]]] = {
    "molecule": {
        "mass": {"kg": 1.0, "amu": AMU},
        "absorption_cross_section": {"m2": 1.0, "cm2": 1e-4},
        "polarizability_volume": {"m3": 1.0, "A3": 1e-30},
    },
    "grating": {
        "pulse_energy": {"J": 1.0, "mJ": 1e-3, "uJ": 1e-6},
        "wavelength": {"m": 1.0, "nm": 1e-9},
        "illuminated_area": {"m2": 1.0, "mm2": 1e-6, "cm2": 1e-4},
        "shift": {"m": 1.0, "nm": 1e-9},
    },
    "beam": {
        "speed": {"m_s": 1.0},
        "divergence": {"rad": 1.0, "mrad": 1e-3},
        "tilt": {"rad": 1.0, "mrad": 1e-3},
        "gravity": {"m_s2": 1.0},
    },
    "timing": {
        "pulse_separation": {"s": 1.0, "us": 1e-6, "ns": 1e-9},
        "tau_range": {"s": 1.0, "ns": 1e-9},
        "tau_step": {"s": 1.0, "ns": 1e-9},
        "tau_off": {"s": 1.0, "ns": 1e-9},
    },
}

# dimensionless keys accepted verbatim
PLAIN = {
    "molecule": {"label", "beta_override"},
    "grating": {"mirror_reflectivity", "coherence_factor", "n0_eff"},
    "beam": {"relative_speed_spread"},
    "timing": {"talbot_order"},
}

# canonical unit used when writing a scenario back out
CANONICAL = {
    "molecule": {"mass": "amu", "absorption_cross_section": "cm2", "polarizability_volume": "A3"},
    "grating": {"pulse_energy": "uJ", "wavelength": "nm", "illuminated_area": "mm2", "shift": "nm"},
    "beam": {"speed": "m_s", "divergence": "mrad", "tilt": "mrad", "gravity": "m_s2"},
    "timing": {"pulse_separation": "us", "tau_range": "ns", "tau_step": "ns", "tau_off": "ns"},
}


def _section(raw: Mapping[str, Any], kind: str, where: str) -> dict[str, Any]:
    """Convert one mapping to SI field values; reject unknown keys."""
    if not isinstance(raw, Mapping):
        raise ScenarioError(where, "expected a mapping")
    out: dict[str, Any] = {}
    units = UNITS[kind]
    for key, value in raw.items():
        if key in PLAIN[kind]:
            out[key] = value
            continue
        for fname, suffixes in units.items():
            if key.startswith(fname + "_") and key[len(fname) + 1:] in suffixes:
                factor = suffixes[key[len(fname) + 1:]]
                break
            if key == fname or key.startswith(fname + "_"):
                raise ScenarioError(
                    f"{where}.{fname}",
                    f"unit in key {key!r} not recognised; use one of "
                    + ", ".join(f"{fname}_{s}" for s in suffixes),
                )
        else:
            raise ScenarioError(f"{where}.{key}", "unknown field")
        if fname in out:
            raise ScenarioError(f"{where}.{fname}", "given more than once")
        try:
            if isinstance(value, (list, tuple)):
                out[fname] = tuple(float(v) * factor for v in value)
            else:
                out[fname] = float(value) * factor
        except (TypeError, ValueError):
            raise ScenarioError(f"{where}.{fname}", f"not a number: {value!r}") from None
    return out


def _require(values: dict, name: str, where: str):
    if name not in values:
        raise ScenarioError(f"{where}.{name}", "missing field")
    return values[name]


def _parse_order(value) -> Fraction:
    try:
        order = Fraction(str(value))
    except (ValueError, ZeroDivisionError):
        raise ScenarioError("timing.talbot_order", f"not a rational number: {value!r}") from None
    if order <= 0:
        raise ScenarioError("timing.talbot_order", "must be > 0")
    return order


def scenario_from_dict(doc: Mapping[str, Any]) -> Scenario:
    if not isinstance(doc, Mapping):
        raise ScenarioError("<root>", "scenario must be a mapping")
    known = {"name", "model", "molecule", "grating", "gratings", "beam", "timing"}
    for key in doc:
        if key not in known:
            raise ScenarioError(str(key), "unknown top-level field")

    mol = _section(_require(dict(doc), "molecule", "<root>"), "molecule", "molecule")
    molecule = Molecule(
        mass=_require(mol, "mass", "molecule"),
        absorption_cross_section=_require(mol, "absorption_cross_section", "molecule"),
        polarizability_volume=_require(mol, "polarizability_volume", "molecule"),
        label=str(mol.get("label", "")),
        beta_override=None if mol.get("beta_override") is None else float(mol["beta_override"]),
    )

    # A shared "grating" block supplies defaults for the three "gratings".
    common = _section(doc.get("grating", {}), "grating", "grating")
    per = doc.get("gratings", [{}, {}, {}])
    if not isinstance(per, list) or len(per) != 3:
        raise ScenarioError("gratings", "exactly three gratings required")
    gratings = []
    for k, entry in enumerate(per):
        where = f"gratings[{k}]"
        values = dict(common)
        values.update(_section(entry or {}, "grating", where))
        try:
            gratings.append(
                GratingConfig(
                    pulse_energy=_require(values, "pulse_energy", where),
                    wavelength=_require(values, "wavelength", where),
                    illuminated_area=_require(values, "illuminated_area", where),
                    mirror_reflectivity=float(values.get("mirror_reflectivity", 1.0)),
                    coherence_factor=float(values.get("coherence_factor", 1.0)),
                    shift=values.get("shift", 0.0),
                    n0_eff=None if values.get("n0_eff") is None else float(values["n0_eff"]),
                )
            )
        except ScenarioError as exc:
            raise ScenarioError(f"{where}.{exc.field}", str(exc).split(": ", 1)[1]) from None

    b = _section(_require(dict(doc), "beam", "<root>"), "beam", "beam")
    beam = BeamKinematics(
        speed=_require(b, "speed", "beam"),
        relative_speed_spread=float(b.get("relative_speed_spread", 0.0)),
        divergence=b.get("divergence", 0.0),
        tilt=b.get("tilt", 0.0),
        gravity=b.get("gravity", G_EARTH),
    )

    t = _section(_require(dict(doc), "timing", "<root>"), "timing", "timing")
    order = _parse_order(t.get("talbot_order", 1))
    period = gratings[0].period
    t_talbot = talbot_time(molecule.mass, period)
    rng = _require(t, "tau_range", "timing")
    if not isinstance(rng, tuple) or len(rng) != 2:
        raise ScenarioError("timing.tau_range", "expected [start, stop]")
    timing = TimingConfig(
        talbot_order=order,
        pulse_separation=t.get("pulse_separation", float(order) * t_talbot),
        tau_range=rng,
        tau_step=_require(t, "tau_step", "timing"),
        tau_off=_require(t, "tau_off", "timing"),
    )

    scen = Scenario(
        molecule=molecule,
        gratings=tuple(gratings),
        beam=beam,
        timing=timing,
        model=str(doc.get("model", "quantum")),
        name=str(doc.get("name", "")),
    )
    _warn_reference(scen)
    return scen


def _warn_reference(scen: Scenario) -> None:
    from .interferometer import envelope_width

    width = envelope_width(scen.beam, scen.period)
    if math.isfinite(width) and abs(scen.timing.tau_off) < 2.0 * width:
        warnings.warn(
            f"tau_off = {scen.timing.tau_off * 1e9:.1f} ns lies inside twice the "
            f"envelope width ({width * 1e9:.1f} ns); the reference keeps fringe contrast",
            stacklevel=3,
        )


def load_scenario(source: str | Path) -> Scenario:
    """Parse a scenario from YAML text or a path to a YAML file."""
    text = source
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source and Path(source).is_file()):
        text = Path(source).read_text()
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError("<yaml>", str(exc)) from None
    return scenario_from_dict(doc)


def _emit(kind: str, obj, names) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for fname in names:
        value = getattr(obj, fname)
        if fname in CANONICAL[kind]:
            unit = CANONICAL[kind][fname]
            factor = UNITS[kind][fname][unit]
            if isinstance(value, tuple):
                out[f"{fname}_{unit}"] = [v / factor for v in value]
            else:
                out[f"{fname}_{unit}"] = value / factor
        elif value is not None:
            out[fname] = value
    return out


def scenario_to_dict(scen: Scenario) -> dict[str, Any]:
    """Normalised document: canonical units, every grating spelled out."""
    return {
        "name": scen.name,
        "model": scen.model,
        "molecule": _emit("molecule", scen.molecule,
                          ["mass", "absorption_cross_section", "polarizability_volume", "label", "beta_override"]),
        "gratings": [
            _emit("grating", g, ["pulse_energy", "wavelength", "illuminated_area", "mirror_reflectivity",
                                 "coherence_factor", "shift", "n0_eff"])
            for g in scen.gratings
        ],
        "beam": _emit("beam", scen.beam, ["speed", "relative_speed_spread", "divergence", "tilt", "gravity"]),
        "timing": {
            "talbot_order": str(scen.timing.talbot_order),
            **_emit("timing", scen.timing, ["pulse_separation", "tau_range", "tau_step", "tau_off"]),
        },
    }


def dump_scenario(scen: Scenario) -> str:
    return yaml.safe_dump(scenario_to_dict(scen), sort_keys=False)


def scenario_hash(scen: Scenario) -> str:
    """Stable short hash of the resolved scenario."""
    blob = json.dumps(scenario_to_dict(scen), sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def derived_quantities(scen: Scenario) -> dict[str, Any]:
    """Echo of the derived SI quantities (period, Talbot time, strengths)."""
    from .grating import grating_strength

    out = {
        "period_m": scen.period,
        "talbot_time_s": scen.talbot_time,
        "pulse_separation_s": scen.timing.pulse_separation,
        "beta": scen.beta,
        "de_broglie_wavelength_m": de_broglie_wavelength(scen.molecule.mass, scen.beam.speed),
        "gratings": [],
    }
    for g in scen.gratings:
        s = grating_strength(g, scen.molecule)
        out["gratings"].append({"n0": s.n0, "phi0": s.phi0, "n0_eff": s.n0_eff, "phi0_eff": s.phi0_eff})
    return out


def _normalise_key(key: str) -> str:
    return key.strip().replace("-", "_")


def with_parameter(scen: Scenario, path: str, value) -> Scenario:
    """Copy of ``scen`` with one field replaced; values are in SI units.

    Paths look like ``molecule.beta_override``, ``gratings.*.n0_eff``,
    ``gratings.1.shift``, ``beam.tilt`` or ``timing.pulse_separation``;
    ``*`` applies to all three gratings.
    """
    parts = [_normalise_key(p) for p in path.split(".")]
    try:
        if parts[0] == "model" and len(parts) == 1:
            return dataclasses.replace(scen, model=str(value))
        if parts[0] == "gratings" and len(parts) == 3:
            idx = range(3) if parts[1] == "*" else [int(parts[1])]
            gratings = list(scen.gratings)
            for k in idx:
                _check_field(gratings[k], parts[2], path)
                gratings[k] = dataclasses.replace(gratings[k], **{parts[2]: value})
            return dataclasses.replace(scen, gratings=tuple(gratings))
        if parts[0] in ("molecule", "beam", "timing") and len(parts) == 2:
            section = getattr(scen, parts[0])
            _check_field(section, parts[1], path)
            return dataclasses.replace(scen, **{parts[0]: dataclasses.replace(section, **{parts[1]: value})})
    except (IndexError, ValueError) as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(path, f"cannot resolve parameter path ({exc})") from None
    raise ScenarioError(path, "cannot resolve parameter path")


def _check_field(obj, name: str, path: str) -> None:
    if name not in {f.name for f in dataclasses.fields(obj)}:
        raise ScenarioError(path, f"unknown field {name!r}")
