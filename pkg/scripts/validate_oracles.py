"""Analytic series against the wave and Monte-Carlo oracles for every shipped scenario."""
import argparse
import json
import warnings
from pathlib import Path

import numpy as np

from talbotlau import load_scenario
from talbotlau.interferometer import resonance_scan
from talbotlau.oracle import McSpec, classical_mc_scan, compare, quantum_wave_scan

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--particles", type=int, default=1_000_000)
    ap.add_argument("--out", default="results/oracle_validation.json")
    args = ap.parse_args()
    warnings.simplefilter("ignore")
    report = {}
    for path in sorted((ROOT / "scenarios").glob("*.yaml")):
        scen = load_scenario(path)
        wave = compare(resonance_scan(scen), quantum_wave_scan(scen), 1e-3)
        cl = resonance_scan(scen.with_model("classical"))
        mc = classical_mc_scan(scen.with_model("classical"), mc=McSpec(n_particles=args.particles))
        live = mc.sigma > 0
        z = np.abs(cl.s_n - mc.s_n)[live] / mc.sigma[live]
        report[path.stem] = {"wave_max_deviation": wave.max_deviation, "wave_passed": wave.passed,
                             "mc_max_z": float(z.max()), "mc_passed": bool(z.max() <= 3)}
        print(f"{path.stem}: wave {wave.max_deviation:.1e}, MC max |z| {z.max():.2f}")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(report, indent=2) + "\n")


if __name__ == "__main__":
    main()
