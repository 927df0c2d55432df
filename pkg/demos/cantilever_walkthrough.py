"""
Two clamped beams joined by a spring, walked through step by step.

Run with ``python3 demos/cantilever_walkthrough.py [kc]``. The script builds
the components, translates the 5 % assembly bound into component weights,
lets every selection strategy pick modes for the second beam and checks the
reduced assembly against the full one.
"""

import sys

import numpy as np

from cmsguard.experiments import load_config, build_system, verify_aposteriori
from cmsguard.experiments.pipeline import preselect, reduced_frf, translate_system
from cmsguard.requirements import verify_certificate
from cmsguard.selection import METHODS, SelectionProblem, run_method

kc = float(sys.argv[1]) if len(sys.argv) > 1 else 1e4
cfg = load_config("builtin:cantilever")
gamma = cfg.raw["requirement"]["gamma"]
system = build_system(cfg, kc)
beam1, beam2 = system.components
print(f"coupling stiffness kc = {kc:g} N/m, {len(system.grid)} grid points up to "
      f"{system.f_max:g} Hz")
print("beam eigenfrequencies [Hz]:", np.round(beam2.modes.frequencies_hz[:8], 1))

h_a, ws, n = translate_system(system, gamma, 1.0)
cert = verify_certificate(ws, n)
print(f"translation feasible at {ws.feasible.sum()}/{len(ws.feasible)} points, "
      f"certificate {'passed' if cert.passed else 'FAILED'}")

pool = preselect(beam2, cfg.raw["preselection_multiplier"] * system.f_max)
v, w = ws.component(1)
problem = SelectionProblem(beam2.model, beam2.modes, pool, v, w, system.grid, beam2.frf,
                           ~ws.feasible)
print(f"candidate pool: {len(pool)} elastic modes\n")
print(f"{'method':<20}{'modes':<22}{'iterations':>10}{'max rel. error':>16}")
for method in METHODS:
    res = run_method(problem, method)
    red = reduced_frf(beam2, res.selected, system.grid)
    chk = verify_aposteriori([beam1.frf, beam2.frf], [beam1.frf, red], system.interconnection,
                             gamma, system.grid, (ws.v_a, ws.w_a))
    print(f"{method:<20}{str(list(res.selected)):<22}{res.iterations:>10}"
          f"{chk.max_relative_error:>16.3e}")
