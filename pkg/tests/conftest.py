import numpy as np
import pytest
import scipy.linalg as la

from cmsguard.experiments import build_system, load_config
from cmsguard.structural import (
    FrequencyGrid,
    apply_modal_damping,
    beam_dof,
    build_euler_beam,
    solve_undamped_modes,
    with_ports,
)

# PASS/FAIL lines recorded by the acceptance suite, echoed in the terminal summary
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)


# cantilever cross-section and material; EI = 166.67 N m^2, rho A = 0.8 kg/m
BEAM = dict(length=1.0, elem_count=50, area=1e-4, second_moment=1e-8 / 12, youngs=2e11,
            density=8e3)
TIP, MID = 50, 33


def cantilever_components(ratio=0.01):
    """Beam 1 with ports at the tip and node 33, beam 2 with a port at node 33."""
    base = build_euler_beam(**BEAM)
    b1 = with_ports(base, [beam_dof(TIP), beam_dof(MID)], [beam_dof(TIP), beam_dof(MID)])
    b2 = with_ports(base, [beam_dof(MID)], [beam_dof(MID)])
    modes = solve_undamped_modes(b1)
    return (apply_modal_damping(b1, modes, ratio), apply_modal_damping(b2, modes, ratio), modes)


def cantilever_k(kc):
    return np.array([[0, 0, 0, 1], [0, -kc, kc, 0], [0, kc, -kc, 0], [1, 0, 0, 0]], float)


def monolithic_tip_frf(b1, b2, kc, omegas, steps=3):
    """
    Tip FRF of the two beams joined by a spring, solved on the assembled
    global matrices. The global matrices are formed in extended precision
    and the double-precision LU solution is refined against them.
    """
    n1, n2 = b1.n, b2.n
    n = n1 + n2
    ld = np.longdouble
    k = np.zeros((n, n), ld)
    m = np.zeros((n, n), ld)
    c = np.zeros((n, n), ld)
    for off, b in ((0, b1), (n1, b2)):
        s = slice(off, off + b.n)
        k[s, s] = b.stiffness
        m[s, s] = b.mass
        c[s, s] = b.damping
    i, j = beam_dof(MID), n1 + beam_dof(MID)
    k[i, i] += kc
    k[j, j] += kc
    k[i, j] -= kc
    k[j, i] -= kc
    tip = beam_dof(TIP)
    f = np.zeros(n, ld)
    f[tip] = 1
    out = []
    for w in omegas:
        wl = ld(w)
        dre = k - wl**2 * m
        dim = wl * c
        lu = la.lu_factor((dre + 1j * dim).astype(complex))
        x = la.lu_solve(lu, f.astype(complex))
        xr, xi = x.real.astype(ld), x.imag.astype(ld)
        for _ in range(steps):
            rr = f - (dre @ xr - dim @ xi)
            ri = -(dre @ xi + dim @ xr)
            dx = la.lu_solve(lu, rr.astype(float) + 1j * ri.astype(float))
            xr += dx.real
            xi += dx.imag
        out.append(float(xr[tip]) + 1j * float(xi[tip]))
    return np.array(out)


def clamped_free_frequencies(count):
    """Roots of ``1 + cos(b) cosh(b) = 0`` converted to Hz for the test beam."""
    from scipy.optimize import brentq

    g = lambda b: 1.0 + np.cos(b) * np.cosh(b)
    roots = [brentq(g, (k + 0.2) * np.pi, (k + 0.8) * np.pi) for k in range(count)]
    ei = BEAM["youngs"] * BEAM["second_moment"]
    rho_a = BEAM["density"] * BEAM["area"]
    return np.array(roots) ** 2 / (2 * np.pi * BEAM["length"] ** 2) * np.sqrt(ei / rho_a)


@pytest.fixture(scope="session")
def cantilever():
    return cantilever_components()


@pytest.fixture(scope="session")
def grid100():
    return FrequencyGrid.logspace_hz(0.1, 400.0, 100)


@pytest.fixture(scope="session")
def cantilever_config():
    return load_config("builtin:cantilever")


@pytest.fixture(scope="session")
def system_1e4(cantilever_config):
    return build_system(cantilever_config, 1e4)


@pytest.fixture(scope="session")
def translated_1e4(system_1e4):
    """``(h_a, weights, n)`` for the cantilever at kc = 1e4."""
    from cmsguard.experiments import translate_system

    return translate_system(system_1e4, 0.05, 1.0)


@pytest.fixture(scope="session")
def cantilever_report(cantilever_config):
    """Full default sweep (six stiffness values, all six methods)."""
    import time

    from cmsguard.experiments import run_pipeline

    t0 = time.perf_counter()
    report = run_pipeline(cantilever_config)
    report.elapsed = time.perf_counter() - t0
    return report
