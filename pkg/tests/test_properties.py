"""Property-based checks of the structural invariants."""

import functools
import math

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from cmsguard.assembly import Interconnection, build_n
from cmsguard.experiments import read_matrix, safe_eval, write_matrix
from cmsguard.reduction import hh_basis, reduce
from cmsguard.requirements import (
    EPS_PSD,
    certificate_matrix,
    design_relative_weights,
    scaled_norm,
    solve_diagonal_sdp,
)
from cmsguard.selection import METHODS, SelectionProblem, brute_force_cost, expected_iterations, run_method
from cmsguard.structural import (
    FrequencyGrid,
    FrfData,
    SecondOrderModel,
    apply_modal_damping,
    frf_direct,
    solve_undamped_modes,
    with_ports,
)

SETTINGS = settings(max_examples=25, deadline=None,
                    suppress_health_check=[HealthCheck.function_scoped_fixture])

seeds = st.integers(0, 2**31 - 1)


def _chain(rng, n, ports):
    """Grounded spring-mass chain with random masses and springs."""
    k = rng.uniform(1e3, 1e4, n + 1)
    m = rng.uniform(0.05, 0.5, n)
    kk = np.diag(k[:-1] + k[1:]) - np.diag(k[1:-1], 1) - np.diag(k[1:-1], -1)
    model = SecondOrderModel(np.diag(m), None, kk, np.zeros((n, 0)), np.zeros((0, n)))
    model = with_ports(model, ports, ports)
    modes = solve_undamped_modes(model)
    return apply_modal_damping(model, modes, 0.02), modes


class TestStructural:
    @SETTINGS
    @given(seeds, st.integers(3, 12))
    def test_frf_reciprocity(self, seed, n):
        rng = np.random.default_rng(seed)
        model, _ = _chain(rng, n, [0, n - 1])
        h = frf_direct(model, FrequencyGrid.logspace_hz(0.5, 50.0, 7)).samples
        assert np.allclose(h, np.transpose(h, (0, 2, 1)), rtol=1e-10, atol=0)

    @SETTINGS
    @given(seeds, st.integers(4, 12), st.data())
    def test_hh_statics_and_ritz_bound(self, seed, n, data):
        rng = np.random.default_rng(seed)
        model, modes = _chain(rng, n, [0, n - 1])
        # n - 2 modes would span the whole interior; that basis is ill-conditioned (cond ~1e7)
        sel = data.draw(st.lists(st.integers(0, n - 3), unique=True, max_size=n - 3))
        red = reduce(model, hh_basis(model, modes, sel)).model
        g = FrequencyGrid(np.array([1e-5]))
        assert np.allclose(frf_direct(red, g).samples, frf_direct(model, g).samples, rtol=1e-8)
        f_red = solve_undamped_modes(red).frequencies_rad
        f_full = modes.frequencies_rad[: len(f_red)]
        assert np.all(f_red >= f_full * (1 - 1e-9))


class TestAssembly:
    @SETTINGS
    @given(seeds)
    def test_push_through_identity(self, seed):
        rng = np.random.default_rng(seed)
        h = 0.3 * (rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3)))
        kbb = rng.normal(size=(3, 3))
        lhs = kbb @ np.linalg.inv(np.eye(3) - h @ kbb)
        rhs = np.linalg.inv(np.eye(3) - kbb @ h) @ kbb
        assert np.allclose(lhs, rhs, rtol=1e-8, atol=1e-10)

    @SETTINGS
    @given(seeds)
    def test_lft_identity_random(self, seed):
        rng = np.random.default_rng(seed)
        k = np.zeros((4, 4))
        k[:3, :3] = rng.normal(size=(3, 3))
        k[:3, 3] = rng.normal(size=3)
        k[3, :3] = rng.normal(size=3)
        kc = Interconnection(k, [(2, 2), (1, 1)], (1, 1))
        h = 0.2 * (rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3)))
        h[:2, 2] = h[2, :2] = 0
        delta = np.zeros((3, 3), complex)
        delta[:2, :2] = 1e-2 * rng.normal(size=(2, 2))
        delta[2, 2] = 1e-2 * rng.normal()
        n = build_n(h, kc)

        def h_a(x):
            return kc.k_ab @ x @ np.linalg.solve(np.eye(3) - kc.k_bb @ x, kc.k_ba)

        lft = n[3:, :3] @ delta @ np.linalg.solve(np.eye(3) - n[:3, :3] @ delta, n[:3, 3:])
        exact = h_a(h + delta) - h_a(h)
        assert np.allclose(lft, exact, rtol=1e-6, atol=1e-12 * max(1.0, np.abs(exact).max()))


class TestRequirements:
    @SETTINGS
    @given(seeds)
    def test_certificate_equals_one_minus_sigma(self, seed):
        rng = np.random.default_rng(seed)
        ports, ext = ((2, 1), (1, 2)), (1, 1)
        n = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        x = rng.uniform(0.2, 5.0, 4)
        y = rng.uniform(0.2, 5.0, 4)
        d = np.append(rng.uniform(0.2, 5.0, 2), 1.0)
        sig = scaled_norm(n, x, y, d, ports, ext)
        p = certificate_matrix(n, x, y, d, ports, ext)
        s = 1.0 / np.sqrt(np.real(np.diag(p)))
        lam = np.linalg.eigvalsh(s[:, None] * p * s[None, :])[0]
        assert lam == pytest.approx(1 - sig, abs=1e-9)

    @SETTINGS
    @given(seeds)
    def test_barrier_solution_feasible_and_tight(self, seed):
        rng = np.random.default_rng(seed)
        ns = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
        ns[2, 2] = 0.1
        cost = rng.uniform(0.5, 2.0, 4)
        z = solve_diagonal_sdp(ns, cost, 2, 2)
        x = np.array([z[0], z[1], 1.0])
        y = np.array([z[2], z[3], 1.0])
        p = np.block([[np.diag(x), ns.conj().T], [ns, np.diag(y)]])
        lam = np.linalg.eigvalsh(p)
        assert lam[0] >= EPS_PSD * (1 - 1e-6)
        # optimal: shrinking any free entry by 1 % breaks feasibility
        for i in range(4):
            zz = z.copy()
            zz[i] *= 0.99
            x = np.array([zz[0], zz[1], 1.0])
            y = np.array([zz[2], zz[3], 1.0])
            p = np.block([[np.diag(x), ns.conj().T], [ns, np.diag(y)]])
            assert np.linalg.eigvalsh(p)[0] < EPS_PSD

    @SETTINGS
    @given(st.floats(1e-3, 0.5), st.floats(0.1, 2.0), seeds)
    def test_relative_weights_scale(self, gamma, scale, seed):
        rng = np.random.default_rng(seed)
        g = FrequencyGrid(np.array([1.0, 2.0, 3.0]))
        h = FrfData(g, rng.normal(size=(3, 2, 2)) + 1j * rng.normal(size=(3, 2, 2)))
        v1, w1 = design_relative_weights(h, gamma)
        v2, w2 = design_relative_weights(h, gamma, scale)
        assert np.allclose(v2, scale * v1) and np.allclose(w2, scale * w1)
        # a full-direction error of size gamma ||H|| sits on the boundary when scale = 1
        nh = np.linalg.norm(h.samples, 2, axis=(1, 2))
        assert np.allclose(v1[:, 0] * w1[:, 0] * gamma * nh, 1.0)


@functools.lru_cache(maxsize=None)
def _selection_model(seed):
    rng = np.random.default_rng(seed)
    return _chain(rng, 9, [0])


class TestSelection:
    @settings(max_examples=12, deadline=None)
    @given(st.integers(0, 3), st.floats(-2.0, 2.0))
    def test_methods_never_beat_brute_force(self, seed, log_scale):
        model, modes = _selection_model(seed)
        grid = FrequencyGrid.logspace_hz(0.5, 20.0, 25)
        h = frf_direct(model, grid)
        nh = np.abs(h.samples[:, 0, 0])
        v = (10**log_scale / np.sqrt(0.05 * nh))[:, None]
        pool = list(range(6))
        results = {}
        for method in METHODS:
            prob = SelectionProblem(model, modes, pool, v, v, grid, h)
            res = run_method(prob, method)
            assert res.iterations == expected_iterations(method, res.n_bar, res.count)
            results[method] = res
        best = results["brute_force"]
        for method, res in results.items():
            # brute force explores every subset, so nothing beats it or succeeds without it
            if res.satisfied:
                assert best.satisfied and best.count <= res.count


class TestCounting:
    @given(st.integers(0, 40), st.data())
    def test_brute_force_cost_is_binomial_sum(self, n_bar, data):
        r = data.draw(st.integers(0, n_bar))
        assert brute_force_cost(n_bar, r) == sum(math.comb(n_bar, q) for q in range(1, r + 1))
        assert expected_iterations("brute_force", n_bar, r) == brute_force_cost(n_bar, r)

    @given(st.integers(1, 60), st.data())
    def test_table_relations(self, n_bar, data):
        r = data.draw(st.integers(0, n_bar))
        assert expected_iterations("rmi_a_apriori", n_bar, r) == n_bar + r
        assert expected_iterations("rmi_r_apriori", n_bar, r) == 2 * n_bar - r
        assert expected_iterations("rmi_a_incremental", n_bar, r) == (n_bar + 1) * r
        assert expected_iterations("rmi_r_incremental", n_bar, r) == (n_bar + 1) * (n_bar - r)


class TestConfigUtilities:
    @given(st.integers(-50, 50), st.integers(1, 50), st.floats(-1e3, 1e3))
    def test_safe_eval_matches_python(self, a, b, kc):
        expr = f"({a} - kc) * {b} / 2 + -kc"
        assert safe_eval(expr, {"kc": kc}) == pytest.approx(eval(expr, {"kc": kc}))

    @SETTINGS
    @given(st.integers(1, 6), st.integers(1, 6), seeds)
    def test_matrix_container_round_trip(self, tmp_path_factory, rows, cols, seed):
        a = np.random.default_rng(seed).normal(size=(rows, cols)) * 1e3
        p = tmp_path_factory.mktemp("m") / "a.txt"
        write_matrix(p, a)
        assert np.array_equal(read_matrix(p), a)
