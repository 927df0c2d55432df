import itertools
import json

import numpy as np
import pytest
import scipy.linalg as sl

from cmsguard.requirements import (
    EPS_PSD,
    MAX_ROUNDS,
    certificate_matrix,
    channel_sizes,
    check_requirement,
    d_step,
    design_relative_weights,
    scaled_norm,
    solve_diagonal_sdp,
    translate_point,
    verify_certificate,
    vw_step,
    weights_from_json,
    weights_to_json,
)
from cmsguard.structural import FrequencyGrid, FrfData, ModelError

PORTS = ((2, 2), (1, 1))
EXT = (1, 1)


def _unit_min_eig(p):
    s = 1.0 / np.sqrt(np.real(np.diag(p)))
    return np.linalg.eigvalsh(s[:, None] * p * s[None, :])[0]


def _random_instance(rng, n_b=4, n_a=5, fa=3, fb=3):
    ns = rng.normal(size=(n_b, n_a)) + 1j * rng.normal(size=(n_b, n_a))
    block = ns[fb:, fa:]
    nrm = np.linalg.norm(block, 2)
    if nrm > 0:
        ns[fb:, fa:] *= 0.5 / nrm
    cost = rng.uniform(0.2, 3.0, fa + fb)
    return ns, cost, fa, fb


def _cvxpy_reference(ns, cost, fa, fb, eps=EPS_PSD):
    cp = pytest.importorskip("cvxpy")
    n_b, n_a = ns.shape
    size = n_a + n_b
    free = list(range(fa)) + [n_a + j for j in range(fb)]
    base = np.zeros((size, size), complex)
    base[:n_a, n_a:] = ns.conj().T
    base[n_a:, :n_a] = ns
    for i in set(range(size)) - set(free):
        base[i, i] = 1.0
    base -= eps * np.eye(size)
    scatter = np.zeros((size, len(free)))
    for col, i in enumerate(free):
        scatter[i, col] = 1.0
    z = cp.Variable(len(free))
    dz = cp.diag(scatter @ z)
    re = base.real + dz
    im = base.imag
    # Hermitian P >= 0 iff its real embedding is PSD
    emb = cp.bmat([[re, -im], [im, re]])
    prob = cp.Problem(cp.Minimize(cost @ z), [0.5 * (emb + emb.T) >> 0])
    prob.solve(solver=cp.CLARABEL)
    assert prob.status in ("optimal", "optimal_inaccurate")
    return np.asarray(z.value), prob.value


class TestBarrierSolver:
    @pytest.mark.parametrize("seed", range(6))
    def test_matches_conic_solver(self, seed):
        rng = np.random.default_rng(seed)
        ns, cost, fa, fb = _random_instance(rng)
        z = solve_diagonal_sdp(ns, cost, fa, fb)
        _, ref_obj = _cvxpy_reference(ns, cost, fa, fb)
        assert cost @ z == pytest.approx(ref_obj, rel=1e-5)

    def test_solution_strictly_feasible(self):
        rng = np.random.default_rng(11)
        ns, cost, fa, fb = _random_instance(rng)
        z = solve_diagonal_sdp(ns, cost, fa, fb)
        n_b, n_a = ns.shape
        x = np.ones(n_a)
        y = np.ones(n_b)
        x[:fa], y[:fb] = z[:fa], z[fa:]
        p = np.block([[np.diag(x), ns.conj().T], [ns, np.diag(y)]])
        assert np.linalg.eigvalsh(p)[0] >= EPS_PSD * (1 - 1e-6)

    def test_scalar_closed_form(self):
        # [[x, c], [c, y]] >= 0 with y pinned to 1: x* = |c|^2 + eps-ish
        z = solve_diagonal_sdp(np.array([[2.0]]), np.array([1.0]), 1, 0)
        assert z[0] == pytest.approx(4.0, rel=1e-6)

    def test_two_free_entries(self):
        # min x + y s.t. x y >= |c|^2: x = y = |c|
        z = solve_diagonal_sdp(np.array([[3.0]]), np.array([1.0, 1.0]), 1, 1)
        assert z == pytest.approx([3.0, 3.0], rel=1e-6)


@pytest.fixture(scope="module")
def point(translated_1e4):
    h_a, ws, n = translated_1e4
    i = 37
    return n[i], ws.v_a[i], ws.w_a[i]


class TestScaledNorm:
    def test_certificate_equals_one_minus_sigma(self, point):
        n, v_a, w_a = point
        rng = np.random.default_rng(0)
        x = rng.uniform(0.5, 2.0, 4)
        y = rng.uniform(0.5, 2.0, 4)
        x[-1], y[-1] = w_a[0] ** -2, v_a[0] ** -2
        d = np.array([0.7, 1.9, 1.0])
        sig = scaled_norm(n, x, y, d, PORTS, EXT)
        p = certificate_matrix(n, x, y, d, PORTS, EXT)
        assert _unit_min_eig(p) == pytest.approx(1 - sig, abs=1e-10)

    def test_channel_sizes(self):
        assert channel_sizes(PORTS, EXT) == ([2, 1, 1], [2, 1, 1])
        assert channel_sizes(((3, 1),), (2, 5)) == ([3, 5], [1, 2])


class TestSteps:
    def test_vw_step_pins_assembly_and_is_feasible(self, point):
        n, v_a, w_a = point
        x, y, obj = vw_step(np.ones(3), n, v_a, w_a, PORTS, EXT)
        assert x[-1] == pytest.approx(w_a[0] ** -2)
        assert y[-1] == pytest.approx(v_a[0] ** -2)
        assert scaled_norm(n, x, y, np.ones(3), PORTS, EXT) < 1.0
        assert obj == pytest.approx(x.sum() + y.sum())

    def test_d_step_matches_log_grid(self, point):
        n, v_a, w_a = point
        x, y, _ = vw_step(np.ones(3), n, v_a, w_a, PORTS, EXT)
        d, best = d_step(x, y, n, PORTS, EXT)
        # coarse-to-fine exhaustive search over log d as the oracle
        center = np.zeros(2)
        width = 6.0
        for _ in range(5):
            axis = np.linspace(-width, width, 41)
            vals = {(a, b): scaled_norm(n, x, y, np.exp([center[0] + a, center[1] + b, 0.0]),
                                        PORTS, EXT)
                    for a, b in itertools.product(axis, axis)}
            (a, b), grid_best = min(vals.items(), key=lambda kv: kv[1])
            center += [a, b]
            width /= 8
        assert best <= grid_best * 1.01
        assert d[-1] == 1.0

    def test_alternation_monotone(self, point):
        n, v_a, w_a = point
        sol = translate_point(n, v_a, w_a, PORTS, EXT)
        assert sol.feasible
        assert 1 <= len(sol.history) <= MAX_ROUNDS
        assert np.all(np.diff(sol.history) <= 0)

    def test_non_finite_n(self):
        n = np.full((4, 4), np.nan, complex)
        sol = translate_point(n, np.ones(1), np.ones(1), PORTS, EXT)
        assert not sol.feasible


class TestTranslation:
    def test_all_points_certified(self, translated_1e4):
        _, ws, n = translated_1e4
        assert ws.feasible.all()
        rep = verify_certificate(ws, n)
        assert rep.passed
        assert np.nanmin(rep.min_eigenvalues) >= -1e-9

    def test_certificate_detects_inflated_weights(self, translated_1e4):
        _, ws, n = translated_1e4
        # larger component errors allowed (V, W scaled by 1000) cannot be certified
        from dataclasses import replace

        bad = replace(ws, v_comp=tuple(1e3 * v for v in ws.v_comp),
                      w_comp=tuple(1e3 * w for w in ws.w_comp))
        rep = verify_certificate(bad, n)
        assert not rep.passed
        assert len(rep.violations) == len(ws.grid)

    def test_guarantee_monte_carlo(self, system_1e4, translated_1e4):
        h_a, ws, n = translated_1e4
        kc = system_1e4.interconnection
        hb = system_1e4.h_b.samples
        rng = np.random.default_rng(7)

        def assembly(h):
            return kc.k_ab @ h @ np.linalg.solve(np.eye(kc.sum_m) - kc.k_bb @ h, kc.k_ba)

        worst = 0.0
        for i in rng.choice(len(ws.grid), 3, replace=False):
            for _ in range(200):
                blocks = []
                for j, (m, p) in enumerate(kc.port_dims):
                    v, w = ws.v_comp[j][i], ws.w_comp[j][i]
                    s = rng.normal(size=(p, m)) + 1j * rng.normal(size=(p, m))
                    s /= np.linalg.norm(s, 2)
                    blocks.append(w[:, None] * s * v[None, :])
                e_a = assembly(hb[i] + sl.block_diag(*blocks)) - assembly(hb[i])
                worst = max(worst, np.linalg.norm(ws.v_a[i][:, None] * e_a * ws.w_a[i][None, :], 2))
        assert worst < 1.0

    def test_json_round_trip(self, translated_1e4):
        _, ws, _ = translated_1e4
        back = weights_from_json(weights_to_json(ws))
        assert back.grid.same_as(ws.grid)
        for a, b in zip(back.v_comp + back.w_comp, ws.v_comp + ws.w_comp):
            assert np.array_equal(a, b)
        assert np.array_equal(back.d_scalars, ws.d_scalars)
        assert back.port_dims == ws.port_dims

    def test_json_schema_checked(self, translated_1e4):
        _, ws, _ = translated_1e4
        doc = json.loads(weights_to_json(ws))
        doc["schema"] = "other/9"
        with pytest.raises(ModelError):
            weights_from_json(json.dumps(doc))


class TestWeights:
    def test_relative_weights(self):
        g = FrequencyGrid(np.array([1.0, 2.0]))
        h = FrfData(g, np.array([[[4.0]], [[0.25]]]))
        v, w = design_relative_weights(h, 0.01)
        assert v[:, 0] == pytest.approx([5.0, 20.0])
        assert np.array_equal(v, w)
        v2, _ = design_relative_weights(h, 0.01, scale=0.5)
        assert v2[:, 0] == pytest.approx([2.5, 10.0])

    def test_relative_weights_errors(self):
        g = FrequencyGrid(np.array([1.0]))
        with pytest.raises(ModelError):
            design_relative_weights(FrfData(g, np.zeros((1, 1, 1))), 0.1)
        with pytest.raises(ValueError):
            design_relative_weights(FrfData(g, np.ones((1, 1, 1))), 0.0)


class TestCheckRequirement:
    grid = FrequencyGrid(np.array([1.0, 2.0, 3.0]))

    def _err(self, values):
        return FrfData(self.grid, np.array(values, complex).reshape(3, 1, 1))

    def test_zero_error(self):
        chk = check_requirement(self._err([0, 0, 0]), 1.0, 1.0)
        assert chk.satisfied and chk.max_value == 0.0

    def test_component_boundary_inclusive(self):
        chk = check_requirement(self._err([0.5, 2.0, 0.1]), 1.0, 2.0)
        assert chk.satisfied
        assert chk.worst_frequency_hz == pytest.approx(2.0 / (2 * np.pi))

    def test_assembly_strict(self):
        assert not check_requirement(self._err([1.0, 0.0, 0.0]), 1.0, 1.01, form="assembly").satisfied
        assert check_requirement(self._err([1.0, 0.0, 0.0]), 1.0, 0.99, form="assembly").satisfied

    def test_exclusion(self):
        err = self._err([5.0, 0.1, 0.1])
        assert not check_requirement(err, 1.0, 1.0).satisfied
        assert check_requirement(err, 1.0, 1.0, exclude=np.array([True, False, False])).satisfied

    def test_non_finite_is_violation(self):
        chk = check_requirement(self._err([0.1, np.nan, 0.1]), 1.0, 1.0)
        assert not chk.satisfied and chk.max_value == np.inf

    def test_unknown_form(self):
        with pytest.raises(ValueError):
            check_requirement(self._err([0, 0, 0]), 1.0, 1.0, form="other")


class TestReferenceExamples:
    def test_large_gamma_vanishing_weights(self):
        g = FrequencyGrid(np.array([1.0]))
        v, w = design_relative_weights(FrfData(g, np.ones((1, 1, 1))), 1e12)
        assert v[0, 0] == w[0, 0] == pytest.approx(1e-6)

    def test_siso_relative_form(self):
        # ||V E W|| < 1 iff |E| / |H| < gamma for SISO relative weights
        g = FrequencyGrid(np.array([1.0, 2.0]))
        h = FrfData(g, np.array([[[2.0 + 1j]], [[0.1]]]))
        v, w = design_relative_weights(h, 0.05)
        rel = np.array([0.049, 0.051])
        err = FrfData(g, (rel * np.abs(h.samples[:, 0, 0])).reshape(2, 1, 1))
        chk = check_requirement(err, v, w, form="assembly")
        assert np.allclose(chk.values, rel / 0.05)
        assert not chk.satisfied

    def test_component_values_scale(self):
        g = FrequencyGrid(np.array([1.0, 2.0]))
        err = FrfData(g, np.array([[[0.4]], [[0.8]]]))
        a = check_requirement(err, 1.0, 1.0).values
        b = check_requirement(err, 2.0, 2.0).values
        assert np.allclose(b, a / 4)
        assert np.allclose(a, [0.4, 0.8])

    def test_decoupled_single_component(self):
        # K_BB = 0, K_AB = K_BA = I: the assembly error equals the component error
        from cmsguard.assembly import Interconnection, n_samples
        from cmsguard.requirements import translate

        g = FrequencyGrid(np.array([1.0]))
        k = np.zeros((4, 4))
        k[:2, 2:] = np.eye(2)
        k[2:, :2] = np.eye(2)
        kc = Interconnection(k, [(2, 2)], (2, 2))
        rng = np.random.default_rng(5)
        hb = FrfData(g, (rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)))[None])
        n = n_samples(hb, kc)
        v_a, w_a = np.array([[2.0, 0.5]]), np.array([[1.5, 3.0]])
        ws = translate(n, v_a, w_a, kc.port_dims, kc.external, g)
        assert ws.feasible.all()
        v, w = ws.component(0)
        worst = 0.0
        for _ in range(1000):
            s = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
            s /= np.linalg.norm(s, 2)
            e = w[0][:, None] * s * v[0][None, :]
            worst = max(worst, np.linalg.norm(v_a[0][:, None] * e * w_a[0][None, :], 2))
        assert worst < 1.0

    def test_zero_n(self):
        sol = translate_point(np.zeros((4, 4), complex), np.ones(1), np.ones(1), PORTS, EXT)
        assert sol.feasible
        # nothing couples, so the free entries sit near the feasibility floor
        assert sol.x[:-1].max() < 1e-6 and sol.y[:-1].max() < 1e-6

    def test_d_step_not_worse_than_ones(self, point):
        n, v_a, w_a = point
        x, y, _ = vw_step(np.ones(3), n, v_a, w_a, PORTS, EXT)
        _, best = d_step(x, y, n, PORTS, EXT)
        assert best <= scaled_norm(n, x, y, np.ones(3), PORTS, EXT) * (1 + 1e-12)

    def test_infeasible_points_skipped(self, translated_1e4):
        from dataclasses import replace

        _, ws, n = translated_1e4
        mask = ws.feasible.copy()
        mask[[3, 50]] = False
        rep = verify_certificate(replace(ws, feasible=mask), n)
        assert rep.passed
        assert rep.skipped == (3, 50)
        assert np.isnan(rep.min_eigenvalues[[3, 50]]).all()
