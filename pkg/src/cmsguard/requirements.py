"""
Frequency-dependent accuracy requirements and their translation from the
assembly to the components.

An accuracy set is described by positive diagonal weights. A component error
``E_j`` is acceptable when ``||W_j^-1 E_j V_j^-1|| <= 1``; an assembly error
``E_A`` when ``||V_A E_A W_A|| < 1``. Requirement translation searches, per
frequency, for component weights and D-scalings ``d_j, d_A`` such that::

    [[W^-2 D_r^-1,  N^H      ],
     [N,            V^-2 D_l ]]  > 0

where ``V = diag(V_1, ..., V_k, V_A)``, ``W = diag(W_1, ..., W_k, W_A)``,
``D_l = diag(d_j I_{m_j}, d_A I_{p_A})`` and ``D_r = diag(d_j I_{p_j},
d_A I_{m_A})``. Component compliance then implies assembly compliance. The
inequality is equivalent to ``||D_l^-1/2 V N W D_r^1/2|| < 1``.

The weights are found by alternating a semidefinite program in ``X = W^-2``,
``Y = V^-2`` (D fixed) with a scaled-norm minimization over ``d`` (V, W fixed).
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
from scipy.optimize import minimize, minimize_scalar

from .structural import FrequencyGrid, FrfData, ModelError, spectral_norms

__all__ = [
    "EPS_PSD",
    "CERT_TOL",
    "STRICT_SLACK",
    "TranslationError",
    "PointSolution",
    "WeightSet",
    "RequirementCheck",
    "CertificateReport",
    "design_relative_weights",
    "channel_sizes",
    "scaled_norm",
    "solve_diagonal_sdp",
    "vw_step",
    "d_step",
    "translate_point",
    "translate",
    "check_requirement",
    "verify_certificate",
    "certificate_matrix",
    "weights_to_json",
    "weights_from_json",
]

log = logging.getLogger(__name__)

EPS_PSD = 1e-8
CERT_TOL = 1e-9
STRICT_SLACK = 1e-12
MAX_ROUNDS = 20
REL_STOP = 1e-4
JSON_SCHEMA_ID = "cmsguard.weightset/1"


class TranslationError(RuntimeError):
    """The weight optimization could not produce a usable point."""


def channel_sizes(port_dims, external):
    """
    Diagonal sizes of the D-scaled channels.

    Returns ``(left, right)`` block size lists, each with one entry per
    component followed by the assembly channel: ``left = [m_1, ..., m_k, p_A]``
    and ``right = [p_1, ..., p_k, m_A]``.
    """
    left = [int(m) for m, _ in port_dims] + [int(external[1])]
    right = [int(p) for _, p in port_dims] + [int(external[0])]
    return left, right


def _expand(values, sizes):
    return np.repeat(np.asarray(values, float), sizes)


def scaled_norm(n, x, y, d, port_dims, external):
    """
    ``||D_l^-1/2 V N W D_r^1/2||`` with ``X = W^-2 = diag(x)`` and
    ``Y = V^-2 = diag(y)`` given over all channels (assembly entries last).
    """
    left, right = channel_sizes(port_dims, external)
    dl = _expand(d, left)
    dr = _expand(d, right)
    row = 1.0 / np.sqrt(y * dl)
    col = np.sqrt(dr / x)
    return float(np.linalg.norm(row[:, None] * n * col[None, :], 2))


def certificate_matrix(n, x, y, d, port_dims, external):
    """The Hermitian block matrix of the translation inequality."""
    left, right = channel_sizes(port_dims, external)
    dl = _expand(d, left)
    dr = _expand(d, right)
    n = np.asarray(n, complex)
    return np.block([[np.diag(x / dr).astype(complex), n.conj().T],
                     [n, np.diag(y * dl).astype(complex)]])


def _unit_min_eig(p):
    s = 1.0 / np.sqrt(np.real(np.diag(p)))
    return float(np.linalg.eigvalsh(s[:, None] * p * s[None, :])[0])


# --------------------------------------------------------------------------
# V/W step: semidefinite program with diagonal variables


def solve_diagonal_sdp(ns, cost, free_a, free_b, z0=None, eps=EPS_PSD, gap_tol=1e-8,
                       max_newton=100, mu=10.0):
    """
    Minimize ``cost @ z`` subject to ``[[diag(x), ns^H], [ns, diag(y)]] >= eps I``.

    ``z`` stacks the first `free_a` entries of ``x`` and the first `free_b`
    entries of ``y``; the remaining (pinned) diagonal entries equal one.
    Solved with a primal log-barrier path-following Newton method: the
    gradient of ``-log det P`` in a diagonal entry is the matching diagonal
    entry of ``P^-1`` and the Hessian is ``|P^-1_ij|^2``.

    Parameters
    ----------
    ns : ndarray, shape (n_b, n_a)
        Complex coupling block.
    cost : ndarray, shape (free_a + free_b,)
        Nonnegative objective weights.
    z0 : ndarray, optional
        Starting point; it is inflated until strictly feasible.
    gap_tol : float
        Relative duality gap ``size / t`` at which the path is stopped.

    Returns
    -------
    z : ndarray
        Strictly feasible near-optimal point.
    """
    ns = np.asarray(ns, complex)
    n_b, n_a = ns.shape
    size = n_a + n_b
    cost = np.asarray(cost, float)
    free = np.concatenate([np.arange(free_a), n_a + np.arange(free_b)]).astype(int)
    if free.size == 0:
        return np.zeros(0)
    base = np.zeros((size, size), complex)
    base[:n_a, n_a:] = ns.conj().T
    base[n_a:, :n_a] = ns
    pinned = np.setdiff1d(np.arange(size), free)
    base[pinned, pinned] = 1.0
    base -= eps * np.eye(size)

    def mat(z):
        p = base.copy()
        p[free, free] += z
        return p

    def chol(z):
        try:
            return np.linalg.cholesky(mat(z))
        except np.linalg.LinAlgError:
            return None

    z = np.ones(free.size) if z0 is None else np.maximum(np.asarray(z0, float), eps)
    for _ in range(400):
        if chol(z) is not None:
            break
        z = 2.0 * z + eps
    else:
        raise TranslationError("no strictly feasible starting point found")

    def barrier(ell):
        return -2.0 * np.sum(np.log(np.real(np.diag(ell))))

    # start on the point of the path closest to z: the t that best matches
    # the barrier gradient, so warm starts begin near their final gap
    eye = np.eye(size)
    gb = np.real(np.diag(la.cho_solve((chol(z), True), eye)))[free]
    t = max(cost @ gb / max(cost @ cost, 1e-300), size / max(cost @ z, 1e-300))
    for _ in range(60):
        final = size / t <= gap_tol * max(cost @ z, 1e-300)
        for _ in range(max_newton):
            ell = chol(z)
            q = la.cho_solve((ell, True), eye)
            g = t * cost - np.real(np.diag(q))[free]
            h = np.abs(q[np.ix_(free, free)]) ** 2
            # Jacobi scaling: diagonal entries span many decades near the optimum
            js = 1.0 / np.sqrt(np.diag(h))
            hs = js[:, None] * h * js[None, :]
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("error", la.LinAlgWarning)
                    step = -js * la.solve(hs, js * g, assume_a="pos")
            except (la.LinAlgError, la.LinAlgWarning, ValueError):
                step = -js * np.linalg.lstsq(hs, js * g, rcond=None)[0]
            dec = -g @ step
            if dec < (1e-10 if final else 1e-4):
                break
            f0 = t * cost @ z + barrier(ell)
            # largest step keeping P definite, from the eigenvalues of L^-1 dP L^-H
            ds = np.zeros(size)
            ds[free] = step
            li = la.solve_triangular(ell, eye, lower=True)
            top = np.linalg.eigvalsh(-(li * ds[None, :]) @ li.conj().T)[-1]
            a = 1.0 if top <= 0 else min(1.0, 0.9 / top)
            while a > 1e-12:
                trial = z + a * step
                ell_t = chol(trial)
                if ell_t is not None and t * cost @ trial + barrier(ell_t) <= f0 - 0.01 * a * dec:
                    break
                a *= 0.5
            else:
                break
            z = trial
        if final:
            break
        t *= mu
    return z


def _split(port_dims, external):
    left, right = channel_sizes(port_dims, external)
    return sum(right), sum(left), sum(right[:-1]), sum(left[:-1])


def _ruiz_start(n, v_a, w_a, port_dims, external, iters=20):
    """
    Row/column equilibration of ``V N W`` over the free (component) entries,
    assembly entries held at ``V_A``, ``W_A``. Returns starting ``W``, ``V``
    diagonals (all channels).
    """
    n_a, n_b, fa, fb = _split(port_dims, external)
    a = np.ones(n_a)
    b = np.ones(n_b)
    a[fa:] = w_a
    b[fb:] = v_a
    mag = np.abs(n)
    for _ in range(iters):
        g = b[:, None] * mag * a[None, :]
        col = g.max(axis=0, initial=0.0)
        a[:fa] /= np.sqrt(np.where(col[:fa] > 0, col[:fa], 1.0))
        g = b[:, None] * mag * a[None, :]
        row = g.max(axis=1, initial=0.0)
        b[:fb] /= np.sqrt(np.where(row[:fb] > 0, row[:fb], 1.0))
    return a, b


def _repair(n, x, y, d, port_dims, external, target=EPS_PSD / 10, max_iter=200):
    """
    Inflate the free entries of ``x`` and ``y`` until the unit-diagonal-scaled
    certificate has minimum eigenvalue at least `target`.
    """
    _, _, fa, fb = _split(port_dims, external)
    x, y = x.copy(), y.copy()
    for _ in range(max_iter):
        margin = 1.0 - scaled_norm(n, x, y, d, port_dims, external)
        if margin >= target:
            return x, y, True
        grow = 1.0 + max(4.0 * (target - margin), 1e-12)
        x[:fa] *= grow
        y[:fb] *= grow
    return x, y, 1.0 - scaled_norm(n, x, y, d, port_dims, external) >= target


def vw_step(d, n, v_a, w_a, port_dims, external, previous=None):
    """
    Minimize ``tr(W^-2) + tr(V^-2)`` over the component diagonals with D fixed.

    Parameters
    ----------
    d : array_like
        ``(d_1, ..., d_k, d_A)``, all positive.
    n : ndarray
        Coupling matrix ``N`` at one frequency.
    v_a, w_a : array_like
        Pinned assembly weights.
    previous : tuple of ndarray, optional
        ``(x, y)`` from an earlier step, used to scale the program so that
        the expected solution has entries near one.

    Returns
    -------
    x, y : ndarray
        ``diag(W^-2)`` and ``diag(V^-2)`` over all channels.
    objective : float
        ``sum(x) + sum(y)``.
    """
    d = np.asarray(d, float)
    if np.any(d <= 0) or not np.all(np.isfinite(d)):
        raise ValueError("D-scalings must be positive and finite")
    n = np.asarray(n, complex)
    v_a = np.asarray(v_a, float)
    w_a = np.asarray(w_a, float)
    left, right = channel_sizes(port_dims, external)
    n_a, n_b, fa, fb = _split(port_dims, external)
    dl = _expand(d, left)
    dr = _expand(d, right)

    ra, rb = _ruiz_start(n, v_a, w_a, port_dims, external)
    if previous is None:
        sa, sb = ra * np.sqrt(dr), rb / np.sqrt(dl)
    else:
        px, py = previous
        sa = np.sqrt(dr / px)
        sb = 1.0 / np.sqrt(py * dl)
        # channels without coupling stay at the equilibration scale, otherwise
        # repeated steps would push them towards zero geometrically
        dead_a = ~np.any(n != 0, axis=0)
        dead_b = ~np.any(n != 0, axis=1)
        sa[dead_a] = (ra * np.sqrt(dr))[dead_a]
        sb[dead_b] = (rb / np.sqrt(dl))[dead_b]
    sa[fa:] = w_a * np.sqrt(dr[fa:])
    sb[fb:] = v_a / np.sqrt(dl[fb:])
    ns = sb[:, None] * n * sa[None, :]

    cost = np.concatenate([dr[:fa] / sa[:fa] ** 2, 1.0 / (sb[:fb] ** 2 * dl[:fb])])
    z = solve_diagonal_sdp(ns, cost, fa, fb, np.ones(fa + fb))
    x = np.empty(n_a)
    y = np.empty(n_b)
    x[fa:] = w_a**-2
    y[fb:] = v_a**-2
    x[:fa] = z[:fa] * dr[:fa] / sa[:fa] ** 2
    y[:fb] = z[fa:] / (sb[:fb] ** 2 * dl[:fb])
    x, y, good = _repair(n, x, y, d, port_dims, external)
    if not good:
        raise TranslationError("could not restore a strictly feasible point")
    return x, y, float(x.sum() + y.sum())


# --------------------------------------------------------------------------
# D step: log-convex scaled-norm minimization


def d_step(x, y, n, port_dims, external, d0=None, span=20.0):
    """
    Minimize ``||D_l^-1/2 V N W D_r^1/2||`` over ``d_1, ..., d_k`` with
    ``d_A = 1`` fixed (a common factor on all scalings cancels).

    Coordinate-wise bounded Brent searches in ``log d`` are followed by a
    Nelder-Mead polish. The returned point is never worse than `d0`.
    """
    k = len(port_dims)
    d0 = np.ones(k + 1) if d0 is None else np.asarray(d0, float) / float(d0[-1])

    left, right = channel_sizes(port_dims, external)
    m = (1.0 / np.sqrt(y))[:, None] * np.asarray(n, complex) * (1.0 / np.sqrt(x))[None, :]
    il = np.repeat(np.arange(k + 1), left)
    ir = np.repeat(np.arange(k + 1), right)

    def f(t):
        h = np.append(0.5 * t, 0.0)
        ms = np.exp(-h[il])[:, None] * m * np.exp(h[ir])[None, :]
        return float(la.svdvals(ms, check_finite=False)[0])

    t = np.log(d0[:k])
    best = f(t)
    start = best
    for _ in range(3):
        prev = best
        for j in range(k):
            def fj(s, j=j):
                tt = t.copy()
                tt[j] = s
                return f(tt)

            res = minimize_scalar(fj, bounds=(t[j] - span, t[j] + span), method="bounded",
                                  options={"xatol": 1e-4})
            if res.fun < best:
                t[j] = res.x
                best = res.fun
        if prev - best <= 1e-6 * max(prev, 1e-300):
            break
    if k > 1:
        res = minimize(f, t, method="Nelder-Mead",
                       options={"xatol": 1e-5, "fatol": 1e-9, "maxiter": 30 * k})
        if res.fun < best:
            t, best = res.x, float(res.fun)
    d = np.append(np.exp(t), 1.0)
    if best > start:
        d, best = d0, start
    return d, best


# --------------------------------------------------------------------------
# Alternation per frequency


@dataclass(frozen=True)
class PointSolution:
    """Result of the alternating scheme at one frequency."""

    x: np.ndarray
    y: np.ndarray
    d: np.ndarray
    objective: float
    history: tuple
    feasible: bool
    message: str = ""


def translate_point(n, v_a, w_a, port_dims, external, max_rounds=MAX_ROUNDS, rel_stop=REL_STOP):
    """
    Alternate :func:`vw_step` and :func:`d_step` from ``d = 1`` at a single
    frequency. The best point found is returned, so ``history`` (objective
    after each round) is non-increasing.
    """
    n = np.asarray(n, complex)
    k = len(port_dims)
    n_a, n_b, _, _ = _split(port_dims, external)
    if not np.all(np.isfinite(n)):
        return PointSolution(np.full(n_a, np.nan), np.full(n_b, np.nan), np.full(k + 1, np.nan),
                             np.nan, (), False, "coupling matrix N not finite")
    d = np.ones(k + 1)
    try:
        x, y, obj = vw_step(d, n, v_a, w_a, port_dims, external)
    except TranslationError as exc:
        # fall back to an inflated equilibrated point, always reachable
        ra, rb = _ruiz_start(n, v_a, w_a, port_dims, external)
        x, y, good = _repair(n, ra**-2, rb**-2, d, port_dims, external, max_iter=5000)
        if not good:
            return PointSolution(x, y, d, np.nan, (), False, str(exc))
        obj = float(x.sum() + y.sum())
    history = [obj]
    for _ in range(max_rounds - 1):
        d_new, _ = d_step(x, y, n, port_dims, external, d0=d)
        try:
            x_new, y_new, obj_new = vw_step(d_new, n, v_a, w_a, port_dims, external, (x, y))
        except TranslationError as exc:
            log.debug("vw step failed, keeping previous point: %s", exc)
            break
        improved = obj_new < obj
        rel = (obj - obj_new) / obj if obj > 0 else 0.0
        if improved:
            x, y, d, obj = x_new, y_new, d_new, obj_new
        history.append(obj)
        if rel < rel_stop:
            break
    return PointSolution(x, y, d, obj, tuple(history), True)


# --------------------------------------------------------------------------
# Weight sets


@dataclass(frozen=True)
class WeightSet:
    """
    Assembly and component weights on a frequency grid.

    ``v_comp[j]`` has shape ``(n_freq, m_j)`` and ``w_comp[j]`` shape
    ``(n_freq, p_j)``; ``v_a`` is ``(n_freq, p_A)`` and ``w_a`` is
    ``(n_freq, m_A)``. Infeasible frequencies hold NaN.
    """

    grid: FrequencyGrid
    port_dims: tuple
    external: tuple
    v_a: np.ndarray
    w_a: np.ndarray
    v_comp: tuple
    w_comp: tuple
    d_scalars: np.ndarray
    objective: np.ndarray
    feasible: np.ndarray
    rounds: np.ndarray = field(default=None)

    @property
    def n_components(self):
        return len(self.port_dims)

    def component(self, j):
        """``(v_j, w_j)`` of component `j`."""
        return self.v_comp[j], self.w_comp[j]

    def all_channels(self, i):
        """``(x, y)`` = ``(diag W^-2, diag V^-2)`` over all channels at grid point `i`."""
        w = np.concatenate([w[i] for w in self.w_comp] + [self.w_a[i]])
        v = np.concatenate([v[i] for v in self.v_comp] + [self.v_a[i]])
        return w**-2.0, v**-2.0


def design_relative_weights(h_a: FrfData, gamma, scale=1.0):
    """
    Assembly weights ``V_A = W_A = scale * I * (gamma ||H_A||)^-1/2``.

    With these weights ``||V_A E_A W_A|| < 1`` bounds the relative error
    ``||E_A|| / ||H_A||`` by ``gamma / scale**2``.

    Returns
    -------
    v_a : ndarray, shape (n_freq, p_A)
    w_a : ndarray, shape (n_freq, m_A)
    """
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    if not scale > 0:
        raise ValueError("scale must be positive")
    nrm = spectral_norms(h_a.samples)
    if np.any(h_a.invalid) or not np.all(np.isfinite(nrm)):
        raise ModelError("assembly FRF is invalid at some grid points")
    if np.any(nrm <= 0):
        hz = h_a.grid.points_hz[nrm <= 0]
        raise ModelError(f"assembly FRF norm is zero at {hz.size} point(s), first at {hz[0]:.4g} Hz")
    level = scale / np.sqrt(gamma * nrm)
    p_a, m_a = h_a.shape
    return np.repeat(level[:, None], p_a, axis=1), np.repeat(level[:, None], m_a, axis=1)


def _translate_chunk(args):
    n, v_a, w_a, port_dims, external, max_rounds = args
    return [translate_point(n[i], v_a[i], w_a[i], port_dims, external, max_rounds)
            for i in range(n.shape[0])]


def translate(n_samples, v_a, w_a, port_dims, external, grid: FrequencyGrid,
              max_rounds=MAX_ROUNDS, parallel=1) -> WeightSet:
    """
    Translate assembly weights into component weights at every grid point.

    Parameters
    ----------
    n_samples : ndarray, shape (n_freq, sum m + p_A, sum p + m_A)
        Coupling matrices from :func:`cmsguard.assembly.n_samples`.
    v_a, w_a : ndarray
        Assembly weights per frequency.
    port_dims : sequence of (m_j, p_j)
    external : (m_A, p_A)
    parallel : int
        Worker processes; frequencies are independent.

    Notes
    -----
    Frequencies where no certified point is found are flagged in
    ``feasible`` and logged; their weights are NaN.
    """
    port_dims = tuple((int(m), int(p)) for m, p in port_dims)
    external = (int(external[0]), int(external[1]))
    n_samples = np.asarray(n_samples, complex)
    v_a = np.asarray(v_a, float)
    w_a = np.asarray(w_a, float)
    nf = len(grid)
    left, right = channel_sizes(port_dims, external)
    if n_samples.shape != (nf, sum(left), sum(right)):
        raise ModelError(f"N samples have shape {n_samples.shape}, "
                         f"expected {(nf, sum(left), sum(right))}")
    if v_a.shape != (nf, external[1]) or w_a.shape != (nf, external[0]):
        raise ModelError("assembly weight shapes do not match the grid and external ports")
    if np.any(v_a <= 0) or np.any(w_a <= 0):
        raise ValueError("assembly weights must be positive")

    if parallel > 1 and nf > 1:
        from concurrent.futures import ProcessPoolExecutor

        chunks = np.array_split(np.arange(nf), min(parallel, nf))
        jobs = [(n_samples[c], v_a[c], w_a[c], port_dims, external, max_rounds) for c in chunks]
        with ProcessPoolExecutor(parallel) as ex:
            sols = [s for part in ex.map(_translate_chunk, jobs) for s in part]
    else:
        sols = _translate_chunk((n_samples, v_a, w_a, port_dims, external, max_rounds))

    k = len(port_dims)
    feasible = np.array([s.feasible for s in sols], bool)
    x = np.array([s.x if s.feasible else np.full(sum(right), np.nan) for s in sols])
    y = np.array([s.y if s.feasible else np.full(sum(left), np.nan) for s in sols])
    w_all = x**-0.5
    v_all = y**-0.5
    ofs_r = np.cumsum([0] + right)
    ofs_l = np.cumsum([0] + left)
    v_comp = tuple(v_all[:, ofs_l[j] : ofs_l[j + 1]] for j in range(k))
    w_comp = tuple(w_all[:, ofs_r[j] : ofs_r[j + 1]] for j in range(k))
    d = np.array([s.d if s.feasible else np.full(k + 1, np.nan) for s in sols])
    obj = np.array([s.objective if s.feasible else np.nan for s in sols])
    rounds = np.array([len(s.history) for s in sols], int)
    if not feasible.all():
        bad = grid.points_hz[~feasible]
        log.warning("requirement translation failed at %d of %d frequencies (first %.4g Hz); "
                    "no guarantee holds there", bad.size, nf, bad[0])
    return WeightSet(grid, port_dims, external, v_a.copy(), w_a.copy(), v_comp, w_comp, d, obj,
                     feasible, rounds)


# --------------------------------------------------------------------------
# Requirement checks and certificates


@dataclass(frozen=True)
class RequirementCheck:
    """Per-frequency scaled norms of an error against a requirement."""

    values: np.ndarray
    max_value: float
    satisfied: bool
    worst_frequency_hz: float
    form: str
    checked: np.ndarray


def check_requirement(error: FrfData, v, w, form="component", exclude=None) -> RequirementCheck:
    """
    Evaluate an error FRF against diagonal weights.

    Parameters
    ----------
    error : FrfData
        ``p x m`` error samples.
    v, w : ndarray
        Per-frequency weight diagonals. For ``form="component"`` the value is
        ``||diag(w)^-1 E diag(v)^-1||`` with `v` of length ``m`` and `w` of
        length ``p``. For ``form="assembly"`` it is ``||diag(v) E diag(w)||``
        with `v` of length ``p`` and `w` of length ``m``.
    exclude : ndarray of bool, optional
        Grid points to skip (for instance where translation failed).

    Notes
    -----
    Component requirements are non-strict (``<= 1``), assembly requirements
    strict (``< 1``), each with a slack of ``STRICT_SLACK``. Points with a
    non-finite value count as violations.
    """
    e = error.samples
    nf, p, m = e.shape
    v = np.broadcast_to(np.asarray(v, float), (nf, p if form == "assembly" else m))
    w = np.broadcast_to(np.asarray(w, float), (nf, m if form == "assembly" else p))
    if form == "component":
        scaled = e / w[:, :, None] / v[:, None, :]
    elif form == "assembly":
        scaled = v[:, :, None] * e * w[:, None, :]
    else:
        raise ValueError(f"unknown requirement form {form!r}")
    vals = spectral_norms(scaled)
    vals[error.invalid] = np.nan
    checked = np.ones(nf, bool) if exclude is None else ~np.asarray(exclude, bool)
    if exclude is not None and np.any(~checked):
        log.warning("requirement check skips %d flagged frequencies", int(np.sum(~checked)))
    considered = vals[checked]
    if considered.size == 0:
        return RequirementCheck(vals, np.nan, False, np.nan, form, checked)
    if np.any(~np.isfinite(considered)):
        worst = int(np.flatnonzero(checked)[np.flatnonzero(~np.isfinite(considered))[0]])
        return RequirementCheck(vals, np.inf, False, float(error.grid.points_hz[worst]), form,
                                checked)
    i = int(np.flatnonzero(checked)[np.argmax(considered)])
    top = float(vals[i])
    ok = top <= 1.0 + STRICT_SLACK if form == "component" else top < 1.0 + STRICT_SLACK
    return RequirementCheck(vals, top, bool(ok), float(error.grid.points_hz[i]), form, checked)


@dataclass(frozen=True)
class CertificateReport:
    passed: bool
    min_eigenvalues: np.ndarray
    violations: tuple
    skipped: tuple


def verify_certificate(weights: WeightSet, n_samples, tol=CERT_TOL) -> CertificateReport:
    """
    Rebuild the translation inequality at every feasible frequency and check
    that its unit-diagonal-scaled minimum eigenvalue is at least ``-tol``.
    """
    nf = len(weights.grid)
    mins = np.full(nf, np.nan)
    bad, skipped = [], []
    for i in range(nf):
        if not weights.feasible[i]:
            skipped.append(i)
            continue
        x, y = weights.all_channels(i)
        p = certificate_matrix(n_samples[i], x, y, weights.d_scalars[i], weights.port_dims,
                               weights.external)
        mins[i] = _unit_min_eig(p)
        if not mins[i] >= -tol:
            bad.append(i)
    return CertificateReport(not bad, mins, tuple(bad), tuple(skipped))


# --------------------------------------------------------------------------
# JSON export


def _arr(a):
    return [[None if not np.isfinite(v) else float(v) for v in row] for row in np.atleast_2d(a)]


def _unarr(rows):
    return np.array([[np.nan if v is None else v for v in row] for row in rows], float)


def weights_to_json(weights: WeightSet) -> str:
    """Serialize a weight set to a versioned JSON document."""
    doc = {
        "schema": JSON_SCHEMA_ID,
        "grid_rad": [float(v) for v in weights.grid.points_rad],
        "grid_description": weights.grid.description,
        "port_dims": [list(pd) for pd in weights.port_dims],
        "external": list(weights.external),
        "v_a": _arr(weights.v_a),
        "w_a": _arr(weights.w_a),
        "v_comp": [_arr(v) for v in weights.v_comp],
        "w_comp": [_arr(w) for w in weights.w_comp],
        "d_scalars": _arr(weights.d_scalars),
        "objective": [None if not np.isfinite(v) else float(v) for v in weights.objective],
        "feasible": [bool(f) for f in weights.feasible],
        "rounds": [int(r) for r in weights.rounds] if weights.rounds is not None else None,
    }
    return json.dumps(doc, sort_keys=True, indent=1)


def weights_from_json(text: str) -> WeightSet:
    doc = json.loads(text)
    if doc.get("schema") != JSON_SCHEMA_ID:
        raise ModelError(f"unsupported weight document schema {doc.get('schema')!r}")
    grid = FrequencyGrid(np.array(doc["grid_rad"], float), doc.get("grid_description", ""))
    nf = len(grid)

    def shaped(rows):
        a = _unarr(rows)
        return a.reshape(nf, -1)

    return WeightSet(
        grid,
        tuple(tuple(pd) for pd in doc["port_dims"]),
        tuple(doc["external"]),
        shaped(doc["v_a"]),
        shaped(doc["w_a"]),
        tuple(shaped(v) for v in doc["v_comp"]),
        tuple(shaped(w) for w in doc["w_comp"]),
        shaped(doc["d_scalars"]),
        np.array([np.nan if v is None else v for v in doc["objective"]], float),
        np.array(doc["feasible"], bool),
        None if doc.get("rounds") is None else np.array(doc["rounds"], int),
    )
