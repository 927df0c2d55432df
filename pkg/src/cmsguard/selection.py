"""
Eigenmode selection for Hintz-Herting reduced components.

Each strategy picks elastic free-interface modes from a preselected candidate
pool until the reduced component satisfies its accuracy requirement
``||W^-1 (H_reduced - H) V^-1|| <= 1`` on the whole grid. Iteration counters
follow a fixed accounting, see :func:`expected_iterations`.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass

import numpy as np

from .reduction import StiffnessFactor, hh_basis, reduce
from .requirements import STRICT_SLACK
from .structural import (
    FrequencyGrid,
    FrfData,
    ModelError,
    ModeSet,
    SecondOrderModel,
    frf_direct,
    spectral_norms,
)

__all__ = [
    "BruteForceBudgetError",
    "SelectionProblem",
    "SelectionResult",
    "METHODS",
    "DEFAULT_BRUTE_BUDGET",
    "brute_force_cost",
    "expected_iterations",
    "scaled_error_max",
    "rmi_a",
    "rmi_r",
    "select_frequency_ordered",
    "select_rmi_a_apriori",
    "select_rmi_a_incremental",
    "select_rmi_r_apriori",
    "select_rmi_r_incremental",
    "select_brute_force",
    "run_method",
]

log = logging.getLogger(__name__)

DEFAULT_BRUTE_BUDGET = 100_000


class BruteForceBudgetError(RuntimeError):
    """Exhaustive search would exceed the configured number of checks."""

    def __init__(self, estimate, budget, n_bar, max_card):
        self.estimate = estimate
        self.budget = budget
        super().__init__(
            f"brute force over {n_bar} candidate modes up to cardinality {max_card} needs "
            f"about {estimate:.3g} requirement checks, budget is {budget}"
        )


def brute_force_cost(n_bar, r):
    """``sum_{q=1}^{r} C(n_bar, q)``."""
    return sum(math.comb(n_bar, q) for q in range(1, r + 1))


class SelectionProblem:
    """
    Mode selection for one component against a fixed requirement.

    The HH basis is built once for the whole candidate pool. Reduced matrices
    of any subset are principal submatrices of the pool's reduced matrices,
    because the constraint and inertia-relief columns do not depend on the
    selection. Subset FRFs are cached by subset.

    Parameters
    ----------
    model : SecondOrderModel
        CMS-ready component with damping.
    modes : ModeSet
        Undamped modes of `model`.
    preselection : sequence of int
        Global ids of the elastic candidate modes.
    v, w : ndarray
        Component weights, shapes ``(n_freq, m)`` and ``(n_freq, p)``.
    grid : FrequencyGrid
    reference : FrfData, optional
        Full-order component FRF; computed if omitted.
    exclude : ndarray of bool, optional
        Frequencies without a translated requirement; skipped with a warning.
    """

    def __init__(self, model: SecondOrderModel, modes: ModeSet, preselection, v, w,
                 grid: FrequencyGrid, reference: FrfData | None = None, exclude=None):
        if not model.is_cms_ready:
            raise ModelError(f"{model.name}: boundary DOF must cover all input and output DOF")
        self.model = model
        self.modes = modes
        self.grid = grid
        self.candidates = tuple(sorted(int(i) for i in preselection))
        if any(i < modes.rigid_count or i >= len(modes) for i in self.candidates):
            raise ModelError("preselection must contain elastic mode ids only")
        nf = len(grid)
        self.v = np.broadcast_to(np.asarray(v, float), (nf, model.n_inputs))
        self.w = np.broadcast_to(np.asarray(w, float), (nf, model.n_outputs))
        self.exclude = np.zeros(nf, bool) if exclude is None else np.asarray(exclude, bool).copy()
        bad_weights = ~(np.all(np.isfinite(self.v) & (self.v > 0), axis=1)
                        & np.all(np.isfinite(self.w) & (self.w > 0), axis=1))
        if np.any(bad_weights & ~self.exclude):
            log.warning("%s: %d frequencies have no valid requirement and are excluded",
                        model.name, int(np.sum(bad_weights & ~self.exclude)))
            self.exclude |= bad_weights
        if np.any(self.exclude):
            log.warning("%s: selection ignores %d of %d grid points; no guarantee holds there",
                        model.name, int(self.exclude.sum()), nf)
        self.reference = reference if reference is not None else frf_direct(model, grid)
        if self.reference.shape != (model.n_outputs, model.n_inputs):
            raise ModelError("reference FRF does not match the model ports")

        self._factor = StiffnessFactor(model)
        self._basis = hh_basis(model, modes, self.candidates, self._factor, check_rank=False)
        red = reduce(model, self._basis).model
        self._m, self._c, self._k = red.mass, red.damping, red.stiffness
        self._b, self._f = red.input_map, red.output_map
        r_ir, r_eps, n_b = self._basis.counts
        self._ir = np.arange(r_ir)
        self._bnd = np.arange(r_ir + r_eps, r_ir + r_eps + n_b)
        self._pos = {mode: r_ir + i for i, mode in enumerate(self.candidates)}
        self._cache = {}
        self.frf_evals = 0

    @property
    def n_bar(self):
        return len(self.candidates)

    def frequency_of(self, mode_id):
        return float(self.modes.frequencies_rad[mode_id])

    def _key(self, subset):
        key = frozenset(int(i) for i in subset)
        unknown = key.difference(self.candidates)
        if unknown:
            raise ModelError(f"modes {sorted(unknown)} are not in the preselection")
        return key

    def reduced_frf(self, subset) -> FrfData:
        """FRF of the HH-reduced component keeping `subset`, from the cached projection."""
        key = self._key(subset)
        idx = np.concatenate([self._ir, [self._pos[i] for i in sorted(key)], self._bnd]).astype(int)
        sub = np.ix_(idx, idx)
        om = self.grid.points_rad[:, None, None]
        d = self._k[sub] - om**2 * self._m[sub] + 1j * om * self._c[sub]
        x = np.linalg.solve(d, np.broadcast_to(self._b[idx], (len(self.grid),) + self._b[idx].shape))
        return FrfData(self.grid, self._f[:, idx] @ x)

    def direct_reduced_frf(self, subset) -> FrfData:
        """Same FRF via a fresh basis and projection (cross-check path)."""
        key = self._key(subset)
        basis = hh_basis(self.model, self.modes, sorted(key), self._factor)
        return frf_direct(reduce(self.model, basis).model, self.grid)

    def scaled_values(self, subset) -> np.ndarray:
        """Per-frequency ``||W^-1 (H_subset - H) V^-1||``; excluded points are NaN."""
        key = self._key(subset)
        hit = self._cache.get(key)
        if hit is None:
            self.frf_evals += 1
            err = self.reduced_frf(key).samples - self.reference.samples
            vals = spectral_norms(err / self.w[:, :, None] / self.v[:, None, :])
            vals[self.reference.invalid] = np.inf
            vals[self.exclude] = np.nan
            vals.setflags(write=False)
            self._cache[key] = hit = vals
        return hit

    def satisfied(self, subset) -> bool:
        return scaled_error_max(self, subset) <= 1.0 + STRICT_SLACK


def scaled_error_max(problem: SelectionProblem, subset) -> float:
    """Largest scaled component error over the considered grid points."""
    vals = problem.scaled_values(subset)
    considered = vals[~problem.exclude]
    if considered.size == 0:
        return np.nan
    return float(np.max(considered))


def _rmi(problem, smaller, larger):
    a = problem.scaled_values(smaller)
    b = problem.scaled_values(larger)
    keep = ~problem.exclude
    diff = np.abs(a[keep] - b[keep])
    return float(np.max(diff, initial=0.0))


def rmi_a(problem: SelectionProblem, current, candidate) -> float:
    """Importance of adding `candidate` to `current`."""
    current = set(current)
    if candidate in current:
        raise ModelError(f"mode {candidate} is already selected")
    return _rmi(problem, current, current | {candidate})


def rmi_r(problem: SelectionProblem, current, member) -> float:
    """Importance of removing `member` from `current`."""
    current = set(current)
    if member not in current:
        raise ModelError(f"mode {member} is not selected")
    return _rmi(problem, current - {member}, current)


@dataclass(frozen=True)
class SelectionResult:
    """
    Outcome of one selection run.

    ``iterations`` counts requirement evaluations by the fixed accounting;
    ``frf_evals`` counts reduced FRF constructions actually performed.
    ``trace`` holds ``(action, mode, value)`` entries.
    """

    method: str
    selected: tuple
    satisfied: bool
    iterations: int
    frf_evals: int
    max_value: float
    n_bar: int
    trace: tuple = ()

    @property
    def count(self):
        return len(self.selected)


def expected_iterations(method, n_bar, r):
    """Iteration count each method must report for pool size `n_bar` and result size `r`."""
    table = {
        "freq_ordered": r,
        "rmi_a_apriori": n_bar + r,
        "rmi_a_incremental": (n_bar + 1) * r,
        "rmi_r_apriori": 2 * n_bar - r,
        "rmi_r_incremental": (n_bar + 1) * (n_bar - r),
        "brute_force": brute_force_cost(n_bar, r),
    }
    return table[method]


class _Run:
    def __init__(self, problem, method):
        self.problem = problem
        self.method = method
        self.iterations = 0
        self.trace = []
        self._evals0 = problem.frf_evals

    def check(self, subset, counted=True, action="check", mode=None):
        if counted:
            self.iterations += 1
        value = scaled_error_max(self.problem, subset)
        self.trace.append((action, mode, value))
        return value <= 1.0 + STRICT_SLACK

    def result(self, subset, satisfied):
        sel = tuple(sorted(subset))
        return SelectionResult(self.method, sel, bool(satisfied), self.iterations,
                               self.problem.frf_evals - self._evals0,
                               scaled_error_max(self.problem, sel), self.problem.n_bar,
                               tuple(self.trace))


def _add_order(problem, scores):
    # descending importance, lower eigenfrequency first on ties
    return sorted(scores, key=lambda i: (-scores[i], problem.frequency_of(i), i))


def _remove_order(problem, scores):
    # ascending importance, higher eigenfrequency first on ties
    return sorted(scores, key=lambda i: (scores[i], -problem.frequency_of(i), -i))


def select_frequency_ordered(problem: SelectionProblem) -> SelectionResult:
    """Add candidates by increasing eigenfrequency until satisfied."""
    run = _Run(problem, "freq_ordered")
    chosen = []
    if run.check(chosen, counted=False):
        return run.result(chosen, True)
    for mode in problem.candidates:
        chosen.append(mode)
        if run.check(chosen, action="add", mode=mode):
            return run.result(chosen, True)
    return run.result(chosen, False)


def select_rmi_a_apriori(problem: SelectionProblem) -> SelectionResult:
    """Rank all candidates once by ``RMI-A(empty, mode)``, then add in that order."""
    run = _Run(problem, "rmi_a_apriori")
    scores = {}
    for mode in problem.candidates:
        run.iterations += 1
        scores[mode] = rmi_a(problem, (), mode)
        run.trace.append(("score", mode, scores[mode]))
    chosen = []
    if run.check(chosen, counted=False):
        return run.result(chosen, True)
    for mode in _add_order(problem, scores):
        chosen.append(mode)
        if run.check(chosen, action="add", mode=mode):
            return run.result(chosen, True)
    return run.result(chosen, False)


def select_rmi_a_incremental(problem: SelectionProblem) -> SelectionResult:
    """Re-score every remaining candidate each round and add the most important."""
    run = _Run(problem, "rmi_a_incremental")
    chosen = []
    if run.check(chosen, counted=False):
        return run.result(chosen, True)
    remaining = list(problem.candidates)
    while remaining:
        # one round is charged n_bar scores plus one check
        run.iterations += problem.n_bar
        scores = {mode: rmi_a(problem, chosen, mode) for mode in remaining}
        mode = _add_order(problem, scores)[0]
        remaining.remove(mode)
        chosen.append(mode)
        if run.check(chosen, action="add", mode=mode):
            return run.result(chosen, True)
    return run.result(chosen, False)


def select_rmi_r_apriori(problem: SelectionProblem) -> SelectionResult:
    """
    Rank all candidates once by ``RMI-R(pool, mode)`` and remove in ascending
    order while the requirement still holds.
    """
    run = _Run(problem, "rmi_r_apriori")
    pool = set(problem.candidates)
    scores = {}
    for mode in problem.candidates:
        run.iterations += 1
        scores[mode] = rmi_r(problem, pool, mode)
        run.trace.append(("score", mode, scores[mode]))
    if not run.check(pool, counted=False):
        return run.result(pool, False)
    current = set(pool)
    for mode in _remove_order(problem, scores):
        trial = current - {mode}
        if not run.check(trial, counted=False, action="remove", mode=mode):
            break
        run.iterations += 1
        current = trial
    return run.result(current, True)


def select_rmi_r_incremental(problem: SelectionProblem) -> SelectionResult:
    """Re-score every member each round and remove the least important one."""
    run = _Run(problem, "rmi_r_incremental")
    current = set(problem.candidates)
    if not run.check(current, counted=False):
        return run.result(current, False)
    while current:
        scores = {mode: rmi_r(problem, current, mode) for mode in current}
        mode = _remove_order(problem, scores)[0]
        trial = current - {mode}
        if not run.check(trial, counted=False, action="remove", mode=mode):
            break
        run.iterations += problem.n_bar + 1
        current = trial
    return run.result(current, True)


def select_brute_force(problem: SelectionProblem, max_card=None,
                       budget=DEFAULT_BRUTE_BUDGET) -> SelectionResult:
    """
    Smallest satisfying subset by exhaustive search; lexicographically first
    among subsets of that size.

    Raises
    ------
    BruteForceBudgetError
        If the checks needed up to `max_card` (or up to the cardinality about
        to be searched) exceed `budget`.
    """
    n_bar = problem.n_bar
    top = n_bar if max_card is None else min(int(max_card), n_bar)
    if max_card is not None and brute_force_cost(n_bar, int(max_card)) > budget:
        raise BruteForceBudgetError(brute_force_cost(n_bar, int(max_card)), budget, n_bar,
                                    int(max_card))
    run = _Run(problem, "brute_force")
    if run.check((), counted=False):
        return run.result((), True)
    for q in range(1, top + 1):
        if brute_force_cost(n_bar, q) > budget:
            raise BruteForceBudgetError(brute_force_cost(n_bar, q), budget, n_bar, q)
        # the whole level is enumerated, then the first passing subset wins
        found = None
        for combo in itertools.combinations(problem.candidates, q):
            if run.check(combo, action="try") and found is None:
                found = combo
        if found is not None:
            return run.result(found, True)
    return run.result(problem.candidates, False)


METHODS = {
    "freq_ordered": select_frequency_ordered,
    "rmi_a_apriori": select_rmi_a_apriori,
    "rmi_a_incremental": select_rmi_a_incremental,
    "rmi_r_apriori": select_rmi_r_apriori,
    "rmi_r_incremental": select_rmi_r_incremental,
    "brute_force": select_brute_force,
}


def run_method(problem: SelectionProblem, method: str, **kwargs) -> SelectionResult:
    try:
        fn = METHODS[method]
    except KeyError:
        raise ValueError(f"unknown selection method {method!r}; choose from {sorted(METHODS)}") from None
    return fn(problem, **kwargs)
