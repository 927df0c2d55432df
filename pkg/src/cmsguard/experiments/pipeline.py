"""
Configuration-driven runs: build components, translate the assembly
requirement, select modes per component and check the reduced assembly a
posteriori against the full one.
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..assembly import Interconnection, block_diag_frf, couple, n_samples, relative_error
from ..reduction import hh_basis, reduce
from ..requirements import (
    STRICT_SLACK,
    design_relative_weights,
    translate,
    verify_certificate,
)
from ..selection import (
    BruteForceBudgetError,
    SelectionProblem,
    expected_iterations,
    run_method,
)
from ..structural import (
    FrequencyGrid,
    FrfData,
    ModelError,
    SecondOrderModel,
    apply_modal_damping,
    beam_dof,
    build_euler_beam,
    frf_direct,
    solve_undamped_modes,
    spectral_norms,
    with_ports,
)
from .config import ConfigError, ExperimentConfig, read_matrix, safe_eval

__all__ = [
    "Component",
    "System",
    "AposterioriResult",
    "RunReport",
    "build_system",
    "preselect",
    "cutoff_selection",
    "verify_aposteriori",
    "standard_cutoff_baseline",
    "translate_system",
    "run_point",
    "run_pipeline",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Component:
    id: str
    model: SecondOrderModel
    modes: object
    reduce: bool
    frf: FrfData


@dataclass(frozen=True)
class System:
    components: tuple
    interconnection: Interconnection
    grid: FrequencyGrid
    f_max: float
    params: dict

    @property
    def h_b(self):
        return block_diag_frf([c.frf for c in self.components])

    def reduced_ids(self):
        return [c.id for c in self.components if c.reduce]


# --------------------------------------------------------------------------
# building


def _dof(ref, clamped):
    if isinstance(ref, int):
        return ref
    return beam_dof(ref["node"], ref.get("kind", "w"), clamped)


def _build_model(spec, base_dir):
    name = spec["id"]
    if "beam" in spec:
        b = spec["beam"]
        clamped = b.get("clamped", True)
        model = build_euler_beam(b["length"], b["elements"], b["area"], b["second_moment"],
                                 b["youngs"], b["density"], clamped_end=clamped, name=name)
    else:
        mats = spec["matrices"]
        clamped = True

        def load(key):
            p = Path(mats[key])
            return read_matrix(p if p.is_absolute() else Path(base_dir) / p)

        m, k = load("mass"), load("stiffness")
        c = load("damping") if "damping" in mats else None
        n = m.shape[0]
        model = SecondOrderModel(m, c, k, np.zeros((n, 0)), np.zeros((0, n)), name=name)
    inputs = [_dof(r, clamped) for r in spec["inputs"]]
    outputs = [_dof(r, clamped) for r in spec["outputs"]]
    boundary = [_dof(r, clamped) for r in spec["boundary"]] if "boundary" in spec else None
    try:
        model = with_ports(model, inputs, outputs, boundary)
    except IndexError:
        raise ConfigError(f"component {name!r}: port DOF index out of range") from None
    if not model.is_cms_ready:
        raise ConfigError(f"component {name!r}: every input and output DOF must be a boundary DOF")
    modes = solve_undamped_modes(model)
    ratio = spec.get("damping_ratio", 0.0)
    if ratio:
        model = apply_modal_damping(model, modes, ratio)
    return model, modes


_COMPONENT_CACHE: dict = {}


def build_system(config: ExperimentConfig, value=None) -> System:
    """
    Components, full FRFs and the numeric interconnection at one sweep value.

    Component models and FRFs do not depend on interconnection parameters and
    are cached across sweep values with the same grid.
    """
    params, g = config.parameters_at(value)
    grid = FrequencyGrid.logspace_hz(g["f_min"], g["f_max"], g["count"])
    comps = []
    for spec in config.raw["components"]:
        key = (json.dumps(spec, sort_keys=True), config.base_dir, g["f_min"], g["f_max"],
               g["count"])
        hit = _COMPONENT_CACHE.get(key)
        if hit is None:
            model, modes = _build_model(spec, config.base_dir)
            hit = Component(spec["id"], model, modes, bool(spec.get("reduce", True)),
                            frf_direct(model, grid))
            if len(_COMPONENT_CACHE) > 64:
                _COMPONENT_CACHE.clear()
            _COMPONENT_CACHE[key] = hit
        comps.append(hit)
    ic = config.raw["interconnection"]
    mat = np.array([[safe_eval(e, params) for e in row] for row in ic["matrix"]], float)
    port_dims = [(c.model.n_inputs, c.model.n_outputs) for c in comps]
    try:
        kc = Interconnection(mat, port_dims, tuple(ic["external"]))
    except ModelError as exc:
        raise ConfigError(str(exc)) from None
    return System(tuple(comps), kc, grid, float(g["f_max"]), params)


def preselect(component: Component, f_limit_hz):
    """Elastic mode ids with eigenfrequency at most `f_limit_hz`."""
    f = component.modes.frequencies_hz
    return [int(i) for i in component.modes.elastic_ids if f[i] <= f_limit_hz]


def cutoff_selection(component: Component, multiplier, f_max):
    """Standard selection: every elastic mode up to ``multiplier * f_max``."""
    return preselect(component, multiplier * f_max)


def reduced_frf(component: Component, selection, grid) -> FrfData:
    basis = hh_basis(component.model, component.modes, selection)
    return frf_direct(reduce(component.model, basis).model, grid)


# --------------------------------------------------------------------------
# checks


@dataclass(frozen=True)
class AposterioriResult:
    """
    Assembly accuracy of a reduced assembly against the full one.

    ``verdict`` uses the weighted form ``||V_A E_A W_A|| < 1`` when weights
    are given and ``||E_A|| / ||H_A|| < gamma`` otherwise.
    """

    relative_errors: np.ndarray
    weighted: np.ndarray | None
    verdict: bool
    max_relative_error: float


def verify_aposteriori(full_components, reduced_components, kc: Interconnection, gamma,
                       grid: FrequencyGrid, weights=None) -> AposterioriResult:
    """
    Couple full and reduced component FRFs and compare the assembly FRFs.

    Parameters
    ----------
    full_components, reduced_components : sequence of FrfData
    kc : Interconnection
    gamma : float
        Relative error bound used when `weights` is omitted.
    weights : (v_a, w_a), optional
        Assembly weights; the verdict is then the strict weighted form.
    """
    for f in list(full_components) + list(reduced_components):
        if not f.grid.same_as(grid):
            raise ModelError("component FRF grid differs from the check grid")
    full = couple(block_diag_frf(full_components), kc)
    red = couple(block_diag_frf(reduced_components), kc)
    err = red.h_a - full.h_a
    rel = relative_error(err, full.h_a)
    weighted = None
    if weights is not None:
        v_a, w_a = weights
        weighted = spectral_norms(v_a[:, :, None] * err.samples * w_a[:, None, :])
        ok = np.all(np.isfinite(weighted)) and bool(np.all(weighted < 1.0 + STRICT_SLACK))
    else:
        ok = np.all(np.isfinite(rel)) and bool(np.all(rel < gamma))
    top = float(np.nanmax(rel)) if np.any(np.isfinite(rel)) else math.nan
    return AposterioriResult(rel, weighted, bool(ok), top)


def translate_system(system: System, gamma, scale, max_rounds=20, parallel=1):
    """Assembly FRF, assembly weights, N samples and translated weights."""
    h_b = system.h_b
    h_a = couple(h_b, system.interconnection).h_a
    v_a, w_a = design_relative_weights(h_a, gamma, scale)
    n = n_samples(h_b, system.interconnection)
    ws = translate(n, v_a, w_a, system.interconnection.port_dims, system.interconnection.external,
                   system.grid, max_rounds=max_rounds, parallel=parallel)
    return h_a, ws, n


def standard_cutoff_baseline(system: System, multiplier, gamma, weights=None):
    """
    Reduce every reducible component with all elastic modes up to
    ``multiplier * f_max`` and check the assembly a posteriori.

    Returns
    -------
    counts : dict
        Selected mode count per reduced component.
    check : AposterioriResult
    """
    counts, full, red = {}, [], []
    for c in system.components:
        full.append(c.frf)
        if c.reduce:
            sel = cutoff_selection(c, multiplier, system.f_max)
            counts[c.id] = len(sel)
            red.append(reduced_frf(c, sel, system.grid))
        else:
            red.append(c.frf)
    check = verify_aposteriori(full, red, system.interconnection, gamma, system.grid, weights)
    return counts, check


# --------------------------------------------------------------------------
# full runs


@dataclass
class RunReport:
    """
    Tables produced by a run.

    ``rows`` has one entry per sweep point and method (selection methods and
    cut-off baselines), ``curves`` the per-frequency relative errors in long
    format and ``translation`` a per-point summary of the weight
    translation. ``timings`` holds wall-clock seconds and is kept apart from
    the deterministic content.
    """

    config_name: str
    config_hash: str
    sweep_parameter: str | None
    component_ids: list
    rows: list = field(default_factory=list)
    curves: list = field(default_factory=list)
    translation: list = field(default_factory=list)
    timings: list = field(default_factory=list)

    @property
    def guarantees_verified(self):
        """
        True if every selection run that reports component compliance also
        passes the a-posteriori assembly check, and all certificates pass.
        """
        for row in self.rows:
            if row["kind"] != "selection":
                continue
            if row["error"] and not row["error"].startswith("budget"):
                return False
            if row["component_satisfied"] and not row["assembly_satisfied"]:
                return False
            if row["error"] == "" and not row["component_satisfied"]:
                return False
        return all(t["certificate_passed"] for t in self.translation)


def _clean(v):
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else None
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def _row(sweep_param, value, method, kind, ids):
    row = {"sweep_parameter": sweep_param or "", "sweep_value": value, "method": method,
           "kind": kind, "r_total": None}
    for cid in ids:
        row[f"r_{cid}"] = None
        row[f"n_bar_{cid}"] = None
        row[f"selected_{cid}"] = ""
        row[f"iterations_{cid}"] = None
        row[f"frf_evals_{cid}"] = None
        row[f"counter_ok_{cid}"] = None
    row.update({"component_satisfied": None, "assembly_satisfied": None,
                "max_relative_error": None, "max_weighted_error": None, "error": ""})
    return row


def run_point(config: ExperimentConfig, value=None, methods=None, brute_budget=None,
              baselines=None, translate_parallel=1):
    """
    One sweep point: returns ``(rows, curves, translation_row, timings)``.

    Stage failures are recorded in the rows instead of raised.
    """
    raw = config.raw
    methods = list(config.methods if methods is None else methods)
    baselines = raw["baselines"] if baselines is None else baselines
    budget = raw["brute_budget"] if brute_budget is None else brute_budget
    gamma = raw["requirement"]["gamma"]
    scale = raw["requirement"]["scale"]
    sp = config.sweep_parameter
    ids = [c["id"] for c in raw["components"] if c.get("reduce", True)]
    timings = {"sweep_value": value}
    rows, curves = [], []

    t0 = time.perf_counter()
    try:
        system = build_system(config, value)
    except (ModelError, ConfigError) as exc:
        row = _row(sp, value, "", "error", ids)
        row["error"] = f"build: {exc}"
        return [row], [], None, timings
    timings["build"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    h_a, ws, n = translate_system(system, gamma, scale, parallel=translate_parallel)
    cert = verify_certificate(ws, n)
    timings["translate"] = time.perf_counter() - t0
    trans = {
        "sweep_value": value,
        "grid_points": len(system.grid),
        "feasible_points": int(ws.feasible.sum()),
        "certificate_passed": bool(cert.passed and ws.feasible.all()),
        "min_certificate_eig": _clean(np.nanmin(cert.min_eigenvalues)),
        "max_rounds": int(ws.rounds.max()),
    }
    weights = (ws.v_a, ws.w_a)
    exclude = ~ws.feasible
    full_frfs = [c.frf for c in system.components]
    mult = raw["preselection_multiplier"]

    problems = {}
    for j, c in enumerate(system.components):
        if c.reduce:
            v, w = ws.component(j)
            problems[c.id] = SelectionProblem(c.model, c.modes,
                                              preselect(c, mult * system.f_max), v, w,
                                              system.grid, c.frf, exclude)

    def record_check(row, label, red_frfs):
        chk = verify_aposteriori(full_frfs, red_frfs, system.interconnection, gamma,
                                 system.grid, weights)
        row["assembly_satisfied"] = chk.verdict
        row["max_relative_error"] = _clean(chk.max_relative_error)
        row["max_weighted_error"] = _clean(np.nanmax(chk.weighted))
        for f, e in zip(system.grid.points_hz, chk.relative_errors):
            curves.append({"sweep_value": value, "method": label, "freq_hz": _clean(f),
                           "relative_error": _clean(e)})

    for method in methods:
        t0 = time.perf_counter()
        row = _row(sp, value, method, "selection", ids)
        red_frfs, sats, total = [], [], 0
        try:
            for c in system.components:
                if not c.reduce:
                    red_frfs.append(c.frf)
                    continue
                prob = problems[c.id]
                kw = {"budget": budget} if method == "brute_force" else {}
                res = run_method(prob, method, **kw)
                row[f"r_{c.id}"] = res.count
                row[f"n_bar_{c.id}"] = res.n_bar
                row[f"selected_{c.id}"] = " ".join(str(i) for i in res.selected)
                row[f"iterations_{c.id}"] = res.iterations
                row[f"frf_evals_{c.id}"] = res.frf_evals
                row[f"counter_ok_{c.id}"] = res.iterations == expected_iterations(
                    method, res.n_bar, res.count)
                sats.append(res.satisfied)
                total += res.count
                red_frfs.append(reduced_frf(c, res.selected, system.grid))
            row["r_total"] = total
            row["component_satisfied"] = all(sats)
            record_check(row, method, red_frfs)
        except BruteForceBudgetError as exc:
            row["error"] = f"budget: {exc}"
        except (ModelError, np.linalg.LinAlgError) as exc:
            row["error"] = f"{type(exc).__name__}: {exc}"
        rows.append(row)
        timings[method] = time.perf_counter() - t0

    for mult_b in baselines:
        t0 = time.perf_counter()
        label = f"cutoff_{mult_b:g}x"
        row = _row(sp, value, label, "baseline", ids)
        try:
            red_frfs, total = [], 0
            for c in system.components:
                if not c.reduce:
                    red_frfs.append(c.frf)
                    continue
                sel = cutoff_selection(c, mult_b, system.f_max)
                row[f"r_{c.id}"] = len(sel)
                row[f"selected_{c.id}"] = " ".join(str(i) for i in sel)
                total += len(sel)
                red_frfs.append(reduced_frf(c, sel, system.grid))
            row["r_total"] = total
            record_check(row, label, red_frfs)
        except (ModelError, np.linalg.LinAlgError) as exc:
            row["error"] = f"{type(exc).__name__}: {exc}"
        rows.append(row)
        timings[label] = time.perf_counter() - t0
    rows = [{k: _clean(v) for k, v in r.items()} for r in rows]
    return rows, curves, trans, timings


def _point_job(args):
    config, value, methods, budget, baselines = args
    return run_point(config, value, methods, budget, baselines)


def run_pipeline(config: ExperimentConfig, methods=None, brute_budget=None, baselines=None,
                 parallel=1, sweep=True) -> RunReport:
    """
    Run every sweep point (or only the base parameters if `sweep` is False).

    Sweep points are independent; with ``parallel > 1`` they run in worker
    processes and are merged in sweep order.
    """
    values = config.sweep_values if sweep else [None]
    ids = [c["id"] for c in config.raw["components"] if c.get("reduce", True)]
    report = RunReport(config.name, config.digest(), config.sweep_parameter if sweep else None,
                       ids)
    jobs = [(config, v, methods, brute_budget, baselines) for v in values]
    if parallel > 1 and len(jobs) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(min(parallel, len(jobs))) as ex:
            results = list(ex.map(_point_job, jobs))
    else:
        results = [_point_job(j) for j in jobs]
    for rows, curves, trans, timings in results:
        report.rows.extend(rows)
        report.curves.extend(curves)
        if trans is not None:
            report.translation.append(trans)
        report.timings.append(timings)
    return report


def selection_row_lookup(report: RunReport, method, value=None):
    """Rows of `method` (optionally at one sweep value)."""
    return [r for r in report.rows if r["method"] == method
            and (value is None or r["sweep_value"] == value)]
