"""
Second-order structural component models.

Finite element beam generation, undamped modal analysis, modal damping and
frequency response evaluation (direct solve and modal superposition).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg as la

__all__ = [
    "ModelError",
    "SecondOrderModel",
    "ModeSet",
    "FrequencyGrid",
    "FrfData",
    "beam_element",
    "build_euler_beam",
    "solve_undamped_modes",
    "apply_modal_damping",
    "frf_direct",
    "frf_modal",
    "rigid_mode_count",
    "beam_dof",
    "with_ports",
    "spectral_norms",
    "check_compatible",
]

SYMMETRY_TOL = 1e-12
RIGID_ABS_TOL = 1e-6
RIGID_REL_TOL = 1e-4
MAX_RIGID_MODES = 6


class ModelError(ValueError):
    """Invalid model data or an operation that cannot be carried out on it."""


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


def _symmetry_defect(a):
    nrm = np.linalg.norm(a)
    if nrm == 0.0:
        return 0.0
    return np.linalg.norm(a - a.T) / nrm


@dataclass(frozen=True)
class SecondOrderModel:
    """
    Linear second-order model ``M q'' + C q' + K q = B u``, ``y = F q``.

    Parameters
    ----------
    mass, damping, stiffness : (n, n) array_like
        Mass, viscous damping and stiffness matrices.
    input_map : (n, m) array_like
        Maps input forces onto the DOF.
    output_map : (p, n) array_like
        Selects displacement outputs from the DOF.
    boundary_dofs : sequence of int
        Ordered boundary (interface) DOF indices. The remaining DOF are the
        internal ones, taken in ascending order.
    labels : sequence of str, optional
        Per-DOF names.
    name : str
        Component identifier used in error messages.
    """

    mass: np.ndarray
    damping: np.ndarray
    stiffness: np.ndarray
    input_map: np.ndarray
    output_map: np.ndarray
    boundary_dofs: tuple = ()
    labels: tuple | None = None
    name: str = "component"

    def __post_init__(self):
        m = _frozen(self.mass)
        k = _frozen(self.stiffness)
        n = m.shape[0]
        if m.shape != (n, n) or k.shape != (n, n):
            raise ModelError(f"{self.name}: mass and stiffness must be square and equal size")
        c = _frozen(np.zeros((n, n)) if self.damping is None else self.damping)
        if c.shape != (n, n):
            raise ModelError(f"{self.name}: damping must be {n}x{n}")
        b = _frozen(np.atleast_2d(self.input_map))
        f = _frozen(np.atleast_2d(self.output_map))
        if b.shape[0] != n:
            raise ModelError(f"{self.name}: input_map must have {n} rows, got {b.shape[0]}")
        if f.shape[1] != n:
            raise ModelError(f"{self.name}: output_map must have {n} columns, got {f.shape[1]}")
        if _symmetry_defect(m) > SYMMETRY_TOL:
            raise ModelError(f"{self.name}: mass matrix is not symmetric")
        if _symmetry_defect(k) > SYMMETRY_TOL:
            raise ModelError(f"{self.name}: stiffness matrix is not symmetric")
        bdofs = tuple(int(i) for i in self.boundary_dofs)
        if len(set(bdofs)) != len(bdofs):
            raise ModelError(f"{self.name}: boundary DOF indices must be unique")
        if any(i < 0 or i >= n for i in bdofs):
            raise ModelError(f"{self.name}: boundary DOF index out of range")
        if self.labels is not None and len(self.labels) != n:
            raise ModelError(f"{self.name}: need one label per DOF")
        object.__setattr__(self, "mass", m)
        object.__setattr__(self, "damping", c)
        object.__setattr__(self, "stiffness", k)
        object.__setattr__(self, "input_map", b)
        object.__setattr__(self, "output_map", f)
        object.__setattr__(self, "boundary_dofs", bdofs)
        if self.labels is not None:
            object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def n(self) -> int:
        return self.mass.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.input_map.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.output_map.shape[0]

    @property
    def internal_dofs(self) -> tuple:
        b = set(self.boundary_dofs)
        return tuple(i for i in range(self.n) if i not in b)

    @property
    def is_cms_ready(self) -> bool:
        """True if inputs and outputs touch boundary DOF only."""
        idx = list(self.internal_dofs)
        if not idx:
            return True
        return not (np.any(self.input_map[idx, :]) or np.any(self.output_map[:, idx]))

    def check_definiteness(self):
        """Raise :class:`ModelError` unless M is PD and K is PSD."""
        try:
            np.linalg.cholesky(self.mass)
        except np.linalg.LinAlgError:
            raise ModelError(f"{self.name}: mass matrix is not positive definite") from None
        ev = np.linalg.eigvalsh(self.stiffness)
        if ev[0] < -1e-9 * max(abs(ev[-1]), 1.0):
            raise ModelError(f"{self.name}: stiffness matrix is indefinite")

    def replace(self, **changes) -> "SecondOrderModel":
        kw = dict(
            mass=self.mass,
            damping=self.damping,
            stiffness=self.stiffness,
            input_map=self.input_map,
            output_map=self.output_map,
            boundary_dofs=self.boundary_dofs,
            labels=self.labels,
            name=self.name,
        )
        kw.update(changes)
        return SecondOrderModel(**kw)


@dataclass(frozen=True)
class ModeSet:
    """
    Mass-normalised undamped eigenpairs, rigid-body modes first.

    Attributes
    ----------
    frequencies_rad : (nm,) ndarray
        Ascending circular eigenfrequencies; rigid modes are stored as 0.
    shapes : (n, nm) ndarray
        Mass-normalised mode shapes, one per column.
    rigid_count : int
        Number of leading rigid-body modes.
    """

    frequencies_rad: np.ndarray
    shapes: np.ndarray
    rigid_count: int = 0

    def __post_init__(self):
        object.__setattr__(self, "frequencies_rad", _frozen(self.frequencies_rad))
        object.__setattr__(self, "shapes", _frozen(np.atleast_2d(self.shapes)))
        if self.shapes.shape[1] != self.frequencies_rad.size:
            raise ModelError("one frequency per mode shape required")

    def __len__(self):
        return self.frequencies_rad.size

    @property
    def frequencies_hz(self) -> np.ndarray:
        return self.frequencies_rad / (2 * np.pi)

    @property
    def rigid(self) -> np.ndarray:
        return self.shapes[:, : self.rigid_count]

    @property
    def elastic(self) -> np.ndarray:
        return self.shapes[:, self.rigid_count :]

    @property
    def elastic_frequencies_rad(self) -> np.ndarray:
        return self.frequencies_rad[self.rigid_count :]

    @property
    def elastic_ids(self) -> np.ndarray:
        """Global indices (into this set) of the elastic modes."""
        return np.arange(self.rigid_count, len(self))


@dataclass(frozen=True)
class FrequencyGrid:
    """Strictly positive, strictly ascending circular frequency grid [rad/s]."""

    points_rad: np.ndarray
    description: str = ""

    def __post_init__(self):
        w = _frozen(np.ravel(self.points_rad))
        if w.size == 0:
            raise ModelError("frequency grid is empty")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise ModelError("frequency grid must be finite and strictly positive")
        if np.any(np.diff(w) <= 0):
            raise ModelError("frequency grid must be strictly ascending")
        object.__setattr__(self, "points_rad", w)

    @classmethod
    def logspace_hz(cls, f_min, f_max, count):
        """Log-spaced grid including both endpoints, given in Hz."""
        if not (0 < f_min < f_max) or count < 2:
            raise ModelError("need 0 < f_min < f_max and count >= 2")
        f = np.logspace(np.log10(f_min), np.log10(f_max), int(count))
        return cls(2 * np.pi * f, f"log-spaced {f_min:g}-{f_max:g} Hz, {int(count)} points")

    @property
    def points_hz(self) -> np.ndarray:
        return self.points_rad / (2 * np.pi)

    def __len__(self):
        return self.points_rad.size

    def same_as(self, other: "FrequencyGrid") -> bool:
        return len(self) == len(other) and np.array_equal(self.points_rad, other.points_rad)


@dataclass(frozen=True)
class FrfData:
    """
    Complex frequency response samples on a grid.

    ``samples[i]`` is the ``p x m`` response matrix at ``grid.points_rad[i]``.
    Points where the response could not be computed are marked in
    ``invalid`` and hold NaN.
    """

    grid: FrequencyGrid
    samples: np.ndarray
    row_ports: tuple | None = None
    col_ports: tuple | None = None
    invalid: np.ndarray | None = None

    def __post_init__(self):
        s = np.array(self.samples, dtype=complex)
        if s.ndim != 3 or s.shape[0] != len(self.grid):
            raise ModelError(f"samples must be (n_freq, p, m) with n_freq={len(self.grid)}")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)
        inv = np.zeros(s.shape[0], bool) if self.invalid is None else np.array(self.invalid, bool)
        inv.setflags(write=False)
        object.__setattr__(self, "invalid", inv)
        if self.row_ports is not None:
            object.__setattr__(self, "row_ports", tuple(self.row_ports))
        if self.col_ports is not None:
            object.__setattr__(self, "col_ports", tuple(self.col_ports))

    @property
    def shape(self):
        return self.samples.shape[1:]

    def __sub__(self, other: "FrfData") -> "FrfData":
        check_compatible(self, other)
        return FrfData(self.grid, self.samples - other.samples, self.row_ports, self.col_ports,
                       self.invalid | other.invalid)

    def norms(self) -> np.ndarray:
        """Spectral norm of every sample."""
        return spectral_norms(self.samples)


def check_compatible(a: FrfData, b: FrfData):
    if not a.grid.same_as(b.grid):
        raise ModelError("FRF grids differ")
    if a.shape != b.shape:
        raise ModelError(f"FRF dimensions differ: {a.shape} vs {b.shape}")


def spectral_norms(samples: np.ndarray) -> np.ndarray:
    """Largest singular value of each matrix in a stack (NaN stays NaN)."""
    s = np.asarray(samples)
    if s.shape[-1] == 1 or s.shape[-2] == 1:
        return np.sqrt(np.sum(np.abs(s) ** 2, axis=(-2, -1)))
    out = np.full(s.shape[:-2], np.nan)
    ok = np.all(np.isfinite(s), axis=(-2, -1))
    if np.any(ok):
        out[ok] = np.linalg.norm(s[ok], ord=2, axis=(-2, -1))
    return out


# ---------------------------------------------------------------------------
# Finite element beam
# ---------------------------------------------------------------------------


def beam_element(length, area, second_moment, youngs, density):
    """
    Cubic Hermite Euler-Bernoulli bending element.

    DOF order is ``[w1, theta1, w2, theta2]``.

    Returns
    -------
    ke, me : (4, 4) ndarray
        Element stiffness and consistent mass matrices.
    """
    le = float(length)
    ei = youngs * second_moment
    ke = ei / le**3 * np.array(
        [
            [12.0, 6 * le, -12.0, 6 * le],
            [6 * le, 4 * le**2, -6 * le, 2 * le**2],
            [-12.0, -6 * le, 12.0, -6 * le],
            [6 * le, 2 * le**2, -6 * le, 4 * le**2],
        ]
    )
    me = density * area * le / 420.0 * np.array(
        [
            [156.0, 22 * le, 54.0, -13 * le],
            [22 * le, 4 * le**2, 13 * le, -3 * le**2],
            [54.0, 13 * le, 156.0, -22 * le],
            [-13 * le, -3 * le**2, -22 * le, 4 * le**2],
        ]
    )
    return ke, me


def build_euler_beam(length, elem_count, area, second_moment, youngs, density,
                     clamped_end=True, name="beam"):
    """
    Uniform planar Euler-Bernoulli beam (bending only).

    Nodes are numbered ``0 .. elem_count`` from the (optionally clamped)
    left end. Every node carries a transverse translation and a rotation.
    When `clamped_end` is true, node 0 is removed, so the model has
    ``2 * elem_count`` DOF and DOF ``2*(node-1)`` is the translation of
    ``node``. The input and output maps are empty (``n x 0``, ``0 x n``); see
    :func:`with_ports` to attach ports. Damping is zero.
    """
    if int(elem_count) < 1 or int(elem_count) != elem_count:
        raise ModelError("elem_count must be a positive integer")
    for label, v in (("length", length), ("area", area), ("second_moment", second_moment),
                     ("youngs", youngs), ("density", density)):
        if not (np.isfinite(v) and v > 0):
            raise ModelError(f"{label} must be positive, got {v}")
    ne = int(elem_count)
    ke, me = beam_element(length / ne, area, second_moment, youngs, density)
    nd = 2 * (ne + 1)
    k = np.zeros((nd, nd))
    m = np.zeros((nd, nd))
    for e in range(ne):
        s = slice(2 * e, 2 * e + 4)
        k[s, s] += ke
        m[s, s] += me
    labels = [f"{kind}{node}" for node in range(ne + 1) for kind in ("w", "th")]
    if clamped_end:
        k, m, labels = k[2:, 2:], m[2:, 2:], labels[2:]
    n = k.shape[0]
    return SecondOrderModel(m, np.zeros((n, n)), k, np.zeros((n, 0)), np.zeros((0, n)),
                            labels=labels, name=name)


def beam_dof(node, kind="w", clamped_end=True):
    """DOF index of `node` (``kind`` ``'w'`` or ``'th'``) in a beam from :func:`build_euler_beam`."""
    off = {"w": 0, "th": 1}[kind]
    base = node - 1 if clamped_end else node
    if base < 0:
        raise ModelError(f"node {node} is clamped")
    return 2 * base + off


def with_ports(model: SecondOrderModel, inputs: Sequence[int], outputs: Sequence[int],
               boundary: Sequence[int] | None = None) -> SecondOrderModel:
    """
    Attach unit point-force inputs and displacement outputs at DOF indices.

    The boundary DOF default to the ordered union of input and output DOF, so
    the model is CMS ready.
    """
    n = model.n
    b = np.zeros((n, len(inputs)))
    for j, i in enumerate(inputs):
        b[i, j] = 1.0
    f = np.zeros((len(outputs), n))
    for j, i in enumerate(outputs):
        f[j, i] = 1.0
    if boundary is None:
        boundary = list(dict.fromkeys(list(inputs) + list(outputs)))
    return model.replace(input_map=b, output_map=f, boundary_dofs=tuple(boundary))


# ---------------------------------------------------------------------------
# Modal analysis
# ---------------------------------------------------------------------------


def rigid_mode_count(omegas) -> int:
    """
    Count leading rigid-body modes in an ascending frequency list.

    A mode is rigid if its frequency is below ``1e-6`` rad/s, or below
    ``1e-4`` times the first elastic frequency (detected as the first
    frequency exceeding all its predecessors by that factor, looking at most
    ``MAX_RIGID_MODES`` modes deep).
    """
    w = np.asarray(omegas, float)
    count = int(np.sum(w < RIGID_ABS_TOL))
    for e in range(min(MAX_RIGID_MODES, w.size - 1), count, -1):
        if w[e - 1] < RIGID_REL_TOL * w[e]:
            return e
    return count


def solve_undamped_modes(model: SecondOrderModel, cutoff_rad=np.inf) -> ModeSet:
    """
    Solve ``(K - w^2 M) phi = 0`` for all modes with ``w <= cutoff_rad``.

    Uses a dense symmetric-definite generalized eigensolver. Rigid modes are
    detected with :func:`rigid_mode_count` and their frequency is set to 0.
    """
    if not cutoff_rad > 0:
        raise ModelError("cutoff_rad must be positive")
    try:
        lam, phi = la.eigh(model.stiffness, model.mass)
    except la.LinAlgError as exc:
        raise ModelError(f"{model.name}: eigensolver failed ({exc}); mass matrix singular?") from exc
    lam = _rayleigh_quotients(model, phi)
    omega = np.sqrt(np.clip(lam, 0.0, None))
    nr = rigid_mode_count(omega)
    omega[:nr] = 0.0
    keep = omega <= cutoff_rad
    # eigh returns ascending values, so `keep` is a prefix
    return ModeSet(omega[keep], phi[:, keep], min(nr, int(keep.sum())))


def _rayleigh_quotients(model, phi):
    # extended precision; sharpens eigenvalues of the lightly damped low modes
    p = phi.astype(np.longdouble)
    kp = np.einsum("ij,ik,kj->j", p, model.stiffness.astype(np.longdouble), p)
    mp = np.einsum("ij,ik,kj->j", p, model.mass.astype(np.longdouble), p)
    return (kp / mp).astype(float)


def apply_modal_damping(model: SecondOrderModel, modes: ModeSet, ratio) -> SecondOrderModel:
    """
    Return `model` with damping ``M Phi diag(2 ratio w) Phi^T M``.

    Built from the elastic modes in `modes`; rigid modes stay undamped.
    """
    if not 0 <= ratio < 1:
        raise ModelError("damping ratio must lie in [0, 1)")
    if modes.shapes.shape[0] != model.n:
        raise ModelError("mode shapes do not match model size")
    mphi = model.mass @ modes.elastic
    c = (mphi * (2 * ratio * modes.elastic_frequencies_rad)) @ mphi.T
    c = 0.5 * (c + c.T)
    return model.replace(damping=c)


# ---------------------------------------------------------------------------
# Frequency response
# ---------------------------------------------------------------------------


def _dynamic_solve(m, c, k, b, f, omegas, refine=2):
    """
    F (-w^2 M + i w C + K)^-1 B for each w, singular points flagged.

    The dynamic stiffness is factorized in double precision; `refine` steps
    of iterative refinement then use residuals formed in extended precision
    from the exact matrix data. Near lightly damped resonances this removes
    the error caused by rounding D itself, which otherwise dominates.
    """
    out = np.empty((omegas.size, f.shape[0], b.shape[1]), complex)
    bad = np.zeros(omegas.size, bool)
    if m.shape[0] == 0:
        out[:] = 0.0
        return out, bad
    if refine:
        ml, cl, kl = (a.astype(np.longdouble) for a in (m, c, k))
        bl = b.astype(np.longdouble)
    for i, w in enumerate(omegas):
        d = -(w**2) * m + 1j * w * c + k
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", la.LinAlgWarning)
            lu = la.lu_factor(d, check_finite=False)
        if not np.all(np.abs(np.diag(lu[0])) > 0):
            bad[i] = True
            continue
        x = la.lu_solve(lu, b, check_finite=False)
        if refine:
            wl = np.longdouble(w)
            xl = x.astype(np.clongdouble)
            for _ in range(refine):
                r = bl - (kl @ xl - (wl * wl) * (ml @ xl) + (1j * wl) * (cl @ xl))
                xl = xl + la.lu_solve(lu, r.astype(complex), check_finite=False)
            x = xl.astype(complex)
        out[i] = f @ x
    bad |= ~np.all(np.isfinite(out), axis=(1, 2))
    out[bad] = np.nan
    return out, bad


def frf_direct(model: SecondOrderModel, grid: FrequencyGrid, refine=2) -> FrfData:
    """
    FRF by factorizing the complex dynamic stiffness at every grid point.

    `refine` sets the number of extended-precision refinement steps (0 for a
    plain solve).

    Points where the dynamic stiffness is singular (an undamped model hit
    exactly at resonance) are flagged in ``invalid`` and hold NaN.
    """
    out, bad = _dynamic_solve(model.mass, model.damping, model.stiffness, model.input_map,
                              model.output_map, grid.points_rad, refine)
    return FrfData(grid, out, invalid=bad)


def frf_modal(modes: ModeSet, model: SecondOrderModel, grid: FrequencyGrid,
              subset=None) -> FrfData:
    """
    FRF by superposition of the modes in `subset` (default: all).

    Each mode contributes ``(F phi)(phi^T B) / (w_l^2 - w^2 + i w c_l)`` with
    the modal damping ``c_l = phi^T C phi``; rigid modes contribute
    ``(F phi)(phi^T B) / (-w^2)``. Exact for damping diagonalised by the
    modes, e.g. :func:`apply_modal_damping` over the full mode set.
    """
    idx = np.arange(len(modes)) if subset is None else np.asarray(list(subset), int)
    if idx.size and (idx.min() < 0 or idx.max() >= len(modes)):
        raise ModelError("mode subset index out of range")
    w = grid.points_rad
    phi = modes.shapes[:, idx]
    fp = model.output_map @ phi
    pb = phi.T @ model.input_map
    wl = modes.frequencies_rad[idx]
    cl = np.einsum("ij,ik,kj->j", phi, model.damping, phi) if idx.size else np.zeros(0)
    den = wl[None, :] ** 2 - w[:, None] ** 2 + 1j * w[:, None] * cl[None, :]
    out = np.einsum("pl,fl,lm->fpm", fp, 1.0 / den, pb)
    return FrfData(grid, out)
