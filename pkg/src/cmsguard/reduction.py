"""
Hintz-Herting component mode synthesis.

The reduction basis combines inertia-relief modes, free-interface elastic
modes uncoupled from the boundary DOF, and static constraint modes::

    T = [[Phi_ir, Phi_eps, Psi],
         [  O   ,    O   ,  I ]]

with rows in internal/boundary partition. Here ``T`` is stored in the
component's own DOF order; boundary rows are exactly ``[O O I]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

from .structural import (
    FrfData,
    ModeSet,
    ModelError,
    SecondOrderModel,
    check_compatible,
)

__all__ = [
    "SingularBlockError",
    "StiffnessFactor",
    "HhBasis",
    "ReducedComponent",
    "constraint_modes",
    "inertia_relief_modes",
    "uncoupled_elastic_modes",
    "assemble_basis",
    "hh_basis",
    "reduce",
    "component_error",
]

RANK_TOL = 1e-10


class SingularBlockError(ModelError):
    """The internal stiffness block K_ii cannot be factorized."""


def _partition(model: SecondOrderModel):
    return np.array(model.internal_dofs, int), np.array(model.boundary_dofs, int)


class StiffnessFactor:
    """
    Cached factorization of ``K_ii`` shared by all HH mode computations.

    Raises
    ------
    SingularBlockError
        If ``K_ii`` is singular, e.g. for a floating component whose
        boundary DOF do not suppress all rigid-body motion.
    """

    def __init__(self, model: SecondOrderModel):
        self.name = model.name
        ii, _ = _partition(model)
        kii = model.stiffness[np.ix_(ii, ii)]
        if kii.size == 0:
            self._factor = None
            return
        try:
            self._factor = la.cho_factor(kii, check_finite=False)
        except la.LinAlgError:
            raise SingularBlockError(
                f"{model.name}: internal stiffness block K_ii is singular "
                "(floating substructure without sufficient boundary DOF?)"
            ) from None
        # Cholesky diagonals are square roots of pivots; a pivot ratio near
        # machine precision means the block is singular up to rounding
        d = np.diag(self._factor[0]) ** 2
        if d.min() <= 1e-12 * d.max():
            raise SingularBlockError(f"{model.name}: internal stiffness block K_ii is singular")

    def solve(self, rhs):
        rhs = np.asarray(rhs, float)
        if self._factor is None:
            return np.zeros_like(rhs)
        return la.cho_solve(self._factor, rhs, check_finite=False)


def constraint_modes(model: SecondOrderModel, factor: StiffnessFactor | None = None) -> np.ndarray:
    """Static constraint modes ``Psi = -K_ii^-1 K_ib`` (``n_i x n_b``)."""
    ii, bb = _partition(model)
    factor = factor or StiffnessFactor(model)
    return -factor.solve(model.stiffness[np.ix_(ii, bb)])


def inertia_relief_modes(model: SecondOrderModel, modes: ModeSet, psi,
                         factor: StiffnessFactor | None = None) -> np.ndarray:
    """
    Inertia-relief modes ``-K_ii^-1 (M_ib + M_ii Psi) Phi_r,b``.

    One column per rigid-body mode in `modes`; empty when there are none.
    """
    ii, bb = _partition(model)
    if modes.rigid_count == 0:
        return np.zeros((ii.size, 0))
    factor = factor or StiffnessFactor(model)
    m = model.mass
    load = (m[np.ix_(ii, bb)] + m[np.ix_(ii, ii)] @ psi) @ modes.rigid[bb, :]
    return -factor.solve(load)


def uncoupled_elastic_modes(model: SecondOrderModel, modes: ModeSet, psi, selection) -> np.ndarray:
    """
    Elastic modes uncoupled from the boundary, ``Phi_e,i - Psi Phi_e,b``.

    `selection` holds global mode indices into `modes`; they must all refer
    to elastic modes.
    """
    ii, bb = _partition(model)
    sel = np.asarray(list(selection), int)
    if sel.size == 0:
        return np.zeros((ii.size, 0))
    if sel.min() < modes.rigid_count or sel.max() >= len(modes):
        raise ModelError(f"{model.name}: selection must index elastic modes only")
    phi = modes.shapes[:, sel]
    return phi[ii, :] - psi @ phi[bb, :]


@dataclass(frozen=True)
class HhBasis:
    """
    Hintz-Herting reduction basis of one component.

    ``transform`` is the ``n x r`` matrix ``T`` in the component's DOF
    order; reduced coordinates are ordered ``[inertia relief, elastic,
    boundary]``.
    """

    constraint_modes: np.ndarray
    inertia_relief: np.ndarray
    uncoupled_elastic: np.ndarray
    selected_mode_ids: tuple
    boundary_count: int
    transform: np.ndarray

    @property
    def size(self) -> int:
        return self.transform.shape[1]

    @property
    def counts(self):
        """``(r_ir, r_eps, r_b)``."""
        return self.inertia_relief.shape[1], self.uncoupled_elastic.shape[1], self.boundary_count


def assemble_basis(psi, phi_ir, phi_eps, n_b, internal_dofs=None, boundary_dofs=None,
                   selected_mode_ids=(), check_rank=True) -> HhBasis:
    """
    Stack the HH modes into ``T``.

    Without DOF index lists the rows are ordered internal-then-boundary, as
    in the textbook partition. With them, rows are scattered back to the
    component DOF order.
    """
    psi = np.atleast_2d(np.asarray(psi, float)).reshape(-1, n_b)
    n_i = psi.shape[0]
    phi_ir = np.asarray(phi_ir, float).reshape(n_i, -1)
    phi_eps = np.asarray(phi_eps, float).reshape(n_i, -1)
    top = np.hstack([phi_ir, phi_eps, psi])
    r_q = phi_ir.shape[1] + phi_eps.shape[1]
    bottom = np.hstack([np.zeros((n_b, r_q)), np.eye(n_b)])
    if internal_dofs is None:
        t = np.vstack([top, bottom])
    else:
        t = np.empty((n_i + n_b, r_q + n_b))
        t[np.asarray(internal_dofs, int)] = top
        t[np.asarray(boundary_dofs, int)] = bottom
    if check_rank and t.size:
        # columns carry different units (inertia relief modes are tiny), so
        # judge independence after normalizing them
        norms = np.linalg.norm(t, axis=0)
        if np.any(norms == 0):
            raise ModelError("HH transformation matrix has a zero column")
        s = np.linalg.svd(t / norms, compute_uv=False)
        if s[-1] <= RANK_TOL * s[0]:
            raise ModelError("HH transformation matrix is rank deficient")
    t.setflags(write=False)
    return HhBasis(psi, phi_ir, phi_eps, tuple(int(i) for i in selected_mode_ids), n_b, t)


def hh_basis(model: SecondOrderModel, modes: ModeSet, selection, factor=None,
             check_rank=True) -> HhBasis:
    """Full HH basis of `model` keeping the elastic modes in `selection`."""
    factor = factor or StiffnessFactor(model)
    psi = constraint_modes(model, factor)
    phi_ir = inertia_relief_modes(model, modes, psi, factor)
    phi_eps = uncoupled_elastic_modes(model, modes, psi, selection)
    return assemble_basis(psi, phi_ir, phi_eps, len(model.boundary_dofs), model.internal_dofs,
                          model.boundary_dofs, selection, check_rank)


@dataclass(frozen=True)
class ReducedComponent:
    model: SecondOrderModel
    basis: HhBasis
    parent_id: str


def reduce(model: SecondOrderModel, basis: HhBasis | np.ndarray) -> ReducedComponent:
    """
    Project `model` onto the basis: ``T^T M T``, ``T^T C T``, ``T^T K T``,
    ``T^T B`` and ``F T``. The boundary DOF become the trailing coordinates.
    """
    t = basis.transform if isinstance(basis, HhBasis) else np.asarray(basis, float)
    if t.shape[0] != model.n:
        raise ModelError(f"{model.name}: basis has {t.shape[0]} rows, model has {model.n} DOF")

    tl = t.astype(np.longdouble)

    def cong(a):
        # extended precision keeps the static condensation free of cancellation noise
        r = tl.T @ (a.astype(np.longdouble) @ tl)
        return (0.5 * (r + r.T)).astype(float)

    r = t.shape[1]
    nb = basis.boundary_count if isinstance(basis, HhBasis) else len(model.boundary_dofs)
    red = SecondOrderModel(
        cong(model.mass),
        cong(model.damping),
        cong(model.stiffness),
        t.T @ model.input_map,
        model.output_map @ t,
        boundary_dofs=tuple(range(r - nb, r)) if isinstance(basis, HhBasis) else model.boundary_dofs,
        name=f"{model.name}~",
    )
    if not isinstance(basis, HhBasis):
        basis = HhBasis(np.zeros((0, 0)), np.zeros((0, 0)), np.zeros((0, 0)), (), nb, t)
    return ReducedComponent(red, basis, model.name)


def component_error(full_frf: FrfData, reduced_frf: FrfData) -> FrfData:
    """Component error ``H_reduced - H_full`` at every grid point."""
    check_compatible(full_frf, reduced_frf)
    return reduced_frf - full_frf
