"""
Flexible coupling of component FRFs through an interconnection matrix.

The interconnection maps stacked component outputs and external inputs to
stacked component inputs and external outputs::

    [u_B]   [K_BB  K_BA] [y_B]
    [y_A] = [K_AB   O  ] [u_A]
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .structural import FrfData, ModelError, check_compatible, spectral_norms

__all__ = [
    "ConditioningWarning",
    "Interconnection",
    "AssemblyFrf",
    "block_diag_frf",
    "couple",
    "assembly_error",
    "build_n",
    "n_samples",
    "relative_error",
]

log = logging.getLogger(__name__)

COND_LIMIT = 1e12


class ConditioningWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class Interconnection:
    """
    Numeric, frequency-independent interconnection matrix.

    Parameters
    ----------
    matrix : array_like
        Full ``(sum m_j + p_A) x (sum p_j + m_A)`` matrix.
    port_dims : sequence of (m_j, p_j)
        Input and output counts of each component.
    external : (m_A, p_A)
        Number of external inputs and outputs.
    """

    matrix: np.ndarray
    port_dims: tuple
    external: tuple

    def __post_init__(self):
        k = np.array(self.matrix, float)
        dims = tuple((int(m), int(p)) for m, p in self.port_dims)
        m_a, p_a = (int(v) for v in self.external)
        sm = sum(m for m, _ in dims)
        sp = sum(p for _, p in dims)
        if k.shape != (sm + p_a, sp + m_a):
            raise ModelError(
                f"interconnection must be {(sm + p_a, sp + m_a)} for the given port dims, got {k.shape}"
            )
        if not np.all(np.isfinite(k)):
            raise ModelError("interconnection has non-finite entries")
        if np.any(k[sm:, sp:] != 0):
            raise ModelError("lower-right (external feedthrough) block must be zero")
        k.setflags(write=False)
        object.__setattr__(self, "matrix", k)
        object.__setattr__(self, "port_dims", dims)
        object.__setattr__(self, "external", (m_a, p_a))

    @classmethod
    def from_blocks(cls, k_bb, k_ba, k_ab, port_dims):
        k_bb, k_ba, k_ab = (np.atleast_2d(np.asarray(a, float)) for a in (k_bb, k_ba, k_ab))
        m_a, p_a = k_ba.shape[1], k_ab.shape[0]
        full = np.block([[k_bb, k_ba], [k_ab, np.zeros((p_a, m_a))]])
        return cls(full, port_dims, (m_a, p_a))

    @property
    def sum_m(self):
        return sum(m for m, _ in self.port_dims)

    @property
    def sum_p(self):
        return sum(p for _, p in self.port_dims)

    @property
    def k_bb(self):
        return self.matrix[: self.sum_m, : self.sum_p]

    @property
    def k_ba(self):
        return self.matrix[: self.sum_m, self.sum_p :]

    @property
    def k_ab(self):
        return self.matrix[self.sum_m :, : self.sum_p]

    @property
    def n_components(self):
        return len(self.port_dims)


@dataclass(frozen=True)
class AssemblyFrf:
    h_a: FrfData
    per_component_h: tuple
    condition: np.ndarray | None = None


def block_diag_frf(components) -> FrfData:
    """Stack component FRFs into ``H_B = diag(H_1, ..., H_k)``."""
    components = list(components)
    if not components:
        raise ModelError("need at least one component FRF")
    g = components[0].grid
    for c in components[1:]:
        if not c.grid.same_as(g):
            raise ModelError("component FRF grids differ")
    sp = sum(c.shape[0] for c in components)
    sm = sum(c.shape[1] for c in components)
    out = np.zeros((len(g), sp, sm), complex)
    i = j = 0
    bad = np.zeros(len(g), bool)
    for c in components:
        p, m = c.shape
        out[:, i : i + p, j : j + m] = c.samples
        bad |= c.invalid
        i, j = i + p, j + m
    return FrfData(g, out, invalid=bad)


def _check_dims(h_b: FrfData, kc: Interconnection):
    if h_b.shape != (kc.sum_p, kc.sum_m):
        raise ModelError(f"H_B is {h_b.shape}, interconnection expects {(kc.sum_p, kc.sum_m)}")


def couple(h_b: FrfData, kc: Interconnection, components=None) -> AssemblyFrf:
    """
    Assembly FRF ``K_AB H_B (I - K_BB H_B)^-1 K_BA`` at every grid point.

    Points where the resolvent has condition number above ``COND_LIMIT`` are
    flagged invalid and a :class:`ConditioningWarning` is issued.
    """
    _check_dims(h_b, kc)
    h = h_b.samples
    eye = np.eye(kc.sum_m)
    res = eye - kc.k_bb @ h
    cond = np.linalg.cond(res) if kc.sum_m else np.ones(len(h_b.grid))
    bad = h_b.invalid | ~np.isfinite(cond) | (cond > COND_LIMIT)
    out = np.full((len(h_b.grid), kc.external[1], kc.external[0]), np.nan, complex)
    ok = ~bad
    if np.any(ok):
        x = np.linalg.solve(res[ok], np.broadcast_to(kc.k_ba, (int(ok.sum()),) + kc.k_ba.shape))
        out[ok] = kc.k_ab @ h[ok] @ x
    if np.any(bad & ~h_b.invalid):
        hz = h_b.grid.points_hz[bad & ~h_b.invalid]
        warnings.warn(f"ill-conditioned coupling resolvent at {hz.size} point(s), "
                      f"first at {hz[0]:.4g} Hz", ConditioningWarning, stacklevel=2)
    h_a = FrfData(h_b.grid, out, invalid=bad)
    return AssemblyFrf(h_a, tuple(components or ()), cond)


def assembly_error(full: AssemblyFrf, reduced: AssemblyFrf) -> FrfData:
    """``E_A = H_A,reduced - H_A,full``."""
    check_compatible(full.h_a, reduced.h_a)
    return reduced.h_a - full.h_a


def build_n(h_b_sample, kc: Interconnection, check=True) -> np.ndarray:
    """
    The ``(sum m + p_A) x (sum p + m_A)`` matrix mapping component errors to
    the assembly error at one frequency::

        N = [[K_BB (I - H_B K_BB)^-1,  (I - K_BB H_B)^-1 K_BA],
             [K_AB (I - H_B K_BB)^-1,            O          ]]

    With `check`, the resolvent inverse and the push-through identity
    ``K_BB (I - H_B K_BB)^-1 = (I - K_BB H_B)^-1 K_BB`` are verified.
    """
    h = np.asarray(h_b_sample, complex)
    if h.shape != (kc.sum_p, kc.sum_m):
        raise ModelError(f"H_B sample is {h.shape}, expected {(kc.sum_p, kc.sum_m)}")
    if not np.all(np.isfinite(h)):
        raise ModelError("H_B sample is not finite")
    kbb, kba, kab = kc.k_bb, kc.k_ba, kc.k_ab
    left = np.eye(kc.sum_p) - h @ kbb
    right = np.eye(kc.sum_m) - kbb @ h
    try:
        inv_l = np.linalg.inv(left)
        inv_r = np.linalg.inv(right)
    except np.linalg.LinAlgError:
        raise ModelError("coupling resolvent is singular") from None
    n11 = kbb @ inv_l
    n12 = inv_r @ kba
    n21 = kab @ inv_l
    if check:
        scale = max(1.0, np.abs(n11).max(initial=0.0))
        if np.abs(inv_l @ left - np.eye(kc.sum_p)).max(initial=0.0) > 1e-8 * np.linalg.cond(left):
            raise ModelError("coupling resolvent inverse is inaccurate")
        if np.abs(n11 - inv_r @ kbb).max(initial=0.0) > 1e-8 * scale * np.linalg.cond(left):
            raise ModelError("push-through identity violated; resolvent ill-conditioned")
    m_a, p_a = kc.external
    return np.block([[n11, n12], [n21, np.zeros((p_a, m_a))]])


def n_samples(h_b: FrfData, kc: Interconnection) -> np.ndarray:
    """:func:`build_n` at every valid grid point; invalid points hold NaN."""
    _check_dims(h_b, kc)
    m_a, p_a = kc.external
    out = np.full((len(h_b.grid), kc.sum_m + p_a, kc.sum_p + m_a), np.nan, complex)
    for i, h in enumerate(h_b.samples):
        if h_b.invalid[i]:
            continue
        try:
            out[i] = build_n(h, kc)
        except ModelError as exc:
            log.warning("N not available at %.4g Hz: %s", h_b.grid.points_hz[i], exc)
    return out


def relative_error(e_a: FrfData, h_a: FrfData) -> np.ndarray:
    """
    ``||E_A|| / ||H_A||`` (spectral norms) per grid point.

    Points where ``||H_A|| = 0`` or either FRF is invalid give NaN.
    """
    check_compatible(e_a, h_a)
    num = spectral_norms(e_a.samples)
    den = spectral_norms(h_a.samples)
    out = np.full(num.shape, np.nan)
    ok = (den > 0) & np.isfinite(den) & np.isfinite(num)
    out[ok] = num[ok] / den[ok]
    if np.any(den == 0):
        log.warning("assembly FRF norm is zero at %d point(s); relative error undefined",
                    int(np.sum(den == 0)))
    return out
