"""Residual a posteriori indicators for the P1 discretization.

Per cell T the jump part j(T) collects h_F ||[A grad W] . n||^2_{L2(F)} over
the edges of T (interior edges only, both neighbours count the edge), the
data part is d(T) = h_T ||g||_{L2(T)}, and e(T)^2 = j(T)^2 + d(T)^2. The
interior residual of P1 with piecewise-constant coefficients vanishes, so no
separate volume residual term appears.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import quadrature as quadr
from .fem import BilinearFormSpec, FeFunction, _p1_gradients, _cell_values
from .forcing import LineForcing
from .mesh import Mesh


@dataclass(frozen=True)
class IndicatorSet:
    """Squared per-cell indicators aligned with mesh.active_id_array."""

    ids: np.ndarray
    jump_sq: np.ndarray
    data_sq: np.ndarray

    @cached_property
    def jump(self) -> np.ndarray:
        return np.sqrt(self.jump_sq)

    @cached_property
    def data(self) -> np.ndarray:
        return np.sqrt(self.data_sq)

    @cached_property
    def total(self) -> np.ndarray:
        return np.sqrt(self.jump_sq + self.data_sq)

    @property
    def global_jump(self) -> float:
        return float(np.sqrt(self.jump_sq.sum()))

    @property
    def global_data(self) -> float:
        return float(np.sqrt(self.data_sq.sum()))

    @property
    def global_total(self) -> float:
        return float(np.sqrt(self.jump_sq.sum() + self.data_sq.sum()))


def jump_indicator_sq(mesh: Mesh, w: FeFunction,
                      form: BilinearFormSpec) -> np.ndarray:
    """Per-cell j(T)^2, aligned with active cell positions."""
    jsq = np.zeros(mesh.num_cells)
    verts, left, right = mesh.interior_edge_arrays
    if len(verts) == 0:
        return jsq
    grads = np.einsum("mdi,mi->md", _p1_gradients(mesh), _cell_values(w))
    p0 = mesh.coords[verts[:, 0]]
    p1 = mesh.coords[verts[:, 1]]
    tang = p1 - p0
    h_f = np.sqrt((tang * tang).sum(-1))
    normal = np.stack([tang[:, 1], -tang[:, 0]], axis=1) / h_f[:, None]

    diff = grads[left] - grads[right]
    if form.a_field is None:
        norm_sq = h_f * (diff * normal).sum(-1) ** 2
    else:
        # A is continuous across interior edges, so the flux jump at x is
        # n^T A(x) (grad_L - grad_R); integrate its square by 3-point Gauss.
        gx, gw = quadr.GAUSS3_X, quadr.GAUSS3_W
        pts = p0[:, None, :] + gx[None, :, None] * tang[:, None, :]
        a_q = form.a_at(pts.reshape(-1, 2)).reshape(len(verts), -1, 2, 2)
        jn = np.einsum("ei,eqij,ej->eq", normal, a_q, diff)
        norm_sq = h_f * ((jn * jn) @ gw)
    contrib = h_f * norm_sq
    np.add.at(jsq, left, contrib)
    np.add.at(jsq, right, contrib)
    return jsq


def estimate(mesh: Mesh, w: FeFunction, forcing,
             form: BilinearFormSpec) -> IndicatorSet:
    """Jump and data indicators for the current Galerkin solution."""
    jsq = jump_indicator_sq(mesh, w, form)
    d = forcing.data_indicator(mesh)
    return IndicatorSet(mesh.active_id_array, jsq, d * d)


def surrogate_data_indicator(mesh: Mesh, curve, data) -> IndicatorSet:
    """Data-only indicators h_T^(1/2) ||f||_{L2(T cap gamma)}."""
    d = LineForcing(curve, data).data_indicator(mesh)
    return IndicatorSet(mesh.active_id_array, np.zeros(mesh.num_cells), d * d)
