"""Mollified absolute value used by the smooth-max recursion.

The kernel is eta = |.| convolved with a compactly supported bump
rho(s) ~ exp(-1/(1 - (2s)^2)) on |s| < 1/2, so that eta(t) = |t| holds
exactly for |t| >= 1/2, eta'' = 2*rho >= 0, and |t| <= eta(t) <= |t| + 1.
Closed-form reduction: with R(t) the cumulative density and
S(t) = int_{-1/2}^t s rho(s) ds,

    eta(t)  = t (2 R(t) - 1) - 2 S(t)
    eta'(t) = 2 R(t) - 1
    eta''(t) = 2 rho(t)

R and S are tabulated once on [0, 1/2] by composite Gauss-Legendre
prefix quadrature and interpolated by cubic Hermite cells with exact
endpoint slopes (rho and t*rho are analytic).  Evenness is exact because
evaluation folds through |t|.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import kernels

GRID_CELLS = 2048
NODES_PER_CELL = 8


@dataclass(frozen=True)
class EtaTables:
    """Uniform-grid data consumed by the evaluation kernels."""

    h: float
    ncells: int
    norm: float      # normalization constant of the bump density
    r: np.ndarray    # cumulative density R on the grid, R(0) = 1/2
    dr: np.ndarray   # rho on the grid (exact Hermite slopes for R)
    s: np.ndarray    # first-moment prefix S on the grid, S(1/2) = 0
    ds: np.ndarray   # t * rho on the grid (exact Hermite slopes for S)
    m1: float        # first absolute moment of rho


def _bump(s):
    out = np.zeros_like(s)
    inside = np.abs(s) < 0.5
    si = s[inside]
    out[inside] = np.exp(-1.0 / (1.0 - 4.0 * si * si))
    return out


def _build_tables(ncells=GRID_CELLS, nodes=NODES_PER_CELL) -> EtaTables:
    half = 0.5
    h = half / ncells
    gl_x, gl_w = np.polynomial.legendre.leggauss(nodes)

    edges = np.linspace(0.0, half, ncells + 1)
    mid = 0.5 * (edges[:-1] + edges[1:])
    # quadrature nodes per cell, shape (ncells, nodes)
    xs = mid[:, None] + 0.5 * h * gl_x[None, :]
    ws = 0.5 * h * gl_w[None, :]

    raw = _bump(xs)
    cell_mass = np.sum(raw * ws, axis=1)
    total_half = float(np.sum(cell_mass))
    norm = 1.0 / (2.0 * total_half)

    r = np.empty(ncells + 1)
    r[0] = 0.5
    np.cumsum(norm * cell_mass, out=r[1:])
    r[1:] += 0.5

    cell_smom = np.sum(raw * xs * ws, axis=1) * norm
    total_smom = float(np.sum(cell_smom))
    s = np.empty(ncells + 1)
    s[0] = -total_smom
    np.cumsum(cell_smom, out=s[1:])
    s[1:] -= total_smom
    s[-1] = 0.0

    grid = edges
    dr = norm * _bump(grid)
    ds = grid * dr
    return EtaTables(h=h, ncells=ncells, norm=norm, r=r, dr=dr,
                     s=s, ds=ds, m1=2.0 * total_smom)


@lru_cache(maxsize=4)
def _cached_tables(ncells, nodes):
    return _build_tables(ncells, nodes)


class EtaKernel:
    """Evaluation handle around the precomputed tables."""

    def __init__(self, ncells: int = GRID_CELLS, nodes: int = NODES_PER_CELL):
        self.tables = _cached_tables(ncells, nodes)

    @property
    def m1(self) -> float:
        """First absolute moment of the mollifier; equals eta(0)."""
        return self.tables.m1

    def rho(self, t):
        t = np.asarray(t, dtype=np.float64)
        return self.tables.norm * _bump(t)

    def jet_batch(self, t):
        """(eta, eta', eta'') at an array of arguments."""
        return kernels.backend().eta_jet_batch(
            np.asarray(t, dtype=np.float64), self.tables)

    def jet(self, t: float):
        """(eta, eta', eta'') at a scalar argument."""
        e, ep, epp = self.jet_batch(np.array([t]))
        return float(e[0]), float(ep[0]), float(epp[0])


_default = None


def default_kernel() -> EtaKernel:
    global _default
    if _default is None:
        _default = EtaKernel()
    return _default


def eta_jet(t: float):
    """(eta(t), eta'(t), eta''(t)) with the default kernel."""
    return default_kernel().jet(t)
