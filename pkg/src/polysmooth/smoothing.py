"""Smooth-max regularization of a polytope's face functionals.

Level k combines the previous smooth maximum with face k through the
mollified absolute value:

    f_k = (f_{k-1} + u_k + eta(rate_k (f_{k-1} - u_k)) / rate_k) / 2

with geometrically increasing rates.  The recursion keeps the exact max
outside a band of width 1/rate_k and is convex, C^infinity, and within
1/rate_k of the max everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .eta import EtaKernel, default_kernel


@dataclass(frozen=True)
class SmoothingSchedule:
    """Band-width ladder: rate of level k is gamma^(-k) * lambda0."""

    gamma: float
    lambda0: float

    def __post_init__(self):
        if not 0.0 < self.gamma < 0.5:
            raise ValueError("gamma must lie in (0, 1/2)")
        if self.lambda0 <= 1.0:
            raise ValueError("lambda0 must exceed 1")

    def lam(self, k: int) -> float:
        return self.gamma ** (-k) * self.lambda0

    def rates(self, q: int) -> np.ndarray:
        return self.lambda0 * self.gamma ** (-np.arange(q + 1, dtype=np.float64))

    def tail_sum(self, q: int) -> float:
        """Sum of inverse rates over levels 1..q (the max-approximation gap)."""
        return float(np.sum(1.0 / self.rates(q)[1:])) if q >= 1 else 0.0

    @classmethod
    def from_json(cls, source):
        import json
        if isinstance(source, (str, bytes)):
            with open(source) as fh:
                data = json.load(fh)
        else:
            data = source
        return cls(gamma=float(data["gamma"]), lambda0=float(data["lambda0"]))

    def to_json(self):
        return {"gamma": self.gamma, "lambda0": self.lambda0}


@dataclass(frozen=True)
class SmoothJet:
    value: float
    gradient: np.ndarray
    hessian: np.ndarray


@dataclass(frozen=True)
class ConvexCoefficients:
    a: np.ndarray
    support: np.ndarray  # boolean mask of faces allowed by the activity rule


class SmoothField:
    """Bound (polytope, schedule, eta) triple with batch evaluation."""

    def __init__(self, polytope, schedule: SmoothingSchedule,
                 eta: EtaKernel | None = None):
        self.polytope = polytope
        self.schedule = schedule
        self.eta = eta or default_kernel()
        self.rates = schedule.rates(polytope.q)

    @property
    def q(self):
        return self.polytope.q

    def chain(self, points, want_grad=True, want_hess="none"):
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return kernels.backend().uhat_chain(
            points, self.polytope.normals, self.polytope.offsets,
            self.rates, self.eta.tables,
            want_grad=want_grad, want_hess=want_hess)

    def values(self, points, k=None):
        k = self.q if k is None else k
        res = self.chain(points, want_grad=False)
        return res.values[:, k]

    def value_and_dirderiv(self, points, direction, k=None):
        """(f_k, <grad f_k, direction>) batched; direction per point."""
        k = self.q if k is None else k
        res = self.chain(points, want_grad=True)
        g = res.grads[:, k, :]
        return res.values[:, k], np.einsum("ij,ij->i", g, direction)

    def jet(self, k, x) -> SmoothJet:
        x = np.asarray(x, dtype=np.float64)
        res = self.chain(x[None, :], want_grad=True, want_hess="all")
        return SmoothJet(
            value=float(res.values[0, k]),
            gradient=res.grads[0, k].copy(),
            hessian=res.hess[0, k].copy(),
        )


def uhat_jet(k, x, schedule, polytope, eta=None) -> SmoothJet:
    """Value, gradient, and Hessian of the level-k smooth maximum."""
    if not 0 <= k <= polytope.q:
        raise ValueError(f"level {k} outside 0..{polytope.q}")
    return SmoothField(polytope, schedule, eta).jet(k, x)


def coefficients_batch(chain, k, rates):
    """Convex-combination weights of the level-k gradient for a batch.

    Rebuilds the weights from the recursion's stored eta' values: each
    band step splits mass (1 + eta')/2 onto the previous levels and
    (1 - eta')/2 onto the new face; the saturated cases keep or reset.
    """
    m = chain.values.shape[0]
    a = np.zeros((m, k + 1))
    a[:, 0] = 1.0
    for lvl in range(1, k + 1):
        d = chain.deltas[:, lvl - 1]
        ep = chain.eta_prime[:, lvl - 1]
        inv = 1.0 / rates[lvl]
        above = d > inv
        below = d < -inv
        band = ~(above | below)
        a[below, :lvl] = 0.0
        a[below, lvl] = 1.0
        if np.any(band):
            keep = 0.5 * (1.0 + ep[band])
            a[band, :lvl] *= keep[:, None]
            a[band, lvl] = 0.5 * (1.0 - ep[band])
    return a


def convex_coefficients(k, x, schedule, polytope, eta=None) -> ConvexCoefficients:
    """Nonnegative weights with sum 1 reproducing the level-k gradient,
    vanishing on faces outside the activity window."""
    if not 0 <= k <= polytope.q:
        raise ValueError(f"level {k} outside 0..{polytope.q}")
    field = SmoothField(polytope, schedule, eta)
    x = np.asarray(x, dtype=np.float64)
    chain = field.chain(x[None, :], want_grad=False)
    a = coefficients_batch(chain, k, field.rates)[0]
    window = chain.values[0, k] - 2.0 * k / field.rates[: k + 1]
    support = chain.face_values[0, : k + 1] >= window
    return ConvexCoefficients(a=a, support=support)


def hat_omega_contains(x, schedule, polytope, eta=None) -> bool:
    """Membership in the smoothed region {f_q <= 0}."""
    field = SmoothField(polytope, schedule, eta)
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    inside = field.values(x) <= 0.0
    return bool(inside[0]) if inside.shape[0] == 1 else inside


def inclusion_gap(x, schedule, polytope, eta=None):
    """(max face value, smooth value, tail slack) for the two-sided
    inclusion tests: max <= smooth <= max + slack."""
    field = SmoothField(polytope, schedule, eta)
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    res = field.chain(x, want_grad=False)
    raw_max = res.face_values.max(axis=1)
    return raw_max, res.values[:, -1], field.schedule.tail_sum(polytope.q)
