"""NumPy reference implementation of the hot evaluation kernels.

Two entry points are shared with the compiled backend: `eta_jet_batch`
evaluates the mollified absolute value and its first two derivatives,
`uhat_chain` runs the full smooth-max recursion over a batch of points.
Both backends follow the same operation order so results agree to the
last few ulps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

BACKEND_NAME = "numpy"


@dataclass(frozen=True)
class ChainResult:
    """Per-level data of the smooth-max recursion over a batch of points.

    values[:, k] is the level-k smoothed value, face_values[:, k] the raw
    affine face value.  deltas[:, k-1] and eta_prime[:, k-1] belong to the
    level-k combination step (k = 1..q).  hess is the final-level Hessian
    unless the caller asked for all levels.
    """

    values: np.ndarray
    face_values: np.ndarray
    deltas: np.ndarray
    eta_prime: np.ndarray
    grads: np.ndarray | None = None
    hess: np.ndarray | None = None


def _hermite(f0, f1, d0, d1, s, h):
    # cubic Hermite basis on one uniform cell, exact endpoint slopes
    s2 = s * s
    s3 = s2 * s
    return (
        f0 * (2.0 * s3 - 3.0 * s2 + 1.0)
        + d0 * h * (s3 - 2.0 * s2 + s)
        + f1 * (-2.0 * s3 + 3.0 * s2)
        + d1 * h * (s3 - s2)
    )


def eta_jet_batch(t, tables):
    """Evaluate (eta, eta', eta'') at an array of arguments.

    `tables` carries the cumulative-density and first-moment grids on
    [0, 1/2]; negative arguments are folded through evenness.
    """
    t = np.asarray(t, dtype=np.float64)
    a = np.abs(t)
    sign = np.sign(t)

    eta = a.copy()
    etap = sign.copy()
    etapp = np.zeros_like(a)

    inner = a < 0.5
    if np.any(inner):
        ai = a[inner]
        h = tables.h
        idx = np.minimum((ai / h).astype(np.int64), tables.ncells - 1)
        s = ai / h - idx
        r = _hermite(tables.r[idx], tables.r[idx + 1],
                     tables.dr[idx], tables.dr[idx + 1], s, h)
        smom = _hermite(tables.s[idx], tables.s[idx + 1],
                        tables.ds[idx], tables.ds[idx + 1], s, h)
        r = np.clip(r, 0.5, 1.0)
        smom = np.minimum(smom, 0.0)
        rho = tables.norm * np.exp(-1.0 / (1.0 - 4.0 * ai * ai))
        # clamp at |t|: the true kernel dominates it, so this only strips
        # one-ulp interpolation undershoot
        eta[inner] = np.maximum(ai * (2.0 * r - 1.0) - 2.0 * smom, ai)
        etap[inner] = sign[inner] * (2.0 * r - 1.0)
        etapp[inner] = 2.0 * rho
    return eta, etap, etapp


def uhat_chain(points, normals, offsets, lams, tables,
               want_grad=True, want_hess="none"):
    """Run the smooth-max recursion at a batch of points.

    points: (m, n); normals: (q+1, n); offsets: (q+1,); lams[k] is the
    smoothing rate of level k (index 0 unused by the recursion).
    want_hess is "none", "final", or "all".
    """
    points = np.ascontiguousarray(points, dtype=np.float64)
    m, n = points.shape
    q1 = normals.shape[0]
    q = q1 - 1

    face_values = points @ normals.T + offsets
    values = np.empty((m, q1))
    values[:, 0] = face_values[:, 0]
    deltas = np.empty((m, q))
    eta_prime = np.empty((m, q))

    grads = None
    if want_grad or want_hess != "none":
        grads = np.empty((m, q1, n))
        grads[:, 0, :] = normals[0]

    hess = None
    hess_all = None
    if want_hess == "final":
        hess = np.zeros((m, n, n))
    elif want_hess == "all":
        hess_all = np.zeros((m, q1, n, n))
        hess = np.zeros((m, n, n))

    for k in range(1, q1):
        lam = lams[k]
        d = values[:, k - 1] - face_values[:, k]
        deltas[:, k - 1] = d
        arg = lam * d
        e, ep, epp = eta_jet_batch(arg, tables)

        saturated = np.abs(arg) >= 0.5
        # outside the mollified core the recursion collapses to the exact max
        values[:, k] = np.where(
            saturated,
            np.maximum(values[:, k - 1], face_values[:, k]),
            0.5 * (values[:, k - 1] + face_values[:, k] + e / lam),
        )
        eta_prime[:, k - 1] = ep

        if grads is not None:
            gdiff = grads[:, k - 1, :] - normals[k]
            w = 0.5 * (1.0 - ep)
            grads[:, k, :] = grads[:, k - 1, :] - w[:, None] * gdiff
            if hess is not None:
                hess *= (1.0 - w)[:, None, None]
                rank1 = 0.5 * lam * epp
                active = rank1 > 0.0
                if np.any(active):
                    hess[active] += (
                        rank1[active, None, None]
                        * gdiff[active, :, None] * gdiff[active, None, :]
                    )
                if hess_all is not None:
                    hess_all[:, k, :, :] = hess

    if want_hess == "all":
        hess = hess_all
    return ChainResult(
        values=values,
        face_values=face_values,
        deltas=deltas,
        eta_prime=eta_prime,
        grads=grads if want_grad else None,
        hess=hess if want_hess != "none" else None,
    )
