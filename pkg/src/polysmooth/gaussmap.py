"""Recursive sphere-valued map on the smoothed boundary.

Level k interpolates the previous map toward the face normal N_k inside
the smoothing band, through angles (alpha, theta, phi):

    cos(2 alpha)       = <nu_hat_{k-1}, nu_k>_g      (metric unit normals)
    cos(2 theta alpha) = <N_hat_{k-1}, N_k>          (Euclidean)
    tan(phi)/tan(alpha) given by the eta'-weighted gradient norms

    N_hat_k = (sin(theta(alpha+phi)) N_hat_{k-1}
               + sin(theta(alpha-phi)) N_k) / sin(2 theta alpha)

Outside the band the map keeps its previous value or resets to N_k.  The
domain bookkeeping removes the measure-zero degeneracies where either
wedge vanishes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, WedgeDegeneracyError
from .metric import metric_jet_batch
from .polytope import wedge_norm
from .smoothing import SmoothField

DEGENERACY_TOL = 1e-12
CASE_ABOVE = 1
CASE_BELOW = 2
CASE_BAND = 3


def t_cot_t(t):
    """t * cos(t) / sin(t) on (0, pi), with the limit value 1 at t = 0."""
    t = np.asarray(t, dtype=np.float64)
    if np.any((t < 0.0) | (t >= np.pi)):
        raise ValueError("argument must lie in [0, pi)")
    small = t < 1e-6
    safe = np.where(small, 1.0, t)
    out = np.where(small, 1.0 - t * t / 3.0,
                   safe * np.cos(safe) / np.sin(safe))
    return float(out) if out.ndim == 0 else out


def sin_ratio_gap(alpha, beta, theta):
    """sin(2 beta)/sin(2 alpha) - sin(2 theta beta)/sin(2 theta alpha).

    Nonnegative for theta in (0, 1); for theta in [1, pi/(2 alpha)) its
    magnitude is controlled by sin_ratio_bound.
    """
    alpha = np.asarray(alpha, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    if np.any((alpha <= 0.0) | (alpha >= np.pi / 2)):
        raise ValueError("alpha must lie in (0, pi/2)")
    if np.any((beta < 0.0) | (beta > alpha)):
        raise ValueError("beta must lie in [0, alpha]")
    if np.any((theta <= 0.0) | (theta >= np.pi / (2.0 * alpha))):
        raise ValueError("theta must lie in (0, pi/(2 alpha))")
    gap = (np.sin(2.0 * beta) / np.sin(2.0 * alpha)
           - np.sin(2.0 * theta * beta) / np.sin(2.0 * theta * alpha))
    return float(gap) if gap.ndim == 0 else gap


def sin_ratio_bound(alpha, theta):
    """Closeness bound 4 (theta - 1) alpha / (sin 2alpha sin 2 theta alpha)
    valid for theta in [1, pi/(2 alpha))."""
    alpha = np.asarray(alpha, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    out = (4.0 * (theta - 1.0) * alpha
           / (np.sin(2.0 * alpha) * np.sin(2.0 * theta * alpha)))
    return float(out) if out.ndim == 0 else out


def angle_phi(alpha, eta_prime, norm_a, norm_b):
    """Interpolation angle phi in [-alpha, alpha] from the eta'-weighted
    gradient norms."""
    num = (1.0 + eta_prime) * norm_a - (1.0 - eta_prime) * norm_b
    den = (1.0 + eta_prime) * norm_a + (1.0 - eta_prime) * norm_b
    den_arr = np.asarray(den, dtype=np.float64)
    if np.any(den_arr <= 1e-14):
        raise WedgeDegeneracyError(
            "interpolation angle undefined: weighted norm sum vanished")
    phi = np.arctan(np.tan(alpha) * (num / den))
    return float(phi) if np.ndim(phi) == 0 else phi


@dataclass(frozen=True)
class AngleTriple:
    alpha: float
    theta: float
    phi: float


@dataclass(frozen=True)
class NhatValue:
    vector: np.ndarray        # Euclidean-unit sphere value
    companion: np.ndarray     # metric-unit normal from the twin recursion
    case_tags: tuple          # "above" | "below" | "band" per level 1..k
    angles: tuple             # AngleTriple or None per level 1..k


@dataclass
class NhatChainResult:
    """Vectorized recursion state at the requested level."""

    nhat: np.ndarray
    nuhat: np.ndarray
    nuhat_direct: np.ndarray | None
    in_w: np.ndarray
    valid: np.ndarray
    cases: np.ndarray
    alpha: np.ndarray | None
    theta: np.ndarray | None
    phi: np.ndarray | None
    chain: object
    mjets: object


def _gram_inner(u, g, v):
    return np.einsum("mi,mij,mj->m", u, g, v)


def nhat_chain(field: SmoothField, metric, points, level=None,
               collect_angles=False, compute_direct=True,
               chain=None, mjets=None):
    """Run the recursive map at a batch of points up to `level`.

    Points outside the recursion domain keep in_w False until a reset;
    entries that hit a wedge degeneracy are marked invalid.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    m, n = pts.shape
    q = field.q
    level = q if level is None else level
    if not 0 <= level <= q:
        raise ValueError(f"level {level} outside 0..{q}")

    if chain is None:
        chain = field.chain(pts, want_grad=True)
    if mjets is None:
        mjets = metric_jet_batch(metric, pts)
    normals = field.polytope.normals
    g, inv = mjets.g, mjets.inv

    # metric-unit versions of the constant face normals, per point
    raised = np.einsum("mij,kj->mki", inv, normals)
    face_gnorm = np.sqrt(np.maximum(
        np.einsum("mki,ki->mk", raised, normals), 0.0))
    nu_faces = raised / face_gnorm[:, :, None]

    nhat = np.broadcast_to(normals[0], (m, n)).copy()
    nuhat = nu_faces[:, 0, :].copy()
    in_w = np.ones(m, dtype=bool)
    valid = np.ones(m, dtype=bool)
    cases = np.zeros((m, q), dtype=np.int8)
    alpha_rec = np.full((m, q), np.nan) if collect_angles else None
    theta_rec = np.full((m, q), np.nan) if collect_angles else None
    phi_rec = np.full((m, q), np.nan) if collect_angles else None

    uhat_gnorm_prev = np.sqrt(np.maximum(
        np.einsum("mi,mij,mj->m", chain.grads[:, 0], inv, chain.grads[:, 0]),
        0.0))

    for k in range(1, level + 1):
        inv_rate = 1.0 / field.rates[k]
        d = chain.deltas[:, k - 1]
        above = d > inv_rate
        below = d < -inv_rate
        band = ~(above | below)

        # degeneracy bookkeeping: inside the band, drop points where either
        # wedge vanishes; they leave the domain unless reset later
        wedge_grad = wedge_norm(chain.grads[:, k - 1], normals[k])
        wedge_map = wedge_norm(nhat, normals[k])
        removed = in_w & band & (
            (wedge_grad <= DEGENERACY_TOL) | (wedge_map <= DEGENERACY_TOL))
        new_in_w = (in_w & ~removed) | below

        sel = band & in_w & ~removed & valid
        if np.any(sel):
            cosa = np.clip(_gram_inner(nuhat[sel], g[sel], nu_faces[sel, k]),
                           -1.0, 1.0)
            two_alpha = np.arccos(cosa)
            alpha = 0.5 * two_alpha
            cosn = np.clip(np.einsum("mi,i->m", nhat[sel], normals[k]),
                           -1.0, 1.0)
            two_theta_alpha = np.arccos(cosn)
            theta = two_theta_alpha / np.where(two_alpha > 0, two_alpha, np.nan)

            ep = chain.eta_prime[sel, k - 1]
            na = uhat_gnorm_prev[sel]
            nb = face_gnorm[sel, k]
            num = (1.0 + ep) * na - (1.0 - ep) * nb
            den = (1.0 + ep) * na + (1.0 - ep) * nb
            bad = (den <= 1e-14) | (np.sin(two_alpha) <= DEGENERACY_TOL) \
                | (np.sin(two_theta_alpha) <= DEGENERACY_TOL) \
                | ~np.isfinite(theta)
            phi = np.arctan(np.tan(alpha) * (num / np.where(bad, 1.0, den)))

            s_plus = np.sin(theta * (alpha + phi))
            s_minus = np.sin(theta * (alpha - phi))
            new_nhat = (s_plus[:, None] * nhat[sel]
                        + s_minus[:, None] * normals[k]) \
                / np.sin(two_theta_alpha)[:, None]
            new_nuhat = (np.sin(alpha + phi)[:, None] * nuhat[sel]
                         + np.sin(alpha - phi)[:, None] * nu_faces[sel, k]) \
                / np.sin(two_alpha)[:, None]

            idx = np.flatnonzero(sel)
            good = idx[~bad]
            nhat[good] = new_nhat[~bad]
            nuhat[good] = new_nuhat[~bad]
            valid[idx[bad]] = False
            if collect_angles:
                alpha_rec[idx, k - 1] = alpha
                theta_rec[idx, k - 1] = theta
                phi_rec[idx, k - 1] = phi

        nhat[below] = normals[k]
        nuhat[below] = nu_faces[below, k]
        cases[:, k - 1] = np.where(above, CASE_ABOVE,
                                   np.where(below, CASE_BELOW, CASE_BAND))
        in_w = new_in_w

        gk = chain.grads[:, k]
        uhat_gnorm_prev = np.sqrt(np.maximum(
            np.einsum("mi,mij,mj->m", gk, inv, gk), 0.0))

    nuhat_direct = None
    if compute_direct:
        gk = chain.grads[:, level]
        norm = np.sqrt(np.maximum(
            np.einsum("mi,mij,mj->m", gk, inv, gk), 0.0))
        with np.errstate(invalid="ignore", divide="ignore"):
            nuhat_direct = np.einsum("mij,mj->mi", inv, gk) \
                / np.where(norm > 1e-12, norm, np.nan)[:, None]

    return NhatChainResult(
        nhat=nhat, nuhat=nuhat, nuhat_direct=nuhat_direct,
        in_w=in_w, valid=valid, cases=cases[:, :level],
        alpha=alpha_rec, theta=theta_rec, phi=phi_rec,
        chain=chain, mjets=mjets)


def in_Wk(k, x, schedule, polytope, metric, eta=None) -> bool:
    """Membership in the level-k recursion domain."""
    field = SmoothField(polytope, schedule, eta)
    res = nhat_chain(field, metric, np.asarray(x)[None, :], level=k,
                     compute_direct=False)
    return bool(res.in_w[0])


_CASE_NAMES = {CASE_ABOVE: "above", CASE_BELOW: "below", CASE_BAND: "band"}


def nhat_eval(k, x, schedule, polytope, metric, eta=None,
              validate_tol=1e-8) -> NhatValue:
    """Evaluate the recursive map at a single point.

    Raises DomainError when the point has left the recursion domain and
    WedgeDegeneracyError when an interpolation step was undefined.  The
    companion metric normal is cross-checked against direct
    normalization of the smoothed gradient.
    """
    field = SmoothField(polytope, schedule, eta)
    x = np.asarray(x, dtype=np.float64)
    res = nhat_chain(field, metric, x[None, :], level=k, collect_angles=True)
    if not res.valid[0]:
        raise WedgeDegeneracyError(
            "spherical-map step degenerate along the recursion at this point")
    if not res.in_w[0]:
        fail = [
            f"level {i + 1} ({_CASE_NAMES[int(res.cases[0, i])]})"
            for i in range(k)
        ]
        raise DomainError(
            "point left the recursion domain; case chain: " + ", ".join(fail))
    direct = res.nuhat_direct[0]
    if np.all(np.isfinite(direct)):
        drift = float(np.linalg.norm(res.nuhat[0] - direct))
        if drift > validate_tol:
            raise WedgeDegeneracyError(
                f"companion normal disagrees with direct normalization "
                f"by {drift:.3e}")
    tags = tuple(_CASE_NAMES[int(c)] for c in res.cases[0])
    angles = tuple(
        AngleTriple(float(res.alpha[0, i]), float(res.theta[0, i]),
                    float(res.phi[0, i]))
        if np.isfinite(res.alpha[0, i]) else None
        for i in range(k)
    )
    return NhatValue(vector=res.nhat[0], companion=res.nuhat[0],
                     case_tags=tags, angles=angles)
