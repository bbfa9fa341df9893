"""Radial-graph meshing of the smoothed boundary, region classification,
curvature-deficit fields, Morrey norms, and level-set area estimates.

The smoothed boundary is star-shaped around any interior point, so each
sphere direction carries exactly one surface sample; quadrature weights
come from per-direction spherical cell areas times the radial-graph area
factor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from functools import lru_cache

import numpy as np
from scipy.spatial import cKDTree

from .errors import PolysmoothError
from .gaussmap import nhat_chain
from .metric import mean_curvature_batch, metric_jet_batch
from .polytope import chebyshev_center
from .smoothing import SmoothField

SURFACE_TOL = 1e-10


# ---------------------------------------------------------------------------
# sphere meshes


@lru_cache(maxsize=8)
def icosphere(level: int):
    """Subdivided icosahedron: (vertices, triangles) on the unit sphere."""
    phi = (1.0 + math.sqrt(5.0)) / 2.0
    verts = np.array([
        [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
        [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
        [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
    ], dtype=np.float64)
    verts /= np.linalg.norm(verts, axis=1)[:, None]
    faces = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ], dtype=np.int64)
    for _ in range(level):
        verts_list = list(verts)
        cache = {}

        def midpoint(i, j):
            key = (i, j) if i < j else (j, i)
            if key not in cache:
                v = verts_list[i] + verts_list[j]
                verts_list.append(v / np.linalg.norm(v))
                cache[key] = len(verts_list) - 1
            return cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        verts = np.array(verts_list)
        faces = np.array(new_faces, dtype=np.int64)
    verts.setflags(write=False)
    faces.setflags(write=False)
    return verts, faces


def vertex_cell_areas(verts, faces):
    """Spherical cell area per vertex: one third of each incident
    triangle's solid angle; the cells partition the full sphere."""
    a = verts[faces[:, 0]]
    b = verts[faces[:, 1]]
    c = verts[faces[:, 2]]
    triple = np.einsum("ij,ij->i", a, np.cross(b, c))
    denom = (1.0 + np.einsum("ij,ij->i", a, b)
             + np.einsum("ij,ij->i", b, c)
             + np.einsum("ij,ij->i", c, a))
    omega = np.abs(2.0 * np.arctan2(np.abs(triple), denom))
    areas = np.zeros(len(verts))
    np.add.at(areas, faces.ravel(),
              np.repeat(omega / 3.0, 3))
    return areas


def sphere_surface_measure(n: int) -> float:
    return 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)


def unit_ball_volume(n: int) -> float:
    return math.pi ** (n / 2.0) / math.gamma(n / 2.0 + 1.0)


def sobol_directions(n: int, count: int, seed: int = 0):
    """Low-discrepancy directions with equal-weight cells for n >= 4."""
    from scipy.stats import norm, qmc

    sampler = qmc.Sobol(d=n, scramble=True, seed=seed)
    u = sampler.random(count)
    z = norm.ppf(np.clip(u, 1e-12, 1.0 - 1e-12))
    z /= np.linalg.norm(z, axis=1)[:, None]
    weights = np.full(count, sphere_surface_measure(n) / count)
    return z, weights


class AnalyticConvexField:
    """Convex level function given by callables, for validation meshes
    (e.g. exact balls) that bypass the polytope machinery."""

    def __init__(self, n, value, gradient, hessian=None):
        self.n = n
        self._value = value
        self._gradient = gradient
        self._hessian = hessian

    def values(self, points):
        return np.asarray(self._value(np.atleast_2d(points)), dtype=np.float64)

    def grad_batch(self, points):
        return np.asarray(self._gradient(np.atleast_2d(points)),
                          dtype=np.float64)

    def hess_batch(self, points):
        if self._hessian is None:
            raise PolysmoothError("analytic field has no Hessian callable")
        return np.asarray(self._hessian(np.atleast_2d(points)),
                          dtype=np.float64)

    def value_and_dirderiv(self, points, directions):
        pts = np.atleast_2d(points)
        grad = self.grad_batch(pts)
        return self.values(pts), np.einsum("ij,ij->i", grad, directions)


# ---------------------------------------------------------------------------
# star-shaped root finding


def interior_center(polytope):
    """Deepest interior point (radial-graph base)."""
    center, _ = chebyshev_center(polytope)
    return center


def radial_roots(field, p0, directions, bisect_iters=48, newton_iters=8):
    """Per-direction radius where the field crosses zero outward."""
    p0 = np.asarray(p0, dtype=np.float64)
    D = np.atleast_2d(np.asarray(directions, dtype=np.float64))
    m = len(D)
    v0 = field.values(p0[None, :])[0]
    if not v0 < 0.0:
        raise PolysmoothError("base point is not interior to the level set")

    lo = np.zeros(m)
    hi = np.ones(m)
    for _ in range(64):
        vals = field.values(p0 + hi[:, None] * D)
        pending = vals <= 0.0
        if not np.any(pending):
            break
        lo[pending] = hi[pending]
        hi[pending] *= 2.0
    else:
        raise PolysmoothError(
            "bracketing failed: ray never exits the level set "
            "(region unbounded?)")

    for _ in range(bisect_iters):
        mid = 0.5 * (lo + hi)
        vals = field.values(p0 + mid[:, None] * D)
        neg = vals < 0.0
        lo = np.where(neg, mid, lo)
        hi = np.where(neg, hi, mid)

    t = 0.5 * (lo + hi)
    for _ in range(newton_iters):
        vals, dv = field.value_and_dirderiv(p0 + t[:, None] * D, D)
        step = vals / np.where(np.abs(dv) > 1e-300, dv, 1.0)
        t = np.clip(t - step, lo, hi)
    vals, dv = field.value_and_dirderiv(p0 + t[:, None] * D, D)
    if np.any(np.abs(vals) > 1e-12):
        worst = float(np.max(np.abs(vals)))
        raise PolysmoothError(f"root polish did not converge: |f| up to {worst:.2e}")
    if np.any(dv <= 0.0):
        raise PolysmoothError("non-positive outward derivative at a root")
    return t


def radial_intersect(p0, omega, schedule, polytope, eta=None):
    """Unique outward crossing radius and point along one direction."""
    field = SmoothField(polytope, schedule, eta)
    t = radial_roots(field, p0, np.asarray(omega)[None, :])
    x = np.asarray(p0) + t[0] * np.asarray(omega)
    return float(t[0]), x


# ---------------------------------------------------------------------------
# region classification


@dataclass(frozen=True)
class RegionLabel:
    kind: str           # "F" | "E" | "G"
    indices: tuple

    def __str__(self):
        return f"{self.kind}({', '.join(str(i) for i in self.indices)})"


KIND_F, KIND_E, KIND_G = 0, 1, 2


def classify_batch(chain, rates, tol=1e-9):
    """Deterministic region cascade for a batch of boundary samples.

    Returns (kinds, indices) with indices[:, :] = (k, -1, -1) for face
    regions, (j, k, -1) for edge regions, (i, j, k) for corner regions.
    """
    deltas = chain.deltas
    m, q = deltas.shape
    inv_rates = 1.0 / np.asarray(rates)[1:]
    kinds = np.zeros(m, dtype=np.int8)
    out = np.full((m, 3), -1, dtype=np.int64)

    if q == 0:
        out[:, 0] = 0
        return kinds, out

    le_band = deltas <= inv_rates[None, :]
    cols = np.arange(1, q + 1)[None, :]

    def last_true(mask):
        any_row = mask.any(axis=1)
        pos = mask.shape[1] - 1 - np.argmax(mask[:, ::-1], axis=1)
        return any_row, np.where(any_row, pos + 1, 0)  # 1-based level

    has_k, k = last_true(le_band)
    out[~has_k, 0] = 0  # pure face region of the first face

    dk = deltas[np.arange(m), np.maximum(k - 1, 0)]
    below_k = has_k & (dk < -inv_rates[np.maximum(k - 1, 0)])
    out[below_k, 0] = k[below_k]

    rest = has_k & ~below_k
    if np.any(rest):
        sub = le_band & (cols <= (k - 1)[:, None])
        has_j, j = last_true(sub)
        easy = rest & ~has_j
        kinds[easy] = KIND_E
        out[easy, 0] = 0
        out[easy, 1] = k[easy]

        mid = rest & has_j
        dj = deltas[np.arange(m), np.maximum(j - 1, 0)]
        below_j = mid & (dj < -inv_rates[np.maximum(j - 1, 0)])
        kinds[below_j] = KIND_E
        out[below_j, 0] = j[below_j]
        out[below_j, 1] = k[below_j]

        deep = mid & ~below_j
        if np.any(deep):
            sub2 = le_band & (cols <= (j - 1)[:, None])
            has_i, i = last_true(sub2)
            kinds[deep] = KIND_G
            out[deep, 0] = np.where(has_i[deep], i[deep], 0)
            out[deep, 1] = j[deep]
            out[deep, 2] = k[deep]
    return kinds, out


def labels_from_arrays(kinds, indices):
    out = []
    for kind, idx in zip(kinds, indices):
        if kind == KIND_F:
            out.append(RegionLabel("F", (int(idx[0]),)))
        elif kind == KIND_E:
            out.append(RegionLabel("E", (int(idx[0]), int(idx[1]))))
        else:
            out.append(RegionLabel("G", (int(idx[0]), int(idx[1]), int(idx[2]))))
    return out


def verify_labels_batch(chain, rates, kinds, indices, tol=1e-9):
    """Re-check every label's defining inequalities; True per sample."""
    deltas = chain.deltas
    values = chain.values
    faces = chain.face_values
    m, q = deltas.shape
    rates = np.asarray(rates)
    inv_rates = 1.0 / rates[1:] if q else np.zeros(0)
    rows = np.arange(m)
    ok = np.ones(m, dtype=bool)
    if q == 0:
        return ok

    above = deltas > inv_rates[None, :] - tol
    # suffix_all[:, c] == all above in columns >= c
    suffix = np.ones((m, q + 1), dtype=bool)
    suffix[:, :q] = np.cumprod(above[:, ::-1], axis=1)[:, ::-1].astype(bool)
    # count of non-above strictly before column c
    bad_prefix = np.concatenate(
        [np.zeros((m, 1)), np.cumsum(~above, axis=1)], axis=1)

    def range_above(r, lo_col, hi_col):
        # all `above` within columns [lo_col, hi_col) for the given rows
        lo_col = np.clip(lo_col, 0, q)
        hi_col = np.clip(hi_col, 0, q)
        cnt = bad_prefix[r, hi_col] - bad_prefix[r, lo_col]
        return (cnt == 0) | (hi_col <= lo_col)

    def slab(vals, width):
        return (vals >= -width - tol) & (vals <= tol)

    is_f = kinds == KIND_F
    if np.any(is_f):
        k = indices[is_f, 0]
        r = rows[is_f]
        cond = suffix[r, k]  # bands above level k all clear
        kk = np.maximum(k - 1, 0)
        below = deltas[r, kk] < -inv_rates[kk] + tol
        cond &= np.where(k > 0, below, True)
        ok[is_f] = cond

    is_e = kinds == KIND_E
    if np.any(is_e):
        j = indices[is_e, 0]
        k = indices[is_e, 1]
        r = rows[is_e]
        width = 2.0 / rates[k]
        cond = suffix[r, k]
        cond &= range_above(r, j, k - 1)
        cond &= slab(values[r, k - 1], width)
        cond &= slab(faces[r, k], width)
        cond &= slab(faces[r, j], width)
        jj = np.maximum(j - 1, 0)
        below_j = deltas[r, jj] < -inv_rates[jj] + tol
        cond &= np.where(j > 0, below_j, True)
        ok[is_e] = cond

    is_g = kinds == KIND_G
    if np.any(is_g):
        i = indices[is_g, 0]
        j = indices[is_g, 1]
        k = indices[is_g, 2]
        r = rows[is_g]
        width = 2.0 / rates[k]
        cond = suffix[r, k]
        cond &= range_above(r, j, k - 1)
        cond &= slab(values[r, k - 1], width)
        cond &= slab(faces[r, k], width)
        cond &= slab(faces[r, j], 4.0 / rates[j])
        cond &= slab(faces[r, i], 6.0 / rates[i])
        ok[is_g] = cond
    return ok


def classify(x, schedule, polytope, eta=None, tol=1e-8) -> RegionLabel:
    """Region label of a single boundary point."""
    field = SmoothField(polytope, schedule, eta)
    x = np.asarray(x, dtype=np.float64)
    chain = field.chain(x[None, :], want_grad=False)
    if abs(float(chain.values[0, -1])) > tol:
        raise PolysmoothError(
            f"point is not on the smoothed boundary "
            f"(value {float(chain.values[0, -1]):.3e})")
    kinds, indices = classify_batch(chain, field.rates)
    label = labels_from_arrays(kinds, indices)[0]
    if not verify_labels_batch(chain, field.rates, kinds, indices)[0]:
        raise PolysmoothError(f"label {label} failed its slab re-check")
    return label


# ---------------------------------------------------------------------------
# tangent frames and the trace norm of the spherical map differential


def tangent_frames(normals_eucl):
    """Euclidean-orthonormal bases of the tangent spaces, shape (m, n, n-1)."""
    u, _, _ = np.linalg.svd(normals_eucl[:, :, None], full_matrices=True)
    return u[:, :, 1:]


def g_orthonormal_frames(frames, g):
    """Convert Euclidean-orthonormal frames to metric-orthonormal ones."""
    gram = np.einsum("mia,mij,mjb->mab", frames, g, frames)
    chol = np.linalg.cholesky(gram)
    inv_t = np.linalg.inv(np.transpose(chol, (0, 2, 1)))
    return np.einsum("mia,mab->mib", frames, inv_t)


def _sv_sum(mats):
    return np.linalg.svd(mats, compute_uv=False).sum(axis=1)


def dnhat_trace_norm(field, metric, points, base=None, step=None,
                     curvature_scale=None, rel_check=1e-3, abs_floor=1e-6):
    """Trace norm of the spherical map differential by symmetric
    differences along a metric-orthonormal tangent frame.

    The step shrinks with the local curvature scale so the truncation
    error stays relative.  Returns (trace_norm, flagged): a sample is
    flagged when halving the step moves the estimate by more than
    `rel_check` relatively (beyond an absolute floor) or a probe left
    the recursion domain.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    m, n = pts.shape
    if base is None:
        base = nhat_chain(field, metric, pts)
    if step is None:
        lo, hi = field.polytope.bounding_box()
        step = 1e-5 * float(np.linalg.norm(hi - lo))
    h0 = np.full(m, float(step))
    if curvature_scale is not None:
        h0 = np.minimum(h0, 1e-3 / np.maximum(np.abs(curvature_scale), 1.0))

    grad_q = base.chain.grads[:, -1]
    normal = grad_q / np.linalg.norm(grad_q, axis=1)[:, None]
    frames = g_orthonormal_frames(tangent_frames(normal), base.mjets.g)

    nhat0 = base.nhat
    proj = np.eye(n)[None] - nhat0[:, :, None] * nhat0[:, None, :]

    diffs = []
    probe_ok = np.ones(m, dtype=bool)
    for h in (h0, 0.5 * h0):
        cols = np.empty((m, n, n - 1))
        for a in range(n - 1):
            offset = h[:, None] * frames[:, :, a]
            plus = nhat_chain(field, metric, pts + offset,
                              compute_direct=False)
            minus = nhat_chain(field, metric, pts - offset,
                               compute_direct=False)
            probe_ok &= plus.in_w & plus.valid & minus.in_w & minus.valid
            cols[:, :, a] = (plus.nhat - minus.nhat) / (2.0 * h[:, None])
        diffs.append(np.einsum("mij,mja->mia", proj, cols))

    tn_h = _sv_sum(diffs[0])
    tn_h2 = _sv_sum(diffs[1])
    # Richardson extrapolation removes the quadratic truncation term
    tn = _sv_sum((4.0 * diffs[1] - diffs[0]) / 3.0)
    diff = np.abs(tn_h - tn_h2)
    scale = np.maximum(np.abs(tn_h), np.abs(tn_h2))
    flagged = (diff > np.maximum(rel_check * scale, abs_floor)) | ~probe_ok
    return tn, flagged


def ambient_map_differential(field, metric, points, steps):
    """Operator norm of the spherical map's ambient differential by
    coordinate-axis symmetric differences (per-point step array)."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    m, n = pts.shape
    steps = np.broadcast_to(np.asarray(steps, dtype=np.float64), (m,))
    base = nhat_chain(field, metric, pts, compute_direct=False)
    cols = np.empty((m, n, n))
    ok = base.in_w & base.valid
    for axis in range(n):
        e = np.zeros(n)
        e[axis] = 1.0
        off = steps[:, None] * e
        plus = nhat_chain(field, metric, pts + off, compute_direct=False)
        minus = nhat_chain(field, metric, pts - off, compute_direct=False)
        ok &= plus.in_w & plus.valid & minus.in_w & minus.valid
        cols[:, :, axis] = (plus.nhat - minus.nhat) / (2.0 * steps[:, None])
    proj = np.eye(n)[None] - base.nhat[:, :, None] * base.nhat[:, None, :]
    cols = np.einsum("mij,mja->mia", proj, cols)
    opnorm = np.linalg.svd(cols, compute_uv=False)[:, 0]
    return opnorm, ok


# ---------------------------------------------------------------------------
# surface meshes


@dataclass(frozen=True)
class SurfaceSample:
    direction: np.ndarray
    radius: float
    point: np.ndarray
    label: RegionLabel | None
    nu_hat: np.ndarray | None
    n_hat: np.ndarray | None
    mean_curvature: float
    trace_norm: float | None
    deficit: float | None
    weight: float


@dataclass
class SurfaceMesh:
    directions: np.ndarray
    radii: np.ndarray
    points: np.ndarray
    weight_eucl: np.ndarray
    weight_g: np.ndarray
    normals_eucl: np.ndarray
    mean_curvature: np.ndarray
    nhat: np.ndarray | None
    nuhat: np.ndarray | None
    trace_norm: np.ndarray | None
    deficit: np.ndarray | None
    flags: np.ndarray | None
    kinds: np.ndarray | None
    indices: np.ndarray | None
    chain: object
    center: np.ndarray
    meta: dict = dc_field(default_factory=dict)

    def __len__(self):
        return len(self.points)

    @property
    def total_area_eucl(self):
        return float(self.weight_eucl.sum())

    @property
    def total_area_g(self):
        return float(self.weight_g.sum())

    def labels(self):
        return labels_from_arrays(self.kinds, self.indices)

    def sample(self, i) -> SurfaceSample:
        label = None
        if self.kinds is not None:
            label = labels_from_arrays(self.kinds[i:i + 1],
                                       self.indices[i:i + 1])[0]
        return SurfaceSample(
            direction=self.directions[i],
            radius=float(self.radii[i]),
            point=self.points[i],
            label=label,
            nu_hat=None if self.nuhat is None else self.nuhat[i],
            n_hat=None if self.nhat is None else self.nhat[i],
            mean_curvature=float(self.mean_curvature[i]),
            trace_norm=None if self.trace_norm is None else float(self.trace_norm[i]),
            deficit=None if self.deficit is None else float(self.deficit[i]),
            weight=float(self.weight_g[i]),
        )


def build_mesh(field, metric, level=5, directions=None, cell_areas=None,
               p0=None, with_map=True, sobol_seed=0, sobol_count=4096,
               fd_step=None) -> SurfaceMesh:
    """Mesh the zero level set as a radial graph and decorate samples
    with curvature, region labels, the spherical map, and its deficit.

    Analytic fields get geometry and curvature only; the classification
    and spherical-map columns need the smooth-max structure.
    """
    is_smooth = isinstance(field, SmoothField)
    n = field.polytope.n if is_smooth else field.n
    if directions is None:
        if n == 3:
            directions, faces = icosphere(level)
            cell_areas = vertex_cell_areas(directions, faces)
        else:
            directions, cell_areas = sobol_directions(n, sobol_count, sobol_seed)
    elif cell_areas is None:
        cell_areas = np.full(len(directions),
                             sphere_surface_measure(n) / len(directions))

    if p0 is None:
        if not is_smooth:
            raise PolysmoothError("analytic fields need an explicit base point")
        p0 = interior_center(field.polytope)
    p0 = np.asarray(p0, dtype=np.float64)

    t = radial_roots(field, p0, directions)
    X = p0 + t[:, None] * directions

    if is_smooth:
        chain = field.chain(X, want_grad=True, want_hess="final")
        grad = chain.grads[:, -1]
        hess = chain.hess
    else:
        chain = None
        grad = field.grad_batch(X)
        hess = field.hess_batch(X)
    gnorm = np.linalg.norm(grad, axis=1)
    normals_eucl = grad / gnorm[:, None]
    ray_cos = np.einsum("mi,mi->m", grad, directions)
    if np.any(ray_cos <= 0.0):
        raise PolysmoothError("non-positive ray factor; star-shape violated")
    weight_eucl = cell_areas * t ** (n - 1) * gnorm / ray_cos

    mjets = metric_jet_batch(metric, X)
    frames = tangent_frames(normals_eucl)
    gram = np.einsum("mia,mij,mjb->mab", frames, mjets.g, frames)
    weight_g = weight_eucl * np.sqrt(np.maximum(np.linalg.det(gram), 0.0))

    h = mean_curvature_batch(grad, hess, mjets)

    kinds = indices = None
    nhat = nuhat = tn = deficit = flags = None
    if is_smooth:
        kinds, indices = classify_batch(chain, field.rates)
        if with_map:
            nres = nhat_chain(field, metric, X, chain=chain, mjets=mjets)
            nhat, nuhat = nres.nhat, nres.nuhat
            tn, flags = dnhat_trace_norm(field, metric, X, base=nres,
                                         step=fd_step, curvature_scale=h)
            flags = flags | ~nres.in_w | ~nres.valid
            deficit = np.maximum(tn - h, 0.0)

    return SurfaceMesh(
        directions=np.asarray(directions), radii=t, points=X,
        weight_eucl=weight_eucl, weight_g=weight_g,
        normals_eucl=normals_eucl, mean_curvature=h,
        nhat=nhat, nuhat=nuhat, trace_norm=tn, deficit=deficit, flags=flags,
        kinds=kinds, indices=indices, chain=chain, center=p0,
        meta={"level": level, "n": n})


# ---------------------------------------------------------------------------
# Morrey norms and band measures


@dataclass(frozen=True)
class MorreyEstimate:
    sigma: float
    table: tuple          # rows (center, radius, value)
    sup_value: float
    flagged_fraction: float

    def to_rows(self):
        return [
            {"center": list(map(float, p)), "radius": float(r),
             "value": float(v)}
            for p, r, v in self.table
        ]


def default_morrey_probes(mesh, rng, stride=8, extra=64):
    centers = [mesh.points[i] for i in range(0, len(mesh), stride)]
    lo = mesh.points.min(axis=0)
    hi = mesh.points.max(axis=0)
    centers += list(rng.uniform(lo, hi, size=(extra, mesh.points.shape[1])))
    radii = [2.0 ** (-i) for i in range(0, 9)]
    return centers, radii


def morrey_norm(mesh, sigma, centers=None, radii=None, rng=None) -> MorreyEstimate:
    """sup over probes of r^(sigma+1-n) * sum of deficit^sigma over the
    mesh samples inside the Euclidean ball B_r(p)."""
    if mesh.deficit is None:
        raise PolysmoothError("mesh was built without the spherical map")
    n = mesh.points.shape[1]
    if centers is None or radii is None:
        rng = rng or np.random.default_rng(0)
        dft_centers, dft_radii = default_morrey_probes(mesh, rng)
        centers = dft_centers if centers is None else centers
        radii = dft_radii if radii is None else radii

    ok = ~mesh.flags
    flagged_fraction = 1.0 - float(ok.mean())
    contrib = np.zeros(len(mesh))
    contrib[ok] = mesh.deficit[ok] ** sigma * mesh.weight_g[ok]

    tree = cKDTree(mesh.points)
    centers = np.atleast_2d(np.asarray(centers, dtype=np.float64))
    rows = []
    sup_val = 0.0
    for r in radii:
        hits = tree.query_ball_point(centers, r)
        scale = r ** (sigma + 1.0 - n)
        for p, idx in zip(centers, hits):
            # fixed summation order keeps reruns bit-identical
            idx = np.sort(np.asarray(idx, dtype=np.intp))
            val = float(scale * contrib[idx].sum()) if len(idx) else 0.0
            rows.append((p, float(r), val))
            sup_val = max(sup_val, val)
    return MorreyEstimate(sigma=float(sigma), table=tuple(rows),
                          sup_value=sup_val,
                          flagged_fraction=flagged_fraction)


def band_measure(mesh, conditions, center=None, radius=None, euclidean=True):
    """Surface measure of the samples satisfying slab conditions.

    conditions: iterable of ("face"|"smooth"|"delta", index, lo, hi)
    constraining the raw face value, the smoothed level value, or the
    band offset at that index.
    """
    sel = np.ones(len(mesh), dtype=bool)
    for kind, idx, lo, hi in conditions:
        if kind == "face":
            vals = mesh.chain.face_values[:, idx]
        elif kind == "smooth":
            vals = mesh.chain.values[:, idx]
        elif kind == "delta":
            vals = mesh.chain.deltas[:, idx - 1]
        else:
            raise ValueError(f"unknown condition kind {kind!r}")
        sel &= (vals >= lo) & (vals <= hi)
    if center is not None:
        sel &= np.linalg.norm(mesh.points - np.asarray(center), axis=1) < radius
    weights = mesh.weight_eucl if euclidean else mesh.weight_g
    return float(weights[sel].sum()), int(sel.sum())


# ---------------------------------------------------------------------------
# level-set area by the co-area Monte Carlo estimator


@dataclass(frozen=True)
class AreaEstimate:
    value: float
    stderr: float
    hits: int
    samples: int


def _uniform_in_ball(center, r, count, rng):
    n = len(center)
    z = rng.standard_normal((count, n))
    z /= np.linalg.norm(z, axis=1)[:, None]
    u = rng.random(count) ** (1.0 / n)
    return center + r * u[:, None] * z


def levelset_area_in_ball(value_fn, grad_fn, p, r, rng, samples=400_000,
                          eps=None, convexity_checks=64) -> AreaEstimate:
    """Monte Carlo (n-1)-measure of {f = 0, grad f != 0} inside a ball,
    through the thin-slab co-area identity
    area ~ vol(B) * E[ |grad f| 1_{|f|<eps} ] / (2 eps)."""
    p = np.asarray(p, dtype=np.float64)
    n = len(p)
    eps = 0.01 * r if eps is None else eps

    if convexity_checks:
        x = _uniform_in_ball(p, r, convexity_checks, rng)
        y = _uniform_in_ball(p, r, convexity_checks, rng)
        mid = value_fn(0.5 * (x + y))
        bound = 0.5 * (value_fn(x) + value_fn(y))
        if np.any(mid > bound + 1e-9):
            raise PolysmoothError("midpoint convexity spot check failed")

    x = _uniform_in_ball(p, r, samples, rng)
    vals = value_fn(x)
    inside = np.abs(vals) < eps
    grad_norm = np.zeros(samples)
    if np.any(inside):
        grad_norm[inside] = np.linalg.norm(grad_fn(x[inside]), axis=1)
    vol = unit_ball_volume(n) * r ** n
    integrand = grad_norm * inside / (2.0 * eps)
    value = vol * float(integrand.mean())
    stderr = vol * float(integrand.std(ddof=1)) / math.sqrt(samples)
    return AreaEstimate(value=value, stderr=stderr,
                        hits=int(inside.sum()), samples=samples)


def area_growth_constant(n: int) -> float:
    """Constant of the convex level-set area bound C(n) r^(n-1): the
    projection argument yields the full sphere measure."""
    return sphere_surface_measure(n)
