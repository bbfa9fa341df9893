"""Polytopes as intersections of affine half-spaces, with the
non-degeneracy constants used by the smoothing construction.

All linear programs here are tiny (a handful of variables and at most a
few dozen constraints); scipy's HiGHS backend solves them directly.
"""

from __future__ import annotations

import itertools
import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .errors import (
    CertificateError,
    EmptyInteriorError,
    LPError,
    NoValidLambdaError,
    UnboundedPolytopeError,
)

FEAS_TOL = 1e-9
DELTA_CAP = 1.0


@dataclass(frozen=True)
class LinearFunctional:
    """Affine face functional u(x) = <normal, x> + offset with |normal| = 1."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        normal = np.asarray(self.normal, dtype=np.float64)
        norm = float(np.linalg.norm(normal))
        if norm < 1e-14:
            raise ValueError("face normal must be non-zero")
        if abs(norm - 1.0) > 1e-12:
            if np.max(np.abs(normal / norm - normal)) > 1e-9:
                warnings.warn(
                    "face normal renormalized by more than 1e-9", stacklevel=3)
            normal = normal / norm
        object.__setattr__(self, "normal", normal)
        object.__setattr__(self, "offset", float(self.offset))
        self.normal.setflags(write=False)

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        return x @ self.normal + self.offset


class Polytope:
    """Intersection of half-spaces {u_m <= 0}, m = 0..q."""

    def __init__(self, faces):
        faces = list(faces)
        if not faces:
            raise ValueError("at least one face is required")
        self.faces = faces
        self.n = len(faces[0].normal)
        if any(len(f.normal) != self.n for f in faces):
            raise ValueError("all faces must share the ambient dimension")
        self.q = len(faces) - 1
        self.normals = np.ascontiguousarray([f.normal for f in faces])
        self.offsets = np.ascontiguousarray([f.offset for f in faces])
        self._bbox = None

    @classmethod
    def from_arrays(cls, normals, offsets):
        return cls([LinearFunctional(n, c) for n, c in zip(normals, offsets)])

    @classmethod
    def from_json(cls, source):
        if isinstance(source, (str, bytes)):
            with open(source) as fh:
                data = json.load(fh)
        else:
            data = source
        n = int(data["n"])
        faces = []
        for rec in data["faces"]:
            normal = np.asarray(rec["normal"], dtype=np.float64)
            if normal.shape != (n,):
                raise ValueError("face normal has wrong dimension")
            faces.append(LinearFunctional(normal, float(rec["offset"])))
        return cls(faces)

    def to_json(self):
        return {
            "n": self.n,
            "faces": [
                {"normal": f.normal.tolist(), "offset": f.offset}
                for f in self.faces
            ],
        }

    def values(self, x):
        """u_m(x) for all faces; x may be a single point or a batch."""
        x = np.asarray(x, dtype=np.float64)
        return x @ self.normals.T + self.offsets

    def contains(self, x, tol=FEAS_TOL):
        return np.all(self.values(x) <= tol, axis=-1)

    def bounding_box(self):
        """Coordinate-wise extent of the feasible region (LP per direction)."""
        if self._bbox is None:
            lo = np.empty(self.n)
            hi = np.empty(self.n)
            for i in range(self.n):
                c = np.zeros(self.n)
                c[i] = 1.0
                lo[i] = self._extreme(c)
                hi[i] = -self._extreme(-c)
            self._bbox = (lo, hi)
        return self._bbox

    def _extreme(self, c):
        res = linprog(c, A_ub=self.normals, b_ub=-self.offsets,
                      bounds=[(None, None)] * self.n, method="highs")
        if res.status == 3:
            raise UnboundedPolytopeError(
                f"feasible region unbounded in direction {-c}")
        if res.status != 0:
            raise LPError(f"direction LP failed: {res.message}")
        return float(res.fun)


# ---------------------------------------------------------------------------
# assumption checks


@dataclass
class FaceWitness:
    index: int
    witness: np.ndarray
    max_value: float
    non_redundant: bool


@dataclass
class PairRecord:
    j: int
    k: int
    inner: float
    threshold: float
    coactive: bool
    ok: bool


@dataclass
class AssumptionReport:
    bounded: bool
    center: np.ndarray
    margin: float
    face_witnesses: list[FaceWitness] = field(default_factory=list)
    pairs: list[PairRecord] = field(default_factory=list)
    passed: bool = False

    def to_dict(self):
        return {
            "bounded": self.bounded,
            "center": self.center.tolist(),
            "margin": self.margin,
            "faces": [
                {"index": w.index, "witness": w.witness.tolist(),
                 "max_value": w.max_value, "non_redundant": w.non_redundant}
                for w in self.face_witnesses
            ],
            "pairs": [
                {"j": p.j, "k": p.k, "inner": p.inner,
                 "threshold": p.threshold, "coactive": p.coactive, "ok": p.ok}
                for p in self.pairs
            ],
            "passed": self.passed,
        }


def chebyshev_center(polytope):
    """Deepest interior point and its margin: maximize m s.t. u_k(x) <= -m."""
    n = polytope.n
    c = np.zeros(n + 1)
    c[-1] = -1.0
    A = np.hstack([polytope.normals, np.ones((polytope.q + 1, 1))])
    res = linprog(c, A_ub=A, b_ub=-polytope.offsets,
                  bounds=[(None, None)] * n + [(None, None)], method="highs")
    if res.status == 3:
        raise UnboundedPolytopeError("feasible region unbounded")
    if res.status != 0:
        raise LPError(f"center LP failed: {res.message}")
    x, margin = res.x[:n], float(res.x[-1])
    if margin <= FEAS_TOL:
        raise EmptyInteriorError(f"interior margin {margin:.3e} not positive")
    return x, margin


def pairwise_coactivity_threshold(polytope, j, k):
    """max over the region of min(u_j, u_k); 0 iff the two faces meet inside."""
    if not 0 <= j < k <= polytope.q:
        raise ValueError("need 0 <= j < k <= q")
    n = polytope.n
    c = np.zeros(n + 1)
    c[-1] = -1.0
    rows = [np.append(polytope.normals[m], 0.0) for m in range(polytope.q + 1)]
    rhs = list(-polytope.offsets)
    for idx in (j, k):
        rows.append(np.append(-polytope.normals[idx], 1.0))
        rhs.append(polytope.offsets[idx])
    res = linprog(c, A_ub=np.array(rows), b_ub=np.array(rhs),
                  bounds=[(None, None)] * (n + 1), method="highs")
    if res.status == 2:
        raise LPError("co-activity LP infeasible: empty region")
    if res.status != 0:
        raise LPError(f"co-activity LP failed: {res.message}")
    return float(res.x[-1])


def check_assumptions(polytope, tol=FEAS_TOL):
    """Validate boundedness, non-redundancy of every face, and the
    non-obtuse angle condition on co-active pairs."""
    lo, hi = polytope.bounding_box()  # raises if unbounded
    center, margin = chebyshev_center(polytope)  # raises if empty interior
    report = AssumptionReport(bounded=True, center=center, margin=margin)

    span = float(np.max(hi - lo))
    for k in range(polytope.q + 1):
        mask = np.arange(polytope.q + 1) != k
        c = -polytope.normals[k]
        res = linprog(
            c, A_ub=polytope.normals[mask], b_ub=-polytope.offsets[mask],
            bounds=list(zip(lo - span, hi + span)), method="highs")
        if res.status != 0:
            raise LPError(f"redundancy LP for face {k} failed: {res.message}")
        best = float(-res.fun + polytope.offsets[k])
        report.face_witnesses.append(FaceWitness(
            index=k, witness=res.x, max_value=best,
            non_redundant=best > tol))

    for j, k in itertools.combinations(range(polytope.q + 1), 2):
        tstar = pairwise_coactivity_threshold(polytope, j, k)
        inner = float(polytope.normals[j] @ polytope.normals[k])
        coactive = tstar >= -tol
        ok = (not coactive) or inner <= tol
        report.pairs.append(PairRecord(
            j=j, k=k, inner=inner, threshold=tstar, coactive=coactive, ok=ok))

    report.passed = (
        all(w.non_redundant for w in report.face_witnesses)
        and all(p.ok for p in report.pairs)
    )
    return report


def delta_for_epsilon(polytope, eps, cap=DELTA_CAP):
    """Slab width below which every co-active-at-that-width pair has
    inner product at most eps."""
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    worst = cap
    for j, k in itertools.combinations(range(polytope.q + 1), 2):
        inner = float(polytope.normals[j] @ polytope.normals[k])
        if inner <= eps:
            continue
        tstar = pairwise_coactivity_threshold(polytope, j, k)
        if tstar >= -FEAS_TOL:
            raise CertificateError(
                f"faces {j},{k} meet inside the region with inner product "
                f"{inner:.3f} > eps; angle assumption violated")
        worst = min(worst, 0.5 * (-tstar))
    return worst


def wedge_norm(v, w):
    """Area of the parallelogram spanned by v and w."""
    v = np.asarray(v, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    vv = np.sum(v * v, axis=-1)
    ww = np.sum(w * w, axis=-1)
    vw = np.sum(v * w, axis=-1)
    return np.sqrt(np.maximum(vv * ww - vw * vw, 0.0))


# ---------------------------------------------------------------------------
# the constants of the active-combination and wedge lower bounds


def simplex_min_norm(normals):
    """Distance from the origin to the convex hull of the given rows.

    Exact for small input sets: every support of the minimizer is tried
    through its equality-constrained KKT system (the nearest point in a
    hull of p points in R^n is carried by at most n+1 of them).
    """
    N = np.atleast_2d(np.asarray(normals, dtype=np.float64))
    p, n = N.shape
    G = N @ N.T
    best_val = np.inf
    best_a = None
    max_support = min(p, n + 1)
    for size in range(1, max_support + 1):
        for support in itertools.combinations(range(p), size):
            idx = list(support)
            Gs = G[np.ix_(idx, idx)]
            kkt = np.zeros((size + 1, size + 1))
            kkt[:size, :size] = 2.0 * Gs
            kkt[:size, size] = -1.0
            kkt[size, :size] = 1.0
            rhs = np.zeros(size + 1)
            rhs[size] = 1.0
            sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
            a = sol[:size]
            if np.any(a < -1e-10) or abs(np.sum(a) - 1.0) > 1e-9:
                continue
            val = float(np.sqrt(max(a @ Gs @ a, 0.0)))
            if val < best_val:
                best_val = val
                best_a = np.zeros(p)
                best_a[idx] = a
    return best_val, best_a


def _coactive_set_feasible(polytope, subset, delta):
    n = polytope.n
    rows = [polytope.normals[m] for m in range(polytope.q + 1)]
    rhs = list(-polytope.offsets)
    for i in subset:
        rows.append(-polytope.normals[i])
        rhs.append(polytope.offsets[i] + delta)
    lo, hi = polytope.bounding_box()
    res = linprog(np.zeros(n), A_ub=np.array(rows), b_ub=np.array(rhs),
                  bounds=list(zip(lo - 1.0, hi + 1.0)), method="highs")
    return res.status == 0


def _min_active_norm(polytope, delta):
    """min over delta-co-active face sets of the hull distance of their
    normals; set enumeration is cut off at size n+1 and pruned by
    pairwise feasibility."""
    q1 = polytope.q + 1
    pair_ok = np.ones((q1, q1), dtype=bool)
    for j, k in itertools.combinations(range(q1), 2):
        tstar = pairwise_coactivity_threshold(polytope, j, k)
        pair_ok[j, k] = pair_ok[k, j] = tstar >= -delta
    best = np.inf
    for size in range(1, min(q1, polytope.n + 1) + 1):
        for subset in itertools.combinations(range(q1), size):
            if size >= 2 and not all(
                    pair_ok[a, b] for a, b in itertools.combinations(subset, 2)):
                continue
            if size >= 3 and not _coactive_set_feasible(polytope, subset, delta):
                continue
            val, _ = simplex_min_norm(polytope.normals[list(subset)])
            best = min(best, val)
    return best


def compute_lambda_constant(polytope, max_lambda=1e6, certify=2000, seed=0):
    """Constant of the active-combination lower bound.

    Fixed-point iteration lam <- max(lam, 1/m(2/lam)) where m(delta) is
    the minimal hull distance over delta-co-active normal sets; the
    returned value need not be minimal and is certified by randomized
    sampling when certify > 0.
    """
    lam = 2.0
    for _ in range(80):
        m = _min_active_norm(polytope, 2.0 / lam)
        if m <= 1e-9:
            lam *= 2.0
        else:
            need = 1.0 / m
            if need <= lam + 1e-12:
                break
            lam = need
        if lam > max_lambda:
            raise NoValidLambdaError(
                f"no valid active-combination constant below {max_lambda:g}; "
                "face configuration is near-degenerate")
    else:
        raise NoValidLambdaError("constant iteration did not settle")
    if certify:
        try:
            result = certify_lambda(polytope, lam, certify,
                                    np.random.default_rng(seed))
        except UnboundedPolytopeError:
            result = None  # certification sampling needs a compact region
        if result and result["violations"]:
            raise CertificateError(
                f"lambda certificate failed at {result['violations']} of "
                f"{result['samples']} samples")
    return lam


def compute_xi_constant(polytope, lam, certify=2000, seed=1, cap=DELTA_CAP):
    """Constant of the pairwise wedge lower bound, 2/delta with delta
    tied to the half-inverse of the combination constant."""
    if polytope.q == 0:
        # no second face: the bound is vacuous; sentinel keeps reports uniform
        return 2.0 * lam + 1.0
    delta = min(delta_for_epsilon(polytope, 0.5 / lam, cap=cap),
                (1.0 / lam) * (1.0 - 1e-9))
    xi = 2.0 / delta
    if certify:
        result = certify_xi(polytope, lam, xi, certify,
                            np.random.default_rng(seed))
        if result["violations"]:
            raise CertificateError(
                f"xi certificate failed at {result['violations']} of "
                f"{result['samples']} samples")
    return xi


# ---------------------------------------------------------------------------
# sampling and randomized certificates


def sample_in_polytope(polytope, count, rng, max_batches=4000):
    """Uniform rejection samples from the feasible region."""
    lo, hi = polytope.bounding_box()
    out = []
    have = 0
    for _ in range(max_batches):
        x = rng.uniform(lo, hi, size=(max(4 * count, 256), polytope.n))
        keep = x[polytope.contains(x, tol=0.0)]
        if len(keep):
            out.append(keep)
            have += len(keep)
        if have >= count:
            break
    if have < count:
        raise LPError("rejection sampling starved; region too thin for bbox")
    return np.concatenate(out)[:count]


def _near_boundary_samples(polytope, count, width, rng):
    """Points pushed to within `width` of a random face, rejected to stay
    inside the region."""
    base = sample_in_polytope(polytope, count, rng)
    k = rng.integers(0, polytope.q + 1, size=count)
    depth = rng.uniform(0.0, width, size=count)
    uk = np.einsum("ij,ij->i", base, polytope.normals[k]) + polytope.offsets[k]
    x = base + ((-uk - depth))[:, None] * polytope.normals[k]
    inside = polytope.contains(x, tol=0.0)
    return x[inside]


def certify_lambda(polytope, lam, samples, rng):
    """Randomized test of: sum(a) <= lam * |sum a_i N_i| for nonnegative a
    supported on the 2/lam-active faces at a feasible point."""
    width = 2.0 / lam
    pts = np.concatenate([
        sample_in_polytope(polytope, samples // 2 + 1, rng),
        _near_boundary_samples(polytope, samples, width, rng),
    ])[:samples]
    vals = polytope.values(pts)
    active = vals > -width
    raw = rng.exponential(size=vals.shape) * active
    rowsum = raw.sum(axis=1)
    ok = rowsum > 0
    a = raw[ok] / rowsum[ok][:, None]
    combo = a @ polytope.normals
    margin = lam * np.linalg.norm(combo, axis=1) - 1.0
    violations = int(np.sum(margin < -1e-9))
    return {
        "samples": int(ok.sum()),
        "violations": violations,
        "worst_margin": float(margin.min()) if len(margin) else np.inf,
    }


def certify_xi(polytope, lam, xi, samples, rng):
    """Randomized test of the wedge bound sum(a) <= xi * |(sum a_i N_i) ^ N_k|
    in the two-slab configuration."""
    width = 2.0 / xi
    coactive = [
        (j, k) for j, k in itertools.combinations(range(polytope.q + 1), 2)
        if k >= 1 and pairwise_coactivity_threshold(polytope, j, k) >= -FEAS_TOL
    ]
    if not coactive:
        return {"samples": 0, "violations": 0, "worst_margin": np.inf}
    base = sample_in_polytope(polytope, samples, rng)
    choice = rng.integers(0, len(coactive), size=len(base))
    margins = []
    for idx, (j, k) in enumerate(coactive):
        sel = base[choice == idx]
        if not len(sel):
            continue
        Nj, Nk = polytope.normals[j], polytope.normals[k]
        gram = np.array([[1.0, Nj @ Nk], [Nj @ Nk, 1.0]])
        sj = rng.uniform(0.0, width, size=len(sel))
        sk = rng.uniform(0.0, width, size=len(sel))
        uj = sel @ Nj + polytope.offsets[j]
        uk = sel @ Nk + polytope.offsets[k]
        corr = np.linalg.solve(gram, np.stack([-uj - sj, -uk - sk]))
        x = sel + corr[0][:, None] * Nj + corr[1][:, None] * Nk
        inside = polytope.contains(x, tol=0.0)
        x = x[inside]
        if not len(x):
            continue
        vals = polytope.values(x)
        active = vals[:, :k] > -width
        raw = rng.exponential(size=active.shape) * active
        rowsum = raw.sum(axis=1)
        okrows = rowsum > 0
        a = raw[okrows] / rowsum[okrows][:, None]
        combo = a @ polytope.normals[:k]
        wedge = wedge_norm(combo, np.broadcast_to(Nk, combo.shape))
        margins.append(xi * wedge - 1.0)
    if not margins:
        return {"samples": 0, "violations": 0, "worst_margin": np.inf}
    margin = np.concatenate(margins)
    return {
        "samples": int(len(margin)),
        "violations": int(np.sum(margin < -1e-9)),
        "worst_margin": float(margin.min()),
    }


# ---------------------------------------------------------------------------
# bundled constants


@dataclass(frozen=True)
class PolytopeConstants:
    lam: float
    xi: float
    delta_table: tuple
    M: float
    certificate_samples: int

    def delta_at(self, eps):
        """Table lookup, conservative from below."""
        best = None
        for e, d in self.delta_table:
            if e <= eps:
                best = d
        if best is None:
            best = self.delta_table[0][1]
        return best

    def epsilon_for_delta(self, delta):
        """Smallest tabulated eps whose slab width is at least delta."""
        for e, d in self.delta_table:
            if d >= delta:
                return e
        return self.delta_table[-1][0]

    def to_dict(self):
        return {
            "lambda": self.lam,
            "xi": self.xi,
            "delta_table": [[e, d] for e, d in self.delta_table],
            "M": self.M,
            "certificate_samples": self.certificate_samples,
        }


def transversality_reach(polytope):
    """Constant M > 2 bounding the distance from a two-slab point to the
    exact pair locus, from the worst pair conditioning."""
    worst = 2.0 + 1e-6
    for j, k in itertools.combinations(range(polytope.q + 1), 2):
        if pairwise_coactivity_threshold(polytope, j, k) < -FEAS_TOL:
            continue
        c = abs(float(polytope.normals[j] @ polytope.normals[k]))
        sigma = np.sqrt(max(1.0 - c, 1e-12))
        worst = max(worst, 3.0 / sigma)
    return worst


def polytope_constants(polytope, certify=2000, seed=0,
                       eps_grid=None) -> PolytopeConstants:
    lam = compute_lambda_constant(polytope, certify=certify, seed=seed)
    xi = compute_xi_constant(polytope, lam, certify=certify, seed=seed + 1)
    if eps_grid is None:
        eps_grid = np.concatenate([[0.01], np.arange(0.05, 1.0, 0.05)])
    table = tuple(
        (float(e), float(delta_for_epsilon(polytope, float(e))))
        for e in eps_grid
    )
    return PolytopeConstants(
        lam=lam, xi=xi, delta_table=table,
        M=transversality_reach(polytope),
        certificate_samples=certify,
    )
