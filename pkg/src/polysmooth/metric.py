"""Riemannian metric fields with analytic first derivatives, and the
level-set geometry (unit normals, mean curvature, second fundamental
form) computed against them.

Only built-in families are supported; each carries closed-form
derivatives so curvature formulas never stack finite differences:

  euclidean   g = I
  constant    g = A^T A for a fixed invertible A
  conformal   g = exp(2 phi) I, phi quadratic or Gaussian
  pullback    g = Dpsi^T Dpsi for psi(x) = x + eps v(x), v polynomial
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import PolysmoothError, VanishingGradientError

GRAD_FLOOR = 1e-12


class MetricField:
    """Pointwise SPD matrix field with analytic derivative tensor."""

    family = "base"

    def matrix(self, points):
        """g at a batch of points, shape (m, n, n)."""
        raise NotImplementedError

    def derivative(self, points):
        """dg with layout [m, k, i, j] = d_k g_ij."""
        raise NotImplementedError

    def params(self):
        return {}

    def to_json(self):
        return {"family": self.family, **self.params()}


class EuclideanMetric(MetricField):
    family = "euclidean"

    def __init__(self, n):
        self.n = n

    def matrix(self, points):
        m = len(np.atleast_2d(points))
        return np.broadcast_to(np.eye(self.n), (m, self.n, self.n)).copy()

    def derivative(self, points):
        m = len(np.atleast_2d(points))
        return np.zeros((m, self.n, self.n, self.n))


class ConstantMetric(MetricField):
    """g = A^T A for a fixed invertible matrix A."""

    family = "constant"

    def __init__(self, a_matrix):
        a = np.asarray(a_matrix, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("matrix must be square")
        if abs(np.linalg.det(a)) < 1e-12:
            raise ValueError("matrix must be invertible")
        self.a = a
        self.n = a.shape[0]
        self.g = a.T @ a

    def matrix(self, points):
        m = len(np.atleast_2d(points))
        return np.broadcast_to(self.g, (m, self.n, self.n)).copy()

    def derivative(self, points):
        m = len(np.atleast_2d(points))
        return np.zeros((m, self.n, self.n, self.n))

    def params(self):
        return {"matrix": self.a.tolist()}


class ConformalMetric(MetricField):
    """g = exp(2 phi) I with phi either eps*|x-x0|^2 or a Gaussian bump."""

    family = "conformal"

    def __init__(self, n, phi="quadratic", center=None, coeff=0.1,
                 amplitude=0.1, width=1.0):
        self.n = n
        self.kind = phi
        self.center = np.zeros(n) if center is None else \
            np.asarray(center, dtype=np.float64)
        self.coeff = float(coeff)
        self.amplitude = float(amplitude)
        self.width = float(width)
        if phi not in ("quadratic", "gaussian"):
            raise ValueError("phi must be 'quadratic' or 'gaussian'")

    def phi(self, points):
        x = np.atleast_2d(points) - self.center
        r2 = np.sum(x * x, axis=1)
        if self.kind == "quadratic":
            return self.coeff * r2
        return self.amplitude * np.exp(-r2 / (2.0 * self.width ** 2))

    def dphi(self, points):
        x = np.atleast_2d(points) - self.center
        if self.kind == "quadratic":
            return 2.0 * self.coeff * x
        r2 = np.sum(x * x, axis=1)
        envelope = self.amplitude * np.exp(-r2 / (2.0 * self.width ** 2))
        return -(envelope / self.width ** 2)[:, None] * x

    def matrix(self, points):
        pts = np.atleast_2d(points)
        factor = np.exp(2.0 * self.phi(pts))
        return factor[:, None, None] * np.eye(self.n)

    def derivative(self, points):
        pts = np.atleast_2d(points)
        factor = np.exp(2.0 * self.phi(pts))
        dp = self.dphi(pts)
        eye = np.eye(self.n)
        return 2.0 * (factor[:, None] * dp)[:, :, None, None] * eye

    def params(self):
        out = {"phi": self.kind, "center": self.center.tolist()}
        if self.kind == "quadratic":
            out["coeff"] = self.coeff
        else:
            out.update({"amplitude": self.amplitude, "width": self.width})
        return out


class PullbackMetric(MetricField):
    """Flat metric pulled back by psi(x) = x + eps (L x + Q[x, x])."""

    family = "pullback"

    def __init__(self, n, eps=0.1, linear=None, quadratic=None):
        self.n = n
        self.eps = float(eps)
        self.linear = np.zeros((n, n)) if linear is None else \
            np.asarray(linear, dtype=np.float64)
        if quadratic is None:
            quad = np.zeros((n, n, n))
        else:
            quad = np.asarray(quadratic, dtype=np.float64)
        # symmetrize the bilinear part in its two argument slots
        self.quadratic = 0.5 * (quad + np.swapaxes(quad, 1, 2))

    def _jacobian(self, pts):
        # Dpsi[m, a, i] = d_i psi_a
        m = len(pts)
        jac = np.broadcast_to(np.eye(self.n), (m, self.n, self.n)).copy()
        jac += self.eps * self.linear
        jac += 2.0 * self.eps * np.einsum("abc,mc->mab", self.quadratic, pts)
        return jac

    def matrix(self, points):
        pts = np.atleast_2d(points)
        jac = self._jacobian(pts)
        return np.einsum("mai,maj->mij", jac, jac)

    def derivative(self, points):
        pts = np.atleast_2d(points)
        jac = self._jacobian(pts)
        # d_k Dpsi[a, i] = 2 eps Q[a, i, k]
        second = 2.0 * self.eps * self.quadratic
        term = np.einsum("aik,maj->mkij", second, jac)
        return term + np.swapaxes(term, 2, 3)

    def params(self):
        return {
            "eps": self.eps,
            "linear": self.linear.tolist(),
            "quadratic": self.quadratic.tolist(),
        }


def metric_from_json(source, n=None):
    if isinstance(source, (str, bytes)):
        with open(source) as fh:
            data = json.load(fh)
    else:
        data = dict(source)
    family = data.pop("family")
    if family == "euclidean":
        return EuclideanMetric(n=n or data.get("n", 3))
    if family == "constant":
        return ConstantMetric(data["matrix"])
    if family == "conformal":
        dim = n or data.pop("n", None) or len(data.get("center", [0, 0, 0]))
        return ConformalMetric(n=dim, **data)
    if family == "pullback":
        dim = n or data.pop("n", None) or len(data.get("linear", [[0]] * 3))
        return PullbackMetric(n=dim, **data)
    raise ValueError(f"unknown metric family {family!r}")


# ---------------------------------------------------------------------------
# pointwise jets and level-set geometry


@dataclass(frozen=True)
class MetricJet:
    g: np.ndarray
    inv: np.ndarray
    gamma: np.ndarray  # Christoffel symbols, layout [k, i, j]


@dataclass(frozen=True)
class MetricJetBatch:
    g: np.ndarray      # (m, n, n)
    inv: np.ndarray    # (m, n, n)
    gamma: np.ndarray  # (m, k, i, j)


def metric_jet_batch(metric, points) -> MetricJetBatch:
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    g = metric.matrix(pts)
    try:
        np.linalg.cholesky(g)
    except np.linalg.LinAlgError:
        eigs = np.linalg.eigvalsh(g)
        bad = int(np.argmin(eigs[:, 0]))
        raise PolysmoothError(
            f"metric not positive definite at point {pts[bad].tolist()} "
            f"(min eigenvalue {eigs[bad, 0]:.3e})") from None
    inv = np.linalg.inv(g)
    dg = metric.derivative(pts)
    # bracket[m, i, j, l] = d_i g_jl + d_j g_il - d_l g_ij
    bracket = dg + dg.transpose(0, 2, 1, 3) - dg.transpose(0, 2, 3, 1)
    gamma = 0.5 * np.einsum("mkl,mijl->mkij", inv, bracket)
    return MetricJetBatch(g=g, inv=inv, gamma=gamma)


def metric_jet(metric, x) -> MetricJet:
    batch = metric_jet_batch(metric, np.asarray(x)[None, :])
    return MetricJet(g=batch.g[0], inv=batch.inv[0], gamma=batch.gamma[0])


def g_gradient(df, jet):
    """Raise an index: gradient = g^{-1} df."""
    return jet.inv @ np.asarray(df, dtype=np.float64)


def g_norm(df, jet):
    df = np.asarray(df, dtype=np.float64)
    return float(np.sqrt(max(df @ jet.inv @ df, 0.0)))


def g_unit_normal(df, jet):
    grad = g_gradient(df, jet)
    norm = g_norm(df, jet)
    if norm < GRAD_FLOOR:
        raise VanishingGradientError(
            "gradient vanishes in the metric norm; cannot normalize")
    return grad / norm


def _hessian_with_connection(df, hess, gamma):
    return hess - np.einsum("kij,k->ij", gamma, df)


def level_set_mean_curvature(jet, mjet) -> float:
    """Mean curvature of the level set through the point, outward normal
    pointing to larger values; the unit sphere boundary gives +(n-1)."""
    df = jet.gradient
    norm = g_norm(df, mjet)
    if norm < GRAD_FLOOR:
        raise VanishingGradientError("vanishing gradient in curvature formula")
    nu_up = (mjet.inv @ df) / norm
    hg = _hessian_with_connection(df, jet.hessian, mjet.gamma)
    proj = mjet.inv - np.outer(nu_up, nu_up)
    return float(np.einsum("ij,ij->", proj, hg) / norm)


def second_fundamental_form(jet, mjet):
    """Bilinear form on tangent vectors: II(X, Y) = Hess f(X, Y) / |grad f|."""
    df = jet.gradient
    norm = g_norm(df, mjet)
    if norm < GRAD_FLOOR:
        raise VanishingGradientError("vanishing gradient in curvature formula")
    hg = _hessian_with_connection(df, jet.hessian, mjet.gamma)
    return hg / norm


def mean_curvature_batch(df, hess, mjets: MetricJetBatch):
    """Vectorized level-set mean curvature for batches of jets."""
    inv = mjets.inv
    norm = np.sqrt(np.maximum(
        np.einsum("mi,mij,mj->m", df, inv, df), 0.0))
    bad = norm < GRAD_FLOOR
    if np.any(bad):
        raise VanishingGradientError(
            f"vanishing gradient at {int(bad.sum())} batch points")
    nu_up = np.einsum("mij,mj->mi", inv, df) / norm[:, None]
    hg = hess - np.einsum("mkij,mk->mij", mjets.gamma, df)
    proj = inv - nu_up[:, :, None] * nu_up[:, None, :]
    return np.einsum("mij,mij->m", proj, hg) / norm


# ---------------------------------------------------------------------------
# hypothesis checks of the curvature comparison setup


@dataclass
class MetricAssumptionReport:
    face_min_h: list
    pair_max_gap: list
    empty_faces: list = field(default_factory=list)
    empty_pairs: list = field(default_factory=list)
    passed: bool = False
    tol: float = 1e-9

    def to_dict(self):
        return {
            "face_min_mean_curvature": self.face_min_h,
            "pair_max_angle_gap": self.pair_max_gap,
            "empty_faces": self.empty_faces,
            "empty_pairs": self.empty_pairs,
            "passed": self.passed,
            "tol": self.tol,
        }


def sample_on_face(polytope, k, count, rng, tol=1e-9):
    """Rejection samples on face k: project box samples to the face plane,
    keep those inside the region."""
    lo, hi = polytope.bounding_box()
    nk = polytope.normals[k]
    out = []
    have = 0
    for _ in range(400):
        x = rng.uniform(lo, hi, size=(max(count * 4, 128), polytope.n))
        x = x - (x @ nk + polytope.offsets[k])[:, None] * nk
        keep = x[np.all(polytope.values(x) <= tol, axis=1)]
        if len(keep):
            out.append(keep)
            have += len(keep)
        if have >= count:
            break
    if not out:
        return np.empty((0, polytope.n))
    return np.concatenate(out)[:count]


def sample_on_pair_locus(polytope, j, k, count, rng, tol=1e-9):
    """Rejection samples on the codimension-two locus u_j = u_k = 0."""
    lo, hi = polytope.bounding_box()
    nj, nk = polytope.normals[j], polytope.normals[k]
    c = float(nj @ nk)
    gram = np.array([[1.0, c], [c, 1.0]])
    if abs(np.linalg.det(gram)) < 1e-12:
        return np.empty((0, polytope.n))
    out = []
    have = 0
    for _ in range(400):
        x = rng.uniform(lo, hi, size=(max(count * 8, 256), polytope.n))
        rhs = -np.stack([x @ nj + polytope.offsets[j],
                         x @ nk + polytope.offsets[k]])
        corr = np.linalg.solve(gram, rhs)
        x = x + corr[0][:, None] * nj + corr[1][:, None] * nk
        keep = x[np.all(polytope.values(x) <= tol, axis=1)]
        if len(keep):
            out.append(keep)
            have += len(keep)
        if have >= count:
            break
    if not out:
        return np.empty((0, polytope.n))
    return np.concatenate(out)[:count]


def check_metric_assumptions(polytope, metric, rng, samples_per_face=200,
                             tol=1e-9):
    """Sample each face and each co-active pair locus; verify nonnegative
    face mean curvature and the two-sided angle comparison."""
    from .polytope import pairwise_coactivity_threshold

    face_min = []
    empty_faces = []
    for k in range(polytope.q + 1):
        pts = sample_on_face(polytope, k, samples_per_face, rng)
        if not len(pts):
            empty_faces.append(k)
            face_min.append({"face": k, "min_h": None})
            continue
        mjets = metric_jet_batch(metric, pts)
        df = np.broadcast_to(polytope.normals[k], pts.shape)
        hess = np.zeros((len(pts), polytope.n, polytope.n))
        h = mean_curvature_batch(df, hess, mjets)
        face_min.append({"face": k, "min_h": float(h.min())})

    pair_max = []
    empty_pairs = []
    import itertools
    for j, k in itertools.combinations(range(polytope.q + 1), 2):
        if pairwise_coactivity_threshold(polytope, j, k) < -tol:
            continue
        pts = sample_on_pair_locus(polytope, j, k, samples_per_face, rng)
        if not len(pts):
            empty_pairs.append([j, k])
            pair_max.append({"j": j, "k": k, "max_gap": None, "flat_inner": None})
            continue
        mjets = metric_jet_batch(metric, pts)
        nj = np.broadcast_to(polytope.normals[j], pts.shape)
        nk = np.broadcast_to(polytope.normals[k], pts.shape)
        gj = np.einsum("mij,mj->mi", mjets.inv, nj)
        gk = np.einsum("mij,mj->mi", mjets.inv, nk)
        num = np.einsum("mi,mij,mj->m", gj, mjets.g, gk)
        den = np.sqrt(np.einsum("mi,mij,mj->m", gj, mjets.g, gj)
                      * np.einsum("mi,mij,mj->m", gk, mjets.g, gk))
        inner_g = num / den
        flat = float(polytope.normals[j] @ polytope.normals[k])
        gap = inner_g - flat
        pair_max.append({"j": j, "k": k, "max_gap": float(gap.max()),
                         "flat_inner": flat})

    ok_faces = all(rec["min_h"] is None or rec["min_h"] >= -tol
                   for rec in face_min)
    ok_pairs = all(rec["max_gap"] is None or rec["max_gap"] <= tol
                   for rec in pair_max)
    report = MetricAssumptionReport(
        face_min_h=face_min, pair_max_gap=pair_max,
        empty_faces=empty_faces, empty_pairs=empty_pairs,
        passed=ok_faces and ok_pairs, tol=tol)
    return report
