"""Scenario loading, the registered verification checks, sweeps, and
report emission.

Every numbered property of the construction is a registered check with a
stable anchor id.  Checks that depend on the curvature-comparison
hypotheses of the metric are skipped (with notice) when the hypothesis
check itself fails, mirroring the structure of the estimates.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import sys
import zlib
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import __version__, kernels, surface
from .errors import PolysmoothError
from .eta import default_kernel
from .gaussmap import nhat_chain, sin_ratio_bound, sin_ratio_gap, t_cot_t
from .metric import (
    EuclideanMetric,
    check_metric_assumptions,
    metric_from_json,
    metric_jet_batch,
    sample_on_pair_locus,
)
from .polytope import (
    Polytope,
    certify_lambda,
    certify_xi,
    check_assumptions,
    delta_for_epsilon,
    pairwise_coactivity_threshold,
    polytope_constants,
    sample_in_polytope,
    wedge_norm,
)
from .smoothing import SmoothField, SmoothingSchedule, coefficients_batch


def default_lambda0(gamma: float, q: int, xi: float) -> float:
    """Schedule heuristic used when the configuration leaves the base
    rate unset."""
    return 8.0 * xi / gamma ** q


def default_sigma(q: int) -> float:
    if q <= 1:
        return 2.0
    hi = q / (q - 1)
    return 1.1 if 1.1 < hi else 0.5 * (1.0 + hi)


def _rng_for(seed: int, name: str):
    return np.random.default_rng(
        np.random.SeedSequence([seed, zlib.crc32(name.encode())]))


# ---------------------------------------------------------------------------
# configuration


@dataclass
class ScenarioConfig:
    polytope: dict
    metric: dict
    gamma: float = 0.25
    lambda0: float | None = None
    mesh_level: int = 5
    sigma: float | None = None
    seed: int = 0
    sweep_gammas: tuple = ()
    sweep_lambda0s: tuple = ()
    samples: dict = dc_field(default_factory=dict)

    @classmethod
    def from_json(cls, source):
        if isinstance(source, (str, bytes)):
            with open(source) as fh:
                data = json.load(fh)
        else:
            data = dict(source)
        for key in ("polytope", "metric"):
            val = data.get(key)
            if isinstance(val, str):
                with open(val) as fh:
                    data[key] = json.load(fh)
        sched = data.pop("schedule", None)
        if sched:
            data.setdefault("gamma", sched["gamma"])
            data.setdefault("lambda0", sched.get("lambda0"))
        sweep = data.pop("sweep", None)
        if sweep:
            data["sweep_gammas"] = tuple(sweep.get("gammas", ()))
            data["sweep_lambda0s"] = tuple(sweep.get("lambda0s", ()))
        known = {f.name for f in cls.__dataclass_fields__.values()}
        return cls(**{k: v for k, v in data.items() if k in known})

    def sample_count(self, name, default):
        return int(self.samples.get(name, default))

    def to_dict(self):
        return {
            "polytope": self.polytope,
            "metric": self.metric,
            "gamma": self.gamma,
            "lambda0": self.lambda0,
            "mesh_level": self.mesh_level,
            "sigma": self.sigma,
            "seed": self.seed,
            "sweep_gammas": list(self.sweep_gammas),
            "sweep_lambda0s": list(self.sweep_lambda0s),
            "samples": self.samples,
        }


def cube_polytope_json(side=1.0):
    normals = [[1, 0, 0], [0, 1, 0], [0, 0, 1], [-1, 0, 0], [0, -1, 0], [0, 0, -1]]
    offsets = [-side, -side, -side, 0.0, 0.0, 0.0]
    return {"n": 3, "faces": [{"normal": n, "offset": c}
                              for n, c in zip(normals, offsets)]}


def simplex_polytope_json(inradius=0.3):
    root3 = math.sqrt(3.0)
    normals = [[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]]
    return {"n": 3, "faces": [{"normal": [x / root3 for x in n],
                               "offset": -inradius} for n in normals]}


def default_config() -> ScenarioConfig:
    return ScenarioConfig(
        polytope=cube_polytope_json(),
        metric={"family": "conformal", "phi": "quadratic",
                "center": [0.5, 0.5, 0.5], "coeff": 0.25},
        gamma=0.25, lambda0=12.0, mesh_level=5, seed=0)


# ---------------------------------------------------------------------------
# scenario context


class ScenarioContext:
    """Caches the expensive scenario artifacts across checks."""

    def __init__(self, config: ScenarioConfig):
        self.config = config
        self.polytope = Polytope.from_json(config.polytope)
        self.metric = metric_from_json(config.metric, n=self.polytope.n)
        self.assumptions = check_assumptions(self.polytope)
        if not self.assumptions.passed:
            raise PolysmoothError(
                "polytope assumptions failed; see check-polytope output")
        self.constants = polytope_constants(
            self.polytope, certify=0, seed=config.seed)
        lam0 = config.lambda0
        if lam0 is None:
            lam0 = default_lambda0(config.gamma, self.polytope.q,
                                   self.constants.xi)
        self.schedule = SmoothingSchedule(config.gamma, lam0)
        self.field = SmoothField(self.polytope, self.schedule)
        self.sigma = config.sigma or default_sigma(self.polytope.q)
        self.seed = config.seed
        self._meshes = {}
        self._metric_report = None

    def rng(self, name):
        return _rng_for(self.seed, name)

    def mesh(self, level=None, lambda0=None, metric="scenario", with_map=True):
        level = self.config.mesh_level if level is None else level
        key = (level, lambda0, metric, with_map)
        if key not in self._meshes:
            sched = self.schedule if lambda0 is None else \
                SmoothingSchedule(self.schedule.gamma, lambda0)
            fld = self.field if lambda0 is None else \
                SmoothField(self.polytope, sched)
            met = self.metric if metric == "scenario" else \
                EuclideanMetric(self.polytope.n)
            self._meshes[key] = surface.build_mesh(
                fld, met, level=level, with_map=with_map)
        return self._meshes[key]

    @property
    def metric_report(self):
        if self._metric_report is None:
            self._metric_report = check_metric_assumptions(
                self.polytope, self.metric, self.rng("metric-hypotheses"))
        return self._metric_report

    def box_samples(self, count, rng, pad=0.25):
        lo, hi = self.polytope.bounding_box()
        span = hi - lo
        return rng.uniform(lo - pad * span, hi + pad * span,
                           size=(count, self.polytope.n))

    def interior_samples(self, count, rng):
        return sample_in_polytope(self.polytope, count, rng)

    def pair_slab_samples(self, j, k, width, count, rng):
        """Points with both u_j and u_k in [-width, 0], built by jittering
        pair-locus samples inward."""
        locus = sample_on_pair_locus(self.polytope, j, k, count, rng)
        if not len(locus):
            return locus
        nj = self.polytope.normals[j]
        nk = self.polytope.normals[k]
        c = float(nj @ nk)
        gram = np.array([[1.0, c], [c, 1.0]])
        sj = rng.uniform(0.0, width, size=len(locus))
        sk = rng.uniform(0.0, width, size=len(locus))
        corr = np.linalg.solve(gram, np.stack([-sj, -sk]))
        pts = locus + corr[0][:, None] * nj + corr[1][:, None] * nk
        return pts[self.polytope.contains(pts, tol=0.0)]

    def band_transect_samples(self, j, k, rate_k, count, rng, slab_width=None):
        """Points crossing the level-k smoothing band near the (j, k) edge:
        face k at depth s, face j offset from it by less than one band
        width, so the combination step is active regardless of the rate."""
        locus = sample_on_pair_locus(self.polytope, j, k, count, rng)
        if not len(locus):
            return locus
        nj = self.polytope.normals[j]
        nk = self.polytope.normals[k]
        c = float(nj @ nk)
        gram = np.array([[1.0, c], [c, 1.0]])
        width = slab_width or min(1.0 / self.constants.xi, 0.2)
        s = rng.uniform(0.0, width, size=len(locus))
        off = rng.uniform(-1.1, 1.1, size=len(locus)) / rate_k
        corr = np.linalg.solve(gram, np.stack([-(s + np.maximum(off, 0.0)),
                                               -(s + np.maximum(-off, 0.0))]))
        pts = locus + corr[0][:, None] * nj + corr[1][:, None] * nk
        return pts[self.polytope.contains(pts, tol=0.0)]


# ---------------------------------------------------------------------------
# check plumbing


@dataclass
class CheckResult:
    check_id: str
    anchor: str
    status: str  # pass | fail | skip | error
    samples: int = 0
    worst: float | None = None
    fitted: dict = dc_field(default_factory=dict)
    notes: str = ""

    def to_dict(self):
        return {
            "id": self.check_id,
            "anchor": self.anchor,
            "status": self.status,
            "samples": self.samples,
            "worst": self.worst,
            "fitted": {k: (None if v is None else float(v))
                       for k, v in self.fitted.items()},
            "notes": self.notes,
        }


_REGISTRY = []


def register(check_id, anchor, gated=False):
    def wrap(fn):
        _REGISTRY.append((check_id, anchor, gated, fn))
        return fn
    return wrap


def registry_anchors():
    return [(cid, anchor) for cid, anchor, _, _ in _REGISTRY]


def _result(cid, anchor, passed, **kw):
    return CheckResult(cid, anchor, "pass" if passed else "fail", **kw)


# ---------------------------------------------------------------------------
# unconditional checks: kernel and smooth-max layer


@register("eta-contract", "mollified-absolute-value-contract")
def _check_eta(ctx):
    rng = ctx.rng("eta-contract")
    n = ctx.config.sample_count("eta", 100_000)
    kern = default_kernel()
    t = rng.uniform(-2.0, 2.0, n)
    e, ep, epp = kern.jet_batch(t)
    em, _, _ = kern.jet_batch(-t)
    worst = 0.0
    ok = True
    even = np.max(np.abs(e - em))
    lower = np.min(e - np.abs(t))
    upper = np.max(e - np.abs(t) - 1.0)
    outer = np.abs(t) >= 0.5
    exact = np.max(np.abs(e[outer] - np.abs(t[outer]))) if outer.any() else 0.0
    curv = np.min(epp)
    ok &= even == 0.0 and lower >= 0.0 and upper <= 0.0
    ok &= exact == 0.0 and curv >= 0.0
    sub = t[:2000]
    h = 1e-5
    ep_fd = (kern.jet_batch(sub + h)[0] - kern.jet_batch(sub - h)[0]) / (2 * h)
    epp_fd = (kern.jet_batch(sub + h)[1] - kern.jet_batch(sub - h)[1]) / (2 * h)
    fd1 = np.max(np.abs(ep_fd - kern.jet_batch(sub)[1]))
    fd2 = np.max(np.abs(epp_fd - kern.jet_batch(sub)[2]))
    ok &= fd1 <= 1e-8 and fd2 <= 1e-8
    worst = max(even, -lower, upper, exact, -min(curv, 0.0), fd1, fd2)
    return _result("eta-contract", "mollified-absolute-value-contract", ok,
                   samples=n, worst=float(worst),
                   fitted={"m1": kern.m1, "fd1": fd1, "fd2": fd2})


@register("smooth-max-sandwich", "smooth-max-two-sided-bound")
def _check_sandwich(ctx):
    rng = ctx.rng("smooth-max-sandwich")
    n = ctx.config.sample_count("sandwich", 100_000)
    pts = ctx.box_samples(n, rng)
    chain = ctx.field.chain(pts, want_grad=False)
    worst = 0.0
    for k in range(1, ctx.polytope.q + 1):
        pair_max = np.maximum(chain.values[:, k - 1], chain.face_values[:, k])
        low = np.min(chain.values[:, k] - pair_max)
        high = np.max(chain.values[:, k] - pair_max - 1.0 / ctx.field.rates[k])
        worst = max(worst, -low, high)
    mono = np.min(np.diff(chain.values, axis=1))
    worst = max(worst, -min(mono, 0.0))
    return _result("smooth-max-sandwich", "smooth-max-two-sided-bound",
                   worst <= 1e-12, samples=n, worst=float(worst))


@register("smooth-max-global-gap", "smooth-max-global-inclusion")
def _check_global_gap(ctx):
    rng = ctx.rng("smooth-max-global-gap")
    n = ctx.config.sample_count("sandwich", 100_000)
    pts = ctx.box_samples(n, rng)
    chain = ctx.field.chain(pts, want_grad=False)
    raw = chain.face_values.max(axis=1)
    gap = ctx.schedule.tail_sum(ctx.polytope.q)
    low = np.min(chain.values[:, -1] - raw)
    high = np.max(chain.values[:, -1] - raw - gap)
    worst = max(-low, high)
    return _result("smooth-max-global-gap", "smooth-max-global-inclusion",
                   worst <= 1e-12, samples=n, worst=float(worst))


@register("gradient-representation", "gradient-convex-combination")
def _check_gradient_representation(ctx):
    rng = ctx.rng("gradient-representation")
    n = ctx.config.sample_count("gradient", 10_000)
    pts = ctx.interior_samples(n, rng)
    chain = ctx.field.chain(pts, want_grad=True)
    worst = 0.0
    support_ok = True
    for k in range(ctx.polytope.q + 1):
        a = coefficients_batch(chain, k, ctx.field.rates)
        recon = a @ ctx.polytope.normals[: k + 1]
        resid = np.linalg.norm(recon - chain.grads[:, k, :], axis=1)
        worst = max(worst, float(resid.max()))
        worst = max(worst, float(np.max(np.abs(a.sum(axis=1) - 1.0))))
        worst = max(worst, float(-min(a.min(), 0.0)))
        window = chain.values[:, k, None] \
            - 2.0 * k / ctx.field.rates[None, : k + 1]
        must_vanish = chain.face_values[:, : k + 1] < window
        support_ok &= bool(np.all(a[must_vanish] == 0.0))
    passed = worst <= 1e-10 and support_ok
    return _result("gradient-representation", "gradient-convex-combination",
                   passed, samples=n, worst=worst,
                   notes="" if support_ok else "support rule violated")


def _band_adapted_step(ctx, chain, base_step=1e-5):
    """FD step per point, shrunk where a high-rate band is within reach
    so the truncation error stays below the relative tolerance."""
    args = np.abs(chain.deltas) * ctx.field.rates[None, 1:]
    near = args < 1.2
    active = np.where(near, ctx.field.rates[None, 1:], 0.0).max(axis=1)
    return np.minimum(base_step, 3e-4 / np.maximum(active, 1.0))


@register("jet-fd-consistency", "jet-finite-difference-consistency")
def _check_jet_fd(ctx):
    rng = ctx.rng("jet-fd-consistency")
    n = ctx.config.sample_count("jets", 200)
    pts = ctx.box_samples(n, rng, pad=0.05)
    q = ctx.polytope.q
    dim = ctx.polytope.n
    chain = ctx.field.chain(pts, want_grad=True, want_hess="final")
    h = _band_adapted_step(ctx, chain)
    worst = 0.0
    for axis in range(dim):
        e = np.zeros(dim)
        e[axis] = 1.0
        off = h[:, None] * e
        cp = ctx.field.chain(pts + off, want_grad=True)
        cm = ctx.field.chain(pts - off, want_grad=True)
        fd_grad = (cp.values[:, q] - cm.values[:, q]) / (2 * h)
        rel = np.abs(fd_grad - chain.grads[:, q, axis]) \
            / np.maximum(1.0, np.abs(chain.grads[:, q, axis]))
        worst = max(worst, float(rel.max()))
        fd_hess = (cp.grads[:, q, :] - cm.grads[:, q, :]) / (2 * h[:, None])
        scale = np.maximum(1.0, np.abs(chain.hess[:, axis, :]))
        rel_h = np.abs(fd_hess - chain.hess[:, axis, :]) / scale
        worst = max(worst, float(rel_h.max()))
    return _result("jet-fd-consistency", "jet-finite-difference-consistency",
                   worst <= 1e-6, samples=n, worst=worst)


@register("hessian-convexity", "smooth-max-curvature-bound")
def _check_hessian(ctx):
    rng = ctx.rng("hessian-convexity")
    n = ctx.config.sample_count("hessian", 2000)
    pts = ctx.box_samples(n, rng)
    chain = ctx.field.chain(pts, want_grad=True, want_hess="all")
    kern = default_kernel()
    epp_max = float(2.0 * kern.rho(0.0))
    bound_c = 0.5 * epp_max * 4.0 / (1.0 - ctx.schedule.gamma) + 1.0
    worst_neg = 0.0
    worst_ratio = 0.0
    grad_norm = np.linalg.norm(chain.grads, axis=2).max()
    for k in range(ctx.polytope.q + 1):
        eigs = np.linalg.eigvalsh(chain.hess[:, k])
        lam = ctx.field.rates[k] if k else ctx.field.rates[0]
        worst_neg = max(worst_neg, float(-eigs[:, 0].min() / lam))
        worst_ratio = max(worst_ratio, float(eigs[:, -1].max() / lam))
    passed = (worst_neg <= 1e-9 and worst_ratio <= bound_c
              and grad_norm <= 1.0 + 1e-12)
    return _result("hessian-convexity", "smooth-max-curvature-bound", passed,
                   samples=n, worst=worst_ratio,
                   fitted={"eig_ratio": worst_ratio, "bound": bound_c,
                           "grad_norm": float(grad_norm)})


@register("gradient-lower-bound", "near-boundary-gradient-floor")
def _check_gradient_floor(ctx):
    rng = ctx.rng("gradient-lower-bound")
    n = ctx.config.sample_count("gradient", 10_000)
    lam = ctx.constants.lam
    notes = ""
    if ctx.schedule.lambda0 < 2 * ctx.polytope.q * lam:
        notes = "base rate below the guard threshold for this bound"
    pts = ctx.interior_samples(n, rng)
    chain = ctx.field.chain(pts, want_grad=True)
    worst = np.inf
    count = 0
    for k in range(ctx.polytope.q + 1):
        sel = (chain.values[:, k] >= -1.0 / lam) & (chain.values[:, k] <= 0.0)
        if not np.any(sel):
            continue
        norms = np.linalg.norm(chain.grads[sel, k, :], axis=1)
        worst = min(worst, float(norms.min() - 1.0 / lam))
        count += int(sel.sum())
    if count == 0:
        return CheckResult("gradient-lower-bound",
                           "near-boundary-gradient-floor", "pass",
                           notes="no samples hit the near-boundary slab")
    return _result("gradient-lower-bound", "near-boundary-gradient-floor",
                   worst >= -1e-9, samples=count, worst=float(worst),
                   notes=notes)


@register("active-combination-bound", "active-normal-combination-bound")
def _check_lambda_cert(ctx):
    n = ctx.config.sample_count("certificates", 10_000)
    res = certify_lambda(ctx.polytope, ctx.constants.lam, n,
                         ctx.rng("active-combination-bound"))
    return _result("active-combination-bound",
                   "active-normal-combination-bound",
                   res["violations"] == 0, samples=res["samples"],
                   worst=float(res["worst_margin"]))


@register("pairwise-wedge-bound", "active-wedge-combination-bound")
def _check_xi_cert(ctx):
    n = ctx.config.sample_count("certificates", 10_000)
    res = certify_xi(ctx.polytope, ctx.constants.lam, ctx.constants.xi, n,
                     ctx.rng("pairwise-wedge-bound"))
    return _result("pairwise-wedge-bound", "active-wedge-combination-bound",
                   res["violations"] == 0, samples=res["samples"],
                   worst=float(res["worst_margin"]))


@register("slab-width-monotonicity", "slab-width-for-angle-threshold")
def _check_delta_monotone(ctx):
    eps_grid = [e for e, _ in ctx.constants.delta_table]
    deltas = [d for _, d in ctx.constants.delta_table]
    diffs = np.diff(deltas)
    ok = bool(np.all(diffs >= -1e-12))
    return _result("slab-width-monotonicity",
                   "slab-width-for-angle-threshold", ok,
                   samples=len(eps_grid),
                   worst=float(-min(diffs.min(), 0.0)) if len(diffs) else 0.0)


@register("smoothed-wedge-transversality", "smoothed-gradient-wedge-floor")
def _check_wedge_transversality(ctx):
    rng = ctx.rng("smoothed-wedge-transversality")
    xi = ctx.constants.xi
    width = 1.0 / xi
    worst = np.inf
    count = 0
    notes = ""
    if ctx.schedule.lambda0 < 2 * ctx.polytope.q * xi:
        notes = "base rate below the guard threshold for this bound"
    for j in range(ctx.polytope.q):
        for k in range(j + 1, ctx.polytope.q + 1):
            if pairwise_coactivity_threshold(ctx.polytope, j, k) < -1e-9:
                continue
            pts = ctx.pair_slab_samples(j, k, width, 200, rng)
            if not len(pts):
                continue
            chain = ctx.field.chain(pts, want_grad=True)
            sel = (chain.values[:, j] >= -width) & (chain.values[:, j] <= 0.0) \
                & (chain.face_values[:, k] >= -width) \
                & (chain.face_values[:, k] <= 0.0)
            if not np.any(sel):
                continue
            w = wedge_norm(chain.grads[sel, j, :],
                           np.broadcast_to(ctx.polytope.normals[k],
                                           (int(sel.sum()), ctx.polytope.n)))
            worst = min(worst, float(w.min() - 1.0 / xi))
            count += int(sel.sum())
    if count == 0:
        return CheckResult("smoothed-wedge-transversality",
                           "smoothed-gradient-wedge-floor", "pass",
                           notes="no co-active pair slabs sampled")
    return _result("smoothed-wedge-transversality",
                   "smoothed-gradient-wedge-floor", worst >= -1e-9,
                   samples=count, worst=float(worst), notes=notes)


# ---------------------------------------------------------------------------
# unconditional checks: regions, spherical map, areas, inequalities


@register("region-decomposition", "boundary-region-decomposition")
def _check_regions(ctx):
    mesh = ctx.mesh()
    ok_labels = surface.verify_labels_batch(
        mesh.chain, ctx.field.rates, mesh.kinds, mesh.indices)
    passed = bool(ok_labels.all())
    return _result("region-decomposition", "boundary-region-decomposition",
                   passed, samples=len(mesh),
                   worst=float((~ok_labels).sum()),
                   fitted={"face": float((mesh.kinds == 0).sum()),
                           "edge": float((mesh.kinds == 1).sum()),
                           "corner": float((mesh.kinds == 2).sum())})


@register("spherical-map-unit-norm", "spherical-map-unit-norm")
def _check_unit_norm(ctx):
    mesh = ctx.mesh()
    dev = np.abs(np.linalg.norm(mesh.nhat, axis=1) - 1.0)
    return _result("spherical-map-unit-norm", "spherical-map-unit-norm",
                   float(dev.max()) <= 1e-10, samples=len(mesh),
                   worst=float(dev.max()))


@register("metric-normal-agreement", "recursive-vs-direct-metric-normal")
def _check_nu_agreement(ctx):
    mesh = ctx.mesh()
    field = ctx.field
    nres = nhat_chain(field, ctx.metric, mesh.points, chain=mesh.chain)
    dev = np.linalg.norm(nres.nuhat - nres.nuhat_direct, axis=1)
    dev = dev[np.isfinite(dev)]
    return _result("metric-normal-agreement",
                   "recursive-vs-direct-metric-normal",
                   float(dev.max()) <= 1e-8, samples=len(dev),
                   worst=float(dev.max()))


@register("spherical-map-transversality", "spherical-map-wedge-floor")
def _check_map_transversality(ctx):
    rng = ctx.rng("spherical-map-transversality")
    xi = ctx.constants.xi
    worst = np.inf
    count = 0
    for j in range(ctx.polytope.q):
        for k in range(j + 1, ctx.polytope.q + 1):
            if pairwise_coactivity_threshold(ctx.polytope, j, k) < -1e-9:
                continue
            width = min(2.0 ** (-j) / xi, 1.0 / xi)
            pts = ctx.pair_slab_samples(j, k, width, 200, rng)
            if not len(pts):
                continue
            res = nhat_chain(ctx.field, ctx.metric, pts, level=j,
                             compute_direct=False)
            sel = res.in_w & res.valid \
                & (res.chain.values[:, j] >= -width) \
                & (res.chain.values[:, j] <= 0.0) \
                & (res.chain.face_values[:, k] >= -1.0 / xi) \
                & (res.chain.face_values[:, k] <= 0.0)
            if not np.any(sel):
                continue
            w = wedge_norm(res.nhat[sel],
                           np.broadcast_to(ctx.polytope.normals[k],
                                           (int(sel.sum()), ctx.polytope.n)))
            worst = min(worst, float(w.min() - 1.0 / xi))
            count += int(sel.sum())
    if count == 0:
        return CheckResult("spherical-map-transversality",
                           "spherical-map-wedge-floor", "pass",
                           notes="no co-active pair slabs sampled")
    return _result("spherical-map-transversality",
                   "spherical-map-wedge-floor", worst >= -1e-9,
                   samples=count, worst=float(worst))


@register("spherical-map-convex-representation",
          "spherical-map-convex-representation")
def _check_map_convexity(ctx):
    from scipy.optimize import nnls
    mesh = ctx.mesh()
    rng = ctx.rng("spherical-map-convex-representation")
    idx = rng.choice(len(mesh), size=min(200, len(mesh)), replace=False)
    worst = 0.0
    for i in idx:
        window = mesh.chain.values[i, -1] \
            - 2.0 * ctx.polytope.q / ctx.field.rates
        allowed = mesh.chain.face_values[i] >= window
        basis = ctx.polytope.normals[allowed]
        if not len(basis):
            continue
        _, resid = nnls(basis.T, mesh.nhat[i])
        worst = max(worst, float(resid))
    return _result("spherical-map-convex-representation",
                   "spherical-map-convex-representation", worst <= 1e-8,
                   samples=len(idx), worst=worst)


@register("euclidean-consistency", "euclidean-gauss-map-consistency")
def _check_euclid_consistency(ctx):
    mesh = ctx.mesh(metric="euclidean")
    cosang = np.clip(np.einsum("mi,mi->m", mesh.nhat, mesh.normals_eucl),
                     -1.0, 1.0)
    ang = np.arccos(cosang)
    ok_ang = float(ang.max()) <= 1e-6
    ok = ~mesh.flags
    rel = np.abs(mesh.trace_norm - mesh.mean_curvature) \
        / np.maximum(1.0, np.abs(mesh.mean_curvature))
    frac = float(np.mean(rel[ok] <= 1e-5)) if ok.any() else 1.0
    passed = ok_ang and frac >= 0.999
    return _result("euclidean-consistency", "euclidean-gauss-map-consistency",
                   passed, samples=len(mesh), worst=float(ang.max()),
                   fitted={"trace_match_fraction": frac,
                           "flagged": float(mesh.flags.sum())})


@register("spherical-map-lipschitz", "spherical-map-derivative-scaling")
def _check_map_lipschitz(ctx):
    rng = ctx.rng("spherical-map-lipschitz")
    pairs = [
        (j, k)
        for j in range(ctx.polytope.q) for k in range(j + 1, ctx.polytope.q + 1)
        if pairwise_coactivity_threshold(ctx.polytope, j, k) >= -1e-9
    ]
    fits = []
    counts = []
    for lam0 in (ctx.schedule.lambda0, 2.0 * ctx.schedule.lambda0):
        sched = SmoothingSchedule(ctx.schedule.gamma, lam0)
        fld = SmoothField(ctx.polytope, sched)
        rates = fld.rates
        ratios = []
        for j, k in pairs:
            pts = ctx.band_transect_samples(j, k, rates[k], 120, rng)
            if not len(pts):
                continue
            chain = fld.chain(pts, want_grad=False)
            in_band = np.abs(chain.deltas[:, k - 1]) <= 1.0 / rates[k]
            pts = pts[in_band]
            if not len(pts):
                continue
            h = np.minimum(1e-5, 1e-3 / rates[k])
            opnorm, ok = surface.ambient_map_differential(
                fld, ctx.metric, pts, h)
            ratios.extend(opnorm[ok] / rates[k])
        counts.append(len(ratios))
        fits.append(float(np.quantile(ratios, 0.95)) if ratios else None)
    if fits[0] is None or fits[1] is None:
        return CheckResult("spherical-map-lipschitz",
                           "spherical-map-derivative-scaling", "skip",
                           notes="no band transect samples")
    base, doubled = fits
    ratio = doubled / base if base > 1e-12 else np.inf
    passed = bool(base > 0 and 1 / 1.2 <= ratio <= 1.2)
    return _result("spherical-map-lipschitz",
                   "spherical-map-derivative-scaling", passed,
                   samples=sum(counts),
                   fitted={"c_base": base, "c_doubled": doubled,
                           "ratio": ratio})


@register("levelset-area-growth", "convex-levelset-area-growth")
def _check_area_growth(ctx):
    rng = ctx.rng("levelset-area-growth")
    n = ctx.polytope.n
    samples = ctx.config.sample_count("area_mc", 400_000)
    normal = np.zeros(n)
    normal[0] = 1.0
    p = np.zeros(n)
    plane = surface.AnalyticConvexField(
        n, lambda x: x @ normal,
        lambda x: np.broadcast_to(normal, np.atleast_2d(x).shape))
    r = 1.0
    est = surface.levelset_area_in_ball(
        plane.values, plane.grad_batch, p, r, rng, samples=samples)
    disc = surface.unit_ball_volume(n - 1) * r ** (n - 1)
    rel = abs(est.value - disc) / disc
    big_r = 2.0
    center = np.zeros(n)
    center[0] = big_r
    sphere = surface.AnalyticConvexField(
        n, lambda x: np.linalg.norm(np.atleast_2d(x) - center, axis=1) - big_r,
        lambda x: (np.atleast_2d(x) - center)
        / np.linalg.norm(np.atleast_2d(x) - center, axis=1)[:, None])
    est2 = surface.levelset_area_in_ball(
        sphere.values, sphere.grad_batch, p, 0.5, rng, samples=samples)
    cap_bound = surface.area_growth_constant(n) * 0.5 ** (n - 1)
    passed = rel <= 0.02 and est2.value <= cap_bound
    return _result("levelset-area-growth", "convex-levelset-area-growth",
                   passed, samples=2 * samples, worst=rel,
                   fitted={"disc_rel_err": rel, "cap_estimate": est2.value,
                           "cap_bound": cap_bound})


def _band_conditions(rates, k):
    width = 2.0 / rates[k]
    return [("smooth", k - 1, -width, 0.0), ("face", k, -width, 0.0)]


@register("band-area-scaling", "two-slab-band-area-bound")
def _check_band_area(ctx):
    areas = []
    for lam0 in (12.0, 24.0):
        mesh = ctx.mesh(level=max(ctx.config.mesh_level, 6), lambda0=lam0,
                        with_map=False)
        rates = SmoothingSchedule(ctx.schedule.gamma, lam0).rates(ctx.polytope.q)
        area, count = surface.band_measure(mesh, _band_conditions(rates, 1))
        areas.append((area, count))
    (a1, c1), (a2, c2) = areas
    if c1 < 20 or c2 < 10 or a1 == 0.0:
        return CheckResult("band-area-scaling", "two-slab-band-area-bound",
                           "skip", notes="band unresolved at this mesh level")
    ratio = a2 / a1
    passed = 0.5 * 0.75 <= ratio <= 0.5 * 1.25
    return _result("band-area-scaling", "two-slab-band-area-bound", passed,
                   samples=c1 + c2, fitted={"ratio": ratio,
                                            "area_base": a1,
                                            "area_doubled": a2})


@register("triple-band-area-scaling", "three-slab-band-area-bound")
def _check_triple_band_area(ctx):
    # needs three faces meeting at a corner with indices i < j < k = 2
    if ctx.polytope.q < 2:
        return CheckResult("triple-band-area-scaling",
                           "three-slab-band-area-bound", "skip",
                           notes="needs at least three faces")
    areas = []
    for lam0 in (12.0, 24.0):
        mesh = ctx.mesh(level=max(ctx.config.mesh_level, 6), lambda0=lam0,
                        with_map=False)
        rates = SmoothingSchedule(ctx.schedule.gamma, lam0).rates(ctx.polytope.q)
        conds = _band_conditions(rates, 2) + [
            ("face", 1, -4.0 / rates[0], 0.0),
            ("face", 0, -6.0 / rates[0], 0.0),
        ]
        area, count = surface.band_measure(mesh, conds)
        areas.append((area, count))
    (a1, c1), (a2, c2) = areas
    if c1 < 12 or a1 == 0.0:
        return CheckResult("triple-band-area-scaling",
                           "three-slab-band-area-bound", "skip",
                           notes="triple band unresolved at this mesh level")
    ratio = a2 / a1
    passed = 0.25 / 2.0 <= ratio <= 0.25 * 2.0
    return _result("triple-band-area-scaling", "three-slab-band-area-bound",
                   passed, samples=c1 + c2,
                   fitted={"ratio": ratio, "area_base": a1,
                           "area_doubled": a2})


@register("cot-monotonicity", "tangent-ratio-monotonicity")
def _check_cot(ctx):
    t = np.linspace(0.01, 3.13, 10_000)
    vals = t_cot_t(t)
    diffs = np.diff(vals)
    worst = float(max(diffs.max(), 0.0))
    return _result("cot-monotonicity", "tangent-ratio-monotonicity",
                   bool(np.all(diffs < 0.0)), samples=len(t), worst=worst)


def _sine_ratio_grids():
    alphas = np.linspace(0.015, np.pi / 2 - 0.015, 100)
    fracs = np.linspace(0.0, 1.0, 100)
    return alphas, fracs


@register("sine-ratio-comparison-low", "sine-ratio-comparison-contracting")
def _check_sine_low(ctx):
    alphas, fracs = _sine_ratio_grids()
    thetas = np.linspace(0.02, 0.98, 50)
    a = alphas[:, None, None]
    b = a * fracs[None, :, None]
    th = np.broadcast_to(thetas[None, None, :], (100, 100, 50))
    gap = sin_ratio_gap(np.broadcast_to(a, th.shape), np.broadcast_to(b, th.shape), th)
    worst = float(-gap.min())
    return _result("sine-ratio-comparison-low",
                   "sine-ratio-comparison-contracting", worst <= 1e-12,
                   samples=gap.size, worst=worst)


@register("sine-ratio-comparison-high", "sine-ratio-comparison-expanding")
def _check_sine_high(ctx):
    alphas, fracs = _sine_ratio_grids()
    worst = 0.0
    total = 0
    for alpha in alphas:
        theta_hi = np.pi / (2 * alpha)
        thetas = 1.0 + (theta_hi - 1.0) * np.linspace(0.0, 0.98, 50)
        b = alpha * fracs
        A, B = np.meshgrid(thetas, b, indexing="ij")
        gap = sin_ratio_gap(np.full(A.shape, alpha), B, A)
        bound = sin_ratio_bound(np.full(A.shape, alpha), A)
        worst = max(worst, float(np.max(np.abs(gap) - bound)))
        total += gap.size
    return _result("sine-ratio-comparison-high",
                   "sine-ratio-comparison-expanding", worst <= 1e-12,
                   samples=total, worst=worst)


# ---------------------------------------------------------------------------
# hypothesis-gated checks


@register("metric-hypotheses", "curvature-comparison-hypotheses")
def _check_metric_hypotheses(ctx):
    rep = ctx.metric_report
    worst_h = min((r["min_h"] for r in rep.face_min_h
                   if r["min_h"] is not None), default=0.0)
    worst_gap = max((r["max_gap"] for r in rep.pair_max_gap
                     if r["max_gap"] is not None), default=0.0)
    return _result("metric-hypotheses", "curvature-comparison-hypotheses",
                   rep.passed, worst=float(max(-worst_h, worst_gap)),
                   fitted={"min_face_h": worst_h, "max_angle_gap": worst_gap})


@register("angle-propagation", "two-sided-angle-propagation", gated=True)
def _check_angle_propagation(ctx):
    rng = ctx.rng("angle-propagation")
    delta = 2.0 / ctx.schedule.lambda0
    eps = ctx.constants.epsilon_for_delta(delta)
    worst = 0.0
    q_fit = 1.0
    count = 0
    for j in range(ctx.polytope.q):
        for k in range(j + 1, ctx.polytope.q + 1):
            if pairwise_coactivity_threshold(ctx.polytope, j, k) < -1e-9:
                continue
            pts = ctx.pair_slab_samples(j, k, min(delta, 0.5), 200, rng)
            if not len(pts):
                continue
            res = nhat_chain(ctx.field, ctx.metric, pts, level=j)
            chain = res.chain
            sel = res.in_w & res.valid \
                & (chain.values[:, j] >= -delta) & (chain.values[:, j] <= 0.0) \
                & (chain.face_values[:, k] >= -delta) \
                & (chain.face_values[:, k] <= 0.0)
            if not np.any(sel):
                continue
            g = res.mjets.g[sel]
            inv = res.mjets.inv[sel]
            nk = ctx.polytope.normals[k]
            nu_k = np.einsum("mij,j->mi", inv, nk)
            nu_k /= np.sqrt(np.einsum("mi,mij,mj->m", nu_k, g, nu_k))[:, None]
            inner_nu = np.einsum("mi,mij,mj->m", res.nuhat[sel], g, nu_k)
            inner_n = res.nhat[sel] @ nk
            upper = np.max(inner_n - eps)
            lower = np.max(inner_nu - eps - inner_n)
            worst = max(worst, float(upper), float(lower))
            q_fit = max(q_fit, float(np.max(np.abs(inner_n) / eps)),
                        float(np.max((inner_nu - inner_n) / eps)))
            count += int(sel.sum())
    if count == 0:
        return CheckResult("angle-propagation", "two-sided-angle-propagation",
                           "pass", notes="no co-active pair slabs sampled")
    return _result("angle-propagation", "two-sided-angle-propagation",
                   worst <= 1e-6, samples=count, worst=float(worst),
                   fitted={"epsilon": eps, "q_fit": q_fit})


@register("face-region-deficit", "face-region-nonnegative-margin", gated=True)
def _check_face_deficit(ctx):
    mesh = ctx.mesh()
    sel = (mesh.kinds == 0) & ~mesh.flags
    if not np.any(sel):
        return CheckResult("face-region-deficit",
                           "face-region-nonnegative-margin", "skip",
                           notes="no face-region samples")
    margin = mesh.mean_curvature[sel] - mesh.trace_norm[sel]
    return _result("face-region-deficit", "face-region-nonnegative-margin",
                   float(margin.min()) >= -1e-6, samples=int(sel.sum()),
                   worst=float(margin.min()))


def _deficit_fit(ctx, mesh, kind, rates):
    sel = (mesh.kinds == kind) & ~mesh.flags
    if not np.any(sel):
        return None, 0
    k_level = np.where(mesh.kinds[sel] == 1,
                       mesh.indices[sel, 1], mesh.indices[sel, 2])
    lam_k = rates[k_level]
    scale = ctx.schedule.gamma * lam_k
    ratio = mesh.deficit[sel] / np.maximum(scale, 1.0)
    return float(np.quantile(ratio, 0.95)), int(sel.sum())


def _stability_check(cid, anchor, ctx, kind):
    fits = []
    counts = []
    for lam0 in (ctx.schedule.lambda0, 2.0 * ctx.schedule.lambda0):
        mesh = ctx.mesh(lambda0=None if lam0 == ctx.schedule.lambda0 else lam0)
        rates = SmoothingSchedule(ctx.schedule.gamma, lam0).rates(ctx.polytope.q)
        fit, cnt = _deficit_fit(ctx, mesh, kind, rates)
        fits.append(fit)
        counts.append(cnt)
    if fits[0] is None or fits[1] is None or min(counts) < 30:
        return CheckResult(cid, anchor, "skip",
                           notes="too few samples of this region kind")
    base, doubled = fits
    if base <= 1e-12 and doubled <= 1e-12:
        return CheckResult(cid, anchor, "pass", samples=sum(counts),
                           fitted={"c_base": base, "c_doubled": doubled},
                           notes="deficit vanishes in this scenario")
    ratio = doubled / base if base > 1e-12 else np.inf
    passed = bool(1 / 1.3 <= ratio <= 1.3)
    return _result(cid, anchor, passed, samples=sum(counts),
                   fitted={"c_base": base, "c_doubled": doubled,
                           "ratio": ratio})


@register("edge-region-deficit", "edge-region-deficit-bound", gated=True)
def _check_edge_deficit(ctx):
    return _stability_check("edge-region-deficit",
                            "edge-region-deficit-bound", ctx, 1)


@register("corner-region-deficit", "corner-region-deficit-bound", gated=True)
def _check_corner_deficit(ctx):
    return _stability_check("corner-region-deficit",
                            "corner-region-deficit-bound", ctx, 2)


@register("morrey-refinement", "deficit-morrey-refinement-stability",
          gated=True)
def _check_morrey_refinement(ctx):
    base = surface.morrey_norm(ctx.mesh(), ctx.sigma,
                               rng=ctx.rng("morrey-refinement"))
    fine = surface.morrey_norm(ctx.mesh(level=ctx.config.mesh_level + 1),
                               ctx.sigma, rng=ctx.rng("morrey-refinement"))
    a, b = base.sup_value, fine.sup_value
    floor = 1e-10
    passed = abs(a - b) <= 0.1 * max(a, b, floor)
    return _result("morrey-refinement", "deficit-morrey-refinement-stability",
                   passed, fitted={"sup_base": a, "sup_refined": b,
                                   "flagged_fraction": base.flagged_fraction})


@register("morrey-gamma-decay", "deficit-morrey-gamma-decay", gated=True)
def _check_morrey_decay(ctx):
    if not ctx.config.sweep_gammas:
        return CheckResult("morrey-gamma-decay", "deficit-morrey-gamma-decay",
                           "skip", notes="no sweep grid configured")
    rows = sweep_gamma(ctx)
    ctx.sweep_rows = rows
    sups = [r["morrey_sup"] for r in rows]
    # absolute floor keeps near-zero noise from counting as an increase
    non_increasing = all(b <= a * 1.1 + 1e-8
                         for a, b in zip(sups, sups[1:]))
    return _result("morrey-gamma-decay", "deficit-morrey-gamma-decay",
                   non_increasing, samples=len(rows),
                   fitted={"first": sups[0], "last": sups[-1],
                           "slope": _loglog_slope(
                               [r["gamma"] for r in rows], sups)})


def _loglog_slope(gammas, sups):
    pairs = [(g, s) for g, s in zip(gammas, sups) if s > 1e-14]
    if len(pairs) < 2:
        return None
    x = np.log([g for g, _ in pairs])
    y = np.log([s for _, s in pairs])
    return float(np.polyfit(x, y, 1)[0])


def sweep_gamma(ctx, gammas=None, lambda0s=None):
    """Morrey supremum per schedule point; the log-log slope against the
    band parameter is informational."""
    gammas = list(gammas or ctx.config.sweep_gammas)
    lambda0s = list(lambda0s or ctx.config.sweep_lambda0s or ())
    rows = []
    for i, gamma in enumerate(gammas):
        lam0 = lambda0s[i] if i < len(lambda0s) else \
            default_lambda0(gamma, ctx.polytope.q, ctx.constants.xi)
        sched = SmoothingSchedule(gamma, lam0)
        fld = SmoothField(ctx.polytope, sched)
        mesh = surface.build_mesh(fld, ctx.metric,
                                  level=ctx.config.mesh_level)
        est = surface.morrey_norm(mesh, ctx.sigma,
                                  rng=_rng_for(ctx.seed, f"sweep-{gamma}"))
        rows.append({
            "gamma": gamma,
            "lambda0": lam0,
            "sigma": ctx.sigma,
            "morrey_sup": est.sup_value,
            "below_corner_threshold": gamma < 1.0 / ctx.constants.M,
        })
    return rows


# ---------------------------------------------------------------------------
# suite driver


@dataclass
class VerificationReport:
    config: dict
    seed: int
    backend: str
    constants: dict
    checks: list
    passed: bool
    failed: list
    skipped: list
    errored: list
    environment: dict
    sweep: list = dc_field(default_factory=list)

    def to_dict(self):
        return {
            "config": self.config,
            "seed": self.seed,
            "backend": self.backend,
            "constants": self.constants,
            "checks": [c.to_dict() for c in self.checks],
            "passed": self.passed,
            "failed": self.failed,
            "skipped": self.skipped,
            "errored": self.errored,
            "environment": self.environment,
            "sweep": self.sweep,
        }


def _environment_echo():
    return {
        "package_version": __version__,
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "backend": kernels.backend_name(),
    }


def run_suite(config: ScenarioConfig, check_ids=None) -> VerificationReport:
    ctx = ScenarioContext(config)
    checks = []
    gate_open = None
    for cid, anchor, gated, fn in _REGISTRY:
        if check_ids and cid not in check_ids:
            continue
        if gated:
            if gate_open is None:
                gate_open = ctx.metric_report.passed
            if not gate_open:
                checks.append(CheckResult(
                    cid, anchor, "skip",
                    notes="metric hypotheses failed; estimate not applicable"))
                continue
        try:
            checks.append(fn(ctx))
        except PolysmoothError as exc:
            checks.append(CheckResult(cid, anchor, "error", notes=str(exc)))
    sweep_rows = getattr(ctx, "sweep_rows", [])
    report = VerificationReport(
        config=config.to_dict(),
        seed=config.seed,
        backend=kernels.backend_name(),
        constants=ctx.constants.to_dict(),
        checks=checks,
        passed=all(c.status in ("pass", "skip") for c in checks),
        failed=[c.check_id for c in checks if c.status == "fail"],
        skipped=[c.check_id for c in checks if c.status == "skip"],
        errored=[c.check_id for c in checks if c.status == "error"],
        environment=_environment_echo(),
        sweep=sweep_rows,
    )
    return report


# ---------------------------------------------------------------------------
# emission


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.10g}"
    return str(v)


def _svg_header(width, height):
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
            f'height="{height}" viewBox="0 0 {width} {height}">\n'
            f'<rect width="{width}" height="{height}" fill="white"/>\n')


def _color_ramp(v):
    """0..1 -> dark blue to yellow hex color."""
    v = min(max(v, 0.0), 1.0)
    stops = [(68, 1, 84), (59, 82, 139), (33, 145, 140),
             (94, 201, 98), (253, 231, 37)]
    pos = v * (len(stops) - 1)
    i = min(int(pos), len(stops) - 2)
    f = pos - i
    rgb = [round(a + (b - a) * f) for a, b in zip(stops[i], stops[i + 1])]
    return f"#{rgb[0]:02x}{rgb[1]:02x}{rgb[2]:02x}"


def decay_curve_svg(rows):
    width, height, pad = 480, 320, 50
    vals = [max(r["morrey_sup"], 1e-16) for r in rows]
    gammas = [r["gamma"] for r in rows]
    lx = [math.log10(g) for g in gammas]
    ly = [math.log10(v) for v in vals]
    x0, x1 = min(lx), max(lx)
    y0, y1 = min(ly), max(ly)
    x1 = x1 if x1 > x0 else x0 + 1.0
    y1 = y1 if y1 > y0 else y0 + 1.0

    def sx(x):
        return pad + (x - x0) / (x1 - x0) * (width - 2 * pad)

    def sy(y):
        return height - pad - (y - y0) / (y1 - y0) * (height - 2 * pad)

    parts = [_svg_header(width, height)]
    pts = " ".join(f"{_fmt(sx(a))},{_fmt(sy(b))}" for a, b in zip(lx, ly))
    parts.append(f'<polyline points="{pts}" fill="none" stroke="#2b6cb0" '
                 'stroke-width="2"/>\n')
    for a, b, g, v in zip(lx, ly, gammas, vals):
        parts.append(f'<circle cx="{_fmt(sx(a))}" cy="{_fmt(sy(b))}" r="4" '
                     'fill="#2b6cb0"/>\n')
        parts.append(f'<text x="{_fmt(sx(a) + 6)}" y="{_fmt(sy(b) - 6)}" '
                     f'font-size="11">g={_fmt(g)}, sup={v:.3e}</text>\n')
    parts.append(f'<text x="{width // 2 - 60}" y="{height - 12}" '
                 'font-size="12">log10 band parameter</text>\n')
    parts.append('<text x="12" y="20" font-size="12">log10 Morrey sup</text>\n')
    parts.append("</svg>\n")
    return "".join(parts)


def deficit_heatmap_svg(mesh, bins=(96, 48)):
    width, height = 480, 280
    pad = 20
    lon = np.arctan2(mesh.directions[:, 1], mesh.directions[:, 0])
    lat = np.arcsin(np.clip(mesh.directions[:, 2], -1.0, 1.0))
    nx, ny = bins
    grid = np.zeros((ny, nx))
    counts = np.zeros((ny, nx))
    ix = np.minimum(((lon + math.pi) / (2 * math.pi) * nx).astype(int), nx - 1)
    iy = np.minimum(((lat + math.pi / 2) / math.pi * ny).astype(int), ny - 1)
    deficit = mesh.deficit if mesh.deficit is not None else \
        np.zeros(len(mesh))
    np.add.at(grid, (iy, ix), deficit)
    np.add.at(counts, (iy, ix), 1.0)
    grid = np.where(counts > 0, grid / np.maximum(counts, 1), 0.0)
    top = grid.max()
    scale = top if top > 0 else 1.0
    cw = (width - 2 * pad) / nx
    ch = (height - 2 * pad) / ny
    parts = [_svg_header(width, height)]
    for yy in range(ny):
        for xx in range(nx):
            color = _color_ramp(grid[yy, xx] / scale)
            parts.append(
                f'<rect x="{_fmt(pad + xx * cw)}" '
                f'y="{_fmt(height - pad - (yy + 1) * ch)}" '
                f'width="{_fmt(cw + 0.5)}" height="{_fmt(ch + 0.5)}" '
                f'fill="{color}"/>\n')
    parts.append(f'<text x="{pad}" y="14" font-size="12">deficit by '
                 f'direction (max {top:.3e})</text>\n')
    parts.append("</svg>\n")
    return "".join(parts)


def emit_report(report: VerificationReport, out_dir, mesh=None):
    """Write report.json, summary.csv, and the SVG plots; contents are a
    pure function of the report (and mesh) so reruns are byte-identical."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    json_path = os.path.join(out_dir, "report.json")
    with open(json_path, "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    paths.append(json_path)

    csv_path = os.path.join(out_dir, "summary.csv")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["id", "anchor", "status", "samples", "worst", "notes"])
    for c in report.checks:
        writer.writerow([c.check_id, c.anchor, c.status, c.samples,
                         "" if c.worst is None else _fmt(c.worst), c.notes])
    with open(csv_path, "w") as fh:
        fh.write(buf.getvalue())
    paths.append(csv_path)

    plots = os.path.join(out_dir, "plots")
    os.makedirs(plots, exist_ok=True)
    if report.sweep:
        p = os.path.join(plots, "decay.svg")
        with open(p, "w") as fh:
            fh.write(decay_curve_svg(report.sweep))
        paths.append(p)
    if mesh is not None and mesh.points.shape[1] == 3:
        p = os.path.join(plots, "deficit_heatmap.svg")
        with open(p, "w") as fh:
            fh.write(deficit_heatmap_svg(mesh))
        paths.append(p)
    return paths
