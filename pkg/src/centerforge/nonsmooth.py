"""Sampling-based generalized-derivative probes for locally Lipschitz maps.

The generalized Jacobian at x is the convex hull of limits of Jacobians at
nearby differentiable points.  These probes approximate it by finite
differences at random points in a shrinking ball, discarding samples whose
forward and backward difference stencils disagree (the numerical proxy for
a non-differentiable point).  The operator norm over the hull is attained
at vertices, so the sample max estimates it from below; the smallest
singular value over the hull can undercut every vertex, which the reports
flag as a caveat instead of solving the convex program.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import eos_factorization as eos

__all__ = [
    "NonsmoothError",
    "NoDifferentiablePoints",
    "EmptySet",
    "DegenerateBox",
    "NoCrossingOnPath",
    "ClarkeSampleSet",
    "sample_jacobians",
    "clarke_opnorm",
    "clarke_sigma_min",
    "LipVsClarke",
    "lip_vs_clarke_check",
    "semicontinuity_probe",
    "KinkReport",
    "lambda1_lipschitz_probe",
    "default_badset_path",
]

log = logging.getLogger("centerforge.nonsmooth")

SIGMA_MIN_CAVEAT = (
    "sigma_min over the hull may undercut every sampled vertex; "
    "the reported value is a sample estimate (upper bound of the hull inf)."
)


class NonsmoothError(Exception):
    pass


class NoDifferentiablePoints(NonsmoothError):
    pass


class EmptySet(NonsmoothError):
    pass


class DegenerateBox(NonsmoothError):
    pass


class NoCrossingOnPath(NonsmoothError):
    pass


@dataclass
class ClarkeSampleSet:
    """FD Jacobians at differentiable sample points near a center."""

    center: np.ndarray
    radius: float
    jacobians: np.ndarray  # (m, k, d)
    discarded: int
    caveats: list = field(default_factory=list)

    @property
    def sigma_max_estimate(self) -> float:
        return clarke_opnorm(self)

    @property
    def sigma_min_estimate(self) -> float:
        return clarke_sigma_min(self)

    def to_dict(self) -> dict:
        return {
            "center": [float(x) for x in np.atleast_1d(self.center)],
            "radius": self.radius,
            "count": int(self.jacobians.shape[0]),
            "discarded": self.discarded,
            "sigma_max": self.sigma_max_estimate,
            "sigma_min": self.sigma_min_estimate,
            "caveats": list(self.caveats),
        }


def _as_vec_fn(f: Callable) -> Callable:
    def fn(x):
        return np.atleast_1d(np.asarray(f(x), dtype=float))

    return fn


def _fd_jacobian(fn, x, h):
    """(central J, forward J, backward J) at one point."""
    d = len(x)
    f0 = fn(x)
    k = len(f0)
    Jc = np.empty((k, d))
    Jf = np.empty((k, d))
    Jb = np.empty((k, d))
    for j in range(d):
        e = np.zeros(d)
        e[j] = h
        fp = fn(x + e)
        fm = fn(x - e)
        Jc[:, j] = (fp - fm) / (2.0 * h)
        Jf[:, j] = (fp - f0) / h
        Jb[:, j] = (f0 - fm) / h
    return Jc, Jf, Jb


def sample_jacobians(
    f: Callable,
    x,
    rho: float,
    count: int = 64,
    seed: int = 0,
    fd_step: Optional[float] = None,
    consistency_tol: float = 1e-4,
) -> ClarkeSampleSet:
    """FD Jacobians at uniform samples of the rho-ball around x.

    A sample point counts as differentiable when its forward and backward
    stencils agree within ``consistency_tol`` (10x the FD floor for smooth
    maps at the default step); inconsistent samples are discarded.
    """
    if rho <= 0.0:
        raise NonsmoothError(f"radius must be positive, got {rho}")
    if count < 8:
        raise NonsmoothError(f"count must be >= 8, got {count}")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    d = len(x)
    fn = _as_vec_fn(f)
    rng = np.random.default_rng(seed)
    h = fd_step if fd_step is not None else 1e-6 * max(1.0, float(np.linalg.norm(x)), rho)

    kept = []
    discarded = 0
    # per-sample draws so sample sets with the same seed nest across counts,
    # making the opnorm estimate monotone in count
    for _ in range(count):
        direction = rng.standard_normal(d)
        direction /= max(float(np.linalg.norm(direction)), 1e-300)
        radius = rho * float(rng.uniform(0.0, 1.0)) ** (1.0 / d)
        p = x + radius * direction
        Jc, Jf, Jb = _fd_jacobian(fn, p, h)
        if float(np.abs(Jf - Jb).max()) > consistency_tol:
            discarded += 1
            continue
        kept.append(Jc)
    if not kept:
        raise NoDifferentiablePoints(
            f"all {count} samples failed the stencil-consistency proxy (radius {rho})"
        )
    return ClarkeSampleSet(
        center=x,
        radius=float(rho),
        jacobians=np.asarray(kept),
        discarded=discarded,
        caveats=[SIGMA_MIN_CAVEAT],
    )


def clarke_opnorm(sample_set: ClarkeSampleSet) -> float:
    """Max singular value over sampled Jacobians (lower bound of the hull sup)."""
    if sample_set.jacobians.size == 0:
        raise EmptySet("no sampled Jacobians")
    return float(np.linalg.norm(sample_set.jacobians, ord=2, axis=(1, 2)).max())


def clarke_sigma_min(sample_set: ClarkeSampleSet) -> float:
    """Min singular value over sampled Jacobians (see SIGMA_MIN_CAVEAT)."""
    if sample_set.jacobians.size == 0:
        raise EmptySet("no sampled Jacobians")
    return float(np.linalg.svd(sample_set.jacobians, compute_uv=False)[:, -1].min())


@dataclass
class LipVsClarke:
    lip_estimate: float
    clarke_sup_estimate: float
    gap: float

    def to_dict(self) -> dict:
        return {
            "lip_estimate": self.lip_estimate,
            "clarke_sup_estimate": self.clarke_sup_estimate,
            "gap": self.gap,
        }


def lip_vs_clarke_check(
    f: Callable,
    box: tuple,
    n_samples: int = 10_000,
    seed: int = 0,
    fd_step: float = 1e-7,
    tol: float = None,
) -> LipVsClarke:
    """Compare the pairwise-quotient Lipschitz estimate with the Clarke norm.

    On a convex box the two agree in the limit; the report carries the gap.
    The box corners are always included so extreme slopes are sampled.  The
    consistency assert (Lipschitz estimate cannot fall below the Clarke
    estimate beyond sampling resolution) defaults to max(1e-3, 10/n).
    """
    if tol is None:
        tol = max(1e-3, 10.0 / n_samples)
    lo = np.atleast_1d(np.asarray(box[0], dtype=float))
    hi = np.atleast_1d(np.asarray(box[1], dtype=float))
    if np.any(hi <= lo):
        raise DegenerateBox(f"box {box} has empty interior")
    d = len(lo)
    fn = _as_vec_fn(f)
    rng = np.random.default_rng(seed)
    pts = lo[None, :] + (hi - lo)[None, :] * rng.uniform(0.0, 1.0, (n_samples, d))
    corners = np.stack(np.meshgrid(*[(l, h) for l, h in zip(lo, hi)], indexing="ij"), axis=-1).reshape(-1, d)
    pts = np.concatenate([pts, corners], axis=0)

    vals = np.stack([fn(p) for p in pts], axis=0)
    if d == 1:
        order = np.argsort(pts[:, 0])
        dx = np.diff(pts[order, 0])
        dv = np.linalg.norm(np.diff(vals[order], axis=0), axis=-1)
        keep = dx > 1e-14
        lip = float((dv[keep] / dx[keep]).max())
    else:
        lip = 0.0
        chunk = 256
        for i in range(0, len(pts), chunk):
            diff = pts[i : i + chunk, None, :] - pts[None, :, :]
            dist = np.linalg.norm(diff, axis=2)
            dval = np.linalg.norm(vals[i : i + chunk, None, :] - vals[None, :, :], axis=2)
            np.fill_diagonal(dist[:, i : i + chunk], np.inf)
            lip = max(lip, float((dval / np.maximum(dist, 1e-300)).max()))

    slopes = []
    for p in pts[:: max(1, len(pts) // 2000)]:
        q = np.clip(p, lo + 2 * fd_step, hi - 2 * fd_step)
        Jc, Jf, Jb = _fd_jacobian(fn, q, fd_step)
        if float(np.abs(Jf - Jb).max()) <= 1e-3:
            slopes.append(np.linalg.norm(Jc, 2))
    # corner one-sided slopes, so boundary extremes are represented
    for corner in corners:
        inward = np.where(corner <= lo + 1e-300, 1.0, -1.0)
        e = inward * fd_step
        J = np.stack([(fn(corner + np.eye(d)[j] * e[j]) - fn(corner)) / e[j] for j in range(d)], axis=1)
        slopes.append(np.linalg.norm(J, 2))
    clarke_sup = float(np.max(slopes))
    gap = abs(lip - clarke_sup)
    if lip < clarke_sup - tol:
        raise NonsmoothError(
            f"Lipschitz estimate {lip:.6g} fell below the Clarke estimate {clarke_sup:.6g} "
            f"by more than tol {tol:.1e}"
        )
    return LipVsClarke(lip_estimate=lip, clarke_sup_estimate=clarke_sup, gap=gap)


def semicontinuity_probe(
    f: Callable,
    x,
    radii,
    count: int = 48,
    seed: int = 0,
    tol_scale: float = 10.0,
) -> list[dict]:
    """Check sigma_max estimates at points approaching x stay below the center estimate.

    Upper semicontinuity of the Clarke operator norm means nearby estimates
    must not exceed the center value beyond a tolerance shrinking with the
    approach radius.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    center = sample_jacobians(f, x, float(max(radii)), count=count, seed=seed)
    base = center.sigma_max_estimate
    rows = []
    rng = np.random.default_rng(seed + 1)
    for rho in sorted(radii, reverse=True):
        dirs = rng.standard_normal((8, len(x)))
        dirs /= np.maximum(np.linalg.norm(dirs, axis=1, keepdims=True), 1e-300)
        worst = -np.inf
        for dvec in dirs:
            y = x + rho * dvec
            try:
                local = sample_jacobians(f, y, rho / 10.0, count=count, seed=seed + 2)
            except NoDifferentiablePoints:
                continue
            worst = max(worst, local.sigma_max_estimate)
        tol = tol_scale * rho
        rows.append(
            {
                "radius": float(rho),
                "nearby_max": float(worst),
                "center": float(base),
                "tol": float(tol),
                "ok": bool(worst <= base + tol),
            }
        )
    return rows


@dataclass
class KinkReport:
    lip_bound: float
    kink_location: Optional[float]
    left_slope: Optional[float]
    right_slope: Optional[float]
    slope_jump: float

    def to_dict(self) -> dict:
        return {
            "lip_bound": self.lip_bound,
            "kink_location": self.kink_location,
            "left_slope": self.left_slope,
            "right_slope": self.right_slope,
            "slope_jump": self.slope_jump,
        }


def default_badset_path(problem: "eos.FactorizationProblem") -> Callable:
    """Minimiser-manifold path W1(t) = diag(1+t, 1-t) crossing the bad set at t = 0."""

    def path(t):
        W1 = np.diag([1.0 + t, 1.0 - t])
        return W1, problem.Y @ np.linalg.inv(W1)

    return path


def lambda1_lipschitz_probe(
    problem: "eos.FactorizationProblem",
    path: Optional[Callable] = None,
    t_range: tuple[float, float] = (-0.25, 0.25),
    n: int = 2001,
    jump_factor: float = 5.0,
) -> KinkReport:
    """Trace the top curvature along a path crossing the bad set.

    Difference quotients stay bounded (local Lipschitzness) while the
    one-sided slopes jump at the crossing; the kink is located by the
    largest second difference and certified against the bad-set gap.
    """
    path = path or default_badset_path(problem)
    ts = np.linspace(t_range[0], t_range[1], n)
    lams = np.empty(n)
    gaps = np.empty(n)
    for i, t in enumerate(ts):
        W1, W2 = path(float(t))
        lams[i] = eos.lambda1(W1, W2)
        g = eos.bad_set_gap(W1, W2)
        gaps[i] = min(g.g1, g.g2)
    dt = ts[1] - ts[0]
    if gaps[0] <= 1e-8 or gaps[-1] <= 1e-8:
        raise NoCrossingOnPath("path endpoints must lie off the bad set")
    if gaps.min() > 100.0 * dt:
        raise NoCrossingOnPath("path does not approach the bad set at grid resolution")

    slopes = np.diff(lams) / dt
    lip_bound = float(np.abs(slopes).max())
    jumps = np.abs(np.diff(slopes))
    k = int(np.argmax(jumps))
    typical = float(np.median(jumps) + 1e-12)
    if jumps[k] < jump_factor * typical:
        return KinkReport(lip_bound=lip_bound, kink_location=None, left_slope=None, right_slope=None, slope_jump=0.0)
    return KinkReport(
        lip_bound=lip_bound,
        kink_location=float(ts[k + 1]),
        left_slope=float(slopes[k]),
        right_slope=float(slopes[k + 1]),
        slope_jump=float(jumps[k]),
    )
