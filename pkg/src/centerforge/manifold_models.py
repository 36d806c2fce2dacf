"""Compact fixed-point submanifolds of Euclidean space with split normal bundles.

The ambient space is Euclidean R^n, so exponentiating a normal vector is
``point + frame @ fibre`` and geodesics of the ambient space are straight
lines.  A model carries a trivialised working bundle of rank
``p = n_u + n_c + n_s`` whose orthonormal frame columns are ordered
(E_u | E_c | E_s); signed sub-splittings (E+, E-) inside E_u and E_c are
recorded when a construction needs them.

Built-in models are the unit circle and its arcs, embedded in the first two
coordinates of R^(2 + n_u + n_c + n_s), with the flat coordinate directions
e_3..e_n as the working normal frame.  That frame is rotation equivariant and
parallel, so the analytic transport is the identity matrix in frame
coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "GeometryError",
    "FibreOutOfReach",
    "OutsideReach",
    "BeyondConvexityRadius",
    "InvalidRanks",
    "DegenerateArc",
    "BundlePoint",
    "ManifoldModel",
    "embed",
    "retract",
    "transport",
    "make_circle_model",
    "make_arc_model",
    "verify_reach",
]

TWO_PI = 2.0 * np.pi


class GeometryError(Exception):
    """Base class for geometry failures."""


class FibreOutOfReach(GeometryError):
    """Fibre norm at or beyond the model reach."""


class OutsideReach(GeometryError):
    """Ambient point has no unique retraction onto the working tube."""


class BeyondConvexityRadius(GeometryError):
    """Transport requested across a base distance >= convexity radius."""


class InvalidRanks(GeometryError):
    """Negative or inconsistent fibre ranks."""


class DegenerateArc(GeometryError):
    """Arc parameter range empty or covering the whole circle."""


@dataclass(frozen=True)
class BundlePoint:
    """A point of the working bundle: base parameter plus fibre coordinates.

    ``fibre`` lives in R^{n_u+n_c+n_s}; the u/c/s properties slice it in the
    frame order (E_u | E_c | E_s).
    """

    base: float
    fibre: np.ndarray
    ranks: tuple[int, int, int]

    def __post_init__(self):
        v = np.asarray(self.fibre, dtype=float)
        object.__setattr__(self, "fibre", v)
        if v.shape != (sum(self.ranks),):
            raise InvalidRanks(
                f"fibre has shape {v.shape}, ranks {self.ranks} need ({sum(self.ranks)},)"
            )
        if not np.all(np.isfinite(v)):
            raise GeometryError("fibre has non-finite entries")

    @property
    def u(self) -> np.ndarray:
        return self.fibre[: self.ranks[0]]

    @property
    def c(self) -> np.ndarray:
        return self.fibre[self.ranks[0] : self.ranks[0] + self.ranks[1]]

    @property
    def s(self) -> np.ndarray:
        return self.fibre[self.ranks[0] + self.ranks[1] :]


def _wrap_angle(delta):
    """Wrap angle differences into (-pi, pi]."""
    return (np.asarray(delta) + np.pi) % TWO_PI - np.pi


@dataclass
class ManifoldModel:
    """A compact 1-parameter fixed-point submanifold with trivialised bundle.

    ``point_of``, ``tangent_of`` and ``frame_of`` are vectorised over the
    base parameter.  ``theta_range`` is None for the closed circle and the
    parameter interval for an arc (the boundary case).  Models are immutable
    after construction; all methods are pure.
    """

    name: str
    ambient_dim: int
    ranks: tuple[int, int, int]
    reach: float
    convexity_radius: float
    point_of: Callable[[np.ndarray], np.ndarray]
    tangent_of: Callable[[np.ndarray], np.ndarray]
    frame_of: Callable[[np.ndarray], np.ndarray]
    theta_range: Optional[tuple[float, float]] = None
    analytic_transport: bool = True
    signed_ranks: Optional[dict] = None
    base_dim: int = 1

    @property
    def p(self) -> int:
        """Rank of the trivialised working bundle."""
        return int(sum(self.ranks))

    @property
    def has_boundary(self) -> bool:
        return self.theta_range is not None

    @property
    def boundary_params(self) -> tuple[float, ...]:
        if self.theta_range is None:
            return ()
        return (self.theta_range[0], self.theta_range[1])

    # base-parameter helpers -------------------------------------------------

    def clamp_base(self, theta):
        """Project base parameters into the valid domain (wrap or clip)."""
        th = np.asarray(theta, dtype=float)
        if self.theta_range is None:
            return th % TWO_PI
        lo, hi = self.theta_range
        return np.clip(th, lo, hi)

    def base_distance(self, a, b):
        """Geodesic distance on S between base parameters (arc length)."""
        if self.theta_range is None:
            return np.abs(_wrap_angle(np.asarray(a) - np.asarray(b)))
        return np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))

    def boundary_distance(self, theta):
        """Distance to the nearest boundary point (inf for the circle)."""
        th = np.asarray(theta, dtype=float)
        if self.theta_range is None:
            return np.full_like(th, np.inf, dtype=float)
        lo, hi = self.theta_range
        return np.minimum(th - lo, hi - th)

    def base_grid(self, n: int) -> np.ndarray:
        """n sample parameters covering S (periodic-open for the circle)."""
        if self.theta_range is None:
            return np.linspace(0.0, TWO_PI, n, endpoint=False)
        lo, hi = self.theta_range
        return np.linspace(lo, hi, n)

    # transport ---------------------------------------------------------------

    def transport_many(self, x, y) -> np.ndarray:
        """Orthogonal fibre transport matrices from base x to base y, batched."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.analytic_transport:
            eye = np.eye(self.p)
            return np.broadcast_to(eye, x.shape + (self.p, self.p)).copy()
        # generic path: project the source frame onto the target normal space,
        # then orthonormalise (QR with positive diagonal = Gram-Schmidt).
        nx = self.frame_of(x)
        ny = self.frame_of(y)
        m = np.swapaxes(ny, -1, -2) @ nx
        q, r = np.linalg.qr(m)
        sign = np.sign(np.diagonal(r, axis1=-2, axis2=-1))
        sign = np.where(sign == 0.0, 1.0, sign)
        return q * sign[..., None, :]


# single-point operations ------------------------------------------------------


def embed(model: ManifoldModel, point: BundlePoint) -> np.ndarray:
    """Exponentiate a bundle point to the ambient space.

    Requires |fibre| < reach so the tube is embedded.
    """
    v = point.fibre
    norm = float(np.linalg.norm(v))
    if norm >= model.reach:
        raise FibreOutOfReach(f"|fibre| = {norm} >= reach {model.reach}")
    th = model.clamp_base(point.base)
    return model.point_of(th) + model.frame_of(th) @ v


def embed_many(model: ManifoldModel, theta, fibres) -> np.ndarray:
    """Batched embed without the reach check (internal workhorse)."""
    th = model.clamp_base(theta)
    pts = model.point_of(th)
    frames = model.frame_of(th)
    return pts + np.einsum("...ij,...j->...i", frames, np.asarray(fibres, dtype=float))


def retract(model: ManifoldModel, q, off_bundle_tol: float = 1e-9) -> BundlePoint:
    """Invert embed: nearest-point projection to S plus frame coordinates.

    Defined on the embedded working tube.  Raises OutsideReach when the
    nearest base point is non-unique at tolerance, when the distance reaches
    the model reach, or when q carries an off-bundle component larger than
    ``off_bundle_tol``.
    """
    q = np.asarray(q, dtype=float)
    if q.shape != (model.ambient_dim,):
        raise GeometryError(f"ambient point has shape {q.shape}, expected ({model.ambient_dim},)")
    rho = float(np.hypot(q[0], q[1]))
    if rho <= 1e-8:
        raise OutsideReach("nearest-point projection non-unique (point on the axis)")
    theta = float(np.arctan2(q[1], q[0])) % TWO_PI
    if model.theta_range is not None:
        lo, hi = model.theta_range
        # candidates: interior projection (if inside) and both endpoints
        cands = [lo, hi]
        if lo <= theta <= hi:
            cands.append(theta)
        dists = [np.linalg.norm(q - np.asarray(model.point_of(np.asarray(t)))) for t in cands]
        order = np.argsort(dists)
        if len(cands) > 1 and abs(dists[order[0]] - dists[order[1]]) <= 1e-10:
            d0 = model.base_distance(cands[order[0]], cands[order[1]])
            if d0 > 1e-8:
                raise OutsideReach("nearest-point projection non-unique at tolerance")
        theta = float(cands[order[0]])
    base = np.asarray(theta)
    p0 = model.point_of(base)
    frame = model.frame_of(base)
    delta = q - p0
    fibre = frame.T @ delta
    dist = float(np.linalg.norm(delta))
    if dist >= model.reach:
        raise OutsideReach(f"dist(q, S) = {dist} >= reach {model.reach}")
    residual = float(np.linalg.norm(delta - frame @ fibre))
    if residual > off_bundle_tol:
        raise OutsideReach(
            f"off-bundle component {residual:.3e} exceeds tolerance {off_bundle_tol:.1e}"
        )
    return BundlePoint(base=float(theta), fibre=fibre, ranks=model.ranks)


def transport(model: ManifoldModel, x_param: float, y_param: float) -> np.ndarray:
    """Orthogonal fibre matrix moving coordinates at x to coordinates at y."""
    d = float(model.base_distance(x_param, y_param))
    if d >= model.convexity_radius:
        raise BeyondConvexityRadius(
            f"base distance {d} >= convexity radius {model.convexity_radius}"
        )
    return model.transport_many(np.asarray(x_param, dtype=float), np.asarray(y_param, dtype=float))


# built-in models --------------------------------------------------------------


def _circle_callables(ambient_dim: int, p: int):
    def point_of(theta):
        th = np.asarray(theta, dtype=float)
        out = np.zeros(th.shape + (ambient_dim,))
        out[..., 0] = np.cos(th)
        out[..., 1] = np.sin(th)
        return out

    def tangent_of(theta):
        th = np.asarray(theta, dtype=float)
        out = np.zeros(th.shape + (ambient_dim,))
        out[..., 0] = -np.sin(th)
        out[..., 1] = np.cos(th)
        return out

    flat = np.zeros((ambient_dim, p))
    flat[2:, :] = np.eye(p)

    def frame_of(theta):
        th = np.asarray(theta, dtype=float)
        return np.broadcast_to(flat, th.shape + (ambient_dim, p)).copy()

    return point_of, tangent_of, frame_of


def _check_ranks(ranks) -> tuple[int, int, int]:
    ranks = tuple(int(r) for r in ranks)
    if len(ranks) != 3 or any(r < 0 for r in ranks):
        raise InvalidRanks(f"ranks must be three non-negative integers, got {ranks}")
    return ranks


def make_circle_model(
    ambient_dim: Optional[int] = None,
    ranks: Sequence[int] = (1, 1, 1),
    analytic_transport: bool = True,
    signed_ranks: Optional[dict] = None,
) -> ManifoldModel:
    """Unit circle in R^(2+p) with the flat directions as working bundle.

    reach = 1 (the circle axis), convexity radius = pi/2.  ``ambient_dim``
    is validated against 2 + sum(ranks) when given.
    """
    ranks = _check_ranks(ranks)
    p = sum(ranks)
    n = 2 + p
    if ambient_dim is not None and int(ambient_dim) != n:
        raise InvalidRanks(f"ambient_dim {ambient_dim} inconsistent with ranks {ranks} (need {n})")
    point_of, tangent_of, frame_of = _circle_callables(n, p)
    return ManifoldModel(
        name="circle",
        ambient_dim=n,
        ranks=ranks,
        reach=1.0,
        convexity_radius=np.pi / 2.0,
        point_of=point_of,
        tangent_of=tangent_of,
        frame_of=frame_of,
        theta_range=None,
        analytic_transport=analytic_transport,
        signed_ranks=signed_ranks,
    )


def make_arc_model(
    theta_range: tuple[float, float],
    ranks: Sequence[int] = (1, 1, 1),
    analytic_transport: bool = True,
    signed_ranks: Optional[dict] = None,
) -> ManifoldModel:
    """Arc of the unit circle (the boundary case); parameters clamped to the arc."""
    ranks = _check_ranks(ranks)
    lo, hi = float(theta_range[0]), float(theta_range[1])
    if not (0.0 < lo < hi < TWO_PI):
        raise DegenerateArc(f"theta_range {theta_range} must be a closed sub-interval of (0, 2pi)")
    if hi - lo >= TWO_PI:
        raise DegenerateArc("arc covers the full circle")
    p = sum(ranks)
    n = 2 + p
    point_of, tangent_of, frame_of = _circle_callables(n, p)
    return ManifoldModel(
        name="arc",
        ambient_dim=n,
        ranks=ranks,
        reach=1.0,
        convexity_radius=np.pi / 2.0,
        point_of=point_of,
        tangent_of=tangent_of,
        frame_of=frame_of,
        theta_range=(lo, hi),
        analytic_transport=analytic_transport,
        signed_ranks=signed_ranks,
    )


def verify_reach(
    model: ManifoldModel,
    n_base: int = 180,
    n_dirs: int = 24,
    n_radial: int = 12,
    seed: int = 0,
    gap_tol: float = 1e-6,
) -> float:
    """Brute-force lower bound on the reach via nearest-point uniqueness.

    Probes ambient points p(theta) + t*d for unit directions d in the full
    normal complement of the tangent (including directions outside the
    working bundle) and returns the smallest t at which the nearest base
    sample becomes non-unique, scanned on ``n_radial`` radii up to the
    declared reach.
    """
    rng = np.random.default_rng(seed)
    thetas = model.base_grid(n_base)
    pts = model.point_of(thetas)
    tangents = model.tangent_of(thetas)
    radii = model.reach * (np.arange(1, n_radial + 1) / n_radial)
    worst = model.reach
    for i, th in enumerate(thetas):
        t_vec = tangents[i] / np.linalg.norm(tangents[i])
        dirs = rng.standard_normal((n_dirs, model.ambient_dim))
        dirs -= np.outer(dirs @ t_vec, t_vec)
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        for d in dirs:
            probes = pts[i] + radii[:, None] * d[None, :]
            dist = np.linalg.norm(probes[:, None, :] - pts[None, :, :], axis=2)
            for k in range(len(radii)):
                row = dist[k]
                j0 = int(np.argmin(row))
                sep = model.base_distance(thetas, thetas[j0])
                others = row[sep > 4.0 * TWO_PI / n_base]
                if others.size and others.min() <= row[j0] + gap_tol:
                    worst = min(worst, float(radii[k]))
                    break
    return worst
