"""Cutoff extension of a locally-defined bundle map to the whole bundle.

A BundleMap acts in bundle coordinates (base parameter, fibre vector) and is
trusted on fibres up to ``domain_radius``.  The extension ``f^r`` agrees with
the map on fibres of norm <= r, with its fibre linearization outside norm 4r,
and blends the two with smooth tubular bump functions in between; it is
globally defined, fixes the zero section, and converges to the linearization
in C^1 as r -> 0.  Block Jacobians split the coordinates as
(base + u + c | s) and feed the quantitative bound report.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .manifold_models import ManifoldModel

__all__ = [
    "ExtensionError",
    "NegativeArgument",
    "NonpositiveRadius",
    "NoSafeRadius",
    "ZeroSectionNotFixed",
    "RadiusTooLarge",
    "EmptyGrid",
    "SingularA11",
    "bump_phi",
    "tubular_bump",
    "BundleMap",
    "CallableBundleMap",
    "ExtendedMap",
    "SafeRadius",
    "find_safe_radius",
    "extend_map",
    "c1_distance_to_linearization",
    "BlockJacobian",
    "block_jacobian",
    "BoundReport",
    "verify_global_bounds",
    "find_bound_certified_radius",
    "fibre_grid",
]

log = logging.getLogger("centerforge.extension")


class ExtensionError(Exception):
    """Base class for extension failures."""


class NegativeArgument(ExtensionError):
    pass


class NonpositiveRadius(ExtensionError):
    pass


class NoSafeRadius(ExtensionError):
    """No rung of the radius ladder could be certified."""


class ZeroSectionNotFixed(ExtensionError):
    pass


class RadiusTooLarge(ExtensionError):
    pass


class EmptyGrid(ExtensionError):
    pass


class SingularA11(ExtensionError):
    pass


# bump functions ----------------------------------------------------------------


def _h(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0.0
    with np.errstate(divide="ignore", over="ignore"):
        out[pos] = np.exp(-1.0 / t[pos])
    return out


def bump_phi(t):
    """Smooth monotone bump: 1 on [0,1], 0 on [2,inf), phi(1.5) = 1/2.

    phi(t) = h(2-t) / (h(2-t) + h(t-1)) with h(t) = exp(-1/t) for t > 0.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0.0):
        raise NegativeArgument("bump argument must be >= 0")
    a = _h(2.0 - t)
    b = _h(t - 1.0)
    denom = a + b
    # denom > 0 everywhere: 2-t and t-1 are never both <= 0
    out = np.where(denom > 0.0, a / np.where(denom > 0.0, denom, 1.0), 0.0)
    return out if out.shape else float(out)


def tubular_bump(i: int, r: float, v) -> np.ndarray:
    """phi(|v| / (i r)): 1 on fibres of norm <= i*r, 0 beyond 2*i*r."""
    if i not in (1, 2):
        raise ExtensionError(f"tubular bump index must be 1 or 2, got {i}")
    if r <= 0.0:
        raise NonpositiveRadius(f"radius must be positive, got {r}")
    norms = np.linalg.norm(np.atleast_2d(np.asarray(v, dtype=float)), axis=-1)
    out = bump_phi(norms / (i * r))
    return out if np.ndim(v) > 1 else float(np.asarray(out).reshape(-1)[0])


# bundle maps --------------------------------------------------------------------


class BundleMap:
    """A map in bundle coordinates with batched evaluation and FD Jacobians.

    Subclasses implement ``eval_batch(theta (B,), v (B,p)) -> (theta', v')``.
    The Jacobian is taken in the coordinates z = (theta, v_1..v_p) by central
    finite differences with step 1e-5 * max(1, |z|) unless overridden.
    """

    model: ManifoldModel
    domain_radius: float = np.inf

    def eval_batch(self, theta: np.ndarray, v: np.ndarray):
        raise NotImplementedError

    def eval(self, theta: float, v: np.ndarray):
        th, w = self.eval_batch(np.asarray([theta], dtype=float), np.asarray([v], dtype=float))
        return float(th[0]), w[0]

    @property
    def p(self) -> int:
        return self.model.p

    def fd_step(self, theta, v) -> np.ndarray:
        scale = np.maximum(1.0, np.sqrt(np.asarray(theta) ** 2 + np.sum(np.asarray(v) ** 2, axis=-1)))
        return 1e-5 * scale

    def jacobian_batch(self, theta: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Central-difference Jacobians, shape (B, 1+p, 1+p)."""
        theta = np.asarray(theta, dtype=float)
        v = np.asarray(v, dtype=float)
        B, p = v.shape
        h = self.fd_step(theta, v)
        J = np.empty((B, 1 + p, 1 + p))
        for j in range(1 + p):
            tp, tm = theta.copy(), theta.copy()
            vp, vm = v.copy(), v.copy()
            if j == 0:
                tp += h
                tm -= h
            else:
                vp[:, j - 1] += h
                vm[:, j - 1] -= h
            thp, wp = self.eval_batch(tp, vp)
            thm, wm = self.eval_batch(tm, vm)
            dbase = _angle_diff(self.model, thp, thm) / (2.0 * h)
            J[:, 0, j] = dbase
            J[:, 1:, j] = (wp - wm) / (2.0 * h)[:, None]
        return J

    def jacobian(self, theta: float, v: np.ndarray) -> np.ndarray:
        return self.jacobian_batch(np.asarray([theta], dtype=float), np.asarray([v], dtype=float))[0]

    def fibre_linearization(self, theta: np.ndarray) -> np.ndarray:
        """D_v f_v(theta, 0), shape (B, p, p); FD fallback."""
        theta = np.asarray(theta, dtype=float)
        p = self.p
        zero = np.zeros((theta.shape[0], p))
        J = self.jacobian_batch(theta, zero)
        return J[:, 1:, 1:]

    def zero_section_residual(self, theta: np.ndarray) -> np.ndarray:
        th, w = self.eval_batch(theta, np.zeros((len(theta), self.p)))
        return np.sqrt(self.model.base_distance(th, theta) ** 2 + np.sum(w**2, axis=-1))


def _angle_diff(model: ManifoldModel, a, b):
    """Signed base difference a - b, wrap-aware on the circle."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if model.theta_range is None:
        return (a - b + np.pi) % (2.0 * np.pi) - np.pi
    return a - b


class CallableBundleMap(BundleMap):
    """BundleMap wrapping a batched callable (theta, v) -> (theta', v')."""

    def __init__(
        self,
        model: ManifoldModel,
        fn: Callable[[np.ndarray, np.ndarray], tuple],
        domain_radius: float = np.inf,
        fibre_linear: Optional[Callable[[np.ndarray], np.ndarray]] = None,
        name: str = "map",
    ):
        self.model = model
        self._fn = fn
        self.domain_radius = float(domain_radius)
        self._fibre_linear = fibre_linear
        self.name = name

    def eval_batch(self, theta, v):
        return self._fn(np.asarray(theta, dtype=float), np.asarray(v, dtype=float))

    def fibre_linearization(self, theta):
        if self._fibre_linear is not None:
            return self._fibre_linear(np.asarray(theta, dtype=float))
        return super().fibre_linearization(theta)


class ExtendedMap(BundleMap):
    """The cutoff extension of ``inner`` at radius r.

    Exact branch identities (checked in tests):
      |v| <= r   : identical to inner
      |v| >= 4r  : identical to the fibre linearization (x, v) -> (x, Df(x) v)
    """

    def __init__(self, inner: BundleMap, model: ManifoldModel, r: float):
        if r <= 0.0:
            raise NonpositiveRadius(f"extension radius must be positive, got {r}")
        self.inner = inner
        self.model = model
        self.r = float(r)
        self.domain_radius = np.inf

    def fibre_linearization(self, theta):
        return self.inner.fibre_linearization(theta)

    def eval_batch(self, theta, v):
        theta = np.asarray(theta, dtype=float)
        v = np.asarray(v, dtype=float)
        r = self.r
        norms = np.linalg.norm(v, axis=-1)
        t = norms / r
        th_out = np.empty_like(theta)
        v_out = np.empty_like(v)

        inner_mask = t <= 1.0
        far_mask = t >= 4.0
        mid_mask = ~(inner_mask | far_mask)

        if np.any(inner_mask):
            th_i, v_i = self.inner.eval_batch(theta[inner_mask], v[inner_mask])
            th_out[inner_mask] = th_i
            v_out[inner_mask] = v_i
        if np.any(far_mask):
            th_f = theta[far_mask]
            df = self.inner.fibre_linearization(th_f)
            th_out[far_mask] = th_f
            v_out[far_mask] = np.einsum("bij,bj->bi", df, v[far_mask])
        if np.any(mid_mask):
            th_m = theta[mid_mask]
            v_m = v[mid_mask]
            n_m = norms[mid_mask]
            a1 = bump_phi(n_m / r)
            a2 = bump_phi(n_m / (2.0 * r))
            th_in, v_in = self.inner.eval_batch(th_m, a2[:, None] * v_m)
            df = self.inner.fibre_linearization(th_m)
            dfv = np.einsum("bij,bj->bi", df, v_m)
            P = self.model.transport_many(th_m, th_in)
            dfv_t = np.einsum("bij,bj->bi", P, dfv)
            th_out[mid_mask] = th_in
            v_out[mid_mask] = a1[:, None] * v_in + (1.0 - a1)[:, None] * dfv_t
        return th_out, v_out

    def cu_eval(self, theta, uc, s):
        """(base, u, c) components of the extension at fibre (uc, s)."""
        v = np.concatenate([uc, s], axis=-1)
        th, w = self.eval_batch(theta, v)
        ncu = self.model.ranks[0] + self.model.ranks[1]
        return th, w[:, :ncu]


# radius certification -----------------------------------------------------------


@dataclass
class SafeRadius:
    r0: float
    r1: float
    r_max: float
    ladder: list = field(default_factory=list)


def _sample_tube(model: ManifoldModel, rho: float, n_base: int, n_dirs: int, n_radial: int, seed: int):
    """Sampled (theta, v) pairs covering the fibre tube of radius rho."""
    rng = np.random.default_rng(seed)
    thetas = model.base_grid(n_base)
    p = model.p
    dirs = rng.standard_normal((n_dirs, p))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = rho * (np.arange(1, n_radial + 1) / n_radial)
    th = np.repeat(thetas, n_dirs * n_radial)
    vv = np.tile((radii[:, None, None] * dirs[None, :, :]).reshape(-1, p), (n_base, 1))
    return th, vv


def find_safe_radius(
    bundle_map: BundleMap,
    model: ManifoldModel,
    n_base: int = 48,
    n_dirs: int = 12,
    n_radial: int = 4,
    ladder_depth: int = 20,
    seed: int = 0,
    zero_tol: float = 1e-10,
    boundary_tol: float = 1e-9,
) -> SafeRadius:
    """Certify extension radii on the geometric ladder reach * 2^-k.

    r0: largest rung whose sampled base displacement stays within the reach
    (boundary models also certify boundary-fibre preservation and the collar
    retention estimate |t' - t| <= t/2).  r1: largest rung whose base
    displacement stays within the convexity radius.  r_max = min(r0, r1)/4.
    """
    thetas = model.base_grid(max(n_base, 16))
    zres = bundle_map.zero_section_residual(thetas)
    if float(zres.max()) > zero_tol:
        raise ZeroSectionNotFixed(f"zero-section residual {zres.max():.3e} > {zero_tol:.1e}")

    top = min(model.reach, bundle_map.domain_radius)
    r0 = None
    r1 = None
    ladder = []
    collar_R = None
    if model.has_boundary:
        lo, hi = model.theta_range
        collar_R = min(model.convexity_radius, (hi - lo) / 4.0)

    for k in range(ladder_depth + 1):
        rho = top * 0.5**k
        th, vv = _sample_tube(model, rho, n_base, n_dirs, n_radial, seed)
        th_img, _ = bundle_map.eval_batch(th, vv)
        disp = model.base_distance(th_img, th)
        ok0 = bool(disp.max() <= model.reach)
        ok1 = bool(disp.max() <= model.convexity_radius)
        if ok0 and model.has_boundary:
            ok0 = _certify_boundary(bundle_map, model, rho, collar_R, n_dirs, n_radial, seed, boundary_tol)
        ladder.append({"r": rho, "r0_ok": ok0, "r1_ok": ok1, "max_base_disp": float(disp.max())})
        if ok0 and r0 is None:
            r0 = rho
        if ok1 and r1 is None:
            r1 = rho
        if r0 is not None and r1 is not None:
            break

    if r0 is None or r1 is None:
        raise NoSafeRadius("no rung of the radius ladder certified; see ladder details")
    return SafeRadius(r0=r0, r1=r1, r_max=0.25 * min(r0, r1), ladder=ladder)


def _certify_boundary(bundle_map, model, rho, collar_R, n_dirs, n_radial, seed, tol):
    rng = np.random.default_rng(seed + 1)
    p = model.p
    dirs = rng.standard_normal((n_dirs, p))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = rho * (np.arange(1, n_radial + 1) / n_radial)
    fibres = (radii[:, None, None] * dirs[None, :, :]).reshape(-1, p)
    lo, hi = model.theta_range

    # (i) boundary fibres map into boundary fibres
    for b in (lo, hi):
        th = np.full(len(fibres), b)
        th_img, _ = bundle_map.eval_batch(th, fibres)
        if float(model.base_distance(th_img, th).max()) > tol:
            return False

    # (ii) collar retention: inward parameter t moves by at most t/2
    t_vals = collar_R * np.array([0.05, 0.1, 0.25, 0.5, 1.0])
    for b, sgn in ((lo, +1.0), (hi, -1.0)):
        for t in t_vals:
            th = np.full(len(fibres), b + sgn * t)
            th_img, _ = bundle_map.eval_batch(th, fibres)
            t_img = sgn * (th_img - b)
            if float(np.abs(t_img - t).max()) > 0.5 * t + tol:
                return False
    return True


def extend_map(
    bundle_map: BundleMap,
    model: ManifoldModel,
    r: float,
    r_max: Optional[float] = None,
) -> ExtendedMap:
    """Build the cutoff extension at radius r (validated against r_max if given)."""
    if r <= 0.0:
        raise NonpositiveRadius(f"extension radius must be positive, got {r}")
    if r_max is not None and r > r_max * (1.0 + 1e-12):
        raise RadiusTooLarge(f"r = {r} exceeds certified r_max = {r_max}")
    return ExtendedMap(bundle_map, model, r)


# grids and bound verification ----------------------------------------------------


def fibre_grid(p: int, radius: float, n_per_axis: int, keep_ball: bool = True) -> np.ndarray:
    """Tensor grid on the fibre box [-radius, radius]^p, optionally cut to the ball."""
    axes = [np.linspace(-radius, radius, n_per_axis) for _ in range(p)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=-1)
    if keep_ball:
        pts = pts[np.linalg.norm(pts, axis=1) <= radius * (1.0 + 1e-12)]
    return pts


def _tube_grid(model: ManifoldModel, radius: float, n_base: int, n_fibre: int):
    thetas = model.base_grid(n_base)
    fibres = fibre_grid(model.p, radius, n_fibre, keep_ball=True)
    th = np.repeat(thetas, len(fibres))
    vv = np.tile(fibres, (len(thetas), 1))
    return th, vv


def c1_distance_to_linearization(
    ext: ExtendedMap,
    n_base: int = 16,
    n_fibre: int = 9,
) -> tuple[float, float]:
    """(sup |f^r - Df|, sup |D(f^r - Df)|_op) on a grid covering the 4r tube."""
    model = ext.model
    th, vv = _tube_grid(model, 4.0 * ext.r, n_base, n_fibre)
    if len(th) == 0:
        raise EmptyGrid("tube grid is empty")
    lin = _linearization_map(ext)
    th_a, va = ext.eval_batch(th, vv)
    th_b, vb = lin.eval_batch(th, vv)
    c0 = np.sqrt(model.base_distance(th_a, th_b) ** 2 + np.sum((va - vb) ** 2, axis=-1))
    Ja = ext.jacobian_batch(th, vv)
    Jb = lin.jacobian_batch(th, vv)
    c1 = np.linalg.norm(Ja - Jb, ord=2, axis=(1, 2))
    return float(c0.max()), float(c1.max())


def _linearization_map(ext: ExtendedMap) -> CallableBundleMap:
    inner = ext.inner

    def fn(theta, v):
        df = inner.fibre_linearization(theta)
        return theta.copy(), np.einsum("bij,bj->bi", df, v)

    return CallableBundleMap(ext.model, fn, name="linearization")


@dataclass
class BlockJacobian:
    """2x2 operator blocks of the full Jacobian in the (base+u+c | s) split."""

    A11: np.ndarray
    A12: np.ndarray
    A21: np.ndarray
    A22: np.ndarray
    full: np.ndarray

    @property
    def a11_inv_norm(self) -> float:
        smin = float(np.linalg.svd(self.A11, compute_uv=False)[-1])
        if smin < 1e-12:
            raise SingularA11(f"sigma_min(A11) = {smin:.3e}")
        return 1.0 / smin

    @property
    def a22_norm(self) -> float:
        return float(np.linalg.norm(self.A22, 2)) if self.A22.size else 0.0

    @property
    def a12_norm(self) -> float:
        return float(np.linalg.norm(self.A12, 2)) if self.A12.size else 0.0

    @property
    def a21_norm(self) -> float:
        return float(np.linalg.norm(self.A21, 2)) if self.A21.size else 0.0

    def reassemble(self) -> np.ndarray:
        top = np.concatenate([self.A11, self.A12], axis=1)
        bot = np.concatenate([self.A21, self.A22], axis=1)
        return np.concatenate([top, bot], axis=0)


def block_jacobian(ext: BundleMap, theta: float, v: np.ndarray) -> BlockJacobian:
    """Blocks of the Jacobian at one bundle point."""
    J = ext.jacobian(theta, np.asarray(v, dtype=float))
    ncu = 1 + ext.model.ranks[0] + ext.model.ranks[1]
    bj = BlockJacobian(
        A11=J[:ncu, :ncu], A12=J[:ncu, ncu:], A21=J[ncu:, :ncu], A22=J[ncu:, ncu:], full=J
    )
    bj.a11_inv_norm  # raises SingularA11 when degenerate
    return bj


@dataclass
class BoundReport:
    """Result of checking the uniform block bounds on a tube grid."""

    r: float
    epsilon: float
    kappa: float
    quantities: dict
    worst: dict
    passed: bool

    def to_dict(self) -> dict:
        return {
            "r": self.r,
            "epsilon": self.epsilon,
            "kappa": self.kappa,
            "quantities": self.quantities,
            "worst": self.worst,
            "pass": self.passed,
        }


def verify_global_bounds(
    ext: ExtendedMap,
    r: float,
    epsilon: float,
    kappa: float,
    n_base: int = 12,
    n_fibre: int = 21,
) -> BoundReport:
    """Check |A11^-1| <= 1+eps, |A22| <= kappa+eps, |A12|,|A21| <= eps on the 4r tube."""
    model = ext.model
    th, vv = _tube_grid(model, 4.0 * r, n_base, n_fibre)
    J = ext.jacobian_batch(th, vv)
    ncu = 1 + model.ranks[0] + model.ranks[1]
    A11 = J[:, :ncu, :ncu]
    A12 = J[:, :ncu, ncu:]
    A21 = J[:, ncu:, :ncu]
    A22 = J[:, ncu:, ncu:]

    smin = np.linalg.svd(A11, compute_uv=False)[:, -1]
    inv_norms = np.where(smin > 1e-300, 1.0 / smin, np.inf)
    a22 = np.linalg.norm(A22, ord=2, axis=(1, 2)) if A22.shape[1] else np.zeros(len(th))
    a12 = np.linalg.norm(A12, ord=2, axis=(1, 2)) if min(A12.shape[1:]) else np.zeros(len(th))
    a21 = np.linalg.norm(A21, ord=2, axis=(1, 2)) if min(A21.shape[1:]) else np.zeros(len(th))

    quantities = {}
    worst_overall = {"quantity": None, "margin": -np.inf}
    for name, vals, bound in (
        ("a11_inv", inv_norms, 1.0 + epsilon),
        ("a22", a22, kappa + epsilon),
        ("a12", a12, epsilon),
        ("a21", a21, epsilon),
    ):
        i = int(np.argmax(vals))
        margin = float(vals[i] - bound)
        quantities[name] = {
            "max": float(vals[i]),
            "bound": bound,
            "margin": margin,
            "point": {"theta": float(th[i]), "fibre": [float(x) for x in vv[i]]},
        }
        if margin > worst_overall["margin"]:
            worst_overall = {
                "quantity": name,
                "margin": margin,
                "value": float(vals[i]),
                "point": quantities[name]["point"],
            }
    passed = all(q["margin"] <= 0.0 for q in quantities.values())
    return BoundReport(r=r, epsilon=epsilon, kappa=kappa, quantities=quantities, worst=worst_overall, passed=passed)


def find_bound_certified_radius(
    bundle_map: BundleMap,
    model: ManifoldModel,
    epsilon: float,
    kappa: float,
    r_start: float,
    max_halvings: int = 12,
    n_base: int = 12,
    n_fibre: int = 21,
) -> tuple[float, BoundReport]:
    """Halve r from r_start until verify_global_bounds passes."""
    r = float(r_start)
    last = None
    for _ in range(max_halvings + 1):
        ext = ExtendedMap(bundle_map, model, r)
        report = verify_global_bounds(ext, r, epsilon, kappa, n_base=n_base, n_fibre=n_fibre)
        last = report
        if report.passed:
            return r, report
        log.info("bounds failed at r=%.6g (worst %s margin %.3g); halving", r, report.worst["quantity"], report.worst["margin"])
        r *= 0.5
    raise NoSafeRadius(f"block bounds never certified down to r = {r}; last worst: {last.worst}")
