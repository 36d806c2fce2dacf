"""Boundary modification of a map near the edge of a compact fixed-point arc.

Given a map fixing an arc S'' and a bi-collar around the boundary of the
intermediate arc S', the local blend freezes the base components of the map
on small fibres near the boundary while leaving the fibre components alone:

    f~_base(x, v, w) = (1 - phi(|w|) phi(|v|)) f_base(x, v, w)
                       + phi(|w|) phi(|v|) f_base(x, v, 0)

with phi equal to 1 on [0, r/2] and 0 beyond r.  Patching the local blends
with a partition of unity yields a map f' that agrees with f outside the
bi-collar tube, fixes S'', preserves boundary fibres over the new boundary,
and keeps the normal Jacobian symmetric, block-diagonal and spectrally
pinned (E_s inside the unit disc, E_c at +-1, E_u outside) along S''.

The mixed-sign control demonstrates why the chart frames must respect the
signed splitting: patching symmetric normal Jacobians with eigenvalues +-1
taken in frames rotated against each other cancels the centre spectrum into
the open unit disc, and the property report flags it.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .manifold_models import ManifoldModel, make_arc_model
from .map_extension import BundleMap, bump_phi
from .benchmarks import (
    ShearBlocks,
    make_shear_benchmark,
    quadratic_base_drift,
    quadratic_shear,
)
from . import eos_factorization as eos

__all__ = [
    "SurgeryError",
    "EmptySamples",
    "CollarTooDeep",
    "FrameNotSplitRespecting",
    "PartitionGap",
    "CollarSpec",
    "compact_exclusion_radius",
    "build_collar",
    "BlendedLocal",
    "blend_local",
    "PatchedMap",
    "patch_partition",
    "SurgeryReport",
    "verify_surgery",
    "SurgeryBundle",
    "make_surgery_benchmark",
    "make_mixed_sign_control",
    "factorisation_subarc_samples",
    "factorisation_badset_samples",
]

log = logging.getLogger("centerforge.surgery")


class SurgeryError(Exception):
    pass


class EmptySamples(SurgeryError):
    pass


class CollarTooDeep(SurgeryError):
    pass


class FrameNotSplitRespecting(SurgeryError):
    pass


class PartitionGap(SurgeryError):
    pass


def compact_exclusion_radius(sub_samples: np.ndarray, badset_samples: np.ndarray) -> float:
    """Half the sampled distance between a compact piece and the bad set.

    Returns 0 when the sample sets touch (rejection); the distance function
    delta(x) = dist(x, bad set) is 1-Lipschitz, so the sampled minimum
    certifies d(bad set, piece) >= 2r at sample resolution.
    """
    A = np.atleast_2d(np.asarray(sub_samples, dtype=float))
    B = np.atleast_2d(np.asarray(badset_samples, dtype=float))
    if A.size == 0 or B.size == 0:
        raise EmptySamples("both sample sets must be nonempty")
    d2 = np.sum((A[:, None, :] - B[None, :, :]) ** 2, axis=2)
    return 0.5 * float(np.sqrt(d2.min()))


@dataclass
class CollarSpec:
    """Bi-collar data around the boundary of the extended arc S'.

    The original arc S = [lo, hi] is extended to S' = [lo-R, hi+R] and
    S'' = [lo-2R, hi+2R]; psi(side, t) walks the unit-speed inward geodesic
    from the S' boundary (t = 0) to the S boundary (t = R), with t < 0
    reaching into S'' \\ S'.
    """

    theta_range: tuple[float, float]
    R: float
    r: float
    model_S: ManifoldModel
    model_Sp: ManifoldModel
    model_Sdp: ManifoldModel

    @property
    def boundary_Sp(self) -> tuple[float, float]:
        lo, hi = self.theta_range
        return (lo - self.R, hi + self.R)

    def psi(self, side: int, t) -> np.ndarray:
        """Bi-collar parametrisation; side 0 is the low end, 1 the high end."""
        t = np.asarray(t, dtype=float)
        lo, hi = self.theta_range
        if side == 0:
            return (lo - self.R) + t
        return (hi + self.R) - t

    def collar_coordinate(self, side: int, theta) -> np.ndarray:
        """Signed collar coordinate v of theta relative to the S' boundary."""
        theta = np.asarray(theta, dtype=float)
        b = self.boundary_Sp[side]
        return (theta - b) if side == 0 else (b - theta)


def build_collar(model: ManifoldModel, R: float, r: Optional[float] = None) -> CollarSpec:
    """Extend an arc model by a bi-collar of depth R on both ends."""
    if not model.has_boundary:
        raise SurgeryError("collar construction needs an arc model")
    lo, hi = model.theta_range
    if R <= 0.0 or R >= (hi - lo) / 2.0:
        raise CollarTooDeep(f"R = {R} must lie in (0, half arc length {0.5 * (hi - lo):.4f})")
    if R >= model.convexity_radius:
        raise CollarTooDeep(f"R = {R} reaches the convexity radius")
    if not (0.0 < lo - 2.0 * R and hi + 2.0 * R < 2.0 * np.pi):
        raise CollarTooDeep("bi-collar extension leaves the parametrisable range")
    model_Sp = make_arc_model((lo - R, hi + R), model.ranks, signed_ranks=model.signed_ranks)
    model_Sdp = make_arc_model((lo - 2.0 * R, hi + 2.0 * R), model.ranks, signed_ranks=model.signed_ranks)
    r_val = r if r is not None else 0.5 * min(model.reach, R)
    if not (0.0 < r_val <= min(model.reach, R)):
        raise CollarTooDeep(f"shrunken radius {r_val} must lie in (0, min(reach, R)]")
    return CollarSpec(theta_range=(lo, hi), R=R, r=r_val, model_S=model, model_Sp=model_Sp, model_Sdp=model_Sdp)


def _support_bump(t, r):
    """Monotone bump equal to 1 on [0, r/2] and 0 beyond r."""
    return bump_phi(2.0 * np.abs(np.asarray(t, dtype=float)) / r)


@dataclass
class BlendedLocal:
    """Local blend of the map over one boundary side of S'."""

    inner: BundleMap
    collar: CollarSpec
    r: float
    side: int
    frame: Optional[np.ndarray] = None

    def support_mask(self, theta, w_norm):
        v = self.collar.collar_coordinate(self.side, theta)
        return (np.abs(v) < self.r) & (w_norm < self.r)

    def eval_batch(self, theta, w):
        theta = np.asarray(theta, dtype=float)
        w = np.asarray(w, dtype=float)
        th_f, w_f = self.inner.eval_batch(theta, w)
        v = self.collar.collar_coordinate(self.side, theta)
        coeff = _support_bump(np.linalg.norm(w, axis=-1), self.r) * _support_bump(v, self.r)
        th_blend = th_f
        active = coeff > 0.0
        if np.any(active):
            # freeze the base components toward their zero-fibre values
            th0, _ = self.inner.eval_batch(theta[active], np.zeros_like(w[active]))
            th_blend = th_f.copy()
            th_blend[active] = (1.0 - coeff[active]) * th_f[active] + coeff[active] * th0
        return th_blend, w_f


def blend_local(
    inner: BundleMap,
    collar: CollarSpec,
    r: float,
    side: int,
    frame: Optional[np.ndarray] = None,
    enforce_split: bool = True,
) -> BlendedLocal:
    """Build the local blend; validates the chart frame against the signed splitting."""
    model = collar.model_Sdp
    if frame is not None:
        frame = np.asarray(frame, dtype=float)
        ortho = float(np.abs(frame.T @ frame - np.eye(model.p)).max())
        if ortho > 1e-10:
            raise FrameNotSplitRespecting(f"chart frame not orthonormal (deviation {ortho:.2e})")
    if enforce_split:
        _check_split_respect(inner, model, frame)
    return BlendedLocal(inner=inner, collar=collar, r=r, side=side, frame=frame)


def _signed_groups(model: ManifoldModel) -> list[tuple[str, slice, float]]:
    """Index groups (label, slice, expected sign pattern) of the signed splitting."""
    nu, nc, ns = model.ranks
    signed = model.signed_ranks or {}
    nu_p, nu_m = signed.get("u", (nu, 0))
    nc_p, nc_m = signed.get("c", (nc, 0))
    groups = []
    pos = 0
    for label, size in (
        ("u+", nu_p),
        ("u-", nu_m),
        ("c+", nc_p),
        ("c-", nc_m),
        ("s", ns),
    ):
        if size:
            groups.append((label, slice(pos, pos + size), 0.0))
        pos += size
    return groups


def _check_split_respect(inner: BundleMap, model: ManifoldModel, frame: Optional[np.ndarray], tol: float = 1e-10):
    thetas = model.base_grid(9)
    df = inner.fibre_linearization(thetas)
    if frame is not None:
        df = np.einsum("ij,bjk,kl->bil", frame.T, df, frame)
    groups = _signed_groups(model)
    for i, (_, sl_i, _) in enumerate(groups):
        for j, (_, sl_j, _) in enumerate(groups):
            if i == j:
                continue
            off = float(np.abs(df[:, sl_i, sl_j]).max(initial=0.0))
            if off > tol:
                raise FrameNotSplitRespecting(
                    f"zero-section fibre Jacobian mixes split blocks by {off:.2e} in the chart frame"
                )


class PatchedMap(BundleMap):
    """Partition-of-unity patch of local blends, equal to the raw map off the tube."""

    def __init__(self, inner: BundleMap, blends: list[BlendedLocal], rhos: list[Callable], model: ManifoldModel):
        if len(blends) != len(rhos):
            raise SurgeryError("one partition weight per local blend")
        self.inner = inner
        self.blends = blends
        self.rhos = rhos
        self.model = model
        self.domain_radius = getattr(inner, "domain_radius", np.inf)

    def tube_mask(self, theta, w):
        w_norm = np.linalg.norm(np.asarray(w, dtype=float), axis=-1)
        mask = np.zeros(np.asarray(theta).shape, dtype=bool)
        for blend in self.blends:
            mask |= blend.support_mask(theta, w_norm)
        return mask

    def eval_batch(self, theta, w):
        theta = np.asarray(theta, dtype=float)
        w = np.asarray(w, dtype=float)
        th_out, w_out = self.inner.eval_batch(theta, w)
        mask = self.tube_mask(theta, w)
        if np.any(mask):
            th_m = theta[mask]
            w_m = w[mask]
            weights = np.stack([np.asarray(rho(th_m), dtype=float) for rho in self.rhos], axis=0)
            total = weights.sum(axis=0)
            if float(np.abs(total - 1.0).max()) > 1e-10:
                raise PartitionGap(f"partition sums deviate from 1 by {np.abs(total - 1.0).max():.2e}")
            th_acc = np.zeros_like(th_m)
            w_acc = np.zeros_like(w_m)
            for rho_vals, blend in zip(weights, self.blends):
                th_b, w_b = blend.eval_batch(th_m, w_m)
                th_acc += rho_vals * th_b
                w_acc += rho_vals[:, None] * w_b
            th_out[mask] = th_acc
            w_out[mask] = w_acc
        return th_out, w_out

    def fibre_linearization(self, theta):
        return self.inner.fibre_linearization(theta)


def patch_partition(
    inner: BundleMap,
    blends: list[BlendedLocal],
    rhos: Optional[list[Callable]] = None,
    n_check: int = 1000,
) -> PatchedMap:
    """Patch local blends into a global map; validates the partition on samples."""
    model = blends[0].collar.model_Sdp
    if rhos is None:
        # side charts have disjoint supports: indicator of the own support
        def make_rho(b):
            def rho(theta):
                v = b.collar.collar_coordinate(b.side, theta)
                return np.where(np.abs(v) < b.r, 1.0, 0.0)

            return rho

        rhos = [make_rho(b) for b in blends]
    patched = PatchedMap(inner, blends, rhos, model)
    lo, hi = model.theta_range
    thetas = np.linspace(lo, hi, n_check)
    w_norm = np.zeros(n_check)
    mask = np.zeros(n_check, dtype=bool)
    for b in blends:
        mask |= b.support_mask(thetas, w_norm)
    if np.any(mask):
        weights = np.stack([np.asarray(rho(thetas[mask]), dtype=float) for rho in rhos], axis=0)
        gap = float(np.abs(weights.sum(axis=0) - 1.0).max())
        if gap > 1e-10:
            raise PartitionGap(f"partition of unity deviates from 1 by {gap:.2e} on the bi-collar")
    return patched


# verification ---------------------------------------------------------------------


@dataclass
class SurgeryReport:
    items: dict

    @property
    def passed(self) -> bool:
        return all(item["pass"] for item in self.items.values())

    def to_dict(self) -> dict:
        return {"items": self.items, "pass": self.passed}


def verify_surgery(
    f_prime: BundleMap,
    f: BundleMap,
    collar: CollarSpec,
    r: float,
    kappa: float,
    n_base: int = 41,
    n_dirs: int = 16,
    seed: int = 0,
    fd_tol: float = 1e-8,
) -> SurgeryReport:
    """Check the five patched-map properties on grids over the S'' bundle."""
    model = collar.model_Sdp
    rng = np.random.default_rng(seed)
    p = model.p
    thetas = model.base_grid(n_base)
    items = {}

    # 1: boundary fibres over the S' boundary map to themselves
    worst1 = 0.0
    dirs = rng.standard_normal((n_dirs, p))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    for side in (0, 1):
        b = collar.boundary_Sp[side]
        for scale in (0.1, 0.25, 0.5):
            w = dirs * (scale * r / 2.0)
            th_img, _ = f_prime.eval_batch(np.full(len(w), b), w)
            worst1 = max(worst1, float(np.abs(th_img - b).max()))
    items["boundary_fibres"] = {"pass": worst1 <= 1e-12, "worst": worst1, "tol": 1e-12}

    # 2: identical to the raw map outside the tube (bit exact)
    fibres = np.concatenate(
        [dirs * (0.25 * r), dirs * (0.75 * r), dirs * (1.5 * r), dirs * (2.5 * r)], axis=0
    )
    th_all = np.repeat(thetas, len(fibres))
    w_all = np.tile(fibres, (len(thetas), 1))
    outside = ~_tube_membership(collar, th_all, w_all, r)
    th_a, w_a = f_prime.eval_batch(th_all[outside], w_all[outside])
    th_b, w_b = f.eval_batch(th_all[outside], w_all[outside])
    worst2 = max(float(np.abs(th_a - th_b).max(initial=0.0)), float(np.abs(w_a - w_b).max(initial=0.0)))
    items["exact_off_tube"] = {"pass": worst2 == 0.0, "worst": worst2, "tol": 0.0}

    # 3: fixes S''
    th_img, w_img = f_prime.eval_batch(thetas, np.zeros((len(thetas), p)))
    worst3 = max(float(np.abs(th_img - thetas).max()), float(np.abs(w_img).max()))
    items["fixes_base"] = {"pass": worst3 <= 1e-12, "worst": worst3, "tol": 1e-12}

    # 4: Jacobian along S'' block-diagonal and symmetric
    J = f_prime.jacobian_batch(thetas, np.zeros((len(thetas), p)))
    off = max(float(np.abs(J[:, 0, 1:]).max()), float(np.abs(J[:, 1:, 0]).max()))
    fibre_block = J[:, 1:, 1:]
    asym = float(np.abs(fibre_block - np.swapaxes(fibre_block, 1, 2)).max())
    worst4 = max(off, asym)
    items["block_diagonal_symmetric"] = {
        "pass": worst4 <= fd_tol,
        "worst": worst4,
        "off_block": off,
        "asymmetry": asym,
        "tol": fd_tol,
    }

    # 5: spectral bounds on the signed splitting
    groups = _signed_groups(model)
    sym_block = 0.5 * (fibre_block + np.swapaxes(fibre_block, 1, 2))
    spectra = {}
    ok5 = True
    for label, sl, _ in groups:
        sub = sym_block[:, sl, sl]
        eig = np.linalg.eigvalsh(sub)
        spectra[label] = {"min": float(eig.min()), "max": float(eig.max())}
        if label == "s":
            ok5 &= bool(np.all(np.abs(eig) <= kappa + fd_tol))
        elif label == "c+":
            ok5 &= bool(np.all(np.abs(eig - 1.0) <= fd_tol))
        elif label == "c-":
            ok5 &= bool(np.all(np.abs(eig + 1.0) <= fd_tol))
        elif label == "u+":
            ok5 &= bool(np.all(eig >= 1.0 - fd_tol))
        elif label == "u-":
            ok5 &= bool(np.all(eig <= -1.0 + fd_tol))
    items["spectral_bounds"] = {"pass": ok5, "spectra": spectra, "kappa": kappa, "tol": fd_tol}

    return SurgeryReport(items=items)


def _tube_membership(collar: CollarSpec, theta, w, r):
    w_norm = np.linalg.norm(np.asarray(w, dtype=float), axis=-1)
    mask = np.zeros(np.asarray(theta).shape, dtype=bool)
    for side in (0, 1):
        v = collar.collar_coordinate(side, theta)
        mask |= (np.abs(v) < r) & (w_norm < r)
    return mask


# benchmark and control -------------------------------------------------------------


def _signed_ranks_from_blocks(blocks: ShearBlocks, ranks) -> dict:
    """Signed sub-ranks of E_u and E_c from the diagonal sign pattern.

    The frame orders the positive directions before the negative ones inside
    each block, so the diagonals must be sign-sorted accordingly.
    """
    diag = blocks.diagonals(ranks)
    nu, nc, _ = ranks
    out = {}
    for label, sl in (("u", slice(0, nu)), ("c", slice(nu, nu + nc))):
        signs = np.sign(diag[sl])
        n_plus = int(np.sum(signs > 0))
        if not np.all(signs[:n_plus] > 0):
            raise SurgeryError(f"{label} block diagonals must list positive entries first, got {diag[sl]}")
        out[label] = (n_plus, len(signs) - n_plus)
    return out


@dataclass
class SurgeryBundle:
    collar: CollarSpec
    f_raw: BundleMap
    f_prime: PatchedMap
    psi: Callable
    blocks: ShearBlocks

    @property
    def model_Sp(self) -> ManifoldModel:
        return self.collar.model_Sp

    @property
    def model_Sdp(self) -> ManifoldModel:
        return self.collar.model_Sdp


def make_surgery_benchmark(
    theta_range: tuple[float, float] = (np.pi / 4.0, 3.0 * np.pi / 4.0),
    R: float = 0.1,
    ranks: tuple[int, int, int] = (1, 2, 1),
    blocks: Optional[ShearBlocks] = None,
    drift_coeff: float = 0.5,
    psi_coeff: float = 0.1,
    r: Optional[float] = None,
) -> SurgeryBundle:
    """Arc benchmark whose raw map drifts the base (violating the boundary
    hypothesis) and whose patched map restores it.

    The shear is base-independent, so freezing the base components near the
    boundary leaves the invariant graph {s = psi(u, c)} exactly invariant
    for the patched map as well; psi stays the oracle for downstream solves.
    """
    nu, nc, ns = ranks
    if blocks is None:
        lam_c = np.concatenate([np.ones(nc - nc // 2), -np.ones(nc // 2)]) if nc else np.ones(0)
        blocks = ShearBlocks(lambda_u=2.0, lambda_s=0.5, lambda_c=lam_c)
    signed = _signed_ranks_from_blocks(blocks, ranks)
    model_S = make_arc_model(theta_range, ranks, signed_ranks=signed)
    collar = build_collar(model_S, R, r=r)
    model_dp = collar.model_Sdp
    _, f_raw, psi = make_shear_benchmark(
        model_dp,
        blocks=blocks,
        psi=quadratic_shear(psi_coeff, ns),
        base_drift=quadratic_base_drift(drift_coeff),
    )
    blends = [blend_local(f_raw, collar, collar.r, side) for side in (0, 1)]
    f_prime = patch_partition(f_raw, blends)
    return SurgeryBundle(collar=collar, f_raw=f_raw, f_prime=f_prime, psi=psi, blocks=blocks)


class MixedSignControl(BundleMap):
    """Random partition of two symmetric fibre actions in rotated frames.

    Each local action has eigenvalues (lambda_u, +1, -1, lambda_s); chart B
    takes them in a frame rotating the (c+, c-) plane.  The convex blend
    keeps symmetry but its centre eigenvalues cancel into the open unit
    disc, breaking the spectral pins while every other patched-map property
    survives.
    """

    def __init__(self, inner: BundleMap, collar: CollarSpec, r: float, M_a, M_b, mix: Callable):
        self.inner = inner
        self.collar = collar
        self.r = float(r)
        self.M_a = M_a
        self.M_b = M_b
        self.mix = mix
        self.model = collar.model_Sdp
        self.domain_radius = np.inf

    def _weight(self, theta, w_norm):
        v0 = self.collar.collar_coordinate(0, theta)
        v1 = self.collar.collar_coordinate(1, theta)
        sup = np.maximum(_support_bump(v0, self.r), _support_bump(v1, self.r)) * _support_bump(w_norm, self.r)
        return sup * np.clip(self.mix(theta), 0.0, 1.0)

    def eval_batch(self, theta, w):
        theta = np.asarray(theta, dtype=float)
        w = np.asarray(w, dtype=float)
        th_out, w_out = self.inner.eval_batch(theta, w)
        q = self._weight(theta, np.linalg.norm(w, axis=-1))
        active = q > 0.0
        if np.any(active):
            wa = w[active]
            blend = (1.0 - q[active])[:, None] * (wa @ self.M_a.T) + q[active][:, None] * (wa @ self.M_b.T)
            w_out[active] = blend
        return th_out, w_out


def make_mixed_sign_control(
    collar: CollarSpec,
    blocks: Optional[ShearBlocks] = None,
    angle: float = np.pi / 4.0,
    seed: int = 7,
) -> tuple[MixedSignControl, BundleMap]:
    """(control map, raw map) pair reproducing the sign-cancellation failure."""
    model = collar.model_Sdp
    nu, nc, ns = model.ranks
    if nc < 2:
        raise SurgeryError("the mixed-sign control needs rank(E_c) >= 2")
    if blocks is None:
        lam_c = np.concatenate([np.ones(nc - nc // 2), -np.ones(nc // 2)])
        blocks = ShearBlocks(lambda_u=2.0, lambda_s=0.5, lambda_c=lam_c)
    diag = blocks.diagonals(model.ranks)
    M_a = np.diag(diag)
    rot = np.eye(model.p)
    i, j = nu, nu + nc - 1  # first c+ against last c-
    rot[i, i] = rot[j, j] = np.cos(angle)
    rot[i, j] = -np.sin(angle)
    rot[j, i] = np.sin(angle)
    M_b = rot @ M_a @ rot.T

    class _Linear(BundleMap):
        def __init__(self):
            self.model = model
            self.domain_radius = np.inf

        def eval_batch(self, theta, w):
            theta = np.asarray(theta, dtype=float)
            return theta.copy(), np.asarray(w, dtype=float) @ M_a.T

        def fibre_linearization(self, theta):
            theta = np.asarray(theta, dtype=float)
            return np.broadcast_to(M_a, theta.shape + M_a.shape).copy()

    rng = np.random.default_rng(seed)
    a, b = rng.uniform(0.3, 0.7), rng.uniform(0.0, 2.0 * np.pi)

    def mix(theta):
        return a * (1.0 + np.sin(3.0 * np.asarray(theta) + b)) / 2.0 + 0.25

    raw = _Linear()
    return MixedSignControl(raw, collar, collar.r, M_a, M_b, mix), raw


# bridge to the factorisation application --------------------------------------------


def factorisation_subarc_samples(
    problem: "eos.FactorizationProblem", t_range: tuple[float, float] = (-0.2, 0.2), n: int = 41
) -> np.ndarray:
    """Lifted samples of a 1-parameter sub-arc of the fixed-point manifold.

    The chart path A(t) = diag(1 + t, 2) stays off the bad set for the
    default target and range; each sample is the flattened lifted state.
    """
    ts = np.linspace(t_range[0], t_range[1], n)
    out = []
    for t in ts:
        W1, W2 = eos.minimiser_chart(problem, np.diag([1.0 + t, 2.0]))
        out.append(eos.lift_to_T(problem, W1, W2).flat())
    return np.asarray(out)


def factorisation_badset_samples(problem: "eos.FactorizationProblem", n_a: int = 25, n_q: int = 32) -> np.ndarray:
    """Lifted samples of both bad-set components (orthogonal-multiple factors)."""
    out = []
    a_vals = np.exp(np.linspace(np.log(0.4), np.log(2.5), n_a))
    angles = np.linspace(0.0, 2.0 * np.pi, n_q, endpoint=False)
    for a in a_vals:
        for ang in angles:
            for refl in (1.0, -1.0):
                Q = np.array([[np.cos(ang), -refl * np.sin(ang)], [np.sin(ang), refl * np.cos(ang)]])
                W1 = a * Q
                W2 = problem.Y @ Q.T / a
                out.append(eos.lift_to_T(problem, W1, W2).flat())
                W1b = Q.T @ problem.Y / a
                W2b = a * Q
                out.append(eos.lift_to_T(problem, W1b, W2b).flat())
    return np.asarray(out)
