"""Known-answer benchmark maps for the solver pipeline.

The shear benchmark conjugates a block map whose invariant section is zero by
the shear (x,u,c,s) -> (x,u,c,s + psi(x,u,c)).  The conjugated map fixes the
zero section, has block-diagonal fibre linearization diag(L_u, L_c, L_s), and
its invariant graph over the (u,c) directions is exactly psi wherever the
cutoff never activates, which makes psi the oracle for solver tests.

Structure of the map, with t = s - psi(x, u, c):

    x'  = x + d(x, u, c)               (optional second-order base drift)
    u'  = L_u u + N_u(x, u, c)
    c'  = L_c c + N_c(x, u, c)
    s'  = L_s t + psi(x', u', c')

Any second-order cu-nonlinearity N and base drift d leave the invariant graph
{s = psi} untouched because the conjugating shear only moves the s slot.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .manifold_models import ManifoldModel
from .map_extension import BundleMap

__all__ = [
    "SpectralViolation",
    "ShearViolation",
    "ShearBlocks",
    "ShearBenchmark",
    "quadratic_shear",
    "quadratic_cu_nonlinearity",
    "quadratic_base_drift",
    "make_shear_benchmark",
    "make_linear_benchmark",
    "make_boundary_violating_map",
]


class SpectralViolation(Exception):
    """Block multipliers violate the expansion / contraction / isometry pattern."""


class ShearViolation(Exception):
    """Shear fails the tangency or Lipschitz preconditions (checked by sampling)."""


@dataclass
class ShearBlocks:
    """Diagonal block multipliers; scalars broadcast over the matching rank."""

    lambda_u: float | np.ndarray = 2.0
    lambda_s: float | np.ndarray = 0.5
    lambda_c: float | np.ndarray = 1.0

    def diagonals(self, ranks: tuple[int, int, int]) -> np.ndarray:
        nu, nc, ns = ranks
        lu = np.broadcast_to(np.asarray(self.lambda_u, dtype=float), (nu,))
        lc = np.broadcast_to(np.asarray(self.lambda_c, dtype=float), (nc,))
        ls = np.broadcast_to(np.asarray(self.lambda_s, dtype=float), (ns,))
        if nu and not np.all(np.abs(lu) > 1.0):
            raise SpectralViolation(f"|lambda_u| must exceed 1, got {lu}")
        if ns and not np.all(np.abs(ls) < 1.0):
            raise SpectralViolation(f"|lambda_s| must be below 1, got {ls}")
        if nc and not np.all(np.isclose(np.abs(lc), 1.0, atol=1e-12)):
            raise SpectralViolation(f"|lambda_c| must equal 1 (isometry), got {lc}")
        return np.concatenate([lu, lc, ls])


class ShearBenchmark(BundleMap):
    """The conjugated block map; see module docstring for the formula."""

    def __init__(
        self,
        model: ManifoldModel,
        blocks: ShearBlocks,
        psi: Callable,
        nonlinear_cu: Optional[Callable] = None,
        base_drift: Optional[Callable] = None,
    ):
        self.model = model
        self.blocks = blocks
        self.diag = blocks.diagonals(model.ranks)
        self.psi = psi
        self.nonlinear_cu = nonlinear_cu
        self.base_drift = base_drift
        self.domain_radius = np.inf

    def _split(self, v):
        nu, nc, _ = self.model.ranks
        return v[..., :nu], v[..., nu : nu + nc], v[..., nu + nc :]

    def eval_batch(self, theta, v):
        theta = np.asarray(theta, dtype=float)
        v = np.asarray(v, dtype=float)
        nu, nc, ns = self.model.ranks
        u, c, s = self._split(v)
        t = s - self.psi(theta, u, c)
        th_new = theta + (self.base_drift(theta, u, c) if self.base_drift else 0.0)
        uc_new = np.concatenate([u, c], axis=-1) * self.diag[None, : nu + nc]
        if self.nonlinear_cu is not None:
            uc_new = uc_new + self.nonlinear_cu(theta, u, c)
        u_new, c_new = uc_new[..., :nu], uc_new[..., nu:]
        s_new = t * self.diag[None, nu + nc :] + self.psi(th_new, u_new, c_new)
        return th_new, np.concatenate([u_new, c_new, s_new], axis=-1)

    def fibre_linearization(self, theta):
        theta = np.asarray(theta, dtype=float)
        return np.broadcast_to(np.diag(self.diag), theta.shape + (self.p, self.p)).copy()

    def invariant_section(self, theta, uc):
        """The analytic oracle psi evaluated at (base, u, c) points."""
        nu = self.model.ranks[0]
        return self.psi(np.asarray(theta, dtype=float), uc[..., :nu], uc[..., nu:])


def quadratic_shear(coeff: float = 0.1, ns: int = 1) -> Callable:
    """psi(x, u, c) = coeff * (|u|^2 + |c|^2) * e_1 in the s slot."""

    def psi(theta, u, c):
        theta = np.asarray(theta, dtype=float)
        q = np.sum(u**2, axis=-1) + np.sum(c**2, axis=-1)
        out = np.zeros(theta.shape + (ns,))
        if ns:
            out[..., 0] = coeff * q
        return out

    return psi


def quadratic_cu_nonlinearity(coeff: float, nu: int, nc: int) -> Callable:
    """Second-order (u,c) coupling: adds coeff * |(u,c)|^2 to every cu slot."""

    def n_cu(theta, u, c):
        q = np.sum(u**2, axis=-1) + np.sum(c**2, axis=-1)
        return coeff * q[..., None] * np.ones((1, nu + nc))

    return n_cu


def quadratic_base_drift(coeff: float) -> Callable:
    """Second-order base motion d(x, u, c) = coeff * |(u,c)|^2."""

    def drift(theta, u, c):
        return coeff * (np.sum(u**2, axis=-1) + np.sum(c**2, axis=-1))

    return drift


def _check_shear(model: ManifoldModel, psi: Callable, n_samples: int = 256, seed: int = 3):
    rng = np.random.default_rng(seed)
    nu, nc, ns = model.ranks
    thetas = model.clamp_base(rng.uniform(0.0, 2.0 * np.pi, n_samples))
    zero_u = np.zeros((n_samples, nu))
    zero_c = np.zeros((n_samples, nc))
    vals0 = psi(thetas, zero_u, zero_c)
    if float(np.abs(vals0).max(initial=0.0)) > 1e-12:
        raise ShearViolation("psi(x, 0) must vanish")
    # tangency: finite differences of psi at the zero fibre
    h = 1e-6
    for j in range(nu + nc):
        e = np.zeros(nu + nc)
        e[j] = h
        up, cp = e[None, :nu].repeat(n_samples, 0), e[None, nu:].repeat(n_samples, 0)
        d = (psi(thetas, up, cp) - psi(thetas, -up, -cp)) / (2.0 * h)
        if float(np.abs(d).max(initial=0.0)) > 1e-4:
            raise ShearViolation("D psi(x, 0) must vanish (sampled finite differences)")
    # Lipschitz bound on the working tube |(u,c)| <= reach
    pts = rng.standard_normal((n_samples, nu + nc))
    pts *= (model.reach * rng.uniform(0, 1, n_samples) ** (1.0 / max(nu + nc, 1)))[:, None] / np.maximum(
        np.linalg.norm(pts, axis=1, keepdims=True), 1e-12
    )
    qts = pts + rng.normal(scale=1e-3, size=pts.shape)
    va = psi(thetas, pts[:, :nu], pts[:, nu:])
    vb = psi(thetas, qts[:, :nu], qts[:, nu:])
    quot = np.linalg.norm(va - vb, axis=-1) / np.maximum(np.linalg.norm(pts - qts, axis=-1), 1e-300)
    if float(quot.max(initial=0.0)) > 1.0 + 1e-6:
        raise ShearViolation(f"Lip(psi) estimate {quot.max():.3f} exceeds 1 on the working tube")


def make_shear_benchmark(
    model: ManifoldModel,
    blocks: ShearBlocks | None = None,
    psi: Optional[Callable] = None,
    nonlinear_cu: Optional[Callable] = None,
    base_drift: Optional[Callable] = None,
) -> tuple[ManifoldModel, ShearBenchmark, Callable]:
    """Build the oracle benchmark; returns (model, map, psi)."""
    blocks = blocks or ShearBlocks()
    psi = psi or quadratic_shear(0.1, model.ranks[2])
    _check_shear(model, psi)
    bench = ShearBenchmark(model, blocks, psi, nonlinear_cu=nonlinear_cu, base_drift=base_drift)
    return model, bench, psi


def make_linear_benchmark(model: ManifoldModel, blocks: ShearBlocks | None = None) -> ShearBenchmark:
    """Purely linear block map (psi = 0, no drift): equals its own linearization."""
    blocks = blocks or ShearBlocks()
    zero = quadratic_shear(0.0, model.ranks[2])
    return ShearBenchmark(model, blocks, zero)


def make_boundary_violating_map(model: ManifoldModel, beta: float = 0.5, blocks: ShearBlocks | None = None) -> BundleMap:
    """Map translating the base off the boundary fibre (first order in the fibre).

    Fixes the zero section but moves the base of every nonzero fibre over the
    boundary, so no rung of the safe-radius ladder certifies.
    """
    blocks = blocks or ShearBlocks()
    diag = blocks.diagonals(model.ranks)

    class _Violating(BundleMap):
        def __init__(self):
            self.model = model
            self.domain_radius = np.inf

        def eval_batch(self, theta, v):
            theta = np.asarray(theta, dtype=float)
            v = np.asarray(v, dtype=float)
            th_new = theta + beta * np.linalg.norm(v, axis=-1)
            return th_new, v * diag[None, :]

    return _Violating()
