"""Graph-transform solver for the invariant section over the (u, c) directions.

Sections are 1-Lipschitz fibre maps vanishing on the zero section, stored on
a tensor grid (base parameter x fibre box over the closed 4r-ball) with
multilinear interpolation; queries outside the ball but inside the box are
clamped radially to the ball boundary.  One transform sweep inverts the
(base, u, c) part of the extended map through the section graph with a damped
Newton iteration and re-evaluates the s-part on the preimages; Picard
iteration from the zero section converges to the unique fixed section at the
contraction rate (kappa + 2 eps) / (1 - 2 eps).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .manifold_models import ManifoldModel, embed_many
from .map_extension import BundleMap, ExtendedMap

__all__ = [
    "TransformError",
    "InvalidTransformConfig",
    "OutsideBox",
    "NewtonDiverged",
    "IdenticalSections",
    "MaxSweepsExceeded",
    "StepTooSmall",
    "HistoryMissing",
    "SampleEscaped",
    "TransformConfig",
    "Section",
    "make_zero_section",
    "random_admissible_section",
    "evaluate_section",
    "invert_cu",
    "apply_graph_transform",
    "contraction_ratio",
    "solve_fixed_section",
    "SolveDiagnostics",
    "DerivativeDiagnostics",
    "derivative_bound_trace",
    "tangency_check",
    "reconstruct_manifold",
    "invariance_residual",
    "section_sup_distance",
]

log = logging.getLogger("centerforge.transform")


class TransformError(Exception):
    pass


class InvalidTransformConfig(TransformError, ValueError):
    pass


class OutsideBox(TransformError):
    pass


class NewtonDiverged(TransformError):
    def __init__(self, message, node_index=None, residual=None):
        super().__init__(message)
        self.node_index = node_index
        self.residual = residual


class IdenticalSections(TransformError):
    pass


class MaxSweepsExceeded(TransformError):
    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals or []


class StepTooSmall(TransformError):
    pass


class HistoryMissing(TransformError):
    pass


class SampleEscaped(TransformError):
    pass


@dataclass
class TransformConfig:
    """Solver parameters; the admissibility inequalities are enforced here.

    Both (kappa + 2 eps)/(1 - 2 eps) < 1 and, for the tracked regularity
    order k >= 1, (kappa + 2 eps)(1 + eps)^(k+1)/(1 - 2 eps)^(k+2) < 1 must
    hold, otherwise the configuration is rejected before any solve.
    """

    r: float
    epsilon: float = 0.05
    kappa: float = 0.5
    grid_base: int = 33
    grid_fibre: int = 33
    newton_tol: float = 1e-11
    newton_max_iter: int = 60
    fixed_point_tol: float = 1e-10
    max_sweeps: int = 200
    regularity_order: int = 1
    lip_slack: float = 1e-9

    def __post_init__(self):
        if self.r <= 0.0:
            raise InvalidTransformConfig(f"r must be positive, got {self.r}")
        if not (0.0 < self.epsilon < 0.5):
            raise InvalidTransformConfig(f"epsilon must lie in (0, 1/2), got {self.epsilon}")
        if not (0.0 <= self.kappa < 1.0):
            raise InvalidTransformConfig(f"kappa must lie in [0, 1), got {self.kappa}")
        if self.contraction_rate >= 1.0:
            raise InvalidTransformConfig(
                f"(kappa + 2 eps)/(1 - 2 eps) = {self.contraction_rate:.4f} >= 1"
            )
        k = int(self.regularity_order)
        if k < 0 or k > 2:
            raise InvalidTransformConfig("regularity_order must be 0, 1 or 2")
        if k >= 1 and self.regularity_rate(k + 1) >= 1.0:
            raise InvalidTransformConfig(
                f"(kappa + 2 eps)(1 + eps)^{k + 1}/(1 - 2 eps)^{k + 2} = "
                f"{self.regularity_rate(k + 1):.4f} >= 1 for regularity order {k}"
            )
        if self.grid_base < 4 or self.grid_fibre < 4:
            raise InvalidTransformConfig("grid resolutions must be >= 4 per axis")

    @property
    def contraction_rate(self) -> float:
        return (self.kappa + 2.0 * self.epsilon) / (1.0 - 2.0 * self.epsilon)

    def regularity_rate(self, l: int) -> float:
        return (self.kappa + 2.0 * self.epsilon) * (1.0 + self.epsilon) ** l / (
            1.0 - 2.0 * self.epsilon
        ) ** (l + 1)


@dataclass
class Section:
    """Discretized section over the (base, u, c) coordinates.

    values[i, j1..jk, :] is the fibre value at (theta_i, fibre node j); the
    fibre nodes outside the 4r-ball represent their radial clamps.
    """

    model: ManifoldModel
    r: float
    theta_nodes: np.ndarray
    fibre_axes: list
    values: np.ndarray

    @property
    def ranks(self):
        return self.model.ranks

    @property
    def n_cu(self) -> int:
        return self.model.ranks[0] + self.model.ranks[1]

    @property
    def p_s(self) -> int:
        return self.model.ranks[2]

    @property
    def periodic(self) -> bool:
        return not self.model.has_boundary

    @property
    def theta_step(self) -> float:
        if self.periodic:
            return 2.0 * np.pi / len(self.theta_nodes)
        return float(self.theta_nodes[1] - self.theta_nodes[0])

    @property
    def fibre_steps(self) -> list:
        return [float(ax[1] - ax[0]) for ax in self.fibre_axes]

    def node_points(self) -> np.ndarray:
        """All grid nodes as (N, 1 + n_cu) coordinate rows (radially clamped)."""
        mesh = np.meshgrid(self.theta_nodes, *self.fibre_axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=-1)
        pts[:, 1:] = _radial_clamp(pts[:, 1:], 4.0 * self.r)
        return pts

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Multilinear interpolation at (B, 1 + n_cu) query points."""
        pts = np.atleast_2d(np.asarray(points, dtype=float)).copy()
        if pts.shape[1] != 1 + self.n_cu:
            raise OutsideBox(f"query needs {1 + self.n_cu} coordinates, got {pts.shape[1]}")
        box_bound = 4.0 * self.r * np.sqrt(self.n_cu) * (1.0 + 1e-6) + 1e-12
        norms = np.linalg.norm(pts[:, 1:], axis=1)
        if np.any(norms > box_bound):
            raise OutsideBox(f"fibre query norm {norms.max():.4g} beyond the grid box")
        pts[:, 1:] = _radial_clamp(pts[:, 1:], 4.0 * self.r)

        idx = []
        wts = []
        th = pts[:, 0]
        n_t = len(self.theta_nodes)
        if self.periodic:
            x = (th % (2.0 * np.pi)) / self.theta_step
            i0 = np.floor(x).astype(int) % n_t
            w = x - np.floor(x)
            i1 = (i0 + 1) % n_t
        else:
            lo, hi = self.theta_nodes[0], self.theta_nodes[-1]
            x = (np.clip(th, lo, hi) - lo) / self.theta_step
            i0 = np.clip(np.floor(x).astype(int), 0, n_t - 2)
            w = x - i0
            i1 = i0 + 1
        idx.append((i0, i1))
        wts.append(w)
        for a, ax in enumerate(self.fibre_axes):
            n_a = len(ax)
            x = (np.clip(pts[:, 1 + a], ax[0], ax[-1]) - ax[0]) / (ax[1] - ax[0])
            j0 = np.clip(np.floor(x).astype(int), 0, n_a - 2)
            idx.append((j0, j0 + 1))
            wts.append(x - j0)

        d = 1 + self.n_cu
        flat = self.values.reshape(-1, self.p_s)
        dims = [n_t] + [len(ax) for ax in self.fibre_axes]
        out = np.zeros((pts.shape[0], self.p_s))
        for corner in range(2**d):
            flat_idx = np.zeros(pts.shape[0], dtype=int)
            weight = np.ones(pts.shape[0])
            stride = 1
            for a in range(d - 1, -1, -1):
                bit = (corner >> a) & 1
                ii = idx[a][bit]
                weight = weight * (wts[a] if bit else (1.0 - wts[a]))
                flat_idx += ii * stride
                stride *= dims[a]
            out += weight[:, None] * flat[flat_idx]
        return out

    def grid_lipschitz(self) -> float:
        """Max adjacent-node difference quotient (a lower bound of Lip)."""
        best = 0.0
        vals = self.values
        h_t = self.theta_step
        diff = np.linalg.norm(np.diff(vals, axis=0), axis=-1)
        if diff.size:
            best = max(best, float(diff.max()) / h_t)
        if self.periodic and vals.shape[0] > 1:
            wrap = np.linalg.norm(vals[0] - vals[-1], axis=-1)
            best = max(best, float(wrap.max()) / h_t)
        for a, h_a in enumerate(self.fibre_steps):
            diff = np.linalg.norm(np.diff(vals, axis=1 + a), axis=-1)
            if diff.size:
                best = max(best, float(diff.max()) / h_a)
        return best

    def zero_section_residual(self) -> float:
        """Max |sigma(theta, 0)| over base nodes (fibre axes contain 0)."""
        zero_idx = [int(np.argmin(np.abs(ax))) for ax in self.fibre_axes]
        sl = (slice(None),) + tuple(zero_idx)
        return float(np.linalg.norm(self.values[sl], axis=-1).max())

    def copy_with(self, values: np.ndarray) -> "Section":
        return replace(self, values=values)

    def grid_gradient(self) -> np.ndarray:
        """Central-difference gradient, shape grid + (p_s, d)."""
        vals = self.values
        d = 1 + self.n_cu
        grads = np.empty(vals.shape + (d,))
        if self.periodic:
            grads[..., 0] = (np.roll(vals, -1, axis=0) - np.roll(vals, 1, axis=0)) / (
                2.0 * self.theta_step
            )
        else:
            grads[..., 0] = np.gradient(vals, self.theta_step, axis=0)
        for a, h_a in enumerate(self.fibre_steps):
            grads[..., 1 + a] = np.gradient(vals, h_a, axis=1 + a)
        return grads

    def to_dict(self) -> dict:
        return {
            "r": self.r,
            "ranks": list(self.ranks),
            "axes": [[float(x) for x in self.theta_nodes]]
            + [[float(x) for x in ax] for ax in self.fibre_axes],
            "values": [float(x) for x in self.values.ravel()],
            "lipschitz_estimate": self.grid_lipschitz(),
            "residual": None,
        }


def _radial_clamp(uc: np.ndarray, radius: float) -> np.ndarray:
    norms = np.linalg.norm(uc, axis=-1, keepdims=True)
    scale = np.where(norms > radius, radius / np.maximum(norms, 1e-300), 1.0)
    return uc * scale


def _section_axes(model: ManifoldModel, cfg: TransformConfig):
    n_t = int(cfg.grid_base)
    theta = model.base_grid(n_t)
    m = int(cfg.grid_fibre)
    if m % 2 == 0:
        m += 1
        log.info("fibre resolution bumped to %d so the zero fibre is a grid node", m)
    n_cu = model.ranks[0] + model.ranks[1]
    fibre_axes = [np.linspace(-4.0 * cfg.r, 4.0 * cfg.r, m) for _ in range(n_cu)]
    return theta, fibre_axes


def make_zero_section(model: ManifoldModel, cfg: TransformConfig) -> Section:
    theta, fibre_axes = _section_axes(model, cfg)
    shape = (len(theta),) + tuple(len(ax) for ax in fibre_axes) + (model.ranks[2],)
    return Section(model=model, r=cfg.r, theta_nodes=theta, fibre_axes=fibre_axes, values=np.zeros(shape))


def random_admissible_section(
    model: ManifoldModel, cfg: TransformConfig, rng: np.random.Generator, amplitude: float = 0.1
) -> Section:
    """Smooth random section in the admissible cone (vanishes at the zero fibre)."""
    sec = make_zero_section(model, cfg)
    pts = sec.node_points()
    th, uc = pts[:, 0], pts[:, 1:]
    q = np.sum(uc**2, axis=1) / (4.0 * cfg.r) ** 2
    vals = np.zeros((len(pts), sec.p_s))
    for k in range(sec.p_s):
        a, b, phase = rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(0, 2 * np.pi)
        mode = int(rng.integers(1, 3))
        vals[:, k] = q * (a + b * np.sin(mode * th + phase))
    sec = sec.copy_with(vals.reshape(sec.values.shape))
    sup = float(np.abs(sec.values).max())
    if sup > 0:
        sec.values *= amplitude / sup
    lip = sec.grid_lipschitz()
    if lip > 0.9:
        sec.values *= 0.9 / lip
    return sec


def evaluate_section(section: Section, point) -> np.ndarray:
    """Interpolated value at a single E_cu point (base, u, c)."""
    return section.evaluate(np.asarray(point, dtype=float)[None, :])[0]


def section_sup_distance(a: Section, b: Section) -> float:
    return float(np.abs(a.values - b.values).max())


# inversion of the overflowing base map -------------------------------------------


def _h_sigma(ext: ExtendedMap, section: Section, y: np.ndarray):
    """f^r_cu through the section graph at stacked cu points y (B, 1+n_cu)."""
    theta = y[:, 0]
    if ext.model.has_boundary:
        theta = ext.model.clamp_base(theta)
    uc = y[:, 1:]
    s = section.evaluate(np.column_stack([theta, uc]))
    v = np.concatenate([uc, s], axis=1)
    th_img, w_img = ext.eval_batch(theta, v)
    return np.column_stack([th_img, w_img[:, : section.n_cu]])


def _cu_residual(model: ManifoldModel, h_val: np.ndarray, target: np.ndarray) -> np.ndarray:
    res = h_val - target
    if not model.has_boundary:
        res[:, 0] = (res[:, 0] + np.pi) % (2.0 * np.pi) - np.pi
    return res


def invert_cu(
    ext: ExtendedMap,
    section: Section,
    targets: np.ndarray,
    cfg: TransformConfig,
) -> np.ndarray:
    """Solve f^r_cu(graph(sigma))(y) = target for each target, batched.

    Damped Newton with finite-difference Jacobians and Armijo backtracking;
    nodes that stall fall back to the quasi-Newton iteration preconditioned
    by the zero-fibre cu linearization.
    """
    model = ext.model
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    B, d = targets.shape
    n_cu = section.n_cu

    # initial guess: base at the target, fibre through the inverse linearization
    df = ext.fibre_linearization(targets[:, 0])
    df_cu = df[:, :n_cu, :n_cu]
    y = targets.copy()
    y[:, 1:] = np.linalg.solve(df_cu, targets[:, 1:][..., None])[..., 0]
    y = _project_domain(model, section, y)

    res = _cu_residual(model, _h_sigma(ext, section, y), targets)
    res_norm = np.linalg.norm(res, axis=1)
    active = res_norm > cfg.newton_tol

    for _ in range(cfg.newton_max_iter):
        if not np.any(active):
            break
        ya = y[active]
        ra = res[active]
        Ja = _fd_jacobian_h(ext, section, ya, cfg)
        try:
            step = np.linalg.solve(Ja, ra[..., None])[..., 0]
        except np.linalg.LinAlgError:
            step = np.einsum("bij,bj->bi", np.linalg.pinv(Ja), ra)
        alpha = np.ones(len(ya))
        cur = np.linalg.norm(ra, axis=1)
        trial = _project_domain(model, section, ya - alpha[:, None] * step)
        for _halve in range(20):
            r_t = _cu_residual(model, _h_sigma(ext, section, trial), targets[active])
            n_t = np.linalg.norm(r_t, axis=1)
            bad = n_t > (1.0 - 1e-4 * alpha) * cur
            if not np.any(bad):
                break
            alpha[bad] *= 0.5
            trial[bad] = _project_domain(model, section, ya[bad] - alpha[bad][:, None] * step[bad])
        y[active] = trial
        res[active] = r_t
        res_norm[active] = n_t
        active = res_norm > cfg.newton_tol

    if np.any(active):
        y, res_norm, active = _quasi_newton_fallback(ext, section, targets, y, res_norm, active, cfg)
    if np.any(active):
        i = int(np.argmax(res_norm * active))
        raise NewtonDiverged(
            f"cu inversion stalled at node {i} with residual {res_norm[i]:.3e} "
            "(radius too large or block bounds violated)",
            node_index=i,
            residual=float(res_norm[i]),
        )
    return y


def _project_domain(model: ManifoldModel, section: Section, y: np.ndarray) -> np.ndarray:
    """Keep iterates in E_cu(4r): clamp arc base, radially clamp the fibre part."""
    out = y.copy()
    if model.has_boundary:
        out[:, 0] = model.clamp_base(out[:, 0])
    out[:, 1:] = _radial_clamp(out[:, 1:], 4.0 * section.r)
    return out


def _fd_jacobian_h(ext, section, y, cfg):
    B, d = y.shape
    h = 1e-6 * np.maximum(1.0, np.linalg.norm(y, axis=1))
    stacked = np.repeat(y[None, :, :], 2 * d, axis=0)
    for j in range(d):
        stacked[2 * j, :, j] += h
        stacked[2 * j + 1, :, j] -= h
    flat = stacked.reshape(-1, d)
    h_flat = _h_sigma(ext, section, flat).reshape(2 * d, B, d)
    J = np.empty((B, d, d))
    for j in range(d):
        diff = h_flat[2 * j] - h_flat[2 * j + 1]
        if not ext.model.has_boundary:
            diff[:, 0] = (diff[:, 0] + np.pi) % (2.0 * np.pi) - np.pi
        J[:, :, j] = diff / (2.0 * h)[:, None]
    return J


def _quasi_newton_fallback(ext, section, targets, y, res_norm, active, cfg):
    model = ext.model
    n_cu = section.n_cu
    for _ in range(4 * cfg.newton_max_iter):
        if not np.any(active):
            break
        ya = y[active]
        df = ext.fibre_linearization(ya[:, 0])
        A11 = np.zeros((len(ya), 1 + n_cu, 1 + n_cu))
        A11[:, 0, 0] = 1.0
        A11[:, 1:, 1:] = df[:, :n_cu, :n_cu]
        r = _cu_residual(model, _h_sigma(ext, section, ya), targets[active])
        step = np.linalg.solve(A11, r[..., None])[..., 0]
        ya = _project_domain(model, section, ya - step)
        y[active] = ya
        r_new = _cu_residual(model, _h_sigma(ext, section, ya), targets[active])
        res_norm[active] = np.linalg.norm(r_new, axis=1)
        active = res_norm > cfg.newton_tol
    return y, res_norm, active


# the transform -------------------------------------------------------------------


def apply_graph_transform(
    ext: ExtendedMap, section: Section, cfg: TransformConfig
) -> tuple[Section, dict]:
    """One sweep: new node values are f^r_s(graph(sigma)(invert_cu(node)))."""
    targets = section.node_points()
    y = invert_cu(ext, section, targets, cfg)
    theta = ext.model.clamp_base(y[:, 0]) if ext.model.has_boundary else y[:, 0]
    uc = y[:, 1:]
    s = section.evaluate(np.column_stack([theta, uc]))
    _, w_img = ext.eval_batch(theta, np.concatenate([uc, s], axis=1))
    new_vals = w_img[:, section.n_cu :].reshape(section.values.shape)
    out = section.copy_with(new_vals)
    info = {"projected": False, "lipschitz": out.grid_lipschitz()}
    if info["lipschitz"] > 1.0:
        out.values = out.values / info["lipschitz"]
        info["projected"] = True
        log.info("lipschitz projection triggered (estimate %.6f)", info["lipschitz"])
    return out, info


def contraction_ratio(ext: ExtendedMap, s1: Section, s2: Section, cfg: TransformConfig) -> float:
    dist = section_sup_distance(s1, s2)
    if dist == 0.0:
        raise IdenticalSections("sections coincide on the grid")
    t1, _ = apply_graph_transform(ext, s1, cfg)
    t2, _ = apply_graph_transform(ext, s2, cfg)
    return section_sup_distance(t1, t2) / dist


@dataclass
class SolveDiagnostics:
    residuals: list = field(default_factory=list)
    lip_d0: list = field(default_factory=list)
    sup_d1: list = field(default_factory=list)
    lip_d1: list = field(default_factory=list)
    projections: int = 0
    sweeps: int = 0
    converged: bool = False

    def rows(self):
        for i in range(len(self.residuals)):
            yield {
                "sweep": i + 1,
                "residual": self.residuals[i],
                "lip_d0": self.lip_d0[i],
                "sup_d1": self.sup_d1[i],
                "lip_d1": self.lip_d1[i],
            }


def _derivative_estimates(section: Section) -> tuple[float, float]:
    """(sup |D sigma|_op, grid Lip of D sigma) from central differences."""
    grads = section.grid_gradient()
    mats = grads.reshape(-1, section.p_s, 1 + section.n_cu)
    sup_d1 = float(np.linalg.norm(mats, ord=2, axis=(1, 2)).max())
    lip = 0.0
    g = grads
    steps = [section.theta_step] + section.fibre_steps
    for a, h_a in enumerate(steps):
        diff = np.diff(g, axis=a)
        if diff.size:
            mats = diff.reshape(-1, section.p_s, 1 + section.n_cu)
            lip = max(lip, float(np.linalg.norm(mats, ord=2, axis=(1, 2)).max()) / h_a)
    return sup_d1, lip


def solve_fixed_section(
    ext: ExtendedMap,
    cfg: TransformConfig,
    sigma0: Optional[Section] = None,
    track_derivatives: bool = True,
) -> tuple[Section, SolveDiagnostics]:
    """Picard iteration of the transform from sigma0 (default: zero section)."""
    sec = sigma0 if sigma0 is not None else make_zero_section(ext.model, cfg)
    diag = SolveDiagnostics()
    for sweep in range(1, cfg.max_sweeps + 1):
        new, info = apply_graph_transform(ext, sec, cfg)
        residual = section_sup_distance(new, sec)
        diag.residuals.append(residual)
        diag.lip_d0.append(info["lipschitz"] if not info["projected"] else 1.0)
        if track_derivatives:
            sup_d1, lip_d1 = _derivative_estimates(new)
        else:
            sup_d1, lip_d1 = np.nan, np.nan
        diag.sup_d1.append(sup_d1)
        diag.lip_d1.append(lip_d1)
        diag.projections += int(info["projected"])
        diag.sweeps = sweep
        sec = new
        if residual <= cfg.fixed_point_tol:
            diag.converged = True
            return sec, diag
    raise MaxSweepsExceeded(
        f"no convergence in {cfg.max_sweeps} sweeps (last residual {diag.residuals[-1]:.3e})",
        residuals=diag.residuals,
    )


@dataclass
class DerivativeDiagnostics:
    """Per-sweep derivative estimates and the fitted recursion constants."""

    sup_d1: list
    lip_d1: list
    bounds: dict
    slope: float
    intercept: float
    rho: float
    d1_bounded: bool
    tail_bounded: bool

    def to_dict(self) -> dict:
        return {
            "sup_d1": self.sup_d1,
            "lip_d1": self.lip_d1,
            "bounds": self.bounds,
            "slope": self.slope,
            "intercept": self.intercept,
            "rho": self.rho,
            "d1_bounded": self.d1_bounded,
            "tail_bounded": self.tail_bounded,
        }


def derivative_bound_trace(
    diag: SolveDiagnostics, cfg: TransformConfig, d1_slack: float = 0.05
) -> DerivativeDiagnostics:
    """Fit the Lip(D sigma) recursion from the solve history.

    The affine fit Lip(D sigma_{n+1}) = a Lip(D sigma_n) + b over the
    pre-asymptotic sweeps estimates the recursion constants; the implied
    bound is b2 = b / (1 - rho) with rho = (kappa+2e)(1+e)^2/(1-2e)^3.
    """
    if not diag.lip_d1 or any(np.isnan(x) for x in diag.lip_d1):
        raise HistoryMissing("derivative history was not tracked during the solve")
    rho = cfg.regularity_rate(2)
    xs = np.asarray(diag.lip_d1[:-1])
    ys = np.asarray(diag.lip_d1[1:])
    moving = np.abs(ys - xs) > max(10.0 * cfg.fixed_point_tol, 1e-12)
    if moving.sum() >= 3:
        A = np.column_stack([xs[moving], np.ones(moving.sum())])
        coef, *_ = np.linalg.lstsq(A, ys[moving], rcond=None)
        slope, intercept = float(coef[0]), float(coef[1])
    else:
        slope, intercept = 0.0, float(diag.lip_d1[-1])
    b2 = intercept / (1.0 - rho) if rho < 1.0 else np.inf
    tail = diag.lip_d1[max(0, len(diag.lip_d1) - 5) :]
    d1_bounded = all(x <= 1.0 + d1_slack for x in diag.sup_d1)
    tail_bounded = all(x <= max(b2 * 1.05 + 1e-9, 1e-9) for x in tail)
    return DerivativeDiagnostics(
        sup_d1=list(diag.sup_d1),
        lip_d1=list(diag.lip_d1),
        bounds={"b1": 1.0, "b2": b2},
        slope=slope,
        intercept=intercept,
        rho=rho,
        d1_bounded=d1_bounded,
        tail_bounded=tail_bounded,
    )


# verification operations -----------------------------------------------------------


def tangency_check(section: Section, h: float) -> float:
    """Max over base nodes of the fibre-direction derivative norm at fibre 0.

    Central differences, plus half the forward/backward gap so one-sided
    kinks at the zero section (inadmissible cone-like sections) are flagged
    instead of cancelling out.
    """
    max_step = max(section.fibre_steps)
    if h < 2.0 * max_step:
        raise StepTooSmall(f"step {h} below twice the grid spacing {max_step}")
    th = section.theta_nodes
    n_cu = section.n_cu
    zero = section.evaluate(np.column_stack([th, np.zeros((len(th), n_cu))]))
    cols = []
    gaps = []
    for j in range(n_cu):
        e = np.zeros(n_cu)
        e[j] = h
        plus = np.column_stack([th] + [np.full(len(th), e[a]) for a in range(n_cu)])
        minus = np.column_stack([th] + [np.full(len(th), -e[a]) for a in range(n_cu)])
        vp = section.evaluate(plus)
        vm = section.evaluate(minus)
        cols.append((vp - vm) / (2.0 * h))
        gaps.append(((vp - zero) - (zero - vm)) / (2.0 * h))
    central = np.stack(cols, axis=-1)  # (n_theta, p_s, n_cu)
    onesided = np.stack(gaps, axis=-1)
    val = np.linalg.norm(central, ord=2, axis=(1, 2)).max()
    kink = np.linalg.norm(onesided, ord=2, axis=(1, 2)).max()
    return float(max(val, kink))


def reconstruct_manifold(section: Section, model: ManifoldModel) -> dict:
    """Ambient point cloud of the section graph over E_cu(r), with leaf labels."""
    pts = section.node_points()
    keep = np.linalg.norm(pts[:, 1:], axis=1) <= section.r * (1.0 + 1e-12)
    pts = pts[keep]
    s = section.evaluate(pts)
    fibres = np.concatenate([pts[:, 1:], s], axis=1)
    cloud = embed_many(model, pts[:, 0], fibres)
    return {"points": cloud, "base": pts[:, 0], "leaf": pts[:, 1:], "s": s}


def _retract_batch(model: ManifoldModel, Q: np.ndarray):
    theta = np.arctan2(Q[:, 1], Q[:, 0]) % (2.0 * np.pi)
    if model.has_boundary:
        theta = model.clamp_base(theta)
    p0 = model.point_of(theta)
    frames = model.frame_of(theta)
    delta = Q - p0
    fibre = np.einsum("bij,bi->bj", frames, delta)
    return theta, fibre


def invariance_residual(
    section: Section,
    inner_map: BundleMap,
    model: ManifoldModel,
    n_samples: int = 200,
    seed: int = 0,
) -> float:
    """sup over samples of the distance from f(graph point) to the graph.

    Samples live over E_cu(r/2) so their images stay inside the cloud's
    coverage; each image is pushed to ambient space, retracted, and compared
    against the interpolated section.
    """
    rng = np.random.default_rng(seed)
    n_cu = section.n_cu
    theta = model.base_grid(max(8, n_samples // 8))
    theta = rng.choice(theta, size=n_samples, replace=True)
    dirs = rng.standard_normal((n_samples, n_cu))
    dirs /= np.maximum(np.linalg.norm(dirs, axis=1, keepdims=True), 1e-12)
    radii = 0.5 * section.r * rng.uniform(0.0, 1.0, n_samples) ** (1.0 / max(n_cu, 1))
    uc = dirs * radii[:, None]
    s = section.evaluate(np.column_stack([theta, uc]))
    fibres = np.concatenate([uc, s], axis=1)

    th_img, w_img = inner_map.eval_batch(theta, fibres)
    if float(np.linalg.norm(w_img, axis=1).max()) >= model.reach:
        raise SampleEscaped("image left the reach tube; shrink the sample region")
    if float(np.linalg.norm(w_img[:, :n_cu], axis=1).max()) > section.r * (1.0 + 1e-9):
        raise SampleEscaped("image left E_cu(r) coverage; shrink the sample region")

    ambient = embed_many(model, th_img, w_img)
    th_r, fib_r = _retract_batch(model, ambient)
    s_pred = section.evaluate(np.column_stack([th_r, fib_r[:, :n_cu]]))
    return float(np.linalg.norm(fib_r[:, n_cu:] - s_pred, axis=1).max())
