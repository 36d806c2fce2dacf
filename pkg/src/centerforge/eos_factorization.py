"""Gradient descent on 2x2 matrix factorisation and its lifted fixed-point manifold.

The loss is 0.5 |Y - W2 W1|_F^2.  Along the minimiser manifold the Hessian
equals Dg^T Dg, whose nonzero spectrum is that of the Kronecker sum
W2 W2^T (x) I + I (x) W1^T W1 with top eigenvalue |W2|_2^2 + |W1|_2^2.
Lifting a minimiser by eta = 2 / lambda_1 yields a fixed point of the
step-size-augmented map whose Jacobian has eigenvalue -1 exactly along the
top curvature direction; scanning eta around that value exhibits the
bifurcation out of convergence.

The bad set consists of minimisers where one factor is a scalar multiple of
an orthogonal matrix (coincident singular values), where lambda_1 loses
smoothness and the splitting degenerates.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "EosError",
    "NotOnMinimiserManifold",
    "DegenerateLambda",
    "SingularChartMatrix",
    "OnBadSet",
    "NotFixedPoint",
    "BadBasePoint",
    "FactorizationProblem",
    "LiftedState",
    "loss",
    "grad",
    "grad_step",
    "gauss_newton_operator",
    "lambda1",
    "minimiser_chart",
    "lift_to_T",
    "bad_set_gap",
    "BadSetGap",
    "dg_matrix",
    "hessian_at_minimiser",
    "lifted_jacobian",
    "top_eigendirection",
    "SpectralSplitReport",
    "splitting_at",
    "ScanRow",
    "classify_tail",
    "bifurcation_scan",
    "scalar_gd_class",
    "find_transition",
]

log = logging.getLogger("centerforge.eos")


class EosError(Exception):
    pass


class NotOnMinimiserManifold(EosError):
    pass


class DegenerateLambda(EosError):
    pass


class SingularChartMatrix(EosError):
    pass


class OnBadSet(EosError):
    pass


class NotFixedPoint(EosError):
    pass


class BadBasePoint(EosError):
    pass


@dataclass(frozen=True)
class FactorizationProblem:
    """Target matrix with its singular value decomposition cached."""

    Y: np.ndarray
    U: np.ndarray = field(init=False)
    S: np.ndarray = field(init=False)
    Vt: np.ndarray = field(init=False)
    regular: bool = field(init=False)

    def __post_init__(self):
        Y = np.asarray(self.Y, dtype=float)
        if Y.shape != (2, 2):
            raise EosError(f"Y must be 2x2, got {Y.shape}")
        object.__setattr__(self, "Y", Y)
        U, S, Vt = np.linalg.svd(Y)
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "Vt", Vt)
        object.__setattr__(self, "regular", bool(S[0] > S[1] > 0.0))


@dataclass(frozen=True)
class LiftedState:
    """(W1, W2, eta) with eta the gradient step size."""

    W1: np.ndarray
    W2: np.ndarray
    eta: float

    def __post_init__(self):
        for name in ("W1", "W2"):
            M = np.asarray(getattr(self, name), dtype=float)
            if M.shape != (2, 2):
                raise EosError(f"{name} must be 2x2")
            if not np.all(np.isfinite(M)):
                raise EosError(f"{name} has non-finite entries")
            object.__setattr__(self, name, M)
        if not (np.isfinite(self.eta) and self.eta >= 0.0):
            raise EosError(f"eta must be a finite non-negative scalar, got {self.eta}")

    def flat(self) -> np.ndarray:
        return np.concatenate([self.W1.ravel(), self.W2.ravel(), [self.eta]])

    @staticmethod
    def from_flat(z: np.ndarray) -> "LiftedState":
        z = np.asarray(z, dtype=float)
        return LiftedState(z[:4].reshape(2, 2), z[4:8].reshape(2, 2), float(z[8]))


def loss(problem: FactorizationProblem, W1: np.ndarray, W2: np.ndarray) -> float:
    E = W2 @ W1 - problem.Y
    return 0.5 * float(np.sum(E * E))


def grad(problem: FactorizationProblem, W1, W2):
    E = W2 @ W1 - problem.Y
    return W2.T @ E, E @ W1.T


def grad_step(problem: FactorizationProblem, state: LiftedState) -> LiftedState:
    """One gradient-descent step of the lifted map; eta is carried along."""
    g1, g2 = grad(problem, state.W1, state.W2)
    return LiftedState(state.W1 - state.eta * g1, state.W2 - state.eta * g2, state.eta)


def gauss_newton_operator(W1: np.ndarray, W2: np.ndarray) -> np.ndarray:
    """Dg Dg^T as a 4x4 matrix in row-major vectorisation: W2 W2^T (x) I + I (x) W1^T W1."""
    I2 = np.eye(2)
    return np.kron(W2 @ W2.T, I2) + np.kron(I2, W1.T @ W1)


def lambda1(W1: np.ndarray, W2: np.ndarray) -> float:
    """Top curvature |W2|_2^2 + |W1|_2^2 (largest eigenvalue of Dg Dg^T)."""
    s1 = np.linalg.svd(np.asarray(W1, dtype=float), compute_uv=False)[0]
    s2 = np.linalg.svd(np.asarray(W2, dtype=float), compute_uv=False)[0]
    return float(s1 * s1 + s2 * s2)


def minimiser_chart(problem: FactorizationProblem, A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Chart of the minimiser manifold: A -> (A, Y A^-1)."""
    A = np.asarray(A, dtype=float)
    if abs(np.linalg.det(A)) <= 1e-10:
        raise SingularChartMatrix(f"|det A| = {abs(np.linalg.det(A)):.3e} <= 1e-10")
    return A.copy(), problem.Y @ np.linalg.inv(A)


def lift_to_T(problem: FactorizationProblem, W1: np.ndarray, W2: np.ndarray) -> LiftedState:
    """Lift a minimiser to the fixed-point manifold with eta = 2 / lambda_1."""
    if loss(problem, W1, W2) > 1e-10:
        raise NotOnMinimiserManifold(f"loss = {loss(problem, W1, W2):.3e} > 1e-10")
    lam = lambda1(W1, W2)
    if lam <= 1e-12:
        raise DegenerateLambda("lambda_1 vanishes")
    return LiftedState(np.asarray(W1, dtype=float), np.asarray(W2, dtype=float), 2.0 / lam)


@dataclass(frozen=True)
class BadSetGap:
    g1: float
    g2: float
    is_member: bool


def bad_set_gap(W1: np.ndarray, W2: np.ndarray, tol: float = 1e-10) -> BadSetGap:
    """Singular-value gaps of the factors; membership when either gap closes."""
    s1 = np.linalg.svd(np.asarray(W1, dtype=float), compute_uv=False)
    s2 = np.linalg.svd(np.asarray(W2, dtype=float), compute_uv=False)
    g1 = float(s1[0] - s1[1])
    g2 = float(s2[0] - s2[1])
    return BadSetGap(g1=g1, g2=g2, is_member=bool(min(g1, g2) <= tol))


def dg_matrix(W1: np.ndarray, W2: np.ndarray) -> np.ndarray:
    """Dg as a 4x8 matrix on (vec W1, vec W2), row-major vectorisation."""
    I2 = np.eye(2)
    return np.concatenate([np.kron(W2, I2), np.kron(I2, W1.T)], axis=1)


def hessian_at_minimiser(W1: np.ndarray, W2: np.ndarray) -> np.ndarray:
    """Dg^T Dg, the 8x8 loss Hessian at a zero-residual point."""
    D = dg_matrix(W1, W2)
    return D.T @ D


def lifted_jacobian(problem: FactorizationProblem, state: LiftedState, fd_check: bool = True) -> np.ndarray:
    """9x9 Jacobian of the lifted map at a lifted fixed point.

    Analytic block structure diag(I - eta * hessian, 1); cross-checked
    against central finite differences when fd_check is set.
    """
    if loss(problem, state.W1, state.W2) > 1e-10:
        raise NotFixedPoint("state is not on the minimiser manifold")
    H = hessian_at_minimiser(state.W1, state.W2)
    J = np.zeros((9, 9))
    J[:8, :8] = np.eye(8) - state.eta * H
    J[8, 8] = 1.0
    if fd_check:
        J_fd = _lifted_jacobian_fd(problem, state)
        err = float(np.abs(J - J_fd).max())
        if err > 1e-5:
            raise NotFixedPoint(f"analytic and FD lifted Jacobians disagree by {err:.2e}")
    return J


def _lifted_map_flat(problem: FactorizationProblem, z: np.ndarray) -> np.ndarray:
    st = grad_step(problem, LiftedState.from_flat(z))
    return st.flat()


def _lifted_jacobian_fd(problem: FactorizationProblem, state: LiftedState, h: float = 1e-6) -> np.ndarray:
    z = state.flat()
    J = np.empty((9, 9))
    for j in range(9):
        zp, zm = z.copy(), z.copy()
        zp[j] += h
        zm[j] -= h
        J[:, j] = (_lifted_map_flat(problem, zp) - _lifted_map_flat(problem, zm)) / (2.0 * h)
    return J


def top_eigendirection(W1: np.ndarray, W2: np.ndarray) -> np.ndarray:
    """Unit top-curvature direction in (vec W1, vec W2) coordinates."""
    G = gauss_newton_operator(W1, W2)
    w, V = np.linalg.eigh(G)
    u_top = V[:, -1]
    v = dg_matrix(W1, W2).T @ u_top
    n = np.linalg.norm(v)
    if n <= 1e-12:
        raise DegenerateLambda("top eigendirection degenerate")
    return v / n


@dataclass
class SpectralSplitReport:
    """Spectral data at a lifted fixed point off the bad set."""

    gn_eigenvalues: np.ndarray
    lambda_1: float
    gaps: BadSetGap
    jacobian_eigenvalues: np.ndarray
    mult_plus_one: int
    mult_minus_one: int
    e_s_eigenvalues: np.ndarray
    e_c_eigenvalues: np.ndarray
    tangent_basis: np.ndarray
    normal_basis: np.ndarray
    normal_asymmetry: float
    spectral_gap_to_bad_set: float

    def to_dict(self) -> dict:
        return {
            "gn_eigenvalues": [float(x) for x in self.gn_eigenvalues],
            "lambda_1": self.lambda_1,
            "gaps": {"g1": self.gaps.g1, "g2": self.gaps.g2, "is_member": self.gaps.is_member},
            "jacobian_eigenvalues": [float(x) for x in self.jacobian_eigenvalues],
            "mult_plus_one": self.mult_plus_one,
            "mult_minus_one": self.mult_minus_one,
            "e_s_eigenvalues": [float(x) for x in self.e_s_eigenvalues],
            "e_c_eigenvalues": [float(x) for x in self.e_c_eigenvalues],
            "normal_asymmetry": self.normal_asymmetry,
            "spectral_gap_to_bad_set": self.spectral_gap_to_bad_set,
        }


def _chart_tangent_basis(problem: FactorizationProblem, state: LiftedState, h: float = 1e-6) -> np.ndarray:
    """Tangent vectors of the lifted manifold from the chart and the graph slope.

    Columns are d/dA_ij of (A, Y A^-1, 2/lambda_1) lifted through the chart,
    with the eta slope taken by central differences of lambda_1.
    """
    A = state.W1
    Ainv = np.linalg.inv(A)
    cols = []
    for i in range(2):
        for j in range(2):
            E = np.zeros((2, 2))
            E[i, j] = 1.0
            dW1 = E
            dW2 = -problem.Y @ Ainv @ E @ Ainv
            lam_p = lambda1(A + h * E, problem.Y @ np.linalg.inv(A + h * E))
            lam_m = lambda1(A - h * E, problem.Y @ np.linalg.inv(A - h * E))
            dlam = (lam_p - lam_m) / (2.0 * h)
            deta = -2.0 * dlam / lambda1(state.W1, state.W2) ** 2
            cols.append(np.concatenate([dW1.ravel(), dW2.ravel(), [deta]]))
    return np.stack(cols, axis=1)


def splitting_at(problem: FactorizationProblem, state: LiftedState, tol: float = 1e-8) -> SpectralSplitReport:
    """Eigen-split the normal complement of the lifted manifold at a fixed point."""
    gaps = bad_set_gap(state.W1, state.W2)
    if gaps.is_member:
        raise OnBadSet(f"point lies on the bad set (gaps {gaps.g1:.2e}, {gaps.g2:.2e})")
    res = grad_step(problem, state).flat() - state.flat()
    if float(np.abs(res).max()) > 1e-10:
        raise NotFixedPoint(f"grad_step residual {np.abs(res).max():.3e}")

    J = lifted_jacobian(problem, state)
    eig_full = np.sort(np.linalg.eigvalsh((J + J.T) / 2.0))
    mult_plus = int(np.sum(np.abs(eig_full - 1.0) <= tol))
    mult_minus = int(np.sum(np.abs(eig_full + 1.0) <= tol))

    T_basis = _chart_tangent_basis(problem, state)
    Q, _ = np.linalg.qr(T_basis)
    # orthogonal complement via full QR of the tangent basis
    full_q, _ = np.linalg.qr(np.concatenate([Q, np.eye(9)], axis=1))
    N_basis = full_q[:, 4:9]
    Jn = N_basis.T @ J @ N_basis
    asym = float(np.abs(Jn - Jn.T).max())
    w, V = np.linalg.eigh((Jn + Jn.T) / 2.0)
    is_c = np.abs(np.abs(w) - 1.0) <= 10.0 * max(tol, asym)
    e_c = np.sort(w[is_c])
    e_s = np.sort(w[~is_c])

    G = gauss_newton_operator(state.W1, state.W2)
    gn = np.sort(np.linalg.eigvalsh(G))
    return SpectralSplitReport(
        gn_eigenvalues=gn,
        lambda_1=lambda1(state.W1, state.W2),
        gaps=gaps,
        jacobian_eigenvalues=eig_full,
        mult_plus_one=mult_plus,
        mult_minus_one=mult_minus,
        e_s_eigenvalues=e_s,
        e_c_eigenvalues=e_c,
        tangent_basis=Q,
        normal_basis=N_basis,
        normal_asymmetry=asym,
        spectral_gap_to_bad_set=float(min(gaps.g1, gaps.g2)),
    )


# bifurcation scanning -----------------------------------------------------------


@dataclass
class ScanRow:
    eta: float
    label: str
    amplitude: float
    lambda_1: float
    eta_critical: float


def classify_tail(
    xi: np.ndarray,
    dist: np.ndarray,
    escaped: bool,
    converge_tol: float = 1e-8,
    cycle_tol: float = 1e-6,
) -> tuple[str, float]:
    """Classify a trajectory tail from its top-direction coordinate and distance.

    Returns (label, asymptotic amplitude).  Labels: CONVERGED, PERIOD2,
    PERIODIC_K (3 <= k <= 8), ESCAPED, IRREGULAR.
    """
    if escaped:
        return "ESCAPED", float("inf")
    amp = 0.5 * float(xi.max() - xi.min())
    if float(dist[-min(len(dist), 10) :].max()) <= converge_tol:
        return "CONVERGED", amp
    scale = max(float(np.abs(xi).max()), 1e-300)
    for k in range(2, 9):
        if len(xi) <= k:
            break
        res = float(np.abs(xi[k:] - xi[:-k]).max()) / scale
        if res <= cycle_tol:
            if k == 2:
                return "PERIOD2", amp
            return f"PERIODIC_{k}", amp
    return "IRREGULAR", amp


def _run_trajectory(problem, W1, W2, eta, v_top, delta, n_steps, burn_in, escape_norm=1e6):
    z1 = W1 + delta * v_top[:4].reshape(2, 2)
    z2 = W2 + delta * v_top[4:].reshape(2, 2)
    base = np.concatenate([W1.ravel(), W2.ravel()])
    xi_tail = []
    dist_tail = []
    for t in range(n_steps):
        E = z2 @ z1 - problem.Y
        g1 = z2.T @ E
        g2 = E @ z1.T
        z1 = z1 - eta * g1
        z2 = z2 - eta * g2
        norm = float(np.sqrt(np.sum(z1 * z1) + np.sum(z2 * z2)))
        if not np.isfinite(norm) or norm > escape_norm:
            return None, None, True, None, None
        if t >= burn_in:
            z = np.concatenate([z1.ravel(), z2.ravel()])
            xi_tail.append(float((z - base) @ v_top))
            dist_tail.append(float(np.linalg.norm(z2 @ z1 - problem.Y)))
    return np.asarray(xi_tail), np.asarray(dist_tail), False, z1, z2


def bifurcation_scan(
    problem: FactorizationProblem,
    base: tuple[np.ndarray, np.ndarray],
    eta_values: np.ndarray,
    delta: float = 1e-3,
    n_steps: int = 2000,
    burn_in: int = 1500,
    threads: int = 1,
) -> list[ScanRow]:
    """Classify the attractor reached from a perturbed minimiser at each eta."""
    W1, W2 = np.asarray(base[0], dtype=float), np.asarray(base[1], dtype=float)
    if loss(problem, W1, W2) > 1e-10:
        raise BadBasePoint("base point is not on the minimiser manifold")
    if bad_set_gap(W1, W2).is_member:
        raise BadBasePoint("base point lies on the bad set")
    if delta > 1e-2:
        raise BadBasePoint(f"perturbation delta = {delta} exceeds 1e-2")
    eta_values = np.asarray(eta_values, dtype=float)
    if np.any(eta_values <= 0.0):
        raise BadBasePoint("eta grid must be positive")
    if burn_in >= n_steps:
        raise BadBasePoint("burn_in must be smaller than the step count")
    lam = lambda1(W1, W2)
    v_top = top_eigendirection(W1, W2)

    def row(eta: float) -> ScanRow:
        xi, dist, escaped, _, _ = _run_trajectory(problem, W1, W2, eta, v_top, delta, n_steps, burn_in)
        label, amp = classify_tail(xi if xi is not None else np.zeros(1), dist if dist is not None else np.zeros(1), escaped)
        return ScanRow(eta=float(eta), label=label, amplitude=amp, lambda_1=lam, eta_critical=2.0 / lam)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(row, eta_values))
    else:
        rows = [row(float(e)) for e in eta_values]
    return rows


def scalar_gd_class(
    eta: float, x0: float = 1e-3, n_steps: int = 4000, burn_in: int = 3600
) -> tuple[str, float]:
    """The 1-d analogue loss x^2/2 run through the same tail classifier."""
    x = float(x0)
    xi = []
    for t in range(n_steps):
        x = (1.0 - eta) * x
        if not np.isfinite(x) or abs(x) > 1e6:
            return classify_tail(np.zeros(1), np.zeros(1), True)
        if t >= burn_in:
            xi.append(x)
    xi = np.asarray(xi)
    return classify_tail(xi, np.abs(xi), False)


def find_transition(
    problem: FactorizationProblem,
    base: tuple[np.ndarray, np.ndarray],
    eta_lo: float,
    eta_hi: float,
    n_bisect: int = 24,
    delta: float = 1e-3,
    n_steps: int = 2000,
    burn_in: int = 1500,
) -> float:
    """Bisection on the smallest eta at which the base fixed point loses stability.

    A trajectory counts as converged when its tail reaches the minimiser
    manifold AND retains the base sharpness: settling at a flatter minimiser
    (lambda_1 dropping below lambda_1(base)) means the starting fixed point
    has become unstable even though the manifold is reached again.
    """
    W1, W2 = base
    lam = lambda1(W1, W2)
    v_top = top_eigendirection(W1, W2)

    def converged(eta: float) -> bool:
        xi, dist, escaped, z1, z2 = _run_trajectory(problem, W1, W2, eta, v_top, delta, n_steps, burn_in)
        if escaped:
            return False
        label, _ = classify_tail(xi, dist, False)
        if label != "CONVERGED":
            return False
        return lambda1(z1, z2) >= lam * (1.0 - 1e-4)

    lo, hi = float(eta_lo), float(eta_hi)
    if not converged(lo):
        raise BadBasePoint(f"eta_lo = {lo} is already unstable")
    if converged(hi):
        raise BadBasePoint(f"eta_hi = {hi} still converges")
    for _ in range(n_bisect):
        mid = 0.5 * (lo + hi)
        if converged(mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
