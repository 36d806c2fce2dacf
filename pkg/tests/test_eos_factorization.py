import numpy as np
import pytest

from centerforge.eos_factorization import (
    BadBasePoint,
    BadSetGap,
    DegenerateLambda,
    FactorizationProblem,
    LiftedState,
    NotFixedPoint,
    NotOnMinimiserManifold,
    OnBadSet,
    SingularChartMatrix,
    bad_set_gap,
    bifurcation_scan,
    classify_tail,
    dg_matrix,
    find_transition,
    gauss_newton_operator,
    grad,
    grad_step,
    hessian_at_minimiser,
    lambda1,
    lift_to_T,
    lifted_jacobian,
    minimiser_chart,
    scalar_gd_class,
    splitting_at,
    top_eigendirection,
)


@pytest.fixture(scope="module")
def problem():
    return FactorizationProblem(np.diag([2.0, 1.0]))


@pytest.fixture(scope="module")
def lifted(problem):
    W1, W2 = minimiser_chart(problem, np.diag([1.0, 2.0]))
    return lift_to_T(problem, W1, W2)


def test_problem_svd(problem):
    assert problem.regular
    assert np.allclose(problem.U @ np.diag(problem.S) @ problem.Vt, problem.Y, atol=1e-12)
    assert problem.S[0] > problem.S[1] > 0


def test_loss_values(problem):
    from centerforge.eos_factorization import loss

    W1, W2 = minimiser_chart(problem, np.eye(2))
    assert loss(problem, W1, W2) == 0.0
    assert loss(problem, np.zeros((2, 2)), np.zeros((2, 2))) == 2.5
    rng = np.random.default_rng(0)
    for _ in range(20):
        A, B = rng.standard_normal((2, 2, 2))
        brute = 0.5 * sum((problem.Y[i, j] - (B @ A)[i, j]) ** 2 for i in range(2) for j in range(2))
        assert abs(loss(problem, A, B) - brute) < 1e-14


def test_grad_step_fixes_minimiser(problem):
    W1, W2 = minimiser_chart(problem, np.diag([1.0, 2.0]))
    for eta in (0.0, 0.1, 0.7):
        st = LiftedState(W1, W2, eta)
        out = grad_step(problem, st)
        assert np.abs(out.flat() - st.flat()).max() == 0.0


def test_grad_matches_finite_differences(problem):
    from centerforge.eos_factorization import loss

    rng = np.random.default_rng(1)
    h = 1e-6
    for _ in range(100):
        W1, W2 = rng.standard_normal((2, 2, 2))
        g1, g2 = grad(problem, W1, W2)
        g_fd = np.zeros(8)
        z = np.concatenate([W1.ravel(), W2.ravel()])
        for j in range(8):
            zp, zm = z.copy(), z.copy()
            zp[j] += h
            zm[j] -= h
            g_fd[j] = (
                loss(problem, zp[:4].reshape(2, 2), zp[4:].reshape(2, 2))
                - loss(problem, zm[:4].reshape(2, 2), zm[4:].reshape(2, 2))
            ) / (2 * h)
        g = np.concatenate([g1.ravel(), g2.ravel()])
        denom = max(np.abs(g).max(), 1.0)
        assert np.abs(g - g_fd).max() / denom < 1e-6


def test_gauss_newton_spectrum_frozen():
    W1, W2 = np.diag([1.0, 2.0]), np.diag([2.0, 0.5])
    eig = np.sort(np.linalg.eigvalsh(gauss_newton_operator(W1, W2)))[::-1]
    assert np.abs(eig - np.array([8.0, 5.0, 4.25, 1.25])).max() <= 1e-12
    assert np.abs(gauss_newton_operator(np.zeros((2, 2)), np.zeros((2, 2)))).max() == 0.0


def test_gauss_newton_pairwise_sums():
    rng = np.random.default_rng(2)
    for _ in range(50):
        W1, W2 = rng.standard_normal((2, 2, 2))
        eig = np.sort(np.linalg.eigvalsh(gauss_newton_operator(W1, W2)))
        a2 = np.linalg.eigvalsh(W2 @ W2.T)
        a1 = np.linalg.eigvalsh(W1.T @ W1)
        sums = np.sort((a2[:, None] + a1[None, :]).ravel())
        assert np.abs(eig - sums).max() <= 1e-12


def test_gauss_newton_eigenvectors():
    rng = np.random.default_rng(8)
    W1, W2 = rng.standard_normal((2, 2, 2))
    G = gauss_newton_operator(W1, W2)
    a2, V2 = np.linalg.eigh(W2 @ W2.T)
    a1, V1 = np.linalg.eigh(W1.T @ W1)
    for i in range(2):
        for j in range(2):
            vec = np.kron(V2[:, i], V1[:, j])
            assert np.abs(G @ vec - (a2[i] + a1[j]) * vec).max() < 1e-12


def test_lambda1(problem):
    assert abs(lambda1(np.diag([1.0, 2.0]), np.diag([2.0, 0.5])) - 8.0) <= 1e-12
    assert lambda1(np.zeros((2, 2)), np.zeros((2, 2))) == 0.0
    assert abs(lambda1(np.eye(2), np.diag([2.0, 1.0])) - 5.0) <= 1e-12
    rng = np.random.default_rng(3)
    for _ in range(1000):
        W1, W2 = rng.standard_normal((2, 2, 2))
        top = np.linalg.eigvalsh(gauss_newton_operator(W1, W2))[-1]
        assert abs(lambda1(W1, W2) - top) <= 1e-12


def test_minimiser_chart(problem):
    W1, W2 = minimiser_chart(problem, np.eye(2))
    assert np.allclose(W1, np.eye(2)) and np.allclose(W2, problem.Y)
    W1, W2 = minimiser_chart(problem, np.diag([1.0, 2.0]))
    assert np.allclose(W2, np.diag([2.0, 0.5]), atol=1e-14)
    from centerforge.eos_factorization import loss

    assert loss(problem, W1, W2) <= 1e-24
    with pytest.raises(SingularChartMatrix):
        minimiser_chart(problem, np.array([[1.0, 1.0], [1.0, 1.0]]))


def test_lift_to_T(problem):
    st = lift_to_T(problem, np.eye(2), problem.Y)
    assert abs(st.eta - 0.4) <= 1e-14
    W1, W2 = minimiser_chart(problem, np.diag([1.0, 2.0]))
    st = lift_to_T(problem, W1, W2)
    assert abs(st.eta - 0.25) <= 1e-14
    assert np.abs(grad_step(problem, st).flat() - st.flat()).max() <= 1e-12
    with pytest.raises(NotOnMinimiserManifold):
        lift_to_T(problem, np.eye(2), np.eye(2))
    degenerate = FactorizationProblem(np.zeros((2, 2)))
    with pytest.raises(DegenerateLambda):
        lift_to_T(degenerate, np.zeros((2, 2)), np.zeros((2, 2)))


def test_bad_set_gap(problem):
    g = bad_set_gap(np.eye(2), problem.Y)
    assert g.g1 == 0.0 and g.is_member
    g = bad_set_gap(np.diag([1.0, 2.0]), np.diag([2.0, 0.5]))
    assert abs(g.g1 - 1.0) < 1e-12 and abs(g.g2 - 1.5) < 1e-12 and not g.is_member
    rot = np.array([[np.cos(0.7), -np.sin(0.7)], [np.sin(0.7), np.cos(0.7)]])
    assert bad_set_gap(2.0 * rot, np.eye(2)).is_member


def test_lifted_jacobian_fd_crosscheck(problem, lifted):
    J = lifted_jacobian(problem, lifted, fd_check=True)
    H = hessian_at_minimiser(lifted.W1, lifted.W2)
    assert np.abs(J[:8, :8] - (np.eye(8) - lifted.eta * H)).max() == 0.0
    assert J[8, 8] == 1.0
    with pytest.raises(NotFixedPoint):
        lifted_jacobian(problem, LiftedState(np.eye(2), np.eye(2), 0.1))


def test_splitting_frozen_spectrum(problem, lifted):
    rep = splitting_at(problem, lifted)
    assert rep.mult_plus_one == 5
    assert rep.mult_minus_one == 1
    assert np.abs(rep.e_s_eigenvalues - np.array([-0.25, -0.0625, 0.6875])).max() <= 1e-8
    assert np.all(np.abs(rep.e_s_eigenvalues) < 1.0)
    assert np.abs(np.sort(np.abs(rep.e_c_eigenvalues)) - 1.0).max() <= 1e-8
    assert abs(rep.spectral_gap_to_bad_set - min(rep.gaps.g1, rep.gaps.g2)) == 0.0
    assert np.abs(rep.gn_eigenvalues - np.array([1.25, 4.25, 5.0, 8.0])).max() <= 1e-12


def test_splitting_rejects_bad_set(problem):
    st = lift_to_T(problem, np.eye(2), problem.Y)
    with pytest.raises(OnBadSet):
        splitting_at(problem, st)


def test_random_charts_are_fixed_points(problem):
    rng = np.random.default_rng(5)
    count_checked = 0
    for _ in range(100):
        A = rng.standard_normal((2, 2))
        if abs(np.linalg.det(A)) < 1e-3:
            continue
        W1, W2 = minimiser_chart(problem, A)
        st = lift_to_T(problem, W1, W2)
        assert np.abs(grad_step(problem, st).flat() - st.flat()).max() <= 1e-12
        g = bad_set_gap(W1, W2)
        if not g.is_member and min(g.g1, g.g2) > 1e-3:
            rep = splitting_at(problem, st, tol=1e-8)
            assert rep.mult_plus_one == 5 and rep.mult_minus_one == 1
            count_checked += 1
    assert count_checked > 50


def test_top_eigendirection_is_eigenvector(problem, lifted):
    v = top_eigendirection(lifted.W1, lifted.W2)
    H = hessian_at_minimiser(lifted.W1, lifted.W2)
    lam = lambda1(lifted.W1, lifted.W2)
    assert np.abs(H @ v - lam * v).max() < 1e-10


def test_scalar_classifier_threshold():
    etas = np.linspace(1.5, 2.5, 41)
    labels = [scalar_gd_class(float(e))[0] for e in etas]
    flips = [i for i in range(1, len(labels)) if labels[i] != labels[i - 1]]
    # single transition zone centred at eta = 2 within one grid step
    assert labels[0] == "CONVERGED" and labels[-1] == "ESCAPED"
    assert all(abs(etas[i] - 2.0) <= (etas[1] - etas[0]) + 1e-12 for i in flips)


def test_classify_tail_periodic_k():
    xi = np.tile([0.1, -0.2, 0.05], 40)
    label, _ = classify_tail(xi, np.full(xi.shape, 1.0), False)
    assert label == "PERIODIC_3"
    label, amp = classify_tail(np.zeros(30), np.full(30, 1e-12), False)
    assert label == "CONVERGED"


def test_scan_subcritical_converges(problem, lifted):
    rows = bifurcation_scan(
        problem,
        (lifted.W1, lifted.W2),
        np.array([0.5 * lifted.eta]),
        n_steps=800,
        burn_in=600,
    )
    assert rows[0].label == "CONVERGED"
    assert rows[0].eta_critical == lifted.eta


def test_scan_rejects_bad_base(problem):
    with pytest.raises(BadBasePoint):
        bifurcation_scan(problem, (np.eye(2), np.eye(2)), np.array([0.1]))
    with pytest.raises(BadBasePoint):
        bifurcation_scan(problem, (np.eye(2), problem.Y), np.array([0.1]))


def test_transition_bisection(problem, lifted):
    eta_star = find_transition(problem, (lifted.W1, lifted.W2), 0.2, 0.3, n_bisect=18)
    assert abs(eta_star - 0.25) <= 0.02 * 0.25


def test_lambda1_lipschitz_but_kinked_crossing(problem):
    # difference quotients along a bad-set crossing stay bounded while the
    # one-sided slopes jump; cross-validated against the nonsmooth probe
    from centerforge.nonsmooth import lambda1_lipschitz_probe

    rep = lambda1_lipschitz_probe(problem)
    assert np.isfinite(rep.lip_bound)
    assert rep.kink_location is not None and abs(rep.kink_location) <= 5e-4
    assert rep.slope_jump > 1.0
