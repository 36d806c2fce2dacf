import numpy as np
import pytest

from centerforge.benchmarks import (
    ShearBlocks,
    ShearViolation,
    SpectralViolation,
    make_shear_benchmark,
)
from centerforge.manifold_models import (
    BundlePoint,
    DegenerateArc,
    FibreOutOfReach,
    InvalidRanks,
    OutsideReach,
    embed,
    make_arc_model,
    make_circle_model,
    retract,
    transport,
    verify_reach,
)


def test_embed_zero_fibre_is_base_point(circle_model):
    for th in (0.0, 1.3, 4.0):
        p = BundlePoint(base=th, fibre=np.zeros(3), ranks=circle_model.ranks)
        assert np.allclose(embed(circle_model, p), circle_model.point_of(np.asarray(th)))


def test_embed_z_normal_matches_coordinates():
    # S^1 in R^3 with a single flat normal direction along z
    model = make_circle_model(ranks=(0, 0, 1))
    p = BundlePoint(base=0.0, fibre=np.array([0.1]), ranks=(0, 0, 1))
    assert np.allclose(embed(model, p), [1.0, 0.0, 0.1])


def test_embed_retract_round_trip(circle_model):
    rng = np.random.default_rng(11)
    for _ in range(50):
        v = rng.standard_normal(3)
        v *= rng.uniform(0, 0.9) / np.linalg.norm(v)
        p = BundlePoint(base=rng.uniform(0, 2 * np.pi), fibre=v, ranks=circle_model.ranks)
        back = retract(circle_model, embed(circle_model, p))
        assert circle_model.base_distance(back.base, p.base) < 1e-10
        assert np.abs(back.fibre - p.fibre).max() < 1e-10


def test_embed_rejects_fibre_at_reach(circle_model):
    p = BundlePoint(base=0.0, fibre=np.array([1.0, 0.0, 0.0]), ranks=circle_model.ranks)
    with pytest.raises(FibreOutOfReach):
        embed(circle_model, p)


def test_retract_on_base_gives_zero_fibre(circle_model):
    q = circle_model.point_of(np.asarray(0.7))
    p = retract(circle_model, q)
    assert np.abs(p.fibre).max() < 1e-12


def test_retract_axis_point_outside_reach(circle_model):
    # points on the circle axis have non-unique nearest point at distance >= 1
    q = np.zeros(circle_model.ambient_dim)
    q[2] = 0.458  # distance sqrt(1 + 0.458^2) > reach
    with pytest.raises(OutsideReach):
        retract(circle_model, q)


def test_retract_rejects_off_bundle_component(circle_model):
    # radial displacement is not in the working bundle
    q = 1.3 * circle_model.point_of(np.asarray(0.3))
    with pytest.raises(OutsideReach):
        retract(circle_model, q)


def test_transport_identity_at_same_point(circle_model):
    assert np.allclose(transport(circle_model, 0.4, 0.4), np.eye(3))


def test_transport_equivariant_frame_is_identity(circle_model):
    for d in (0.1, -0.3, 1.0):
        assert np.allclose(transport(circle_model, 0.2, 0.2 + d), np.eye(3))


def test_transport_inverse_composition_generic():
    model = make_circle_model(ranks=(1, 1, 1), analytic_transport=False)
    rng = np.random.default_rng(5)
    for _ in range(20):
        x = rng.uniform(0, 2 * np.pi)
        y = x + rng.uniform(-3e-6, 3e-6)
        P = transport(model, x, y)
        Q = transport(model, y, x)
        assert np.abs(Q @ P - np.eye(3)).max() < 1e-10
        assert np.abs(P.T @ P - np.eye(3)).max() < 1e-10


def test_transport_subdivided_composition():
    model = make_circle_model(ranks=(1, 1, 1), analytic_transport=False)
    x, step = 0.3, 0.02
    direct = transport(model, x, x + 4 * step)
    composed = np.eye(3)
    for k in range(4):
        composed = transport(model, x + k * step, x + (k + 1) * step) @ composed
    assert np.abs(composed - direct).max() < 10.0 * step**2


def test_circle_model_ranks_and_frames():
    model = make_circle_model(ranks=(0, 1, 1))
    assert model.ambient_dim == 4
    assert model.p == 2
    thetas = model.base_grid(360)
    frames = model.frame_of(thetas)
    gram = np.einsum("bij,bik->bjk", frames, frames)
    assert np.abs(gram - np.eye(2)).max() < 1e-12
    tang = model.tangent_of(thetas)
    assert np.abs(np.einsum("bij,bi->bj", frames, tang)).max() < 1e-12
    with pytest.raises(InvalidRanks):
        make_circle_model(ranks=(1, -1, 1))
    with pytest.raises(InvalidRanks):
        make_circle_model(ambient_dim=7, ranks=(0, 1, 1))


def test_circle_reach_scan(circle_model):
    bound = verify_reach(circle_model, n_base=120, n_dirs=8, n_radial=10, seed=2)
    assert abs(bound - 1.0) <= 0.12


def test_point_of_injective_on_grid(circle_model):
    thetas = circle_model.base_grid(180)
    pts = circle_model.point_of(thetas)
    d = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=2)
    np.fill_diagonal(d, np.inf)
    assert d.min() > 0.5 * (2 * np.pi / 180)


def test_arc_model_boundary():
    arc = make_arc_model((np.pi / 4, 3 * np.pi / 4), ranks=(1, 1, 1))
    assert arc.boundary_params == (np.pi / 4, 3 * np.pi / 4)
    assert np.isclose(arc.boundary_distance(np.pi / 2), np.pi / 4)
    circle = make_circle_model(ranks=(1, 1, 1))
    th = np.linspace(np.pi / 4, 3 * np.pi / 4, 17)
    assert np.allclose(arc.point_of(th), circle.point_of(th))
    assert np.allclose(arc.frame_of(th), circle.frame_of(th))
    with pytest.raises(DegenerateArc):
        make_arc_model((1.0, 1.0))
    with pytest.raises(DegenerateArc):
        make_arc_model((0.0, 2 * np.pi))


def test_bundle_point_slices():
    p = BundlePoint(base=0.0, fibre=np.arange(6.0), ranks=(1, 2, 3))
    assert np.allclose(p.u, [0.0])
    assert np.allclose(p.c, [1.0, 2.0])
    assert np.allclose(p.s, [3.0, 4.0, 5.0])
    with pytest.raises(InvalidRanks):
        BundlePoint(base=0.0, fibre=np.zeros(4), ranks=(1, 1, 1))


def test_shear_benchmark_fixes_zero_section(shear_bench):
    model, bench, _ = shear_bench
    thetas = model.base_grid(64)
    assert bench.zero_section_residual(thetas).max() <= 1e-14


def test_shear_benchmark_zero_psi_invariant_section(circle_model):
    from centerforge.benchmarks import quadratic_shear

    _, bench, psi = make_shear_benchmark(circle_model, psi=quadratic_shear(0.0, 1))
    th = np.full(8, 0.3)
    uc = np.linspace(-0.2, 0.2, 8).reshape(-1, 1) * np.ones((1, 2))
    assert np.abs(bench.invariant_section(th, uc)).max() == 0.0
    # the zero graph is mapped into itself
    v = np.concatenate([uc, np.zeros((8, 1))], axis=1)
    _, w = bench.eval_batch(th, v)
    assert np.abs(w[:, 2]).max() == 0.0


def test_shear_benchmark_jacobian_blocks(shear_bench):
    model, bench, _ = shear_bench
    J = bench.jacobian(0.8, np.zeros(3))
    # fibre-0 Jacobian is block diagonal with the base block equal to 1
    assert abs(J[0, 0] - 1.0) < 1e-10
    assert np.abs(J[0, 1:]).max() < 1e-10
    assert np.abs(J[1:, 0]).max() < 1e-10
    sv = np.linalg.svd(J[1:, 1:], compute_uv=False)
    assert np.allclose(np.sort(sv), [0.5, 1.0, 2.0], atol=1e-10)


def test_shear_benchmark_precondition_checks(circle_model):
    with pytest.raises(SpectralViolation):
        make_shear_benchmark(circle_model, blocks=ShearBlocks(lambda_u=0.9))
    with pytest.raises(SpectralViolation):
        make_shear_benchmark(circle_model, blocks=ShearBlocks(lambda_s=1.1))

    def bad_psi(theta, u, c):
        out = np.zeros(np.asarray(theta).shape + (1,))
        out[..., 0] = np.sum(u, axis=-1)  # nonzero derivative at the zero fibre
        return out

    with pytest.raises(ShearViolation):
        make_shear_benchmark(circle_model, psi=bad_psi)
