import numpy as np
import pytest

from centerforge.benchmarks import make_shear_benchmark, quadratic_shear
from centerforge.eos_factorization import FactorizationProblem
from centerforge.graph_transform import TransformConfig, solve_fixed_section
from centerforge.manifold_models import make_arc_model
from centerforge.map_extension import (
    CallableBundleMap,
    extend_map,
    find_bound_certified_radius,
    find_safe_radius,
)
from centerforge.surgery import (
    CollarTooDeep,
    EmptySamples,
    FrameNotSplitRespecting,
    PartitionGap,
    PatchedMap,
    blend_local,
    build_collar,
    compact_exclusion_radius,
    factorisation_badset_samples,
    factorisation_subarc_samples,
    make_mixed_sign_control,
    make_surgery_benchmark,
    patch_partition,
    verify_surgery,
)


@pytest.fixture(scope="module")
def bundle():
    return make_surgery_benchmark()


@pytest.fixture(scope="module")
def problem():
    return FactorizationProblem(np.diag([2.0, 1.0]))


def test_exclusion_radius_positive_for_subarc(problem):
    sub = factorisation_subarc_samples(problem)
    bad = factorisation_badset_samples(problem)
    r = compact_exclusion_radius(sub, bad)
    assert r > 0.05


def test_exclusion_radius_zero_on_contact(problem):
    bad = factorisation_badset_samples(problem, n_a=5, n_q=8)
    assert compact_exclusion_radius(bad[:3], bad) == 0.0
    with pytest.raises(EmptySamples):
        compact_exclusion_radius(np.zeros((0, 9)), bad)


def test_distance_function_is_one_lipschitz(problem):
    # |delta(x) - delta(y)| <= d(x, y) for the sampled bad-set distance
    bad = factorisation_badset_samples(problem, n_a=9, n_q=12)
    sub = factorisation_subarc_samples(problem, n=25)
    delta = np.sqrt(((sub[:, None, :] - bad[None, :, :]) ** 2).sum(axis=2)).min(axis=1)
    for i in range(len(sub)):
        for j in range(i + 1, len(sub)):
            assert abs(delta[i] - delta[j]) <= np.linalg.norm(sub[i] - sub[j]) + 1e-12


def test_build_collar_extents():
    arc = make_arc_model((np.pi / 4, 3 * np.pi / 4), ranks=(1, 1, 1))
    collar = build_collar(arc, 0.1)
    lo, hi = collar.model_Sdp.theta_range
    assert np.isclose(lo, np.pi / 4 - 0.2) and np.isclose(hi, 3 * np.pi / 4 + 0.2)
    assert np.isclose(collar.model_Sp.theta_range[0], np.pi / 4 - 0.1)
    # psi(x, 0) sits on the S' boundary; unit speed along the collar
    assert np.isclose(collar.psi(0, 0.0), collar.boundary_Sp[0])
    assert np.isclose(collar.psi(1, 0.0), collar.boundary_Sp[1])
    ts = np.linspace(-0.1, 0.1, 21)
    for side in (0, 1):
        speed = np.abs(np.diff(collar.psi(side, ts)) / np.diff(ts))
        assert np.abs(speed - 1.0).max() < 1e-10
    assert np.isclose(collar.psi(0, collar.R), np.pi / 4)
    with pytest.raises(CollarTooDeep):
        build_collar(arc, 1.0)


def test_blend_local_branches(bundle):
    collar, f = bundle.collar, bundle.f_raw
    r = collar.r
    blend = blend_local(f, collar, r, side=0)
    rng = np.random.default_rng(0)
    p = collar.model_Sdp.p

    # outside the support the blend equals the map exactly
    th_far = np.full(16, collar.boundary_Sp[0] + 3 * r)
    w = rng.standard_normal((16, p)) * 0.3 * r
    a = blend.eval_batch(th_far, w)
    b = f.eval_batch(th_far, w)
    assert np.abs(a[0] - b[0]).max() == 0.0 and np.abs(a[1] - b[1]).max() == 0.0
    w_big = rng.standard_normal((16, p))
    w_big *= 1.5 * r / np.linalg.norm(w_big, axis=1, keepdims=True)
    th_near = np.full(16, collar.boundary_Sp[0] + 0.1 * r)
    a = blend.eval_batch(th_near, w_big)
    b = f.eval_batch(th_near, w_big)
    assert np.abs(a[0] - b[0]).max() == 0.0

    # deep inside the support the base components are frozen
    w_small = rng.standard_normal((16, p))
    w_small *= 0.4 * r / np.linalg.norm(w_small, axis=1, keepdims=True)
    th_in = np.full(16, collar.boundary_Sp[0] + 0.3 * r)
    th_b, _ = blend.eval_batch(th_in, w_small)
    assert np.abs(th_b - th_in).max() <= 1e-14

    # fibres over the boundary stay over the boundary
    th_bdry = np.full(16, collar.boundary_Sp[0])
    th_b, _ = blend.eval_batch(th_bdry, w_small)
    assert np.abs(th_b - th_bdry).max() == 0.0


def test_blend_local_frame_check(bundle):
    collar, f = bundle.collar, bundle.f_raw
    p = collar.model_Sdp.p
    nu = collar.model_Sdp.ranks[0]
    mixing = np.eye(p)
    ang = 0.6
    i, j = nu, nu + 1  # rotate inside the signed c block
    mixing[i, i] = mixing[j, j] = np.cos(ang)
    mixing[i, j] = -np.sin(ang)
    mixing[j, i] = np.sin(ang)
    with pytest.raises(FrameNotSplitRespecting):
        blend_local(f, collar, collar.r, side=0, frame=mixing)
    blend_local(f, collar, collar.r, side=0, frame=mixing, enforce_split=False)


def test_patch_partition_properties(bundle):
    collar, f = bundle.collar, bundle.f_raw
    blends = [blend_local(f, collar, collar.r, side=s) for s in (0, 1)]
    patched = patch_partition(f, blends)
    model = collar.model_Sdp
    rng = np.random.default_rng(1)
    lo, hi = model.theta_range
    thetas = rng.uniform(lo, hi, 1000)
    weights = np.stack([rho(thetas) for rho in patched.rhos], axis=0).sum(axis=0)
    on_tube = patched.tube_mask(thetas, np.zeros((1000, model.p)))
    assert np.abs(weights[on_tube] - 1.0).max() <= 1e-12

    # single chart: the patch equals that blend on its tube
    single = patch_partition(f, [blends[0]], rhos=[lambda th: np.ones(np.shape(th))])
    th = np.full(8, collar.boundary_Sp[0] + 0.2 * collar.r)
    w = rng.standard_normal((8, model.p)) * 0.2 * collar.r
    a = single.eval_batch(th, w)
    b = blends[0].eval_batch(th, w)
    assert np.abs(a[0] - b[0]).max() == 0.0 and np.abs(a[1] - b[1]).max() == 0.0

    # outside the tube the patch is the raw map, bit-exact
    th_out = np.full(8, 0.5 * (lo + hi))
    a = patched.eval_batch(th_out, w)
    b = f.eval_batch(th_out, w)
    assert np.abs(a[0] - b[0]).max() == 0.0 and np.abs(a[1] - b[1]).max() == 0.0

    bad = PatchedMap(f, blends, [lambda th: 0.3 * np.ones(np.shape(th))] * 2, model)
    with pytest.raises(PartitionGap):
        bad.eval_batch(th, w)


def test_verify_surgery_trivial_blend():
    # a map already satisfying the boundary hypothesis blends trivially
    bundle0 = make_surgery_benchmark(drift_coeff=0.0)
    rep = verify_surgery(bundle0.f_prime, bundle0.f_raw, bundle0.collar, bundle0.collar.r, kappa=0.5)
    assert rep.passed
    assert rep.items["boundary_fibres"]["worst"] <= 1e-12
    assert rep.items["exact_off_tube"]["worst"] == 0.0


def test_verify_surgery_full_pipeline(bundle):
    rep = verify_surgery(bundle.f_prime, bundle.f_raw, bundle.collar, bundle.collar.r, kappa=0.5)
    assert rep.passed


def test_mixed_sign_control_fails_only_spectral(bundle):
    ctrl, raw = make_mixed_sign_control(bundle.collar)
    rep = verify_surgery(ctrl, raw, bundle.collar, bundle.collar.r, kappa=0.5)
    assert not rep.items["spectral_bounds"]["pass"]
    for name, item in rep.items.items():
        if name != "spectral_bounds":
            assert item["pass"], name
    spectra = rep.items["spectral_bounds"]["spectra"]
    # the centre eigenvalues cancelled strictly inside the unit circle
    assert spectra["c+"]["min"] < 1.0 - 1e-3
    assert spectra["c-"]["max"] > -1.0 + 1e-3


def test_end_to_end_surgery_enables_solve(bundle):
    collar = bundle.collar
    fp = CallableBundleMap(
        collar.model_Sp, bundle.f_prime.eval_batch, fibre_linear=bundle.f_prime.fibre_linearization
    )
    raw = CallableBundleMap(collar.model_Sp, bundle.f_raw.eval_batch)
    sr_raw = find_safe_radius(raw, collar.model_Sp)
    sr = find_safe_radius(fp, collar.model_Sp)
    # the raw map only certifies a microscopic radius; surgery restores a usable one
    assert sr.r0 >= 100.0 * sr_raw.r0
    r, rep = find_bound_certified_radius(fp, collar.model_Sp, 0.05, 0.5, sr.r_max, n_base=8, n_fibre=13)
    assert rep.passed
    cfg = TransformConfig(r=r, epsilon=0.05, kappa=0.5, grid_base=9, grid_fibre=9)
    sec, diag = solve_fixed_section(extend_map(fp, collar.model_Sp, r, sr.r_max), cfg)
    assert diag.converged
    pts = sec.node_points()
    keep = np.linalg.norm(pts[:, 1:], axis=1) <= r
    nu = collar.model_Sp.ranks[0]
    oracle = bundle.psi(pts[keep][:, 0], pts[keep][:, 1 : 1 + nu], pts[keep][:, 1 + nu :])
    assert np.abs(sec.evaluate(pts[keep]) - oracle).max() <= 1e-5
