"""Acceptance suite: every exit criterion at its stated tolerance.

Run with `pytest tests/test_acceptance.py -v -s` to see one line per
criterion.  The oracle benchmark is the conjugated block map with
lambda_u = 2, lambda_s = 0.5 and psi = 0.1 (u^2 + c^2); its invariant
section over the (u, c) directions is psi wherever the cutoff is inactive.
"""

import json
import time

import numpy as np
import pytest

from centerforge.benchmarks import make_shear_benchmark
from centerforge.cli import main as cli_main
from centerforge.eos_factorization import (
    FactorizationProblem,
    bad_set_gap,
    find_transition,
    gauss_newton_operator,
    lambda1,
    lift_to_T,
    minimiser_chart,
    scalar_gd_class,
    splitting_at,
)
from centerforge.graph_transform import (
    TransformConfig,
    contraction_ratio,
    invariance_residual,
    random_admissible_section,
    solve_fixed_section,
    tangency_check,
)
from centerforge.manifold_models import make_circle_model
from centerforge.map_extension import (
    block_jacobian,
    c1_distance_to_linearization,
    extend_map,
    find_bound_certified_radius,
    find_safe_radius,
    verify_global_bounds,
)
from centerforge.nonsmooth import lambda1_lipschitz_probe, lip_vs_clarke_check, sample_jacobians
from centerforge.surgery import make_mixed_sign_control, make_surgery_benchmark, verify_surgery

EPS, KAPPA = 0.05, 0.5
RATE = (KAPPA + 2 * EPS) / (1 - 2 * EPS)


def report(criterion: str, ok: bool, detail: str):
    print(f"ACCEPTANCE {criterion}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"{criterion}: {detail}"


@pytest.fixture(scope="module")
def pipeline():
    """The benchmark solved at 33 nodes/axis with a bound-certified radius."""
    model = make_circle_model(ranks=(1, 1, 1))
    model, bench, psi = make_shear_benchmark(model)
    sr = find_safe_radius(bench, model)
    r, bounds = find_bound_certified_radius(bench, model, EPS, KAPPA, sr.r_max)
    cfg = TransformConfig(r=r, epsilon=EPS, kappa=KAPPA, grid_base=33, grid_fibre=33)
    ext = extend_map(bench, model, r, sr.r_max)
    t0 = time.time()
    section, diag = solve_fixed_section(ext, cfg)
    wall = time.time() - t0
    pts = section.node_points()
    keep = np.linalg.norm(pts[:, 1:], axis=1) <= r
    oracle = bench.invariant_section(pts[keep][:, 0], pts[keep][:, 1:])
    err = float(np.abs(section.evaluate(pts[keep]) - oracle).max())
    return {
        "model": model,
        "bench": bench,
        "psi": psi,
        "sr": sr,
        "r": r,
        "bounds": bounds,
        "cfg": cfg,
        "ext": ext,
        "section": section,
        "diag": diag,
        "wall": wall,
        "oracle_err": err,
    }


def test_criterion_01_oracle_recovery(pipeline):
    err, wall = pipeline["oracle_err"], pipeline["wall"]
    model, bench = pipeline["model"], pipeline["bench"]
    cfg2 = TransformConfig(r=pipeline["r"], epsilon=EPS, kappa=KAPPA, grid_base=65, grid_fibre=65)
    sec2, _ = solve_fixed_section(pipeline["ext"], cfg2)
    pts = sec2.node_points()
    keep = np.linalg.norm(pts[:, 1:], axis=1) <= pipeline["r"]
    oracle = bench.invariant_section(pts[keep][:, 0], pts[keep][:, 1:])
    err2 = float(np.abs(sec2.evaluate(pts[keep]) - oracle).max())
    ok = err <= 5e-3 and err / err2 >= 3.0 and wall <= 60.0
    report("1 oracle recovery", ok, f"err={err:.3e}, refine ratio={err / err2:.2f}, wall={wall:.1f}s")


def test_criterion_02_contraction_bound(pipeline):
    rng = np.random.default_rng(2024)
    model, ext, cfg = pipeline["model"], pipeline["ext"], pipeline["cfg"]
    small = TransformConfig(r=cfg.r, epsilon=EPS, kappa=KAPPA, grid_base=13, grid_fibre=13)
    ratios = []
    for _ in range(20):
        s1 = random_admissible_section(model, small, rng, amplitude=0.3 * cfg.r)
        s2 = random_admissible_section(model, small, rng, amplitude=0.3 * cfg.r)
        ratios.append(contraction_ratio(ext, s1, s2, small))
    worst = max(ratios)
    report("2 contraction bound", worst <= RATE + 0.02, f"worst ratio {worst:.4f} vs {RATE + 0.02:.4f}")


def test_criterion_03_tangency(pipeline):
    sec = pipeline["section"]
    h = 2.0 * max(sec.fibre_steps)
    val = tangency_check(sec, h)
    report("3 tangency", val <= 10.0 * h, f"|D sigma(x,0)| = {val:.3e} vs 10h = {10 * h:.3e}")


def test_criterion_04_invariance(pipeline):
    sec, bench, model = pipeline["section"], pipeline["bench"], pipeline["model"]
    res = invariance_residual(sec, bench, model, n_samples=300, seed=5)
    bound = 5.0 * pipeline["oracle_err"]
    rng = np.random.default_rng(6)
    bump = 0.02 * (1.0 + 0.5 * np.sin(3.0 * sec.theta_nodes + rng.uniform(0, 2 * np.pi)))
    control = sec.copy_with(sec.values + bump[:, None, None, None])
    res_bad = invariance_residual(control, bench, model, n_samples=300, seed=5)
    ok = res <= bound and res_bad >= 100.0 * res
    report("4 invariance", ok, f"residual {res:.3e} <= {bound:.3e}, control x{res_bad / max(res, 1e-300):.0f}")


def test_criterion_05_block_bounds(pipeline):
    bounds = pipeline["bounds"]
    bj = block_jacobian(pipeline["ext"], 0.37, np.zeros(3))
    off = max(bj.a12_norm, bj.a21_norm)
    ok = bounds.passed and off <= 1e-8
    report("5 block bounds", ok, f"worst margin {bounds.worst['margin']:.3e}, fibre-0 off-diag {off:.2e}")


def test_criterion_06_c1_continuity(pipeline):
    model, bench, sr = pipeline["model"], pipeline["bench"], pipeline["sr"]
    r = sr.r_max
    c0a, c1a = c1_distance_to_linearization(extend_map(bench, model, r), n_base=8, n_fibre=9)
    c0b, c1b = c1_distance_to_linearization(extend_map(bench, model, r / 2), n_base=8, n_fibre=9)
    ok = c0a / c0b >= 3.0 and c1a / c1b >= 1.8
    report("6 C1 continuity at r=0", ok, f"C0 ratio {c0a / c0b:.2f}, C1 ratio {c1a / c1b:.2f}")


def test_criterion_07_eos_spectrum():
    eig = np.sort(np.linalg.eigvalsh(gauss_newton_operator(np.diag([1.0, 2.0]), np.diag([2.0, 0.5]))))[::-1]
    frozen = np.array([8.0, 5.0, 4.25, 1.25])
    worst_fixed = float(np.abs(eig - frozen).max())
    rng = np.random.default_rng(7)
    worst_rand = 0.0
    for _ in range(1000):
        W1, W2 = rng.standard_normal((2, 2, 2))
        top = np.linalg.eigvalsh(gauss_newton_operator(W1, W2))[-1]
        worst_rand = max(worst_rand, abs(lambda1(W1, W2) - top))
    ok = worst_fixed <= 1e-12 and worst_rand <= 1e-12
    report("7 EOS spectrum", ok, f"frozen dev {worst_fixed:.2e}, lambda1 dev {worst_rand:.2e} over 1000")


def test_criterion_08_lifted_spectrum():
    problem = FactorizationProblem(np.diag([2.0, 1.0]))
    W1, W2 = minimiser_chart(problem, np.diag([1.0, 2.0]))
    rep = splitting_at(problem, lift_to_T(problem, W1, W2), tol=1e-8)
    es_dev = float(np.abs(rep.e_s_eigenvalues - np.array([-0.25, -0.0625, 0.6875])).max())
    ok = rep.mult_plus_one == 5 and rep.mult_minus_one == 1 and es_dev <= 1e-8
    report("8 lifted spectrum", ok, f"mults (+1,-1)=({rep.mult_plus_one},{rep.mult_minus_one}), E_s dev {es_dev:.2e}")


def test_criterion_09_bifurcation_threshold():
    etas = np.linspace(1.5, 2.5, 41)
    labels = [scalar_gd_class(float(e))[0] for e in etas]
    flips = [i for i in range(1, len(labels)) if labels[i] != labels[i - 1]]
    step = etas[1] - etas[0]
    scalar_ok = all(abs(etas[i] - 2.0) <= step + 1e-12 for i in flips) and flips

    problem = FactorizationProblem(np.diag([2.0, 1.0]))
    W1, W2 = minimiser_chart(problem, np.diag([1.0, 2.0]))
    eta_star = find_transition(problem, (W1, W2), 0.2, 0.3, n_bisect=20)
    matrix_ok = abs(eta_star - 0.25) <= 0.02 * 0.25

    t0 = time.time()
    from centerforge.eos_factorization import bifurcation_scan

    bifurcation_scan(problem, (W1, W2), np.linspace(0.05, 0.6, 64), n_steps=2000, burn_in=1500)
    wall = time.time() - t0
    ok = bool(scalar_ok) and matrix_ok and wall <= 120.0
    report("9 bifurcation threshold", ok, f"scalar flip at 2 +- {step:.3f}, matrix {eta_star:.4f}, 64-eta scan {wall:.1f}s")


def test_criterion_10_bad_set():
    problem = FactorizationProblem(np.diag([2.0, 1.0]))
    g = bad_set_gap(np.eye(2), problem.Y)
    membership_ok = g.is_member and g.g1 == 0.0
    rep = lambda1_lipschitz_probe(problem, n=2001)
    resolution = 0.5 / 2000
    kink_ok = rep.kink_location is not None and abs(rep.kink_location) <= 2 * resolution
    lip_ok = np.isfinite(rep.lip_bound) and rep.slope_jump > 1.0
    ok = membership_ok and kink_ok and lip_ok
    report("10 bad set", ok, f"(I,Y) gap {g.g1}, kink at {rep.kink_location}, slope jump {rep.slope_jump:.2f}")


def test_criterion_11_surgery():
    bundle = make_surgery_benchmark()
    rep = verify_surgery(bundle.f_prime, bundle.f_raw, bundle.collar, bundle.collar.r, KAPPA)
    bit_exact = rep.items["exact_off_tube"]["worst"] == 0.0
    ctrl, raw = make_mixed_sign_control(bundle.collar)
    ctrl_rep = verify_surgery(ctrl, raw, bundle.collar, bundle.collar.r, KAPPA)
    control_ok = not ctrl_rep.items["spectral_bounds"]["pass"] and all(
        v["pass"] for k, v in ctrl_rep.items.items() if k != "spectral_bounds"
    )
    ok = rep.passed and bit_exact and control_ok
    report("11 surgery", ok, f"five properties pass={rep.passed}, off-tube bit-exact={bit_exact}, control fails item 5={control_ok}")


def test_criterion_12_clarke_suite():
    ss = sample_jacobians(lambda x: abs(x[0]), [0.0], 0.1, count=128, seed=3)
    d = ss.jacobians.ravel()
    hull_ok = d.min() < -0.999 and d.max() > 0.999 and abs(ss.sigma_max_estimate - 1.0) <= 1e-6
    res = lip_vs_clarke_check(lambda x: x[0] * abs(x[0]), ([-1.0], [1.0]), n_samples=10_000, seed=4)
    ok = hull_ok and res.gap <= 1e-3
    report("12 Clarke suite", ok, f"|x| hull [{d.min():.4f},{d.max():.4f}], x|x| gap {res.gap:.2e}")


def test_criterion_13_determinism(tmp_path):
    solve_cfg = {
        "problem": "shear",
        "geometry": {"kind": "circle", "ranks": [1, 1, 1]},
        "benchmark": {"lambda_u": 2.0, "lambda_s": 0.5, "psi_coeff": 0.1},
        "epsilon": EPS,
        "kappa": KAPPA,
        "transform": {"grid_base": 9, "grid_fibre": 9},
        "seed": 42,
    }
    scan_cfg = {
        "Y": [[2.0, 0.0], [0.0, 1.0]],
        "chart_A": [[1.0, 0.0], [0.0, 2.0]],
        "eta_min": 0.05,
        "eta_max": 0.6,
        "eta_steps": 16,
        "delta": 1e-3,
        "N": 1000,
        "burn_in": 800,
        "seed": 42,
    }
    (tmp_path / "solve.json").write_text(json.dumps(solve_cfg))
    (tmp_path / "scan.json").write_text(json.dumps(scan_cfg))
    outputs = {}
    for tag in ("a", "b"):
        so, sc = tmp_path / f"solve_{tag}", tmp_path / f"scan_{tag}"
        assert cli_main(["solve", "--config", str(tmp_path / "solve.json"), "--out", str(so)]) == 0
        assert cli_main(["eos-scan", "--config", str(tmp_path / "scan.json"), "--out", str(sc)]) == 0
        outputs[tag] = (
            (so / "section.json").read_bytes(),
            (so / "diagnostics.csv").read_bytes(),
            (sc / "scan.csv").read_bytes(),
        )
    ok = outputs["a"] == outputs["b"]
    report("13 determinism", ok, "solve + eos-scan outputs byte-identical across reruns")
