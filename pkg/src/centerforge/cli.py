"""Batch front door: configuration, pipeline orchestration, artifact emission.

Subcommands: extend | solve | eos-scan | surgery | verify | probe-clarke.
Each command reads a JSON config, writes its delimited report (JSON/CSV)
into the output directory and renders a matplotlib figure next to it.
Exit codes: 0 pass, 1 check failure, 2 invalid config or input.
Set CENTERFORGE_LOG to error|warn|info|debug to control logging.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import plots
from ._serialize import dump_csv, dump_json
from .benchmarks import (
    ShearBlocks,
    make_linear_benchmark,
    make_shear_benchmark,
    quadratic_base_drift,
    quadratic_cu_nonlinearity,
    quadratic_shear,
)
from .eos_factorization import (
    BadBasePoint,
    EosError,
    FactorizationProblem,
    bifurcation_scan,
    lambda1,
    lift_to_T,
    minimiser_chart,
    splitting_at,
)
from .graph_transform import (
    InvalidTransformConfig,
    TransformConfig,
    contraction_ratio,
    invariance_residual,
    make_zero_section,
    random_admissible_section,
    section_sup_distance,
    solve_fixed_section,
    tangency_check,
)
from .manifold_models import GeometryError, make_arc_model, make_circle_model
from .map_extension import (
    ExtensionError,
    c1_distance_to_linearization,
    extend_map,
    find_bound_certified_radius,
    find_safe_radius,
    verify_global_bounds,
)
from .nonsmooth import (
    NonsmoothError,
    lambda1_lipschitz_probe,
    lip_vs_clarke_check,
    sample_jacobians,
)
from .surgery import (
    SurgeryError,
    make_mixed_sign_control,
    make_surgery_benchmark,
    verify_surgery,
)

log = logging.getLogger("centerforge.cli")

LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}


class ConfigError(Exception):
    pass


class CheckFailure(Exception):
    pass


def _setup_logging():
    level = os.environ.get("CENTERFORGE_LOG", "warn").lower()
    if level not in LOG_LEVELS:
        level = "warn"
    logging.basicConfig(level=LOG_LEVELS[level], format="%(levelname)s %(name)s: %(message)s")


def _load_config(path) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    return cfg


def _get(cfg: dict, key: str, kind, default=None, required=False):
    if key not in cfg:
        if required:
            raise ConfigError(f"config key '{key}' is required")
        return default
    val = cfg[key]
    if kind is float and isinstance(val, (int, float)) and not isinstance(val, bool):
        return float(val)
    if kind is int and isinstance(val, int) and not isinstance(val, bool):
        return int(val)
    if not isinstance(val, kind):
        raise ConfigError(f"config key '{key}' must be {kind.__name__}, got {type(val).__name__}")
    return val


def _build_geometry(cfg: dict):
    geo = _get(cfg, "geometry", dict, default={"kind": "circle", "ranks": [1, 1, 1]})
    kind = _get(geo, "kind", str, default="circle")
    ranks = tuple(_get(geo, "ranks", list, default=[1, 1, 1]))
    try:
        if kind == "circle":
            return make_circle_model(ranks=ranks)
        if kind == "arc":
            theta_range = _get(geo, "theta_range", list, required=True)
            return make_arc_model(tuple(theta_range), ranks=ranks)
    except GeometryError as exc:
        raise ConfigError(str(exc)) from exc
    raise ConfigError(f"geometry kind must be circle or arc, got '{kind}'")


def _build_problem(cfg: dict):
    """(model, bundle map, analytic section or None) from the config."""
    model = _build_geometry(cfg)
    problem = _get(cfg, "problem", str, default="shear")
    bench_cfg = _get(cfg, "benchmark", dict, default={})
    lam_c = bench_cfg.get("lambda_c", 1.0)
    blocks = ShearBlocks(
        lambda_u=bench_cfg.get("lambda_u", 2.0),
        lambda_s=bench_cfg.get("lambda_s", 0.5),
        lambda_c=np.asarray(lam_c, dtype=float) if isinstance(lam_c, list) else lam_c,
    )
    try:
        if problem == "linear":
            return model, make_linear_benchmark(model, blocks), None
        if problem == "shear":
            psi_coeff = float(bench_cfg.get("psi_coeff", 0.1))
            cu_coeff = float(bench_cfg.get("cu_coeff", 0.0))
            drift_coeff = float(bench_cfg.get("drift_coeff", 0.0))
            nu, nc, ns = model.ranks
            nonlin = quadratic_cu_nonlinearity(cu_coeff, nu, nc) if cu_coeff else None
            drift = quadratic_base_drift(drift_coeff) if drift_coeff else None
            _, bench, psi = make_shear_benchmark(
                model, blocks, psi=quadratic_shear(psi_coeff, ns), nonlinear_cu=nonlin, base_drift=drift
            )
            return model, bench, psi
    except (ExtensionError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    raise ConfigError(f"problem must be shear or linear, got '{problem}'")


def _epsilon_kappa(cfg: dict) -> tuple[float, float]:
    eps = _get(cfg, "epsilon", float, default=0.05)
    kappa = _get(cfg, "kappa", float, default=0.5)
    if not (0.0 < eps < 0.5) or not (0.0 <= kappa < 1.0) or (kappa + 2 * eps) / (1 - 2 * eps) >= 1.0:
        raise ConfigError(
            f"epsilon={eps}, kappa={kappa} violate (kappa + 2 eps)/(1 - 2 eps) < 1"
        )
    return eps, kappa


# commands ---------------------------------------------------------------------------


def cmd_extend(cfg: dict, out: Path, seed: int, threads: int) -> int:
    model, bmap, psi = _build_problem(cfg)
    eps, kappa = _epsilon_kappa(cfg)
    sr = find_safe_radius(bmap, model, seed=seed)
    r_req = _get(cfg, "r", float, default=None)
    if r_req is not None and r_req > sr.r_max:
        raise ConfigError(f"requested r = {r_req} exceeds certified r_max = {sr.r_max}")
    top = r_req if r_req is not None else sr.r_max
    grid = _get(cfg, "grid", dict, default={})
    n_base = int(grid.get("base", 12))
    n_fibre = int(grid.get("fibre", 9))

    ladder = []
    for k in range(3):
        r = top * 0.5**k
        ext = extend_map(bmap, model, r, sr.r_max)
        c0, c1 = c1_distance_to_linearization(ext, n_base=n_base, n_fibre=n_fibre)
        ladder.append({"r": r, "c0": c0, "c1": c1})

    checks = []
    floor = 1e-13
    for a, b in zip(ladder, ladder[1:]):
        if a["c0"] > floor:
            checks.append({"name": f"c0 ratio at r={a['r']:.4g}", "value": a["c0"] / max(b["c0"], floor), "bound": 3.0, "pass": a["c0"] / max(b["c0"], floor) >= 3.0})
        if a["c1"] > floor:
            checks.append({"name": f"c1 ratio at r={a['r']:.4g}", "value": a["c1"] / max(b["c1"], floor), "bound": 1.8, "pass": a["c1"] / max(b["c1"], floor) >= 1.8})

    report = {
        "r0": sr.r0,
        "r1": sr.r1,
        "r_max": sr.r_max,
        "epsilon": eps,
        "kappa": kappa,
        "ladder": ladder,
        "checks": checks,
        "pass": all(c["pass"] for c in checks),
    }
    dump_json(report, out / "extend_report.json")
    plots.plot_extend_decay(ladder, out / "extend_decay.png")
    for c in checks:
        print(f"[{'PASS' if c['pass'] else 'FAIL'}] {c['name']}: {c['value']:.6g} vs {c['bound']}")
    if not report["pass"]:
        raise CheckFailure("extension decay or bound checks failed")
    return 0


def _transform_config(cfg: dict, r: float, eps: float, kappa: float) -> TransformConfig:
    t = _get(cfg, "transform", dict, default={})
    try:
        return TransformConfig(
            r=r,
            epsilon=eps,
            kappa=kappa,
            grid_base=int(t.get("grid_base", 33)),
            grid_fibre=int(t.get("grid_fibre", 33)),
            newton_tol=float(t.get("newton_tol", 1e-11)),
            newton_max_iter=int(t.get("newton_max_iter", 60)),
            fixed_point_tol=float(t.get("fixed_point_tol", 1e-10)),
            max_sweeps=int(t.get("max_sweeps", 200)),
            regularity_order=int(t.get("regularity_order", 1)),
        )
    except InvalidTransformConfig as exc:
        raise ConfigError(str(exc)) from exc


def cmd_solve(cfg: dict, out: Path, seed: int, threads: int) -> int:
    model, bmap, psi = _build_problem(cfg)
    eps, kappa = _epsilon_kappa(cfg)
    sr = find_safe_radius(bmap, model, seed=seed)
    r_req = _get(cfg, "r", float, default=None)
    if r_req is not None:
        if r_req > sr.r_max:
            raise ConfigError(f"requested r = {r_req} exceeds certified r_max = {sr.r_max}")
        r = r_req
        bounds = verify_global_bounds(extend_map(bmap, model, r, sr.r_max), r, eps, kappa)
    else:
        r, bounds = find_bound_certified_radius(bmap, model, eps, kappa, sr.r_max)
    tcfg = _transform_config(cfg, r, eps, kappa)
    ext = extend_map(bmap, model, r, sr.r_max)
    sec, diag = solve_fixed_section(ext, tcfg)

    rng = np.random.default_rng(seed)
    checks = [{"name": "block bounds", "value": bounds.worst["margin"], "bound": 0.0, "pass": bounds.passed}]
    checks.append({
        "name": "fixed-point residual",
        "value": diag.residuals[-1],
        "bound": 2.0 * tcfg.fixed_point_tol,
        "pass": diag.residuals[-1] <= 2.0 * tcfg.fixed_point_tol,
    })
    zres = sec.zero_section_residual()
    checks.append({"name": "zero-section residual", "value": zres, "bound": 1e-12, "pass": zres <= 1e-12})
    lip = sec.grid_lipschitz()
    checks.append({"name": "lipschitz estimate", "value": lip, "bound": 1.0 + tcfg.lip_slack, "pass": lip <= 1.0 + tcfg.lip_slack})

    rate_bound = tcfg.contraction_rate + 0.02
    s1 = random_admissible_section(model, tcfg, rng, amplitude=0.3 * r)
    s2 = random_admissible_section(model, tcfg, rng, amplitude=0.3 * r)
    ratio = contraction_ratio(ext, s1, s2, tcfg)
    checks.append({"name": "contraction ratio sample", "value": ratio, "bound": rate_bound, "pass": ratio <= rate_bound})

    h_tan = 2.0 * max(sec.fibre_steps)
    tan = tangency_check(sec, h_tan)
    checks.append({"name": "tangency at the zero section", "value": tan, "bound": 10.0 * h_tan, "pass": tan <= 10.0 * h_tan})

    inv_res = invariance_residual(sec, bmap, model, n_samples=200, seed=seed)
    oracle_err = None
    if psi is not None:
        pts = sec.node_points()
        keep = np.linalg.norm(pts[:, 1:], axis=1) <= sec.r
        nu = model.ranks[0]
        oracle = psi(pts[keep][:, 0], pts[keep][:, 1 : 1 + nu], pts[keep][:, 1 + nu :])
        oracle_err = float(np.abs(sec.evaluate(pts[keep]) - oracle).max())
        checks.append({"name": "oracle recovery", "value": oracle_err, "bound": 5e-3, "pass": oracle_err <= 5e-3})
        inv_bound = max(5.0 * oracle_err, 1e-9)
    else:
        inv_bound = 1e-8
    checks.append({"name": "invariance residual", "value": inv_res, "bound": inv_bound, "pass": inv_res <= inv_bound})

    sec_dict = sec.to_dict()
    sec_dict["residual"] = diag.residuals[-1]
    dump_json(sec_dict, out / "section.json")
    dump_csv(out / "diagnostics.csv", ["sweep", "residual", "lip_d0", "sup_d1", "lip_d1"], diag.rows())
    report = {
        "r": r,
        "epsilon": eps,
        "kappa": kappa,
        "sweeps": diag.sweeps,
        "oracle_error": oracle_err,
        "checks": checks,
        "pass": all(c["pass"] for c in checks),
    }
    dump_json(report, out / "solve_report.json")
    plots.plot_solve_convergence(diag.residuals, tcfg.contraction_rate, out / "solve_convergence.png")
    plots.plot_section_surface(sec, out / "section_surface.png")
    for c in checks:
        print(f"[{'PASS' if c['pass'] else 'FAIL'}] {c['name']}: {c['value']:.6g} (bound {c['bound']:.6g})")
    if not report["pass"]:
        raise CheckFailure("solve verification failed")
    return 0


def cmd_eos_scan(cfg: dict, out: Path, seed: int, threads: int) -> int:
    Y = np.asarray(_get(cfg, "Y", list, required=True), dtype=float)
    A = np.asarray(_get(cfg, "chart_A", list, required=True), dtype=float)
    eta_min = _get(cfg, "eta_min", float, required=True)
    eta_max = _get(cfg, "eta_max", float, required=True)
    steps = _get(cfg, "eta_steps", int, required=True)
    delta = _get(cfg, "delta", float, default=1e-3)
    n_steps = _get(cfg, "N", int, default=2000)
    burn_in = _get(cfg, "burn_in", int, default=1500)
    if not (0.0 < eta_min < eta_max) or steps < 2:
        raise ConfigError("need 0 < eta_min < eta_max and eta_steps >= 2")
    try:
        problem = FactorizationProblem(Y)
        base = minimiser_chart(problem, A)
        rows = bifurcation_scan(
            problem, base, np.linspace(eta_min, eta_max, steps),
            delta=delta, n_steps=n_steps, burn_in=burn_in, threads=max(1, threads),
        )
    except (BadBasePoint, EosError) as exc:
        raise ConfigError(str(exc)) from exc
    dump_csv(
        out / "scan.csv",
        ["eta", "class", "amplitude", "lambda1", "eta_critical"],
        (
            {"eta": r.eta, "class": r.label, "amplitude": r.amplitude, "lambda1": r.lambda_1, "eta_critical": r.eta_critical}
            for r in rows
        ),
    )
    plots.plot_bifurcation(rows, out / "bifurcation.png")
    print(f"scan complete: {len(rows)} rows, eta_critical = {rows[0].eta_critical:.6g}")
    return 0


def cmd_surgery(cfg: dict, out: Path, seed: int, threads: int) -> int:
    theta_range = tuple(_get(cfg, "theta_range", list, default=[np.pi / 4, 3 * np.pi / 4]))
    R = _get(cfg, "R", float, default=0.1)
    ranks = tuple(_get(cfg, "ranks", list, default=[1, 2, 1]))
    kappa = _get(cfg, "kappa", float, default=0.5)
    try:
        bundle = make_surgery_benchmark(
            theta_range=theta_range,
            R=R,
            ranks=ranks,
            drift_coeff=_get(cfg, "drift_coeff", float, default=0.5),
            psi_coeff=_get(cfg, "psi_coeff", float, default=0.1),
            r=_get(cfg, "r", float, default=None),
        )
    except (SurgeryError, GeometryError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    rep = verify_surgery(bundle.f_prime, bundle.f_raw, bundle.collar, bundle.collar.r, kappa, seed=seed)
    result = {"benchmark": rep.to_dict(), "pass": rep.passed}

    if _get(cfg, "control", bool, default=False):
        ctrl, raw = make_mixed_sign_control(bundle.collar, seed=seed + 7)
        ctrl_rep = verify_surgery(ctrl, raw, bundle.collar, bundle.collar.r, kappa, seed=seed)
        others_ok = all(v["pass"] for k, v in ctrl_rep.items.items() if k != "spectral_bounds")
        control_ok = (not ctrl_rep.items["spectral_bounds"]["pass"]) and others_ok
        result["control"] = ctrl_rep.to_dict()
        result["control_demonstrates_cancellation"] = control_ok
        result["pass"] = result["pass"] and control_ok

    dump_json(result, out / "surgery_report.json")
    plots.plot_surgery_spectra(rep.to_dict(), out / "surgery_spectra.png")
    for name, item in rep.items.items():
        print(f"[{'PASS' if item['pass'] else 'FAIL'}] {name}")
    if "control" in result:
        print(f"[{'PASS' if result['control_demonstrates_cancellation'] else 'FAIL'}] mixed-sign control fails only the spectral pins")
    if not result["pass"]:
        raise CheckFailure("surgery verification failed")
    return 0


def _verify_suite(cfg: dict, seed: int) -> list[dict]:
    rng = np.random.default_rng(seed)
    results = []

    def record(name, ok, detail=""):
        results.append({"name": name, "pass": bool(ok), "detail": detail})

    model, bmap, psi = _build_problem(cfg)
    eps, kappa = _epsilon_kappa(cfg)
    suite = _get(cfg, "suite", list, required=True)
    if not suite:
        raise ConfigError("suite selection is empty")
    known = {"geometry", "extension", "transform", "eos", "surgery", "clarke"}
    unknown = set(suite) - known
    if unknown:
        raise ConfigError(f"unknown suite entries: {sorted(unknown)} (known: {sorted(known)})")

    sr = find_safe_radius(bmap, model, seed=seed)
    r, bounds = find_bound_certified_radius(bmap, model, eps, kappa, sr.r_max)
    ext = extend_map(bmap, model, r, sr.r_max)

    if "geometry" in suite:
        from .manifold_models import BundlePoint, embed, retract

        errs = []
        for _ in range(32):
            th = rng.uniform(0, 2 * np.pi)
            v = rng.standard_normal(model.p)
            v *= 0.5 * model.reach * rng.uniform(0, 1) / np.linalg.norm(v)
            pt = BundlePoint(base=float(model.clamp_base(th)), fibre=v, ranks=model.ranks)
            back = retract(model, embed(model, pt))
            errs.append(max(model.base_distance(back.base, pt.base), np.abs(back.fibre - pt.fibre).max()))
        record("geometry: embed/retract round trip", max(errs) <= 1e-10, f"max err {max(errs):.2e}")
        th = model.base_grid(90)
        fr = model.frame_of(th)
        gram = np.einsum("bij,bik->bjk", fr, fr) - np.eye(model.p)
        record("geometry: frame orthonormality", float(np.abs(gram).max()) <= 1e-12)

    if "extension" in suite:
        th = model.clamp_base(rng.uniform(0, 2 * np.pi, 64))
        v_in = rng.standard_normal((64, model.p))
        v_in *= 0.9 * r / np.linalg.norm(v_in, axis=1, keepdims=True)
        a = ext.eval_batch(th, v_in)
        b = bmap.eval_batch(th, v_in)
        inner_exact = max(float(np.abs(a[0] - b[0]).max()), float(np.abs(a[1] - b[1]).max()))
        record("extension: inner branch exact", inner_exact == 0.0)
        v_out = rng.standard_normal((64, model.p))
        v_out *= 4.5 * r / np.linalg.norm(v_out, axis=1, keepdims=True)
        df = bmap.fibre_linearization(th)
        a = ext.eval_batch(th, v_out)
        lin = np.einsum("bij,bj->bi", df, v_out)
        outer_exact = max(float(np.abs(a[0] - th).max()), float(np.abs(a[1] - lin).max()))
        record("extension: linear branch exact", outer_exact == 0.0)
        record("extension: block bounds", bounds.passed, f"worst margin {bounds.worst['margin']:.2e}")
        from .map_extension import block_jacobian

        bj = block_jacobian(ext, float(th[0]), np.zeros(model.p))
        off = max(bj.a12_norm, bj.a21_norm)
        record("extension: zero-section off-diagonal blocks", off <= 1e-8, f"{off:.2e}")

    if "transform" in suite:
        tcfg = _transform_config(cfg, r, eps, kappa)
        sec, diag = solve_fixed_section(ext, tcfg)
        record("transform: converged", diag.converged, f"{diag.sweeps} sweeps")
        record("transform: zero section", sec.zero_section_residual() <= 1e-12)
        sec2, _ = solve_fixed_section(ext, tcfg, sigma0=random_admissible_section(model, tcfg, rng, 0.3 * r))
        gap = section_sup_distance(sec, sec2)
        record("transform: uniqueness probe", gap <= 3.0 * tcfg.fixed_point_tol, f"{gap:.2e}")
        if _get(cfg, "inject_violation", bool, default=False):
            bad = make_zero_section(model, tcfg)
            pts = bad.node_points()
            bad.values = np.linalg.norm(pts[:, 1:], axis=1).reshape(bad.values.shape[:-1])[..., None] * np.ones(model.ranks[2])
            h_tan = 2.0 * max(bad.fibre_steps)
            record("transform: control |v| section must fail tangency", tangency_check(bad, h_tan) <= 0.5, "expected failure")

    if "eos" in suite:
        prob = FactorizationProblem(np.diag([2.0, 1.0]))
        ok = True
        for _ in range(100):
            W1 = rng.standard_normal((2, 2))
            W2 = rng.standard_normal((2, 2))
            G = np.sort(np.linalg.eigvalsh(np.kron(W2 @ W2.T, np.eye(2)) + np.kron(np.eye(2), W1.T @ W1)))
            ok &= abs(lambda1(W1, W2) - G[-1]) <= 1e-12
        record("eos: lambda1 formula vs eigensolve", ok)
        W1, W2 = minimiser_chart(prob, np.diag([1.0, 2.0]))
        rep = splitting_at(prob, lift_to_T(prob, W1, W2))
        record("eos: lifted multiplicities", rep.mult_plus_one == 5 and rep.mult_minus_one == 1)
        record("eos: stable spectrum inside the disc", bool(np.all(np.abs(rep.e_s_eigenvalues) < 1.0)))

    if "surgery" in suite:
        bundle = make_surgery_benchmark()
        rep = verify_surgery(bundle.f_prime, bundle.f_raw, bundle.collar, bundle.collar.r, kappa, seed=seed)
        record("surgery: five patched-map properties", rep.passed)
        ctrl, raw = make_mixed_sign_control(bundle.collar, seed=seed + 7)
        ctrl_rep = verify_surgery(ctrl, raw, bundle.collar, bundle.collar.r, kappa, seed=seed)
        record(
            "surgery: mixed-sign control cancels the centre spectrum",
            not ctrl_rep.items["spectral_bounds"]["pass"],
        )

    if "clarke" in suite:
        ss = sample_jacobians(lambda x: abs(x[0]), [0.0], 0.1, count=64, seed=seed)
        d = ss.jacobians.ravel()
        record("clarke: |x| hull endpoints", bool(d.min() < -0.99 and d.max() > 0.99 and abs(ss.sigma_max_estimate - 1) < 1e-6))
        res = lip_vs_clarke_check(lambda x: x[0] * abs(x[0]), ([-1.0], [1.0]), n_samples=4000, seed=seed)
        record("clarke: convex-box gap", res.gap <= 1e-3, f"{res.gap:.2e}")

    return results


def cmd_verify(cfg: dict, out: Path, seed: int, threads: int) -> int:
    results = _verify_suite(cfg, seed)
    report = {"results": results, "pass": all(r["pass"] for r in results)}
    dump_json(report, out / "verify_report.json")
    plots.plot_verify_margins(results, out / "verify_margins.png")
    for res in results:
        print(f"[{'PASS' if res['pass'] else 'FAIL'}] {res['name']} {res['detail']}")
    if not report["pass"]:
        raise CheckFailure("invariant suite failed")
    return 0


def cmd_probe_clarke(cfg: dict, out: Path, seed: int, threads: int) -> int:
    target = _get(cfg, "target", str, default="abs")
    count = _get(cfg, "count", int, default=64)
    radius = _get(cfg, "radius", float, default=0.1)
    report = {}
    if target == "abs":
        fn = lambda x: abs(x[0])
        center = _get(cfg, "center", list, default=[0.0])
    elif target == "xabsx":
        fn = lambda x: x[0] * abs(x[0])
        center = _get(cfg, "center", list, default=[0.0])
    elif target == "lambda1":
        Y = np.asarray(_get(cfg, "Y", list, default=[[2.0, 0.0], [0.0, 1.0]]), dtype=float)
        problem = FactorizationProblem(Y)
        kink = lambda1_lipschitz_probe(problem)
        report["kink"] = kink.to_dict()

        def fn(z):
            W1 = np.diag([1.0 + z[0], 1.0 - z[0]])
            return lambda1(W1, problem.Y @ np.linalg.inv(W1))

        center = _get(cfg, "center", list, default=[0.0])
    else:
        raise ConfigError(f"unknown probe target '{target}'")
    try:
        ss = sample_jacobians(fn, center, radius, count=count, seed=seed)
    except NonsmoothError as exc:
        raise CheckFailure(str(exc)) from exc
    report["samples"] = ss.to_dict()
    dump_json(report, out / "clarke_report.json")
    sigmas = np.linalg.norm(ss.jacobians, ord=2, axis=(1, 2))
    plots.plot_clarke_hist(sigmas, out / "clarke_sigma_hist.png")
    print(f"probe '{target}': sigma_max ~ {ss.sigma_max_estimate:.6g} over {ss.jacobians.shape[0]} samples")
    return 0


COMMANDS = {
    "extend": cmd_extend,
    "solve": cmd_solve,
    "eos-scan": cmd_eos_scan,
    "surgery": cmd_surgery,
    "verify": cmd_verify,
    "probe-clarke": cmd_probe_clarke,
}


def main(argv=None) -> int:
    _setup_logging()
    parser = argparse.ArgumentParser(prog="centerforge", description=__doc__)
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="JSON config path")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--threads", type=int, default=1, help="worker cap for scans")
    parser.add_argument("--seed", type=int, default=None, help="seed override (U64)")
    args = parser.parse_args(argv)

    try:
        cfg = _load_config(args.config)
        seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, out, seed, max(1, args.threads))
    except (ConfigError, InvalidTransformConfig) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except CheckFailure as exc:
        print(f"verification failure: {exc}", file=sys.stderr)
        return 1
    except (ExtensionError, GeometryError, EosError, SurgeryError, NonsmoothError) as exc:
        print(f"verification failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
