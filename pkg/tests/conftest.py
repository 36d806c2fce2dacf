import numpy as np
import pytest

from centerforge.benchmarks import ShearBlocks, make_linear_benchmark, make_shear_benchmark
from centerforge.graph_transform import TransformConfig, solve_fixed_section
from centerforge.manifold_models import make_circle_model
from centerforge.map_extension import extend_map, find_bound_certified_radius, find_safe_radius

EPS = 0.05
KAPPA = 0.5


@pytest.fixture(scope="session")
def circle_model():
    return make_circle_model(ranks=(1, 1, 1))


@pytest.fixture(scope="session")
def shear_bench(circle_model):
    """(model, map, psi) for the default oracle benchmark."""
    return make_shear_benchmark(circle_model)


@pytest.fixture(scope="session")
def linear_bench(circle_model):
    return make_linear_benchmark(circle_model)


@pytest.fixture(scope="session")
def safe_radius(shear_bench):
    model, bench, _ = shear_bench
    return find_safe_radius(bench, model)


@pytest.fixture(scope="session")
def certified(shear_bench, safe_radius):
    """(r, bound report) with the block bounds certified at eps=0.05, kappa=0.5."""
    model, bench, _ = shear_bench
    return find_bound_certified_radius(bench, model, EPS, KAPPA, safe_radius.r_max)


@pytest.fixture(scope="session")
def solved_17(shear_bench, safe_radius, certified):
    """Moderate-resolution solve shared by the transform tests."""
    model, bench, _ = shear_bench
    r, _ = certified
    cfg = TransformConfig(r=r, epsilon=EPS, kappa=KAPPA, grid_base=17, grid_fibre=17)
    ext = extend_map(bench, model, r, safe_radius.r_max)
    section, diag = solve_fixed_section(ext, cfg)
    return {"cfg": cfg, "ext": ext, "section": section, "diag": diag}
