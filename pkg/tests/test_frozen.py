import math

import numpy as np
import pytest

from levykernel.errors import KernelError
from levykernel.frozen import SpatialGrid, apply_generator, frozen_density, frozen_gradient
from levykernel.model import q_exponent
from levykernel.oracle import closed_form_stable


def node(grid, x):
    return int(round((x + grid.R) / grid.h))


@pytest.mark.parametrize("t, expected", [(1.0, 1 / math.pi**2), (0.5, 2 / math.pi**2)])
def test_cauchy_on_diagonal(cauchy, grid_1d, t, expected):
    sl = frozen_density(cauchy, t, 0.0, grid_1d)
    assert sl.values[node(grid_1d, 0.0)] == pytest.approx(expected, rel=1e-4)


def test_mass_and_gibbs(cauchy, grid_1d):
    sl = frozen_density(cauchy, 0.25, 0.0, grid_1d)
    assert abs(sl.mass - 1) < 1e-6
    assert sl.min_ratio >= -1e-8


def test_self_similarity(cauchy, grid_1d):
    t = 0.5
    p1 = frozen_density(cauchy, 1.0, 0.0, grid_1d).values
    pt = frozen_density(cauchy, t, 0.0, grid_1d).values
    xs = grid_1d.h * np.arange(-90, 91, 20)
    # periodic images differ between the two times; compare relative to the peak
    for x in xs:
        assert abs(pt[node(grid_1d, x)] - p1[node(grid_1d, x / t)] / t) < 1e-4 * pt.max()


def test_matches_closed_form_on_window(cauchy, grid_1d):
    sl = frozen_density(cauchy, 0.25, 0.0, grid_1d)
    ref = closed_form_stable(1.0, 1.0, 0.25, grid_1d.x)
    bulk = np.abs(grid_1d.x) <= grid_1d.R / 2
    assert np.max(np.abs(sl.values - ref)[bulk]) / ref.max() < 1e-3


def test_gradient_odd_and_closed_form(cauchy, grid_1d):
    g = frozen_gradient(cauchy, 1.0, 0.0, grid_1d, 1).values
    assert abs(g[node(grid_1d, 0.0)]) < 1e-8
    assert g[node(grid_1d, 1.0)] == pytest.approx(-2 / (math.pi**2 + 1) ** 2, rel=1e-3)


def test_gradient_scales_like_rho_squared(cauchy, grid_1d):
    s1 = np.max(np.abs(frozen_gradient(cauchy, 1.0, 0.0, grid_1d, 1).values))
    s2 = np.max(np.abs(frozen_gradient(cauchy, 0.1, 0.0, grid_1d, 1).values))
    ratio = (s2 / s1) / (10.0**2)
    assert 0.25 <= ratio <= 4


def test_gradient_order_limit(cauchy, grid_1d):
    with pytest.raises(KernelError):
        frozen_gradient(cauchy, 1.0, 0.0, grid_1d, 3)


def test_underresolved_grid(cauchy):
    coarse = SpatialGrid(dim=1, R=4.0, N=16, oversample=1)
    with pytest.raises(KernelError) as exc:
        frozen_density(cauchy, 0.01, 0.0, coarse)
    assert exc.value.code == "GRID_UNDERRESOLVED"


def test_off_lattice_point_rejected(cauchy, grid_1d):
    with pytest.raises(KernelError):
        frozen_density(cauchy, 1.0, 0.5 * grid_1d.h, grid_1d)


@pytest.fixture(scope="module")
def periodic_grid():
    return SpatialGrid(dim=1, R=8 * math.pi, N=512, oversample=1)


def test_generator_kills_constants(cauchy, periodic_grid):
    out = apply_generator(cauchy, np.full(periodic_grid.N, 3.0), periodic_grid, extension="periodic")
    assert np.max(np.abs(out)) < 1e-10


def test_generator_fourier_eigenrelation(cauchy, periodic_grid):
    x = periodic_grid.x
    q = q_exponent(cauchy, 0.0, 1.0).real
    for f in (np.cos(x), np.sin(x)):
        out = apply_generator(cauchy, f, periodic_grid, extension="periodic")
        assert np.max(np.abs(out + q * f)) < 1e-6


def test_generator_linearity(modulated, rng):
    grid = SpatialGrid(dim=1, R=8.0, N=256, oversample=4)
    f = np.exp(-grid.x**2) * rng.standard_normal(grid.N)
    g = np.exp(-np.abs(grid.x))
    lhs = apply_generator(modulated, 2.0 * f - 0.5 * g, grid)
    rhs = 2.0 * apply_generator(modulated, f, grid) - 0.5 * apply_generator(modulated, g, grid)
    assert np.max(np.abs(lhs - rhs)) <= 1e-10 * max(1.0, np.max(np.abs(lhs)))


def test_2d_cauchy_on_diagonal():
    from levykernel.model import model_from_dict
    m = model_from_dict({"base": {"dim": 2, "family": "power", "alpha": 1.0}})
    grid = SpatialGrid(dim=2, R=8.0, N=256, oversample=16)
    sl = frozen_density(m, 1.0, (0.0, 0.0), grid)
    ref = closed_form_stable(1.0, 1.0, 1.0, (0.0, 0.0), dim=2)
    assert sl.values[128, 128] == pytest.approx(float(ref), rel=1e-3)
