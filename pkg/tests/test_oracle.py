import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from levykernel.errors import KernelError
from levykernel.oracle import (closed_form_stable, closed_form_stable_cdf, empirical_vs_kernel,
                               ks_distance, odd_statistic_mean, simulate_paths,
                               tabulated_stable_cdf)


@pytest.mark.parametrize("x, expected", [(0.0, 1 / math.pi**2), (math.pi, 1 / (2 * math.pi**2))])
def test_cauchy_closed_form(x, expected):
    assert float(closed_form_stable(1.0, 1.0, 1.0, x)) == pytest.approx(expected, rel=1e-14)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 20.0), st.floats(0.05, 1.0), st.sampled_from([1.0, 1.5]))
def test_closed_form_symmetric(x, t, alpha):
    a, b = closed_form_stable(alpha, 1.0, t, [x, -x])
    assert a == pytest.approx(b, rel=1e-12)


@pytest.mark.parametrize("alpha", [0.8, 1.5])
def test_quadrature_density_normalised(alpha):
    x = np.linspace(-60, 60, 1201)
    p = closed_form_stable(alpha, 1.0, 0.5, x)
    cdf = closed_form_stable_cdf(alpha, 1.0, 0.5, [-60.0, 60.0])
    assert integrate.trapezoid(p, x) == pytest.approx(cdf[1] - cdf[0], rel=1e-3)


def test_quadrature_matches_cauchy_limit():
    x = np.array([0.0, 0.7, 3.0])
    near = closed_form_stable(1.0 + 1e-6, 1.0, 0.5, x)
    assert np.allclose(near, closed_form_stable(1.0, 1.0, 0.5, x), rtol=1e-4)


def test_cdf_properties():
    x = np.linspace(-30, 30, 61)
    F = closed_form_stable_cdf(1.5, 1.0, 0.5, x)
    assert np.all(np.diff(F) >= 0)
    assert F[30] == pytest.approx(0.5, abs=1e-10)
    assert np.allclose(F + F[::-1], 1.0, atol=1e-9)
    T = tabulated_stable_cdf(1.5, 1.0, 0.5)
    assert np.max(np.abs(T(x) - F)) < 1e-5


def test_two_dimensional_cauchy():
    g = 2 * math.pi  # symbol 2π‖ξ‖ for the density ‖u‖^{-3}
    v = closed_form_stable(1.0, 1.0, 1.0, [[0.0, 0.0], [3.0, 4.0]], dim=2)
    assert v[0] == pytest.approx(1 / (2 * math.pi * g**2), rel=1e-12)
    assert v[1] == pytest.approx(g / (2 * math.pi * (g * g + 25) ** 1.5), rel=1e-12)


def test_simulation_is_deterministic(cauchy):
    a = simulate_paths(cauchy, [0.25, 0.5], 0.0, 3000, seed=7)
    b = simulate_paths(cauchy, [0.25, 0.5], 0.0, 3000, seed=7)
    c = simulate_paths(cauchy, [0.25, 0.5], 0.0, 3000, seed=8)
    assert a.positions.tobytes() == b.positions.tobytes()
    assert not np.array_equal(a.positions, c.positions)


def test_rate_overflow(cauchy):
    with pytest.raises(KernelError) as exc:
        simulate_paths(cauchy, 1.0, 0.0, 10, n_steps=1)
    assert exc.value.code == "RATE_OVERFLOW"


def test_simulation_is_1d_only():
    from levykernel.model import model_from_dict
    m = model_from_dict({"base": {"dim": 2, "alpha": 1.0}})
    with pytest.raises(KernelError):
        simulate_paths(m, 0.5, 0.0, 10)


@pytest.mark.slow
def test_cauchy_ks_and_symmetry(cauchy):
    n = 20000
    ens = simulate_paths(cauchy, 0.5, 0.0, n, seed=3)
    X = ens.at(0.5)
    ks = ks_distance(X, lambda v: closed_form_stable_cdf(1.0, 1.0, 0.5, v))
    assert ks < 1.63 / math.sqrt(n)
    mean, se = odd_statistic_mean(X)
    assert abs(mean) < 3 * se


def test_ks_distance_exact_sample():
    u = (np.arange(1, 101) - 0.5) / 100
    assert ks_distance(u, lambda v: np.clip(v, 0, 1)) == pytest.approx(0.005)


def test_empirical_vs_density_callable(cauchy):
    ens = simulate_paths(cauchy, 0.5, 0.0, 4000, seed=1)
    rep = empirical_vs_kernel(ens, lambda y: closed_form_stable(1.0, 1.0, 0.5, y), 0.5, bulk=4.0)
    assert rep["ks"] < 0.05
    assert rep["n_in_window"] <= rep["n_paths"]
    wrong = empirical_vs_kernel(ens, lambda y: closed_form_stable(1.0, 1.0, 2.0, y), 0.5, bulk=4.0)
    assert wrong["ks"] > rep["ks"]


def test_paths_csv(tmp_path, cauchy):
    ens = simulate_paths(cauchy, [0.5], 0.0, 5, seed=0)
    ens.to_csv(tmp_path / "p.csv")
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines[0].startswith("path") and len(lines) == 6
