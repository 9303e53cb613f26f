import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from levykernel.errors import KernelError
from levykernel.frozen import SpatialGrid
from levykernel.parametrix import (LagKernel, TimeLadder, beta_identity_check, fundamental_solution,
                                   k0_threshold, lz1, residual_check, space_convolution,
                                   spacetime_convolution)

from conftest import power_model

SMALL = SpatialGrid(dim=1, R=8.0, N=256, oversample=8)


def holder_model(eps: float):
    return power_model(1.0, kind="holder", amp=eps, b1=1.0, b2=1 + eps, b3=eps, lam=0.5)


def gaussian(x, var):
    return np.exp(-x**2 / (2 * var)) / np.sqrt(2 * np.pi * var)


# -- space convolution ------------------------------------------------------

def test_delta_is_identity():
    g = SpatialGrid(dim=1, R=8.0, N=512, oversample=1)
    delta = np.zeros(g.N)
    delta[g.N // 2] = 1 / g.h
    f = gaussian(g.x - 0.7, 0.3)
    assert np.allclose(space_convolution(delta, f, g, translation_invariant=True), f, atol=1e-14)


def test_gaussian_convolution():
    g = SpatialGrid(dim=1, R=8.0, N=512, oversample=1)
    out = space_convolution(gaussian(g.x, 0.2), gaussian(g.x, 0.5), g, translation_invariant=True)
    assert np.max(np.abs(out - gaussian(g.x, 0.7))) < 1e-6


@settings(max_examples=20, deadline=None)
@given(st.floats(0.05, 1.0), st.floats(0.05, 1.0), st.floats(0.1, 3.0))
def test_convolution_mass_multiplies(v1, v2, c):
    g = SpatialGrid(dim=1, R=16.0, N=1024, oversample=1)
    f, k = c * gaussian(g.x, v1), gaussian(g.x, v2)
    out = space_convolution(f, k, g, translation_invariant=True)
    assert out.sum() * g.h == pytest.approx(f.sum() * g.h * k.sum() * g.h, rel=1e-8)


# -- space-time convolution ------------------------------------------------

@pytest.fixture(scope="module")
def ladder():
    return TimeLadder(Kt=40, delta=0.5, report=(1.0,))


def test_zero_right_operand(ladder):
    F = LagKernel(lambda tau: np.array([[tau ** -0.5]]), ladder)
    out = spacetime_convolution(F, np.zeros((ladder.Kt, 1, 1)), ladder, h=1.0)
    assert np.all(out == 0)


def test_singular_time_integral(ladder):
    F = LagKernel(lambda tau: np.ones((1, 1)), ladder)
    G = 3.0 * ladder.times[:, None, None] ** -0.5
    out = spacetime_convolution(F, G, ladder, h=1.0)[:, 0, 0]
    exact = 3.0 * ladder.times**0.5 / 0.5
    assert np.max(np.abs(out - exact) / exact) < 1e-6


def test_associativity(ladder):
    f = lambda tau: np.array([[np.exp(-tau)]])
    g = lambda tau: np.array([[tau]])
    H = np.cos(ladder.times)[:, None, None]
    fg = spacetime_convolution(LagKernel(f, ladder), ladder.times[:, None, None], ladder, h=1.0)
    lhs = spacetime_convolution(LagKernel.from_lattice(fg, ladder), H, ladder, h=1.0)
    gh = spacetime_convolution(LagKernel(g, ladder), H, ladder, h=1.0)
    rhs = spacetime_convolution(LagKernel(f, ladder), gh, ladder, h=1.0)
    assert np.max(np.abs(lhs - rhs)) < 1e-5


@pytest.mark.parametrize("delta, k", [(0.5, 1), (0.5, 3), (0.3, 2)])
def test_beta_identity(delta, k):
    assert beta_identity_check(delta, k) < 1e-4


def test_k0_threshold():
    assert k0_threshold(1.0, 1.0, 0.5) == 5


def test_report_time_must_be_on_lattice():
    with pytest.raises(KernelError):
        TimeLadder(Kt=8, delta=0.5, report=(0.3,))


# -- LZ1 and the series ----------------------------------------------------

def test_lz1_vanishes_for_constant_coefficients():
    cols = SMALL.x[::16]
    assert np.max(np.abs(lz1(power_model(1.0), 0.5, SMALL, cols).values)) < 1e-9


def test_lz1_vanishes_on_diagonal():
    cols = SMALL.x[::16]
    field = lz1(holder_model(0.4), 0.5, SMALL, cols)
    rows = np.round((cols + SMALL.R) / SMALL.h).astype(int)
    diag = field.values[0, rows, np.arange(cols.size)]
    assert np.max(np.abs(diag)) < 1e-9
    assert np.max(np.abs(field.values)) > 1e-3


def test_constant_coefficients_give_frozen_kernel():
    res = fundamental_solution(power_model(1.0), TimeLadder(Kt=8, delta=0.5, report=(0.5, 1.0)), SMALL)
    assert np.max(np.abs(res.Phi)) == 0
    assert np.array_equal(res.p, res.Z)
    assert len(res.term_norms) == 1


@pytest.mark.slow
def test_phi_linear_in_perturbation():
    L = TimeLadder(Kt=8, delta=0.5, report=(0.5, 1.0))
    a = np.max(np.abs(fundamental_solution(holder_model(0.05), L, SMALL).Phi[-1]))
    b = np.max(np.abs(fundamental_solution(holder_model(0.025), L, SMALL).Phi[-1]))
    assert a / b == pytest.approx(2.0, rel=0.2)


@pytest.mark.slow
def test_residual_decreases_with_series_length():
    L = TimeLadder(Kt=8, delta=0.5, report=(0.5, 1.0))
    m = holder_model(0.4)
    res = [residual_check(fundamental_solution(m, L, SMALL, M_max=M, min_terms=M))[1.0]
           for M in (1, 2, 4, 8)]
    assert all(b <= a * 1.05 for a, b in zip(res, res[1:]))
    assert res[-1] < res[0]
