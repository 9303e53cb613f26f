import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from levykernel.envelopes import (EnvelopeParams, GridMeasure, eval_lower_bound, eval_upper_envelope,
                                  f_upper, lambda_measure, poisson_exponential, tilt_measure,
                                  tilt_moment)
from levykernel.errors import KernelError
from levykernel.frozen import SpatialGrid
from levykernel.model import LevyBaseMeasure, LevyTypeModel, build_profile

GRID = SpatialGrid(dim=1, R=16.0, N=256, oversample=1)
PARAMS = EnvelopeParams(a1=0.1, a2=0.5, a3=2.0, a4=0.7)


def point_measure(K: int, h: float, at: dict, t: float = 1.0) -> GridMeasure:
    w = np.zeros(2 * K + 1)
    for k, v in at.items():
        w[K + k] = v
    return GridMeasure(w, h, "test", t)


def test_lambda_mass_cauchy(cauchy):
    lam = lambda_measure(cauchy, 0.25, GRID)
    assert lam.mass == pytest.approx(0.5, rel=1e-10)
    assert np.allclose(lam.weights, lam.weights[::-1])


def test_lambda_empty_for_truncated_measure():
    base = LevyBaseMeasure(family="truncated-power", alpha=1.0, cutoff=0.5)
    model = LevyTypeModel(base=base)
    prof = build_profile(model)
    t = 1.0
    assert 1 / prof.rho(t) > 0.5
    assert lambda_measure(model, t, GRID, profile=prof).mass == 0


def test_poisson_of_zero_is_unit_atom():
    P = poisson_exponential(point_measure(8, 0.5, {}))
    assert P.weights[P.K] == 1 and P.mass == 1


def test_poisson_scalar_law():
    K = 40
    P = poisson_exponential(point_measure(K, 1.0, {1: 0.5}), K=20)
    for k in range(8):
        assert P.weights[K + k] == pytest.approx(math.exp(-0.5) * 0.5**k / math.factorial(k), rel=1e-12)
    assert abs(P.mass - 1) < 1e-10


def test_poisson_mass_on_cauchy(cauchy):
    P = poisson_exponential(lambda_measure(cauchy, 0.25, GRID), K=20)
    assert abs(P.mass - 1) < 1e-10


def test_tilt_keeps_origin_weight():
    P = point_measure(4, 0.5, {0: 0.3, 1: 0.2, -3: 0.5})
    T = tilt_measure(P, 0.5, 2.0)
    assert T.weights[P.K] == P.weights[P.K]
    assert T.mass >= P.mass


def test_tilt_monotone_in_gamma_on_unit_ball():
    P = point_measure(4, 0.25, {0: 0.3, 1: 0.2, -3: 0.4, 4: 0.1})
    masses = [tilt_measure(P, g, 3.0).mass for g in (0.25, 0.5, 1.0)]
    assert masses == sorted(masses)


def test_tilt_moment_matches_definition():
    P = point_measure(4, 0.25, {0: 0.3, 2: 0.7})
    assert tilt_moment(P, 1.0, 2.0) == pytest.approx(2.0 * 0.5 * 0.7)


def test_upper_envelope_without_jumps():
    Q = point_measure(8, 0.5, {})
    x = np.linspace(-3, 3, 13)
    rho = 1.7
    out = eval_upper_envelope(x, 1.0, PARAMS, Q, rho)
    assert np.allclose(out, rho * f_upper(rho * x, PARAMS.a3, PARAMS.a4), rtol=1e-14)
    assert eval_upper_envelope(0.0, 1.0, PARAMS, Q, rho) == pytest.approx(PARAMS.a3 * rho)


def test_lower_bound_shape():
    rho = 2.0
    assert eval_lower_bound(0.0, 1.0, PARAMS, rho) == pytest.approx(PARAMS.a1 * rho)
    assert eval_lower_bound(1 / (PARAMS.a2 * rho), 1.0, PARAMS, rho) == 0
    assert eval_lower_bound(5.0, 1.0, PARAMS, rho) == 0


def test_envelope_constants_positive():
    with pytest.raises(KernelError):
        EnvelopeParams(a1=0.0, a2=1.0, a3=1.0, a4=1.0)


def test_measures_on_different_nodes_do_not_mix():
    with pytest.raises(KernelError) as exc:
        point_measure(4, 0.5, {0: 1}).convolve(point_measure(4, 0.25, {0: 1}))
    assert exc.value.code == "GRID_MISMATCH"


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.0, 1.0), min_size=3, max_size=41).filter(lambda w: len(w) % 2 == 1),
       st.floats(0.0, 1.0))
def test_convolution_with_origin_atom_scales_mass(w, v):
    a = GridMeasure(np.array(w), 0.5, "a", 1.0)
    c = a.convolve(point_measure(a.K, 0.5, {0: v}))
    assert c.mass == pytest.approx(a.mass * v, rel=1e-12, abs=1e-14)
    assert np.allclose(c.weights, v * a.weights, rtol=1e-12, atol=1e-14)


def test_negative_roundoff_is_clipped():
    m = GridMeasure(np.array([0.1, -1e-18, 0.2]), 1.0, "x", 1.0)
    assert m.clipped == pytest.approx(1e-18)
    assert np.all(m.weights >= 0)
