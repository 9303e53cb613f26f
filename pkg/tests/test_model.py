import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from levykernel.errors import KernelError
from levykernel.model import (LevyBaseMeasure, build_profile, fit_exponents, model_from_dict,
                              q_exponent, q_star, q_upper_lower, rho_from_q_star, validate_model)

from conftest import power_model


def atomic_model():
    return model_from_dict({"base": {"dim": 1, "family": "none", "atoms": [[[1.0], 1.0], [[-1.0], 1.0]]},
                            "beta": 2.0})


def test_stable_model_passes_with_beta_hat_two_over_alpha():
    alpha = 1.5
    rep = validate_model(power_model(alpha))
    assert rep.passed
    assert rep.beta_hat == pytest.approx(2 / alpha, rel=1e-6)


def test_upper_lower_closed_form_against_quadrature():
    alpha, r = 1.5, 3.0
    base = power_model(alpha).base
    up, lo = q_upper_lower(base, r)
    assert up == pytest.approx(4 * r**alpha / (alpha * (2 - alpha)), rel=1e-6)
    assert lo == pytest.approx(2 * r**alpha / (2 - alpha), rel=1e-6)


def test_atomic_measure_fails_a1():
    with pytest.raises(KernelError) as exc:
        validate_model(atomic_model(), raise_on_fail=True)
    assert exc.value.code == "FAILS_A1"


def test_atomic_upper_symbol():
    base = atomic_model().base
    for r in (0.3, 1.0, 5.0):
        assert q_upper_lower(base, r)[0] == pytest.approx(2 * min(r * r, 1.0), rel=1e-12)


def test_holder_modulation_passes_a2_a3(modulated):
    rep = validate_model(modulated)
    assert rep.assumptions["A2"] and rep.assumptions["A3"]


def test_asymmetric_stable_with_alpha_one_rejected():
    with pytest.raises(KernelError) as exc:
        model_from_dict({"base": {"alpha": 1.0}, "symmetric": False})
    assert exc.value.code == "CONFIG_INVALID"


def test_cauchy_symbol(cauchy):
    for xi in (0.5, 1.0, 4.0):
        q = q_exponent(cauchy, 0.0, xi)
        assert q.real == pytest.approx(math.pi * xi, rel=1e-6)
        assert q.imag == 0.0


def test_symbol_vanishes_at_origin(cauchy):
    assert q_exponent(cauchy, 0.0, 0.0) == 0


def test_upper_lower_at_one_and_zero(cauchy):
    assert q_upper_lower(cauchy.base, 1.0) == pytest.approx((4.0, 2.0), rel=1e-8)
    assert q_upper_lower(cauchy.base, 0.0) == (0.0, 0.0)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.01, 1e3), st.sampled_from([0.5, 1.0, 1.5]))
def test_symbol_sandwich(xi, alpha):
    m = power_model(alpha)
    up, lo = q_upper_lower(m.base, xi)
    re = q_exponent(m, 0.0, xi).real
    assert lo <= up
    assert (1 - math.cos(1)) * lo <= re * (1 + 1e-6)
    assert re <= 2 * up * (1 + 1e-6)


def test_q_star_cauchy(cauchy):
    r = np.array([0.0, 0.5, 1.0, 7.0])
    assert np.allclose(q_star(cauchy.base, r), 4 * r, rtol=1e-8)


@settings(max_examples=25, deadline=None)
@given(st.floats(1e-3, 1e3), st.floats(1.0, 10.0))
def test_q_star_monotone_and_doubling(r, c):
    base = LevyBaseMeasure(family="truncated-power", alpha=1.2, cutoff=1.0)
    a, b = float(q_star(base, r)), float(q_star(base, c * r))
    assert a <= b * (1 + 1e-10)
    if r >= 1:
        assert b <= c * c * a * (1 + 1e-8)


@pytest.mark.parametrize("t, rho", [(0.25, 1.0), (1.0, 0.25)])
def test_rho_cauchy(cauchy, t, rho):
    prof = build_profile(cauchy)
    assert prof.rho(t) == pytest.approx(rho, rel=1e-10)


def test_rho_undefined_for_atoms():
    base = atomic_model().base
    with pytest.raises(KernelError) as exc:
        rho_from_q_star(lambda r: base.q_star(r), 0.1, r_cap=1e12)
    assert exc.value.code == "RHO_UNDEFINED"


def test_profile_ladder_identity(cauchy):
    prof = build_profile(cauchy)
    t = prof.t_ladder
    assert t.max() / t.min() >= 100
    assert np.allclose(t * prof.q_star(prof.rho_table), 1.0, rtol=1e-10)
    assert np.all(np.diff(prof.rho_table) <= 0)


@pytest.mark.parametrize("alpha", [0.8, 1.0, 1.5])
def test_sigma_equals_alpha_for_stable(alpha):
    prof = build_profile(power_model(alpha))
    assert prof.sigma == pytest.approx(alpha, abs=1e-9)
    assert np.all(prof.rho_table * prof.t_ladder ** (1 / alpha) <= prof.c1 * (1 + 1e-12))


def test_truncated_exponent_at_small_t():
    base = LevyBaseMeasure(family="truncated-power", alpha=1.5, cutoff=1.0)
    t = np.geomspace(1e-6, 1e-4, 11)
    prof = build_profile(base, alpha=1.5, t_ladder=t)
    slope = np.polyfit(np.log(t), np.log(prof.rho_table), 1)[0]
    assert -1 / slope == pytest.approx(1.5, abs=0.02)
    a, sigma, _, _ = fit_exponents(t, prof.rho_table, 1.5)
    assert sigma == pytest.approx(1.5, abs=1e-9)


def test_fingerprint_is_stable(cauchy):
    assert cauchy.fingerprint() == power_model(1.0).fingerprint()
    assert cauchy.fingerprint() != power_model(1.5).fingerprint()
