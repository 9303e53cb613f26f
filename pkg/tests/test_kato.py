import math

import numpy as np
import pytest

from levykernel.errors import KernelError
from levykernel.kato import (DIVERGENT, FINITE, IN_SK, OUT, MeasureSpec, SelfSimilarKernel,
                             cantor_cdf, criterion_alt, direct_class_check, dynkin_criterion,
                             kato_criterion, sufficient_condition_check, u_potential)
from levykernel.model import build_profile

from conftest import power_model

DELTA0 = MeasureSpec(atoms=[(0.0, 1.0)], name="delta0")
LEBESGUE = MeasureSpec(uniform=[(-1.0, 1.0, 1.0)], name="lebesgue")
CANTOR = MeasureSpec(cantor=[(0.0, 1.0, 1.0)], name="cantor")
ZERO = MeasureSpec(name="zero")


@pytest.fixture(scope="module")
def prof15():
    return build_profile(power_model(1.5))


@pytest.fixture(scope="module")
def prof10():
    return build_profile(power_model(1.0))


def test_u_potential_alpha_three_halves(prof15):
    assert float(u_potential(prof15, 0.25)) == pytest.approx(0.1875, rel=1e-12)
    assert float(u_potential(prof15, 1.0)) == 0.0
    r = np.geomspace(1e-6, 1, 7)
    assert np.allclose(u_potential(prof15, r), 0.375 * (1 - np.sqrt(r)), rtol=1e-12)


def test_u_potential_alpha_one_is_logarithmic(prof10):
    r = np.geomspace(1e-8, 1, 9)
    assert np.allclose(u_potential(prof10, r), np.log(1 / r) / 4, rtol=1e-12, atol=1e-15)


def test_dynkin_point_mass(prof15, prof10):
    value, verdict, _ = dynkin_criterion(prof15, DELTA0)
    assert verdict == FINITE
    assert value == pytest.approx(0.375, abs=1e-4)
    value, verdict, ladder = dynkin_criterion(prof10, DELTA0)
    assert verdict == DIVERGENT and value == math.inf
    assert np.all(np.diff(ladder) > 0)


def test_kato_criterion_lebesgue_and_zero(prof15):
    vals, _, verdict = kato_criterion(prof15, LEBESGUE)
    assert verdict == IN_SK
    assert vals[-1] < 1e-3 * vals[0]
    vals, _, verdict = kato_criterion(prof15, ZERO)
    assert verdict == IN_SK and not any(vals)


def test_alternative_criterion(prof15):
    assert criterion_alt(prof15, DELTA0) == pytest.approx(0.375, rel=1e-4)
    assert criterion_alt(prof15, ZERO) == 0.0
    ratio = criterion_alt(prof15, LEBESGUE) / dynkin_criterion(prof15, LEBESGUE)[0]
    assert 0.25 <= ratio <= 4


@pytest.mark.parametrize("measure, expected", [(LEBESGUE, 1.0), (DELTA0, 0.0),
                                               (CANTOR, math.log(2) / math.log(3))])
def test_sufficient_condition_dimension(measure, expected):
    d_hat, _ = sufficient_condition_check(measure, 1.5)
    assert d_hat == pytest.approx(expected, abs=0.01)


def test_cantor_cdf_self_similar():
    x = np.linspace(0, 1, 37)
    assert np.allclose(cantor_cdf(x / 3), cantor_cdf(x) / 2, atol=1e-12)
    assert cantor_cdf(0.5) == pytest.approx(0.5)


def test_ball_mass():
    assert LEBESGUE.ball_mass(0.0, 0.5) == pytest.approx(1.0)
    assert DELTA0.ball_mass(0.2, 0.1) == 0.0
    assert CANTOR.ball_mass(0.5, 1.0) == pytest.approx(1.0)


def test_invalid_measure():
    with pytest.raises(KernelError):
        MeasureSpec(atoms=[(0.0, -1.0)])


def test_direct_route_zero_measure():
    kernel = SelfSimilarKernel.from_model(power_model(1.5))
    rep = direct_class_check(kernel, ZERO)
    assert rep["verdict"] == IN_SK and not any(rep["values"])


def test_direct_route_point_mass_alpha_one():
    kernel = SelfSimilarKernel.from_model(power_model(1.0))
    assert direct_class_check(kernel, DELTA0)["verdict"] == OUT


def test_self_similar_kernel_requires_constant_stable(modulated):
    with pytest.raises(KernelError) as exc:
        SelfSimilarKernel.from_model(modulated)
    assert exc.value.code == "KERNEL_RANGE"
