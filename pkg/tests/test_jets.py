"""Forward second-order jets: seeding, chain rules, derivative channels."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import central_diff, central_diff2
from mfpinn import jets as jm
from mfpinn.errors import DomainError, EvaluationError

finite = st.floats(min_value=-3.0, max_value=3.0,
                   allow_nan=False, allow_infinity=False)


def scalar_jet(x, second=True):
    return jm.lift([x], active=[0], second=[0] if second else [])[0]


def test_lift_seeds_unit_first_derivative():
    a, b = jm.lift([2.0, 5.0], active=[0, 1], second=[0])
    assert a.value == 2.0 and a.d1 == (1.0, 0.0) and a.d2 == (0.0,)
    assert b.value == 5.0 and b.d1 == (0.0, 1.0) and b.d2 == (0.0,)


def test_lift_inactive_coordinate_is_constant():
    jets = jm.lift([4.0, 7.0], active=[1])
    assert jets[0].d1 == (0.0,)
    assert jets[1].d1 == (1.0,)


def test_named_coordinate_access():
    jets = jm.lift([1.0, 2.0], active=[0, 1], second=[1],
                   names={0: "x", 1: "t"})
    assert jets[0].d("x") == 1.0
    assert jets[1].d("t") == 1.0
    assert jets[1].dd("t") == 0.0
    with pytest.raises(DomainError):
        jets[0].dd("x")  # x carries no second-order channel


def test_out_of_range_active_coordinate_rejected():
    with pytest.raises(DomainError):
        jm.lift([1.0], active=[3])


def test_second_must_be_subset_of_active():
    with pytest.raises(DomainError):
        jm.JetCoords(active=(0,), second=(1,))


def test_square_jet_hand_values():
    # d/dx x^2 = 2x, d2/dx2 = 2 at x = 3
    x = scalar_jet(3.0)
    y = x * x
    assert y.value == 9.0
    assert y.d(0) == 6.0
    assert y.dd(0) == 2.0


def test_tanh_jet_frozen_values():
    # independently computed: tanh(0.5), sech^2(0.5), -2 tanh sech^2
    y = jm.tanh(scalar_jet(0.5))
    assert abs(y.value - 0.46211715726000974) < 1e-15
    assert abs(y.d(0) - 0.7864477329659274) < 1e-15
    assert abs(y.dd(0) - (-0.7268619813835873)) < 1e-15


def test_division_chain_rule():
    # f = (x + 2) / (x * x) at x = 1.5 against analytic derivatives
    x = 1.5
    j = scalar_jet(x)
    f = (j + 2.0) / (j * j)
    val = (x + 2.0) / x ** 2
    d1 = (x ** 2 - (x + 2.0) * 2.0 * x) / x ** 4
    d2 = (2.0 * x + 12.0) / x ** 4  # d2/dx2 of (x+2)/x^2 = (2x+12)/x^4
    assert abs(f.value - val) < 1e-14
    assert abs(f.d(0) - d1) < 1e-13
    assert abs(f.dd(0) - d2) < 1e-12


def test_division_by_zero_raises():
    j = scalar_jet(0.0)
    with pytest.raises(EvaluationError):
        (j + 1.0) / j


def test_log_domain_error():
    with pytest.raises(EvaluationError):
        jm.log(scalar_jet(-2.0))


def test_composite_against_finite_differences():
    def f(x):
        return np.sin(x) * np.exp(0.3 * x) + np.log(x + 4.0) / (1.0 + x * x)

    def jet_f(j):
        return jm.sin(j) * jm.exp(0.3 * j) + jm.log(j + 4.0) / (1.0 + j * j)

    for x in [-1.2, -0.3, 0.0, 0.7, 2.5]:
        y = jet_f(scalar_jet(x))
        assert abs(y.value - f(x)) < 1e-14
        assert abs(y.d(0) - central_diff(f, x)) < 1e-9
        assert abs(y.dd(0) - central_diff2(f, x)) < 1e-6


def test_two_coordinate_jets_keep_channels_apart():
    # g(x, t) = x^2 t + sin(t); no mixed partials are tracked
    xj, tj = jm.lift([1.2, 0.8], active=[0, 1], second=[0, 1])
    g = xj * xj * tj + jm.sin(tj)
    x, t = 1.2, 0.8
    assert abs(g.value - (x * x * t + np.sin(t))) < 1e-15
    assert abs(g.d(0) - 2.0 * x * t) < 1e-14
    assert abs(g.d(1) - (x * x + np.cos(t))) < 1e-14
    assert abs(g.dd(0) - 2.0 * t) < 1e-14
    assert abs(g.dd(1) - (-np.sin(t))) < 1e-14


def test_array_valued_channels_broadcast():
    x = np.array([0.5, 1.0, 2.0])
    jets = jm.lift([x], active=[0], second=[0])
    y = jm.exp(jets[0]) * 2.0
    assert np.allclose(y.value, 2.0 * np.exp(x))
    assert np.allclose(y.d(0), 2.0 * np.exp(x))
    assert np.allclose(y.dd(0), 2.0 * np.exp(x))


def test_power_integer_exponent():
    j = scalar_jet(1.7)
    y = jm.power(j, 3)
    assert abs(y.value - 1.7 ** 3) < 1e-14
    assert abs(y.d(0) - 3 * 1.7 ** 2) < 1e-13
    assert abs(y.dd(0) - 6 * 1.7) < 1e-13


def test_jet_elementary_dispatch():
    j = scalar_jet(0.4)
    y = jm.jet_elementary("tanh", j)
    assert y.value == np.tanh(0.4)
    with pytest.raises(DomainError):
        jm.jet_elementary("no_such_op", j)


def test_mismatched_coordinate_systems_rejected():
    a = jm.lift([1.0], active=[0])[0]
    b = jm.lift([1.0, 2.0], active=[0, 1])[0]
    with pytest.raises(DomainError):
        a + b


def test_non_finite_result_raises_with_op_name():
    big = scalar_jet(800.0)
    with pytest.raises(EvaluationError) as excinfo:
        jm.exp(big)
    assert excinfo.value.op == "exp"


@settings(max_examples=60, deadline=None)
@given(a=finite, b=finite)
def test_product_rule_property(a, b):
    ja, jb = jm.lift([a, b], active=[0, 1], second=[0, 1])
    p = ja * jb
    assert p.value == pytest.approx(a * b, abs=1e-12)
    assert p.d(0) == pytest.approx(b, abs=1e-12)
    assert p.d(1) == pytest.approx(a, abs=1e-12)
    assert p.dd(0) == pytest.approx(0.0, abs=1e-12)
    assert p.dd(1) == pytest.approx(0.0, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(a=finite, b=finite)
def test_addition_is_channelwise(a, b):
    ja, jb = jm.lift([a, b], active=[0, 1], second=[0, 1])
    s = ja + jb
    assert s.value == pytest.approx(a + b, abs=1e-12)
    assert s.d(0) == 1.0 and s.d(1) == 1.0
    assert s.dd(0) == 0.0 and s.dd(1) == 0.0


@settings(max_examples=40, deadline=None)
@given(x=st.floats(min_value=-2.0, max_value=2.0, allow_nan=False))
def test_sin_cos_consistency(x):
    j = scalar_jet(x)
    s, c = jm.sin(j), jm.cos(j)
    # derivative of sin is cos and vice versa, second derivatives negate
    assert s.d(0) == pytest.approx(c.value, abs=1e-12)
    assert c.d(0) == pytest.approx(-s.value, abs=1e-12)
    assert s.dd(0) == pytest.approx(-s.value, abs=1e-12)
    assert c.dd(0) == pytest.approx(-c.value, abs=1e-12)
