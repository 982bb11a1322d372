import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ergolab import dynsys as D
from ergolab import observables as O
from ergolab.ergostat import birkhoff_average
from ergolab.errors import DomainError, MisuseError


def test_eval_examples():
    assert O.evaluate(O.constant(3), 0.2) == 3
    assert O.evaluate(O.coordinate(), 0.7) == 0.7
    assert O.evaluate(O.sign_threshold(0.5), 0.3) == -1
    assert O.evaluate(O.sign_threshold(0.5), 0.5) == 1


def test_tabulated_grid_policy():
    f = O.tabulated([0.0, 0.5, 1.0], [0.0, 1.0, 0.0], interpolate=False)
    assert f(0.5) == 1.0
    with pytest.raises(DomainError):
        f(0.25)
    g = O.tabulated([0.0, 0.5, 1.0], [0.0, 1.0, 0.0])
    assert g(0.25) == pytest.approx(0.5)
    assert g.lipschitz_constant == pytest.approx(2.0)


def test_ergodic_sum_examples():
    assert O.ergodic_sum(O.constant(2.5), np.zeros(5)) == 12.5
    orbit = D.iterate(D.make_system("doubling"), Fraction(1, 3), 2).points
    assert O.ergodic_sum(O.coordinate(), orbit) == pytest.approx(1.0, abs=1e-15)
    assert O.ergodic_sum(O.centered_coordinate(0.5), [0.0, 0.0, 0.0]) == -1.5


def test_ergodic_sum_and_average_agree(rng):
    f = O.coordinate()
    for n in (1, 7, 1000, 12345):
        orbit = rng.random(n)
        s = O.ergodic_sum(f, orbit)
        assert n * birkhoff_average(f, orbit) == pytest.approx(s, rel=2**-52, abs=0)


def test_value_at_zero_and_centering():
    s = D.make_system("doubling")
    f = O.center(O.coordinate(), s)
    assert f.mean_zero and f.params == (0.5,)
    assert f.value_at_zero == -0.5
    g = O.center(O.sign_threshold(0.5), s)
    assert g.shift == 0.0 and g.mean_zero
    r = O.center(O.affine(1.0, 2.0), D.make_system("iid_rademacher"))
    assert r.shift == 1.0


def test_planar_coordinate_selection():
    s = D.make_system("henon")
    f = O.coordinate(1).on(s)
    assert f(np.array([[0.3, -0.1], [0.2, 0.05]])).tolist() == [-0.1, 0.05]


@pytest.mark.parametrize(
    "f",
    [O.coordinate(), O.centered_coordinate(0.3), O.affine(0.5, -2.5), O.constant(4.0),
     O.tabulated([0, 0.2, 0.7, 1], [0, 1, -1, 0.5])],
)
def test_lipschitz_probe(f, rng):
    x, y = rng.random(10**4), rng.random(10**4)
    assert np.all(np.abs(f(x) - f(y)) <= f.lipschitz_constant * np.abs(x - y) + 1e-12)


def test_sign_threshold_not_lipschitz():
    f = O.sign_threshold(0.5)
    assert math.isinf(f.lipschitz_constant)
    with pytest.raises(MisuseError):
        O.requires_finite_lipschitz(f)


def test_functional_eval_examples():
    n = 6
    K = O.ergodic_average_functional(O.coordinate(), n)
    assert O.functional_eval(K, np.full(n, 0.3)) == pytest.approx(0.3)
    Z = O.correlation_functional(O.constant(0.0), 5, 2, 0.0)
    assert O.functional_eval(Z, np.random.default_rng(0).random(7)) == 0.0
    s = D.make_system("doubling")
    ref = D.generate_ensemble(s, D.EnsembleSpec(5, 10, seed=1)).orbits
    Sh = O.shadowing_functional(s, ref)
    assert O.functional_eval(Sh, ref[3]) == 0.0
    with pytest.raises(DomainError):
        O.functional_eval(K, np.zeros(n + 1))


def test_lip_sum_sq():
    L, n = 2.0, 10
    assert O.lip_sum_sq(O.ergodic_sum_functional(O.affine(0, L), n)) == pytest.approx(n * L * L)
    assert O.lip_sum_sq(O.ergodic_average_functional(O.affine(0, L), n)) == pytest.approx(L * L / n)
    with pytest.raises(DomainError):
        O.lip_sum_sq(O.ergodic_sum_functional(O.sign_threshold(0.5), n))


def test_correlation_lipschitz_constants():
    # variable i appears in f(x_i) f(x_{i+k}) and in f(x_{i-k}) f(x_i)
    f, n, k, sup = O.centered_coordinate(0.5), 8, 3, 0.5
    K = O.correlation_functional(f, n, k, sup)
    base = sup * 1.0 / n
    expected = [base * ((i < n) + (k <= i)) for i in range(n + k)]
    assert K.lip == pytest.approx(tuple(expected))
    assert O.lip_sum_sq(K) == pytest.approx(sum(e * e for e in expected))
    K0 = O.correlation_functional(f, n, 0, sup)
    assert K0.lip == pytest.approx((2 * base,) * n)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 4), st.integers(1, 12), st.floats(1e-4, 0.2), st.integers(0, 2**31))
def test_separately_lipschitz_probe(k, n, delta, seed):
    rng = np.random.default_rng(seed)
    s = D.make_system("doubling")
    f = O.centered_coordinate(0.5)
    ref = rng.random((3, n))
    funcs = [
        O.ergodic_sum_functional(f, n),
        O.ergodic_average_functional(f, n),
        O.correlation_functional(f, n, k, 0.5),
        O.shadowing_functional(s, ref),
    ]
    for K in funcs:
        w = rng.random(K.arity) * (1 - delta)
        i = int(rng.integers(K.arity))
        w2 = w.copy()
        w2[i] += delta
        diff = abs(O.functional_eval(K, w2) - O.functional_eval(K, w))
        assert diff <= K.lip[i] * delta + 1e-12
