import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from ergolab import dynsys as D
from ergolab import ergostat as E
from ergolab import observables as O
from ergolab.errors import DomainError, MisuseError


def _doubling_lag_one():
    """Integral of (x - 1/2)(2x mod 1 - 1/2) over [0, 1], by quadrature."""
    g = lambda x: (x - 0.5) * ((2 * x) % 1.0 - 0.5)  # noqa: E731
    return integrate.quad(g, 0, 0.5)[0] + integrate.quad(g, 0.5, 1)[0]


# quadrature result frozen: equals 1/24
DOUBLING_C1 = 0.041666666666666664


def test_lag_one_oracle():
    assert _doubling_lag_one() == pytest.approx(DOUBLING_C1, abs=1e-12)


@pytest.fixture(scope="module")
def doubling_ensemble():
    s = D.make_system("doubling")
    return s, D.generate_ensemble(s, D.EnsembleSpec(1000, 1020, seed=101))


def test_birkhoff_examples():
    assert E.birkhoff_average(O.constant(2.0), np.zeros(9)) == 2.0
    s = D.make_system("doubling")
    orbit = D.generate_ensemble(s, D.EnsembleSpec(1, 10**6, seed=4)).orbits[0]
    assert abs(E.birkhoff_average(O.coordinate(), orbit) - 0.5) <= 3 * 0.5 / 1000


def test_birkhoff_intermittent_two_seeds():
    s = D.make_system("manneville_pomeau", alpha=0.75)
    a = [E.birkhoff_average(O.coordinate(), D.generate_ensemble(s, D.EnsembleSpec(1, 10**6, seed=q)).orbits[0])
         for q in (1, 2)]
    assert abs(a[0] - a[1]) <= 0.01


def test_autocovariance_examples(doubling_ensemble):
    s, ens = doubling_ensemble
    f = O.center(O.coordinate(), s)
    c1, se1 = E.autocovariance(f, ens, 1)
    assert abs(c1 - DOUBLING_C1) <= 3 * se1
    c0, se0 = E.autocovariance(f, ens, 0)
    assert abs(c0 - 1 / 12) <= 3 * se0
    zero = O.Observable("constant", (0.0,), mean_zero=True)
    assert E.autocovariance(zero, ens, 3)[0] == 0.0
    with pytest.raises(MisuseError):
        E.autocovariance(O.coordinate(), ens, 1)


def test_covariance_series_geometric(doubling_ensemble):
    s, ens = doubling_ensemble
    f = O.center(O.coordinate(), s)
    cs = E.covariance_series(f, ens, 8, n=1000)
    exact = 2.0 ** -np.arange(9) / 12
    assert np.all(np.abs(cs.values - exact) <= 3 * cs.stderr)
    assert E.covariance_series(f, ens, 0).values.shape == (1,)


def test_covariance_series_iid_zero():
    s = D.make_system("iid_rademacher")
    f = O.center(O.coordinate(), s)
    ens = D.generate_ensemble(s, D.EnsembleSpec(400, 520, seed=8))
    cs = E.covariance_series(f, ens, 20, n=500)
    assert np.all(np.abs(cs.values[1:]) <= 3 * cs.stderr[1:] + 1e-15) or \
        np.sum(np.abs(cs.values[1:]) > 3 * cs.stderr[1:]) <= 1


def _series(values, se=None):
    v = np.asarray(values, dtype=float)
    return E.CovarianceSeries(v, np.full(v.size, 1e-6) if se is None else np.asarray(se), 1000)


def test_green_kubo_examples():
    assert E.green_kubo(_series([1.0] + [0.0] * 10)).sigma2 == 1.0
    exact = 2.0 ** -np.arange(60) / 12
    assert E.green_kubo(_series(exact, np.full(60, 1e-30))).sigma2 == pytest.approx(0.25, abs=1e-15)
    gk = E.green_kubo(_series(np.zeros(10)))
    assert gk.sigma2 == 0.0 and gk.degenerate


def test_green_kubo_geometric_closed_form():
    rho, c0 = 0.6, 2.0
    vals = c0 * rho ** np.arange(80)
    gk = E.green_kubo(_series(vals, np.full(80, 1e-12)))
    assert gk.sigma2 == pytest.approx(c0 * (1 + rho) / (1 - rho), rel=1e-9)


def test_green_kubo_clamps():
    gk = E.green_kubo(_series([1.0, -0.9, -0.9], [1e-6] * 3))
    assert gk.sigma2 == 0.0 and gk.clamped and gk.degenerate


def test_empirical_measure_examples():
    d = E.empirical_measure([0.3])
    assert d.atoms.tolist() == [0.3] and d.weights.tolist() == [1.0]
    d2 = E.empirical_measure([0.9, 0.1])
    assert d2.atoms.tolist() == [0.1, 0.9] and d2.weights.tolist() == [0.5, 0.5]


def test_empirical_measure_doubling_uniform():
    s = D.make_system("doubling")
    orbit = D.generate_ensemble(s, D.EnsembleSpec(1, 10**6, seed=12)).orbits[0]
    assert E.ks_distance(E.empirical_measure(orbit), E.uniform_law()) <= 0.01


def test_kantorovich_examples():
    d = E.empirical_measure([0.1, 0.4, 0.4, 0.8])
    assert E.kantorovich_1d(d, d) == 0.0
    assert E.kantorovich_1d(E.empirical_measure([1.5]), E.empirical_measure([-0.5])) == pytest.approx(2.0)
    assert E.kantorovich_1d(E.uniform_law(), E.empirical_measure([0.5])) == pytest.approx(0.25, abs=1e-15)


def test_kantorovich_to_normal_matches_quadrature(rng):
    x = rng.normal(0, 0.7, 300)
    d = E.empirical_measure(x)
    law = E.normal_law(0.49)
    grid = np.linspace(-8, 8, 400001)
    direct = np.trapezoid(np.abs(d.cdf(grid) - law.cdf(grid)), grid)
    assert E.kantorovich_1d(d, law) == pytest.approx(direct, abs=1e-6)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.lists(st.floats(-5, 5), min_size=1, max_size=12), min_size=3, max_size=3))
def test_kantorovich_metric(samples):
    a, b, c = (E.empirical_measure(s) for s in samples)
    ab, ba = E.kantorovich_1d(a, b), E.kantorovich_1d(b, a)
    assert ab == pytest.approx(ba, abs=1e-12)
    assert ab <= E.kantorovich_1d(a, c) + E.kantorovich_1d(c, b) + 1e-12
    same = a.atoms.size == b.atoms.size and np.all(a.atoms == b.atoms) and np.all(a.weights == b.weights)
    assert (ab == 0) == bool(same)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=1, max_size=30), st.floats(0.0, 4.0))
def test_ks_in_unit_interval(samples, var):
    ks = E.ks_distance(E.empirical_measure(samples), E.normal_law(var))
    assert 0.0 <= ks <= 1.0


def test_ks_examples():
    grid = np.linspace(0, 1, 11)
    d = E.empirical_measure(grid)
    assert E.ks_distance(d, d) == 0.0
    u = E.empirical_measure((np.arange(10**4) + 0.5) / 10**4)
    step = E.empirical_measure([0.5])
    assert E.ks_distance(u, step) == pytest.approx(0.5, abs=1e-4)
    assert E.ks_distance(E.empirical_measure([0.0]), E.normal_law(1.0)) == 0.5


def test_density_histogram_doubling_flat():
    s = D.make_system("doubling")
    ens = D.generate_ensemble(s, D.EnsembleSpec(10, 10**5, seed=21))
    h = E.invariant_density_histogram(ens, bins=20)
    assert math.fsum((h.density * np.diff(h.edges)).tolist()) == pytest.approx(1.0, abs=1e-9)
    p = 1 / 20
    sd = math.sqrt(p * (1 - p) / 10**6) / p
    assert np.all(np.abs(h.density - 1.0) <= 3 * sd * 3)  # orbit correlations widen the binomial error


def test_density_histogram_intermittent_slope():
    s = D.make_system("manneville_pomeau", alpha=0.75)
    ens = D.generate_ensemble(s, D.EnsembleSpec(100, 10**5, seed=3))
    h = E.invariant_density_histogram(ens, bins=40, range_=(1e-3, 0.05), log=True)
    ok = h.counts > 0
    slope = np.polyfit(np.log(h.mids[ok]), np.log(h.density[ok]), 1)[0]
    assert abs(slope + 0.75) <= 0.15
    with pytest.raises(MisuseError):
        E.invariant_density_histogram(D.generate_ensemble(D.make_system("cat"), D.EnsembleSpec(2, 5, 1)))


def test_nonconventional_examples(rng):
    from fractions import Fraction

    orbit = rng.random(50)
    f = O.coordinate()
    assert E.nonconventional_average([f], orbit, 50) == pytest.approx(E.birkhoff_average(f, orbit))
    assert E.nonconventional_average([O.constant(1)] * 3, orbit, 10) == 1.0
    per2 = D.iterate(D.make_system("doubling"), Fraction(1, 3), 3).points
    assert E.nonconventional_average([f, f], per2, 2) == pytest.approx(1 / 6, abs=1e-15)
    with pytest.raises(DomainError):
        E.nonconventional_average([f, f], per2[:2], 2)


def test_nonconventional_iid_product_of_means():
    s = D.make_system("iid_uniform")
    f = O.center(O.coordinate(), s)
    ens = D.generate_ensemble(s, D.EnsembleSpec(2000, 3 * 199 + 1, seed=31))
    v = np.array([E.nonconventional_average([f, f, f], o, 200) for o in ens.orbits])
    assert abs(v.mean()) <= 3 * v.std(ddof=1) / math.sqrt(v.size)


def test_streamed_blocks_match_whole():
    from ergolab import deviation as V
    from ergolab import limitlaw as L

    s = D.make_system("doubling")
    f = O.center(O.coordinate(), s)
    spec = D.EnsembleSpec(30, 40, seed=3)
    whole = D.generate_ensemble(s, spec)
    for block in (None, 7):
        assert np.array_equal(E.ensemble_sums(f, D.iter_ensemble(s, spec, block=block), [40]),
                              E.ensemble_sums(f, whole, [40]))
        c = V.cgf_estimate(f, D.iter_ensemble(s, spec, block=block), 40, [0.5])
        assert c.m_used == 30 and c.psi[0] == V.cgf_estimate(f, whole, 40, [0.5]).psi[0]
        d = L.normalized_sums(f, D.iter_ensemble(s, spec, block=block), L.RenormSequence())
        assert d.atoms.size == L.normalized_sums(f, whole, L.RenormSequence()).atoms.size
