"""Exit criteria, one test (or small group) per criterion at its stated tolerance.

Each test carries a ``criterion`` marker; the terminal summary prints one
PASS/FAIL line per criterion.  Seeds are fixed constants.
"""
import math
import time
from fractions import Fraction

import numpy as np
import pytest

from ergolab import _kernels
from ergolab import concentration as C
from ergolab import deviation as V
from ergolab import dynsys as D
from ergolab import ergostat as E
from ergolab import limitlaw as L
from ergolab import observables as O
from ergolab.config import load_config
from ergolab.experiments import run
from ergolab.report import render

from test_expcli import CONFIGS

pytestmark = pytest.mark.acceptance


def _doubling():
    s = D.make_system("doubling")
    return s, O.center(O.coordinate(), s)


# ---------------------------------------------------------------- map evaluation


@pytest.mark.criterion("map_exactness")
def test_map_examples_and_exact_arithmetic():
    t0 = time.perf_counter()
    assert D.apply(D.make_system("doubling"), 0.3) == pytest.approx(0.6, abs=1e-12)
    assert D.mp_step(0.25, 1.0) == pytest.approx(0.375, abs=1e-12)
    for a in (0.2, 0.75):
        assert D.apply(D.make_system("manneville_pomeau", alpha=a), 0.5) == 0.0
    assert D.apply(D.make_system("cat"), (0.25, 0.5)) == pytest.approx((0.0, 0.75), abs=1e-12)
    assert D.apply(D.make_system("henon", a=1.4, b=0.3), (0.0, 0.0)) == pytest.approx((1.0, 0.0), abs=1e-12)
    assert D.apply(D.make_system("lozi", a=1.7, b=0.5), (1.0, 0.0)) == pytest.approx((-0.7, 0.5), abs=1e-12)
    # doubling: exact period two, far along the orbit
    pts = D.iterate(D.make_system("doubling"), Fraction(1, 3), 4, burn_in=10**4).points
    assert pts.tolist() == [1 / 3, 2 / 3, 1 / 3, 2 / 3]
    # cat: kernel residues against Python integer arithmetic mod 2^61 - 1
    M = _kernels.CAT_MODULUS
    ix, iy = 123456789012345, 987654321098765
    out = _kernels.cat_orbits(np.array([ix], dtype=np.int64), np.array([iy], dtype=np.int64), 50, 1000)[0]
    x, y = ix, iy
    for _ in range(1000):
        x, y = (2 * x + y) % M, (x + y) % M
    for j in range(50):
        assert out[j, 0] == x * (1.0 / M) and out[j, 1] == y * (1.0 / M)
        x, y = (2 * x + y) % M, (x + y) % M
    assert time.perf_counter() - t0 < 1.0


# ---------------------------------------------------------------- covariance


@pytest.mark.criterion("doubling_covariance_oracle")
def test_doubling_covariance_oracle():
    t0 = time.perf_counter()
    s, f = _doubling()
    ens = D.generate_ensemble(s, D.EnsembleSpec(1000, 1008, seed=2024))
    cs = E.covariance_series(f, ens, 8, n=1000)
    exact = 2.0 ** -np.arange(9) / 12
    assert np.all(np.abs(cs.values - exact) <= 3 * cs.stderr), (cs.values, cs.stderr)
    gk = E.green_kubo(E.covariance_series(f, ens, 8, n=1000))
    assert abs(gk.sigma2 - 0.25) <= 0.02, gk
    assert time.perf_counter() - t0 < 10.0


# ---------------------------------------------------------------- CLT


@pytest.mark.criterion("central_limit")
def test_clt_doubling():
    t0 = time.perf_counter()
    s, f = _doubling()
    res = L.clt_test(f, s, [10**4], 5000, seed=31, sigma2=0.25)
    assert res.rows[0].ks_distance <= 0.03, res.rows
    assert time.perf_counter() - t0 < 60.0


@pytest.mark.criterion("central_limit")
def test_clt_iid_control():
    t0 = time.perf_counter()
    s = D.make_system("iid_rademacher")
    res = L.clt_test(O.center(O.coordinate(), s), s, [10**4], 5000, seed=32, sigma2=1.0)
    assert res.rows[0].ks_distance <= 0.02, res.rows
    assert time.perf_counter() - t0 < 60.0


# ---------------------------------------------------------------- Berry-Esseen


@pytest.mark.criterion("berry_esseen_rate")
def test_berry_esseen_iid():
    s = D.make_system("iid_rademacher")
    res = L.berry_esseen_probe(O.center(O.coordinate(), s), s, [100, 1000, 10000], 10**5, seed=41, sigma2=1.0)
    assert -0.8 <= res.slope <= -0.3, (res.ks, res.slope)


@pytest.mark.criterion("berry_esseen_rate")
def test_berry_esseen_doubling():
    s, f = _doubling()
    res = L.berry_esseen_probe(f, s, [100, 1000, 10000], 10**5, seed=42, sigma2=0.25)
    assert -0.8 <= res.slope <= -0.3, (res.ks, res.slope)


# ---------------------------------------------------------------- stable regime


@pytest.mark.criterion("stable_regime")
def test_stable_regime():
    t0 = time.perf_counter()
    mp = D.make_system("manneville_pomeau", alpha=0.75)
    f = O.center(O.coordinate(), mp)
    res = L.stable_test(f, mp, 10**4, 10**4, seed=51)
    assert res.params.beta == -1.0 and res.params.p == pytest.approx(4 / 3)
    assert 1.08 <= res.tail.p_hat <= 1.58, res.tail
    assert res.cf_distance <= 0.08, res.cf_distance
    assert time.perf_counter() - t0 < 300.0


# ---------------------------------------------------------------- large deviations


@pytest.mark.criterion("subexponential_large_deviations")
def test_intermittent_large_deviations():
    mp = D.make_system("manneville_pomeau", alpha=0.75)
    f = O.center(O.coordinate(), mp)
    n_list = [2**j for j in range(7, 14)]
    curve = V.deviation_curve(f, D.iter_ensemble(mp, D.EnsembleSpec(30000, n_list[-1], seed=61)), n_list, 0.2)
    fit = V.decay_fit([(p.n, p.fraction) for p in curve])
    assert fit.regime == "polynomial", fit
    assert abs(fit.slope + 1 / 3) <= 0.15, fit


# ---------------------------------------------------------------- CGF and rate


@pytest.mark.criterion("cgf_rate_oracle")
def test_cgf_rademacher():
    s = D.make_system("iid_rademacher")
    f = O.center(O.coordinate(), s)
    z = np.linspace(-1, 1, 41)
    c = V.cgf_estimate(f, D.generate_ensemble(s, D.EnsembleSpec(10**5, 10, seed=71)), 10, z)
    assert np.all(np.abs(c.psi - np.log(np.cosh(z))) <= 3 * c.stderr + 1e-15)
    assert abs(V.legendre(c, 0.5).value - 0.1308) <= 0.01


@pytest.mark.criterion("cgf_rate_oracle")
def test_cgf_doubling_sign():
    s = D.make_system("doubling")
    f = O.center(O.sign_threshold(0.5), s)
    z = np.linspace(-1, 1, 41)
    c = V.cgf_estimate(f, D.iter_ensemble(s, D.EnsembleSpec(10**5, 10, seed=72)), 10, z)
    assert np.all(np.abs(c.psi - np.log(np.cosh(z))) <= 3 * c.stderr + 1e-15)
    assert abs(V.legendre(c, 0.5).value - 0.1308) <= 0.01


# ---------------------------------------------------------------- Erdős–Rényi


@pytest.mark.criterion("erdos_renyi_law")
def test_erdos_renyi_sliding_equals_brute_force():
    s = D.make_system("doubling")
    v = O.sign_threshold(0.5)(D.generate_ensemble(s, D.EnsembleSpec(1, 1000, seed=80)).orbits[0])
    for N in (10, 100, 1000):
        for k in (1, 2, 7, 10, N // 2, N):
            assert V.erdos_renyi_stat(v, k, N) == V.brute_force_window_max(v[:N], k)


@pytest.mark.criterion("erdos_renyi_law")
def test_erdos_renyi_seeds():
    s = D.make_system("doubling")
    f = O.sign_threshold(0.5)
    sums = []
    for seed in range(1000, 1010):
        r = V.erdos_renyi_rate(f, s, 0.5, 0.130812, [100], seed=seed)
        sums.append(int(round(r.ratios[0] * 100)))
    assert r.N_list == [479836]
    hits = sum(abs(M - 50) <= 8 for M in sums)  # |M_k/k - 1/2| <= 0.08 on integer sums
    assert hits >= 8, sums


# ---------------------------------------------------------------- ASCLT


@pytest.mark.criterion("almost_sure_clt")
def test_asclt_ten_orbits():
    s, f = _doubling()
    ens = D.generate_ensemble(s, D.EnsembleSpec(10, 10**6, seed=91))
    dists = [L.asclt_distance(f, o, [10**3, 10**6], 0.25) for o in ens.orbits]
    improved = sum(b < a for a, b in dists)
    assert improved >= 9, dists


# ---------------------------------------------------------------- empirical measure


@pytest.mark.criterion("empirical_measure_concentration")
def test_empirical_measure_concentration():
    s = D.make_system("doubling")
    res = C.empirical_measure_conc(s, [10**3, 10**4, 10**5], [10000, 2000, 500], seed=101)
    assert -0.65 <= res.slope <= -0.35, res.rows
    assert 0 < res.rows[1].mean_distance < 0.05
    assert res.envelope.regime == "gaussian_envelope" and res.envelope.quality >= 0.9, res.envelope


# ---------------------------------------------------------------- periodogram


@pytest.mark.criterion("periodogram_identities")
def test_periodogram_identities():
    rng = np.random.default_rng(111)
    for n in (1, 5, 64, 1000, 20000):
        v = rng.normal(size=n)
        exact = 2 * math.pi / n * math.fsum((v * v).tolist())
        assert abs(C.integrated_periodogram(v, 2 * math.pi) - exact) <= 1e-9 * exact
    for n in (1, 3, 16, 64):
        v = rng.normal(size=n)
        for w in np.linspace(0, 2 * math.pi, 9):
            assert abs(C.integrated_periodogram(v, w) - C.periodogram_quadrature(v, w)) <= 1e-6


@pytest.mark.criterion("periodogram_identities")
def test_periodogram_sup_dev_decreases():
    s, f = _doubling()
    a = C.periodogram_sup_dev(f, s, 5000, 100, seed=112)
    b = C.periodogram_sup_dev(f, s, 10000, 100, seed=112)
    assert b.median < a.median, (a.median, b.median)


# ---------------------------------------------------------------- variance bound


@pytest.mark.criterion("variance_bound")
def test_variance_bound_flat():
    s, f = _doubling()
    rows = C.average_variance_check(f, s, [100, 1000, 10000], 4000, seed=121)
    r = np.array([x.ratio for x in rows])
    assert np.all(np.abs(r - 0.25) <= 0.3 * 0.25), r
    assert np.all(np.abs(r / r.mean() - 1) <= 0.3), r


# ---------------------------------------------------------------- reproducibility


@pytest.mark.criterion("reproducibility")
@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.cfg")), ids=lambda p: p.stem)
def test_reports_byte_identical(path):
    cfg = load_config(path)
    if cfg.get("ensemble.m") is not None:
        cfg.values["ensemble.m"] = min(cfg["ensemble.m"], 3000)
    first = {fmt: render(run(cfg), fmt) for fmt in ("csv", "json")}
    second = {fmt: render(run(cfg), fmt) for fmt in ("csv", "json")}
    assert first == second
