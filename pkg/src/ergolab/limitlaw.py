"""Distributional limit tests: CLT, stable laws, log-averaged CLT, rate probes."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special

from .dynsys import EnsembleSpec, generate_ensemble, iter_ensemble
from .ergostat import (
    covariance_series,
    empirical_measure,
    ensemble_sums,
    green_kubo,
    kantorovich_1d,
    ks_distance,
    normal_law,
    peek,
)
from .errors import DomainError, MisuseError

DEFAULT_CF_GRID = np.linspace(-2.0, 2.0, 41)


# ---------------------------------------------------------------- types


@dataclass(frozen=True)
class StableLawParams:
    p: float
    c: float
    beta: float

    def __post_init__(self):
        if not 1.0 < self.p <= 2.0:
            raise DomainError(f"stable index p={self.p} outside (1, 2]")
        if not self.c > 0:
            raise DomainError("stable scale c must be > 0")
        if not -1.0 <= self.beta <= 1.0:
            raise DomainError(f"skewness beta={self.beta} outside [-1, 1]")


@dataclass(frozen=True)
class RenormSequence:
    kind: str = "sqrt_n"
    alpha: float | None = None

    def __post_init__(self):
        if self.kind not in ("sqrt_n", "n_alpha", "sqrt_n_log_n"):
            raise DomainError(f"unknown renormalization {self.kind!r}")
        if self.kind == "n_alpha" and not (self.alpha and self.alpha > 0):
            raise DomainError("n_alpha needs alpha > 0")

    def __call__(self, n):
        return renorm_value(self, n)

    @property
    def first_index(self):
        return 2 if self.kind == "sqrt_n_log_n" else 1


def renorm_value(seq, n):
    n_arr = np.asarray(n, dtype=float)
    if np.any(n_arr < 1):
        raise DomainError("n must be >= 1")
    if seq.kind == "sqrt_n":
        out = np.sqrt(n_arr)
    elif seq.kind == "n_alpha":
        out = n_arr**seq.alpha
    else:
        if np.any(n_arr < 2):
            raise DomainError("sqrt(n log n) needs n >= 2")
        out = np.sqrt(n_arr * np.log(n_arr))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class LogAvgMeasure:
    """Atoms S_k f / B_k with weights proportional to 1/k, summing to one."""

    atoms: np.ndarray
    weights: np.ndarray
    ks: np.ndarray

    def total(self):
        return math.fsum(self.weights.tolist())

    def distribution(self):
        return empirical_measure(self.atoms, self.weights)


# ---------------------------------------------------------------- sums


def sum_samples(f, ensemble, n_list):
    """Raw ergodic sums, one row per orbit, one column per n."""
    return ensemble_sums(f, ensemble, n_list)


def normalized_sums(f, ensemble, seq, n=None):
    """Empirical law of S_n f / B_n, one sample per orbit (n defaults to the orbit length)."""
    if not f.mean_zero:
        raise MisuseError("normalized sums need a centered observable")
    if n is None:
        first, ensemble = peek(ensemble)
        n = first.n
    s = ensemble_sums(f, ensemble, [n])[:, 0]
    return empirical_measure(s / renorm_value(seq, n))


def gaussian_cdf(t, sigma2):
    """Phi(t / sigma); the Heaviside step when sigma2 == 0."""
    if sigma2 < 0:
        raise DomainError("variance must be >= 0")
    t = np.asarray(t, dtype=float)
    if sigma2 == 0:
        out = np.where(t >= 0, 1.0, 0.0)
    else:
        out = special.ndtr(t / math.sqrt(sigma2))
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------- characteristic functions


def stable_cf(t, params: StableLawParams):
    """exp(-c|t|^p (1 - i beta sgn(t) tan(p pi / 2)))."""
    t = np.asarray(t, dtype=float)
    p, c, beta = params.p, params.c, params.beta
    skew = 0.0 if p == 2.0 else beta * math.tan(p * math.pi / 2)
    out = np.exp(-c * np.abs(t) ** p * (1 - 1j * skew * np.sign(t)))
    return complex(out) if out.ndim == 0 else out


def _samples_and_weights(samples):
    if hasattr(samples, "atoms"):
        return samples.atoms, samples.weights
    s = np.asarray(samples, dtype=float).ravel()
    if s.size == 0:
        raise DomainError("no samples")
    return s, None


def empirical_cf(samples, t):
    """Sample mean of exp(i t s)."""
    s, w = _samples_and_weights(samples)
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    phase = np.exp(1j * np.outer(t_arr, s))
    out = phase.mean(axis=1) if w is None else phase @ w
    return complex(out[0]) if np.ndim(t) == 0 else out


def cf_distance(samples, params, t_grid=DEFAULT_CF_GRID):
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.size == 0:
        raise DomainError("empty t grid")
    return float(np.max(np.abs(empirical_cf(samples, t_grid) - stable_cf(t_grid, params))))


def fit_stable_scale(samples, p, beta, t_grid=DEFAULT_CF_GRID):
    """Least-squares scale c of the stable law with fixed (p, beta) on the CF grid."""
    t_grid = np.asarray(t_grid, dtype=float)
    ecf = empirical_cf(samples, t_grid)

    def loss(logc):
        return float(np.sum(np.abs(ecf - stable_cf(t_grid, StableLawParams(p, math.exp(logc), beta))) ** 2))

    res = optimize.minimize_scalar(loss, bounds=(-12.0, 8.0), method="bounded", options={"xatol": 1e-10})
    return StableLawParams(p, math.exp(res.x), beta)


# ---------------------------------------------------------------- tails


@dataclass(frozen=True)
class TailFit:
    p_hat: float
    r2: float
    n_tail: int
    curvature: float  # ratio of the far-tail slope to the near-tail slope
    unreliable: bool
    steep: bool
    poor_fit: bool


def _loglog_slope(x, y):
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    return coef[0]


def tail_exponent(samples, fraction=0.1, min_points=50):
    """Pareto index of |samples| from the top ``fraction`` of order statistics.

    Regresses log(i/N) on log of the i-th largest |sample|; the negated slope
    is the index.  ``steep`` marks estimates above 3 (no heavy tail);
    ``poor_fit`` marks curved log-log plots.
    """
    a = np.abs(np.asarray(samples, dtype=float).ravel())
    if a.size < 1000:
        raise DomainError(f"tail estimation needs >= 1000 samples, got {a.size}")
    a = np.sort(a)[::-1]
    N = a.size
    k = int(math.ceil(fraction * N))
    top = a[:k]
    keep = top > 0
    x = np.log(top[keep])
    y = np.log(np.arange(1, k + 1)[keep] / N)
    n_tail = int(keep.sum())
    if n_tail < 3:
        return TailFit(math.nan, 0.0, n_tail, math.nan, True, False, True)
    slope = _loglog_slope(x, y)
    r2 = float(np.corrcoef(x, y)[0, 1] ** 2) if np.ptp(x) > 0 else 0.0
    split = max(3, n_tail // 10)
    if n_tail - split >= 3:
        curvature = float(_loglog_slope(x[:split], y[:split]) / _loglog_slope(x[split:], y[split:]))
    else:
        curvature = math.nan
    p_hat = float(-slope)
    poor = r2 < 0.97 or not (2 / 3 <= curvature <= 1.5)
    return TailFit(p_hat, r2, n_tail, curvature, n_tail < min_points, p_hat > 3.0, bool(poor))


# ---------------------------------------------------------------- experiments


@dataclass
class CltRow:
    n: int
    ks_distance: float
    sigma2_hat: float
    m: int


@dataclass
class CltResult:
    rows: list
    sigma2_hat: float
    cutoff_lag: int
    degenerate: bool
    warnings: list = field(default_factory=list)


def estimate_sigma2(f, system, n, seed, m_cal=200, max_lag=100, burn_in=1000, offset=0):
    """Green-Kubo variance from orbits ``offset..offset+m_cal-1`` of the seed's stream."""
    n = max(n, 4 * max_lag)
    spec = EnsembleSpec(offset + m_cal, n + max_lag, seed, burn_in)
    ens = generate_ensemble(system, spec, offset, offset + m_cal)
    series = covariance_series(f, ens, max_lag, n=n)
    return green_kubo(series)


def _ensemble(system, m, n, seed, burn_in):
    return iter_ensemble(system, EnsembleSpec(m, n, seed, burn_in))


def clt_test(f, system, n_list, m, seed=0, sigma2=None, burn_in=1000, m_cal=200, max_lag=100):
    """KS distance of S_n f / sqrt(n) to N(0, sigma2) for each n.

    ``sigma2`` defaults to the Green-Kubo estimate from ``m_cal`` extra
    orbits (indices ``m..m+m_cal-1``) of the same seed.
    """
    n_list = sorted(int(n) for n in n_list)
    if not f.mean_zero:
        raise MisuseError("CLT test needs a centered observable")
    warnings = []
    if sigma2 is None:
        gk = estimate_sigma2(f, system, min(n_list[-1], 10**4), seed, m_cal, max_lag, burn_in, offset=m)
        sigma2_hat, cut, degenerate = gk.sigma2, gk.cutoff_lag, gk.degenerate
    else:
        sigma2_hat, cut, degenerate = float(sigma2), -1, sigma2 <= 0
    if degenerate:
        warnings.append("degenerate: estimated variance is zero")
    sums = ensemble_sums(f, _ensemble(system, m, n_list[-1], seed, burn_in), n_list)
    rows = []
    for j, n in enumerate(n_list):
        d = empirical_measure(sums[:, j] / math.sqrt(n))
        ks = ks_distance(d, normal_law(sigma2_hat))
        rows.append(CltRow(n, ks, sigma2_hat, sums.shape[0]))
    return CltResult(rows, sigma2_hat, cut, degenerate, warnings)


@dataclass
class BerryEsseenResult:
    n_list: list
    ks: list
    slope: float
    degenerate: bool
    sigma2: float


def berry_esseen_probe(f, system, n_list, m, seed=0, sigma2=None, burn_in=1000):
    """Least-squares slope of log KS(n) against log n."""
    if len(n_list) < 3:
        raise DomainError("need at least three n values")
    tc = system.tail_class.kind
    if tc not in ("exponential", "iid"):
        raise MisuseError(f"rate probe needs an exponential tail class, got {tc}")
    res = clt_test(f, system, n_list, m, seed, sigma2, burn_in)
    ks = [r.ks_distance for r in res.rows]
    ns = [r.n for r in res.rows]
    if res.degenerate or min(ks) <= 0:
        return BerryEsseenResult(ns, ks, math.nan, True, res.sigma2_hat)
    slope = float(np.polyfit(np.log(ns), np.log(ks), 1)[0])
    return BerryEsseenResult(ns, ks, slope, False, res.sigma2_hat)


def asclt_measure(f, orbit, n, seq=RenormSequence("sqrt_n")):
    """Log-averaged law of S_k f / B_k along one orbit, k = 1..n.

    Weights are (1/k) / H_n, so the measure has mass one at every n; the
    last weight absorbs rounding so that the compensated total is exactly 1.
    For the sqrt(n log n) scale the k = 1 term (B_1 = 0) is skipped.
    """
    orbit = np.asarray(orbit, dtype=float)
    if n < 1 or orbit.shape[0] < n:
        raise DomainError("orbit shorter than n")
    vals = np.asarray(f(orbit[:n]), dtype=float)
    sums = np.cumsum(vals)
    k0 = seq.first_index
    ks = np.arange(k0, n + 1)
    if ks.size == 0:
        raise DomainError(f"n must be >= {k0} for {seq.kind}")
    atoms = sums[k0 - 1 :] / renorm_value(seq, ks)
    inv = 1.0 / ks
    w = inv / math.fsum(inv.tolist())
    if w.size > 1:
        w[-1] = 1.0 - math.fsum(w[:-1].tolist())
    else:
        w[0] = 1.0
    return LogAvgMeasure(np.asarray(atoms, dtype=float), w, ks)


def asclt_distance(f, orbit, n_list, sigma2, seq=RenormSequence("sqrt_n")):
    """Kantorovich distance of the log-averaged law to N(0, sigma2) at each n."""
    return [kantorovich_1d(asclt_measure(f, orbit, n, seq).distribution(), normal_law(sigma2)) for n in n_list]


@dataclass
class StableResult:
    n: int
    m: int
    tail: TailFit
    params: StableLawParams
    cf_distance: float
    samples: np.ndarray = field(repr=False)


def stable_test(f, system, n, m, seed=0, burn_in=1000, t_grid=DEFAULT_CF_GRID):
    """S_n f / n^alpha for an intermittent map against the stable law of index 1/alpha.

    The skewness is sgn(f(0)); the scale is fitted on the CF grid.
    """
    if system.kind != "manneville_pomeau":
        raise MisuseError("stable regime test is defined for the intermittent map")
    if not f.mean_zero:
        raise MisuseError("stable test needs a centered observable")
    alpha = system.param("alpha")
    if alpha <= 0.5:
        raise DomainError("stable regime needs alpha > 1/2")
    f0 = f.on(system).value_at_zero
    if f0 == 0:
        raise DomainError("stable regime needs f(0) != 0")
    beta = float(np.sign(f0))
    s = ensemble_sums(f, _ensemble(system, m, n, seed, burn_in), [n])[:, 0] / n**alpha
    params = fit_stable_scale(s, 1.0 / alpha, beta, t_grid)
    return StableResult(n, m, tail_exponent(s), params, cf_distance(s, params, t_grid), s)
