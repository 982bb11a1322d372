"""Monte Carlo checks of concentration bounds for separately Lipschitz functionals.

Bound constants are not numeric, so the checks here are about envelope
shape (log-tail linear in t^2 or in log t) and scaling exponents in n.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dynsys import EnsembleSpec, calibrate, distance, generate_ensemble, iter_ensemble
from .ergostat import (
    AnalyticLaw,
    CovarianceSeries,
    covariance_series,
    empirical_measure,
    ensemble_sums,
    green_kubo,
    kantorovich_1d,
    uniform_law,
)
from .errors import DomainError, MisuseError
from .observables import functional_eval, lip_sum_sq, requires_finite_lipschitz


@dataclass
class DeviationSample:
    values: np.ndarray
    functional: str
    lip_sum_sq: float
    mean: float = 0.0
    n_excluded: int = 0

    @property
    def m(self):
        return self.values.size


@dataclass
class ConcentrationReport:
    regime: str  # gaussian_envelope | polynomial_envelope | inconclusive
    C_hat: float
    quality: float
    slope: float
    t_grid: np.ndarray
    tail: np.ndarray
    r2_gaussian: float = math.nan
    r2_polynomial: float = math.nan
    flags: list = field(default_factory=list)


def _centered(raw, name, lss, excluded=0):
    raw = np.asarray(raw, dtype=float)
    mu = math.fsum(raw.tolist()) / raw.size
    return DeviationSample(raw - mu, name, lss, mu, excluded)


def functional_samples(K, system, m, seed, burn_in=1000):
    """K evaluated on the first ``K.arity`` points of ``m`` independent orbits, centered
    at the ensemble mean.  Escaped planar orbits are left out and counted."""
    spec = EnsembleSpec(m, K.arity, seed, burn_in)
    raw, excluded = [], 0
    for b in iter_ensemble(system, spec):
        excluded += b.n_escaped
        for orbit in b.valid():
            raw.append(functional_eval(K, orbit))
    if not raw:
        raise DomainError("every orbit escaped")
    return _centered(raw, K.name, lip_sum_sq(K), excluded)


def samples_from_values(values, name="samples", lss=1.0):
    return _centered(values, name, lss)


def _r2(x, y):
    if x.size < 3 or np.ptp(x) == 0:
        return math.nan, math.nan, math.nan
    slope, icpt = np.polyfit(x, y, 1)
    ss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum((y - slope * x - icpt) ** 2)) / ss if ss > 0 else 1.0
    return float(slope), float(icpt), r2


def default_t_grid(values, points=20, min_count=10):
    a = np.sort(np.abs(values))
    if a[-1] == 0:
        return np.array([])
    lo = np.quantile(a, 0.5)
    hi = a[max(0, a.size - min_count)]
    if not lo > 0 or hi <= lo:
        lo = a[a > 0][0]
    return np.geomspace(lo, hi, points) if hi > lo else np.array([lo])


def envelope_fit(d: DeviationSample, t_grid=None, min_points=5):
    """Fit log P(|D| > t) against t^2 / lip_sum_sq (gaussian) and log t (polynomial).

    Gaussian: log P ~ -t^2 / (4 C lip_sum_sq), so C_hat = -1 / (4 slope).
    Polynomial: log P ~ log C - q log t + (q/2) log lip_sum_sq.
    """
    v = np.asarray(d.values, dtype=float)
    if v.size < 1000:
        raise DomainError(f"envelope fit needs >= 1000 samples, got {v.size}")
    if np.all(v == 0):
        return ConcentrationReport("inconclusive", math.nan, 0.0, math.nan, np.array([]), np.array([]),
                                   flags=["zero_variance"])
    t = default_t_grid(v) if t_grid is None else np.asarray(t_grid, dtype=float)
    a = np.sort(np.abs(v))
    tail = 1.0 - np.searchsorted(a, t, side="right") / a.size
    use = (tail > 0) & (t > 0)
    if use.sum() < min_points:
        raise DomainError(f"only {int(use.sum())} grid points have nonzero tail counts")
    tt, logp = t[use], np.log(tail[use])
    lss = d.lip_sum_sq if d.lip_sum_sq > 0 else 1.0
    g_slope, _, g_r2 = _r2(tt**2 / lss, logp)
    p_slope, p_icpt, p_r2 = _r2(np.log(tt), logp)
    flags = []
    if g_r2 >= p_r2 and g_slope < 0:
        return ConcentrationReport("gaussian_envelope", -1.0 / (4.0 * g_slope), g_r2, g_slope, t, tail,
                                   g_r2, p_r2, flags)
    if p_slope < 0:
        q = -p_slope
        C = math.exp(p_icpt - 0.5 * q * math.log(lss))
        return ConcentrationReport("polynomial_envelope", C, p_r2, p_slope, t, tail, g_r2, p_r2, flags)
    flags.append("nonnegative_slope")
    return ConcentrationReport("inconclusive", math.nan, max(g_r2, p_r2), math.nan, t, tail, g_r2, p_r2, flags)


# ---------------------------------------------------------------- applications


@dataclass
class VarianceRatio:
    n: int
    variance: float
    lip_sum_sq: float
    ratio: float


def variance_bound_check(K_family, system, n_list, m, seed=0, burn_in=1000):
    """Var(K_n) / sum_i Lip_i(K_n)^2 for each n; ``K_family(n)`` builds K_n."""
    out = []
    for n in n_list:
        K = K_family(n)
        d = functional_samples(K, system, m, seed, burn_in)
        var = float(np.mean(d.values**2)) * d.m / max(d.m - 1, 1)
        lss = d.lip_sum_sq
        out.append(VarianceRatio(n, var, lss, var / lss if lss > 0 else 0.0))
    return out


def average_variance_check(f, system, n_list, m, seed=0, burn_in=1000):
    """variance_bound_check specialized to ergodic averages, from prefix sums."""
    requires_finite_lipschitz(f)
    n_list = sorted(int(n) for n in n_list)
    L = f.lipschitz_constant
    s = ensemble_sums(f, iter_ensemble(system, EnsembleSpec(m, n_list[-1], seed, burn_in)), n_list)
    out = []
    for j, n in enumerate(n_list):
        var = float(np.var(s[:, j] / n, ddof=1))
        lss = L * L / n
        out.append(VarianceRatio(n, var, lss, var / lss if lss > 0 else 0.0))
    return out


@dataclass
class CorrelationDevRow:
    n: int
    fraction: float
    upper_bound: float  # the fraction, or 1/m when no orbit exceeded t
    censored: bool
    exponent: float  # n^2 t^2 / (n + k)


@dataclass
class CorrelationDevResult:
    k: int
    t: float
    rows: list
    slope: float
    r2: float
    warnings: list = field(default_factory=list)


def correlation_dev_experiment(f, system, n_list, k, t, m, seed=0, burn_in=1000):
    """Fraction of orbits with |C_hat(n, k) - mean| > t for each n.

    Zero counts are marked censored and carry the 1/m upper bound.
    """
    if not f.mean_zero:
        raise MisuseError("correlation deviations need a centered observable")
    requires_finite_lipschitz(f)
    n_list = sorted(int(n) for n in n_list)
    spec = EnsembleSpec(m, n_list[-1] + k, seed, burn_in)
    cols = [[] for _ in n_list]
    for b in iter_ensemble(system, spec):
        v = np.asarray(f.on(system)(b.valid()), dtype=float)
        prod = np.cumsum(v[:, : n_list[-1]] * v[:, k : k + n_list[-1]], axis=1)
        for j, n in enumerate(n_list):
            cols[j].append(prod[:, n - 1] / n)
    rows, warnings = [], []
    for n, c in zip(n_list, cols):
        c = np.concatenate(c)
        dev = np.abs(c - c.mean())
        cnt = int(np.count_nonzero(dev > t))
        censored = cnt == 0
        frac = cnt / c.size
        rows.append(CorrelationDevRow(n, frac, (1.0 / c.size) if censored else frac, censored,
                                      n * n * t * t / (n + k)))
    if any(r.censored for r in rows):
        warnings.append("censored: zero exceedances bounded by 1/m")
    x = np.array([r.exponent for r in rows if not r.censored])
    y = np.log([r.fraction for r in rows if not r.censored])
    slope, _, r2 = _r2(x, y) if x.size >= 3 else (math.nan, math.nan, math.nan)
    return CorrelationDevResult(k, t, rows, slope, r2, warnings)


def reference_measure(system, size=10**5, calibration_length=10**7, seed=0):
    """Reference invariant law: exact uniform for Lebesgue-invariant maps,
    otherwise an evenly thinned calibration orbit."""
    if system.dimension != 1:
        raise MisuseError("empirical-measure experiments need a 1-D system")
    if system.lebesgue_invariant:
        return uniform_law()
    if system.is_iid:
        raise MisuseError(f"{system.kind} has no continuous reference law")
    cal = calibrate(system, calibration_length, seed)
    stride = max(1, calibration_length // size)
    pts = np.concatenate([c[::stride] for c in cal._chunks()])
    return empirical_measure(pts)


@dataclass
class EmpiricalMeasureRow:
    n: int
    mean_distance: float
    std_distance: float
    m: int


@dataclass
class EmpiricalMeasureResult:
    rows: list
    slope: float
    envelope: ConcentrationReport | None
    scaled: np.ndarray = field(repr=False, default=None)
    warnings: list = field(default_factory=list)


def _w1_to_uniform(orbits):
    """Kantorovich distance of each row's empirical law to uniform[0,1], vectorized."""
    x = np.sort(orbits, axis=1)
    n = x.shape[1]
    lo = np.concatenate([np.zeros((x.shape[0], 1)), x], axis=1)
    hi = np.concatenate([x, np.ones((x.shape[0], 1))], axis=1)
    c = np.arange(n + 1) / n
    # integral over [lo, hi] of |c - u| du, split at u = c
    q = np.clip(c, lo, hi)
    return np.sum(c * (q - lo) - 0.5 * (q * q - lo * lo) + 0.5 * (hi * hi - q * q) - c * (hi - q), axis=1)


def kantorovich_distances(system, n, m, seed=0, reference=None, burn_in=1000):
    ref = reference if reference is not None else reference_measure(system, seed=seed)
    out = []
    for b in iter_ensemble(system, EnsembleSpec(m, n, seed, burn_in)):
        if isinstance(ref, AnalyticLaw) and ref.kind == "uniform":
            out.append(_w1_to_uniform(b.orbits))
        else:
            out.append(np.array([kantorovich_1d(empirical_measure(o), ref) for o in b.orbits]))
    return np.concatenate(out)


def empirical_measure_conc(system, n_list, m, seed=0, envelope_n=None, burn_in=1000):
    """Mean Kantorovich distance of the n-step empirical measure to the reference law.

    Reports the log-log slope of the mean against n and the envelope fit of
    the centered, sqrt(n)-scaled distances at ``envelope_n`` (default: the
    smallest n).  The centering uses the ensemble mean.
    """
    n_list = sorted(int(n) for n in n_list)
    m_list = [m] * len(n_list) if np.ndim(m) == 0 else list(m)
    ref = reference_measure(system, seed=seed)
    rows, dists = [], {}
    for n, mm in zip(n_list, m_list):
        d = kantorovich_distances(system, n, mm, seed, ref, burn_in)
        dists[n] = d
        rows.append(EmpiricalMeasureRow(n, float(d.mean()), float(d.std(ddof=1)), d.size))
    slope = float(np.polyfit(np.log(n_list), np.log([r.mean_distance for r in rows]), 1)[0]) if len(rows) > 1 else math.nan
    en = envelope_n if envelope_n is not None else n_list[0]
    scaled = math.sqrt(en) * (dists[en] - dists[en].mean())
    env = envelope_fit(DeviationSample(scaled, f"distK_{en}", 1.0)) if scaled.size >= 1000 else None
    warnings = [] if system.lebesgue_invariant else ["reference law estimated from a calibration orbit"]
    return EmpiricalMeasureResult(rows, slope, env, scaled, warnings)


def shadowing_stat(system, x_orbit, A_orbits, n):
    """(1/n) min over reference orbits y of sum_{j<n} d(T^j x, T^j y)."""
    A = np.asarray(A_orbits, dtype=float)
    x = np.asarray(x_orbit, dtype=float)
    if A.shape[0] == 0:
        raise DomainError("reference set is empty")
    if x.shape[0] < n or A.shape[1] < n:
        raise DomainError("orbits shorter than n")
    d = distance(system, A[:, :n], x[None, :n])
    return float(np.min(d.sum(axis=1)) / n)


@dataclass
class ShadowingRow:
    n: int
    q50: float
    q90: float
    q99: float
    scale: float  # sqrt(log n) / sqrt(n)


@dataclass
class ShadowingResult:
    mu_A: float
    size_A: int
    rows: list
    scaling_slope: float
    warnings: list = field(default_factory=list)


def shadowing_experiment(system, mu_target, n_list, m, seed=0, m_test=200, x_from_A=False, burn_in=1000):
    """Upper quantiles of the tracing statistic against a reference set A.

    A holds the reference orbits (indices 0..m-1) whose initial point lies
    below the empirical ``mu_target`` quantile of the first coordinate.  Test
    points are fresh orbits ``m..m+m_test-1``, or A itself if ``x_from_A``.
    """
    if not 0 < mu_target <= 1:
        raise DomainError("mu_target must lie in (0, 1]")
    n_list = sorted(int(n) for n in n_list)
    N = n_list[-1]
    spec = EnsembleSpec(m + m_test, N, seed, burn_in)
    ref = generate_ensemble(system, spec, 0, m)
    pts = ref.orbits if ref.n_escaped == 0 else ref.valid()
    first = pts[:, 0] if pts.ndim == 2 else pts[:, 0, 0]
    if mu_target >= 1:
        A = pts
    else:
        A = pts[first < np.quantile(first, mu_target)]
    warnings = []
    if A.shape[0] == 0:
        raise DomainError("reference set A is empty; increase m")
    if x_from_A:
        X = A
    else:
        test = generate_ensemble(system, spec, m, m + m_test)
        X = test.orbits if test.n_escaped == 0 else test.valid()
        if test.n_escaped:
            warnings.append(f"escaped: {test.n_escaped} test orbits left the trapping box")
    rows = []
    for n in n_list:
        s = np.array([shadowing_stat(system, x, A, n) for x in X])
        q50, q90, q99 = np.quantile(s, [0.5, 0.9, 0.99])
        rows.append(ShadowingRow(n, float(q50), float(q90), float(q99), math.sqrt(math.log(n) / n)))
    ok = [r for r in rows if r.q99 > 0 and r.n > 1]
    slope = (
        float(np.polyfit(np.log([r.scale for r in ok]), np.log([r.q99 for r in ok]), 1)[0])
        if len(ok) >= 2 else math.nan
    )
    return ShadowingResult(A.shape[0] / pts.shape[0], A.shape[0], rows, slope, warnings)


# ---------------------------------------------------------------- periodogram

LAG_CAP = 2000


def _lag_products(values, L):
    """R(l) = sum_j f_j f_{j+l} for l = 0..L along the last axis, via FFT."""
    v = np.asarray(values, dtype=float)
    n = v.shape[-1]
    size = 1 << int(math.ceil(math.log2(max(2 * n, 2))))
    F = np.fft.rfft(v, size, axis=-1)
    r = np.fft.irfft(F * np.conj(F), size, axis=-1)[..., : L + 1]
    return r


def integrated_periodogram(f_values, omega, lag_cap=LAG_CAP):
    """J_n(omega) = (1/n)[omega sum f_j^2 + 2 sum_{l=1}^{L} R(l) sin(l omega) / l].

    Exact when L = n - 1; here L = min(n - 1, lag_cap).  ``omega`` may be an
    array; ``f_values`` may be 2-D (one row per orbit).
    """
    w = np.asarray(omega, dtype=float)
    if np.any((w < 0) | (w > 2 * math.pi)):
        raise DomainError("omega must lie in [0, 2 pi]")
    v = np.asarray(f_values, dtype=float)
    n = v.shape[-1]
    if n == 0:
        raise DomainError("no values")
    L = min(n - 1, lag_cap)
    R = _lag_products(v, L) if L > 0 else (v * v).sum(axis=-1, keepdims=True)
    R[..., 0] = (v * v).sum(axis=-1)
    lags = np.arange(1, L + 1)
    wv = np.atleast_1d(w)
    kernel = np.sin(np.outer(lags, wv)) / lags[:, None]
    kernel[:, wv == 2 * math.pi] = 0.0
    out = (np.multiply.outer(R[..., 0], wv) + 2.0 * R[..., 1:] @ kernel) / n
    if w.ndim == 0:
        out = out[..., 0]
    return float(out) if np.ndim(out) == 0 else out


def periodogram_quadrature(f_values, omega, points=10**4):
    """Direct trapezoid integral of (1/n)|sum_j exp(-i j s) f_j|^2 over [0, omega]."""
    v = np.asarray(f_values, dtype=float)
    s = np.linspace(0.0, omega, points)
    j = np.arange(v.size)
    amp = np.abs(np.exp(-1j * np.outer(s, j)) @ v) ** 2 / v.size
    return float(np.trapezoid(amp, s))


def periodogram_limit(series: CovarianceSeries, omega, cutoff=None):
    """C(0) omega + 2 sum_{k=1}^{L*} C(k) sin(k omega) / k, L* the Green-Kubo cutoff lag."""
    w = np.asarray(omega, dtype=float)
    if np.any((w < 0) | (w > 2 * math.pi)):
        raise DomainError("omega must lie in [0, 2 pi]")
    L = green_kubo(series).cutoff_lag if cutoff is None else min(cutoff, series.max_lag)
    k = np.arange(1, L + 1)
    wv = np.atleast_1d(w)
    kernel = np.sin(np.outer(k, wv)) / k[:, None]
    kernel[:, wv == 2 * math.pi] = 0.0
    out = series.values[0] * wv + 2.0 * series.values[1 : L + 1] @ kernel
    return float(out[0]) if w.ndim == 0 else out


@dataclass
class PeriodogramDev:
    n: int
    sup_dev: np.ndarray = field(repr=False)
    median: float = 0.0
    q99: float = 0.0
    scale: float = 0.0  # (1 + log n)^(3/2) / sqrt(n)
    c0: float = 0.0
    cutoff_lag: int = 0


def periodogram_sup_dev(f, system, n, m, omega_grid=None, seed=0, series=None, burn_in=1000, max_lag=50):
    """sup over the grid of |J_n(x, .) - J(.)| for each of ``m`` orbits.

    The limit J uses ``series`` if given, else covariances estimated from the
    same ensemble.
    """
    if not f.mean_zero:
        raise MisuseError("periodogram needs a centered observable")
    omega_grid = np.linspace(0.0, 2 * math.pi, 129) if omega_grid is None else np.asarray(omega_grid)
    spec = EnsembleSpec(m, n + max_lag, seed, burn_in)
    if series is None:
        series = covariance_series(f, iter_ensemble(system, spec), max_lag, n=n)
    J = periodogram_limit(series, omega_grid)
    sups = []
    for b in iter_ensemble(system, spec, block=max(1, 2_000_000 // (n + max_lag))):
        v = np.asarray(f.on(system)(b.valid()), dtype=float)[:, :n]
        Jn = integrated_periodogram(v, omega_grid)
        sups.append(np.max(np.abs(Jn - J), axis=-1))
    s = np.concatenate(sups)
    return PeriodogramDev(
        n, s, float(np.median(s)), float(np.quantile(s, 0.99)),
        (1 + math.log(n)) ** 1.5 / math.sqrt(n), float(series.values[0]), green_kubo(series).cutoff_lag,
    )
