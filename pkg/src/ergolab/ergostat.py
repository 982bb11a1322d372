"""Ergodic averages, covariance estimates, empirical measures and 1-D distances."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np
from scipy import special, stats

from .dynsys import OrbitEnsemble
from .errors import DomainError, MisuseError
from .observables import ergodic_sum


def blocks(ensemble) -> Iterable[OrbitEnsemble]:
    """Accept one ensemble or an iterable of ensemble blocks."""
    if isinstance(ensemble, OrbitEnsemble):
        return (ensemble,)
    return ensemble


def peek(ensemble):
    """First block plus an iterable that still yields every block."""
    it = iter(blocks(ensemble))
    first = next(it)
    return first, itertools.chain([first], it)


def _values(f, block):
    """f along the valid orbits of a block, shape (m, n)."""
    f = f.on(block.system)
    orbits = block.valid() if block.n_escaped else block.orbits
    return np.asarray(f(orbits), dtype=float).reshape(orbits.shape[0], orbits.shape[1])


# ---------------------------------------------------------------- types


@dataclass(frozen=True)
class EmpiricalDistribution:
    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        if self.atoms.size == 0:
            raise DomainError("empirical distribution needs at least one atom")
        if np.any(np.diff(self.atoms) < 0):
            raise DomainError("atoms must be sorted")
        if np.any(self.weights <= 0) or abs(self.weights.sum() - 1.0) > 1e-12:
            raise DomainError("weights must be positive and sum to one")

    @property
    def size(self):
        return self.atoms.size

    def cdf(self, t):
        cum = np.cumsum(self.weights)
        cum[-1] = 1.0
        idx = np.searchsorted(self.atoms, t, side="right")
        return np.where(idx > 0, cum[np.maximum(idx - 1, 0)], 0.0)

    def mean(self):
        return float(np.dot(self.atoms, self.weights))

    def variance(self):
        mu = self.mean()
        return float(np.dot((self.atoms - mu) ** 2, self.weights))


def empirical_measure(samples, weights=None):
    """Empirical law of ``samples`` (equal weights unless given); ties merged."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise DomainError("no samples")
    w = np.full(x.size, 1.0 / x.size) if weights is None else np.asarray(weights, dtype=float)
    order = np.argsort(x, kind="stable")
    x, w = x[order], w[order]
    atoms, start = np.unique(x, return_index=True)
    merged = np.add.reduceat(w, start)
    merged = merged / math.fsum(merged.tolist())
    return EmpiricalDistribution(atoms, merged)


@dataclass(frozen=True)
class CovarianceSeries:
    values: np.ndarray
    stderr: np.ndarray
    n_used: int

    def __post_init__(self):
        if self.values.size and self.values[0] < 0:
            raise DomainError("C(0) must be nonnegative")

    @property
    def max_lag(self):
        return self.values.size - 1


@dataclass(frozen=True)
class GreenKubo:
    sigma2: float
    cutoff_lag: int
    degenerate: bool
    clamped: bool = False


# ---------------------------------------------------------------- averages


def birkhoff_average(f, orbit):
    orbit = np.asarray(orbit, dtype=float)
    return ergodic_sum(f, orbit) / orbit.shape[0]


def ensemble_sums(f, ensemble, checkpoints):
    """S_n f for every orbit and every n in ``checkpoints`` (shape (m, len))."""
    cps = np.asarray(checkpoints, dtype=np.int64)
    rows = []
    for b in blocks(ensemble):
        v = _values(f, b)
        if cps[-1] > v.shape[1]:
            raise DomainError(f"orbits of length {v.shape[1]} are shorter than n={cps[-1]}")
        rows.append(np.cumsum(v[:, : cps[-1]], axis=1)[:, cps - 1])
    return np.concatenate(rows, axis=0)


def autocovariance(f, ensemble, k, n=None):
    """Ensemble mean of (1/n) sum_{j<n} f(x_j) f(x_{j+k}), with its standard error.

    ``n`` defaults to the orbit length minus ``k``.
    """
    series = covariance_series(f, ensemble, k, n=n, lags=[k])
    return float(series.values[0]), float(series.stderr[0])


def covariance_series(f, ensemble, L, n=None, lags=None):
    """Lag covariances C(0..L) (or only ``lags``) with cross-orbit standard errors."""
    if not f.mean_zero:
        raise MisuseError("autocovariance needs a centered (mean_zero) observable")
    lags = list(range(L + 1)) if lags is None else list(lags)
    per_orbit = []
    n_used = None
    for b in blocks(ensemble):
        v = _values(f, b)
        nn = v.shape[1] - max(lags) if n is None else n
        if nn < 1 or nn + max(lags) > v.shape[1]:
            raise DomainError("orbits too short for the requested lags")
        n_used = nn
        per_orbit.append(
            np.stack([np.einsum("ij,ij->i", v[:, :nn], v[:, l : l + nn]) / nn for l in lags], axis=1)
        )
    c = np.concatenate(per_orbit, axis=0)
    m = c.shape[0]
    mean = c.mean(axis=0)
    se = c.std(axis=0, ddof=1) / math.sqrt(m) if m > 1 else np.full(len(lags), np.inf)
    if lags[0] == 0:
        mean[0] = max(mean[0], 0.0)
    return CovarianceSeries(mean, se, n_used)


def green_kubo(series: CovarianceSeries, run=3, nsigma=2.0):
    """C(0) + 2 sum_{l=1}^{L*} C(l).

    L* is the lag before the first run of ``run`` consecutive lags with
    |C| < ``nsigma`` standard errors (or the last lag if none).  A negative
    total is clamped to 0; a zero total is flagged degenerate.
    """
    c = series.values
    se = series.stderr
    L = c.size - 1
    small = np.abs(c) < nsigma * se
    cut = L
    for l in range(1, L + 1):
        if l + run - 1 <= L and np.all(small[l : l + run]):
            cut = l - 1
            break
    total = c[0] + 2.0 * math.fsum(c[1 : cut + 1].tolist())
    clamped = total < 0
    total = max(total, 0.0)
    degenerate = bool(total <= 1e-14 * max(1.0, abs(c[0])))
    return GreenKubo(float(total), cut, degenerate, bool(clamped))


# ---------------------------------------------------------------- distances


def _cdf_integral(kind, x, scale):
    """Antiderivative of an analytic CDF, and its zero level, for W1 integrals."""
    if kind == "normal":
        s = scale
        return x * special.ndtr(x / s) + s * np.exp(-0.5 * (x / s) ** 2) / math.sqrt(2 * math.pi)
    # uniform on [0, 1]
    y = np.clip(x, 0.0, 1.0)
    return 0.5 * y * y + np.maximum(x - 1.0, 0.0)


@dataclass(frozen=True)
class AnalyticLaw:
    """Reference law with a closed-form CDF: ``uniform`` on [0,1] or centered ``normal``."""

    kind: str
    variance: float = 1.0

    def __post_init__(self):
        if self.kind not in ("uniform", "normal"):
            raise DomainError(f"unknown analytic law {self.kind!r}")
        if self.kind == "normal" and self.variance < 0:
            raise DomainError("variance must be >= 0")

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "uniform":
            return np.clip(t, 0.0, 1.0)
        if self.variance == 0:
            return np.where(t >= 0, 1.0, 0.0)
        return special.ndtr(t / math.sqrt(self.variance))

    def left_cdf(self, t):
        if self.kind == "normal" and self.variance == 0:
            return np.where(np.asarray(t) > 0, 1.0, 0.0)
        return self.cdf(t)

    def ppf(self, q):
        if self.kind == "uniform":
            return np.asarray(q, dtype=float)
        return math.sqrt(self.variance) * special.ndtri(q)

    def primitive(self, x):
        """G(x) with G' = F."""
        if self.kind == "normal" and self.variance == 0:
            return np.maximum(np.asarray(x, dtype=float), 0.0)
        return _cdf_integral(self.kind, np.asarray(x, dtype=float), math.sqrt(self.variance))


def uniform_law():
    return AnalyticLaw("uniform")


def normal_law(variance):
    return AnalyticLaw("normal", float(variance))


def _w1_empirical(d1, d2):
    pts = np.union1d(d1.atoms, d2.atoms)
    if pts.size < 2:
        return 0.0
    gap = np.abs(d1.cdf(pts[:-1]) - d2.cdf(pts[:-1]))
    return float(np.dot(gap, np.diff(pts)))


def _w1_analytic(d, law):
    """int |F_n - F| with F_n piecewise constant, split where F crosses each level."""
    a = d.atoms
    cum = np.cumsum(d.weights)
    cum[-1] = 1.0
    G = law.primitive
    # left tail: integral of F over (-inf, a0]; right tail: of 1 - F over [a_last, inf)
    total = float(G(a[0]))
    far = a[-1] + 50.0 * (math.sqrt(law.variance) if law.kind == "normal" else 1.0) + 1.0
    far = max(far, 2.0)
    total += float((far - a[-1]) - (G(far) - G(a[-1])))
    if a.size > 1:
        lo, hi, c = a[:-1], a[1:], cum[:-1]
        # |c - F| on [lo, hi]: split at F^{-1}(c) when it falls inside
        q = np.clip(law.ppf(np.clip(c, 1e-300, 1 - 1e-16)), lo, hi)
        below = c * (q - lo) - (G(q) - G(lo))  # F <= c on [lo, q]
        above = (G(hi) - G(q)) - c * (hi - q)  # F >= c on [q, hi]
        total += math.fsum(np.abs(below).tolist()) + math.fsum(np.abs(above).tolist())
    return total


def kantorovich_1d(d1, d2):
    """Kantorovich (Wasserstein-1) distance: integral of |F1 - F2|.

    Either argument may be an :class:`EmpiricalDistribution` or an
    :class:`AnalyticLaw`.
    """
    if isinstance(d1, AnalyticLaw) and isinstance(d2, AnalyticLaw):
        raise MisuseError("at least one argument must be empirical")
    if isinstance(d1, AnalyticLaw):
        d1, d2 = d2, d1
    if isinstance(d2, AnalyticLaw):
        return _w1_analytic(d1, d2)
    return _w1_empirical(d1, d2)


def ks_distance(d: EmpiricalDistribution, cdf, left_cdf=None, jumps=None):
    """sup_t |F_n(t) - F(t)|, checked at atoms, their left limits, and target jumps.

    ``cdf`` may be an :class:`AnalyticLaw`, an :class:`EmpiricalDistribution`
    or a vectorized right-continuous function; for discontinuous functions
    pass ``left_cdf`` and the jump locations.
    """
    if isinstance(cdf, AnalyticLaw):
        left_cdf = cdf.left_cdf
        if cdf.kind == "normal" and cdf.variance == 0:
            jumps = [0.0]
        cdf = cdf.cdf
    elif isinstance(cdf, EmpiricalDistribution):
        other = cdf
        jumps = other.atoms
        cdf = other.cdf
        left_cdf = lambda t: other.cdf(np.nextafter(t, -np.inf))  # noqa: E731
    left_cdf = left_cdf or cdf
    a = d.atoms
    cum = np.cumsum(d.weights)
    cum[-1] = 1.0
    prev = np.concatenate([[0.0], cum[:-1]])
    F = np.asarray(cdf(a), dtype=float)
    Fl = np.asarray(left_cdf(a), dtype=float)
    gaps = [np.abs(cum - F), np.abs(prev - Fl)]
    if jumps is not None and len(jumps):
        j = np.asarray(jumps, dtype=float)
        Fn = d.cdf(j)
        Fn_left = d.cdf(np.nextafter(j, -np.inf))
        gaps += [np.abs(Fn - cdf(j)), np.abs(Fn_left - left_cdf(j))]
    return float(min(1.0, max(float(np.max(g)) for g in gaps)))


# ---------------------------------------------------------------- densities


@dataclass
class DensityTable:
    edges: np.ndarray
    density: np.ndarray
    counts: np.ndarray
    empty_bins: list = field(default_factory=list)

    @property
    def mids(self):
        return 0.5 * (self.edges[:-1] + self.edges[1:])


def invariant_density_histogram(ensemble, bins=100, range_=None, log=False):
    """Normalized histogram of the first coordinate over all recorded points.

    ``bins`` may be a count or explicit edges; ``log=True`` uses geometric
    spacing over ``range_``.
    """
    counts = None
    edges = None
    for b in blocks(ensemble):
        if b.system.dimension != 1:
            raise MisuseError("density histogram needs a 1-D system")
        if edges is None:
            if np.ndim(bins):
                edges = np.asarray(bins, dtype=float)
            else:
                lo, hi = range_ if range_ is not None else b.system.domain[1][0]
                edges = np.geomspace(lo, hi, bins + 1) if log else np.linspace(lo, hi, bins + 1)
            counts = np.zeros(edges.size - 1)
        counts += np.histogram(b.orbits, edges)[0]
    total = counts.sum()
    if total == 0:
        raise DomainError("no points fall in the histogram range")
    dens = counts / total / np.diff(edges)
    empty = [int(i) for i in np.flatnonzero(counts == 0)]
    return DensityTable(edges, dens, counts, empty)


def nonconventional_average(f_list, orbit, n):
    """(1/n) sum_{k<n} prod_{j=1..l} f_j(T^{jk} x)."""
    orbit = np.asarray(orbit, dtype=float)
    ell = len(f_list)
    if ell < 1 or n < 1:
        raise DomainError("need at least one observable and n >= 1")
    if orbit.shape[0] <= ell * (n - 1):
        raise DomainError(f"orbit of length {orbit.shape[0]} too short for l={ell}, n={n}")
    k = np.arange(n)
    prod = np.ones(n)
    for j, f in enumerate(f_list, start=1):
        prod *= np.atleast_1d(f(orbit[j * k]))
    return math.fsum(prod.tolist()) / n


def uniform_ks(samples):
    """KS distance of samples to the uniform law on [0, 1]."""
    return float(stats.kstest(np.ravel(samples), "uniform").statistic)


def standard_error(x):
    x = np.asarray(x, dtype=float)
    return float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else math.inf


def map_blocks(func: Callable, ensemble):
    return [func(b) for b in blocks(ensemble)]
