"""Large and moderate deviation statistics."""
from __future__ import annotations

import math
import warnings as _warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from . import _kernels
from .dynsys import EnsembleSpec, generate_ensemble, iter_ensemble
from .ergostat import ensemble_sums, peek
from .errors import BudgetExceeded, DomainError, MisuseError

OVERFLOW_GUARD = 500.0
WINDOW_BUDGET = 10**7


# ---------------------------------------------------------------- deviation probabilities


@dataclass(frozen=True)
class DeviationProb:
    n: int
    eps: float
    fraction: float
    stderr: float
    m: int
    count: int


def deviation_prob(f, ensemble, n, eps):
    """Fraction of orbits with |S_n f / n| > eps, with binomial standard error."""
    if eps <= 0:
        raise DomainError("eps must be > 0")
    if not f.mean_zero:
        raise MisuseError("deviation probabilities need a centered observable")
    s = ensemble_sums(f, ensemble, [n])[:, 0] / n
    return _fraction(s, n, eps)


def _fraction(avg, n, eps):
    m = avg.size
    count = int(np.count_nonzero(np.abs(avg) > eps))
    p = count / m
    return DeviationProb(n, eps, p, math.sqrt(p * (1 - p) / m), m, count)


def deviation_curve(f, ensemble, n_list, eps):
    """deviation_prob at every n in ``n_list`` from one set of prefix sums."""
    n_list = sorted(int(n) for n in n_list)
    s = ensemble_sums(f, ensemble, n_list)
    return [_fraction(s[:, j] / n, n, eps) for j, n in enumerate(n_list)]


@dataclass(frozen=True)
class DecayFit:
    regime: str  # exponential | polynomial | ambiguous | undetectable
    slope: float
    r2_exponential: float
    r2_polynomial: float
    n_used: int

    @property
    def quality(self):
        return max(self.r2_exponential, self.r2_polynomial)


def _adj_r2(x, y):
    k = x.size
    if k < 3 or np.ptp(x) == 0:
        return math.nan, math.nan
    slope, icpt = np.polyfit(x, y, 1)
    resid = y - (slope * x + icpt)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0:
        return float(slope), 1.0 if np.allclose(resid, 0) else 0.0
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot
    return float(slope), 1.0 - (1.0 - r2) * (k - 1) / (k - 2)


def decay_fit(probs, margin=0.05, min_points=4):
    """Classify the decay of P(n) as exponential (log P linear in n) or polynomial
    (log P linear in log n) by adjusted R^2 with a ``margin`` dead band."""
    pts = [(float(n), float(p)) for n, p in probs]
    nonzero = [(n, p) for n, p in pts if p > 0]
    if not nonzero:
        return DecayFit("undetectable", math.nan, math.nan, math.nan, 0)
    if len(nonzero) < min_points:
        raise DomainError(f"need >= {min_points} n values with nonzero fractions, got {len(nonzero)}")
    n = np.array([a for a, _ in nonzero])
    logp = np.log([b for _, b in nonzero])
    s_exp, r_exp = _adj_r2(n, logp)
    s_pol, r_pol = _adj_r2(np.log(n), logp)
    if r_pol > r_exp + margin:
        return DecayFit("polynomial", s_pol, r_exp, r_pol, n.size)
    if r_exp > r_pol + margin:
        return DecayFit("exponential", s_exp, r_exp, r_pol, n.size)
    # inside the margin: report the better one's slope
    slope = s_pol if r_pol >= r_exp else s_exp
    return DecayFit("ambiguous", slope, r_exp, r_pol, n.size)


# ---------------------------------------------------------------- cumulant generating function


@dataclass
class CgfEstimate:
    z_grid: np.ndarray
    psi: np.ndarray
    stderr: np.ndarray
    n_used: int
    m_used: int
    ess: np.ndarray
    ess_collapsed: list = field(default_factory=list)
    convexity_violation: float = 0.0

    def slopes(self):
        return np.gradient(self.psi, self.z_grid)


def max_safe_z(n, sup_norm):
    if sup_norm == 0:
        return math.inf
    return OVERFLOW_GUARD / (n * sup_norm)


def cgf_from_sums(sums, n, z_grid, sup_norm=None, ess_floor=0.01):
    """Psi(z) = (1/n) log mean exp(z S_n) via max-shifted log-sum-exp.

    Standard errors come from the delta method; effective sample sizes
    below ``ess_floor * m`` are flagged.
    """
    s = np.asarray(sums, dtype=float)
    z = np.asarray(z_grid, dtype=float)
    m = s.size
    if sup_norm is not None:
        zmax = max_safe_z(n, sup_norm)
        if np.any(np.abs(z) > zmax):
            raise DomainError(f"|z| must stay below {zmax:.4g} (overflow guard z n sup|f| <= {OVERFLOW_GUARD:g})")
    psi = np.empty(z.size)
    se = np.empty(z.size)
    ess = np.empty(z.size)
    for i, zi in enumerate(z):
        if zi == 0:
            psi[i], se[i], ess[i] = 0.0, 0.0, m
            continue
        a = zi * s
        lse = special.logsumexp(a) - math.log(m)
        w = np.exp(a - a.max())
        wn = w / w.sum()
        ess[i] = 1.0 / np.sum(wn * wn)
        psi[i] = lse / n
        # Var(mean e^a)/mean^2 = Var(w)/(m mean(w)^2)
        rel = w.std(ddof=1) / w.mean() / math.sqrt(m) if m > 1 else math.inf
        se[i] = rel / n
    collapsed = [float(zi) for zi, e in zip(z, ess) if e < ess_floor * m]
    viol = 0.0
    if z.size >= 3:
        mid = 0.5 * (psi[:-2] + psi[2:]) - psi[1:-1]
        uniform = np.allclose(np.diff(z), z[1] - z[0])
        if uniform:
            viol = float(max(0.0, -mid.min()))
    return CgfEstimate(z, psi, se, n, m, ess, collapsed, viol)


def cgf_estimate(f, ensemble, n, z_grid):
    if not f.mean_zero and f.kind != "constant":
        raise MisuseError("cgf estimate needs a centered observable")
    blk, ensemble = peek(ensemble)
    sup = f.on(blk.system).sup_norm(blk.system)
    sums = ensemble_sums(f, ensemble, [n])[:, 0]
    return cgf_from_sums(sums, n, z_grid, sup)


@dataclass(frozen=True)
class LegendreValue:
    value: float
    z_star: float
    boundary: bool


def legendre(cgf, t):
    """sup over the grid of t z - Psi(z); flags a maximizer on the grid edge."""
    z = np.asarray(cgf.z_grid)
    psi = np.asarray(cgf.psi)
    vals = t * z - psi
    i = int(np.argmax(vals))
    boundary = i in (0, z.size - 1) and not (t == 0 and vals[i] == 0)
    return LegendreValue(max(float(vals[i]), 0.0), float(z[i]), bool(boundary))


@dataclass
class RateFunctionEstimate:
    t_grid: np.ndarray
    values: np.ndarray
    source: str
    boundary: np.ndarray


def rate_function(cgf, t_grid, source="legendre_of_cgf"):
    t_grid = np.asarray(t_grid, dtype=float)
    out = [legendre(cgf, t) for t in t_grid]
    return RateFunctionEstimate(
        t_grid, np.array([o.value for o in out]), source, np.array([o.boundary for o in out])
    )


def rademacher_rate(t):
    """Rate function of a fair +-1 coin: ((1+t)/2) ln(1+t) + ((1-t)/2) ln(1-t)."""
    t = np.asarray(t, dtype=float)
    out = 0.5 * (special.xlogy(1 + t, 1 + t) + special.xlogy(1 - t, 1 - t))
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------- Erdős–Rényi


def erdos_renyi_stat(values, k, N=None):
    """Largest sum of ``k`` consecutive entries among the first ``N`` values.

    Windows start at j = 0..N-k.
    """
    v = np.asarray(values, dtype=float)
    N = v.size if N is None else N
    if k < 1:
        raise DomainError("k must be >= 1")
    if k > N:
        raise DomainError(f"window k={k} longer than N={N}")
    if v.size < N:
        raise DomainError(f"only {v.size} values available, need N={N}")
    return float(_kernels.window_max(np.ascontiguousarray(v[:N]), k))


def brute_force_window_max(values, k):
    v = list(values)
    return max(math.fsum(v[j : j + k]) for j in range(len(v) - k + 1))


def window_count(k, rate):
    """floor(exp(k I)) samples so that windows j = 0..floor(exp(kI)) - k fit."""
    return int(math.floor(math.exp(k * rate)))


@dataclass
class ErdosRenyiResult:
    k_list: list
    ratios: list
    N_list: list
    truncated: list = field(default_factory=list)
    warnings: list = field(default_factory=list)


def erdos_renyi_rate(f, system, t, rate, k_list, seed=0, orbit_index=0, budget=WINDOW_BUDGET, burn_in=1000):
    """M_k / k along one orbit for each k, with N_k = floor(exp(k I)).

    ``k`` values whose window count exceeds ``budget`` are dropped with a
    warning; if none survive, :class:`BudgetExceeded` is raised.
    """
    if rate <= 0:
        raise DomainError("rate I(t) must be > 0")
    keep, dropped = [], []
    for k in sorted(int(k) for k in k_list):
        N = window_count(k, rate)
        (keep if N <= budget and N >= k else dropped).append((k, N))
    warnings = []
    if dropped:
        msg = "window budget: dropped k=" + ",".join(str(k) for k, _ in dropped)
        warnings.append(msg)
        _warnings.warn(msg, RuntimeWarning, stacklevel=2)
    if not keep:
        raise BudgetExceeded(f"no k in {list(k_list)} fits the window budget {budget}")
    N_max = max(N for _, N in keep)
    spec = EnsembleSpec(orbit_index + 1, N_max, seed, burn_in)
    orbit = generate_ensemble(system, spec, orbit_index, orbit_index + 1).orbits[0]
    vals = np.asarray(f.on(system)(orbit), dtype=float)
    ratios = [erdos_renyi_stat(vals, k, N) / k for k, N in keep]
    return ErdosRenyiResult([k for k, _ in keep], ratios, [N for _, N in keep], [k for k, _ in dropped], warnings)


# ---------------------------------------------------------------- moderate deviations


@dataclass
class ModerateResult:
    n_list: list
    estimates: list
    counts: list
    target: float
    sigma2: float
    degenerate: bool
    zero_counts: list


def moderate_probe(f, system, theta, n_list, m, a, b=math.inf, sigma2=None, seed=0, burn_in=1000):
    """-(n / a_n^2) log P(S_n f / a_n in [a, b]) with a_n = n^theta.

    The target is inf_{t in [a,b]} t^2 / (2 sigma2).
    """
    from .limitlaw import estimate_sigma2

    if not 0.5 < theta < 1.0:
        raise DomainError("theta must lie in (1/2, 1)")
    if a <= 0 <= b or b < a:
        raise DomainError("[a, b] must exclude 0")
    if not f.mean_zero:
        raise MisuseError("moderate deviations need a centered observable")
    n_list = sorted(int(n) for n in n_list)
    if sigma2 is None:
        sigma2 = estimate_sigma2(f, system, min(n_list[-1], 10**4), seed, offset=m).sigma2
    tmin = min(abs(a), abs(b))
    if sigma2 <= 0:
        return ModerateResult(n_list, [math.nan] * len(n_list), [0] * len(n_list), math.inf, 0.0, True, n_list)
    target = tmin**2 / (2 * sigma2)
    sums = ensemble_sums(f, iter_ensemble(system, EnsembleSpec(m, n_list[-1], seed, burn_in)), n_list)
    est, counts, zero = [], [], []
    for j, n in enumerate(n_list):
        an = n**theta
        x = sums[:, j] / an
        c = int(np.count_nonzero((x >= a) & (x <= b)))
        counts.append(c)
        if c == 0:
            zero.append(n)
            est.append(math.nan)
        else:
            est.append(-(n / an**2) * math.log(c / sums.shape[0]))
    return ModerateResult(n_list, est, counts, target, sigma2, False, zero)
