"""Dispatch from a parsed configuration to the statistical routines."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from . import concentration as conc
from . import deviation as dev
from . import limitlaw as ll
from . import observables as obs
from .config import ExperimentConfig
from .dynsys import EnsembleSpec, generate_ensemble, iter_ensemble
from .ergostat import covariance_series, ensemble_sums, green_kubo, nonconventional_average
from .errors import BudgetExceeded, DomainError

DESCRIPTIONS = {
    "covariance": "lag covariances with standard errors and the Green-Kubo variance",
    "clt": "KS distance of S_n f / sqrt(n) to the Gaussian limit, per n",
    "stable": "tail index and characteristic-function fit of S_n f / n^alpha (intermittent map)",
    "asclt": "Kantorovich distance of the log-averaged law of S_k f / sqrt(k) to the Gaussian, per orbit",
    "berry_esseen": "slope of log KS distance against log n",
    "large_dev": "deviation probabilities P(|S_n f / n| > eps) and their decay regime",
    "cgf_rate": "cumulant generating function and its Legendre transform",
    "erdos_renyi": "maximal window average M_k / k with exp(k I) windows",
    "moderate": "moderate-deviation rates -(n / a_n^2) log P(S_n f / a_n in [a, b])",
    "concentration_envelope": "tail envelope of a separately Lipschitz functional",
    "correlation_dev": "exceedance fractions of the correlation estimator",
    "empirical_measure": "Kantorovich distance of the empirical measure to the invariant law",
    "shadowing": "quantiles of the tracing statistic against a reference set",
    "periodogram": "sup deviation of the integrated periodogram from its limit",
    "nonconventional": "multiple ergodic averages with indices k, 2k, ..., l k",
}


@dataclass
class Table:
    columns: list
    rows: list = field(default_factory=list)

    def add(self, *row):
        if len(row) != len(self.columns):
            raise ValueError("row width does not match the header")
        self.rows.append([_scalar(x) for x in row])


@dataclass
class ExperimentReport:
    experiment: str
    config: dict
    tables: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)
    degenerate: bool = False
    budget_exceeded: bool = False

    def as_dict(self):
        return {
            "experiment": self.experiment,
            "config": self.config,
            "summary": {k: _scalar(v) for k, v in self.summary.items()},
            "tables": {k: {"columns": t.columns, "rows": t.rows} for k, t in self.tables.items()},
            "warnings": list(self.warnings),
            "provenance": self.provenance,
        }


def _scalar(x):
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return float(x)
    return x


# ---------------------------------------------------------------- helpers


def build_observable(cfg: ExperimentConfig, system):
    kind = cfg["observable.kind"]
    coord = cfg["observable.coord"] if system.dimension == 2 else 0
    if kind in ("coordinate", "centered_coordinate"):
        base = obs.coordinate(coord)
    elif kind == "affine":
        base = obs.affine(cfg["observable.c0"], cfg["observable.c1"], coord)
    elif kind == "sign_threshold":
        base = obs.sign_threshold(cfg["observable.theta"], coord)
    elif kind == "constant":
        base = obs.constant(cfg["observable.c"])
    else:
        base = obs.tabulated(cfg["observable.grid"], cfg["observable.values"], cfg["observable.interpolate"], coord)
    center = cfg["observable.center"]
    if center == "none":
        return base.on(system)
    if center == "auto":
        return obs.center(base, system, cfg["ensemble.calibration_length"], cfg.seed).on(system)
    return obs.Observable(base.kind, base.params, base.coord, float(center), mean_zero=True).on(system)


def _n_list(cfg):
    nl = cfg.get("ensemble.n_list")
    return list(nl) if nl is not None else [cfg["ensemble.n"]]


def _spec(cfg, m, n):
    return EnsembleSpec(m, n, cfg.seed, cfg["ensemble.burn_in"], calibration_length=cfg["ensemble.calibration_length"])


def _ens(cfg, system, m, n):
    return iter_ensemble(system, _spec(cfg, m, n))


def _budget(cfg, steps):
    if steps > cfg["budget.max_steps"]:
        raise BudgetExceeded(f"{steps:.3g} map steps exceed budget.max_steps={cfg['budget.max_steps']:.3g}")


def _system_warnings(system):
    out = []
    if system.outside_proven_theory:
        out.append(f"outside_proven_theory: {system.label()} parameters are not known to satisfy the hypotheses")
    return out


def _escape_warning(system, cfg, m, n):
    if system.kind not in ("henon", "lozi"):
        return []
    esc = 0
    for b in _ens(cfg, system, m, min(n, 10)):
        esc += b.n_escaped
    return [f"escaped: {esc} of {m} orbits left the trapping box"] if esc else []


# ---------------------------------------------------------------- experiments


def _covariance(cfg, system, f, rep):
    m, n, L = cfg["ensemble.m"], cfg["ensemble.n"], cfg["params.max_lag"]
    _budget(cfg, m * (n + L))
    series = covariance_series(f, _ens(cfg, system, m, n + L), L, n=n)
    t = Table(["lag", "covariance", "stderr"])
    for l, (c, s) in enumerate(zip(series.values, series.stderr)):
        t.add(l, c, s)
    gk = green_kubo(series)
    rep.tables["covariance"] = t
    rep.summary.update(sigma2_hat=gk.sigma2, cutoff_lag=gk.cutoff_lag, n_used=series.n_used, m=m)
    if gk.degenerate:
        rep.degenerate = True
        rep.warnings.append("degenerate: Green-Kubo variance is zero")
    if gk.clamped:
        rep.warnings.append("clamped: negative Green-Kubo sum set to zero")


def _clt(cfg, system, f, rep):
    m, ns = cfg["ensemble.m"], _n_list(cfg)
    _budget(cfg, m * ns[-1])
    res = ll.clt_test(f, system, ns, m, cfg.seed, cfg.get("params.sigma2"), cfg["ensemble.burn_in"])
    t = Table(["n", "ks_distance", "sigma2_hat", "m"])
    for r in res.rows:
        t.add(r.n, r.ks_distance, r.sigma2_hat, r.m)
    rep.tables["clt"] = t
    rep.summary.update(sigma2_hat=res.sigma2_hat, cutoff_lag=res.cutoff_lag)
    rep.warnings += res.warnings
    rep.degenerate = res.degenerate


def _stable(cfg, system, f, rep):
    m, n = cfg["ensemble.m"], cfg["ensemble.n"]
    _budget(cfg, m * n)
    res = ll.stable_test(f, system, n, m, cfg.seed, cfg["ensemble.burn_in"])
    t = Table(["t", "ecf_re", "ecf_im", "model_re", "model_im"])
    grid = ll.DEFAULT_CF_GRID
    e = ll.empirical_cf(res.samples, grid)
    s = ll.stable_cf(grid, res.params)
    for ti, a, b in zip(grid, e, s):
        t.add(ti, a.real, a.imag, b.real, b.imag)
    rep.tables["cf"] = t
    tf = res.tail
    rep.summary.update(
        p_theory=1 / system.param("alpha"), p_hat=tf.p_hat, tail_r2=tf.r2, tail_points=tf.n_tail,
        c_hat=res.params.c, beta=res.params.beta, cf_distance=res.cf_distance, n=n, m=m,
    )
    if tf.unreliable:
        rep.warnings.append("unreliable: fewer than 50 tail points")
    if tf.poor_fit:
        rep.warnings.append("poor_fit: tail log-log plot is curved")
    rep.warnings.append("fitted_scale: the stable scale c is fitted, not predicted")


def _asclt(cfg, system, f, rep):
    ns, orbits = _n_list(cfg), cfg["params.orbits"]
    _budget(cfg, orbits * ns[-1])
    sigma2 = cfg.get("params.sigma2")
    if sigma2 is None:
        gk = ll.estimate_sigma2(f, system, 10**4, cfg.seed, offset=orbits)
        sigma2 = gk.sigma2
        rep.summary["sigma2_hat"] = sigma2
    if sigma2 <= 0:
        rep.degenerate = True
        rep.warnings.append("degenerate: variance is zero")
        return
    t = Table(["orbit", "n", "kantorovich"])
    improved = 0
    for i in range(orbits):
        orbit = generate_ensemble(system, _spec(cfg, orbits, ns[-1]), i, i + 1).orbits[0]
        d = ll.asclt_distance(f, orbit, ns, sigma2)
        for n, di in zip(ns, d):
            t.add(i, n, di)
        improved += d[-1] < d[0]
    rep.tables["asclt"] = t
    rep.summary.update(sigma2=sigma2, orbits_improved=improved, orbits=orbits)


def _berry_esseen(cfg, system, f, rep):
    m, ns = cfg["ensemble.m"], _n_list(cfg)
    _budget(cfg, m * ns[-1])
    res = ll.berry_esseen_probe(f, system, ns, m, cfg.seed, cfg.get("params.sigma2"), cfg["ensemble.burn_in"])
    t = Table(["n", "ks_distance"])
    for n, k in zip(res.n_list, res.ks):
        t.add(n, k)
    rep.tables["berry_esseen"] = t
    rep.summary.update(slope=res.slope, sigma2=res.sigma2, m=m)
    if res.degenerate:
        rep.degenerate = True
        rep.warnings.append("degenerate: variance is zero")


def _large_dev(cfg, system, f, rep):
    m, ns, eps = cfg["ensemble.m"], _n_list(cfg), cfg["params.eps"]
    _budget(cfg, m * ns[-1])
    probs = dev.deviation_curve(f, _ens(cfg, system, m, ns[-1]), ns, eps)
    t = Table(["n", "fraction", "stderr", "count", "m"])
    for p in probs:
        t.add(p.n, p.fraction, p.stderr, p.count, p.m)
    rep.tables["large_dev"] = t
    nonzero = [(p.n, p.fraction) for p in probs if p.fraction > 0]
    if len(nonzero) >= 4:
        fit = dev.decay_fit(nonzero)
        rep.summary.update(regime=fit.regime, slope=fit.slope, r2_exponential=fit.r2_exponential,
                           r2_polynomial=fit.r2_polynomial)
    else:
        rep.summary.update(regime="undetectable")
        rep.warnings.append("undetectable: fewer than four nonzero fractions; increase m")
    tc = system.tail_class
    if tc.kind == "polynomial":
        rep.summary["slope_theory"] = 1.0 - tc.gamma
    rep.summary["eps"] = eps


def _cgf_rate(cfg, system, f, rep):
    m, n = cfg["ensemble.m"], cfg["ensemble.n"]
    _budget(cfg, m * n)
    sup = f.sup_norm(system)
    zmax = min(cfg["params.z_max"], dev.max_safe_z(n, sup))
    if zmax < cfg["params.z_max"]:
        rep.warnings.append(f"overflow_guard: z range reduced to {zmax:.6g}")
    z = np.linspace(-zmax, zmax, cfg["params.z_points"])
    sums = ensemble_sums(f, _ens(cfg, system, m, n), [n])[:, 0]
    est = dev.cgf_from_sums(sums, n, z, sup)
    t = Table(["z", "psi", "stderr", "ess"])
    for row in zip(est.z_grid, est.psi, est.stderr, est.ess):
        t.add(*row)
    rep.tables["cgf"] = t
    tl = cfg.get("params.t_list")
    slopes = est.slopes()
    t_grid = np.array(tl) if tl is not None else np.linspace(0.0, 0.9 * slopes[-1], 10)
    rf = dev.rate_function(est, t_grid)
    t2 = Table(["t", "rate", "boundary"])
    for row in zip(rf.t_grid, rf.values, rf.boundary):
        t2.add(*row)
    rep.tables["rate"] = t2
    rep.summary.update(z_max=zmax, slope_range_lo=slopes[0], slope_range_hi=slopes[-1], n=n, m=m,
                       convexity_violation=est.convexity_violation)
    if est.ess_collapsed:
        rep.warnings.append(f"ess_collapse: effective sample size below 1% at {len(est.ess_collapsed)} z values")
    if np.any(rf.boundary):
        rep.warnings.append("extrapolation: some t values attain the supremum at the z-grid edge")


def _erdos_renyi(cfg, system, f, rep):
    t_level, rate, ks = cfg["params.t"], cfg["params.rate"], cfg["params.k_list"]
    orbits = cfg["params.orbits"]
    budget = cfg["params.window_budget"]
    keep = [k for k in ks if k <= dev.window_count(k, rate) <= budget]
    dropped = [k for k in ks if k not in keep]
    if dropped:
        rep.budget_exceeded = True
        rep.warnings.append("budget: dropped k=" + ",".join(map(str, dropped)) + f" (window cap {budget})")
    if not keep:
        raise BudgetExceeded(f"no k fits the window budget {budget}")
    N_max = max(dev.window_count(k, rate) for k in keep)
    _budget(cfg, orbits * N_max)
    t = Table(["orbit", "k", "windows", "max_sum", "ratio"])
    for i in range(orbits):
        orbit = generate_ensemble(system, _spec(cfg, orbits, N_max), i, i + 1).orbits[0]
        vals = np.asarray(f(orbit), dtype=float)
        for k in keep:
            N = dev.window_count(k, rate)
            mk = dev.erdos_renyi_stat(vals, k, N)
            t.add(i, k, N, mk, mk / k)
    rep.tables["erdos_renyi"] = t
    rep.summary.update(t=t_level, rate=rate, orbits=orbits)


def _moderate(cfg, system, f, rep):
    m, ns = cfg["ensemble.m"], _n_list(cfg)
    _budget(cfg, m * ns[-1])
    res = dev.moderate_probe(f, system, cfg["params.theta"], ns, m, cfg["params.a"], cfg["params.b"],
                             cfg.get("params.sigma2"), cfg.seed, cfg["ensemble.burn_in"])
    t = Table(["n", "estimate", "count", "target"])
    for n, e, c in zip(res.n_list, res.estimates, res.counts):
        t.add(n, e, c, res.target)
    rep.tables["moderate"] = t
    rep.summary.update(sigma2=res.sigma2, target=res.target, theta=cfg["params.theta"])
    if res.degenerate:
        rep.degenerate = True
        rep.warnings.append("degenerate: variance is zero")
    if res.zero_counts:
        rep.warnings.append("zero_counts: no samples in [a, b] at n=" + ",".join(map(str, res.zero_counts)))


def _functional(cfg, system, f):
    n, kind = cfg["ensemble.n"], cfg["params.functional"]
    if kind == "sum":
        return obs.ergodic_sum_functional(f, n)
    if kind == "average":
        return obs.ergodic_average_functional(f, n)
    if kind == "correlation":
        return obs.correlation_functional(f, n, cfg["params.k"], f.sup_norm(system))
    ref = conc.reference_measure(system, seed=cfg.seed)
    from .ergostat import empirical_measure, kantorovich_1d

    return obs.kantorovich_functional(n, lambda w: kantorovich_1d(empirical_measure(w), ref))


def _concentration_envelope(cfg, system, f, rep):
    m = cfg["ensemble.m"]
    obs.requires_finite_lipschitz(f)
    K = _functional(cfg, system, f)
    _budget(cfg, m * K.arity)
    d = conc.functional_samples(K, system, m, cfg.seed, cfg["ensemble.burn_in"])
    r = conc.envelope_fit(d)
    t = Table(["t", "tail_fraction"])
    for row in zip(r.t_grid, r.tail):
        t.add(*row)
    rep.tables["envelope"] = t
    rep.summary.update(functional=K.name, lip_sum_sq=d.lip_sum_sq, regime=r.regime, C_hat=r.C_hat,
                       quality=r.quality, r2_gaussian=r.r2_gaussian, r2_polynomial=r.r2_polynomial,
                       excluded=d.n_excluded, m=d.m)
    rep.warnings += r.flags
    if d.n_excluded:
        rep.warnings.append(f"escaped: {d.n_excluded} orbits excluded")
    if r.regime == "inconclusive":
        rep.degenerate = "zero_variance" in r.flags


def _correlation_dev(cfg, system, f, rep):
    m, ns = cfg["ensemble.m"], _n_list(cfg)
    k, t_level = cfg["params.k"], cfg["params.t"]
    _budget(cfg, m * (ns[-1] + k))
    res = conc.correlation_dev_experiment(f, system, ns, k, t_level, m, cfg.seed, cfg["ensemble.burn_in"])
    t = Table(["n", "fraction", "upper_bound", "censored", "exponent"])
    for r in res.rows:
        t.add(r.n, r.fraction, r.upper_bound, r.censored, r.exponent)
    rep.tables["correlation_dev"] = t
    rep.summary.update(k=k, t=t_level, slope=res.slope, r2=res.r2, m=m)
    rep.warnings += res.warnings


def _empirical_measure(cfg, system, f, rep):
    m, ns = cfg["ensemble.m"], _n_list(cfg)
    _budget(cfg, m * sum(ns))
    res = conc.empirical_measure_conc(system, ns, m, cfg.seed, burn_in=cfg["ensemble.burn_in"])
    t = Table(["n", "mean_distance", "std_distance", "m"])
    for r in res.rows:
        t.add(r.n, r.mean_distance, r.std_distance, r.m)
    rep.tables["empirical_measure"] = t
    rep.summary.update(slope=res.slope)
    if res.envelope is not None:
        rep.summary.update(envelope_regime=res.envelope.regime, envelope_quality=res.envelope.quality)
    rep.warnings += res.warnings
    if system.kind == "doubling":
        rep.warnings.append("extrapolation: the 1/sqrt(n) mean-distance scale is proven for the quadratic family")


def _shadowing(cfg, system, f, rep):
    m, ns = cfg["ensemble.m"], _n_list(cfg)
    m_test = cfg["params.m_test"]
    _budget(cfg, (m + m_test) * ns[-1] + m * m_test * ns[-1])
    res = conc.shadowing_experiment(system, cfg["params.mu_target"], ns, m, cfg.seed, m_test,
                                    burn_in=cfg["ensemble.burn_in"])
    t = Table(["n", "q50", "q90", "q99", "scale"])
    for r in res.rows:
        t.add(r.n, r.q50, r.q90, r.q99, r.scale)
    rep.tables["shadowing"] = t
    rep.summary.update(mu_A=res.mu_A, size_A=res.size_A, scaling_slope=res.scaling_slope)
    rep.warnings += res.warnings


def _periodogram(cfg, system, f, rep):
    m, ns = cfg["ensemble.m"], _n_list(cfg)
    _budget(cfg, m * sum(ns))
    grid = np.linspace(0.0, 2 * math.pi, cfg["params.omega_points"])
    t = Table(["n", "median_sup_dev", "q99_sup_dev", "scale", "c0", "cutoff_lag"])
    for n in ns:
        r = conc.periodogram_sup_dev(f, system, n, m, grid, cfg.seed, burn_in=cfg["ensemble.burn_in"])
        t.add(n, r.median, r.q99, r.scale, r.c0, r.cutoff_lag)
        if n - 1 > conc.LAG_CAP:
            rep.warnings.append(f"lag_cap: n={n} truncated at lag {conc.LAG_CAP}")
    rep.tables["periodogram"] = t


def _nonconventional(cfg, system, f, rep):
    m, n, ell = cfg["ensemble.m"], cfg["ensemble.n"], cfg["params.ell"]
    length = ell * (n - 1) + 1
    _budget(cfg, m * length)
    vals = []
    for b in _ens(cfg, system, m, length):
        for orbit in b.valid():
            vals.append(nonconventional_average([f] * ell, orbit, n))
    v = np.array(vals)
    t = Table(["ell", "n", "mean", "stderr", "m"])
    t.add(ell, n, float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else math.inf, v.size)
    rep.tables["nonconventional"] = t


RUNNERS = {
    "covariance": _covariance,
    "clt": _clt,
    "stable": _stable,
    "asclt": _asclt,
    "berry_esseen": _berry_esseen,
    "large_dev": _large_dev,
    "cgf_rate": _cgf_rate,
    "erdos_renyi": _erdos_renyi,
    "moderate": _moderate,
    "concentration_envelope": _concentration_envelope,
    "correlation_dev": _correlation_dev,
    "empirical_measure": _empirical_measure,
    "shadowing": _shadowing,
    "periodogram": _periodogram,
    "nonconventional": _nonconventional,
}


def run(cfg: ExperimentConfig) -> ExperimentReport:
    """Run one experiment.  The report depends only on the configuration."""
    system = cfg.system()
    rep = ExperimentReport(cfg.experiment, cfg.echo())
    rep.provenance = {
        "seed": cfg.seed,
        "version": __version__,
        "numpy": np.__version__,
        "system": system.label(),
        "tail_class": str(system.tail_class),
        "seed_rule": "orbit i uses SeedSequence(seed, spawn_key=(0, i))",
    }
    f = build_observable(cfg, system)
    rep.provenance["observable"] = f.describe()
    rep.warnings += _system_warnings(system)
    if cfg.experiment not in ("erdos_renyi", "asclt") and cfg.get("ensemble.m"):
        n0 = cfg.get("ensemble.n") or _n_list(cfg)[0]
        rep.warnings += _escape_warning(system, cfg, cfg["ensemble.m"], n0)
    try:
        RUNNERS[cfg.experiment](cfg, system, f, rep)
    except DomainError as exc:
        raise DomainError(f"{cfg.experiment}: {exc}") from exc
    return rep
