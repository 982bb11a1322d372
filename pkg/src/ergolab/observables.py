"""Observables and separately Lipschitz functionals.

Observables are a closed set of kinds with closed-form Lipschitz constants
(plus a tabulated escape hatch), so concentration bookkeeping stays exact.
All evaluations are vectorized: ``f(points)`` accepts a scalar, an array of
1-D states, or an ``(..., 2)`` array of planar states.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .dynsys import SystemDescriptor, calibrate, distance
from .errors import DomainError, MisuseError

OBSERVABLE_KINDS = (
    "coordinate",
    "centered_coordinate",
    "affine",
    "sign_threshold",
    "constant",
    "tabulated",
)


@dataclass(frozen=True)
class Observable:
    kind: str
    params: tuple = ()
    coord: int = 0
    shift: float = 0.0
    mean_zero: bool = False

    def __post_init__(self):
        if self.kind not in OBSERVABLE_KINDS:
            raise DomainError(f"unknown observable kind {self.kind!r}")

    def _coord(self, p):
        p = np.asarray(p, dtype=float)
        if p.ndim >= 1 and p.shape[-1:] == (2,) and self._planar:
            return p[..., self.coord]
        return p

    # planar states are only unpacked when the caller says so via ``on``;
    # default assumes 1-D data
    _planar = False

    def on(self, system: SystemDescriptor):
        """View of this observable that reads planar states correctly."""
        if system.dimension == 2:
            obj = Observable(self.kind, self.params, self.coord, self.shift, self.mean_zero)
            object.__setattr__(obj, "_planar", True)
            return obj
        return self

    def raw(self, x):
        k = self.kind
        if k == "coordinate":
            return x
        if k == "centered_coordinate":
            return x - self.params[0]
        if k == "affine":
            c0, c1 = self.params
            return c0 + c1 * x
        if k == "sign_threshold":
            return np.where(x >= self.params[0], 1.0, -1.0)
        if k == "constant":
            return np.full_like(x, self.params[0], dtype=float)
        grid, values, interpolate = self.params
        grid = np.asarray(grid)
        if not interpolate:
            pos = np.searchsorted(grid, x)
            pos = np.clip(pos, 0, grid.size - 1)
            if not np.all(grid[pos] == x):
                raise DomainError("tabulated observable queried off its grid")
            return np.asarray(values)[pos]
        return np.interp(x, grid, values)

    def __call__(self, p):
        x = self._coord(p)
        out = self.raw(x) - self.shift
        return out if np.ndim(out) else float(out)

    @property
    def lipschitz_constant(self):
        k = self.kind
        if k in ("coordinate", "centered_coordinate"):
            return 1.0
        if k == "affine":
            return abs(self.params[1])
        if k == "sign_threshold":
            return math.inf
        if k == "constant":
            return 0.0
        grid, values, interpolate = self.params
        if not interpolate:
            return math.inf
        slopes = np.abs(np.diff(values) / np.diff(grid))
        return float(slopes.max()) if slopes.size else 0.0

    @property
    def value_at_zero(self):
        return float(self(np.zeros(2) if self._planar else 0.0))

    def sup_norm(self, system):
        """sup |f| over the system domain (planar maps: the trapping box)."""
        (lo, hi) = system.domain[1][self.coord if self._planar else 0]
        if system.kind == "iid_rademacher":
            return float(np.max(np.abs(self.raw(np.array([-1.0, 1.0])) - self.shift)))
        k = self.kind
        if k == "tabulated":
            grid, values, _ = self.params
            xs = np.concatenate([[lo, hi], np.clip(grid, lo, hi)])
        elif k == "sign_threshold":
            xs = np.array([lo, hi, self.params[0]])
        else:
            xs = np.array([lo, hi])
        return float(np.max(np.abs(self.raw(xs) - self.shift)))

    def describe(self):
        ps = ",".join(f"{v:g}" for v in self.params if isinstance(v, (int, float)))
        base = f"{self.kind}({ps})" if ps else self.kind
        return f"{base}-{self.shift:.6g}" if self.shift else base


def coordinate(coord=0):
    return Observable("coordinate", (), coord)


def centered_coordinate(center, coord=0):
    return Observable("centered_coordinate", (float(center),), coord, mean_zero=True)


def affine(c0, c1, coord=0):
    return Observable("affine", (float(c0), float(c1)), coord)


def sign_threshold(theta, coord=0):
    return Observable("sign_threshold", (float(theta),), coord)


def constant(c):
    return Observable("constant", (float(c),), mean_zero=(c == 0))


def tabulated(grid, values, interpolate=True, coord=0):
    grid = tuple(float(g) for g in grid)
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise DomainError("tabulated grid must be strictly increasing")
    if len(values) != len(grid):
        raise DomainError("tabulated grid and values differ in length")
    return Observable("tabulated", (grid, tuple(float(v) for v in values), bool(interpolate)), coord)


def _uniform_mean(f, lo, hi):
    k = f.kind
    if k == "coordinate" or k == "centered_coordinate":
        return 0.5 * (lo + hi) - (f.params[0] if k == "centered_coordinate" else 0.0)
    if k == "affine":
        return f.params[0] + f.params[1] * 0.5 * (lo + hi)
    if k == "sign_threshold":
        th = min(max(f.params[0], lo), hi)
        return ((hi - th) - (th - lo)) / (hi - lo)
    if k == "constant":
        return f.params[0]
    u, w = np.polynomial.legendre.leggauss(200)
    xs = lo + (hi - lo) * 0.5 * (u + 1.0)
    return float(0.5 * np.sum(w * f.raw(xs)))


def invariant_mean(f, system, calibration_length=10**7, seed=0):
    """Integral of ``f`` against the invariant law of ``system``.

    Closed form where the invariant law is Lebesgue (or the iid law);
    otherwise a calibration-orbit estimate.
    """
    f = f.on(system)
    base = Observable(f.kind, f.params, f.coord).on(system)
    if system.kind == "iid_rademacher":
        val = 0.5 * float(np.sum(base.raw(np.array([-1.0, 1.0]))))
    elif system.lebesgue_invariant:
        val = _uniform_mean(base, 0.0, 1.0)
    elif f.kind == "constant":
        val = f.params[0]
    else:
        cal = calibrate(system, calibration_length, seed)
        val = cal.mean_of(base, key=base)
    return val - f.shift


def center(f, system, calibration_length=10**7, seed=0):
    """Return ``f - integral(f dmu)`` flagged ``mean_zero``.

    The centering constant is stored with the observable (in ``params`` for
    centered coordinates, in ``shift`` otherwise).
    """
    m = invariant_mean(f, system, calibration_length, seed)
    if f.kind == "coordinate" and f.shift == 0.0:
        return centered_coordinate(m, f.coord)
    return Observable(f.kind, f.params, f.coord, f.shift + m, mean_zero=True)


def evaluate(f, p):
    """f(p) for a single state."""
    return f(p)


def ergodic_sum(f, orbit):
    """S_n f = f(x) + f(Tx) + ... + f(T^(n-1) x), compensated."""
    vals = np.atleast_1d(f(np.asarray(orbit, dtype=float)))
    if vals.size == 0:
        raise DomainError("empty orbit")
    return math.fsum(vals.tolist())


# ---------------------------------------------------------------- functionals


@dataclass(frozen=True)
class SeparatelyLipschitzFunctional:
    name: str
    arity: int
    lip: tuple
    func: Callable[[np.ndarray], float]

    def __post_init__(self):
        if len(self.lip) != self.arity:
            raise DomainError("need one Lipschitz constant per variable")
        if any(v < 0 for v in self.lip):
            raise DomainError("Lipschitz constants must be >= 0")


def functional_eval(K, window):
    window = np.asarray(window, dtype=float)
    if window.shape[0] != K.arity:
        raise DomainError(f"{K.name} expects {K.arity} points, got {window.shape[0]}")
    return float(K.func(window))


def lip_sum_sq(K):
    """Sum of squared per-coordinate Lipschitz constants."""
    lip = np.asarray(K.lip, dtype=float)
    if not np.all(np.isfinite(lip)):
        raise DomainError(f"{K.name} has an infinite Lipschitz constant")
    return math.fsum((lip * lip).tolist())


def ergodic_sum_functional(f, n):
    L = f.lipschitz_constant
    return SeparatelyLipschitzFunctional(
        f"S_{n}[{f.describe()}]", n, (L,) * n, lambda w: math.fsum(np.atleast_1d(f(w)).tolist())
    )


def ergodic_average_functional(f, n):
    L = f.lipschitz_constant
    return SeparatelyLipschitzFunctional(
        f"A_{n}[{f.describe()}]", n, (L / n,) * n,
        lambda w: math.fsum(np.atleast_1d(f(w)).tolist()) / n,
    )


def correlation_functional(f, n, k, sup_norm):
    """(1/n) sum_{j<n} f(x_j) f(x_{j+k}) as a function of n + k points.

    Variable ``i`` enters one product (two when ``k <= i < n``, and the
    square when ``k == 0``), so its constant is ``sup|f| Lip(f) / n`` times
    that multiplicity.
    """
    L = f.lipschitz_constant
    base = sup_norm * L / n
    lip = []
    for i in range(n + k):
        uses = int(i < n) + int(k <= i < n + k)
        lip.append(base * uses)

    def value(w):
        v = np.atleast_1d(f(w))
        return float(np.dot(v[:n], v[k : k + n]) / n)

    return SeparatelyLipschitzFunctional(f"C_{n},{k}[{f.describe()}]", n + k, tuple(lip), value)


def kantorovich_functional(n, reference_cdf_distance):
    """dist_K(empirical measure of the window, reference); each constant 1/n."""
    return SeparatelyLipschitzFunctional(
        f"distK_{n}", n, (1.0 / n,) * n, lambda w: reference_cdf_distance(np.asarray(w))
    )


def shadowing_functional(system, reference_orbits):
    """(1/n) min over reference orbits of the summed pointwise distance."""
    ref = np.asarray(reference_orbits, dtype=float)
    n = ref.shape[1]

    def value(w):
        d = distance(system, ref, np.asarray(w)[None, ...])
        return float(np.min(d.mean(axis=1)))

    return SeparatelyLipschitzFunctional(f"shadow_{n}", n, (1.0 / n,) * n, value)


def requires_finite_lipschitz(f):
    if not math.isfinite(f.lipschitz_constant):
        raise MisuseError(f"{f.describe()} is not Lipschitz; barred from concentration experiments")
