"""Catalog of maps and reproducible orbit ensembles.

Orbit ``i`` of an ensemble draws every random quantity it needs from its own
substream ``SeedSequence(seed, spawn_key=(0, i))``; calibration orbits use
``spawn_key=(1, j)``.  Ensembles can therefore be generated in any block
order, or in parallel, and still be bit-identical.

Doubling orbits are exact: a Lebesgue-random initial point is an infinite
random bit string, read lazily, and ``T^j x`` is the 53-bit window starting
at bit ``j``.  The cat map iterates integers modulo ``2**61 - 1``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Iterator

import numpy as np

from . import _kernels
from .errors import DomainError, MisuseError

KINDS = (
    "doubling",
    "cat",
    "manneville_pomeau",
    "quadratic",
    "lozi",
    "henon",
    "iid_uniform",
    "iid_rademacher",
)
IID_KINDS = ("iid_uniform", "iid_rademacher")

_DEFAULTS = {
    "quadratic": {"a": 2.0},
    "henon": {"a": 1.4, "b": 0.3},
    "lozi": {"a": 1.7, "b": 0.5},
}
_REQUIRED = {"manneville_pomeau": ("alpha",)}
_ALLOWED = {
    "doubling": (),
    "cat": (),
    "manneville_pomeau": ("alpha",),
    "quadratic": ("a",),
    "henon": ("a", "b"),
    "lozi": ("a", "b"),
    "iid_uniform": (),
    "iid_rademacher": (),
}

TRAP_HALF_WIDTH = 2.0
# uniform sampling boxes for planar maps, well inside the basin of the
# default-parameter attractors
BASIN_BOX = {
    "henon": ((-0.5, 0.5), (-0.2, 0.2)),
    "lozi": ((-0.5, 0.5), (-0.25, 0.25)),
}
DEFAULT_BURN_IN = 1000


@dataclass(frozen=True)
class TailClass:
    kind: str  # exponential | polynomial | iid | unknown
    gamma: float | None = None

    def __str__(self):
        if self.kind == "polynomial":
            return f"polynomial({self.gamma:g})"
        return self.kind


@dataclass(frozen=True)
class SystemDescriptor:
    kind: str
    params: tuple[tuple[str, float], ...] = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown system kind {self.kind!r}")
        _validate(self.kind, dict(self.params))

    def param(self, name):
        return dict(self.params)[name]

    @property
    def is_iid(self):
        return self.kind in IID_KINDS

    @property
    def dimension(self):
        return 2 if self.kind in ("cat", "henon", "lozi") else 1

    @property
    def domain(self):
        """(label, bounds) where bounds is ((lo, hi),) per coordinate."""
        k = self.kind
        if k in ("doubling", "iid_uniform"):
            return "interval[0,1)", ((0.0, 1.0),)
        if k == "manneville_pomeau":
            return "interval[0,1]", ((0.0, 1.0),)
        if k in ("quadratic", "iid_rademacher"):
            return "interval[-1,1]", ((-1.0, 1.0),)
        if k == "cat":
            return "torus", ((0.0, 1.0), (0.0, 1.0))
        h = TRAP_HALF_WIDTH
        return "trapping_box", ((-h, h), (-h, h))

    @property
    def tail_class(self):
        if self.kind == "manneville_pomeau":
            return TailClass("polynomial", 1.0 / self.param("alpha"))
        if self.is_iid:
            return TailClass("iid")
        return TailClass("exponential")

    @property
    def outside_proven_theory(self):
        """True when the parameters are not known to satisfy the theory's hypotheses."""
        if self.kind == "henon":
            return True
        # Benedicks-Carleson parameters are not identifiable numerically
        return self.kind == "quadratic"

    @property
    def lebesgue_invariant(self):
        return self.kind in ("doubling", "cat", "iid_uniform")

    def label(self):
        ps = ",".join(f"{k}={v:g}" for k, v in self.params)
        return f"{self.kind}({ps})" if ps else self.kind


def _validate(kind, params):
    allowed = _ALLOWED[kind]
    for name in params:
        if name not in allowed:
            raise DomainError(f"{kind}: unexpected parameter {name!r}")
    for name in _REQUIRED.get(kind, ()):
        if name not in params:
            raise DomainError(f"{kind}: missing parameter {name!r}")
    for name, v in params.items():
        if not math.isfinite(v):
            raise DomainError(f"{kind}.{name} must be finite")
    if kind == "manneville_pomeau" and not 0.0 < params["alpha"] < 1.0:
        raise DomainError(f"manneville_pomeau.alpha={params['alpha']} outside (0, 1)")
    if kind == "quadratic" and not 1.0 <= params["a"] <= 2.0:
        raise DomainError(f"quadratic.a={params['a']} outside [1, 2]")
    if kind in ("henon", "lozi"):
        if not 0.0 < params["a"] <= 2.0:
            raise DomainError(f"{kind}.a={params['a']} outside (0, 2]")
        if not 0.0 < abs(params["b"]) < 1.0:
            raise DomainError(f"{kind}.b={params['b']} must satisfy 0 < |b| < 1")


def make_system(kind, **params):
    """Build a validated :class:`SystemDescriptor`, filling parameter defaults."""
    if kind not in KINDS:
        raise DomainError(f"unknown system kind {kind!r}; choose from {', '.join(KINDS)}")
    merged = dict(_DEFAULTS.get(kind, {}))
    merged.update({k: float(v) for k, v in params.items()})
    return SystemDescriptor(kind, tuple(sorted(merged.items())))


# ---------------------------------------------------------------- points


def in_domain(system, p):
    _, bounds = system.domain
    coords = np.atleast_1d(np.asarray(p, dtype=float))
    if coords.shape != (system.dimension,):
        return False
    if system.kind == "iid_rademacher":
        return coords[0] in (-1.0, 1.0)
    for c, (lo, hi) in zip(coords, bounds):
        if not lo <= c <= hi:
            return False
        if system.kind in ("doubling", "cat", "iid_uniform") and c == hi:
            return False
    return True


def apply(system, p):
    """One step of the map.  Planar maps may leave the trapping box."""
    if system.is_iid:
        raise MisuseError(f"{system.kind} has no deterministic map")
    if not in_domain(system, p):
        raise DomainError(f"point {p!r} outside the domain of {system.label()}")
    k = system.kind
    if k == "doubling":
        return (2.0 * float(p)) % 1.0
    if k == "manneville_pomeau":
        return mp_step(float(p), system.param("alpha"))
    if k == "quadratic":
        x = float(p)
        return 1.0 - system.param("a") * x * x
    x, y = (float(c) for c in p)
    if k == "cat":
        return ((2.0 * x + y) % 1.0, (x + y) % 1.0)
    a, b = system.param("a"), system.param("b")
    if k == "henon":
        return (1.0 - a * x * x + y, b * x)
    return (1.0 - a * abs(x) + y, b * x)


def mp_step(x, alpha):
    """Intermittent map: ``x + 2^alpha x^(1+alpha)`` on [0, 1/2), ``2x - 1`` on [1/2, 1]."""
    if x < 0.5:
        return min(x + 2.0**alpha * x ** (1.0 + alpha), 1.0)
    return 2.0 * x - 1.0


def distance(system, u, v):
    """Metric rescaled so the domain has diameter at most one.

    Circle and torus use the arc metric per coordinate (combined in the
    Euclidean way); intervals are rescaled by their length; planar boxes
    by their diagonal.  Works elementwise on arrays of points.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if system.kind in ("doubling", "cat"):
        d = np.abs(u - v) % 1.0
        d = np.minimum(d, 1.0 - d)
        return np.sqrt(np.sum(d * d, axis=-1)) if system.kind == "cat" else d
    if system.dimension == 2:
        diam = 2.0 * TRAP_HALF_WIDTH * math.sqrt(2.0)
        return np.sqrt(np.sum((u - v) ** 2, axis=-1)) / diam
    (lo, hi), = system.domain[1]
    return np.abs(u - v) / (hi - lo)


# ---------------------------------------------------------------- single orbits


@dataclass
class Orbit:
    points: np.ndarray
    escaped_at: int | None = None

    @property
    def escaped(self):
        return self.escaped_at is not None

    def __len__(self):
        return len(self.points)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.points, dtype=dtype)


def _exact_rational_orbit(system, x0, n, burn_in):
    if system.kind == "doubling":
        q = Fraction(x0)
        num, den = q.numerator, q.denominator
        out = np.empty(n)
        for _ in range(burn_in):
            num = (2 * num) % den
        for j in range(n):
            out[j] = num / den
            num = (2 * num) % den
        return out
    qx, qy = Fraction(x0[0]), Fraction(x0[1])
    den = math.lcm(qx.denominator, qy.denominator)
    x, y = int(qx * den), int(qy * den)
    out = np.empty((n, 2))
    for _ in range(burn_in):
        x, y = (2 * x + y) % den, (x + y) % den
    for j in range(n):
        out[j] = (x / den, y / den)
        x, y = (2 * x + y) % den, (x + y) % den
    return out


def iterate(system, x0, n, burn_in=0):
    """Return the orbit ``T^burn_in x0, ..., T^(burn_in+n-1) x0``.

    Doubling and cat orbits are computed in exact rational arithmetic
    (``x0`` may be a :class:`fractions.Fraction`; floats are read as the
    dyadic rationals they are).  Planar orbits that leave the trapping box
    are truncated and carry the escape index.
    """
    if n < 1:
        raise DomainError("n must be >= 1")
    if system.is_iid:
        raise MisuseError(f"{system.kind} has no deterministic map")
    pt = x0 if system.dimension == 1 else tuple(x0)
    as_float = float(pt) if system.dimension == 1 else tuple(float(c) for c in pt)
    if not in_domain(system, as_float):
        raise DomainError(f"initial point {x0!r} outside the domain of {system.label()}")
    k = system.kind
    if k in ("doubling", "cat"):
        return Orbit(_exact_rational_orbit(system, pt, n, burn_in))
    if k in ("manneville_pomeau", "quadratic"):
        code = _kernels.MP if k == "manneville_pomeau" else _kernels.QUADRATIC
        a = system.param("alpha") if k == "manneville_pomeau" else system.param("a")
        pts = _kernels.orbits_1d(code, a, np.array([as_float]), n, burn_in)[0]
        return Orbit(pts)
    code = _kernels.HENON if k == "henon" else _kernels.LOZI
    pts, esc = _kernels.orbits_2d(
        code, system.param("a"), system.param("b"), np.array([as_float]), n, burn_in,
        TRAP_HALF_WIDTH,
    )
    if esc[0] >= 0:
        return Orbit(pts[0, : esc[0]], escaped_at=int(esc[0]))
    return Orbit(pts[0])


# ---------------------------------------------------------------- randomness


def orbit_rng(seed, index):
    """Generator for orbit ``index`` of the ensemble with master ``seed``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(0, index))))


def aux_rng(seed, index):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(1, index))))


def _uniform_point(system, rng):
    k = system.kind
    if k in BASIN_BOX:
        (x0, x1), (y0, y1) = BASIN_BOX[k]
        return (x0 + (x1 - x0) * rng.random(), y0 + (y1 - y0) * rng.random())
    if k == "cat":
        return (rng.random(), rng.random())
    if k == "iid_rademacher":
        return 1.0 if rng.random() < 0.5 else -1.0
    (lo, hi), = system.domain[1]
    return lo + (hi - lo) * rng.random()


def sample_initial(system, m, seed):
    """``m`` points uniform on the domain (planar maps: on the basin box).

    Point ``i`` is the first draw of orbit ``i``'s substream.
    """
    if m < 1:
        raise DomainError("m must be >= 1")
    pts = [_uniform_point(system, orbit_rng(seed, i)) for i in range(m)]
    return np.array(pts, dtype=float)


# ---------------------------------------------------------------- ensembles


@dataclass(frozen=True)
class EnsembleSpec:
    m: int
    n: int
    seed: int
    burn_in: int = DEFAULT_BURN_IN
    # "lebesgue", "invariant", or "auto" (invariant for polynomial tails)
    initial_law: str = "auto"
    calibration_length: int = 10**7

    def __post_init__(self):
        if self.m < 1 or self.n < 1:
            raise DomainError("ensemble needs m >= 1 and n >= 1")
        if self.burn_in < 0:
            raise DomainError("burn_in must be >= 0")
        if self.initial_law not in ("auto", "lebesgue", "invariant"):
            raise DomainError(f"unknown initial law {self.initial_law!r}")


@dataclass
class OrbitEnsemble:
    system: SystemDescriptor
    orbits: np.ndarray  # (m, n) or (m, n, 2)
    burn_in: int
    master_seed: int
    escaped: np.ndarray  # bool per orbit
    start: int = 0
    escaped_at: np.ndarray | None = None

    @property
    def m(self):
        return self.orbits.shape[0]

    @property
    def n(self):
        return self.orbits.shape[1]

    @property
    def n_escaped(self):
        return int(self.escaped.sum())

    def valid(self):
        """Orbits that never left the trapping box."""
        return self.orbits[~self.escaped]


def _resolve_law(system, spec):
    if spec.initial_law == "auto":
        return "invariant" if system.tail_class.kind == "polynomial" else "lebesgue"
    return spec.initial_law


def _doubling_windows(words, offset, n):
    """53-bit windows of an MSB-first bit stream, starting at bits offset..offset+n-1."""
    m = words.shape[0]
    out = np.empty((m, n))
    scale = 2.0**-53
    for s in range(64):
        first = (s - offset) % 64
        if first >= n:
            continue
        js = np.arange(first, n, 64)
        w = (offset + js) >> 6
        hi = words[:, w]
        if s:
            v = (hi << np.uint64(s)) | (words[:, w + 1] >> np.uint64(64 - s))
        else:
            v = hi
        out[:, js] = (v >> np.uint64(11)).astype(np.float64) * scale
    return out


def _block(system, spec, start, stop):
    k = system.kind
    idx = range(start, stop)
    m = stop - start
    n = spec.n
    escaped = np.zeros(m, dtype=bool)
    if k == "doubling":
        nwords = (spec.burn_in + n - 1) // 64 + 2
        words = np.stack([orbit_rng(spec.seed, i).bit_generator.random_raw(nwords) for i in idx])
        return _doubling_windows(words, spec.burn_in, n), escaped, None
    if k == "iid_uniform":
        return np.stack([orbit_rng(spec.seed, i).random(n) for i in idx]), escaped, None
    if k == "iid_rademacher":
        nwords = (n + 63) // 64
        rows = []
        for i in idx:
            raw = orbit_rng(spec.seed, i).bit_generator.random_raw(nwords)
            bits = np.unpackbits(raw.view(np.uint8))[:n]
            rows.append(2.0 * bits - 1.0)
        return np.stack(rows), escaped, None
    if k == "cat":
        M = _kernels.CAT_MODULUS
        ints = np.array([orbit_rng(spec.seed, i).integers(0, M, size=2) for i in idx], dtype=np.int64)
        return _kernels.cat_orbits(ints[:, 0], ints[:, 1], n, spec.burn_in), escaped, None
    law = _resolve_law(system, spec)
    if law == "invariant":
        cal = calibrate(system, spec.calibration_length, spec.seed)
        x0 = np.array([cal.sample(orbit_rng(spec.seed, i)) for i in idx])
    else:
        x0 = np.array([_uniform_point(system, orbit_rng(spec.seed, i)) for i in idx])
    if system.dimension == 1:
        code = _kernels.MP if k == "manneville_pomeau" else _kernels.QUADRATIC
        a = system.param("alpha") if k == "manneville_pomeau" else system.param("a")
        return _kernels.orbits_1d(code, a, x0, n, spec.burn_in), escaped, None
    code = _kernels.HENON if k == "henon" else _kernels.LOZI
    pts, esc = _kernels.orbits_2d(
        code, system.param("a"), system.param("b"), x0, n, spec.burn_in, TRAP_HALF_WIDTH
    )
    return pts, esc >= 0, esc


def generate_ensemble(system, spec, start=0, stop=None):
    """Orbits ``start..stop-1`` of the ensemble described by ``spec``.

    Escaped planar orbits are kept (NaN-padded) and flagged rather than
    raising.
    """
    stop = spec.m if stop is None else stop
    if not 0 <= start < stop <= spec.m:
        raise DomainError(f"bad orbit range [{start}, {stop}) for m={spec.m}")
    orbits, escaped, esc_at = _block(system, spec, start, stop)
    return OrbitEnsemble(system, orbits, spec.burn_in, spec.seed, escaped, start, esc_at)


def iter_ensemble(system, spec, block=None) -> Iterator[OrbitEnsemble]:
    """Yield the ensemble in consecutive blocks of at most ``block`` orbits."""
    if block is None:
        block = max(1, min(spec.m, 4_000_000 // (spec.n * system.dimension)))
    for s in range(0, spec.m, block):
        yield generate_ensemble(system, spec, s, min(spec.m, s + block))


# ---------------------------------------------------------------- calibration


def _power_head(cal_k, alpha, xc):
    return cal_k * xc ** (1.0 - alpha) / (1.0 - alpha)


@dataclass
class InvariantCalibration:
    """Invariant-law estimate from one long orbit.

    For maps with a neutral fixed point at 0 (polynomial tails), the density
    below ``head_cut`` is replaced by the fitted law ``k x^-alpha``; deep
    sojourns near 0 make the raw orbit histogram very noisy there.
    """

    system: SystemDescriptor
    length: int
    seed: int
    chunk: int = 1_000_000
    head_cut: float = 1e-3
    head_fit_hi: float = 3e-2
    nbins: int = 300
    edges: np.ndarray = field(init=False, repr=False)
    counts: np.ndarray = field(init=False, repr=False)
    head_k: float = field(init=False, default=0.0)
    head_mass: float = field(init=False, default=0.0)
    _means: dict = field(init=False, repr=False, default_factory=dict)

    def __post_init__(self):
        if self.system.is_iid or self.system.kind in ("doubling", "cat"):
            raise MisuseError(f"{self.system.kind} has a closed-form invariant law")
        self._polynomial = self.system.tail_class.kind == "polynomial"
        if self._polynomial:
            self.edges = np.geomspace(self.head_cut, 1.0, self.nbins + 1)
            self.edges[-1] = 1.0
        else:
            (lo, hi), = self.system.domain[1][:1]
            self.edges = np.linspace(lo, hi, self.nbins + 1)
        self.counts = np.zeros(self.nbins)
        for block in self._chunks():
            c0 = block if block.ndim == 1 else block[:, 0]
            self.counts += np.histogram(c0, self.edges)[0]
        if self._polynomial:
            alpha = self.system.param("alpha")
            dens = self.counts / self.length / np.diff(self.edges)
            mid = np.sqrt(self.edges[:-1] * self.edges[1:])
            sel = (mid < self.head_fit_hi) & (dens > 0)
            self.head_k = float(np.exp(np.mean(np.log(dens[sel]) + alpha * np.log(mid[sel]))))
            self.head_mass = _power_head(self.head_k, alpha, self.head_cut)

    def _chunks(self):
        rng = aux_rng(self.seed, 0)
        x = np.array([_uniform_point(self.system, rng)])
        burn = DEFAULT_BURN_IN
        left = self.length
        sysm = self.system
        while left > 0:
            n = min(self.chunk, left)
            if sysm.dimension == 1:
                code = _kernels.MP if sysm.kind == "manneville_pomeau" else _kernels.QUADRATIC
                a = sysm.param("alpha") if sysm.kind == "manneville_pomeau" else sysm.param("a")
                pts = _kernels.orbits_1d(code, a, x, n + 1, burn)[0]
                x = pts[-1:]
            else:
                code = _kernels.HENON if sysm.kind == "henon" else _kernels.LOZI
                arr, esc = _kernels.orbits_2d(
                    code, sysm.param("a"), sysm.param("b"), x.reshape(1, 2), n + 1, burn,
                    TRAP_HALF_WIDTH,
                )
                if esc[0] >= 0:
                    raise DomainError(f"calibration orbit of {sysm.label()} escaped the trapping box")
                pts = arr[0]
                x = pts[-1:].copy()
            burn = 0
            left -= n
            yield pts[:-1]

    def mean_of(self, f: Callable, key=None):
        """Estimate of the invariant mean of a vectorized observable ``f``."""
        key = key if key is not None else f
        if key in self._means:
            return self._means[key]
        if not self._polynomial:
            total = math.fsum(float(np.sum(f(b))) for b in self._chunks())
            val = total / self.length
        else:
            alpha = self.system.param("alpha")
            above = 0.0
            for b in self._chunks():
                sel = b >= self.head_cut
                above += float(np.sum(f(b[sel])))
            # head: x = cut * u^(1/(1-alpha)) with u uniform pushes forward to k x^-alpha
            u, w = np.polynomial.legendre.leggauss(64)
            u = 0.5 * (u + 1.0)
            xs = self.head_cut * u ** (1.0 / (1.0 - alpha))
            head = self.head_mass * 0.5 * float(np.sum(w * f(xs)))
            mass = self.counts.sum() / self.length + self.head_mass
            val = (above / self.length + head) / mass
        self._means[key] = val
        return val

    def sample(self, rng):
        """One draw from the calibrated invariant law (1-D systems)."""
        if not self._polynomial:
            raise MisuseError("invariant sampling is only needed for polynomial-tail maps")
        cum = self._cumulative()
        b = min(int(np.searchsorted(cum, rng.random() * cum[-1], side="right")), cum.size - 1)
        u = rng.random()
        if b == 0:
            return self.head_cut * u ** (1.0 / (1.0 - self.system.param("alpha")))
        lo, hi = self.edges[b - 1], self.edges[b]
        return lo + (hi - lo) * u

    def _cumulative(self):
        if not hasattr(self, "_cum"):
            self._cum = np.cumsum(np.concatenate([[self.head_mass], self.counts / self.length]))
        return self._cum


@lru_cache(maxsize=16)
def calibrate(system, length=10**7, seed=0):
    """Cached :class:`InvariantCalibration` for ``system``."""
    return InvariantCalibration(system, length, seed)
