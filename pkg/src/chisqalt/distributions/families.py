"""Continuous distribution families used by the test and the simulation lab.

Every distribution is vectorized: ``cdf``, ``quantile`` and ``log_density``
accept scalars or arrays and return the same shape.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

_TINY = 1e-300


@dataclass(frozen=True)
class Support:
    lower: float = -math.inf
    upper: float = math.inf

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ValueError(f"support needs lower < upper, got [{self.lower}, {self.upper}]")

    @property
    def bounded(self) -> bool:
        return math.isfinite(self.lower) and math.isfinite(self.upper)

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        return (x >= self.lower) & (x <= self.upper)


def _check_q(q):
    q = np.asarray(q, dtype=float)
    if np.any(~((q > 0.0) & (q < 1.0))):
        raise ValueError("quantile level must lie strictly inside (0, 1)")
    return q


def _out(values, like):
    """Return a Python float for scalar input, an array otherwise."""
    if np.ndim(like) == 0:
        return float(values)
    return values


class Distribution:
    """A fully specified continuous distribution.

    Subclasses implement ``_cdf``, ``_quantile``, ``_log_density`` on arrays
    already clipped to the support and ``sample``.
    """

    name = "distribution"
    support = Support()

    def cdf(self, x):
        xa = np.asarray(x, dtype=float)
        lo, hi = self.support.lower, self.support.upper
        inside = np.clip(xa, lo if math.isfinite(lo) else -np.inf, hi)
        with np.errstate(invalid="ignore", over="ignore"):
            out = np.asarray(self._cdf(inside), dtype=float)
        out = np.where(xa < lo, 0.0, np.where(xa >= hi, 1.0, out))
        out = np.clip(out, 0.0, 1.0)
        return _out(out, x)

    def quantile(self, q):
        qa = _check_q(q)
        out = np.asarray(self._quantile(qa), dtype=float)
        out = np.clip(out, self.support.lower, self.support.upper)
        return _out(out, q)

    def log_density(self, x):
        xa = np.asarray(x, dtype=float)
        if self.support.lower == -math.inf and self.support.upper == math.inf:
            return _out(self._log_density(xa), x)
        inside = (xa >= self.support.lower) & (xa <= self.support.upper)
        safe = np.where(inside, xa, self._interior_point())
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(inside, self._log_density(safe), -np.inf)
        return _out(out, x)

    def density(self, x):
        return np.exp(self.log_density(x))

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self._quantile(rng.random(n)) if n else np.empty(0)

    def _interior_point(self) -> float:
        return float(self._quantile(np.array(0.5)))

    def __repr__(self):
        return f"<{self.describe()}>"

    def describe(self) -> str:
        return self.name

    def __eq__(self, other):
        return isinstance(other, Distribution) and self.describe() == other.describe()

    def __hash__(self):
        return hash(self.describe())


def _fmt(v: float) -> str:
    return repr(float(v)) if not float(v).is_integer() else str(int(v)) if abs(v) < 1e15 else repr(v)


class Uniform(Distribution):
    name = "uniform"

    def __init__(self, a: float = 0.0, b: float = 1.0):
        if not (math.isfinite(a) and math.isfinite(b) and a < b):
            raise ValueError(f"uniform needs finite a < b, got ({a}, {b})")
        self.a, self.b = float(a), float(b)
        self.support = Support(self.a, self.b)

    def _cdf(self, x):
        return (x - self.a) / (self.b - self.a)

    def _quantile(self, q):
        return self.a + q * (self.b - self.a)

    def _log_density(self, x):
        return np.full_like(x, -math.log(self.b - self.a), dtype=float)

    def sample(self, n, rng):
        return rng.uniform(self.a, self.b, n)

    def describe(self):
        return f"uniform({_fmt(self.a)},{_fmt(self.b)})"


class Normal(Distribution):
    name = "normal"

    def __init__(self, mu: float = 0.0, sigma: float = 1.0):
        if not (math.isfinite(mu) and sigma > 0 and math.isfinite(sigma)):
            raise ValueError(f"normal needs finite mu and sigma > 0, got ({mu}, {sigma})")
        self.mu, self.sigma = float(mu), float(sigma)
        self.support = Support()

    def _cdf(self, x):
        return special.ndtr((x - self.mu) / self.sigma)

    def _quantile(self, q):
        return self.mu + self.sigma * special.ndtri(q)

    def _log_density(self, x):
        z = (x - self.mu) / self.sigma
        return -0.5 * z * z - math.log(self.sigma) - 0.5 * math.log(2 * math.pi)

    def sample(self, n, rng):
        return self.mu + self.sigma * rng.standard_normal(n)

    def describe(self):
        return f"normal({_fmt(self.mu)},{_fmt(self.sigma)})"


class StudentT(Distribution):
    name = "t"

    def __init__(self, df: float):
        if not df > 0:
            raise ValueError(f"t needs df > 0, got {df}")
        self.df = float(df)
        self.support = Support()
        self._lognorm = (
            special.gammaln((df + 1) / 2) - special.gammaln(df / 2) - 0.5 * math.log(df * math.pi)
        )

    def _cdf(self, x):
        return special.stdtr(self.df, x)

    def _quantile(self, q):
        return special.stdtrit(self.df, q)

    def _log_density(self, x):
        return self._lognorm - (self.df + 1) / 2 * np.log1p(x * x / self.df)

    def sample(self, n, rng):
        return rng.standard_t(self.df, n)

    def describe(self):
        return f"t({_fmt(self.df)})"


class Beta(Distribution):
    name = "beta"

    def __init__(self, a: float, b: float):
        if not (a > 0 and b > 0):
            raise ValueError(f"beta needs a, b > 0, got ({a}, {b})")
        self.a, self.b = float(a), float(b)
        self.support = Support(0.0, 1.0)
        self._lognorm = special.betaln(a, b)

    def _cdf(self, x):
        return special.betainc(self.a, self.b, x)

    def _quantile(self, q):
        return special.betaincinv(self.a, self.b, q)

    def _log_density(self, x):
        return special.xlogy(self.a - 1, x) + special.xlog1py(self.b - 1, -x) - self._lognorm

    def sample(self, n, rng):
        return rng.beta(self.a, self.b, n)

    def describe(self):
        return f"beta({_fmt(self.a)},{_fmt(self.b)})"


class Gamma(Distribution):
    """Gamma with shape and rate (mean shape/rate)."""

    name = "gamma"

    def __init__(self, shape: float, rate: float = 1.0):
        if not (shape > 0 and rate > 0):
            raise ValueError(f"gamma needs shape, rate > 0, got ({shape}, {rate})")
        self.shape, self.rate = float(shape), float(rate)
        self.support = Support(0.0, math.inf)

    def _cdf(self, x):
        return special.gammainc(self.shape, self.rate * x)

    def _quantile(self, q):
        return special.gammaincinv(self.shape, q) / self.rate

    def _log_density(self, x):
        return (
            self.shape * math.log(self.rate)
            + special.xlogy(self.shape - 1, x)
            - self.rate * x
            - special.gammaln(self.shape)
        )

    def sample(self, n, rng):
        return rng.gamma(self.shape, 1.0 / self.rate, n)

    def describe(self):
        return f"gamma({_fmt(self.shape)},{_fmt(self.rate)})"


class Exponential(Distribution):
    name = "exp"

    def __init__(self, rate: float = 1.0):
        if not (rate > 0 and math.isfinite(rate)):
            raise ValueError(f"exp needs rate > 0, got {rate}")
        self.rate = float(rate)
        self.support = Support(0.0, math.inf)

    def _cdf(self, x):
        return -np.expm1(-self.rate * x)

    def _quantile(self, q):
        return -np.log1p(-q) / self.rate

    def _log_density(self, x):
        return math.log(self.rate) - self.rate * x

    def sample(self, n, rng):
        return rng.exponential(1.0 / self.rate, n)

    def describe(self):
        return f"exp({_fmt(self.rate)})"


class Linear(Distribution):
    """Linear density on [0, 1] with cdf ``s*x**2 + (1-s)*x``.

    The density is ``2*s*x + 1 - s``, so its geometric slope is ``2*s``.
    """

    name = "linear"

    def __init__(self, s: float):
        if not -1.0 <= s <= 1.0:
            raise ValueError(f"linear needs |s| <= 1, got {s}")
        self.s = float(s)
        self.support = Support(0.0, 1.0)

    def _cdf(self, x):
        return self.s * x * x + (1.0 - self.s) * x

    def _quantile(self, q):
        # rationalized root of s*x^2 + (1-s)*x - q, stable at s = 0
        c = 1.0 - self.s
        return 2.0 * q / (c + np.sqrt(c * c + 4.0 * self.s * q))

    def _log_density(self, x):
        return np.log(2.0 * self.s * x + 1.0 - self.s)

    def describe(self):
        return f"linear({_fmt(self.s)})"


def invert_cdf(cdf, q, lower: float, upper: float, guess: float = 0.0, iters: int = 200):
    """Vectorized bracketing inversion of a monotone cdf.

    Infinite ends are replaced by a bracket grown geometrically around
    ``guess`` until it encloses every requested level.
    """
    q = np.asarray(q, dtype=float)
    lo = np.full(q.shape, lower if math.isfinite(lower) else guess - 1.0)
    hi = np.full(q.shape, upper if math.isfinite(upper) else guess + 1.0)
    if not math.isfinite(lower):
        step = 1.0
        while True:
            low_bad = cdf(lo) > q
            if not low_bad.any():
                break
            step *= 2.0
            lo = np.where(low_bad, lo - step, lo)
            if step > 1e300:
                break
    if not math.isfinite(upper):
        step = 1.0
        while True:
            high_bad = cdf(hi) < q
            if not high_bad.any():
                break
            step *= 2.0
            hi = np.where(high_bad, hi + step, hi)
            if step > 1e300:
                break
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        below = cdf(mid) < q
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        width = hi - lo
        if np.all(width <= 1e-14 * np.maximum(1.0, np.abs(hi))):
            break
    return 0.5 * (lo + hi)


class Mixture(Distribution):
    name = "mixture"

    def __init__(self, weights, components):
        weights = [float(w) for w in weights]
        if len(weights) != len(components) or not components:
            raise ValueError("mixture needs one weight per component")
        if any(w <= 0 for w in weights):
            raise ValueError(f"mixture weights must be positive, got {weights}")
        if abs(sum(weights) - 1.0) > 1e-9:
            raise ValueError(f"mixture weights must sum to 1, got {sum(weights)}")
        self.weights = np.array(weights)
        self.components = tuple(components)
        self.support = Support(
            min(c.support.lower for c in components), max(c.support.upper for c in components)
        )

    def _cdf(self, x):
        return sum(w * np.asarray(c.cdf(x)) for w, c in zip(self.weights, self.components))

    def _quantile(self, q):
        guess = float(np.dot(self.weights, [c.quantile(0.5) for c in self.components]))
        return invert_cdf(self.cdf, q, self.support.lower, self.support.upper, guess)

    def _log_density(self, x):
        parts = [math.log(w) + np.asarray(c.log_density(x)) for w, c in zip(self.weights, self.components)]
        return np.logaddexp.reduce(parts, axis=0) if len(parts) > 1 else parts[0]

    def _interior_point(self):
        return float(self.components[0].quantile(0.5))

    def sample(self, n, rng):
        labels = rng.choice(len(self.components), size=n, p=self.weights)
        out = np.empty(n)
        for j, comp in enumerate(self.components):
            mask = labels == j
            out[mask] = comp.sample(int(mask.sum()), rng)
        return out

    def describe(self):
        return " + ".join(f"{_fmt(w)}*{c.describe()}" for w, c in zip(self.weights, self.components))


class Truncated(Distribution):
    name = "truncated"

    def __init__(self, base: Distribution, lower: float, upper: float):
        lower = max(float(lower), base.support.lower)
        upper = min(float(upper), base.support.upper)
        if not lower < upper:
            raise ValueError(f"truncation needs lower < upper, got [{lower}, {upper}]")
        self.base = base
        self.support = Support(lower, upper)
        self._f_lo = float(base.cdf(lower)) if math.isfinite(lower) else 0.0
        self._f_hi = float(base.cdf(upper)) if math.isfinite(upper) else 1.0
        self._mass = self._f_hi - self._f_lo
        if not self._mass > 0:
            raise ValueError("truncation interval carries no probability")

    def _cdf(self, x):
        return (np.asarray(self.base.cdf(x)) - self._f_lo) / self._mass

    def _quantile(self, q):
        target = np.clip(self._f_lo + q * self._mass, 1e-300, 1 - 1e-16)
        out = np.asarray(self.base.quantile(target), dtype=float)
        return np.clip(out, self.support.lower, self.support.upper)

    def _log_density(self, x):
        return np.asarray(self.base.log_density(x)) - math.log(self._mass)

    def _interior_point(self):
        return float(self._quantile(np.array(0.5)))

    def sample(self, n, rng):
        return self._quantile(rng.random(n)) if n else np.empty(0)

    def describe(self):
        def b(v):
            return "-inf" if v == -math.inf else "inf" if v == math.inf else _fmt(v)

        return f"({self.base.describe()}) | [{b(self.support.lower)},{b(self.support.upper)}]"
