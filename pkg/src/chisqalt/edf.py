"""EDF competitors: Kolmogorov-Smirnov, Anderson-Darling and Zhang's ZK, ZA, ZC.

Null distributions are always simulated (parametric bootstrap when the null
has free parameters), so a single code path also covers Poisson sample sizes.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .distributions import as_distribution, parse_spec
from .distributions.spec import FREE, Atom
from .estimation import EstimationError, unbinned_mle
from .rng import stream
from .selection import fit_restarts

U_CLAMP = 1e-12


class EdfKind(enum.Enum):
    KS = "KS"
    AD = "AD"
    ZK = "ZK"
    ZA = "ZA"
    ZC = "ZC"

    @classmethod
    def parse(cls, text) -> "EdfKind":
        if isinstance(text, cls):
            return text
        try:
            return cls(str(text).upper())
        except ValueError:
            raise ValueError(f"unknown EDF statistic {text!r}") from None


ALL_EDF = list(EdfKind)


def _stats_from_sorted_u(u, kinds):
    """Statistics for sorted, clamped uniforms ``u`` (last axis is the sample)."""
    n = u.shape[-1]
    i = np.arange(1, n + 1, dtype=float)
    log_u = np.log(u)
    log_1mu = np.log1p(-u)
    out = {}
    for kind in kinds:
        if kind is EdfKind.KS:
            val = np.max(np.maximum(i / n - u, u - (i - 1) / n), axis=-1)
        elif kind is EdfKind.AD:
            val = -n - np.sum((2 * i - 1) * (log_u + log_1mu[..., ::-1]), axis=-1) / n
        elif kind is EdfKind.ZK:
            a = (i - 0.5) * (np.log(i - 0.5) - np.log(n) - log_u)
            b = (n - i + 0.5) * (np.log(n - i + 0.5) - np.log(n) - log_1mu)
            val = np.max(a + b, axis=-1)
        elif kind is EdfKind.ZA:
            val = -np.sum(log_u / (n - i + 0.5) + log_1mu / (i - 0.5), axis=-1)
        else:
            ratio = (1.0 / u - 1.0) / ((n - 0.5) / (i - 0.75) - 1.0)
            val = np.sum(np.log(ratio) ** 2, axis=-1)
        out[kind] = val
    return out


def _uniforms(data, F):
    u = np.sort(np.asarray(F.cdf(np.asarray(data, dtype=float)), dtype=float), axis=-1)
    return np.clip(u, U_CLAMP, 1.0 - U_CLAMP)


def edf_statistic(kind, data, F) -> float:
    kind = EdfKind.parse(kind)
    data = np.atleast_1d(np.asarray(data, dtype=float))
    if data.size == 0:
        raise ValueError("no data")
    val = _stats_from_sorted_u(_uniforms(data, as_distribution(F)), [kind])[kind]
    return float(val)


def edf_statistics(data, F, kinds=ALL_EDF) -> dict:
    """All requested statistics for one data set, sharing one sort."""
    kinds = [EdfKind.parse(k) for k in kinds]
    vals = _stats_from_sorted_u(_uniforms(data, as_distribution(F)), kinds)
    return {k: float(v) for k, v in vals.items()}


def fit_null(null, data):
    """Null distribution fitted to ``data`` by unbinned MLE (identity for simple nulls)."""
    null = parse_spec(null)
    if null.p == 0:
        return null.bind(), ()
    fit = unbinned_mle(null, data, restarts=fit_restarts(null))
    return null.bind(fit.theta), tuple(float(t) for t in fit.theta)


def is_pivotal(null) -> bool:
    """True when the refitted statistics have a parameter-free null distribution.

    Holds for the all-free normal (location-scale) and exponential (scale)
    families, whose MLEs are equivariant.
    """
    root = parse_spec(null).root
    return (isinstance(root, Atom) and root.name in ("normal", "exp")
            and all(a is FREE for a in root.args))


def simulate_null(null, size, B: int, seed: int, theta=(), kinds=ALL_EDF, label="edf",
                  max_failure_rate=0.01) -> dict:
    """Simulated null distribution of each statistic.

    ``size`` is an int (fixed n) or ``("poisson", lam)``. Replicates draw
    from the null at ``theta`` and are refitted when the null is composite.
    Replicate ``b`` uses the stream ``(seed, label, b)``.
    """
    null = parse_spec(null)
    kinds = [EdfKind.parse(k) for k in kinds]
    source = null.bind(theta)
    out = {k: np.empty(B) for k in kinds}
    failures = 0
    for b in range(B):
        rng = stream(seed, label, b)
        if isinstance(size, tuple):
            n_b = max(int(rng.poisson(size[1])), 2)
        else:
            n_b = int(size)
        x = source.sample(n_b, rng)
        try:
            F_b, _ = fit_null(null, x)
        except (EstimationError, ValueError):
            failures += 1
            for k in kinds:
                out[k][b] = np.nan
            continue
        vals = _stats_from_sorted_u(_uniforms(x, F_b), kinds)
        for k in kinds:
            out[k][b] = vals[k]
    if failures > max_failure_rate * B:
        raise EstimationError(f"MLE failed on {failures} of {B} bootstrap replicates")
    return out


def pvalue_from_null(observed: float, null_values) -> float:
    """``(1 + #{replicate >= observed}) / (B + 1)`` over the finite replicates."""
    vals = np.asarray(null_values, dtype=float)
    vals = vals[np.isfinite(vals)]
    return (1.0 + np.count_nonzero(vals >= observed)) / (vals.size + 1.0)


@dataclass
class EdfResult:
    statistic: float
    pvalue: float
    theta: tuple


def simulated_pvalue(kind, data, null, B: int = 999, seed: int = 0, sample_size="fixed") -> EdfResult:
    """Statistic and bootstrap p-value of one EDF test.

    ``sample_size`` is ``"fixed"`` (replicates of size n) or a positive
    number interpreted as the Poisson rate of the sample size.
    """
    if B < 99:
        raise ValueError("use at least 99 bootstrap replicates")
    kind = EdfKind.parse(kind)
    null = parse_spec(null)
    data = np.asarray(data, dtype=float)
    F_hat, theta = fit_null(null, data)
    observed = edf_statistic(kind, data, F_hat)
    size = len(data) if sample_size == "fixed" else ("poisson", float(sample_size))
    sims = simulate_null(null, size, B, seed, theta, [kind])
    return EdfResult(observed, pvalue_from_null(observed, sims[kind]), theta)
