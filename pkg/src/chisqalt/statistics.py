"""The six chi-square statistics, the Cressie-Read family and chi-square tails."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy import special


class StatisticKind(enum.Enum):
    PEARSON = "Pearson"
    FREEMAN_TUKEY = "FreemanTukey"
    LAMBDA_P = "LambdaP"
    G2 = "G2"
    NEYMAN_MODIFIED = "NeymanModified"
    CR23 = "CR23"

    @classmethod
    def parse(cls, text) -> "StatisticKind":
        if isinstance(text, cls):
            return text
        key = str(text).replace("-", "").replace("_", "").replace(" ", "").lower()
        for kind in cls:
            if kind.value.lower() == key or kind.name.replace("_", "").lower() == key:
                return kind
        aliases = {"neyman": cls.NEYMAN_MODIFIED, "ft": cls.FREEMAN_TUKEY, "lambda23": cls.CR23,
                   "lambda2/3": cls.CR23, "gsquared": cls.G2, "lambdap": cls.LAMBDA_P}
        if key in aliases:
            return aliases[key]
        raise ValueError(f"unknown statistic kind {text!r}")

    @property
    def order(self) -> int:
        return ALL_KINDS.index(self)


ALL_KINDS = list(StatisticKind)


class ZeroCountError(ValueError):
    """Neyman's modified statistic is undefined with an empty bin."""


def _xlogx_ratio(O, E):
    # O*log(O/E) with 0*log(0) = 0
    return special.xlogy(O, O) - special.xlogy(O, E)


def chisq_stat(kind, O, E) -> float:
    """Value of statistic ``kind`` for observed ``O`` and expected ``E``.

    Works on the last axis, so ``O`` may be a batch of count vectors.
    """
    kind = StatisticKind.parse(kind)
    O = np.asarray(O, dtype=float)
    E = np.asarray(E, dtype=float)
    if kind is StatisticKind.PEARSON:
        val = np.sum((O - E) ** 2 / E, axis=-1)
    elif kind is StatisticKind.FREEMAN_TUKEY:
        val = 4.0 * np.sum((np.sqrt(O) - np.sqrt(E)) ** 2, axis=-1)
    elif kind is StatisticKind.LAMBDA_P:
        val = 2.0 * np.sum(E - O + _xlogx_ratio(O, E), axis=-1)
    elif kind is StatisticKind.G2:
        val = 2.0 * np.sum(_xlogx_ratio(O, E), axis=-1)
    elif kind is StatisticKind.NEYMAN_MODIFIED:
        if np.any(O <= 0):
            raise ZeroCountError("Neyman modified statistic needs every observed count > 0")
        # E^2/O - O, factored so it vanishes exactly at O = E
        val = np.sum((E - O) * (E + O) / O, axis=-1)
    else:
        val = 1.8 * np.sum(O * (np.power(O / E, 2.0 / 3.0) - 1.0), axis=-1)
    return float(val) if np.ndim(val) == 0 else val


def cressie_read(lam: float, O, E) -> float:
    """Power-divergence statistic ``2/(lam(lam+1)) * sum O((O/E)^lam - 1)``."""
    if lam == 0 or lam == -1:
        raise ValueError("lambda 0 and -1 are limits; use the G2 or Neyman kinds")
    O = np.asarray(O, dtype=float)
    E = np.asarray(E, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(O > 0, O * (np.power(O / E, lam) - 1.0), 0.0)
    val = 2.0 / (lam * (lam + 1.0)) * np.sum(terms, axis=-1)
    return float(val) if np.ndim(val) == 0 else val


def chisq_cdf(x, df):
    if df < 1:
        raise ValueError("df must be >= 1")
    x = np.maximum(np.asarray(x, dtype=float), 0.0)
    out = special.gammainc(df / 2.0, x / 2.0)
    return float(out) if np.ndim(out) == 0 else out


def chisq_sf(x, df):
    """Upper tail ``1 - chisq_cdf``, computed without cancellation."""
    if df < 1:
        raise ValueError("df must be >= 1")
    x = np.maximum(np.asarray(x, dtype=float), 0.0)
    out = special.gammaincc(df / 2.0, x / 2.0)
    return float(out) if np.ndim(out) == 0 else out


def chisq_quantile(q: float, df: int) -> float:
    if not 0.0 < q < 1.0:
        raise ValueError("q must lie strictly inside (0, 1)")
    if df < 1:
        raise ValueError("df must be >= 1")
    return 2.0 * float(special.gammaincinv(df / 2.0, q))


@dataclass(frozen=True)
class TestOutcome:
    __test__ = False

    value: float
    df: int
    pvalue: float


def chisq_test(kind, O, E, df: int) -> TestOutcome:
    value = max(chisq_stat(kind, O, E), 0.0)
    return TestOutcome(value, int(df), chisq_sf(value, df))
