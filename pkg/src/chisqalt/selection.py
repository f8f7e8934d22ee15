"""Choosing bin count, bin type and statistic against a known alternative.

Each candidate (k, kappa, kind) is scored on the "perfect" sample of the
alternative: the statistic it would produce there, divided by the 95%
chi-square critical value for its degrees of freedom. The best score wins.
Nothing here looks at observed data.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .binning import (
    BinningScheme,
    admissible,
    bin_counts,
    bin_probabilities,
    equal_prob_edges,
    equal_size_edges,
    interpolate_edges,
    DEFAULT_TAIL,
)
from .distributions import Distribution, as_distribution, parse_spec
from .distributions.spec import Mixture, Truncate
from .estimation import RESTARTS, EstimationError, expected_probs, minimum_chisq, unbinned_mle
from .statistics import ALL_KINDS, StatisticKind, ZeroCountError, chisq_quantile, chisq_stat

DEFAULT_KAPPAS = (0.0, 0.25, 0.5, 0.75, 1.0)
MERIT_LEVEL = 0.95
#: merits closer than this to the best one count as ties
TIE_TOLERANCE = 1e-9
#: merits below this carry no usable signal and are all treated as 0
SIGNAL_FLOOR = 0.02


class SelectionError(ValueError):
    pass


@dataclass
class SelectionGrid:
    k_values: list
    kappa_values: list = field(default_factory=lambda: list(DEFAULT_KAPPAS))
    kinds: list = field(default_factory=lambda: list(ALL_KINDS))

    def __post_init__(self):
        self.k_values = sorted({int(k) for k in self.k_values})
        self.kappa_values = sorted({float(x) for x in self.kappa_values})
        self.kinds = sorted({StatisticKind.parse(x) for x in self.kinds}, key=lambda x: x.order)
        if not (self.k_values and self.kappa_values and self.kinds):
            raise SelectionError("selection grid needs at least one k, kappa and kind")
        if any(not 0.0 <= x <= 1.0 for x in self.kappa_values):
            raise SelectionError("kappa values must lie in [0, 1]")

    @classmethod
    def default(cls, n: int, p: int = 0, kinds=None, kappas=None) -> "SelectionGrid":
        top = int(math.floor(2.0 * (1.0 + math.log2(n))))
        top = min(top, int(n // 5))
        k_values = list(range(p + 2, top + 1))
        if not k_values:
            raise SelectionError(f"n={n} leaves no admissible bin count for p={p}")
        return cls(k_values, list(kappas or DEFAULT_KAPPAS), list(kinds or ALL_KINDS))

    @property
    def size(self) -> int:
        return len(self.k_values) * len(self.kappa_values) * len(self.kinds)


@dataclass
class GridEntry:
    k: int
    kappa: float
    kind: StatisticKind
    merit: float
    admissible: bool
    edges: tuple = ()
    statistic: float = math.nan
    theta: tuple = ()


@dataclass
class SchemeChoice:
    scheme: BinningScheme
    kind: StatisticKind
    merit: float
    theta: tuple
    grid_report: list
    reference_theta: tuple = ()

    @property
    def k(self) -> int:
        return self.scheme.k

    @property
    def kappa(self) -> float:
        return self.scheme.kappa

    def ranked(self) -> list:
        """Admissible entries, best first, in the same order used for the choice."""
        return _rank([e for e in self.grid_report if e.admissible])

    def report_csv(self) -> str:
        return grid_report_csv(self.grid_report)


def grid_report_csv(entries) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["k", "kappa", "kind", "merit", "admissible"])
    for e in entries:
        merit = "" if not math.isfinite(e.merit) else repr(float(e.merit))
        w.writerow([e.k, repr(float(e.kappa)), e.kind.value, merit, str(e.admissible).lower()])
    return buf.getvalue()


def perfect_sample(F1: Distribution, n: int) -> np.ndarray:
    """The ``n`` quantiles of ``F1`` at levels (i - 0.5)/n."""
    if n < 1:
        raise ValueError("n must be >= 1")
    F1 = as_distribution(F1)
    return np.atleast_1d(F1.quantile((np.arange(1, n + 1) - 0.5) / n))


def perfect_counts(F1: Distribution, n: int, edges, continuous: bool = False, sample=None):
    """Counts of the perfect sample per bin (or ``n * p1`` when ``continuous``)."""
    if continuous:
        return n * bin_probabilities(F1, edges)
    if sample is None:
        sample = perfect_sample(F1, n)
    return bin_counts(sample, edges).astype(float)


def fit_restarts(family) -> int:
    """Restarts worth paying for: mixtures can land in label-switched optima."""
    root = parse_spec(family).root
    if isinstance(root, Truncate):
        root = root.component
    return RESTARTS if isinstance(root, Mixture) else 0


def reference_theta(null, F1: Distribution, n: int) -> np.ndarray:
    """Parameters of a composite null fitted to the alternative's perfect sample.

    They fix the bin edges of a composite null, so edges never depend on data.
    """
    null = parse_spec(null)
    if null.p == 0:
        return np.empty(0)
    sample = perfect_sample(F1, min(int(n), 20000))
    try:
        return unbinned_mle(null, sample, restarts=fit_restarts(null)).theta
    except EstimationError:
        return null.default_theta()


def candidate_edges(F0: Distribution, k: int, kappa: float, tail: float = DEFAULT_TAIL):
    return interpolate_edges(equal_prob_edges(F0, k), equal_size_edges(F0, k, tail), kappa)


def _score(null, F0_ref, n, edges, counts, kind, theta_ref, restarts):
    """(merit numerator, theta, expected counts) for one grid cell."""
    if null.p == 0:
        E = n * bin_probabilities(F0_ref, edges)
        return chisq_stat(kind, counts, E), (), E
    fit = minimum_chisq(null, counts, edges, kind, start=theta_ref, restarts=restarts)
    E = n * expected_probs(null.bind(fit.theta), edges)
    return chisq_stat(kind, counts, E), tuple(fit.theta), E


def merit(null, F1, n: int, scheme: BinningScheme, kind, continuous: bool = False,
          theta_ref=None) -> float:
    """Perfect-sample statistic over the 95% critical value with k-1-p df."""
    null = parse_spec(null)
    F1 = as_distribution(F1)
    kind = StatisticKind.parse(kind)
    df = scheme.k - 1 - null.p
    if df < 1:
        raise SelectionError(f"k={scheme.k} leaves no degrees of freedom for p={null.p}")
    if theta_ref is None:
        theta_ref = reference_theta(null, F1, n)
    F0_ref = null.bind(theta_ref)
    edges = scheme.edge_array
    counts = perfect_counts(F1, n, edges, continuous)
    if kind is StatisticKind.NEYMAN_MODIFIED and np.any(counts <= 0):
        raise SelectionError("Neyman modified statistic undefined with an empty perfect-sample bin")
    stat, _, E = _score(null, F0_ref, n, edges, counts, kind, theta_ref, fit_restarts(null))
    if not admissible(1.0, E):
        raise SelectionError("scheme has an expected count below 5")
    return stat / chisq_quantile(MERIT_LEVEL, df)


def _rank(entries):
    """Best first; ties broken by smaller k, smaller kappa, then kind order."""
    if not entries:
        return []
    best = max(e.merit for e in entries)
    tol = TIE_TOLERANCE * max(1.0, abs(best))

    def key(e):
        m = e.merit if e.merit >= SIGNAL_FLOOR else 0.0
        return (-math.floor(m / tol + 0.5), e.k, e.kappa, e.kind.order)

    return sorted(entries, key=key)


def evaluate_grid(null, F1, n: int, grid: SelectionGrid | None = None, continuous: bool = False,
                  tail: float = DEFAULT_TAIL, restarts=None):
    """Score every grid cell; returns (entries, reference theta)."""
    null = parse_spec(null)
    F1 = as_distribution(F1)
    n = int(n)
    if grid is None:
        grid = SelectionGrid.default(n, null.p)
    if restarts is None:
        restarts = fit_restarts(null)
    theta_ref = reference_theta(null, F1, n)
    F0_ref = null.bind(theta_ref)
    sample = None if continuous else perfect_sample(F1, n)
    entries = []
    for k in grid.k_values:
        df = k - 1 - null.p
        e0 = equal_prob_edges(F0_ref, k)
        e1 = equal_size_edges(F0_ref, k, tail)
        for kappa in grid.kappa_values:
            edges = interpolate_edges(e0, e1, kappa)
            bad_edges = np.any(np.diff(edges) <= 0)
            counts = None if bad_edges else perfect_counts(F1, n, edges, continuous, sample)
            for kind in grid.kinds:
                entry = GridEntry(k, kappa, kind, -math.inf, False, tuple(edges))
                entries.append(entry)
                if df < 1 or bad_edges or k > n // 5:
                    continue
                if kind is StatisticKind.NEYMAN_MODIFIED and np.any(counts <= 0):
                    continue
                try:
                    stat, theta, E = _score(null, F0_ref, n, edges, counts, kind, theta_ref, restarts)
                except (EstimationError, ZeroCountError):
                    continue
                entry.statistic = stat
                entry.theta = tuple(float(t) for t in theta)
                entry.merit = stat / chisq_quantile(MERIT_LEVEL, df)
                entry.admissible = admissible(1.0, E) and math.isfinite(entry.merit)
    return entries, tuple(float(t) for t in theta_ref)


def select_scheme(null, F1, n: int, grid: SelectionGrid | None = None, continuous: bool = False,
                  tail: float = DEFAULT_TAIL) -> SchemeChoice:
    """Grid search for the (k, kappa, kind) with the largest merit."""
    null = parse_spec(null)
    entries, theta_ref = evaluate_grid(null, F1, n, grid, continuous, tail)
    ranked = _rank([e for e in entries if e.admissible])
    if not ranked:
        raise SelectionError("every grid entry is inadmissible")
    return choice_from_entry(null, ranked[0], entries, theta_ref)


def choice_from_entry(null, entry: GridEntry, entries, theta_ref) -> SchemeChoice:
    null = parse_spec(null)
    edges = np.asarray(entry.edges)
    F0 = null.bind(entry.theta if null.p else ())
    probs = expected_probs(F0, edges)
    scheme = BinningScheme(entry.k, entry.kappa, tuple(edges), tuple(probs))
    return SchemeChoice(scheme, entry.kind, entry.merit, tuple(entry.theta), entries, tuple(theta_ref))
