"""The RG chi-square test on data: raw, pre-binned, or with a Poisson sample size."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .binning import BinnedData, BinningError, BinningScheme, admissible, bin_counts, bin_probabilities, snap_to_data_edges
from .distributions import as_distribution, parse_spec
from .estimation import expected_probs, minimum_chisq
from .selection import (
    GridEntry,
    SchemeChoice,
    SelectionError,
    SelectionGrid,
    fit_restarts,
    select_scheme,
)
from .statistics import StatisticKind, chisq_sf, chisq_stat

REPORT_SCHEMA = "chisqalt.report/1"
POISSON_KINDS = (StatisticKind.PEARSON, StatisticKind.LAMBDA_P)


@dataclass
class TestReport:
    __test__ = False

    scheme: BinningScheme
    kind: StatisticKind
    theta: tuple
    statistic: float
    df: int
    pvalue: float
    alpha: float
    reject: bool
    diagnostics: dict = field(default_factory=dict)

    @property
    def k(self) -> int:
        return self.scheme.k

    @property
    def kappa(self) -> float:
        return self.scheme.kappa

    def to_dict(self) -> dict:
        def num(v):
            v = float(v)
            if math.isinf(v):
                return "inf" if v > 0 else "-inf"
            return v

        return {
            "schema": REPORT_SCHEMA,
            "k": self.scheme.k,
            "kappa": self.scheme.kappa,
            "kind": self.kind.value,
            "edges": [num(e) for e in self.scheme.edges],
            "theta": [float(t) for t in self.theta],
            "statistic": float(self.statistic),
            "df": int(self.df),
            "pvalue": float(self.pvalue),
            "alpha": float(self.alpha),
            "reject": bool(self.reject),
            "diagnostics": _jsonable(self.diagnostics),
        }

    def to_json(self, indent=2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=False)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan")
    if isinstance(obj, StatisticKind):
        return obj.value
    return obj


def _finish(null, entry: GridEntry, edges, counts, total, kind, alpha, choice, poisson=False,
            renormalize=True, diagnostics=None):
    """Fit (if composite), compute statistic, df and p-value for one binning."""
    null = parse_spec(null)
    counts = np.asarray(counts, dtype=float)
    theta = ()
    if null.p:
        start = entry.theta or choice.reference_theta or None
        fit = minimum_chisq(
            null, counts, edges, kind, start=start, restarts=fit_restarts(null),
            total=total if poisson else None,
        )
        theta = tuple(float(t) for t in fit.theta)
        dist = null.bind(theta)
    else:
        dist = null.bind()
    probs = expected_probs(dist, edges) if renormalize else bin_probabilities(dist, edges)
    expected = total * probs
    k = len(edges) - 1
    df = k - null.p if poisson else k - 1 - null.p
    if df < 1:
        raise SelectionError(f"{k} bins leave no degrees of freedom")
    statistic = max(chisq_stat(kind, counts, expected), 0.0)
    pvalue = chisq_sf(statistic, df)
    scheme = BinningScheme(k, entry.kappa, tuple(float(e) for e in edges), tuple(probs))
    diag = {
        "n": float(total),
        "counts": counts.astype(int).tolist(),
        "expected": expected.tolist(),
        "merit": entry.merit,
        "grid_size": len(choice.grid_report),
        "fallback": False,
    }
    diag.update(diagnostics or {})
    return TestReport(scheme, kind, theta, statistic, df, pvalue, alpha, bool(pvalue < alpha), diag)


def _resolve_choice(null, F1, n, grid, choice):
    if choice is None:
        choice = select_scheme(null, F1, n, grid)
    return choice


def rg_test(data, null, F1, alpha: float = 0.05, grid: SelectionGrid | None = None,
            choice: SchemeChoice | None = None) -> TestReport:
    """Select the scheme for ``len(data)`` observations, then test the data with it.

    ``choice`` may be passed in to reuse a selection; it never depends on
    the data.
    """
    data = np.asarray(data, dtype=float)
    if data.size == 0:
        raise ValueError("no data")
    null = parse_spec(null)
    F1 = as_distribution(F1)
    choice = _resolve_choice(null, F1, data.size, grid, choice)
    best = choice.ranked()[0]
    entry, fallback = best, False
    counts, outside = bin_counts(data, best.edges, return_outside=True)
    if best.kind is StatisticKind.NEYMAN_MODIFIED and np.any(counts == 0):
        for candidate in choice.ranked():
            if candidate.kind is not StatisticKind.NEYMAN_MODIFIED:
                entry, fallback = candidate, True
                break
        else:
            raise SelectionError("Neyman modified chosen but a bin is empty and no fallback exists")
        counts, outside = bin_counts(data, entry.edges, return_outside=True)
    total = float(counts.sum())
    report = _finish(null, entry, np.asarray(entry.edges), counts, total, entry.kind, alpha, choice,
                     diagnostics={"out_of_range": outside})
    report.diagnostics["fallback"] = fallback
    return report


def _aggregate(binned: BinnedData, working_edges):
    data_edges = np.asarray(binned.edges, dtype=float)
    idx = np.searchsorted(data_edges, working_edges)
    counts = np.asarray(binned.counts)
    return np.array([counts[a:b].sum() for a, b in zip(idx[:-1], idx[1:])], dtype=float)


def rg_test_prebinned(binned: BinnedData, null, F1, alpha: float = 0.05,
                      grid: SelectionGrid | None = None,
                      choice: SchemeChoice | None = None) -> TestReport:
    """RG test when only bin counts are available.

    Each ideal binning (best merit first) is snapped onto the data's bin
    edges; the first snapped binning that stays admissible is used.
    """
    if len(binned.counts) < 2:
        raise BinningError("binned data needs at least two bins")
    n = binned.n
    null = parse_spec(null)
    F1 = as_distribution(F1)
    choice = _resolve_choice(null, F1, n, grid, choice)
    available = np.asarray(binned.edges, dtype=float)
    ranked = choice.ranked()
    for rank, entry in enumerate(ranked):
        if len(entry.edges) > len(available):
            continue
        try:
            edges = snap_to_data_edges(entry.edges, available)
        except BinningError:
            continue
        counts = _aggregate(binned, edges)
        if entry.kind is StatisticKind.NEYMAN_MODIFIED and np.any(counts == 0):
            continue
        try:
            report = _finish(null, entry, edges, counts, float(n), entry.kind, alpha, choice,
                             diagnostics={"snapped_rank": rank, "ideal_edges": list(entry.edges)})
        except (SelectionError, ValueError, RuntimeError):
            continue
        if not admissible(1.0, report.diagnostics["expected"]):
            continue
        report.diagnostics["fallback"] = rank > 0
        return report
    raise BinningError("no grid entry stays admissible after snapping to the data bins")


def rg_test_poisson(data, lam: float, null, F1, alpha: float = 0.05,
                    grid: SelectionGrid | None = None,
                    choice: SchemeChoice | None = None) -> TestReport:
    """RG test when the sample size is Poisson(``lam``).

    Counts are independent Poisson, so expected counts are ``lam * p`` and
    the statistic has k - p degrees of freedom. Only Pearson and LambdaP
    are considered because observed and expected totals need not match.
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    data = np.asarray(data, dtype=float)
    null = parse_spec(null)
    F1 = as_distribution(F1)
    n_sel = max(int(round(lam)), 1)
    if choice is None:
        if grid is None:
            grid = SelectionGrid.default(n_sel, null.p, kinds=POISSON_KINDS)
        else:
            kinds = [k for k in grid.kinds if k in POISSON_KINDS] or list(POISSON_KINDS)
            grid = SelectionGrid(grid.k_values, grid.kappa_values, kinds)
        choice = select_scheme(null, F1, n_sel, grid)
    entry = choice.ranked()[0]
    if entry.kind not in POISSON_KINDS:
        raise SelectionError("Poisson mode needs a Pearson or LambdaP scheme")
    counts, outside = bin_counts(data, entry.edges, return_outside=True)
    return _finish(null, entry, np.asarray(entry.edges), counts, float(lam), entry.kind, alpha, choice,
                   poisson=True, renormalize=False, diagnostics={"out_of_range": outside, "lambda": lam})
