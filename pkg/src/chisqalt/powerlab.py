"""Monte Carlo power and size studies.

Every replicate draws from its own stream keyed by (seed, study, cell,
replicate), and results are aggregated as integer rejection counts, so a
study gives identical numbers for any number of worker threads.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .binning import (
    BinningError,
    BinningScheme,
    admissible,
    bin_counts,
    bin_probabilities,
    equal_prob_edges,
    equal_size_edges,
    histogram_scheme,
    make_scheme,
    merge_to_admissible,
)
from .distributions import as_distribution, parse_spec
from .edf import ALL_EDF, EdfKind, edf_statistics, fit_null, is_pivotal, pvalue_from_null, simulate_null
from .estimation import EstimationError, expected_probs, minimum_chisq, unbinned_mle
from .rgtest import POISSON_KINDS, rg_test, rg_test_poisson
from .rng import DEFAULT_SEED, stream, thread_count
from .selection import SelectionError, SelectionGrid, fit_restarts, reference_theta, select_scheme
from .statistics import StatisticKind, ZeroCountError, chisq_quantile, chisq_sf, chisq_stat

METHODS = ("RG", "EqualSize", "EqualProb", "Histogram", "KS", "AD", "ZK", "ZA", "ZC")
CHISQ_METHODS = ("RG", "EqualSize", "EqualProb", "Histogram")
DEFAULT_B_INNER = 500
MAX_FAILURE_RATE = 0.01
TYPE1_ALPHAS = (0.01, 0.05, 0.10)

_FAILURES = (EstimationError, ZeroCountError, SelectionError, BinningError, FloatingPointError)


def _method(name: str) -> str:
    for m in METHODS:
        if m.lower() == str(name).lower():
            return m
    raise ValueError(f"unknown method {name!r}; choose from {', '.join(METHODS)}")


@dataclass
class StudySpec:
    """One power study.

    ``alternatives`` holds ``(param, alternative)`` pairs, or
    ``(param, alternative, null)`` when the null moves with the parameter.
    ``lam`` switches to Poisson sample sizes with that mean.
    """

    name: str
    null: str
    alternatives: list
    methods: list = field(default_factory=lambda: list(METHODS))
    n: int = 1000
    alpha: float = 0.05
    B: int = 1000
    seed: int = DEFAULT_SEED
    B_inner: int = DEFAULT_B_INNER
    lam: float | None = None
    param_name: str = "param"
    notes: str = ""

    def __post_init__(self):
        if self.B < 100:
            raise ValueError("B must be at least 100")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.lam is not None and not self.lam > 0:
            raise ValueError("lambda must be positive")
        self.methods = [_method(m) for m in self.methods]

    def cells(self):
        for item in self.alternatives:
            param, alt = item[0], item[1]
            null = item[2] if len(item) > 2 else self.null
            yield param, null, alt

    @property
    def size_label(self) -> str:
        return f"poisson:{_fmt(self.lam)}" if self.lam is not None else str(self.n)


@dataclass(frozen=True)
class PowerRow:
    study: str
    param: object
    method: str
    power: float
    se: float
    B: int
    n: str
    alpha: float
    seed: int


CSV_HEADER = ("study", "param", "method", "power", "se", "B", "n", "alpha", "seed")


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return str(int(v)) if v.is_integer() and abs(v) < 1e15 else repr(round(v, 12))
    return str(v)


@dataclass
class PowerTable:
    rows: list = field(default_factory=list)

    def add(self, row: PowerRow):
        if not 0.0 <= row.power <= 1.0:
            raise ValueError("power must be a proportion")
        self.rows.append(row)

    def __len__(self):
        return len(self.rows)

    def methods(self) -> list:
        seen = []
        for r in self.rows:
            if r.method not in seen:
                seen.append(r.method)
        return seen

    def mean_power(self) -> dict:
        out = {}
        for m in self.methods():
            out[m] = float(np.mean([r.power for r in self.rows if r.method == m]))
        return out

    def lookup(self, param, method, alpha=None) -> PowerRow:
        for r in self.rows:
            if r.param == param and r.method == method and (alpha is None or r.alpha == alpha):
                return r
        raise KeyError((param, method, alpha))

    def series(self) -> dict:
        """``method -> [(param, power), ...]`` in row order."""
        out = {}
        for r in self.rows:
            out.setdefault(r.method, []).append((r.param, r.power))
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.rows:
            w.writerow([r.study, _fmt(r.param), r.method, f"{r.power:.6f}", f"{r.se:.6f}",
                        r.B, r.n, _fmt(r.alpha), r.seed])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "PowerTable":
        reader = csv.reader(io.StringIO(text))
        header = tuple(next(reader, ()))
        if header != CSV_HEADER:
            raise ValueError(f"expected header {','.join(CSV_HEADER)}")
        table = cls()
        for rec in reader:
            if not rec:
                continue
            study, param, method, power, se, B, n, alpha, seed = rec
            try:
                param = float(param)
            except ValueError:
                pass
            table.add(PowerRow(study, param, method, float(power), float(se), int(B), n,
                               float(alpha), int(seed)))
        return table


def _se(p: float, B: int) -> float:
    return math.sqrt(max(p * (1.0 - p), 0.0) / B) if B > 0 else math.nan


# ---------------------------------------------------------------- fast path

def power_fast(null, F1, scheme: BinningScheme, kind, n: int, alpha: float = 0.05, B: int = 1000,
               seed: int = DEFAULT_SEED, cell="fast"):
    """Power of a simple-null chi-square test by drawing bin counts directly.

    Counts are multinomial(n, p1) with p1 the alternative's bin probabilities.
    Replicates with an empty bin fall back to Pearson when ``kind`` is
    Neyman modified, as the test on raw data does.
    """
    F0 = as_distribution(null)
    F1 = as_distribution(F1)
    kind = StatisticKind.parse(kind)
    edges = scheme.edge_array
    p0 = bin_probabilities(F0, edges)
    if not admissible(n, p0):
        raise BinningError("scheme has an expected count below 5")
    p1 = np.clip(bin_probabilities(F1, edges), 0.0, None)
    p1 = p1 / p1.sum()
    rng = stream(seed, "fast", cell)
    counts = rng.multinomial(n, p1, size=B).astype(float)
    E = n * p0
    if kind is StatisticKind.NEYMAN_MODIFIED:
        empty = np.any(counts <= 0, axis=1)
        stats = chisq_stat(StatisticKind.PEARSON, counts, E)
        if np.any(~empty):
            stats[~empty] = chisq_stat(kind, counts[~empty], E)
    else:
        stats = chisq_stat(kind, counts, E)
    crit = chisq_quantile(1.0 - alpha, scheme.k - 1)
    power = float(np.mean(stats > crit))
    return power, _se(power, B)


# ---------------------------------------------------------------- full path

class _Binned:
    """Chi-square test with bins fixed before seeing data."""

    def __init__(self, null, edges, kind=StatisticKind.PEARSON, start=(), lam=None):
        self.null = parse_spec(null)
        self.edges = np.asarray(edges, dtype=float)
        self.kind = StatisticKind.parse(kind)
        self.start = tuple(start)
        self.lam = lam
        self.restarts = fit_restarts(self.null)
        k = len(self.edges) - 1
        self.df = k - self.null.p if lam is not None else k - 1 - self.null.p
        if self.df < 1:
            raise BinningError(f"{k} bins leave no degrees of freedom")
        if self.null.p == 0:
            self.probs = bin_probabilities(self.null.bind(), self.edges)

    def pvalue(self, x, b):
        counts = bin_counts(x, self.edges).astype(float)
        if self.lam is not None:
            total = self.lam
        else:
            total = counts.sum()
        if self.null.p:
            fit = minimum_chisq(self.null, counts, self.edges, self.kind, start=self.start or None,
                                restarts=self.restarts, total=total if self.lam is not None else None)
            dist = self.null.bind(fit.theta)
            probs = (bin_probabilities(dist, self.edges) if self.lam is not None
                     else expected_probs(dist, self.edges))
        else:
            probs = self.probs
        stat = max(chisq_stat(self.kind, counts, total * probs), 0.0)
        return chisq_sf(stat, self.df)


class _Rg:
    def __init__(self, null, F1, n, lam=None):
        self.null = parse_spec(null)
        self.F1 = as_distribution(F1)
        self.lam = lam
        if lam is None:
            self.choice = select_scheme(self.null, self.F1, n)
        else:
            n_sel = max(int(round(lam)), 1)
            grid = SelectionGrid.default(n_sel, self.null.p, kinds=POISSON_KINDS)
            self.choice = select_scheme(self.null, self.F1, n_sel, grid)

    def pvalue(self, x, b):
        if self.lam is None:
            return rg_test(x, self.null, self.F1, choice=self.choice).pvalue
        return rg_test_poisson(x, self.lam, self.null, self.F1, choice=self.choice).pvalue


class _Edf:
    """All requested EDF tests on one sample, sharing the fit and the sort."""

    def __init__(self, null, kinds, size, B_inner, seed, cell):
        self.null = parse_spec(null)
        self.kinds = [EdfKind.parse(k) for k in kinds]
        self.size = size
        self.B_inner = B_inner
        self.seed = seed
        self.cell = cell
        self.shared = None
        if self.null.p == 0 or is_pivotal(self.null):
            # one null distribution serves every replicate
            theta = self.null.default_theta() if self.null.p else ()
            label = f"edf-null|{self.null.unparse()}|{size}"
            self.shared = simulate_null(self.null, size, B_inner, seed, theta, self.kinds, label=label)

    def pvalues(self, x, b):
        F_hat, theta = fit_null(self.null, x)
        observed = edf_statistics(x, F_hat, self.kinds)
        sims = self.shared
        if sims is None:
            sims = simulate_null(self.null, self.size, self.B_inner, self.seed, theta, self.kinds,
                                 label=f"boot|{self.cell}|{b}")
        return {k.value: pvalue_from_null(observed[k], sims[k]) for k in self.kinds}


def competitor_k(n: float) -> int:
    """Bin count of the usual ``1 + log2(n)`` rule, rounded up."""
    return int(math.ceil(1.0 + math.log2(n)))


def _competitor_edges(method, F0_ref, n):
    if method == "Histogram":
        return histogram_scheme(F0_ref, int(n)).edge_array
    k = competitor_k(n)
    edges = equal_prob_edges(F0_ref, k) if method == "EqualProb" else equal_size_edges(F0_ref, k)
    edges, _ = merge_to_admissible(edges, bin_probabilities(F0_ref, edges), n)
    return edges


def _prepare(methods, null, F1, n, lam, B_inner, seed, cell):
    null = parse_spec(null)
    F1 = as_distribution(F1)
    n_eff = lam if lam is not None else n
    size = ("poisson", float(lam)) if lam is not None else int(n)
    prepared = {}
    theta_ref = None
    edf_kinds = [m for m in methods if m in ("KS", "AD", "ZK", "ZA", "ZC")]
    for m in methods:
        if m == "RG":
            prepared[m] = _Rg(null, F1, n, lam)
        elif m in CHISQ_METHODS:
            if theta_ref is None:
                theta_ref = tuple(reference_theta(null, F1, int(round(n_eff))))
            F0_ref = null.bind(theta_ref)
            edges = _competitor_edges(m, F0_ref, n_eff)
            prepared[m] = _Binned(null, edges, StatisticKind.PEARSON, theta_ref, lam)
    if edf_kinds:
        prepared["EDF"] = _Edf(null, edf_kinds, size, B_inner, seed, cell)
    return prepared


def _replicates(prepared, methods, F1, n, lam, seed, cell, indices):
    out = {m: np.full(len(indices), np.nan) for m in methods}
    for j, b in enumerate(indices):
        rng = stream(seed, cell, b)
        size = int(n) if lam is None else max(int(rng.poisson(lam)), 2)
        x = F1.sample(size, rng)
        for m in methods:
            if m in CHISQ_METHODS:
                try:
                    out[m][j] = prepared[m].pvalue(x, b)
                except _FAILURES:
                    pass
        if "EDF" in prepared:
            try:
                for m, p in prepared["EDF"].pvalues(x, b).items():
                    out[m][j] = p
            except _FAILURES:
                pass
    return out


def _chunks(B, parts):
    bounds = np.linspace(0, B, parts + 1).astype(int)
    return [range(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def cell_pvalues(methods, null, F1, n=1000, lam=None, B=1000, B_inner=DEFAULT_B_INNER,
                 seed=DEFAULT_SEED, cell="cell", threads=None) -> dict:
    """Per-replicate p-values of each method on one (null, alternative, size) cell.

    Failed replicates are NaN; more than 1% failures for a method aborts.
    """
    methods = [_method(m) for m in methods]
    F1 = as_distribution(F1)
    prepared = _prepare(methods, null, F1, n, lam, B_inner, seed, cell)
    threads = thread_count() if threads is None else max(1, int(threads))
    chunks = _chunks(B, min(threads, B))
    if len(chunks) == 1:
        parts = [_replicates(prepared, methods, F1, n, lam, seed, cell, chunks[0])]
    else:
        with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            parts = list(pool.map(lambda idx: _replicates(prepared, methods, F1, n, lam, seed, cell, idx),
                                  chunks))
    out = {m: np.concatenate([p[m] for p in parts]) for m in methods}
    for m, pv in out.items():
        failed = int(np.count_nonzero(np.isnan(pv)))
        if failed > MAX_FAILURE_RATE * B:
            raise EstimationError(f"{m}: {failed} of {B} replicates failed in cell {cell!r}")
    return out


def _rate(pvalues, alpha):
    ok = pvalues[~np.isnan(pvalues)]
    power = float(np.mean(ok < alpha)) if ok.size else math.nan
    return power, _se(power, ok.size)


def power_full(method, null, F1, n=1000, lam=None, alpha=0.05, B=1000, B_inner=DEFAULT_B_INNER,
               seed=DEFAULT_SEED):
    """Rejection rate of ``method`` from the complete pipeline on sampled data."""
    method = _method(method)
    pv = cell_pvalues([method], null, F1, n, lam, B, B_inner, seed, cell=f"full|{method}")
    return _rate(pv[method], alpha)


def type1_table(studies, alphas=TYPE1_ALPHAS, n=None, B=None, seed=None, study="table1") -> PowerTable:
    """RG rejection rates when the data come from the null.

    Each study contributes its first alternative as the data source; for a
    simple null that is the null itself.
    """
    table = PowerTable()
    for s in studies:
        param, null, truth = next(iter(s.cells()))
        n_s = n or s.n
        B_s = B or s.B
        seed_s = seed if seed is not None else s.seed
        pv = cell_pvalues(["RG"], null, truth, n_s, s.lam, B_s, s.B_inner, seed_s, cell=f"{study}|{param}")
        for a in alphas:
            power, se = _rate(pv["RG"], a)
            table.add(PowerRow(study, param, "RG", power, se, B_s, s.size_label if n is None else str(n_s),
                               float(a), seed_s))
    return table


def power_curve(study: StudySpec, threads=None, progress=None) -> PowerTable:
    """Power of every method of ``study`` at every alternative.

    RG re-selects its scheme per alternative; each method's mean power over
    the grid is available from ``PowerTable.mean_power``.
    """
    table = PowerTable()
    for param, null, alt in study.cells():
        cell = f"{study.name}|{_fmt(param)}"
        pv = cell_pvalues(study.methods, null, alt, study.n, study.lam, study.B, study.B_inner,
                          study.seed, cell=cell, threads=threads)
        for m in study.methods:
            power, se = _rate(pv[m], study.alpha)
            table.add(PowerRow(study.name, param, m, power, se, study.B, study.size_label,
                               study.alpha, study.seed))
        if progress:
            progress(param)
    return table


# ---------------------------------------------------------------- mixture demo

MIXTURE_NULL = "?*normal(?,?) + normal(?,?)"
MIXTURE_TRUTH = "0.3333333333333333*normal(0,1) + normal(5,2)"


def mixture_demo(B: int = 1000, n: int = 1000, alpha: float = 0.05, k: int = 10,
                 seed: int = DEFAULT_SEED, threads=None) -> PowerTable:
    """Type-I error of a chi-square test of a normal mixture with estimated parameters.

    Each replicate fits the five parameters by unbinned MLE and builds ``k``
    equal-probability bins from that fit. The "UnbinnedMLE" variant tests
    with the MLE directly; "MinChiSquare" re-estimates by minimum chi-square
    on the same bins. Both use ``k - 1 - 5`` degrees of freedom.
    """
    null = parse_spec(MIXTURE_NULL)
    truth = as_distribution(MIXTURE_TRUTH)
    df = k - 1 - null.p
    if df < 1:
        raise ValueError("too few bins for five parameters")

    def run(indices):
        out = np.full((len(indices), 2), np.nan)
        for j, b in enumerate(indices):
            x = truth.sample(n, stream(seed, "mixture", b))
            try:
                # the EM-refined start already sits at the optimum; restarts only cost time
                theta = unbinned_mle(null, x, restarts=0).theta
                F_hat = null.bind(theta)
                edges = equal_prob_edges(F_hat, k)
                counts = bin_counts(x, edges).astype(float)
                out[j, 0] = chisq_sf(chisq_stat(StatisticKind.PEARSON, counts, n / k * np.ones(k)), df)
                fit = minimum_chisq(null, counts, edges, StatisticKind.PEARSON, start=theta, restarts=0)
                E = n * expected_probs(null.bind(fit.theta), edges)
                out[j, 1] = chisq_sf(chisq_stat(StatisticKind.PEARSON, counts, E), df)
            except _FAILURES:
                pass
        return out

    threads = thread_count() if threads is None else max(1, int(threads))
    chunks = _chunks(B, min(threads, B))
    if len(chunks) == 1:
        parts = [run(chunks[0])]
    else:
        with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            parts = list(pool.map(run, chunks))
    pv = np.concatenate(parts)
    failed = int(np.count_nonzero(np.isnan(pv[:, 0])))
    if failed > MAX_FAILURE_RATE * B:
        raise EstimationError(f"mixture fit failed on {failed} of {B} replicates")
    table = PowerTable()
    for col, name in enumerate(("UnbinnedMLE", "MinChiSquare")):
        power, se = _rate(pv[:, col], alpha)
        table.add(PowerRow("mixture", k, name, power, se, B, str(n), alpha, seed))
    return table


# ---------------------------------------------------------------- manifests

def _grid(lo, hi, step):
    count = int(round((hi - lo) / step))
    return [round(lo + i * step, 10) for i in range(count + 1)]


TABLE1_NULLS = (
    ("U[0,1]", "uniform(0,1)", "uniform(0,1)"),
    ("Beta(2,4)", "beta(2,4)", "beta(2,4)"),
    ("Gamma(3,0.5)", "gamma(3,0.5)", "gamma(3,0.5)"),
    ("N(0,1)", "normal(0,1)", "normal(0,1)"),
    ("Normal", "normal(?,?)", "normal(0,1)"),
    ("Exp(1)", "exp(1)", "exp(1)"),
    ("Exponential", "exp(?)", "exp(1)"),
)


def table1_studies(B=2000, n=1000, seed=DEFAULT_SEED) -> list:
    return [StudySpec(label, null, [(label, truth)], ["RG"], n=n, B=B, seed=seed)
            for label, null, truth in TABLE1_NULLS]


FIGURE_STUDIES = {
    "fig4": dict(null="normal(0,1)", param_name="df", values=list(range(1, 21)), alt="t({})"),
    "fig5": dict(null="normal(?,?)", param_name="df", values=list(range(1, 21)), alt="t({})"),
    "fig6": dict(null="uniform(0,1)", param_name="slope", values=_grid(0.0, 0.3, 0.02), alt="linear({})"),
    "fig7": dict(null="exp(?)", param_name="sigma", values=_grid(0.25, 1.5, 0.0625),
                 alt="0.9*exp(1) + 0.1*normal(1.5, {}) | [0, inf)"),
    "fig8": dict(null="uniform(0,1)", param_name="q", values=_grid(1.0, 2.0, 0.05), alt="beta(1, {})"),
    "fig9": dict(null="uniform(0,1)", param_name="q", values=_grid(0.7, 1.3, 0.03), alt="beta({0}, {0})"),
    "fig10": dict(null="normal({0}, {1})", param_name="r", values=_grid(10.0, 100.0, 4.5),
                  alt="gamma({0}, 1)"),
}

FIG1_SIZES = (100, 500, 2000)
FIG1_BINS = tuple(range(2, 22))
FIG2_NULL = "linear(-0.5)"
FIG2_ALT = "exp(1) | [0, 1]"
FIG2_N = 10000
STUDY_NAMES = ("table1", "fig1", "fig2", "fig3") + tuple(FIGURE_STUDIES) + ("mixture",)


def figure_study(name: str, B=1000, n=1000, seed=DEFAULT_SEED, B_inner=DEFAULT_B_INNER, methods=None,
                 lam=None) -> StudySpec:
    """Power-curve study for one of fig4 ... fig10."""
    if name not in FIGURE_STUDIES:
        raise ValueError(f"{name!r} is not a power-curve study")
    d = FIGURE_STUDIES[name]
    cells = []
    for v in d["values"]:
        if name == "fig10":
            cells.append((v, d["alt"].format(_fmt(v)), d["null"].format(_fmt(v), repr(math.sqrt(v)))))
        else:
            cells.append((v, d["alt"].format(_fmt(v))))
    return StudySpec(name, d["null"], cells, list(methods or METHODS), n=n, B=B, seed=seed,
                     B_inner=B_inner, lam=lam, param_name=d["param_name"])


def fig1_table(B=1000, sizes=FIG1_SIZES, bins=FIG1_BINS, seed=DEFAULT_SEED, slope=0.2) -> PowerTable:
    """Power of k equal bins for uniform vs linear(slope), by bin count and sample size."""
    table = PowerTable()
    null = as_distribution("uniform(0,1)")
    alt = as_distribution(f"linear({slope})")
    for n in sizes:
        for k in bins:
            scheme = make_scheme(null, k, 0.0)
            if not admissible(n, scheme.prob_array):
                continue
            power, se = power_fast(null, alt, scheme, StatisticKind.PEARSON, n, 0.05, B, seed,
                                   cell=f"fig1|{n}|{k}")
            table.add(PowerRow("fig1", k, f"n={n}", power, se, B, str(n), 0.05, seed))
    return table


def fig2_choice(n=FIG2_N):
    grid = SelectionGrid(list(range(2, 22)), kinds=[StatisticKind.PEARSON])
    return select_scheme(FIG2_NULL, FIG2_ALT, n, grid)


def fig3_table(B=1000, n=FIG2_N, seed=DEFAULT_SEED) -> PowerTable:
    """Fast-path power over (k, kappa) for the stored selection example, Pearson statistic."""
    table = PowerTable()
    null = as_distribution(FIG2_NULL)
    alt = as_distribution(FIG2_ALT)
    for kappa in (0.0, 0.25, 0.5, 0.75, 1.0):
        for k in range(2, 22):
            scheme = make_scheme(null, k, kappa)
            if not admissible(n, scheme.prob_array):
                continue
            power, se = power_fast(null, alt, scheme, StatisticKind.PEARSON, n, 0.05, B, seed,
                                   cell=f"fig3|{k}|{kappa}")
            table.add(PowerRow("fig3", k, f"kappa={_fmt(kappa)}", power, se, B, str(n), 0.05, seed))
    return table
