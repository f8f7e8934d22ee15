"""Bin edges, bin probabilities and counts.

Equal-probability edges (kappa=0) and equal-size edges (kappa=1) are blended
elementwise for intermediate kappa. Bins are half-open ``[lo, hi)`` except
the last, which is closed.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .distributions import Distribution

#: tail mass cut from each side when an equal-size range must be finite
DEFAULT_TAIL = 0.005
EXPECTED_MIN = 5.0


class BinningError(ValueError):
    pass


@dataclass(frozen=True)
class BinningScheme:
    k: int
    kappa: float
    edges: tuple
    null_probs: tuple = field(default=())

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=float)
        if self.k < 2 or len(edges) != self.k + 1:
            raise BinningError(f"need k >= 2 and k+1 edges, got k={self.k}, {len(edges)} edges")
        if np.any(np.diff(edges) <= 0):
            raise BinningError(f"edges must be strictly increasing: {edges}")
        if self.null_probs:
            probs = np.asarray(self.null_probs)
            if len(probs) != self.k or np.any(probs < 0):
                raise BinningError("null_probs must be k nonnegative probabilities")
            if abs(probs.sum() - 1.0) > 1e-9:
                raise BinningError(f"null_probs sum to {probs.sum()!r}, not 1")

    @property
    def edge_array(self) -> np.ndarray:
        return np.asarray(self.edges, dtype=float)

    @property
    def prob_array(self) -> np.ndarray:
        return np.asarray(self.null_probs, dtype=float)


@dataclass(frozen=True)
class BinnedData:
    edges: tuple
    counts: tuple

    def __post_init__(self):
        if len(self.counts) != len(self.edges) - 1:
            raise BinningError("need exactly one count per bin")
        if np.any(np.diff(np.asarray(self.edges, dtype=float)) <= 0):
            raise BinningError("binned data edges must be strictly increasing")
        if any(c < 0 for c in self.counts):
            raise BinningError("counts must be nonnegative")

    @property
    def n(self) -> int:
        return int(sum(self.counts))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["lower", "upper", "count"])
        for lo, hi, c in zip(self.edges[:-1], self.edges[1:], self.counts):
            writer.writerow([_fmt_bound(lo), _fmt_bound(hi), int(c)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "BinnedData":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or [h.strip().lower() for h in rows[0]] != ["lower", "upper", "count"]:
            raise BinningError("binned data needs the header 'lower,upper,count'")
        edges, counts = [], []
        for lineno, row in enumerate(rows[1:], start=2):
            if not row or not "".join(row).strip():
                continue
            try:
                lo, hi, c = (v.strip() for v in row)
                lo, hi = float(lo), float(hi)
                c = float(c)
            except ValueError:
                raise BinningError(f"line {lineno}: cannot parse {','.join(row)!r}") from None
            if c != int(c) or c < 0:
                raise BinningError(f"line {lineno}: count must be a nonnegative integer")
            if edges and lo != edges[-1]:
                raise BinningError(f"line {lineno}: bins are not contiguous ({lo} != {edges[-1]})")
            if not edges:
                edges.append(lo)
            edges.append(hi)
            counts.append(int(c))
        if not counts:
            raise BinningError("binned data file has no rows")
        return cls(tuple(edges), tuple(counts))


def _fmt_bound(v):
    if v == math.inf:
        return "inf"
    if v == -math.inf:
        return "-inf"
    return repr(float(v))


def equal_prob_edges(F0: Distribution, k: int) -> np.ndarray:
    """Edges giving each of ``k`` bins probability 1/k under ``F0``."""
    if k < 2:
        raise BinningError("need at least 2 bins")
    inner = F0.quantile(np.arange(1, k) / k)
    return np.concatenate([[F0.support.lower], np.atleast_1d(inner), [F0.support.upper]])


def working_range(F0: Distribution, tail: float = DEFAULT_TAIL) -> tuple[float, float]:
    """Finite range covered by equal-size bins.

    A fully bounded support is used as is; otherwise both ends come from
    the ``tail`` and ``1 - tail`` quantiles.
    """
    if F0.support.bounded:
        return F0.support.lower, F0.support.upper
    return float(F0.quantile(tail)), float(F0.quantile(1.0 - tail))


def equal_size_edges(F0: Distribution, k: int, tail: float = DEFAULT_TAIL) -> np.ndarray:
    """``k`` equal-width bins over the working range, outer edges at the support ends."""
    if k < 2:
        raise BinningError("need at least 2 bins")
    lo, hi = working_range(F0, tail)
    inner = lo + (hi - lo) * np.arange(1, k) / k
    return np.concatenate([[F0.support.lower], inner, [F0.support.upper]])


def interpolate_edges(e0, e1, kappa: float) -> np.ndarray:
    e0 = np.asarray(e0, dtype=float)
    e1 = np.asarray(e1, dtype=float)
    if e0.shape != e1.shape:
        raise BinningError("edge lists differ in length")
    if not 0.0 <= kappa <= 1.0:
        raise BinningError(f"kappa must be in [0, 1], got {kappa}")
    inf0, inf1 = ~np.isfinite(e0), ~np.isfinite(e1)
    if np.any(inf0 != inf1) or np.any(e0[inf0] != e1[inf1]):
        raise BinningError("infinite edges must agree in position")
    if kappa == 0.0:
        return e0.copy()
    if kappa == 1.0:
        return e1.copy()
    out = e0.copy()
    fin = ~inf0
    out[fin] = (1.0 - kappa) * e0[fin] + kappa * e1[fin]
    return out


def bin_probabilities(F: Distribution, edges) -> np.ndarray:
    cdf = np.asarray(F.cdf(np.asarray(edges, dtype=float)))
    return np.diff(cdf)


def bin_counts(values, edges, return_outside: bool = False):
    """Count values per bin; ties on an interior edge go to the right bin."""
    edges = np.asarray(edges, dtype=float)
    values = np.asarray(values, dtype=float)
    k = len(edges) - 1
    idx = np.searchsorted(edges, values, side="right") - 1
    idx[values == edges[-1]] = k - 1
    inside = (idx >= 0) & (idx < k)
    outside = int(values.size - inside.sum())
    if outside:
        warnings.warn(f"{outside} value(s) fall outside [{edges[0]}, {edges[-1]}]", stacklevel=2)
    counts = np.bincount(idx[inside], minlength=k)
    return (counts, outside) if return_outside else counts


def admissible(n: float, null_probs, threshold: float = EXPECTED_MIN) -> bool:
    """True when every expected count ``n * p`` reaches ``threshold``."""
    expected = n * np.asarray(null_probs, dtype=float)
    return bool(expected.min() >= threshold * (1.0 - 1e-9))


def make_scheme(F0: Distribution, k: int, kappa: float, tail: float = DEFAULT_TAIL) -> BinningScheme:
    edges = interpolate_edges(equal_prob_edges(F0, k), equal_size_edges(F0, k, tail), kappa)
    return BinningScheme(k, float(kappa), tuple(edges), tuple(bin_probabilities(F0, edges)))


def merge_to_admissible(edges, probs, n: float, threshold: float = EXPECTED_MIN):
    """Greedy left-to-right merge until every expected count reaches ``threshold``.

    A short remainder at the right end is folded into the last kept bin.
    """
    edges = np.asarray(edges, dtype=float)
    probs = np.asarray(probs, dtype=float)
    floor = threshold * (1.0 - 1e-9)
    out_edges = [edges[0]]
    out_probs = []
    acc = 0.0
    for hi, p in zip(edges[1:], probs):
        acc += p
        if n * acc >= floor:
            out_edges.append(hi)
            out_probs.append(acc)
            acc = 0.0
    if acc > 0.0 or out_edges[-1] != edges[-1]:
        if not out_probs:
            raise BinningError("cannot form an admissible bin")
        out_edges[-1] = edges[-1]
        out_probs[-1] += acc
    return np.array(out_edges), np.array(out_probs)


def histogram_scheme(F0: Distribution, n: int, nbins: int = 50, tail: float = DEFAULT_TAIL) -> BinningScheme:
    """Equal-size histogram bins merged until expected counts are all >= 5."""
    if nbins < 2:
        raise BinningError("need at least 2 histogram bins")
    if n < 2 * EXPECTED_MIN:
        raise BinningError(f"n={n} is too small for two bins with expected count 5")
    edges = equal_size_edges(F0, nbins, tail)
    edges, probs = merge_to_admissible(edges, bin_probabilities(F0, edges), n)
    if len(probs) < 2:
        raise BinningError("merging left fewer than two bins")
    return BinningScheme(len(probs), 1.0, tuple(edges), tuple(probs))


def snap_to_data_edges(ideal, available) -> np.ndarray:
    """Map ideal edges onto the nearest available data edges.

    Outer edges go to the outer available edges. Interior collisions move to
    the next unused available edge on the right.
    """
    ideal = np.asarray(ideal, dtype=float)
    available = np.asarray(available, dtype=float)
    if np.any(np.diff(available) <= 0):
        raise BinningError("available edges must be strictly increasing")
    if len(available) < len(ideal):
        raise BinningError(
            f"need at least {len(ideal)} available edges, only {len(available)} given"
        )
    last = len(available) - 1
    picked = [0]
    for e in ideal[1:-1]:
        if math.isfinite(e):
            j = int(np.argmin(np.abs(available - e)))
        else:
            j = 0 if e < 0 else last
        j = max(j, picked[-1] + 1)
        picked.append(j)
    if picked[-1] >= last:
        raise BinningError("not enough distinct available edges to snap the ideal binning")
    picked.append(last)
    return available[picked]
