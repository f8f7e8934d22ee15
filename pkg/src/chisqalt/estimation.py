"""Parameter fitting for composite nulls.

Minimum chi-square is what the test itself uses. Binned and unbinned
maximum likelihood are here for comparison and for the EDF competitors.
All numerical fits run Nelder-Mead in the spec's unconstrained
coordinates, from the given start plus perturbed restarts.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .binning import bin_probabilities
from .distributions import DistributionSpec, parse_spec
from .distributions.spec import FREE, REST, Atom, Mixture, Truncate
from .statistics import StatisticKind, ZeroCountError, chisq_stat

log = logging.getLogger(__name__)

PROB_FLOOR = 1e-12
RESTARTS = 4
_PERTURB_SEED = 7919


class EstimationError(RuntimeError):
    pass


@dataclass
class FitResult:
    theta: np.ndarray
    objective: float
    converged: bool
    evaluations: int
    floored: bool = False


class IdentityTransform:
    """Optimizer coordinates = ``spec.to_unconstrained`` (the default)."""

    def __init__(self, spec: DistributionSpec):
        self.spec = spec

    def to_free(self, theta):
        return self.spec.to_unconstrained(theta)

    def from_free(self, z):
        return self.spec.from_unconstrained(z)


class AffineTransform(IdentityTransform):
    """Default coordinates mapped through ``z -> scale*z + shift``."""

    def __init__(self, spec, scale=2.0, shift=0.5):
        super().__init__(spec)
        self.scale, self.shift = scale, shift

    def to_free(self, theta):
        return self.scale * self.spec.to_unconstrained(theta) + self.shift

    def from_free(self, z):
        return self.spec.from_unconstrained((np.asarray(z) - self.shift) / self.scale)


def expected_probs(dist, edges):
    """Bin probabilities renormalized to the edge range."""
    probs = bin_probabilities(dist, edges)
    total = probs.sum()
    if not total > 0:
        return probs
    return probs / total


def _simplex(z, rel=0.1):
    # scipy's default step is 0.00025 at a zero coordinate, too small to escape
    step = np.maximum(2.5 * rel, rel * np.abs(z))
    return np.vstack([z, z + np.diag(step)])


def _nelder_mead(objective, z0, restarts, tol):
    z0 = np.asarray(z0, dtype=float)
    p = len(z0)
    rng = np.random.default_rng(_PERTURB_SEED)
    starts = [z0] + [z0 + rng.normal(0.0, 0.5, p) for _ in range(restarts)]
    options = {
        "xatol": tol,
        "fatol": tol,
        "maxiter": 400 * p + 400,
        "maxfev": 800 * p + 800,
        "adaptive": p > 2,
    }
    best, evaluations = None, 0
    for z in starts:
        if not np.isfinite(objective(z)):
            continue
        res = minimize(objective, z, method="Nelder-Mead",
                       options=dict(options, initial_simplex=_simplex(z)))
        evaluations += res.nfev
        if np.isfinite(res.fun) and (best is None or res.fun < best.fun - 1e-14):
            best = res
    if best is not None and p > 1:
        # restart from the best vertex; catches early simplex collapse
        res = minimize(objective, best.x, method="Nelder-Mead",
                       options=dict(options, initial_simplex=_simplex(best.x, 0.05)))
        evaluations += res.nfev
        if res.fun <= best.fun:
            best = res
    return best, evaluations


def _fit(spec, objective_theta, start, restarts, tol, transform):
    transform = transform or IdentityTransform(spec)
    state = {"floored": False}

    def objective(z):
        try:
            theta = transform.from_free(z)
            value = objective_theta(theta, state)
        except (ValueError, FloatingPointError, OverflowError):
            return math.inf
        return value if np.isfinite(value) else math.inf

    start = np.asarray(start, dtype=float)
    if len(start) != spec.p:
        raise EstimationError(f"start has {len(start)} values, family has {spec.p} free parameters")
    best, evaluations = _nelder_mead(objective, transform.to_free(start), restarts, tol)
    if best is None:
        raise EstimationError("no start produced a finite objective")
    theta = transform.from_free(best.x)
    return FitResult(theta, float(best.fun), bool(best.success), evaluations, state["floored"])


def _binned_setup(family, counts, edges):
    family = parse_spec(family)
    counts = np.asarray(counts, dtype=float)
    edges = np.asarray(edges, dtype=float)
    if family.p < 1:
        raise EstimationError("family has no free parameters")
    if len(counts) != len(edges) - 1:
        raise EstimationError("need one count per bin")
    if np.count_nonzero(counts) < 2:
        raise EstimationError("fewer than two nonempty bins; parameters are not identifiable")
    return family, counts, edges


def _probs(family, theta, edges, state, renormalize=True):
    dist = family.bind(theta)
    probs = expected_probs(dist, edges) if renormalize else bin_probabilities(dist, edges)
    if np.any(probs < PROB_FLOOR):
        state["floored"] = True
        probs = np.maximum(probs, PROB_FLOOR)
    return probs


def minimum_chisq(family, counts, edges, kind=StatisticKind.PEARSON, start=None,
                  restarts=RESTARTS, tol=1e-8, transform=None, total=None) -> FitResult:
    """Parameters minimizing the chi-square statistic ``kind`` for binned counts.

    Expected counts are ``n * p(theta)`` with ``n = sum(counts)``, unless
    ``total`` is given (Poisson sample size: ``total = lambda`` and the
    bin probabilities are not renormalized).
    """
    family, counts, edges = _binned_setup(family, counts, edges)
    kind = StatisticKind.parse(kind)
    if kind is StatisticKind.NEYMAN_MODIFIED and np.any(counts <= 0):
        raise ZeroCountError("Neyman modified fit needs every count > 0")
    n = counts.sum() if total is None else float(total)
    renormalize = total is None
    if start is None:
        start = default_start(family, counts=counts, edges=edges)

    def objective(theta, state):
        return chisq_stat(kind, counts, n * _probs(family, theta, edges, state, renormalize))

    result = _fit(family, objective, start, restarts, tol, transform)
    if result.floored:
        warnings.warn("bin probability floored at 1e-12 during fit", RuntimeWarning, stacklevel=2)
    result.theta = canonicalize(family, result.theta)
    return result


def binned_mle(family, counts, edges, start=None, restarts=RESTARTS, tol=1e-8,
               transform=None) -> FitResult:
    """Maximize ``sum O_i log p_i(theta)``; the objective is the negative log-likelihood."""
    family, counts, edges = _binned_setup(family, counts, edges)
    if start is None:
        start = default_start(family, counts=counts, edges=edges)

    def objective(theta, state):
        return -float(np.sum(counts * np.log(_probs(family, theta, edges, state))))

    result = _fit(family, objective, start, restarts, tol, transform)
    result.theta = canonicalize(family, result.theta)
    return result


def _closed_form_mle(family, data):
    root = family.root
    if not isinstance(root, Atom) or not all(a is FREE for a in root.args):
        return None
    if root.name == "normal":
        mu = data.mean()
        sigma = math.sqrt(np.mean((data - mu) ** 2))
        if sigma <= 0:
            raise EstimationError("normal MLE needs data with positive spread")
        return np.array([mu, sigma])
    if root.name == "exp":
        if np.any(data < 0):
            raise EstimationError("data outside the exponential support")
        return np.array([1.0 / data.mean()])
    return None


def unbinned_mle(family, data, start=None, restarts=RESTARTS, tol=1e-8,
                 transform=None) -> FitResult:
    """Maximum likelihood on raw observations.

    Normal and exponential families with all parameters free use their
    closed forms; everything else goes through Nelder-Mead.
    """
    family = parse_spec(family)
    data = np.asarray(data, dtype=float)
    if data.size == 0:
        raise EstimationError("no data")
    if family.p < 1:
        raise EstimationError("family has no free parameters")
    if family.p > 1 and np.unique(data).size < 2:
        # one repeated value: the likelihood is unbounded in every such family
        raise EstimationError("need at least two distinct observations")
    theta = _closed_form_mle(family, data)
    if theta is not None:
        nll = -float(np.sum(family.bind(theta).log_density(data)))
        return FitResult(theta, nll, True, 0)
    if start is None:
        start = default_start(family, data=data)

    def objective(theta, state):
        return -float(np.sum(family.bind(theta).log_density(data)))

    result = _fit(family, objective, start, restarts, tol, transform)
    if not np.isfinite(result.objective):
        raise EstimationError("data outside the family support")
    result.theta = canonicalize(family, result.theta)
    return result


def _sortable_mixture(node):
    if isinstance(node, Truncate):
        node = node.component
    if not isinstance(node, Mixture):
        return None
    names = {c.name for c in node.components}
    if len(names) != 1:
        return None
    if not all(w is FREE or w is REST for w in node.weights):
        return None
    if not all(a is FREE for c in node.components for a in c.args):
        return None
    return node


def canonicalize(family, theta) -> np.ndarray:
    """Order same-family mixture components by their first parameter.

    Only applies to mixtures whose weights and component parameters are all
    free; any other family is returned unchanged.
    """
    family = parse_spec(family)
    theta = np.asarray(theta, dtype=float)
    node = _sortable_mixture(family.root)
    if node is None:
        return theta
    terms, i = [], 0
    for w, c in zip(node.weights, node.components):
        weight = None
        if w is FREE:
            weight = theta[i]
            i += 1
        args = theta[i:i + len(c.args)]
        i += len(c.args)
        terms.append([weight, args])
    rest = 1.0 - sum(t[0] for t in terms if t[0] is not None)
    for t in terms:
        if t[0] is None:
            t[0] = rest
    terms.sort(key=lambda t: t[1][0])
    out = []
    for w, (weight, args) in zip(node.weights, terms):
        if w is FREE:
            out.append(weight)
        out.extend(args)
    return np.array(out)


def _pseudo_data(counts, edges):
    counts = np.asarray(counts, dtype=float)
    edges = np.asarray(edges, dtype=float)
    mids = 0.5 * (edges[:-1] + edges[1:])
    if len(edges) > 2:
        if not math.isfinite(edges[0]):
            mids[0] = edges[1] - 0.5 * (edges[2] - edges[1])
        if not math.isfinite(edges[-1]):
            mids[-1] = edges[-2] + 0.5 * (edges[-2] - edges[-3])
    mids = np.where(np.isfinite(mids), mids, 0.0)
    reps = np.round(counts).astype(int)
    return np.repeat(mids, np.maximum(reps, 0))


def _moment_args(name, x):
    mean = float(np.mean(x))
    var = float(np.var(x)) if x.size > 1 else 1.0
    sd = math.sqrt(var) if var > 0 else 1.0
    if name == "normal":
        return [mean, sd]
    if name == "exp":
        return [1.0 / mean if mean > 0 else 1.0]
    if name == "gamma":
        if mean > 0 and var > 0:
            return [mean * mean / var, mean / var]
        return [1.0, 1.0]
    if name == "beta":
        if 0 < mean < 1 and 0 < var < mean * (1 - mean):
            c = mean * (1 - mean) / var - 1
            return [mean * c, (1 - mean) * c]
        return [1.0, 1.0]
    if name == "uniform":
        lo, hi = float(np.min(x)), float(np.max(x))
        pad = 0.01 * (hi - lo) if hi > lo else 0.5
        return [lo - pad, hi + pad]
    if name == "linear":
        return [float(np.clip(6.0 * (mean - 0.5), -0.99, 0.99))]
    if name == "t":
        return [5.0]
    return None


def _atom_start(atom, x, fallback):
    guess = _moment_args(atom.name, x) if x.size else None
    out = []
    for j, a in enumerate(atom.args):
        if a is FREE:
            out.append(guess[j] if guess is not None else next(fallback))
            if guess is not None:
                next(fallback)
    return out


def default_start(family, data=None, counts=None, edges=None) -> np.ndarray:
    """Moment-matching starting values, always inside the parameter domain."""
    family = parse_spec(family)
    fallback_theta = family.default_theta()
    if data is not None:
        x = np.asarray(data, dtype=float)
    elif counts is not None and edges is not None:
        x = _pseudo_data(counts, edges)
    else:
        x = np.empty(0)
    x = x[np.isfinite(x)]
    node = family.root.component if isinstance(family.root, Truncate) else family.root
    fallback = iter(fallback_theta)
    try:
        if isinstance(node, Atom):
            theta = _atom_start(node, x, fallback)
        else:
            xs = np.sort(x)
            groups = np.array_split(xs, len(node.components)) if xs.size else [xs] * len(node.components)
            theta = []
            n_free = sum(w is FREE for w in node.weights)
            scale = 1.0 - sum(w for w in node.weights if isinstance(w, float))
            for w, comp, grp in zip(node.weights, node.components, groups):
                if w is FREE:
                    theta.append(scale / (n_free + 1))
                    next(fallback)
                theta.extend(_atom_start(comp, grp if grp.size > 1 else x, fallback))
        theta = np.array(theta, dtype=float)
        if x.size > 10 and _sortable_mixture(family.root) is not None and node.components[0].name == "normal":
            theta = _normal_mixture_em(node, x, theta)
        family.bind(theta)
        if not np.all(np.isfinite(theta)):
            raise ValueError
        return theta
    except (ValueError, StopIteration, ZeroDivisionError):
        return fallback_theta


def _normal_mixture_em(node, x, theta, iterations=60):
    """A few EM sweeps for an all-free normal mixture; returns theta in spec order."""
    m = len(node.components)
    w, mu, sd, i = [], [], [], 0
    for wt in node.weights:
        if wt is FREE:
            w.append(theta[i])
            i += 1
        else:
            w.append(None)
        mu.append(theta[i])
        sd.append(theta[i + 1])
        i += 2
    rest = 1.0 - sum(v for v in w if v is not None)
    w = np.array([rest if v is None else v for v in w])
    mu, sd = np.array(mu), np.array(sd)
    for _ in range(iterations):
        logp = np.log(w)[:, None] - np.log(sd)[:, None] - 0.5 * ((x[None, :] - mu[:, None]) / sd[:, None]) ** 2
        logp -= logp.max(axis=0)
        r = np.exp(logp)
        r /= r.sum(axis=0)
        nk = r.sum(axis=1)
        if np.any(nk < 2):
            break
        w = nk / x.size
        mu = (r @ x) / nk
        sd = np.sqrt(np.maximum((r * (x[None, :] - mu[:, None]) ** 2).sum(axis=1) / nk, 1e-12))
    out = []
    for j, wt in enumerate(node.weights):
        if wt is FREE:
            out.append(w[j])
        out.extend([mu[j], sd[j]])
    return np.array(out)
