"""Distribution catalog and the textual spec language."""

from .families import (
    Beta,
    Distribution,
    Exponential,
    Gamma,
    Linear,
    Mixture,
    Normal,
    StudentT,
    Support,
    Truncated,
    Uniform,
    invert_cdf,
)
from .spec import FREE, CATALOG, DistributionSpec, SpecError, as_distribution, parse_spec


def bind(spec, theta=()):
    """Bind ``theta`` into ``spec`` (spec text or :class:`DistributionSpec`)."""
    return parse_spec(spec).bind(theta)


def sample(dist, n, rng):
    """Draw ``n`` values from ``dist`` using the generator ``rng``."""
    if n < 0:
        raise ValueError("sample size must be non-negative")
    return as_distribution(dist).sample(int(n), rng)


__all__ = [
    "Beta", "CATALOG", "Distribution", "DistributionSpec", "Exponential", "FREE", "Gamma",
    "Linear", "Mixture", "Normal", "SpecError", "StudentT", "Support", "Truncated", "Uniform",
    "as_distribution", "bind", "invert_cdf", "parse_spec", "sample",
]
