"""Chi-square goodness-of-fit testing against a known alternative."""

__version__ = "0.1.0"
