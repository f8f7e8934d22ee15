"""Textual distribution specs with free parameters.

Grammar (whitespace insignificant, names case-insensitive)::

    spec     := mix ("|" interval)?
    mix      := term ("+" term)*
    term     := (weight "*")? atom
    weight   := number | "?"
    atom     := name "(" arg ("," arg)* ")"
    arg      := number | "?"
    interval := ("[" | "(") bound "," bound ("]" | ")")
    bound    := number | "-inf" | "inf"

In a mixture at most one term may omit its weight; it receives the
remainder ``1 - sum(other weights)``. Free weights (``?``) require such a
remainder term so the weights stay identifiable.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Union

import numpy as np

from .families import (
    Beta,
    Distribution,
    Exponential,
    Gamma,
    Linear,
    Mixture as MixtureDist,
    Normal,
    StudentT,
    Truncated,
    Uniform,
)


class SpecError(ValueError):
    """Raised for malformed spec text or invalid parameter bindings."""

    def __init__(self, message, position=None):
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)
        self.position = position


class _Marker:
    def __init__(self, text):
        self._text = text

    def __repr__(self):
        return self._text


FREE = _Marker("?")
REST = _Marker("<rest>")

# name -> (constructor, parameter kinds, default parameter values)
CATALOG = {
    "uniform": (Uniform, ("real", "real"), (0.0, 1.0)),
    "normal": (Normal, ("real", "pos"), (0.0, 1.0)),
    "t": (StudentT, ("pos",), (5.0,)),
    "beta": (Beta, ("pos", "pos"), (1.0, 1.0)),
    "gamma": (Gamma, ("pos", "pos"), (1.0, 1.0)),
    "exp": (Exponential, ("pos",), (1.0,)),
    "linear": (Linear, ("slope",), (0.0,)),
}
ALIASES = {"norm": "normal", "unif": "uniform", "exponential": "exp", "student_t": "t"}


@dataclass(frozen=True)
class Atom:
    name: str
    args: tuple


@dataclass(frozen=True)
class Mixture:
    weights: tuple
    components: tuple


@dataclass(frozen=True)
class Truncate:
    component: Union[Atom, Mixture]
    lower: float
    upper: float


Node = Union[Atom, Mixture, Truncate]

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)"
    r"|(?P<inf>inf\b)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[()\[\],*+|?-]))"
)


def _tokenize(text):
    tokens = []
    pos = 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise SpecError(f"unexpected character {text[pos:].strip()[:1]!r}", pos)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text):
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self, value=None, kind=None):
        tok = self.tokens[self.i]
        if value is not None and tok[1] != value:
            raise SpecError(f"expected {value!r}, found {tok[1] or 'end of input'!r}", tok[2])
        if kind is not None and tok[0] != kind:
            raise SpecError(f"expected {kind}, found {tok[1] or 'end of input'!r}", tok[2])
        self.i += 1
        return tok

    def _signed(self):
        sign = 1.0
        if self.peek()[1] == "-":
            self.take()
            sign = -1.0
        return sign, self.take()

    def number(self):
        sign, (kind, val, pos) = self._signed()
        if kind != "num":
            raise SpecError(f"expected a number, found {val or 'end of input'!r}", pos)
        return sign * float(val)

    def parse(self):
        root = self.mix()
        if self.peek()[1] == "|":
            self.take("|")
            root = self.interval(root)
        kind, val, pos = self.peek()
        if kind != "end":
            raise SpecError(f"unexpected {val!r}", pos)
        return root

    def mix(self):
        start = self.peek()[2]
        terms = [self.term()]
        while self.peek()[1] == "+":
            self.take("+")
            terms.append(self.term())
        return _build_mixture(terms, start)

    def term(self):
        kind, val, pos = self.peek()
        weight = None
        if kind == "num" or (val == "?" and self.tokens[self.i + 1][1] == "*"):
            nxt = self.tokens[self.i + 1]
            if nxt[1] != "*":
                raise SpecError("a weight must be followed by '*'", nxt[2])
            weight = FREE if val == "?" else float(val)
            self.i += 2
        return weight, self.atom()

    def atom(self):
        kind, val, pos = self.take(kind="name")
        name = ALIASES.get(val.lower(), val.lower())
        if name not in CATALOG:
            raise SpecError(f"unknown family {val!r}", pos)
        self.take("(")
        args = [self.arg()]
        while self.peek()[1] == ",":
            self.take(",")
            args.append(self.arg())
        self.take(")")
        expected = len(CATALOG[name][1])
        if len(args) != expected:
            raise SpecError(f"{name} takes {expected} argument(s), got {len(args)}", pos)
        return Atom(name, tuple(args))

    def arg(self):
        kind, val, pos = self.peek()
        if val == "?":
            self.take()
            return FREE
        return self.number()

    def bound(self):
        sign, (kind, val, pos) = self._signed()
        if kind == "inf":
            return sign * math.inf
        if kind == "num":
            return sign * float(val)
        raise SpecError(f"expected a bound, found {val or 'end of input'!r}", pos)

    def interval(self, root):
        kind, val, pos = self.take()
        if val not in ("[", "("):
            raise SpecError("interval must open with '[' or '('", pos)
        lower = self.bound()
        self.take(",")
        upper = self.bound()
        kind, val, _ = self.take()
        if val not in ("]", ")"):
            raise SpecError("interval must close with ']' or ')'", _)
        if not lower < upper:
            raise SpecError(f"truncation needs lower < upper, got [{lower}, {upper}]", pos)
        node = Truncate(root, lower, upper)
        if count_free(node) == 0:
            # reject intervals with no mass under a fixed spec right away
            try:
                _bind(node, iter(()))
            except ValueError as exc:
                raise SpecError(str(exc), pos) from None
        return node


def _build_mixture(terms, pos):
    if len(terms) == 1:
        w, atom = terms[0]
        if w is FREE:
            raise SpecError("a single-term spec cannot have a free weight", pos)
        if w is not None and abs(w - 1.0) > 1e-9:
            raise SpecError(f"single-term weight must be 1, got {w}", pos)
        return atom
    weights = [w for w, _ in terms]
    omitted = [i for i, w in enumerate(weights) if w is None]
    fixed = [w for w in weights if isinstance(w, float)]
    if any(w <= 0 for w in fixed):
        raise SpecError("mixture weights must be positive", pos)
    if len(omitted) > 1:
        raise SpecError("at most one mixture term may omit its weight", pos)
    has_free = any(w is FREE for w in weights)
    if has_free and not omitted:
        raise SpecError("free mixture weights need one term without a weight", pos)
    if omitted:
        rest = 1.0 - sum(fixed)
        if rest <= 1e-12:
            raise SpecError(f"mixture weights sum to {sum(fixed)}, no room for remainder", pos)
        weights[omitted[0]] = REST if has_free else rest
    elif abs(sum(fixed) - 1.0) > 1e-9:
        raise SpecError(f"mixture weights must sum to 1, got {sum(fixed):.12g}", pos)
    return Mixture(tuple(weights), tuple(a for _, a in terms))


def count_free(node: Node) -> int:
    if isinstance(node, Atom):
        return sum(a is FREE for a in node.args)
    if isinstance(node, Mixture):
        return sum(w is FREE for w in node.weights) + sum(count_free(c) for c in node.components)
    return count_free(node.component)


def _bind(node, values):
    if isinstance(node, Atom):
        cls, _, _ = CATALOG[node.name]
        args = [next(values) if a is FREE else a for a in node.args]
        return cls(*args)
    if isinstance(node, Mixture):
        weights, comps = [], []
        for w, c in zip(node.weights, node.components):
            weights.append(next(values) if w is FREE else w)
            comps.append(_bind(c, values))
        if REST in weights:
            known = sum(w for w in weights if w is not REST)
            weights = [1.0 - known if w is REST else w for w in weights]
        return MixtureDist(weights, comps)
    return Truncated(_bind(node.component, values), node.lower, node.upper)


def _num(v):
    if v is FREE:
        return "?"
    if v == math.inf:
        return "inf"
    if v == -math.inf:
        return "-inf"
    return repr(float(v))


def _unparse(node):
    if isinstance(node, Atom):
        return f"{node.name}({', '.join(_num(a) for a in node.args)})"
    if isinstance(node, Mixture):
        parts = []
        for w, c in zip(node.weights, node.components):
            parts.append(_unparse(c) if w is REST else f"{_num(w)}*{_unparse(c)}")
        return " + ".join(parts)
    left = "(" if node.lower == -math.inf else "["
    right = ")" if node.upper == math.inf else "]"
    return f"{_unparse(node.component)} | {left}{_num(node.lower)}, {_num(node.upper)}{right}"


def _slots(node, out):
    """Collect (kind, group) per free parameter in positional order."""
    if isinstance(node, Atom):
        kinds = CATALOG[node.name][1]
        out.extend((k, None) for a, k in zip(node.args, kinds) if a is FREE)
    elif isinstance(node, Mixture):
        for w, c in zip(node.weights, node.components):
            if w is FREE:
                out.append(("weight", id(node)))
            _slots(c, out)
    else:
        _slots(node.component, out)
    return out


def _weight_scales(node, out):
    if isinstance(node, Mixture):
        out[id(node)] = 1.0 - sum(w for w in node.weights if isinstance(w, float))
        for c in node.components:
            _weight_scales(c, out)
    elif isinstance(node, Truncate):
        _weight_scales(node.component, out)
    return out


def _defaults(node, out):
    if isinstance(node, Atom):
        defaults = CATALOG[node.name][2]
        out.extend(d for a, d in zip(node.args, defaults) if a is FREE)
    elif isinstance(node, Mixture):
        n_free = sum(w is FREE for w in node.weights)
        share = (1.0 - sum(w for w in node.weights if isinstance(w, float))) / (n_free + 1)
        for w, c in zip(node.weights, node.components):
            if w is FREE:
                out.append(share)
            _defaults(c, out)
    else:
        _defaults(node.component, out)
    return out


class DistributionSpec:
    """A parsed distribution or parametric family.

    ``p`` is the number of free parameters; ``bind(theta)`` substitutes them
    positionally (in textual order) and returns a :class:`Distribution`.
    """

    def __init__(self, root: Node):
        self.root = root
        self.p = count_free(root)
        self._slots = _slots(root, [])
        self._scales = _weight_scales(root, {})

    @property
    def is_simple(self) -> bool:
        return self.p == 0

    def bind(self, theta=()) -> Distribution:
        theta = [float(t) for t in np.asarray(theta, dtype=float).ravel()]
        if len(theta) != self.p:
            raise SpecError(f"spec has {self.p} free parameter(s), got {len(theta)} value(s)")
        it = iter(theta)
        try:
            return _bind(self.root, it)
        except SpecError:
            raise
        except ValueError as exc:
            raise SpecError(str(exc)) from None

    def default_theta(self) -> np.ndarray:
        return np.array(_defaults(self.root, []), dtype=float)

    def unparse(self) -> str:
        return _unparse(self.root)

    def __str__(self):
        return self.unparse()

    def __repr__(self):
        return f"DistributionSpec({self.unparse()!r})"

    def __eq__(self, other):
        return isinstance(other, DistributionSpec) and _same(self.root, other.root)

    def __hash__(self):
        return hash(self.unparse())

    # unconstrained optimizer coordinates

    def to_unconstrained(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        z = np.empty(self.p)
        groups = {}
        for i, (kind, group) in enumerate(self._slots):
            if kind == "weight":
                groups.setdefault(group, []).append(i)
        rest = {g: self._scales[g] - theta[idx].sum() for g, idx in groups.items()}
        for i, (kind, group) in enumerate(self._slots):
            t = theta[i]
            if kind == "real":
                z[i] = t
            elif kind == "pos":
                z[i] = math.log(t)
            elif kind == "slope":
                z[i] = math.atanh(min(max(t, -1 + 1e-12), 1 - 1e-12))
            else:
                z[i] = math.log(t / rest[group])
        return z

    def from_unconstrained(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        theta = np.empty(self.p)
        groups = {}
        for i, (kind, group) in enumerate(self._slots):
            if kind == "weight":
                groups.setdefault(group, []).append(i)
        for i, (kind, group) in enumerate(self._slots):
            if kind == "real":
                theta[i] = z[i]
            elif kind == "pos":
                theta[i] = math.exp(min(z[i], 700.0))
            elif kind == "slope":
                theta[i] = math.tanh(z[i])
        for g, idx in groups.items():
            zz = z[idx]
            m = max(0.0, zz.max())
            e = np.exp(zz - m)
            theta[idx] = self._scales[g] * e / (math.exp(-m) + e.sum())
        return theta

    def parameter_kinds(self) -> list:
        return [k for k, _ in self._slots]


def _same(a, b):
    if type(a) is not type(b):
        return False
    if isinstance(a, Atom):
        return a.name == b.name and len(a.args) == len(b.args) and all(
            (x is FREE and y is FREE) or (x is not FREE and y is not FREE and x == y)
            for x, y in zip(a.args, b.args)
        )
    if isinstance(a, Mixture):
        return (
            len(a.weights) == len(b.weights)
            and all(
                (x is y) or (isinstance(x, float) and isinstance(y, float) and x == y)
                for x, y in zip(a.weights, b.weights)
            )
            and all(_same(x, y) for x, y in zip(a.components, b.components))
        )
    return a.lower == b.lower and a.upper == b.upper and _same(a.component, b.component)


def parse_spec(text) -> DistributionSpec:
    """Parse spec text such as ``"0.9*exp(1) + 0.1*normal(1.5, 0.5) | [0, inf)"``."""
    if isinstance(text, DistributionSpec):
        return text
    if not isinstance(text, str) or not text.strip():
        raise SpecError("empty spec")
    return DistributionSpec(_Parser(text).parse())


def as_distribution(obj) -> Distribution:
    """Accept a Distribution, a fixed spec or spec text and return a Distribution."""
    if isinstance(obj, Distribution):
        return obj
    spec = parse_spec(obj)
    if spec.p:
        raise SpecError(f"{spec} has free parameters; bind them first")
    return spec.bind()
