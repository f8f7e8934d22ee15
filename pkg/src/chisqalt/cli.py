"""Command-line interface: ``chisqalt <command> [flags]``.

Exit status is 0 on success (the test decision lives in the report), 2 on
configuration errors and 1 on runtime failures.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .binning import BinnedData, BinningError
from .distributions import SpecError, as_distribution, parse_spec
from .estimation import EstimationError
from .rgtest import rg_test, rg_test_poisson, rg_test_prebinned
from .rng import DEFAULT_SEED, stream
from .selection import DEFAULT_KAPPAS, SelectionError, SelectionGrid, select_scheme
from .statistics import ALL_KINDS, StatisticKind
from . import powerlab


class ConfigError(ValueError):
    """Bad flags or inputs; reported with exit status 2."""


class DataError(ValueError):
    pass


# ---------------------------------------------------------------- data input

def read_data(path):
    """Raw observations (one float per line) or a ``lower,upper,count`` binned CSV."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None
    lines = text.splitlines()
    first = next((ln.strip() for ln in lines if ln.strip()), None)
    if first is None:
        raise DataError(f"{path} is empty")
    if first.replace(" ", "").lower() == "lower,upper,count":
        try:
            return BinnedData.from_csv(text)
        except BinningError as exc:
            raise DataError(f"{path}: {exc}") from None
    values = []
    for lineno, line in enumerate(lines, start=1):
        s = line.strip()
        if not s:
            continue
        try:
            v = float(s)
        except ValueError:
            raise DataError(f"{path}, line {lineno}: cannot parse {s!r} as a number") from None
        if not math.isfinite(v):
            raise DataError(f"{path}, line {lineno}: value must be finite")
        values.append(v)
    return np.array(values)


# ---------------------------------------------------------------- SVG output

_PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#9467bd", "#8c564b", "#e377c2",
            "#7f7f7f", "#bcbd22", "#17becf", "#d62728")
_HIGHLIGHT = "#d62728"
_W, _H = 720, 440
_L, _R, _T, _B = 60, 190, 40, 50


def _series_of(table):
    if isinstance(table, dict):
        return {str(k): [(float(x), float(y)) if not isinstance(x, str) else (x, float(y)) for x, y in v]
                for k, v in table.items()}
    alphas = {r.alpha for r in table.rows}
    out = {}
    for r in table.rows:
        key = r.method if len(alphas) == 1 else f"{r.method} alpha={r.alpha:g}"
        out.setdefault(key, []).append((r.param, r.power))
    return out


def _num(v) -> str:
    return f"{v:.2f}"


def render_svg(table, style: str = "line", title: str = "", y_label: str = "power") -> str:
    """Deterministic SVG chart of a power table (or a ``{label: [(x, y), ...]}`` mapping).

    The legend lists series by decreasing mean value; the RG series is
    drawn thicker, in red, with dot markers.
    """
    series = _series_of(table)
    if not series or not any(series.values()):
        raise ValueError("nothing to plot")
    if style not in ("line", "bar"):
        raise ValueError("style must be 'line' or 'bar'")
    means = {k: float(np.mean([y for _, y in v])) for k, v in series.items()}
    order = sorted(series, key=lambda k: (-round(means[k], 12), k))
    ys = [y for v in series.values() for _, y in v]
    y_max = 1.0 if isinstance(table, powerlab.PowerTable) else max(max(ys), 1e-12) * 1.05
    y_min = 0.0
    categorical = any(isinstance(x, str) for v in series.values() for x, _ in v) or style == "bar"
    if categorical:
        cats = []
        for k in series:
            for x, _ in series[k]:
                if x not in cats:
                    cats.append(x)
        xpos = {c: i for i, c in enumerate(cats)}
        x_lo, x_hi = -0.5, len(cats) - 0.5
    else:
        xs = [x for v in series.values() for x, _ in v]
        x_lo, x_hi = min(xs), max(xs)
        if x_hi == x_lo:
            x_lo, x_hi = x_lo - 1.0, x_hi + 1.0
    pw, ph = _W - _L - _R, _H - _T - _B

    def sx(x):
        x = xpos[x] if categorical else x
        return _L + (x - x_lo) / (x_hi - x_lo) * pw

    def sy(y):
        return _T + ph - (y - y_min) / (y_max - y_min) * ph

    colors = {}
    others = [k for k in order if not k.startswith("RG")]
    for i, k in enumerate(others):
        colors[k] = _PALETTE[i % (len(_PALETTE) - 1)]
    for k in order:
        if k.startswith("RG"):
            colors[k] = _HIGHLIGHT
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
           f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="12">',
           f'<rect x="0" y="0" width="{_W}" height="{_H}" fill="white"/>']
    if title:
        out.append(f'<text x="{_W / 2:.2f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>')
    out.append(f'<rect x="{_L}" y="{_T}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
    for i in range(6):
        y = y_min + (y_max - y_min) * i / 5
        out.append(f'<line x1="{_L - 4}" y1="{_num(sy(y))}" x2="{_L}" y2="{_num(sy(y))}" stroke="black"/>')
        out.append(f'<text x="{_L - 6}" y="{_num(sy(y) + 4)}" text-anchor="end">{y:.2f}</text>')
    if categorical:
        ticks = [(c, str(c)) for c in cats]
    else:
        ticks = [(x_lo + (x_hi - x_lo) * i / 5, f"{x_lo + (x_hi - x_lo) * i / 5:g}") for i in range(6)]
    for x, label in ticks:
        out.append(f'<line x1="{_num(sx(x))}" y1="{_T + ph}" x2="{_num(sx(x))}" y2="{_T + ph + 4}" stroke="black"/>')
        out.append(f'<text x="{_num(sx(x))}" y="{_T + ph + 18}" text-anchor="middle">{escape(label)}</text>')
    out.append(f'<text x="16" y="{_T + ph / 2:.2f}" transform="rotate(-90 16 {_T + ph / 2:.2f})" '
               f'text-anchor="middle">{escape(y_label)}</text>')
    if style == "bar":
        width = 0.8 / len(order)
        for j, k in enumerate(order):
            for x, y in series[k]:
                left = _L + (xpos[x] - 0.4 + j * width - x_lo) / (x_hi - x_lo) * pw
                out.append(f'<rect x="{_num(left)}" y="{_num(sy(y))}" width="{_num(width / (x_hi - x_lo) * pw)}" '
                           f'height="{_num(sy(0.0) - sy(y))}" fill="{colors[k]}"/>')
    else:
        for k in reversed(order):
            rg = k.startswith("RG")
            pts = " ".join(f"{_num(sx(x))},{_num(sy(y))}" for x, y in series[k])
            out.append(f'<polyline points="{pts}" fill="none" stroke="{colors[k]}" '
                       f'stroke-width="{3 if rg else 1.5}"/>')
            for x, y in series[k]:
                r = 3.5 if rg else 2
                out.append(f'<circle cx="{_num(sx(x))}" cy="{_num(sy(y))}" r="{r}" fill="{colors[k]}"/>')
    for i, k in enumerate(order):
        y = _T + 10 + 18 * i
        x0 = _W - _R + 15
        weight = ' font-weight="bold"' if k.startswith("RG") else ""
        out.append(f'<line x1="{x0}" y1="{y}" x2="{x0 + 20}" y2="{y}" stroke="{colors[k]}" '
                   f'stroke-width="{3 if k.startswith("RG") else 1.5}"/>')
        out.append(f'<text x="{x0 + 26}" y="{y + 4}"{weight}>{escape(k)} ({100 * means[k]:.1f}%)</text>'
                   if isinstance(table, powerlab.PowerTable) else
                   f'<text x="{x0 + 26}" y="{y + 4}"{weight}>{escape(k)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------- argument parsing

def _int_list(text):
    out = []
    try:
        for part in text.split(","):
            part = part.strip()
            if ":" in part:
                lo, hi = part.split(":")
                out.extend(range(int(lo), int(hi) + 1))
            elif part:
                out.append(int(part))
    except ValueError:
        raise ConfigError(f"bad bin-count list {text!r}") from None
    if not out:
        raise ConfigError("empty --grid-k")
    return out


def _float_list(text):
    try:
        return [float(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise ConfigError(f"bad number list {text!r}") from None


def _grid(args, n, p, kinds_default=ALL_KINDS):
    if not (args.grid_k or args.grid_kappa or args.kinds):
        return None
    base = SelectionGrid.default(n, p)
    k_values = _int_list(args.grid_k) if args.grid_k else base.k_values
    kappas = _float_list(args.grid_kappa) if args.grid_kappa else list(DEFAULT_KAPPAS)
    try:
        kinds = [StatisticKind.parse(k) for k in args.kinds.split(",")] if args.kinds else list(kinds_default)
        return SelectionGrid(k_values, kappas, kinds)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _require(args, *names):
    for name in names:
        if getattr(args, name) is None:
            raise ConfigError(f"--{name.replace('_', '-')} is required for '{args.command}'")


def _emit(text: str, out):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _sibling_svg(out, target):
    return Path(out).with_suffix(".svg") if out else Path(f"{target}.svg")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chisqalt", description="Chi-square goodness-of-fit tests "
                                     "tuned to a known alternative, with competitor tests and power studies.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--null", help="null distribution or family, e.g. 'normal(?,?)'")
        p.add_argument("--alt", help="alternative distribution, e.g. 't(5)'")
        p.add_argument("--data", help="data file (one value per line, or a lower,upper,count CSV)")
        p.add_argument("--n", type=int, help="sample size")
        p.add_argument("--lambda", dest="lam", type=float, help="Poisson mean of the sample size")
        p.add_argument("--alpha", type=float, default=0.05)
        p.add_argument("--B", type=int, default=2000, help="Monte Carlo replications")
        p.add_argument("--B-inner", dest="B_inner", type=int, default=powerlab.DEFAULT_B_INNER,
                       help="bootstrap size for EDF tests")
        p.add_argument("--seed", type=int, default=DEFAULT_SEED)
        p.add_argument("--grid-k", help="bin counts, e.g. '2:12' or '2,3,5'")
        p.add_argument("--grid-kappa", help="kappa values, e.g. '0,0.5,1'")
        p.add_argument("--kinds", help="statistics, e.g. 'Pearson,G2'")
        p.add_argument("--methods", help="power-study methods, comma separated")
        p.add_argument("--out", help="output path (default stdout)")
        p.add_argument("--svg", help="where 'reproduce' writes its chart")
        p.add_argument("--format", choices=("json", "csv", "svg"))

    for name, helptext in (("test", "run the RG test on data"),
                           ("test-binned", "run the RG test on lower,upper,count data"),
                           ("select", "print the merit grid as CSV"),
                           ("power", "estimate power of several methods"),
                           ("type1", "estimate RG type-I error rates"),
                           ("sample", "draw a sample, one value per line")):
        common(sub.add_parser(name, help=helptext))
    rep = sub.add_parser("reproduce", help="rerun a stored study")
    rep.add_argument("target", choices=powerlab.STUDY_NAMES)
    common(rep)
    return parser


# ---------------------------------------------------------------- commands

def _cmd_test(args):
    _require(args, "null", "alt", "data")
    null = parse_spec(args.null)
    alt = as_distribution(args.alt)
    data = read_data(args.data)
    if isinstance(data, BinnedData):
        return _binned_report(args, data, null, alt)
    if args.lam is not None:
        grid = _grid(args, max(int(round(args.lam)), 1), null.p)
        report = rg_test_poisson(data, args.lam, null, alt, args.alpha, grid)
    else:
        grid = _grid(args, len(data), null.p)
        report = rg_test(data, null, alt, args.alpha, grid)
    _emit(report.to_json() + "\n", args.out)


def _binned_report(args, data, null, alt):
    grid = _grid(args, data.n, null.p)
    report = rg_test_prebinned(data, null, alt, args.alpha, grid)
    _emit(report.to_json() + "\n", args.out)


def _cmd_test_binned(args):
    _require(args, "null", "alt", "data")
    data = read_data(args.data)
    if not isinstance(data, BinnedData):
        raise ConfigError(f"{args.data} has no lower,upper,count header")
    _binned_report(args, data, parse_spec(args.null), as_distribution(args.alt))


def _cmd_select(args):
    _require(args, "null", "alt", "n")
    null = parse_spec(args.null)
    choice = select_scheme(null, as_distribution(args.alt), args.n, _grid(args, args.n, null.p))
    _emit(choice.report_csv(), args.out)


def _methods(args):
    return args.methods.split(",") if args.methods else list(powerlab.METHODS)


def _study(*a, **kw):
    try:
        return powerlab.StudySpec(*a, **kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _cmd_power(args):
    _require(args, "null", "alt")
    if args.n is None and args.lam is None:
        raise ConfigError("'power' needs --n or --lambda")
    study = _study("power", args.null, [(args.alt, args.alt)], _methods(args),
                   n=args.n or 0, alpha=args.alpha, B=args.B, seed=args.seed,
                   B_inner=args.B_inner, lam=args.lam)
    table = powerlab.power_curve(study)
    _emit(render_svg(table) if args.format == "svg" else table.to_csv(), args.out)


def _cmd_type1(args):
    _require(args, "null")
    null = parse_spec(args.null)
    truth = args.alt or args.null
    if null.p and not args.alt:
        raise ConfigError("a composite null needs --alt naming the distribution that generates the data")
    study = _study(args.null, args.null, [(args.null, truth)], ["RG"], n=args.n or 1000,
                   B=args.B, seed=args.seed, lam=args.lam)
    alphas = (args.alpha,) if args.alpha != 0.05 else powerlab.TYPE1_ALPHAS
    table = powerlab.type1_table([study], alphas, study="type1")
    _emit(render_svg(table, "bar") if args.format == "svg" else table.to_csv(), args.out)


def _cmd_sample(args):
    spec = args.alt or args.null
    if spec is None:
        raise ConfigError("'sample' needs --alt (or --null) naming a distribution")
    _require(args, "n")
    x = as_distribution(spec).sample(args.n, stream(args.seed, "sample"))
    _emit("".join(f"{v!r}\n" for v in np.atleast_1d(x).tolist()), args.out)


def _progress(param):
    print(f"  done: {param}", file=sys.stderr, flush=True)


def _cmd_reproduce(args):
    target = args.target
    n = args.n or 1000
    style, title, y_label = "line", target, "power"
    series = None
    if target == "table1":
        table = powerlab.type1_table(powerlab.table1_studies(args.B, n, args.seed))
        style, title = "bar", "RG type-I error by null"
        csv_text = table.to_csv()
    elif target == "fig1":
        table = powerlab.fig1_table(args.B, seed=args.seed)
        title = "uniform vs linear(0.2): power by number of bins"
        csv_text = table.to_csv()
    elif target == "fig2":
        choice = powerlab.fig2_choice()
        csv_text = choice.report_csv()
        series = {}
        for e in choice.grid_report:
            if e.admissible:
                series.setdefault(f"kappa={e.kappa:g}", []).append((e.k, e.merit))
        title, y_label = "merit by bin count, linear(-0.5) vs truncated exp(1)", "merit"
    elif target == "fig3":
        table = powerlab.fig3_table(args.B, seed=args.seed)
        title = "power by bin count, linear(-0.5) vs truncated exp(1)"
        csv_text = table.to_csv()
    elif target == "mixture":
        table = powerlab.mixture_demo(args.B, n, args.alpha, seed=args.seed)
        style, title = "bar", "normal mixture: type-I error by estimator"
        csv_text = table.to_csv()
    else:
        if args.B >= 10000:
            print("warning: full-scale replication counts take many hours", file=sys.stderr)
        study = powerlab.figure_study(target, args.B, n, args.seed, args.B_inner,
                                      args.methods.split(",") if args.methods else None, args.lam)
        table = powerlab.power_curve(study, progress=_progress)
        title = f"{target}: power by {study.param_name}"
        csv_text = table.to_csv()
        for m, p in sorted(table.mean_power().items(), key=lambda kv: -kv[1]):
            print(f"mean power {m}: {100 * p:.1f}%", file=sys.stderr)
    svg = render_svg(series if series is not None else table, style, title, y_label)
    if args.format == "svg":
        _emit(svg, args.out)
        return
    _emit(csv_text, args.out)
    _sibling = Path(args.svg) if args.svg else _sibling_svg(args.out, target)
    _sibling.write_text(svg)


COMMANDS = {
    "test": _cmd_test,
    "test-binned": _cmd_test_binned,
    "select": _cmd_select,
    "power": _cmd_power,
    "type1": _cmd_type1,
    "sample": _cmd_sample,
    "reproduce": _cmd_reproduce,
}


def _validate(args):
    if not 0.0 < args.alpha < 1.0:
        raise ConfigError("--alpha must lie in (0, 1)")
    if args.B < 1:
        raise ConfigError("--B must be positive")
    if args.n is not None and args.n < 1:
        raise ConfigError("--n must be positive")
    if args.lam is not None and not args.lam > 0:
        raise ConfigError("--lambda must be positive")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        _validate(args)
        COMMANDS[args.command](args)
    except (ConfigError, SpecError, DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (EstimationError, SelectionError, BinningError, ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
