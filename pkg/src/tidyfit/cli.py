"""Command-line front end.

Exit codes: 0 success, 2 usage or input problems, 3 fit failures,
4 golden-value mismatch in ``reproduce --check``.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import re
import sys
from decimal import Decimal, InvalidOperation
from importlib import resources

from .assoc import pearson_test, spearman_test, tidy_htest
from .errors import ArgumentError, CombineError, FitError, InputError, TidyfitError
from .formula import parse_formula
from .frame import (
    Frame,
    aggregate,
    apply_combine,
    bootstrap_replicates,
    group_by,
    inflate,
    read_csv,
    write_csv,
    write_jsonl,
)
from .kmeans import augment_kmeans, cluster_study, glance_kmeans, kmeans, tidy_kmeans
from .linreg import augment_lm, glance_lm, lm, tidy_lm
from .nls import augment_nls, fit_nls, glance_nls, tidy_nls

EXIT_OK, EXIT_USAGE, EXIT_FIT, EXIT_MISMATCH = 0, 2, 3, 4

MODELS = ("lm", "nls", "kmeans", "spearman", "pearson")
OUTPUTS = ("tidy", "augment", "glance")
TARGETS = ("lm-tidy", "lm-augment", "lm-glance", "lm-grouped", "nls-summary", "kmeans-sim")

MTCARS_FORMULA = "mpg ~ wt + qsec"
NLS_FORMULA = "mpg ~ k/wt + b"


class GoldenMismatch(TidyfitError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ArgumentError(message)


def _workers():
    raw = os.environ.get("TIDYFIT_THREADS")
    if not raw:
        return None
    try:
        n = int(raw)
    except ValueError:
        raise ArgumentError(f"TIDYFIT_THREADS must be an integer, got {raw!r}") from None
    return max(n, 1)


def _list(text):
    return [s.strip() for s in text.split(",") if s.strip()] if text else []


def parse_start(text) -> dict:
    """``"k=1,b=0"`` -> ``{"k": 1.0, "b": 0.0}``."""
    out = {}
    for item in _list(text):
        name, eq, value = item.partition("=")
        name = name.strip()
        if not eq or not name:
            raise ArgumentError(f"bad start assignment {item!r}; expected name=value")
        try:
            out[name] = float(value)
        except ValueError:
            raise ArgumentError(f"start value for {name!r} is not a number: {value!r}") from None
        if not math.isfinite(out[name]):
            raise ArgumentError(f"start value for {name!r} must be finite")
    if not out:
        raise ArgumentError("--start needs at least one name=value")
    return out


def _typed(values):
    for conv in (int, float):
        try:
            return [conv(v) for v in values]
        except ValueError:
            pass
    return list(values)


def parse_grid(items) -> dict:
    """``["sd=.5,1,2", "replication=1:50"]`` -> ordered dict of value lists."""
    grid = {}
    for item in items:
        name, eq, rest = item.partition("=")
        name = name.strip()
        if not eq or not name:
            raise ArgumentError(f"bad grid entry {item!r}; expected name=v1,v2,...")
        if name in grid:
            raise ArgumentError(f"grid entry {name!r} given twice")
        m = re.fullmatch(r"\s*(-?\d+)\s*(?::|\.\.)\s*(-?\d+)\s*", rest)
        if m:
            lo, hi = int(m.group(1)), int(m.group(2))
            step = 1 if hi >= lo else -1
            values = list(range(lo, hi + step, step))
        else:
            values = _typed(_list(rest))
        if not values:
            raise ArgumentError(f"grid entry {name!r} has no values")
        grid[name] = values
    if not grid:
        raise ArgumentError("inflate needs at least one grid entry")
    return grid


_AGG_RE = re.compile(r"^\s*([^=\s]+)\s*=\s*(\w+)\(\s*([^,()]*?)\s*(?:,\s*([^,()]+?)\s*)?\)\s*$")


def parse_agg(spec):
    """``"conf.low=quantile(estimate, 0.025)"`` -> ``("conf.low", "estimate", ("quantile", 0.025))``."""
    m = _AGG_RE.match(spec)
    if not m:
        raise ArgumentError(f"bad summary spec {spec!r}; expected out=fn(column[, p])")
    out, fn, col, arg = m.groups()
    if fn == "quantile":
        if arg is None:
            raise ArgumentError(f"quantile needs a probability: {spec!r}")
        try:
            return out, col, ("quantile", float(arg))
        except ValueError:
            raise ArgumentError(f"quantile probability is not a number: {arg!r}") from None
    if arg is not None:
        raise ArgumentError(f"{fn} takes one column: {spec!r}")
    if fn == "count":
        return out, (col or None), "count"
    if not col:
        raise ArgumentError(f"{fn} needs a column: {spec!r}")
    return out, col, fn


# ---------------------------------------------------------------------------
# fit
# ---------------------------------------------------------------------------


def _validate_fit(a):
    if a.model in ("lm", "nls") and not a.formula:
        raise ArgumentError(f"--model {a.model} needs --formula")
    if a.model == "nls" and not a.start:
        raise ArgumentError("--model nls needs --start")
    if a.model == "kmeans":
        if a.k is None:
            raise ArgumentError("--model kmeans needs --k")
        if not _list(a.columns):
            raise ArgumentError("--model kmeans needs --columns")
    if a.model in ("spearman", "pearson"):
        if not (a.x and a.y):
            raise ArgumentError(f"--model {a.model} needs --x and --y")
        if a.output != "tidy":
            raise ArgumentError(f"--model {a.model} only supports --output tidy")
    if a.model in ("kmeans", "spearman", "pearson") and a.conf_level is not None:
        raise ArgumentError(f"--conf-level does not apply to --model {a.model}")
    if a.conf_level is not None and a.output != "tidy":
        raise ArgumentError("--conf-level only applies to --output tidy")
    if a.boot is not None and a.boot < 1:
        raise ArgumentError("--boot must be at least 1")


def build_fitter(a):
    """The per-frame function for a validated fit request."""
    out = a.output
    if a.model == "lm":
        formula = parse_formula(a.formula)

        def f(d):
            fit = lm(formula, d)
            return {"tidy": lambda: tidy_lm(fit, a.conf_level), "augment": lambda: augment_lm(fit),
                    "glance": lambda: glance_lm(fit)}[out]()
    elif a.model == "nls":
        formula = parse_formula(a.formula, start=parse_start(a.start))
        max_iter = a.max_iter if a.max_iter is not None else 50

        def f(d):
            fit = fit_nls(formula, d, max_iter=max_iter)
            return {"tidy": lambda: tidy_nls(fit, a.conf_level), "augment": lambda: augment_nls(fit, d),
                    "glance": lambda: glance_nls(fit)}[out]()
    elif a.model == "kmeans":
        cols = _list(a.columns)
        max_iter = a.max_iter if a.max_iter is not None else 100

        def f(d):
            fit = kmeans(d, cols, a.k, nstart=a.nstart, max_iter=max_iter, seed=a.seed)
            return {"tidy": lambda: tidy_kmeans(fit), "augment": lambda: augment_kmeans(fit, d),
                    "glance": lambda: glance_kmeans(fit)}[out]()
    else:
        test = spearman_test if a.model == "spearman" else pearson_test

        def f(d):
            return tidy_htest(test(d.numeric(a.x), d.numeric(a.y)))
    return f


def run_fit(a, frame: Frame) -> Frame:
    f = build_fitter(a)
    workers = _workers()
    if a.boot:
        inner = f

        def f(d):
            return apply_combine(bootstrap_replicates(d, a.boot, a.seed), inner, workers=workers)
    keys = _list(a.group_by)
    if keys:
        return apply_combine(group_by(frame, keys), f, workers=None if a.boot else workers)
    return f(frame)


def _read_input(path, rownames=None):
    if path in (None, "-"):
        return read_csv(sys.stdin, rownames=rownames)
    try:
        return read_csv(path, rownames=rownames)
    except OSError as exc:
        raise ArgumentError(f"cannot read {path}: {exc.strerror or exc}") from None


def _emit(frame: Frame, fmt, dest=None):
    dest = dest or sys.stdout
    (write_jsonl if fmt == "jsonl" else write_csv)(frame, dest)


def cmd_fit(a):
    _validate_fit(a)
    if a.input is not None and a.input_flag is not None:
        raise ArgumentError("give the input either positionally or with --input, not both")
    frame = _read_input(a.input if a.input is not None else a.input_flag, a.rownames)
    _emit(run_fit(a, frame), a.format)
    return EXIT_OK


def cmd_summarize(a):
    specs = [parse_agg(s) for s in a.specs]
    if not specs:
        raise ArgumentError("summarize needs at least one out=fn(column) spec")
    frame = _read_input(a.input)
    _emit(aggregate(group_by(frame, _list(a.group_by)), specs), a.format)
    return EXIT_OK


def cmd_inflate(a):
    grid = parse_grid(a.grid)
    frame = _read_input(a.input)
    _emit(inflate(frame, grid).base, a.format)
    return EXIT_OK


# ---------------------------------------------------------------------------
# reproduce
# ---------------------------------------------------------------------------


def bundled_mtcars() -> Frame:
    with resources.files("tidyfit").joinpath("data/mtcars.csv").open("r", encoding="utf-8", newline="") as fh:
        return read_csv(fh, rownames="model")


def bundled_golden() -> dict:
    return json.loads(resources.files("tidyfit").joinpath("data/golden.json").read_text(encoding="utf-8"))


def simulation_centers() -> Frame:
    return Frame({"oracle": [1, 2, 3], "size": [100, 150, 50], "x1": [5.0, 0.0, -3.0], "x2": [-1.0, 1.0, -2.0]})


SIM_GRID = {"sd": [0.5, 1.0, 2.0, 4.0], "replication": list(range(1, 51))}
SIM_KS = range(1, 10)


def reproduce(target, seed=2014, out_dir=None) -> Frame:
    if target == "kmeans-sim":
        glances, centers, assignments = cluster_study(
            simulation_centers(), SIM_GRID, SIM_KS, nstart=5, seed=seed, assignment_ks=[3])
        if out_dir:
            from .kmeans import cluster_purity

            os.makedirs(out_dir, exist_ok=True)
            write_csv(glances, os.path.join(out_dir, "glance.csv"))
            write_csv(centers, os.path.join(out_dir, "centers.csv"))
            write_csv(assignments, os.path.join(out_dir, "assignments_k3.csv"))
            write_csv(cluster_purity(assignments), os.path.join(out_dir, "purity.csv"))
        return glances
    data = bundled_mtcars()
    if target == "lm-tidy":
        return tidy_lm(lm(MTCARS_FORMULA, data), conf_level=0.95)
    if target == "lm-augment":
        return augment_lm(lm(MTCARS_FORMULA, data))
    if target == "lm-glance":
        return glance_lm(lm(MTCARS_FORMULA, data))
    if target == "lm-grouped":
        formula = parse_formula(MTCARS_FORMULA)
        return apply_combine(group_by(data, ["am"]), lambda d: tidy_lm(lm(formula, d), conf_level=0.95))
    if target == "nls-summary":
        fit = fit_nls(NLS_FORMULA, data, start={"k": 1, "b": 0})
        t = tidy_nls(fit)
        n = t.n_rows
        return (t.with_column("sigma", [fit.sigma] * n)
                 .with_column("df.residual", [fit.df_residual] * n)
                 .with_column("iterations", [fit.iterations] * n))
    raise ArgumentError(f"unknown target {target!r}; choose from {', '.join(TARGETS)}")


def _tolerance(printed: str, rel=1e-4):
    """Allowed error: 1e-4 relative, or half a unit in the last printed digit if larger."""
    d = Decimal(printed)
    ulp = Decimal(1).scaleb(d.as_tuple().exponent)
    return max(rel * abs(float(d)), float(ulp) / 2)


def check_against_golden(frame: Frame, golden: dict):
    """Compare ``frame`` to a golden table; returns ``(ok, worst)``.

    ``worst`` describes the cell with the largest error relative to its
    tolerance. Text and integer cells must match exactly.
    """
    keys = golden["key"]
    worst = (0.0, "no cells compared")
    for grow in golden["rows"]:
        if keys:
            match = [i for i in range(frame.n_rows)
                     if all(str(frame.column(k).to_list()[i]) == grow[k] for k in keys)]
            if len(match) != 1:
                where = ", ".join(f"{k}={grow[k]}" for k in keys)
                return False, f"row {where}: found {len(match)} matching rows"
            i = match[0]
            label = ", ".join(f"{k}={grow[k]}" for k in keys)
        else:
            i, label = 0, "row 1"
        for col, expected in grow.items():
            if col in keys:
                continue
            if col not in frame:
                return False, f"{label}: column {col!r} missing"
            c = frame.column(col)
            got = c.to_list()[i]
            if c.kind in ("text", "int", "bool"):
                if str(got) != expected:
                    return False, f"{label}, {col}: got {got!r}, expected {expected}"
                continue
            try:
                tol = _tolerance(expected)
            except InvalidOperation:
                return False, f"{label}, {col}: golden value {expected!r} is not numeric"
            err = abs(float(got) - float(expected))
            score = err / tol if not math.isnan(err) else math.inf
            if score >= worst[0]:
                worst = (score, f"{label}, {col}: got {got!r}, expected {expected} (error {err:.3g}, tolerance {tol:.3g})")
    return worst[0] <= 1.0, worst[1]


def _check_kmeans_sim(frame: Frame):
    expected_cols = ["sd", "replication", "k", "totss", "tot.withinss", "betweenss", "iter"]
    n_expected = len(SIM_KS) * len(SIM_GRID["sd"]) * len(SIM_GRID["replication"])
    if frame.names != expected_cols:
        return False, f"columns {frame.names}, expected {expected_cols}"
    if frame.n_rows != n_expected:
        return False, f"{frame.n_rows} rows, expected {n_expected}"
    return True, f"{n_expected} rows with the expected columns"


def cmd_reproduce(a):
    out = reproduce(a.target, seed=a.seed, out_dir=a.out_dir)
    _emit(out, a.format)
    if a.check:
        if a.target == "kmeans-sim":
            ok, detail = _check_kmeans_sim(out)
        else:
            ok, detail = check_against_golden(out, bundled_golden()[a.target])
        if not ok:
            raise GoldenMismatch(f"{a.target} does not match the golden table; worst cell: {detail}")
        print(f"check passed: {a.target} (worst cell: {detail})", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tidyfit", description="Fit models on CSV data and print tidy tables.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    def fmt(sp):
        sp.add_argument("--format", choices=("csv", "jsonl"), default="csv")

    f = sub.add_parser("fit", help="fit a model (optionally grouped or bootstrapped)")
    f.add_argument("input", nargs="?", help="CSV file, or - for stdin")
    f.add_argument("--input", dest="input_flag", metavar="PATH")
    f.add_argument("--model", choices=MODELS, required=True)
    f.add_argument("--formula")
    f.add_argument("--start", help="nls start values, e.g. k=1,b=0")
    f.add_argument("--k", type=int)
    f.add_argument("--nstart", type=int, default=1)
    f.add_argument("--max-iter", type=int)
    f.add_argument("--columns", help="kmeans columns, comma separated")
    f.add_argument("--x")
    f.add_argument("--y")
    f.add_argument("--group-by", help="comma-separated key columns")
    f.add_argument("--output", choices=OUTPUTS, default="tidy")
    f.add_argument("--conf-level", type=float)
    f.add_argument("--boot", type=int, metavar="B")
    f.add_argument("--seed", type=int, default=2014)
    f.add_argument("--rownames", help="column holding row names")
    fmt(f)
    f.set_defaults(func=cmd_fit)

    s = sub.add_parser("summarize", help="grouped medians and quantiles")
    s.add_argument("specs", nargs="*", metavar="OUT=FN(COLUMN[,P])")
    s.add_argument("--group-by")
    s.add_argument("--input", default="-")
    fmt(s)
    s.set_defaults(func=cmd_summarize)

    i = sub.add_parser("inflate", help="factorial expansion over a parameter grid")
    i.add_argument("grid", nargs="+", metavar="NAME=V1,V2,...")
    i.add_argument("--input", default="-")
    fmt(i)
    i.set_defaults(func=cmd_inflate)

    r = sub.add_parser("reproduce", help="regenerate a reference table")
    r.add_argument("target", choices=TARGETS)
    r.add_argument("--check", action="store_true", help="compare with the bundled golden values")
    r.add_argument("--seed", type=int, default=2014)
    r.add_argument("--out-dir", help="kmeans-sim: also write plot-ready CSVs here")
    fmt(r)
    r.set_defaults(func=cmd_reproduce)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except GoldenMismatch as exc:
        print(f"tidyfit: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except FitError as exc:
        print(f"tidyfit: fit failed: {exc}", file=sys.stderr)
        return EXIT_FIT
    except (InputError, CombineError) as exc:
        print(f"tidyfit: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TidyfitError as exc:
        print(f"tidyfit: {exc}", file=sys.stderr)
        return 1
    except BrokenPipeError:
        return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
