"""Command-line interface: ``wkrige toy-gen | fit | predict | eval | loo-bench``.

Exit status is 0 on success, 1 on invalid input and 2 on numerical
failure.  Errors are reported on stderr as a JSON object.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time

import numpy as np

from . import __version__
from .crossval import (
    candidate_grid,
    default_length_scale_grid,
    evaluate_candidates,
    resolve_threads,
)
from .datasets import make_gaussian_measures
from .estimators import QuantileKriging
from .exceptions import NumericalError, ValidationError, WkrigeError
from .files import (
    Dataset,
    FittedModel,
    load_dataset,
    load_model,
    load_targets,
    write_dataset,
    write_json,
    write_model,
    write_table,
)
from .kriging import SiteSet, assemble_gamma, solve_weights_nonneg, weights_matrix
from .measures import QuantileGrid
from .metrics import evaluate_metrics, q95_index
from .variogram import parse_nu

logger = logging.getLogger("wkrige")

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2


class UsageError(ValidationError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _nu_list(text: str):
    try:
        return tuple(parse_nu(part) for part in text.split(",") if part.strip())
    except (ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _int_list(text: str):
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _sites(X, scale: bool) -> SiteSet:
    return SiteSet.minmax(X) if scale else SiteSet(X)


def _estimator(method, nu_set, ls_grid_size, bins, scale, weighted, nugget, threads, mode="sorted"):
    return QuantileKriging(method=method, nu_set=nu_set, n_length_scales=ls_grid_size,
                           n_bins=bins, ls_weighted=weighted, scale_coords=scale,
                           nugget=nugget, n_threads=threads, mode=mode)


# -- toy-gen ----------------------------------------------------------------

def cmd_toy_gen(args) -> int:
    if args.n < 2:
        raise UsageError("toy-gen: --n must be at least 2")
    X, Y = make_gaussian_measures(args.n, seed=args.seed, grid_size=args.grid_size)
    write_dataset(args.out, X, Y)
    logger.info("wrote %d toy observations to %s", args.n, args.out)
    return EXIT_OK


# -- fit --------------------------------------------------------------------

def fit_dataset(data: Dataset, method: str, nu_set, ls_grid_size: int, bins: int, scale: bool,
                weighted: bool = False, nugget: float = 0.0, threads=None):
    """Fit a model to a dataset; returns ``(FittedModel, report_header, report_rows, comments)``."""
    if data.n < 2:
        raise ValidationError("fitting needs at least 2 observations")
    if np.all(data.Y == data.Y[0]):
        raise ValidationError("zero variance data")
    est = _estimator(method, nu_set, ls_grid_size, bins, scale, weighted, nugget, threads)
    est.fit(data.X, data.Y)
    meta = {"nu_set": list(nu_set), "scale_coords": scale}
    if method == "cv":
        rep = est.cv_report_
        meta.update(ls_grid_size=ls_grid_size, selected_index=rep.best,
                    mse_loo=rep.candidates[rep.best].mse_loo,
                    skipped_candidates=sum(1 for c in rep.candidates if c.diagnostic))
        header = ["index", "length_scale", "nu", "mse_loo", "diagnostic"]
        rows = list(rep.rows())
        comments = [f"cv surface, selected index {rep.best}, sigma2_hat {rep.sigma2_hat!r}"]
    else:
        emp = est.variogram_
        meta.update(bins=bins, ls_objective=est.ls_fit_.objective, weighted=weighted)
        header = ["h", "gamma", "pair_count"]
        rows = list(emp.rows())
        comments = [f"experimental semivariogram, fitted {est.params_}"]
    model = FittedModel(est.sites_, est.params_, data.Y, method, data.fingerprint(), meta)
    return model, header, rows, comments


def cmd_fit(args) -> int:
    data = load_dataset(args.dataset)
    model, header, rows, comments = fit_dataset(
        data, args.method, args.nu_set, args.ls_grid_size, args.bins, args.scale_coords,
        args.ls_weighted, args.nugget, args.threads)
    report = args.report or os.path.splitext(args.out)[0] + ".report.tsv"
    write_table(report, header, rows, comments)
    write_model(args.out, model)
    print(json.dumps({"model": args.out, "report": report, "params": model.params.to_dict()}))
    return EXIT_OK


# -- predict ----------------------------------------------------------------

def predict_targets(model: FittedModel, targets: np.ndarray, mode: str):
    """Predicted quantile rows per target; constrained failures become error strings."""
    if targets.shape[0] == 0:
        return []
    gm = assemble_gamma(model.sites, model.params)
    if mode == "sorted":
        w, _ = weights_matrix(gm, targets)
        pred = w @ model.values
        pred.sort(axis=1)
        return list(pred)
    if mode != "constrained":
        raise ValidationError(f"unknown mode {mode!r}")
    out = []
    for t in targets:
        try:
            out.append(solve_weights_nonneg(gm, t).weights @ model.values)
        except NumericalError as exc:
            out.append(str(exc))
    return out


def cmd_predict(args) -> int:
    model = load_model(args.model)
    targets = load_targets(args.targets, model.sites.dim)
    preds = predict_targets(model, targets, args.mode)
    grid = QuantileGrid(model.grid_size)
    k = q95_index(grid)
    records, failed = [], 0
    for x, p in zip(targets, preds):
        if isinstance(p, str):
            failed += 1
            records.append({"x": x.tolist(), "error": p})
        else:
            records.append({"x": x.tolist(), "quantiles": p.tolist(),
                            "mean": float(np.mean(p)), "q95": float(p[k])})
    write_json(args.out, {"grid_size": model.grid_size, "mode": args.mode,
                          "q95_node": float(grid.nodes[k]), "predictions": records})
    if failed:
        raise NumericalError(f"QP did not converge for {failed} target(s)")
    return EXIT_OK


# -- eval -------------------------------------------------------------------

def _check_grid(model: FittedModel, data: Dataset):
    if model.grid_size != data.grid_size:
        raise ValidationError(
            f"grid mismatch: model grid_size {model.grid_size}, test grid_size {data.grid_size}")
    if model.sites.dim != data.dim:
        raise ValidationError(f"dimension mismatch: model {model.sites.dim}, test {data.dim}")


def _metrics_rows(records):
    return [[r, name, m.rmse_mean, m.rmse_q95, m.rmse_w] for r, name, m in records]


VARIANTS = (
    ("WK_CV", "cv", "sorted"),
    ("WK_LS", "variogram-ls", "sorted"),
    ("P_WK_LS", "variogram-ls", "constrained"),
)


def evaluate_splits(data: Dataset, split: float, repeats: int, seed: int, nu_set,
                    ls_grid_size: int, bins: int, scale: bool, threads=None, variants=VARIANTS):
    """Repeated random train/test splits; yields ``(repeat, variant, MetricsRecord)``."""
    if not 0.0 < split < 1.0:
        raise ValidationError("--split must lie in (0, 1)")
    n_train = int(round(split * data.n))
    if n_train < 2 or n_train >= data.n:
        raise ValidationError(f"split {split} of {data.n} observations leaves an empty side")
    rng = np.random.default_rng(seed)
    out = []
    for r in range(repeats):
        perm = rng.permutation(data.n)
        train, test = data.take(perm[:n_train]), data.take(perm[n_train:])
        fitted = {}
        for name, method, mode in variants:
            if method not in fitted:
                fitted[method] = fit_dataset(train, method, nu_set, ls_grid_size, bins, scale,
                                             threads=threads)[0]
            preds = predict_targets(fitted[method], test.X, mode)
            bad = [p for p in preds if isinstance(p, str)]
            if bad:
                raise NumericalError(bad[0])
            out.append((r, name, evaluate_metrics(np.array(preds), test.Y)))
    return out


def cmd_eval(args) -> int:
    header = ["repeat", "model", "rmse_mean", "rmse_q95", "rmse_w"]
    if args.split is not None:
        if len(args.paths) != 1:
            raise UsageError("eval --split takes exactly one dataset path")
        data = load_dataset(args.paths[0])
        records = evaluate_splits(data, args.split, args.repeats, args.seed, args.nu_set,
                                  args.ls_grid_size, args.bins, args.scale_coords, args.threads)
        k = q95_index(QuantileGrid(data.grid_size))
        comment = f"q95 taken at grid node {float(QuantileGrid(data.grid_size).nodes[k])!r}"
        write_table(args.out or "-", header, _metrics_rows(records), [comment])
        return EXIT_OK
    if len(args.paths) != 2:
        raise UsageError("eval takes MODEL TEST (or DATASET with --split)")
    model = load_model(args.paths[0])
    data = load_dataset(args.paths[1])
    if data.n == 0:
        raise ValidationError("empty test set")
    _check_grid(model, data)
    preds = predict_targets(model, data.X, args.mode)
    bad = [p for p in preds if isinstance(p, str)]
    if bad:
        raise NumericalError(bad[0])
    m = evaluate_metrics(np.array(preds), data.Y)
    doc = m.to_dict()
    doc["mode"] = args.mode
    doc["q95_node"] = float(QuantileGrid(data.grid_size).nodes[q95_index(QuantileGrid(data.grid_size))])
    print(json.dumps(doc))
    if args.out:
        write_json(args.out, doc)
    return EXIT_OK


# -- loo-bench --------------------------------------------------------------

def loo_benchmark(data: Dataset, sizes, ls_grid_size: int, nu_set, scale: bool, threads=None):
    """Time naive and virtual LOO over the full candidate grid for each size.

    Returns ``(table_rows, surface_rows)``; table rows are
    ``(n, t_naive, t_virtual, ratio, max_rel_diff)``.
    """
    table, surface = [], []
    for n in sizes:
        if n < 2 or n > data.n:
            raise ValidationError(f"size {n} outside [2, {data.n}]")
        sub = data.take(np.arange(n))
        sites = _sites(sub.X, scale)
        cands = candidate_grid(default_length_scale_grid(sites, ls_grid_size), nu_set)
        t0 = time.perf_counter()
        mse_v, _ = evaluate_candidates(sites, sub.Y, cands, "virtual", threads)
        t_virtual = time.perf_counter() - t0
        t0 = time.perf_counter()
        mse_n, _ = evaluate_candidates(sites, sub.Y, cands, "naive", threads)
        t_naive = time.perf_counter() - t0
        both = np.isfinite(mse_v) & np.isfinite(mse_n)
        rel = np.abs(mse_v[both] - mse_n[both]) / (1.0 + mse_n[both])
        max_rel = float(rel.max()) if rel.size else float("nan")
        table.append((n, t_naive, t_virtual, t_naive / t_virtual, max_rel))
        surface.extend((n, l, nu, float(a), float(b)) for (l, nu), a, b in zip(cands, mse_n, mse_v))
        logger.info("n=%d naive %.2fs virtual %.2fs", n, t_naive, t_virtual)
    return table, surface


def cmd_loo_bench(args) -> int:
    biggest = max(args.sizes)
    if args.dataset:
        data = load_dataset(args.dataset)
        if data.n < biggest:
            raise ValidationError(f"dataset has {data.n} observations, need {biggest}")
    else:
        X, Y = make_gaussian_measures(biggest, seed=args.seed, grid_size=args.grid_size)
        data = Dataset(X, Y, args.grid_size)
    table, surface = loo_benchmark(data, args.sizes, args.ls_grid_size, args.nu_set,
                                   args.scale_coords, args.threads)
    write_table(args.out or "-", ["n", "t_naive", "t_virtual", "ratio", "max_rel_diff"], table)
    if args.surface:
        write_table(args.surface, ["n", "length_scale", "nu", "mse_naive", "mse_virtual"], surface)
    return EXIT_OK


# -- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--threads", type=int, default=None,
                        help="worker threads (default: $WKRIGE_THREADS or 1)")
    common.add_argument("-v", "--verbose", action="store_true")

    grids = _Parser(add_help=False)
    grids.add_argument("--nu-set", type=_nu_list, default=(0.5, 1.5, 2.5),
                       help="comma-separated smoothness values, e.g. 1/2,3/2,5/2")
    grids.add_argument("--ls-grid-size", type=int, default=100)
    grids.add_argument("--bins", type=int, default=15)
    grids.add_argument("--no-scale-coords", dest="scale_coords", action="store_false",
                       help="use raw coordinates instead of min-max scaling")

    parser = _Parser(prog="wkrige", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("toy-gen", parents=[common], help="generate the Gaussian toy dataset")
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grid-size", type=int, default=100)
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_toy_gen)

    p = sub.add_parser("fit", parents=[common, grids], help="fit a model to a dataset")
    p.add_argument("dataset")
    p.add_argument("--method", choices=["cv", "variogram-ls"], default="cv")
    p.add_argument("--ls-weighted", action="store_true",
                   help="weight variogram least squares by pair counts")
    p.add_argument("--nugget", type=float, default=0.0)
    p.add_argument("-o", "--out", default="model.json")
    p.add_argument("--report", default=None, help="report table (default: <out>.report.tsv)")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", parents=[common], help="predict measures at target sites")
    p.add_argument("model")
    p.add_argument("targets")
    p.add_argument("--mode", choices=["sorted", "constrained"], default="sorted")
    p.add_argument("-o", "--out", default="-")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", parents=[common, grids], help="evaluate RMSE metrics")
    p.add_argument("paths", nargs="+", metavar="PATH", help="MODEL TEST, or DATASET with --split")
    p.add_argument("--mode", choices=["sorted", "constrained"], default="sorted")
    p.add_argument("--split", type=float, default=None)
    p.add_argument("--repeats", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("loo-bench", parents=[common, grids], help="naive vs virtual LOO timing")
    p.add_argument("--dataset", default=None)
    p.add_argument("--sizes", type=_int_list, default=[50, 100, 200, 400])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grid-size", type=int, default=100)
    p.add_argument("-o", "--out", default=None)
    p.add_argument("--surface", default=None, help="write per-candidate MSE table here")
    p.set_defaults(func=cmd_loo_bench)
    return parser


def _report(exc: BaseException, code: int) -> int:
    doc = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    problems = getattr(exc, "problems", None)
    if problems:
        doc["problems"] = problems
    print(json.dumps(doc), file=sys.stderr)
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        args.threads = resolve_threads(args.threads)
        return args.func(args)
    except ValidationError as exc:
        return _report(exc, EXIT_INVALID)
    except (NumericalError, ArithmeticError, np.linalg.LinAlgError) as exc:
        return _report(exc, EXIT_NUMERICAL)
    except (OSError, WkrigeError) as exc:
        return _report(exc, EXIT_INVALID)


if __name__ == "__main__":
    sys.exit(main())
