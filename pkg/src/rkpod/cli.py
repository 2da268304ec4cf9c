"""Command-line entry point: ``rkpod {generate,fit,tune,bench,eval}``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import csvio, experiment, methods, metrics, regkpod, tuning
from .initialization import InitStrategy
from .kmeans_core import InitializationError
from .maskedmat import StructureError


def _grid(text: str):
    if text == "default":
        return tuning.default_grid()
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad grid {text!r}: expected 'default' or comma-separated numbers")
    return np.asarray(vals)


def _add_data(p):
    p.add_argument("data", help="values CSV; missing cells hold the NA token")
    p.add_argument("--mask", help="optional 0/1 mask CSV of the same shape")
    p.add_argument("--na-token", default=csvio.NA_TOKEN)
    p.add_argument("--header", choices=("auto", "yes", "no"), default="auto")
    p.add_argument("--delimiter", default=",")


def _add_fit_opts(p, method_default="rkpod-gl"):
    p.add_argument("--method", default=method_default, choices=methods.METHODS + ("rkpod",))
    p.add_argument("--penalty", choices=("l0", "gl"), help="penalty when --method rkpod")
    p.add_argument("-k", "--k", type=int, default=4)
    p.add_argument("--gl-variant", choices=("ridge", "quadratic"), default="ridge")
    p.add_argument("--weights", choices=("adaptive", "uniform"), default="adaptive")
    p.add_argument("--init", choices=("comp", "impt", "sparse"), default="impt")
    p.add_argument("--restarts", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument(
        "--lambda-scale",
        choices=("raw", "per_sample"),
        help="raw penalties, or per-sample values multiplied by n (default: raw for fit, per_sample for tune)",
    )
    p.add_argument("--out", default=".")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rkpod", description="Sparse k-means for data with missing entries.")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write synthetic datasets from an experiment config")
    g.add_argument("--config", required=True)
    g.add_argument("--seed", type=int, help="override the master seed")
    g.add_argument("--na-token", default=csvio.NA_TOKEN)
    g.add_argument("--out", required=True)

    f = sub.add_parser("fit", help="fit one method to a CSV dataset")
    _add_data(f)
    _add_fit_opts(f)
    f.add_argument("--lambda", dest="lam", type=float, default=0.0)
    f.add_argument(
        "--check-prop21",
        action="store_true",
        help="run the fit to a center-level fixed point, then verify the per-feature sparsity conditions",
    )

    t = sub.add_parser("tune", help="select lambda over a grid")
    _add_data(t)
    _add_fit_opts(t)
    t.add_argument("--criterion", choices=("bic", "instability", "both"), default="instability")
    t.add_argument("--grid", type=_grid, default="default")
    t.add_argument("--splits", type=int, default=tuning.DEFAULT_SPLITS, help="instability repetitions B")
    t.add_argument("--split-scheme", choices=("tripartite", "bootstrap"), default="tripartite")
    t.add_argument("--arm-restarts", type=int, help="restarts per instability training fit")
    t.add_argument("--workers", type=int, default=1)

    b = sub.add_parser("bench", help="run a simulation grid")
    b.add_argument("--config", required=True)
    b.add_argument("--seed", type=int, help="override the master seed")
    b.add_argument("--workers", type=int, default=1)
    b.add_argument("--out", required=True)

    e = sub.add_parser("eval", help="score estimated centers and labels")
    e.add_argument("--centers", required=True)
    e.add_argument("--truth", required=True, help="true centers CSV")
    e.add_argument("--membership")
    e.add_argument("--labels", help="true labels for --membership")
    e.add_argument("--validation", help="complete validation values CSV")
    e.add_argument("--validation-labels")
    e.add_argument("--matching", action="store_true", help="one-to-one center matching for MSE")
    e.add_argument("--out", help="append the report to this CSV")
    return ap


def _method(args):
    if args.method != "rkpod":
        return args.method
    if not args.penalty:
        raise SystemExit("--method rkpod needs --penalty {l0,gl}")
    return f"rkpod-{args.penalty}"


def _opts(args) -> methods.FitOptions:
    return methods.FitOptions(
        k=args.k,
        init=InitStrategy(args.init, args.restarts),
        weights=args.weights,
        gl_variant=args.gl_variant,
    )


def _load(args):
    header = {"auto": None, "yes": True, "no": False}[args.header]
    return csvio.read_matrix(args.data, args.na_token, header, args.delimiter, args.mask)


def cmd_generate(args):
    cfg = experiment.ExperimentConfig.load(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    files = experiment.write_generate(cfg, args.out, args.na_token)
    print(f"wrote {len(files)} files to {args.out}")


def cmd_fit(args):
    m = _load(args)
    method = _method(args)
    opts = _opts(args)
    lam = tuning.raw_lambda(args.lam, m.n, args.lambda_scale or "raw")
    fit = methods.fit_method(method, m, opts, args.seed, lam)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    diag = {
        "method": method,
        "lambda": repr(lam),
        "restart": fit.diagnostics.get("restart", ""),
        "seed": args.seed,
    }
    if args.check_prop21:
        if not method.startswith("rkpod"):
            raise SystemExit("--check-prop21 applies to rkpod methods only")
        spec = regkpod.PenaltySpec(
            method.split("-")[1], lam, fit.diagnostics.get("weights"), opts.gl_variant
        )
        fit = regkpod.refine(m, fit, spec)
        report = regkpod.prop21_check(m, fit, spec)
        csvio.write_records(
            out / "prop21.csv",
            [
                {
                    "feature": r.j,
                    "is_zero": int(r.is_zero),
                    "threshold_lhs": r.threshold_lhs,
                    "threshold_rhs": r.threshold_rhs,
                    "condition_holds": int(r.condition_holds),
                    "value_check_maxerr": r.value_check_maxerr,
                    "flags": ";".join(r.flags),
                }
                for r in report.records
            ],
        )
        diag["prop21_all_hold"] = report.all_hold
        diag["prop21_max_value_error"] = repr(report.max_value_error)
    csvio.write_dense(out / "centers.csv", fit.centers)
    csvio.write_vector(out / "membership.csv", fit.membership)
    csvio.write_vector(out / "loss_trace.csv", np.asarray(fit.loss_trace, float), name="loss")
    diag.update(
        loss=repr(fit.loss),
        active_features=fit.active_features.size,
        active_feature_indices=" ".join(map(str, fit.active_features)),
        converged=fit.converged,
        outer_iters=fit.outer_iters,
        inner_iters_total=fit.inner_iters_total,
    )
    csvio.write_keyvalue(out / "diagnostics.txt", diag)
    print(f"{method}: loss {fit.loss:.6g}, {fit.active_features.size} active features, converged={fit.converged}")
    if args.check_prop21:
        print(f"fixed-point conditions hold: {diag['prop21_all_hold']}")


def cmd_tune(args):
    m = _load(args)
    method = _method(args)
    if not method.startswith("rkpod"):
        raise SystemExit("tune applies to rkpod methods")
    opts = _opts(args)
    arm = opts.with_restarts(args.arm_restarts) if args.arm_restarts else opts
    scale = args.lambda_scale or "per_sample"
    grid = tuning.default_grid() if isinstance(args.grid, str) else args.grid
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    crits = ("bic", "instability") if args.criterion == "both" else (args.criterion,)
    chosen = {}
    for crit in crits:
        res = tuning.select_lambda(
            m, method, grid, crit, opts, args.seed, args.splits, args.split_scheme, scale, arm, args.workers
        )
        res.write_csv(out / f"tuning_{crit}.csv")
        chosen[f"chosen_lambda.{crit}"] = repr(res.chosen_lambda)
        chosen[f"chosen_active_features.{crit}"] = res.per_lambda_fits[res.chosen_index]["active_features"]
        print(f"{crit}: lambda={res.chosen_lambda:.6g} ({scale}), "
              f"{chosen[f'chosen_active_features.{crit}']} active features")
    chosen["lambda_scale"] = scale
    csvio.write_keyvalue(out / "tuning.txt", chosen)


def cmd_bench(args):
    cfg = experiment.ExperimentConfig.load(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    rows, summary = experiment.write_bench(cfg, args.out, args.workers)
    bad = sum(r["status"] != "ok" for r in rows)
    print(f"{len(rows)} result rows ({bad} failed), {len(summary)} summary rows in {args.out}")


def cmd_eval(args):
    est = np.loadtxt(args.centers, delimiter=",", ndmin=2)
    truth = np.loadtxt(args.truth, delimiter=",", ndmin=2)
    row = {"mse": metrics.mse_centers(est, truth, args.matching)}
    if args.membership:
        if not args.labels:
            raise SystemExit("--membership needs --labels")
        row["cer"] = metrics.cer(csvio.read_vector(args.membership), csvio.read_vector(args.labels))
    if args.validation:
        if not args.validation_labels:
            raise SystemExit("--validation needs --validation-labels")
        vals = np.loadtxt(args.validation, delimiter=",", ndmin=2)
        row["predictive_cer"] = metrics.predictive_cer(est, vals, csvio.read_vector(args.validation_labels))
    row["active_features"] = int(np.count_nonzero(np.linalg.norm(est, axis=0) > 0))
    for k, v in row.items():
        print(f"{k}: {v:.6g}" if isinstance(v, float) else f"{k}: {v}")
    if args.out:
        path = Path(args.out)
        records = csvio.read_records(path) if path.exists() else []
        csvio.write_records(path, records + [row], list(row))


COMMANDS = {"generate": cmd_generate, "fit": cmd_fit, "tune": cmd_tune, "bench": cmd_bench, "eval": cmd_eval}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except (csvio.ParseError, StructureError, InitializationError, ValueError, OSError) as exc:
        print(f"rkpod {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
