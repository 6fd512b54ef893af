"""Command-line interface: ``localcal {calibrate,diagnose,support,benchmark,gen-moons,gen-glyphs}``."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .calib_global import default_global
from .dataio import (SplitSpec, load_dataset_csv, load_predictions_csv, make_glyphs, make_moons,
                     rotate90, save_dataset_csv, save_predictions_csv, split)
from .errors import InvalidArgumentError, NumericalError, ParseError, ValidationError
from .experiment import (ALL_CALIBRATORS, REFERENCE_MODELS, UNCALIBRATED, derive_seed,
                         fit_reference, resolve_global, run_calibrators, run_trial, summarize)
from .hh import DEFAULT_RADIUS, HiddenHeterogeneity
from .metrics import accuracy, brier
from .simcalib import (SupportReport, build_similarity_model, calibration_support,
                       support_histogram, write_support_histogram)
from .trees import BACKEND

SCHEMA_VERSION = 1
MOONS_NOISE = 0.3
GLYPHS_NOISE = 0.2
DEFAULT_CAL_SIZES = (50, 100, 200, 500, 1000, 1500, 2000, 2500, 3000)
# "global" stands for Platt (K = 2) or temperature scaling (K > 2)
BENCH_CALIBRATORS = ("global", "hist", "isotonic", "sba10", "swc", "swc-hh")


class UsageError(Exception):
    pass


# ------------------------------------------------------------------ helpers

def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _config_echo(args):
    return {k: v for k, v in sorted(vars(args).items()) if k != "func"}


def _provenance(args):
    return {"version": __version__, "kernel_backend": BACKEND, "seed": args.seed,
            "config": _config_echo(args)}


def _load_data(args):
    sources = [s for s in ("data", "moons", "glyphs") if getattr(args, s, None) is not None]
    if len(sources) != 1:
        raise UsageError("give exactly one dataset source: --data, --moons or --glyphs")
    if args.data is not None:
        return load_dataset_csv(args.data, label_column=args.label_column)
    if args.moons is not None:
        return make_moons(args.moons, _noise(args, MOONS_NOISE), seed=args.seed)
    return make_glyphs(args.glyphs, side=args.side, noise=_noise(args, GLYPHS_NOISE),
                       upright=args.upright, seed=args.seed)


def _noise(args, default):
    return default if args.noise is None else args.noise


def _single_model(args):
    models = args.model or []
    if bool(models) == bool(args.preds):
        raise UsageError("give exactly one model source: --model or --preds")
    if len(models) > 1:
        raise UsageError("this command takes a single --model")
    return models[0] if models else None


def _prepare(args):
    """Dataset, split and predictions for the single-model commands.

    Returns ``(test, cal, p_test, p_cal, model)``; ``model`` is None for
    external predictions.
    """
    ds = _load_data(args)
    model_name = _single_model(args)
    n_train = 0 if args.preds else args.n_train
    n_cal = args.n_cal if args.n_cal is not None else ds.n_items - n_train - args.n_test
    train, test, cal = split(ds, SplitSpec(n_train, args.n_test, n_cal,
                                           derive_seed(args.seed, "split")))
    if test is None or cal is None:
        raise UsageError("test and calibration sets must be nonempty")
    if args.preds:
        preds = load_predictions_csv(args.preds)
        if preds.n_classes != ds.n_classes:
            raise ValidationError(
                f"predictions have {preds.n_classes} classes but the data has {ds.n_classes}")
        return test, cal, preds.aligned(test.ids), preds.aligned(cal.ids), None
    model = fit_reference(model_name, train, derive_seed(args.seed, "model", model_name))
    return (test, cal, model.predict_proba(test.features), model.predict_proba(cal.features),
            model)


def _calibrator_list(args, K, default=("swc",)):
    names = args.calibrator or [default_global(K) if c == "global" else c for c in default]
    out = []
    for c in names:
        if c in ("platt", "temp"):
            c = resolve_global(c, K, args.global_calibrator)
        if c not in out:
            out.append(c)
    return out


def _out_dir(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ----------------------------------------------------------------- commands

def cmd_calibrate(args):
    test, cal, p_test, p_cal, model = _prepare(args)
    out = _out_dir(args)
    names = _calibrator_list(args, test.n_classes)
    outputs, extras = run_calibrators(names, cal, p_cal, test, p_test,
                                      seed=derive_seed(args.seed, "calibrate"),
                                      radius=args.radius, n_bins=args.bins)
    sim = extras.get("sim_model")
    if sim is None:
        sim = build_similarity_model(cal, p_cal, seed=derive_seed(args.seed, "calibrate",
                                                                  "similarity"))
    support = calibration_support(sim, test.features, p_test)
    metrics = {UNCALIBRATED: {"brier": brier(p_test, test.labels),
                              "accuracy": accuracy(p_test, test.labels)}}
    for name, q in outputs.items():
        save_predictions_csv(test.ids, q, out / f"calibrated_{name}.csv",
                             extra={"support": support}, prefix="q")
        metrics[name] = {"brier": brier(q, test.labels), "accuracy": accuracy(q, test.labels)}
    maps = {k[:-4]: v.to_dict() for k, v in extras.items() if k.endswith("_map")}
    summary = {"schema_version": SCHEMA_VERSION, "command": "calibrate",
               "n_test": test.n_items, "n_cal": cal.n_items, "metrics": metrics,
               "global_maps": maps, "provenance": _provenance(args)}
    if "hh_report" in extras:
        summary["mean_hh"] = extras["hh_report"].mean_hh
    _write_json(out / "summary.json", summary)
    for name in [UNCALIBRATED] + list(outputs):
        m = metrics[name]
        print(f"{name:>10s}  brier={m['brier']:.4f}  accuracy={m['accuracy']:.4f}")
    return 0


def cmd_diagnose(args):
    test, cal, p_test, p_cal, model = _prepare(args)
    out = _out_dir(args)
    est = HiddenHeterogeneity(cal, p_cal, args.radius, derive_seed(args.seed, "hh"))
    rep = est.report(p_test, test.ids)
    rep.meta = {"schema_version": SCHEMA_VERSION, "command": "diagnose",
                "provenance": _provenance(args)}
    rep.to_csv(out / "hh.csv")
    rep.to_json(out / "hh_summary.json")
    print(f"mean_hh={rep.mean_hh:.4f} over {len(rep.entries)} test items (r={args.radius})")
    return 0


def cmd_support(args):
    test, cal, p_test, p_cal, model = _prepare(args)
    out = _out_dir(args)
    sim = build_similarity_model(cal, p_cal, seed=derive_seed(args.seed, "support"))
    rotated = np.zeros(test.n_items, dtype=bool)
    if args.rotate_fraction > 0:
        if model is None:
            raise UsageError("--rotate-fraction needs a built-in --model (rotated items are re-scored)")
        test, rotated = rotate90(test, args.rotate_fraction, side=args.side_for_rotation,
                                 seed=derive_seed(args.seed, "rotate"))
        p_test = model.predict_proba(test.features)
    support = calibration_support(sim, test.features, p_test)
    rep = SupportReport(test.ids, support, rotated)
    rep.to_csv(out / "support.csv")
    hist = support_histogram(support[~rotated], support[rotated], bins=args.hist_bins,
                             upper=float(cal.n_items) if args.full_range else None)
    write_support_histogram(hist, out / "support_histogram.csv")
    summary = {"schema_version": SCHEMA_VERSION, "command": "support", **rep.summary(),
               "rotate_fraction": args.rotate_fraction, "n_cal": cal.n_items,
               "provenance": _provenance(args)}
    _write_json(out / "support_summary.json", summary)
    print(json.dumps({k: v for k, v in summary.items() if k != "provenance"}, sort_keys=True))
    return 0


def _parse_sizes(text):
    try:
        sizes = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise UsageError(f"--cal-sizes must be comma-separated integers, got {text!r}") from None
    if not sizes:
        raise UsageError("--cal-sizes is empty")
    return sizes


def cmd_benchmark(args):
    if args.preds:
        raise UsageError("benchmark trains its own models; use --model instead of --preds")
    ds = _load_data(args)
    models = args.model or list(REFERENCE_MODELS)
    for m in models:
        if m not in REFERENCE_MODELS:
            raise UsageError(f"unknown model {m!r}")
    calibrators = _calibrator_list(args, ds.n_classes, BENCH_CALIBRATORS)
    sizes = _parse_sizes(args.cal_sizes)
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise UsageError("--cal-sizes must be strictly ascending")
    if args.trials < 1:
        raise UsageError("--trials must be >= 1")
    out = _out_dir(args)
    ckpt = out / "checkpoints"
    ckpt.mkdir(exist_ok=True)
    rows, failures = [], []
    for trial in range(args.trials):
        for size in sizes:
            for m in models:
                path = ckpt / f"trial{trial}_size{size}_{m}.json"
                if path.exists():
                    rows.extend(json.loads(path.read_text())["rows"])
                    continue
                try:
                    part = run_trial(ds, [m], calibrators, [size], trial, seed=args.seed,
                                     n_train=args.n_train, n_test=args.n_test,
                                     radius=args.radius, n_bins=args.bins, with_hh=args.hh)
                except (InvalidArgumentError, ValidationError, ArithmeticError) as exc:
                    msg = f"model={m} trial={trial} cal_size={size}: {exc}"
                    failures.append(msg)
                    print(f"error: {msg}", file=sys.stderr)
                    continue
                _write_json(path, {"rows": part})
                rows.extend(part)
    rows.sort(key=lambda r: (r["model"], r["cal_size"], r["calibrator"], r["trial"]))
    with open(out / "bench_rows.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model", "calibrator", "cal_size", "trial", "brier", "accuracy", "mean_hh"])
        for r in rows:
            w.writerow([r["model"], r["calibrator"], r["cal_size"], r["trial"], repr(r["brier"]),
                        repr(r["accuracy"]), repr(r["mean_hh"]) if "mean_hh" in r else ""])
    summary = summarize(rows) if rows else []
    with open(out / "bench_summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model", "calibrator", "cal_size", "brier_mean", "brier_se", "accuracy_mean",
                    "accuracy_se", "n_trials", "single_trial", "mean_hh", "best"])
        for e in summary:
            w.writerow([e["model"], e["calibrator"], e["cal_size"], repr(e["brier"].mean),
                        repr(e["brier"].se), repr(e["accuracy"].mean), repr(e["accuracy"].se),
                        e["brier"].n, int(e["brier"].single_trial),
                        repr(e["mean_hh"]) if "mean_hh" in e else "", int(e["best"])])
    report = {
        "schema_version": SCHEMA_VERSION, "command": "benchmark",
        "provenance": _provenance(args),
        "models": models, "calibrators": [UNCALIBRATED] + calibrators, "cal_sizes": sizes,
        "trials": args.trials, "failures": failures,
        "results": [{"model": e["model"], "calibrator": e["calibrator"],
                     "cal_size": e["cal_size"], "brier": e["brier"].to_dict(),
                     "accuracy": e["accuracy"].to_dict(), "mean_hh": e.get("mean_hh"),
                     "best": e["best"]} for e in summary],
    }
    _write_json(out / "report.json", report)
    for e in summary:
        star = "*" if e["best"] else " "
        print(f"{e['model']:>6s} {e['cal_size']:>5d} {e['calibrator']:>9s} "
              f"brier={e['brier'].mean:.4f}±{e['brier'].se:.4f}{star}")
    return 1 if failures else 0


def cmd_gen_moons(args):
    ds = make_moons(args.n, args.noise, seed=args.seed)
    save_dataset_csv(ds, args.out)
    return 0


def cmd_gen_glyphs(args):
    ds = make_glyphs(args.n, side=args.side, n_classes=args.classes, noise=args.noise,
                     shared=args.shared, upright=args.upright, seed=args.seed)
    save_dataset_csv(ds, args.out)
    return 0


# ------------------------------------------------------------------ parser

def _add_data_args(p):
    g = p.add_argument_group("dataset source (exactly one)")
    g.add_argument("--data", help="dataset CSV with header id,f0..f{d-1},label")
    g.add_argument("--moons", type=int, metavar="N", help="generate N two-moons items")
    g.add_argument("--glyphs", type=int, metavar="N", help="generate N synthetic glyph images")
    p.add_argument("--label-column", default="label")
    p.add_argument("--noise", type=float, default=None,
                   help=f"noise level for generated data (moons {MOONS_NOISE}, glyphs {GLYPHS_NOISE})")
    p.add_argument("--side", type=int, default=8, help="glyph image side length")
    p.add_argument("--upright", type=float, default=0.0,
                   help="probability that a glyph stroke is vertical")
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--n-train", type=int, default=500)
    p.add_argument("--n-test", type=int, default=500)
    p.add_argument("--radius", type=float, default=DEFAULT_RADIUS,
                   help="Hellinger radius of HH neighbourhoods (default 0.1)")
    p.add_argument("--bins", type=int, default=100, help="histogram-binning bin count")
    p.add_argument("--out", required=True, help="output directory")


def _add_model_args(p, repeat_help="built-in reference model"):
    p.add_argument("--model", action="append", choices=REFERENCE_MODELS, help=repeat_help)
    p.add_argument("--preds", help="external predictions CSV (id,p0..p{K-1}) for every item")


def build_parser():
    ap = argparse.ArgumentParser(prog="localcal", description=__doc__)
    ap.add_argument("--version", action="version", version=f"localcal {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="fit calibrators on the calibration split, apply to test")
    _add_data_args(p)
    _add_model_args(p)
    p.add_argument("--calibrator", action="append", choices=ALL_CALIBRATORS,
                   help="repeatable; default swc")
    p.add_argument("--global-calibrator", choices=("platt", "temp"),
                   help="override the automatic Platt/temperature choice")
    p.add_argument("--n-cal", type=int, help="calibration items (default: all remaining)")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("diagnose", help="per-item hidden heterogeneity of the test items")
    _add_data_args(p)
    _add_model_args(p)
    p.add_argument("--n-cal", type=int)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("support", help="calibration support, optionally under rotation shift")
    _add_data_args(p)
    _add_model_args(p)
    p.add_argument("--n-cal", type=int)
    p.add_argument("--rotate-fraction", type=float, default=0.0,
                   help="fraction of test items rotated 90 degrees counter-clockwise; "
                        "features are read as row-major square images")
    p.add_argument("--side-for-rotation", type=int, default=None,
                   help="image side (default: sqrt of the feature count)")
    p.add_argument("--hist-bins", type=int, default=20)
    p.add_argument("--full-range", action="store_true",
                   help="histogram over [0, |C|] instead of [0, max support]")
    p.set_defaults(func=cmd_support)

    p = sub.add_parser("benchmark", help="trials x models x calibrators x nested calibration sizes")
    _add_data_args(p)
    _add_model_args(p, "repeatable; default all built-in models")
    p.add_argument("--calibrator", action="append", choices=ALL_CALIBRATORS)
    p.add_argument("--global-calibrator", choices=("platt", "temp"))
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--cal-sizes", default=",".join(map(str, DEFAULT_CAL_SIZES)))
    p.add_argument("--hh", action="store_true", help="also report mean HH per cell")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("gen-moons", help="write a two-moons dataset CSV")
    p.add_argument("--n", type=int, default=10000)
    p.add_argument("--noise", type=float, default=MOONS_NOISE)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_moons)

    p = sub.add_parser("gen-glyphs", help="write a synthetic glyph-image dataset CSV")
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--side", type=int, default=8)
    p.add_argument("--classes", type=int, default=2)
    p.add_argument("--noise", type=float, default=GLYPHS_NOISE)
    p.add_argument("--shared", type=float, default=0.0)
    p.add_argument("--upright", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_glyphs)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (InvalidArgumentError, ParseError, ValidationError, NumericalError) as exc:
        print(f"localcal {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
