"""Command-line entry point: ``kinverify <subcommand> [flags]``.

Exit codes: 0 success, 1 input or configuration error, 2 numeric failure.
Artifacts go under ``--out`` in ``models/``, ``reports/`` and ``sweeps/``.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from . import heads as H
from .data import (
    MANIFEST_VERSION,
    SynthConfig,
    build_benchmark,
    load_embeddings,
    load_pairs,
    load_triplets,
    save_embeddings,
    save_samples,
    synth_generate,
    to_arrays,
)
from .estimators import SiameseVerifier, TripletVerifier
from .evaluation import ablation_matrix, lambda_sweep, report_from_arrays, threshold_sweep
from .exceptions import ContractError, InputError, KinverifyError, NumericError
from .fusion import FusionKind
from .jury import DEFAULT_T_HIGH, DEFAULT_T_LOW, DEFAULT_T_MEDIAN, TIE_RULE, jury_eval, load_jury_config
from .losses import DEFAULT_FOCAL_ALPHA, DEFAULT_FOCAL_GAMMA

logger = logging.getLogger("kinverify")

DEFAULT_T_GRID = (0.2, 0.3, 0.4, 0.5, 0.6)
DEFAULT_LAMBDA_GRID = ((0.3, 0.7), (0.4, 0.6), (0.5, 0.5), (0.6, 0.4), (0.7, 0.3))


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InputError(f"{self.prog}: {message}")


def _fusion(token: str) -> str:
    try:
        return FusionKind.parse(token).value
    except ContractError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _lambda_grid(text: str) -> list[tuple[float, float]]:
    out = []
    for item in text.split(","):
        a, sep, b = item.partition(":")
        try:
            out.append((float(a), float(b)))
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected l1:l2 pairs, got {item!r}") from None
        if not sep:
            raise argparse.ArgumentTypeError(f"expected l1:l2 pairs, got {item!r}")
    return out


def _add_embeddings(p):
    p.add_argument("--manifest", required=True, help="embedding manifest (JSON)")
    p.add_argument("--bin", help="embedding binary; defaults to the manifest path with .bin suffix")


def _add_training(p, default_name):
    p.add_argument("--fusion", type=_fusion, default="sqdiff_mul")
    p.add_argument("--loss", choices=("bce", "focal"), default="bce")
    p.add_argument("--focal-alpha", type=float, default=DEFAULT_FOCAL_ALPHA)
    p.add_argument("--focal-gamma", type=float, default=DEFAULT_FOCAL_GAMMA)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--epochs", type=int, default=60)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--name", default=default_name, help="model file stem")
    p.add_argument("--out", required=True)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="kinverify", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic family-embedding benchmark")
    p.add_argument("--families", type=int, default=500)
    p.add_argument("--members", type=int, default=6)
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--alpha", type=float, default=0.7)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--val-fraction", type=float, default=0.2)
    p.add_argument("--normalize", action="store_true", help="request L2 normalisation on load")
    p.add_argument("--out", required=True)

    p = sub.add_parser("train-pair", help="train a siamese head on pairs")
    _add_embeddings(p)
    p.add_argument("--pairs", required=True)
    p.add_argument("--val-pairs")
    p.add_argument("--t", type=float, default=0.5)
    _add_training(p, "pair")

    p = sub.add_parser("train-triplet", help="train a triplet model")
    _add_embeddings(p)
    p.add_argument("--triplets", required=True)
    p.add_argument("--val-triplets")
    p.add_argument("--lambda1", type=float, default=H.DEFAULT_LAMBDAS[0])
    p.add_argument("--lambda2", type=float, default=H.DEFAULT_LAMBDAS[1])
    p.add_argument("--t", type=float, default=0.5)
    p.add_argument("--t-fmd", type=float, default=H.DEFAULT_TRIPLET_THRESHOLDS["FMD"])
    p.add_argument("--t-fms", type=float, default=H.DEFAULT_TRIPLET_THRESHOLDS["FMS"])
    p.add_argument("--objective", choices=("joint", "independent"), default="joint")
    _add_training(p, "triplet")

    p = sub.add_parser("eval", help="evaluate a saved model")
    _add_embeddings(p)
    p.add_argument("--model", required=True)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--pairs")
    g.add_argument("--triplets")
    p.add_argument("--t", type=float, help="override the model file's threshold")
    p.add_argument("--out", required=True)

    p = sub.add_parser("jury-eval", help="evaluate a jury of saved pair models")
    _add_embeddings(p)
    p.add_argument("--config", required=True, help="jury config (JSON)")
    p.add_argument("--pairs", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("sweep", help="threshold, lambda or ablation sweeps")
    p.add_argument("kind", choices=("threshold", "lambda", "ablation"))
    _add_embeddings(p)
    p.add_argument("--model", help="saved model (threshold and lambda sweeps)")
    p.add_argument("--pairs")
    p.add_argument("--triplets")
    p.add_argument("--t-values", type=_float_list, default=list(DEFAULT_T_GRID))
    p.add_argument("--lambda-grid", type=_lambda_grid, default=list(DEFAULT_LAMBDA_GRID))
    p.add_argument("--t", type=float, default=0.5)
    p.add_argument("--val-pairs", help="ablation: evaluation pairs")
    p.add_argument("--losses", default="bce,focal")
    p.add_argument("--fusions", default="sumdiff_mul,sqdiff_mul")
    p.add_argument("--source-tag", default="synthetic", help="ablation: label for the embedding source")
    p.add_argument("--focal-alpha", type=float, default=DEFAULT_FOCAL_ALPHA)
    p.add_argument("--focal-gamma", type=float, default=DEFAULT_FOCAL_GAMMA)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--epochs", type=int, default=60)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    sub.add_parser("version", help="print format versions, defaults and deviations")
    return parser


def version_and_provenance() -> str:
    lines = [
        f"kinverify {__version__}",
        f"model_format_version={H.FORMAT_VERSION}",
        f"manifest_format_version={MANIFEST_VERSION}",
        f"format_version={H.FORMAT_VERSION}",
        "defaults: lr=0.001 batch_size=32 epochs=60 adam=(0.9,0.999,1e-08)",
        f"defaults: fc1={H.HIDDEN_UNITS} fc2=1 output=sigmoid",
        f"defaults: focal_alpha={DEFAULT_FOCAL_ALPHA} focal_gamma={DEFAULT_FOCAL_GAMMA}",
        f"defaults: lambda1={H.DEFAULT_LAMBDAS[0]} lambda2={H.DEFAULT_LAMBDAS[1]} "
        f"t_FMD={H.DEFAULT_TRIPLET_THRESHOLDS['FMD']} t_FMS={H.DEFAULT_TRIPLET_THRESHOLDS['FMS']}",
        f"jury thresholds: t_low={DEFAULT_T_LOW} t_median={DEFAULT_T_MEDIAN} t_high={DEFAULT_T_HIGH}",
        "deviations:",
        f"  jury_tie={TIE_RULE}",
        "  fc1_activation=relu",
        "  threshold_boundary=score==t_predicts_0",
        "  triplet_objective=joint_mean_of_head_losses",
    ]
    return "\n".join(lines) + "\n"


# --- helpers ---------------------------------------------------------------------

def _store(args):
    bin_path = args.bin or str(Path(args.manifest).with_suffix(".bin"))
    return load_embeddings(args.manifest, bin_path)


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _write_report(out: Path, stem: str, report) -> None:
    _write(out / "reports" / f"{stem}.json", report.to_json())
    _write(out / "reports" / f"{stem}.csv", report.to_csv())
    _write(out / "reports" / f"{stem}.txt", report.to_text())


def _write_table(out: Path, stem: str, table) -> None:
    _write(out / "sweeps" / f"{stem}.csv", table.to_csv())
    _write(out / "sweeps" / f"{stem}.json", json.dumps(table.to_dict(), indent=2) + "\n")
    _write(out / "sweeps" / f"{stem}.txt", table.to_text())


def _loss_curve_csv(curve) -> str:
    return "epoch,loss\n" + "".join(f"{i},{v!r}\n" for i, v in enumerate(curve, 1))


def _training_params(args) -> dict:
    return dict(
        fusion=args.fusion, loss=args.loss, focal_alpha=args.focal_alpha,
        focal_gamma=args.focal_gamma, lr=args.lr, batch_size=args.batch_size,
        epochs=args.epochs, random_state=args.seed,
    )


def _load_estimator(path):
    model, t, _meta = H.load_model(path)
    if isinstance(model, H.SiameseHead):
        return SiameseVerifier.from_head(model, t)
    return TripletVerifier.from_model(model)


# --- subcommands -------------------------------------------------------------------

def cmd_synth(args) -> None:
    config = SynthConfig(args.families, args.members, args.dim, args.alpha, args.seed)
    synth = synth_generate(config)
    bench = build_benchmark(synth, args.val_fraction, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_embeddings(synth.store, out / "embeddings.json", out / "embeddings.bin", args.normalize)
    save_samples(out / "train_pairs.csv", bench.train_pairs)
    save_samples(out / "val_pairs.csv", bench.val_pairs)
    save_samples(out / "train_triplets.csv", bench.train_triplets)
    save_samples(out / "val_triplets.csv", bench.val_triplets)
    _write(out / "families.csv", "id,family,role\n" + "".join(
        f"{k},{synth.family_map[k]},{synth.roles[k]}\n" for k in synth.store.ids))
    print(f"wrote {len(synth.store)} embeddings, {len(bench.train_pairs)}/{len(bench.val_pairs)} "
          f"train/val pairs, {len(bench.train_triplets)}/{len(bench.val_triplets)} train/val triplets")


def cmd_train_pair(args) -> None:
    store = _store(args)
    train_samples = load_pairs(args.pairs, store)
    val_samples = load_pairs(args.val_pairs, store) if args.val_pairs else None
    if not train_samples:
        raise InputError(f"{args.pairs}: no training pairs")
    X, y, _ = to_arrays(store, train_samples)
    est = SiameseVerifier(threshold=args.t, **_training_params(args)).fit(X, y)

    out = Path(args.out)
    (out / "models").mkdir(parents=True, exist_ok=True)
    est.save(out / "models" / f"{args.name}.kv")
    _write(out / "reports" / f"{args.name}_loss.csv", _loss_curve_csv(est.loss_curve_))
    if val_samples:
        Xv, yv, rv = to_arrays(store, val_samples)
        report = report_from_arrays(rv, est.predict(Xv), yv, _echo(args, t=args.t))
        _write_report(out, f"{args.name}_val", report)
        print(report.to_text(), end="")
    print(f"final epoch loss {est.loss_curve_[-1]:.6f}")


def cmd_train_triplet(args) -> None:
    store = _store(args)
    train_samples = load_triplets(args.triplets, store)
    val_samples = load_triplets(args.val_triplets, store) if args.val_triplets else None
    if not train_samples:
        raise InputError(f"{args.triplets}: no training triplets")
    X, y, _ = to_arrays(store, train_samples)
    est = TripletVerifier(
        lambda1=args.lambda1, lambda2=args.lambda2, threshold=args.t,
        type_thresholds={"FMD": args.t_fmd, "FMS": args.t_fms}, objective=args.objective,
        **_training_params(args),
    ).fit(X, y)

    out = Path(args.out)
    (out / "models").mkdir(parents=True, exist_ok=True)
    est.save(out / "models" / f"{args.name}.kv")
    _write(out / "reports" / f"{args.name}_loss.csv", _loss_curve_csv(est.loss_curve_))
    if val_samples:
        Xv, yv, rv = to_arrays(store, val_samples)
        echo = _echo(args, lambda1=args.lambda1, lambda2=args.lambda2,
                     t_FMD=args.t_fmd, t_FMS=args.t_fms, objective=args.objective)
        report = report_from_arrays(rv, est.predict(Xv, rv), yv, echo)
        _write_report(out, f"{args.name}_val", report)
        print(report.to_text(), end="")
    print(f"final epoch loss {est.loss_curve_[-1]:.6f}")


def _echo(args, **extra) -> dict:
    echo = {"fusion": args.fusion, "loss": args.loss}
    if args.loss == "focal":
        echo.update(focal_alpha=args.focal_alpha, focal_gamma=args.focal_gamma)
    echo.update(extra)
    return echo


def cmd_eval(args) -> None:
    store = _store(args)
    est = _load_estimator(args.model)
    if isinstance(est, SiameseVerifier):
        if not args.pairs:
            raise InputError("a pair model needs --pairs")
        samples = load_pairs(args.pairs, store)
    else:
        if not args.triplets:
            raise InputError("a triplet model needs --triplets")
        samples = load_triplets(args.triplets, store)
    X, y, rel = to_arrays(store, samples)
    if args.t is not None:
        est.set_params(threshold=args.t, **({"type_thresholds": None} if isinstance(est, TripletVerifier) else {}))
    if isinstance(est, SiameseVerifier):
        pred = est.predict(X)
        echo = {"fusion": est.fusion, "t": est.threshold}
    else:
        pred = est.predict(X, rel)
        echo = {"fusion": est.fusion, "t": est.threshold, "lambda1": est.lambda1,
                "lambda2": est.lambda2, "type_thresholds": est.type_thresholds or {}}
    report = report_from_arrays(rel, pred, y, echo)
    _write_report(Path(args.out), f"{Path(args.model).stem}_eval", report)
    print(report.to_text(), end="")


def cmd_jury_eval(args) -> None:
    store = _store(args)
    config = load_jury_config(args.config)
    base = Path(args.config).parent
    paths = [config.major, *config.auxiliaries]
    models = []
    for p in paths:
        path = Path(p) if Path(p).is_absolute() else base / p
        est = _load_estimator(path)
        if not isinstance(est, SiameseVerifier):
            raise InputError(f"{path}: jury members must be pair models")
        models.append(est)
    samples = load_pairs(args.pairs, store)
    X, y, rel = to_arrays(store, samples)
    report = jury_eval(models[0], models[1:], X, y, rel, config.t_low, config.t_median,
                       config.t_high, {"major": config.major, "auxiliaries": list(config.auxiliaries)})
    major_report = report_from_arrays(rel, models[0].predict(X), y,
                                      {"major": config.major, "t": models[0].threshold})
    out = Path(args.out)
    _write_report(out, "jury_eval", report)
    _write_report(out, "jury_major_only", major_report)
    print("jury:\n" + report.to_text() + "major model alone:\n" + major_report.to_text(), end="")


def cmd_sweep(args) -> None:
    store = _store(args)
    out = Path(args.out)
    if args.kind == "threshold":
        if not args.model:
            raise InputError("threshold sweep needs --model")
        est = _load_estimator(args.model)
        samples = load_pairs(args.pairs, store) if isinstance(est, SiameseVerifier) else load_triplets(
            _require(args.triplets, "--triplets"), store)
        X, y, rel = to_arrays(store, samples)
        table = threshold_sweep(est.decision_function(X), y, rel, args.t_values)
        stem = f"{Path(args.model).stem}_threshold"
    elif args.kind == "lambda":
        if not args.model:
            raise InputError("lambda sweep needs --model")
        est = _load_estimator(args.model)
        if not isinstance(est, TripletVerifier):
            raise InputError("lambda sweep needs a triplet model")
        X, y, rel = to_arrays(store, load_triplets(_require(args.triplets, "--triplets"), store))
        s_fc, s_mc = est.head_scores(X)
        table = lambda_sweep(s_fc, s_mc, y, rel, args.lambda_grid, args.t)
        stem = f"{Path(args.model).stem}_lambda"
    else:
        train_s = load_pairs(_require(args.pairs, "--pairs"), store)
        val_s = load_pairs(_require(args.val_pairs, "--val-pairs"), store)
        losses = [v for v in args.losses.split(",") if v]
        fusions = [_fusion(v) for v in args.fusions.split(",") if v]
        for loss in losses:
            if loss not in ("bce", "focal"):
                raise InputError(f"unknown loss {loss!r}")
        Xt, yt, _ = to_arrays(store, train_s)
        Xv, yv, rv = to_arrays(store, val_s)

        def fit_and_score(data, loss, fusion):
            est = SiameseVerifier(
                fusion=fusion, loss=loss, focal_alpha=args.focal_alpha,
                focal_gamma=args.focal_gamma, lr=args.lr, batch_size=args.batch_size,
                epochs=args.epochs, threshold=args.t, random_state=args.seed,
            ).fit(data[0], data[1])
            return report_from_arrays(rv, est.predict(Xv), yv)

        table = ablation_matrix({args.source_tag: (Xt, yt)}, losses, fusions, fit_and_score)
        stem = "ablation"
    best = table.meta.get("best_row")
    _write_table(out, stem, table)
    print(table.to_text(), end="")
    if best is not None:
        print(f"best row: {best + 1} {table.rows[best]}")


def _require(value, flag):
    if not value:
        raise InputError(f"this sweep needs {flag}")
    return value


COMMANDS = {
    "synth": cmd_synth,
    "train-pair": cmd_train_pair,
    "train-triplet": cmd_train_triplet,
    "eval": cmd_eval,
    "jury-eval": cmd_jury_eval,
    "sweep": cmd_sweep,
}


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "version":
        print(version_and_provenance(), end="")
        return 0
    resolved = {k: v for k, v in sorted(vars(args).items()) if k != "verbose"}
    print("config: " + json.dumps(resolved, sort_keys=True, default=str))
    try:
        COMMANDS[args.command](args)
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 2
    except (KinverifyError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
