"""Command line: data generation, training, evaluation, ablation, theory.

Every command takes an explicit seed (or reads one from the run config)
and derives all randomness from it through tagged substreams, so reruns
produce byte-identical artifacts.  Failures print a single line
``error[category]: message`` and exit nonzero; usage problems use the
category ``usage``.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

import numpy as np

from . import basemodel, etn, staticscale
from .bundleio import Bundle, read_bundle, write_bundle
from .errors import ConfigError, EtnkitError
from .metrics import build_report, format_flat, write_report
from .rng import split_stream
from .theory import verify_theory

_CONFIG_KEYS = {
    "family": ("family", str),
    "prior_mode": ("prior_mode", float),
    "prior_var": ("prior_variance", float),
    "mc_samples": ("mc_samples", int),
    "lambda": ("lam", float),
    "nu": ("nu", float),
    "lr": ("learning_rate", float),
    "epochs": ("epochs", int),
    "batch": ("batch_size", int),
    "hidden_dim": ("hidden_dim", int),
    "seed": ("seed", int),
    "odir_weight": ("odir_weight", float),
}


def parse_run_config(path) -> etn.TrainConfig:
    """key=value lines onto TrainConfig; unknown keys are rejected."""
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, val = line.partition("=")
            key = key.strip()
            val = val.strip()
            if not sep or not key or not val:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            if key not in _CONFIG_KEYS:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            field, cast = _CONFIG_KEYS[key]
            if key == "prior_mode" and val == "auto":
                values[field] = None  # margin-derived at training time
                continue
            try:
                values[field] = cast(val)
            except ValueError:
                raise ConfigError(
                    f"{path}:{lineno}: bad value {val!r} for {key}") from None
    try:
        return etn.TrainConfig(**values)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        print(f"error[usage]: {message}", file=sys.stderr)
        raise SystemExit(2)


def _scores(res) -> dict[str, np.ndarray]:
    return {"mp": res.mp, "um": res.um, "mi": res.mi, "de": res.de}


def _load_any_checkpoint(path):
    if etn.peek_family(path) == "static":
        return staticscale.load_static(path), "static"
    model = etn.load_checkpoint(path)
    return model, model.family


def _infer_checkpoint(model, family: str, bundle: Bundle, tag: str):
    if family == "static":
        return staticscale.infer_static(model, bundle.logits)
    rng = split_stream(model.config.seed, tag)
    return etn.infer(model, bundle.features, bundle.logits,
                     model.config.mc_samples, rng)


def _eval_report(model, family: str, id_bundle: Bundle, id_name: str,
                 ood: list[tuple[str, Bundle]], seed: int) -> dict:
    y = id_bundle.require_labels()
    res = _infer_checkpoint(model, family, id_bundle, "eval-id")
    ood_scores = []
    for i, (_, b) in enumerate(ood):
        ood_scores.append(_scores(_infer_checkpoint(model, family, b, f"eval-ood-{i}")))
    report = build_report(_scores(res), (res.pred == y).astype(np.int64),
                          ood_scores or None, seed=seed)
    report["family"] = family
    report["datasets"] = {"id": id_name, "ood": [name for name, _ in ood]}
    return report


def _emit_report(report: dict, path) -> None:
    if path:
        write_report(report, path)
    sys.stdout.write(format_flat(report))


def _cmd_gen_synth(args) -> int:
    spec = basemodel.SynthSpec(
        num_classes=args.classes, feature_dim=args.dim, radius=args.radius,
        sigma=args.sigma, ood_shift=args.ood_shift, n_pretrain=args.n_pretrain,
        n_adapt=args.n_adapt, n_test=args.n_test, n_ood=args.n_ood,
        seed=args.seed)
    os.makedirs(args.out, exist_ok=True)
    bundles = basemodel.gen_synth(spec)
    for name, bundle in bundles.items():
        path = os.path.join(args.out, f"{name}.etnb")
        write_bundle(path, bundle)
        print(f"{name}: {bundle.n} rows, dim {bundle.features.shape[1]} -> {path}")
    return 0


def _cmd_pretrain(args) -> int:
    data = read_bundle(args.data)
    cfg = basemodel.PretrainConfig(mode=args.loss, epochs=args.epochs,
                                   hidden_dim=args.hidden_dim, seed=args.seed)
    model = basemodel.pretrain(data, cfg)
    basemodel.save_classifier(model, args.out)
    print(f"mode={args.loss} train_accuracy={model.accuracy(data):.4f} -> {args.out}")
    return 0


def _cmd_export(args) -> int:
    model = basemodel.load_classifier(args.model)
    data = read_bundle(args.data)
    out = basemodel.export(model, data, args.out)
    print(f"exported {out.n} rows: features[{out.features.shape[1]}] "
          f"logits[{out.num_classes}] labels={'yes' if out.has_labels else 'no'} "
          f"-> {args.out}")
    return 0


def _cmd_train_etn(args) -> int:
    bundle = read_bundle(args.bundle)
    cfg = parse_run_config(args.config) if args.config else etn.TrainConfig()
    model, history = etn.train(bundle.features, bundle.logits,
                               bundle.require_labels(), cfg)
    etn.save_checkpoint(model, args.out)
    best = min(history, key=lambda row: row["loss"])
    print(f"family={cfg.family} epochs={len(history)} "
          f"loss first={history[0]['loss']:.6g} last={history[-1]['loss']:.6g} "
          f"best={best['loss']:.6g}@{int(best['epoch'])} -> {args.out}")
    return 0


def _cmd_eval(args) -> int:
    model, family = _load_any_checkpoint(args.checkpoint)
    id_bundle = read_bundle(args.id_bundle)
    ood = [(os.path.basename(p), read_bundle(p)) for p in (args.ood_bundle or [])]
    seed = model.config.seed
    report = _eval_report(model, family, id_bundle,
                          os.path.basename(args.id_bundle), ood, seed)
    _emit_report(report, args.report)
    return 0


def _cmd_baseline_static(args) -> int:
    bundle = read_bundle(args.bundle)
    cfg = staticscale.StaticConfig(nu=args.nu, epochs=args.epochs, seed=args.seed)
    model, history = staticscale.train_static(bundle.logits,
                                              bundle.require_labels(), cfg)
    staticscale.save_static(model, args.out)
    print(f"a={model.a:.6g} loss first={history[0]['train_loss']:.6g} "
          f"last={history[-1]['train_loss']:.6g} -> {args.out}")
    if args.report or args.id_bundle or args.ood_bundle:
        id_path = args.id_bundle or args.bundle
        id_bundle = read_bundle(id_path)
        ood = [(os.path.basename(p), read_bundle(p)) for p in (args.ood_bundle or [])]
        report = _eval_report(model, "static", id_bundle,
                              os.path.basename(id_path), ood, cfg.seed)
        _emit_report(report, args.report)
    return 0


def _parse_int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _cmd_ablate(args) -> int:
    grid = [v for v in args.grid.split(",") if v.strip()]
    if not grid:
        print("error[usage]: empty grid", file=sys.stderr)
        return 2
    seeds = _parse_int_list(args.seeds)
    adapt = read_bundle(args.bundle)
    id_bundle = read_bundle(args.id_bundle)
    ood = [(os.path.basename(p), read_bundle(p)) for p in args.ood_bundle]
    base = parse_run_config(args.config) if args.config else etn.TrainConfig()
    report: dict = {"what": args.what, "seeds": seeds, "points": []}
    for raw in grid:
        value = float(raw)
        if args.what == "prior-mode":
            make = lambda s: replace(base, prior_mode=value, seed=s)
        else:
            make = lambda s: replace(base, mc_samples=int(value), seed=s)
        cells: dict[str, list[float]] = {}
        for s in seeds:
            cfg = make(s)
            model, _ = etn.train(adapt.features, adapt.logits,
                                 adapt.require_labels(), cfg)
            rep = _eval_report(model, cfg.family, id_bundle,
                               os.path.basename(args.id_bundle), ood, s)
            cells.setdefault("accuracy", []).append(rep["accuracy"])
            for key, val in rep["ood"].items():
                if key.startswith("aupr_"):
                    cells.setdefault(key, []).append(val)
        point = {"value": value}
        for key, vals in cells.items():
            point[key] = float(np.mean(vals))
            for s, v in zip(seeds, vals):
                point[f"{key}_seed{s}"] = float(v)
        report["points"].append(point)
        print(f"{args.what}={value:g} " + " ".join(
            f"{k}={point[k]:.4f}" for k in sorted(cells)))
    if args.report:
        write_report(report, args.report)
    return 0


def _cmd_verify_theory(args) -> int:
    report = verify_theory(seed=args.seed)
    if args.out:
        write_report(report, args.out)
    for name, entry in report.items():
        if isinstance(entry, dict) and "pass" in entry:
            print(f"{name}: {'pass' if entry['pass'] else 'FAIL'}")
    print(f"all_pass = {report['all_pass']}")
    return 0


def _build_parser() -> _Parser:
    parser = _Parser(prog="etnkit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    synth = basemodel.SynthSpec()
    p = sub.add_parser("gen-synth", help="write the four synthetic bundles")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--classes", type=int, default=synth.num_classes)
    p.add_argument("--dim", type=int, default=synth.feature_dim)
    p.add_argument("--radius", type=float, default=synth.radius)
    p.add_argument("--sigma", type=float, default=synth.sigma)
    p.add_argument("--ood-shift", type=float, default=synth.ood_shift)
    p.add_argument("--n-pretrain", type=int, default=synth.n_pretrain)
    p.add_argument("--n-adapt", type=int, default=synth.n_adapt)
    p.add_argument("--n-test", type=int, default=synth.n_test)
    p.add_argument("--n-ood", type=int, default=synth.n_ood)
    p.add_argument("--seed", type=int, default=synth.seed)
    p.set_defaults(func=_cmd_gen_synth)

    pre = basemodel.PretrainConfig()
    p = sub.add_parser("pretrain", help="train the tiny base classifier")
    p.add_argument("--data", required=True)
    p.add_argument("--loss", required=True, choices=("ce", "edl"))
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=pre.epochs)
    p.add_argument("--hidden-dim", type=int, default=pre.hidden_dim)
    p.add_argument("--seed", type=int, default=pre.seed)
    p.set_defaults(func=_cmd_pretrain)

    p = sub.add_parser("export", help="run a trained classifier over a bundle")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_export)

    p = sub.add_parser("train-etn", help="train a transformation network")
    p.add_argument("--bundle", required=True, help="exported adaptation bundle")
    p.add_argument("--config", help="key=value run config file")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.set_defaults(func=_cmd_train_etn)

    p = sub.add_parser("eval", help="evaluate a checkpoint, write a report")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--id-bundle", required=True)
    p.add_argument("--ood-bundle", action="append")
    p.add_argument("--report")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("baseline-static", help="fit the static scaling baseline")
    p.add_argument("--bundle", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--nu", type=float, default=1e4)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--id-bundle")
    p.add_argument("--ood-bundle", action="append")
    p.add_argument("--report")
    p.set_defaults(func=_cmd_baseline_static)

    p = sub.add_parser("ablate", help="sweep a hyperparameter grid")
    p.add_argument("--what", required=True, choices=("prior-mode", "mc-samples"))
    p.add_argument("--grid", required=True, help="comma-separated values")
    p.add_argument("--bundle", required=True, help="adaptation bundle")
    p.add_argument("--id-bundle", required=True)
    p.add_argument("--ood-bundle", action="append", required=True)
    p.add_argument("--config")
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--report")
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("verify-theory", help="run the theory checks")
    p.add_argument("--out")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_verify_theory)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except EtnkitError as exc:
        print(f"error[{exc.category}]: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error[io]: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
