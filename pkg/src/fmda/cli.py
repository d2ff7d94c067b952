"""Command-line front end: gen, pretrain, adapt, eval, suite, export-features.

Config precedence for every subcommand: flags override values from a
--config JSON file, which override the built-in defaults. Every run writes
its fully resolved configuration beside its outputs, and a fixed seed makes
reruns rewrite byte-identical artifacts.

Exit codes: 0 success, 1 runtime/IO failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import fields
from pathlib import Path

from .config import METHODS, RunConfig, STREAM_FEWSHOT, trial_stream
from .datagen import ShiftSpec, export_csv, generate, load_csv, load_preset
from .datasets import LabeledDataset
from .errors import ConfigurationError, FmdaError
from .metrics import evaluate_model
from .model import load_checkpoint, save_checkpoint
from .sampling import draw_fewshot
from .suite import SuiteReport, check_no_leakage, export_features, run_suite
from .train import adapt, pretrain

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2

_RUN_KEYS = {f.name for f in fields(RunConfig)}
_SPEC_KEYS = {f.name for f in fields(ShiftSpec)}
_EXTRA_KEYS = {
    "preset", "methods", "n_values", "jobs", "data_seed",
    "source", "target", "checkpoint", "data", "out",
}
ALLOWED_CONFIG_KEYS = _RUN_KEYS | _SPEC_KEYS | _EXTRA_KEYS


def _read_config_file(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except OSError as e:
        raise FmdaError(f"failed reading config {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"config {path} is not valid JSON: {e}") from e
    if not isinstance(payload, dict):
        raise ConfigurationError(f"config {path} must hold a JSON object")
    unknown = sorted(set(payload) - ALLOWED_CONFIG_KEYS)
    if unknown:
        raise ConfigurationError(f"unknown config keys: {', '.join(unknown)}")
    return payload


def _layered(args, file_cfg: dict, key: str, default):
    """flags > config file > default."""
    if hasattr(args, key):
        return getattr(args, key)
    if key in file_cfg:
        return file_cfg[key]
    return default


def _resolve_seed(args, file_cfg: dict) -> int:
    if hasattr(args, "seed"):
        return int(args.seed)
    if "seed" in file_cfg:
        return int(file_cfg["seed"])
    env = os.environ.get("FMDA_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigurationError(f"FMDA_SEED must be an integer, got {env!r}") from None
    return 0


def _int_list(text) -> list:
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    try:
        return [int(p) for p in str(text).split(",") if p != ""]
    except ValueError:
        raise ConfigurationError(f"expected a comma-separated integer list, got {text!r}") from None


def _str_list(text) -> list:
    if isinstance(text, (list, tuple)):
        return [str(v) for v in text]
    return [p for p in str(text).split(",") if p != ""]


def _out_dir(args) -> Path:
    out = Path(getattr(args, "out", "."))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, payload: dict):
    try:
        path.write_text(
            json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n",
            encoding="utf-8",
        )
    except OSError as e:
        raise FmdaError(f"failed writing {path}: {e}") from e


def _write_text(path: Path, text: str):
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as e:
        raise FmdaError(f"failed writing {path}: {e}") from e


def _load_dataset(path, domain=None) -> LabeledDataset:
    return load_csv(path, domain=domain)


def _build_shift_spec(args, file_cfg: dict) -> ShiftSpec:
    base = {}
    preset = _layered(args, file_cfg, "preset", None)
    if preset is not None:
        base = load_preset(preset).to_dict()
    if hasattr(args, "spec"):
        sp = _read_config_file(args.spec)
        unknown = sorted(set(sp) - _SPEC_KEYS - {"preset_version"})
        if unknown:
            raise ConfigurationError(f"unknown shift-spec keys: {', '.join(unknown)}")
        sp.pop("preset_version", None)
        base.update(sp)
    spec_dict = {f.name: base.get(f.name, getattr(ShiftSpec, f.name)) for f in fields(ShiftSpec)}
    for key in _SPEC_KEYS:
        if key in file_cfg:
            spec_dict[key] = file_cfg[key]
    flag_map = {
        "n_classes": "classes", "dim": "dim", "source_per_class": "source_per_class",
        "target_per_class": "target_per_class", "severity": "severity",
        "cov_scale": "cov_scale", "mean_scale": "mean_scale",
    }
    for field_name, flag in flag_map.items():
        if hasattr(args, flag):
            spec_dict[field_name] = getattr(args, flag)
    data_seed = _layered(args, file_cfg, "data_seed", None)
    if data_seed is not None:
        spec_dict["seed"] = int(data_seed)
    elif hasattr(args, "seed"):
        spec_dict["seed"] = int(args.seed)
    elif "seed" in file_cfg:
        spec_dict["seed"] = int(file_cfg["seed"])
    return ShiftSpec.from_dict(spec_dict)


def _build_run_config(args, file_cfg: dict, n_classes: int, defaults: dict | None = None) -> RunConfig:
    base = {f.name: getattr(RunConfig, f.name) for f in fields(RunConfig) if f.name != "n_classes"}
    base["n_classes"] = n_classes
    if defaults:
        base.update({k: v for k, v in defaults.items() if k in _RUN_KEYS})
    for key in _RUN_KEYS:
        if key in file_cfg:
            base[key] = file_cfg[key]
    for key in _RUN_KEYS:
        if hasattr(args, key):
            base[key] = getattr(args, key)
    if hasattr(args, "hidden_dims"):
        base["hidden_dims"] = _int_list(args.hidden_dims)
    elif "hidden_dims" in file_cfg:
        base["hidden_dims"] = _int_list(file_cfg["hidden_dims"])
    base["seed"] = _resolve_seed(args, file_cfg)
    base["hidden_dims"] = tuple(_int_list(base["hidden_dims"]))
    return RunConfig.from_dict(base)


def cmd_gen(args) -> int:
    file_cfg = _read_config_file(args.config) if hasattr(args, "config") else {}
    spec = _build_shift_spec(args, file_cfg)
    pair = generate(spec)
    out = _out_dir(args)
    export_csv(pair.source, out / "source.csv")
    export_csv(pair.target, out / "target.csv")
    _write_json(out / "shift_spec.json", {"preset_version": 1, **spec.to_dict()})
    print(f"wrote {out / 'source.csv'} ({len(pair.source)} rows)")
    print(f"wrote {out / 'target.csv'} ({len(pair.target)} rows)")
    print(f"wrote {out / 'shift_spec.json'}")
    return EXIT_OK


def cmd_pretrain(args) -> int:
    file_cfg = _read_config_file(args.config) if hasattr(args, "config") else {}
    source = _load_dataset(_layered(args, file_cfg, "source", None))
    n_classes = getattr(args, "classes", None)
    if n_classes is None:
        n_classes = file_cfg.get("n_classes", int(source.labels.max()) + 1)
    config = _build_run_config(args, file_cfg, int(n_classes))
    ck = pretrain(source, config)
    out = _out_dir(args)
    save_checkpoint(ck, out / "checkpoint.json")
    _write_json(out / "resolved_config.json", {"command": "pretrain", **config.to_dict()})
    print(f"wrote {out / 'checkpoint.json'} (pretrained {config.pretrain_iters} epochs)")
    return EXIT_OK


def cmd_adapt(args) -> int:
    file_cfg = _read_config_file(args.config) if hasattr(args, "config") else {}
    ck = load_checkpoint(_layered(args, file_cfg, "checkpoint", None))
    source = _load_dataset(_layered(args, file_cfg, "source", None))
    target = _load_dataset(_layered(args, file_cfg, "target", None))
    config = _build_run_config(
        args, file_cfg, ck.params.n_classes, defaults=ck.config.to_dict()
    )
    if config.method == "without-target":
        raise ConfigurationError("adapt refuses method 'without-target': nothing to adapt")
    split = draw_fewshot(
        target, config.n, trial_stream(config.seed, 0, STREAM_FEWSHOT),
        n_classes=config.n_classes,
    )
    check_no_leakage(split)
    fewshot = target.subset_ids(split.train_ids)
    test = target.subset_ids(split.test_ids) if split.test_ids else None

    adapted, curve = adapt(ck, source, fewshot, config, target_test=test)
    out = _out_dir(args)
    save_checkpoint(adapted, out / "checkpoint.json")
    _write_text(out / "fewshot_split.json", split.to_json())
    curve_lines = ["iteration,macro_f1"] + [f"{it},{repr(f1)}" for it, f1 in curve]
    _write_text(out / "curve.csv", "\n".join(curve_lines) + "\n")
    if test is not None:
        report = evaluate_model(
            adapted.params, test, method=config.method, n=config.n,
            iteration=config.adapt_iters,
        )
        _write_json(out / "eval_report.json", report.to_dict())
    _write_json(out / "resolved_config.json", {"command": "adapt", **config.to_dict()})
    print(f"wrote {out / 'checkpoint.json'} ({config.method}, {config.adapt_iters} steps)")
    return EXIT_OK


def cmd_eval(args) -> int:
    file_cfg = _read_config_file(args.config) if hasattr(args, "config") else {}
    ck = load_checkpoint(_layered(args, file_cfg, "checkpoint", None))
    data = _load_dataset(_layered(args, file_cfg, "data", None))
    report = evaluate_model(ck.params, data, method=ck.config.method, iteration=ck.iteration)
    out = _out_dir(args)
    _write_json(out / "eval_report.json", report.to_dict())
    _write_json(out / "resolved_config.json", {"command": "eval", **ck.config.to_dict()})
    print(f"macro F1 = {report.macro_f1:.4f} over {int(report.confusion.sum())} samples")
    print(f"wrote {out / 'eval_report.json'}")
    return EXIT_OK


def cmd_suite(args) -> int:
    file_cfg = _read_config_file(args.config) if hasattr(args, "config") else {}
    src_path = _layered(args, file_cfg, "source", None)
    tgt_path = _layered(args, file_cfg, "target", None)
    if src_path is not None and tgt_path is not None:
        from .datagen import GeneratedPair

        pair = GeneratedPair(
            source=_load_dataset(src_path, domain="source"),
            target=_load_dataset(tgt_path, domain="target"),
        )
        n_classes = int(pair.source.labels.max()) + 1
    else:
        spec = _build_shift_spec(args, file_cfg)
        pair = generate(spec)
        n_classes = spec.n_classes
    config = _build_run_config(args, file_cfg, n_classes)
    methods = _str_list(_layered(args, file_cfg, "methods", ",".join(METHODS)))
    n_values = _int_list(_layered(args, file_cfg, "n_values", "3,10"))
    trials = int(_layered(args, file_cfg, "trials", config.trials))
    jobs = int(_layered(args, file_cfg, "jobs", 1))

    report = run_suite(pair, methods, n_values, trials=trials, config=config, jobs=jobs)
    out = _out_dir(args)
    _write_text(out / "suite_report.json", report.to_json())
    _write_text(out / "curves.csv", report.flat_curves_csv())
    _write_json(
        out / "resolved_config.json",
        {
            "command": "suite",
            "methods": methods,
            "n_values": n_values,
            "trials": trials,
            "jobs": jobs,
            "shift_spec": report.spec,
            **config.to_dict(),
        },
    )
    for e in report.results:
        n_txt = "full" if e["n"] is None else f"n={e['n']}"
        print(
            f"{e['method']:<14} {n_txt:>6}  final {100 * e['final']['mean']:6.2f}"
            f" +/- {100 * e['final']['sd']:5.2f}"
            f"  best {100 * e['best']['mean']:6.2f} @ {e['best']['iteration']}"
        )
    print(f"wrote {out / 'suite_report.json'}")
    return EXIT_OK


def cmd_export_features(args) -> int:
    file_cfg = _read_config_file(args.config) if hasattr(args, "config") else {}
    ck = load_checkpoint(_layered(args, file_cfg, "checkpoint", None))
    specs = getattr(args, "data", None) or file_cfg.get("data")
    if not specs:
        raise ConfigurationError("export-features needs at least one --data split=path")
    datasets = []
    for item in specs:
        if "=" not in item:
            raise ConfigurationError(f"--data expects split=path, got {item!r}")
        name, path = item.split("=", 1)
        datasets.append((name, _load_dataset(path)))
    out = _out_dir(args)
    export_features(ck, datasets, out / "features.csv")
    _write_json(out / "resolved_config.json", {"command": "export-features", **ck.config.to_dict()})
    print(f"wrote {out / 'features.csv'}")
    return EXIT_OK


def _add_common(p):
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--seed", type=int, help="base seed (default: FMDA_SEED env var, else 0)")
    p.add_argument("--out", help="output directory (default: current directory)")


def _add_spec_flags(p):
    p.add_argument("--preset", help="named benchmark preset, e.g. 'standard'")
    p.add_argument("--spec", help="shift-spec JSON file")
    p.add_argument("--classes", type=int, help="number of classes (default: 6)")
    p.add_argument("--dim", type=int, help="input dimension (default: 16)")
    p.add_argument("--severity", type=float, help="shift severity s >= 0 (default: 2.0)")
    p.add_argument("--source-per-class", dest="source_per_class", type=int,
                   help="source samples per class (default: 500)")
    p.add_argument("--target-per-class", dest="target_per_class", type=int,
                   help="target samples per class (default: 200)")
    p.add_argument("--cov-scale", dest="cov_scale", type=float,
                   help="within-class standard deviation")
    p.add_argument("--mean-scale", dest="mean_scale", type=float,
                   help="spread of the random class means")
    p.add_argument("--data-seed", dest="data_seed", type=int,
                   help="seed for data generation (default: the base seed)")


def _add_train_flags(p, adapt_flags=True):
    p.add_argument("--lr", type=float, help="Adam learning rate (default: 0.001)")
    p.add_argument("--hidden-dims", dest="hidden_dims",
                   help="comma list of hidden widths (default: 64,64)")
    p.add_argument("--feature-dim", dest="feature_dim", type=int,
                   help="feature dimension (default: 32)")
    p.add_argument("--pretrain-iters", dest="pretrain_iters", type=int,
                   help="pre-training epochs (default: 100)")
    p.add_argument("--batch", dest="batch_pretrain", type=int,
                   help="pre-training batch size (default: 128)")
    if adapt_flags:
        p.add_argument("--iters", dest="adapt_iters", type=int,
                       help="adaptation steps (default: 1000)")
        p.add_argument("--eval-every", dest="eval_every", type=int,
                       help="evaluation cadence in steps (default: 10)")
        p.add_argument("--lambda", dest="lam", type=float,
                       help="distance-loss weight (default: 1.0)")
        p.add_argument("--alpha", type=float, help="triplet inter-pair margin (default: 1.0)")
        p.add_argument("--beta", type=float,
                       help="triplet absolute positive margin (default: 0.3)")
        p.add_argument("--lambda-d", dest="lambda_d", type=float,
                       help="gradient-reversal coefficient (default: 1.0)")
        p.add_argument("--detach-source", dest="detach_source", action="store_true",
                       help="treat source features as constants in the distance loss")
        p.add_argument("--fixed-pairs", dest="fixed_pairs", action="store_true",
                       help="freeze each anchor's positive/negative choice")
        p.add_argument("--normalize-features", dest="normalize_features", action="store_true",
                       help="unit-normalize features before distances")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fmda",
        description="Few-shot metric domain adaptation: generate benchmarks, "
        "train, adapt, and compare methods.",
    )
    parser.set_defaults(func=None)
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("gen", help="generate a synthetic source/target benchmark",
                       argument_default=argparse.SUPPRESS)
    _add_spec_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("pretrain", help="pre-train on a source CSV",
                       argument_default=argparse.SUPPRESS)
    p.add_argument("--source", help="source dataset CSV")
    p.add_argument("--classes", dest="classes", type=int,
                   help="number of classes (default: inferred from labels)")
    _add_train_flags(p, adapt_flags=False)
    _add_common(p)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("adapt", help="few-shot adapt a pre-trained checkpoint",
                       argument_default=argparse.SUPPRESS)
    p.add_argument("--checkpoint", help="pre-trained checkpoint JSON")
    p.add_argument("--source", help="source dataset CSV")
    p.add_argument("--target", help="full target dataset CSV (few-shot drawn from it)")
    p.add_argument("--method",
                   help="one of dann, finetune, dann-tune, fmda-l2, fmda-triplet "
                        "(default: fmda-triplet)")
    p.add_argument("--n", type=int, help="few-shot samples per class (default: 10)")
    _add_train_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_adapt)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset CSV",
                       argument_default=argparse.SUPPRESS)
    p.add_argument("--checkpoint", help="checkpoint JSON")
    p.add_argument("--data", help="dataset CSV to score")
    _add_common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("suite", help="run the multi-trial method comparison",
                       argument_default=argparse.SUPPRESS)
    p.add_argument("--source", help="source dataset CSV (with --target, skips generation)")
    p.add_argument("--target", help="target dataset CSV")
    _add_spec_flags(p)
    p.add_argument("--methods", help=f"comma list of methods (default: all: {','.join(METHODS)})")
    p.add_argument("--n-values", dest="n_values", help="comma list of n (default: 3,10)")
    p.add_argument("--trials", type=int, help="repeats with different few-shot draws (default: 5)")
    p.add_argument("--jobs", type=int, help="parallel trial workers (default: 1)")
    _add_train_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_suite)

    p = sub.add_parser("export-features", help="export features and a 2-D projection",
                       argument_default=argparse.SUPPRESS)
    p.add_argument("--checkpoint", help="checkpoint JSON")
    p.add_argument("--data", action="append",
                   help="split=path dataset CSV (repeatable)")
    _add_common(p)
    p.set_defaults(func=cmd_export_features)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.func is None:
        parser.print_help()
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigurationError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except FmdaError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


def entrypoint():
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
