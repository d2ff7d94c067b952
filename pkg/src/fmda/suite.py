"""Multi-trial experiment runner and feature-space export.

Replicates the evaluation protocol: per trial, one pre-trained model is
shared across all methods, each adapted method gets a fresh few-shot draw,
and macro F1 is tracked on the held-out target split. Results aggregate to
mean +/- SD at the final step and at the best step of the mean curve.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .config import (
    ADAPTED_METHODS,
    METHODS,
    N_INDEPENDENT_METHODS,
    RunConfig,
    STREAM_FEWSHOT,
    trial_stream,
)
from .dann import train_dann
from .datagen import GeneratedPair
from .datasets import LabeledDataset
from .errors import ConfigurationError, LeakageError
from .metrics import evaluate_model, pca_fit, pca_project
from .model import Checkpoint, forward
from .sampling import FewShotSplit, draw_fewshot
from .train import adapt, pretrain


def check_no_leakage(split: FewShotSplit):
    """Hard guarantee that the few-shot train ids stay out of the test split."""
    overlap = set(split.train_ids) & set(split.test_ids)
    if overlap:
        raise LeakageError(
            f"few-shot train ids leaked into the test split: {sorted(overlap)[:5]}"
        )


@dataclass
class SuiteReport:
    """Aggregated multi-trial comparison across methods and n values."""

    config: dict
    spec: dict | None
    methods: list
    n_values: list
    trials: int
    results: list      # entries sorted by (method order, n order)
    warnings: list

    def entry(self, method: str, n: int | None = None) -> dict:
        for e in self.results:
            if e["method"] == method and e["n"] == n:
                return e
        raise KeyError(f"no suite entry for method={method!r}, n={n}")

    def final_mean(self, method: str, n: int | None = None) -> float:
        return self.entry(method, n)["final"]["mean"]

    def to_dict(self) -> dict:
        return {
            "format": "fmda-suite-report",
            "format_version": 1,
            "config": self.config,
            "shift_spec": self.spec,
            "methods": self.methods,
            "n_values": self.n_values,
            "trials": self.trials,
            "results": self.results,
            "warnings": self.warnings,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")) + "\n"

    def flat_curves_csv(self) -> str:
        """Per-evaluation rows for plotting: method,n,trial,iteration,macro_f1."""
        lines = ["method,n,trial,iteration,macro_f1"]
        for e in self.results:
            n_txt = "" if e["n"] is None else str(e["n"])
            for c in e["curves"]:
                for it, f1 in zip(c["iterations"], c["macro_f1"]):
                    lines.append(f"{e['method']},{n_txt},{c['trial']},{it},{repr(f1)}")
        return "\n".join(lines) + "\n"


def _run_trial(pair: GeneratedPair, methods, n_list, config: RunConfig, trial: int) -> dict:
    """One trial: shared pretraining, then every (method, n) combination.

    Returns {(method, n or None): curve} with curves as (iteration, f1) lists.
    """
    ck = pretrain(pair.source, config, trial=trial)
    out = {}
    for method in methods:
        if method == "without-target":
            report = evaluate_model(ck.params, pair.target)
            out[(method, None)] = [(0, report.macro_f1)]
        elif method == "dann":
            cfg = replace(config, method="dann")
            _, curve = train_dann(
                pair.source, pair.target, cfg, init=ck, trial=trial, test=pair.target
            )
            out[(method, None)] = curve
    for n in n_list:
        split = draw_fewshot(
            pair.target, n, trial_stream(config.seed, trial, STREAM_FEWSHOT),
            n_classes=config.n_classes,
        )
        check_no_leakage(split)
        fewshot = pair.target.subset_ids(split.train_ids)
        test = pair.target.subset_ids(split.test_ids)
        for method in methods:
            if method in N_INDEPENDENT_METHODS:
                continue
            cfg = replace(config, method=method, n=n)
            _, curve = adapt(ck, pair.source, fewshot, cfg, target_test=test, trial=trial)
            out[(method, n)] = curve
    return out


def run_suite(
    pair: GeneratedPair,
    methods,
    n_list,
    trials: int | None = None,
    config: RunConfig | None = None,
    jobs: int = 1,
) -> SuiteReport:
    """Run the full comparison grid and aggregate across trials.

    Adapted methods run once per (n, trial) on that trial's few-shot split;
    'without-target' and 'dann' ignore n and use the full target pool.
    Deterministic for a fixed config (identical reports byte for byte).
    """
    if config is None:
        raise ConfigurationError("run_suite needs a RunConfig")
    methods = list(dict.fromkeys(methods))
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise ConfigurationError(f"unknown methods: {', '.join(unknown)}")
    n_list = list(dict.fromkeys(int(n) for n in n_list))
    if any(n < 1 for n in n_list):
        raise ConfigurationError("every n must be >= 1")
    trials = config.trials if trials is None else int(trials)
    if trials < 1:
        raise ConfigurationError("trials must be >= 1")

    warnings = []
    adapted = [m for m in methods if m in ADAPTED_METHODS]
    if adapted and not n_list:
        warnings.append(f"skipping {', '.join(adapted)}: no n values given")
        methods = [m for m in methods if m not in ADAPTED_METHODS]
    for m in methods:
        if m in N_INDEPENDENT_METHODS and n_list:
            warnings.append(f"method {m} ignores n; evaluated once per trial")

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [
                pool.submit(_run_trial, pair, methods, n_list, config, t)
                for t in range(trials)
            ]
            per_trial = [f.result() for f in futures]
    else:
        per_trial = [_run_trial(pair, methods, n_list, config, t) for t in range(trials)]

    keys = []
    for m in methods:
        if m in N_INDEPENDENT_METHODS:
            keys.append((m, None))
        else:
            keys.extend((m, n) for n in n_list)

    results = []
    for method, n in keys:
        curves = [per_trial[t][(method, n)] for t in range(trials)]
        iters = [it for it, _ in curves[0]]
        for c in curves[1:]:
            if [it for it, _ in c] != iters:
                raise ConfigurationError("trial curves are misaligned")
        values = np.array([[f1 for _, f1 in c] for c in curves])  # trials x evals
        finals = values[:, -1]
        mean_curve = values.mean(axis=0)
        best_idx = int(np.argmax(mean_curve))
        results.append(
            {
                "method": method,
                "n": n,
                "final": {
                    "mean": float(finals.mean()),
                    "sd": _sd(finals),
                    "per_trial": [float(v) for v in finals],
                },
                "best": {
                    "mean": float(mean_curve[best_idx]),
                    "sd": _sd(values[:, best_idx]),
                    "iteration": int(iters[best_idx]),
                },
                "curves": [
                    {
                        "trial": t,
                        "iterations": [int(it) for it, _ in curves[t]],
                        "macro_f1": [float(f1) for _, f1 in curves[t]],
                    }
                    for t in range(trials)
                ],
            }
        )
    return SuiteReport(
        config=config.to_dict(),
        spec=pair.spec.to_dict() if pair.spec is not None else None,
        methods=methods,
        n_values=n_list,
        trials=trials,
        results=results,
        warnings=warnings,
    )


def _sd(values) -> float:
    values = np.asarray(values, dtype=np.float64)
    if values.size < 2:
        return 0.0
    return float(values.std(ddof=1))


def export_features(checkpoint: Checkpoint, datasets, path):
    """Write features and a 2-D principal-component projection to CSV.

    `datasets` maps split names to LabeledDatasets (dict or (name, dataset)
    pairs). The projection is fitted on the union of all exported features.
    Columns: id,domain,label,split,f_0..f_{k-1},pc1,pc2.
    """
    items = list(datasets.items()) if isinstance(datasets, dict) else list(datasets)
    if not items:
        raise ConfigurationError("export_features needs at least one dataset")
    feats = []
    for _, ds in items:
        feats.append(forward(checkpoint.params, ds.features).features)
    union = np.vstack(feats)
    mean, comps = pca_fit(union, k=2)

    k = union.shape[1]
    header = (
        "id,domain,label,split,"
        + ",".join(f"f_{j}" for j in range(k))
        + ",pc1,pc2"
    )
    lines = [header]
    for (name, ds), f in zip(items, feats):
        proj = pca_project(f, mean, comps)
        for row in range(len(ds)):
            vals = ",".join(repr(float(v)) for v in f[row])
            pc = f"{repr(float(proj[row, 0]))},{repr(float(proj[row, 1]))}"
            lines.append(
                f"{int(ds.ids[row])},{ds.domain},{int(ds.labels[row])},{name},{vals},{pc}"
            )
    from .errors import FmdaError

    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as e:
        raise FmdaError(f"failed writing features {path}: {e}") from e
    return path
