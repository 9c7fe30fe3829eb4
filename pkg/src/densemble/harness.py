"""Experiment orchestration: configs, presets, pipelines, sweeps.

An experiment is fully described by an ``ExperimentConfig``: data geometry,
partition rules, per-party model choices, and an optional calibration block.
All randomness descends from one root seed, split into four named streams
(data, init, batching, noise) so reruns and sweeps are reproducible while
stages stay independently perturbable.
"""

from __future__ import annotations

import importlib.resources
import json
import os
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import classifiers, serialize
from .calibration import (
    CalibrationConfig,
    ClipConfig,
    TraceRow,
    calibrate,
    ensemble_accuracy,
)
from .datasets import (
    LocalDataset,
    PartitionSpec,
    generate_toy,
    partition,
    split_train_test,
    write_csv,
)
from .density import gmm_fit, kde_fit
from .ensemble import (
    EnsembleModel,
    PartyModel,
    build_ensemble,
    evaluate_objective,
    max_model_decide,
)

PRESET_NAMES = ("toy3", "splitA", "splitB", "splitC", "splitD")


@dataclass
class DataConfig:
    n: int = 2000
    num_classes: int = 5
    train_ratio: float = 0.7


@dataclass
class ClassifierConfig:
    type: str = "softmax_regression"
    hidden: int = 32
    lr: float = 1e-4
    epochs: int = 1
    batch: int = 32


@dataclass
class EstimatorConfig:
    type: str = "kde"
    bandwidth: float = 0.1
    components: int = 4


@dataclass
class PartyConfig:
    classifier: ClassifierConfig
    estimator: EstimatorConfig


@dataclass
class ExperimentConfig:
    """Everything needed to rerun an experiment deterministically."""

    seed: int = 0
    data: DataConfig = field(default_factory=DataConfig)
    partition: PartitionSpec = None
    parties: list[PartyConfig] = field(default_factory=list)
    calibration: CalibrationConfig | None = None
    calibrate_from_raw: bool = False
    out_dir: str | None = None

    def __post_init__(self):
        if self.partition is None:
            raise ValueError("partition: missing")
        if len(self.parties) != len(self.partition.parties):
            raise ValueError(
                f"parties: got {len(self.parties)} model configs for "
                f"{len(self.partition.parties)} partition rules"
            )
        for j, pc in enumerate(self.parties):
            if pc.classifier.type not in ("softmax_regression", "mlp"):
                raise ValueError(
                    f"parties[{j}].classifier.type: unknown {pc.classifier.type!r}"
                )
            if pc.estimator.type not in ("kde", "gmm"):
                raise ValueError(
                    f"parties[{j}].estimator.type: unknown {pc.estimator.type!r}"
                )


@dataclass
class MetricsReport:
    """Accuracies, calibration trace, and stage timings of one experiment."""

    seed: int
    ensemble_accuracy: float
    max_model_accuracy: float
    local_accuracies: list[float]
    calibrated_accuracy: float | None
    trace: list[TraceRow]
    timings: dict[str, float]
    stream_seeds: dict[str, int]


def _clf_config_from_dict(d: dict, path: str) -> ClassifierConfig:
    cfg = ClassifierConfig()
    allowed = {"type", "hidden", "lr", "epochs", "batch"}
    for key, value in d.items():
        if key not in allowed:
            raise ValueError(f"{path}.{key}: unknown field")
        setattr(cfg, key, value)
    return cfg


def _est_config_from_dict(d: dict, path: str) -> EstimatorConfig:
    cfg = EstimatorConfig()
    allowed = {"type", "bandwidth", "components"}
    for key, value in d.items():
        if key not in allowed:
            raise ValueError(f"{path}.{key}: unknown field")
        setattr(cfg, key, value)
    return cfg


def _calibration_from_dict(d: dict, path: str) -> CalibrationConfig:
    kwargs = dict(d)
    clip = kwargs.pop("clip", None)
    if clip is not None:
        clip = ClipConfig(
            clip_norm=float(clip["clip_norm"]),
            noise_sigma=float(clip.get("noise_sigma", 0.0)),
            seed=int(clip.get("seed", 0)),
        )
    allowed = {"lr", "batch", "steps", "update_density", "density_scope", "eval_every"}
    unknown = set(kwargs) - allowed
    if unknown:
        raise ValueError(f"{path}.{sorted(unknown)[0]}: unknown field")
    try:
        return CalibrationConfig(clip=clip, **kwargs)
    except (TypeError, ValueError) as err:
        raise ValueError(f"{path}: {err}") from None


def config_from_dict(doc: dict) -> ExperimentConfig:
    """Parse and validate a config document; errors name the failing field."""
    if "partition" not in doc:
        raise ValueError("partition: missing")
    try:
        part = PartitionSpec.from_dict(doc["partition"])
    except (KeyError, TypeError, ValueError) as err:
        raise ValueError(f"partition: {err}") from None
    data_doc = doc.get("data", {})
    data = DataConfig(
        n=int(data_doc.get("n", 2000)),
        num_classes=int(data_doc.get("num_classes", 5)),
        train_ratio=float(data_doc.get("train_ratio", 0.7)),
    )
    if data.n < 0:
        raise ValueError("data.n: must be nonnegative")
    if not (0 < data.train_ratio < 1):
        raise ValueError("data.train_ratio: outside (0, 1)")
    parties = [
        PartyConfig(
            classifier=_clf_config_from_dict(
                p.get("classifier", {}), f"parties[{j}].classifier"
            ),
            estimator=_est_config_from_dict(
                p.get("estimator", {}), f"parties[{j}].estimator"
            ),
        )
        for j, p in enumerate(doc.get("parties", []))
    ]
    cal = doc.get("calibration")
    calibration = _calibration_from_dict(cal, "calibration") if cal else None
    return ExperimentConfig(
        seed=int(doc.get("seed", 0)),
        data=data,
        partition=part,
        parties=parties,
        calibration=calibration,
        calibrate_from_raw=bool(doc.get("calibrate_from_raw", False)),
        out_dir=doc.get("out_dir"),
    )


def config_to_dict(cfg: ExperimentConfig) -> dict:
    doc = {
        "seed": cfg.seed,
        "data": {
            "n": cfg.data.n,
            "num_classes": cfg.data.num_classes,
            "train_ratio": cfg.data.train_ratio,
        },
        "partition": cfg.partition.to_dict(),
        "parties": [
            {
                "classifier": {
                    "type": p.classifier.type,
                    "hidden": p.classifier.hidden,
                    "lr": p.classifier.lr,
                    "epochs": p.classifier.epochs,
                    "batch": p.classifier.batch,
                },
                "estimator": {
                    "type": p.estimator.type,
                    "bandwidth": p.estimator.bandwidth,
                    "components": p.estimator.components,
                },
            }
            for p in cfg.parties
        ],
        "calibrate_from_raw": cfg.calibrate_from_raw,
    }
    if cfg.calibration is not None:
        c = cfg.calibration
        doc["calibration"] = {
            "lr": c.lr,
            "batch": c.batch,
            "steps": c.steps,
            "update_density": c.update_density,
            "density_scope": c.density_scope,
            "eval_every": c.eval_every,
        }
        if c.clip is not None:
            doc["calibration"]["clip"] = {
                "clip_norm": c.clip.clip_norm,
                "noise_sigma": c.clip.noise_sigma,
                "seed": c.clip.seed,
            }
    return doc


def load_config(name_or_path: str) -> ExperimentConfig:
    """Load a config from a file path or a shipped preset name."""
    if os.path.exists(name_or_path):
        with open(name_or_path) as fh:
            return config_from_dict(json.load(fh))
    if name_or_path in PRESET_NAMES:
        text = (
            importlib.resources.files("densemble")
            .joinpath(f"presets/{name_or_path}.json")
            .read_text()
        )
        return config_from_dict(json.loads(text))
    raise ValueError(
        f"config {name_or_path!r} is neither a file nor a preset "
        f"(presets: {', '.join(PRESET_NAMES)})"
    )


def stream_seeds(root_seed: int, num_parties: int) -> dict:
    """Named reproducible seed streams derived from one root seed."""
    data_ss, init_ss, batch_ss, noise_ss = np.random.SeedSequence(root_seed).spawn(4)
    gen, split, part = (int(v) for v in data_ss.generate_state(3))
    init = [int(v) for v in init_ss.generate_state(max(num_parties, 1) * 2)]
    batching = [int(v) for v in batch_ss.generate_state(max(num_parties, 1) + 1)]
    noise = int(noise_ss.generate_state(1)[0])
    return {
        "data": gen,
        "split": split,
        "partition": part,
        "init": init,
        "batching": batching,
        "noise": noise,
    }


def build_party(
    pcfg: PartyConfig,
    shard: LocalDataset,
    init_seed: int,
    est_seed: int,
    train_seed: int,
    pretrain: bool,
) -> PartyModel:
    """Initialize, optionally train, and bundle one party's models."""
    rng = np.random.default_rng(init_seed)
    cc = pcfg.classifier
    if cc.type == "softmax_regression":
        clf = classifiers.SoftmaxRegression.init_random(shard.dim, shard.label_space, rng)
    else:
        clf = classifiers.MlpClassifier.init_random(
            shard.dim, shard.label_space, cc.hidden, rng
        )
    if pretrain:
        classifiers.train(
            clf, shard, lr=cc.lr, epochs=cc.epochs, batch=cc.batch, seed=train_seed
        )
    ec = pcfg.estimator
    if ec.type == "kde":
        est = kde_fit(shard.features, ec.bandwidth)
    else:
        est = gmm_fit(shard.features, ec.components, seed=est_seed)
    return PartyModel(clf, est, len(shard))


def prepare_data(
    cfg: ExperimentConfig, seeds: dict
) -> tuple[LocalDataset, LocalDataset, list[LocalDataset]]:
    """Generate, split, and partition the experiment's dataset."""
    full = generate_toy(seeds["data"], cfg.data.n, cfg.data.num_classes)
    train_ds, test_ds = split_train_test(full, cfg.data.train_ratio, seeds["split"])
    spec = PartitionSpec(cfg.partition.parties, seed=seeds["partition"])
    return train_ds, test_ds, partition(train_ds, spec)


def local_accuracy(clf, test_ds: LocalDataset) -> float:
    """Classifier accuracy on the test samples it could possibly label."""
    mask = np.isin(test_ds.labels, list(clf.label_space))
    if not mask.any():
        return float("nan")
    sub = test_ds.subset(np.where(mask)[0], label_space=clf.label_space)
    return classifiers.accuracy(clf, sub)


def run_experiment(cfg: ExperimentConfig) -> MetricsReport:
    """Full pipeline: data, local training, zero-shot evaluation, calibration.

    When ``cfg.out_dir`` is set, all artifacts (config echo, datasets, model
    files, predictions, metrics, trace) are written there. The metrics and
    predictions files are byte-stable across reruns of the same config.
    """
    seeds = stream_seeds(cfg.seed, len(cfg.parties))
    timings: dict[str, float] = {}
    t0 = time.perf_counter()
    train_ds, test_ds, shards = prepare_data(cfg, seeds)
    timings["data"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    parties = [
        build_party(
            pcfg,
            shard,
            init_seed=seeds["init"][2 * j],
            est_seed=seeds["init"][2 * j + 1],
            train_seed=seeds["batching"][j],
            pretrain=not cfg.calibrate_from_raw,
        )
        for j, (pcfg, shard) in enumerate(zip(cfg.parties, shards))
    ]
    ens = build_ensemble(parties, num_classes=cfg.data.num_classes)
    timings["train_local"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    om = evaluate_objective(ens, test_ds.features)
    ens_labels = np.argmax(om.objective, axis=1)
    ens_acc = float(np.mean(ens_labels == test_ds.labels))
    mm_labels = max_model_decide(ens, test_ds.features)
    mm_acc = float(np.mean(mm_labels == test_ds.labels))
    local_accs = [local_accuracy(p.classifier, test_ds) for p in parties]
    timings["eval_zeroshot"] = time.perf_counter() - t0

    calibrated_acc = None
    trace: list[TraceRow] = []
    if cfg.calibration is not None:
        t0 = time.perf_counter()
        cal_cfg = cfg.calibration
        if cal_cfg.clip is not None:
            cal_cfg = replace(cal_cfg, clip=replace(cal_cfg.clip, seed=seeds["noise"]))
        _, trace = calibrate(
            ens, train_ds, cal_cfg, seed=seeds["batching"][-1], test=test_ds
        )
        calibrated_acc = ensemble_accuracy(ens, test_ds)
        timings["calibrate"] = time.perf_counter() - t0

    report = MetricsReport(
        seed=cfg.seed,
        ensemble_accuracy=ens_acc,
        max_model_accuracy=mm_acc,
        local_accuracies=local_accs,
        calibrated_accuracy=calibrated_acc,
        trace=trace,
        timings=timings,
        stream_seeds={k: v for k, v in seeds.items() if isinstance(v, int)},
    )
    if cfg.out_dir:
        _write_artifacts(cfg, seeds, train_ds, test_ds, shards, ens, om, report, mm_labels)
    return report


def _write_artifacts(cfg, seeds, train_ds, test_ds, shards, ens, om, report, mm_labels):
    out = cfg.out_dir
    os.makedirs(out, exist_ok=True)
    echo = config_to_dict(cfg)
    echo["stream_seeds"] = {
        "data": seeds["data"],
        "split": seeds["split"],
        "partition": seeds["partition"],
        "init": seeds["init"],
        "batching": seeds["batching"],
        "noise": seeds["noise"],
    }
    with open(os.path.join(out, "config.json"), "w") as fh:
        json.dump(echo, fh, indent=2)
        fh.write("\n")
    write_csv(train_ds, os.path.join(out, "train.csv"))
    write_csv(test_ds, os.path.join(out, "test.csv"))
    for j, shard in enumerate(shards):
        write_csv(shard, os.path.join(out, f"shard_{j}.csv"))
    serialize.save_ensemble(ens, out)
    ens_labels = np.argmax(om.objective, axis=1)
    serialize.write_predictions(
        os.path.join(out, "predictions_ensemble.csv"), ens_labels, om.objective
    )
    serialize.write_predictions(os.path.join(out, "predictions_max_model.csv"), mm_labels)
    write_metrics_csv(os.path.join(out, "metrics.csv"), report)
    with open(os.path.join(out, "metrics.json"), "w") as fh:
        json.dump(
            {
                "seed": report.seed,
                "ensemble_accuracy": report.ensemble_accuracy,
                "max_model_accuracy": report.max_model_accuracy,
                "local_accuracies": report.local_accuracies,
                "calibrated_accuracy": report.calibrated_accuracy,
                "timings": report.timings,
                "stream_seeds": echo["stream_seeds"],
            },
            fh,
            indent=2,
        )
        fh.write("\n")
    if report.trace:
        serialize.write_trace(os.path.join(out, "trace.csv"), report.trace)


def write_metrics_csv(path, report: MetricsReport) -> None:
    """Deterministic ``method,accuracy`` rows (no timings, no wall clock)."""
    with open(path, "w") as fh:
        fh.write("method,accuracy\n")
        fh.write(f"ensemble,{repr(report.ensemble_accuracy)}\n")
        fh.write(f"max_model,{repr(report.max_model_accuracy)}\n")
        for j, acc in enumerate(report.local_accuracies):
            fh.write(f"party_{j},{repr(acc)}\n")
        if report.calibrated_accuracy is not None:
            fh.write(f"calibrated,{repr(report.calibrated_accuracy)}\n")


def sweep(
    cfg: ExperimentConfig, num_seeds: int, base_seed: int = 0, out_dir: str | None = None
) -> list[MetricsReport]:
    """Run the experiment across consecutive seeds; optionally write a summary."""
    if num_seeds < 1:
        raise ValueError("num_seeds must be at least 1")
    reports = []
    for s in range(base_seed, base_seed + num_seeds):
        run_cfg = replace(cfg, seed=s, out_dir=None)
        reports.append(run_experiment(run_cfg))
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        write_sweep_csv(os.path.join(out_dir, "sweep.csv"), reports)
    return reports


def sweep_summary(reports: list[MetricsReport]) -> dict[str, tuple[float, float]]:
    """Mean and standard deviation per method across a sweep."""
    methods: dict[str, list[float]] = {"ensemble": [], "max_model": []}
    for r in reports:
        methods["ensemble"].append(r.ensemble_accuracy)
        methods["max_model"].append(r.max_model_accuracy)
        for j, acc in enumerate(r.local_accuracies):
            methods.setdefault(f"party_{j}", []).append(acc)
        if r.calibrated_accuracy is not None:
            methods.setdefault("calibrated", []).append(r.calibrated_accuracy)
    return {
        name: (float(np.mean(vals)), float(np.std(vals)))
        for name, vals in methods.items()
        if vals
    }


def write_sweep_csv(path, reports: list[MetricsReport]) -> None:
    summary = sweep_summary(reports)
    with open(path, "w") as fh:
        fh.write("method,mean,std\n")
        for name, (mean, std) in summary.items():
            fh.write(f"{name},{repr(mean)},{repr(std)}\n")
