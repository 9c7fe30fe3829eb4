"""End-to-end calibration of a composed ensemble.

The calibration loss for a labelled sample (x, y) is the negative log of the
ensemble's density-weighted true-class score,

    loss = -log( sum_j w_j * P_j[y] ),   w_j = p_j * exp(L_j - max_j L_j),

with the weights w_j treated as constants during differentiation: each
party's classifier receives upstream gradient -(w_j / score) on its local
posterior entry for y, so high-density parties update fastest. With a single
party this is exactly softmax cross-entropy.

Gradients across all parties are flattened into one vector so the optional
clip-and-noise mechanism (norm clipping plus Gaussian noise) treats the
composite model as a single unit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .datasets import LocalDataset
from .ensemble import EnsembleModel, evaluate_objective, decide

PROBABILITY_FLOOR = 1e-12


@dataclass
class MpceLossValue:
    """Loss value with the per-party weights that produced it."""

    value: float
    weights: np.ndarray


@dataclass
class ClipConfig:
    """Gradient post-processing: norm clip to ``clip_norm``, Gaussian noise."""

    clip_norm: float
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not (self.clip_norm > 0):
            raise ValueError(f"clip_norm must be positive, got {self.clip_norm}")
        if self.noise_sigma < 0:
            raise ValueError(f"noise_sigma must be nonnegative, got {self.noise_sigma}")


@dataclass
class CalibrationConfig:
    """Loop hyperparameters for ``calibrate``.

    ``update_density`` turns on gradient steps for differentiable density
    estimators (mixtures; kernel estimators have no parameters and are
    skipped). ``density_scope`` selects which samples feed a party's density
    gradient: "matching" restricts to samples whose label the party can see,
    "all" uses the whole batch.
    """

    lr: float = 1e-3
    batch: int = 64
    steps: int = 2000
    update_density: bool = False
    density_scope: str = "matching"
    clip: ClipConfig | None = None
    eval_every: int = 50

    def __post_init__(self):
        if not (self.lr > 0):
            raise ValueError(f"lr must be positive, got {self.lr}")
        if self.batch < 1:
            raise ValueError(f"batch must be at least 1, got {self.batch}")
        if self.steps < 0:
            raise ValueError(f"steps must be nonnegative, got {self.steps}")
        if self.density_scope not in ("matching", "all"):
            raise ValueError(f"density_scope must be 'matching' or 'all', got {self.density_scope!r}")
        if self.eval_every < 1:
            raise ValueError(f"eval_every must be at least 1, got {self.eval_every}")


@dataclass
class TraceRow:
    """One calibration step: loss always, held-out accuracy when evaluated."""

    step: int
    loss: float
    test_accuracy: float | None = None


def _batch_scores(ens: EnsembleModel, X: np.ndarray, y: np.ndarray):
    """Objective intermediates plus floored true-class scores for a batch."""
    om = evaluate_objective(ens, X)
    raw = om.objective[np.arange(len(y)), y]
    return om, np.maximum(raw, PROBABILITY_FLOOR), raw


def mpce_loss(ens: EnsembleModel, x: np.ndarray, y: int) -> MpceLossValue:
    """Negative log density-weighted true-class score for one sample."""
    if not (0 <= y < ens.num_classes):
        raise ValueError(f"label {y} outside [0, {ens.num_classes})")
    X = np.atleast_2d(np.asarray(x, dtype=np.float64))
    om, score, _ = _batch_scores(ens, X, np.array([y]))
    return MpceLossValue(float(-np.log(score[0])), om.weights[0])


def _theta_grads(ens: EnsembleModel, om, X: np.ndarray, y: np.ndarray, score: np.ndarray) -> list[np.ndarray]:
    """Per-party flat classifier gradients, summed over the batch."""
    grads = []
    coeff = om.weights / score[:, None]
    for j, party in enumerate(ens.parties):
        clf = party.classifier
        space = clf.label_space
        U = np.zeros((len(y), len(space)))
        pos = {c: i for i, c in enumerate(space)}
        for i, label in enumerate(y):
            li = pos.get(int(label))
            if li is not None:
                U[i, li] = -coeff[i, j]
        grads.append(clf.posterior_grad(X, U))
    return grads


def _mu_grads(ens: EnsembleModel, X: np.ndarray, y: np.ndarray, scope: str) -> list[np.ndarray]:
    """Per-party flat density gradients (NLL), empty block when nonparametric."""
    grads = []
    for party in ens.parties:
        est = party.estimator
        if not hasattr(est, "nll_grad"):
            grads.append(np.zeros(0))
            continue
        if scope == "all":
            sel = np.arange(len(y))
        else:
            space = set(party.classifier.label_space)
            sel = np.array([i for i, label in enumerate(y) if int(label) in space], dtype=int)
        if len(sel) == 0:
            grads.append(np.zeros(len(est.params)))
        else:
            grads.append(est.nll_grad(X[sel]))
    return grads


def _flatten(blocks: list[np.ndarray]) -> tuple[np.ndarray, list[slice]]:
    slices, start = [], 0
    for b in blocks:
        slices.append(slice(start, start + len(b)))
        start += len(b)
    flat = np.concatenate(blocks) if blocks else np.zeros(0)
    return flat, slices


def mpce_grad(
    ens: EnsembleModel,
    x: np.ndarray,
    y: int,
    update_density: bool = False,
    density_scope: str = "matching",
) -> np.ndarray:
    """Flat loss gradient: classifier blocks in party order, then density blocks."""
    X = np.atleast_2d(np.asarray(x, dtype=np.float64))
    ya = np.array([y])
    om, score, _ = _batch_scores(ens, X, ya)
    blocks = _theta_grads(ens, om, X, ya, score)
    if update_density:
        blocks += _mu_grads(ens, X, ya, density_scope)
    flat, _ = _flatten(blocks)
    return flat


def clip_and_noise(
    g: np.ndarray, cfg: ClipConfig, rng: np.random.Generator | None = None
) -> np.ndarray:
    """Scale g to norm at most clip_norm, then add N(0, (sigma*clip_norm)^2) noise."""
    g = np.asarray(g, dtype=np.float64)
    if not np.all(np.isfinite(g)):
        raise ValueError("gradient must be finite")
    norm = float(np.linalg.norm(g))
    out = g / max(1.0, norm / cfg.clip_norm)
    if cfg.noise_sigma > 0:
        if rng is None:
            rng = np.random.default_rng(cfg.seed)
        out = out + cfg.noise_sigma * cfg.clip_norm * rng.standard_normal(g.shape)
    return out


def ensemble_accuracy(ens: EnsembleModel, ds: LocalDataset) -> float:
    return float(np.mean(decide(ens, ds.features) == ds.labels))


def calibrate(
    ens: EnsembleModel,
    train: LocalDataset,
    cfg: CalibrationConfig,
    seed: int = 0,
    test: LocalDataset | None = None,
) -> tuple[EnsembleModel, list[TraceRow]]:
    """Run mini-batch gradient calibration in place; returns (ens, trace).

    Each step samples a batch, averages per-sample gradients into one flat
    vector, optionally clips and noises it, and applies -lr * grad to every
    party. Held-out accuracy is recorded every ``eval_every`` steps and at
    the final step. Deterministic for fixed seeds.
    """
    if len(train) == 0:
        raise ValueError("calibration needs a nonempty training set")
    if train.labels.size and int(train.labels.max()) >= ens.num_classes:
        raise ValueError("training labels exceed the ensemble's class count")
    rng = np.random.default_rng(seed)
    noise_rng = (
        np.random.default_rng(cfg.clip.seed)
        if cfg.clip is not None and cfg.clip.noise_sigma > 0
        else None
    )
    n = len(train)
    trace: list[TraceRow] = []
    for step in range(1, cfg.steps + 1):
        sel = rng.choice(n, size=min(cfg.batch, n), replace=False)
        X, y = train.features[sel], train.labels[sel]
        om, score, _ = _batch_scores(ens, X, y)
        loss = float(np.mean(-np.log(score)))
        if not np.isfinite(loss):
            raise RuntimeError(f"non-finite calibration loss {loss} at step {step}")
        blocks = _theta_grads(ens, om, X, y, score)
        if cfg.update_density:
            blocks += _mu_grads(ens, X, y, cfg.density_scope)
        blocks = [b / len(sel) for b in blocks]
        flat, slices = _flatten(blocks)
        if cfg.clip is not None:
            flat = clip_and_noise(flat, cfg.clip, noise_rng)
        N = ens.num_parties
        for j, party in enumerate(ens.parties):
            party.classifier.apply_grad(flat[slices[j]], cfg.lr)
        if cfg.update_density:
            for j, party in enumerate(ens.parties):
                block = flat[slices[N + j]]
                if len(block):
                    est = party.estimator
                    est.set_params(est.params - cfg.lr * block)
        acc = None
        if test is not None and (step % cfg.eval_every == 0 or step == cfg.steps):
            acc = ensemble_accuracy(ens, test)
        trace.append(TraceRow(step, loss, acc))
    return ens, trace
