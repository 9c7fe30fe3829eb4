"""Density-weighted combination of per-party classifiers.

The global decision rule scores class k for query x as

    J[k] = sum_j p_j * P_j[k] * exp(L_j - max_j L_j)

where P_j is party j's zero-filled posterior, L_j its log-density at x, and
p_j its shard-size prior. Subtracting the per-query max log-density before
exponentiating keeps every weight in [0, 1] without moving the argmax, so
parties whose density underflows simply drop out of the sum.

``max_model_decide`` is the degenerate baseline that hands each query to the
single highest-density party; forcing the ensemble's lambda weights to a
one-hot at that party reproduces it exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .classifiers import global_posterior


@dataclass
class PartyModel:
    """One party's contribution: classifier, density estimator, shard size."""

    classifier: object
    estimator: object
    shard_size: int

    def __post_init__(self):
        if self.shard_size < 1:
            raise ValueError(f"shard_size must be at least 1, got {self.shard_size}")


@dataclass
class EnsembleModel:
    """Parties plus their shard-size priors and the global class count."""

    parties: list[PartyModel]
    priors: np.ndarray
    num_classes: int

    def __post_init__(self):
        if not self.parties:
            raise ValueError("ensemble needs at least one party")
        p = np.asarray(self.priors, dtype=np.float64)
        if p.shape != (len(self.parties),):
            raise ValueError("one prior per party required")
        if np.any(p <= 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("priors must be positive and sum to 1")
        for i, party in enumerate(self.parties):
            space = party.classifier.label_space
            if space and max(space) >= self.num_classes:
                raise ValueError(
                    f"parties[{i}] label_space {space} exceeds num_classes {self.num_classes}"
                )
        self.priors = p

    @property
    def num_parties(self) -> int:
        return len(self.parties)


@dataclass
class ObjectiveMatrix:
    """All intermediates of one batched objective evaluation.

    Shapes for n queries, N parties, K classes:
        posteriors (n, N, K), loglik (n, N), rowmax (n,),
        weights (n, N), objective (n, K).
    """

    posteriors: np.ndarray
    loglik: np.ndarray
    rowmax: np.ndarray
    weights: np.ndarray
    objective: np.ndarray


def build_ensemble(parties: list[PartyModel], num_classes: int | None = None) -> EnsembleModel:
    """Normalize shard sizes into priors; infer K from label spaces if absent."""
    if not parties:
        raise ValueError("ensemble needs at least one party")
    sizes = np.array([p.shard_size for p in parties], dtype=np.float64)
    if num_classes is None:
        num_classes = 1 + max(
            max(p.classifier.label_space) for p in parties if p.classifier.label_space
        )
    return EnsembleModel(parties, sizes / sizes.sum(), num_classes)


def evaluate_objective(ens: EnsembleModel, queries: np.ndarray) -> ObjectiveMatrix:
    """Score every query against every class; pure given frozen parties."""
    X = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    if not np.all(np.isfinite(X)):
        raise ValueError("queries must be finite")
    K = ens.num_classes
    P = np.stack(
        [global_posterior(p.classifier, X, K) for p in ens.parties], axis=1
    )
    L = np.stack([p.estimator.log_density(X) for p in ens.parties], axis=1)
    rowmax = L.max(axis=1)
    W = ens.priors[None, :] * np.exp(L - rowmax[:, None])
    J = np.einsum("njk,nj->nk", P, W)
    return ObjectiveMatrix(P, L, rowmax, W, J)


def decide(ens: EnsembleModel, queries: np.ndarray) -> np.ndarray:
    """Global labels: argmax_k J[i][k], ties toward the lowest class index."""
    return np.argmax(evaluate_objective(ens, queries).objective, axis=1)


def lambda_weights(ens: EnsembleModel, x: np.ndarray) -> np.ndarray:
    """Per-query posterior over parties: normalized density-prior weights."""
    X, single = (x[None, :], True) if np.asarray(x).ndim == 1 else (x, False)
    W = evaluate_objective(ens, X).weights
    lam = W / W.sum(axis=1, keepdims=True)
    return lam[0] if single else lam


def posterior(ens: EnsembleModel, queries: np.ndarray) -> np.ndarray:
    """Normalized global posterior: lambda-weighted sum of party posteriors."""
    om = evaluate_objective(ens, queries)
    return om.objective / om.weights.sum(axis=1, keepdims=True)


def decide_with_weights(ens: EnsembleModel, queries: np.ndarray, lam: np.ndarray) -> np.ndarray:
    """Decision under externally supplied per-query party weights.

    Used to state the max-model equivalence as an executable check: passing a
    one-hot at the argmax-density party must reproduce ``max_model_decide``.
    """
    om = evaluate_objective(ens, queries)
    lam = np.atleast_2d(np.asarray(lam, dtype=np.float64))
    J = np.einsum("njk,nj->nk", om.posteriors, lam)
    return np.argmax(J, axis=1)


def max_model_decide(ens: EnsembleModel, queries: np.ndarray) -> np.ndarray:
    """Delegate each query to its highest-density party, ignoring priors.

    Ties go to the lowest party index, then the lowest class index.
    """
    om = evaluate_objective(ens, queries)
    best = np.argmax(om.loglik, axis=1)
    rows = om.posteriors[np.arange(len(best)), best]
    return np.argmax(rows, axis=1)
