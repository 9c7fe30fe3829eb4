"""Per-party density estimators: Gaussian KDE and diagonal-covariance GMM.

Both estimators expose ``log_density(X) -> (n,)`` so downstream code can mix
estimator families freely. Log-densities are floored at ``LOG_DENSITY_FLOOR``
so a query far from every shard exponentiates to a clean zero instead of
underflowing into NaN arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# exp(-745) is the smallest positive normal double; anything lower is 0 anyway.
LOG_DENSITY_FLOOR = -745.0
GMM_VARIANCE_FLOOR = 1e-6


def _logsumexp(a: np.ndarray, axis: int = -1) -> np.ndarray:
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    return np.squeeze(m, axis=axis) + np.log(np.sum(np.exp(a - m), axis=axis))


@dataclass
class KdeModel:
    """Isotropic Gaussian kernel density estimate over a training shard."""

    points: np.ndarray
    bandwidth: float

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise ValueError("KDE needs a nonempty (n, d) point matrix")
        if not (self.bandwidth > 0.0):
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth}")
        self.points = pts

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def log_density(self, X: np.ndarray) -> np.ndarray:
        """Mean-of-kernels log-density, evaluated batched and floored."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.dim:
            raise ValueError(f"query dim {X.shape[1]} != model dim {self.dim}")
        h2 = self.bandwidth**2
        # (n, m) squared distances without materialising the difference tensor
        sq = (
            np.sum(X**2, axis=1)[:, None]
            + np.sum(self.points**2, axis=1)[None, :]
            - 2.0 * X @ self.points.T
        )
        np.maximum(sq, 0.0, out=sq)
        log_kernels = -sq / (2.0 * h2)
        norm = np.log(len(self.points)) + 0.5 * self.dim * np.log(2.0 * np.pi * h2)
        return np.maximum(_logsumexp(log_kernels, axis=1) - norm, LOG_DENSITY_FLOOR)


def kde_fit(X: np.ndarray, bandwidth: float) -> KdeModel:
    return KdeModel(np.asarray(X, dtype=np.float64).copy(), bandwidth)


def kde_log_density(model: KdeModel, X: np.ndarray) -> np.ndarray:
    return model.log_density(X)


@dataclass
class GmmModel:
    """Gaussian mixture with diagonal covariances.

    Attributes:
        weights: (m,) mixture weights summing to 1.
        means: (m, d) component means.
        variances: (m, d) per-dimension variances, floored away from zero.
    """

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        mu = np.asarray(self.means, dtype=np.float64)
        var = np.asarray(self.variances, dtype=np.float64)
        if mu.ndim != 2 or w.shape != (mu.shape[0],) or var.shape != mu.shape:
            raise ValueError("inconsistent GMM parameter shapes")
        if np.any(w < 0) or not np.isclose(w.sum(), 1.0):
            raise ValueError("mixture weights must be nonnegative and sum to 1")
        if np.any(var <= 0):
            raise ValueError("variances must be positive")
        self.weights, self.means, self.variances = w, mu, var

    @property
    def num_components(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def component_log_densities(self, X: np.ndarray) -> np.ndarray:
        """(n, m) log N(x | mu_m, diag(var_m)) for each component."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.dim:
            raise ValueError(f"query dim {X.shape[1]} != model dim {self.dim}")
        diff = X[:, None, :] - self.means[None, :, :]
        mahal = np.sum(diff**2 / self.variances[None, :, :], axis=2)
        log_norm = 0.5 * (
            self.dim * np.log(2.0 * np.pi) + np.sum(np.log(self.variances), axis=1)
        )
        return -0.5 * mahal - log_norm[None, :]

    def responsibilities(self, X: np.ndarray) -> np.ndarray:
        """(n, m) posterior component memberships."""
        logj = self.component_log_densities(X) + np.log(self.weights)[None, :]
        logj -= _logsumexp(logj, axis=1)[:, None]
        return np.exp(logj)

    def log_density(self, X: np.ndarray) -> np.ndarray:
        logj = self.component_log_densities(X) + np.log(self.weights)[None, :]
        return np.maximum(_logsumexp(logj, axis=1), LOG_DENSITY_FLOOR)

    @property
    def params(self) -> np.ndarray:
        """Flat view for gradient updates: means, log-variances, weight logits."""
        return np.concatenate(
            [self.means.ravel(), np.log(self.variances).ravel(), np.log(self.weights)]
        )

    def set_params(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        m, d = self.means.shape
        if flat.shape != (2 * m * d + m,):
            raise ValueError(f"expected {2 * m * d + m} parameters, got {flat.shape}")
        self.means = flat[: m * d].reshape(m, d).copy()
        self.variances = np.maximum(
            np.exp(flat[m * d : 2 * m * d].reshape(m, d)), GMM_VARIANCE_FLOOR
        )
        logits = flat[2 * m * d :]
        self.weights = np.exp(logits - _logsumexp(logits, axis=0))

    def nll_grad(self, X: np.ndarray) -> np.ndarray:
        """Gradient of -log p(x) in ``params`` layout, summed over rows of X."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        resp = self.responsibilities(X)
        diff = X[:, None, :] - self.means[None, :, :]
        g_mean = -np.sum(resp[:, :, None] * diff / self.variances[None, :, :], axis=0)
        g_logvar = -0.5 * np.sum(
            resp[:, :, None] * (diff**2 / self.variances[None, :, :] - 1.0), axis=0
        )
        g_logit = X.shape[0] * self.weights - resp.sum(axis=0)
        return np.concatenate([g_mean.ravel(), g_logvar.ravel(), g_logit])


def _seed_means(X: np.ndarray, m: int, rng: np.random.Generator) -> np.ndarray:
    """Pick spread-out initial means: each next point is sampled with
    probability proportional to its squared distance from the chosen set."""
    n = X.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = np.sum((X - X[chosen[0]]) ** 2, axis=1)
    for _ in range(1, m):
        total = d2.sum()
        if total <= 0.0:
            chosen.append(int(rng.integers(n)))
        else:
            chosen.append(int(rng.choice(n, p=d2 / total)))
        d2 = np.minimum(d2, np.sum((X - X[chosen[-1]]) ** 2, axis=1))
    return X[chosen].copy()


def gmm_fit(
    X: np.ndarray,
    num_components: int,
    seed: int = 0,
    max_iter: int = 200,
    tol: float = 1e-6,
    loglik_trace: list | None = None,
) -> GmmModel:
    """Fit a diagonal-covariance GMM by EM.

    Means initialise to distance-weighted random training points; iteration
    stops when the mean log-likelihood improves by less than ``tol``. Passing
    a list as ``loglik_trace`` collects the per-iteration mean log-likelihood.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("GMM needs a nonempty (n, d) data matrix")
    n, d = X.shape
    m = min(num_components, n)
    if m < 1:
        raise ValueError("num_components must be at least 1")
    rng = np.random.default_rng(seed)
    means = _seed_means(X, m, rng)
    global_var = np.maximum(X.var(axis=0), GMM_VARIANCE_FLOOR)
    variances = np.tile(global_var, (m, 1))
    weights = np.full(m, 1.0 / m)
    model = GmmModel(weights, means, variances)
    prev = -np.inf
    for _ in range(max_iter):
        logj = model.component_log_densities(X) + np.log(model.weights)[None, :]
        log_px = _logsumexp(logj, axis=1)
        ll = float(np.mean(log_px))
        if loglik_trace is not None:
            loglik_trace.append(ll)
        resp = np.exp(logj - log_px[:, None])
        mass = resp.sum(axis=0)
        mass = np.maximum(mass, 1e-12)
        means = (resp.T @ X) / mass[:, None]
        sq = resp.T @ (X**2) / mass[:, None] - means**2
        variances = np.maximum(sq, GMM_VARIANCE_FLOOR)
        weights = mass / mass.sum()
        model = GmmModel(weights, means, variances)
        if ll - prev < tol:
            break
        prev = ll
    return model


def gmm_log_density(model: GmmModel, X: np.ndarray) -> np.ndarray:
    return model.log_density(X)
