"""Epsilon-insensitive support vector regression trained by SMO.

Features are z-scored with training statistics stored inside the model.
The dual is solved with maximal-violating-pair working-set selection to a
KKT tolerance of 1e-3; training is deterministic for a fixed row order.
Models serialise to a versioned JSON document whose reload reproduces
predictions exactly.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    _HAVE_NUMBA = False

__all__ = [
    "Hyperparams",
    "SvrModel",
    "train_svr",
    "predict",
    "grid_search",
    "default_grid",
    "save_model",
    "load_model",
    "model_to_dict",
    "model_from_dict",
]

MODEL_FORMAT_VERSION = 1

_KKT_TOL = 1e-3
_MAX_SMO_ITER = 100_000
_TAU = 1e-12


@dataclass(frozen=True)
class Hyperparams:
    C: float = 1.0
    epsilon: float = 0.1
    gamma: float = 0.125  # rbf width; ignored by the linear kernel

    def __post_init__(self):
        if self.C <= 0:
            raise ValueError("C must be positive")
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")


@dataclass(frozen=True)
class SvrModel:
    kernel: str  # "linear" | "rbf"
    hyperparams: Hyperparams
    mean: np.ndarray
    std: np.ndarray
    feature_names: tuple[str, ...]
    bias: float
    coefficients: np.ndarray | None = None  # linear: weight per feature
    support_vectors: np.ndarray | None = None  # rbf: (n_sv, n_features), standardised
    dual_coefs: np.ndarray | None = None

    def __post_init__(self):
        if self.kernel not in ("linear", "rbf"):
            raise ValueError(f"unknown kernel {self.kernel!r}")
        if len(self.feature_names) != self.mean.size:
            raise ValueError("feature_names length must match feature count")
        if np.any(self.std <= 0):
            raise ValueError("standardisation stddevs must be positive")
        if self.kernel == "linear" and self.coefficients is None:
            raise ValueError("linear model needs coefficients")
        if self.kernel == "rbf" and (
            self.support_vectors is None or self.dual_coefs is None
        ):
            raise ValueError("rbf model needs support vectors and dual coefs")

    @property
    def n_features(self) -> int:
        return self.mean.size


def _standardise_fit(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std = np.where(std > 0, std, 1.0)  # constant features pass through as zeros
    return mean, std


def _kernel_matrix(kernel: str, A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    if kernel == "linear":
        return A @ B.T
    sq = (
        np.sum(A * A, axis=1)[:, None]
        + np.sum(B * B, axis=1)[None, :]
        - 2.0 * (A @ B.T)
    )
    return np.exp(-gamma * np.maximum(sq, 0.0))


def _smo_loop(K, y, C, epsilon, tol, max_iter):
    """Maximal-violating-pair SMO on the 2n-variable SVR dual.

    Scalar loop written to be numba-compilable; the alpha block occupies
    beta[:n] (sign +1) and the alpha* block beta[n:] (sign -1).  Returns the
    final (beta, grad, converged).
    """
    n = y.size
    beta = np.zeros(2 * n)
    grad = np.empty(2 * n)
    for p in range(n):
        grad[p] = epsilon - y[p]
        grad[n + p] = epsilon + y[p]

    converged = False
    for _ in range(max_iter):
        m_val = -np.inf
        m_idx = -1
        mm_val = np.inf
        mm_idx = -1
        for p in range(2 * n):
            if p < n:
                v = -grad[p]
                in_up = beta[p] < C
                in_low = beta[p] > 0.0
            else:
                v = grad[p]
                in_up = beta[p] > 0.0
                in_low = beta[p] < C
            if in_up and v > m_val:
                m_val = v
                m_idx = p
            if in_low and v < mm_val:
                mm_val = v
                mm_idx = p
        if m_idx < 0 or mm_idx < 0 or m_val - mm_val < tol:
            converged = True
            break

        i = m_idx
        j = mm_idx
        s_i = 1.0 if i < n else -1.0
        s_j = 1.0 if j < n else -1.0
        a = i if i < n else i - n
        b = j if j < n else j - n
        # curvature along a feasible pair direction is K_aa + K_bb - 2 K_ab
        # for either sign combination (the signs cancel in the cross term)
        quad = K[a, a] + K[b, b] - 2.0 * K[a, b]
        if quad < _TAU:
            quad = _TAU
        old_i = beta[i]
        old_j = beta[j]
        if s_i != s_j:
            delta = (-grad[i] - grad[j]) / quad
            diff = old_i - old_j
            beta[i] += delta
            beta[j] += delta
            if diff > 0.0:
                if beta[j] < 0.0:
                    beta[j] = 0.0
                    beta[i] = diff
                if beta[i] > C:
                    beta[i] = C
                    beta[j] = C - diff
            else:
                if beta[i] < 0.0:
                    beta[i] = 0.0
                    beta[j] = -diff
                if beta[j] > C:
                    beta[j] = C
                    beta[i] = C + diff
        else:
            delta = (grad[i] - grad[j]) / quad
            total = old_i + old_j
            beta[i] -= delta
            beta[j] += delta
            if total > C:
                if beta[i] > C:
                    beta[i] = C
                    beta[j] = total - C
                if beta[j] > C:
                    beta[j] = C
                    beta[i] = total - C
            else:
                if beta[j] < 0.0:
                    beta[j] = 0.0
                    beta[i] = total
                if beta[i] < 0.0:
                    beta[i] = 0.0
                    beta[j] = total

        d_i = s_i * (beta[i] - old_i)
        d_j = s_j * (beta[j] - old_j)
        for p in range(n):
            d = K[a, p] * d_i + K[b, p] * d_j
            grad[p] += d
            grad[n + p] -= d
    return beta, grad, converged


def _smo_loop_numpy(K, y, C, epsilon, tol, max_iter):
    """Vectorised twin of `_smo_loop` for environments without numba.

    Selection and updates perform the same float operations in the same
    order, so both paths produce identical models.
    """
    n = y.size
    s = np.concatenate([np.ones(n), -np.ones(n)])
    beta = np.zeros(2 * n)
    grad = np.concatenate([epsilon - y, epsilon + y])

    converged = False
    for _ in range(max_iter):
        neg_sg = -s * grad
        up = np.where(s > 0, beta < C, beta > 0)
        low = np.where(s > 0, beta > 0, beta < C)
        if not up.any() or not low.any():
            converged = True
            break
        i = int(np.argmax(np.where(up, neg_sg, -np.inf)))
        j = int(np.argmin(np.where(low, neg_sg, np.inf)))
        if neg_sg[i] - neg_sg[j] < tol:
            converged = True
            break

        a, b = i % n, j % n
        quad = max(K[a, a] + K[b, b] - 2.0 * K[a, b], _TAU)
        old_i, old_j = beta[i], beta[j]
        if s[i] != s[j]:
            delta = (-grad[i] - grad[j]) / quad
            diff = old_i - old_j
            beta[i] += delta
            beta[j] += delta
            if diff > 0.0:
                if beta[j] < 0.0:
                    beta[j] = 0.0
                    beta[i] = diff
                if beta[i] > C:
                    beta[i] = C
                    beta[j] = C - diff
            else:
                if beta[i] < 0.0:
                    beta[i] = 0.0
                    beta[j] = -diff
                if beta[j] > C:
                    beta[j] = C
                    beta[i] = C + diff
        else:
            delta = (grad[i] - grad[j]) / quad
            total = old_i + old_j
            beta[i] -= delta
            beta[j] += delta
            if total > C:
                if beta[i] > C:
                    beta[i] = C
                    beta[j] = total - C
                if beta[j] > C:
                    beta[j] = C
                    beta[i] = total - C
            else:
                if beta[j] < 0.0:
                    beta[j] = 0.0
                    beta[i] = total
                if beta[i] < 0.0:
                    beta[i] = 0.0
                    beta[j] = total

        d_theta = K[a, :] * (s[i] * (beta[i] - old_i)) + K[b, :] * (
            s[j] * (beta[j] - old_j)
        )
        grad += s * np.concatenate([d_theta, d_theta])
    return beta, grad, converged


if _HAVE_NUMBA:
    _smo_loop_fast = njit(cache=True)(_smo_loop)
else:  # pragma: no cover - exercised only without numba
    _smo_loop_fast = _smo_loop_numpy


def _smo_solve(
    K: np.ndarray, y: np.ndarray, C: float, epsilon: float
) -> tuple[np.ndarray, float, bool]:
    """Solve the dual; returns (theta, bias, converged)."""
    n = y.size
    beta, grad, converged = _smo_loop_fast(
        np.ascontiguousarray(K), y, float(C), float(epsilon), _KKT_TOL, _MAX_SMO_ITER
    )
    if not converged:
        warnings.warn(
            f"SMO hit the {_MAX_SMO_ITER}-iteration cap before reaching "
            f"KKT tolerance {_KKT_TOL}",
            RuntimeWarning,
        )
    s = np.concatenate([np.ones(n), -np.ones(n)])
    theta = beta[:n] - beta[n:]
    bias = _bias_from_gradient(beta, grad, s, C)
    return theta, bias, converged


def _bias_from_gradient(
    beta: np.ndarray, grad: np.ndarray, s: np.ndarray, C: float
) -> float:
    """Bias from KKT conditions: average over free variables, else midpoint."""
    sg = s * grad
    free = (beta > 0) & (beta < C)
    if free.any():
        rho = float(sg[free].mean())
    else:
        upper_set = ((beta <= 0) & (s > 0)) | ((beta >= C) & (s < 0))
        lower_set = ((beta <= 0) & (s < 0)) | ((beta >= C) & (s > 0))
        ub = sg[upper_set].min() if upper_set.any() else 0.0
        lb = sg[lower_set].max() if lower_set.any() else 0.0
        rho = float(ub + lb) / 2.0
    return -rho


def train_svr(
    X: np.ndarray,
    y: np.ndarray,
    kernel: str = "linear",
    hp: Hyperparams | None = None,
    feature_names: tuple[str, ...] | None = None,
) -> SvrModel:
    """Fit an eps-SVR on raw (unstandardised) features."""
    if hp is None:
        hp = Hyperparams()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != y.size:
        raise ValueError(f"feature matrix {X.shape} does not match {y.size} targets")
    if X.shape[0] < 2:
        raise ValueError("need at least 2 training rows")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite training data")
    if feature_names is None:
        feature_names = tuple(f"f{i}" for i in range(X.shape[1]))
    if len(feature_names) != X.shape[1]:
        raise ValueError("feature_names length must match column count")

    mean, std = _standardise_fit(X)
    Xs = (X - mean) / std

    if np.ptp(y) == 0.0:
        warnings.warn("constant training target; model predicts the constant")
        return SvrModel(
            kernel=kernel,
            hyperparams=hp,
            mean=mean,
            std=std,
            feature_names=tuple(feature_names),
            bias=float(y[0]),
            coefficients=np.zeros(X.shape[1]) if kernel == "linear" else None,
            support_vectors=np.zeros((1, X.shape[1])) if kernel == "rbf" else None,
            dual_coefs=np.zeros(1) if kernel == "rbf" else None,
        )

    K = _kernel_matrix(kernel, Xs, Xs, hp.gamma)
    theta, bias, _ = _smo_solve(K, y, hp.C, hp.epsilon)

    if kernel == "linear":
        return SvrModel(
            kernel="linear",
            hyperparams=hp,
            mean=mean,
            std=std,
            feature_names=tuple(feature_names),
            bias=bias,
            coefficients=theta @ Xs,
        )
    keep = theta != 0.0
    if not keep.any():
        keep = np.zeros_like(keep)
        keep[0] = True  # degenerate fit: keep one vector so the shape is valid
    return SvrModel(
        kernel="rbf",
        hyperparams=hp,
        mean=mean,
        std=std,
        feature_names=tuple(feature_names),
        bias=bias,
        support_vectors=Xs[keep],
        dual_coefs=theta[keep],
    )


def predict(model: SvrModel, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("prediction input must be 2-D")
    if X.shape[0] == 0:
        return np.zeros(0)
    if X.shape[1] != model.n_features:
        raise ValueError(
            f"expected {model.n_features} feature columns, got {X.shape[1]}"
        )
    if not np.all(np.isfinite(X)):
        raise ValueError("non-finite features")
    Xs = (X - model.mean) / model.std
    if model.kernel == "linear":
        return Xs @ model.coefficients + model.bias
    K = _kernel_matrix("rbf", Xs, model.support_vectors, model.hyperparams.gamma)
    return K @ model.dual_coefs + model.bias


def default_grid(kernel: str) -> list[Hyperparams]:
    cs = [0.1, 1.0, 10.0, 100.0, 1000.0]
    epsilons = [0.1, 0.5, 1.0]
    gammas = [2.0**e for e in range(-6, 3)] if kernel == "rbf" else [0.125]
    return [
        Hyperparams(C=c, epsilon=e, gamma=g)
        for c in cs
        for e in epsilons
        for g in gammas
    ]


def grid_search(
    train: tuple[np.ndarray, np.ndarray],
    val: tuple[np.ndarray, np.ndarray],
    kernel: str = "linear",
    grid: list[Hyperparams] | None = None,
) -> Hyperparams:
    """Pick the grid point with the best validation rank correlation.

    Ties break toward smaller C, then smaller gamma, then smaller epsilon.
    Grid points whose predictions are constant (rank correlation undefined)
    score below every achievable correlation.
    """
    from scipy.stats import spearmanr

    if grid is None:
        grid = default_grid(kernel)
    if not grid:
        raise ValueError("empty hyperparameter grid")
    X_tr, y_tr = train
    X_val, y_val = val
    if np.asarray(y_val).size < 2:
        raise ValueError("validation set must have at least 2 rows")

    best: tuple[float, float, float, float] | None = None
    best_hp: Hyperparams | None = None
    for hp in grid:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            model = train_svr(X_tr, y_tr, kernel=kernel, hp=hp)
        pred = predict(model, X_val)
        if np.ptp(pred) == 0.0 or np.ptp(np.asarray(y_val)) == 0.0:
            score = -2.0
        else:
            score = float(spearmanr(pred, y_val).statistic)
            if not np.isfinite(score):
                score = -2.0
        key = (-score, hp.C, hp.gamma, hp.epsilon)
        if best is None or key < best:
            best = key
            best_hp = hp
    return best_hp


def model_to_dict(model: SvrModel) -> dict:
    doc = {
        "version": MODEL_FORMAT_VERSION,
        "kernel": model.kernel,
        "hyperparams": {
            "C": model.hyperparams.C,
            "epsilon": model.hyperparams.epsilon,
            "gamma": model.hyperparams.gamma,
        },
        "standardization": {
            "mean": model.mean.tolist(),
            "std": model.std.tolist(),
        },
        "feature_names": list(model.feature_names),
    }
    if model.kernel == "linear":
        doc["weights"] = {
            "coefficients": model.coefficients.tolist(),
            "bias": model.bias,
        }
    else:
        doc["weights"] = {
            "support_vectors": model.support_vectors.tolist(),
            "dual_coefs": model.dual_coefs.tolist(),
            "bias": model.bias,
        }
    return doc


def model_from_dict(doc: dict) -> SvrModel:
    version = doc.get("version")
    if version != MODEL_FORMAT_VERSION:
        raise ValueError(
            f"unsupported model format version {version!r} "
            f"(expected {MODEL_FORMAT_VERSION})"
        )
    hp = Hyperparams(**doc["hyperparams"])
    std = doc["standardization"]
    weights = doc["weights"]
    kwargs = dict(
        kernel=doc["kernel"],
        hyperparams=hp,
        mean=np.asarray(std["mean"], dtype=np.float64),
        std=np.asarray(std["std"], dtype=np.float64),
        feature_names=tuple(doc["feature_names"]),
        bias=float(weights["bias"]),
    )
    if doc["kernel"] == "linear":
        kwargs["coefficients"] = np.asarray(weights["coefficients"], dtype=np.float64)
    else:
        kwargs["support_vectors"] = np.asarray(
            weights["support_vectors"], dtype=np.float64
        )
        kwargs["dual_coefs"] = np.asarray(weights["dual_coefs"], dtype=np.float64)
    return SvrModel(**kwargs)


def save_model(model: SvrModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=2, sort_keys=True))


def load_model(path: str | Path) -> SvrModel:
    return model_from_dict(json.loads(Path(path).read_text()))
