"""Experiment protocol: content-disjoint splits, logistic mapping, correlations.

Datasets are manifests of (video pair or precomputed features, MOS,
content id, frame rates).  Experiments repeatedly split the manifest by
content, pick SVR hyperparameters on the validation subset, train, predict
on the held-out test subset and report SROCC / KROCC / PLCC / RMSE, where
PLCC and RMSE are computed after a four-parameter logistic remapping of the
predictions.  Median metrics over iterations are the headline numbers.
"""

from __future__ import annotations

import itertools
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.special import expit
from scipy.stats import kendalltau, pearsonr, spearmanr

from .svr import Hyperparams, grid_search, predict, train_svr
from .video import VideoSequence

__all__ = [
    "ManifestRow",
    "DatasetManifest",
    "SplitSpec",
    "ContentSplit",
    "split_by_content",
    "all_content_splits",
    "LogisticFit",
    "logistic",
    "logistic_fit",
    "correlations",
    "psnr",
    "IterationResult",
    "ExperimentReport",
    "run_experiment",
    "run_all_splits",
]

REPORT_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ManifestRow:
    content_id: str
    mos: float
    fps_ref: Fraction
    fps_dist: Fraction
    ref_path: str | None = None
    dist_path: str | None = None
    feature_csv: str | None = None

    def __post_init__(self):
        if not self.content_id:
            raise ValueError("content_id must be non-empty")
        if not math.isfinite(self.mos):
            raise ValueError(f"non-finite MOS for content {self.content_id}")


@dataclass(frozen=True)
class DatasetManifest:
    rows: tuple[ManifestRow, ...]

    def __post_init__(self):
        if not self.rows:
            raise ValueError("empty manifest")

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def contents(self) -> list[str]:
        seen: dict[str, None] = {}
        for row in self.rows:
            seen.setdefault(row.content_id, None)
        return list(seen)

    def mos_array(self) -> np.ndarray:
        return np.asarray([r.mos for r in self.rows])


@dataclass(frozen=True)
class SplitSpec:
    """Random-split protocol: fractions over contents, repeated iterations."""

    fractions: tuple[float, ...] = (0.7, 0.15, 0.15)
    seed: int = 0
    iterations: int = 200

    def __post_init__(self):
        if len(self.fractions) not in (2, 3):
            raise ValueError("fractions must be (train, test) or (train, val, test)")
        if any(not 0.0 < f < 1.0 for f in self.fractions):
            raise ValueError("fractions must lie in (0, 1)")
        if abs(sum(self.fractions) - 1.0) > 1e-9:
            raise ValueError("fractions must sum to 1")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")

    @property
    def has_validation(self) -> bool:
        return len(self.fractions) == 3


@dataclass(frozen=True)
class ContentSplit:
    train: tuple[int, ...]  # row indices
    val: tuple[int, ...]
    test: tuple[int, ...]


def _largest_remainder_counts(n: int, fractions: tuple[float, ...]) -> list[int]:
    quotas = [n * f for f in fractions]
    counts = [int(math.floor(q)) for q in quotas]
    remainders = [q - c for q, c in zip(quotas, counts)]
    short = n - sum(counts)
    # distribute leftovers by largest remainder; ties go to the earlier subset
    order = sorted(range(len(fractions)), key=lambda k: (-remainders[k], k))
    for k in order[:short]:
        counts[k] += 1
    # every subset must stay populated; take from the largest one
    while n >= len(fractions) and min(counts) == 0:
        counts[counts.index(max(counts))] -= 1
        counts[counts.index(0)] += 1
    return counts


def split_by_content(
    manifest: DatasetManifest, spec: SplitSpec, iteration_index: int
) -> ContentSplit:
    """Partition contents (not videos) with the iteration-derived RNG.

    The RNG seed is master_seed XOR iteration_index, so each iteration is
    reproducible in isolation and iterations can run in any order.
    """
    contents = manifest.contents
    counts = _largest_remainder_counts(len(contents), spec.fractions)
    if any(c < 1 for c in counts):
        raise ValueError(
            f"{len(contents)} contents cannot populate fractions {spec.fractions}"
        )
    rng = np.random.default_rng(spec.seed ^ iteration_index)
    order = rng.permutation(len(contents))
    shuffled = [contents[i] for i in order]
    groups: list[set[str]] = []
    start = 0
    for c in counts:
        groups.append(set(shuffled[start : start + c]))
        start += c
    index_groups = [
        tuple(i for i, row in enumerate(manifest.rows) if row.content_id in g)
        for g in groups
    ]
    if len(index_groups) == 2:
        return ContentSplit(train=index_groups[0], val=(), test=index_groups[1])
    return ContentSplit(
        train=index_groups[0], val=index_groups[1], test=index_groups[2]
    )


def all_content_splits(
    manifest: DatasetManifest, train_fraction: float = 0.8
) -> list[ContentSplit]:
    """Every C(n, k) train/test content combination, k = round(train_fraction * n)."""
    contents = manifest.contents
    n = len(contents)
    k = round(train_fraction * n)
    if n < 2 or k < 1 or k >= n:
        raise ValueError(
            f"cannot form {train_fraction:.0%} train splits from {n} contents"
        )
    splits = []
    for combo in itertools.combinations(range(n), k):
        train_contents = {contents[i] for i in combo}
        train_idx = tuple(
            i for i, row in enumerate(manifest.rows) if row.content_id in train_contents
        )
        test_idx = tuple(
            i
            for i, row in enumerate(manifest.rows)
            if row.content_id not in train_contents
        )
        splits.append(ContentSplit(train=train_idx, val=(), test=test_idx))
    return splits


# ---------------------------------------------------------------------------
# Four-parameter logistic mapping


def logistic(x, beta1: float, beta2: float, beta3: float, beta4: float):
    """Q(x) = b2 + (b1 - b2) / (1 + exp(-(x - b3) / |b4|))."""
    scale = max(abs(beta4), 1e-12)
    return beta2 + (beta1 - beta2) * expit((np.asarray(x, dtype=np.float64) - beta3) / scale)


@dataclass(frozen=True)
class LogisticFit:
    params: tuple[float, float, float, float]
    mapped: np.ndarray
    sse: float
    converged: bool
    n_iter: int

    def __call__(self, x) -> np.ndarray:
        return logistic(x, *self.params)


def _logistic_jacobian(x: np.ndarray, p: np.ndarray) -> np.ndarray:
    b1, b2, b3, b4 = p
    scale = max(abs(b4), 1e-12)
    u = (x - b3) / scale
    s = expit(u)
    ds = s * (1.0 - s)
    jac = np.empty((x.size, 4))
    jac[:, 0] = s
    jac[:, 1] = 1.0 - s
    jac[:, 2] = -(b1 - b2) * ds / scale
    jac[:, 3] = -(b1 - b2) * ds * u * math.copysign(1.0, b4 if b4 != 0 else 1.0) / scale
    return jac


def _levenberg_marquardt(
    x: np.ndarray, y: np.ndarray, p0: np.ndarray, max_iter: int = 500
) -> tuple[np.ndarray, float, bool, int]:
    p = p0.astype(np.float64).copy()
    residual = logistic(x, *p) - y
    sse = float(residual @ residual)
    lam = 1e-3
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        jac = _logistic_jacobian(x, p)
        g = jac.T @ residual
        h = jac.T @ jac
        stepped = False
        for _ in range(25):  # grow damping until a step is accepted
            try:
                delta = np.linalg.solve(h + lam * np.eye(4), -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            trial = p + delta
            r_trial = logistic(x, *trial) - y
            sse_trial = float(r_trial @ r_trial)
            if sse_trial <= sse:
                improvement = sse - sse_trial
                p, residual, sse = trial, r_trial, sse_trial
                lam = max(lam / 3.0, 1e-12)
                stepped = True
                if improvement <= 1e-12 * (sse + 1e-12):
                    converged = True
                break
            lam *= 10.0
        if not stepped:
            converged = True  # damping exhausted: no direction improves
            break
        if converged:
            break
    return p, sse, converged, it


def logistic_fit(pred, mos) -> LogisticFit:
    """Least-squares four-parameter logistic from predictions to MOS.

    Runs damped least squares from the standard initialisation
    (b1=max(mos), b2=min(mos), b3=median(pred), b4=std(pred)/4).  A
    near-linear member built from the ordinary least-squares line is also
    evaluated so that the mapped scores never fit worse than a straight
    line; the better of the two is returned.  Non-convergence within 500
    iterations returns the best parameters found with converged=False.
    """
    x = np.asarray(pred, dtype=np.float64)
    y = np.asarray(mos, dtype=np.float64)
    if x.size != y.size:
        raise ValueError("pred and mos must have equal length")
    if x.size < 5:
        raise ValueError(f"need at least 5 points to fit, got {x.size}")
    if np.ptp(x) == 0.0:
        raise ValueError("predictions are constant; logistic fit undefined")

    p0 = np.array([y.max(), y.min(), float(np.median(x)), float(np.std(x)) / 4.0])
    p_lm, sse_lm, converged, n_iter = _levenberg_marquardt(x, y, p0)

    # Near-linear fallback: a logistic with a very wide transition matching
    # the OLS line; guarantees the mapping is at least as good as linear.
    x_c = x - x.mean()
    denom = float(x_c @ x_c)
    slope = float(x_c @ (y - y.mean())) / denom
    intercept = float(y.mean() - slope * x.mean())
    span = float(np.max(np.abs(x_c)))
    width = 1e6 * max(span, 1e-12)
    center = float(x.mean())
    p_lin = np.array(
        [
            intercept + slope * center + 2.0 * slope * width,
            intercept + slope * center - 2.0 * slope * width,
            center,
            width,
        ]
    )
    r_lin = logistic(x, *p_lin) - y
    sse_lin = float(r_lin @ r_lin)

    if sse_lin < sse_lm and abs(slope) > 0:
        params, sse = p_lin, sse_lin
        converged = True
    else:
        params, sse = p_lm, sse_lm
        if not converged:
            warnings.warn("logistic fit did not converge; returning best iterate")
    mapped = logistic(x, *params)
    return LogisticFit(
        params=tuple(float(v) for v in params),
        mapped=mapped,
        sse=float(sse),
        converged=bool(converged),
        n_iter=n_iter,
    )


def correlations(pred, mos) -> dict[str, float]:
    """SROCC, KROCC (tau-b), and logistic-mapped PLCC / RMSE.

    With fewer than 5 points the logistic stage is skipped and PLCC / RMSE
    use the raw predictions.
    """
    x = np.asarray(pred, dtype=np.float64)
    y = np.asarray(mos, dtype=np.float64)
    if x.size != y.size:
        raise ValueError("pred and mos must have equal length")
    if x.size < 2:
        raise ValueError("need at least 2 points")
    if np.ptp(x) == 0.0 or np.ptp(y) == 0.0:
        raise ValueError("correlation undefined for constant inputs")

    srocc = float(spearmanr(x, y).statistic)
    krocc = float(kendalltau(x, y).statistic)
    mapped = logistic_fit(x, y).mapped if x.size >= 5 else x
    if np.ptp(mapped) == 0.0:
        mapped = x  # degenerate mapping; fall back to raw predictions
    plcc = float(pearsonr(mapped, y).statistic)
    rmse = float(np.sqrt(np.mean((mapped - y) ** 2)))
    return {"srocc": srocc, "krocc": krocc, "plcc": plcc, "rmse": rmse}


def psnr(ref: VideoSequence, dist: VideoSequence) -> float:
    """Mean per-frame luma PSNR in dB; +inf for identical inputs."""
    if ref.frames.shape != dist.frames.shape:
        raise ValueError(
            f"geometry mismatch: {ref.frames.shape} vs {dist.frames.shape}"
        )
    mse = np.mean((ref.frames - dist.frames) ** 2, axis=(1, 2))
    with np.errstate(divide="ignore"):
        per_frame = 10.0 * np.log10(255.0**2 / mse)
    return float(np.mean(per_frame))


# ---------------------------------------------------------------------------
# Experiment driver


@dataclass(frozen=True)
class IterationResult:
    index: int
    skipped: bool
    skip_reason: str | None
    metrics: dict[str, float] | None
    logistic_params: tuple[float, float, float, float] | None
    hyperparams: Hyperparams | None
    test_size: int
    by_fps: dict[str, dict] | None = None

    def to_dict(self) -> dict:
        doc = {
            "index": self.index,
            "skipped": self.skipped,
            "skip_reason": self.skip_reason,
            "metrics": self.metrics,
            "logistic_params": list(self.logistic_params)
            if self.logistic_params
            else None,
            "hyperparams": {
                "C": self.hyperparams.C,
                "epsilon": self.hyperparams.epsilon,
                "gamma": self.hyperparams.gamma,
            }
            if self.hyperparams
            else None,
            "test_size": self.test_size,
        }
        if self.by_fps is not None:
            doc["by_fps"] = self.by_fps
        return doc


@dataclass(frozen=True)
class ExperimentReport:
    iterations: tuple[IterationResult, ...]
    medians: dict[str, float]
    n_skipped: int
    kernel: str
    seed: int | None
    by_fps_medians: dict[str, dict[str, float]] | None = None

    def to_dict(self) -> dict:
        doc = {
            "format_version": REPORT_FORMAT_VERSION,
            "kernel": self.kernel,
            "seed": self.seed,
            "n_iterations": len(self.iterations),
            "n_skipped": self.n_skipped,
            "medians": self.medians,
            "iterations": [it.to_dict() for it in self.iterations],
        }
        if self.by_fps_medians is not None:
            doc["by_fps_medians"] = self.by_fps_medians
        return doc


def _metrics_or_none(pred: np.ndarray, mos: np.ndarray) -> dict[str, float] | None:
    try:
        return correlations(pred, mos)
    except ValueError:
        return None


def _evaluate_split(
    split: ContentSplit,
    features: np.ndarray,
    mos: np.ndarray,
    fps_dist: list[str],
    kernel: str,
    grid,
    fixed_hp: Hyperparams | None,
    by_fps: bool,
    index: int,
) -> IterationResult:
    train_idx = np.asarray(split.train, dtype=np.intp)
    test_idx = np.asarray(split.test, dtype=np.intp)
    if train_idx.size < 2 or test_idx.size < 2:
        return IterationResult(
            index=index,
            skipped=True,
            skip_reason="degenerate split sizes",
            metrics=None,
            logistic_params=None,
            hyperparams=None,
            test_size=int(test_idx.size),
        )
    if np.ptp(mos[train_idx]) == 0.0:
        return IterationResult(
            index=index,
            skipped=True,
            skip_reason="constant training MOS",
            metrics=None,
            logistic_params=None,
            hyperparams=None,
            test_size=int(test_idx.size),
        )

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        if split.val:
            val_idx = np.asarray(split.val, dtype=np.intp)
            hp = grid_search(
                (features[train_idx], mos[train_idx]),
                (features[val_idx], mos[val_idx]),
                kernel=kernel,
                grid=grid,
            )
        else:
            hp = fixed_hp if fixed_hp is not None else Hyperparams()
        model = train_svr(features[train_idx], mos[train_idx], kernel=kernel, hp=hp)
        pred = predict(model, features[test_idx])

        metrics = _metrics_or_none(pred, mos[test_idx])
        if metrics is None:
            return IterationResult(
                index=index,
                skipped=True,
                skip_reason="correlation undefined on test set",
                metrics=None,
                logistic_params=None,
                hyperparams=hp,
                test_size=int(test_idx.size),
            )
        log_params = (
            tuple(logistic_fit(pred, mos[test_idx]).params) if pred.size >= 5 else None
        )

        fps_groups = None
        if by_fps:
            fps_groups = {}
            group_of = {}
            for pos, row_idx in enumerate(test_idx):
                group_of.setdefault(fps_dist[row_idx], []).append(pos)
            for fps_label in sorted(group_of):
                positions = np.asarray(group_of[fps_label], dtype=np.intp)
                fps_groups[fps_label] = {
                    "size": int(positions.size),
                    "metrics": _metrics_or_none(
                        pred[positions], mos[test_idx][positions]
                    ),
                }
    return IterationResult(
        index=index,
        skipped=False,
        skip_reason=None,
        metrics=metrics,
        logistic_params=log_params,
        hyperparams=hp,
        test_size=int(test_idx.size),
        by_fps=fps_groups,
    )


def _collect_report(
    results: list[IterationResult], kernel: str, seed: int | None, by_fps: bool
) -> ExperimentReport:
    valid = [r.metrics for r in results if not r.skipped]
    metric_names = ("srocc", "krocc", "plcc", "rmse")
    if valid:
        medians = {
            name: float(np.median([m[name] for m in valid])) for name in metric_names
        }
    else:
        medians = {name: float("nan") for name in metric_names}

    fps_medians = None
    if by_fps:
        accum: dict[str, dict[str, list[float]]] = {}
        for r in results:
            if r.skipped or not r.by_fps:
                continue
            for fps_label, group in r.by_fps.items():
                if group["metrics"] is None:
                    continue
                dest = accum.setdefault(fps_label, {n: [] for n in metric_names})
                for name in metric_names:
                    dest[name].append(group["metrics"][name])
        fps_medians = {
            fps_label: {n: float(np.median(v)) for n, v in groups.items() if v}
            for fps_label, groups in sorted(accum.items())
        }
    return ExperimentReport(
        iterations=tuple(results),
        medians=medians,
        n_skipped=sum(r.skipped for r in results),
        kernel=kernel,
        seed=seed,
        by_fps_medians=fps_medians,
    )


def _evaluate_split_task(task) -> IterationResult:
    (split, features, mos, fps_dist, kernel, grid, fixed_hp, by_fps, index) = task
    return _evaluate_split(
        split, features, mos, fps_dist, kernel, grid, fixed_hp, by_fps, index
    )


def _run_splits(
    splits: list[ContentSplit],
    features: np.ndarray,
    mos: np.ndarray,
    fps_dist: list[str],
    kernel: str,
    grid,
    fixed_hp: Hyperparams | None,
    by_fps: bool,
    jobs: int,
) -> list[IterationResult]:
    tasks = [
        (split, features, mos, fps_dist, kernel, grid, fixed_hp, by_fps, index)
        for index, split in enumerate(splits)
    ]
    if jobs > 1 and len(tasks) > 1:
        # iterations are independent (per-iteration RNG), so results are
        # identical regardless of scheduling; gather in index order
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_evaluate_split_task, tasks))
    return [_evaluate_split_task(t) for t in tasks]


def run_experiment(
    manifest: DatasetManifest,
    features: np.ndarray,
    spec: SplitSpec,
    kernel: str = "linear",
    grid=None,
    fixed_hp: Hyperparams | None = None,
    by_fps: bool = False,
    jobs: int = 1,
) -> ExperimentReport:
    """Random content-disjoint splits, repeated spec.iterations times.

    Three-way fractions run a hyperparameter grid search on the validation
    subset each iteration; two-way fractions use ``fixed_hp`` (defaults
    apply when not given).  Degenerate iterations are recorded as skipped
    and excluded from the medians.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.shape[0] != len(manifest):
        raise ValueError("features row count must match the manifest")
    if len(manifest.contents) < 2:
        raise ValueError("need at least 2 distinct contents")
    mos = manifest.mos_array()
    fps_dist = [str(r.fps_dist) for r in manifest.rows]
    splits = [
        split_by_content(manifest, spec, index) for index in range(spec.iterations)
    ]
    results = _run_splits(
        splits, features, mos, fps_dist, kernel, grid, fixed_hp, by_fps, jobs
    )
    return _collect_report(results, kernel, spec.seed, by_fps)


def run_all_splits(
    manifest: DatasetManifest,
    features: np.ndarray,
    train_fraction: float = 0.8,
    kernel: str = "rbf",
    fixed_hp: Hyperparams | None = None,
    by_fps: bool = False,
    jobs: int = 1,
) -> ExperimentReport:
    """Evaluate every train/test content combination at the given fraction."""
    features = np.asarray(features, dtype=np.float64)
    if features.shape[0] != len(manifest):
        raise ValueError("features row count must match the manifest")
    mos = manifest.mos_array()
    fps_dist = [str(r.fps_dist) for r in manifest.rows]
    results = _run_splits(
        all_content_splits(manifest, train_fraction),
        features,
        mos,
        fps_dist,
        kernel,
        None,
        fixed_hp,
        by_fps,
        jobs,
    )
    return _collect_report(results, kernel, None, by_fps)
