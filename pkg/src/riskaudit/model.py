"""Desk-scale model stage: feature encoding, SMOTE balancing, reference scorer.

The reference scorer is a deliberately simple L2-regularized logistic
regression trained by full-batch gradient descent — convex, gradient-checkable
and deterministic — so audits can run end to end without the production
model.  Production scores enter through the predictions-CSV interface
instead; nothing downstream depends on how probabilities were produced.
"""

from dataclasses import dataclass, replace

import numpy as np
from scipy.special import expit

from .core import DataError, ValidationError, read_json, write_json
from .dataset import Cohort
from .metrics import PredictionSet


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    """Numeric feature rows aligned to cohort ids; labels are 1 = successful."""

    ids: tuple
    feature_names: tuple
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if X.ndim != 2 or X.shape != (len(self.ids), len(self.feature_names)):
            raise DataError(
                f"design matrix shape {X.shape} does not match "
                f"{len(self.ids)} ids x {len(self.feature_names)} features"
            )
        if y.shape != (len(self.ids),):
            raise DataError("label vector length does not match ids")
        if not np.all(np.isfinite(X)):
            raise DataError("design matrix contains non-finite entries")
        if not np.all((y == 0.0) | (y == 1.0)):
            raise DataError("labels must be 0 or 1")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    def __len__(self) -> int:
        return len(self.ids)

    def class_counts(self) -> dict:
        pos = int(self.y.sum())
        return {1: pos, 0: len(self.ids) - pos}


def _encoded_names(cohort: Cohort, include_groups: bool) -> tuple:
    schema = cohort.schema
    names = list(schema.numeric_features)
    categorical = list(schema.categorical_features)
    if include_groups:
        categorical += list(schema.group_columns) + [schema.population_column]
    for col in categorical:
        if col in cohort.attributes():
            values = cohort.group_values(col)
        else:
            values = tuple(sorted({str(r.features[col]) for r in cohort.records}))
        names.extend(f"{col}={value}" for value in values)
    return tuple(names)


def design_matrix(cohort: Cohort, include_groups: bool = True,
                  feature_names: tuple | None = None) -> DesignMatrix:
    """Encode a cohort: numeric features as-is, categoricals one-hot.

    Column names follow ``column=value`` for one-hot indicators.  Passing
    ``feature_names`` replays a previous encoding onto a new cohort —
    categories unseen there simply produce all-zero indicator entries, and
    the column order is preserved exactly.
    """
    if len(cohort) == 0:
        raise ValidationError("cannot encode an empty cohort")
    schema = cohort.schema
    if feature_names is None:
        feature_names = _encoded_names(cohort, include_groups)

    numeric = set(schema.numeric_features)
    attrs = set(cohort.attributes())
    categorical = set(schema.categorical_features)
    columns = []
    for name in feature_names:
        if name in numeric:
            columns.append(np.array([float(r.features[name]) for r in cohort.records]))
            continue
        col, sep, value = name.partition("=")
        if not sep or (col not in attrs and col not in categorical):
            raise ValidationError(f"feature {name!r} is not declared by the cohort schema")
        if col in attrs:
            raw = [cohort.group_value(r, col) for r in cohort.records]
        else:
            raw = [str(r.features[col]) for r in cohort.records]
        columns.append(np.array([1.0 if v == value else 0.0 for v in raw]))

    X = np.column_stack(columns) if columns else np.zeros((len(cohort), 0))
    y = np.array([1.0 if r.successful else 0.0 for r in cohort.records])
    return DesignMatrix(ids=cohort.ids, feature_names=feature_names, X=X, y=y)


def smote(matrix: DesignMatrix, k: int = 5, seed: int = 0) -> DesignMatrix:
    """Balance classes by interpolated synthetic minority rows.

    Each synthetic row is x_i + lam * (x_nn - x_i) with lam uniform on [0, 1]
    and x_nn one of the k Euclidean nearest minority neighbors of minority
    seed row x_i; seed rows are visited round-robin.  Original rows are kept
    untouched, synthetics are appended at the end.
    """
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    counts = matrix.class_counts()
    if counts[0] == counts[1]:
        return matrix
    minority_label = 1.0 if counts[1] < counts[0] else 0.0
    minority_idx = np.flatnonzero(matrix.y == minority_label)
    n_min = minority_idx.size
    if n_min < 2:
        raise ValidationError(
            f"SMOTE needs at least 2 minority rows, got {n_min}"
        )
    if k > n_min - 1:
        raise ValidationError(
            f"k={k} requires at least {k + 1} minority rows, got {n_min}"
        )

    minority = matrix.X[minority_idx]
    # Exhaustive pairwise distances; ties resolved by minority-block position.
    diffs = minority[:, None, :] - minority[None, :, :]
    dist = np.sqrt((diffs ** 2).sum(axis=2))
    np.fill_diagonal(dist, np.inf)
    neighbor_table = np.argsort(dist, axis=1, kind="stable")[:, :k]

    rng = np.random.default_rng(seed)
    n_new = abs(counts[0] - counts[1])
    new_rows = np.empty((n_new, matrix.X.shape[1]))
    for j in range(n_new):
        i = j % n_min
        nn = neighbor_table[i, rng.integers(0, k)]
        lam = rng.random()
        new_rows[j] = minority[i] + lam * (minority[nn] - minority[i])

    ids = matrix.ids + tuple(f"smote:{j:06d}" for j in range(n_new))
    X = np.vstack([matrix.X, new_rows])
    y = np.concatenate([matrix.y, np.full(n_new, minority_label)])
    return DesignMatrix(ids=ids, feature_names=matrix.feature_names, X=X, y=y)


@dataclass(frozen=True)
class ScorerParams:
    """Logistic scorer parameters plus the hyperparameters that trained them."""

    feature_names: tuple
    weights: tuple = ()
    intercept: float = 0.0
    l2: float = 0.0
    learning_rate: float = 1.0
    max_epochs: int = 300
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        weights = tuple(float(w) for w in self.weights) or tuple(0.0 for _ in self.feature_names)
        if len(weights) != len(self.feature_names):
            raise ValidationError("weights length must match feature_names")
        object.__setattr__(self, "weights", weights)
        if self.l2 < 0:
            raise ValidationError(f"l2 strength must be >= 0, got {self.l2}")
        if self.learning_rate <= 0:
            raise ValidationError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.max_epochs < 1:
            raise ValidationError(f"max_epochs must be >= 1, got {self.max_epochs}")

    def to_dict(self) -> dict:
        return {
            "feature_names": list(self.feature_names),
            "weights": list(self.weights),
            "intercept": self.intercept,
            "l2": self.l2,
            "learning_rate": self.learning_rate,
            "max_epochs": self.max_epochs,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ScorerParams":
        unknown = sorted(set(data) - set(cls.__dataclass_fields__))
        if unknown:
            raise ValidationError(f"unknown scorer fields: {unknown}")
        if "feature_names" not in data:
            raise ValidationError("scorer parameters must declare feature_names")
        data = dict(data)
        data["feature_names"] = tuple(data["feature_names"])
        data["weights"] = tuple(data.get("weights", ()))
        return cls(**data)


def save_params(params: ScorerParams, path) -> None:
    write_json(path, params.to_dict())


def load_params(path) -> ScorerParams:
    return ScorerParams.from_dict(read_json(path))


def loss_gradient(matrix: DesignMatrix, weights: np.ndarray, intercept: float,
                  l2: float) -> tuple:
    """Regularized log-loss and its analytic gradient.

    Returns (loss, grad_weights, grad_intercept).  The penalty applies to
    weights only, so heavy regularization drives predictions toward the
    base rate rather than toward 0.5.
    """
    X, y = matrix.X, matrix.y
    n = len(matrix)
    z = X @ weights + intercept
    # log(1 + e^z) - y z == -(y log p + (1-y) log(1-p)), computed stably
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * l2 * np.dot(weights, weights))
    residual = expit(z) - y
    grad_w = X.T @ residual / n + l2 * weights
    grad_b = float(np.mean(residual))
    return loss, grad_w, grad_b


def train_reference(matrix: DesignMatrix, params: ScorerParams | None = None,
                    history: list | None = None) -> ScorerParams:
    """Fit the reference scorer by full-batch descent from zero init.

    Each epoch takes a gradient step on the log-loss and applies the exact
    shrinkage of the quadratic penalty in closed form (forward-backward
    splitting); plain gradient steps on the penalty would cap the stable
    step size at ~2/l2 and strand the unregularized intercept when l2 is
    large.  The step size halves whenever a step would increase the total
    loss and recovers after accepted steps, keeping the loss trajectory
    non-increasing.  Pass a list as ``history`` to capture per-epoch losses.
    """
    if params is None:
        params = ScorerParams(feature_names=matrix.feature_names)
    if params.feature_names != matrix.feature_names:
        raise ValidationError("scorer feature_names do not match the design matrix")
    counts = matrix.class_counts()
    if counts[0] == 0 or counts[1] == 0:
        raise ValidationError("training requires at least one row of each class")

    w = np.zeros(len(matrix.feature_names))
    b = 0.0
    lr = params.learning_rate
    loss, grad_w, grad_b = loss_gradient(matrix, w, b, params.l2)
    if history is not None:
        history.append(loss)
    for _ in range(params.max_epochs):
        data_grad_w = grad_w - params.l2 * w
        while True:
            w_next = (w - lr * data_grad_w) / (1.0 + lr * params.l2)
            b_next = b - lr * grad_b
            next_loss, next_gw, next_gb = loss_gradient(matrix, w_next, b_next, params.l2)
            if next_loss <= loss or lr < 1e-12:
                break
            lr /= 2.0
        if next_loss > loss:
            break
        w, b, loss, grad_w, grad_b = w_next, b_next, next_loss, next_gw, next_gb
        if history is not None:
            history.append(loss)
        lr = min(lr * 2.0, params.learning_rate)

    if not (np.all(np.isfinite(w)) and np.isfinite(b)):
        raise DataError("training diverged to non-finite parameters")
    return replace(params, weights=tuple(float(v) for v in w), intercept=float(b))


def predict_proba(params: ScorerParams, matrix: DesignMatrix, tau: float = 0.5) -> PredictionSet:
    """Sigmoid scores for every row, aligned to the matrix ids."""
    if params.feature_names != matrix.feature_names:
        raise ValidationError(
            "scorer features do not match the design matrix: "
            f"{list(params.feature_names)[:3]}... vs {list(matrix.feature_names)[:3]}..."
        )
    z = matrix.X @ np.asarray(params.weights) + params.intercept
    return PredictionSet.from_probs(matrix.ids, expit(z), tau=tau)
