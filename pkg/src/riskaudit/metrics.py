"""Group fairness and performance metrics.

Confusion-based rates, statistical parity / equal opportunity / average odds
differences, disparate impact, false-positive-rate gaps, pairwise tables with
max-abs aggregation, Brier score, expected calibration error, and chi-square
independence tests.  The positive class is the *successful* outcome, so a
false positive is a record predicted successful that was not.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaincc, ndtr

from .core import UNDEFINED, DataError, ValidationError, is_defined
from .dataset import SUCCESSFUL, UNSUCCESSFUL, Cohort

PAIR_METRIC_NAMES = ("spd", "eod", "aod", "di", "dfpr")


@dataclass(frozen=True, eq=False)
class PredictionSet:
    """Per-record success probabilities aligned to a cohort's ids.

    ``pred_successful`` is derived from ``probs >= tau`` unless explicit
    labels were supplied (then ``tau`` is None and the labels stand alone).
    """

    ids: tuple
    probs: np.ndarray
    pred_successful: np.ndarray
    tau: float | None = 0.5

    def __post_init__(self):
        object.__setattr__(self, "ids", tuple(self.ids))
        probs = np.asarray(self.probs, dtype=float)
        labels = np.asarray(self.pred_successful, dtype=bool)
        if probs.shape != (len(self.ids),) or labels.shape != probs.shape:
            raise DataError("prediction set: ids, probs and labels must have equal length")
        if probs.size and (np.min(probs) < 0.0 or np.max(probs) > 1.0):
            raise DataError("prediction set: probabilities must lie in [0, 1]")
        probs.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "pred_successful", labels)

    @classmethod
    def from_probs(cls, ids, probs, tau: float = 0.5) -> "PredictionSet":
        if not 0.0 <= tau <= 1.0:
            raise ValidationError(f"decision threshold must lie in [0, 1], got {tau}")
        probs = np.asarray(probs, dtype=float)
        return cls(ids=tuple(ids), probs=probs, pred_successful=probs >= tau, tau=tau)

    def __len__(self) -> int:
        return len(self.ids)


def require_aligned(cohort: Cohort, preds: PredictionSet) -> None:
    if preds.ids != cohort.ids:
        raise DataError("prediction set is not aligned to the cohort (ids differ)")


def load_predictions(path, cohort: Cohort | None = None, tau: float = 0.5) -> PredictionSet:
    """Read a predictions CSV (columns ``id, prob_success[, pred_label]``).

    When ``cohort`` is given, rows are re-ordered to the cohort's id order and
    any missing or extra id is an error.  A ``pred_label`` column overrides
    threshold-derived labels.
    """
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise DataError(f"cannot read predictions file {path}: {exc}") from exc
    with fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in ("id", "prob_success"):
            if col not in header:
                raise ValidationError(f"{path}: missing required column {col!r}")
        has_labels = "pred_label" in header
        rows = {}
        order = []
        for row_num, row in enumerate(reader, start=2):
            rid = (row.get("id") or "").strip()
            if not rid:
                raise DataError(f"{path}: row {row_num}: empty id")
            if rid in rows:
                raise DataError(f"{path}: row {row_num}: duplicate id {rid}")
            raw = (row.get("prob_success") or "").strip()
            try:
                prob = float(raw)
            except ValueError:
                raise DataError(f"{path}: row {row_num}: unparseable probability {raw!r}") from None
            label = None
            if has_labels:
                raw_label = (row.get("pred_label") or "").strip()
                if raw_label not in (SUCCESSFUL, UNSUCCESSFUL):
                    raise DataError(
                        f"{path}: row {row_num}: pred_label {raw_label!r} must be "
                        f"{SUCCESSFUL!r} or {UNSUCCESSFUL!r}"
                    )
                label = raw_label == SUCCESSFUL
            rows[rid] = (prob, label)
            order.append(rid)

    if cohort is not None:
        missing = [i for i in cohort.ids if i not in rows]
        extra = [i for i in order if i not in set(cohort.ids)]
        if missing or extra:
            parts = []
            if missing:
                parts.append(f"{len(missing)} cohort id(s) missing (first: {missing[0]})")
            if extra:
                parts.append(f"{len(extra)} unknown id(s) (first: {extra[0]})")
            raise DataError(f"{path}: predictions do not match cohort: " + "; ".join(parts))
        order = list(cohort.ids)

    probs = np.array([rows[i][0] for i in order], dtype=float)
    if has_labels:
        labels = np.array([rows[i][1] for i in order], dtype=bool)
        return PredictionSet(ids=tuple(order), probs=probs, pred_successful=labels, tau=None)
    return PredictionSet.from_probs(order, probs, tau=tau)


def save_predictions(preds: PredictionSet, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "prob_success"])
        for rid, prob in zip(preds.ids, preds.probs):
            writer.writerow([rid, repr(float(prob))])


@dataclass(frozen=True)
class ConfusionCounts:
    """Confusion counts with *successful* as the positive class."""

    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValidationError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def positive_prediction_rate(self) -> float:
        return _ratio(self.tp + self.fp, self.total)


def confusion(cohort: Cohort, preds: PredictionSet, attribute: str, value: str) -> ConfusionCounts:
    """Confusion counts over the records whose ``attribute`` equals ``value``."""
    require_aligned(cohort, preds)
    domain = cohort.group_values(attribute)
    if value not in domain:
        raise ValidationError(
            f"unknown value {value!r} for attribute {attribute!r}; observed: {domain}"
        )
    tp = fp = tn = fn = 0
    for rec, pred_pos in zip(cohort.records, preds.pred_successful):
        if cohort.group_value(rec, attribute) != value:
            continue
        if rec.successful:
            if pred_pos:
                tp += 1
            else:
                fn += 1
        else:
            if pred_pos:
                fp += 1
            else:
                tn += 1
    return ConfusionCounts(tp=tp, fp=fp, tn=tn, fn=fn)


def _ratio(num, den) -> float:
    return num / den if den > 0 else UNDEFINED


def rates(c: ConfusionCounts) -> dict:
    """Derived rates; any rate with an empty denominator is the undefined marker."""
    fnr = _ratio(c.fn, c.fn + c.tp)
    return {
        "fpr": _ratio(c.fp, c.fp + c.tn),
        "fnr": fnr,
        "tpr": 1.0 - fnr if is_defined(fnr) else UNDEFINED,
        "accuracy": _ratio(c.tp + c.tn, c.total),
        "precision": _ratio(c.tp, c.tp + c.fp),
        "f1": _ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn),
    }


def spd(rate_a: float, rate_b: float) -> float:
    """Statistical parity difference: positive-prediction rate gap a - b."""
    return rate_a - rate_b


def eod(tpr_a: float, tpr_b: float) -> float:
    """Equal opportunity difference: true-positive rate gap a - b."""
    return tpr_a - tpr_b


def aod(fpr_a: float, fpr_b: float, tpr_a: float, tpr_b: float) -> float:
    """Average odds difference: mean of the FPR gap and the TPR gap."""
    return ((fpr_a - fpr_b) + (tpr_a - tpr_b)) / 2.0


def di(rate_a: float, rate_b: float) -> float:
    """Disparate impact: ratio of positive-prediction rates a / b."""
    if not is_defined(rate_a) or not is_defined(rate_b) or rate_b == 0:
        return UNDEFINED
    return rate_a / rate_b


@dataclass(frozen=True)
class PairMetrics:
    group_a: str
    group_b: str
    spd: float
    eod: float
    aod: float
    di: float
    dfpr: float

    def value(self, metric: str) -> float:
        return getattr(self, metric)


@dataclass(frozen=True)
class GroupPairTable:
    """All ordered group pairs of one attribute with max-abs aggregates."""

    attribute: str
    groups: tuple
    rows: tuple
    max_abs: dict

    def row(self, group_a: str, group_b: str) -> PairMetrics:
        for r in self.rows:
            if r.group_a == group_a and r.group_b == group_b:
                return r
        raise KeyError((group_a, group_b))

    def to_dict(self) -> dict:
        return {
            "attribute": self.attribute,
            "groups": list(self.groups),
            "rows": [
                {
                    "group_a": r.group_a, "group_b": r.group_b,
                    "spd": r.spd, "eod": r.eod, "aod": r.aod,
                    "di": r.di, "dfpr": r.dfpr,
                }
                for r in self.rows
            ],
            "max_abs": dict(self.max_abs),
        }


def pairwise_table(cohort: Cohort, preds: PredictionSet, attribute: str) -> GroupPairTable:
    """Fairness metrics for every ordered pair of groups of ``attribute``."""
    groups = cohort.group_values(attribute)
    if len(groups) < 2:
        raise ValidationError(
            f"attribute {attribute!r} has {len(groups)} group(s); pairwise metrics need at least 2"
        )
    stats = {}
    for g in groups:
        c = confusion(cohort, preds, attribute, g)
        r = rates(c)
        stats[g] = (c.positive_prediction_rate(), r["tpr"], r["fpr"])

    rows = []
    for a in groups:
        for b in groups:
            if a == b:
                continue
            ppr_a, tpr_a, fpr_a = stats[a]
            ppr_b, tpr_b, fpr_b = stats[b]
            rows.append(PairMetrics(
                group_a=a, group_b=b,
                spd=spd(ppr_a, ppr_b),
                eod=eod(tpr_a, tpr_b),
                aod=aod(fpr_a, fpr_b, tpr_a, tpr_b),
                di=di(ppr_a, ppr_b),
                dfpr=fpr_a - fpr_b,
            ))

    max_abs = {}
    for metric in PAIR_METRIC_NAMES:
        defined = [abs(r.value(metric)) for r in rows if is_defined(r.value(metric))]
        max_abs[metric] = max(defined) if defined else UNDEFINED
    return GroupPairTable(attribute=attribute, groups=groups, rows=tuple(rows), max_abs=max_abs)


def chi_square_independence(table) -> tuple:
    """Pearson chi-square test of independence for a 2 x k count table.

    No continuity correction.  The p-value is the chi-square survival
    function with k - 1 degrees of freedom, evaluated through the
    regularized upper incomplete gamma function.
    """
    counts = np.asarray(table, dtype=float)
    if counts.ndim != 2 or counts.shape[0] != 2 or counts.shape[1] < 2:
        raise ValidationError(f"expected a 2 x k table with k >= 2, got shape {counts.shape}")
    if np.any(counts < 0) or not np.all(np.isfinite(counts)):
        raise ValidationError("contingency counts must be finite and non-negative")
    row_sums = counts.sum(axis=1)
    col_sums = counts.sum(axis=0)
    if np.any(row_sums <= 0) or np.any(col_sums <= 0):
        raise ValidationError("every row and column of the contingency table must have a positive sum")
    expected = np.outer(row_sums, col_sums) / counts.sum()
    statistic = float(((counts - expected) ** 2 / expected).sum())
    dof = counts.shape[1] - 1
    p_value = float(gammaincc(dof / 2.0, statistic / 2.0))
    return statistic, p_value


def two_proportion_ztest(successes_a: int, n_a: int, successes_b: int, n_b: int) -> tuple:
    """Pooled two-proportion z-test; its square equals the 2 x 2 chi-square."""
    if n_a <= 0 or n_b <= 0:
        raise ValidationError("both sample sizes must be positive")
    if not (0 <= successes_a <= n_a and 0 <= successes_b <= n_b):
        raise ValidationError("success counts must lie within their sample sizes")
    p_a, p_b = successes_a / n_a, successes_b / n_b
    pooled = (successes_a + successes_b) / (n_a + n_b)
    variance = pooled * (1.0 - pooled) * (1.0 / n_a + 1.0 / n_b)
    if variance == 0:
        return UNDEFINED, UNDEFINED
    z = (p_a - p_b) / math.sqrt(variance)
    p_value = float(2.0 * ndtr(-abs(z)))
    return z, p_value


def _as_success_indicators(outcomes) -> np.ndarray:
    values = []
    for o in outcomes:
        if isinstance(o, str):
            if o not in (SUCCESSFUL, UNSUCCESSFUL):
                raise ValidationError(f"outcome {o!r} not in {(SUCCESSFUL, UNSUCCESSFUL)}")
            values.append(o == SUCCESSFUL)
        else:
            values.append(bool(o))
    return np.array(values, dtype=float)


def brier(probs, outcomes) -> float:
    """Mean squared gap between predicted probability and the success indicator."""
    probs = np.asarray(probs, dtype=float)
    y = _as_success_indicators(outcomes)
    if probs.size == 0:
        raise ValidationError("brier: empty input")
    if probs.shape != y.shape:
        raise DataError("brier: probs and outcomes must have equal length")
    return float(np.mean((probs - y) ** 2))


@dataclass(frozen=True, eq=False)
class CalibrationReport:
    """Equal-width-bin calibration summary with ECE and Brier score."""

    bin_edges: np.ndarray
    bin_count: np.ndarray
    bin_mean_prob: np.ndarray
    bin_freq: np.ndarray
    ece: float
    brier: float
    n: int

    def to_dict(self) -> dict:
        return {
            "bin_edges": self.bin_edges.tolist(),
            "bin_count": self.bin_count.tolist(),
            "bin_mean_prob": self.bin_mean_prob.tolist(),
            "bin_freq": self.bin_freq.tolist(),
            "ece": self.ece,
            "brier": self.brier,
            "n": self.n,
        }


def calibration_error(probs, outcomes, n_bins: int = 10) -> CalibrationReport:
    """Expected calibration error over equal-width probability bins on [0, 1].

    ECE is the count-weighted mean absolute gap between each bin's mean
    predicted probability and its empirical success frequency; empty bins
    contribute nothing.
    """
    if n_bins < 1:
        raise ValidationError(f"n_bins must be >= 1, got {n_bins}")
    probs = np.asarray(probs, dtype=float)
    y = _as_success_indicators(outcomes)
    if probs.size == 0:
        raise ValidationError("calibration_error: empty input")
    if probs.shape != y.shape:
        raise DataError("calibration_error: probs and outcomes must have equal length")

    # bin i covers [i/B, (i+1)/B); the last bin also includes 1.0
    idx = np.minimum((probs * n_bins).astype(int), n_bins - 1)
    counts = np.zeros(n_bins, dtype=int)
    mean_prob = np.full(n_bins, UNDEFINED)
    freq = np.full(n_bins, UNDEFINED)
    ece = 0.0
    n = probs.size
    for b in range(n_bins):
        mask = idx == b
        c = int(mask.sum())
        counts[b] = c
        if c == 0:
            continue
        mean_prob[b] = float(np.mean(probs[mask]))
        freq[b] = float(np.mean(y[mask]))
        ece += (c / n) * abs(mean_prob[b] - freq[b])

    return CalibrationReport(
        bin_edges=np.linspace(0.0, 1.0, n_bins + 1),
        bin_count=counts,
        bin_mean_prob=mean_prob,
        bin_freq=freq,
        ece=float(ece),
        brier=float(np.mean((probs - y) ** 2)),
        n=int(n),
    )
