"""Risk-tier post-processing: percentile thresholds over predicted probabilities.

Records are bucketed into High / Medium / Low risk tiers by nearest-rank
quantiles of the predicted success probability — High is the bottom
``high_frac`` of scores (default 23%), Medium the next 27%, Low the top 50%.
Ties at a threshold fall to the riskier tier, so the boundary rule is
``prob <= threshold``.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np

from .core import UNDEFINED, DataError, ValidationError
from .dataset import Cohort
from .metrics import PredictionSet, brier

HIGH, MEDIUM, LOW = "high", "medium", "low"
TIER_ORDER = (HIGH, MEDIUM, LOW)


@dataclass(frozen=True)
class TierQuotas:
    """Target tier shares; must sum to 1."""

    high_frac: float = 0.23
    medium_frac: float = 0.27
    low_frac: float = 0.50

    def __post_init__(self):
        fracs = (self.high_frac, self.medium_frac, self.low_frac)
        if any(not 0.0 <= f <= 1.0 for f in fracs):
            raise ValidationError(f"tier fractions must lie in [0, 1], got {fracs}")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise ValidationError(f"tier fractions must sum to 1, got {sum(fracs)!r}")

    def to_dict(self) -> dict:
        return {"high_frac": self.high_frac, "medium_frac": self.medium_frac,
                "low_frac": self.low_frac}

    @classmethod
    def from_dict(cls, data: dict) -> "TierQuotas":
        unknown = sorted(set(data) - {"high_frac", "medium_frac", "low_frac"})
        if unknown:
            raise ValidationError(f"unknown quota fields: {unknown}")
        return cls(**data)


def _nearest_rank(sorted_probs: np.ndarray, frac: float) -> float:
    """Value at rank ceil(n * frac) of an ascending sort (1-based).

    Rank 0 (frac = 0) has no order statistic; a sentinel below every
    probability is returned so the `<=` boundary places nothing under it.
    """
    n = sorted_probs.size
    # ceil on exact products like 10000 * 0.23 must not pick up float noise
    # (10000 * 0.23 == 2300.0000000000005), hence the epsilon.
    rank = math.ceil(n * frac - 1e-9)
    if rank <= 0:
        return -1.0
    return float(sorted_probs[min(rank, n) - 1])


def compute_thresholds(probs, quotas: TierQuotas = TierQuotas()) -> tuple:
    """Nearest-rank tier thresholds (t_high, t_medium) for a score sample."""
    probs = np.asarray(probs, dtype=float)
    if probs.size == 0:
        raise ValidationError("cannot compute tier thresholds for an empty sample")
    if np.min(probs) < 0.0 or np.max(probs) > 1.0:
        raise ValidationError("probabilities must lie in [0, 1]")
    ordered = np.sort(probs)
    t_high = _nearest_rank(ordered, quotas.high_frac)
    t_medium = _nearest_rank(ordered, quotas.high_frac + quotas.medium_frac)
    return t_high, t_medium


@dataclass(frozen=True, eq=False)
class TierAssignment:
    """Per-record tiers plus the thresholds that produced them."""

    ids: tuple
    probs: np.ndarray
    tiers: tuple
    t_high: float
    t_medium: float

    def __post_init__(self):
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "tiers", tuple(self.tiers))
        probs = np.asarray(self.probs, dtype=float)
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)
        if not (len(self.ids) == probs.size == len(self.tiers)):
            raise DataError("tier assignment: ids, probs and tiers must have equal length")
        bad = sorted({t for t in self.tiers if t not in TIER_ORDER})
        if bad:
            raise ValidationError(f"unknown tier labels: {bad}")
        if self.t_high > self.t_medium:
            raise ValidationError(
                f"t_high ({self.t_high!r}) must not exceed t_medium ({self.t_medium!r})"
            )

    def __len__(self) -> int:
        return len(self.ids)

    def counts(self) -> dict:
        out = {t: 0 for t in TIER_ORDER}
        for t in self.tiers:
            out[t] += 1
        return out

    @property
    def degenerate(self) -> bool:
        """True when ties collapsed a tier entirely (some tier is empty)."""
        return any(v == 0 for v in self.counts().values())


def tier_of(prob: float, t_high: float, t_medium: float) -> str:
    if prob <= t_high:
        return HIGH
    if prob <= t_medium:
        return MEDIUM
    return LOW


def assign_tiers(preds: PredictionSet, quotas: TierQuotas = TierQuotas(),
                 thresholds: tuple | None = None) -> TierAssignment:
    """Bucket a prediction set into tiers.

    ``thresholds`` overrides the computed pair — used when tiers must be
    pooled across prediction sets or replayed from a saved assignment.
    """
    if thresholds is None:
        t_high, t_medium = compute_thresholds(preds.probs, quotas)
    else:
        t_high, t_medium = float(thresholds[0]), float(thresholds[1])
        if t_high > t_medium:
            raise ValidationError(f"t_high ({t_high!r}) must not exceed t_medium ({t_medium!r})")
    tiers = tuple(tier_of(float(p), t_high, t_medium) for p in preds.probs)
    return TierAssignment(ids=preds.ids, probs=preds.probs, tiers=tiers,
                          t_high=t_high, t_medium=t_medium)


def tier_summary(assign: TierAssignment, cohort: Cohort) -> dict:
    """Per-tier count, success rate, Brier score and tier-implied accuracy.

    Accuracy scores the tier as a hard label — High predicts unsuccessful,
    Medium and Low predict successful — against the realized outcome.  Empty
    tiers carry undefined markers.
    """
    if assign.ids != cohort.ids:
        raise DataError("tier assignment is not aligned to the cohort (ids differ)")
    buckets = {t: [] for t in TIER_ORDER}
    for idx, tier in enumerate(assign.tiers):
        buckets[tier].append(idx)
    summary = {}
    for tier in TIER_ORDER:
        idxs = buckets[tier]
        if not idxs:
            summary[tier] = {"count": 0, "success_rate": UNDEFINED,
                             "brier": UNDEFINED, "accuracy": UNDEFINED}
            continue
        outcomes = [cohort.records[i].successful for i in idxs]
        probs = [float(assign.probs[i]) for i in idxs]
        implied_success = tier != HIGH
        correct = sum(1 for o in outcomes if o == implied_success)
        summary[tier] = {
            "count": len(idxs),
            "success_rate": sum(outcomes) / len(idxs),
            "brier": brier(probs, outcomes),
            "accuracy": correct / len(idxs),
        }
    return summary


def save_tiers(assign: TierAssignment, path) -> None:
    """Write the tiers CSV; thresholds repeat per row so the file stands alone."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "prob_success", "tier", "t_high", "t_medium"])
        for rid, prob, tier in zip(assign.ids, assign.probs, assign.tiers):
            writer.writerow([rid, repr(float(prob)), tier,
                             repr(assign.t_high), repr(assign.t_medium)])


def load_tiers(path) -> TierAssignment:
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise DataError(f"cannot read tiers file {path}: {exc}") from exc
    with fh:
        reader = csv.DictReader(fh)
        required = {"id", "prob_success", "tier", "t_high", "t_medium"}
        missing = sorted(required - set(reader.fieldnames or []))
        if missing:
            raise ValidationError(f"{path}: missing required columns: {missing}")
        ids, probs, tiers = [], [], []
        t_high = t_medium = None
        for row_num, row in enumerate(reader, start=2):
            ids.append(row["id"])
            try:
                probs.append(float(row["prob_success"]))
                row_high, row_medium = float(row["t_high"]), float(row["t_medium"])
            except ValueError as exc:
                raise DataError(f"{path}: row {row_num}: {exc}") from None
            tiers.append(row["tier"])
            if t_high is None:
                t_high, t_medium = row_high, row_medium
            elif (row_high, row_medium) != (t_high, t_medium):
                raise DataError(f"{path}: row {row_num}: thresholds differ across rows")
    if not ids:
        raise DataError(f"{path}: no tier rows")
    return TierAssignment(ids=tuple(ids), probs=np.array(probs), tiers=tuple(tiers),
                          t_high=t_high, t_medium=t_medium)


def require_tier(tier: str) -> str:
    if tier not in TIER_ORDER:
        raise ValidationError(f"unknown tier {tier!r}; expected one of {TIER_ORDER}")
    return tier
