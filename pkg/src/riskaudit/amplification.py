"""Disparity amplification between the prediction stage and the tier stage.

For each pair of groups the audit compares an upstream disparity (computed
on raw predictions) against the downstream High-tier disparity among
unsuccessful records.  A pair is *amplified* when discretizing scores into
tiers widens the gap: |downstream gap| > |upstream gap|.
"""

from dataclasses import dataclass

from .core import UNDEFINED, DataError, ValidationError, is_defined
from .dataset import OUTCOMES, SUCCESSFUL, UNSUCCESSFUL, Cohort
from .metrics import PredictionSet, confusion, rates, require_aligned
from .tiering import HIGH, TierAssignment, require_tier

STAGE_BASELINE = "baseline"
STAGE_PREDICTION = "prediction"
STAGE_TIER = "tier"
STAGES = (STAGE_BASELINE, STAGE_PREDICTION, STAGE_TIER)

# Upstream measure choices: the per-group rate whose pair gap is compared
# against the downstream High-tier gap.
FLAG_RATE = "flag_rate"      # P(predicted unsuccessful | outcome unsuccessful)
ACCURACY = "accuracy"        # group accuracy
FPR_GAP = "fpr_gap"          # group false positive rate
UPSTREAM_MEASURES = (FLAG_RATE, ACCURACY, FPR_GAP)


@dataclass(frozen=True)
class StageDisparity:
    """One pair's measured values at one pipeline stage."""

    stage: str
    attribute: str
    group_a: str
    group_b: str
    measure: str
    value_a: float
    value_b: float
    gap: float
    ratio: float

    @classmethod
    def build(cls, stage, attribute, group_a, group_b, measure,
              value_a, value_b) -> "StageDisparity":
        if stage not in STAGES:
            raise ValidationError(f"unknown stage {stage!r}; expected one of {STAGES}")
        if is_defined(value_a) and is_defined(value_b):
            gap = value_a - value_b
            ratio = value_a / value_b if value_b != 0 else UNDEFINED
        else:
            gap = UNDEFINED
            ratio = UNDEFINED
        return cls(stage=stage, attribute=attribute, group_a=group_a, group_b=group_b,
                   measure=measure, value_a=value_a, value_b=value_b, gap=gap, ratio=ratio)

    @property
    def pair(self) -> tuple:
        return (self.group_a, self.group_b)

    def to_dict(self) -> dict:
        return {
            "stage": self.stage,
            "attribute": self.attribute,
            "pair": [self.group_a, self.group_b],
            "measure": self.measure,
            "value_a": self.value_a,
            "value_b": self.value_b,
            "gap": self.gap,
            "ratio": self.ratio,
        }


@dataclass(frozen=True)
class AmplificationRecord:
    """Upstream/downstream comparison for one group pair."""

    upstream: StageDisparity
    downstream: StageDisparity
    gap_delta: float
    ratio_of_ratios: float
    amplified: bool | None

    @property
    def pair(self) -> tuple:
        return self.upstream.pair

    def to_dict(self) -> dict:
        return {
            "attribute": self.upstream.attribute,
            "pair": list(self.pair),
            "upstream": self.upstream.to_dict(),
            "downstream": self.downstream.to_dict(),
            "gap_delta": self.gap_delta,
            "ratio_of_ratios": self.ratio_of_ratios,
            "amplified": self.amplified,
        }


def conditional_tier_rate(assign: TierAssignment, cohort: Cohort, tier: str,
                          outcome: str, attribute: str, value: str) -> float:
    """P(assigned ``tier`` | ``outcome``, group) — undefined on an empty stratum."""
    require_tier(tier)
    if outcome not in OUTCOMES:
        raise ValidationError(f"unknown outcome {outcome!r}; expected one of {OUTCOMES}")
    if assign.ids != cohort.ids:
        raise DataError("tier assignment is not aligned to the cohort (ids differ)")
    domain = cohort.group_values(attribute)
    if value not in domain:
        raise ValidationError(
            f"unknown value {value!r} for attribute {attribute!r}; observed: {domain}"
        )
    want_success = outcome == SUCCESSFUL
    total = hits = 0
    for rec, rec_tier in zip(cohort.records, assign.tiers):
        if rec.successful != want_success or cohort.group_value(rec, attribute) != value:
            continue
        total += 1
        if rec_tier == tier:
            hits += 1
    return hits / total if total else UNDEFINED


def stage_comparison(upstream: StageDisparity, downstream: StageDisparity) -> AmplificationRecord:
    """Combine two stages into an amplification record for one pair."""
    if upstream.pair != downstream.pair or upstream.attribute != downstream.attribute:
        raise ValidationError(
            f"stage mismatch: upstream {upstream.attribute}:{upstream.pair} vs "
            f"downstream {downstream.attribute}:{downstream.pair}"
        )
    if is_defined(upstream.gap) and is_defined(downstream.gap):
        gap_delta = downstream.gap - upstream.gap
        amplified = abs(downstream.gap) > abs(upstream.gap)
    else:
        gap_delta = UNDEFINED
        amplified = None
    if is_defined(upstream.ratio) and is_defined(downstream.ratio) and upstream.ratio != 0:
        ratio_of_ratios = downstream.ratio / upstream.ratio
    else:
        ratio_of_ratios = UNDEFINED
    return AmplificationRecord(upstream=upstream, downstream=downstream,
                               gap_delta=gap_delta, ratio_of_ratios=ratio_of_ratios,
                               amplified=amplified)


def _upstream_value(cohort: Cohort, preds: PredictionSet, attribute: str,
                    value: str, measure: str) -> float:
    c = confusion(cohort, preds, attribute, value)
    if measure == FLAG_RATE:
        # among unsuccessful records: predicted-unsuccessful fraction
        return c.tn / (c.tn + c.fp) if (c.tn + c.fp) else UNDEFINED
    if measure == ACCURACY:
        return rates(c)["accuracy"]
    if measure == FPR_GAP:
        return rates(c)["fpr"]
    raise ValidationError(f"unknown upstream measure {measure!r}; expected one of {UPSTREAM_MEASURES}")


def audit_amplification(cohort: Cohort, preds: PredictionSet, assign: TierAssignment,
                        attribute: str, upstream_measure: str = FLAG_RATE) -> list:
    """Amplification records for every unordered pair of an attribute's groups.

    Upstream and downstream rates for the default measure condition on the
    same stratum (unsuccessful records of each group); this id-set equality
    is verified, not assumed.
    """
    require_aligned(cohort, preds)
    if assign.ids != cohort.ids:
        raise DataError("tier assignment is not aligned to the cohort (ids differ)")
    if upstream_measure not in UPSTREAM_MEASURES:
        raise ValidationError(
            f"unknown upstream measure {upstream_measure!r}; expected one of {UPSTREAM_MEASURES}"
        )
    groups = cohort.group_values(attribute)
    if len(groups) < 2:
        raise ValidationError(
            f"attribute {attribute!r} has {len(groups)} group(s); amplification needs at least 2"
        )

    up_vals = {g: _upstream_value(cohort, preds, attribute, g, upstream_measure) for g in groups}
    down_vals = {g: conditional_tier_rate(assign, cohort, HIGH, UNSUCCESSFUL, attribute, g)
                 for g in groups}
    if upstream_measure in (FLAG_RATE, FPR_GAP):
        # Both stages must condition on the same records; rebuild each
        # stratum from its own stage's id alignment and compare.
        for g in groups:
            pred_stratum = frozenset(
                rid for rid, rec in zip(preds.ids, cohort.records)
                if cohort.group_value(rec, attribute) == g and not rec.successful
            )
            tier_stratum = frozenset(
                rid for rid, rec in zip(assign.ids, cohort.records)
                if cohort.group_value(rec, attribute) == g and not rec.successful
            )
            if pred_stratum != tier_stratum:
                raise DataError(f"stage strata diverged for group {g!r}")

    records = []
    for i, a in enumerate(groups):
        for b in groups[i + 1:]:
            upstream = StageDisparity.build(
                STAGE_PREDICTION, attribute, a, b, upstream_measure,
                up_vals[a], up_vals[b])
            downstream = StageDisparity.build(
                STAGE_TIER, attribute, a, b, "high_tier_rate_given_unsuccessful",
                down_vals[a], down_vals[b])
            records.append(stage_comparison(upstream, downstream))
    return records
