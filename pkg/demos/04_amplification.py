"""
Disparity amplification across pipeline stages
==============================================

The question that motivates the three-stage audit: does discretizing
predictions into tiers *widen* a group gap that was milder at the
prediction stage?  For each group pair we measure an upstream disparity
(default: the rate at which truly unsuccessful students are flagged by the
thresholded prediction) and the downstream analogue (the rate at which
truly unsuccessful students land in the High tier), then compare gaps.
"""

from riskaudit import (
    assign_tiers,
    audit_amplification,
    default_preset,
    generate_cohort,
    stage_comparison,
    synth_scores,
)
from riskaudit.amplification import STAGE_PREDICTION, STAGE_TIER, StageDisparity

spec = default_preset()
cohort = generate_cohort(spec)
preds = synth_scores(cohort, spec)
assign = assign_tiers(preds)

# One record per group pair, per attribute.
for attribute in ("gender", "population"):
    for rec in audit_amplification(cohort, preds, assign, attribute):
        a, b = rec.pair
        print(f"{attribute}: {a} vs {b}")
        print(f"  upstream   {rec.upstream.value_a:.4f} vs {rec.upstream.value_b:.4f}"
              f"  gap {rec.upstream.gap:+.4f}")
        print(f"  downstream {rec.downstream.value_a:.4f} vs {rec.downstream.value_b:.4f}"
              f"  gap {rec.downstream.gap:+.4f}")
        print(f"  gap delta {rec.gap_delta:+.4f} -> amplified: {rec.amplified}")

# The same comparison works on disparities measured elsewhere --- e.g.
# rates lifted from a production dashboard rather than recomputed here.
upstream = StageDisparity.build(STAGE_PREDICTION, "gender", "m", "f",
                                "flag_rate_given_unsuccessful", 0.36, 0.33)
downstream = StageDisparity.build(STAGE_TIER, "gender", "m", "f",
                                  "high_tier_rate_given_unsuccessful", 0.74, 0.63)
rec = stage_comparison(upstream, downstream)
print(f"\nexternal rates: upstream gap {rec.upstream.gap:+.2f}, "
      f"downstream gap {rec.downstream.gap:+.2f}, amplified: {rec.amplified}")
