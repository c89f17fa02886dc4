"""
Group fairness metrics on model predictions
===========================================

Stage-two auditing: given a cohort and per-record success probabilities,
compare groups on positive-prediction rate (SPD, DI), true-positive rate
(EOD), and both error rates at once (AOD).  The positive class is
"predicted successful", so a false positive is a student the model clears
who then does not complete.
"""

from riskaudit import (
    chi_square_independence,
    confusion,
    default_preset,
    generate_cohort,
    pairwise_table,
    rates,
    synth_scores,
)

spec = default_preset()
cohort = generate_cohort(spec)
preds = synth_scores(cohort, spec)  # thresholded at tau = 0.5

# Per-group confusion-matrix rates.
print("per-gender rates")
for gender in cohort.group_values("gender"):
    c = confusion(cohort, preds, "gender", gender)
    r = rates(c)
    print(f"  {gender:<7} n={c.total:<6} fpr={r['fpr']:.4f} "
          f"fnr={r['fnr']:.4f} f1={r['f1']:.4f}")

# Pairwise table over ordered group pairs.  SPD/EOD/AOD are gaps (a - b),
# DI is the rate ratio a / b; undefined entries surface as NaN, never 0.
table = pairwise_table(cohort, preds, "population")
for row in table.rows:
    print(f"{row.group_a} vs {row.group_b}: spd={row.spd:+.4f} "
          f"eod={row.eod:+.4f} aod={row.aod:+.4f} di={row.di:.4f}")
print("largest absolute gaps:", {k: round(v, 4) for k, v in table.max_abs.items()})

# Training-data disparity: a chi-square test of outcome vs population.
# Rows are outcome classes, columns are groups.
succ = []
fail = []
for population in cohort.group_values("population"):
    members = [r for r in cohort.records if r.population == population]
    ok = sum(r.successful for r in members)
    succ.append(ok)
    fail.append(len(members) - ok)
stat, p = chi_square_independence([succ, fail])
print(f"baseline chi-square: statistic={stat:.1f} p={p:.2e}")
