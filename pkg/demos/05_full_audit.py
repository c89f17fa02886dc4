"""
End-to-end audit: train a scorer, audit its predictions
=======================================================

The whole pipeline in library calls (the `riskaudit` CLI wraps exactly
these steps): generate a cohort, split it chronologically, balance the
training data with SMOTE, fit the reference logistic scorer, score the
held-out test split, and run the full audit.  The report is deterministic:
same inputs, same bytes.
"""

from pathlib import Path

from riskaudit import (
    AuditConfig,
    SplitSpec,
    chronological_split,
    default_preset,
    design_matrix,
    generate_cohort,
    predict_proba,
    render_markdown,
    run_audit,
    smote,
    train_reference,
)
from riskaudit.model import ScorerParams

spec = default_preset()
cohort = generate_cohort(spec)

# Chronological split: order by term, never train on the future.
train, validation, test = chronological_split(cohort, SplitSpec(0.70, 0.15, 0.15))
print(f"split: train={len(train)} validation={len(validation)} test={len(test)}")

# Balance classes, then fit.  The design matrix one-hot encodes group
# attributes next to the numeric affinity feature.
matrix = smote(design_matrix(train), k=5, seed=101)
params = train_reference(matrix, ScorerParams(
    feature_names=matrix.feature_names, l2=1e-4, max_epochs=300, seed=101))
print(f"trained on {len(matrix)} rows ({len(matrix.feature_names)} features)")

# Score the test split and audit all three stages at once.
test_matrix = design_matrix(test, feature_names=params.feature_names)
preds = predict_proba(params, test_matrix)
report = run_audit(test, preds, AuditConfig(seed=101))

meta = report.metadata
print(f"audited {meta['n_records']} records; cohort digest {meta['cohort_digest'][:12]}")
amp = report.amplification["scopes"]["overall"]["gender"][0]
print(f"gender gap upstream {amp['upstream']['gap']:+.4f} -> "
      f"downstream {amp['downstream']['gap']:+.4f} (amplified: {amp['amplified']})")

# Byte-identical reruns make reports safe to diff and cache.
assert run_audit(test, preds, AuditConfig(seed=101)).to_json_bytes() == report.to_json_bytes()
print("rerun is byte-identical")

out = Path("audit_out")
out.mkdir(exist_ok=True)
(out / "report.json").write_bytes(report.to_json_bytes())
(out / "report.md").write_text(render_markdown(report), encoding="utf-8")
print(f"wrote {out / 'report.json'} and {out / 'report.md'}")
