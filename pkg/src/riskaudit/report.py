"""Audit orchestration: run every stage, collect one machine-readable report.

A report has four sections — baseline (training-data disparities),
prediction (group rates and pairwise fairness tables), tiers (thresholds,
summaries, calibration, histogram data), amplification — plus metadata with
config and cohort digests.  Reports are plain dicts of JSON-safe values once
serialized; regeneration from the same inputs is byte-identical because no
wall-clock state enters unless a timestamp is passed in explicitly.
"""

from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from .amplification import FLAG_RATE, UPSTREAM_MEASURES, audit_amplification
from .core import (
    UNDEFINED,
    AuditError,
    ValidationError,
    canonical_json,
    dump_json_bytes,
    is_defined,
    sha256_hex,
)
from .dataset import Cohort
from .metrics import (
    PredictionSet,
    calibration_error,
    chi_square_independence,
    confusion,
    pairwise_table,
    rates,
    require_aligned,
)
from .tiering import TIER_ORDER, TierQuotas, assign_tiers, compute_thresholds, tier_summary

TIER_SCOPES = ("pooled", "per_population")
OVERALL = "overall"


@dataclass(frozen=True)
class AuditConfig:
    """Everything an audit depends on besides the cohort and predictions."""

    tau: float = 0.5
    quotas: TierQuotas = TierQuotas()
    ece_bins: int = 10
    histogram_bins: int = 20
    upstream_measure: str = FLAG_RATE
    tier_scope: str = "pooled"
    seed: int | None = None
    generated_at: str | None = None

    def __post_init__(self):
        if not 0.0 <= self.tau <= 1.0:
            raise ValidationError(f"tau must lie in [0, 1], got {self.tau!r}")
        if self.ece_bins < 1 or self.histogram_bins < 1:
            raise ValidationError("bin counts must be >= 1")
        if self.upstream_measure not in UPSTREAM_MEASURES:
            raise ValidationError(
                f"unknown upstream measure {self.upstream_measure!r}; "
                f"expected one of {UPSTREAM_MEASURES}"
            )
        if self.tier_scope not in TIER_SCOPES:
            raise ValidationError(
                f"unknown tier scope {self.tier_scope!r}; expected one of {TIER_SCOPES}"
            )

    def to_dict(self) -> dict:
        return {
            "tau": self.tau,
            "quotas": self.quotas.to_dict(),
            "ece_bins": self.ece_bins,
            "histogram_bins": self.histogram_bins,
            "upstream_measure": self.upstream_measure,
            "tier_scope": self.tier_scope,
            "seed": self.seed,
            "generated_at": self.generated_at,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AuditConfig":
        if not isinstance(data, dict):
            raise ValidationError("config: expected a JSON object")
        unknown = sorted(set(data) - set(cls.__dataclass_fields__))
        if unknown:
            raise ValidationError(f"config: unknown field(s): {', '.join(unknown)}")
        kwargs = dict(data)
        if "quotas" in kwargs and not isinstance(kwargs["quotas"], TierQuotas):
            kwargs["quotas"] = TierQuotas.from_dict(kwargs["quotas"])
        return cls(**kwargs)

    def digest(self) -> str:
        return sha256_hex(canonical_json(self.to_dict()))


@dataclass(frozen=True)
class AuditReport:
    metadata: dict
    baseline: dict
    prediction: dict
    tiers: dict
    amplification: dict

    def to_dict(self) -> dict:
        return {
            "metadata": self.metadata,
            "baseline": self.baseline,
            "prediction": self.prediction,
            "tiers": self.tiers,
            "amplification": self.amplification,
        }

    def to_json_bytes(self) -> bytes:
        return dump_json_bytes(self.to_dict())


@contextmanager
def _stage(name: str):
    # Re-raise audit errors with the failing stage in front, same exit code.
    try:
        yield
    except AuditError as exc:
        raise type(exc)(f"{name} stage: {exc}") from exc


def _subset(cohort: Cohort, preds: PredictionSet, population: str):
    idxs = [i for i, r in enumerate(cohort.records) if r.population == population]
    take = np.array(idxs, dtype=int)
    sub_cohort = Cohort(records=tuple(cohort.records[i] for i in idxs), schema=cohort.schema)
    sub_preds = PredictionSet(
        ids=tuple(preds.ids[i] for i in idxs),
        probs=preds.probs[take],
        pred_successful=preds.pred_successful[take],
        tau=preds.tau,
    )
    return sub_cohort, sub_preds


def _populations_present(cohort: Cohort) -> tuple:
    return cohort.group_values(cohort.schema.population_column)


def _baseline_section(cohort: Cohort) -> dict:
    out = {}
    for attr in cohort.attributes():
        groups = cohort.group_values(attr)
        per_group = {}
        successes, failures = [], []
        for g in groups:
            total = ok = 0
            for rec in cohort.records:
                if cohort.group_value(rec, attr) != g:
                    continue
                total += 1
                ok += rec.successful
            per_group[g] = {
                "count": total,
                "successful": ok,
                "success_rate": ok / total if total else UNDEFINED,
            }
            successes.append(ok)
            failures.append(total - ok)
        chi = {"statistic": UNDEFINED, "p_value": UNDEFINED, "dof": max(len(groups) - 1, 0)}
        if len(groups) >= 2:
            try:
                stat, p = chi_square_independence([successes, failures])
                chi = {"statistic": stat, "p_value": p, "dof": len(groups) - 1}
            except ValidationError:
                pass  # all-successful or all-unsuccessful margins stay undefined
        out[attr] = {"groups": per_group, "chi_square": chi}
    return out


def _prediction_scope(cohort: Cohort, preds: PredictionSet, attributes) -> dict:
    rate_tables, pair_tables = {}, {}
    for attr in attributes:
        groups = cohort.group_values(attr)
        per_group = {}
        for g in groups:
            c = confusion(cohort, preds, attr, g)
            entry = rates(c)
            entry["count"] = c.total
            entry["positive_prediction_rate"] = c.positive_prediction_rate()
            per_group[g] = entry
        rate_tables[attr] = per_group
        # one observed group -> no pairs to compare; marked, not an error
        pair_tables[attr] = (
            pairwise_table(cohort, preds, attr).to_dict() if len(groups) >= 2 else None
        )
    return {"n": len(cohort), "rates": rate_tables, "pairwise": pair_tables}


def _prediction_section(cohort: Cohort, preds: PredictionSet) -> dict:
    scopes = {OVERALL: _prediction_scope(cohort, preds, cohort.attributes())}
    for population in _populations_present(cohort):
        sub_cohort, sub_preds = _subset(cohort, preds, population)
        scopes[population] = _prediction_scope(sub_cohort, sub_preds,
                                               cohort.schema.group_columns)
    return {"scopes": scopes}


def histogram_data(preds: PredictionSet, n_bins: int = 20,
                   quotas: TierQuotas = TierQuotas()) -> dict:
    """Equal-width score histogram plus the tier thresholds, for plotting."""
    if n_bins < 1:
        raise ValidationError(f"n_bins must be >= 1, got {n_bins}")
    if len(preds) == 0:
        raise ValidationError("cannot build a histogram from an empty prediction set")
    idx = np.minimum((preds.probs * n_bins).astype(int), n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins)
    t_high, t_medium = compute_thresholds(preds.probs, quotas)
    return {
        "n": int(len(preds)),
        "bin_edges": np.linspace(0.0, 1.0, n_bins + 1).tolist(),
        "counts": counts.tolist(),
        "t_high": t_high,
        "t_medium": t_medium,
    }


def _tier_scope_section(cohort: Cohort, preds: PredictionSet, config: AuditConfig):
    assign = assign_tiers(preds, config.quotas)
    summary = tier_summary(assign, cohort)
    outcomes = [r.successful for r in cohort.records]
    calibration = {"overall": calibration_error(preds.probs, outcomes, config.ece_bins).to_dict()}
    by_tier = {}
    for tier in TIER_ORDER:
        idxs = [i for i, t in enumerate(assign.tiers) if t == tier]
        if idxs:
            take = np.array(idxs, dtype=int)
            by_tier[tier] = calibration_error(
                preds.probs[take], [outcomes[i] for i in idxs], config.ece_bins
            ).to_dict()
        else:
            by_tier[tier] = None
    calibration["by_tier"] = by_tier
    section = {
        "thresholds": {"t_high": assign.t_high, "t_medium": assign.t_medium},
        "counts": assign.counts(),
        "degenerate": assign.degenerate,
        "summary": summary,
        "calibration": calibration,
        "histogram": histogram_data(preds, config.histogram_bins, config.quotas),
    }
    return section, assign


def _amplification_scope(cohort, preds, assign, attributes, measure) -> dict:
    out = {}
    for attr in attributes:
        if len(cohort.group_values(attr)) < 2:
            out[attr] = None
            continue
        records = audit_amplification(cohort, preds, assign, attr, measure)
        out[attr] = [r.to_dict() for r in records]
    return out


def run_audit(cohort: Cohort, preds: PredictionSet, config: AuditConfig = AuditConfig()) -> AuditReport:
    """Run all audit stages and assemble the report."""
    if len(cohort) == 0:
        raise ValidationError("cannot audit an empty cohort")
    require_aligned(cohort, preds)

    metadata = {
        "generated_at": config.generated_at,
        "seed": config.seed,
        "config_digest": config.digest(),
        "cohort_digest": cohort.digest(),
        "n_records": len(cohort),
        "tau": preds.tau,
    }

    with _stage("baseline"):
        baseline = _baseline_section(cohort)
    with _stage("prediction"):
        prediction = _prediction_section(cohort, preds)

    with _stage("tiering"):
        tier_scopes = {}
        assignments = {}
        if config.tier_scope == "pooled":
            tier_scopes[OVERALL], assignments[OVERALL] = _tier_scope_section(
                cohort, preds, config)
        else:
            for population in _populations_present(cohort):
                sub_cohort, sub_preds = _subset(cohort, preds, population)
                tier_scopes[population], assignments[population] = _tier_scope_section(
                    sub_cohort, sub_preds, config)
        tiers = {"scope": config.tier_scope, "scopes": tier_scopes}

    with _stage("amplification"):
        amp_scopes = {}
        if config.tier_scope == "pooled":
            amp_scopes[OVERALL] = _amplification_scope(
                cohort, preds, assignments[OVERALL], cohort.attributes(),
                config.upstream_measure)
        else:
            for population in _populations_present(cohort):
                sub_cohort, sub_preds = _subset(cohort, preds, population)
                amp_scopes[population] = _amplification_scope(
                    sub_cohort, sub_preds, assignments[population],
                    cohort.schema.group_columns, config.upstream_measure)
        amplification = {"upstream_measure": config.upstream_measure, "scopes": amp_scopes}

    return AuditReport(metadata=metadata, baseline=baseline, prediction=prediction,
                       tiers=tiers, amplification=amplification)


# --- renderings -------------------------------------------------------------

def _fmt(value) -> str:
    if value is None or not is_defined(value):
        return "n/a"
    return f"{value:.4f}"


def _as_dict(report) -> dict:
    return report.to_dict() if isinstance(report, AuditReport) else report


def _markdown_table(header, rows) -> str:
    lines = ["| " + " | ".join(header) + " |",
             "| " + " | ".join("---" for _ in header) + " |"]
    lines += ["| " + " | ".join(row) + " |" for row in rows]
    return "\n".join(lines) + "\n"


def _csv_table(header, rows) -> str:
    lines = [",".join(header)]
    lines += [",".join(row) for row in rows]
    return "\n".join(lines) + "\n"


def _table_one_attrs(rate_tables: dict) -> list:
    preferred = [a for a in ("gender", "age_group") if a in rate_tables]
    rest = sorted(a for a in rate_tables if a not in preferred)
    return preferred + rest


def table_one(report, fmt: str = "markdown") -> str:
    """Per-group FPR/FNR/F1 for each population, gender rows then age rows."""
    data = _as_dict(report)
    scopes = data["prediction"]["scopes"]
    populations = [p for p in sorted(scopes) if p != OVERALL]
    header = ["group"]
    for population in populations:
        header += [f"{population}_fpr", f"{population}_fnr", f"{population}_f1"]

    rows = []
    attr_source = scopes[populations[0]]["rates"] if populations else {}
    for attr in _table_one_attrs(attr_source):
        group_names = sorted({g for p in populations for g in scopes[p]["rates"].get(attr, {})})
        for g in group_names:
            row = [g]
            for population in populations:
                cell = scopes[population]["rates"].get(attr, {}).get(g)
                if cell is None:
                    row += ["n/a", "n/a", "n/a"]
                else:
                    row += [_fmt(cell["fpr"]), _fmt(cell["fnr"]), _fmt(cell["f1"])]
            rows.append(row)

    if fmt == "markdown":
        return _markdown_table(header, rows)
    if fmt == "csv":
        return _csv_table(header, rows)
    raise ValidationError(f"unknown table format {fmt!r}; expected 'markdown' or 'csv'")


def _unordered_rows(table: dict) -> list:
    groups = list(table["groups"])
    rows_by_pair = {(r["group_a"], r["group_b"]): r for r in table["rows"]}
    out = []
    for i, a in enumerate(groups):
        for b in groups[i + 1:]:
            r = rows_by_pair[(a, b)]
            out.append([f"{a} vs {b}", _fmt(r["spd"]), _fmt(r["eod"]),
                        _fmt(r["aod"]), _fmt(r["di"])])
    return out


def pairwise_tables(report, fmt: str = "markdown") -> str:
    """SPD/EOD/AOD/DI per group pair, one table per scope and attribute."""
    data = _as_dict(report)
    scopes = data["prediction"]["scopes"]
    scope_names = [OVERALL] + [p for p in sorted(scopes) if p != OVERALL]
    header = ["pair", "spd", "eod", "aod", "di"]
    if fmt == "markdown":
        chunks = []
        for scope in scope_names:
            for attr in sorted(scopes[scope]["pairwise"]):
                table = scopes[scope]["pairwise"][attr]
                if table is None:
                    continue
                chunks.append(f"### {scope} / {attr}\n\n"
                              + _markdown_table(header, _unordered_rows(table)))
        return "\n".join(chunks)
    if fmt == "csv":
        rows = []
        for scope in scope_names:
            for attr in sorted(scopes[scope]["pairwise"]):
                table = scopes[scope]["pairwise"][attr]
                if table is None:
                    continue
                rows += [[scope, attr] + row for row in _unordered_rows(table)]
        return _csv_table(["scope", "attribute"] + header, rows)
    raise ValidationError(f"unknown table format {fmt!r}; expected 'markdown' or 'csv'")


def tier_table(report, fmt: str = "markdown") -> str:
    """Tier counts, success rates, Brier and implied-label accuracy per scope."""
    data = _as_dict(report)
    header = ["scope", "tier", "count", "success_rate", "brier", "accuracy"]
    rows = []
    for scope in sorted(data["tiers"]["scopes"]):
        section = data["tiers"]["scopes"][scope]
        for tier in TIER_ORDER:
            cell = section["summary"][tier]
            rows.append([scope, tier, str(cell["count"]), _fmt(cell["success_rate"]),
                         _fmt(cell["brier"]), _fmt(cell["accuracy"])])
    if fmt == "markdown":
        return _markdown_table(header, rows)
    if fmt == "csv":
        return _csv_table(header, rows)
    raise ValidationError(f"unknown table format {fmt!r}; expected 'markdown' or 'csv'")


def amplification_table(report, fmt: str = "markdown") -> str:
    """Upstream vs downstream gaps with the amplified verdict per pair."""
    data = _as_dict(report)
    header = ["scope", "attribute", "pair", "upstream_gap", "downstream_gap",
              "gap_delta", "amplified"]
    rows = []
    for scope in sorted(data["amplification"]["scopes"]):
        for attr in sorted(data["amplification"]["scopes"][scope]):
            records = data["amplification"]["scopes"][scope][attr]
            if records is None:
                continue
            for rec in records:
                amplified = rec["amplified"]
                rows.append([
                    scope, attr, " vs ".join(rec["pair"]),
                    _fmt(rec["upstream"]["gap"]), _fmt(rec["downstream"]["gap"]),
                    _fmt(rec["gap_delta"]),
                    "n/a" if amplified is None else str(bool(amplified)).lower(),
                ])
    if fmt == "markdown":
        return _markdown_table(header, rows)
    if fmt == "csv":
        return _csv_table(header, rows)
    raise ValidationError(f"unknown table format {fmt!r}; expected 'markdown' or 'csv'")


def render_markdown(report) -> str:
    """One human-readable document covering every report section."""
    data = _as_dict(report)
    meta = data["metadata"]
    tiers = data["tiers"]
    lines = [
        "# Risk audit report",
        "",
        f"- records: {meta['n_records']}",
        f"- cohort digest: `{meta['cohort_digest'][:16]}`",
        f"- config digest: `{meta['config_digest'][:16]}`",
        f"- decision threshold: {meta['tau'] if meta['tau'] is not None else 'labels supplied'}",
        "",
        "## Baseline success rates",
        "",
    ]
    baseline_rows = []
    for attr in sorted(data["baseline"]):
        section = data["baseline"][attr]
        chi = section["chi_square"]
        for g in sorted(section["groups"]):
            cell = section["groups"][g]
            baseline_rows.append([attr, g, str(cell["count"]), _fmt(cell["success_rate"])])
        baseline_rows.append([attr, "(chi-square)", _fmt(chi["statistic"]),
                              _fmt(chi["p_value"])])
    lines.append(_markdown_table(["attribute", "group", "count", "success_rate / p"],
                                 baseline_rows))
    lines += ["", "## Model performance by group", "", table_one(data)]
    lines += ["", "## Pairwise fairness metrics", "", pairwise_tables(data)]

    lines += ["", "## Risk tiers", ""]
    for scope in sorted(tiers["scopes"]):
        t = tiers["scopes"][scope]["thresholds"]
        degenerate = tiers["scopes"][scope]["degenerate"]
        note = "  (degenerate: at least one tier is empty)" if degenerate else ""
        lines.append(f"- {scope}: t_high = {_fmt(t['t_high'])}, "
                     f"t_medium = {_fmt(t['t_medium'])}{note}")
    lines += ["", tier_table(data)]
    lines += ["", "## Amplification", "", amplification_table(data)]
    return "\n".join(lines) + "\n"
