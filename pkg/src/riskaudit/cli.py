"""Command-line pipeline: synth, split, train, score, tier, audit, report.

Every subcommand reads and writes the library's CSV/JSON interfaces, so any
stage can be swapped for an external tool — e.g. drop in production model
scores as a predictions CSV and audit those.  Exit codes: 0 success,
1 validation error, 2 runtime/data error.
"""

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from . import model
from .core import AuditError, read_json, write_json
from .dataset import (
    Schema,
    SplitSpec,
    chronological_split,
    load_cohort,
    save_cohort,
)
from .metrics import load_predictions, save_predictions
from .report import (
    AuditConfig,
    amplification_table,
    pairwise_tables,
    render_markdown,
    run_audit,
    table_one,
    tier_table,
)
from .synth import SynthSpec, default_preset, generate_cohort, synth_schema, synth_scores
from .tiering import assign_tiers, save_tiers


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None,
                   help="seed recorded in outputs and used by seeded stages")
    p.add_argument("--config", default=None, help="audit config JSON")
    p.add_argument("--out-dir", default=".", help="directory for output files")


def _config(args) -> AuditConfig:
    cfg = AuditConfig.from_dict(read_json(args.config)) if args.config else AuditConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "tau", None) is not None:
        cfg = replace(cfg, tau=args.tau)
    if getattr(args, "tier_scope", None) is not None:
        cfg = replace(cfg, tier_scope=args.tier_scope)
    return cfg


def _schema(args) -> Schema:
    if getattr(args, "schema", None):
        return Schema.from_dict(read_json(args.schema))
    return synth_schema()


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_bytes(path: Path, payload: bytes) -> None:
    path.write_bytes(payload)
    print(f"wrote {path}")


def _write_text(path: Path, payload: str) -> None:
    path.write_text(payload, encoding="utf-8")
    print(f"wrote {path}")


def cmd_synth(args) -> int:
    cfg = _config(args)
    if args.spec:
        spec = SynthSpec.from_dict(read_json(args.spec))
    else:
        spec = default_preset(scale=args.scale)
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    cohort = generate_cohort(spec)
    preds = synth_scores(cohort, spec, tau=cfg.tau)
    out = _out_dir(args)
    save_cohort(cohort, out / "cohort.csv")
    print(f"wrote {out / 'cohort.csv'} ({len(cohort)} records)")
    save_predictions(preds, out / "predictions.csv")
    print(f"wrote {out / 'predictions.csv'}")
    write_json(out / "synth_spec.json", spec.to_dict())
    print(f"wrote {out / 'synth_spec.json'}")
    return 0


def cmd_split(args) -> int:
    cohort = load_cohort(args.cohort, _schema(args))
    spec = SplitSpec(train=args.train_frac, validation=args.validation_frac,
                     test=args.test_frac)
    train, validation, test = chronological_split(cohort, spec)
    out = _out_dir(args)
    for name, part in (("train", train), ("validation", validation), ("test", test)):
        save_cohort(part, out / f"{name}.csv")
        print(f"wrote {out / f'{name}.csv'} ({len(part)} records)")
    return 0


def cmd_train(args) -> int:
    cfg = _config(args)
    seed = cfg.seed if cfg.seed is not None else 0
    cohort = load_cohort(args.cohort, _schema(args))
    matrix = model.design_matrix(cohort, include_groups=not args.exclude_groups)
    if not args.no_smote:
        matrix = model.smote(matrix, k=args.k, seed=seed)
    params = model.ScorerParams(
        feature_names=matrix.feature_names, l2=args.l2,
        learning_rate=args.learning_rate, max_epochs=args.epochs, seed=seed)
    fitted = model.train_reference(matrix, params)
    out = _out_dir(args)
    model.save_params(fitted, out / "model.json")
    print(f"wrote {out / 'model.json'} ({len(matrix)} training rows)")
    return 0


def cmd_score(args) -> int:
    cfg = _config(args)
    cohort = load_cohort(args.cohort, _schema(args))
    params = model.load_params(args.model)
    matrix = model.design_matrix(cohort, feature_names=params.feature_names)
    preds = model.predict_proba(params, matrix, tau=cfg.tau)
    out = _out_dir(args)
    save_predictions(preds, out / "predictions.csv")
    print(f"wrote {out / 'predictions.csv'} ({len(preds)} rows)")
    return 0


def cmd_tier(args) -> int:
    cfg = _config(args)
    preds = load_predictions(args.predictions, tau=cfg.tau)
    assign = assign_tiers(preds, cfg.quotas)
    out = _out_dir(args)
    save_tiers(assign, out / "tiers.csv")
    counts = assign.counts()
    print(f"wrote {out / 'tiers.csv'} "
          f"(high={counts['high']} medium={counts['medium']} low={counts['low']}, "
          f"t_high={assign.t_high:.6f} t_medium={assign.t_medium:.6f})")
    return 0


def _run_audit_from_files(args):
    cfg = _config(args)
    cohort = load_cohort(args.cohort, _schema(args))
    preds = load_predictions(args.predictions, cohort, tau=cfg.tau)
    return run_audit(cohort, preds, cfg)


def cmd_audit(args) -> int:
    rep = _run_audit_from_files(args)
    out = _out_dir(args)
    _write_bytes(out / "report.json", rep.to_json_bytes())
    return 0


def cmd_report(args) -> int:
    out = _out_dir(args)
    if args.report:
        data = read_json(args.report)
    else:
        rep = _run_audit_from_files(args)
        data = rep.to_dict()
        _write_bytes(out / "report.json", rep.to_json_bytes())
    _write_text(out / "report.md", render_markdown(data))
    _write_text(out / "table_one.md", table_one(data, "markdown"))
    _write_text(out / "table_one.csv", table_one(data, "csv"))
    _write_text(out / "pairwise.md", pairwise_tables(data, "markdown"))
    _write_text(out / "pairwise.csv", pairwise_tables(data, "csv"))
    _write_text(out / "tiers.md", tier_table(data, "markdown"))
    _write_text(out / "amplification.md", amplification_table(data, "markdown"))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="riskaudit",
        description="Group-fairness audits for risk-scoring pipelines.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic cohort + scores")
    _add_common(p)
    p.add_argument("--spec", default=None, help="synth spec JSON (default: built-in preset)")
    p.add_argument("--scale", type=int, default=10,
                   help="preset downscale factor when no --spec is given")
    p.add_argument("--tau", type=float, default=None, help="decision threshold")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("split", help="chronological train/validation/test split")
    _add_common(p)
    p.add_argument("--cohort", required=True, help="cohort CSV")
    p.add_argument("--schema", default=None, help="schema JSON (default: synth schema)")
    p.add_argument("--train-frac", type=float, default=0.70)
    p.add_argument("--validation-frac", type=float, default=0.15)
    p.add_argument("--test-frac", type=float, default=0.15)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="SMOTE-balance and fit the reference scorer")
    _add_common(p)
    p.add_argument("--cohort", required=True, help="training cohort CSV")
    p.add_argument("--schema", default=None, help="schema JSON (default: synth schema)")
    p.add_argument("--k", type=int, default=5, help="SMOTE neighbor count")
    p.add_argument("--no-smote", action="store_true", help="skip class balancing")
    p.add_argument("--exclude-groups", action="store_true",
                   help="leave group attributes out of the design matrix")
    p.add_argument("--l2", type=float, default=1e-4)
    p.add_argument("--learning-rate", type=float, default=1.0)
    p.add_argument("--epochs", type=int, default=300)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("score", help="score a cohort with a trained model")
    _add_common(p)
    p.add_argument("--cohort", required=True, help="cohort CSV to score")
    p.add_argument("--schema", default=None, help="schema JSON (default: synth schema)")
    p.add_argument("--model", required=True, help="model parameters JSON")
    p.add_argument("--tau", type=float, default=None, help="decision threshold")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("tier", help="assign risk tiers from a predictions CSV")
    _add_common(p)
    p.add_argument("--predictions", required=True, help="predictions CSV")
    p.add_argument("--tau", type=float, default=None, help="decision threshold")
    p.set_defaults(func=cmd_tier)

    p = sub.add_parser("audit", help="run the full audit, write report JSON")
    _add_common(p)
    p.add_argument("--cohort", required=True, help="cohort CSV")
    p.add_argument("--schema", default=None, help="schema JSON (default: synth schema)")
    p.add_argument("--predictions", required=True, help="predictions CSV")
    p.add_argument("--tau", type=float, default=None, help="decision threshold")
    p.add_argument("--tier-scope", choices=("pooled", "per_population"), default=None)
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("report", help="render tables from a report (or run one)")
    _add_common(p)
    p.add_argument("--report", default=None, help="existing report JSON to render")
    p.add_argument("--cohort", default=None, help="cohort CSV (when no --report)")
    p.add_argument("--schema", default=None, help="schema JSON (default: synth schema)")
    p.add_argument("--predictions", default=None, help="predictions CSV (when no --report)")
    p.add_argument("--tau", type=float, default=None, help="decision threshold")
    p.add_argument("--tier-scope", choices=("pooled", "per_population"), default=None)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "report" and not args.report:
        if not (args.cohort and args.predictions):
            parser.error("report: provide --report, or both --cohort and --predictions")
    try:
        return args.func(args)
    except AuditError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except Exception as exc:  # pragma: no cover - defensive catch-all
        print(f"unexpected error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def entry_point() -> None:
    sys.exit(main())
