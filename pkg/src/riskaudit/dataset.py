"""Cohort data model: schema declaration, CSV ingest/export, population filters, chronological splits."""

import csv
import math
from dataclasses import dataclass

from .core import DataError, ValidationError, canonical_json, sha256_hex

POPULATIONS = ("domestic", "international")
SUCCESSFUL = "successful"
UNSUCCESSFUL = "unsuccessful"
OUTCOMES = (SUCCESSFUL, UNSUCCESSFUL)


@dataclass(frozen=True)
class Schema:
    """Column roles for a cohort CSV.

    Every column plays exactly one role.  ``positive_outcome`` and
    ``negative_outcome`` declare the raw outcome labels; internally outcomes
    are normalized to ``"successful"`` / ``"unsuccessful"``.
    """

    id_column: str = "id"
    term_column: str = "term"
    population_column: str = "population"
    group_columns: tuple = ("gender", "age_group")
    numeric_features: tuple = ()
    categorical_features: tuple = ()
    outcome_column: str = "outcome"
    positive_outcome: str = SUCCESSFUL
    negative_outcome: str = UNSUCCESSFUL

    def __post_init__(self):
        object.__setattr__(self, "group_columns", tuple(self.group_columns))
        object.__setattr__(self, "numeric_features", tuple(self.numeric_features))
        object.__setattr__(self, "categorical_features", tuple(self.categorical_features))
        roles = (
            [self.id_column, self.term_column, self.population_column, self.outcome_column]
            + list(self.group_columns)
            + list(self.numeric_features)
            + list(self.categorical_features)
        )
        dupes = sorted({c for c in roles if roles.count(c) > 1})
        if dupes:
            raise ValidationError(f"schema: column(s) declared in more than one role: {', '.join(dupes)}")
        if not self.group_columns:
            raise ValidationError("schema: at least one group attribute column is required")
        if self.positive_outcome == self.negative_outcome:
            raise ValidationError("schema: positive and negative outcome values must differ")

    @property
    def feature_columns(self) -> tuple:
        return self.numeric_features + self.categorical_features

    def columns(self) -> list:
        """Canonical CSV column order."""
        return (
            [self.id_column, self.term_column, self.population_column]
            + list(self.group_columns)
            + list(self.feature_columns)
            + [self.outcome_column]
        )

    def to_dict(self) -> dict:
        return {
            "id_column": self.id_column,
            "term_column": self.term_column,
            "population_column": self.population_column,
            "group_columns": list(self.group_columns),
            "numeric_features": list(self.numeric_features),
            "categorical_features": list(self.categorical_features),
            "outcome_column": self.outcome_column,
            "positive_outcome": self.positive_outcome,
            "negative_outcome": self.negative_outcome,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Schema":
        if not isinstance(data, dict):
            raise ValidationError("schema: expected a JSON object")
        known = {
            "id_column", "term_column", "population_column", "group_columns",
            "numeric_features", "categorical_features", "outcome_column",
            "positive_outcome", "negative_outcome",
        }
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValidationError(f"schema: unknown field(s): {', '.join(unknown)}")
        kwargs = dict(data)
        for key in ("group_columns", "numeric_features", "categorical_features"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)


@dataclass(frozen=True)
class Record:
    """One cohort member.

    ``outcome`` is the normalized label; ``groups`` maps group-attribute name
    to group value; ``features`` maps feature name to float or str.
    """

    id: str
    term_index: int
    population: str
    groups: dict
    features: dict
    outcome: str

    def __post_init__(self):
        if not self.id:
            raise DataError("record: empty id")
        if self.population not in POPULATIONS:
            raise DataError(
                f"record {self.id}: population {self.population!r} not in {POPULATIONS}"
            )
        if not isinstance(self.term_index, int) or self.term_index < 0:
            raise DataError(f"record {self.id}: term_index must be a non-negative integer")
        if self.outcome not in OUTCOMES:
            raise DataError(f"record {self.id}: outcome {self.outcome!r} not in {OUTCOMES}")

    @property
    def successful(self) -> bool:
        return self.outcome == SUCCESSFUL


@dataclass(frozen=True)
class Cohort:
    """Immutable, ordered collection of records conforming to one schema."""

    records: tuple
    schema: Schema

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        seen = set()
        expected_groups = set(self.schema.group_columns)
        expected_features = set(self.schema.feature_columns)
        for rec in self.records:
            if rec.id in seen:
                raise DataError(f"duplicate record id: {rec.id}")
            seen.add(rec.id)
            if set(rec.groups) != expected_groups:
                raise DataError(
                    f"record {rec.id}: group attributes {sorted(rec.groups)} do not match "
                    f"schema {sorted(expected_groups)}"
                )
            if set(rec.features) != expected_features:
                raise DataError(
                    f"record {rec.id}: features {sorted(rec.features)} do not match "
                    f"schema {sorted(expected_features)}"
                )

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def ids(self) -> tuple:
        return tuple(r.id for r in self.records)

    def attributes(self) -> tuple:
        """Group attributes usable in audits, population tag included."""
        return self.schema.group_columns + (self.schema.population_column,)

    def group_value(self, record: Record, attribute: str) -> str:
        if attribute == self.schema.population_column:
            return record.population
        try:
            return record.groups[attribute]
        except KeyError:
            raise ValidationError(f"unknown group attribute: {attribute!r}") from None

    def group_values(self, attribute: str) -> tuple:
        """Sorted distinct values observed for ``attribute``."""
        return tuple(sorted({self.group_value(r, attribute) for r in self.records}))

    def digest(self) -> str:
        payload = [self.schema.to_dict()] + [
            [r.id, r.term_index, r.population, dict(sorted(r.groups.items())),
             dict(sorted(r.features.items())), r.outcome]
            for r in self.records
        ]
        return sha256_hex(canonical_json(payload))


@dataclass(frozen=True)
class SplitSpec:
    """Train/validation/test fractions; must be non-negative and sum to 1."""

    train: float = 0.70
    validation: float = 0.15
    test: float = 0.15

    def __post_init__(self):
        fracs = (self.train, self.validation, self.test)
        if any(f < 0 for f in fracs):
            raise ValidationError(f"split fractions must be non-negative, got {fracs}")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise ValidationError(f"split fractions must sum to 1, got {sum(fracs)!r}")


def load_cohort(path, schema: Schema) -> Cohort:
    """Read a cohort CSV, validating every cell against ``schema``.

    Raises ValidationError for header-level problems (missing columns) and
    DataError for row-level problems, naming the offending row.
    """
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise DataError(f"cannot read cohort file {path}: {exc}") from exc
    with fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in schema.columns() if c not in header]
        if missing:
            raise ValidationError(
                f"{path}: missing required column(s): {', '.join(missing)}"
            )
        records = []
        for row_num, row in enumerate(reader, start=2):
            records.append(_parse_row(row, row_num, schema, path))
    return Cohort(records=tuple(records), schema=schema)


def _parse_row(row: dict, row_num: int, schema: Schema, path) -> Record:
    def fail(message):
        raise DataError(f"{path}: row {row_num}: {message}")

    rec_id = (row.get(schema.id_column) or "").strip()
    if not rec_id:
        fail(f"empty {schema.id_column!r}")

    raw_term = (row.get(schema.term_column) or "").strip()
    try:
        term = int(raw_term)
    except ValueError:
        fail(f"unparseable term value {raw_term!r}")
    if term < 0:
        fail(f"negative term index {term}")

    population = (row.get(schema.population_column) or "").strip()
    if population not in POPULATIONS:
        fail(f"population {population!r} not in {POPULATIONS}")

    groups = {}
    for col in schema.group_columns:
        value = (row.get(col) or "").strip()
        if not value:
            fail(f"missing value for group column {col!r}")
        groups[col] = value

    features = {}
    for col in schema.numeric_features:
        raw = (row.get(col) or "").strip()
        if not raw:
            fail(f"missing value for numeric feature {col!r}")
        try:
            features[col] = float(raw)
        except ValueError:
            fail(f"unparseable numeric value {raw!r} for feature {col!r}")
    for col in schema.categorical_features:
        raw = (row.get(col) or "").strip()
        if not raw:
            fail(f"missing value for categorical feature {col!r}")
        features[col] = raw

    raw_outcome = (row.get(schema.outcome_column) or "").strip()
    if raw_outcome == schema.positive_outcome:
        outcome = SUCCESSFUL
    elif raw_outcome == schema.negative_outcome:
        outcome = UNSUCCESSFUL
    else:
        fail(
            f"outcome value {raw_outcome!r} is neither {schema.positive_outcome!r} "
            f"nor {schema.negative_outcome!r}"
        )

    return Record(
        id=rec_id, term_index=term, population=population,
        groups=groups, features=features, outcome=outcome,
    )


def save_cohort(cohort: Cohort, path) -> None:
    """Write a cohort CSV that round-trips exactly through ``load_cohort``."""
    schema = cohort.schema
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(schema.columns())
        for rec in cohort.records:
            raw_outcome = (
                schema.positive_outcome if rec.successful else schema.negative_outcome
            )
            row = [rec.id, str(rec.term_index), rec.population]
            row += [rec.groups[c] for c in schema.group_columns]
            row += [repr(rec.features[c]) for c in schema.numeric_features]
            row += [rec.features[c] for c in schema.categorical_features]
            row.append(raw_outcome)
            writer.writerow(row)


def filter_population(cohort: Cohort, population: str) -> Cohort:
    """Records with the given population tag, original order preserved."""
    if population not in POPULATIONS:
        raise ValidationError(f"population {population!r} not in {POPULATIONS}")
    kept = tuple(r for r in cohort.records if r.population == population)
    return Cohort(records=kept, schema=cohort.schema)


def chronological_split(cohort: Cohort, spec: SplitSpec = SplitSpec()):
    """Sort by (term_index, id) and slice into train/validation/test cohorts.

    Train and validation sizes use the floor rule; the remainder is test, so
    no future record can leak into training.
    """
    n = len(cohort)
    if n == 0:
        raise ValidationError("cannot split an empty cohort")
    ordered = sorted(cohort.records, key=lambda r: (r.term_index, r.id))
    # epsilon guards against float products landing epsilon below an exact integer
    n_train = math.floor(n * spec.train + 1e-9)
    n_val = math.floor(n * spec.validation + 1e-9)
    train = ordered[:n_train]
    validation = ordered[n_train:n_train + n_val]
    test = ordered[n_train + n_val:]
    make = lambda recs: Cohort(records=tuple(recs), schema=cohort.schema)
    return make(train), make(validation), make(test)
