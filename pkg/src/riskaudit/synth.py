"""Seeded synthetic cohort generation.

Cohorts are built cell by cell, one cell per (population, gender, age_group)
combination.  Each cell fixes a record count, a success rate, and a
two-component truncated-Gaussian score model: successful records draw a
latent affinity from a high component, unsuccessful records from a low one.
Every cell owns an independent, hash-derived RNG stream, so adding or
removing a cell never perturbs any other cell's draws.

The default preset is calibrated to published aggregate statistics from a
large university early-warning system: 102,353 records (61,375 domestic /
40,978 international), overall success rates 67% domestic / 85%
international, gender rates 73/59 (domestic F/M) and 89/82 (international
F/M), and a bimodal score distribution.
"""

import hashlib
import math
import struct
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.special import ndtr, ndtri

from .core import ValidationError
from .dataset import POPULATIONS, SUCCESSFUL, UNSUCCESSFUL, Cohort, Record, Schema
from .metrics import PredictionSet

DEFAULT_SEED = 101

# Default mixture components.  Means/spreads chosen so pooled scores are
# bimodal with lobes below 0.3 and above 0.8, and so that female unsuccessful
# records sit slightly above male ones (a small upstream score offset that
# the tier stage is expected to widen).
MU_SUCCESS = 0.88
SIGMA_SUCCESS = 0.10
SIGMA_FAIL = 0.15
MU_FAIL = {"female": 0.28, "male": 0.22}

# Population x gender cell sizes at full scale.  Gender shares are solved so
# the published gender rates mix back to the published population rates:
# domestic 0.73 f + 0.59 (1-f) = 0.67 -> f = 4/7; international
# 0.89 f + 0.82 (1-f) = 0.85 -> f = 3/7.
GENDER_COUNTS = {
    ("domestic", "female"): 35071,
    ("domestic", "male"): 26304,
    ("international", "female"): 17562,
    ("international", "male"): 23416,
}
GENDER_RATES = {
    ("domestic", "female"): 0.73,
    ("domestic", "male"): 0.59,
    ("international", "female"): 0.89,
    ("international", "male"): 0.82,
}

# Age bands with within-gender shares and success-rate offsets.  The offsets
# are illustrative (published results give only the direction: older bands
# outperform the youngest); shares . offsets = 0 so gender rates are exact.
AGE_BANDS = ("0-18", "19-20", "21-25", "26-30", "31-35", "36-40", "41-50", "51+")
AGE_SHARES = (0.18, 0.24, 0.30, 0.12, 0.07, 0.04, 0.03, 0.02)
AGE_RATE_OFFSETS = (-0.03, -0.04, 0.005, 0.04, 0.05, 0.06, 0.06, 0.05)

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class CellSpec:
    """One generator cell: demographics, size, rate, and score mixture."""

    population: str
    gender: str
    age_group: str
    count: int
    success_rate: float
    mu_success: float = MU_SUCCESS
    sigma_success: float = SIGMA_SUCCESS
    mu_fail: float = 0.25
    sigma_fail: float = SIGMA_FAIL

    @property
    def key(self) -> tuple:
        return (self.population, self.gender, self.age_group)

    def problems(self) -> list:
        """Human-readable constraint violations, empty when valid."""
        out = []
        if self.population not in POPULATIONS:
            out.append(f"population {self.population!r} not in {POPULATIONS}")
        if not isinstance(self.count, int) or self.count < 0:
            out.append(f"count {self.count!r} must be a non-negative integer")
        if not 0.0 <= self.success_rate <= 1.0:
            out.append(f"success_rate {self.success_rate!r} must lie in [0, 1]")
        for name in ("mu_success", "mu_fail"):
            v = getattr(self, name)
            if not math.isfinite(v):
                out.append(f"{name} {v!r} must be finite")
        for name in ("sigma_success", "sigma_fail"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                out.append(f"{name} {v!r} must be positive")
        return out

    def to_dict(self) -> dict:
        return {
            "population": self.population,
            "gender": self.gender,
            "age_group": self.age_group,
            "count": self.count,
            "success_rate": self.success_rate,
            "mu_success": self.mu_success,
            "sigma_success": self.sigma_success,
            "mu_fail": self.mu_fail,
            "sigma_fail": self.sigma_fail,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CellSpec":
        known = {f for f in cls.__dataclass_fields__}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValidationError(f"unknown cell fields: {unknown}")
        missing = [f for f in ("population", "gender", "age_group", "count", "success_rate")
                   if f not in data]
        if missing:
            raise ValidationError(f"cell is missing required fields: {missing}")
        return cls(**data)


@dataclass(frozen=True)
class SynthSpec:
    """A full generator configuration: cells plus seed and term horizon."""

    cells: tuple
    seed: int = DEFAULT_SEED
    n_terms: int = 27

    def __post_init__(self):
        object.__setattr__(self, "cells", tuple(self.cells))
        if not isinstance(self.seed, int):
            raise ValidationError(f"seed must be an integer, got {type(self.seed).__name__}")
        if not isinstance(self.n_terms, int) or self.n_terms < 1:
            raise ValidationError(f"n_terms must be a positive integer, got {self.n_terms!r}")
        if not self.cells:
            raise ValidationError("spec must declare at least one cell")
        offenses = []
        seen = {}
        for cell in self.cells:
            for problem in cell.problems():
                offenses.append(f"cell {cell.key}: {problem}")
            if cell.key in seen:
                offenses.append(f"cell {cell.key}: duplicate of an earlier cell")
            seen[cell.key] = cell
        if offenses:
            raise ValidationError("invalid synth spec:\n  " + "\n  ".join(offenses))

    @property
    def total_count(self) -> int:
        return sum(c.count for c in self.cells)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "n_terms": self.n_terms,
            "cells": [c.to_dict() for c in self.cells],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SynthSpec":
        unknown = sorted(set(data) - {"seed", "n_terms", "cells"})
        if unknown:
            raise ValidationError(f"unknown spec fields: {unknown}")
        cells = data.get("cells")
        if not isinstance(cells, list):
            raise ValidationError("spec must contain a 'cells' list")
        return cls(
            cells=tuple(CellSpec.from_dict(c) for c in cells),
            seed=data.get("seed", DEFAULT_SEED),
            n_terms=data.get("n_terms", 27),
        )


def synth_schema() -> Schema:
    """Schema of generated cohorts: gender/age groups plus a latent affinity."""
    return Schema(numeric_features=("affinity",))


def _cell_rng(seed: int, key: tuple) -> np.random.Generator:
    # Stream split: the cell key is hashed into four 32-bit words that extend
    # the user seed, giving each cell a fixed, independent PCG64 stream.
    digest = hashlib.sha256(":".join(key).encode("utf-8")).digest()
    words = struct.unpack("<4I", digest[:16])
    entropy = [seed & _MASK64, *words]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def _truncated_normal(rng: np.random.Generator, mu: float, sigma: float, size: int) -> np.ndarray:
    """Gaussian(mu, sigma) conditioned on [0, 1], via inverse-CDF sampling."""
    lo = ndtr((0.0 - mu) / sigma)
    hi = ndtr((1.0 - mu) / sigma)
    u = lo + rng.random(size) * (hi - lo)
    # ndtri(0) and ndtri(1) are infinite; clamp so extreme mixtures stay finite.
    u = np.clip(u, 1e-300, 1.0 - 1e-16)
    return np.clip(mu + sigma * ndtri(u), 0.0, 1.0)


def _cell_records(spec: SynthSpec, cell: CellSpec) -> list:
    rng = _cell_rng(spec.seed, cell.key)
    n = cell.count
    # Fixed draw order per cell: outcomes, then both affinity components at
    # full size, then terms.  Component draws are never conditioned on the
    # outcome count, so the stream layout is count-stable.
    successful = rng.random(n) < cell.success_rate
    high = _truncated_normal(rng, cell.mu_success, cell.sigma_success, n)
    low = _truncated_normal(rng, cell.mu_fail, cell.sigma_fail, n)
    affinity = np.where(successful, high, low)
    terms = rng.integers(0, spec.n_terms, size=n)
    population, gender, age_group = cell.key
    return [
        Record(
            id=f"{population}:{gender}:{age_group}:{k:05d}",
            term_index=int(terms[k]),
            population=population,
            groups={"gender": gender, "age_group": age_group},
            features={"affinity": float(affinity[k])},
            outcome=SUCCESSFUL if successful[k] else UNSUCCESSFUL,
        )
        for k in range(n)
    ]


def generate_cohort(spec: SynthSpec) -> Cohort:
    """Generate the deterministic cohort a spec describes."""
    records = []
    for cell in spec.cells:
        records.extend(_cell_records(spec, cell))
    return Cohort(records=tuple(records), schema=synth_schema())


def synth_scores(cohort: Cohort, spec: SynthSpec, tau: float = 0.5) -> PredictionSet:
    """Expose each record's latent affinity as its predicted success probability.

    The cohort must be one the spec describes: same cells, same per-cell
    record counts.
    """
    observed = {}
    for rec in cohort.records:
        key = (rec.population, rec.groups.get("gender"), rec.groups.get("age_group"))
        observed[key] = observed.get(key, 0) + 1
    expected = {cell.key: cell.count for cell in spec.cells}
    mismatches = []
    for key in sorted(set(observed) | set(expected), key=lambda k: tuple(map(str, k))):
        if observed.get(key, 0) != expected.get(key, 0):
            mismatches.append(f"cell {key}: cohort has {observed.get(key, 0)}, spec expects {expected.get(key, 0)}")
    if mismatches:
        raise ValidationError("cohort does not match spec:\n  " + "\n  ".join(mismatches))
    probs = np.array([rec.features["affinity"] for rec in cohort.records], dtype=float)
    return PredictionSet.from_probs(cohort.ids, probs, tau=tau)


def _apportion(total: int, shares) -> list:
    """Split ``total`` into integer parts proportional to ``shares``.

    Largest-remainder rule: floor every quota, then hand leftover units to
    the largest fractional parts (ties broken by position).
    """
    shares = [float(s) for s in shares]
    if total < 0:
        raise ValidationError(f"total must be non-negative, got {total}")
    if any(s < 0 for s in shares) or abs(sum(shares) - 1.0) > 1e-9:
        raise ValidationError("shares must be non-negative and sum to 1")
    # exact decimal arithmetic so equal remainders tie by position, not by
    # float representation noise (10 * 0.24 < 10 * 0.04 * 6 in binary floats)
    quotas = [total * Fraction(str(s)) for s in shares]
    parts = [math.floor(q) for q in quotas]
    leftover = total - sum(parts)
    order = sorted(range(len(shares)), key=lambda i: (-(quotas[i] - parts[i]), i))
    for i in order[:leftover]:
        parts[i] += 1
    return parts


def default_preset(scale: int = 10, seed: int = DEFAULT_SEED) -> SynthSpec:
    """The calibrated preset, scaled down ``scale``-fold for desk runs.

    ``scale=1`` reproduces the full published population (102,353 records);
    the default ``scale=10`` keeps every pipeline stage under a minute.
    """
    if not isinstance(scale, int) or scale < 1:
        raise ValidationError(f"scale must be a positive integer, got {scale!r}")
    cells = []
    for (population, gender), full_count in GENDER_COUNTS.items():
        gender_rate = GENDER_RATES[(population, gender)]
        scaled = int(round(full_count / scale))
        for age_group, age_count, offset in zip(
            AGE_BANDS, _apportion(scaled, AGE_SHARES), AGE_RATE_OFFSETS
        ):
            cells.append(CellSpec(
                population=population,
                gender=gender,
                age_group=age_group,
                count=age_count,
                success_rate=gender_rate + offset,
                mu_success=MU_SUCCESS,
                sigma_success=SIGMA_SUCCESS,
                mu_fail=MU_FAIL[gender],
                sigma_fail=SIGMA_FAIL,
            ))
    return SynthSpec(cells=tuple(cells), seed=seed)
