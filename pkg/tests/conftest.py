import random

import numpy as np
import pytest

from riskaudit import PredictionSet, default_preset, generate_cohort, synth_scores
from riskaudit.dataset import Cohort, Record, Schema

GENDERS = ("female", "male", "nonbinary")
AGES = ("0-18", "19-20", "21-25", "26-30", "31-35")


def build_cohort(seed, n, genders=GENDERS[:2], ages=AGES[:3], populations=("domestic", "international"),
                 success_prob=0.6, max_term=6):
    """Random but reproducible cohort for property tests."""
    rnd = random.Random(seed)
    schema = Schema(numeric_features=("affinity",))
    records = []
    for i in range(n):
        records.append(Record(
            id=f"r{i:05d}",
            term_index=rnd.randrange(max_term),
            population=rnd.choice(populations),
            groups={"gender": rnd.choice(genders), "age_group": rnd.choice(ages)},
            features={"affinity": rnd.random()},
            outcome="successful" if rnd.random() < success_prob else "unsuccessful",
        ))
    return Cohort(records=tuple(records), schema=schema)


def build_predictions(cohort, seed, tau=0.5):
    rnd = random.Random(seed)
    probs = np.array([rnd.random() for _ in cohort.records])
    return PredictionSet.from_probs(cohort.ids, probs, tau=tau)


@pytest.fixture(scope="session")
def preset_bundle():
    """Default desk-scale preset with its affinity-based scores."""
    spec = default_preset()
    cohort = generate_cohort(spec)
    preds = synth_scores(cohort, spec)
    return spec, cohort, preds
