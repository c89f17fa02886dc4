import random

import numpy as np
import pytest

from riskaudit.core import DataError, ValidationError, is_defined
from riskaudit.dataset import Cohort, Record, Schema
from riskaudit.metrics import PredictionSet
from riskaudit.tiering import (
    HIGH,
    LOW,
    MEDIUM,
    TierAssignment,
    TierQuotas,
    assign_tiers,
    compute_thresholds,
    load_tiers,
    save_tiers,
    tier_of,
    tier_summary,
)

import oracles
from conftest import build_cohort


def preds_from(probs, tau=0.5):
    ids = tuple(f"p{i:05d}" for i in range(len(probs)))
    return PredictionSet.from_probs(ids, np.asarray(probs, dtype=float), tau=tau)


def cohort_for(assign, successes):
    schema = Schema(group_columns=("gender",))
    records = tuple(
        Record(id=rid, term_index=0, population="domestic",
               groups={"gender": "female"}, features={},
               outcome="successful" if ok else "unsuccessful")
        for rid, ok in zip(assign.ids, successes)
    )
    return Cohort(records=records, schema=schema)


class TestQuotas:
    def test_defaults(self):
        q = TierQuotas()
        assert (q.high_frac, q.medium_frac, q.low_frac) == (0.23, 0.27, 0.50)

    def test_must_sum_to_one(self):
        with pytest.raises(ValidationError, match="sum to 1"):
            TierQuotas(0.5, 0.5, 0.5)

    def test_range(self):
        with pytest.raises(ValidationError):
            TierQuotas(-0.1, 0.6, 0.5)

    def test_round_trip(self):
        q = TierQuotas(0.1, 0.2, 0.7)
        assert TierQuotas.from_dict(q.to_dict()) == q


class TestThresholds:
    def test_percentile_grid(self):
        probs = [i / 100 for i in range(1, 101)]
        random.Random(0).shuffle(probs)
        t_high, t_medium = compute_thresholds(probs)
        assert t_high == pytest.approx(0.23, abs=0)
        assert t_medium == pytest.approx(0.50, abs=0)

    def test_identical_probs_collapse(self):
        t_high, t_medium = compute_thresholds([0.4] * 25)
        assert t_high == t_medium == 0.4

    def test_zero_quota_yields_sentinel_below_all(self):
        t_high, t_medium = compute_thresholds([0.2, 0.6, 0.8],
                                              TierQuotas(0.0, 0.5, 0.5))
        assert t_high < 0.0  # no score can fall at or below it
        assert t_medium == 0.6

    def test_empty_and_out_of_range(self):
        with pytest.raises(ValidationError, match="empty"):
            compute_thresholds([])
        with pytest.raises(ValidationError, match=r"\[0, 1\]"):
            compute_thresholds([0.5, 1.2])

    def test_matches_nearest_rank_oracle(self):
        rnd = random.Random(42)
        fracs = [0.1, 0.2, 0.23, 0.25, 0.3, 0.4, 0.5]
        for trial in range(30):
            n = rnd.randrange(1, 400)
            probs = [rnd.random() for _ in range(n)]
            high = rnd.choice(fracs)
            medium = rnd.choice([f for f in fracs if f + high < 1.0])
            quotas = TierQuotas(high, medium, round(1.0 - high - medium, 10))
            t_high, t_medium = compute_thresholds(probs, quotas)
            assert t_high == oracles.nearest_rank_oracle(probs, high)
            expected_medium = oracles.nearest_rank_oracle(
                probs, round(high + medium, 10))
            assert t_medium == expected_medium


class TestAssignment:
    def test_ten_thousand_distinct_exact_quota_counts(self):
        rnd = random.Random(7)
        probs = rnd.sample([i / 10_000 for i in range(10_000)], 10_000)
        assign = assign_tiers(preds_from(probs))
        assert assign.counts() == {HIGH: 2_300, MEDIUM: 2_700, LOW: 5_000}

    def test_three_records_by_hand(self):
        assign = assign_tiers(preds_from([0.1, 0.5, 0.9]))
        assert assign.tiers == (HIGH, MEDIUM, LOW)
        assert assign.t_high == 0.1 and assign.t_medium == 0.5

    def test_all_identical_go_high_and_flag_degenerate(self):
        assign = assign_tiers(preds_from([0.7] * 9))
        assert set(assign.tiers) == {HIGH}
        assert assign.degenerate

    def test_boundary_ties_fall_to_riskier_tier(self):
        assert tier_of(0.3, t_high=0.3, t_medium=0.6) == HIGH
        assert tier_of(0.6, t_high=0.3, t_medium=0.6) == MEDIUM
        assert tier_of(0.61, t_high=0.3, t_medium=0.6) == LOW

    def test_share_deviation_within_one_over_n(self):
        rnd = random.Random(99)
        quotas = TierQuotas()
        for trial in range(100):
            n = rnd.randrange(3, 500)
            probs = rnd.sample([i / 10_000 for i in range(10_000)], n)
            assign = assign_tiers(preds_from(probs))
            counts = assign.counts()
            for tier, frac in ((HIGH, quotas.high_frac), (MEDIUM, quotas.medium_frac),
                               (LOW, quotas.low_frac)):
                assert abs(counts[tier] / n - frac) <= 1.0 / n + 1e-12

    def test_monotone_in_probability(self):
        rnd = random.Random(5)
        probs = [rnd.random() for _ in range(400)]
        assign = assign_tiers(preds_from(probs))
        risk_rank = {HIGH: 0, MEDIUM: 1, LOW: 2}
        order = sorted(range(len(probs)), key=lambda i: probs[i])
        ranks = [risk_rank[assign.tiers[i]] for i in order]
        assert ranks == sorted(ranks)

    def test_reassigning_from_stored_thresholds_is_idempotent(self):
        rnd = random.Random(6)
        preds = preds_from([rnd.random() for _ in range(250)])
        assign = assign_tiers(preds)
        replay = assign_tiers(preds, thresholds=(assign.t_high, assign.t_medium))
        assert replay.tiers == assign.tiers

    def test_matches_tier_oracle(self):
        rnd = random.Random(8)
        for trial in range(20):
            probs = [rnd.random() for _ in range(rnd.randrange(1, 200))]
            assign = assign_tiers(preds_from(probs))
            expected, t_high, t_medium = oracles.tiers_oracle(probs)
            assert list(assign.tiers) == expected
            assert assign.t_high == t_high and assign.t_medium == t_medium

    def test_threshold_order_enforced(self):
        with pytest.raises(ValidationError):
            TierAssignment(ids=("a",), probs=np.array([0.5]), tiers=(HIGH,),
                           t_high=0.9, t_medium=0.4)


class TestSummary:
    def test_counting_oracle(self):
        cohort = build_cohort(seed=61, n=300)
        rnd = random.Random(62)
        preds = preds_from([rnd.random() for _ in range(300)])
        preds = PredictionSet(ids=cohort.ids, probs=preds.probs,
                              pred_successful=preds.pred_successful, tau=0.5)
        assign = assign_tiers(preds)
        summary = tier_summary(assign, cohort)
        items = list(zip(assign.tiers, cohort.records, assign.probs))
        for tier in (HIGH, MEDIUM, LOW):
            members = [(r, p) for t, r, p in items if t == tier]
            assert summary[tier]["count"] == len(members)
            rate = oracles.conditional_rate_oracle(
                items, lambda it, t=tier: it[0] == t, lambda it: it[1].successful)
            if rate is None:
                assert not is_defined(summary[tier]["success_rate"])
            else:
                assert summary[tier]["success_rate"] == pytest.approx(rate, abs=1e-12)
                expected_brier = oracles.brier_oracle(
                    [p for _, p in members], [r.successful for r, _ in members])
                assert summary[tier]["brier"] == pytest.approx(expected_brier, abs=1e-12)

    def test_high_tier_with_21_percent_success(self):
        probs = np.linspace(0.0, 0.2, 100)
        assign = TierAssignment(ids=tuple(f"p{i}" for i in range(100)),
                                probs=probs, tiers=(HIGH,) * 100,
                                t_high=0.2, t_medium=0.2)
        cohort = cohort_for(assign, [i < 21 for i in range(100)])
        summary = tier_summary(assign, cohort)
        assert summary[HIGH]["success_rate"] == pytest.approx(0.21)
        # high implies unsuccessful, so accuracy is the failure rate
        assert summary[HIGH]["accuracy"] == pytest.approx(0.79)

    def test_perfect_separation(self):
        probs = [0.01 * (i + 1) for i in range(50)] + [0.5 + 0.01 * (i + 1) for i in range(50)]
        assign = assign_tiers(preds_from(probs))
        cohort = cohort_for(assign, [False] * 50 + [True] * 50)
        summary = tier_summary(assign, cohort)
        assert summary[HIGH]["success_rate"] == 0.0
        assert summary[LOW]["success_rate"] == 1.0
        assert summary[LOW]["accuracy"] == 1.0

    def test_empty_tier_markers(self):
        assign = assign_tiers(preds_from([0.5] * 10))  # everything high
        cohort = cohort_for(assign, [True] * 10)
        summary = tier_summary(assign, cohort)
        assert summary[MEDIUM]["count"] == 0
        assert not is_defined(summary[MEDIUM]["success_rate"])
        assert not is_defined(summary[MEDIUM]["brier"])

    def test_misaligned_cohort(self):
        assign = assign_tiers(preds_from([0.2, 0.8]))
        other = build_cohort(seed=63, n=2)
        with pytest.raises(DataError, match="not aligned"):
            tier_summary(assign, other)


class TestTiersCsv:
    def test_round_trip(self, tmp_path):
        rnd = random.Random(71)
        assign = assign_tiers(preds_from([rnd.random() for _ in range(40)]))
        path = tmp_path / "tiers.csv"
        save_tiers(assign, path)
        loaded = load_tiers(path)
        assert loaded.ids == assign.ids
        assert loaded.tiers == assign.tiers
        assert np.array_equal(loaded.probs, assign.probs)
        assert (loaded.t_high, loaded.t_medium) == (assign.t_high, assign.t_medium)

    def test_inconsistent_thresholds_rejected(self, tmp_path):
        path = tmp_path / "tiers.csv"
        path.write_text(
            "id,prob_success,tier,t_high,t_medium\n"
            "a,0.1,high,0.2,0.5\n"
            "b,0.9,low,0.3,0.5\n"
        )
        with pytest.raises(DataError, match="thresholds differ"):
            load_tiers(path)

    def test_missing_columns(self, tmp_path):
        path = tmp_path / "tiers.csv"
        path.write_text("id,tier\na,high\n")
        with pytest.raises(ValidationError, match="missing required columns"):
            load_tiers(path)
