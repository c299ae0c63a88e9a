from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import counting_apcer_bpcer, pairwise_auc, sweep_eer
from ockr.errors import PreconditionError
from ockr.metrics import LabeledScore, apcer_bpcer, auc, eer, evaluate, far_frr, hter


def labeled(bona, attacks):
    """attacks: list of (score, pais)."""
    out = [LabeledScore(float(s), "bonafide") for s in bona]
    out += [LabeledScore(float(s), "attack", pais) for s, pais in attacks]
    return out


def random_instance(rng, n_max=200, paises=("print", "replay", "mask")):
    n_bona = int(rng.integers(1, n_max))
    n_att = int(rng.integers(1, n_max))
    # quantised scores produce heavy ties
    bona = np.round(rng.normal(1.0, 0.5, n_bona), 1)
    att = np.round(rng.normal(0.4, 0.5, n_att), 1)
    return labeled(bona, [(s, paises[int(rng.integers(len(paises)))]) for s in att])


class TestApcerBpcer:
    def test_perfect_separation(self):
        scores = labeled([0.9, 1.0], [(0.1, "print"), (0.2, "replay")])
        by_pais, apcer, bpcer = apcer_bpcer(scores, threshold=0.5)
        assert apcer == 0.0 and bpcer == 0.0
        assert by_pais == {"print": 0.0, "replay": 0.0}

    def test_max_over_pais(self):
        scores = labeled(
            [1.0],
            [(0.9, "A"), (0.1, "A"), (0.1, "B"), (0.2, "B"), (0.3, "B")],
        )
        by_pais, apcer, _ = apcer_bpcer(scores, threshold=0.5)
        assert by_pais == {"A": 0.5, "B": 0.0}
        assert apcer == 0.5

    def test_threshold_tie_counts_as_acceptance(self):
        scores = labeled([0.5], [(0.5, "print")])
        _, apcer, bpcer = apcer_bpcer(scores, threshold=0.5)
        assert apcer == 1.0  # attack at the threshold passes (>= rule)
        assert bpcer == 0.0

    def test_matches_counting_oracle(self, rng):
        for _ in range(25):
            scores = random_instance(rng)
            threshold = float(rng.normal(0.7, 0.5))
            got = apcer_bpcer(scores, threshold)
            expected = counting_apcer_bpcer(scores, threshold)
            assert got[0] == expected[0]
            assert got[1] == expected[1] and got[2] == expected[2]

    def test_needs_both_classes(self):
        with pytest.raises(PreconditionError):
            apcer_bpcer([LabeledScore(1.0, "bonafide")], 0.5)


class TestEer:
    def test_perfect_separation(self):
        rate, _ = eer(labeled([0.9, 0.8], [(0.1, "p"), (0.2, "p")]))
        assert rate == 0.0

    def test_total_overlap(self):
        rate, _ = eer(labeled([0.5, 0.5], [(0.5, "p"), (0.5, "p")]))
        assert rate == 0.5

    def test_matches_exhaustive_sweep(self, rng):
        for _ in range(50):
            scores = random_instance(rng, n_max=50)
            bona = np.array([s.score for s in scores if s.label == "bonafide"])
            att = np.array([s.score for s in scores if s.label == "attack"])
            rate, thr = eer(scores)
            o_rate, o_thr = sweep_eer(bona, att)
            assert rate == o_rate
            assert thr == o_thr


class TestAuc:
    def test_perfect_ranking(self):
        assert auc(labeled([0.9, 0.8], [(0.1, "p"), (0.2, "p")])) == 1.0

    def test_all_ties(self):
        assert auc(labeled([0.5, 0.5, 0.5], [(0.5, "p")] * 7)) == 0.5

    def test_matches_pairwise_oracle_exactly(self, rng):
        for _ in range(30):
            scores = random_instance(rng)
            bona = np.array([s.score for s in scores if s.label == "bonafide"])
            att = np.array([s.score for s in scores if s.label == "attack"])
            assert auc(scores) == pairwise_auc(bona, att)

    def test_complement_symmetry(self, rng):
        scores = random_instance(rng)
        flipped = [
            LabeledScore(
                -s.score,
                "attack" if s.label == "bonafide" else "bonafide",
                "p" if s.label == "bonafide" else None,
            )
            for s in scores
        ]
        assert auc(scores) == auc(flipped)


class TestMonotoneTransformInvariance:
    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_auc_eer_and_argmax_pais_invariant(self, seed):
        rng = np.random.default_rng(seed)
        scores = random_instance(rng, n_max=40)
        transformed = [
            LabeledScore(float(np.exp(0.7 * s.score) + 2.0), s.label, s.pais) for s in scores
        ]
        assert auc(scores) == auc(transformed)
        assert eer(scores)[0] == eer(transformed)[0]
        rep_a = evaluate(scores)
        rep_b = evaluate(transformed)
        argmax_a = max(rep_a.apcer_by_pais, key=rep_a.apcer_by_pais.get)
        argmax_b = max(rep_b.apcer_by_pais, key=rep_b.apcer_by_pais.get)
        assert argmax_a == argmax_b


class TestEvaluate:
    def test_acer_is_arithmetic_mean(self, rng):
        scores = random_instance(rng)
        report = evaluate(scores)
        assert report.acer == (report.apcer + report.bpcer) / 2.0
        assert report.apcer >= max(report.apcer_by_pais.values()) - 1e-15
        assert all(0.0 <= r <= 1.0 for r in (report.apcer, report.bpcer, report.acer, report.eer))

    def test_dev_threshold_used(self, rng):
        scores = random_instance(rng)
        dev = random_instance(rng)
        report = evaluate(scores, dev_scores=dev)
        assert report.threshold_source == "dev_eer"
        assert report.threshold == eer(dev)[1]
        _, apcer, bpcer = apcer_bpcer(scores, report.threshold)
        assert report.acer == (apcer + bpcer) / 2.0

    def test_perfect_run_consistency(self):
        scores = labeled([0.9, 0.95, 0.99], [(0.1, "p"), (0.2, "q"), (0.15, "p")])
        report = evaluate(scores)
        assert report.auc == 1.0
        assert report.acer == 0.0
        assert report.eer == 0.0

    def test_missing_pais_rejected(self):
        scores = [LabeledScore(1.0, "bonafide"), LabeledScore(0.2, "attack", None)]
        with pytest.raises(PreconditionError, match="PAIS"):
            evaluate(scores)

    def test_deterministic(self, rng):
        scores = random_instance(rng)
        assert evaluate(scores).to_obj() == evaluate(scores).to_obj()

    def test_hter_at_report_threshold(self, rng):
        scores = random_instance(rng)
        report = evaluate(scores)
        far, frr = far_frr(scores, report.threshold)
        assert report.hter_at[report.threshold] == (far + frr) / 2.0
        assert report.hter_at[report.threshold] == hter(scores, report.threshold)
