import json
from pathlib import Path

import numpy as np
import pytest

from capaminer.association import (
    ContingencyTable,
    JoinRecord,
    build_contingency,
    capa_id_from_class,
    chi2_on_table,
    contingency_from_csv,
    contingency_to_csv,
    extract_mapping,
    filter_relevant,
    mapping_to_json,
    occurrence_fraction_samples,
    pairwise_from_json,
    pairwise_tests,
    pairwise_to_json,
    qualifying_pairs,
    temporal_join,
)
from capaminer.errors import InsufficientSamples
from capaminer.mining import PatternOccurrence

DATA = Path(__file__).resolve().parent.parent / "src" / "capaminer" / "data"
DAY = 86400.0


def occ(pattern_id, repo, start_day, end_day):
    return PatternOccurrence(pattern_id, repo, int(start_day), int(end_day),
                             start_day * DAY, end_day * DAY, 0.5)


class TestTemporalJoin:
    def test_window_is_closed_on_both_ends(self):
        occs = [occ(0, "r", 10, 17)]
        prs = [
            ("a", "r", 10 * DAY, 0),        # at occurrence start
            ("b", "r", (17 + 30) * DAY, 1),  # exactly end + 30 days
            ("c", "r", (17 + 30) * DAY + 1, 2),  # one second past
            ("d", "r", 10 * DAY - 1, 3),     # one second early
        ]
        joins = temporal_join(occs, prs)
        assert {j.pr_id for j in joins} == {"a", "b"}

    def test_attribution_prefers_nearest_preceding_start(self):
        occs = [occ(0, "r", 10, 17), occ(1, "r", 20, 27)]
        joins = temporal_join(occs, [("p", "r", 21 * DAY, 0)])
        assert len(joins) == 1
        assert joins[0].pattern_type == 1

    def test_attribution_tie_takes_lowest_pattern_id(self):
        occs = [occ(3, "r", 10, 17), occ(1, "r", 10, 14)]
        joins = temporal_join(occs, [("p", "r", 12 * DAY, 0)])
        assert joins[0].pattern_type == 1

    def test_repo_must_match(self):
        occs = [occ(0, "r1", 10, 17)]
        assert temporal_join(occs, [("p", "r2", 12 * DAY, 0)]) == []

    def test_each_pr_joined_at_most_once(self):
        occs = [occ(0, "r", 5, 9), occ(1, "r", 6, 10), occ(2, "r", 7, 11)]
        joins = temporal_join(occs, [("p", "r", 8 * DAY, 4)])
        assert len(joins) == 1

    def test_capa_range_checked(self):
        with pytest.raises(ValueError):
            temporal_join([occ(0, "r", 0, 5)], [("p", "r", DAY, 7)])

    def test_class_to_action_id(self):
        assert capa_id_from_class(1) == 0
        assert capa_id_from_class(7) == 6


class TestContingency:
    def test_counts_and_totals(self):
        joins = [
            JoinRecord(0, ("r", 1), "a", 0, 0.0),
            JoinRecord(0, ("r", 1), "b", 0, 0.0),
            JoinRecord(0, ("r", 1), "c", 2, 0.0),
            JoinRecord(1, ("r", 9), "d", 2, 0.0),
        ]
        t = build_contingency(joins)
        assert t.row_labels == (0, 1)
        assert t.col_labels == tuple(range(7))
        assert t.counts[0, 0] == 2
        assert t.counts[0, 2] == 1
        assert t.counts[1, 2] == 1
        assert t.grand_total == 4
        np.testing.assert_array_equal(t.row_totals, [3, 1])

    def test_reference_table_round_trip_and_totals(self):
        text = (DATA / "reference_capa_counts.csv").read_text()
        t = contingency_from_csv(text)
        assert t.row_labels == tuple(range(5, 15))
        assert list(t.row_totals) == [20, 6, 13, 12, 21, 20, 31, 43, 23, 28]
        assert list(t.col_totals) == [37, 49, 69, 10, 6, 35, 11]
        assert t.grand_total == 217
        again = contingency_from_csv(contingency_to_csv(t))
        np.testing.assert_array_equal(t.counts, again.counts)
        assert t.row_labels == again.row_labels

    def test_reference_table_chi2(self):
        t = contingency_from_csv((DATA / "reference_capa_counts.csv").read_text())
        r = chi2_on_table(t)
        assert r.statistic == pytest.approx(84.208, abs=0.01)
        assert r.dof == 54
        assert 0.005 <= r.p_value <= 0.012

    def test_csv_skips_comment_lines(self):
        t = contingency_from_csv(
            "# seed=7\nPattern type,CAPA 0,CAPA 1,Total\n"
            "Pattern 2,3,4,7\nTotal,3,4,7\n")
        assert t.row_labels == (2,)
        np.testing.assert_array_equal(t.counts, [[3, 4]])


class TestFilterRelevant:
    def reference_table(self):
        return contingency_from_csv(
            (DATA / "reference_capa_counts.csv").read_text())

    def test_reference_filter(self):
        sets = filter_relevant(self.reference_table(), min_count=5)
        multi = {pt: s for pt, s in sets.items() if len(s) >= 2}
        assert set(multi) == {5, 9, 10, 11, 12, 13, 14}
        assert multi[11] == {1, 2, 5}
        assert multi[12] == {0, 1, 2, 5}
        pairs = qualifying_pairs(sets)
        assert len(pairs) == 14
        assert (12, 0, 2) in pairs
        assert (6, 0, 1) not in pairs  # pattern 6 has no count >= 5

    def test_min_count_boundary(self):
        t = ContingencyTable((1,), (0, 1), np.array([[5, 4]]))
        assert filter_relevant(t, 5) == {1: {0}}


class TestPairwise:
    def make_joins(self):
        # pattern 0: three occurrences, action 0 dominates action 1
        joins = []
        occurrence_caps = [
            [0, 0, 0, 1],   # fractions 0.75 / 0.25
            [0, 0, 1, 0],   # 0.75 / 0.25
            [0, 0, 0, 0, 1, 1],  # 0.667 / 0.333
        ]
        pr = 0
        for k, caps in enumerate(occurrence_caps):
            for c in caps:
                joins.append(JoinRecord(0, ("r", k * 10), f"p{pr}", c, 0.0))
                pr += 1
        return joins

    def test_fraction_samples(self):
        samples = occurrence_fraction_samples(self.make_joins())
        assert samples[(0, 0)] == pytest.approx([0.75, 0.75, 2 / 3])
        assert samples[(0, 1)] == pytest.approx([0.25, 0.25, 1 / 3])
        assert samples[(0, 2)] == [0.0, 0.0, 0.0]

    def test_pairwise_on_samples(self):
        joins = self.make_joins()
        results = pairwise_tests(joins, {0: {0, 1}})
        assert len(results) == 1
        r = results[0]
        assert (r.pattern_type, r.capa_i, r.capa_j) == (0, 0, 1)
        assert r.mean_i > r.mean_j
        assert r.p_value < 0.01

    def test_insufficient_occurrences(self):
        joins = [JoinRecord(0, ("r", 0), "a", 0, 0.0),
                 JoinRecord(0, ("r", 0), "b", 1, 0.0)]
        with pytest.raises(InsufficientSamples):
            pairwise_tests(joins, {0: {0, 1}})

    def test_json_round_trip(self):
        results = pairwise_tests(self.make_joins(), {0: {0, 1}})
        back = pairwise_from_json(json.loads(json.dumps(pairwise_to_json(results))))
        assert back == results


class TestExtractMapping:
    def reference_results(self):
        doc = json.loads((DATA / "reference_pairwise.json").read_text())
        return pairwise_from_json(doc)

    def test_reference_mapping_alpha_015(self):
        m = extract_mapping(self.reference_results(), alpha=0.15)
        assert m.tuples == ((5, 0), (11, 1), (12, 0), (13, 0), (14, 1))

    def test_reference_mapping_alpha_005(self):
        m = extract_mapping(self.reference_results(), alpha=0.05)
        assert m.tuples == ((11, 1), (12, 0), (14, 1))

    def test_order_invariant(self):
        results = self.reference_results()
        m1 = extract_mapping(results, 0.15)
        m2 = extract_mapping(list(reversed(results)), 0.15)
        assert m1 == m2

    def test_dominance_must_cover_every_pair(self):
        # action 0 beats 1 but not 2: no mapping
        rows = pairwise_from_json({"tests": [
            {"pattern": 1, "capa_i": 0, "capa_j": 1,
             "mean_i": 0.8, "mean_j": 0.2, "p": 0.01},
            {"pattern": 1, "capa_i": 0, "capa_j": 2,
             "mean_i": 0.8, "mean_j": 0.5, "p": 0.40},
            {"pattern": 1, "capa_i": 1, "capa_j": 2,
             "mean_i": 0.2, "mean_j": 0.5, "p": 0.05},
        ]})
        assert extract_mapping(rows, 0.15).tuples == ()

    def test_alpha_validated(self):
        with pytest.raises(ValueError):
            extract_mapping([], 0.0)

    def test_mapping_json(self):
        doc = mapping_to_json(extract_mapping(self.reference_results(), 0.15))
        assert doc["alpha"] == 0.15
        assert {"pattern": 11, "capa": 1} in doc["tuples"]
