"""Acceptance suite: one test per shipped guarantee, each ending in a single
PASS line printed for the run log.  Tolerances are stated inline."""

import json
import math
import threading
import time
from pathlib import Path

import numpy as np
from scipy import stats as scipy_stats

from capaminer.association import (
    contingency_from_csv,
    extract_mapping,
    filter_relevant,
    pairwise_from_json,
    qualifying_pairs,
)
from capaminer.classifier import (
    ForestConfig,
    compute_report,
    split_train_test,
    train_forest,
)
from capaminer.cli import ARTIFACTS, main as cli_main
from capaminer.ingestion import FixtureAdapter, Radar, RadarConfig, RepoStatus
from capaminer.mining import MiningConfig, RepoCoverage, mine_patterns
from capaminer.stats import (
    betainc,
    chi2_independence,
    chi2_sf,
    gammainc_lower,
    gammainc_upper,
    two_sample_t_test,
)
from capaminer.tsdist import MetricSeries, distance_profile, znorm_distance

from conftest import naive_distance_profile

DATA = Path(__file__).resolve().parent.parent / "src" / "capaminer" / "data"
FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


def ok(msg):
    print(f"ACCEPTANCE PASS: {msg}")


# (label, tp, tn, fp, fn, pre, rec, f1) for every published row.
STAGE1_ROWS = [
    (1, 1174, 1380, 94, 10, 0.93, 0.99, 0.96),
    (1, 1177, 1378, 96, 7, 0.92, 0.99, 0.96),
    (1, 1169, 1386, 88, 15, 0.93, 0.99, 0.96),
    (2, 1380, 1174, 10, 94, 0.99, 0.94, 0.96),
    (2, 1378, 1177, 7, 96, 0.99, 0.93, 0.96),
    (2, 1386, 1169, 15, 88, 0.99, 0.94, 0.96),
]
STAGE2_ROWS = [
    (1, 182, 1187, 10, 21, 0.95, 0.90, 0.92),
    (1, 176, 1180, 17, 27, 0.91, 0.87, 0.89),
    (1, 169, 1176, 21, 34, 0.89, 0.83, 0.86),
    (2, 184, 1128, 48, 40, 0.79, 0.82, 0.81),
    (2, 152, 1129, 47, 72, 0.76, 0.68, 0.72),
    (2, 160, 1114, 62, 64, 0.72, 0.71, 0.72),
    (3, 150, 1183, 39, 28, 0.79, 0.84, 0.82),
    (3, 125, 1152, 70, 53, 0.64, 0.70, 0.67),
    (3, 117, 1164, 58, 61, 0.67, 0.66, 0.66),
    (4, 200, 1180, 5, 15, 0.98, 0.93, 0.95),
    (4, 202, 1176, 9, 13, 0.96, 0.94, 0.95),
    (4, 194, 1172, 13, 21, 0.94, 0.90, 0.92),
    (5, 169, 1187, 30, 14, 0.85, 0.92, 0.88),
    (5, 160, 1154, 63, 23, 0.72, 0.87, 0.79),
    (5, 160, 1154, 63, 23, 0.72, 0.87, 0.79),
    (6, 197, 1174, 15, 14, 0.93, 0.93, 0.93),
    (6, 180, 1164, 25, 31, 0.88, 0.85, 0.87),
    (6, 178, 1159, 30, 33, 0.86, 0.84, 0.85),
    (7, 160, 1203, 11, 26, 0.94, 0.86, 0.90),
    (7, 148, 1188, 26, 38, 0.85, 0.80, 0.82),
    (7, 147, 1186, 28, 39, 0.84, 0.79, 0.81),
]


def test_1_report_reproduction():
    """All 27 published PRE/REC/F1 values reproduce exactly at 2 decimals."""
    t0 = time.time()
    for label, tp, tn, fp, fn, pre, rec, f1 in STAGE1_ROWS + STAGE2_ROWS:
        # drive through compute_report with a prediction set realizing the
        # one-vs-rest counts, then check the rounded scores
        y_true = [label] * (tp + fn) + [0] * (fp + tn)
        y_pred = ([label] * tp + [0] * fn + [label] * fp + [0] * tn)
        row = compute_report(y_true, y_pred, [label])[0]
        assert (row.tp, row.tn, row.fp, row.fn) == (tp, tn, fp, fn)
        assert row.rounded() == (pre, rec, f1), (label, tp, tn, fp, fn)
    assert time.time() - t0 < 1.0
    ok("report reproduction: 27/27 published rows exact at 2-decimal rounding")


def test_2_chi_squared():
    """Small tables within 1e-8 of the oracle; bundled table p in the
    published bracket."""
    t0 = time.time()
    tables = [
        [[10, 20], [20, 10]],
        [[12, 5, 8], [9, 14, 7], [6, 6, 20]],
        [[3, 7, 11], [8, 6, 2]],
    ]
    for table in tables:
        r = chi2_independence(table)
        t = np.asarray(table, dtype=float)
        total = t.sum()
        stat = 0.0
        for i in range(t.shape[0]):
            for j in range(t.shape[1]):
                e = t[i].sum() * t[:, j].sum() / total
                stat += (t[i, j] - e) ** 2 / e
        assert abs(r.statistic - stat) < 1e-8
        assert abs(r.p_value - scipy_stats.chi2.sf(stat, r.dof)) < 1e-8

    bundled = contingency_from_csv(
        (DATA / "reference_capa_counts.csv").read_text())
    r = chi2_independence(bundled.counts)
    assert 0.005 <= r.p_value <= 0.012
    # cross-check the full-table result against the reference implementation
    stat, p, dof, _ = scipy_stats.chi2_contingency(bundled.counts,
                                                   correction=False)
    assert abs(r.statistic - stat) < 1e-8
    assert abs(r.p_value - p) < 1e-8
    assert time.time() - t0 < 1.0
    ok(f"chi-squared: 3 oracle tables within 1e-8; bundled table "
       f"p={r.p_value:.6f} in [0.005, 0.012]")


def test_3_filter_consistency():
    """filter_relevant(min_count=5) reproduces the published 7 patterns and
    14 qualifying pairs."""
    table = contingency_from_csv((DATA / "reference_capa_counts.csv").read_text())
    sets = filter_relevant(table, min_count=5)
    multi = {pt: s for pt, s in sets.items() if len(s) >= 2}
    assert multi == {
        5: {0, 2}, 9: {1, 2}, 10: {1, 2}, 11: {1, 2, 5},
        12: {0, 1, 2, 5}, 13: {0, 1}, 14: {1, 2},
    }
    pairs = qualifying_pairs(sets)
    assert len(pairs) == 14
    published = {(e["pattern"], e["capa_i"], e["capa_j"]) for e in json.loads(
        (DATA / "reference_pairwise.json").read_text())["tests"]}
    assert set(pairs) == published
    ok("filter consistency: 7 patterns, 14 pairs, matching published set")


def test_4_mapping_extraction():
    """extract_mapping reproduces the published tuples at both alphas."""
    results = pairwise_from_json(
        json.loads((DATA / "reference_pairwise.json").read_text()))
    m15 = extract_mapping(results, alpha=0.15)
    assert set(m15.tuples) == {(5, 0), (11, 1), (12, 0), (13, 0), (14, 1)}
    m05 = extract_mapping(results, alpha=0.05)
    assert set(m05.tuples) == {(11, 1), (12, 0), (14, 1)}
    ok("mapping extraction: published tuples exact at alpha 0.15 and 0.05")


def test_5_distance_profile_oracle():
    """100 randomized profiles within 1e-9 of the naive computation;
    affine invariance and symmetry on 1000 pairs."""
    rng = np.random.default_rng(20240824)
    for _ in range(100):
        n = int(rng.integers(8, 513))
        m = int(rng.integers(2, min(n, 64) + 1))
        t = rng.normal(0, float(rng.uniform(0.5, 20)), n)
        q = rng.normal(0, float(rng.uniform(0.5, 20)), m)
        dp = distance_profile(q, t)
        np.testing.assert_allclose(dp.distances, naive_distance_profile(q, t),
                                   atol=1e-9)
    for _ in range(1000):
        m = int(rng.integers(3, 40))
        q = rng.normal(size=m)
        w = rng.normal(size=m)
        a = float(rng.uniform(0.1, 10))
        b = float(rng.uniform(-50, 50))
        assert znorm_distance(a * q + b, q) < 1e-9  # affine invariance
        assert abs(znorm_distance(q, w) - znorm_distance(w, q)) < 1e-12
    ok("distance profile: 100 profiles within 1e-9 of naive; 1000-pair "
       "affine/symmetry properties hold")


def test_6_planted_motif_recovery():
    """A sine-burst motif planted in 16 of 20 length-500 series is
    recovered within z-normalized distance 1.0, in under 60 s."""
    m = 40
    motif = 10.0 * np.sin(np.linspace(0, np.pi, m))
    rng = np.random.default_rng(0)
    series = []
    for i in range(20):
        if i < 16:
            # noisy random walk with the burst planted once
            vals = np.cumsum(rng.normal(0, 1.0, 500)) + rng.normal(0, 2.0, 500)
            start = int(rng.integers(50, 400))
            vals[start : start + m] = vals[start] + motif + rng.normal(0, 0.1, m)
        else:
            # smoothed random walk, no plant
            w = np.cumsum(rng.normal(0, 1.0, 540))
            vals = np.convolve(w, np.ones(41) / 41, mode="valid")
        series.append(MetricSeries(f"r{i}", "m", np.arange(500.0), vals))
    tau = 0.25 * 2.0 * math.sqrt(m)  # 25% of the 2*sqrt(m) maximum
    cfg = MiningConfig(min_len=m, max_len=m, match_threshold=tau,
                       min_matches_per_series=1,
                       repo_coverage=RepoCoverage("min", 0.5))
    t0 = time.time()
    patterns = mine_patterns(series, cfg)
    elapsed = time.time() - t0
    assert elapsed < 60.0
    assert len(patterns) == 1
    dist = znorm_distance(patterns[0].values, motif)
    assert dist <= 1.0
    ok(f"planted motif: recovered at distance {dist:.3f} <= 1.0 "
       f"in {elapsed:.1f} s")


def test_7_classifier_accuracy_and_determinism():
    """2000-row separable 27-feature dataset: accuracy >= 0.95 and
    bit-identical retraining under a fixed seed."""
    rng = np.random.default_rng(123)
    X = np.vstack([rng.normal(5.0 * c, 1.0, size=(250, 27))
                   for c in range(1, 9)])
    y = np.repeat(np.arange(1, 9), 250)
    train, test = split_train_test(X, y, 0.8, seed=9)
    cfg = ForestConfig(n_estimators=100, seed=9)
    forest = train_forest(X[train], y[train], cfg)
    pred = forest.predict_many(X[test])
    acc = float(np.mean(np.array(pred) == y[test]))
    assert acc >= 0.95
    # retrain on a permuted copy of the same rows: identical model bytes
    perm = rng.permutation(len(train))
    again = train_forest(X[train][perm], y[train][perm], cfg)
    a = json.dumps(forest.to_json(), sort_keys=True)
    b = json.dumps(again.to_json(), sort_keys=True)
    assert a == b
    ok(f"classifier: accuracy {acc:.3f} >= 0.95; training bit-deterministic")


def test_8_pipeline_determinism_and_at_most_once(tmp_path):
    """Two pipeline runs are byte-identical; the collection queue processes
    each repo at most once under 2 workers with injected faults."""
    cfg = json.loads((FIXTURES / "config.json").read_text())
    cfg["metrics_path"] = str(FIXTURES / "metrics.csv")
    cfg["prs_path"] = str(FIXTURES / "prs.jsonl")
    cfg["keywords_path"] = str(FIXTURES / "keywords.json")
    outs = []
    for run in ("a", "b"):
        out = tmp_path / run
        cfg["out_dir"] = str(out)
        cfg_path = tmp_path / f"config_{run}.json"
        cfg_path.write_text(json.dumps(cfg))
        assert cli_main(["--config", str(cfg_path), "pipeline"]) == 0
        outs.append(out)
    for name in ARTIFACTS:
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes(), name

    for schedule in range(100):
        rng = np.random.default_rng(schedule)
        n = 8
        failing = set(rng.choice(n, size=int(rng.integers(0, 4)),
                                 replace=False).tolist())
        series = [MetricSeries(f"r{i}", "lines_added",
                               np.arange(3.0), [1.0, 2.0, 3.0])
                  for i in range(n)]
        adapter = FixtureAdapter(series=series)
        calls = []
        lock = threading.Lock()
        orig = adapter.fetch_commit_metrics

        def fetch(repo_id, _orig=orig, _failing=failing):
            with lock:
                calls.append(repo_id)
            if int(repo_id[1:]) in _failing:
                raise RuntimeError("injected fault")
            return _orig(repo_id)

        adapter.fetch_commit_metrics = fetch
        radar = Radar(RadarConfig(adapter=adapter, workers=2,
                                  poll_interval_seconds=0.001))
        radar.start()
        assert radar.drain(timeout=5.0)
        radar.stop()
        assert len(calls) == len(set(calls)) == n  # each repo exactly once
        status = radar.status()
        for i in range(n):
            expect = RepoStatus.FAILED if i in failing else RepoStatus.DONE
            assert status[f"r{i}"] is expect
    ok("pipeline: byte-identical reruns; at-most-once held over 100 "
       "fault-injected 2-worker schedules")


def test_9_special_functions_and_welch():
    """Gamma/beta identities within 1e-12 on 1000 points; the Welch
    reference example matches."""
    rng = np.random.default_rng(99)
    for _ in range(1000):
        a = float(rng.uniform(0.1, 50))
        b = float(rng.uniform(0.1, 50))
        x = float(rng.uniform(0, 100))
        u = float(rng.uniform(0, 1))
        assert abs(gammainc_lower(a, x) + gammainc_upper(a, x) - 1.0) < 1e-12
        assert abs(betainc(a, b, u) + betainc(b, a, 1 - u) - 1.0) < 1e-12
    for a in (0.5, 2.0, 30.0):
        assert gammainc_lower(a, 0.0) == 0.0
        assert gammainc_upper(a, 0.0) == 1.0
        assert betainc(a, a, 0.0) == 0.0
        assert betainc(a, a, 1.0) == 1.0
        xs = np.linspace(0.0, 60.0, 50)
        lows = [gammainc_lower(a, x) for x in xs]
        assert all(l2 >= l1 - 1e-12 for l1, l2 in zip(lows, lows[1:]))
    # chi-squared tail consistency with the gamma route
    for _ in range(100):
        x = float(rng.uniform(0, 150))
        k = int(rng.integers(1, 60))
        assert abs(chi2_sf(x, k) - gammainc_upper(k / 2.0, x / 2.0)) < 1e-12

    r = two_sample_t_test([1, 2, 3], [2, 3, 4], "welch")
    assert abs(r.t_stat - (-1.224745)) < 1e-6
    assert abs(r.dof - 4.0) < 1e-9
    assert abs(r.p_value - 0.288) < 1e-3
    ok("special functions: identities within 1e-12 on 1000 points; Welch "
       "example t=-1.224745, dof=4, p~0.288")
