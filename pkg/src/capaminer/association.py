"""Temporal join of pattern occurrences with classified pull requests, the
pattern-by-action contingency table, relevance filtering, pairwise t-tests,
and extraction of the validated pattern-to-action mapping.
"""

from __future__ import annotations

import io
import itertools
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientSamples
from .stats import Chi2Result, chi2_independence, two_sample_t_test

DEFAULT_WINDOW_SECONDS = 30 * 86400  # "plus one month", fixed at 30 days
N_CAPAS = 7  # association-side action ids 0..6


@dataclass(frozen=True)
class JoinRecord:
    pattern_type: int
    occurrence_key: tuple  # (repo_id, start_index) of the attributed occurrence
    pr_id: str
    capa: int
    lag_seconds: float


@dataclass(frozen=True)
class ContingencyTable:
    row_labels: tuple  # pattern-type ids
    col_labels: tuple  # action ids
    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=int)
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)

    @property
    def row_totals(self):
        return self.counts.sum(axis=1)

    @property
    def col_totals(self):
        return self.counts.sum(axis=0)

    @property
    def grand_total(self):
        return int(self.counts.sum())

    def row(self, pattern_type):
        return self.counts[self.row_labels.index(pattern_type)]


@dataclass(frozen=True)
class PairwiseTestResult:
    pattern_type: int
    capa_i: int
    capa_j: int
    mean_i: float
    mean_j: float
    t_stat: float
    dof: float
    p_value: float


@dataclass(frozen=True)
class CapaMapping:
    alpha: float
    tuples: tuple  # ((pattern_type, capa), ...)


def capa_id_from_class(class_id: int) -> int:
    """Association action id k corresponds to classifier class k+1."""
    return int(class_id) - 1


def temporal_join(occurrences, classified_prs, window_seconds: float = DEFAULT_WINDOW_SECONDS):
    """Attribute each pull request to at most one pattern type.

    A PR qualifies for an occurrence when its creation time lies in
    [occurrence start, occurrence end + window] and the repo matches.  Among
    qualifying occurrences the one whose start is nearest before the PR wins
    (ties to the lowest pattern id).

    classified_prs: iterable of (pr_id, repo_id, creation_time, capa 0..6).
    """
    by_repo = {}
    for occ in occurrences:
        by_repo.setdefault(occ.repo_id, []).append(occ)
    joins = []
    for pr_id, repo_id, created, capa in classified_prs:
        if not 0 <= capa < N_CAPAS:
            raise ValueError(f"capa id {capa} out of range 0..{N_CAPAS - 1}")
        best = None  # (start gap, pattern_id, occurrence)
        for occ in by_repo.get(repo_id, ()):
            if occ.start_time <= created <= occ.end_time + window_seconds:
                key = (created - occ.start_time, occ.pattern_id)
                if best is None or key < best[:2]:
                    best = (key[0], key[1], occ)
        if best is not None:
            lag, pattern_id, occ = best
            joins.append(JoinRecord(
                pattern_type=pattern_id,
                occurrence_key=(occ.repo_id, occ.start_index),
                pr_id=pr_id,
                capa=capa,
                lag_seconds=lag,
            ))
    return joins


def build_contingency(joins, pattern_types=None, capa_ids=None) -> ContingencyTable:
    """Pattern-type by action count matrix with deterministic label order."""
    rows = (tuple(pattern_types) if pattern_types is not None
            else tuple(sorted({j.pattern_type for j in joins})))
    cols = tuple(capa_ids) if capa_ids is not None else tuple(range(N_CAPAS))
    counts = np.zeros((len(rows), len(cols)), dtype=int)
    ri = {r: i for i, r in enumerate(rows)}
    ci = {c: i for i, c in enumerate(cols)}
    for j in joins:
        counts[ri[j.pattern_type], ci[j.capa]] += 1
    return ContingencyTable(rows, cols, counts)


def chi2_on_table(table: ContingencyTable) -> Chi2Result:
    return chi2_independence(table.counts)


def filter_relevant(table: ContingencyTable, min_count: int = 5) -> dict:
    """Per pattern type, the set of actions seen at least min_count times."""
    out = {}
    for i, pt in enumerate(table.row_labels):
        out[pt] = {c for j, c in enumerate(table.col_labels)
                   if table.counts[i, j] >= min_count}
    return out


def qualifying_pairs(qualifying_sets: dict):
    """Unordered action pairs per pattern with >= 2 qualifying actions."""
    pairs = []
    for pt in sorted(qualifying_sets):
        caps = sorted(qualifying_sets[pt])
        if len(caps) >= 2:
            pairs.extend((pt, i, j) for i, j in itertools.combinations(caps, 2))
    return pairs


def occurrence_fraction_samples(joins):
    """Per (pattern, action): the fraction of each attributed occurrence's
    joined PRs labeled with that action, over occurrences with >= 1 join."""
    per_occ = {}
    for j in joins:
        key = (j.pattern_type, j.occurrence_key)
        per_occ.setdefault(key, []).append(j.capa)
    samples = {}
    for (pt, _), capas in sorted(per_occ.items()):
        total = len(capas)
        for c in range(N_CAPAS):
            frac = sum(1 for v in capas if v == c) / total
            samples.setdefault((pt, c), []).append(frac)
    return samples


def pairwise_tests(joins, qualifying_sets, variant: str = "welch"):
    """Welch tests between occurrence-level fraction samples of each
    qualifying action pair of each pattern."""
    samples = occurrence_fraction_samples(joins)
    results = []
    for pt, ci, cj in qualifying_pairs(qualifying_sets):
        a = samples.get((pt, ci), [])
        b = samples.get((pt, cj), [])
        if len(a) < 2 or len(b) < 2:
            raise InsufficientSamples(
                f"pattern {pt}: need >= 2 occurrence samples per action "
                f"({ci}: {len(a)}, {cj}: {len(b)})")
        r = two_sample_t_test(a, b, variant)
        results.append(PairwiseTestResult(
            pattern_type=pt, capa_i=ci, capa_j=cj,
            mean_i=r.mean_a, mean_j=r.mean_b,
            t_stat=r.t_stat, dof=r.dof, p_value=r.p_value))
    return results


def extract_mapping(results, alpha: float) -> CapaMapping:
    """Map a pattern to the action dominating every other qualifying action
    of that pattern: higher mean and p < alpha on each pairwise test.

    Input row order does not matter; at most one action can dominate."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must be in (0, 1)")
    per_pattern = {}
    for r in results:
        per_pattern.setdefault(r.pattern_type, []).append(r)
    tuples = []
    for pt in sorted(per_pattern):
        rows = per_pattern[pt]
        capas = sorted({r.capa_i for r in rows} | {r.capa_j for r in rows})
        for q in capas:
            dominated = 0
            for r in rows:
                if q == r.capa_i and r.p_value < alpha and r.mean_i > r.mean_j:
                    dominated += 1
                elif q == r.capa_j and r.p_value < alpha and r.mean_j > r.mean_i:
                    dominated += 1
            if dominated == len(capas) - 1:
                tuples.append((pt, q))
                break
    return CapaMapping(alpha=alpha, tuples=tuple(tuples))


def contingency_to_csv(table: ContingencyTable) -> str:
    """Paper-style layout: action-id header, one row per pattern, Total
    row and column."""
    buf = io.StringIO()
    header = ["Pattern type"] + [f"CAPA {c}" for c in table.col_labels] + ["Total"]
    buf.write(",".join(header) + "\n")
    for i, pt in enumerate(table.row_labels):
        cells = [f"Pattern {pt}"] + [str(int(v)) for v in table.counts[i]]
        cells.append(str(int(table.row_totals[i])))
        buf.write(",".join(cells) + "\n")
    totals = ["Total"] + [str(int(v)) for v in table.col_totals]
    totals.append(str(table.grand_total))
    buf.write(",".join(totals) + "\n")
    return buf.getvalue()


def contingency_from_csv(text: str) -> ContingencyTable:
    lines = [ln for ln in text.splitlines()
             if ln.strip() and not ln.startswith("#")]
    header = lines[0].split(",")
    cols = tuple(int(h.split()[-1]) for h in header[1:] if h.strip() != "Total")
    rows, data = [], []
    for ln in lines[1:]:
        cells = ln.split(",")
        if cells[0].strip() == "Total":
            continue
        rows.append(int(cells[0].split()[-1]))
        data.append([int(c) for c in cells[1 : 1 + len(cols)]])
    return ContingencyTable(tuple(rows), cols, np.array(data, dtype=int))


def pairwise_to_json(results) -> dict:
    return {
        "tests": [
            {
                "pattern": r.pattern_type,
                "capa_i": r.capa_i,
                "capa_j": r.capa_j,
                "mean_i": r.mean_i,
                "mean_j": r.mean_j,
                "t": r.t_stat,
                "dof": r.dof,
                "p": r.p_value,
            }
            for r in results
        ]
    }


def pairwise_from_json(doc) -> list:
    return [
        PairwiseTestResult(
            pattern_type=e["pattern"], capa_i=e["capa_i"], capa_j=e["capa_j"],
            mean_i=e["mean_i"], mean_j=e["mean_j"],
            t_stat=e.get("t", 0.0), dof=e.get("dof", 0.0), p_value=e["p"])
        for e in doc["tests"]
    ]


def mapping_to_json(mapping: CapaMapping) -> dict:
    return {
        "alpha": mapping.alpha,
        "tuples": [{"pattern": pt, "capa": c} for pt, c in mapping.tuples],
    }
