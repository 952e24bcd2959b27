"""Consensus pattern mining over repository metric series.

A candidate window is scored by its radius: the maximum over the other
series of the minimum z-normalized distance to any window.  The window with
the smallest radius is the consensus candidate for its length.  Accepted
candidates are those matched often enough in enough repositories.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyDataset, MetricMismatch, NoValidWindow
from .tsdist import (
    EPS_VAR,
    DistanceProfile,
    MetricSeries,
    distance_profile,
    znormalized_windows,
)


@dataclass(frozen=True)
class RepoCoverage:
    """Acceptance rule over the number of covered repositories.

    mode "min" accepts candidates covering at least count_or_fraction
    repositories (a fraction in (0, 1] is resolved against the repo count);
    mode "max_literal" accepts when the covered count is strictly below it.
    """

    mode: str = "min"
    count_or_fraction: float = 0.5

    def __post_init__(self):
        if self.mode not in ("min", "max_literal"):
            raise ValueError(f"unknown coverage mode {self.mode!r}")
        if self.count_or_fraction <= 0:
            raise ValueError("count_or_fraction must be positive")

    def threshold(self, n_repos: int) -> int:
        p = self.count_or_fraction
        if 0 < p <= 1 and isinstance(p, float):
            return math.ceil(p * n_repos)
        return int(p)

    def accepts(self, covered: int, n_repos: int) -> bool:
        t = self.threshold(n_repos)
        if self.mode == "min":
            return covered >= t
        return covered < t


@dataclass(frozen=True)
class MiningConfig:
    min_len: int
    max_len: int
    match_threshold: float
    min_matches_per_series: int = 1
    max_matches_per_series: float = math.inf
    repo_coverage: RepoCoverage = field(default_factory=RepoCoverage)
    candidate_strategy: str = "consensus"

    def __post_init__(self):
        if self.min_len < 2 or self.max_len < self.min_len:
            raise ValueError("need 2 <= min_len <= max_len")
        if self.match_threshold < 0:
            raise ValueError("match_threshold must be >= 0")
        if not 1 <= self.min_matches_per_series <= self.max_matches_per_series:
            raise ValueError("need 1 <= min_matches <= max_matches")
        if self.candidate_strategy not in ("consensus", "exhaustive"):
            raise ValueError(f"unknown strategy {self.candidate_strategy!r}")


@dataclass(frozen=True)
class ConsensusPattern:
    pattern_id: int
    values: np.ndarray
    metric_name: str
    source_repo: str
    source_offset: int
    radius: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class PatternOccurrence:
    pattern_id: int
    repo_id: str
    start_index: int
    end_index: int
    start_time: float
    end_time: float
    distance: float


def _self_radius(series: MetricSeries, m: int, eps_var: float):
    """Best-match radius per window of a single series, with a trivial-match
    exclusion zone of ceil(m/2) offsets around each window's own origin."""
    z, valid = znormalized_windows(series.values, m, eps_var)
    k = len(z)
    excl = math.ceil(m / 2)
    sq = 2.0 * np.maximum(m - z @ z.T, 0.0)
    d = np.sqrt(sq)
    offs = np.arange(k)
    mask = np.abs(offs[:, None] - offs[None, :]) < excl
    d[mask] = np.inf
    d[:, ~valid] = np.inf
    best = d.min(axis=1)
    best[~valid] = np.inf
    return best


def consensus_candidate(series_set, m: int, eps_var: float = EPS_VAR) -> ConsensusPattern:
    """Window minimizing the max over the other series of the min distance.

    With a single series the window is scored against its own profile with
    the trivial self-match excluded.  Ties break to the lowest
    (series order, offset).  pattern_id is provisional (-1).
    """
    if any(len(s) < m for s in series_set):
        raise ValueError("every series must be at least as long as m")
    if len(series_set) == 1:
        s = series_set[0]
        radii = _self_radius(s, m, eps_var)
        if not np.any(np.isfinite(radii)):
            raise NoValidWindow("all windows constant")
        off = int(np.argmin(radii))
        return ConsensusPattern(-1, s.values[off : off + m], s.metric_name,
                                s.repo_id, off, float(radii[off]))

    zs = [znormalized_windows(s.values, m, eps_var) for s in series_set]
    best = None  # (radius, series_idx, offset)
    for si, s in enumerate(series_set):
        z, valid = zs[si]
        if not np.any(valid):
            continue
        # min distance from each window of s to each other series
        radii = np.zeros(len(z))
        for sj in range(len(series_set)):
            if sj == si:
                continue
            zo, vo = zs[sj]
            if not np.any(vo):
                radii[:] = np.inf
                break
            sq = 2.0 * np.maximum(m - z @ zo[vo].T, 0.0)
            radii = np.maximum(radii, np.sqrt(sq).min(axis=1))
        radii[~valid] = np.inf
        off = int(np.argmin(radii))
        if np.isfinite(radii[off]) and (best is None or radii[off] < best[0]):
            best = (float(radii[off]), si, off)
    if best is None:
        raise NoValidWindow("all windows constant")
    radius, si, off = best
    s = series_set[si]
    return ConsensusPattern(-1, s.values[off : off + m], s.metric_name,
                            s.repo_id, off, radius)


def greedy_matches(profile: DistanceProfile, tau: float):
    """Non-overlapping match offsets from a distance profile.

    Repeatedly takes the smallest defined distance <= tau (ties to the
    lowest offset) and masks every offset overlapping the taken window.
    Returns [(offset, distance), ...] in selection order.
    """
    m = profile.query_length
    d = profile.distances.copy()
    d[~profile.valid] = np.inf
    d[d > tau] = np.inf
    out = []
    while True:
        i = int(np.argmin(d))
        if not np.isfinite(d[i]):
            break
        out.append((i, float(profile.distances[i])))
        lo = max(0, i - m + 1)
        d[lo : i + m] = np.inf
    return out


def count_matches(pattern: ConsensusPattern, series: MetricSeries, tau: float,
                  eps_var: float = EPS_VAR):
    """Count thresholded non-overlapping matches of pattern in series."""
    if len(series) < len(pattern):
        raise ValueError("series shorter than pattern")
    profile = distance_profile(pattern.values, series, eps_var)
    occs = []
    for off, dist in greedy_matches(profile, tau):
        end = off + len(pattern) - 1
        occs.append(PatternOccurrence(
            pattern_id=pattern.pattern_id,
            repo_id=series.repo_id,
            start_index=off,
            end_index=end,
            start_time=float(series.timestamps[off]),
            end_time=float(series.timestamps[end]),
            distance=dist,
        ))
    return len(occs), occs


def _series_by_repo(dataset):
    repos = {}
    for s in dataset:
        repos.setdefault(s.repo_id, []).append(s)
    return repos


def _covered_repos(pattern, dataset, config, eps_var):
    """Number of repos with at least one series whose match count is in
    [min_matches, max_matches]."""
    covered = set()
    for s in dataset:
        if len(s) < len(pattern):
            continue
        n, _ = count_matches(pattern, s, config.match_threshold, eps_var)
        if config.min_matches_per_series <= n <= config.max_matches_per_series:
            covered.add(s.repo_id)
    return len(covered)


def mine_patterns(dataset, config: MiningConfig, eps_var: float = EPS_VAR):
    """Mine accepted consensus patterns for every length in [min_len, max_len].

    Deterministic: output ordered by ascending length, then source series
    order, then offset; accepted patterns get sequential ids from 0.
    """
    dataset = list(dataset)
    if not dataset:
        raise EmptyDataset("no series to mine")
    metrics = {s.metric_name for s in dataset}
    if len(metrics) > 1:
        raise MetricMismatch(f"mixed metrics in dataset: {sorted(metrics)}")
    n_repos = len(_series_by_repo(dataset))
    accepted = []
    for m in range(config.min_len, config.max_len + 1):
        eligible = [s for s in dataset if len(s) >= m]
        if not eligible:
            continue
        if config.candidate_strategy == "consensus":
            try:
                candidates = [consensus_candidate(eligible, m, eps_var)]
            except NoValidWindow:
                candidates = []
        else:
            candidates = []
            for s in eligible:
                z, valid = znormalized_windows(s.values, m, eps_var)
                for off in np.flatnonzero(valid):
                    candidates.append(ConsensusPattern(
                        -1, s.values[off : off + m], s.metric_name,
                        s.repo_id, int(off), 0.0))
        for cand in candidates:
            covered = _covered_repos(cand, dataset, config, eps_var)
            if config.repo_coverage.accepts(covered, n_repos):
                accepted.append(cand)
    return [
        ConsensusPattern(i, p.values, p.metric_name, p.source_repo,
                         p.source_offset, p.radius)
        for i, p in enumerate(accepted)
    ]


def locate_occurrences(patterns, dataset, tau: float, eps_var: float = EPS_VAR):
    """All thresholded occurrences of the patterns across the dataset."""
    out = []
    for p in patterns:
        for s in dataset:
            if s.metric_name != p.metric_name:
                raise MetricMismatch(
                    f"pattern metric {p.metric_name!r} vs series {s.metric_name!r}")
            if len(s) < len(p):
                continue
            _, occs = count_matches(p, s, tau, eps_var)
            out.extend(occs)
    return out


def patterns_to_json(patterns) -> dict:
    return {
        "patterns": [
            {
                "pattern_id": p.pattern_id,
                "metric": p.metric_name,
                "length": len(p),
                "values": [float(v) for v in p.values],
                "source": {"repo": p.source_repo, "offset": p.source_offset},
                "radius": p.radius,
            }
            for p in patterns
        ]
    }


def patterns_from_json(doc) -> list:
    return [
        ConsensusPattern(
            pattern_id=e["pattern_id"],
            values=np.array(e["values"], dtype=float),
            metric_name=e["metric"],
            source_repo=e["source"]["repo"],
            source_offset=e["source"]["offset"],
            radius=e["radius"],
        )
        for e in doc["patterns"]
    ]


def occurrence_to_json_line(occ: PatternOccurrence) -> str:
    from .timeutil import to_rfc3339

    return json.dumps({
        "pattern_id": occ.pattern_id,
        "repo": occ.repo_id,
        "start_index": occ.start_index,
        "end_index": occ.end_index,
        "start_time": to_rfc3339(occ.start_time),
        "end_time": to_rfc3339(occ.end_time),
        "distance": occ.distance,
    }, sort_keys=True)


def occurrence_from_json_line(line: str) -> PatternOccurrence:
    from .timeutil import from_rfc3339

    obj = json.loads(line)
    return PatternOccurrence(
        pattern_id=obj["pattern_id"],
        repo_id=obj["repo"],
        start_index=obj["start_index"],
        end_index=obj["end_index"],
        start_time=from_rfc3339(obj["start_time"]),
        end_time=from_rfc3339(obj["end_time"]),
        distance=obj["distance"],
    )
