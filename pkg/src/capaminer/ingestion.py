"""Data collection: fixture loaders, the radar work queue, and an optional
live GitHub-style source adapter.

The radar watches a source adapter for newly visible repositories, queues
them, and lets a bounded worker pool collect their metric series and pull
requests.  Claims are atomic, so each repository is processed at most once.
"""

from __future__ import annotations

import csv
import enum
import json
import logging
import math
import threading
import time
from dataclasses import dataclass

import numpy as np

from . import classifier, timeutil
from .errors import (
    AuthError,
    MalformedLine,
    MissingColumn,
    NonFiniteValue,
    NotFound,
    RadarError,
    RateLimited,
)
from .tsdist import MetricSeries

log = logging.getLogger(__name__)

METRIC_COLUMNS = ["lines_added", "lines_deleted", "lines_changed"]
CSV_HEADER = ["repo_id", "timestamp"] + METRIC_COLUMNS

PR_KNOWN_EXTRA = {"repo_id", "pr_id", "text", "title", "body"}


def load_metrics_csv(path):
    """Load the commit-metric CSV into one MetricSeries per (repo, metric).

    Rows are grouped by repo and sorted by timestamp; out-of-order input is
    tolerated.  A value that does not parse as a finite number raises
    NonFiniteValue with its 1-based data row number.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MissingColumn("empty file, no header") from None
        missing = [c for c in CSV_HEADER if c not in header]
        if missing:
            raise MissingColumn(f"missing column(s): {', '.join(missing)}")
        col = {name: header.index(name) for name in CSV_HEADER}
        per_repo = {}
        for row_no, row in enumerate(reader, start=1):
            if not row:
                continue
            repo = row[col["repo_id"]]
            ts = timeutil.from_rfc3339(row[col["timestamp"]])
            vals = []
            for metric in METRIC_COLUMNS:
                try:
                    v = float(row[col[metric]])
                except ValueError:
                    raise NonFiniteValue(row_no) from None
                if not math.isfinite(v):
                    raise NonFiniteValue(row_no)
                vals.append(v)
            per_repo.setdefault(repo, []).append((ts, vals))
    series = []
    for repo in sorted(per_repo):
        rows = sorted(per_repo[repo], key=lambda r: r[0])
        ts = np.array([r[0] for r in rows])
        for mi, metric in enumerate(METRIC_COLUMNS):
            series.append(MetricSeries(
                repo_id=repo, metric_name=metric, timestamps=ts,
                values=np.array([r[1][mi] for r in rows])))
    return series


def _record_from_obj(obj, line_no):
    known = set(classifier.FEATURE_ORDER) | PR_KNOWN_EXTRA
    unknown = set(obj) - known
    if unknown:
        log.info("line %d: ignoring unknown fields %s", line_no, sorted(unknown))
    fields = {}
    for name in classifier.FEATURE_ORDER:
        if name not in obj or obj[name] is None:
            continue
        v = obj[name]
        if name in classifier.TIMESTAMP_FIELDS and isinstance(v, str):
            v = timeutil.from_rfc3339(v)
        fields[name] = v
    if "creation_date" not in fields:
        raise MalformedLine(line_no, f"line {line_no}: creation_date missing")
    text = obj.get("text") or " ".join(
        str(obj.get(k, "")) for k in ("title", "body")).strip()
    return classifier.PullRequestRecord(
        repo_id=obj.get("repo_id", ""),
        creation_date=fields["creation_date"],
        pr_id=str(obj.get("pr_id", obj.get("pull_request_number", line_no))),
        text=text,
        fields=fields,
    )


def load_prs_jsonl(path):
    """Load pull-request records from a JSON-lines file.

    Unknown fields are ignored with a logged notice; a malformed line
    raises MalformedLine with its 1-based line number.
    """
    records = []
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError:
                raise MalformedLine(line_no) from None
            records.append(_record_from_obj(obj, line_no))
    return records


@dataclass(frozen=True)
class RepoRef:
    repo_id: str
    source: str = "fixture"

    def __post_init__(self):
        if not self.repo_id:
            raise ValueError("repo_id must be non-empty")


class RadarState(enum.Enum):
    INITIALIZED = "initialized"
    RUNNING = "running"
    STOPPED = "stopped"


class RepoStatus(enum.Enum):
    PENDING = "pending"
    IN_PROGRESS = "in_progress"
    DONE = "done"
    FAILED = "failed"


class SourceAdapter:
    """Behavioral contract for data sources; fetches must be idempotent."""

    name = "abstract"

    def list_new_repos(self):
        raise NotImplementedError

    def fetch_commit_metrics(self, repo_id):
        raise NotImplementedError

    def fetch_pull_requests(self, repo_id):
        raise NotImplementedError


class FixtureAdapter(SourceAdapter):
    """Serves a pre-loaded dataset; used by tests and the batch pipeline."""

    name = "fixture"

    def __init__(self, series=None, prs=None, repos=None):
        self._series = list(series or [])
        self._prs = list(prs or [])
        if repos is None:
            repos = sorted({s.repo_id for s in self._series}
                           | {p.repo_id for p in self._prs})
        self._repos = list(repos)
        self._announced = 0

    def list_new_repos(self):
        new = self._repos[self._announced:]
        self._announced = len(self._repos)
        return [RepoRef(r, self.name) for r in new]

    def fetch_commit_metrics(self, repo_id):
        return [s for s in self._series if s.repo_id == repo_id]

    def fetch_pull_requests(self, repo_id):
        return [p for p in self._prs if p.repo_id == repo_id]


@dataclass
class RadarConfig:
    adapter: SourceAdapter
    poll_interval_seconds: float = 1.0
    workers: int = 1


class Radar:
    """Lifecycle-managed collection queue over a source adapter.

    start() spawns the poll loop and worker pool; stop() drains in-flight
    work and halts; poll_new() and collect() are also callable directly for
    synchronous use.
    """

    def __init__(self, config: RadarConfig):
        self.config = config
        self.state = RadarState.INITIALIZED
        self._lock = threading.Lock()
        self._queue_status = {}
        self._failures = {}
        self._results = {}
        self._threads = []
        self._halt = threading.Event()
        log.info("radar initialized (adapter=%s)", config.adapter.name)

    def poll_new(self):
        """Ask the adapter for newly visible repos; queue them as pending."""
        new = self.config.adapter.list_new_repos()
        with self._lock:
            for ref in new:
                if ref.repo_id not in self._queue_status:
                    self._queue_status[ref.repo_id] = RepoStatus.PENDING
                    log.info("queued %s", ref.repo_id)
        return new

    def _claim(self):
        with self._lock:
            for repo_id, status in self._queue_status.items():
                if status is RepoStatus.PENDING:
                    self._queue_status[repo_id] = RepoStatus.IN_PROGRESS
                    return repo_id
        return None

    def collect(self, repo_id):
        """Fetch one repo's data; transitions pending -> in progress ->
        done/failed.  Unknown or already-claimed repos are rejected, so a
        repo is processed at most once even under concurrent callers."""
        with self._lock:
            status = self._queue_status.get(repo_id)
            if status is None:
                raise RadarError(f"unknown repo {repo_id!r}")
            if status is not RepoStatus.PENDING:
                raise RadarError(f"repo {repo_id!r} already claimed ({status.value})")
            self._queue_status[repo_id] = RepoStatus.IN_PROGRESS
        return self._run_collect(repo_id)

    def _run_collect(self, repo_id):
        try:
            series = self.config.adapter.fetch_commit_metrics(repo_id)
            prs = self.config.adapter.fetch_pull_requests(repo_id)
        except Exception as exc:
            with self._lock:
                self._queue_status[repo_id] = RepoStatus.FAILED
                self._failures[repo_id] = str(exc)
            log.warning("collect failed for %s: %s", repo_id, exc)
            return False
        with self._lock:
            self._queue_status[repo_id] = RepoStatus.DONE
            self._results[repo_id] = (series, prs)
        log.info("collected %s", repo_id)
        return True

    def _worker_loop(self):
        while not self._halt.is_set():
            repo_id = self._claim()
            if repo_id is None:
                if self._halt.wait(0.01):
                    break
                continue
            self._run_collect(repo_id)

    def _poll_loop(self):
        while not self._halt.is_set():
            self.poll_new()
            if self._halt.wait(self.config.poll_interval_seconds):
                break

    def start(self):
        if self.state is RadarState.STOPPED:
            raise RadarError("cannot start a stopped radar")
        if self.state is RadarState.RUNNING:
            return
        self.state = RadarState.RUNNING
        self._halt.clear()
        self._threads = [threading.Thread(target=self._poll_loop, daemon=True)]
        self._threads += [
            threading.Thread(target=self._worker_loop, daemon=True)
            for _ in range(self.config.workers)
        ]
        for t in self._threads:
            t.start()
        log.info("radar started (%d workers)", self.config.workers)

    def stop(self):
        """Drain in-flight work and halt.  A second call is a no-op."""
        if self.state is RadarState.STOPPED:
            log.info("radar already stopped")
            return "AlreadyStopped"
        self._halt.set()
        for t in self._threads:
            t.join(timeout=10)
        self._threads = []
        self.state = RadarState.STOPPED
        log.info("radar stopped")
        return "Stopped"

    def drain(self, timeout=10.0):
        """Block until nothing is pending or in progress (running radar)."""
        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            with self._lock:
                busy = any(s in (RepoStatus.PENDING, RepoStatus.IN_PROGRESS)
                           for s in self._queue_status.values())
            if not busy:
                return True
            time.sleep(0.01)
        return False

    def status(self):
        with self._lock:
            return dict(self._queue_status)

    def failure_reason(self, repo_id):
        with self._lock:
            return self._failures.get(repo_id)

    def result(self, repo_id):
        with self._lock:
            return self._results.get(repo_id)


class LiveGitHubAdapter(SourceAdapter):
    """Paginated REST adapter with exponential backoff on rate limits.

    Optional feature: needs a token and network access; tests drive it with
    a fake session replaying canned transcripts.
    """

    name = "github"

    def __init__(self, token, repos, session=None, base_url="https://api.github.com",
                 per_page=100, max_retries=4, sleep=time.sleep):
        if not token:
            raise AuthError("no API token configured")
        self._token = token
        self._repos = list(repos)
        self._announced = 0
        self._base = base_url.rstrip("/")
        self._per_page = per_page
        self._max_retries = max_retries
        self._sleep = sleep
        if session is None:
            import requests

            session = requests.Session()
        self._session = session

    def _get(self, url, params=None):
        headers = {"Authorization": f"token {self._token}",
                   "Accept": "application/vnd.github+json"}
        delay = 1.0
        for attempt in range(self._max_retries + 1):
            resp = self._session.get(url, params=params, headers=headers)
            if resp.status_code == 401:
                raise AuthError(f"unauthorized for {url}")
            if resp.status_code == 404:
                raise NotFound(url)
            if resp.status_code in (403, 429):
                if attempt == self._max_retries:
                    raise RateLimited(url)
                reset = resp.headers.get("Retry-After") or resp.headers.get(
                    "X-RateLimit-Reset")
                wait = float(reset) if reset else delay
                self._sleep(min(wait, 60.0))
                delay *= 2
                continue
            resp.raise_for_status()
            return resp
        raise RateLimited(url)

    def _paginate(self, url, params=None):
        params = dict(params or {})
        params["per_page"] = self._per_page
        page = 1
        while True:
            params["page"] = page
            resp = self._get(url, params)
            batch = resp.json()
            if not batch:
                return
            yield from batch
            if len(batch) < self._per_page:
                return
            page += 1

    def list_new_repos(self):
        new = self._repos[self._announced:]
        self._announced = len(self._repos)
        return [RepoRef(r, self.name) for r in new]

    def fetch_commit_metrics(self, repo_id):
        commits = list(self._paginate(f"{self._base}/repos/{repo_id}/commits"))
        rows = []
        for c in commits:
            stats = c.get("stats", {})
            ts = timeutil.from_rfc3339(c["commit"]["author"]["date"])
            added = float(stats.get("additions", 0))
            deleted = float(stats.get("deletions", 0))
            rows.append((ts, added, deleted))
        rows.sort(key=lambda r: r[0])
        if not rows:
            return []
        ts = np.array([r[0] for r in rows])
        added = np.array([r[1] for r in rows])
        deleted = np.array([r[2] for r in rows])
        return [
            MetricSeries(repo_id, "lines_added", ts, added),
            MetricSeries(repo_id, "lines_deleted", ts, deleted),
            MetricSeries(repo_id, "lines_changed", ts, added + deleted),
        ]

    def fetch_pull_requests(self, repo_id):
        pulls = list(self._paginate(f"{self._base}/repos/{repo_id}/pulls",
                                    {"state": "all"}))
        pulls.sort(key=lambda p: p.get("number", 0))
        records = []
        for p in pulls:
            obj = {
                "repo_id": repo_id,
                "pr_id": str(p.get("number", "")),
                "title": p.get("title", ""),
                "body": p.get("body") or "",
                "creation_date": p.get("created_at"),
                "closure_date": p.get("closed_at"),
                "merged_date": p.get("merged_at"),
                "update_date": p.get("updated_at"),
                "locked_state": p.get("locked", False),
                "merged_state": p.get("merged_at") is not None,
                "pull_request_state": p.get("state") == "open",
                "pull_request_number": p.get("number"),
                "number_of_additions": p.get("additions"),
                "number_of_deletions": p.get("deletions"),
                "number_of_commits": p.get("commits"),
                "number_of_files": p.get("changed_files"),
                "number_of_file_changes": p.get("changed_files"),
                "number_of_comments": p.get("comments"),
                "number_of_review_comments": p.get("review_comments"),
            }
            obj = {k: v for k, v in obj.items() if v is not None}
            records.append(_record_from_obj(obj, p.get("number", 0)))
        return records
