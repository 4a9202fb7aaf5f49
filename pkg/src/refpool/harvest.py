"""DOI resolution and polite document harvesting."""

from __future__ import annotations

import hashlib
import json
import os
import shutil
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path
from urllib.parse import urlparse

import requests

from .corpus import (
    AVAILABLE,
    JOURNAL,
    PAYWALLED,
    PENDING,
    UNRESOLVED,
    OutputRecord,
    SubmissionSet,
)
from .extract import sniff_format

RESOLVER_ENV = "REFPOOL_RESOLVER_URL"
DEFAULT_TTL = 7 * 24 * 3600.0


class HarvestError(RuntimeError):
    pass


class RateLimiter:
    """Per-host minimum spacing between requests; safe across threads."""

    def __init__(self, min_interval: float = 1.0, clock=time.monotonic, sleep=time.sleep):
        self.min_interval = min_interval
        self._clock = clock
        self._sleep = sleep
        self._last: dict[str, float] = {}
        self._lock = threading.Lock()

    def wait(self, host: str) -> None:
        while True:
            with self._lock:
                now = self._clock()
                due = self._last.get(host, now - self.min_interval) + self.min_interval
                if due <= now:
                    self._last[host] = now
                    return
            self._sleep(due - now)


class ResolverClient:
    """Open-access lookup keyed by DOI, with an on-disk TTL cache.

    Expects an unpaywall-shaped JSON body: is_oa, best_oa_location.url,
    and doi_url for the version of record.
    """

    def __init__(
        self,
        base_url: str | None = None,
        cache_dir: str | Path | None = None,
        ttl: float = DEFAULT_TTL,
        retries: int = 2,
        retry_delay: float = 0.5,
        session: requests.Session | None = None,
        limiter: RateLimiter | None = None,
    ):
        self.base_url = (base_url or os.environ.get(RESOLVER_ENV, "")).rstrip("/")
        if not self.base_url:
            raise HarvestError(f"no resolver URL configured (set {RESOLVER_ENV})")
        self.cache_dir = Path(cache_dir) if cache_dir else None
        if self.cache_dir:
            self.cache_dir.mkdir(parents=True, exist_ok=True)
        self.ttl = ttl
        self.retries = retries
        self.retry_delay = retry_delay
        self.session = session or requests.Session()
        self.limiter = limiter or RateLimiter()

    def _cache_path(self, doi: str) -> Path | None:
        if not self.cache_dir:
            return None
        return self.cache_dir / (hashlib.sha256(doi.encode()).hexdigest()[:24] + ".json")

    def _cached(self, doi: str) -> dict | None:
        path = self._cache_path(doi)
        if not path or not path.exists():
            return None
        try:
            entry = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError):
            return None
        if time.time() - entry.get("fetched_at", 0.0) > self.ttl:
            return None
        return entry["payload"]

    def lookup(self, doi: str) -> dict:
        """Resolver payload for one DOI; at most one live request per TTL."""
        cached = self._cached(doi)
        if cached is not None:
            return cached
        url = f"{self.base_url}/{doi}"
        host = urlparse(url).netloc
        last: Exception | None = None
        for attempt in range(self.retries + 1):
            self.limiter.wait(host)
            try:
                resp = self.session.get(url, timeout=30)
            except requests.RequestException as exc:
                last = exc
                time.sleep(self.retry_delay * (2**attempt))
                continue
            if resp.status_code == 404:
                raise HarvestError(f"DOI not found: {doi}")
            if resp.status_code != 200:
                last = HarvestError(f"resolver returned {resp.status_code} for {doi}")
                time.sleep(self.retry_delay * (2**attempt))
                continue
            payload = resp.json()
            path = self._cache_path(doi)
            if path:
                path.write_text(json.dumps({"fetched_at": time.time(), "payload": payload}))
            return payload
        raise HarvestError(f"resolver failed for {doi}: {last}")


def resolve_output(record: OutputRecord, resolver: ResolverClient) -> OutputRecord:
    """Attach a source URL to a record based on the resolver's answer."""
    if not record.doi:
        raise HarvestError(f"{record.record_id}: cannot resolve without a DOI")
    try:
        payload = resolver.lookup(record.doi)
    except HarvestError:
        return replace(record, availability=UNRESOLVED, source_url="")
    oa = payload.get("best_oa_location") or {}
    oa_url = oa.get("url") if payload.get("is_oa") else None
    if oa_url:
        return replace(record, availability=PENDING, source_url=oa_url)
    # Version of record exists but sits behind access control; keep the
    # URL for a manual fetch and never download from it ourselves.
    vor = payload.get("doi_url") or f"https://doi.org/{record.doi}"
    return replace(record, availability=PAYWALLED, source_url=vor)


def store_document(data: bytes, corpus_dir: Path, kind: str) -> str:
    digest = hashlib.sha256(data).hexdigest()
    corpus_dir.mkdir(parents=True, exist_ok=True)
    dest = corpus_dir / f"{digest}.{kind}"
    if not dest.exists():
        tmp = dest.with_suffix(dest.suffix + ".tmp")
        tmp.write_bytes(data)
        tmp.replace(dest)
    return str(dest)


def fetch_document(
    record: OutputRecord,
    corpus_dir: str | Path,
    session: requests.Session | None = None,
    limiter: RateLimiter | None = None,
    retries: int = 2,
    retry_delay: float = 0.5,
) -> OutputRecord:
    """Download one open-access document into the content-addressed store."""
    if record.availability != PENDING:
        raise HarvestError(
            f"{record.record_id}: refusing to fetch a record marked {record.availability}"
        )
    if not record.source_url:
        raise HarvestError(f"{record.record_id}: no source URL")
    session = session or requests.Session()
    limiter = limiter or RateLimiter()
    host = urlparse(record.source_url).netloc
    data: bytes | None = None
    for attempt in range(retries + 1):
        limiter.wait(host)
        try:
            resp = session.get(record.source_url, timeout=120)
        except requests.RequestException:
            time.sleep(retry_delay * (2**attempt))
            continue
        if resp.status_code != 200:
            time.sleep(retry_delay * (2**attempt))
            continue
        data = resp.content
        break
    if data is None:
        return replace(record, availability=UNRESOLVED, document_ref="")
    kind = sniff_format(data)
    if kind is None:
        # Typically an HTML landing or error page instead of the document.
        return replace(record, availability=UNRESOLVED, document_ref="")
    ref = store_document(data, Path(corpus_dir), kind)
    return replace(record, availability=AVAILABLE, document_ref=ref)


def merge_drop_in(
    sets: list[SubmissionSet], drop_in_dir: str | Path, corpus_dir: str | Path
) -> list[SubmissionSet]:
    """Fold hand-downloaded files into the corpus.

    A file named <record_id>.<ext> claims that record.  Real documents
    must sniff as such; .txt is accepted as-is for locally produced
    corpora.  Unknown record ids are ignored so the directory can be
    shared across runs.
    """
    drop_in = Path(drop_in_dir)
    if not drop_in.is_dir():
        return sets
    found: dict[str, Path] = {}
    for path in sorted(drop_in.iterdir()):
        if path.is_file():
            found.setdefault(path.stem, path)
    merged: list[SubmissionSet] = []
    for submission in sets:
        records = []
        for record in submission.records:
            path = found.get(record.record_id)
            if path is None or record.availability == AVAILABLE:
                records.append(record)
                continue
            data = path.read_bytes()
            kind = sniff_format(data)
            if kind is None and path.suffix.lower() == ".txt":
                kind = "txt"
            if kind is None:
                records.append(record)
                continue
            ref = store_document(data, Path(corpus_dir), kind)
            records.append(replace(record, availability=AVAILABLE, document_ref=ref))
        merged.append(submission.with_records(records))
    return merged


def harvest_all(
    sets: list[SubmissionSet],
    resolver: ResolverClient | None,
    corpus_dir: str | Path,
    drop_in_dir: str | Path | None = None,
    max_in_flight: int = 4,
    session: requests.Session | None = None,
    limiter: RateLimiter | None = None,
) -> list[SubmissionSet]:
    """Resolve and fetch every journal record with a DOI, then merge drop-ins.

    Only records still unresolved are touched, so re-running after adding
    documents is cheap and never regresses availability.  With no
    resolver, skips straight to the drop-in merge.
    """
    session = session or requests.Session()
    limiter = limiter or RateLimiter()
    resolved: list[SubmissionSet] = []
    for submission in sets:
        records = []
        for record in submission.records:
            if (
                resolver is not None
                and record.output_kind == JOURNAL
                and record.doi
                and record.availability == UNRESOLVED
                and not record.document_ref
            ):
                record = resolve_output(record, resolver)
            records.append(record)
        resolved.append(submission.with_records(records))

    def fetch(record: OutputRecord) -> OutputRecord:
        return fetch_document(record, corpus_dir, session=session, limiter=limiter)

    fetched: list[SubmissionSet] = []
    with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
        for submission in resolved:
            futures = {}
            for idx, record in enumerate(submission.records):
                if record.availability == PENDING:
                    futures[idx] = pool.submit(fetch, record)
            records = list(submission.records)
            for idx, future in futures.items():
                records[idx] = future.result()
            fetched.append(submission.with_records(records))

    if drop_in_dir is not None:
        fetched = merge_drop_in(fetched, drop_in_dir, corpus_dir)
    return fetched
