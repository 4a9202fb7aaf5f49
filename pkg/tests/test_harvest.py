"""Resolver caching, polite fetching, and drop-in merging, all offline."""

from __future__ import annotations

import json

import pytest

from refpool.calibration import GradeProfile
from refpool.corpus import (
    AVAILABLE,
    PAYWALLED,
    PENDING,
    UNRESOLVED,
    OutputRecord,
    SubmissionSet,
    availability_ratio,
)
from refpool.harvest import (
    HarvestError,
    RateLimiter,
    ResolverClient,
    fetch_document,
    harvest_all,
    merge_drop_in,
    resolve_output,
)

PDF_BYTES = b"%PDF-1.4\nstream\nBT (fetched body text) Tj ET\nendstream\n%%EOF"


class FakeResponse:
    def __init__(self, status_code=200, payload=None, content=b""):
        self.status_code = status_code
        self._payload = payload
        self.content = content
        self.text = content.decode("latin-1") if content else json.dumps(payload or {})

    def json(self):
        if self._payload is None:
            raise ValueError("no json")
        return self._payload


class FakeSession:
    """Routes GETs to canned responses; records every URL touched."""

    def __init__(self, routes):
        self.routes = routes
        self.calls: list[str] = []

    def get(self, url, timeout=None):
        self.calls.append(url)
        entry = self.routes[url]
        if isinstance(entry, list):
            entry = entry.pop(0)
        if isinstance(entry, Exception):
            raise entry
        return entry


def oa_payload(doi, url):
    return {"doi": doi, "is_oa": True, "best_oa_location": {"url": url}}


def closed_payload(doi):
    return {"doi": doi, "is_oa": False, "doi_url": f"https://doi.org/{doi}"}


def instant_limiter():
    return RateLimiter(min_interval=0.0)


def make_resolver(tmp_path, routes, **kw):
    session = FakeSession(routes)
    client = ResolverClient(
        base_url="https://resolver.test/v2",
        cache_dir=tmp_path / "cache",
        session=session,
        limiter=instant_limiter(),
        retry_delay=0.001,
        **kw,
    )
    return client, session


def record(rid="r1", doi="10.1000/x1", **kw):
    return OutputRecord(record_id=rid, institution_id="U", uoa="17", doi=doi, **kw)


# ── resolver ─────────────────────────────────────────────────────────


def test_resolver_requires_base_url(monkeypatch):
    monkeypatch.delenv("REFPOOL_RESOLVER_URL", raising=False)
    with pytest.raises(HarvestError, match="REFPOOL_RESOLVER_URL"):
        ResolverClient()


def test_resolve_open_access(tmp_path):
    doi = "10.1000/x1"
    client, _ = make_resolver(
        tmp_path, {f"https://resolver.test/v2/{doi}": FakeResponse(payload=oa_payload(doi, "https://oa.test/x1.pdf"))}
    )
    out = resolve_output(record(), client)
    assert out.availability == PENDING
    assert out.source_url == "https://oa.test/x1.pdf"


def test_resolve_closed_access(tmp_path):
    doi = "10.1000/x1"
    client, _ = make_resolver(
        tmp_path, {f"https://resolver.test/v2/{doi}": FakeResponse(payload=closed_payload(doi))}
    )
    out = resolve_output(record(), client)
    assert out.availability == PAYWALLED
    assert out.source_url == f"https://doi.org/{doi}"


def test_resolve_unknown_doi(tmp_path):
    doi = "10.1000/x1"
    client, _ = make_resolver(
        tmp_path, {f"https://resolver.test/v2/{doi}": FakeResponse(status_code=404)}
    )
    out = resolve_output(record(), client)
    assert out.availability == UNRESOLVED


def test_resolve_without_doi_rejected(tmp_path):
    client, _ = make_resolver(tmp_path, {})
    with pytest.raises(HarvestError, match="without a DOI"):
        resolve_output(record(doi=""), client)


def test_resolver_cache_prevents_second_request(tmp_path):
    doi = "10.1000/x1"
    url = f"https://resolver.test/v2/{doi}"
    client, session = make_resolver(
        tmp_path, {url: FakeResponse(payload=oa_payload(doi, "https://oa.test/a.pdf"))}
    )
    client.lookup(doi)
    client.lookup(doi)
    assert session.calls == [url]
    # A fresh client sharing the cache dir also skips the network.
    client2, session2 = make_resolver(tmp_path, {})
    assert client2.lookup(doi)["is_oa"] is True
    assert session2.calls == []


def test_resolver_cache_expires(tmp_path):
    doi = "10.1000/x1"
    url = f"https://resolver.test/v2/{doi}"
    responses = [
        FakeResponse(payload=closed_payload(doi)),
        FakeResponse(payload=oa_payload(doi, "https://oa.test/late.pdf")),
    ]
    client, session = make_resolver(tmp_path, {url: responses}, ttl=0.0)
    client.lookup(doi)
    fresh = client.lookup(doi)
    assert len(session.calls) == 2
    assert fresh["is_oa"] is True


def test_resolver_retries_transient_failures(tmp_path):
    doi = "10.1000/x1"
    url = f"https://resolver.test/v2/{doi}"
    responses = [FakeResponse(status_code=503), FakeResponse(payload=closed_payload(doi))]
    client, session = make_resolver(tmp_path, {url: responses})
    assert client.lookup(doi)["is_oa"] is False
    assert len(session.calls) == 2


# ── fetch ────────────────────────────────────────────────────────────


def test_fetch_stores_content_addressed(tmp_path):
    rec = record(availability=PENDING, source_url="https://oa.test/x1.pdf")
    session = FakeSession({"https://oa.test/x1.pdf": FakeResponse(content=PDF_BYTES)})
    out = fetch_document(rec, tmp_path / "corpus", session=session, limiter=instant_limiter())
    assert out.availability == AVAILABLE
    assert out.document_ref.endswith(".pdf")
    with open(out.document_ref, "rb") as fh:
        assert fh.read() == PDF_BYTES


def test_fetch_rejects_html_payload(tmp_path):
    rec = record(availability=PENDING, source_url="https://oa.test/x1")
    session = FakeSession(
        {"https://oa.test/x1": FakeResponse(content=b"<html>Sign in to continue</html>")}
    )
    out = fetch_document(rec, tmp_path / "corpus", session=session, limiter=instant_limiter())
    assert out.availability == UNRESOLVED
    assert out.document_ref == ""


def test_fetch_refuses_paywalled(tmp_path):
    rec = record(availability=PAYWALLED, source_url="https://publisher.test/locked")
    with pytest.raises(HarvestError, match="paywalled"):
        fetch_document(rec, tmp_path / "corpus")


def test_fetch_gives_up_after_retries(tmp_path):
    url = "https://oa.test/flaky.pdf"
    rec = record(availability=PENDING, source_url=url)
    session = FakeSession({url: [FakeResponse(status_code=500)] * 3})
    out = fetch_document(
        rec, tmp_path / "corpus", session=session, limiter=instant_limiter(),
        retries=2, retry_delay=0.001,
    )
    assert out.availability == UNRESOLVED
    assert len(session.calls) == 3


# ── rate limiter ─────────────────────────────────────────────────────


def test_rate_limiter_spaces_same_host():
    now = [0.0]
    naps: list[float] = []

    def clock():
        return now[0]

    def sleep(duration):
        naps.append(duration)
        now[0] += duration

    limiter = RateLimiter(min_interval=1.0, clock=clock, sleep=sleep)
    limiter.wait("host-a")
    limiter.wait("host-a")
    assert naps and sum(naps) == pytest.approx(1.0)
    # A different host is not delayed by host-a's schedule.
    naps.clear()
    limiter.wait("host-b")
    assert naps == []


# ── drop-in merge ────────────────────────────────────────────────────


def _one_record_set(rec):
    return [
        SubmissionSet("U", "17", (rec,), GradeProfile(25, 25, 25, 25, 0), 1)
    ]


def test_drop_in_merges_matching_stem(tmp_path):
    rec = record(rid="rec-abc", availability=UNRESOLVED)
    drop = tmp_path / "drop"
    drop.mkdir()
    (drop / "rec-abc.pdf").write_bytes(PDF_BYTES)
    merged = merge_drop_in(_one_record_set(rec), drop, tmp_path / "corpus")
    out = merged[0].records[0]
    assert out.availability == AVAILABLE
    assert out.document_ref


def test_drop_in_ignores_unknown_and_garbage(tmp_path):
    rec = record(rid="rec-abc")
    drop = tmp_path / "drop"
    drop.mkdir()
    (drop / "rec-zzz.pdf").write_bytes(PDF_BYTES)  # nobody's record
    (drop / "rec-abc.pdf").write_bytes(b"not a document at all")
    merged = merge_drop_in(_one_record_set(rec), drop, tmp_path / "corpus")
    assert merged[0].records[0].availability == UNRESOLVED


def test_drop_in_accepts_plain_text(tmp_path):
    rec = record(rid="rec-abc")
    drop = tmp_path / "drop"
    drop.mkdir()
    (drop / "rec-abc.txt").write_text("hand delivered body " * 50)
    merged = merge_drop_in(_one_record_set(rec), drop, tmp_path / "corpus")
    assert merged[0].records[0].availability == AVAILABLE


def test_drop_in_only_raises_availability(tmp_path):
    recs = tuple(
        record(rid=f"rec-{i}", doi=f"10.1000/d{i}") for i in range(4)
    )
    sets = [SubmissionSet("U", "17", recs, GradeProfile(25, 25, 25, 25, 0), 4)]
    drop = tmp_path / "drop"
    drop.mkdir()
    before = availability_ratio(sets[0])
    for i in range(4):
        (drop / f"rec-{i}.txt").write_text("body words " * 40)
        sets = merge_drop_in(sets, drop, tmp_path / "corpus")
        after = availability_ratio(sets[0])
        assert after >= before
        before = after
    assert before == 1.0


# ── harvest_all ──────────────────────────────────────────────────────


def test_harvest_all_end_to_end(tmp_path):
    dois = [f"10.1000/p{i}" for i in range(3)]
    recs = tuple(record(rid=f"rec-{i}", doi=doi) for i, doi in enumerate(dois))
    sets = [SubmissionSet("U", "17", recs, GradeProfile(25, 25, 25, 25, 0), 3)]

    resolver_routes = {
        f"https://resolver.test/v2/{dois[0]}": FakeResponse(
            payload=oa_payload(dois[0], "https://oa.test/p0.pdf")
        ),
        f"https://resolver.test/v2/{dois[1]}": FakeResponse(payload=closed_payload(dois[1])),
        f"https://resolver.test/v2/{dois[2]}": FakeResponse(status_code=404),
    }
    client, _ = make_resolver(tmp_path, resolver_routes)
    fetch_session = FakeSession({"https://oa.test/p0.pdf": FakeResponse(content=PDF_BYTES)})

    harvested = harvest_all(
        sets, client, tmp_path / "corpus",
        session=fetch_session, limiter=instant_limiter(),
    )
    by_id = {r.record_id: r for r in harvested[0].records}
    assert by_id["rec-0"].availability == AVAILABLE
    assert by_id["rec-1"].availability == PAYWALLED
    assert by_id["rec-2"].availability == UNRESOLVED
    # The paywalled record's URL must never have been requested.
    assert fetch_session.calls == ["https://oa.test/p0.pdf"]


def test_harvest_all_rerun_is_idempotent(tmp_path):
    doi = "10.1000/p0"
    recs = (record(rid="rec-0", doi=doi),)
    sets = [SubmissionSet("U", "17", recs, GradeProfile(25, 25, 25, 25, 0), 1)]
    client, resolver_session = make_resolver(
        tmp_path,
        {f"https://resolver.test/v2/{doi}": FakeResponse(payload=oa_payload(doi, "https://oa.test/p0.pdf"))},
    )
    fetch_session = FakeSession({"https://oa.test/p0.pdf": FakeResponse(content=PDF_BYTES)})
    once = harvest_all(sets, client, tmp_path / "corpus", session=fetch_session, limiter=instant_limiter())
    again = harvest_all(once, client, tmp_path / "corpus", session=fetch_session, limiter=instant_limiter())
    assert again == once
    assert fetch_session.calls == ["https://oa.test/p0.pdf"]  # fetched exactly once
    assert resolver_session.calls == [f"https://resolver.test/v2/{doi}"]
