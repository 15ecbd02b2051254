"""Shared fixtures: hand-built events, a deterministic 50-event corpus, one pipeline run."""

from __future__ import annotations

import pytest

from temporal_memory import cli
from temporal_memory.events import (
    Event,
    EventStore,
    build_text_repr,
    coerce_timestamp,
    derive_event_id,
)


def build_event(
    ts: str,
    product: str = "",
    event_type: str = "",
    asset_id: str = "",
    msg: str = "",
    tech: tuple[str, ...] = (),
    attack: tuple[str, ...] = (),
    risk_tag: tuple[str, ...] = (),
    event_id: str = "",
) -> Event:
    instant = coerce_timestamp(ts)
    return Event(
        event_id=derive_event_id(instant, product, event_type, asset_id, msg, explicit_id=event_id),
        ts=instant,
        product=product,
        event_type=event_type,
        asset_id=asset_id,
        msg=msg,
        tech=tech,
        attack=attack,
        risk_tag=risk_tag,
        text_repr=build_text_repr(product, event_type, asset_id, msg, tech, attack, risk_tag),
    )


def store_of(events) -> EventStore:
    ordered = tuple(sorted(events, key=Event.sort_key))
    ids = [e.event_id for e in ordered]
    assert len(set(ids)) == len(ids), "fixture events must have unique ids"
    return EventStore(events=ordered)


# Deterministic 50-event corpus: five near-duplicate families at distinct
# timestamps plus distinct one-off lines, spread over seven weeks.
_CORPUS_TEMPLATES = [
    ("okta", "auth_fail", "idp-01", "mfa challenge denied for alice"),
    ("okta", "auth_fail", "idp-01", "password login blocked for bob"),
    ("dataplatform", "data_access", "dp-01", "bulk read from s3 bucket finance-data"),
    ("dataplatform", "data_access", "dp-01", "presigned url generated for s3 bucket raw-events"),
    ("nessus", "vuln_scan", "scan-01", "scan completed on subnet 10.20.0.0/24"),
]
_CORPUS_ONEOFFS = [
    ("vpn", "cert_expiry", "vpn-gw-01", "gateway certificate expiring soon"),
    ("mailsec", "phish_report", "mx-01", "credential harvesting campaign reported"),
    ("edr", "malware_quarantine", "ws-44", "trojan payload quarantined on endpoint"),
    ("opsmon", "ops_notice", "ops-01", "nightly backup job completed with warnings"),
    ("opsmon", "ops_notice", "ops-02", "dns resolution timeout observed for internal zone"),
]


def corpus_events() -> list[Event]:
    events = []
    day = 0
    for repeat in range(8):
        for product, event_type, asset, msg in _CORPUS_TEMPLATES:
            ts = f"2025-04-{(day % 28) + 1:02d}T{8 + repeat % 12:02d}:{(day * 7) % 60:02d}:00+00:00"
            events.append(build_event(ts, product, event_type, asset, msg))
            day += 1
    for i, (product, event_type, asset, msg) in enumerate(_CORPUS_ONEOFFS * 2):
        ts = f"2025-05-{i + 1:02d}T12:30:00+00:00"
        events.append(build_event(ts, product, event_type, asset, msg))
    return events[:50]


@pytest.fixture(scope="session")
def corpus_store() -> EventStore:
    return store_of(corpus_events())


@pytest.fixture(scope="session")
def pipeline_ws(tmp_path_factory):
    """One full CLI pipeline run (seed 7) shared by read-only tests."""
    ws = tmp_path_factory.mktemp("pipeline")
    code = cli.main(["--workspace", str(ws), "all", "--seed", "7"])
    assert code == 0
    return ws
