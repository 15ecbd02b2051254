"""As-of filtering, fused scoring, and ranking against a brute-force oracle."""

from __future__ import annotations

import math
from datetime import datetime, timedelta, timezone

import numpy as np
import pytest
from hypothesis import given, strategies as st

from temporal_memory.embedding import HashEmbedder, encode_store
from temporal_memory.retrieval import (
    RetrievalParams,
    age_days,
    as_of_filter,
    fused_score,
    rank,
    recency_weight,
)

from conftest import corpus_events, store_of

UTC = timezone.utc
NOW = datetime(2025, 6, 30, tzinfo=UTC)


class TestAgeDays:
    def test_zero_age(self):
        assert age_days(NOW, NOW) == 0.0

    def test_thirty_six_hours(self):
        assert age_days(NOW, NOW - timedelta(hours=36)) == pytest.approx(1.5)

    def test_future_clamps_with_warning(self):
        with pytest.warns(UserWarning, match="clamped"):
            assert age_days(NOW, NOW + timedelta(hours=1)) == 0.0


class TestFusedScore:
    def test_maximal_both_terms(self):
        for alpha in (0.0, 0.3, 0.7, 1.0):
            params = RetrievalParams(alpha=alpha, half_life_days=14)
            assert fused_score(1.0, 0.0, params) == pytest.approx(1.0)

    def test_hand_computed_blend(self):
        params = RetrievalParams(alpha=0.7, half_life_days=14)
        assert fused_score(0.8, 14.0, params) == pytest.approx(0.71, abs=1e-12)

    def test_alpha_one_degenerates_to_cosine(self):
        params = RetrievalParams(alpha=1.0)
        for cos in (-0.5, 0.0, 0.25, 0.99):
            assert fused_score(cos, 37.0, params) == cos

    def test_half_life_halves_the_weight(self):
        assert recency_weight(14.0, 14.0) == pytest.approx(0.5)
        assert recency_weight(28.0, 14.0) == pytest.approx(0.25)

    # Strictness is asserted over gaps large enough to be representable next
    # to the other term; sub-ulp differences are below what float64 can carry.
    @given(
        cos=st.floats(-1, 1),
        age1=st.floats(0, 120),
        gap=st.floats(0.01, 50),
        alpha=st.floats(0, 0.99),
        h=st.floats(7, 30),
    )
    def test_older_never_scores_higher_at_fixed_cosine(self, cos, age1, gap, alpha, h):
        params = RetrievalParams(alpha=alpha, half_life_days=h)
        assert fused_score(cos, age1, params) > fused_score(cos, age1 + gap, params)

    @given(
        cos1=st.floats(-1, 1 - 1e-6),
        gap=st.floats(1e-6, 2),
        age=st.floats(0, 120),
        alpha=st.floats(0.01, 1),
        h=st.floats(7, 30),
    )
    def test_similarity_always_helps_at_fixed_age(self, cos1, gap, age, alpha, h):
        params = RetrievalParams(alpha=alpha, half_life_days=h)
        hi = min(1.0, cos1 + gap)
        assert fused_score(cos1, age, params) < fused_score(hi, age, params)

    def test_params_validation(self):
        with pytest.raises(ValueError):
            RetrievalParams(alpha=1.2)
        with pytest.raises(ValueError):
            RetrievalParams(half_life_days=0)


@pytest.fixture(scope="module")
def indexed_corpus():
    store = store_of(corpus_events())
    vecs = encode_store(store, HashEmbedder(dim=384))
    return store, vecs


class TestAsOfFilter:
    def test_cutoff_before_first_event_is_empty(self, indexed_corpus):
        store, _ = indexed_corpus
        assert as_of_filter(store, store.events[0].ts - timedelta(seconds=1)) == []

    def test_cutoff_at_last_event_keeps_everything(self, indexed_corpus):
        store, _ = indexed_corpus
        assert len(as_of_filter(store, store.events[-1].ts)) == len(store)

    def test_mid_stream_cutoff_matches_brute_force(self, indexed_corpus):
        store, _ = indexed_corpus
        cutoff = store.events[len(store) // 2].ts
        expected = [e.event_id for e in store.events if e.ts <= cutoff]
        got = [e.event_id for e in as_of_filter(store, cutoff)]
        assert got == expected

    @given(st.integers(0, 49))
    def test_every_survivor_is_on_or_before_cutoff(self, idx):
        events = corpus_events()
        store = store_of(events)
        cutoff = store.events[idx].ts
        assert all(e.ts <= cutoff for e in as_of_filter(store, cutoff))


def brute_force_rank(query_vec, store, vecs, params, mode, as_of=None):
    """Independent oracle: pure-Python scoring and selection sort."""
    rows = [[float(x) for x in row] for row in vecs.float32()]
    qlist = [float(x) for x in query_vec]
    qnorm = math.sqrt(sum(x * x for x in qlist))
    scored = []
    for event, row in zip(store, rows):
        if as_of is not None and event.ts > as_of:
            continue
        dot = sum(a * b for a, b in zip(qlist, row))
        norm = math.sqrt(sum(x * x for x in row))
        cos = dot / (norm * qnorm)
        age = max(0.0, (params.resolved_now() - event.ts).total_seconds() / 86400.0)
        fused = params.alpha * cos + (1 - params.alpha) * 0.5 ** (age / params.half_life_days)
        scored.append((event.event_id, event.ts, cos, fused))
    picked = []
    remaining = list(scored)
    while remaining and len(picked) < params.top_k:
        best = remaining[0]
        for cand in remaining[1:]:
            b_score = best[3] if mode == "fused" else best[2]
            c_score = cand[3] if mode == "fused" else cand[2]
            if (c_score, cand[1], _neg_id(cand[0])) > (b_score, best[1], _neg_id(best[0])):
                best = cand
        picked.append(best)
        remaining.remove(best)
    return picked


def _neg_id(event_id: str):
    # invert lexicographic order so "greater" tuples mean "ranks earlier"
    return tuple(-b for b in event_id.encode())


class TestRank:
    def test_equal_cosine_newer_wins_under_fused(self):
        old = datetime(2025, 4, 1, tzinfo=UTC)
        new = datetime(2025, 6, 1, tzinfo=UTC)
        events = []
        from conftest import build_event

        events.append(build_event(old.isoformat(), "okta", "auth_fail", msg="mfa denied"))
        events.append(build_event(new.isoformat(), "okta", "auth_fail", msg="mfa denied"))
        store = store_of(events)
        vecs = encode_store(store, HashEmbedder(dim=64))
        params = RetrievalParams(alpha=0.7, now=NOW, top_k=5)
        hits = rank(HashEmbedder(dim=64).embed("okta auth_fail mfa denied"), store, vecs, params)
        assert hits[0].ts == new
        assert hits[0].cosine_sim == pytest.approx(hits[1].cosine_sim)

    def test_alpha_one_equals_cosine_only(self, indexed_corpus):
        store, vecs = indexed_corpus
        rng = np.random.default_rng(17)
        params = RetrievalParams(alpha=1.0, now=NOW, top_k=len(store))
        for _ in range(20):
            q = rng.standard_normal(384).astype(np.float32)
            q /= np.linalg.norm(q)
            fused_ids = [h.event_id for h in rank(q, store, vecs, params, mode="fused")]
            cos_ids = [h.event_id for h in rank(q, store, vecs, params, mode="cosine_only")]
            assert fused_ids == cos_ids

    def test_matches_brute_force_oracle(self, indexed_corpus):
        store, vecs = indexed_corpus
        embedder = HashEmbedder(dim=384)
        params = RetrievalParams(alpha=0.7, half_life_days=14, top_k=10, now=NOW)
        for text in ("okta auth_fail mfa challenge denied for alice",
                     "bulk read from s3 bucket finance-data",
                     "gateway certificate expiring soon"):
            q = embedder.embed(text)
            for mode in ("fused", "cosine_only"):
                hits = rank(q, store, vecs, params, mode=mode)
                oracle = brute_force_rank(q, store, vecs, params, mode)
                assert [h.event_id for h in hits] == [o[0] for o in oracle]
                for hit, (eid, ts, cos, fused) in zip(hits, oracle):
                    assert hit.cosine_sim == pytest.approx(cos, abs=1e-5)
                    assert hit.fused == pytest.approx(fused, abs=1e-5)

    def test_oracle_agreement_under_as_of(self, indexed_corpus):
        store, vecs = indexed_corpus
        cutoff = store.events[30].ts
        params = RetrievalParams(alpha=0.7, now=NOW, top_k=10)
        q = HashEmbedder(dim=384).embed("scan completed on subnet")
        hits = rank(q, store, vecs, params, as_of=cutoff)
        oracle = brute_force_rank(q, store, vecs, params, "fused", as_of=cutoff)
        assert [h.event_id for h in hits] == [o[0] for o in oracle]
        assert all(h.ts <= cutoff for h in hits)

    def test_hit_fields_satisfy_their_definitions(self, indexed_corpus):
        store, vecs = indexed_corpus
        params = RetrievalParams(alpha=0.7, half_life_days=14, now=NOW, top_k=10)
        hits = rank(HashEmbedder(dim=384).embed("okta auth_fail"), store, vecs, params)
        for hit in hits:
            assert hit.recency_weight == 0.5 ** (hit.age_days / 14)
            assert hit.fused == 0.7 * hit.cosine_sim + 0.3 * hit.recency_weight
            assert hit.age_days >= 0

    def test_empty_result_when_cutoff_precedes_stream(self, indexed_corpus):
        store, vecs = indexed_corpus
        cutoff = store.events[0].ts - timedelta(days=1)
        q = HashEmbedder(dim=384).embed("anything")
        assert rank(q, store, vecs, RetrievalParams(now=NOW), as_of=cutoff) == []

    def test_dim_mismatch_rejected(self, indexed_corpus):
        store, vecs = indexed_corpus
        with pytest.raises(ValueError):
            rank(np.ones(7, dtype=np.float32), store, vecs)

    def test_zero_query_rejected(self, indexed_corpus):
        store, vecs = indexed_corpus
        with pytest.raises(ValueError):
            rank(np.zeros(384, dtype=np.float32), store, vecs)

    def test_bad_mode_rejected(self, indexed_corpus):
        store, vecs = indexed_corpus
        with pytest.raises(ValueError):
            rank(np.ones(384, dtype=np.float32), store, vecs, mode="hybrid")

    def test_future_events_warn_and_clamp(self, indexed_corpus):
        store, vecs = indexed_corpus
        early_now = store.events[10].ts  # later events are "future" from here
        params = RetrievalParams(now=early_now, top_k=len(store))
        with pytest.warns(UserWarning, match="clamped"):
            hits = rank(HashEmbedder(dim=384).embed("okta"), store, vecs, params)
        assert all(h.age_days >= 0 for h in hits)

    def test_top_k_truncates(self, indexed_corpus):
        store, vecs = indexed_corpus
        q = HashEmbedder(dim=384).embed("okta auth_fail")
        assert len(rank(q, store, vecs, RetrievalParams(top_k=3, now=NOW))) == 3
