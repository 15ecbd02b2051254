"""Time-aware retrieval: as-of snapshot filtering and recency-fused ranking.

Every surviving document is scored exhaustively; there is no candidate
pruning, so ranking equals brute-force score-then-sort by construction.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np

from .embedding import VectorStore
from .events import Event, EventStore

SECONDS_PER_DAY = 86400.0

MODES = ("fused", "cosine_only")


@dataclass(frozen=True)
class RetrievalParams:
    alpha: float = 0.7
    half_life_days: float = 14.0
    top_k: int = 10
    now: datetime | None = None  # None = wall clock at call time

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.half_life_days <= 0:
            raise ValueError(f"half_life_days must be positive, got {self.half_life_days}")

    def resolved_now(self) -> datetime:
        return self.now if self.now is not None else datetime.now(timezone.utc)


@dataclass(frozen=True)
class RankedHit:
    event_id: str
    ts: datetime
    cosine_sim: float
    age_days: float
    recency_weight: float
    fused: float

    def to_json(self) -> str:
        return json.dumps(
            {
                "event_id": self.event_id,
                "ts": self.ts.isoformat(),
                "cosine_sim": self.cosine_sim,
                "age_days": self.age_days,
                "recency_weight": self.recency_weight,
                "fused": self.fused,
            },
            separators=(",", ":"),
        )


def age_days(now: datetime, t: datetime) -> float:
    """Age of t relative to now in fractional days; future timestamps clamp to 0."""
    delta = (now - t).total_seconds() / SECONDS_PER_DAY
    if delta < 0:
        warnings.warn(f"future-dated timestamp {t.isoformat()} clamped to age 0", stacklevel=2)
        return 0.0
    return delta


def recency_weight(age: float, half_life_days: float) -> float:
    return 0.5 ** (age / half_life_days)


def fused_score(cos_sim: float, age: float, params: RetrievalParams) -> float:
    """Convex blend of semantic similarity and the half-life recency weight."""
    return params.alpha * cos_sim + (1.0 - params.alpha) * recency_weight(age, params.half_life_days)


def as_of_filter(store: EventStore, cutoff: datetime) -> list[Event]:
    """Exactly the events with ts <= cutoff, order preserved."""
    return [e for e in store if e.ts <= cutoff]


def rank(
    query_vec: np.ndarray,
    store: EventStore,
    vecs: VectorStore,
    params: RetrievalParams | None = None,
    mode: str = "fused",
    as_of: datetime | None = None,
) -> list[RankedHit]:
    """Score every (optionally as-of filtered) event and return the top-k.

    Sort order is (score desc, ts desc, event_id asc); fused mode ranks by
    the blended score, cosine_only by similarity alone.
    """
    params = params or RetrievalParams()
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    query = np.asarray(query_vec, dtype=np.float32)
    if query.shape != (vecs.dim,):
        raise ValueError(f"query dim {query.shape} does not match store dim {vecs.dim}")
    qnorm = float(np.linalg.norm(query))
    if qnorm == 0.0:
        raise ValueError("query vector has zero norm")

    events = list(store)
    indices = [i for i, e in enumerate(events) if as_of is None or e.ts <= as_of]
    if not indices:
        return []

    now = params.resolved_now()
    matrix = vecs.float32()[indices]
    norms = np.linalg.norm(matrix, axis=1)
    cos = (matrix @ query) / (norms * qnorm)

    ages = np.array(
        [(now - events[i].ts).total_seconds() / SECONDS_PER_DAY for i in indices], dtype=np.float64
    )
    future = int((ages < 0).sum())
    if future:
        warnings.warn(f"{future} future-dated events clamped to age 0", stacklevel=2)
        np.maximum(ages, 0.0, out=ages)
    weights = 0.5 ** (ages / params.half_life_days)
    fused = params.alpha * cos.astype(np.float64) + (1.0 - params.alpha) * weights

    hits = []
    for pos, idx in enumerate(indices):
        event = events[idx]
        hit = RankedHit(
            event_id=event.event_id,
            ts=event.ts,
            cosine_sim=float(cos[pos]),
            age_days=float(ages[pos]),
            recency_weight=float(weights[pos]),
            fused=float(fused[pos]),
        )
        score = hit.fused if mode == "fused" else hit.cosine_sim
        hits.append((-score, -event.ts.timestamp(), event.event_id, hit))
    hits.sort(key=lambda item: item[:3])
    return [hit for *_, hit in hits[: params.top_k]]
