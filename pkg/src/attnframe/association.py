"""Loop-closure frame association over indexed descriptors.

Keyframes stream in timestamp order into a store backed by the k-means index.
Each query retrieves nearest neighbors outside a temporal exclusion window and
gates them with an adaptive threshold over the accepted-match distance
history: during warmup the gate accepts only distances at or below the median
of every candidate distance seen so far; afterwards it accepts distances
within mean + alpha * population-stddev of the accepted history.

Geometric verification of candidates is a pluggable hook; the default accepts
everything. Retrieval quality is scored against ground-truth poses with a
configurable positive-pair criterion (translation radius, rotation angle).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .evaluation import TrajectoryPose
from .kmeans_index import IndexParams, KMeansTree


class MissingGroundTruthError(ValueError):
    """Raised when retrieval scoring needs a ground-truth pose that is absent."""


@dataclass(frozen=True, eq=False)
class Keyframe:
    frame_id: int
    timestamp: float
    descriptor: np.ndarray
    gt_pose: Optional[TrajectoryPose] = None


@dataclass(frozen=True)
class AssociationConfig:
    temporal_exclusion_window: float = 30.0
    knn: int = 5
    alpha: float = 1.0
    warmup: int = 10

    def __post_init__(self):
        if self.temporal_exclusion_window < 0:
            raise ValueError("temporal_exclusion_window must be >= 0")
        if self.knn < 1:
            raise ValueError("knn must be >= 1")
        if self.warmup < 2:
            raise ValueError("warmup must be >= 2")


@dataclass
class CandidateMatch:
    query_id: int
    match_id: int
    distance: float
    accepted: bool
    threshold_at_decision: float
    tp: Optional[bool] = None


def adaptive_filter(
    history,
    candidate_distance: float,
    cfg: AssociationConfig,
    seen_distances=None,
) -> tuple[bool, float]:
    """Decide one candidate against the adaptive threshold.

    `history` holds previously accepted match distances. Below `cfg.warmup`
    accepted matches, the gate bootstraps: the threshold is the median of all
    candidate distances seen so far (the current one included), so
    `seen_distances` should carry every previously evaluated distance. From
    warmup onwards the threshold is mean(history) + alpha * stddev(history),
    with the population standard deviation.

    Returns (accepted, threshold); accepted means distance <= threshold.
    """
    history = list(history)
    if len(history) < cfg.warmup:
        pool = list(seen_distances) if seen_distances is not None else list(history)
        pool.append(candidate_distance)
        threshold = float(np.median(pool))
    else:
        mu = float(np.mean(history))
        sigma = float(np.std(history))
        threshold = mu + cfg.alpha * sigma
    return candidate_distance <= threshold, threshold


class AdaptiveGate:
    """Stateful wrapper around adaptive_filter tracking seen and accepted distances."""

    def __init__(self, cfg: AssociationConfig):
        self.cfg = cfg
        self.accepted: list[float] = []
        self.seen: list[float] = []

    def decide(self, distance: float) -> tuple[bool, float]:
        return adaptive_filter(self.accepted, distance, self.cfg, self.seen)

    def record(self, distance: float, accepted: bool) -> None:
        self.seen.append(distance)
        if accepted:
            self.accepted.append(distance)

    def evaluate(self, distance: float) -> tuple[bool, float]:
        accepted, threshold = self.decide(distance)
        self.record(distance, accepted)
        return accepted, threshold


class KeyframeStore:
    """Ordered keyframe registry with descriptor index and adaptive match gate.

    Single-writer/multi-reader: queries may run concurrently between
    insertions; insert requires exclusive access.
    """

    def __init__(
        self,
        config: AssociationConfig = AssociationConfig(),
        index_params: IndexParams = IndexParams(),
        verify_hook: Optional[Callable[[int, int], bool]] = None,
    ):
        self.config = config
        self.index = KMeansTree(index_params)
        self.keyframes: list[Keyframe] = []
        self.gate = AdaptiveGate(config)
        self.verify_hook = verify_hook
        self._timestamps: list[float] = []
        self._positions: dict[int, int] = {}

    def __len__(self) -> int:
        return len(self.keyframes)

    def insert(self, kf: Keyframe) -> None:
        if self.keyframes and kf.timestamp < self.keyframes[-1].timestamp:
            raise ValueError(
                f"frame {kf.frame_id}: timestamp {kf.timestamp} is older than the "
                f"latest stored timestamp {self.keyframes[-1].timestamp}"
            )
        if kf.frame_id in self._positions:
            raise ValueError(f"duplicate frame_id {kf.frame_id}")
        self.index.insert(kf.descriptor)
        self._positions[kf.frame_id] = len(self.keyframes)
        self.keyframes.append(kf)
        self._timestamps.append(kf.timestamp)

    def _excluded_count(self, timestamp: float) -> int:
        w = self.config.temporal_exclusion_window
        ts = self._timestamps
        lo = int(np.searchsorted(ts, timestamp - w, side="right"))
        hi = int(np.searchsorted(ts, timestamp + w, side="left"))
        return hi - lo

    def query(self, current: Keyframe) -> list[CandidateMatch]:
        """Retrieve and gate up to knn loop-closure candidates for `current`.

        Stored frames within the temporal exclusion window never appear in the
        result. Candidates are gated in ascending-distance order; every gated
        candidate is returned with its decision and threshold.
        """
        if not self.keyframes:
            return []
        cfg = self.config
        fetch = min(len(self.keyframes), cfg.knn + self._excluded_count(current.timestamp))
        result = self.index.search(current.descriptor, knn=fetch)
        matches: list[CandidateMatch] = []
        for pos, distance in result.matches:
            kf = self.keyframes[pos]
            if abs(kf.timestamp - current.timestamp) < cfg.temporal_exclusion_window:
                continue
            if len(matches) >= cfg.knn:
                break
            accepted, threshold = self.gate.decide(distance)
            if accepted and self.verify_hook is not None:
                accepted = bool(self.verify_hook(current.frame_id, kf.frame_id))
            self.gate.record(distance, accepted)
            matches.append(
                CandidateMatch(
                    query_id=current.frame_id,
                    match_id=kf.frame_id,
                    distance=distance,
                    accepted=accepted,
                    threshold_at_decision=threshold,
                )
            )
        return matches


@dataclass(frozen=True)
class QueryOutcome:
    query_id: int
    eligible: bool
    hit: bool


@dataclass(frozen=True)
class RetrievalReport:
    precision: float
    recall: float
    tp_count: int
    accepted_count: int
    eligible_queries: int
    satisfied_queries: int
    radius_m: float
    angle_deg: float
    degenerate_precision: bool
    degenerate_recall: bool
    per_query: list[QueryOutcome] = field(repr=False)


def _pose_positive(a: TrajectoryPose, b: TrajectoryPose, radius_m: float, angle_deg: float) -> bool:
    if np.linalg.norm(a.t - b.t) > radius_m:
        return False
    dot = abs(float(np.dot(a.q, b.q)))
    angle = 2.0 * math.degrees(math.acos(min(1.0, dot)))
    return angle <= angle_deg


def evaluate_retrieval(
    store: KeyframeStore,
    matches: list[CandidateMatch],
    radius_m: float = 1.0,
    angle_deg: float = 30.0,
) -> RetrievalReport:
    """Score accepted matches against ground-truth poses.

    A match is a true positive iff the two frames' ground-truth poses are
    within `radius_m` meters and `angle_deg` degrees. Precision is TP over
    accepted matches; recall counts queries that accepted at least one true
    positive over queries that had at least one admissible positive available
    (stored earlier, outside the temporal window, geometrically close).
    Degenerate zero denominators yield 1.0 with a flag. Also fills each
    match's `tp` field.
    """
    for kf in store.keyframes:
        if kf.gt_pose is None:
            raise MissingGroundTruthError(f"frame {kf.frame_id} has no ground-truth pose")

    by_id = {kf.frame_id: kf for kf in store.keyframes}
    position = {kf.frame_id: i for i, kf in enumerate(store.keyframes)}
    window = store.config.temporal_exclusion_window

    accepted_count = 0
    tp_count = 0
    hits: set[int] = set()
    for m in matches:
        q, c = by_id[m.query_id], by_id[m.match_id]
        m.tp = _pose_positive(q.gt_pose, c.gt_pose, radius_m, angle_deg)
        if m.accepted:
            accepted_count += 1
            if m.tp:
                tp_count += 1
                hits.add(m.query_id)

    per_query: list[QueryOutcome] = []
    eligible = 0
    satisfied = 0
    for i, q in enumerate(store.keyframes):
        has_positive = any(
            abs(c.timestamp - q.timestamp) >= window
            and _pose_positive(q.gt_pose, c.gt_pose, radius_m, angle_deg)
            for c in store.keyframes[:i]
        )
        hit = q.frame_id in hits
        per_query.append(QueryOutcome(query_id=q.frame_id, eligible=has_positive, hit=hit))
        if has_positive:
            eligible += 1
            if hit:
                satisfied += 1

    degenerate_precision = accepted_count == 0
    degenerate_recall = eligible == 0
    precision = 1.0 if degenerate_precision else tp_count / accepted_count
    recall = 1.0 if degenerate_recall else satisfied / eligible
    return RetrievalReport(
        precision=precision,
        recall=recall,
        tp_count=tp_count,
        accepted_count=accepted_count,
        eligible_queries=eligible,
        satisfied_queries=satisfied,
        radius_m=radius_m,
        angle_deg=angle_deg,
        degenerate_precision=degenerate_precision,
        degenerate_recall=degenerate_recall,
        per_query=per_query,
    )


def write_match_log(matches: list[CandidateMatch], destination: str | Path) -> None:
    """Emit the match log CSV: query_id, match_id, distance, threshold, accepted, tp_flag."""
    lines = ["query_id,match_id,distance,threshold,accepted,tp_flag"]
    for m in matches:
        tp_flag = "" if m.tp is None else ("1" if m.tp else "0")
        lines.append(
            f"{m.query_id},{m.match_id},{m.distance!r},{m.threshold_at_decision!r},"
            f"{1 if m.accepted else 0},{tp_flag}"
        )
    Path(destination).write_text("\n".join(lines) + "\n", encoding="utf-8")
