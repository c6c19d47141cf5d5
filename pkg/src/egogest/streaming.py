"""Online recognition: batched frame-pair features with majority voting.

Features are buffered in groups of K frame pairs; each full buffer runs
through the frozen model as one K-step sequence continuing from the
carried hidden state, which makes the streamed frame labels identical
to one offline pass over the whole sequence. A no-carry variant (fresh
state per batch) exists for comparison. Votes collapse each batch's K
frame labels into one robust output.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import model as md
from .errors import LayoutMismatch, LengthMismatch
from .features import FeatureStats, MotionFeature


def majority_vote(labels) -> int:
    """Most frequent label; ties go to the tied label seen latest."""
    labels = list(labels)
    if not labels:
        raise ValueError("empty vote window")
    counts: dict[int, int] = {}
    last_pos: dict[int, int] = {}
    for i, lab in enumerate(labels):
        lab = int(lab)
        counts[lab] = counts.get(lab, 0) + 1
        last_pos[lab] = i
    best = max(counts.values())
    tied = [lab for lab, c in counts.items() if c == best]
    return max(tied, key=lambda lab: last_pos[lab])


@dataclass
class BatchResult:
    start_frame: int
    frame_labels: np.ndarray  # (k,)
    voted_label: int
    probs: np.ndarray  # (k, N)
    elapsed: float


@dataclass
class StreamState:
    """Single-consumer online recognizer around a frozen model."""

    model: md.ModelState
    stats: FeatureStats
    k: int = 10
    carry: bool = True

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("vote window k must be >= 1")
        self._buffer: list[np.ndarray] = []
        self._h = np.zeros((1, self.model.hidden))
        self._c = np.zeros((1, self.model.hidden))
        self.frames_seen = 0
        self.frames_emitted = 0
        self.batch_times: list[float] = []
        self.frame_labels: list[int] = []
        self.frame_votes: list[int] = []  # per frame: its batch's vote

    def ingest(self, feature) -> BatchResult | None:
        """Buffer one frame-pair feature; runs the model on the K-th."""
        values = feature.values if isinstance(feature, MotionFeature) else np.asarray(feature)
        if values.shape != (self.model.input_dim,):
            raise LayoutMismatch(
                f"feature dim {values.shape} does not match model input {self.model.input_dim}"
            )
        self._buffer.append(np.asarray(values, dtype=np.float64))
        self.frames_seen += 1
        if len(self._buffer) == self.k:
            return self._run_batch()
        return None

    def flush(self) -> BatchResult | None:
        """Emit any residual frames (< K) as one short final batch."""
        if not self._buffer:
            return None
        return self._run_batch()

    def _run_batch(self) -> BatchResult:
        t0 = time.perf_counter()
        x = self.stats.normalize(np.stack(self._buffer))
        n = len(self._buffer)
        self._buffer.clear()
        if self.carry:
            labels, probs, h, c = md.predict_steps(self.model, x, self._h, self._c)
            self._h, self._c = h, c
        else:
            labels, probs, _, _ = md.predict_steps(self.model, x)
        elapsed = time.perf_counter() - t0
        vote = majority_vote(labels)
        start = self.frames_emitted
        self.frames_emitted += n
        self.batch_times.append(elapsed)
        self.frame_labels.extend(int(v) for v in labels)
        self.frame_votes.extend([vote] * n)
        return BatchResult(
            start_frame=start,
            frame_labels=labels,
            voted_label=vote,
            probs=probs,
            elapsed=elapsed,
        )


@dataclass
class TimeDiagram:
    """Per-frame hits/misses plus onset detection per gesture instance."""

    frames: np.ndarray  # (L,)
    true_labels: np.ndarray
    pred_labels: np.ndarray
    hits: np.ndarray  # bool, pred == true
    per_class_accuracy: dict[int, float]
    onsets: list[tuple[int, int, int, bool]]  # (class, start, end, detected)

    @property
    def accuracy(self) -> float:
        return float(self.hits.mean()) if len(self.hits) else 0.0

    def onset_detection_rate(self) -> float:
        if not self.onsets:
            return 0.0
        return sum(d for *_, d in self.onsets) / len(self.onsets)


def _label_runs(labels: np.ndarray):
    runs = []
    start = 0
    for i in range(1, len(labels) + 1):
        if i == len(labels) or labels[i] != labels[start]:
            runs.append((int(labels[start]), start, i))
            start = i
    return runs


def time_diagram(pred_labels, truth_labels, frame_votes=None,
                 frame_rate: int = 20) -> TimeDiagram:
    """Hit/miss per frame; an instance's onset counts as detected when a
    vote within its first second matches the true class."""
    pred = np.asarray(pred_labels, dtype=np.int64)
    truth = np.asarray(truth_labels, dtype=np.int64)
    if len(pred) != len(truth):
        raise LengthMismatch(f"{len(pred)} predictions vs {len(truth)} truth labels")
    votes = pred if frame_votes is None else np.asarray(frame_votes, dtype=np.int64)
    if len(votes) != len(truth):
        raise LengthMismatch("vote track length mismatch")
    hits = pred == truth
    per_class: dict[int, float] = {}
    for cls in np.unique(truth):
        mask = truth == cls
        per_class[int(cls)] = float(hits[mask].mean())
    onsets = []
    window = max(1, int(round(frame_rate)))  # first second of the instance
    for cls, start, end in _label_runs(truth):
        if cls == 0:
            continue
        upto = min(start + window, end)
        detected = bool(np.any(votes[start:upto] == cls))
        onsets.append((cls, start, end, detected))
    return TimeDiagram(
        frames=np.arange(len(truth)),
        true_labels=truth,
        pred_labels=pred,
        hits=hits,
        per_class_accuracy=per_class,
        onsets=onsets,
    )


@dataclass
class LatencyReport:
    mean: float
    p95: float
    n_batches: int
    k: int
    verdicts: dict[int, bool] = field(default_factory=dict)  # fps -> real-time?

    def budget(self, fps: int) -> float:
        return self.k / fps


def latency_report(stream: StreamState, rates=(10, 20, 30)) -> LatencyReport:
    """Wall-time stats per completed batch; PASS iff p95 < K/f."""
    if not stream.batch_times:
        raise ValueError("no completed batches to report on")
    times = np.asarray(stream.batch_times)
    p95 = float(np.percentile(times, 95))
    return LatencyReport(
        mean=float(times.mean()),
        p95=p95,
        n_batches=len(times),
        k=stream.k,
        verdicts={int(f): bool(p95 < stream.k / f) for f in rates},
    )


def run_stream(model: md.ModelState, stats: FeatureStats, feats: np.ndarray,
               k: int = 10, carry: bool = True) -> StreamState:
    """Feed a whole (L, D) feature matrix through a fresh stream."""
    stream = StreamState(model=model, stats=stats, k=k, carry=carry)
    for row in np.asarray(feats, dtype=np.float64):
        stream.ingest(row)
    stream.flush()
    return stream
