"""Training pipeline: snippets, rebalancing, optimizer, experiment runs.

A run is fully deterministic given (dataset, config): a single seeded
generator drives, in fixed order, the split permutation, the neutral
under-sampling, the weight initialization and the per-epoch shuffles.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, replace

import numpy as np

from . import features as ft
from . import model as md
from .errors import (
    InsufficientClassMembers,
    LabelOutOfRange,
    SequenceTooShort,
    ShapeMismatch,
    TrainingDiverged,
)
from .kinematics import CLASS_NAMES, GestureClass, LabeledSequence


@dataclass(frozen=True)
class SplitSpec:
    kind: str = "stratified"  # stratified | actor | scene
    train_fraction: float = 0.75
    actor_id: int | None = None
    train_scene: str | None = None

    def __post_init__(self):
        if self.kind not in ("stratified", "actor", "scene"):
            raise ValueError(f"unknown split kind {self.kind!r}")
        if self.kind == "stratified" and not (0.0 < self.train_fraction < 1.0):
            raise ValueError("train_fraction must lie in (0, 1)")
        if self.kind == "actor" and self.actor_id is None:
            raise ValueError("actor split needs actor_id")
        if self.kind == "scene" and self.train_scene not in ("indoor", "outdoor"):
            raise ValueError("scene split needs train_scene indoor|outdoor")

    @staticmethod
    def parse(text: str) -> "SplitSpec":
        if text == "stratified":
            return SplitSpec("stratified")
        if text.startswith("actor:"):
            return SplitSpec("actor", actor_id=int(text.split(":", 1)[1]))
        if text.startswith("scene:"):
            return SplitSpec("scene", train_scene=text.split(":", 1)[1])
        raise ValueError(f"cannot parse split spec {text!r}")


@dataclass(frozen=True)
class TrainConfig:
    snippet_len: int = 40
    overlap: int = 30
    batch_size: int = 32
    epochs: int = 30
    lr: float = 5e-4
    weight_decay: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    decoupled_decay: bool = True
    sched_factor: float = 0.5
    sched_patience: int = 3
    sched_min_lr: float = 1e-5
    sched_threshold: float = 1e-4
    undersample_ratio: float = 1.5
    split: SplitSpec = SplitSpec()
    seed: int = 0
    features: str = ft.LAYOUT_DESCRIPTOR16
    channels: str = "both"
    alpha_w: float = 1.0
    alpha_e: float = 1.0
    center_raw: bool = True
    hidden: int = 128
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5
    class_ids: tuple[int, ...] | None = None  # None: infer from the dataset
    binary_class: int | None = None  # two-class mode: Neutral vs this class

    def __post_init__(self):
        if not (0 <= self.overlap < self.snippet_len):
            raise ValueError("need 0 <= overlap < snippet_len")
        if self.batch_size < 1 or self.lr <= 0 or self.undersample_ratio <= 0:
            raise ValueError("batch_size >= 1, lr > 0 and undersample_ratio > 0 required")


@dataclass
class Snippet:
    features: np.ndarray  # (S, D) raw (unnormalized)
    labels: np.ndarray  # (S,) dense class indices
    seq_id: str
    start: int
    majority_label: int
    actor_id: int
    scene: str


def extract_snippets(feats: np.ndarray, labels: np.ndarray, snippet_len: int,
                     overlap: int, seq_id: str = "", actor_id: int = 0,
                     scene: str = "") -> list[Snippet]:
    """Windows of length S at stride S - O from frame 0; remainder dropped."""
    if not (0 <= overlap < snippet_len):
        raise ValueError("need 0 <= overlap < snippet_len")
    n = len(labels)
    if n < snippet_len:
        raise SequenceTooShort(f"{n} frames < snippet length {snippet_len}")
    stride = snippet_len - overlap
    out = []
    for start in range(0, n - snippet_len + 1, stride):
        window = labels[start : start + snippet_len]
        majority = int(np.bincount(window).argmax())
        out.append(
            Snippet(
                features=feats[start : start + snippet_len],
                labels=window,
                seq_id=seq_id,
                start=start,
                majority_label=majority,
                actor_id=actor_id,
                scene=scene,
            )
        )
    return out


def snippet_count(n_frames: int, snippet_len: int, overlap: int) -> int:
    if n_frames < snippet_len:
        return 0
    return (n_frames - snippet_len) // (snippet_len - overlap) + 1


def undersample_neutral(snippets: list[Snippet], ratio: float,
                        rng: np.random.Generator) -> list[Snippet]:
    """Discard neutral-majority snippets down to ratio x the mean count of
    the non-neutral-majority classes; order otherwise preserved."""
    if ratio <= 0:
        raise ValueError("ratio must be > 0")
    neutral_idx = [i for i, s in enumerate(snippets) if s.majority_label == 0]
    counts: dict[int, int] = {}
    for s in snippets:
        if s.majority_label != 0:
            counts[s.majority_label] = counts.get(s.majority_label, 0) + 1
    if not counts or not neutral_idx:
        return list(snippets)
    cap = int(ratio * (sum(counts.values()) / len(counts)))
    if len(neutral_idx) <= cap:
        return list(snippets)
    keep = set(rng.choice(neutral_idx, size=cap, replace=False).tolist())
    return [s for i, s in enumerate(snippets) if s.majority_label != 0 or i in keep]


def split_snippets(snippets: list[Snippet], spec: SplitSpec,
                   rng: np.random.Generator) -> tuple[list[Snippet], list[Snippet]]:
    if spec.kind == "stratified":
        by_class: dict[int, list[int]] = {}
        for i, s in enumerate(snippets):
            by_class.setdefault(s.majority_label, []).append(i)
        train_idx: list[int] = []
        for cls in sorted(by_class):
            idx = by_class[cls]
            if len(idx) < 2:
                raise InsufficientClassMembers(
                    f"class {cls} has {len(idx)} snippet(s), need >= 2"
                )
            perm = rng.permutation(len(idx))
            n_train = int(round(spec.train_fraction * len(idx)))
            n_train = min(max(n_train, 1), len(idx) - 1)
            train_idx.extend(idx[j] for j in perm[:n_train])
        train_set = set(train_idx)
        train = [s for i, s in enumerate(snippets) if i in train_set]
        val = [s for i, s in enumerate(snippets) if i not in train_set]
        return train, val
    if spec.kind == "actor":
        actors = {s.actor_id for s in snippets}
        if len(actors) < 2:
            raise InsufficientClassMembers("actor split needs >= 2 actors")
        if spec.actor_id not in actors:
            raise InsufficientClassMembers(f"no snippets for actor {spec.actor_id}")
        val = [s for s in snippets if s.actor_id == spec.actor_id]
        train = [s for s in snippets if s.actor_id != spec.actor_id]
        return train, val
    scenes = {s.scene for s in snippets}
    if len(scenes) < 2:
        raise InsufficientClassMembers("scene split needs both scene kinds")
    train = [s for s in snippets if s.scene == spec.train_scene]
    val = [s for s in snippets if s.scene != spec.train_scene]
    return train, val


class AdamState:
    """First/second moments per parameter plus the shared step counter."""

    def __init__(self, named_params):
        self.m = {name: np.zeros_like(p) for name, p in named_params}
        self.v = {name: np.zeros_like(p) for name, p in named_params}
        self.step = 0


def adam_step(named_params, grads: dict, adam: AdamState, lr: float,
              weight_decay: float = 0.0, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8, decoupled: bool = True) -> None:
    """Bias-corrected Adam update, in place. Weight decay is decoupled
    (param scaled before the Adam delta) unless decoupled=False, which
    folds it into the gradient instead."""
    adam.step += 1
    t = adam.step
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for name, p in named_params:
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeMismatch(f"gradient shape {g.shape} != param {p.shape} for {name}")
        if weight_decay and not decoupled:
            g = g + weight_decay * p
        if weight_decay and decoupled:
            p *= 1.0 - lr * weight_decay
        m = adam.m[name]
        v = adam.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


class PlateauScheduler:
    """Halve the learning rate when the validation metric stops improving."""

    def __init__(self, lr: float, factor: float = 0.5, patience: int = 3,
                 min_lr: float = 1e-5, threshold: float = 1e-4):
        self.lr = lr
        self.factor = factor
        self.patience = patience
        self.min_lr = min_lr
        self.threshold = threshold
        self.best = -np.inf
        self.bad_epochs = 0

    def step(self, metric: float) -> float:
        if metric > self.best + self.threshold:
            self.best = metric
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
            if self.bad_epochs > self.patience:
                self.lr = max(self.lr * self.factor, self.min_lr)
                self.bad_epochs = 0
        return self.lr


@dataclass
class MetricsReport:
    class_names: list[str]
    confusion: np.ndarray  # (N, N) counts, rows = true
    accuracy: float
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    n_frames: int

    @staticmethod
    def from_predictions(true: np.ndarray, pred: np.ndarray,
                         class_names: list[str]) -> "MetricsReport":
        n = len(class_names)
        conf = np.zeros((n, n), dtype=np.int64)
        np.add.at(conf, (true, pred), 1)
        tp = np.diag(conf).astype(np.float64)
        pred_tot = conf.sum(axis=0).astype(np.float64)
        true_tot = conf.sum(axis=1).astype(np.float64)
        with np.errstate(invalid="ignore", divide="ignore"):
            precision = np.where(pred_tot > 0, tp / pred_tot, 0.0)
            recall = np.where(true_tot > 0, tp / true_tot, 0.0)
            denom = precision + recall
            f1 = np.where(denom > 0, 2 * precision * recall / denom, 0.0)
        total = int(conf.sum())
        return MetricsReport(
            class_names=list(class_names),
            confusion=conf,
            accuracy=float(tp.sum() / total) if total else 0.0,
            precision=precision,
            recall=recall,
            f1=f1,
            n_frames=total,
        )


@dataclass
class PreparedData:
    class_ids: list[int]
    class_names: list[str]
    input_dim: int
    feature_layout: str
    train_x: np.ndarray  # (n_train, S, D) raw features
    train_y: np.ndarray  # (n_train, S)
    val_x: np.ndarray
    val_y: np.ndarray
    stats: ft.FeatureStats
    train_snippets: list[Snippet]
    val_snippets: list[Snippet]
    rng: np.random.Generator  # positioned after all preparation draws


def _dataset_class_ids(sequences, config: TrainConfig) -> list[int]:
    if config.binary_class is not None:
        return [int(GestureClass.NEUTRAL), int(config.binary_class)]
    if config.class_ids is not None:
        return sorted(int(c) for c in config.class_ids)
    present: set[int] = set()
    for seq in sequences:
        present.update(int(v) for v in np.unique(seq.labels))
    return sorted(present)


def prepare_data(sequences: list[LabeledSequence], config: TrainConfig) -> PreparedData:
    """Features, snippets, split, under-sampling and normalization stats.

    Deterministic for a given (dataset, config); train() continues with
    the returned generator so the whole run shares one seeded stream.
    """
    if not sequences:
        raise ValueError("dataset is empty")
    rng = np.random.default_rng(config.seed)
    class_ids = _dataset_class_ids(sequences, config)
    remap = {cid: i for i, cid in enumerate(class_ids)}
    if config.binary_class is not None:
        sequences = [s for s in sequences if s.gesture == config.binary_class]
        if not sequences:
            raise ValueError("no sequences of the requested binary class")

    snippets: list[Snippet] = []
    for seq in sequences:
        feats = ft.sequence_features(
            seq, layout=config.features, channels=config.channels,
            alpha_w=config.alpha_w, alpha_e=config.alpha_e,
            centered=config.center_raw,
        )
        unknown = set(int(v) for v in np.unique(seq.labels)) - set(remap)
        if unknown:
            raise LabelOutOfRange(
                f"{seq.seq_id} carries labels {sorted(unknown)} outside the "
                f"configured classes {class_ids}"
            )
        labels = np.array([remap[int(v)] for v in seq.labels], dtype=np.int64)
        snippets.extend(
            extract_snippets(feats, labels, config.snippet_len, config.overlap,
                             seq_id=seq.seq_id, actor_id=seq.actor_id, scene=seq.scene)
        )

    train, val = split_snippets(snippets, config.split, rng)
    train = undersample_neutral(train, config.undersample_ratio, rng)
    if not train or not val:
        raise InsufficientClassMembers("empty train or validation split")

    train_x = np.stack([s.features for s in train])
    train_y = np.stack([s.labels for s in train])
    val_x = np.stack([s.features for s in val])
    val_y = np.stack([s.labels for s in val])
    stats = ft.fit_stats(train_x.reshape(-1, train_x.shape[-1]))
    return PreparedData(
        class_ids=class_ids,
        class_names=[CLASS_NAMES[GestureClass(c)] for c in class_ids],
        input_dim=train_x.shape[-1],
        feature_layout=ft.feature_layout_tag(config.features, config.channels,
                                             config.alpha_w, config.alpha_e),
        train_x=train_x,
        train_y=train_y,
        val_x=val_x,
        val_y=val_y,
        stats=stats,
        train_snippets=train,
        val_snippets=val,
        rng=rng,
    )


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_accuracy: float
    lr: float


@dataclass
class TrainResult:
    state: md.ModelState  # best-epoch parameters
    stats: ft.FeatureStats
    config: TrainConfig
    class_ids: list[int]
    class_names: list[str]
    history: list[EpochRecord]
    peak_val_accuracy: float
    best_epoch: int
    val_report: MetricsReport  # snippet-level metrics of the best state


def _eval_snippet_accuracy(state: md.ModelState, x: np.ndarray, y: np.ndarray,
                           batch_size: int) -> tuple[float, np.ndarray]:
    preds = np.empty_like(y)
    for i in range(0, len(x), batch_size):
        logits, _ = md.forward(state, x[i : i + batch_size], mode="eval")
        preds[i : i + batch_size] = np.argmax(logits, axis=2)
    return float((preds == y).mean()), preds


def train(sequences: list[LabeledSequence], config: TrainConfig,
          prepared: PreparedData | None = None, verbose: bool = False) -> TrainResult:
    """Train on snippets, validate per epoch, keep the best-epoch state."""
    pre = prepared if prepared is not None else prepare_data(sequences, config)
    rng = pre.rng
    n_classes = len(pre.class_ids)
    state = md.init_model(rng, pre.input_dim, config.hidden, n_classes,
                          feature_layout=pre.feature_layout,
                          bn_momentum=config.bn_momentum, bn_eps=config.bn_eps)
    adam = AdamState(md.named_parameters(state))
    sched = PlateauScheduler(config.lr, config.sched_factor, config.sched_patience,
                             config.sched_min_lr, config.sched_threshold)

    train_x = pre.stats.normalize(pre.train_x.reshape(-1, pre.input_dim)).reshape(pre.train_x.shape)
    val_x = pre.stats.normalize(pre.val_x.reshape(-1, pre.input_dim)).reshape(pre.val_x.shape)

    history: list[EpochRecord] = []
    best_acc = -1.0
    best_state = state.clone()
    best_epoch = -1
    lr = config.lr
    for epoch in range(config.epochs):
        perm = rng.permutation(len(train_x))
        losses = []
        for i in range(0, len(perm), config.batch_size):
            sel = perm[i : i + config.batch_size]
            logits, cache = md.forward(state, train_x[sel], mode="train")
            loss, dlogits = md.nll_loss(logits, pre.train_y[sel])
            if not np.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}")
            grads, _ = md.backward(state, cache, dlogits)
            md.update_running_stats(state, cache)
            adam_step(md.named_parameters(state), grads, adam, lr,
                      weight_decay=config.weight_decay, beta1=config.beta1,
                      beta2=config.beta2, eps=config.adam_eps,
                      decoupled=config.decoupled_decay)
            losses.append(loss)
        val_acc, _ = _eval_snippet_accuracy(state, val_x, pre.val_y, config.batch_size)
        history.append(EpochRecord(epoch, float(np.mean(losses)), val_acc, lr))
        if verbose:
            print(f"epoch {epoch:3d} loss {np.mean(losses):.4f} "
                  f"val {val_acc:.4f} lr {lr:.2e}", file=sys.stderr)
        if val_acc > best_acc:
            best_acc = val_acc
            best_state = state.clone()
            best_epoch = epoch
        lr = sched.step(val_acc)

    _, preds = _eval_snippet_accuracy(best_state, val_x, pre.val_y, config.batch_size)
    report = MetricsReport.from_predictions(pre.val_y.reshape(-1), preds.reshape(-1),
                                            pre.class_names)
    return TrainResult(
        state=best_state,
        stats=pre.stats,
        config=config,
        class_ids=pre.class_ids,
        class_names=pre.class_names,
        history=history,
        peak_val_accuracy=best_acc,
        best_epoch=best_epoch,
        val_report=report,
    )


def derive_seeds(master: int, n: int) -> list[int]:
    return [int(s) for s in np.random.SeedSequence(master).generate_state(n)]


@dataclass
class RunsReport:
    peaks: list[float]
    seeds: list[int]

    @property
    def max(self) -> float:
        return float(np.max(self.peaks))

    @property
    def mean(self) -> float:
        return float(np.mean(self.peaks))

    @property
    def std(self) -> float:
        return float(np.std(self.peaks))

    def quartiles(self) -> tuple[float, float, float]:
        q = np.percentile(self.peaks, [25, 50, 75])
        return float(q[0]), float(q[1]), float(q[2])


def repeat_runs(sequences: list[LabeledSequence], config: TrainConfig, n: int = 30,
                verbose: bool = False) -> tuple[RunsReport, list[TrainResult]]:
    """n independent runs with seeds derived from config.seed."""
    if n < 1:
        raise ValueError("need n >= 1")
    seeds = derive_seeds(config.seed, n)
    results = []
    for i, seed in enumerate(seeds):
        res = train(sequences, replace(config, seed=seed), verbose=verbose)
        if verbose:
            print(f"run {i}: peak {res.peak_val_accuracy:.4f}", file=sys.stderr)
        results.append(res)
    return RunsReport(peaks=[r.peak_val_accuracy for r in results], seeds=seeds), results


def evaluate(result_state: md.ModelState, stats: ft.FeatureStats,
             sequences: list[LabeledSequence], config: TrainConfig,
             class_ids: list[int]):
    """Frame-wise evaluation over whole sequences (hidden state carried
    within each sequence). Returns (MetricsReport, {seq_id: predictions})."""
    remap = {cid: i for i, cid in enumerate(class_ids)}
    names = [CLASS_NAMES[GestureClass(c)] for c in class_ids]
    all_true: list[np.ndarray] = []
    all_pred: list[np.ndarray] = []
    per_seq: dict[str, np.ndarray] = {}
    for seq in sequences:
        feats = ft.sequence_features(
            seq, layout=config.features, channels=config.channels,
            alpha_w=config.alpha_w, alpha_e=config.alpha_e,
            centered=config.center_raw,
        )
        x = stats.normalize(feats)
        labels, _ = md.predict_framewise(result_state, x)
        truth = np.array([remap[int(v)] for v in seq.labels], dtype=np.int64)
        all_true.append(truth)
        all_pred.append(labels)
        per_seq[seq.seq_id] = labels
    report = MetricsReport.from_predictions(
        np.concatenate(all_true), np.concatenate(all_pred), names
    )
    return report, per_seq
