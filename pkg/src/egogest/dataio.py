"""Exact text serialization of datasets, checkpoints and reports.

Everything round-trips bit-exactly: frame records carry 17 significant
digits per number, JSON documents rely on shortest-round-trip float
repr, and writers emit canonical key order so identical data yields
identical bytes.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import asdict, dataclass

import numpy as np

from . import model as md
from .errors import MalformedRecord, ShapeMismatch, UnknownVersion, VersionMismatch
from .features import FeatureStats
from .kinematics import ActorProfile, LabeledSequence, SceneProfile
from .training import MetricsReport, SplitSpec, TrainConfig

DATASET_VERSION = 1
CHECKPOINT_VERSION = 1


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


# ---------------------------------------------------------------- datasets


def write_dataset(path: str, sequences: list[LabeledSequence], master_seed: int,
                  actors: list[ActorProfile], scenes: list[SceneProfile],
                  classes: list[int], noise_scale: float = 1.0) -> None:
    os.makedirs(path, exist_ok=True)
    entries = []
    for seq in sequences:
        fname = seq.seq_id + ".seq"
        entries.append(
            {
                "id": seq.seq_id,
                "actor_id": seq.actor_id,
                "scene": seq.scene,
                "gesture": int(seq.gesture),
                "file": fname,
                "frames": len(seq),
                "seed": int(seq.seed),
                "n_instances": int(seq.n_instances),
            }
        )
        with open(os.path.join(path, fname), "w", encoding="ascii", newline="\n") as fh:
            for k in range(len(seq)):
                fields = [str(k), _fmt(k / seq.frame_rate)]
                fields.extend(_fmt(v) for v in seq.world_p8[k])
                fields.extend(_fmt(v) for v in seq.eye_p8[k])
                fields.append(str(int(seq.labels[k])))
                fh.write(" ".join(fields) + "\n")
    manifest = {
        "format_version": DATASET_VERSION,
        "kind": "egogest-dataset",
        "master_seed": int(master_seed),
        "frame_rate": int(sequences[0].frame_rate) if sequences else 0,
        "noise_scale": float(noise_scale),
        "classes": [int(c) for c in classes],
        "actors": [asdict(a) for a in actors],
        "scenes": [asdict(s) for s in scenes],
        "sequences": entries,
    }
    with open(os.path.join(path, "manifest.json"), "w", encoding="ascii", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _parse_sequence_file(path: str, frame_rate: int, entry: dict) -> LabeledSequence:
    world, eye, labels = read_sequence_frames(path)
    if len(labels) != entry["frames"]:
        raise MalformedRecord(
            f"{path}: {len(labels)} frames, manifest declares {entry['frames']}"
        )
    return LabeledSequence(
        seq_id=entry["id"],
        frame_rate=frame_rate,
        actor_id=entry["actor_id"],
        scene=entry["scene"],
        gesture=entry["gesture"],
        seed=entry["seed"],
        world_p8=world,
        eye_p8=eye,
        labels=labels,
        n_instances=entry.get("n_instances", 0),
    )


def _parse_frame_lines(lines, origin: str):
    world, eye, labels = [], [], []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            raise MalformedRecord(f"{origin}:{lineno}: blank record")
        parts = line.split()
        if len(parts) != 19:
            raise MalformedRecord(
                f"{origin}:{lineno}: expected 19 fields, found {len(parts)}"
            )
        try:
            idx = int(parts[0])
            values = [float(p) for p in parts[1:18]]
            label = int(parts[18])
        except ValueError as exc:
            raise MalformedRecord(f"{origin}:{lineno}: {exc}") from None
        if idx != lineno - 1:
            raise MalformedRecord(f"{origin}:{lineno}: frame index {idx} out of order")
        world.append(values[1:9])
        eye.append(values[9:17])
        labels.append(label)
    return np.array(world), np.array(eye), np.array(labels, dtype=np.int64)


def read_sequence_frames(path: str):
    """Parse one line-delimited sequence file into (world, eye, labels)."""
    with open(path, "r", encoding="ascii") as fh:
        return _parse_frame_lines(fh, path)


def read_sequence_stream(fh):
    """Parse frame records from an open text stream (e.g. stdin)."""
    return _parse_frame_lines(fh, "<stream>")


def read_dataset(path: str):
    """Returns (manifest dict, [LabeledSequence])."""
    mpath = os.path.join(path, "manifest.json")
    with open(mpath, "r", encoding="ascii") as fh:
        try:
            manifest = json.load(fh)
        except json.JSONDecodeError as exc:
            raise MalformedRecord(f"{mpath}: {exc}") from None
    version = manifest.get("format_version")
    if version != DATASET_VERSION:
        raise UnknownVersion(f"{mpath}: unsupported dataset version {version!r}")
    sequences = []
    try:
        for entry in manifest["sequences"]:
            spath = os.path.join(path, entry["file"])
            if not os.path.exists(spath):
                raise FileNotFoundError(f"manifest references missing file {spath}")
            sequences.append(_parse_sequence_file(spath, manifest["frame_rate"], entry))
    except KeyError as exc:
        raise MalformedRecord(f"{mpath}: missing manifest field {exc}") from None
    return manifest, sequences


def manifest_actors(manifest: dict) -> list[ActorProfile]:
    return [ActorProfile(**a) for a in manifest["actors"]]


def manifest_scenes(manifest: dict) -> list[SceneProfile]:
    return [SceneProfile(**s) for s in manifest["scenes"]]


# -------------------------------------------------------------- checkpoints


@dataclass
class Checkpoint:
    config: TrainConfig
    class_ids: list[int]
    state: md.ModelState
    stats: FeatureStats
    best_epoch: int
    peak_val_accuracy: float


def _array_doc(arr: np.ndarray) -> dict:
    return {"shape": list(arr.shape), "data": [float(v) for v in arr.reshape(-1)]}


def _array_from_doc(doc: dict, name: str) -> np.ndarray:
    shape = tuple(doc["shape"])
    data = np.array(doc["data"], dtype=np.float64)
    if data.size != int(np.prod(shape)):
        raise ShapeMismatch(
            f"array {name}: {data.size} values for declared shape {shape}"
        )
    return data.reshape(shape)


def write_checkpoint(path: str, ckpt: Checkpoint) -> None:
    cfg = asdict(ckpt.config)
    cfg["split"] = asdict(ckpt.config.split)
    state = ckpt.state
    doc = {
        "format_version": CHECKPOINT_VERSION,
        "kind": "egogest-checkpoint",
        "config": cfg,
        "class_ids": [int(c) for c in ckpt.class_ids],
        "model": {
            "input_dim": state.input_dim,
            "hidden": state.hidden,
            "n_classes": state.n_classes,
            "feature_layout": state.feature_layout,
            "bn_momentum": state.bn.momentum,
            "bn_eps": state.bn.eps,
            "params": {name: _array_doc(p) for name, p in md.named_parameters(state)},
            "running_mean": _array_doc(state.bn.running_mean),
            "running_var": _array_doc(state.bn.running_var),
        },
        "feature_stats": {
            "mean": _array_doc(ckpt.stats.mean),
            "std": _array_doc(ckpt.stats.std),
        },
        "best_epoch": int(ckpt.best_epoch),
        "peak_val_accuracy": float(ckpt.peak_val_accuracy),
    }
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def read_checkpoint(path: str, expected_hidden: int | None = None) -> Checkpoint:
    with open(path, "r", encoding="ascii") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise MalformedRecord(f"{path}: {exc}") from None
    version = doc.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise VersionMismatch(f"{path}: unsupported checkpoint version {version!r}")
    try:
        return _checkpoint_from_doc(doc, expected_hidden)
    except KeyError as exc:
        raise MalformedRecord(f"{path}: missing checkpoint field {exc}") from None


def _checkpoint_from_doc(doc: dict, expected_hidden: int | None) -> Checkpoint:
    mdoc = doc["model"]
    hidden = int(mdoc["hidden"])
    if expected_hidden is not None and hidden != expected_hidden:
        raise ShapeMismatch(
            f"checkpoint hidden size {hidden} != expected {expected_hidden}"
        )
    d = int(mdoc["input_dim"])
    n = int(mdoc["n_classes"])
    params = {name: _array_from_doc(p, name) for name, p in mdoc["params"].items()}
    expected_shapes = {
        "bn.gamma": (d,),
        "bn.beta": (d,),
        "lstm.w_ih": (d, 4 * hidden),
        "lstm.w_hh": (hidden, 4 * hidden),
        "lstm.b": (4 * hidden,),
        "fc.w": (n, hidden),
        "fc.b": (n,),
    }
    for name, shape in expected_shapes.items():
        if name not in params:
            raise ShapeMismatch(f"checkpoint misses parameter {name}")
        if params[name].shape != shape:
            raise ShapeMismatch(
                f"parameter {name}: shape {params[name].shape}, expected {shape}"
            )
    bn = md.BatchNormState(
        gamma=params["bn.gamma"],
        beta=params["bn.beta"],
        running_mean=_array_from_doc(mdoc["running_mean"], "running_mean"),
        running_var=_array_from_doc(mdoc["running_var"], "running_var"),
        momentum=float(mdoc["bn_momentum"]),
        eps=float(mdoc["bn_eps"]),
    )
    state = md.ModelState(
        bn=bn,
        lstm=md.LstmParams(w_ih=params["lstm.w_ih"], w_hh=params["lstm.w_hh"],
                           b=params["lstm.b"]),
        fc=md.FcParams(w=params["fc.w"], b=params["fc.b"]),
        input_dim=d,
        hidden=hidden,
        n_classes=n,
        feature_layout=mdoc["feature_layout"],
    )
    cfg_doc = dict(doc["config"])
    cfg_doc["split"] = SplitSpec(**cfg_doc["split"])
    if cfg_doc.get("class_ids") is not None:
        cfg_doc["class_ids"] = tuple(cfg_doc["class_ids"])
    config = TrainConfig(**cfg_doc)
    stats = FeatureStats(
        mean=_array_from_doc(doc["feature_stats"]["mean"], "stats.mean"),
        std=_array_from_doc(doc["feature_stats"]["std"], "stats.std"),
    )
    return Checkpoint(
        config=config,
        class_ids=[int(c) for c in doc["class_ids"]],
        state=state,
        stats=stats,
        best_epoch=int(doc["best_epoch"]),
        peak_val_accuracy=float(doc["peak_val_accuracy"]),
    )


# ------------------------------------------------------------------ reports


def write_history_csv(path: str, history) -> None:
    with open(path, "w", encoding="ascii", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "train_loss", "val_accuracy", "lr"])
        for rec in history:
            w.writerow([rec.epoch, _fmt(rec.train_loss), _fmt(rec.val_accuracy), _fmt(rec.lr)])


def read_history_csv(path: str):
    with open(path, "r", encoding="ascii", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["epoch", "train_loss", "val_accuracy", "lr"]:
        raise MalformedRecord(f"{path}: bad history header")
    out = []
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != 4:
            raise MalformedRecord(f"{path}:{i}: expected 4 columns")
        out.append((int(row[0]), float(row[1]), float(row[2]), float(row[3])))
    return out


def write_confusion_csv(path: str, report: MetricsReport) -> None:
    with open(path, "w", encoding="ascii", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["true\\pred"] + report.class_names)
        for name, row in zip(report.class_names, report.confusion):
            w.writerow([name] + [int(v) for v in row])


def read_confusion_csv(path: str):
    with open(path, "r", encoding="ascii", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or not rows[0] or rows[0][0] != "true\\pred":
        raise MalformedRecord(f"{path}: bad confusion header")
    names = rows[0][1:]
    mat = np.array([[int(v) for v in row[1:]] for row in rows[1:]], dtype=np.int64)
    if mat.shape != (len(names), len(names)):
        raise MalformedRecord(f"{path}: confusion matrix is not square")
    return names, mat


def write_class_metrics_csv(path: str, report: MetricsReport) -> None:
    with open(path, "w", encoding="ascii", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["class", "precision", "recall", "f1", "support"])
        support = report.confusion.sum(axis=1)
        for i, name in enumerate(report.class_names):
            w.writerow([name, _fmt(report.precision[i]), _fmt(report.recall[i]),
                        _fmt(report.f1[i]), int(support[i])])


def write_time_diagram_csv(path: str, diagram) -> None:
    with open(path, "w", encoding="ascii", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frame", "true", "pred", "hit"])
        for i in range(len(diagram.frames)):
            w.writerow([int(diagram.frames[i]), int(diagram.true_labels[i]),
                        int(diagram.pred_labels[i]), int(diagram.hits[i])])


def write_runs_csv(path: str, runs_report) -> None:
    with open(path, "w", encoding="ascii", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["run", "seed", "peak_val_accuracy"])
        for i, (seed, peak) in enumerate(zip(runs_report.seeds, runs_report.peaks)):
            w.writerow([i, seed, _fmt(peak)])


def write_sweep_csv(path: str, rows) -> None:
    """rows: iterable of (axis, value, run, epoch, train_loss, val_accuracy)."""
    with open(path, "w", encoding="ascii", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["axis", "value", "run", "epoch", "train_loss", "val_accuracy"])
        for axis, value, run, epoch, loss, acc in rows:
            w.writerow([axis, value, run, epoch, _fmt(loss), _fmt(acc)])
