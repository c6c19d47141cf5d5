"""Command-line operator surface.

Exit codes: 0 success, 1 check failure, 2 usage, 3 IO/parse failure,
4 training divergence, 5 incompatibility (shapes/versions/layouts).
Progress goes to stderr; data and results go to stdout.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from dataclasses import replace

import numpy as np

from . import dataio, streaming
from . import features as ft
from . import kinematics as kin
from . import model as md
from . import training as tr
from .errors import (
    IncompatibleRate,
    LabelOutOfRange,
    LayoutMismatch,
    MalformedRecord,
    ShapeMismatch,
    TrainingDiverged,
    UnknownVersion,
    VersionMismatch,
)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_DIVERGED = 4
EXIT_INCOMPATIBLE = 5


def _progress(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


def _classes_for(n: int):
    return kin.NON_NEUTRAL if n == 6 else kin.NON_NEUTRAL[:4]


def _actor_profiles(n: int):
    base = kin.default_actors()
    return [replace(base[i % len(base)], actor_id=i) for i in range(n)]


def cmd_gen(args) -> int:
    classes = _classes_for(args.classes)
    actors = _actor_profiles(args.actors)
    scenes = kin.default_scenes()
    sequences = kin.synthesize_dataset(
        actors=actors, scenes=scenes, frame_rate=args.fps, seed=args.seed,
        classes=classes, noise_scale=args.noise_scale,
    )
    dataio.write_dataset(args.out, sequences, master_seed=args.seed,
                         actors=actors, scenes=scenes,
                         classes=[int(c) for c in classes],
                         noise_scale=args.noise_scale)
    total = sum(len(s) for s in sequences)
    print(f"sequences {len(sequences)} frames {total} "
          f"duration_s {total / args.fps:g} fps {args.fps}")
    counts = {int(c): 0 for c in (kin.GestureClass.NEUTRAL, *classes)}
    instances = {int(c): 0 for c in classes}
    for seq in sequences:
        for v, n in zip(*np.unique(seq.labels, return_counts=True)):
            counts[int(v)] += int(n)
        instances[seq.gesture] += seq.n_instances
    for cid, n in sorted(counts.items()):
        name = kin.CLASS_NAMES[kin.GestureClass(cid)]
        line = f"class {name} share {n / total:.4f}"
        if cid in instances:
            line += f" instances {instances[cid]}"
        print(line)
    return EXIT_OK


def _config_from_args(args) -> tr.TrainConfig:
    binary = None
    if getattr(args, "binary", None):
        binary = int(kin.NAME_TO_CLASS[args.binary])
    return tr.TrainConfig(
        epochs=args.epochs,
        lr=args.lr,
        split=tr.SplitSpec.parse(args.split),
        seed=args.seed,
        features=args.features,
        channels=args.channels,
        alpha_w=args.alpha_w,
        alpha_e=args.alpha_e,
        hidden=args.hidden,
        binary_class=binary,
        snippet_len=args.snippet_len,
        overlap=args.overlap,
    )


def _result_checkpoint(res: tr.TrainResult) -> dataio.Checkpoint:
    return dataio.Checkpoint(
        config=res.config,
        class_ids=res.class_ids,
        state=res.state,
        stats=res.stats,
        best_epoch=res.best_epoch,
        peak_val_accuracy=res.peak_val_accuracy,
    )


def cmd_train(args) -> int:
    _, sequences = dataio.read_dataset(args.data)
    config = _config_from_args(args)
    if args.repeats > 1:
        report, results = tr.repeat_runs(sequences, config, args.repeats, verbose=args.verbose)
        best = results[int(np.argmax(report.peaks))]
        dataio.write_checkpoint(args.out, _result_checkpoint(best))
        dataio.write_runs_csv(args.out + ".runs.csv", report)
        dataio.write_history_csv(args.out + ".history.csv", best.history)
        q1, q2, q3 = report.quartiles()
        print(f"runs {args.repeats} max {report.max:.6f} mean {report.mean:.6f} "
              f"std {report.std:.6f} quartiles {q1:.6f} {q2:.6f} {q3:.6f}")
    else:
        res = tr.train(sequences, config, verbose=args.verbose)
        dataio.write_checkpoint(args.out, _result_checkpoint(res))
        dataio.write_history_csv(args.out + ".history.csv", res.history)
        print(f"peak_val_accuracy {res.peak_val_accuracy:.6f} best_epoch {res.best_epoch}")
    return EXIT_OK


def cmd_eval(args) -> int:
    ckpt = dataio.read_checkpoint(args.ckpt)
    _, sequences = dataio.read_dataset(args.data)
    config = replace(ckpt.config, class_ids=tuple(ckpt.class_ids))
    pre = tr.prepare_data(sequences, config)
    if pre.input_dim != ckpt.state.input_dim:
        raise ShapeMismatch(
            f"dataset features ({pre.input_dim}) do not match checkpoint "
            f"input dim ({ckpt.state.input_dim})"
        )
    val_x = ckpt.stats.normalize(
        pre.val_x.reshape(-1, pre.input_dim)
    ).reshape(pre.val_x.shape)
    acc, preds = tr._eval_snippet_accuracy(ckpt.state, val_x, pre.val_y,
                                           config.batch_size)
    report = tr.MetricsReport.from_predictions(
        pre.val_y.reshape(-1), preds.reshape(-1), pre.class_names
    )

    os.makedirs(args.report, exist_ok=True)
    dataio.write_confusion_csv(os.path.join(args.report, "confusion.csv"), report)
    dataio.write_class_metrics_csv(os.path.join(args.report, "classes.csv"), report)

    # time diagrams over whole sequences (the held-out ones when the
    # split is sequence-granular, every sequence otherwise)
    if config.split.kind == "stratified":
        diagram_seqs = sequences
    else:
        val_ids = {s.seq_id for s in pre.val_snippets}
        diagram_seqs = [s for s in sequences if s.seq_id in val_ids]
    _, per_seq = tr.evaluate(ckpt.state, ckpt.stats, diagram_seqs, config,
                             ckpt.class_ids)
    remap = {cid: i for i, cid in enumerate(ckpt.class_ids)}
    for seq in diagram_seqs:
        truth = np.array([remap[int(v)] for v in seq.labels])
        diag = streaming.time_diagram(per_seq[seq.seq_id], truth,
                                      frame_rate=seq.frame_rate)
        dataio.write_time_diagram_csv(
            os.path.join(args.report, f"diagram_{seq.seq_id}.csv"), diag
        )
    print(f"val_accuracy {acc:.6f} frames {report.n_frames}")
    return EXIT_OK


def cmd_stream(args) -> int:
    ckpt = dataio.read_checkpoint(args.ckpt)
    if args.data == "-":
        world, eye, labels = dataio.read_sequence_stream(sys.stdin)
    else:
        world, eye, labels = dataio.read_sequence_frames(args.data)
    seq = kin.LabeledSequence(
        seq_id="stream", frame_rate=args.fps, actor_id=0, scene="indoor",
        gesture=0, seed=0, world_p8=world, eye_p8=eye, labels=labels,
    )
    cfg = ckpt.config
    feats = ft.sequence_features(seq, layout=cfg.features, channels=cfg.channels,
                                 alpha_w=cfg.alpha_w, alpha_e=cfg.alpha_e,
                                 centered=cfg.center_raw)
    if feats.shape[1] != ckpt.state.input_dim:
        raise ShapeMismatch("stream feature dim does not match checkpoint")
    stream = streaming.StreamState(model=ckpt.state, stats=ckpt.stats,
                                   k=args.k, carry=not args.no_carry)
    names = [kin.CLASS_NAMES[kin.GestureClass(c)] for c in ckpt.class_ids]
    batch_no = 0
    for row in feats:
        res = stream.ingest(row)
        if res is not None:
            print(f"batch {batch_no} frames {res.start_frame}.."
                  f"{res.start_frame + len(res.frame_labels) - 1} "
                  f"vote {names[res.voted_label]}", flush=True)
            batch_no += 1
    res = stream.flush()
    if res is not None:
        print(f"batch {batch_no} frames {res.start_frame}.."
              f"{res.start_frame + len(res.frame_labels) - 1} "
              f"vote {names[res.voted_label]} (residual)", flush=True)

    lat = streaming.latency_report(stream)
    _progress(f"batches {lat.n_batches} mean_s {lat.mean:.6f} p95_s {lat.p95:.6f}")
    for fps, ok in sorted(lat.verdicts.items()):
        _progress(f"real-time@{fps}fps budget {lat.budget(fps):.3f}s "
                  f"{'PASS' if ok else 'FAIL'}")
    remap = {cid: i for i, cid in enumerate(ckpt.class_ids)}
    if all(int(v) in remap for v in labels):
        truth = np.array([remap[int(v)] for v in labels])
        diag = streaming.time_diagram(stream.frame_labels, truth[: len(stream.frame_labels)],
                                      stream.frame_votes, frame_rate=args.fps)
        _progress(f"frame_accuracy {diag.accuracy:.6f} "
                  f"onsets_detected {sum(d for *_, d in diag.onsets)}/{len(diag.onsets)}")
        if args.report:
            dataio.write_time_diagram_csv(args.report, diag)
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    dims = tuple(int(v) for v in args.dims.split(","))
    if len(dims) != 5:
        raise ValueError("--dims needs 5 integers D,H,N,T,M")
    report = md.grad_check(seed=args.seed, dims=dims, corrupt_param=args.corrupt)
    print(report)
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


def cmd_sweep(args) -> int:
    manifest, sequences = dataio.read_dataset(args.data)
    values = args.values.split(",")
    base = _config_from_args(args)
    if args.axis == "alpha-w" and base.binary_class is None:
        base = replace(base, binary_class=int(kin.GestureClass.NODDING_HEAD))
    rows = []
    summary = []
    for value in values:
        if args.axis == "hidden":
            config = replace(base, hidden=int(value))
            data = sequences
        elif args.axis == "alpha-w":
            config = replace(base, alpha_w=float(value))
            data = sequences
        else:  # fps: regenerate from the manifest at the target rate with
            # the snippet window held fixed in seconds (2 s / 1.5 s)
            fps = int(value)
            data = kin.synthesize_dataset(
                actors=dataio.manifest_actors(manifest),
                scenes=dataio.manifest_scenes(manifest),
                frame_rate=fps,
                seed=manifest["master_seed"],
                classes=[kin.GestureClass(c) for c in manifest["classes"]],
                noise_scale=manifest["noise_scale"],
            )
            config = replace(base, snippet_len=2 * fps, overlap=int(1.5 * fps))
        peaks = []
        for run, seed in enumerate(tr.derive_seeds(base.seed, args.repeats)):
            res = tr.train(data, replace(config, seed=seed))
            peaks.append(res.peak_val_accuracy)
            rows.extend(
                (args.axis, value, run, h.epoch, h.train_loss, h.val_accuracy)
                for h in res.history
            )
            _progress(f"{args.axis}={value} run {run} peak {res.peak_val_accuracy:.4f}")
        summary.append((value, float(np.mean(peaks))))
    dataio.write_sweep_csv(args.out, rows)
    for value, mean_peak in summary:
        print(f"{args.axis} {value} mean_peak {mean_peak:.6f}")
    return EXIT_OK


def cmd_report(args) -> int:
    with open(args.input, "r", encoding="ascii", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise MalformedRecord(f"{args.input}: empty report")
    header = rows[0]
    if header[:1] == ["epoch"]:
        accs = [float(r[2]) for r in rows[1:]]
        print(f"epochs {len(accs)} peak {max(accs):.6f} final {accs[-1]:.6f}")
    elif header[:1] == ["run"]:
        peaks = [float(r[2]) for r in rows[1:]]
        print(f"runs {len(peaks)} max {max(peaks):.6f} "
              f"mean {np.mean(peaks):.6f} std {np.std(peaks):.6f}")
    elif header[:1] == ["axis"]:
        out: dict[str, list[float]] = {}
        for r in rows[1:]:
            out.setdefault(r[1], []).append(float(r[5]))
        for value, accs in out.items():
            print(f"{header[0]} {value} peak {max(accs):.6f}")
    else:
        raise MalformedRecord(f"{args.input}: unrecognized report header {header}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="egogest",
        description="Head and eye gesture recognition from frame-pair homographies.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="synthesize a labeled dataset")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--fps", type=int, default=20, choices=list(kin.VALID_FRAME_RATES))
    g.add_argument("--actors", type=int, default=4)
    g.add_argument("--classes", type=int, default=5, choices=[5, 6])
    g.add_argument("--noise-scale", type=float, default=1.0)
    g.set_defaults(func=cmd_gen)

    def add_train_flags(q):
        q.add_argument("--features", default="descriptor16", choices=["raw8", "descriptor16"])
        q.add_argument("--channels", default="both", choices=["world", "eye", "both"])
        q.add_argument("--alpha-w", type=float, default=1.0)
        q.add_argument("--alpha-e", type=float, default=1.0)
        q.add_argument("--split", default="stratified")
        q.add_argument("--hidden", type=int, default=128)
        q.add_argument("--seed", type=int, default=0)
        q.add_argument("--epochs", type=int, default=30)
        q.add_argument("--lr", type=float, default=5e-4)
        q.add_argument("--snippet-len", type=int, default=40)
        q.add_argument("--overlap", type=int, default=30)
        q.add_argument("--binary", default=None, choices=sorted(kin.NAME_TO_CLASS),
                       help="two-class mode: Neutral vs this gesture")
        q.add_argument("--verbose", action="store_true")

    t = sub.add_parser("train", help="train a classifier on a dataset")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--repeats", type=int, default=1)
    add_train_flags(t)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint on its validation split")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--report", required=True)
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("stream", help="online recognition over a sequence file or stdin")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--data", required=True, help="sequence file, or - for stdin")
    s.add_argument("--k", type=int, default=10)
    s.add_argument("--no-carry", action="store_true")
    s.add_argument("--fps", type=int, default=20, choices=list(kin.VALID_FRAME_RATES))
    s.add_argument("--report", default=None)
    s.set_defaults(func=cmd_stream)

    c = sub.add_parser("gradcheck", help="verify analytic gradients")
    c.add_argument("--dims", default="4,8,3,5,2")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--corrupt", default=None, help=argparse.SUPPRESS)
    c.set_defaults(func=cmd_gradcheck)

    w = sub.add_parser("sweep", help="train across one experiment axis")
    w.add_argument("--axis", required=True, choices=["hidden", "fps", "alpha-w"])
    w.add_argument("--values", required=True)
    w.add_argument("--repeats", type=int, default=1)
    w.add_argument("--data", required=True)
    w.add_argument("--out", required=True)
    add_train_flags(w)
    w.set_defaults(func=cmd_sweep)

    r = sub.add_parser("report", help="summarize a result CSV")
    r.add_argument("--input", required=True)
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except TrainingDiverged as exc:
        _progress(f"error: {exc}")
        return EXIT_DIVERGED
    except (ShapeMismatch, VersionMismatch, UnknownVersion, LayoutMismatch,
            IncompatibleRate, LabelOutOfRange) as exc:
        _progress(f"error: {exc}")
        return EXIT_INCOMPATIBLE
    except (MalformedRecord, FileNotFoundError, OSError) as exc:
        _progress(f"error: {exc}")
        return EXIT_IO
    except ValueError as exc:
        _progress(f"error: {exc}")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
