"""Command-line pipeline: simulate -> features -> train/grid -> report.

Every stage communicates through files only and derives all randomness from
the seeds in the resolved configuration, which is written next to each
stage's outputs for reproducibility.
"""

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import datasets, metrics, nets, training
from .config import dump_config, load_config
from .features import BlockParams, extract_features
from .scenes import (SceneSpec, default_geometry, ingest_wav, label_blocks,
                     mix_scene, oracle_sinr_per_block, write_wav)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _scene_specs(cfg):
    """Deterministic scene list for the configured desk-scale corpus."""
    sc = cfg["scenes"]
    specs = []
    for pool, count, duration in (("train", sc["train_scenes"],
                                   sc["train_duration"]),
                                  ("test", sc["test_scenes"],
                                   sc["test_duration"])):
        for i in range(count):
            rng = np.random.default_rng([sc["seed"], 0 if pool == "train" else 1, i])
            target = float(rng.uniform(-135.0, 135.0))
            n_int = int(rng.integers(0, sc["max_interferers"] + 1))
            interferers = [float(rng.uniform(-135.0, 135.0)) for _ in range(n_int)]
            specs.append((f"{pool}{i:03d}", pool,
                          SceneSpec(target_doa=target, interferer_doas=interferers,
                                    duration=duration,
                                    noise_level_db=sc["noise_db"],
                                    seed=int(rng.integers(2 ** 31)))))
    return specs


def cmd_simulate(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg["scenes"]["seed"] = args.seed
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    geometry = default_geometry()
    block = BlockParams(cfg["features"]["window"], cfg["features"]["hop"])
    meta = []
    all_train_sinr = []
    for scene_id, pool, spec in _scene_specs(cfg):
        rec, comps = mix_scene(spec, geometry)
        sinr = oracle_sinr_per_block(comps, block)
        labels = label_blocks(sinr)
        write_wav(out / f"{scene_id}.wav", rec)
        _write_csv(out / f"{scene_id}_sinr.csv", ["block", "sinr_db"],
                   [(t, repr(float(v))) for t, v in enumerate(sinr)])
        _write_csv(out / f"{scene_id}_labels.csv", ["block", "label"],
                   [(t, int(v)) for t, v in enumerate(labels)])
        if pool == "train":
            all_train_sinr.append(sinr)
        meta.append({"id": scene_id, "pool": pool,
                     "target_doa": spec.target_doa,
                     "interferer_doas": spec.interferer_doas,
                     "duration": spec.duration,
                     "noise_level_db": spec.noise_level_db,
                     "seed": spec.seed})
    # linear-scale SINR histogram of the training pool
    if all_train_sinr:
        linear = 10.0 ** (np.concatenate(all_train_sinr) / 10.0)
        top = float(np.quantile(linear, 0.99)) or 1.0
        counts, edges = np.histogram(np.minimum(linear, top), bins=60,
                                     range=(0.0, top))
        _write_csv(out / "sinr_histogram.csv",
                   ["bin_left", "bin_right", "count"],
                   [(repr(float(edges[i])), repr(float(edges[i + 1])), int(c))
                    for i, c in enumerate(counts)])
    (out / "scenes.json").write_text(json.dumps(meta, indent=1))
    (out / "resolved_config.txt").write_text(dump_config(cfg))
    print(f"wrote {len(meta)} scenes to {out}")
    return 0


def _read_labels_csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return np.array([int(r[1]) for r in rows[1:]], dtype=np.uint8)


def _read_sinr_csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return np.array([float(r[1]) for r in rows[1:]], dtype=np.float32)


def cmd_features(args):
    cfg = load_config(args.config)
    scene_dir = Path(args.scenes)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    meta = json.loads((scene_dir / "scenes.json").read_text())
    block = BlockParams(cfg["features"]["window"], cfg["features"]["hop"])
    scene_frames = []
    pools = {}
    for entry in meta:
        sid = entry["id"]
        rec = ingest_wav(scene_dir / f"{sid}.wav")
        geometry = default_geometry(rec.sample_rate)
        feats = extract_features(rec, entry["target_doa"], geometry, block)
        feats = datasets.compress_frame(feats)
        labels = _read_labels_csv(scene_dir / f"{sid}_labels.csv")
        sinr = _read_sinr_csv(scene_dir / f"{sid}_sinr.csv")
        if len(labels) != len(feats):
            raise RuntimeError(f"scene {sid}: {len(feats)} frames but "
                               f"{len(labels)} labels")
        scene_frames.append(datasets.SceneFrames(sid, feats, labels, sinr))
        pools.setdefault(entry["pool"], []).append(sid)
        if args.csv:
            rows = [[repr(float(v)) for v in f] + [int(l)]
                    for f, l in zip(feats, labels)]
            _write_csv(out / f"{sid}_frames.csv",
                       datasets.CSV_HEADER.split(","), rows)
    # scene-level split: the train pool is divided into train/val
    ds = cfg["dataset"]
    trainval = sorted(pools.get("train", []))
    rng = np.random.default_rng([ds["seed"], 2])
    order = rng.permutation(len(trainval))
    n_val = max(1, int(ds["val_fraction"] * len(trainval))) if trainval else 0
    val_ids = sorted(trainval[i] for i in order[:n_val])
    train_ids = sorted(set(trainval) - set(val_ids))
    assignment = {"train": train_ids, "val": val_ids,
                  "test": sorted(pools.get("test", []))}
    split = datasets.build_dataset(scene_frames, assignment=assignment,
                                   seed=ds["seed"])
    datasets.serialize_dataset(split, out)
    (out / "resolved_config.txt").write_text(dump_config(cfg))
    print(f"wrote dataset with splits "
          f"{[len(split.scenes(s)) for s in ('train', 'val', 'test')]} "
          f"scenes to {out}")
    return 0


def _train_config(cfg, args):
    t = cfg["train"]
    return training.TrainConfig(
        batch_size=t["batch_size"],
        sequence_length=cfg["dataset"]["m"],
        learning_rate=t["learning_rate"],
        epochs=args.epochs if args.epochs is not None else t["epochs"],
        dropout_rate=t["dropout_rate"],
        synaptic_noise_std=t["synaptic_noise_std"],
        seed=args.seed if args.seed is not None else t["seed"],
        patience=t["patience"],
        optimizer=t["optimizer"],
        max_batches_per_epoch=t["max_batches_per_epoch"],
    )


def _write_epoch_log(path, log):
    _write_csv(path, ["epoch", "train_loss", "val_mcc", "val_auc", "wall_ms"],
               [(e.epoch, repr(e.train_loss), repr(e.val_mcc), repr(e.val_auc),
                 repr(e.wall_ms)) for e in log])


def cmd_train(args):
    cfg = load_config(args.config)
    split = datasets.deserialize_dataset(args.dataset)
    m = cfg["dataset"]["m"]
    label = args.net
    spec = metrics.make_spec(label, args.layers, args.neurons, m)
    tc = _train_config(cfg, args)
    xtr, ytr = metrics.model_inputs(split, label, "train", m)
    xtr, ytr = datasets.balance_upsample(xtr, ytr, seed=tc.seed)
    xval, yval = metrics.model_inputs(split, label, "val", m)
    res = training.train(spec, xtr, ytr, xval, yval, tc)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    nets.save_model(out / "model.tadm", spec, res.params)
    _write_epoch_log(out / "epochs.csv", res.log)
    (out / "resolved_config.txt").write_text(dump_config(cfg))
    print(f"best validation MCC {res.best_val_mcc:.4f} after "
          f"{len(res.log)} epochs; model in {out}")
    return 1 if res.diverged else 0


def cmd_eval(args):
    split = datasets.deserialize_dataset(args.dataset)
    spec, params = nets.load_model(args.model)
    m = load_config(args.config)["dataset"]["m"]
    label = args.net
    if args.smoothing is not None and label in ("fnn_nos", "fnn_smo"):
        x, y = split.frames("test", smoothing_a=args.smoothing)
    else:
        x, y = metrics.model_inputs(split, label, "test", m)
    rep = metrics.evaluate_model(spec, params, x, y)
    print(f"acc={rep.acc:.4f} auc={rep.auc:.4f} mcc={rep.mcc:.4f} P={rep.p}")
    return 0


def cmd_grid(args):
    cfg = load_config(args.config)
    g = cfg["grid"]
    labels = args.kinds.split(",") if args.kinds else g["kinds"].split(",")
    grid_l = tuple(int(v) for v in (args.layers or g["layers"]).split(","))
    grid_n = tuple(int(v) for v in (args.neurons or g["neurons"]).split(","))
    split = datasets.deserialize_dataset(args.dataset)
    tc = _train_config(cfg, args)
    jobs = args.jobs if args.jobs is not None else g["jobs"]
    result = metrics.grid_search(labels, split, tc, grid_l, grid_n,
                                 m=cfg["dataset"]["m"], jobs=jobs,
                                 measure_timing=bool(g["timing"]),
                                 balance_seed=tc.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "grid.csv").write_text(metrics.grid_csv(result))
    text, csv_text = metrics.render_report(result, labels)
    (out / "report.txt").write_text(text)
    (out / "report.csv").write_text(csv_text)
    (out / "resolved_config.txt").write_text(dump_config(cfg))
    print(text)
    return 0


def cmd_gradcheck(args):
    failed = False
    for kind in nets.KINDS:
        for layers in (1, 2):
            for neurons in (1, 4):
                spec = nets.NetworkSpec(kind, layers, neurons)
                rep = training.grad_check(spec, seed=args.seed)
                status = "ok" if rep.passed else "FAIL"
                print(f"{kind:4s} L={layers} N={neurons}: max rel err "
                      f"{rep.max_rel_error:.2e} ({rep.worst_tensor}) {status}")
                failed = failed or not rep.passed
    return 1 if failed else 0


def cmd_report(args):
    with open(args.grid) as fh:
        rows = list(csv.DictReader(fh))
    result = metrics.GridResult()
    labels = []
    for r in rows:
        rep = metrics.MetricsReport(
            acc=float(r["test_acc"]), auc=float(r["test_auc"]),
            mcc=float(r["test_mcc"]), p=int(r["P"]), neurons=int(r["N"]),
            layers=int(r["L"]), rrt=float(r["rrt"]), rtt=float(r["rtt"]))
        result.entries.append(metrics.GridEntry(
            r["kind"], int(r["L"]), int(r["N"]), int(r["P"]),
            float(r["val_mcc"]), rep))
        if r["kind"] not in labels:
            labels.append(r["kind"])
    for label in labels:
        own = [e for e in result.entries if e.label == label]
        result.selected[label] = metrics.select_best(own)
        grid_l = sorted({e.layers for e in own})
        grid_n = sorted({e.neurons for e in own})
        result.pbar[label] = metrics.mean_param_count(label, grid_l, grid_n)
    text, _ = metrics.render_report(result, labels)
    print(text)
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="tadkit",
                                description="target activity detection pipeline")
    p.add_argument("--config", help="key=value configuration file")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="synthesize labeled acoustic scenes")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("features", help="extract features into a TADF dataset")
    s.add_argument("--scenes", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--csv", action="store_true", help="also dump frame CSVs")
    s.set_defaults(func=cmd_features)

    s = sub.add_parser("train", help="train one network configuration")
    s.add_argument("--dataset", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--net", required=True, choices=metrics.MODEL_LABELS)
    s.add_argument("--layers", type=int, default=2)
    s.add_argument("--neurons", type=int, default=16)
    s.add_argument("--epochs", type=int)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="evaluate a saved model on the test split")
    s.add_argument("--dataset", required=True)
    s.add_argument("--model", required=True)
    s.add_argument("--net", required=True, choices=metrics.MODEL_LABELS)
    s.add_argument("--smoothing", type=float)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("grid", help="train the full (L, N) grid and report")
    s.add_argument("--dataset", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--kinds")
    s.add_argument("--layers", help="comma-separated layer counts")
    s.add_argument("--neurons", help="comma-separated neuron counts")
    s.add_argument("--epochs", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--jobs", type=int)
    s.set_defaults(func=cmd_grid)

    s = sub.add_parser("gradcheck", help="finite-difference gradient check")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_gradcheck)

    s = sub.add_parser("report", help="render a summary table from a grid CSV")
    s.add_argument("--grid", required=True)
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, RuntimeError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
