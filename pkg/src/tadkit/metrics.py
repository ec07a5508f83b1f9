"""Classification metrics, ROC/AUC, grid search and the summary report.

MCC is the model-selection criterion throughout; accuracy is reported but is
known to be misleading on unbalanced data (a majority-class predictor gets
acc = majority fraction while mcc = 0).
"""

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .nets import NetworkSpec, count_params, predict

# the six network rows of the summary table
MODEL_LABELS = ("fnn_nos", "fnn_smo", "fnn_seq", "rnn", "lstm", "gru")

GRID_CSV_HEADER = ("kind", "L", "N", "P", "val_mcc", "test_acc", "test_auc",
                   "test_mcc", "rrt", "rtt")


@dataclass
class ConfusionCounts:
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def total(self):
        return self.tp + self.tn + self.fp + self.fn


def confusion(labels, predictions):
    labels = np.asarray(labels).astype(int)
    predictions = np.asarray(predictions).astype(int)
    if labels.shape != predictions.shape:
        raise ValueError("labels and predictions must have equal length")
    return ConfusionCounts(
        tp=int(np.sum((labels == 1) & (predictions == 1))),
        tn=int(np.sum((labels == 0) & (predictions == 0))),
        fp=int(np.sum((labels == 0) & (predictions == 1))),
        fn=int(np.sum((labels == 1) & (predictions == 0))),
    )


def accuracy(counts):
    if counts.total == 0:
        return 0.0
    return (counts.tp + counts.tn) / counts.total


def mcc(counts):
    """Matthews correlation coefficient; 0 when any denominator factor is 0."""
    tp, tn, fp, fn = counts.tp, counts.tn, counts.fp, counts.fn
    denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    if denom == 0:
        return 0.0
    return (tp * tn - fp * fn) / math.sqrt(denom)


def roc_auc(labels, scores):
    """ROC points over the distinct score thresholds and trapezoidal AUC.

    Equal scores are collapsed into one threshold, which makes the AUC equal
    to the Mann-Whitney pairwise statistic with ties counted one half.
    """
    labels = np.asarray(labels).astype(int)
    scores = np.asarray(scores, dtype=float)
    n_pos = int(np.sum(labels == 1))
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        return np.array([[0.0, 0.0], [1.0, 1.0]]), 0.5
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_labels = labels[order]
    cum_tp = np.cumsum(sorted_labels == 1)
    cum_fp = np.cumsum(sorted_labels == 0)
    distinct = np.append(sorted_scores[1:] != sorted_scores[:-1], True)
    tpr = np.concatenate(([0.0], cum_tp[distinct] / n_pos))
    fpr = np.concatenate(([0.0], cum_fp[distinct] / n_neg))
    auc = float(np.sum(np.diff(fpr) * 0.5 * (tpr[1:] + tpr[:-1])))
    return np.column_stack([fpr, tpr]), auc


@dataclass
class MetricsReport:
    acc: float
    auc: float
    mcc: float
    p: int
    neurons: int
    layers: int
    rrt: float = float("nan")
    rtt: float = float("nan")


def model_variant(label, m=20):
    """(NetworkSpec kind, input mode, smoothing, input_dim) for a table row."""
    return {
        "fnn_nos": ("fnn", "frames", 0.0, 8),
        "fnn_smo": ("fnn", "frames", 0.7, 8),
        "fnn_seq": ("fnn", "concat", 0.0, m * 8),
        "rnn": ("rnn", "seq", 0.0, 8),
        "lstm": ("lstm", "seq", 0.0, 8),
        "gru": ("gru", "seq", 0.0, 8),
    }[label]


def model_inputs(split, label, split_name, m=20):
    """Evaluation arrays for one model variant from a DatasetSplit."""
    _, mode, a, _ = model_variant(label, m)
    if mode == "frames":
        return split.frames(split_name, smoothing_a=a)
    seqs, y = split.sequences(split_name, m)
    if mode == "concat":
        return seqs.reshape(len(seqs), -1), y
    return seqs, y


def evaluate_model(spec, params, x, y):
    """MetricsReport of a trained model on prepared inputs."""
    preds, scores = predict(spec, params, x)
    counts = confusion(y, preds)
    _, auc = roc_auc(y, scores)
    return MetricsReport(acc=accuracy(counts), auc=auc, mcc=mcc(counts),
                         p=count_params(spec), neurons=spec.neurons,
                         layers=spec.layers)


# --------------------------------------------------------------------------
# grid search
# --------------------------------------------------------------------------

DEFAULT_GRID_L = (1, 2, 3, 4, 5, 6)
DEFAULT_GRID_N = (1, 2, 4, 8, 16, 32)


@dataclass
class GridEntry:
    label: str
    layers: int
    neurons: int
    p: int
    val_mcc: float
    test: MetricsReport


@dataclass
class GridResult:
    entries: list = field(default_factory=list)
    selected: dict = field(default_factory=dict)  # label -> GridEntry
    pbar: dict = field(default_factory=dict)      # label -> mean P over grid
    timing: dict = field(default_factory=dict)    # label -> {'rrt','rtt'}


def make_spec(label, layers, neurons, m=20):
    kind, _, _, input_dim = model_variant(label, m)
    return NetworkSpec(kind, layers, neurons, input_dim=input_dim)


def mean_param_count(label, grid_l=DEFAULT_GRID_L, grid_n=DEFAULT_GRID_N, m=20):
    counts = [count_params(make_spec(label, l, n, m))
              for l in grid_l for n in grid_n]
    return float(np.mean(counts))


def select_best(entries):
    """Max validation MCC; ties broken by smaller P, then smaller L."""
    return min(entries, key=lambda e: (-e.val_mcc, e.p, e.layers))


def _run_grid_entry(args):
    from .training import TrainConfig, train  # local import: worker picklability
    label, layers, neurons, m, xtr, ytr, xval, yval, xte, yte, cfg_kwargs = args
    spec = make_spec(label, layers, neurons, m)
    cfg = TrainConfig(**cfg_kwargs)
    res = train(spec, xtr, ytr, xval, yval, cfg)
    rep = evaluate_model(spec, res.params, xte, yte)
    return GridEntry(label, layers, neurons, rep.p, res.best_val_mcc, rep), \
        res.params


def grid_search(labels, split, cfg, grid_l=DEFAULT_GRID_L, grid_n=DEFAULT_GRID_N,
                m=20, jobs=1, measure_timing=False, balance_seed=0):
    """Train every (label, L, N) configuration and select per label by
    validation MCC.  Returns a GridResult; timing ratios are relative to the
    selected FNN(smo) configuration when it is part of the run."""
    from .datasets import balance_upsample
    from .training import measure_times

    tasks = []
    data_cache = {}
    for label in labels:
        _, mode, a, _ = model_variant(label, m)
        key = (mode, a)
        if key not in data_cache:
            xtr, ytr = model_inputs(split, label, "train", m)
            xtr, ytr = balance_upsample(xtr, ytr, seed=balance_seed)
            xval, yval = model_inputs(split, label, "val", m)
            xte, yte = model_inputs(split, label, "test", m)
            data_cache[key] = (xtr, ytr, xval, yval, xte, yte)
        xtr, ytr, xval, yval, xte, yte = data_cache[key]
        for layers in grid_l:
            for neurons in grid_n:
                tasks.append((label, layers, neurons, m, xtr, ytr, xval, yval,
                              xte, yte, dict(cfg.__dict__)))
    if jobs > 1:
        import multiprocessing as mp
        with mp.get_context("spawn").Pool(jobs) as pool:
            outcomes = pool.map(_run_grid_entry, tasks)
    else:
        outcomes = [_run_grid_entry(t) for t in tasks]

    result = GridResult()
    best_params = {}
    for (entry, params), task in zip(outcomes, tasks):
        result.entries.append(entry)
    for label in labels:
        own = [e for e in result.entries if e.label == label]
        result.selected[label] = select_best(own)
        result.pbar[label] = mean_param_count(label, grid_l, grid_n, m)
        if measure_timing:
            sel = result.selected[label]
            idx = result.entries.index(sel)
            best_params[label] = outcomes[idx][1]

    if measure_timing:
        times = {}
        for label in labels:
            sel = result.selected[label]
            spec = make_spec(label, sel.layers, sel.neurons, m)
            key = model_variant(label, m)[1:3]
            xtr, ytr, _, _, xte, _ = data_cache[key]
            times[label] = measure_times(spec, best_params[label], xtr, ytr,
                                         xte, cfg)
        ref = times.get("fnn_smo")
        for label in labels:
            t = times[label]
            result.timing[label] = {
                "rrt": t["train_s"] / ref["train_s"] if ref else float("nan"),
                "rtt": t["test_s"] / ref["test_s"] if ref else float("nan"),
                "train_s_std": t["train_s_std"],
                "test_s_std": t["test_s_std"],
            }
            sel = result.selected[label]
            sel.test.rrt = result.timing[label]["rrt"]
            sel.test.rtt = result.timing[label]["rtt"]
    return result


# --------------------------------------------------------------------------
# reporting
# --------------------------------------------------------------------------

def grid_csv(result):
    """One CSV row per trained grid entry."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(GRID_CSV_HEADER)
    for e in sorted(result.entries, key=lambda e: (e.label, e.layers, e.neurons)):
        w.writerow([e.label, e.layers, e.neurons, e.p,
                    repr(e.val_mcc), repr(e.test.acc), repr(e.test.auc),
                    repr(e.test.mcc), repr(e.test.rrt), repr(e.test.rtt)])
    return buf.getvalue()


def render_report(result, labels=MODEL_LABELS):
    """Aligned text table with one row per network type, plus a CSV twin."""
    header = ["Network", "ACC", "AUC", "MCC", "N", "L", "P/Pbar", "RRT", "RTT"]
    rows = []
    for label in labels:
        if label not in result.selected:
            continue
        sel = result.selected[label]
        t = sel.test
        rows.append([label, f"{t.acc:.3f}", f"{t.auc:.3f}", f"{t.mcc:.3f}",
                     str(sel.neurons), str(sel.layers),
                     f"{sel.p} / {result.pbar[label]:.0f}",
                     "-" if math.isnan(t.rrt) else f"{t.rrt:.3f}",
                     "-" if math.isnan(t.rtt) else f"{t.rtt:.3f}"])
    widths = [max(len(r[i]) for r in [header] + rows) for i in range(len(header))]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip()]
    lines.append("  ".join("-" * w for w in widths))
    for r in rows:
        lines.append("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip())
    text = "\n".join(lines) + "\n"

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["network", "acc", "auc", "mcc", "N", "L", "P", "Pbar",
                "rrt", "rtt"])
    for label in labels:
        if label not in result.selected:
            continue
        sel = result.selected[label]
        t = sel.test
        w.writerow([label, repr(t.acc), repr(t.auc), repr(t.mcc), sel.neurons,
                    sel.layers, sel.p, repr(result.pbar[label]),
                    repr(t.rrt), repr(t.rtt)])
    return text, buf.getvalue()
