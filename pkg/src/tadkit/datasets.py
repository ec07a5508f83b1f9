"""Dataset construction: compression, normalization, sequences, balancing.

Raw features contain unbounded power ratios, so they are log-compressed and
clipped before z-scoring (tanh layers saturate otherwise).  Scenes are
assigned to splits as whole units, never frame-wise, and normalization
statistics come from the training frames only.

On-disk format (TADF): little-endian, magic "TADF", version u16, feature
dim u16, sequence length M u16, record count u64, then records of M x dim
float32 followed by one u8 label.
"""

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .features import smooth_features

FEATURE_DIM = 8
TADF_MAGIC = b"TADF"
TADF_VERSION = 1
_HEADER = struct.Struct("<4sHHHQ")

# column order of CSV exports, mirroring the feature layout
CSV_HEADER = "snr,corr,diff_c,diff_s,var1,var3,phi_c,phi_s,label"


class IntegrityError(ValueError):
    """Raised when a dataset file is truncated or inconsistent."""


def compress_frame(frames):
    """Log-compress the unbounded ratio dimensions; idempotent clipping.

    f_snr -> log10 clipped to [-6, 6]; f_corr clipped to [-10, 10];
    mic powers -> log10(p + 1e-12).  Works on (8,) or (n, 8) arrays.
    """
    x = np.array(frames, dtype=float)
    one = x.ndim == 1
    if one:
        x = x[None, :]
    x[:, 0] = np.clip(np.log10(np.maximum(x[:, 0], 1e-300)), -6.0, 6.0)
    x[:, 1] = np.clip(x[:, 1], -10.0, 10.0)
    x[:, 4:6] = np.log10(x[:, 4:6] + 1e-12)
    return x[0] if one else x


@dataclass
class NormStats:
    mean: np.ndarray
    std: np.ndarray
    constant_dims: np.ndarray  # bool flags for zero-variance dimensions


def fit_normalizer(frames):
    """Per-dimension mean/std from training frames; zero-variance dims get std 1."""
    x = np.asarray(frames, dtype=float)
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    constant = std <= 0.0
    std = np.where(constant, 1.0, std)
    return NormStats(mean, std, constant)


def apply_normalizer(frames, stats):
    return (np.asarray(frames, dtype=float) - stats.mean) / stats.std


def frame_sequences(frames, labels, m=20, stride=1):
    """Sliding windows of m consecutive frames, each labeled by its final frame."""
    if m < 1 or stride < 1:
        raise ValueError("require m >= 1 and stride >= 1")
    frames = np.asarray(frames)
    labels = np.asarray(labels)
    n = len(frames)
    if n < m:
        return np.zeros((0, m, frames.shape[1]), dtype=frames.dtype), \
            np.zeros(0, dtype=labels.dtype)
    starts = np.arange(0, n - m + 1, stride)
    seqs = np.stack([frames[s:s + m] for s in starts])
    return seqs, labels[starts + m - 1]


def balance_upsample(samples, labels, seed=0):
    """Duplicate minority-class samples at random until class counts match."""
    labels = np.asarray(labels)
    idx0 = np.flatnonzero(labels == 0)
    idx1 = np.flatnonzero(labels == 1)
    if len(idx0) == len(idx1) or len(idx0) == 0 or len(idx1) == 0:
        return np.asarray(samples).copy(), labels.copy()
    minor, major = (idx0, idx1) if len(idx0) < len(idx1) else (idx1, idx0)
    rng = np.random.default_rng(seed)
    extra = rng.choice(minor, size=len(major) - len(minor), replace=True)
    keep = np.concatenate([np.arange(len(labels)), extra])
    return np.asarray(samples)[keep], labels[keep]


@dataclass
class SceneFrames:
    """Extracted frames of one scene: compressed features, labels, oracle SINR."""

    scene_id: str
    features: np.ndarray  # (F, 8) float32, compressed but not normalized
    labels: np.ndarray    # (F,) uint8
    sinr_db: np.ndarray   # (F,) float32

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.uint8)
        self.sinr_db = np.asarray(self.sinr_db, dtype=np.float32)


def split_scenes(scene_ids, fractions=(0.7, 0.2, 0.1), seed=0):
    """Scene-level train/val/test assignment.

    Counts are floor(fraction * n) for val and test; the remainder goes to
    train.  Deterministic shuffle per seed.
    """
    ids = list(scene_ids)
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(ids))
    n_val = int(fractions[1] * len(ids))
    n_test = int(fractions[2] * len(ids))
    n_train = len(ids) - n_val - n_test
    shuffled = [ids[i] for i in order]
    return {
        "train": sorted(shuffled[:n_train]),
        "val": sorted(shuffled[n_train:n_train + n_val]),
        "test": sorted(shuffled[n_train + n_val:]),
    }


@dataclass
class DatasetSplit:
    """Scene-disjoint splits of compressed frames plus the fitted normalizer."""

    train: list
    val: list
    test: list
    norm: NormStats
    provenance: dict = field(default_factory=dict)

    def scenes(self, split_name):
        return {"train": self.train, "val": self.val, "test": self.test}[split_name]

    def frames(self, split_name, smoothing_a=0.0):
        """Normalized per-frame features and labels, concatenated over scenes."""
        xs, ys = [], []
        for sc in self.scenes(split_name):
            f = sc.features.astype(float)
            if smoothing_a:
                f = smooth_features(f, smoothing_a)
            xs.append(apply_normalizer(f, self.norm))
            ys.append(sc.labels)
        if not xs:
            return np.zeros((0, FEATURE_DIM)), np.zeros(0, dtype=np.uint8)
        return np.concatenate(xs), np.concatenate(ys)

    def sequences(self, split_name, m=20, stride=1):
        """Normalized sequence samples (n, m, 8) with final-frame labels."""
        xs, ys = [], []
        for sc in self.scenes(split_name):
            f = apply_normalizer(sc.features.astype(float), self.norm)
            s, l = frame_sequences(f, sc.labels, m, stride)
            if len(s):
                xs.append(s)
                ys.append(l)
        if not xs:
            return np.zeros((0, m, FEATURE_DIM)), np.zeros(0, dtype=np.uint8)
        return np.concatenate(xs), np.concatenate(ys)

    def sinr_values(self, split_name):
        arrs = [sc.sinr_db for sc in self.scenes(split_name)]
        return np.concatenate(arrs) if arrs else np.zeros(0, dtype=np.float32)


def build_dataset(scene_frames, fractions=(0.7, 0.2, 0.1), seed=0,
                  assignment=None):
    """Assign scenes to splits and fit the normalizer on the training frames."""
    by_id = {sc.scene_id: sc for sc in scene_frames}
    if assignment is None:
        assignment = split_scenes(sorted(by_id), fractions, seed)
    parts = {k: [by_id[i] for i in v] for k, v in assignment.items()}
    train_feats = np.concatenate([sc.features for sc in parts["train"]]) \
        if parts["train"] else np.zeros((0, FEATURE_DIM), dtype=np.float32)
    norm = fit_normalizer(train_feats)
    return DatasetSplit(parts["train"], parts["val"], parts["test"], norm,
                        provenance={"assignment": assignment, "seed": seed})


# --------------------------------------------------------------------------
# TADF codec
# --------------------------------------------------------------------------

def write_tadf(path, features, labels):
    """Write sequence records (n, M, 8) float32 + u8 labels."""
    features = np.ascontiguousarray(features, dtype="<f4")
    labels = np.ascontiguousarray(labels, dtype=np.uint8)
    if features.ndim == 2:
        features = features[:, None, :]
    n, m, dim = features.shape
    if len(labels) != n:
        raise ValueError("label count does not match record count")
    rec = np.dtype([("f", "<f4", (m, dim)), ("l", "u1")])
    body = np.empty(n, dtype=rec)
    body["f"] = features
    body["l"] = labels
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(TADF_MAGIC, TADF_VERSION, dim, m, n))
        fh.write(body.tobytes())


def read_tadf(path):
    """Read a TADF file back into (features (n, M, dim), labels (n,))."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise IntegrityError("file too short for TADF header")
    magic, version, dim, m, n = _HEADER.unpack_from(raw)
    if magic != TADF_MAGIC:
        raise IntegrityError(f"bad magic {magic!r}, expected {TADF_MAGIC!r}")
    if version != TADF_VERSION:
        raise IntegrityError(f"unsupported TADF version {version}")
    rec = np.dtype([("f", "<f4", (m, dim)), ("l", "u1")])
    avail = (len(raw) - _HEADER.size) // rec.itemsize
    if avail < n or (len(raw) - _HEADER.size) % rec.itemsize:
        raise IntegrityError(f"expected {n} records, found {avail} complete")
    body = np.frombuffer(raw, dtype=rec, count=n, offset=_HEADER.size)
    return body["f"].copy(), body["l"].copy()


def serialize_dataset(split, dirpath):
    """Write a DatasetSplit as per-scene TADF files plus JSON sidecars."""
    d = Path(dirpath)
    d.mkdir(parents=True, exist_ok=True)
    manifest = {"splits": {}, "provenance": split.provenance}
    for name in ("train", "val", "test"):
        manifest["splits"][name] = []
        for sc in split.scenes(name):
            stem = f"{name}__{sc.scene_id}"
            write_tadf(d / f"{stem}.tadf", sc.features[:, None, :], sc.labels)
            sc.sinr_db.astype("<f4").tofile(d / f"{stem}.sinr.f32")
            manifest["splits"][name].append(sc.scene_id)
    norm = {"mean": split.norm.mean.tolist(), "std": split.norm.std.tolist(),
            "constant_dims": split.norm.constant_dims.astype(int).tolist()}
    (d / "normstats.json").write_text(json.dumps(norm, indent=1))
    (d / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))


def deserialize_dataset(dirpath):
    d = Path(dirpath)
    manifest = json.loads((d / "manifest.json").read_text())
    norm = json.loads((d / "normstats.json").read_text())
    stats = NormStats(np.array(norm["mean"]), np.array(norm["std"]),
                      np.array(norm["constant_dims"], dtype=bool))
    parts = {}
    for name in ("train", "val", "test"):
        scenes = []
        for sid in manifest["splits"][name]:
            stem = f"{name}__{sid}"
            feats, labels = read_tadf(d / f"{stem}.tadf")
            sinr = np.fromfile(d / f"{stem}.sinr.f32", dtype="<f4")
            scenes.append(SceneFrames(sid, feats[:, 0, :], labels, sinr))
        parts[name] = scenes
    return DatasetSplit(parts["train"], parts["val"], parts["test"], stats,
                        provenance=manifest.get("provenance", {}))


def class_histogram(split, split_name="train", bins=60, max_linear=None):
    """Per-class counts and a linear-scale SINR histogram of one split.

    Returns (counts, bin_edges, bin_counts); the bin counts sum to the frame
    count of the split.
    """
    labels = np.concatenate([sc.labels for sc in split.scenes(split_name)]) \
        if split.scenes(split_name) else np.zeros(0, dtype=np.uint8)
    sinr = split.sinr_values(split_name)
    counts = {0: int(np.sum(labels == 0)), 1: int(np.sum(labels == 1))}
    if len(sinr) == 0:
        return counts, np.zeros(0), np.zeros(0, dtype=int)
    linear = 10.0 ** (sinr.astype(float) / 10.0)
    if max_linear is None:
        max_linear = float(np.quantile(linear, 0.99)) or 1.0
    clipped = np.minimum(linear, max_linear)
    bin_counts, edges = np.histogram(clipped, bins=bins, range=(0.0, max_linear))
    return counts, edges, bin_counts
