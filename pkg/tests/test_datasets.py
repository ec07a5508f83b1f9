import numpy as np
import pytest

from tadkit.datasets import (FEATURE_DIM, IntegrityError, SceneFrames,
                             apply_normalizer, balance_upsample, build_dataset,
                             class_histogram, compress_frame,
                             deserialize_dataset, fit_normalizer,
                             frame_sequences, read_tadf, serialize_dataset,
                             split_scenes, write_tadf)


def _toy_scene(scene_id, n=100, seed=0, positive_rate=0.3):
    rng = np.random.default_rng(seed)
    feats = rng.standard_normal((n, FEATURE_DIM)).astype(np.float32)
    labels = (rng.random(n) < positive_rate).astype(np.uint8)
    sinr = rng.uniform(-30, 30, n).astype(np.float32)
    return SceneFrames(scene_id, feats, labels, sinr)


class TestCompression:
    def test_known_values(self):
        v = np.array([100.0, 3.0, 0.5, 0.5, 1e-4, 1.0, 1.0, 0.0])
        c = compress_frame(v)
        assert c[0] == pytest.approx(2.0)
        assert c[1] == pytest.approx(3.0)
        assert c[4] == pytest.approx(np.log10(1e-4 + 1e-12))
        assert c[5] == pytest.approx(np.log10(1.0 + 1e-12))
        # angle dimensions pass through untouched
        assert c[[2, 3, 6, 7]] == pytest.approx(v[[2, 3, 6, 7]])

    def test_snr_clipping(self):
        lo = np.zeros(8)
        lo[0] = 1e-30
        hi = np.zeros(8)
        hi[0] = 1e30
        assert compress_frame(lo)[0] == -6.0
        assert compress_frame(hi)[0] == 6.0

    def test_corr_clipping(self):
        v = np.zeros(8)
        v[0] = 1.0
        v[1] = 55.0
        assert compress_frame(v)[1] == 10.0

    def test_clipping_idempotent(self):
        rng = np.random.default_rng(0)
        x = np.abs(rng.standard_normal((20, 8))) * 100
        once = compress_frame(x)
        # dims 0..1 are already bounded, re-clipping them changes nothing
        again = once.copy()
        again[:, 0] = np.clip(again[:, 0], -6, 6)
        again[:, 1] = np.clip(again[:, 1], -10, 10)
        assert np.array_equal(once, again)

    def test_batch_matches_single(self):
        rng = np.random.default_rng(1)
        x = np.abs(rng.standard_normal((10, 8)))
        batch = compress_frame(x)
        for i in range(10):
            assert batch[i] == pytest.approx(compress_frame(x[i]))


class TestNormalizer:
    def test_zero_mean_unit_std(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((5000, 8)) * 3.0 + 7.0
        stats = fit_normalizer(x)
        z = apply_normalizer(x, stats)
        assert np.max(np.abs(z.mean(axis=0))) < 1e-12
        assert z.std(axis=0) == pytest.approx(np.ones(8), abs=1e-12)

    def test_constant_dim_guard(self):
        x = np.zeros((50, 8))
        x[:, 3] = 4.0
        stats = fit_normalizer(x)
        assert stats.constant_dims[3]
        z = apply_normalizer(x, stats)
        assert np.all(np.isfinite(z))
        assert np.allclose(z[:, 3], 0.0)

    def test_normalizer_is_affine(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((100, 8))
        stats = fit_normalizer(x)
        a, b = x[:50], x[50:]
        both = apply_normalizer(x, stats)
        assert np.array_equal(both[:50], apply_normalizer(a, stats))
        assert np.array_equal(both[50:], apply_normalizer(b, stats))


class TestSequences:
    def test_window_count_and_labels(self):
        frames = np.arange(50, dtype=float).reshape(-1, 1).repeat(8, axis=1)
        labels = np.arange(50) % 2
        seqs, ls = frame_sequences(frames, labels, m=20, stride=1)
        assert seqs.shape == (31, 20, 8)
        assert np.array_equal(ls, labels[19:])

    def test_window_content(self):
        frames = np.arange(30, dtype=float).reshape(-1, 1).repeat(8, axis=1)
        labels = np.zeros(30, dtype=np.uint8)
        seqs, _ = frame_sequences(frames, labels, m=5, stride=3)
        assert np.array_equal(seqs[0, :, 0], [0, 1, 2, 3, 4])
        assert np.array_equal(seqs[1, :, 0], [3, 4, 5, 6, 7])

    def test_short_input(self):
        seqs, ls = frame_sequences(np.zeros((5, 8)), np.zeros(5), m=20)
        assert len(seqs) == 0 and len(ls) == 0

    def test_validation(self):
        with pytest.raises(ValueError):
            frame_sequences(np.zeros((5, 8)), np.zeros(5), m=0)


class TestBalance:
    def test_counts_match_after(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal((100, 8))
        y = (np.arange(100) < 20).astype(np.uint8)  # 20 positive, 80 negative
        xb, yb = balance_upsample(x, y, seed=0)
        assert np.sum(yb == 0) == np.sum(yb == 1) == 80
        assert len(xb) == 160

    def test_added_samples_are_duplicates(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal((60, 8))
        y = (np.arange(60) < 10).astype(np.uint8)
        xb, yb = balance_upsample(x, y, seed=1)
        originals = {tuple(row) for row in x}
        for row in xb:
            assert tuple(row) in originals

    def test_original_samples_retained(self):
        x = np.arange(40, dtype=float).reshape(-1, 1).repeat(8, axis=1)
        y = (np.arange(40) < 5).astype(np.uint8)
        xb, yb = balance_upsample(x, y, seed=2)
        assert np.array_equal(xb[:40], x)
        assert np.array_equal(yb[:40], y)

    def test_balanced_input_untouched(self):
        x = np.zeros((10, 8))
        y = np.array([0, 1] * 5, dtype=np.uint8)
        xb, yb = balance_upsample(x, y, seed=3)
        assert len(xb) == 10

    def test_single_class_untouched(self):
        x = np.zeros((10, 8))
        y = np.ones(10, dtype=np.uint8)
        xb, yb = balance_upsample(x, y, seed=4)
        assert len(xb) == 10

    def test_deterministic(self):
        rng = np.random.default_rng(6)
        x = rng.standard_normal((50, 8))
        y = (np.arange(50) < 7).astype(np.uint8)
        a = balance_upsample(x, y, seed=9)
        b = balance_upsample(x, y, seed=9)
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


class TestSplits:
    def test_scene_disjoint(self):
        ids = [f"s{i}" for i in range(20)]
        parts = split_scenes(ids, fractions=(0.7, 0.2, 0.1), seed=0)
        everything = parts["train"] + parts["val"] + parts["test"]
        assert sorted(everything) == sorted(ids)
        assert len(set(everything)) == len(ids)

    def test_counts(self):
        parts = split_scenes([f"s{i}" for i in range(10)], seed=1)
        assert len(parts["val"]) == 2
        assert len(parts["test"]) == 1
        assert len(parts["train"]) == 7

    def test_deterministic(self):
        ids = [f"s{i}" for i in range(15)]
        assert split_scenes(ids, seed=5) == split_scenes(ids, seed=5)

    def test_norm_from_train_only(self):
        scenes = [_toy_scene(f"s{i}", seed=i) for i in range(10)]
        split = build_dataset(scenes, seed=0)
        train_feats = np.concatenate([sc.features for sc in split.train])
        ref = fit_normalizer(train_feats.astype(float))
        assert split.norm.mean == pytest.approx(ref.mean)
        assert split.norm.std == pytest.approx(ref.std)

    def test_explicit_assignment(self):
        scenes = [_toy_scene(f"s{i}", seed=i) for i in range(4)]
        assignment = {"train": ["s0", "s1"], "val": ["s2"], "test": ["s3"]}
        split = build_dataset(scenes, assignment=assignment)
        assert [sc.scene_id for sc in split.val] == ["s2"]
        assert split.provenance["assignment"] == assignment


class TestSplitViews:
    def test_frames_concatenate(self):
        scenes = [_toy_scene(f"s{i}", n=40, seed=i) for i in range(5)]
        split = build_dataset(scenes, seed=0)
        x, y = split.frames("train")
        total = sum(len(sc.labels) for sc in split.train)
        assert x.shape == (total, 8) and len(y) == total

    def test_sequences_per_scene_no_straddle(self):
        # two scenes of 25 frames each yield 2 * (25 - 20 + 1) windows, not
        # the 31 a concatenated stream would produce
        scenes = [_toy_scene("a", n=25, seed=0), _toy_scene("b", n=25, seed=1)]
        split = build_dataset(scenes, assignment={"train": ["a", "b"],
                                                  "val": [], "test": []})
        x, y = split.sequences("train", m=20)
        assert x.shape == (12, 20, 8)

    def test_smoothing_changes_frames(self):
        scenes = [_toy_scene(f"s{i}", seed=i) for i in range(5)]
        split = build_dataset(scenes, seed=0)
        raw, _ = split.frames("train", smoothing_a=0.0)
        smo, _ = split.frames("train", smoothing_a=0.7)
        assert raw.shape == smo.shape
        assert not np.allclose(raw, smo)


class TestTadfCodec:
    def test_round_trip_sequences(self, tmp_path):
        rng = np.random.default_rng(7)
        feats = rng.standard_normal((30, 20, 8)).astype(np.float32)
        labels = rng.integers(0, 2, 30).astype(np.uint8)
        path = tmp_path / "x.tadf"
        write_tadf(path, feats, labels)
        f2, l2 = read_tadf(path)
        assert np.array_equal(f2, feats)
        assert np.array_equal(l2, labels)

    def test_round_trip_frames(self, tmp_path):
        rng = np.random.default_rng(8)
        feats = rng.standard_normal((10, 8)).astype(np.float32)
        labels = np.zeros(10, dtype=np.uint8)
        path = tmp_path / "y.tadf"
        write_tadf(path, feats, labels)
        f2, l2 = read_tadf(path)
        assert f2.shape == (10, 1, 8)
        assert np.array_equal(f2[:, 0, :], feats)

    def test_header_layout(self, tmp_path):
        path = tmp_path / "h.tadf"
        write_tadf(path, np.zeros((3, 20, 8), dtype=np.float32),
                   np.zeros(3, dtype=np.uint8))
        raw = path.read_bytes()
        assert raw[:4] == b"TADF"
        assert len(raw) == 18 + 3 * (20 * 8 * 4 + 1)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.tadf"
        path.write_bytes(b"NOPE" + b"\x00" * 40)
        with pytest.raises(IntegrityError, match="magic"):
            read_tadf(path)

    def test_truncated_body(self, tmp_path):
        path = tmp_path / "t.tadf"
        write_tadf(path, np.zeros((5, 20, 8), dtype=np.float32),
                   np.zeros(5, dtype=np.uint8))
        raw = path.read_bytes()
        path.write_bytes(raw[:len(raw) - 300])
        with pytest.raises(IntegrityError, match="expected 5 records"):
            read_tadf(path)

    def test_short_header(self, tmp_path):
        path = tmp_path / "s.tadf"
        path.write_bytes(b"TADF\x01")
        with pytest.raises(IntegrityError):
            read_tadf(path)

    def test_label_count_mismatch(self, tmp_path):
        with pytest.raises(ValueError):
            write_tadf(tmp_path / "m.tadf", np.zeros((4, 20, 8)), np.zeros(3))


class TestSerialization:
    def test_round_trip(self, tmp_path):
        scenes = [_toy_scene(f"s{i}", n=30 + i, seed=i) for i in range(6)]
        split = build_dataset(scenes, seed=3)
        serialize_dataset(split, tmp_path / "ds")
        back = deserialize_dataset(tmp_path / "ds")
        for name in ("train", "val", "test"):
            orig, rest = split.scenes(name), back.scenes(name)
            assert [s.scene_id for s in orig] == [s.scene_id for s in rest]
            for a, b in zip(orig, rest):
                assert np.array_equal(a.features, b.features)
                assert np.array_equal(a.labels, b.labels)
                assert np.array_equal(a.sinr_db, b.sinr_db)
        assert back.norm.mean == pytest.approx(split.norm.mean)
        assert back.norm.std == pytest.approx(split.norm.std)

    def test_serialization_deterministic(self, tmp_path):
        scenes = [_toy_scene(f"s{i}", seed=i) for i in range(4)]
        split = build_dataset(scenes, seed=0)
        serialize_dataset(split, tmp_path / "a")
        serialize_dataset(split, tmp_path / "b")
        for f in sorted((tmp_path / "a").iterdir()):
            assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()


class TestHistogram:
    def test_counts_sum_to_frames(self):
        scenes = [_toy_scene(f"s{i}", n=80, seed=i) for i in range(5)]
        split = build_dataset(scenes, seed=0)
        counts, edges, bin_counts = class_histogram(split, "train")
        total = sum(len(sc.labels) for sc in split.train)
        assert counts[0] + counts[1] == total
        assert bin_counts.sum() == total

    def test_empty_split(self):
        scenes = [_toy_scene("only", n=10)]
        split = build_dataset(scenes, assignment={"train": ["only"],
                                                  "val": [], "test": []})
        counts, edges, bin_counts = class_histogram(split, "val")
        assert counts == {0: 0, 1: 0}
        assert len(bin_counts) == 0
