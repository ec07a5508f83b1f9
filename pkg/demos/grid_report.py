"""Run a reduced architecture grid and render the comparison table.

The full experiment sweeps 6 network types over 36 (layers, neurons)
configurations; this demo keeps a small corpus and a 2 x 2 grid per type so
it finishes in about a minute.  The selection rule is the real one: best
validation MCC, ties broken by fewer parameters, then fewer layers.
"""

import numpy as np

from tadkit import (BlockParams, SceneFrames, SceneSpec, TrainConfig,
                    build_dataset, compress_frame, default_geometry,
                    extract_features, grid_search, label_blocks, mix_scene,
                    oracle_sinr_per_block, render_report)

geometry = default_geometry()
block = BlockParams()
rng = np.random.default_rng(21)

print("= corpus =")
scenes = []
assignment = {"train": [], "val": [], "test": []}
for i in range(7):
    pool = "test" if i >= 6 else ("val" if i >= 4 else "train")
    target = float(rng.uniform(-135, 135))
    doas = [float(rng.uniform(-135, 135))
            for _ in range(int(rng.integers(0, 2)))]
    spec = SceneSpec(target_doa=target, interferer_doas=doas, duration=5.0,
                     noise_level_db=-25.0, seed=int(rng.integers(2 ** 31)))
    rec, comps = mix_scene(spec, geometry)
    feats = compress_frame(extract_features(rec, target, geometry, block))
    sinr = oracle_sinr_per_block(comps, block)
    sid = f"scene{i}"
    scenes.append(SceneFrames(sid, feats, label_blocks(sinr), sinr))
    assignment[pool].append(sid)
split = build_dataset(scenes, assignment=assignment)
print(f"{len(assignment['train'])} train / {len(assignment['val'])} val / "
      f"{len(assignment['test'])} test scenes")

print()
print("= grid search =")
labels = ["fnn_nos", "fnn_smo", "rnn", "gru"]
cfg = TrainConfig(epochs=4, batch_size=128, seed=0, patience=4,
                  max_batches_per_epoch=20)
result = grid_search(labels, split, cfg, grid_l=(1, 2), grid_n=(4, 16),
                     measure_timing=True)
print(f"trained {len(result.entries)} configurations")

print()
text, _ = render_report(result, labels)
print(text)
print("RRT/RTT are wall-clock ratios relative to the selected fnn_smo row.")
