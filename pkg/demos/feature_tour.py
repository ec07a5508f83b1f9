"""Walk through the 8-dimensional spatial feature vector on two scenes.

One scene contains the target (plus an interferer), the other only the
interferer.  The informative dimensions (the beam-to-null power ratio and
the correlation ratio at the target lag) separate the two situations; the
angle and power dimensions provide context for the classifier.
"""

import numpy as np

from tadkit import (BlockParams, SceneSpec, build_nullformer_calibration,
                    compress_frame, default_geometry, extract_features,
                    mix_scene, smooth_features)

geometry = default_geometry()
block = BlockParams()
calibration = build_nullformer_calibration(geometry)

names = ["snr", "corr", "diff_c", "diff_s", "var1", "var3", "phi_c", "phi_s"]

print("= extracting features for two scenes =")
target_scene = SceneSpec(target_doa=40.0, interferer_doas=[-70.0],
                         duration=6.0, noise_level_db=-25.0, seed=3)
silent_scene = SceneSpec(target_doa=40.0, interferer_doas=[-70.0],
                         duration=6.0, noise_level_db=-25.0, seed=4,
                         target_active=False)

features = {}
for tag, spec in (("with target", target_scene), ("target silent", silent_scene)):
    rec, _ = mix_scene(spec, geometry)
    feats = extract_features(rec, spec.target_doa, geometry, block, calibration)
    features[tag] = feats
    print(f"{tag}: {feats.shape[0]} frames x {feats.shape[1]} dims")

print()
print("= median raw feature values =")
header = "dimension      " + "".join(f"{n:>9s}" for n in names)
print(header)
for tag, feats in features.items():
    med = np.median(feats, axis=0)
    print(f"{tag:15s}" + "".join(f"{v:9.3f}" for v in med))
print("note how snr and corr collapse when the target goes silent")

print()
print("= compression for training =")
raw = features["with target"]
comp = compress_frame(raw)
print(f"raw snr range   {raw[:, 0].min():10.3g} .. {raw[:, 0].max():10.3g}")
print(f"log10 snr range {comp[:, 0].min():10.3f} .. {comp[:, 0].max():10.3f}")
print(f"raw var1 range  {raw[:, 4].min():10.3g} .. {raw[:, 4].max():10.3g}")
print(f"log10 var1 range{comp[:, 4].min():10.3f} .. {comp[:, 4].max():10.3f}")

print()
print("= recursive smoothing (a = 0.7) =")
smooth = smooth_features(comp, 0.7)
print(f"frame-to-frame std of corr, raw:      {np.std(np.diff(comp[:, 1])):.3f}")
print(f"frame-to-frame std of corr, smoothed: {np.std(np.diff(smooth[:, 1])):.3f}")
print("a = 0 would leave the frames untouched (the unsmoothed baseline)")
