"""Target activity detection toolkit: synthetic binaural scenes, spatial
features, and small feed-forward / recurrent classifiers."""

from .scenes import (ArrayGeometry, SceneSpec, MultichannelRecording,
                     OracleComponents, default_geometry,
                     synthesize_source_signal, propagate_to_array, mix_scene,
                     oracle_sinr_per_block, label_blocks, ingest_wav, write_wav)
from .features import (BlockParams, FeatureFrame, NullformerState, doa_to_lag,
                       cross_correlation, f_corr, f_snr, f_var, f_phi,
                       side_select, nullformer_step, run_nullformer,
                       build_nullformer_calibration, assemble_feature,
                       extract_features, smooth_features)
from .datasets import (SceneFrames, DatasetSplit, NormStats, compress_frame,
                       fit_normalizer, apply_normalizer, frame_sequences,
                       balance_upsample, split_scenes, build_dataset,
                       write_tadf, read_tadf, serialize_dataset,
                       deserialize_dataset, class_histogram)
from .nets import (NetworkSpec, count_params, init_params, fnn_layer, rnn_step,
                   lstm_step, gru_step, softmax_output, forward_sequence,
                   predict, save_model, load_model)
from .training import (TrainConfig, ace_loss, compute_gradients, grad_check,
                       adam_update, apply_dropout, apply_synaptic_noise,
                       train, measure_times)
from .metrics import (ConfusionCounts, MetricsReport, confusion, accuracy,
                      mcc, roc_auc, evaluate_model, grid_search, render_report,
                      MODEL_LABELS)

__version__ = "0.1.0"
