# coding: utf-8

# # End to end on a toy dataset
#
# Synthesize a few scenes, pre-train the detector, fine-tune for distance and
# compare against the constant avg-pred baseline. The toy sizes keep this to a
# few seconds; the acceptance configs in configs/acceptance are the
# full-size version.

import tempfile
from pathlib import Path

from echorange.eval import avg_pred_baseline, baseline_errors, predict_traces, summarize, trace_errors, trace_f1
from echorange.net import TINY_CONFIG
from echorange.sim import DatasetConfig, RoomSpec, load_manifest, make_dataset
from echorange.train import TrainConfig, train_detector, train_distance

out = Path(tempfile.mkdtemp(prefix="echorange_demo_"))
rooms = [RoomSpec(d, 0.4, 3, f"room{i}") for i, d in enumerate([(6, 5, 3), (5, 4, 3), (7, 5, 3), (6, 6, 3)])]
cfg = DatasetConfig(rooms, 16, splits={"train": 2, "val": 1, "test": 1}, seed=1, duration_s=(2.0, 2.5))
manifest = load_manifest(make_dataset(cfg, out / "data"))
print("scenes per split:", {s: len(manifest.split(s)) for s in ("train", "val", "test")})


# ## Detector pre-training, then distance fine-tuning

tc = TrainConfig(max_epochs=8, patience_epochs=4, batch_size=4, window_frames=64, model=TINY_CONFIG, seed=1)
det = train_detector(manifest, tc)
det_paths = det.save(out / "det")
print("detector val F1 %.3f" % det.val_f1)

dist = train_distance(manifest, TrainConfig(**{**tc.to_dict(), "regressor": "ape", "init_checkpoint": str(det_paths["checkpoint"])}))
print("distance val MAE %.3f m" % dist.val_mae)


# ## Test room versus the baseline

test = manifest.split("test")
traces = predict_traces(dist.model, dist.stats, manifest, test)
model_err = summarize(trace_errors(traces))
base_err = summarize(baseline_errors(traces, avg_pred_baseline(manifest.split("train"))))
print("test F1 %.3f" % trace_f1(traces))
print("model    mean %.3f  median %.3f  std %.3f" % (model_err.mean_abs_err, model_err.median_abs_err, model_err.std_abs_err))
print("avg pred mean %.3f  median %.3f  std %.3f" % (base_err.mean_abs_err, base_err.median_abs_err, base_err.std_abs_err))
