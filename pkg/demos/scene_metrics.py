"""
End to end on a few rooms, then a small ablation
================================================

A nearest-centroid labeller over the propagated descriptors stands in for
a trained decoder.  Scores come from one confusion matrix accumulated over
all scenes; classes that never occur are left out of the means.
"""

import tempfile

from dynagg.config import config_from_dict
from dynagg.pipeline import ordering_wins, run_ablation, run_pipeline

cfg = config_from_dict({"seed": 3, "synth": {"n_scenes": 3}})
with tempfile.TemporaryDirectory() as out:
    report = run_pipeline(cfg, out)
for c in report["classes"]:
    print(f"class {c['class']}: IoU {c['iou']:.3f}  acc {c['accuracy']:.3f}")
print(f"mIoU {report['mIoU']:.3f}  mA {report['mA']:.3f}  "
      f"coverage {report['cluster_coverage']:.2f}")

# one knob at a time around K=3, logarithm sizing
cfg = config_from_dict({"ablate": {"k_values": [3, 7], "sizing": ["logarithm", "static(100)"],
                                   "aggregate": ["semi_average"], "propagate": ["max"],
                                   "seeds": [0, 1, 2], "scenes_per_seed": 2}})
rows = run_ablation(cfg)
for r in rows:
    print(f"{r['knob']:>9} {r['value']:>12}  seed {r['seed']}  score {r['metric']:.3f}")
print("K=3 at least K=7:", ordering_wins(rows, "k", 3, 7))
