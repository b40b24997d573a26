"""
Anchors, labels and pooled features
===================================

Every frame gets one anchor per scale. Anchors that overlap a keyshot well
become positives, and two kinds of negatives are drawn around them. After
scoring, non-maximum suppression removes near-duplicate segments.
"""
import numpy as np

from edsnet.config import ModelConfig
from edsnet.pooling_heads import init_params, model_forward
from edsnet.proposals import AnchorConfig, assign_labels, encode_offsets, generate_anchors, nms, tiou

cfg = AnchorConfig(scales=(4, 8))
anchors = generate_anchors(40, cfg)
print(len(anchors), "anchors; first three:", [(int(a.start), int(a.end)) for a in anchors[:3]])

keyshot = (8, 16)
sample = assign_labels(anchors, [keyshot], cfg, np.random.default_rng(0))
for label in ("positive", "neg_unimportant", "neg_incomplete"):
    picked = [lp for lp in sample if lp.label == label]
    print(f"{label:16s} {len(picked):2d}  e.g. {[(int(p.proposal.start), int(p.proposal.end)) for p in picked[:3]]}")

# Positives regress toward the keyshot via a center shift and a log-scale.
p = next(lp.proposal for lp in sample if lp.label == "positive")
print("offsets for", (int(p.start), int(p.end)), "->", keyshot, ":", np.round(encode_offsets(p, keyshot), 3))

# A forward pass scores every anchor and predicts its offsets.
model = ModelConfig(mixer="fourier", pooling="fft", anchor_scales=(4, 8), feat_dim=32, hidden=16)
video = np.abs(np.random.default_rng(1).normal(size=(40, 32))).astype(np.float32)
preds = model_forward(video, model, init_params(model, 0))
print("scores", preds.scores.shape, "offsets", preds.offsets.shape)

# Suppression keeps the best of each overlapping cluster.
segs = np.array([[10, 20], [11, 21], [30, 34], [12, 19]], float)
scores = np.array([0.9, 0.8, 0.7, 0.95])
keep = nms(segs, scores, 0.5)
print("kept", segs[keep].tolist(), "pairwise tIoU", round(tiou(segs[keep[0]], segs[keep[1]]), 3))
