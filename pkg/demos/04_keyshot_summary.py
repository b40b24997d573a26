"""
From frame scores to a keyshot summary
======================================

Kernel temporal segmentation cuts the video into shots, each shot is valued
by its mean frame score, and a 0/1 knapsack picks shots filling at most 15%
of the frames. Here the scores come from the planted truth, so the summary
should recover the planted keyshots.
"""
import numpy as np

from edsnet.dataio import SyntheticSpec, mask_to_runs, synth_video
from edsnet.summarize import kts, summarize_scores
from edsnet.train_eval import f1_against_users

spec = SyntheticSpec()
features, keyshots, distractors = synth_video(spec, np.random.default_rng(3))
print("planted keyshots", keyshots)
print("distractor segments", distractors)

shots = kts(features)
print("KTS change points", shots.change_points.tolist())

summary = summarize_scores(features, [(a, b, 1.0) for a, b in keyshots], ratio=0.15)
print("selected frames", mask_to_runs(summary.mask), f"({summary.mask.sum()} of at most {int(0.15 * 200)})")

truth = np.zeros(len(features), bool)
for a, b in keyshots:
    truth[a:b] = True
print("F1 against the planted summary:", round(f1_against_users(summary.mask, [truth]), 3))
