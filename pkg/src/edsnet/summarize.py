"""Keyshot summary generation: refine + NMS, frame scores, KTS shots, knapsack."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .config import RunConfig
from .pooling_heads import model_forward
from .proposals import anchor_bounds, decode_offsets_array, nms

SCORE_FLOOR = 0.01


@dataclass
class ShotBoundaries:
    change_points: np.ndarray
    n_frames: int

    def __post_init__(self):
        cps = np.asarray(self.change_points, dtype=np.intp)
        if len(cps) and (cps[0] <= 0 or cps[-1] >= self.n_frames or np.any(np.diff(cps) <= 0)):
            raise ValueError(f"change points must be strictly increasing inside (0, {self.n_frames})")
        self.change_points = cps

    def shots(self) -> list:
        edges = [0, *self.change_points.tolist(), self.n_frames]
        return list(zip(edges[:-1], edges[1:]))


@dataclass
class Summary:
    mask: np.ndarray
    change_points: np.ndarray
    selected_shots: list
    shot_scores: np.ndarray
    frame_scores: np.ndarray
    segments: np.ndarray = field(repr=False)

    def to_json_dict(self, video_id: str) -> dict:
        from .dataio import mask_to_runs

        return {
            "video_id": video_id,
            "n_frames": int(len(self.mask)),
            "change_points": [int(c) for c in self.change_points],
            "selected_shots": [int(s) for s in self.selected_shots],
            "mask": mask_to_runs(self.mask),
            "shot_scores": [round(float(s), 6) for s in self.shot_scores],
        }

    def to_json(self, video_id: str) -> str:
        return json.dumps(self.to_json_dict(video_id), sort_keys=True)


def frame_scores(segments, n: int) -> np.ndarray:
    """Per-frame max score over segments (start, end, score) covering the frame."""
    out = np.zeros(n, dtype=np.float64)
    frames = np.arange(n)
    for start, end, score in segments:
        covered = (frames >= start) & (frames < end)
        np.maximum(out, np.where(covered, score, 0.0), out=out)
    return out


def segment_costs(features) -> np.ndarray:
    """cost[a, b] = within-segment kernel scatter of frames a..b-1 (inf when b <= a)."""
    X = np.asarray(features, dtype=np.float64)
    n = len(X)
    K = X @ X.T
    diag = np.concatenate([[0.0], np.cumsum(np.diag(K))])
    S = np.zeros((n + 1, n + 1))
    S[1:, 1:] = np.cumsum(np.cumsum(K, axis=0), axis=1)
    a = np.arange(n + 1)[:, None]
    b = np.arange(n + 1)[None, :]
    length = np.where(b > a, b - a, 1)
    block = S[b, b] - S[a, b] - S[b, a] + S[a, a]
    cost = diag[b] - diag[a] - block / length
    cost = np.where(b > a, np.maximum(cost, 0.0), np.inf)
    return cost


def kts(features, penalty: float = 1.0, max_cp: int | None = None) -> ShotBoundaries:
    """Kernel temporal segmentation with a linear (dot-product) kernel.

    For each change-point count m <= max_cp the optimal split is found by
    dynamic programming; m is then chosen by minimizing
    cost(m) + penalty * m * (ln(N / m) + 1).
    """
    X = np.asarray(features, dtype=np.float64)
    n = len(X)
    if n < 2:
        raise ValueError("KTS needs at least two frames")
    if max_cp is None:
        max_cp = n // 10
    if not 0 <= max_cp < n:
        raise ValueError(f"max_cp must lie in [0, {n}), got {max_cp}")
    cost = segment_costs(X)

    # best[m, b]: minimal cost of frames [0, b) split into m + 1 segments
    best = np.full((max_cp + 1, n + 1), np.inf)
    back = np.zeros((max_cp + 1, n + 1), dtype=np.intp)
    best[0] = cost[0]
    for m in range(1, max_cp + 1):
        cand = best[m - 1][:, None] + cost  # cand[t, b]: last segment [t, b)
        back[m] = np.argmin(cand, axis=0)
        best[m] = cand[back[m], np.arange(n + 1)]

    ms = np.arange(max_cp + 1)
    pen = np.zeros(max_cp + 1)
    pen[1:] = penalty * ms[1:] * (np.log(n / ms[1:]) + 1.0)
    objective = best[:, n] + pen
    m_best = int(np.argmin(objective))

    cps = []
    b = n
    for m in range(m_best, 0, -1):
        b = int(back[m, b])
        cps.append(b)
    return ShotBoundaries(np.array(cps[::-1], dtype=np.intp), n)


def knapsack_select(values, lengths, capacity: int) -> list:
    """Exact 0/1 knapsack by dynamic programming over integer capacity.

    Items with non-positive value are never taken. Among optimal sets the
    lexicographically smallest sorted index list wins: a suffix table is built
    first, then items are taken front to back whenever taking them still
    reaches the optimum.
    """
    values = np.asarray(values, dtype=np.float64)
    lengths = np.asarray(lengths, dtype=np.int64)
    if np.any(lengths <= 0):
        raise ValueError("shot lengths must be positive integers")
    capacity = int(capacity)
    n = len(values)
    if n == 0 or capacity <= 0:
        return []
    # best[i, c]: optimum over items i.. with capacity c
    best = np.zeros((n + 1, capacity + 1))
    for i in range(n - 1, -1, -1):
        w, v = lengths[i], values[i]
        best[i] = best[i + 1]
        if w <= capacity and v > 0:
            np.maximum(best[i + 1, w:], best[i + 1, : capacity + 1 - w] + v, out=best[i, w:])
    tol = 1e-9 * max(1.0, float(np.abs(values).sum()))
    chosen = []
    c = capacity
    for i in range(n):
        w = lengths[i]
        if w <= c and values[i] > 0 and values[i] + best[i + 1, c - w] >= best[i, c] - tol:
            chosen.append(i)
            c -= w
    return chosen


def summarize_scores(features, scored_segments, ratio=0.15, kts_penalty=1.0, max_cp=None) -> Summary:
    """Turn scored segments into a keyshot mask (steps after NMS)."""
    features = np.asarray(features)
    n = len(features)
    fscores = frame_scores(scored_segments, n)
    if n >= 2:
        bounds = kts(features, kts_penalty, max_cp)
    else:
        bounds = ShotBoundaries(np.zeros(0, dtype=np.intp), n)
    shots = bounds.shots()
    shot_scores = np.array([fscores[a:b].mean() for a, b in shots])
    lengths = [b - a for a, b in shots]
    capacity = math.floor(ratio * n)
    selected = knapsack_select(shot_scores, lengths, capacity)
    mask = np.zeros(n, dtype=bool)
    for s in selected:
        a, b = shots[s]
        mask[a:b] = True
    return Summary(mask, bounds.change_points, selected, shot_scores, fscores,
                   np.asarray(scored_segments, dtype=np.float64).reshape(-1, 3))


def refine_and_suppress(scores, offsets, n: int, scales, nms_threshold=0.5) -> np.ndarray:
    """Decode every anchor, drop dead or degenerate ones, run NMS.

    Returns rows (start, end, score) of the retained segments.
    """
    starts, ends = anchor_bounds(n, scales)
    segs = decode_offsets_array(starts, ends, offsets[..., 0], offsets[..., 1], n).reshape(-1, 2)
    sc = np.asarray(scores, dtype=np.float64).reshape(-1)
    ok = (sc >= SCORE_FLOOR) & (segs[:, 1] - segs[:, 0] >= 1.0)
    segs, sc = segs[ok], sc[ok]
    keep = nms(segs, sc, nms_threshold)
    return np.column_stack([segs[keep], sc[keep]]) if len(keep) else np.zeros((0, 3))


def make_summary(video, config: RunConfig, params, max_cp=None) -> Summary:
    """Inference-mode keyshot summary for one video's features."""
    video = np.asarray(video, dtype=np.float32)
    cfg = config.model_config()
    preds = model_forward(video, cfg, params, training=False)
    segs = refine_and_suppress(preds.scores, preds.offsets.data, len(video), cfg.anchor_scales,
                               config.nms_threshold)
    return summarize_scores(video, segs, config.summary_ratio, config.kts_penalty, max_cp)
