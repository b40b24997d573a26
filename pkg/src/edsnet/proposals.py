"""Anchor-based temporal proposals: generation, tIoU labeling, offsets and NMS."""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

POSITIVE = "positive"
NEG_UNIMPORTANT = "neg_unimportant"
NEG_INCOMPLETE = "neg_incomplete"
IGNORED = "ignored"


@dataclass(frozen=True)
class AnchorConfig:
    scales: tuple = (4, 8, 12)
    pos_tiou: float = 0.6
    neg_band_max: float = 0.3
    neg_per_pos: int = 3
    unimportant_fraction: float = 2.0 / 3.0
    min_neg: int = 8

    def __post_init__(self):
        object.__setattr__(self, "scales", tuple(self.scales))
        if any(s <= 0 for s in self.scales):
            raise ValueError("anchor scales must be positive")
        if not 0 < self.neg_band_max <= self.pos_tiou < 1:
            raise ValueError("need 0 < neg_band_max <= pos_tiou < 1")
        if not 0 < self.unimportant_fraction < 1:
            raise ValueError("unimportant_fraction must lie in (0, 1)")
        if self.neg_per_pos < 0 or self.min_neg < 0:
            raise ValueError("negative sample counts must be non-negative")

    @property
    def ignore_band(self):
        return (self.neg_band_max, self.pos_tiou)


class Proposal(NamedTuple):
    t: int
    k: int
    start: float
    end: float

    @property
    def length(self):
        return self.end - self.start

    @property
    def center(self):
        return 0.5 * (self.start + self.end)


@dataclass(frozen=True)
class GroundTruthSegment:
    start: float
    end: float

    def __post_init__(self):
        if not self.start < self.end:
            raise ValueError(f"degenerate segment [{self.start}, {self.end})")


@dataclass(frozen=True)
class LabeledProposal:
    proposal: Proposal
    label: str
    tiou: float
    matched_gt: GroundTruthSegment | None = None
    offset_target: tuple | None = None


def _bounds(seg):
    if hasattr(seg, "start"):
        return float(seg.start), float(seg.end)
    s, e = seg
    return float(s), float(e)


def anchor_bounds(n: int, scales) -> tuple:
    """Vectorized anchors: (starts, ends), each of shape (n, K)."""
    if len(scales) == 0:
        raise ValueError("anchor scale list is empty")
    if n < 1:
        raise ValueError("need at least one frame")
    t = np.arange(n, dtype=np.float64)[:, None]
    half = np.asarray(scales, dtype=np.float64)[None, :] / 2.0
    return t - half, t + half


def generate_anchors(n: int, cfg: AnchorConfig) -> list:
    """All N*K proposals, ordered by (t, k); ranges are not clipped."""
    starts, ends = anchor_bounds(n, cfg.scales)
    K = len(cfg.scales)
    return [Proposal(t, k, starts[t, k], ends[t, k]) for t in range(n) for k in range(K)]


def tiou(a, b) -> float:
    a0, a1 = _bounds(a)
    b0, b1 = _bounds(b)
    if not (a0 < a1 and b0 < b1):
        raise ValueError("tIoU is undefined for degenerate segments")
    inter = max(0.0, min(a1, b1) - max(a0, b0))
    union = (a1 - a0) + (b1 - b0) - inter
    return inter / union


def tiou_matrix(starts, ends, gt_starts, gt_ends) -> np.ndarray:
    """Pairwise tIoU between P segments and G segments, shape (P, G)."""
    s = np.asarray(starts, float)[:, None]
    e = np.asarray(ends, float)[:, None]
    gs = np.asarray(gt_starts, float)[None, :]
    ge = np.asarray(gt_ends, float)[None, :]
    inter = np.clip(np.minimum(e, ge) - np.maximum(s, gs), 0.0, None)
    union = (e - s) + (ge - gs) - inter
    return inter / union


def encode_offsets(p, g) -> tuple:
    """(dc, dl) = ((c_g - c_p) / l_p, ln(l_g / l_p))."""
    p0, p1 = _bounds(p)
    g0, g1 = _bounds(g)
    lp, lg = p1 - p0, g1 - g0
    if lp <= 0 or lg <= 0:
        raise ValueError("cannot encode offsets of a degenerate segment")
    dc = (0.5 * (g0 + g1) - 0.5 * (p0 + p1)) / lp
    return dc, float(np.log(lg / lp))


def decode_offsets(p, dc, dl, n: int) -> tuple:
    """Refined segment for proposal ``p``, clipped to [0, n]."""
    seg = decode_offsets_array(*_bounds(p), dc, dl, n)
    return float(seg[0]), float(seg[1])


def decode_offsets_array(starts, ends, dc, dl, n: int):
    starts = np.asarray(starts, float)
    ends = np.asarray(ends, float)
    lp = ends - starts
    c = 0.5 * (starts + ends) + np.asarray(dc, float) * lp
    length = lp * np.exp(np.asarray(dl, float))
    lo = np.clip(c - 0.5 * length, 0, n)
    hi = np.clip(c + 0.5 * length, 0, n)
    return np.stack([lo, hi], axis=-1)


def label_bands(best_iou, cfg: AnchorConfig) -> np.ndarray:
    """Label each proposal from its best tIoU (strict > pos_tiou for positives)."""
    best_iou = np.asarray(best_iou)
    labels = np.full(best_iou.shape, IGNORED, dtype=object)
    labels[best_iou > cfg.pos_tiou] = POSITIVE
    labels[best_iou == 0] = NEG_UNIMPORTANT
    labels[(best_iou > 0) & (best_iou < cfg.neg_band_max)] = NEG_INCOMPLETE
    return labels


def sample_indices(best_iou, cfg: AnchorConfig, rng: np.random.Generator) -> dict:
    """Sampled proposal indices per label, following the 1:3 and 2/3:1/3 rules.

    Returns a dict label -> sorted index array over the flattened proposals.
    """
    labels = label_bands(best_iou, cfg)
    pos = np.flatnonzero(labels == POSITIVE)
    unimp = np.flatnonzero(labels == NEG_UNIMPORTANT)
    incomp = np.flatnonzero(labels == NEG_INCOMPLETE)

    want = cfg.neg_per_pos * len(pos) if len(pos) else cfg.min_neg
    n_neg = min(want, len(unimp) + len(incomp))
    n_unimp = int(round(cfg.unimportant_fraction * n_neg))
    n_incomp = n_neg - n_unimp
    # backfill from the other category when one runs short
    if n_unimp > len(unimp):
        n_incomp += n_unimp - len(unimp)
        n_unimp = len(unimp)
    if n_incomp > len(incomp):
        n_unimp += n_incomp - len(incomp)
        n_incomp = len(incomp)

    return {
        POSITIVE: pos,
        NEG_UNIMPORTANT: np.sort(rng.choice(unimp, n_unimp, replace=False)),
        NEG_INCOMPLETE: np.sort(rng.choice(incomp, n_incomp, replace=False)),
    }


def assign_labels(proposals, gts, cfg: AnchorConfig, rng: np.random.Generator) -> list:
    """Label proposals by their best-matching ground truth and draw the training sample."""
    gts = [g if isinstance(g, GroundTruthSegment) else GroundTruthSegment(*_bounds(g)) for g in gts]
    if not gts:
        raise ValueError("assign_labels needs at least one ground-truth segment")
    proposals = list(proposals)
    starts = np.array([p.start for p in proposals])
    ends = np.array([p.end for p in proposals])
    ious = tiou_matrix(starts, ends, [g.start for g in gts], [g.end for g in gts])
    best = ious.max(axis=1)
    match = ious.argmax(axis=1)

    picked = sample_indices(best, cfg, rng)
    out = []
    for label, idx in picked.items():
        for i in idx:
            p = proposals[i]
            if label == POSITIVE:
                g = gts[match[i]]
                out.append(LabeledProposal(p, label, float(best[i]), g, encode_offsets(p, g)))
            else:
                out.append(LabeledProposal(p, label, float(best[i])))
    out.sort(key=lambda lp: (lp.proposal.t, lp.proposal.k))
    return out


def nms(segments, scores, threshold: float = 0.5) -> np.ndarray:
    """Greedy non-maximum suppression; returns kept indices in keep order.

    Candidates are ranked by score (descending), then earlier start, then
    shorter length, so the result does not depend on input order.
    """
    segs = np.asarray(segments, dtype=float).reshape(-1, 2)
    scores = np.asarray(scores, dtype=float).reshape(-1)
    if len(segs) == 0:
        return np.zeros(0, dtype=np.intp)
    if not np.isfinite(scores).all():
        raise ValueError("nms scores must be finite")
    starts, ends = segs[:, 0], segs[:, 1]
    order = np.lexsort((ends - starts, starts, -scores))
    alive = np.ones(len(segs), dtype=bool)
    keep = []
    for i in order:
        if not alive[i]:
            continue
        keep.append(i)
        alive[i] = False
        cand = np.flatnonzero(alive)
        if len(cand) == 0:
            break
        ov = tiou_matrix(starts[cand], ends[cand], starts[i:i + 1], ends[i:i + 1])[:, 0]
        alive[cand[ov > threshold]] = False
    return np.asarray(keep, dtype=np.intp)
