"""EDSF feature archives, dataset manifests, synthetic planted-keyshot data and folds.

EDSF layout (little-endian)::

    offset  size  field
    0       4     magic b"EDSF"
    4       4     version (u32, = 1)
    8       4     n_frames (u32)
    12      4     feat_dim (u32)
    16      4*n_frames*feat_dim   float32 payload, row-major
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"EDSF"
VERSION = 1
_HEADER = struct.Struct("<4sIII")


class FormatError(ValueError):
    """Malformed archive or manifest."""


# ---------------------------------------------------------------------------
# archives


def write_archive(features, path) -> None:
    feats = np.asarray(features, dtype="<f4")
    if feats.ndim != 2:
        raise ValueError(f"features must be 2-D (n_frames, feat_dim), got {feats.shape}")
    if not np.isfinite(feats).all():
        raise ValueError("features contain non-finite values")
    n, d = feats.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, n, d))
        fh.write(np.ascontiguousarray(feats).tobytes())


def read_header(path) -> tuple:
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER.size)
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, n, d = _HEADER.unpack(raw)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    return n, d


def read_archive(path) -> np.ndarray:
    """Load an (n_frames, feat_dim) float32 array, validating the header."""
    n, d = read_header(path)
    raw = Path(path).read_bytes()[_HEADER.size:]
    want = 4 * n * d
    if len(raw) != want:
        raise FormatError(f"{path}: payload has {len(raw)} bytes, header implies {want}")
    feats = np.frombuffer(raw, dtype="<f4").reshape(n, d).astype(np.float32)
    if not np.isfinite(feats).all():
        raise FormatError(f"{path}: payload contains non-finite values")
    return feats


# ---------------------------------------------------------------------------
# masks


def mask_to_runs(mask) -> list:
    """Boolean mask -> list of [start, end) runs of True."""
    m = np.asarray(mask, dtype=bool).astype(np.int8)
    edges = np.diff(np.concatenate([[0], m, [0]]))
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1)
    return [[int(s), int(e)] for s, e in zip(starts, ends)]


def runs_to_mask(runs, n: int) -> np.ndarray:
    mask = np.zeros(n, dtype=bool)
    for s, e in runs:
        if not 0 <= s < e <= n:
            raise FormatError(f"run [{s}, {e}) outside [0, {n})")
        mask[s:e] = True
    return mask


# ---------------------------------------------------------------------------
# manifests


@dataclass
class VideoEntry:
    id: str
    n_frames: int
    feature_path: str
    fps: float = 2.0
    gt_segments: list = field(default_factory=list)
    user_summaries: list = field(default_factory=list)
    importance: list | None = None

    def user_masks(self) -> list:
        return [runs_to_mask(r, self.n_frames) for r in self.user_summaries]

    def gt_mask(self) -> np.ndarray:
        return runs_to_mask(self.gt_segments, self.n_frames)


@dataclass
class Manifest:
    name: str
    videos: list
    f1_mode: str = "max_over_users"
    root: Path = field(default=Path("."), compare=False)

    def features(self, video: VideoEntry) -> np.ndarray:
        return read_archive(self.root / video.feature_path)

    def to_json_dict(self) -> dict:
        return {
            "name": self.name,
            "f1_mode": self.f1_mode,
            "videos": [{k: v for k, v in asdict(vid).items() if v is not None} for vid in self.videos],
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), indent=1, sort_keys=True))

    def subset(self, indices) -> "Manifest":
        return Manifest(self.name, [self.videos[i] for i in indices], self.f1_mode, self.root)


F1_MODES = ("max_over_users", "mean_over_users")


def load_manifest(path, check_archives=True) -> Manifest:
    path = Path(path)
    if not path.is_file():
        raise FormatError(f"manifest not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from None
    try:
        videos = [VideoEntry(**v) for v in data["videos"]]
        manifest = Manifest(data["name"], videos, data.get("f1_mode", "max_over_users"), path.parent)
    except (KeyError, TypeError) as exc:
        raise FormatError(f"{path}: malformed manifest ({exc})") from None
    validate_manifest(manifest, check_archives)
    return manifest


def validate_manifest(manifest: Manifest, check_archives=True) -> None:
    if manifest.f1_mode not in F1_MODES:
        raise FormatError(f"f1_mode must be one of {F1_MODES}")
    seen = set()
    for v in manifest.videos:
        if v.id in seen:
            raise FormatError(f"duplicate video id {v.id!r}")
        seen.add(v.id)
        if not v.gt_segments and not v.user_summaries:
            raise FormatError(f"video {v.id!r} has neither gt_segments nor user_summaries")
        for s, e in v.gt_segments:
            if not 0 <= s < e <= v.n_frames:
                raise FormatError(f"video {v.id!r}: gt segment [{s}, {e}) outside [0, {v.n_frames}]")
        v.user_masks()
        if check_archives:
            archive = manifest.root / v.feature_path
            if not archive.is_file():
                raise FormatError(f"video {v.id!r}: archive {archive} does not exist")
            n, _ = read_header(archive)
            if n != v.n_frames:
                raise FormatError(f"video {v.id!r}: manifest says {v.n_frames} frames, archive has {n}")


# ---------------------------------------------------------------------------
# synthetic planted-keyshot data


@dataclass(frozen=True)
class SyntheticSpec:
    """Planted-keyshot dataset parameters.

    Background frames are non-negative unit-norm noise (like pooled CNN
    activations). Each keyshot adds ``snr`` times its own non-negative unit
    direction. Distractor segments add a zero-mean direction of the same
    norm, so they stand out to KTS without being keyshots.
    """

    n_videos: int = 10
    n_frames: int = 200
    feat_dim: int = 64
    n_keyshots: int = 2
    keyshot_len: tuple = (8, 14)
    n_distractors: int = 5
    snr: float = 3.0
    summary_ratio: float = 0.15
    seed: int = 7

    def __post_init__(self):
        object.__setattr__(self, "keyshot_len", tuple(int(x) for x in self.keyshot_len))
        lo, hi = self.keyshot_len
        if self.n_videos < 1 or self.n_frames < 2 or self.feat_dim < 1 or self.n_keyshots < 1:
            raise ValueError("n_videos, n_frames, feat_dim and n_keyshots must be positive")
        if not 1 <= lo <= hi:
            raise ValueError("keyshot_len must be a (min, max) pair with 1 <= min <= max")
        if self.snr < 0 or self.n_distractors < 0:
            raise ValueError("snr and n_distractors must be non-negative")
        budget = math.floor(self.summary_ratio * self.n_frames)
        if self.n_keyshots * hi > budget:
            raise ValueError(
                f"infeasible spec: {self.n_keyshots} keyshots of up to {hi} frames exceed "
                f"the {budget}-frame summary budget"
            )
        if (self.n_keyshots + self.n_distractors) * (hi + 4) > self.n_frames:
            raise ValueError("planted segments do not fit in the video")

    @classmethod
    def from_dict(cls, data: dict) -> "SyntheticSpec":
        try:
            return cls(**data)
        except TypeError as exc:
            raise ValueError(str(exc)) from None


def _unit_rows(x):
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


def _place(rng, n_frames, lengths, gap=4):
    """Random starts for non-overlapping segments at least ``gap`` frames apart."""
    lengths = np.asarray(lengths)
    for _ in range(10000):
        starts = rng.integers(gap, n_frames - lengths - gap + 1)
        order = np.argsort(starts)
        s, ln = starts[order], lengths[order]
        if np.all(s[1:] >= s[:-1] + ln[:-1] + gap):
            return starts
    raise ValueError("could not place planted segments")


def synth_video(spec: SyntheticSpec, rng: np.random.Generator):
    """One video: (features, keyshot segments, distractor segments)."""
    n, d = spec.n_frames, spec.feat_dim
    lo, hi = spec.keyshot_len
    feats = _unit_rows(np.abs(rng.standard_normal((n, d))))
    n_seg = spec.n_keyshots + spec.n_distractors
    lengths = rng.integers(lo, hi + 1, size=n_seg)
    starts = _place(rng, n, lengths)
    keys, distractors = [], []
    for i, (s, length) in enumerate(zip(starts, lengths)):
        e = int(s + length)
        if i < spec.n_keyshots:
            direction = _unit_rows(np.abs(rng.standard_normal(d)))
            keys.append([int(s), e])
        else:
            direction = _unit_rows(rng.standard_normal(d))
            distractors.append([int(s), e])
        feats[s:e] += spec.snr * direction
    keys.sort()
    distractors.sort()
    return feats.astype(np.float32), keys, distractors


def gen_synthetic(spec: SyntheticSpec, out_dir) -> Manifest:
    """Write archives plus ``manifest.json`` under ``out_dir``; deterministic in the seed."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(spec.seed)
    videos = []
    for i in range(spec.n_videos):
        feats, keys, _ = synth_video(spec, rng)
        vid = f"synth_{i:03d}"
        rel = f"{vid}.edsf"
        write_archive(feats, out_dir / rel)
        videos.append(VideoEntry(vid, spec.n_frames, rel, 2.0, keys, [keys]))
    manifest = Manifest(f"synthetic-seed{spec.seed}", videos, "max_over_users", out_dir)
    manifest.save(out_dir / "manifest.json")
    return manifest


# ---------------------------------------------------------------------------
# folds


def split_folds(n_videos, folds=5, fraction=None, seed=0) -> list:
    """Seeded k-fold partition; returns ``[(train_idx, test_idx), ...]``.

    ``n_videos`` may be a count or a :class:`Manifest`. ``fraction`` (the train
    share) is only checked for consistency with ``folds``.
    """
    if isinstance(n_videos, Manifest):
        n_videos = len(n_videos.videos)
    if folds < 2:
        raise ValueError("need at least two folds")
    if n_videos < folds:
        raise ValueError(f"{n_videos} videos cannot fill {folds} folds")
    if fraction is not None and abs(fraction - (1 - 1 / folds)) > 0.05:
        raise ValueError(f"train fraction {fraction} is inconsistent with {folds} folds")
    perm = np.random.default_rng(seed).permutation(n_videos)
    parts = np.array_split(perm, folds)
    out = []
    for i, test in enumerate(parts):
        train = np.concatenate([p for j, p in enumerate(parts) if j != i])
        out.append((np.sort(train), np.sort(test)))
    return out
