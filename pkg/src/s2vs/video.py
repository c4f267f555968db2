"""Video ingestion, training-clip sampling, synthetic corpora and feature files."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np

from .errors import EmptyVideoError, FormatError, IngestError

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp")

FEATURE_MAGIC = b"S2VF"
FEATURE_VERSION = 1
_HEADER = struct.Struct("<4sIIII")


@dataclass
class FrameSequence:
    """A decoded clip sampled at one frame per second.

    ``frames`` is a float32 array of shape (T, H, W, 3) with values in [0, 1].
    """

    frames: np.ndarray
    source_id: str = ""
    fps: float = 1.0

    def __post_init__(self):
        frames = np.asarray(self.frames)
        if frames.ndim != 4 or frames.shape[-1] != 3:
            raise ValueError(f"frames must be T x H x W x 3, got {frames.shape}")
        if frames.shape[0] < 1:
            raise EmptyVideoError(f"{self.source_id or 'video'} has no frames")
        self.frames = frames.astype(np.float32, copy=False)

    def __len__(self):
        return self.frames.shape[0]

    @property
    def height(self):
        return self.frames.shape[1]

    @property
    def width(self):
        return self.frames.shape[2]


def _resize_short_side(frame: np.ndarray, short_side: int | None) -> np.ndarray:
    if short_side is None:
        return frame
    h, w = frame.shape[:2]
    scale = short_side / min(h, w)
    size = (max(1, round(w * scale)), max(1, round(h * scale)))
    if size == (w, h):
        return frame
    interp = cv2.INTER_AREA if scale < 1 else cv2.INTER_LINEAR
    return cv2.resize(frame, size, interpolation=interp)


def _to_unit(frame_bgr: np.ndarray) -> np.ndarray:
    rgb = cv2.cvtColor(frame_bgr, cv2.COLOR_BGR2RGB)
    return rgb.astype(np.float32) / 255.0


def load_video(path, short_side: int | None = 256, source_id: str | None = None) -> FrameSequence:
    """Decode ``path`` at 1 fps, resizing so the smaller side equals ``short_side``.

    ``path`` may be a video file or a directory of numbered frame images
    (already at 1 fps, as written by :func:`write_corpus`). Pass
    ``short_side=None`` to keep the native resolution.
    """
    path = Path(path)
    if source_id is None:
        source_id = path.stem if path.is_file() else path.name
    if path.is_dir():
        frames = _load_frame_dir(path, short_side)
    elif path.is_file():
        frames = _load_video_file(path, short_side)
    else:
        raise IngestError(f"cannot read {path}: no such file or directory")
    if not frames:
        raise EmptyVideoError(f"{path} contains no decodable frames")
    return FrameSequence(np.stack(frames), source_id=source_id)


def _load_frame_dir(path: Path, short_side):
    frames = []
    for p in sorted(q for q in path.iterdir() if q.suffix.lower() in IMAGE_SUFFIXES):
        img = cv2.imread(str(p), cv2.IMREAD_COLOR)
        if img is None:
            raise IngestError(f"cannot decode frame {p}")
        frames.append(_resize_short_side(_to_unit(img), short_side))
    return frames


def _load_video_file(path: Path, short_side):
    cap = cv2.VideoCapture(str(path))
    if not cap.isOpened():
        raise IngestError(f"cannot open {path} as a video")
    fps = cap.get(cv2.CAP_PROP_FPS)
    if not np.isfinite(fps) or fps <= 0:
        fps = 1.0
    frames = []
    index = 0
    next_second = 0
    try:
        while True:
            ok, img = cap.read()
            if not ok:
                break
            # keep the first decoded frame at or after each whole second
            if index >= round(next_second * fps):
                frames.append(_resize_short_side(_to_unit(img), short_side))
                next_second += 1
            index += 1
    finally:
        cap.release()
    return frames


def sample_training_clip(seq: FrameSequence, target_len: int, rng: np.random.Generator) -> FrameSequence:
    """Pick ``target_len`` consecutive frames; short videos are tiled cyclically first."""
    if target_len < 1:
        raise ValueError("target_len must be >= 1")
    n = len(seq)
    if n < target_len:
        idx = np.arange(target_len) % n
    else:
        start = int(rng.integers(0, n - target_len + 1))
        idx = np.arange(start, start + target_len)
    return FrameSequence(seq.frames[idx], source_id=seq.source_id, fps=seq.fps)


# ---------------------------------------------------------------------------
# synthetic corpus


@dataclass(frozen=True)
class CorpusSpec:
    num_videos: int = 64
    duration_range: tuple[int, int] = (8, 16)
    motif_count: int = 4
    seed: int = 0
    frame_size: tuple[int, int] = (72, 96)

    def __post_init__(self):
        if self.num_videos < 2:
            raise ValueError("num_videos must be >= 2")
        lo, hi = self.duration_range
        if lo < 4 or hi < lo:
            raise ValueError(f"bad duration_range {self.duration_range}")
        if self.motif_count < 0:
            raise ValueError("motif_count must be >= 0")
        if min(self.frame_size) < 32:
            raise ValueError("frame_size sides must be >= 32")


def _smooth_field(rng, h, w, palette, cells=(3, 4)):
    """Low-frequency colour field mixing palette entries."""
    weights = rng.random((cells[0], cells[1], len(palette))) ** 3
    weights /= weights.sum(-1, keepdims=True)
    coarse = (weights @ palette).astype(np.float32)
    return cv2.resize(coarse, (w, h), interpolation=cv2.INTER_CUBIC)


def _make_motif(rng, size=20):
    colors = rng.random((2, 3))
    yy, xx = np.mgrid[:size, :size]
    kind = rng.integers(3)
    if kind == 0:
        mask = ((yy // 4 + xx // 4) % 2).astype(bool)
    elif kind == 1:
        mask = ((yy + xx) // 3 % 2).astype(bool)
    else:
        r = np.hypot(yy - size / 2, xx - size / 2)
        mask = (r // 3 % 2).astype(bool)
    motif = np.where(mask[..., None], colors[0], colors[1])
    return motif.astype(np.float32)


def _render_shot(rng, length, h, w, palette, motifs):
    background = _smooth_field(rng, h, w, palette)
    texture = rng.normal(0, 0.04, (h // 4 + 1, w // 4 + 1, 3)).astype(np.float32)
    background = np.clip(background + cv2.resize(texture, (w, h), interpolation=cv2.INTER_NEAREST), 0, 1)
    shapes = []
    for _ in range(int(rng.integers(2, 5))):
        shapes.append(dict(
            kind=int(rng.integers(3)),
            color=tuple(float(c) for c in palette[rng.integers(len(palette))] * rng.uniform(0.6, 1.2)),
            size=float(rng.uniform(0.08, 0.22) * min(h, w) * 1.6),
            pos=rng.uniform([0, 0], [w, h]),
            vel=rng.normal(0, 0.08, 2) * np.array([w, h]),
        ))
    motif = None
    if motifs and rng.random() < 0.6:
        motif = dict(img=motifs[rng.integers(len(motifs))],
                     pos=rng.uniform([0, 0], [w - 20, h - 20]),
                     vel=rng.normal(0, 0.04, 2) * np.array([w, h]))
    frames = []
    for t in range(length):
        frame = background.copy()
        for s in shapes:
            cx, cy = s["pos"] + t * s["vel"]
            cx, cy = cx % w, cy % h
            r = int(s["size"] / 2)
            color = tuple(min(1.0, c) for c in s["color"])
            if s["kind"] == 0:
                cv2.circle(frame, (int(cx), int(cy)), r, color, -1)
            elif s["kind"] == 1:
                cv2.rectangle(frame, (int(cx - r), int(cy - r // 2)), (int(cx + r), int(cy + r // 2)), color, -1)
            else:
                pts = np.array([[cx, cy - r], [cx - r, cy + r], [cx + r, cy + r]], np.int32)
                cv2.fillPoly(frame, [pts], color)
        if motif is not None:
            mh, mw = motif["img"].shape[:2]
            x, y = motif["pos"] + t * motif["vel"]
            x = int(np.clip(x, 0, w - mw))
            y = int(np.clip(y, 0, h - mh))
            frame[y:y + mh, x:x + mw] = motif["img"]
        frames.append(frame)
    return frames


def generate_synthetic_corpus(spec: CorpusSpec) -> list[FrameSequence]:
    """Render ``spec.num_videos`` procedural clips; a pure function of ``spec``.

    Each video is a few shots of moving coloured shapes over a textured
    background drawn from a per-video palette. ``motif_count`` textured
    patches are shared across videos, so distinct videos can overlap visually.
    Pixel values are quantized to multiples of 1/255 so the PNG round trip of
    :func:`write_corpus` is lossless.
    """
    h, w = spec.frame_size
    children = np.random.SeedSequence(spec.seed).spawn(spec.num_videos + 1)
    motif_rng = np.random.default_rng(children[0])
    motifs = [_make_motif(motif_rng) for _ in range(spec.motif_count)]
    lo, hi = spec.duration_range
    corpus = []
    for i in range(spec.num_videos):
        rng = np.random.default_rng(children[i + 1])
        length = int(rng.integers(lo, hi + 1))
        palette = rng.random((5, 3))
        n_shots = int(rng.integers(1, max(2, length // 4) + 1))
        cuts = np.sort(rng.choice(np.arange(1, length), size=n_shots - 1, replace=False)) if n_shots > 1 else []
        bounds = [0, *map(int, cuts), length]
        frames = []
        for a, b in zip(bounds[:-1], bounds[1:]):
            frames.extend(_render_shot(rng, b - a, h, w, palette, motifs))
        arr = np.round(np.clip(np.stack(frames), 0, 1) * 255) / 255
        corpus.append(FrameSequence(arr.astype(np.float32), source_id=f"vid{i:04d}"))
    return corpus


def write_corpus(corpus, root, spec: CorpusSpec | None = None) -> Path:
    """Write one directory of numbered PNG frames per video plus ``manifest.json``."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    for seq in corpus:
        vdir = root / seq.source_id
        vdir.mkdir(exist_ok=True)
        for t, frame in enumerate(seq.frames):
            bgr = cv2.cvtColor(np.round(frame * 255).astype(np.uint8), cv2.COLOR_RGB2BGR)
            cv2.imwrite(str(vdir / f"{t:06d}.png"), bgr)
    manifest = {"fps": 1, "source_ids": [s.source_id for s in corpus]}
    if spec is not None:
        manifest["spec"] = {
            "num_videos": spec.num_videos,
            "duration_range": list(spec.duration_range),
            "motif_count": spec.motif_count,
            "seed": spec.seed,
            "frame_size": list(spec.frame_size),
        }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return root


def read_corpus(root, short_side: int | None = None) -> list[FrameSequence]:
    root = Path(root)
    try:
        manifest = json.loads((root / "manifest.json").read_text())
    except (OSError, ValueError) as exc:
        raise IngestError(f"cannot read corpus manifest in {root}: {exc}") from exc
    return [load_video(root / sid, short_side=short_side, source_id=sid) for sid in manifest["source_ids"]]


# ---------------------------------------------------------------------------
# feature files


def write_features(features, path) -> None:
    """Write a T x R x D region feature map as little-endian float32."""
    arr = np.asarray(features)
    if arr.ndim != 3:
        raise ValueError(f"feature map must be T x R x D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("feature map contains non-finite values")
    t, r, d = arr.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(FEATURE_MAGIC, FEATURE_VERSION, t, r, d))
        fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def read_features(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, t, r, d = _HEADER.unpack_from(data)
    if magic != FEATURE_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != FEATURE_VERSION:
        raise FormatError(f"{path}: unsupported version {version} (expected {FEATURE_VERSION})")
    payload = data[_HEADER.size:]
    expected = t * r * d * 4
    if len(payload) != expected:
        raise FormatError(f"{path}: payload has {len(payload) // 4} floats, header declares {t * r * d}")
    return np.frombuffer(payload, dtype="<f4").reshape(t, r, d).astype(np.float32)
