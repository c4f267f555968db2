"""Weak and strong video augmentations, TSD and video-in-video mixing.

All spatial transforms that must be consistent across a clip are run through
OpenCV on a channel-stacked (H, W, 3T) view, so one call transforms every
frame with exactly the same parameters.
"""

from __future__ import annotations

import string
from dataclasses import dataclass, fields
from functools import lru_cache

import cv2
import numpy as np

from .video import FrameSequence

EMPTY = -1
NOISE = -2

TEMPORAL_OPS = ("tsd", "fast_forward", "slow_motion", "reverse", "pause")


@dataclass
class AugmentConfig:
    T_B: int = 32
    H_B: int = 224
    N_RAug: int = 2
    M_RAug: int = 9
    p_overlay: float = 0.3
    p_blur: float = 0.5
    p_tsd: float = 0.5
    p_ff: float = 0.1
    p_sm: float = 0.1
    p_rev: float = 0.1
    p_pau: float = 0.1
    p_shuf: float = 0.5
    p_drop: float = 0.3
    p_cont: float = 0.5
    p_viv: float = 0.3
    lambda_viv: tuple[float, float] = (0.3, 0.7)
    # area fraction range of the weak random resized crop
    crop_scale: tuple[float, float] = (0.5, 1.0)

    def __post_init__(self):
        self.lambda_viv = tuple(float(x) for x in self.lambda_viv)
        self.crop_scale = tuple(float(x) for x in self.crop_scale)
        self.validate()

    def validate(self):
        for f in fields(self):
            if f.name.startswith("p_"):
                p = getattr(self, f.name)
                if not 0.0 <= p <= 1.0:
                    raise ValueError(f"{f.name}={p} is not a probability")
        if sum(self.temporal_probs) > 1.0 + 1e-12:
            raise ValueError("p_tsd + p_ff + p_sm + p_rev + p_pau must not exceed 1")
        lo, hi = self.lambda_viv
        if not 0.0 < lo <= hi < 1.0:
            raise ValueError(f"lambda_viv={self.lambda_viv} must lie inside (0, 1)")
        if self.T_B < 8 or self.T_B % 4:
            raise ValueError(f"T_B={self.T_B} must be >= 8 and divisible by 4")
        if self.N_RAug < 0 or not 0 <= self.M_RAug <= 30:
            raise ValueError("N_RAug must be >= 0 and M_RAug in [0, 30]")
        if self.H_B < 32:
            raise ValueError("H_B must be >= 32")
        a, b = self.crop_scale
        if not 0.0 < a <= b <= 1.0:
            raise ValueError(f"crop_scale={self.crop_scale} must lie in (0, 1]")

    @property
    def temporal_probs(self):
        return (self.p_tsd, self.p_ff, self.p_sm, self.p_rev, self.p_pau)


@dataclass
class AugmentedClip:
    frames: np.ndarray
    origin_ids: tuple[str, ...]

    def __len__(self):
        return self.frames.shape[0]


@dataclass(frozen=True)
class BatchLabeling:
    """Positive / negative column sets per batch row (0-based indices)."""

    positives: tuple[frozenset, ...]
    negatives: tuple[frozenset, ...]

    @property
    def B(self):
        return len(self.positives)

    @property
    def num_positive_pairs(self):
        return sum(len(p) for p in self.positives)

    def positive_mask(self) -> np.ndarray:
        mask = np.zeros((self.B, self.B), dtype=bool)
        for i, cols in enumerate(self.positives):
            mask[i, list(cols)] = True
        return mask

    def negative_mask(self) -> np.ndarray:
        mask = np.zeros((self.B, self.B), dtype=bool)
        for i, cols in enumerate(self.negatives):
            mask[i, list(cols)] = True
        return mask

    def permuted(self, perm) -> BatchLabeling:
        """Labeling of the batch reordered so that new row ``k`` is old row ``perm[k]``."""
        inv = {int(old): new for new, old in enumerate(perm)}
        pos = tuple(frozenset(inv[j] for j in self.positives[old]) for old in perm)
        neg = tuple(frozenset(inv[j] for j in self.negatives[old]) for old in perm)
        return BatchLabeling(pos, neg)


def labeling_from_origins(origins) -> BatchLabeling:
    """Rows i != j are positives iff their origin-id sets intersect."""
    sets = [set(o) for o in origins]
    pos, neg = [], []
    for i, oi in enumerate(sets):
        p = frozenset(j for j, oj in enumerate(sets) if j != i and oi & oj)
        pos.append(p)
        neg.append(frozenset(j for j in range(len(sets)) if j != i and j not in p))
    return BatchLabeling(tuple(pos), tuple(neg))


# ---------------------------------------------------------------------------
# clip-consistent spatial helpers


def resize_frames(frames, width, height, interp=cv2.INTER_LINEAR) -> np.ndarray:
    """Resize every frame of a (T, H, W, C) stack to ``height`` x ``width``."""
    return np.stack([cv2.resize(np.ascontiguousarray(f), (width, height), interpolation=interp)
                     .reshape(height, width, -1) for f in frames])


def crop_resize(frames, top, left, height, width, size) -> np.ndarray:
    crop = frames[:, top:top + height, left:left + width]
    interp = cv2.INTER_AREA if height > size and width > size else cv2.INTER_LINEAR
    return resize_frames(crop, size, size, interp)


def hflip(frames) -> np.ndarray:
    return np.ascontiguousarray(frames[:, :, ::-1])


def center_view(seq: FrameSequence, size: int = 224) -> np.ndarray:
    """Deterministic evaluation view: centre square crop resized to ``size``."""
    h, w = seq.height, seq.width
    side = min(h, w)
    return crop_resize(seq.frames, (h - side) // 2, (w - side) // 2, side, side, size)


@dataclass(frozen=True)
class WeakParams:
    start: int
    top: int
    left: int
    height: int
    width: int
    flip: bool


def sample_weak_params(num_frames, height, width, cfg: AugmentConfig, rng) -> WeakParams:
    start = int(rng.integers(0, max(0, num_frames - cfg.T_B) + 1))
    area = height * width
    for _ in range(10):
        target = area * rng.uniform(*cfg.crop_scale)
        ratio = np.exp(rng.uniform(np.log(3 / 4), np.log(4 / 3)))
        w = int(round(np.sqrt(target * ratio)))
        h = int(round(np.sqrt(target / ratio)))
        if 0 < w <= width and 0 < h <= height:
            top = int(rng.integers(0, height - h + 1))
            left = int(rng.integers(0, width - w + 1))
            break
    else:
        h = w = min(height, width)
        top, left = (height - h) // 2, (width - w) // 2
    flip = bool(rng.random() < 0.5)
    return WeakParams(start, top, left, h, w, flip)


def apply_weak(frames, params: WeakParams, size: int) -> np.ndarray:
    out = crop_resize(frames, params.top, params.left, params.height, params.width, size)
    return hflip(out) if params.flip else out


def _check_clip2t(clip2T: FrameSequence, cfg):
    if len(clip2T) != 2 * cfg.T_B:
        raise ValueError(f"expected a clip of 2*T_B={2 * cfg.T_B} frames, got {len(clip2T)}")


def weak_augment(clip2T: FrameSequence, cfg: AugmentConfig, rng) -> AugmentedClip:
    """Temporal crop of T_B frames, random resized crop to H_B and a horizontal flip."""
    _check_clip2t(clip2T, cfg)
    p = sample_weak_params(len(clip2T), clip2T.height, clip2T.width, cfg, rng)
    frames = clip2T.frames[p.start:p.start + cfg.T_B]
    return AugmentedClip(apply_weak(frames, p, cfg.H_B), (clip2T.source_id,))


# ---------------------------------------------------------------------------
# global transformations (RandAugment without blur-type ops)

RANDAUGMENT_OPS = (
    "identity", "shear_x", "shear_y", "translate_x", "translate_y", "rotate",
    "brightness", "color", "contrast", "posterize", "solarize", "autocontrast", "equalize",
)
_SIGNED = {"shear_x", "shear_y", "translate_x", "translate_y", "rotate", "brightness", "color", "contrast"}


def sample_randaugment(cfg: AugmentConfig, rng) -> list[tuple[str, float]]:
    """Draw ``N_RAug`` (op, signed magnitude fraction) pairs for one video."""
    ops = []
    level = cfg.M_RAug / 30.0
    for _ in range(cfg.N_RAug):
        name = RANDAUGMENT_OPS[int(rng.integers(len(RANDAUGMENT_OPS)))]
        sign = -1.0 if (name in _SIGNED and rng.random() < 0.5) else 1.0
        ops.append((name, sign * level))
    return ops


def _affine(frames, matrix):
    # per frame: OpenCV's warp path for more than 4 channels quantizes sample positions
    h, w = frames.shape[1:3]
    return np.stack([cv2.warpAffine(np.ascontiguousarray(f), matrix, (w, h), flags=cv2.INTER_LINEAR,
                                    borderMode=cv2.BORDER_CONSTANT, borderValue=0) for f in frames])


def _gray(frames):
    return frames @ np.array([0.299, 0.587, 0.114], dtype=np.float32)


def apply_randaugment_op(frames, name, level) -> np.ndarray:
    """Apply one op with magnitude ``level`` (signed fraction of the maximum)."""
    h, w = frames.shape[1:3]
    cx, cy = w / 2, h / 2
    if name == "identity":
        return frames
    if name in ("shear_x", "shear_y"):
        s = 0.3 * level
        m = np.array([[1, s, -s * cy], [0, 1, 0]]) if name == "shear_x" else np.array([[1, 0, 0], [s, 1, -s * cx]])
        return _affine(frames, m.astype(np.float64))
    if name in ("translate_x", "translate_y"):
        d = 150 / 331 * level
        m = np.array([[1, 0, d * w if name == "translate_x" else 0], [0, 1, d * h if name == "translate_y" else 0]])
        return _affine(frames, m.astype(np.float64))
    if name == "rotate":
        return _affine(frames, cv2.getRotationMatrix2D((cx, cy), 30.0 * level, 1.0))
    if name == "brightness":
        return np.clip(frames * (1 + 0.9 * level), 0, 1)
    if name == "color":
        g = _gray(frames)[..., None]
        return np.clip(g + (1 + 0.9 * level) * (frames - g), 0, 1)
    if name == "contrast":
        m = _gray(frames).mean(axis=(1, 2), keepdims=True)[..., None]
        return np.clip(m + (1 + 0.9 * level) * (frames - m), 0, 1)
    if name == "posterize":
        bits = int(8 - 4 * abs(level))
        q = (np.round(frames * 255).astype(np.uint8) >> (8 - bits)) << (8 - bits)
        return q.astype(np.float32) / 255
    if name == "solarize":
        thr = 1.0 - abs(level)
        return np.where(frames >= thr, 1.0 - frames, frames).astype(np.float32)
    if name == "autocontrast":
        lo = frames.min(axis=(1, 2), keepdims=True)
        hi = frames.max(axis=(1, 2), keepdims=True)
        span = np.where(hi > lo, hi - lo, 1.0)
        return np.where(hi > lo, (frames - lo) / span, frames).astype(np.float32)
    if name == "equalize":
        u8 = np.round(frames * 255).astype(np.uint8)
        out = np.empty_like(u8)
        for t in range(u8.shape[0]):
            for c in range(3):
                out[t, :, :, c] = cv2.equalizeHist(np.ascontiguousarray(u8[t, :, :, c]))
        return out.astype(np.float32) / 255
    raise KeyError(name)


def global_transform(frames, cfg: AugmentConfig, rng, ops=None) -> np.ndarray:
    """RandAugment with every op sampled once per video and applied to all frames."""
    if ops is None:
        ops = sample_randaugment(cfg, rng)
    out = frames
    for name, level in ops:
        out = apply_randaugment_op(out, name, level)
    return np.asarray(out, dtype=np.float32)


# ---------------------------------------------------------------------------
# frame transformations


@lru_cache(maxsize=1)
def glyphs() -> tuple[np.ndarray, ...]:
    """Small RGBA emoji-like rasters used for overlays."""
    size = 64
    out = []

    def canvas():
        return np.zeros((size, size, 4), np.float32)

    g = canvas()  # smiley
    cv2.circle(g, (32, 32), 30, (1.0, 0.85, 0.1, 1.0), -1)
    cv2.circle(g, (22, 24), 5, (0, 0, 0, 1.0), -1)
    cv2.circle(g, (42, 24), 5, (0, 0, 0, 1.0), -1)
    cv2.ellipse(g, (32, 38), (16, 12), 0, 10, 170, (0, 0, 0, 1.0), 4)
    out.append(g)
    g = canvas()  # heart
    cv2.circle(g, (20, 22), 15, (0.9, 0.1, 0.2, 1.0), -1)
    cv2.circle(g, (44, 22), 15, (0.9, 0.1, 0.2, 1.0), -1)
    cv2.fillPoly(g, [np.array([[6, 28], [58, 28], [32, 60]], np.int32)], (0.9, 0.1, 0.2, 1.0))
    out.append(g)
    g = canvas()  # star
    ang = np.linspace(-np.pi / 2, 3.5 * np.pi, 10, endpoint=False)
    rad = np.where(np.arange(10) % 2 == 0, 30, 12)
    pts = np.stack([32 + rad * np.cos(ang), 32 + rad * np.sin(ang)], 1).astype(np.int32)
    cv2.fillPoly(g, [pts], (1.0, 0.8, 0.0, 1.0))
    out.append(g)
    g = canvas()  # thumbs-up-ish block glyph
    cv2.rectangle(g, (10, 28), (54, 58), (0.2, 0.5, 1.0, 1.0), -1)
    cv2.rectangle(g, (24, 6), (38, 30), (0.2, 0.5, 1.0, 1.0), -1)
    cv2.rectangle(g, (10, 28), (54, 58), (0.0, 0.0, 0.3, 1.0), 3)
    out.append(g)
    g = canvas()  # face with open mouth
    cv2.circle(g, (32, 32), 30, (0.3, 0.9, 0.4, 1.0), -1)
    cv2.circle(g, (32, 42), 9, (0.1, 0.0, 0.0, 1.0), -1)
    cv2.rectangle(g, (16, 18), (26, 24), (0, 0, 0, 1.0), -1)
    cv2.rectangle(g, (38, 18), (48, 24), (0, 0, 0, 1.0), -1)
    out.append(g)
    return tuple(out)


def overlay_text(frame, rng) -> np.ndarray:
    h, w = frame.shape[:2]
    text = "".join(rng.choice(list(string.ascii_letters + string.digits + " !?#"), size=int(rng.integers(3, 11))))
    scale = rng.uniform(0.4, 1.4) * w / 224
    thickness = int(rng.integers(1, 4))
    (tw, th), base = cv2.getTextSize(text, cv2.FONT_HERSHEY_SIMPLEX, scale, thickness)
    x = int(rng.integers(0, max(1, w - tw)))
    y = int(rng.integers(min(th, h - 1), max(th + 1, h - base)))
    color = tuple(float(c) for c in rng.random(3))
    # text rendering needs an 8-bit canvas; draw a coverage mask and blend
    mask = np.zeros((h, w), np.uint8)
    cv2.putText(mask, text, (x, y), cv2.FONT_HERSHEY_SIMPLEX, scale, 255, thickness, cv2.LINE_AA)
    alpha = (mask.astype(np.float32) / 255.0)[..., None]
    return alpha * np.asarray(color, np.float32) + (1 - alpha) * frame


def overlay_glyph(frame, rng) -> np.ndarray:
    h, w = frame.shape[:2]
    glyph = glyphs()[int(rng.integers(len(glyphs())))]
    side = max(4, int(round(rng.uniform(0.1, 0.35) * min(h, w))))
    g = cv2.resize(glyph, (side, side), interpolation=cv2.INTER_AREA)
    top = int(rng.integers(0, h - side + 1))
    left = int(rng.integers(0, w - side + 1))
    out = frame.copy()
    region = out[top:top + side, left:left + side]
    alpha = g[..., 3:4]
    out[top:top + side, left:left + side] = alpha * g[..., :3] + (1 - alpha) * region
    return out


def blur(frame, rng) -> np.ndarray:
    return cv2.GaussianBlur(frame, (0, 0), rng.uniform(1.0, 3.0))


def frame_transform(frames, cfg: AugmentConfig, rng) -> np.ndarray:
    """Per-frame text / emoji overlays and Gaussian blur, each drawn independently."""
    out = []
    for frame in frames:
        if rng.random() < cfg.p_overlay:
            frame = overlay_text(frame, rng)
        if rng.random() < cfg.p_overlay:
            frame = overlay_glyph(frame, rng)
        if rng.random() < cfg.p_blur:
            frame = blur(frame, rng)
        out.append(frame)
    return np.clip(np.stack(out), 0, 1).astype(np.float32)


# ---------------------------------------------------------------------------
# temporal transformations (index level)


def tile_to_length(idx, length) -> np.ndarray:
    idx = np.asarray(idx, dtype=np.int64)
    if len(idx) == 0:
        raise ValueError("cannot tile an empty index list")
    if len(idx) >= length:
        return idx[:length]
    return idx[np.arange(length) % len(idx)]


def fast_forward_indices(num_frames, length, start=0, stride=2) -> np.ndarray:
    idx = np.arange(start, num_frames, stride)[:length]
    return tile_to_length(idx, length)


def slow_motion_indices(num_frames, length, start=0, factor=2) -> np.ndarray:
    m = -(-length // factor)
    idx = tile_to_length(np.arange(start, num_frames), m)
    return np.repeat(idx, factor)[:length]


def reverse_indices(num_frames, length, start=0) -> np.ndarray:
    return tile_to_length(np.arange(start, num_frames), length)[::-1].copy()


def pause_indices(num_frames, length, start=0, at=0, k=2) -> np.ndarray:
    window = tile_to_length(np.arange(start, num_frames), length)
    idx = np.concatenate([window[:at], np.repeat(window[at], k), window[at + 1:]])
    return idx[:length]


@dataclass(frozen=True)
class TSDSegment:
    """One clip of a TSD plan: source indices and what happened to it."""

    source: tuple[int, ...]
    action: str  # "keep", "empty", "noise" or "discard"


def tsd_plan(window, cfg: AugmentConfig, rng) -> list[TSDSegment]:
    """Split ``window`` into clips of one random length, shuffle, then drop."""
    window = np.asarray(window)
    hi = max(4, cfg.T_B // 2)
    ell = int(rng.integers(4, hi + 1))
    clips = [tuple(int(i) for i in window[s:s + ell]) for s in range(0, len(window), ell)]
    if rng.random() < cfg.p_shuf:
        clips = [clips[i] for i in rng.permutation(len(clips))]
    plan = []
    for c in clips:
        action = "keep"
        if rng.random() < cfg.p_drop:
            if rng.random() < cfg.p_cont:
                action = "empty" if rng.random() < 0.5 else "noise"
            else:
                action = "discard"
        plan.append(TSDSegment(c, action))
    return plan


def tsd_indices(window, cfg: AugmentConfig, rng, return_plan=False):
    plan = tsd_plan(window, cfg, rng)
    parts = []
    for seg in plan:
        if seg.action == "keep":
            parts.append(np.asarray(seg.source))
        elif seg.action == "empty":
            parts.append(np.full(len(seg.source), EMPTY))
        elif seg.action == "noise":
            parts.append(np.full(len(seg.source), NOISE))
    if not parts:
        # every clip discarded: fall back to the first clip unchanged
        parts = [np.asarray(plan[0].source)]
    idx = tile_to_length(np.concatenate(parts), cfg.T_B)
    return (idx, plan) if return_plan else idx


def sample_temporal_indices(num_frames, cfg: AugmentConfig, rng, start=None):
    """Choose one temporal op per video and return (op name, index list of length T_B).

    ``start`` is the weak temporal crop used by the identity branch and by the
    window-based ops; drawn from ``rng`` when omitted.
    """
    n = cfg.T_B
    if start is None:
        start = int(rng.integers(0, max(0, num_frames - n) + 1))
    u = rng.random()
    cum = np.cumsum(cfg.temporal_probs)
    k = int(np.searchsorted(cum, u, side="right"))
    name = TEMPORAL_OPS[k] if k < len(TEMPORAL_OPS) else "identity"
    window = tile_to_length(np.arange(start, num_frames), n)
    if name == "identity":
        return name, window
    if name == "tsd":
        return name, tsd_indices(window, cfg, rng)
    if name == "fast_forward":
        ff_start = int(rng.integers(0, max(0, num_frames - 2 * n) + 1))
        return name, fast_forward_indices(num_frames, n, ff_start, 2)
    if name == "slow_motion":
        return name, slow_motion_indices(num_frames, n, start, 2)
    if name == "reverse":
        return name, reverse_indices(num_frames, n, start)
    at = int(rng.integers(0, n))
    kk = int(rng.integers(2, max(2, n // 4) + 1))
    return name, pause_indices(num_frames, n, start, at, kk)


def materialize(frames, idx, rng) -> np.ndarray:
    """Gather ``frames[idx]``, rendering EMPTY as black and NOISE as Gaussian noise."""
    idx = np.asarray(idx)
    shape = (len(idx),) + frames.shape[1:]
    out = np.empty(shape, dtype=np.float32)
    real = idx >= 0
    out[real] = frames[idx[real]]
    out[idx == EMPTY] = 0.0
    n_noise = int((idx == NOISE).sum())
    if n_noise:
        noise = rng.normal(0.5, 0.25, (n_noise,) + frames.shape[1:])
        out[idx == NOISE] = np.clip(noise, 0, 1)
    return out


def temporal_transform(frames, cfg: AugmentConfig, rng) -> np.ndarray:
    """One of TSD / fast-forward / slow-motion / reverse / pause (or identity), T_B frames out."""
    if len(frames) < cfg.T_B:
        raise ValueError(f"need at least T_B={cfg.T_B} frames, got {len(frames)}")
    _, idx = sample_temporal_indices(len(frames), cfg, rng)
    return materialize(frames, idx, rng)


def tsd(frames, cfg: AugmentConfig, rng) -> np.ndarray:
    """Temporal Shuffle-Dropout on a clip of T_B frames."""
    idx = tsd_indices(np.arange(len(frames)), cfg, rng)
    return materialize(frames, idx, rng)


# ---------------------------------------------------------------------------
# strong augmentation and video-in-video


def strong_augment(clip2T: FrameSequence, cfg: AugmentConfig, rng) -> AugmentedClip:
    """Weak -> global -> frame -> temporal, producing exactly T_B frames.

    Only the source frames the temporal op keeps are rendered; duplicated
    frames share their per-frame transform, as if every op ran on the whole
    2*T_B clip before temporal selection.
    """
    _check_clip2t(clip2T, cfg)
    weak = sample_weak_params(len(clip2T), clip2T.height, clip2T.width, cfg, rng)
    ops = sample_randaugment(cfg, rng)
    _, idx = sample_temporal_indices(len(clip2T), cfg, rng, start=weak.start)
    used = np.unique(idx[idx >= 0])
    if not len(used):
        # all-synthetic output (every TSD clip blanked); render one unused frame
        used = np.array([weak.start])
    frames = apply_weak(clip2T.frames[used], weak, cfg.H_B)
    frames = global_transform(frames, cfg, rng, ops=ops)
    frames = frame_transform(frames, cfg, rng)
    pos = np.searchsorted(used, np.where(idx >= 0, idx, used[0]))
    local = np.where(idx >= 0, pos, idx)
    return AugmentedClip(materialize(frames, local, rng), (clip2T.source_id,))


def paste_clip(host, donor, scale, top, left) -> np.ndarray:
    """Downscale ``donor`` by ``scale`` and paste it at a fixed location in every host frame."""
    h, w = host.shape[1:3]
    side_h, side_w = max(1, int(round(scale * donor.shape[1]))), max(1, int(round(scale * donor.shape[2])))
    if top < 0 or left < 0 or top + side_h > h or left + side_w > w:
        raise ValueError("pasted donor would fall outside the host frame")
    small = resize_frames(donor, side_w, side_h, cv2.INTER_AREA)
    out = host.copy()
    out[:, top:top + side_h, left:left + side_w] = small
    return out


def _all_rows_have_negatives(origins) -> bool:
    sets = [set(o) for o in origins]
    return all(any(not (a & b) for j, b in enumerate(sets) if j != i) for i, a in enumerate(sets))


def video_in_video(batch, labeling: BatchLabeling, cfg: AugmentConfig, rng, strong_rows=None):
    """Mix donors into hosts; each mixed clip replaces its donor and relabels the batch.

    Donors are drawn among ``strong_rows`` (default: every row) with
    probability ``p_viv``; hosts are drawn among the remaining, unmixed strong
    rows. A mix that would leave some row without any negative is skipped.
    Batches with fewer than two strong clips are returned unchanged.
    """
    rows = list(range(len(batch))) if strong_rows is None else list(strong_rows)
    if len(rows) < 2 or cfg.p_viv <= 0:
        return batch, labeling
    donors = [i for i in rows if rng.random() < cfg.p_viv]
    hosts = [i for i in rows if i not in donors]
    batch = list(batch)
    changed = False
    for d in donors:
        if not hosts:
            break
        h = hosts[int(rng.integers(len(hosts)))]
        scale = rng.uniform(*cfg.lambda_viv)
        size = batch[h].frames.shape[1:3]
        side = (int(round(scale * batch[d].frames.shape[1])), int(round(scale * batch[d].frames.shape[2])))
        top = int(rng.integers(0, size[0] - side[0] + 1))
        left = int(rng.integers(0, size[1] - side[1] + 1))
        origins = tuple(dict.fromkeys(batch[h].origin_ids + batch[d].origin_ids))
        trial = [c.origin_ids for c in batch]
        trial[d] = origins
        if not _all_rows_have_negatives(trial):
            continue
        mixed = paste_clip(batch[h].frames, batch[d].frames, scale, top, left)
        batch[d] = AugmentedClip(mixed, origins)
        changed = True
    if not changed:
        return batch, labeling
    return batch, labeling_from_origins([c.origin_ids for c in batch])
