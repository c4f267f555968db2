"""Video-to-video similarity network.

s(v, u) = chamfer(clamp(cnn(frame_to_frame(f(v), f(u))))), where f is a fixed
backbone followed by PCA whitening and a learnable dot-attention, and cnn is a
small temporal filter over the frame-to-frame similarity matrix.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import cv2
import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .augment import resize_frames
from .errors import ConfigError, DimensionError, EmptyInputError, SingularCovarianceError


class Backbone(Protocol):
    """Frozen extractor mapping (T, H, W, 3) frames to (T, R, D_raw) region vectors."""

    dim: int

    def __call__(self, frames: np.ndarray) -> np.ndarray: ...

    def descriptor(self) -> dict: ...


class ToyBackbone:
    """Fixed random ReLU projection of a grid of area-pooled patches.

    Each frame is area-resized to (grid*cell)^2 pixels and split into
    grid x grid regions. Every region's cell x cell x 3 thumbnail is
    contrast-normalized (zero mean, unit spread) and projected with a frozen
    Gaussian matrix. Parameters depend only on ``seed``.
    """

    # floor on a patch's spread, so flat patches are not amplified into noise
    eps = 0.05

    def __init__(self, seed: int = 0, grid: int = 3, cell: int = 4, dim: int = 64):
        self.seed, self.grid, self.cell, self.dim = seed, grid, cell, dim
        rng = np.random.default_rng(seed)
        in_dim = cell * cell * 3
        self.weight = rng.normal(0, 1 / np.sqrt(in_dim), (in_dim, dim)).astype(np.float32)
        self.bias = rng.normal(0, 0.1, dim).astype(np.float32)
        self.weight.setflags(write=False)
        self.bias.setflags(write=False)

    @property
    def num_regions(self):
        return self.grid * self.grid

    def __call__(self, frames: np.ndarray) -> np.ndarray:
        frames = np.asarray(frames, dtype=np.float32)
        t = frames.shape[0]
        side = self.grid * self.cell
        small = resize_frames(frames, side, side, cv2.INTER_AREA)
        g, c = self.grid, self.cell
        regions = small.reshape(t, g, c, g, c, 3).transpose(0, 1, 3, 2, 4, 5).reshape(t, g * g, c * c * 3)
        regions = regions - regions.mean(axis=-1, keepdims=True)
        regions = regions / (regions.std(axis=-1, keepdims=True) + self.eps)
        return np.maximum(regions @ self.weight + self.bias, 0.0)

    def descriptor(self) -> dict:
        return {"kind": "toy", "seed": self.seed, "grid": self.grid, "cell": self.cell, "dim": self.dim}



def backbone_from_descriptor(desc: dict) -> Backbone:
    if desc.get("kind") == "toy":
        return ToyBackbone(seed=desc["seed"], grid=desc["grid"], cell=desc["cell"], dim=desc["dim"])
    raise ConfigError(f"cannot rebuild backbone {desc!r}; pass an external backbone explicitly")


# ---------------------------------------------------------------------------
# whitening


@dataclass
class WhiteningParams:
    mean: np.ndarray
    projection: np.ndarray  # D_raw x D

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.mean) @ self.projection


def fit_whitening(samples, dim: int | None = None, shrinkage: float = 1e-6) -> WhiteningParams:
    """PCA whitening from an (n, D_raw) sample of region vectors.

    The covariance eigenvalues are shrunk by ``shrinkage`` before inversion;
    with ``shrinkage=0`` a rank-deficient covariance raises
    :class:`SingularCovarianceError`.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("need an (n >= 2, D_raw) sample matrix")
    d_raw = x.shape[1]
    dim = d_raw if dim is None else dim
    if not 1 <= dim <= d_raw:
        raise ValueError(f"dim must be in [1, {d_raw}]")
    mean = x.mean(axis=0)
    xc = x - mean
    cov = xc.T @ xc / (x.shape[0] - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals, evecs = np.clip(evals[order], 0, None), evecs[:, order]
    if shrinkage <= 0:
        tol = max(evals[0], 1e-300) * d_raw * np.finfo(np.float64).eps * 10
        if evals[dim - 1] <= tol:
            raise SingularCovarianceError(
                f"covariance is rank-deficient (rank {(evals > tol).sum()} < {dim}); use shrinkage, e.g. 1e-6")
    projection = evecs[:, :dim] / np.sqrt(evals[:dim] + shrinkage)
    return WhiteningParams(mean, projection)


# ---------------------------------------------------------------------------
# matching primitives


def chamfer(m) -> torch.Tensor:
    """Mean over rows of the row-wise maximum; batched over leading dimensions."""
    m = torch.as_tensor(m)
    if m.ndim < 2 or m.shape[-1] == 0 or m.shape[-2] == 0:
        raise EmptyInputError("chamfer similarity of an empty matrix")
    return m.max(dim=-1).values.mean(dim=-1)


def frame_to_frame_similarity(fv, fu) -> torch.Tensor:
    """T_v x T_u matrix of Chamfer similarities between the frames' region sets."""
    fv, fu = torch.as_tensor(fv), torch.as_tensor(fu)
    if fv.shape[-1] != fu.shape[-1]:
        raise DimensionError(f"feature dims differ: {fv.shape[-1]} vs {fu.shape[-1]}")
    regions = torch.einsum("ard,bsd->abrs", fv, fu)
    return chamfer(regions)


def batch_frame_similarity(feats) -> torch.Tensor:
    """All-pairs frame similarity for a (B, T, R, D) batch -> (B, B, T, T)."""
    regions = torch.einsum("itrd,jusd->ijturs", feats, feats)
    return regions.max(dim=-1).values.mean(dim=-1)


class TemporalCNN(nn.Module):
    """Four conv layers with two 2x2 max-pools: T x T' input -> (T/4) x (T'/4) output."""

    def __init__(self, widths=(32, 64, 128)):
        super().__init__()
        a, b, c = widths
        self.conv1 = nn.Conv2d(1, a, 3, padding=1)
        self.conv2 = nn.Conv2d(a, b, 3, padding=1)
        self.conv3 = nn.Conv2d(b, c, 3, padding=1)
        self.fconv = nn.Conv2d(c, 1, 1)

    def forward(self, x):
        x = F.max_pool2d(F.relu(self.conv1(x)), 2, 2)
        x = F.relu(self.conv2(x))
        x = F.relu(self.conv3(x))
        x = F.max_pool2d(x, 2, 2)
        return self.fconv(x)

    def reset_parameters(self, generator: torch.Generator | None = None):
        for conv in (self.conv1, self.conv2, self.conv3, self.fconv):
            bound = 1.0 / np.sqrt(conv.weight[0].numel())
            with torch.no_grad():
                conv.weight.uniform_(-bound, bound, generator=generator)
                conv.bias.uniform_(-bound, bound, generator=generator)

    @torch.no_grad()
    def set_identity(self):
        """Weights under which the output is the 4x4 block max of inputs in [-1, 1]."""
        for conv in (self.conv1, self.conv2, self.conv3, self.fconv):
            conv.weight.zero_()
            conv.bias.zero_()
        self.conv1.weight[0, 0, 1, 1] = 1.0
        self.conv1.bias[0] = 1.0  # shift [-1, 1] to non-negative so ReLU passes it
        self.conv2.weight[0, 0, 1, 1] = 1.0
        self.conv3.weight[0, 0, 1, 1] = 1.0
        self.fconv.weight[0, 0, 0, 0] = 1.0
        self.fconv.bias[0] = -1.0
        return self


def pad_to_multiple(m: torch.Tensor, multiple: int = 4) -> torch.Tensor:
    """Symmetric zero-padding of the last two dims up to a multiple of ``multiple``."""
    tv, tu = m.shape[-2:]
    pv, pu = (-tv) % multiple, (-tu) % multiple
    if not pv and not pu:
        return m
    return F.pad(m, (pu // 2, pu - pu // 2, pv // 2, pv - pv // 2))


def temporal_filter(m, cnn: TemporalCNN) -> torch.Tensor:
    """Filter a (..., T_v, T_u) similarity matrix to (..., ceil(T_v/4), ceil(T_u/4))."""
    m = torch.as_tensor(m)
    lead = m.shape[:-2]
    padded = pad_to_multiple(m)
    out = cnn(padded.reshape(-1, 1, *padded.shape[-2:]))
    return out.reshape(*lead, *out.shape[-2:])


def video_similarity(mf) -> torch.Tensor:
    """Chamfer of the filtered matrix clamped to [-1, 1]."""
    return chamfer(torch.clamp(torch.as_tensor(mf), -1.0, 1.0))


# ---------------------------------------------------------------------------
# full network


class SimilarityModel(nn.Module):
    """Frozen backbone + whitening, learnable attention context and temporal CNN."""

    def __init__(self, backbone: Backbone, whitening: WhiteningParams, widths=(32, 64, 128), seed: int = 0):
        super().__init__()
        self.backbone = backbone
        self.register_buffer("white_mean", torch.as_tensor(whitening.mean, dtype=torch.float32))
        self.register_buffer("white_proj", torch.as_tensor(whitening.projection, dtype=torch.float32))
        dim = whitening.projection.shape[1]
        self.context = nn.Parameter(torch.zeros(dim))
        self.cnn = TemporalCNN(widths)
        self.widths = tuple(widths)
        self.reset_parameters(seed)

    def reset_parameters(self, seed: int = 0):
        gen = torch.Generator().manual_seed(seed)
        with torch.no_grad():
            self.context.copy_(torch.randn(self.context.shape, generator=gen, dtype=torch.float64))
        self.normalize_context()
        self.cnn.reset_parameters(gen)

    @torch.no_grad()
    def normalize_context(self):
        self.context.div_(self.context.norm().clamp_min(1e-12))

    @property
    def whitening(self) -> WhiteningParams:
        return WhiteningParams(self.white_mean.double().numpy(), self.white_proj.double().numpy())

    @property
    def dtype(self):
        return self.context.dtype

    def raw_features(self, frames) -> torch.Tensor:
        """Backbone + whitening, unit-normalized per region; no learnable part."""
        raw = torch.as_tensor(self.backbone(frames), dtype=self.dtype)
        x = (raw - self.white_mean) @ self.white_proj
        return F.normalize(x, dim=-1)

    def attend(self, x: torch.Tensor) -> torch.Tensor:
        weights = (x @ self.context + 1.0) / 2.0
        return x * weights.unsqueeze(-1)

    def extract(self, frames) -> torch.Tensor:
        return self.attend(self.raw_features(frames))

    def pair_matrices(self, fv, fu):
        raw = frame_to_frame_similarity(fv, fu)
        return raw, temporal_filter(raw, self.cnn)

    def score_features(self, fv, fu) -> torch.Tensor:
        return video_similarity(self.pair_matrices(fv, fu)[1])

    def score(self, v, u) -> float:
        with torch.no_grad():
            return float(self.score_features(self.extract(v), self.extract(u)))

    def batch_forward(self, feats):
        """(B, T, R, D) features -> (S in [0,1]^{BxB}, filtered matrices (B, B, T', T'))."""
        raw = batch_frame_similarity(feats)
        filtered = temporal_filter(raw, self.cnn)
        s = video_similarity(filtered)
        return (s + 1.0) / 2.0, filtered


def extract_features(frames, backbone: Backbone, whitening: WhiteningParams, context) -> np.ndarray:
    """Backbone -> whitening -> l2 normalisation -> attention weight (c.x + 1)/2."""
    x = whitening.apply(backbone(frames))
    x = x / np.maximum(np.linalg.norm(x, axis=-1, keepdims=True), 1e-12)
    w = (x @ np.asarray(context, dtype=np.float64) + 1.0) / 2.0
    return x * w[..., None]


def score_pair(v, u, model: SimilarityModel) -> float:
    """s(v, u) in [-1, 1] for two frame arrays."""
    return model.score(v, u)


def batch_similarity_matrix(clips, model: SimilarityModel) -> torch.Tensor:
    """B x B matrix of (s(v_i, v_j) + 1) / 2, diagonal included."""
    if len(clips) < 2:
        raise ValueError("batch similarity needs at least two clips")
    feats = [model.extract(getattr(c, "frames", c)) for c in clips]
    if len({f.shape for f in feats}) == 1:
        return model.batch_forward(torch.stack(feats))[0]
    n = len(feats)
    s = torch.empty(n, n, dtype=model.dtype)
    for i in range(n):
        for j in range(n):
            s[i, j] = (model.score_features(feats[i], feats[j]) + 1) / 2
    return s
