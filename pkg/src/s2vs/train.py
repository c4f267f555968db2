"""Batch construction, optimization loop, learning-rate schedule and checkpoints."""

from __future__ import annotations

import copy
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from .augment import AugmentConfig, center_view, labeling_from_origins, strong_augment, video_in_video, weak_augment
from .errors import FormatError, IngestError, InsufficientCorpusError, NonFiniteLossError
from .losses import LossConfig, total_loss
from .model import SimilarityModel, ToyBackbone, WhiteningParams, backbone_from_descriptor, fit_whitening
from .video import sample_training_clip

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


@dataclass
class TrainConfig:
    iterations: int = 30_000
    batch_videos: int = 32
    lr: float = 5e-5
    weight_decay: float = 0.01
    warmup_iters: int = 1_000
    seed: int = 0
    backbone_seed: int = 0
    whitening_dim: int = 64
    whitening_samples: int = 20_000
    dtype: str = "float32"
    log_every: int = 1
    checkpoint_every: int = 0
    loss: LossConfig = field(default_factory=LossConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)

    def __post_init__(self):
        if isinstance(self.loss, dict):
            self.loss = LossConfig(**self.loss)
        if isinstance(self.augment, dict):
            self.augment = AugmentConfig(**self.augment)
        if self.batch_videos < 2:
            raise ValueError("batch_videos (N) must be >= 2")
        if self.iterations < 0 or self.warmup_iters < 0:
            raise ValueError("iterations and warmup_iters must be >= 0")
        if self.iterations and self.iterations <= self.warmup_iters:
            raise ValueError("iterations must exceed warmup_iters")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be float32 or float64")

    @property
    def torch_dtype(self):
        return torch.float64 if self.dtype == "float64" else torch.float32

    def to_dict(self) -> dict:
        return asdict(self)


def lr_at(step: int, cfg: TrainConfig) -> float:
    """Linear warm-up from 0 to ``lr``, then cosine decay to 0 at ``iterations``."""
    if step < cfg.warmup_iters:
        return cfg.lr * step / cfg.warmup_iters
    span = max(1, cfg.iterations - cfg.warmup_iters)
    progress = min(1.0, (step - cfg.warmup_iters) / span)
    return cfg.lr * 0.5 * (1.0 + math.cos(math.pi * progress))


def num_workers() -> int:
    try:
        return max(1, int(os.environ.get("S2VS_NUM_WORKERS", "1")))
    except ValueError:
        return 1


def _augment_video(video, cfg: AugmentConfig, seed):
    rng = np.random.default_rng(seed)
    clip = sample_training_clip(video, 2 * cfg.T_B, rng)
    return weak_augment(clip, cfg, rng), strong_augment(clip, cfg, rng)


def build_batch(corpus, cfg: TrainConfig, rng: np.random.Generator):
    """N distinct videos -> B = 2N views ordered (weak_1, strong_1, weak_2, strong_2, ...).

    Every video gets its own RNG substream, so results do not depend on
    ``S2VS_NUM_WORKERS``. Video-in-video then runs serially over the strong views.
    """
    n = cfg.batch_videos
    if len(corpus) < n:
        raise InsufficientCorpusError(f"corpus has {len(corpus)} videos, batch needs {n}")
    chosen = rng.choice(len(corpus), size=n, replace=False)
    seeds = rng.integers(0, 2**63 - 1, size=n)
    jobs = [(corpus[int(i)], cfg.augment, int(s)) for i, s in zip(chosen, seeds)]
    workers = min(num_workers(), n)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            views = list(pool.map(lambda a: _augment_video(*a), jobs))
    else:
        views = [_augment_video(*a) for a in jobs]
    clips = [c for pair in views for c in pair]
    labeling = labeling_from_origins([c.origin_ids for c in clips])
    clips, labeling = video_in_video(clips, labeling, cfg.augment, rng, strong_rows=range(1, 2 * n, 2))
    return clips, labeling


def init_model(corpus, cfg: TrainConfig, backbone=None) -> SimilarityModel:
    """Fit whitening on region vectors of the corpus and initialise phi and psi."""
    backbone = backbone or ToyBackbone(seed=cfg.backbone_seed)
    rng = np.random.default_rng([cfg.seed, 1])
    samples = []
    for video in corpus:
        samples.append(backbone(center_view(video, cfg.augment.H_B)).reshape(-1, backbone.dim))
    samples = np.concatenate(samples)
    if len(samples) > cfg.whitening_samples:
        samples = samples[rng.choice(len(samples), cfg.whitening_samples, replace=False)]
    whitening = fit_whitening(samples, dim=min(cfg.whitening_dim, backbone.dim))
    model = SimilarityModel(backbone, whitening, seed=cfg.seed)
    return model.to(cfg.torch_dtype)


def make_optimizer(model: SimilarityModel, cfg: TrainConfig):
    return torch.optim.AdamW([model.context, *model.cnn.parameters()], lr=cfg.lr, weight_decay=cfg.weight_decay)


@dataclass
class Checkpoint:
    model: SimilarityModel
    train_config: TrainConfig
    iteration: int = 0
    rng_state: dict | None = None
    optimizer_state: dict | None = None

    def state(self) -> dict:
        wh = self.model.whitening
        return {
            "version": CHECKPOINT_VERSION,
            "iteration": self.iteration,
            "backbone": self.model.backbone.descriptor(),
            "whitening": {"mean": torch.as_tensor(wh.mean), "projection": torch.as_tensor(wh.projection)},
            "widths": list(self.model.widths),
            "dtype": str(self.model.dtype).replace("torch.", ""),
            "params": {k: v.detach().clone() for k, v in self.model.state_dict().items()},
            "config": self.train_config.to_dict(),
            "rng_state": self.rng_state,
            "optimizer": self.optimizer_state,
        }

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        torch.save(self.state(), path)
        return path

    @classmethod
    def load(cls, path, backbone=None) -> Checkpoint:
        try:
            state = torch.load(path, weights_only=False)
        except FileNotFoundError as exc:
            raise IngestError(f"checkpoint not found: {path}") from exc
        except Exception as exc:  # torch raises a zoo of types for corrupt files
            raise FormatError(f"{path}: not a checkpoint ({exc})") from exc
        if not isinstance(state, dict) or state.get("version") != CHECKPOINT_VERSION:
            version = state.get("version") if isinstance(state, dict) else None
            raise FormatError(f"{path}: unsupported checkpoint version {version}")
        cfg = TrainConfig(**state["config"])
        backbone = backbone or backbone_from_descriptor(state["backbone"])
        wh = WhiteningParams(state["whitening"]["mean"].numpy(), state["whitening"]["projection"].numpy())
        dtype = torch.float64 if state["dtype"] == "float64" else torch.float32
        model = SimilarityModel(backbone, wh, widths=state["widths"]).to(dtype)
        model.load_state_dict(state["params"])
        return cls(model, cfg, state["iteration"], state["rng_state"], state["optimizer"])


def _dump_failure(path, S, labeling, report):
    if path is None:
        return
    payload = {
        "S": S.detach().tolist(),
        "positives": [sorted(p) for p in labeling.positives],
        "negatives": [sorted(n) for n in labeling.negatives],
        "report": report.as_dict(),
    }
    Path(path).write_text(json.dumps(payload))


def train(corpus, cfg: TrainConfig, *, resume: Checkpoint | None = None, out_dir=None,
          stop_at: int | None = None, model: SimilarityModel | None = None, on_step=None) -> Checkpoint:
    """Optimise attention and temporal CNN with InfoNCE + SSHN + regularization.

    Writes ``train_log.jsonl`` (and periodic ``ckpt_XXXXXX.pt`` files when
    ``checkpoint_every`` > 0) into ``out_dir``. ``stop_at`` ends the run early
    without changing the learning-rate schedule, which is useful for resuming.
    """
    torch.set_num_threads(num_workers())
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    if resume is not None:
        model = resume.model
        start = resume.iteration
        rng = np.random.default_rng()
        rng.bit_generator.state = resume.rng_state
    else:
        model = model if model is not None else init_model(corpus, cfg)
        start = 0
        rng = np.random.default_rng(cfg.seed)
    optimizer = make_optimizer(model, cfg)
    if resume is not None and resume.optimizer_state is not None:
        optimizer.load_state_dict(resume.optimizer_state)
    end = cfg.iterations if stop_at is None else min(stop_at, cfg.iterations)
    log_fh = open(out_dir / "train_log.jsonl", "a") if out_dir is not None else None
    try:
        for it in range(start, end):
            lr = lr_at(it, cfg)
            for group in optimizer.param_groups:
                group["lr"] = lr
            clips, labeling = build_batch(corpus, cfg, rng)
            feats = torch.stack([model.extract(c.frames) for c in clips])
            S, filtered = model.batch_forward(feats)
            report = total_loss(S, labeling, filtered, cfg.loss)
            if not torch.isfinite(report.total):
                dump = out_dir / f"nonfinite_step{it}.json" if out_dir is not None else None
                _dump_failure(dump, S, labeling, report)
                raise NonFiniteLossError(f"non-finite loss at step {it}: {report.as_dict()}")
            optimizer.zero_grad()
            report.total.backward()
            optimizer.step()
            model.normalize_context()
            record = {"step": it, **report.as_dict(), "lr": lr}
            if log_fh is not None and (it % cfg.log_every == 0 or it == end - 1):
                log_fh.write(json.dumps(record) + "\n")
            if on_step is not None:
                on_step(record)
            if out_dir is not None and cfg.checkpoint_every and (it + 1) % cfg.checkpoint_every == 0:
                _checkpoint(model, cfg, it + 1, rng, optimizer).save(out_dir / f"ckpt_{it + 1:06d}.pt")
        done = end if end > start else start
    finally:
        if log_fh is not None:
            log_fh.close()
    ckpt = _checkpoint(model, cfg, done, rng, optimizer)
    if out_dir is not None:
        ckpt.save(out_dir / "checkpoint.pt")
    return ckpt


def _checkpoint(model, cfg, iteration, rng, optimizer) -> Checkpoint:
    opt_state = copy.deepcopy(optimizer.state_dict())
    return Checkpoint(model, cfg, iteration, rng.bit_generator.state, opt_state)
