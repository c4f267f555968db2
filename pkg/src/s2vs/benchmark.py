"""Desk-scale copy-detection protocol on a synthetic corpus.

Queries are fresh strong augmentations of corpus videos; the database holds
the original videos. A query is relevant only to the video it came from.
"""

from __future__ import annotations

import numpy as np
import torch

from .augment import AugmentConfig, center_view, strong_augment
from .evaluation import EvalRun, micro_ap, mean_ap
from .model import SimilarityModel, temporal_filter, video_similarity
from .video import sample_training_clip


def make_queries(corpus, cfg: AugmentConfig, seed: int, per_video: int = 1):
    """List of (query_id, frames, source_id) strong views."""
    rng = np.random.default_rng(seed)
    queries = []
    for video in corpus:
        for k in range(per_video):
            clip = sample_training_clip(video, 2 * cfg.T_B, rng)
            aug = strong_augment(clip, cfg, rng)
            queries.append((f"q{k}_{video.source_id}", aug.frames, video.source_id))
    return queries


@torch.no_grad()
def score_matrix(model: SimilarityModel, query_frames, db_frames, chunk: int = 64) -> np.ndarray:
    """(Q, N) matrix of s(query, database item) in [-1, 1]."""
    q_feats = [model.extract(f) for f in query_frames]
    d_feats = [model.extract(f) for f in db_frames]
    out = np.empty((len(q_feats), len(d_feats)))
    # group queries of equal length so each database item is filtered in one CNN call
    by_len: dict[int, list[int]] = {}
    for i, f in enumerate(q_feats):
        by_len.setdefault(f.shape[0], []).append(i)
    for idx in by_len.values():
        for s in range(0, len(idx), chunk):
            rows = idx[s:s + chunk]
            qf = torch.stack([q_feats[i] for i in rows])
            for j, df in enumerate(d_feats):
                raw = torch.einsum("qtrd,usd->qturs", qf, df).max(dim=-1).values.mean(dim=-1)
                sims = video_similarity(temporal_filter(raw, model.cnn))
                out[rows, j] = sims.double().numpy()
    return out


def copy_detection_run(model: SimilarityModel, corpus, cfg: AugmentConfig, seed: int = 12345,
                       per_video: int = 1) -> EvalRun:
    queries = make_queries(corpus, cfg, seed, per_video)
    db = [(v.source_id, center_view(v, cfg.H_B)) for v in corpus]
    sims = score_matrix(model, [q[1] for q in queries], [d[1] for d in db])
    scores = {qid: {db[j][0]: float(sims[i, j]) for j in range(len(db))} for i, (qid, _, _) in enumerate(queries)}
    relevant = {qid: {src} for qid, _, src in queries}
    return EvalRun(scores, relevant)


def evaluate_model(model, corpus, cfg: AugmentConfig, seed: int = 12345) -> dict:
    run = copy_detection_run(model, corpus, cfg, seed)
    pos = [s for q in run.queries for c, s in run.scores[q].items() if c in run.relevant[q]]
    neg = [s for q in run.queries for c, s in run.scores[q].items() if c not in run.relevant[q]]
    return {"mAP": mean_ap(run), "uAP": micro_ap(run), "margin": float(np.mean(pos) - np.mean(neg)), "run": run}
