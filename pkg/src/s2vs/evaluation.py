"""Retrieval (mAP) and detection (uAP) metrics, score normalization and hard subsets."""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np
import torch

from .errors import ConfigError, ConsistencyError, QueryWithoutPositivesError

log = logging.getLogger(__name__)


@dataclass
class EvalRun:
    """Per-query candidate similarities plus the set of relevant candidates per query."""

    scores: dict[str, dict[str, float]]
    relevant: dict[str, set[str]] = field(default_factory=dict)

    def __post_init__(self):
        for q, cands in self.scores.items():
            for c, s in cands.items():
                if not np.isfinite(s):
                    raise ConsistencyError(f"non-finite similarity for ({q}, {c})")
        self.relevant = {q: set(self.relevant.get(q, ())) for q in self.scores}

    @property
    def queries(self) -> list[str]:
        return sorted(self.scores)

    def ranked(self, query) -> list[tuple[str, float, bool]]:
        """Candidates by descending similarity; ties broken by candidate id."""
        rel = self.relevant.get(query, set())
        items = sorted(self.scores[query].items(), key=lambda kv: kv[0])
        items.sort(key=lambda kv: -kv[1])
        return [(c, s, c in rel) for c, s in items]

    def copy(self) -> EvalRun:
        return EvalRun({q: dict(c) for q, c in self.scores.items()},
                       {q: set(r) for q, r in self.relevant.items()})

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["query_id", "candidate_id", "similarity", "relevant"])
            for q in self.queries:
                for c, s, r in self.ranked(q):
                    w.writerow([q, c, repr(float(s)), int(r)])

    @classmethod
    def from_csv(cls, path) -> EvalRun:
        scores: dict[str, dict[str, float]] = {}
        relevant: dict[str, set[str]] = {}
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                q, c = row["query_id"], row["candidate_id"]
                cands = scores.setdefault(q, {})
                if c in cands:
                    raise ConsistencyError(f"candidate {c} listed twice for query {q}")
                cands[c] = float(row["similarity"])
                if str(row.get("relevant", "0")).strip().lower() in ("1", "true", "yes"):
                    relevant.setdefault(q, set()).add(c)
        return cls(scores, relevant)


def average_precision(relevance) -> float:
    """Non-interpolated AP of a ranked 0/1 relevance list: mean precision at each hit."""
    rel = np.asarray(relevance, dtype=bool)
    n_rel = int(rel.sum())
    if n_rel == 0:
        raise QueryWithoutPositivesError("ranked list contains no relevant item")
    hits = np.cumsum(rel)
    ranks = np.flatnonzero(rel) + 1
    return float(np.sum(hits[rel] / ranks) / n_rel)


def _query_aps(run: EvalRun) -> dict[str, float | None]:
    aps = {}
    for q in run.queries:
        rel = [r for _, _, r in run.ranked(q)]
        try:
            aps[q] = average_precision(rel)
        except QueryWithoutPositivesError:
            aps[q] = None
    return aps


def mean_ap(run: EvalRun) -> float:
    """Unweighted mean of per-query AP on the [0, 100] scale; positive-free queries are skipped."""
    aps = _query_aps(run)
    skipped = [q for q, ap in aps.items() if ap is None]
    if skipped:
        warnings.warn(f"skipping {len(skipped)} queries without relevant candidates", stacklevel=2)
    scored = [ap for ap in aps.values() if ap is not None]
    if not scored:
        raise QueryWithoutPositivesError("no query has a relevant candidate")
    return 100.0 * float(np.mean(scored))


def merged_list(run: EvalRun) -> list[tuple[float, bool, str, str]]:
    """All (similarity, relevant, query, candidate) pairs sorted for detection."""
    items = []
    for q in run.queries:
        rel = run.relevant.get(q, set())
        for c, s in run.scores[q].items():
            items.append((s, c in rel, q, c))
    items.sort(key=lambda x: (x[3], x[2]))
    items.sort(key=lambda x: -x[0])
    return items


def micro_ap(run: EvalRun) -> float:
    """AP over the similarity-sorted union of every query's list, on the [0, 100] scale."""
    items = merged_list(run)
    return 100.0 * average_precision([r for _, r, _, _ in items])


def per_query_report(run: EvalRun) -> list[dict]:
    """One row per query in id order: AP (or None) and whether it was skipped."""
    return [{"query": q, "ap": ap, "skipped": ap is None, "num_relevant": len(run.relevant.get(q, ()))}
            for q, ap in _query_aps(run).items()]


def similarity_normalize(run: EvalRun, background: dict[str, np.ndarray], k: int) -> EvalRun:
    """Subtract from each query's similarities the mean of its top-``k`` background similarities."""
    if k < 1:
        raise ConfigError("k must be >= 1")
    out = run.copy()
    for q in run.queries:
        if q not in background:
            raise ConsistencyError(f"no background similarities for query {q}")
        bg = np.asarray(background[q], dtype=np.float64)
        if k > len(bg):
            raise ConfigError(f"k={k} exceeds background size {len(bg)}")
        bias = float(np.mean(np.sort(bg)[::-1][:k]))
        out.scores[q] = {c: s - bias for c, s in run.scores[q].items()}
    return out


def easy_positives(run: EvalRun) -> set[tuple[str, str]]:
    """(query, candidate) relevant pairs ranked above every negative of their query."""
    easy = set()
    for q in run.queries:
        for c, _, r in run.ranked(q):
            if not r:
                break
            easy.add((q, c))
    return easy


def build_hard_subset(runs: list[EvalRun]) -> tuple[dict[str, set[str]], set[tuple[str, str]]]:
    """Drop relevant pairs that every run ranks in a position of perfect precision.

    Returns the filtered relevance and the set of removed (query, candidate)
    pairs; ``len(removed)`` is the removal count.
    """
    if not runs:
        raise ConsistencyError("need at least one run")
    ref = runs[0]
    for other in runs[1:]:
        if set(other.scores) != set(ref.scores) or any(set(other.scores[q]) != set(ref.scores[q]) for q in ref.scores):
            raise ConsistencyError("runs do not share the same queries and candidate sets")
        if any(other.relevant.get(q, set()) != ref.relevant.get(q, set()) for q in ref.scores):
            raise ConsistencyError("runs disagree on relevance labels")
    removed = set.intersection(*(easy_positives(r) for r in runs))
    relevance = {q: {c for c in ref.relevant.get(q, set()) if (q, c) not in removed} for q in ref.scores}
    return relevance, removed


def apply_hard_subset(run: EvalRun, removed) -> EvalRun:
    """Remove the given (query, candidate) pairs from a run's lists."""
    out = run.copy()
    for q, c in removed:
        out.scores.get(q, {}).pop(c, None)
        out.relevant.get(q, set()).discard(c)
    return out


# ---------------------------------------------------------------------------
# similarity matrix dumps


def _write_matrix(m: np.ndarray, stem: Path):
    np.savetxt(stem.with_suffix(".csv"), m, delimiter=",", fmt="%.17g")
    img = np.round(np.clip((m + 1.0) / 2.0, 0, 1) * 255).astype(np.uint8)
    cv2.imwrite(str(stem.with_suffix(".pgm")), img)


def read_matrix_csv(path) -> np.ndarray:
    return np.atleast_2d(np.loadtxt(path, delimiter=",", dtype=np.float64))


def dump_similarity_matrix(v, u, model, prefix) -> dict[str, Path]:
    """Write the raw frame-to-frame and CNN-filtered matrices of (v, u) as CSV and PGM.

    Values in [-1, 1] map to [0, 1] grey levels; filtered values are clamped first.
    """
    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    with torch.no_grad():
        raw, filtered = model.pair_matrices(model.extract(v), model.extract(u))
    raw = raw.double().numpy()
    filtered = filtered.double().numpy()
    paths = {}
    for name, m in (("raw", raw), ("filtered", filtered)):
        stem = prefix.parent / f"{prefix.name}_{name}"
        _write_matrix(m, stem)
        paths[name] = stem.with_suffix(".csv")
        paths[name + "_image"] = stem.with_suffix(".pgm")
    return paths


def diagonal_dominance(m: np.ndarray, anti: bool = False) -> float:
    """Mean of the (anti-)diagonal minus the mean of all other entries."""
    m = np.asarray(m, dtype=np.float64)
    mask = np.eye(*m.shape, dtype=bool)
    if anti:
        mask = np.fliplr(mask)
    return float(m[mask].mean() - m[~mask].mean())
