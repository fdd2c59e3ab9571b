"""Embedding-space operations backing the annotation-selection loop.

Annotated positives define a centroid in embedding space; unlabeled posts are
ranked by cosine similarity to it, and a two-band candidate batch (top of the
ranking plus a seeded uniform sample from a lower similarity band) is emitted
for the next manual-annotation round.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from civiscope.model import ValidationError


@dataclass(frozen=True)
class EmbeddingStore:
    """Id-indexed vectors of a single dimensionality. Read-only after load."""

    dim: int
    vectors: dict

    def __len__(self) -> int:
        return len(self.vectors)

    def __contains__(self, post_id) -> bool:
        return post_id in self.vectors

    def get(self, post_id) -> np.ndarray:
        return self.vectors[post_id]

    def matrix(self, ids: Sequence[str]) -> np.ndarray:
        return np.stack([self.vectors[i] for i in ids])


def load_embeddings(path, expected_dim: Optional[int] = None) -> EmbeddingStore:
    """Load an embeddings file: a JSON header line {"dim","model","count"}
    followed by one {"id","vector"} record per line.

    Raises on dimension mismatch, non-finite components, or duplicate ids;
    a count disagreeing with the header only warns.
    """
    vectors: dict = {}
    with open(path, "r", encoding="utf-8") as fh:
        header_line = fh.readline()
        try:
            header = json.loads(header_line)
            dim = int(header["dim"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError):
            raise ValidationError(f"embeddings {path}: first line must be a header with a 'dim' field")
        if expected_dim is not None and dim != expected_dim:
            raise ValidationError(f"embeddings {path}: header dim {dim} != expected {expected_dim}")
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                post_id = str(rec["id"])
                vec = np.asarray(rec["vector"], dtype=float)
            except (json.JSONDecodeError, KeyError, TypeError, ValueError):
                raise ValidationError(f"embeddings {path} line {lineno}: malformed record")
            if vec.shape != (dim,):
                raise ValidationError(
                    f"embeddings {path} line {lineno}: vector of dim {vec.shape} in a dim-{dim} file")
            if not np.all(np.isfinite(vec)):
                raise ValidationError(f"embeddings {path} line {lineno}: non-finite component")
            if post_id in vectors:
                raise ValidationError(f"embeddings {path} line {lineno}: duplicate id {post_id!r}")
            vectors[post_id] = vec
    declared = header.get("count")
    if declared is not None and declared != len(vectors):
        warnings.warn(f"embeddings {path}: header count {declared} != {len(vectors)} records read")
    return EmbeddingStore(dim=dim, vectors=vectors)


def centroid(ids: Iterable[str], store: EmbeddingStore) -> np.ndarray:
    """Component-wise mean of the vectors for `ids`."""
    ids = list(ids)
    if not ids:
        raise ValidationError("centroid of an empty id set")
    missing = [i for i in ids if i not in store.vectors]
    if missing:
        raise ValidationError(f"centroid: missing ids {missing[:5]!r}")
    return store.matrix(ids).mean(axis=0)


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValidationError(f"cosine: shape mismatch {a.shape} vs {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValidationError("cosine: zero-norm vector")
    # clamp against rounding so downstream band logic can trust [-1, 1]
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


@dataclass(frozen=True)
class CandidateBatch:
    high_band: tuple      # (post_id, similarity), similarity descending
    low_band: tuple       # seeded uniform sample from [low_floor, min high-band similarity)
    round: int
    shortfall_high: int   # how many requested slots could not be filled
    shortfall_low: int
    low_floor: float


def select_candidates(store: EmbeddingStore, positive_ids: Sequence[str], excluded_ids: Iterable[str],
                      high_k: int, low_k: int, low_floor: Optional[float] = None,
                      seed: int = 0, round_index: int = 0) -> CandidateBatch:
    """Rank unlabeled posts by similarity to the positive centroid and draw two bands.

    The high band takes the `high_k` most similar posts (ties broken by
    ascending post id). The low band is a seeded uniform sample of `low_k`
    posts whose similarity lies in [low_floor, min high-band similarity);
    when low_floor is None it defaults to the 60th percentile of the
    candidate similarity distribution.
    """
    if not positive_ids:
        raise ValidationError("select_candidates: positive_ids must be nonempty")
    if high_k < 0 or low_k < 0:
        raise ValidationError("select_candidates: band sizes must be >= 0")
    if low_floor is not None and not -1.0 <= low_floor <= 1.0:
        raise ValidationError("select_candidates: low_floor outside [-1, 1]")

    center = centroid(positive_ids, store)
    skip = set(excluded_ids) | set(positive_ids)
    candidates = sorted(i for i in store.vectors if i not in skip)
    if not candidates:
        return CandidateBatch((), (), round_index, high_k, low_k, low_floor if low_floor is not None else -1.0)

    mat = store.matrix(candidates)
    norms = np.linalg.norm(mat, axis=1)
    cnorm = np.linalg.norm(center)
    if cnorm == 0.0:
        raise ValidationError("select_candidates: zero-norm centroid")
    if np.any(norms == 0.0):
        raise ValidationError("select_candidates: zero-norm candidate vector")
    sims = np.clip(mat @ center / (norms * cnorm), -1.0, 1.0)

    # descending similarity, ties by ascending id (candidates are pre-sorted)
    order = np.lexsort((np.arange(len(candidates)), -sims))
    ranked = [(candidates[i], float(sims[i])) for i in order]

    high = ranked[:high_k]
    high_ids = {pid for pid, _ in high}
    upper = high[-1][1] if high else np.inf

    if low_floor is None:
        low_floor = float(np.percentile(sims, 60.0)) if len(sims) else -1.0
    eligible = [(pid, s) for pid, s in ranked
                if pid not in high_ids and low_floor <= s < upper]
    rng = np.random.default_rng(seed)
    take = min(low_k, len(eligible))
    if take:
        picked = rng.choice(len(eligible), size=take, replace=False)
        low = sorted((eligible[i] for i in picked), key=lambda t: (-t[1], t[0]))
    else:
        low = []
    return CandidateBatch(
        high_band=tuple(high),
        low_band=tuple(low),
        round=round_index,
        shortfall_high=max(0, high_k - len(high)),
        shortfall_low=max(0, low_k - take),
        low_floor=float(low_floor),
    )
