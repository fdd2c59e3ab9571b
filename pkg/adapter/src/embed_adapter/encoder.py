"""Sentence encoders behind one interface: encode(list of texts) -> (n, dim) array."""

from __future__ import annotations

import hashlib
import re

import numpy as np

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


class HashingEncoder:
    """Deterministic feature-hashing encoder; no model download, no randomness.

    Unigrams and bigrams are signed-hashed into `dim` buckets (sha1, so the
    mapping is stable across processes and platforms) and the result is
    L2-normalized. Bucket 0 carries a constant bias so even an empty text maps
    to a nonzero vector.
    """

    def __init__(self, dim: int = 256):
        if dim < 2:
            raise ValueError("HashingEncoder: dim must be >= 2")
        self.dim = dim
        self.model_id = f"hash:{dim}"

    def _bucket(self, token: str):
        digest = hashlib.sha1(token.encode("utf-8")).digest()
        idx = int.from_bytes(digest[:4], "big") % self.dim
        sign = 1.0 if digest[4] % 2 == 0 else -1.0
        return idx, sign

    def encode(self, texts) -> np.ndarray:
        out = np.zeros((len(texts), self.dim))
        for row, text in enumerate(texts):
            tokens = [t.casefold() for t in _TOKEN_RE.findall(text)]
            out[row, 0] += 1.0
            for gram in tokens + [f"{a} {b}" for a, b in zip(tokens, tokens[1:])]:
                idx, sign = self._bucket(gram)
                out[row, idx] += sign
            norm = np.linalg.norm(out[row])
            if norm > 0:
                out[row] /= norm
        return out


class TransformerEncoder:
    """sentence-transformers checkpoint wrapper (multilingual ids recommended)."""

    def __init__(self, model_id: str):
        try:
            from sentence_transformers import SentenceTransformer
        except ImportError as exc:
            raise RuntimeError(
                "sentence-transformers is not installed; use a hash:<dim> model id "
                "or install the 'transformer' extra") from exc
        try:
            self._model = SentenceTransformer(model_id)
        except Exception as exc:
            raise RuntimeError(f"could not load encoder {model_id!r}: {exc}") from exc
        self.model_id = model_id
        self.dim = int(self._model.get_sentence_embedding_dimension())

    def encode(self, texts) -> np.ndarray:
        return np.asarray(self._model.encode(list(texts), show_progress_bar=False,
                                             convert_to_numpy=True), dtype=float)


def load_encoder(model_id: str):
    """hash:<dim> gives the offline encoder; anything else is a transformer checkpoint."""
    if model_id.startswith("hash:"):
        return HashingEncoder(dim=int(model_id.split(":", 1)[1]))
    return TransformerEncoder(model_id)
