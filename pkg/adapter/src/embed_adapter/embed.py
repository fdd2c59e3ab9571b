"""Batch embedding of a posts.jsonl file into the embeddings file format.

Format: one JSON header line {"dim": D, "model": id, "count": N}, then one
{"id", "vector"} record per post. The writer appends record by record, so an
interrupted run is resumable: already-written ids are skipped and new records
appended under the original header.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass


@dataclass(frozen=True)
class EmbedResult:
    output_path: str
    total: int
    written: int
    skipped_existing: int
    empty_text_ids: tuple
    dim: int
    model_id: str


def _read_posts(posts_path):
    posts = []
    with open(posts_path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                posts.append((str(rec["id"]), str(rec.get("text", ""))))
            except (json.JSONDecodeError, KeyError) as exc:
                raise ValueError(f"{posts_path} line {lineno}: malformed post record") from exc
    seen = set()
    for pid, _ in posts:
        if pid in seen:
            raise ValueError(f"{posts_path}: duplicate post id {pid!r}")
        seen.add(pid)
    return posts


def _existing_ids(output_path, expected_header):
    ids = set()
    with open(output_path, "r", encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        if header != expected_header:
            raise ValueError(
                f"{output_path}: existing header {header} does not match this run "
                f"{expected_header}; refusing to mix outputs")
        for line in fh:
            if line.strip():
                ids.add(str(json.loads(line)["id"]))
    return ids


def embed_posts(posts_path, model_id, output_path, batch_size: int = 64,
                resume: bool = False, encoder=None) -> EmbedResult:
    """Encode every post's text and write/extend the embeddings file.

    Empty texts are embedded like any other string (the encoder's view of "")
    and their ids are flagged in the result. The header's count is the total
    post count, so a completed (possibly resumed) file always satisfies it.
    """
    from embed_adapter.encoder import load_encoder

    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if encoder is None:
        encoder = load_encoder(model_id)
    posts = _read_posts(posts_path)
    header = {"dim": encoder.dim, "model": encoder.model_id, "count": len(posts)}

    done = set()
    skipped = 0
    if resume and os.path.exists(output_path):
        done = _existing_ids(output_path, header)
        skipped = len(done)
        mode = "a"
    else:
        mode = "w"

    todo = [(pid, text) for pid, text in posts if pid not in done]
    empty_ids = tuple(pid for pid, text in todo if text == "")

    written = 0
    with open(output_path, mode, encoding="utf-8") as fh:
        if mode == "w":
            fh.write(json.dumps(header, sort_keys=True, separators=(",", ":")) + "\n")
        for start in range(0, len(todo), batch_size):
            batch = todo[start:start + batch_size]
            vectors = encoder.encode([text for _, text in batch])
            for (pid, _), vec in zip(batch, vectors):
                fh.write(json.dumps({"id": pid, "vector": [float(v) for v in vec]},
                                    sort_keys=True, separators=(",", ":")) + "\n")
                written += 1
    return EmbedResult(output_path=str(output_path), total=len(posts), written=written,
                       skipped_existing=skipped, empty_text_ids=empty_ids,
                       dim=encoder.dim, model_id=encoder.model_id)
