import json
import warnings

import numpy as np
import pytest

from embed_adapter.cli import main
from embed_adapter.embed import embed_posts
from embed_adapter.encoder import HashingEncoder, load_encoder


def write_posts(path, texts):
    with open(path, "w", encoding="utf-8") as fh:
        for i, text in enumerate(texts):
            fh.write(json.dumps({"id": f"p{i:04d}", "author_id": "a", "ts": "2022-10-01T00:00:00Z",
                                 "text": text, "retweet_of": None}) + "\n")
    return str(path)


def cosine(a, b):
    return float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))


def test_hashing_encoder_deterministic_across_instances():
    a = HashingEncoder(dim=64).encode(["política brasileira", "futebol"])
    b = HashingEncoder(dim=64).encode(["política brasileira", "futebol"])
    np.testing.assert_array_equal(a, b)
    assert cosine(a[0], b[0]) == pytest.approx(1.0)
    assert abs(cosine(a[0], a[1])) < 0.9


def test_identical_texts_identical_vectors(tmp_path):
    posts = write_posts(tmp_path / "posts.jsonl", ["mesma frase", "outra coisa", "mesma frase"])
    result = embed_posts(posts, "hash:64", tmp_path / "emb.jsonl")
    records = {}
    with open(tmp_path / "emb.jsonl") as fh:
        header = json.loads(fh.readline())
        for line in fh:
            rec = json.loads(line)
            records[rec["id"]] = np.array(rec["vector"])
    assert header["count"] == result.total == 3
    np.testing.assert_array_equal(records["p0000"], records["p0002"])
    assert cosine(records["p0000"], records["p0002"]) == pytest.approx(1.0)


def test_empty_text_embedded_and_flagged(tmp_path):
    posts = write_posts(tmp_path / "posts.jsonl", ["texto", ""])
    result = embed_posts(posts, "hash:32", tmp_path / "emb.jsonl")
    assert result.empty_text_ids == ("p0001",)
    with open(tmp_path / "emb.jsonl") as fh:
        fh.readline()
        vectors = [json.loads(line)["vector"] for line in fh]
    assert np.linalg.norm(vectors[1]) > 0      # nonzero even for the empty string


def test_header_count_equals_input_count(tmp_path):
    posts = write_posts(tmp_path / "posts.jsonl", [f"texto {i}" for i in range(57)])
    embed_posts(posts, "hash:16", tmp_path / "emb.jsonl", batch_size=10)
    with open(tmp_path / "emb.jsonl") as fh:
        header = json.loads(fh.readline())
        n = sum(1 for _ in fh)
    assert header["count"] == 57 == n


def test_resume_appends_missing_ids_only(tmp_path):
    posts = write_posts(tmp_path / "posts.jsonl", [f"texto {i}" for i in range(20)])
    out = tmp_path / "emb.jsonl"
    full = embed_posts(posts, "hash:16", out)
    with open(out) as fh:
        lines = fh.readlines()
    # simulate an interrupted run: header + first 7 records survive
    with open(out, "w") as fh:
        fh.writelines(lines[:8])
    resumed = embed_posts(posts, "hash:16", out, resume=True)
    assert resumed.skipped_existing == 7
    assert resumed.written == 13
    with open(out) as fh:
        final = fh.readlines()
    assert sorted(final[1:]) == sorted(lines[1:])
    assert full.total == 20


def test_resume_rejects_mismatched_header(tmp_path):
    posts = write_posts(tmp_path / "posts.jsonl", ["a", "b"])
    out = tmp_path / "emb.jsonl"
    embed_posts(posts, "hash:16", out)
    with pytest.raises(ValueError, match="header"):
        embed_posts(posts, "hash:32", out, resume=True)


def test_duplicate_post_ids_rejected(tmp_path):
    path = tmp_path / "posts.jsonl"
    with open(path, "w") as fh:
        fh.write(json.dumps({"id": "p1", "text": "a"}) + "\n")
        fh.write(json.dumps({"id": "p1", "text": "b"}) + "\n")
    with pytest.raises(ValueError, match="duplicate"):
        embed_posts(str(path), "hash:16", tmp_path / "emb.jsonl")


def test_missing_model_is_a_clear_error():
    with pytest.raises(RuntimeError, match="no-such-model"):
        load_encoder("no-such-model/definitely-not-cached")


def test_cli_roundtrip(tmp_path, capsys):
    posts = write_posts(tmp_path / "posts.jsonl", ["um", "dois", ""])
    code = main(["--in", posts, "--model", "hash:32", "--out", str(tmp_path / "e.jsonl")])
    assert code == 0
    captured = capsys.readouterr()
    assert "wrote 3 vectors" in captured.out
    assert "empty" in captured.err
    assert main(["--in", "missing.jsonl", "--model", "hash:32",
                 "--out", str(tmp_path / "x.jsonl")]) == 2


# ---------------------------------------------------------------------------
# round-trip with the core toolkit (its embeddings file format is the contract)

def test_core_loads_adapter_output_without_warnings(tmp_path):
    civiscope_embeddings = pytest.importorskip("civiscope.embeddings")
    posts = write_posts(tmp_path / "posts.jsonl", [f"texto número {i} política" for i in range(1000)])
    result = embed_posts(posts, "hash:128", tmp_path / "emb.jsonl", batch_size=128)
    assert result.written == 1000
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        store = civiscope_embeddings.load_embeddings(str(tmp_path / "emb.jsonl"), expected_dim=128)
    assert len(store) == 1000
    assert store.dim == 128
    # every id resolves to an input post id
    assert set(store.vectors) == {f"p{i:04d}" for i in range(1000)}
