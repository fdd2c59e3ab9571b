"""embed-adapter: turn post text into the embeddings file the analysis toolkit reads.

The encoder is pluggable by model id: any sentence-transformers checkpoint
(multilingual models recommended for Portuguese corpora), or the built-in
deterministic feature-hashing encoder ("hash:<dim>") for offline runs and
tests. Output is append-only JSONL behind a fixed header, so interrupted runs
resume by id.
"""

from embed_adapter.encoder import HashingEncoder, load_encoder
from embed_adapter.embed import EmbedResult, embed_posts

__version__ = "0.1.0"

__all__ = ["HashingEncoder", "load_encoder", "EmbedResult", "embed_posts", "__version__"]
