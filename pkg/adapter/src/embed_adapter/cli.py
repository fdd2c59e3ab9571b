"""CLI: embed --in posts.jsonl --model <id> --out embeddings.jsonl"""

from __future__ import annotations

import argparse
import sys

from embed_adapter.embed import embed_posts


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="embed",
                                     description="encode post text into an embeddings file")
    parser.add_argument("--in", dest="posts", required=True, help="posts.jsonl input")
    parser.add_argument("--model", required=True,
                        help="sentence-transformers checkpoint id, or hash:<dim> for the "
                             "offline feature-hashing encoder")
    parser.add_argument("--out", dest="output", required=True, help="embeddings.jsonl output")
    parser.add_argument("--batch-size", type=int, default=64)
    parser.add_argument("--resume", action="store_true",
                        help="skip ids already present in the output file")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        result = embed_posts(args.posts, args.model, args.output,
                             batch_size=args.batch_size, resume=args.resume)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {result.written} vectors (dim {result.dim}, model {result.model_id}) "
          f"to {result.output_path}; skipped {result.skipped_existing} existing")
    if result.empty_text_ids:
        print(f"warning: {len(result.empty_text_ids)} empty texts embedded: "
              f"{', '.join(result.empty_text_ids[:5])}"
              + ("..." if len(result.empty_text_ids) > 5 else ""), file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
