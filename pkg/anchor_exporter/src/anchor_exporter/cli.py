"""anchor-exporter: write anchor JSON files from text representations.

    anchor-exporter export --source encoder --layer 1 \\
        --words keywords.txt --out anchors.json [--model bert-base-uncased]
    anchor-exporter export --source static \\
        --words keywords.txt --vectors glove.840B.300d.txt --out anchors.json

Exit codes: 0 success, 1 unreadable input or model, 2 invalid request.
"""

import argparse
import sys

from .encoder import encode_words
from .errors import ExportError
from .static_vectors import load_static_vectors
from .words import read_word_list
from .writer import write_anchor_file


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="anchor-exporter",
        description="Export per-word anchor vectors for keyword-spotting training.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("export", help="write an anchor JSON file")
    p.add_argument("--source", required=True, choices=["encoder", "static"])
    p.add_argument("--layer", type=int, default=1,
                   help="encoder hidden-state layer; 0 is the embedding output")
    p.add_argument("--words", required=True, help="newline-separated word list")
    p.add_argument("--out", required=True, help="output anchor JSON path")
    p.add_argument("--vectors", default=None,
                   help="static vectors file (required with --source static)")
    p.add_argument("--model", default="bert-base-uncased",
                   help="encoder model name or local directory")
    p.add_argument("--batch-size", type=int, default=32)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        words = read_word_list(args.words)
        if args.source == "static":
            if not args.vectors:
                raise ExportError("--vectors is required with --source static")
            anchors, dim, source = load_static_vectors(words, args.vectors)
        else:
            anchors, dim, source = encode_words(
                words, args.model, args.layer, args.batch_size
            )
        write_anchor_file(args.out, anchors, dim, source)
    except ExportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {len(anchors)} anchors, dim={dim}, source='{source}' -> {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
