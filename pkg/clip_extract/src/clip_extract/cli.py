"""Command line for the embedding extractor.

Exit codes: 0 all items embedded, 1 manifest/argument problem, 2 at least
one item failed (failures are listed in the index document).
"""

from __future__ import annotations

import argparse
import logging
import sys

from .extract import ManifestError, extract, load_manifest


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="clip-extract",
        description="Embed village images and pre-summarized texts into HGNNEMB1 blobs.",
    )
    parser.add_argument("--manifest", required=True, help="extraction manifest (JSON)")
    parser.add_argument("--checkpoint", required=True,
                        help="local path of the frozen vision-language checkpoint")
    parser.add_argument("--out", required=True, help="output directory for blobs + index.json")
    parser.add_argument("-v", "--verbose", action="store_true")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        manifest = load_manifest(args.manifest)
    except (ManifestError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    index = extract(manifest, args.checkpoint, args.out)
    done = len(index["villages"])
    failed = len(index["errors"])
    print(f"embedded {done} villages, {failed} failed -> {args.out}/index.json")
    return 2 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
