#!/usr/bin/env python3
"""Produce a TMV1 vector file for an events.jsonl without using the package.

Demonstrates the interchange contract for injecting externally computed
embeddings (a learned sentence encoder would slot in where `featurize` is):
magic "TMV1", little-endian u32 dim, u64 count, newline-terminated UTF-8
event ids, then count*dim IEEE-754 binary16 values. Feed the result to the
pipeline with: tmem embed --embedder external:<path>
"""

from __future__ import annotations

import argparse
import hashlib
import json
import struct
import sys
from pathlib import Path

import numpy as np


def featurize(text: str, dim: int) -> np.ndarray:
    """Stand-in encoder: character trigrams hashed with md5. Replace at will."""
    vec = np.zeros(dim, dtype=np.float32)
    padded = f"  {text.lower()} "
    for i in range(len(padded) - 2):
        gram = padded[i : i + 3].encode("utf-8")
        digest = hashlib.md5(gram).digest()
        index = int.from_bytes(digest[:4], "little") % dim
        sign = 1.0 if digest[4] & 1 else -1.0
        vec[index] += sign
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        vec[0] = 1.0
        norm = 1.0
    return vec / norm


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("events", help="canonical events.jsonl")
    parser.add_argument("out", help="vector file to write")
    parser.add_argument("--dim", type=int, default=384)
    args = parser.parse_args()

    ids, rows = [], []
    for line in Path(args.events).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        record = json.loads(line)
        ids.append(record["event_id"])
        rows.append(featurize(record["text_repr"], args.dim))

    with Path(args.out).open("wb") as fh:
        fh.write(struct.pack("<4sIQ", b"TMV1", args.dim, len(ids)))
        for event_id in ids:
            fh.write(event_id.encode("utf-8") + b"\n")
        fh.write(np.vstack(rows).astype("<f2").tobytes())
    print(f"wrote {len(ids)} vectors at dim {args.dim} to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
