"""Write synthetic activation dumps for a small stack of layers and rank them.

One layer is made nearly an identity map, so it should come out as the
prune candidate; the first and last layers are protected.

    python scripts/prune_demo.py [--layers 8] [--rows 64] [--dim 32] [--seed 0]
"""

import argparse
import tempfile
from pathlib import Path

import numpy as np

from discoforge.cli import main as cli_main
from discoforge.pruning import write_manifest


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--layers", type=int, default=8)
    ap.add_argument("--rows", type=int, default=64)
    ap.add_argument("--dim", type=int, default=32)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=Path)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    quiet = args.layers // 2
    dumps, h = [], rng.normal(size=(args.rows, args.dim))
    for i in range(args.layers):
        step = 0.02 if i == quiet else 0.8
        nxt = h + step * rng.normal(size=h.shape)
        dumps.append((i, h, nxt))
        h = nxt
    out = args.out or Path(tempfile.mkdtemp(prefix="discoforge-dumps-"))
    manifest = write_manifest(out, dumps)
    print(f"near-identity layer: {quiet}; manifest: {manifest}\n")
    raise SystemExit(cli_main(["prune-select", "--manifest", str(manifest), "--k", "1"]))


if __name__ == "__main__":
    main()
