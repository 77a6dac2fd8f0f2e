"""Compute an external low-dimensional embedding of MNIST IDX files.

Writes a headerless CSV (one row per sample) for ``data.embedding``.
Requires the optional ``umap-learn`` package; it is not a dependency of
the library itself.
"""

import argparse

import numpy as np

from chaosml.data import load_mnist_idx


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--images", required=True)
    ap.add_argument("--labels", required=True)
    ap.add_argument("--out", required=True)
    ap.add_argument("--dim", type=int, default=7)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    import umap

    ds = load_mnist_idx(args.images, args.labels)
    emb = umap.UMAP(n_components=args.dim, random_state=args.seed).fit_transform(ds.X)
    np.savetxt(args.out, emb, delimiter=",")
    print(f"wrote {args.out} shape={emb.shape}")


if __name__ == "__main__":
    main()
