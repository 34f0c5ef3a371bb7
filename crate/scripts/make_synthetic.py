#!/usr/bin/env python3
"""Generate the synthetic datasets shipped under data/.

fixture100: 100-node three-block stochastic block model with weakly
informative 8-dimensional features.
rgg1000: 1000-node random geometric graph (radius 0.09 in the unit square)
with Gaussian noise features and uniformly random labels, a dense
co-purchase-like graph on which structure carries no label signal.
"""
import os
import sys

import numpy as np


def write(out, n, edges, feats, labels):
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "edges.txt"), "w") as f:
        for u, v in edges:
            f.write(f"{u} {v}\n")
    with open(os.path.join(out, "features.csv"), "w") as f:
        for i in range(n):
            f.write(str(i) + "," + ",".join(f"{x:.6f}" for x in feats[i]) + "\n")
    with open(os.path.join(out, "labels.csv"), "w") as f:
        for i in range(n):
            f.write(f"{i},{labels[i]}\n")


def fixture100(out):
    rng = np.random.default_rng(20230601)
    n, k = 100, 3
    labels = rng.integers(0, k, n)
    edges = []
    for u in range(n):
        for v in range(u + 1, n):
            p = 0.12 if labels[u] == labels[v] else 0.02
            if rng.random() < p:
                edges.append((u, v))
    centers = rng.normal(size=(k, 8))
    feats = centers[labels] * 0.6 + rng.normal(size=(n, 8))
    write(out, n, edges, feats, labels)


def rgg1000(out):
    rng = np.random.default_rng(7)
    n = 1000
    pts = rng.random((n, 2))
    edges = []
    for u in range(n):
        d = np.hypot(*(pts[u + 1:] - pts[u]).T)
        for v in np.nonzero(d < 0.09)[0]:
            edges.append((u, u + 1 + int(v)))
    feats = rng.normal(size=(n, 16))
    labels = rng.integers(0, 4, n)
    write(out, n, edges, feats, labels)


if __name__ == "__main__":
    root = sys.argv[1] if len(sys.argv) > 1 else "data"
    fixture100(os.path.join(root, "fixture100"))
    rgg1000(os.path.join(root, "rgg1000"))
