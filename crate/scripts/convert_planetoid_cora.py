#!/usr/bin/env python3
"""Convert the LINQS Cora release (cora.cites / cora.content) to toolkit text formats.

Usage: convert_planetoid_cora.py <cora.cites> <cora.content> <out_dir>

Node ids follow row order of cora.content; class ids follow sorted class names.
Writes edges.txt ("u v" per line), features.csv ("node_id,v_1,...,v_f") and
labels.csv ("node_id,class_id").
"""
import os
import sys


def main(cites, content, out):
    ids, feats, names = {}, [], []
    with open(content) as f:
        for line in f:
            tok = line.split()
            ids[tok[0]] = len(ids)
            feats.append(tok[1:-1])
            names.append(tok[-1])
    classes = {c: i for i, c in enumerate(sorted(set(names)))}
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "edges.txt"), "w") as f:
        f.write("# LINQS Cora citation graph, directed cited->citing pairs\n")
        with open(cites) as src:
            for line in src:
                a, b = line.split()
                f.write(f"{ids[a]} {ids[b]}\n")
    with open(os.path.join(out, "features.csv"), "w") as f:
        for i, row in enumerate(feats):
            f.write(str(i) + "," + ",".join(row) + "\n")
    with open(os.path.join(out, "labels.csv"), "w") as f:
        for i, name in enumerate(names):
            f.write(f"{i},{classes[name]}\n")


if __name__ == "__main__":
    main(*sys.argv[1:4])
