#!/usr/bin/env python3
"""Convert the LASA handwriting .mat files into the per-shape CSV corpus.

Usage: convert_lasa.py <dir with *.mat> <output dir>

Each output file is <shape>.csv with header demo,t,y,z. The four
Multi_Models files are combinations of other shapes and are skipped.
"""
import pathlib
import sys

import scipy.io as sio


def main(src: str, dst: str) -> None:
    out = pathlib.Path(dst)
    out.mkdir(parents=True, exist_ok=True)
    for mat in sorted(pathlib.Path(src).glob("*.mat")):
        if mat.stem.startswith("Multi_Models"):
            continue
        demos = sio.loadmat(mat, squeeze_me=True)["demos"]
        lines = ["demo,t,y,z"]
        for d, demo in enumerate(demos):
            pos = demo["pos"].item()
            t = demo["t"].item()
            for k in range(pos.shape[1]):
                lines.append(f"{d},{t[k]:.10g},{pos[0, k]:.10g},{pos[1, k]:.10g}")
        (out / f"{mat.stem}.csv").write_text("\n".join(lines) + "\n")
        print(f"{mat.stem}: {len(demos)} demos")


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
