#!/usr/bin/env python3
"""Convert a MATLAB hyperspectral cube and ground truth to BLG1/BLGL files.

    python3 tools/mat_to_blg.py Indian_pines_corrected.mat Indian_pines_gt.mat out/

Writes out/cube.blg and out/labels.blgl. The variable inside each .mat file is
picked automatically when there is only one array; pass --cube-key/--labels-key
otherwise.
"""

import argparse
import pathlib
import struct
import sys

import numpy as np
import scipy.io


def load_array(path, key, ndim):
    data = scipy.io.loadmat(path)
    if key is None:
        arrays = [k for k, v in data.items() if not k.startswith("__") and getattr(v, "ndim", 0) == ndim]
        if len(arrays) != 1:
            sys.exit(f"{path}: expected one {ndim}-d array, found {arrays}; pass a key")
        key = arrays[0]
    if key not in data:
        sys.exit(f"{path}: no variable {key!r}")
    array = np.asarray(data[key])
    if array.ndim != ndim:
        sys.exit(f"{path}: {key!r} has {array.ndim} dimensions, expected {ndim}")
    return array


def main():
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("cube", type=pathlib.Path)
    parser.add_argument("labels", type=pathlib.Path)
    parser.add_argument("out", type=pathlib.Path)
    parser.add_argument("--cube-key")
    parser.add_argument("--labels-key")
    args = parser.parse_args()

    cube = load_array(args.cube, args.cube_key, 3)
    labels = load_array(args.labels, args.labels_key, 2)
    if cube.shape[:2] != labels.shape:
        sys.exit(f"cube is {cube.shape[:2]} pixels but labels are {labels.shape}")
    if labels.min() < 0 or labels.max() > np.iinfo(np.int16).max:
        sys.exit("labels out of int16 range")

    height, width, bands = cube.shape
    args.out.mkdir(parents=True, exist_ok=True)
    with open(args.out / "cube.blg", "wb") as f:
        f.write(b"BLG1" + struct.pack("<III", height, width, bands))
        f.write(np.ascontiguousarray(cube, dtype="<f4").tobytes())
    with open(args.out / "labels.blgl", "wb") as f:
        f.write(b"BLGL" + struct.pack("<II", height, width))
        f.write(np.ascontiguousarray(labels, dtype="<i2").tobytes())

    classes = np.unique(labels[labels > 0])
    print(f"{height}x{width}x{bands} cube, {len(classes)} classes, {int((labels > 0).sum())} labeled pixels")


if __name__ == "__main__":
    main()
