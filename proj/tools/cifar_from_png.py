#!/usr/bin/env python3
"""Rebuild CIFAR-10 binary batches from the PNG repack in the npm package
tfjs-cifar10 (one 1024x10000 RGB PNG per batch, one image per row, labels
in JSON).

    npm pack tfjs-cifar10 && tar xzf tfjs-cifar10-*.tgz
    python3 tools/cifar_from_png.py package/ out/cifar-10-batches-bin/

Writes data_batch_1..5.bin and test_batch.bin: 3073-byte records, label
byte then the R, G and B planes.
"""
import json
import pathlib
import sys

import numpy as np
from PIL import Image


def convert(png, labels, out):
    pixels = np.asarray(Image.open(png).convert("RGB"), dtype=np.uint8)
    if pixels.shape != (len(labels), 1024, 3):
        raise SystemExit(f"{png}: unexpected shape {pixels.shape}")
    planes = pixels.transpose(0, 2, 1).reshape(len(labels), 3072)
    records = np.concatenate([np.asarray(labels, dtype=np.uint8)[:, None], planes], axis=1)
    out.write_bytes(records.tobytes())


def main():
    if len(sys.argv) != 3:
        raise SystemExit(__doc__)
    src, dst = pathlib.Path(sys.argv[1]), pathlib.Path(sys.argv[2])
    dst.mkdir(parents=True, exist_ok=True)
    train = json.loads((src / "train_lables.json").read_text())
    test = json.loads((src / "test_lables.json").read_text())
    for i in range(5):
        convert(src / f"data_batch_{i + 1}.png", train[i * 10000:(i + 1) * 10000],
                dst / f"data_batch_{i + 1}.bin")
    convert(src / "test_batch.png", test, dst / "test_batch.bin")


if __name__ == "__main__":
    main()
