"""Sequence directories: ordered frames plus a groundtruth.txt box file."""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError
from .imageio import read_image, write_pgm, write_ppm

_FRAME_EXTS = (".pgm", ".ppm", ".png")


@dataclass
class Sequence:
    frames: list                 # (H, W) or (H, W, 3) uint8 arrays
    boxes: list                  # per-frame (x, y, w, h) or None
    name: str = "sequence"
    paths: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.frames) < 2:
            raise InvalidInputError(
                f"sequence {self.name!r} needs >= 2 frames, got {len(self.frames)}")
        if len(self.boxes) != len(self.frames):
            raise InvalidInputError("one box entry per frame required (None allowed)")
        if self.boxes[0] is None:
            raise InvalidInputError("first frame must have a ground-truth box")

    def __len__(self):
        return len(self.frames)


def _parse_gt_line(line: str, where: str):
    vals = [float(v) for v in line.replace(";", ",").split(",") if v.strip()]
    if len(vals) == 4:
        return tuple(vals)
    if len(vals) == 8:
        xs, ys = vals[0::2], vals[1::2]
        return (min(xs), min(ys), max(xs) - min(xs), max(ys) - min(ys))
    raise InvalidInputError(f"{where}: expected 4 or 8 numbers, got {len(vals)}")


def load_sequence(dirpath) -> Sequence:
    """Read frames (sorted lexicographically) and groundtruth.txt.

    Ground-truth lines are "x,y,w,h" or 8-number polygons (bounded to an
    axis-aligned box).  Lines beyond the first are optional; missing
    trailing lines leave those frames without a box.
    """
    names = sorted(n for n in os.listdir(dirpath)
                   if os.path.splitext(n)[1].lower() in _FRAME_EXTS)
    if not names:
        raise InvalidInputError(f"{dirpath}: no frames (*.pgm, *.ppm, *.png)")
    paths = [os.path.join(dirpath, n) for n in names]
    frames = [read_image(p) for p in paths]

    gt_path = os.path.join(dirpath, "groundtruth.txt")
    if not os.path.exists(gt_path):
        raise InvalidInputError(f"{dirpath}: groundtruth.txt missing")
    with open(gt_path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh]
    lines = [ln for ln in lines if ln]
    boxes = [_parse_gt_line(ln, f"{gt_path}:{i + 1}")
             for i, ln in enumerate(lines[:len(frames)])]
    boxes += [None] * (len(frames) - len(boxes))
    return Sequence(frames=frames, boxes=boxes,
                    name=os.path.basename(os.path.normpath(dirpath)), paths=paths)


def write_sequence(seq: Sequence, dirpath) -> None:
    """Write frames as PGM/PPM plus groundtruth.txt (known boxes only)."""
    os.makedirs(dirpath, exist_ok=True)
    for i, frame in enumerate(seq.frames, 1):
        arr = np.asarray(frame)
        if arr.ndim == 2:
            write_pgm(os.path.join(dirpath, f"{i:06d}.pgm"), arr)
        else:
            write_ppm(os.path.join(dirpath, f"{i:06d}.ppm"), arr)
    with open(os.path.join(dirpath, "groundtruth.txt"), "w", encoding="utf-8") as fh:
        for box in seq.boxes:
            if box is None:
                break
            fh.write(",".join(f"{v:g}" for v in box) + "\n")
