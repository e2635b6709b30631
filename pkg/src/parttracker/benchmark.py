"""Benchmark loop: IoU accuracy, failure counting with reinitialization,
EAO-lite over fixed snippets, and CSV/overlay/vote-map outputs."""

from __future__ import annotations

import dataclasses
import os
import time
from dataclasses import dataclass

import numpy as np

from .config import TrackerConfig
from .errors import InvalidInputError
from .fusion import tracker_init, tracker_step
from .imageio import write_pgm, write_ppm
from .seqio import Sequence

CSV_HEADER = "frame,x,y,w,h,iou,dt,hcf,cand,rel,gold"
SKIP_AFTER_FAILURE = 5
SNIPPET_LEN = 30


def iou(a, b) -> float:
    """Intersection-over-union of two (x, y, w, h) boxes."""
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    if aw <= 0 or ah <= 0 or bw <= 0 or bh <= 0:
        return 0.0
    iw = min(ax + aw, bx + bw) - max(ax, bx)
    ih = min(ay + ah, by + bh) - max(ay, by)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (aw * ah + bw * bh - inter)


@dataclass
class FrameRow:
    frame: int
    box: tuple
    iou: float                # nan when no ground truth
    kind: str                 # "init" | "track" | "skip" | "reinit"
    failed: bool
    d_t: float | None
    hcf: bool
    counts: dict
    f_center: tuple | None = None   # part-vote argmax, frame coords
    c_center: tuple | None = None   # net argmax, frame coords


@dataclass
class MetricsReport:
    name: str
    n_frames: int
    failures: int
    accuracy: float           # mean IoU over tracked, non-failed frames
    eao_lite: float
    per_frame_iou: list
    rows: list
    runtime_s: float
    ms_per_frame: float
    votemaps: list | None = None


def _zero_counts():
    return {"candidate": 0, "reliable": 0, "gold": 0}


def _eao_lite(rows) -> float:
    scores = []
    for r in rows:
        if r.kind in ("skip",) or r.failed:
            scores.append(0.0)
        else:
            scores.append(0.0 if np.isnan(r.iou) else r.iou)
    n = len(scores)
    if n <= SNIPPET_LEN:
        return float(np.mean(scores)) if scores else float("nan")
    means = []
    for s0 in range(0, n - SNIPPET_LEN + 1, SNIPPET_LEN):
        means.append(np.mean(scores[s0:s0 + SNIPPET_LEN]))
    return float(np.mean(means))


def run_benchmark(seq: Sequence, config: TrackerConfig | None = None,
                  reinit: bool = True, oracle: bool = False,
                  keep_votemaps: bool = False) -> MetricsReport:
    """Step the tracker over the sequence with the VOT-style protocol:
    IoU 0 counts as a failure; with reinit on, 5 frames are skipped and
    the tracker is freshly initialized from ground truth on the next."""
    cfg = config if config is not None else TrackerConfig()
    if keep_votemaps:
        cfg = dataclasses.replace(cfg, keep_votemaps=True)
    if reinit and any(b is None for b in seq.boxes):
        raise InvalidInputError("reinit protocol needs ground truth on every frame")

    t_start = time.perf_counter()
    n = len(seq)
    rows = []
    votemaps = [] if keep_votemaps else None
    failures = 0

    state = None if oracle else tracker_init(seq.frames[0], seq.boxes[0], cfg)
    box = tuple(float(v) for v in seq.boxes[0]) if oracle else state.box
    counts = _zero_counts() if oracle else state.bank.counts()
    rows.append(FrameRow(1, box, iou(box, seq.boxes[0]), "init", False,
                         None, False, counts))
    if votemaps is not None:
        votemaps.append(None)

    skip_until = 0
    reinit_at = None
    for t in range(2, n + 1):
        gt = seq.boxes[t - 1]
        if t <= skip_until:
            v = iou(box, gt) if gt is not None else float("nan")
            rows.append(FrameRow(t, box, v, "skip", False, None, False,
                                 _zero_counts() if oracle else state.bank.counts()))
            if votemaps is not None:
                votemaps.append(None)
            continue
        if reinit_at == t:
            state = None if oracle else tracker_init(seq.frames[t - 1], gt, cfg)
            box = tuple(float(vv) for vv in gt) if oracle else state.box
            counts = _zero_counts() if oracle else state.bank.counts()
            rows.append(FrameRow(t, box, 1.0, "reinit", False, None, False, counts))
            if votemaps is not None:
                votemaps.append(None)
            reinit_at = None
            continue
        if oracle:
            box = tuple(float(vv) for vv in gt)
            d_t, hcf, counts, maps = None, False, _zero_counts(), None
            fc = cc = None
        else:
            box, diag = tracker_step(state, seq.frames[t - 1])
            d_t, hcf, counts, maps = diag.d_t, diag.hcf, diag.counts, diag.votemaps
            fc, cc = diag.f_center, diag.c_center
        v = iou(box, gt) if gt is not None else float("nan")
        failed = gt is not None and v == 0.0
        rows.append(FrameRow(t, box, v, "track", failed, d_t, hcf, counts,
                             f_center=fc, c_center=cc))
        if votemaps is not None:
            votemaps.append(maps)
        if failed:
            failures += 1
            if reinit:
                skip_until = min(n, t + SKIP_AFTER_FAILURE)
                if t + SKIP_AFTER_FAILURE + 1 <= n:
                    reinit_at = t + SKIP_AFTER_FAILURE + 1

    elapsed = time.perf_counter() - t_start
    tracked = [r.iou for r in rows
               if r.kind == "track" and not r.failed and not np.isnan(r.iou)]
    accuracy = float(np.mean(tracked)) if tracked else float("nan")
    return MetricsReport(
        name=seq.name, n_frames=n, failures=failures, accuracy=accuracy,
        eao_lite=_eao_lite(rows), per_frame_iou=[r.iou for r in rows],
        rows=rows, runtime_s=elapsed, ms_per_frame=1000.0 * elapsed / n,
        votemaps=votemaps)


# ------------------------------------------------------------------- outputs

def rows_to_csv(rows) -> str:
    lines = [CSV_HEADER]
    for r in rows:
        x, y, w, h = r.box
        dt = "nan" if r.d_t is None else f"{r.d_t:.4f}"
        c = r.counts
        lines.append(
            f"{r.frame},{x:.3f},{y:.3f},{w:.3f},{h:.3f},{r.iou:.6f},{dt},"
            f"{int(r.hcf)},{c['candidate']},{c['reliable']},{c['gold']}")
    return "\n".join(lines) + "\n"


def _to_rgb(frame):
    arr = np.asarray(frame)
    if arr.ndim == 2:
        return np.stack([arr] * 3, axis=2).copy()
    return arr.copy()


def _draw_box(rgb, box, color):
    h, w = rgb.shape[:2]
    x0 = int(np.clip(round(box[0]), 0, w - 1))
    y0 = int(np.clip(round(box[1]), 0, h - 1))
    x1 = int(np.clip(round(box[0] + box[2]) - 1, 0, w - 1))
    y1 = int(np.clip(round(box[1] + box[3]) - 1, 0, h - 1))
    rgb[y0, x0:x1 + 1] = color
    rgb[y1, x0:x1 + 1] = color
    rgb[y0:y1 + 1, x0] = color
    rgb[y0:y1 + 1, x1] = color


def _draw_cross(rgb, xy, color, arm=2):
    h, w = rgb.shape[:2]
    x = int(np.clip(round(xy[0]), 0, w - 1))
    y = int(np.clip(round(xy[1]), 0, h - 1))
    rgb[y, max(0, x - arm):min(w, x + arm + 1)] = color
    rgb[max(0, y - arm):min(h, y + arm + 1), x] = color


def emit_outputs(report: MetricsReport, out_dir, seq: Sequence | None = None,
                 overlay: bool = False, votemaps: bool = False) -> list:
    """Write track.csv plus optional overlay PPMs and vote-map PGMs.
    Returns the list of written paths."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    csv_path = os.path.join(out_dir, "track.csv")
    with open(csv_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(rows_to_csv(report.rows))
    written.append(csv_path)

    if overlay:
        if seq is None:
            raise InvalidInputError("overlay output needs the source sequence")
        for r in report.rows:
            rgb = _to_rgb(seq.frames[r.frame - 1])
            _draw_box(rgb, r.box, (0, 255, 0))
            if r.f_center is not None:
                _draw_cross(rgb, r.f_center, (255, 0, 0))
            if r.c_center is not None:
                _draw_cross(rgb, r.c_center, (0, 128, 255))
            p = os.path.join(out_dir, f"overlay_{r.frame:06d}.ppm")
            write_ppm(p, rgb)
            written.append(p)

    if votemaps:
        if report.votemaps is None:
            raise InvalidInputError(
                "no vote maps collected; run the benchmark with keep_votemaps")
        for r, maps in zip(report.rows, report.votemaps):
            if maps is None:
                continue
            P = maps["P"]
            mx = P.max()
            img = np.zeros(P.shape, dtype=np.uint8)
            if mx > 0:
                img = np.minimum(np.floor(255.0 * P / mx), 254).astype(np.uint8)
                iy, ix = np.unravel_index(int(P.argmax()), P.shape)
                img[iy, ix] = 255
            p = os.path.join(out_dir, f"votemap_{r.frame:06d}.pgm")
            write_pgm(p, img)
            written.append(p)
    return written
