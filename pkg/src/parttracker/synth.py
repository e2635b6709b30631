"""Seeded synthetic scenarios with exact integer ground truth.

A scenario renders a noise-textured square over a structured background,
optionally with appearance drift (texture blends toward a second seeded
texture), an opaque occluder, and similar-texture distractor patches.
The four standard scenarios exercise translation+drift, full occlusion,
similar distractors, and abrupt motion at desk scale.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import TrackerConfig
from .errors import InvalidInputError
from .seqio import Sequence

OCCLUDER_SHADE = 230


@dataclass
class ScenarioSpec:
    name: str
    canvas: tuple = (128, 96)          # (w, h)
    length: int = 60
    object_size: int = 16
    start: tuple = (8, 40)
    velocities: list = field(default_factory=list)  # length-1 entries (vx, vy)
    drift_rate: float = 0.0            # texture blend per frame, 0..1
    occluders: list = field(default_factory=list)   # (first, last, coverage)
    distractors: list = field(default_factory=list)  # top-left (x, y) each
    distractor_similarity: float = 0.85
    texture_seed: int = 7

    def __post_init__(self):
        if self.length < 30:
            raise InvalidInputError(f"scenario length must be >= 30, got {self.length}")
        if not self.velocities:
            self.velocities = [(0, 0)] * (self.length - 1)
        if len(self.velocities) != self.length - 1:
            raise InvalidInputError(
                f"need {self.length - 1} velocity entries, got {len(self.velocities)}")
        if not 0.0 <= self.drift_rate <= 1.0:
            raise InvalidInputError("drift_rate must be in [0, 1]")
        w, h = self.canvas
        s = self.object_size
        for f0, f1, cov in self.occluders:
            if not (1 <= f0 <= f1 <= self.length) or cov <= 0:
                raise InvalidInputError(f"bad occluder script ({f0}, {f1}, {cov})")
        for x, y in self.positions():
            if not (0 <= x <= w - s and 0 <= y <= h - s):
                raise InvalidInputError(
                    f"motion script leaves the canvas at ({x}, {y})")
        for x, y in self.distractors:
            if not (0 <= x <= w - s and 0 <= y <= h - s):
                raise InvalidInputError(f"distractor ({x}, {y}) outside canvas")

    def positions(self):
        x, y = self.start
        out = [(int(x), int(y))]
        for vx, vy in self.velocities:
            x += vx
            y += vy
            out.append((int(x), int(y)))
        return out


def _background(rng, w, h):
    """Blocky low-frequency pattern plus fine grain; static per scenario."""
    coarse = rng.integers(-24, 25, size=(h // 8 + 1, w // 8 + 1))
    coarse = np.repeat(np.repeat(coarse, 8, axis=0), 8, axis=1)[:h, :w]
    fine = rng.integers(-6, 7, size=(h, w))
    return np.clip(128 + coarse + fine, 0, 255).astype(np.uint8)


def synth_sequence(spec: ScenarioSpec, seed: int = 0) -> Sequence:
    """Render the scenario; bit-deterministic per (spec, seed)."""
    w, h = spec.canvas
    s = spec.object_size
    rng = np.random.default_rng([seed, spec.texture_seed])
    bg = _background(rng, w, h)
    tex_a = rng.integers(0, 256, size=(s, s)).astype(np.float64)
    tex_b = rng.integers(0, 256, size=(s, s)).astype(np.float64)
    d_tex = []
    for _ in spec.distractors:
        own = rng.integers(0, 256, size=(s, s)).astype(np.float64)
        mix = spec.distractor_similarity * tex_a + (1 - spec.distractor_similarity) * own
        d_tex.append(np.clip(np.round(mix), 0, 255).astype(np.uint8))

    frames, boxes = [], []
    for t, (x, y) in enumerate(spec.positions(), start=1):
        img = bg.copy()
        for (dx, dy), tex in zip(spec.distractors, d_tex):
            img[dy:dy + s, dx:dx + s] = tex
        lam = min(1.0, spec.drift_rate * (t - 1))
        tile = np.clip(np.round((1 - lam) * tex_a + lam * tex_b), 0, 255)
        img[y:y + s, x:x + s] = tile.astype(np.uint8)
        for f0, f1, cov in spec.occluders:
            if f0 <= t <= f1:
                half = int(round(cov * s / 2.0))
                cx, cy = x + s // 2, y + s // 2
                x0, x1 = max(0, cx - half), min(w, cx + half)
                y0, y1 = max(0, cy - half), min(h, cy + half)
                img[y0:y1, x0:x1] = OCCLUDER_SHADE
        frames.append(img)
        boxes.append((float(x), float(y), float(s), float(s)))
    return Sequence(frames=frames, boxes=boxes, name=spec.name)


def _bounce_velocities(length, start, step, lo, hi):
    """Constant-speed x sweep that reflects off [lo, hi]; y fixed."""
    xs, vx = start, step
    out = []
    for _ in range(length - 1):
        if not (lo <= xs + vx <= hi):
            vx = -vx
        xs += vx
        out.append((vx, 0))
    return out


def standard_scenario(name: str, length: int | None = None) -> ScenarioSpec:
    """The in-repo scenario set: A translation+drift, B full occlusion,
    C similar distractors, D abrupt motion."""
    key = name.upper()
    if key == "A":
        n = length or 120
        return ScenarioSpec(
            name="A", length=n, start=(8, 40),
            velocities=_bounce_velocities(n, 8, 1, 4, 108),
            drift_rate=0.004)
    if key == "B":
        n = length or 70
        vel = []
        for t in range(1, n):          # pause while occluded (frames 29-45)
            vel.append((0, 0) if 28 <= t <= 44 else (1, 0))
        return ScenarioSpec(
            name="B", length=n, start=(16, 40), velocities=vel,
            occluders=[(30, 39, 1.3)])
    if key == "C":
        n = length or 70
        return ScenarioSpec(
            name="C", length=n, start=(12, 40),
            velocities=[(1, 0)] * (n - 1),
            distractors=[(40, 18), (68, 62), (96, 18)],
            distractor_similarity=0.85)
    if key == "D":
        n = length or 70
        vel = []
        for t in range(1, n):
            vel.append((12, 6) if t == 24 else ((-12, -6) if t == 48 else (1, 0)))
        return ScenarioSpec(name="D", length=n, start=(10, 36), velocities=vel)
    raise InvalidInputError(
        f"unknown scenario {name!r}; available: A, B, C, D")


def scenario_config(**overrides) -> TrackerConfig:
    """Desk-scale tracker profile for the synthetic scenarios: a from-
    scratch net this small needs a larger step size and fewer epochs than
    the full-scale defaults to adapt within a 100-frame sequence."""
    base = dict(k_epochs=3, lr=1e-3)
    base.update(overrides)
    return TrackerConfig(**base)
