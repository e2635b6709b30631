"""Pathway fusion and the per-frame tracking loop.

Each frame the tracker crops a search region around the previous center,
lets both pathways vote (FilterParts response aggregation, ConvNet center
map), blends the two maps under a soft center-distance mask, and moves to
the blend's maximum.  Agreeing part votes give a least-squares box update;
frames where the two pathways agree unusually well ("highly confident
frames") feed the ConvNet's online training set.  For the first
`n_bootstrap` frames the net is still warming up and only the part votes
steer the tracker.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from .config import TrackerConfig, dump_config, parse_config_text
from .convnet import (
    AdamState,
    ConvNet,
    TrainSample,
    adam_init,
    augment_shift,
    default_radius,
    forward,
    make_target,
    net_init,
    train_epochs,
)
from .errors import InvalidInputError, NumericalError
from .features import (
    PatchGeometry,
    crop_search_region,
    extract_channels,
    propose_patches,
    scale_sides,
    vectorize_patch,
)
from .filterparts import (
    CANDIDATE,
    GOLD,
    RELIABLE,
    FilterPart,
    PartBank,
    _pick_negatives,
    agreement_radius,
    enforce_budget,
    learn_bank,
    lifecycle_update,
    record_cooccurrence,
    scan_parts,
    select_parts,
)

STATE_MAGIC = b"PTS1"

# minimum net response peak (relative to its unit disc target) that still
# counts as the net voting on a frame
_NET_FLOOR = 0.05
_STATE_CODE = {CANDIDATE: 0, RELIABLE: 1, GOLD: 2}
_CODE_STATE = {v: k for k, v in _STATE_CODE.items()}


@dataclass
class StepDiagnostics:
    frame_idx: int
    center: tuple              # chosen center, frame coords
    f_center: tuple | None     # part-vote argmax, frame coords
    c_center: tuple | None     # net-map argmax, frame coords
    d_t: float | None          # distance between pathway argmaxes
    hcf: bool
    degenerate: bool
    alpha_eff: float           # 1.0 during bootstrap, config alpha after
    f_peak: float
    c_peak: float
    n_voters: int
    counts: dict
    trained: bool
    n_new_parts: int
    votemaps: dict | None = None


@dataclass
class TrackerState:
    config: TrackerConfig
    center: tuple              # frame coords, float
    box: tuple                 # (x, y, w, h), frame coords, float
    bank: PartBank
    net: ConvNet
    adam: AdamState
    archive: list = field(default_factory=list)     # first-N bootstrap samples
    hcf_buffer: list = field(default_factory=list)  # last-N gated samples
    recent: list = field(default_factory=list)      # full-update policy window
    d_history: list = field(default_factory=list)
    frame_idx: int = 1
    rng_parts: np.random.Generator | None = None
    rng_train: np.random.Generator | None = None
    scale_streak: int = 0      # consecutive frames the affine route resized


# ----------------------------------------------------------------- map algebra

def uncertainty_mask(prev_center, shape, sigma_mask: float) -> np.ndarray:
    """exp(-dist/sigma) soft prior centered on the previous prediction."""
    if sigma_mask <= 0:
        raise InvalidInputError(f"sigma_mask must be positive, got {sigma_mask}")
    h, w = shape
    px, py = prev_center
    if not (0 <= px <= w - 1 and 0 <= py <= h - 1):
        raise InvalidInputError(f"previous center {prev_center} outside {w}x{h} map")
    yy, xx = np.ogrid[0:h, 0:w]
    return np.exp(-np.hypot(xx - px, yy - py) / sigma_mask)


def fuse(F: np.ndarray, C: np.ndarray, M: np.ndarray, alpha: float = 0.6) -> np.ndarray:
    """P = (alpha*F + (1-alpha)*C) * M, pixelwise, no renormalization."""
    if not (F.shape == C.shape == M.shape):
        raise InvalidInputError(
            f"map shapes differ: {F.shape}, {C.shape}, {M.shape}")
    return (alpha * F + (1.0 - alpha) * C) * M


def pick_center(P: np.ndarray, prev_center):
    """Argmax of the fused map; ties go to the pixel nearest the previous
    center (then row-major).  An all-zero map keeps the previous center
    and flags the frame as degenerate."""
    if not np.all(np.isfinite(P)):
        raise NumericalError("non-finite fused vote map")
    mx = float(P.max())
    if mx <= 0.0:
        return (float(prev_center[0]), float(prev_center[1])), True
    ys, xs = np.nonzero(P == mx)
    if len(xs) > 1:
        d2 = (xs - prev_center[0]) ** 2 + (ys - prev_center[1]) ** 2
        i = int(np.argmin(d2))  # argmin keeps row-major order on ties
    else:
        i = 0
    return (int(xs[i]), int(ys[i])), False


def _argmax_xy(m: np.ndarray):
    iy, ix = divmod(int(m.argmax()), m.shape[1])
    return (ix, iy)


def _subpixel_peak(m: np.ndarray, ix: int, iy: int):
    """Quadratic refinement of a peak cell along each axis.

    Center picking stays on the pixel grid, but the pathway-agreement
    distance needs this: with a tight tracker both argmaxes snap to the
    same few lattice cells, the distance degenerates to a handful of
    tied values, and a percentile over ties no longer controls the
    admitted fraction.
    """
    h, w = m.shape
    x, y = float(ix), float(iy)
    if 0 < ix < w - 1:
        l, c, r = float(m[iy, ix - 1]), float(m[iy, ix]), float(m[iy, ix + 1])
        den = l - 2.0 * c + r
        if den < 0:
            x += 0.5 * (l - r) / den
    if 0 < iy < h - 1:
        u, c, d = float(m[iy - 1, ix]), float(m[iy, ix]), float(m[iy + 1, ix])
        den = u - 2.0 * c + d
        if den < 0:
            y += 0.5 * (u - d) / den
    return (x, y)


def _max_normalized(m: np.ndarray) -> np.ndarray:
    mx = m.max()
    return m / mx if mx > 0 else m


# ------------------------------------------------------------------ HCF gating

def hcf_gate(state: TrackerState, d_t: float, sample: TrainSample | None = None) -> bool:
    """Record the pathway distance and decide whether this frame counts as
    highly confident: d_t within the configured low percentile of the full
    distance history (gate closed until the history is long enough).  On a
    hit the provided sample joins the rolling HCF buffer."""
    cfg = state.config
    state.d_history.append(float(d_t))
    if len(state.d_history) < cfg.hcf_min_history:
        return False
    flag = d_t <= float(np.percentile(state.d_history, cfg.hcf_percentile))
    if flag and sample is not None:
        state.hcf_buffer.append(sample)
        del state.hcf_buffer[:-cfg.n_bootstrap]
    return flag


# --------------------------------------------------------------- box estimation

def _clip_box(box, frame_w, frame_h):
    x, y, w, h = box
    w = float(max(1.0, min(w, frame_w)))
    h = float(max(1.0, min(h, frame_h)))
    x = float(min(max(x, 0.0), frame_w - w))
    y = float(min(max(y, 0.0), frame_h - h))
    return (x, y, w, h)


def estimate_box(pairs, prev_box, new_center, frame_wh):
    """Box update from (expected, actual) part-position correspondences.

    >=3 non-collinear pairs: least-squares 2-D affine applied to the
    previous box corners, re-axis-aligned by bounding.  The affine is
    skipped when its linear part is implausible for one frame of motion
    (singular values outside [0.7, 1.4]), clearly anisotropic, within
    10% of the identity, or not beating pure translation by a clear
    residual margin.  Part votes land on a pixel lattice, so most
    near-identity fits are quantization noise, and applying them every
    frame random-walks the box size.  A real scale change instead shows
    up as isotropic radial flow that translation cannot fit; appearance
    drift produces the imposter pattern, side-dependent vote clusters
    that the fit reads as a stretch along the motion axis, which is what
    the anisotropy bound rejects.  1-2 pairs (or a skipped fit): mean
    translation.  0 pairs: previous size carried to the new center.
    Always returns a valid box clipped to the frame.
    """
    px, py, pw, ph = prev_box
    fw, fh = frame_wh
    if len(pairs) >= 3:
        E = np.array([p[0] for p in pairs], dtype=np.float64)
        A = np.array([p[1] for p in pairs], dtype=np.float64)
        centered = E - E.mean(axis=0)
        sv = np.linalg.svd(centered, compute_uv=False)
        if sv[1] > 1e-6 * max(sv[0], 1.0):
            G = np.hstack([E, np.ones((len(E), 1))])
            T, *_ = np.linalg.lstsq(G, A, rcond=None)
            s = np.linalg.svd(T[:2], compute_uv=False)
            res_t = A - E - (A - E).mean(axis=0)
            res_a = A - G @ T
            r_t = float(np.sqrt((res_t ** 2).sum() / len(E)))
            r_a = float(np.sqrt((res_a ** 2).sum() / len(E)))
            if (np.all(np.isfinite(T)) and 0.7 <= s[1] and s[0] <= 1.4
                    and s[0] <= 1.15 * s[1]
                    and not (0.9 <= s[1] and s[0] <= 1.1)
                    and r_a <= 0.5 * r_t):
                corners = np.array([[px, py], [px + pw, py],
                                    [px, py + ph], [px + pw, py + ph]])
                tc = np.hstack([corners, np.ones((4, 1))]) @ T
                x0, y0 = tc.min(axis=0)
                x1, y1 = tc.max(axis=0)
                return _clip_box((x0, y0, x1 - x0, y1 - y0), fw, fh)
    if pairs:
        E = np.array([p[0] for p in pairs], dtype=np.float64)
        A = np.array([p[1] for p in pairs], dtype=np.float64)
        tx, ty = (A - E).mean(axis=0)
        return _clip_box((px + tx, py + ty, pw, ph), fw, fh)
    return _clip_box((new_center[0] - pw / 2.0, new_center[1] - ph / 2.0, pw, ph),
                     fw, fh)


# -------------------------------------------------------------- initialization

def _seed_fallback_part(stack, box, bank, cfg, rng):
    """Matched-filter part at the box center so frame 2 has a vote map,
    used when no proposal clears the discriminativeness test."""
    bx, by, bw, bh = box
    sides = scale_sides(bw, bh, cfg.scale_fractions)
    geoms = propose_patches(box, cfg.stride, sides, stack.width, stack.height)
    if not geoms:
        return
    largest = max(g.scale_index for g in geoms)
    pool = [g for g in geoms if g.scale_index == largest]
    g = min(pool, key=lambda q: (abs(q.dx) + abs(q.dy), q.cy, q.cx))
    desc = vectorize_patch(stack, g)
    negs = _pick_negatives(stack, box, g.side, cfg.stride,
                           cfg.n_neg_hard, cfg.n_neg_rand, rng)
    c = desc
    if negs:
        learned = learn_bank([desc], [vectorize_patch(stack, q) for q in negs],
                             bank.lambda_ridge)[:, 0]
        if np.any(learned):
            c = learned
    bank.add(c, g, RELIABLE, 1)


def tracker_init(frame, box, config: TrackerConfig | None = None,
                 seed: int | None = None) -> TrackerState:
    """Build a fresh tracker from the first frame and its box.

    Initial parts that clear the discriminativeness test enter directly
    as Reliable so the vote map is nonempty on frame 2; later selections
    start as Candidates and must earn promotion.
    """
    cfg = config if config is not None else TrackerConfig()
    if seed is None:
        seed = cfg.seed
    arr = np.asarray(frame)
    fh, fw = arr.shape[:2]
    x, y, w, h = (float(v) for v in box)
    if w <= 0 or h <= 0:
        raise InvalidInputError(f"degenerate box {box}")
    if x < 0 or y < 0 or x + w > fw or y + h > fh:
        raise InvalidInputError(f"box {box} outside {fw}x{fh} frame")

    s_parts, s_net, s_train = np.random.SeedSequence(seed).spawn(3)
    rng_parts = np.random.default_rng(s_parts)
    rng_train = np.random.default_rng(s_train)

    center = (x + w / 2.0, y + h / 2.0)
    crop, cmap = crop_search_region(arr, center, (w, h), cfg.s_search)
    stack = extract_channels(crop, cfg.n_orient_bins, cfg.variance_floor)
    side = stack.height

    bank = PartBank(t_d=cfg.t_d, p_plus=cfg.p_promote, p_minus=cfg.p_remove,
                    update_interval=cfg.update_interval, n_max=cfg.n_max,
                    lambda_ridge=cfg.lambda_ridge, gold_windows=cfg.gold_windows)
    box_crop = (x - cmap.x0, y - cmap.y0, w, h)
    parts = select_parts(stack, box_crop, bank, stride=cfg.stride,
                         scale_fractions=cfg.scale_fractions,
                         n_neg_hard=cfg.n_neg_hard, n_neg_rand=cfg.n_neg_rand,
                         rng=rng_parts, frame_idx=1, state=RELIABLE)
    if not parts:
        _seed_fallback_part(stack, box_crop, bank, cfg, rng_parts)
    enforce_budget(bank)

    net = net_init(s_net, in_channels=stack.channels, plan=cfg.channel_plan,
                   head=cfg.head_plan, dtype=np.dtype(cfg.net_dtype).type)
    adam = adam_init(net, lr=cfg.lr, beta1=cfg.adam_beta1,
                     beta2=cfg.adam_beta2, eps=cfg.adam_eps)

    c_crop = cmap.to_crop(center)
    sample = TrainSample(crop=stack.data, center=c_crop,
                         target=make_target(c_crop, default_radius(side),
                                            (side // 4, side // 4)),
                         frame_idx=1, tag="initial")
    return TrackerState(config=cfg, center=center, box=(x, y, w, h), bank=bank,
                        net=net, adam=adam, archive=[sample], frame_idx=1,
                        rng_parts=rng_parts, rng_train=rng_train)


# ------------------------------------------------------------------- stepping

def tracker_step(state: TrackerState, frame):
    """Advance one frame; returns (box, StepDiagnostics)."""
    cfg = state.config
    arr = np.asarray(frame)
    frame_h, frame_w = arr.shape[:2]
    t = state.frame_idx + 1
    bootstrap = t <= cfg.n_bootstrap

    crop, cmap = crop_search_region(arr, state.center,
                                    (state.box[2], state.box[3]), cfg.s_search)
    stack = extract_channels(crop, cfg.n_orient_bins, cfg.variance_floor)
    side = stack.height
    prev_crop = cmap.to_crop(state.center)

    F_raw, n_voters, records = scan_parts(state.bank, stack)
    F = gaussian_filter(F_raw, sigma=cfg.sigma_g, mode="constant") if n_voters else F_raw
    C = None
    if not bootstrap:
        C = np.maximum(forward(state.net, stack.data), 0.0)
    # a peak far below the unit disc the net trains toward is not a vote;
    # max-normalizing such a map would amplify noise to full blend weight
    net_voted = C is not None and float(C.max()) >= _NET_FLOOR

    Fn = _max_normalized(F)
    Cn = _max_normalized(C) if net_voted else np.zeros_like(F)
    alpha_eff = 1.0 if bootstrap else cfg.alpha
    sigma_mask = cfg.sigma_mask if cfg.sigma_mask is not None else side / 4.0
    M = uncertainty_mask(prev_crop, F.shape, sigma_mask)
    P = fuse(Fn, Cn, M, alpha_eff)
    (ccx, ccy), degenerate = pick_center(P, prev_crop)

    f_center = _argmax_xy(F) if n_voters else None
    c_center = _argmax_xy(C) if net_voted else None
    d_t = None
    if n_voters and net_voted:
        fx, fy = _subpixel_peak(F, *f_center)
        nx, ny = _subpixel_peak(C, *c_center)
        d_t = float(np.hypot(fx - nx, fy - ny))

    r = agreement_radius(side)
    record_cooccurrence(state.bank, records, (ccx, ccy), r)

    center_frame = cmap.to_frame((ccx, ccy))
    pairs = []
    for p in state.bank.parts:
        if p.voting and p.uid in records:
            (ax, ay), _ = records[p.uid]
            if (ax - ccx) ** 2 + (ay - ccy) ** 2 <= r * r:
                # the transform maps last frame's part layout to this
                # frame's vote positions, so it moves the previous box
                afx, afy = cmap.to_frame((ax, ay))
                pairs.append(((state.center[0] + p.geom.dx,
                               state.center[1] + p.geom.dy),
                              (afx + p.geom.dx, afy + p.geom.dy)))
    # anchor the previous box at the previous center before transforming:
    # the correspondences measure motion relative to l_t, so an absolute
    # anchor keeps center lag from compounding into the box trajectory
    anchored = (state.center[0] - state.box[2] / 2.0,
                state.center[1] - state.box[3] / 2.0,
                state.box[2], state.box[3])
    new_box = estimate_box(pairs, anchored, center_frame, (frame_w, frame_h))
    # a real scale change shows up as radial flow on consecutive frames; an
    # isolated resize is almost always a lattice-noise coherence that slipped
    # past the residual gate, and letting those through ratchets the box up
    if abs(new_box[2] - state.box[2]) > 1e-6 or abs(new_box[3] - state.box[3]) > 1e-6:
        state.scale_streak += 1
        if state.scale_streak < 2:
            cx = new_box[0] + new_box[2] / 2.0
            cy = new_box[1] + new_box[3] / 2.0
            new_box = _clip_box((cx - state.box[2] / 2.0, cy - state.box[3] / 2.0,
                                 state.box[2], state.box[3]), frame_w, frame_h)
    else:
        state.scale_streak = 0

    hcf = False
    if d_t is not None:
        sample = None
        if cfg.update_policy in ("hcf", "full"):
            sample = TrainSample(crop=stack.data, center=(ccx, ccy),
                                 target=make_target((ccx, ccy),
                                                    default_radius(side),
                                                    (side // 4, side // 4)),
                                 frame_idx=t, tag="hcf")
        hcf = hcf_gate(state, d_t, sample if cfg.update_policy == "hcf" else None)
        if cfg.update_policy == "full" and sample is not None:
            state.recent.append(sample)
            del state.recent[:-cfg.n_bootstrap]
    if bootstrap:
        state.archive.append(
            TrainSample(crop=stack.data, center=(ccx, ccy),
                        target=make_target((ccx, ccy), default_radius(side),
                                           (side // 4, side // 4)),
                        frame_idx=t, tag="initial"))
        state.archive = state.archive[:cfg.n_bootstrap]

    n_new = 0
    if t % cfg.update_interval == 0:
        if cfg.roles == "lifecycle":
            lifecycle_update(state.bank, t)
        enforce_budget(state.bank)
        box_crop = (new_box[0] - cmap.x0, new_box[1] - cmap.y0,
                    new_box[2], new_box[3])
        if (box_crop[0] >= 0 and box_crop[1] >= 0
                and box_crop[0] + box_crop[2] <= stack.width
                and box_crop[1] + box_crop[3] <= stack.height):
            new_parts = select_parts(
                stack, box_crop, state.bank, stride=cfg.stride,
                scale_fractions=cfg.scale_fractions, n_neg_hard=cfg.n_neg_hard,
                n_neg_rand=cfg.n_neg_rand, rng=state.rng_parts, frame_idx=t,
                state=RELIABLE if cfg.roles == "single" else CANDIDATE)
            n_new = len(new_parts)
            enforce_budget(state.bank)

    trained = False
    train_due = (t % cfg.update_interval == 0) or (t == cfg.n_bootstrap)
    if train_due and (cfg.update_policy != "none" or bootstrap):
        samples = list(state.archive) + list(state.hcf_buffer) + list(state.recent)
        if samples:
            batch = []
            for s in samples:
                batch.append(s)
                batch.extend(augment_shift(s, state.rng_train, cfg.shift_frac))
            losses = train_epochs(state.net, state.adam, batch, cfg.k_epochs,
                                  state.rng_train)
            # a dead encoder pins the net at the constant-mean predictor:
            # output ignores the input, the loss sits at the target variance,
            # and no gradient reaches the early layers, so more epochs cannot
            # recover it.  Reseeding is the only way out of that fixed point.
            level = 0.9 * float(np.mean([s.target.var() for s in samples]))
            for _ in range(4):
                outs = [forward(state.net, s.crop) for s in samples[:3]]
                spread = max(float(np.abs(o - outs[0]).max())
                             for o in outs[1:]) if len(outs) > 1 else 1.0
                if spread > 1e-7 or losses[-1] < level:
                    break
                state.net = net_init(
                    int(state.rng_train.integers(2 ** 31)),
                    in_channels=stack.channels, plan=cfg.channel_plan,
                    head=cfg.head_plan, dtype=np.dtype(cfg.net_dtype).type)
                state.adam = adam_init(state.net, lr=cfg.lr,
                                       beta1=cfg.adam_beta1,
                                       beta2=cfg.adam_beta2, eps=cfg.adam_eps)
                losses = train_epochs(state.net, state.adam, batch,
                                      cfg.k_epochs, state.rng_train)
            trained = True

    state.center = (float(center_frame[0]), float(center_frame[1]))
    state.box = new_box
    state.frame_idx = t

    votemaps = None
    if cfg.keep_votemaps:
        votemaps = {"P": P, "F": Fn, "C": Cn, "origin": (cmap.x0, cmap.y0)}
    diag = StepDiagnostics(
        frame_idx=t, center=state.center,
        f_center=cmap.to_frame(f_center) if f_center is not None else None,
        c_center=cmap.to_frame(c_center) if c_center is not None else None,
        d_t=d_t, hcf=hcf, degenerate=degenerate, alpha_eff=alpha_eff,
        f_peak=float(F.max()), c_peak=float(C.max()) if C is not None else 0.0,
        n_voters=n_voters, counts=state.bank.counts(), trained=trained,
        n_new_parts=n_new, votemaps=votemaps)
    return new_box, diag


# ------------------------------------------------------------------ snapshots

def save_state(state: TrackerState, path) -> None:
    """Debug snapshot: config text, part bank, net weights (npz container,
    versioned).  Optimizer moments and RNG streams are deliberately left
    out; a loaded snapshot is for inspection, not bit-exact resume."""
    parts = state.bank.parts
    meta = np.array([[p.uid, p.birth, _STATE_CODE[p.state], p.votes_cast,
                      p.votes_agreeing, p.geom.cx, p.geom.cy, p.geom.side,
                      p.geom.scale_index] for p in parts],
                    dtype=np.int64).reshape(len(parts), 9)
    disp = np.array([[p.geom.dx, p.geom.dy] for p in parts],
                    dtype=np.float64).reshape(len(parts), 2)
    lens = np.array([p.classifier.size for p in parts], dtype=np.int64)
    flat = (np.concatenate([p.classifier for p in parts])
            if parts else np.zeros(0))
    payload = {
        "magic": np.frombuffer(STATE_MAGIC, dtype=np.uint8).copy(),
        "version": np.array([1], dtype=np.int64),
        "config": np.frombuffer(dump_config(state.config).encode(), dtype=np.uint8).copy(),
        "frame_idx": np.array([state.frame_idx], dtype=np.int64),
        "center": np.array(state.center, dtype=np.float64),
        "box": np.array(state.box, dtype=np.float64),
        "d_history": np.array(state.d_history, dtype=np.float64),
        "part_meta": meta,
        "part_disp": disp,
        "part_lens": lens,
        "part_classifiers": flat,
        "bank_next_uid": np.array([state.bank.next_uid], dtype=np.int64),
        "net_pool_after": np.array(state.net.pool_after, dtype=np.int64),
        "net_in_channels": np.array([state.net.in_channels], dtype=np.int64),
        "net_n_layers": np.array([state.net.n_layers], dtype=np.int64),
    }
    for i, (W, b) in enumerate(zip(state.net.weights, state.net.biases)):
        payload[f"net_w{i}"] = W
        payload[f"net_b{i}"] = b
    with open(path, "wb") as fh:
        np.savez(fh, **payload)


def load_state(path) -> dict:
    """Read a snapshot back; returns a dict with keys config, bank, net,
    center, box, frame_idx, d_history."""
    with np.load(path) as z:
        if bytes(z["magic"].tobytes()) != STATE_MAGIC:
            raise InvalidInputError(f"{path}: not a tracker snapshot")
        version = int(z["version"][0])
        if version != 1:
            raise InvalidInputError(f"{path}: unsupported snapshot version {version}")
        cfg = parse_config_text(z["config"].tobytes().decode(), where=str(path))
        bank = PartBank(t_d=cfg.t_d, p_plus=cfg.p_promote, p_minus=cfg.p_remove,
                        update_interval=cfg.update_interval, n_max=cfg.n_max,
                        lambda_ridge=cfg.lambda_ridge, gold_windows=cfg.gold_windows)
        meta = z["part_meta"]
        disp = z["part_disp"]
        lens = z["part_lens"]
        flat = z["part_classifiers"]
        off = 0
        for row, (dx, dy), n in zip(meta, disp, lens):
            uid, birth, code, cast, agree, cx, cy, side, sidx = (int(v) for v in row)
            g = PatchGeometry(cx=cx, cy=cy, side=side, dx=float(dx), dy=float(dy),
                              scale_index=sidx)
            part = FilterPart(classifier=flat[off:off + int(n)].copy(), geom=g,
                              state=_CODE_STATE[code], birth=birth, uid=uid,
                              votes_cast=cast, votes_agreeing=agree)
            bank.parts.append(part)
            off += int(n)
        bank.next_uid = int(z["bank_next_uid"][0])
        n_layers = int(z["net_n_layers"][0])
        weights = [z[f"net_w{i}"] for i in range(n_layers)]
        biases = [z[f"net_b{i}"] for i in range(n_layers)]
        net = ConvNet(weights=weights, biases=biases,
                      pool_after=tuple(int(v) for v in z["net_pool_after"]),
                      in_channels=int(z["net_in_channels"][0]),
                      dtype=weights[0].dtype.type)
        return {
            "config": cfg, "bank": bank, "net": net,
            "center": tuple(z["center"]), "box": tuple(z["box"]),
            "frame_idx": int(z["frame_idx"][0]),
            "d_history": list(z["d_history"]),
        }
