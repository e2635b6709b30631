"""FilterParts pathway: discriminative part classifiers with a
candidate/reliable/gold lifecycle.

All part classifiers over one scale are learned jointly in a single
closed-form one-vs-all ridge solve (each patch against all other
patches plus hard negatives).  At tracking time each part's classifier
is cross-correlated over the search region; responses are clamped to be
non-negative and shifted by the part's displacement so every part votes
for the object center.  Reliable and gold parts vote; candidates are
only monitored.  Reliability f_i (agreement frequency with the chosen
center) drives promotion/removal every U frames, and a per-scale budget
evicts redundant young classifiers by dot-product similarity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.ndimage import gaussian_filter

from .errors import InvalidInputError
from .features import (
    FeatureStack,
    PatchGeometry,
    edge_density,
    propose_patches,
    scale_sides,
    vectorize_patch,
)
from .linalg import ridge_solve

CANDIDATE = "candidate"
RELIABLE = "reliable"
GOLD = "gold"

_NEG_FLOOR = 1e-6  # ratio-test denominator floor when negatives are silent


@dataclass(eq=False)
class FilterPart:
    classifier: np.ndarray
    geom: PatchGeometry
    state: str
    birth: int
    uid: int
    votes_cast: int = 0
    votes_agreeing: int = 0
    good_windows: int = 0       # consecutive qualifying windows while Reliable

    @property
    def voting(self) -> bool:
        return self.state in (RELIABLE, GOLD)


@dataclass
class PartBank:
    t_d: float = 1.4
    p_plus: float = 0.2
    p_minus: float = 0.1
    update_interval: int = 10
    n_max: int = 200
    lambda_ridge: float = 0.1
    gold_windows: int = 5
    parts: list = field(default_factory=list)
    next_uid: int = 0

    def __post_init__(self):
        if not (0.0 < self.p_minus < self.p_plus < 1.0):
            raise InvalidInputError(
                f"need 0 < p_minus < p_plus < 1, got {self.p_minus}, {self.p_plus}")

    def add(self, classifier, geom, state, birth) -> FilterPart:
        part = FilterPart(classifier=classifier, geom=geom, state=state,
                          birth=birth, uid=self.next_uid)
        self.next_uid += 1
        self.parts.append(part)
        return part

    def counts(self):
        c = {CANDIDATE: 0, RELIABLE: 0, GOLD: 0}
        for p in self.parts:
            c[p.state] += 1
        return c


def agreement_radius(search_side: int) -> float:
    """Neighborhood radius for vote agreement: max(3 px, 5% of side)."""
    return max(3.0, 0.05 * search_side)


# ------------------------------------------------------------------ learning

def learn_bank(positives, negatives, lam: float) -> np.ndarray:
    """One-vs-all ridge over [positives; negatives]; returns the positive
    columns (k x P), each L2-normalized."""
    if len(positives) < 1 or len(negatives) < 1:
        raise InvalidInputError("need at least one positive and one negative")
    k = len(positives[0])
    rows = list(positives) + list(negatives)
    if any(len(r) != k for r in rows):
        raise InvalidInputError("descriptor length mismatch")
    D = np.vstack(rows).astype(np.float64)
    C = ridge_solve(D, lam)[:, : len(positives)]
    norms = np.linalg.norm(C, axis=0)
    nz = norms > 0
    C[:, nz] /= norms[nz]
    return C


def _window_matrix(stack: FeatureStack, side: int):
    """All side x side windows as L2-normalized rows: ((H', W'), (H'*W', k))."""
    h, w = stack.height, stack.width
    hp, wp = h - side + 1, w - side + 1
    win = sliding_window_view(stack.data, (side, side), axis=(0, 1))
    mat = np.ascontiguousarray(win.transpose(0, 1, 3, 4, 2)).reshape(hp * wp, -1)
    norms = np.sqrt(np.einsum("ij,ij->i", mat, mat))
    mat = mat / np.maximum(norms, 1e-300)[:, None]
    return (hp, wp), mat


def _vote_offset(part: FilterPart) -> tuple:
    """Top-left offset that places window responses as center votes."""
    half = part.geom.side // 2
    return (half - int(round(part.geom.dx)), half - int(round(part.geom.dy)))


def _place_votes(resp: np.ndarray, offset_xy, out_shape) -> np.ndarray:
    """Embed the response grid into a full-size map at the vote offset;
    votes falling outside are dropped."""
    out = np.zeros(out_shape, dtype=resp.dtype)
    ox, oy = offset_xy
    h, w = out_shape
    hp, wp = resp.shape
    y0, y1 = max(0, -oy), min(hp, h - oy)
    x0, x1 = max(0, -ox), min(wp, w - ox)
    if y0 < y1 and x0 < x1:
        out[y0 + oy:y1 + oy, x0 + ox:x1 + ox] = resp[y0:y1, x0:x1]
    return out


def scan_parts(bank: PartBank, stack: FeatureStack):
    """Vote maps for every live part, grouped by scale for one GEMM each.

    Returns (F_raw, n_voters, records) where F_raw is the un-smoothed
    mean vote map over Reliable+Gold parts and records maps part uid ->
    (argmax (x, y), peak value) of that part's vote map.  Parts whose
    patch does not fit the stack cast no vote and get no record.
    """
    h, w = stack.height, stack.width
    F = np.zeros((h, w))
    n_voters = 0
    records = {}
    groups = {}
    for p in bank.parts:
        if p.geom.side <= min(h, w):
            groups.setdefault(p.geom.side, []).append(p)
    for side in sorted(groups):
        plist = groups[side]
        (hp, wp), mat = _window_matrix(stack, side)
        C = np.stack([p.classifier for p in plist], axis=1)
        resp_all = mat @ C
        np.maximum(resp_all, 0.0, out=resp_all)
        for j, part in enumerate(plist):
            placed = _place_votes(resp_all[:, j].reshape(hp, wp),
                                  _vote_offset(part), (h, w))
            flat = int(placed.argmax())
            ay, ax = divmod(flat, w)
            records[part.uid] = ((ax, ay), float(placed[ay, ax]))
            if part.voting:
                F += placed
                n_voters += 1
    if n_voters:
        F /= n_voters
    return F, n_voters, records


def response_map(part: FilterPart, stack: FeatureStack) -> np.ndarray:
    """Single part's center-vote map (clamped, displacement-shifted)."""
    h, w = stack.height, stack.width
    if part.geom.side > min(h, w):
        raise InvalidInputError(
            f"part side {part.geom.side} larger than stack {w}x{h}")
    (hp, wp), mat = _window_matrix(stack, part.geom.side)
    resp = mat @ part.classifier[:, None]
    np.maximum(resp, 0.0, out=resp)
    return _place_votes(resp.reshape(hp, wp), _vote_offset(part), (h, w))


def aggregate_votes(bank: PartBank, stack: FeatureStack, sigma_g: float = 2.0):
    """Smoothed mean vote map over Reliable+Gold parts.

    Returns (F_t, has_voters); a bank without voting parts yields a zero
    map and has_voters=False.
    """
    F, n_voters, _ = scan_parts(bank, stack)
    if n_voters == 0:
        return F, False
    return gaussian_filter(F, sigma=sigma_g, mode="constant"), True


# ----------------------------------------------------------------- selection

def _outside_geoms(box, side: int, stride: int, w: int, h: int):
    """Stride-lattice patches that do not intersect the box rectangle."""
    bx, by, bw, bh = box
    out = []
    half = side // 2
    for gy in range(half, h - (side - half) + 1, stride):
        for gx in range(half, w - (side - half) + 1, stride):
            tlx, tly = gx - half, gy - half
            if tlx + side <= bx or tlx >= bx + bw or tly + side <= by or tly >= by + bh:
                out.append(PatchGeometry(cx=gx, cy=gy, side=side, dx=0.0, dy=0.0,
                                         scale_index=-1))
    return out


def _pick_negatives(stack, box, side, stride, n_hard, n_rand, rng):
    pool = _outside_geoms(box, side, stride, stack.width, stack.height)
    if not pool:
        return []
    dens = np.array([edge_density(stack, g) for g in pool])
    if dens.max() <= 1e-12:
        # featureless surroundings: fall back to random outside patches
        take = min(len(pool), n_hard + n_rand)
        idx = rng.choice(len(pool), size=take, replace=False)
        return [pool[i] for i in sorted(idx)]
    order = np.argsort(-dens, kind="stable")
    hard = [pool[i] for i in order[:n_hard]]
    rest = order[n_hard:]
    if len(rest) and n_rand:
        take = min(len(rest), n_rand)
        idx = rng.choice(len(rest), size=take, replace=False)
        hard += [pool[rest[i]] for i in sorted(idx)]
    return hard


def select_parts(stack: FeatureStack, box, bank: PartBank, *, stride: int = 2,
                 scale_fractions=(0.25, 0.5, 1.0), n_neg_hard: int = 64,
                 n_neg_rand: int = 16, rng=None, frame_idx: int = 0,
                 state: str = CANDIDATE):
    """Learn new parts over the box; smaller scales claim grid points first.

    Repeated selection re-proposes points already hosting parts; that is
    deliberate, since fresh candidates re-learn the current appearance
    while the budget evicts whichever near-duplicates score as most
    similar.  Accepted parts enter in `state` (Candidate by default;
    the first frame seeds Reliable parts so the vote map is nonempty).
    """
    if rng is None:
        rng = np.random.default_rng(0)
    bx, by, bw, bh = box
    sides = scale_sides(bw, bh, scale_fractions)
    proposals = propose_patches(box, stride, sides, stack.width, stack.height)
    if not proposals:
        return []
    covered = set()
    new_parts = []
    for si, side in enumerate(sides):
        geoms = [g for g in proposals
                 if g.scale_index == si and (g.cx, g.cy) not in covered]
        if not geoms:
            continue
        negs = _pick_negatives(stack, box, side, stride, n_neg_hard, n_neg_rand, rng)
        if not negs:
            continue
        pos_desc = [vectorize_patch(stack, g) for g in geoms]
        neg_desc = [vectorize_patch(stack, g) for g in negs]
        C = learn_bank(pos_desc, neg_desc, bank.lambda_ridge)
        neg_resp = np.vstack(neg_desc) @ C     # (n_neg, P)
        for j, g in enumerate(geoms):
            own = float(pos_desc[j] @ C[:, j])
            worst = float(neg_resp[:, j].max())
            if own > bank.t_d * max(worst, _NEG_FLOOR):
                part = bank.add(C[:, j].copy(), g, state, frame_idx)
                new_parts.append(part)
                covered.add((g.cx, g.cy))
    return new_parts


# ----------------------------------------------------------------- lifecycle

def record_cooccurrence(bank: PartBank, records: dict, center, r_rel: float):
    """Update monitoring counters for non-Gold parts that voted this frame."""
    cx, cy = center
    for p in bank.parts:
        if p.state == GOLD or p.uid not in records:
            continue
        (ax, ay), _ = records[p.uid]
        p.votes_cast += 1
        if (ax - cx) ** 2 + (ay - cy) ** 2 <= r_rel ** 2:
            p.votes_agreeing += 1


def lifecycle_update(bank: PartBank, frame_idx: int):
    """Promote/remove non-Gold parts from their agreement frequency.

    f > p_plus promotes a Candidate (with at least U/2 votes of support).
    A Reliable needs gold_windows consecutive qualifying windows before it
    turns Gold, and only while Gold holds under a quarter of the voting
    parts at its scale: Gold is immortal and never retrained, so letting
    every long-lived part in gradually freezes the bank on a stale
    appearance.  f <= p_minus removes; counters reset for the next window.
    """
    min_support = int(np.ceil(bank.update_interval / 2.0))
    votes, golds = {}, {}
    for p in bank.parts:
        if p.voting:
            votes[p.geom.side] = votes.get(p.geom.side, 0) + 1
        if p.state == GOLD:
            golds[p.geom.side] = golds.get(p.geom.side, 0) + 1
    kept = []
    for p in bank.parts:
        if p.state == GOLD or p.votes_cast == 0:
            kept.append(p)
            continue
        f = p.votes_agreeing / p.votes_cast
        if f <= bank.p_minus:
            continue  # dropped
        if f > bank.p_plus and p.votes_cast >= min_support:
            if p.state == CANDIDATE:
                p.state = RELIABLE
                p.good_windows = 0
            else:
                p.good_windows += 1
                side = p.geom.side
                if (p.good_windows >= bank.gold_windows
                        and golds.get(side, 0) < max(1, votes.get(side, 0) // 4)):
                    p.state = GOLD
                    golds[side] = golds.get(side, 0) + 1
        elif p.state == RELIABLE:
            p.good_windows = 0
        p.votes_cast = 0
        p.votes_agreeing = 0
        kept.append(p)
    bank.parts = kept


def enforce_budget(bank: PartBank):
    """Per scale, evict Reliable parts down to N_max voting parts.

    The victim is the Reliable part most similar (classifier dot
    product) to any strictly older Reliable/Gold part; ties prefer the
    youngest cohort, then the latest-inserted part.  Gold is never
    evicted.
    """
    by_scale = {}
    for p in bank.parts:
        if p.voting:
            # key on the actual patch side: scale_index collides across
            # selection rounds once the box size has drifted
            by_scale.setdefault(p.geom.side, []).append(p)
    doomed = set()
    for plist in by_scale.values():
        live = list(plist)
        while len(live) > bank.n_max:
            reliables = [p for p in live if p.state == RELIABLE]
            if not reliables:
                break  # only gold left; bound not enforceable
            best = None
            best_key = None
            for p in reliables:
                older = [q for q in live if q.birth < p.birth and q is not p]
                if older:
                    sim = max(float(p.classifier @ q.classifier) for q in older)
                    key = (1, sim, p.birth, p.uid)
                else:
                    key = (0, 0.0, p.birth, p.uid)  # oldest cohort: last resort
                if best_key is None or key > best_key:
                    best, best_key = p, key
            doomed.add(best.uid)
            live.remove(best)
    if doomed:
        bank.parts = [p for p in bank.parts if p.uid not in doomed]
