"""Online-trained fully-convolutional center predictor.

Small net: an encoder of 3x3 convs with ReLU and two 2x2 max-pools
(after convs 2 and 4), then a head of 3x3 convs shrinking the channel
count to 1; the last conv is linear.  Output is a center-likelihood map
at 1/4 the crop resolution, bilinearly upsampled for fusion.

Forward, backward (conv / ReLU / max-pool with argmax routing) and Adam
are implemented here directly on numpy arrays: the training loop runs
online inside the tracker, and tests check the analytic gradients
against finite differences, so the whole chain has to be transparent.
Convolutions are im2col + GEMM; backward w.r.t. the input reuses the
same machinery on the padded output gradient with flipped kernels.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import InvalidInputError, NumericalError

MAGIC = b"CNW1"


@dataclass
class ConvNet:
    weights: list        # per conv: (out_ch, in_ch, 3, 3)
    biases: list         # per conv: (out_ch,)
    pool_after: tuple    # conv indices followed by a 2x2 max-pool
    in_channels: int
    dtype: type = np.float32

    @property
    def n_layers(self):
        return len(self.weights)


@dataclass
class AdamState:
    m_w: list
    v_w: list
    m_b: list
    v_b: list
    t: int = 0
    lr: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class TrainSample:
    crop: np.ndarray     # (H, W, C) feature crop
    center: tuple        # stamped center, crop coords
    target: np.ndarray   # (H/4, W/4) binary disc
    frame_idx: int = 0
    tag: str = "initial"  # "initial" | "hcf"


def net_init(seed: int, in_channels: int = 9,
             plan=(8, 8, 16, 16, 16, 16, 16), head=(8, 4, 2, 1),
             pool_after=(1, 3), dtype=np.float32) -> ConvNet:
    """He-style uniform init, deterministic per seed; biases zero."""
    plan = tuple(plan)
    head = tuple(head)
    if not head or head[-1] != 1:
        raise InvalidInputError(f"head plan must end in 1 channel, got {head}")
    if any(c < 1 for c in plan + head):
        raise InvalidInputError("channel plan entries must be >= 1")
    if any(p >= len(plan) for p in pool_after):
        raise InvalidInputError(f"pool position {pool_after} outside encoder of {len(plan)}")
    rng = np.random.default_rng(seed)
    widths = (in_channels,) + plan + head
    weights, biases = [], []
    for i, (cin, cout) in enumerate(zip(widths[:-1], widths[1:])):
        bound = np.sqrt(6.0 / (9.0 * cin))
        if i == len(widths) - 2:
            # small output layer: starting near zero output lets early updates
            # build the response map instead of first crushing a large random
            # one, which tends to kill the narrow head entirely
            bound *= 0.1
        weights.append(rng.uniform(-bound, bound, size=(cout, cin, 3, 3)).astype(dtype))
        biases.append(np.zeros(cout, dtype=dtype))
    return ConvNet(weights=weights, biases=biases, pool_after=tuple(pool_after),
                   in_channels=in_channels, dtype=dtype)


# ----------------------------------------------------------------- layer ops

def _im2col3(x: np.ndarray) -> np.ndarray:
    """(H, W, C) -> (H*W, C*9) patch matrix for a same-padded 3x3 conv."""
    xp = np.pad(x, ((1, 1), (1, 1), (0, 0)))
    win = sliding_window_view(xp, (3, 3), axis=(0, 1))  # (H, W, C, 3, 3)
    return np.ascontiguousarray(win).reshape(x.shape[0] * x.shape[1], -1)


def _conv_fwd(x, W, b):
    cols = _im2col3(x)
    out = cols @ W.reshape(W.shape[0], -1).T
    out += b
    return out.reshape(x.shape[0], x.shape[1], -1), cols


def _conv_bwd(d_out, cols, W, in_ch):
    h, w, cout = d_out.shape
    dm = d_out.reshape(-1, cout)
    dW = (dm.T @ cols).reshape(W.shape)
    db = dm.sum(axis=0)
    cols2 = _im2col3(d_out)
    k2 = W[:, :, ::-1, ::-1].transpose(0, 2, 3, 1).reshape(-1, in_ch)
    dx = (cols2 @ k2).reshape(h, w, in_ch)
    return dx, dW, db


def _pool_fwd(x):
    h, w, c = x.shape
    win = x.reshape(h // 2, 2, w // 2, 2, c).transpose(0, 2, 4, 1, 3).reshape(h // 2, w // 2, c, 4)
    idx = win.argmax(axis=3)
    out = np.take_along_axis(win, idx[..., None], axis=3)[..., 0]
    return out, idx


def _pool_bwd(d_out, idx, in_shape):
    h, w, c = in_shape
    win = np.zeros((h // 2, w // 2, c, 4), dtype=d_out.dtype)
    np.put_along_axis(win, idx[..., None], d_out[..., None], axis=3)
    return win.reshape(h // 2, w // 2, c, 2, 2).transpose(0, 3, 1, 4, 2).reshape(h, w, c)


def _forward_raw(net: ConvNet, x: np.ndarray, check_finite: bool = False):
    """Run the net; returns (raw map (H/4, W/4), caches for backward)."""
    if x.ndim != 3 or x.shape[2] != net.in_channels:
        raise InvalidInputError(f"expected (H, W, {net.in_channels}) input, got {x.shape}")
    n_pools = len(net.pool_after)
    div = 2 ** n_pools
    if x.shape[0] % div or x.shape[1] % div:
        raise InvalidInputError(f"spatial dims {x.shape[:2]} not divisible by {div}")
    h = np.ascontiguousarray(x, dtype=net.dtype)
    caches = []
    last = net.n_layers - 1
    for i, (W, b) in enumerate(zip(net.weights, net.biases)):
        pre, cols = _conv_fwd(h, W, b)
        if check_finite and not np.all(np.isfinite(pre)):
            raise NumericalError(f"non-finite activations at conv layer {i}")
        relu_mask = None
        if i != last:
            relu_mask = pre > 0
            h = pre * relu_mask
        else:
            h = pre
        pool_idx = pool_shape = None
        if i in net.pool_after:
            pool_shape = h.shape
            h, pool_idx = _pool_fwd(h)
        caches.append((cols, relu_mask, pool_idx, pool_shape))
    return h[:, :, 0], caches


def upsample_bilinear(m: np.ndarray, factor: int = 4) -> np.ndarray:
    """Bilinear upsample with half-pixel alignment and edge clamping."""
    h, w = m.shape
    out_h, out_w = h * factor, w * factor
    src_y = (np.arange(out_h) + 0.5) / factor - 0.5
    src_x = (np.arange(out_w) + 0.5) / factor - 0.5
    y0 = np.clip(np.floor(src_y).astype(np.intp), 0, h - 1)
    x0 = np.clip(np.floor(src_x).astype(np.intp), 0, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = np.clip(src_y - y0, 0.0, 1.0)[:, None]
    fx = np.clip(src_x - x0, 0.0, 1.0)[None, :]
    top = m[np.ix_(y0, x0)] * (1 - fx) + m[np.ix_(y0, x1)] * fx
    bot = m[np.ix_(y1, x0)] * (1 - fx) + m[np.ix_(y1, x1)] * fx
    return top * (1 - fy) + bot * fy


def forward(net: ConvNet, crop: np.ndarray) -> np.ndarray:
    """Center map at crop resolution (raw net output, bilinear x4)."""
    raw, _ = _forward_raw(net, crop)
    return upsample_bilinear(raw.astype(np.float64), 4)


def default_radius(crop_side: int) -> float:
    """Disc radius at output resolution: max(2, 5% of crop side) / 4.

    Small crops land below one output pixel and make_target stamps a
    single cell; a fatter disc there would plateau the upsampled map
    and bias its argmax.
    """
    return max(2.0, 0.05 * crop_side) / 4.0


def make_target(center, radius: float, out_size) -> np.ndarray:
    """Binary disc stamped at `center` (crop coords) on the output grid."""
    out_h, out_w = out_size
    cy = (center[1] + 0.5) / 4.0 - 0.5
    cx = (center[0] + 0.5) / 4.0 - 0.5
    yy, xx = np.mgrid[0:out_h, 0:out_w]
    disc = (yy - cy) ** 2 + (xx - cx) ** 2 <= radius ** 2
    target = disc.astype(np.float32)
    if not target.any():  # radius < half a px: keep a single-pixel stamp
        iy = int(np.clip(round(cy), 0, out_h - 1))
        ix = int(np.clip(round(cx), 0, out_w - 1))
        target[iy, ix] = 1.0
    return target


def loss_and_backward(net: ConvNet, sample: TrainSample):
    """MSE over output pixels plus exact analytic parameter gradients."""
    out, caches = _forward_raw(net, sample.crop, check_finite=True)
    target = np.asarray(sample.target, dtype=out.dtype)
    if target.shape != out.shape:
        raise InvalidInputError(f"target {target.shape} vs output {out.shape}")
    diff = out - target
    loss = float(np.mean(diff.astype(np.float64) ** 2))
    d = (2.0 / diff.size) * diff[:, :, None].astype(net.dtype)
    grads = [None] * net.n_layers
    for i in range(net.n_layers - 1, -1, -1):
        cols, relu_mask, pool_idx, pool_shape = caches[i]
        if pool_idx is not None:
            d = _pool_bwd(d, pool_idx, pool_shape)
        if relu_mask is not None:
            d = d * relu_mask
        d, dW, db = _conv_bwd(d, cols, net.weights[i], net.weights[i].shape[1])
        grads[i] = (dW, db)
    return loss, grads


def adam_init(net: ConvNet, lr: float = 1e-5, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    z = lambda arrs: [np.zeros_like(a) for a in arrs]
    return AdamState(m_w=z(net.weights), v_w=z(net.weights),
                     m_b=z(net.biases), v_b=z(net.biases),
                     t=0, lr=lr, beta1=beta1, beta2=beta2, eps=eps)


def adam_step(net: ConvNet, st: AdamState, grads) -> None:
    """In-place Adam update with bias correction."""
    if len(grads) != net.n_layers:
        raise InvalidInputError("gradient list does not match layer count")
    st.t += 1
    bc1 = 1.0 - st.beta1 ** st.t
    bc2 = 1.0 - st.beta2 ** st.t
    for i, (dW, db) in enumerate(grads):
        if dW.shape != net.weights[i].shape or db.shape != net.biases[i].shape:
            raise InvalidInputError(f"gradient shape mismatch at layer {i}")
        for p, g, m, v in ((net.weights[i], dW, st.m_w[i], st.v_w[i]),
                           (net.biases[i], db, st.m_b[i], st.v_b[i])):
            m *= st.beta1
            m += (1.0 - st.beta1) * g
            v *= st.beta2
            v += (1.0 - st.beta2) * g * g
            p -= st.lr * (m / bc1) / (np.sqrt(v / bc2) + st.eps)


def shift_crop(crop: np.ndarray, dx: int, dy: int) -> np.ndarray:
    """Translate content by (dx, dy), wrapping at the borders.

    Wrapping instead of edge replication matters: a replicated band has
    a width equal to the shift, which hands a convnet the offset for
    free and lets it fit shifted targets without reading the content.
    """
    return np.roll(np.roll(crop, dy, axis=0), dx, axis=1)


def augment_shift(sample: TrainSample, rng: np.random.Generator,
                  shift_frac: float = 0.10, radius: float | None = None):
    """Two copies of `sample`, each translated by an independent uniform
    offset (|delta| <= shift_frac * crop side); targets re-stamped at the
    shifted center so crop/target alignment stays exact."""
    side = min(sample.crop.shape[:2])
    bound = max(1, int(round(shift_frac * side)))
    if bound >= side // 4:
        raise InvalidInputError(f"shift bound {bound} too large for crop side {side}")
    if radius is None:
        radius = default_radius(side)
    out = []
    for _ in range(2):
        dx, dy = (int(v) for v in rng.integers(-bound, bound + 1, size=2))
        crop = shift_crop(sample.crop, dx, dy) if (dx or dy) else sample.crop.copy()
        center = (sample.center[0] + dx, sample.center[1] + dy)
        target = make_target(center, radius, sample.target.shape)
        out.append(TrainSample(crop=crop, center=center, target=target,
                               frame_idx=sample.frame_idx, tag=sample.tag))
    return out


def train_epochs(net: ConvNet, adam: AdamState, samples, k_epochs: int,
                 rng: np.random.Generator):
    """k_epochs passes of per-sample (batch 1) updates in seeded shuffled
    order.  Returns the mean loss of each epoch."""
    if not samples:
        raise InvalidInputError("empty training set")
    history = []
    for _ in range(k_epochs):
        order = rng.permutation(len(samples))
        total = 0.0
        for j in order:
            loss, grads = loss_and_backward(net, samples[j])
            adam_step(net, adam, grads)
            total += loss
        history.append(total / len(samples))
    return history


# --------------------------------------------------------------- persistence

def save_weights(net: ConvNet, path) -> None:
    """Binary snapshot: magic, layer count, pool positions, per-layer
    shapes, then weights and biases as little-endian float32."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        head = np.array([net.n_layers, net.in_channels, len(net.pool_after)],
                        dtype="<u4")
        fh.write(head.tobytes())
        fh.write(np.array(net.pool_after, dtype="<u4").tobytes())
        for W in net.weights:
            fh.write(np.array(W.shape, dtype="<u4").tobytes())
        for W, b in zip(net.weights, net.biases):
            fh.write(W.astype("<f4").tobytes())
            fh.write(b.astype("<f4").tobytes())


def load_weights(path, dtype=np.float32) -> ConvNet:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise InvalidInputError(f"{path}: not a weight snapshot (magic {data[:4]!r})")
    pos = 4
    n_layers, in_channels, n_pool = np.frombuffer(data, "<u4", 3, pos)
    pos += 12
    pool_after = tuple(int(p) for p in np.frombuffer(data, "<u4", n_pool, pos))
    pos += 4 * n_pool
    shapes = []
    for _ in range(n_layers):
        shapes.append(tuple(int(v) for v in np.frombuffer(data, "<u4", 4, pos)))
        pos += 16
    weights, biases = [], []
    for shp in shapes:
        n = int(np.prod(shp))
        weights.append(np.frombuffer(data, "<f4", n, pos).reshape(shp).astype(dtype))
        pos += 4 * n
        biases.append(np.frombuffer(data, "<f4", shp[0], pos).astype(dtype))
        pos += 4 * shp[0]
    if pos != len(data):
        raise InvalidInputError(f"{path}: trailing bytes in weight snapshot")
    return ConvNet(weights=weights, biases=biases, pool_after=pool_after,
                   in_channels=int(in_channels), dtype=dtype)
