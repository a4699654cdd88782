"""Directional event filtering of stacked event frames.

For every output pixel ``p`` the stacked event volume of one interval
``[i, i+1)`` is sampled at ``2k+1`` space-time points spaced along the
local motion direction around a per-pixel temporal center ``c(p)``, and the
samples are blended with simplex weights ``alpha``::

    G(p) = sum_{j=-k..k} alpha_j(p) * s(p + stride*j*d(p), c(p) + stride*j*dt)

``s`` is trilinear interpolation in (channel, row, column) and ``dt`` is one
chunk duration. The velocity ``d(p)`` at time ``c(p)`` comes from moving the
flow samples of time ``i`` forward to the ``c(p)`` plane and resampling them
at ``p`` with a Gaussian Nadaraya-Watson estimator restricted to an L x L
window. Everything is differentiable in ``alpha`` (through its logits),
``c`` and the volume; :func:`directional_filter_grad` returns those
gradients analytically.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator

from .events import StackedEventFrames
from .validation import check_flow

DEFAULT_K = 2
DEFAULT_STRIDE = 1.0
DEFAULT_SIGMA = 1.0
DEFAULT_WINDOW = 20
WEIGHT_FLOOR = 1e-12

# target-source pairs processed per block in the velocity resampling
_PAIR_BUDGET = 2_000_000


def softmax_coefficients(logits):
    """Map unconstrained logits of shape (2k+1, H, W) onto the simplex along axis 0."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=0, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=0, keepdims=True)


@dataclass(frozen=True)
class DefParams:
    """Per-pixel temporal centers and filter coefficients plus kernel settings.

    ``alpha`` has shape (2k+1, H, W); index ``j + k`` weights offset ``j``.
    """

    c: np.ndarray
    alpha: np.ndarray
    k: int = DEFAULT_K
    stride: float = DEFAULT_STRIDE
    sigma: float = DEFAULT_SIGMA
    window: float = DEFAULT_WINDOW

    def __post_init__(self):
        c = np.asarray(self.c, dtype=np.float64)
        alpha = np.asarray(self.alpha, dtype=np.float64)
        if int(self.k) != self.k or self.k < 1:
            raise ValueError(f"k must be an integer >= 1, got {self.k!r}")
        if c.ndim != 2:
            raise ValueError(f"c must be 2-D, got shape {c.shape}")
        if alpha.shape != (2 * int(self.k) + 1,) + c.shape:
            raise ValueError(f"alpha must have shape {(2 * int(self.k) + 1,) + c.shape}, got {alpha.shape}")
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(alpha))):
            raise ValueError("DEF parameters must be finite")
        if np.any(alpha < 0) or np.max(np.abs(alpha.sum(axis=0) - 1.0)) > 1e-6:
            raise ValueError("alpha must be non-negative and sum to 1 at every pixel")
        if not self.stride > 0 or not self.sigma > 0 or not self.window >= 1:
            raise ValueError("stride and sigma must be > 0 and window >= 1")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "k", int(self.k))

    @classmethod
    def from_logits(cls, c, logits, **kwargs):
        logits = np.asarray(logits, dtype=np.float64)
        return cls(c, softmax_coefficients(logits), k=(logits.shape[0] - 1) // 2, **kwargs)

    @classmethod
    def default(cls, shape, interval_start=1.0, k=DEFAULT_K, **kwargs):
        """Centers at the interval midpoint and uniform coefficients."""
        c = np.full(shape, interval_start + 0.5)
        alpha = np.full((2 * k + 1,) + tuple(shape), 1.0 / (2 * k + 1))
        return cls(c, alpha, k=k, **kwargs)

    @property
    def shape(self):
        return self.c.shape


@dataclass(frozen=True)
class ScatterSamples:
    """Flow samples moved to another time plane.

    ``positions`` and ``velocities`` are (N, 2) arrays in (x, y) order;
    ``origins`` are the grid pixels the samples started from.
    """

    positions: np.ndarray
    velocities: np.ndarray
    origins: np.ndarray


def propagate_velocity(flow, c_value, i) -> ScatterSamples:
    """Shift every grid pixel by ``(c_value - i) * flow`` keeping its velocity."""
    flow = check_flow(flow)
    if c_value < i:
        raise ValueError(f"time plane {c_value} precedes the flow time {i}")
    H, W = flow.shape[1:]
    yy, xx = np.mgrid[0:H, 0:W]
    origins = np.stack([xx.ravel(), yy.ravel()], axis=1).astype(np.float64)
    velocities = np.stack([flow[0].ravel(), flow[1].ravel()], axis=1)
    return ScatterSamples(origins + (c_value - i) * velocities, velocities, origins)


def resample_velocity(samples: ScatterSamples, target, sigma=DEFAULT_SIGMA, window=DEFAULT_WINDOW):
    """Gaussian Nadaraya-Watson estimate of the velocity at ``target``.

    Only samples inside the ``window`` x ``window`` box centred on the
    target contribute. When none do (or their weights vanish), the velocity
    of the sample whose origin is nearest to the target is returned.
    """
    target = np.asarray(target, dtype=np.float64)
    rel = samples.positions - target
    inside = np.all(np.abs(rel) <= window / 2.0, axis=1)
    w = np.exp(-(rel ** 2).sum(axis=1) / (2.0 * sigma ** 2)) * inside
    total = w.sum()
    if total < WEIGHT_FLOOR:
        nearest = np.argmin(((samples.origins - target) ** 2).sum(axis=1))
        return samples.velocities[nearest].copy()
    return ((w / total)[:, None] * samples.velocities).sum(axis=0)


def _corner_terms(vol, x, y, z):
    """Trilinear value and coordinate derivatives with zero padding.

    Returns value, (d/dx, d/dy, d/dz) and the list of corner
    (index, weight, inside) triples for scattering volume gradients.
    """
    C, H, W = vol.shape
    x0, y0, z0 = np.floor(x), np.floor(y), np.floor(z)
    fx, fy, fz = x - x0, y - y0, z - z0
    x0, y0, z0 = x0.astype(np.int64), y0.astype(np.int64), z0.astype(np.int64)
    val = np.zeros(x.shape)
    gx = np.zeros(x.shape)
    gy = np.zeros(x.shape)
    gz = np.zeros(x.shape)
    corners = []
    for dz in (0, 1):
        wz, sz = (1.0 - fz, -1.0) if dz == 0 else (fz, 1.0)
        zi = z0 + dz
        for dy in (0, 1):
            wy, sy = (1.0 - fy, -1.0) if dy == 0 else (fy, 1.0)
            yi = y0 + dy
            for dx in (0, 1):
                wx, sx = (1.0 - fx, -1.0) if dx == 0 else (fx, 1.0)
                xi = x0 + dx
                inside = (zi >= 0) & (zi < C) & (yi >= 0) & (yi < H) & (xi >= 0) & (xi < W)
                v = np.where(inside, vol[np.clip(zi, 0, C - 1), np.clip(yi, 0, H - 1), np.clip(xi, 0, W - 1)], 0.0)
                val += wx * wy * wz * v
                gx += sx * wy * wz * v
                gy += wx * sy * wz * v
                gz += wx * wy * sz * v
                corners.append(((zi, yi, xi), wx * wy * wz, inside))
    return val, (gx, gy, gz), corners


def trilinear_sample(volume, x, y, t_channel):
    """Trilinear interpolation of a (C, H, W) volume, zero outside.

    ``x`` is the column, ``y`` the row and ``t_channel`` the continuous
    channel coordinate; scalars or broadcastable arrays are accepted.
    """
    vol = _volume_array(volume)
    x, y, z = np.broadcast_arrays(*(np.asarray(a, dtype=np.float64) for a in (x, y, t_channel)))
    val = _corner_terms(vol, x, y, z)[0]
    return float(val) if val.ndim == 0 else val


def _volume_array(volume):
    data = volume.data if isinstance(volume, StackedEventFrames) else volume
    vol = np.asarray(data, dtype=np.float64)
    if vol.ndim != 3:
        raise ValueError(f"event volume must be (C, H, W), got shape {vol.shape}")
    return vol


def _interval_volume(volume, interval):
    a, b = map(float, interval)
    if b <= a:
        raise ValueError(f"empty interval [{a}, {b})")
    if isinstance(volume, StackedEventFrames):
        starts = volume.boundaries[:, 0]
        ends = volume.boundaries[:, -1]
        hits = np.nonzero((starts == a) & (ends == b))[0]
        if len(hits) == 0:
            raise ValueError(f"interval [{a}, {b}) is not covered by the event volume")
        return np.asarray(volume.interval(int(hits[0])), dtype=np.float64), a, b
    return _volume_array(volume), a, b


def _resample_block(flow, c_rel, rows, params):
    """Velocities and their c-derivatives for target rows ``rows``.

    ``c_rel`` is ``c - i`` over the full image. Returns arrays of shape
    (2, len(rows), W).
    """
    H, W = flow.shape[1:]
    half = params.window / 2.0
    reach = half + np.max(np.abs(c_rel)) * np.max(np.abs(flow[1])) if flow.size else half
    r_lo = max(0, rows.start - int(np.floor(reach)) - 1)
    r_hi = min(H, rows.stop + int(np.floor(reach)) + 1)

    ty, tx = np.mgrid[rows, 0:W]
    tx, ty = tx.ravel().astype(np.float64), ty.ravel().astype(np.float64)
    tc = c_rel[rows].ravel()
    sy, sx = np.mgrid[r_lo:r_hi, 0:W]
    sx, sy = sx.ravel().astype(np.float64), sy.ravel().astype(np.float64)
    su = flow[0, r_lo:r_hi].ravel()
    sv = flow[1, r_lo:r_hi].ravel()

    relx = sx[None, :] + tc[:, None] * su[None, :] - tx[:, None]
    rely = sy[None, :] + tc[:, None] * sv[None, :] - ty[:, None]
    inside = (np.abs(relx) <= half) & (np.abs(rely) <= half)
    w = np.where(inside, np.exp(-(relx ** 2 + rely ** 2) / (2.0 * params.sigma ** 2)), 0.0)
    total = w.sum(axis=1)
    ok = total >= WEIGHT_FLOOR
    safe = np.where(ok, total, 1.0)
    # normalizing before the weighted sum keeps symmetric means exact
    wn = w / safe[:, None]
    du = wn @ su
    dv = wn @ sv
    # d w / d c = w * (-(rel . v) / sigma^2)
    dw = w * (-(relx * su[None, :] + rely * sv[None, :]) / params.sigma ** 2)
    ddu = (dw @ su - dw.sum(axis=1) * du) / safe
    ddv = (dw @ sv - dw.sum(axis=1) * dv) / safe

    fallback_u = flow[0, rows].ravel()
    fallback_v = flow[1, rows].ravel()
    du = np.where(ok, du, fallback_u)
    dv = np.where(ok, dv, fallback_v)
    ddu = np.where(ok, ddu, 0.0)
    ddv = np.where(ok, ddv, 0.0)
    shape = (len(tc) // W, W)
    return (np.stack([du.reshape(shape), dv.reshape(shape)]),
            np.stack([ddu.reshape(shape), ddv.reshape(shape)]))


def resample_velocity_field(flow, c, interval_start, params: DefParams, rows=None):
    """Nadaraya-Watson velocity at every pixel ``p`` on its own time plane ``c(p)``.

    Returns the (2, H, W) velocities and their derivatives with respect to
    ``c``.
    """
    flow = check_flow(flow)
    c_rel = np.asarray(c, dtype=np.float64) - interval_start
    rows = rows or slice(0, flow.shape[1])
    return _resample_block(flow, c_rel, rows, params)


def _row_blocks(H, W, params, c_rel, flow):
    reach = params.window / 2.0 + np.max(np.abs(c_rel)) * np.max(np.abs(flow[1]))
    span = 2 * int(np.floor(reach)) + 3
    per_row = W * W * span
    step = int(max(1, min(H, _PAIR_BUDGET // max(per_row, 1))))
    return [slice(r, min(H, r + step)) for r in range(0, H, step)]


def _filter_block(vol, flow, params, a, b, c, rows, upstream=None):
    C, H, W = vol.shape
    dt = (b - a) / C
    c_raw = c[rows]
    c_blk = np.clip(c_raw, a, b)
    c_full = np.clip(c, a, b)
    d, dd = _resample_block(flow, c_full - a, rows, params)
    ty, tx = np.mgrid[rows, 0:W].astype(np.float64)
    k, lam = params.k, params.stride
    alpha = params.alpha[:, rows]
    z_center = (c_blk - a) / dt - 0.5

    samples = np.empty((2 * k + 1,) + c_blk.shape)
    G = np.zeros(c_blk.shape)
    grads = None
    if upstream is not None:
        up = upstream[rows]
        d_c = np.zeros(c_blk.shape)
        d_vol = np.zeros_like(vol)
    for idx, j in enumerate(range(-k, k + 1)):
        x = tx + lam * j * d[0]
        y = ty + lam * j * d[1]
        z = z_center + lam * j
        s, (sx, sy, sz), corners = _corner_terms(vol, x, y, z)
        samples[idx] = s
        G += alpha[idx] * s
        if upstream is not None:
            dcoord = sx * lam * j * dd[0] + sy * lam * j * dd[1] + sz / dt
            d_c += up * alpha[idx] * dcoord
            scale = up * alpha[idx]
            for (zi, yi, xi), wgt, inside in corners:
                np.add.at(d_vol, (zi[inside], yi[inside], xi[inside]), (scale * wgt)[inside])
    if upstream is not None:
        inside_interval = (c_raw >= a) & (c_raw <= b)
        d_c = np.where(inside_interval, d_c, 0.0)
        grads = (up[None] * samples, d_c, d_vol)
    return G, samples, grads


def _run_blocks(fn, blocks, n_jobs):
    if n_jobs is None or n_jobs == 1 or len(blocks) == 1:
        return [fn(blk) for blk in blocks]
    with ThreadPoolExecutor(max_workers=n_jobs if n_jobs > 0 else None) as pool:
        return list(pool.map(fn, blocks))


def _prepare(volume, flow, params, interval):
    vol, a, b = _interval_volume(volume, interval)
    C, H, W = vol.shape
    flow = check_flow(flow, (H, W))
    if params.shape != (H, W):
        raise ValueError(f"DEF parameters sized {params.shape} but volume is {(H, W)}")
    return vol, flow, a, b


def directional_filter(volume, flow, params: DefParams, interval=(1.0, 2.0), n_jobs=1):
    """Boundary guidance map of one interval, shape (H, W).

    Parameters
    ----------
    volume : ndarray (C, H, W) or StackedEventFrames
        Stacked event frames. A plain array must hold exactly the chunks of
        ``interval``; a :class:`StackedEventFrames` is searched for it.
    flow : ndarray (2, H, W)
        Forward flow at the interval start.
    params : DefParams
    interval : (float, float)
    n_jobs : int
        Worker threads over row blocks; the result does not depend on it.
    """
    vol, flow, a, b = _prepare(volume, flow, params, interval)
    c = params.c
    blocks = _row_blocks(vol.shape[1], vol.shape[2], params, np.clip(c, a, b) - a, flow)
    parts = _run_blocks(lambda rows: _filter_block(vol, flow, params, a, b, c, rows)[0], blocks, n_jobs)
    return np.concatenate(parts, axis=0)


@dataclass(frozen=True)
class DefGradients:
    """Gradients of ``sum_p upstream(p) * G(p)``."""

    alpha: np.ndarray
    logits: np.ndarray
    c: np.ndarray
    volume: np.ndarray
    guidance: Optional[np.ndarray] = None


def directional_filter_grad(volume, flow, params: DefParams, interval=(1.0, 2.0), upstream=None, n_jobs=1):
    """Analytic gradients of ``sum_p upstream(p) * G(p)``.

    Derivatives are taken with respect to the coefficients (both the
    simplex values and their softmax logits), the temporal centers
    (including the dependence of the resampled velocity on ``c``) and the
    volume entries. Partial volume gradients of row blocks are summed in
    block order, so results do not depend on ``n_jobs``.
    """
    vol, flow, a, b = _prepare(volume, flow, params, interval)
    H, W = vol.shape[1:]
    upstream = np.ones((H, W)) if upstream is None else np.asarray(upstream, dtype=np.float64)
    if upstream.shape != (H, W):
        raise ValueError(f"upstream must have shape {(H, W)}, got {upstream.shape}")
    c = params.c
    blocks = _row_blocks(H, W, params, np.clip(c, a, b) - a, flow)
    parts = _run_blocks(lambda rows: _filter_block(vol, flow, params, a, b, c, rows, upstream), blocks, n_jobs)

    G = np.concatenate([p[0] for p in parts], axis=0)
    d_alpha = np.concatenate([p[2][0] for p in parts], axis=1)
    d_c = np.concatenate([p[2][1] for p in parts], axis=0)
    d_vol = np.zeros_like(vol)
    for p in parts:
        d_vol += p[2][2]
    alpha = params.alpha
    d_logits = alpha * (d_alpha - (alpha * d_alpha).sum(axis=0, keepdims=True))
    return DefGradients(d_alpha, d_logits, d_c, d_vol, G)


class DirectionalEventFilter(BaseEstimator):
    """Estimator-style front end for :func:`directional_filter`.

    Parameters
    ----------
    k : int, default 2
        Half-width of the filter support (2k+1 samples).
    stride : float, default 1.0
        Sampling stride in pixels along the velocity and in chunks in time.
    sigma : float, default 1.0
        Bandwidth (pixels) of the Gaussian resampling kernel.
    window : float, default 20
        Side of the square resampling window (pixels).
    n_jobs : int, default 1
    """

    def __init__(self, k=DEFAULT_K, stride=DEFAULT_STRIDE, sigma=DEFAULT_SIGMA, window=DEFAULT_WINDOW, n_jobs=1):
        self.k = k
        self.stride = stride
        self.sigma = sigma
        self.window = window
        self.n_jobs = n_jobs

    def fit(self, X=None, y=None):
        DefParams.default((1, 1), k=self.k, stride=self.stride, sigma=self.sigma, window=self.window)
        return self

    def params(self, c, logits):
        """Build :class:`DefParams` from centers and coefficient logits."""
        return DefParams.from_logits(c, logits, stride=self.stride, sigma=self.sigma, window=self.window)

    def transform(self, X, flow, c, logits, interval=(1.0, 2.0)):
        return directional_filter(X, flow, self.params(c, logits), interval, n_jobs=self.n_jobs)

    def gradient(self, X, flow, c, logits, interval=(1.0, 2.0), upstream=None):
        return directional_filter_grad(X, flow, self.params(c, logits), interval, upstream, n_jobs=self.n_jobs)
