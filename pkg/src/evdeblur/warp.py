"""Bilinear backward warping and the flow-related training losses as metrics."""

import numpy as np

from .validation import check_flow, check_frames, check_image

# weights of the adversarial and flow-smoothness terms in the total loss
LAMBDA_ADV = 0.01
LAMBDA_TV = 0.05

BORDERS = ("clamp", "zero")


def _bilinear(img, sx, sy, border):
    H, W = img.shape
    sx = np.asarray(sx, dtype=np.float64)
    sy = np.asarray(sy, dtype=np.float64)
    if border == "clamp":
        sx = np.clip(sx, 0.0, W - 1.0)
        sy = np.clip(sy, 0.0, H - 1.0)
    elif border != "zero":
        raise ValueError(f"unknown border mode {border!r}; choose from {BORDERS}")
    x0 = np.floor(sx)
    y0 = np.floor(sy)
    fx = sx - x0
    fy = sy - y0
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)
    out = np.zeros(np.broadcast(sx, sy).shape)
    for dy, wy in ((0, 1.0 - fy), (1, fy)):
        for dx, wx in ((0, 1.0 - fx), (1, fx)):
            xi, yi = x0 + dx, y0 + dy
            inside = (xi >= 0) & (xi < W) & (yi >= 0) & (yi < H)
            vals = img[np.clip(yi, 0, H - 1), np.clip(xi, 0, W - 1)]
            out = out + np.where(inside, wx * wy * vals, 0.0)
    return out


def bilinear_sample(img, sx, sy, border="clamp"):
    """Bilinearly interpolate ``img`` at column ``sx`` and row ``sy``.

    ``sx`` and ``sy`` may be scalars or broadcastable arrays. With
    ``border="clamp"`` coordinates are clamped to the image; with
    ``"zero"`` neighbours outside the image contribute zero.
    """
    img = check_image(img, allow_negative=True)
    out = _bilinear(img, sx, sy, border)
    return float(out) if out.ndim == 0 else out


def backward_warp(img, flow, border="clamp"):
    """Sample ``img`` at ``p + flow(p)`` for every pixel ``p``.

    With the forward flow from frame i to i+1, warping frame i+1 predicts
    frame i.
    """
    img = check_image(img, allow_negative=True)
    flow = check_flow(flow, img.shape)
    H, W = img.shape
    yy, xx = np.mgrid[0:H, 0:W]
    return _bilinear(img, xx + flow[0], yy + flow[1], border)


def loss_flow(frames, flows, truth):
    """Mean absolute photometric error of warped frames against ground truth.

    ``(1/(T-1)) sum_i mean|warp(frames[i+1], flows[i]) - truth[i]|``
    """
    frames = check_frames(frames, min_frames=2)
    truth = check_frames(truth, "truth", min_frames=2)
    if frames.shape != truth.shape:
        raise ValueError(f"frames {frames.shape} and truth {truth.shape} differ in shape")
    if len(flows) != len(frames) - 1:
        raise ValueError(f"expected {len(frames) - 1} flows, got {len(flows)}")
    errs = [np.abs(backward_warp(frames[i + 1], flows[i]) - truth[i]).mean()
            for i in range(len(flows))]
    return float(np.mean(errs))


def flow_tv(flow):
    """Mean per-pixel l1 norm of the forward-difference gradients of u and v.

    Differences past the last row/column are taken as zero.
    """
    flow = check_flow(flow)
    gx = np.zeros_like(flow)
    gy = np.zeros_like(flow)
    gx[:, :, :-1] = np.diff(flow, axis=2)
    gy[:, :-1, :] = np.diff(flow, axis=1)
    return float((np.abs(gx) + np.abs(gy)).sum(axis=0).mean())


def loss_tv(flows):
    """Flow smoothness loss: mean :func:`flow_tv` over the flow sequence."""
    if len(flows) == 0:
        raise ValueError("loss_tv needs at least one flow field")
    return float(np.mean([flow_tv(f) for f in flows]))
