"""PSNR, SSIM and photometric losses for evaluating reconstructed sequences."""

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .validation import check_frames, check_image, check_same_shape
from .warp import LAMBDA_TV, loss_flow, loss_tv

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def psnr(a, b, peak=1.0):
    """Peak signal-to-noise ratio in dB; ``inf`` for identical images."""
    a = check_image(a, "a", allow_negative=True)
    b = check_image(b, "b", allow_negative=True)
    check_same_shape(a, b, ("a", "b"))
    mse = np.mean((a - b) ** 2)
    if mse == 0:
        return math.inf
    return float(10.0 * np.log10(peak ** 2 / mse))


def _gaussian_window(size=SSIM_WINDOW, sigma=SSIM_SIGMA):
    r = (size - 1) / 2.0
    x = np.arange(size) - r
    g = np.exp(-x ** 2 / (2.0 * sigma ** 2))
    return g / g.sum()


def _filter_valid(img, g):
    rows = sliding_window_view(img, len(g), axis=0) @ g
    return sliding_window_view(rows, len(g), axis=1) @ g


def ssim(a, b, peak=1.0):
    """Mean single-scale SSIM over all fully-covered window positions.

    Uses an 11x11 Gaussian window (sigma 1.5) with K1 = 0.01, K2 = 0.03 and
    population (biased) local statistics.
    """
    a = check_image(a, "a", allow_negative=True)
    b = check_image(b, "b", allow_negative=True)
    check_same_shape(a, b, ("a", "b"))
    if min(a.shape) < SSIM_WINDOW:
        raise ValueError(f"SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {a.shape}")
    g = _gaussian_window()
    mu_a = _filter_valid(a, g)
    mu_b = _filter_valid(b, g)
    var_a = _filter_valid(a * a, g) - mu_a ** 2
    var_b = _filter_valid(b * b, g) - mu_b ** 2
    cov = _filter_valid(a * b, g) - mu_a * mu_b
    c1 = (SSIM_K1 * peak) ** 2
    c2 = (SSIM_K2 * peak) ** 2
    s = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2))
    return float(s.mean())


def loss_content(frames, truth):
    """Mean over frames of the mean absolute pixel difference."""
    frames = check_frames(frames)
    truth = check_frames(truth, "truth")
    if frames.shape != truth.shape:
        raise ValueError(f"frames {frames.shape} and truth {truth.shape} differ in shape")
    return float(np.mean([np.abs(f - g).mean() for f, g in zip(frames, truth)]))


def loss_total(frames, truth, flows):
    """Content + flow + weighted TV loss. The adversarial term is omitted."""
    return loss_content(frames, truth) + loss_flow(frames, flows, truth) + LAMBDA_TV * loss_tv(flows)


@dataclass
class EvalReport:
    psnr: list = field(default_factory=list)
    ssim: list = field(default_factory=list)
    content_loss: float = 0.0

    @property
    def mean_psnr(self):
        return float(np.mean(self.psnr))

    @property
    def mean_ssim(self):
        return float(np.mean(self.ssim))

    def lines(self):
        out = [f"frame {i} psnr {_fmt(p)} ssim {s:.6f}"
               for i, (p, s) in enumerate(zip(self.psnr, self.ssim), start=1)]
        out.append(f"mean psnr {_fmt(self.mean_psnr)} ssim {self.mean_ssim:.6f}")
        return out


def _fmt(v):
    return "inf" if math.isinf(v) else f"{v:.6f}"


def evaluate(frames, truth, peak=1.0):
    """Per-frame PSNR/SSIM and the content loss of a reconstruction."""
    frames = check_frames(frames)
    truth = check_frames(truth, "truth")
    if frames.shape != truth.shape:
        raise ValueError(f"frames {frames.shape} and truth {truth.shape} differ in shape")
    return EvalReport(
        psnr=[psnr(f, g, peak) for f, g in zip(frames, truth)],
        ssim=[ssim(f, g, peak) for f, g in zip(frames, truth)],
        content_loss=loss_content(frames, truth),
    )
