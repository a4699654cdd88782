"""Finite-difference verification of the directional filter gradients."""

from dataclasses import dataclass, field

import numpy as np

from .def_filter import DefParams, directional_filter, directional_filter_grad, resample_velocity_field

REL_TOL = 1e-3
# entries whose analytic and numeric gradients are both below this are
# compared in absolute terms
GRAD_FLOOR = 1e-6


def relative_error(analytic, numeric, floor=GRAD_FLOOR):
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))


def _stencil(params, d, dd, a, dt, k):
    """Sample coordinates of every pixel and their derivatives in ``c``."""
    H, W = params.shape
    yy, xx = np.mgrid[0:H, 0:W].astype(np.float64)
    z0 = (params.c - a) / dt - 0.5
    coords, rates = [], []
    for j in range(-k, k + 1):
        step = params.stride * j
        coords += [xx + step * d[0], yy + step * d[1], z0 + step]
        rates += [step * dd[0], step * dd[1], np.full((H, W), 1.0 / dt)]
    return np.stack(coords), np.stack(rates)


def random_config(rng, size=8, chunks=8, k=2, h=1e-4, safety=4.0, flow_scale=1.0, max_tries=200):
    """Draw (volume, flow, logits, c, upstream) away from trilinear kinks.

    A coordinate is safe when a step of ``h`` in ``c`` moves it less than
    ``1/safety`` of its distance to the nearest integer. Temporal centers
    are redrawn pixel by pixel until every coordinate is safe; each pixel's
    stencil depends only on its own center.
    """
    a, b = 1.0, 2.0
    dt = (b - a) / chunks
    volume = rng.normal(size=(chunks, size, size))
    flow = flow_scale * rng.normal(size=(2, size, size))
    logits = rng.normal(size=(2 * k + 1, size, size))
    upstream = rng.normal(size=(size, size))
    c = rng.uniform(a + 0.05, b - 0.05, size=(size, size))
    for _ in range(max_tries):
        params = DefParams.from_logits(c, logits)
        d, dd = resample_velocity_field(flow, c, a, params)
        coords, rates = _stencil(params, d, dd, a, dt, k)
        dist = np.abs(coords - np.round(coords))
        moving = rates != 0
        bad = np.any(moving & (dist <= safety * h * np.abs(rates)), axis=0)
        if not bad.any():
            return volume, flow, logits, c, upstream
        c = np.where(bad, rng.uniform(a + 0.05, b - 0.05, size=c.shape), c)
    raise RuntimeError("could not draw a kink-free configuration")


@dataclass
class GradcheckReport:
    max_rel: dict = field(default_factory=lambda: {"logits": 0.0, "c": 0.0, "volume": 0.0})
    n_configs: int = 0

    @property
    def passed(self):
        return all(v < REL_TOL for v in self.max_rel.values())

    def lines(self):
        out = [f"{name} max_rel_err {val:.3e}" for name, val in self.max_rel.items()]
        out.append(f"configs {self.n_configs} {'PASS' if self.passed else 'FAIL'} (tol {REL_TOL:.0e})")
        return out


def check_config(volume, flow, logits, c, upstream, h=1e-4, n_volume=16, rng=None):
    """Max relative errors of analytic vs central-difference gradients.

    ``c(p)`` and the logits at ``p`` only influence ``G(p)``, so one pair of
    evaluations with every pixel perturbed at once yields the central
    difference for every pixel separately. The objective is linear in the
    volume; ``n_volume`` random entries are checked.
    """
    rng = rng or np.random.default_rng(0)
    params = DefParams.from_logits(c, logits)
    grads = directional_filter_grad(volume, flow, params, upstream=upstream)

    def G(c_, logits_, vol_=volume):
        return directional_filter(vol_, flow, DefParams.from_logits(c_, logits_))

    num_c = upstream * (G(c + h, logits) - G(c - h, logits)) / (2 * h)
    num_logits = np.empty_like(logits)
    for j in range(len(logits)):
        step = np.zeros_like(logits)
        step[j] = h
        num_logits[j] = upstream * (G(c, logits + step) - G(c, logits - step)) / (2 * h)

    flat = rng.choice(volume.size, size=min(n_volume, volume.size), replace=False)
    num_vol, ana_vol = [], []
    for idx in flat:
        step = np.zeros(volume.size)
        step[idx] = h
        step = step.reshape(volume.shape)
        plus = (upstream * G(c, logits, volume + step)).sum()
        minus = (upstream * G(c, logits, volume - step)).sum()
        num_vol.append((plus - minus) / (2 * h))
        ana_vol.append(grads.volume.ravel()[idx])

    return {
        "logits": relative_error(grads.logits, num_logits),
        "c": relative_error(grads.c, num_c),
        "volume": relative_error(ana_vol, num_vol),
    }


def run_gradcheck(n_configs=100, size=8, chunks=8, k=2, h=1e-4, seed=0):
    """Check analytic gradients over ``n_configs`` random kink-free configurations."""
    rng = np.random.default_rng(seed)
    report = GradcheckReport()
    for _ in range(n_configs):
        cfg = random_config(rng, size=size, chunks=chunks, k=k, h=h)
        errs = check_config(*cfg, h=h, rng=rng)
        for name, val in errs.items():
            report.max_rel[name] = max(report.max_rel[name], val)
        report.n_configs += 1
    return report
