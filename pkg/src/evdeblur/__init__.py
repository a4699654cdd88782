"""Event-based motion deblurring: simulation, sequential reconstruction and
directional event filtering."""

from .def_filter import (
    DefParams,
    DirectionalEventFilter,
    directional_filter,
    directional_filter_grad,
    propagate_velocity,
    resample_velocity,
    softmax_coefficients,
    trilinear_sample,
)
from .events import (
    Event,
    EventStream,
    StackedEventBinner,
    StackedEventFrames,
    bin_stacked_frames,
    normalize_time,
    polarity_integral,
)
from .metrics import evaluate, loss_content, psnr, ssim
from .recon import (
    SequentialDeblurrer,
    backward_step,
    decay_map,
    estimate_tau,
    forward_step,
    sequential_deblur,
    solve_latest,
)
from .simulator import EventSimulator, SimConfig, generate_events, log_intensity, make_fixture, synthesize_blur
from .warp import backward_warp, bilinear_sample, loss_flow, loss_tv

__version__ = "0.1.0"
