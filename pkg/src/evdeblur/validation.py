"""Input validation helpers shared by the estimators and functional API."""

import numbers

import numpy as np


def check_image(img, name="image", allow_negative=False):
    """Return ``img`` as a finite 2-D float64 array.

    Raises
    ------
    ValueError
        If the array is not 2-D, contains non-finite values, or (unless
        ``allow_negative``) contains negative intensities.
    """
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D (H, W), got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    if not allow_negative and np.any(arr < 0):
        raise ValueError(f"{name} contains negative intensities")
    return arr


def check_frames(frames, name="frames", min_frames=1):
    arr = np.asarray(frames, dtype=np.float64)
    if arr.ndim != 3:
        raise ValueError(f"{name} must be 3-D (T, H, W), got shape {arr.shape}")
    if arr.shape[0] < min_frames:
        raise ValueError(f"{name} needs at least {min_frames} frames, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_flow(flow, shape=None, name="flow"):
    """Return a flow field as a (2, H, W) float64 array of (u, v)."""
    arr = np.asarray(flow, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[0] != 2:
        raise ValueError(f"{name} must have shape (2, H, W), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    if shape is not None and arr.shape[1:] != tuple(shape):
        raise ValueError(f"{name} size {arr.shape[1:]} does not match image size {tuple(shape)}")
    return arr


def check_same_shape(a, b, names=("a", "b")):
    if np.shape(a) != np.shape(b):
        raise ValueError(f"shape mismatch: {names[0]} {np.shape(a)} vs {names[1]} {np.shape(b)}")


def check_positive(value, name, strict=True):
    if not isinstance(value, numbers.Real) or not np.isfinite(value):
        raise ValueError(f"{name} must be a finite real number, got {value!r}")
    if strict and value <= 0:
        raise ValueError(f"{name} must be > 0, got {value!r}")
    if not strict and value < 0:
        raise ValueError(f"{name} must be >= 0, got {value!r}")
    return float(value)


def check_frame_count(T, minimum=2, name="T"):
    if not isinstance(T, numbers.Integral) or isinstance(T, bool):
        raise ValueError(f"{name} must be an integer, got {T!r}")
    if T < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {T}")
    return int(T)
