"""Event data model, time normalization, polarity integration and binning.

Events are stored column-wise (structure of arrays) and always kept in the
canonical order: timestamp, then row, then column, then polarity.
"""

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .validation import check_frame_count

DEFAULT_CHUNKS = 8


class Event(NamedTuple):
    x: int
    y: int
    t: float
    p: int


def _readonly(arr):
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class EventStream:
    """Immutable, canonically ordered stream of polarity events.

    Parameters
    ----------
    t, x, y, p : array-like
        Timestamps, column indices, row indices and polarities (+1/-1).
    width, height : int
        Sensor size in pixels.
    t_begin, t_end : float
        Exposure interval. Every timestamp must lie inside it.
    """

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    p: np.ndarray
    width: int
    height: int
    t_begin: float
    t_end: float

    def __post_init__(self):
        t = np.asarray(self.t, dtype=np.float64).reshape(-1)
        x = np.asarray(self.x, dtype=np.int64).reshape(-1)
        y = np.asarray(self.y, dtype=np.int64).reshape(-1)
        p = np.asarray(self.p, dtype=np.int64).reshape(-1)
        if not (len(t) == len(x) == len(y) == len(p)):
            raise ValueError("event arrays must have equal length")
        width, height = int(self.width), int(self.height)
        if width <= 0 or height <= 0:
            raise ValueError(f"sensor size must be positive, got {width}x{height}")
        t_begin, t_end = float(self.t_begin), float(self.t_end)
        if not (np.isfinite(t_begin) and np.isfinite(t_end)) or t_end < t_begin:
            raise ValueError(f"invalid exposure interval [{t_begin}, {t_end}]")
        if len(t):
            if not np.all(np.isfinite(t)):
                raise ValueError("event timestamps must be finite")
            if t.min() < t_begin or t.max() > t_end:
                raise ValueError("event timestamps fall outside [t_begin, t_end]")
            if np.any((x < 0) | (x >= width) | (y < 0) | (y >= height)):
                raise ValueError("event coordinates out of sensor range")
            if np.any((p != 1) & (p != -1)):
                raise ValueError("event polarity must be -1 or +1")
            order = np.lexsort((p, x, y, t))
            t, x, y, p = t[order], x[order], y[order], p[order]
        for name, arr in (("t", t), ("x", x), ("y", y), ("p", p)):
            object.__setattr__(self, name, _readonly(arr))
        object.__setattr__(self, "width", width)
        object.__setattr__(self, "height", height)
        object.__setattr__(self, "t_begin", t_begin)
        object.__setattr__(self, "t_end", t_end)

    @classmethod
    def empty(cls, width, height, t_begin, t_end):
        z = np.zeros(0)
        return cls(z, z, z, z, width, height, t_begin, t_end)

    @classmethod
    def from_events(cls, events: Sequence[Event], width, height, t_begin, t_end):
        if not events:
            return cls.empty(width, height, t_begin, t_end)
        x, y, t, p = zip(*events)
        return cls(t, x, y, p, width, height, t_begin, t_end)

    def __len__(self):
        return len(self.t)

    def __iter__(self):
        for x, y, t, p in zip(self.x.tolist(), self.y.tolist(), self.t.tolist(), self.p.tolist()):
            yield Event(x, y, t, p)

    def __eq__(self, other):
        if not isinstance(other, EventStream):
            return NotImplemented
        return (
            (self.width, self.height, self.t_begin, self.t_end)
            == (other.width, other.height, other.t_begin, other.t_end)
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.p, other.p)
        )

    @property
    def shape(self):
        return (self.height, self.width)

    def interval_mask(self, a, b):
        """Boolean mask of events in [a, b), closed at b when b is the exposure end."""
        if b == self.t_end:
            return (self.t >= a) & (self.t <= b)
        return (self.t >= a) & (self.t < b)


@dataclass(frozen=True)
class StackedEventFrames:
    """C x H x W polarity-sum volume with the time partition it was built on.

    ``boundaries[i]`` holds the ``chunks + 1`` chunk edges of interval ``i``.
    """

    data: np.ndarray
    boundaries: np.ndarray
    chunks: int

    @property
    def n_intervals(self):
        return len(self.boundaries)

    def interval(self, i):
        """Channels belonging to interval ``i`` as a (chunks, H, W) view."""
        return self.data[i * self.chunks:(i + 1) * self.chunks]


def normalize_time(stream: EventStream, T: int) -> EventStream:
    """Affinely remap timestamps from [t_begin, t_end] onto [1, T]."""
    T = check_frame_count(T)
    span = stream.t_end - stream.t_begin
    if span == 0:
        if len(stream):
            raise ValueError("zero-length exposure")
        return EventStream.empty(stream.width, stream.height, 1.0, float(T))
    t = 1.0 + (stream.t - stream.t_begin) * ((T - 1) / span)
    t = np.clip(t, 1.0, float(T))
    return EventStream(t, stream.x, stream.y, stream.p, stream.width, stream.height, 1.0, float(T))


def polarity_integral(stream: EventStream, a: float, b: float) -> np.ndarray:
    """Per-pixel signed polarity sum over [a, b).

    The interval is closed on the right when ``b`` equals the stream's
    ``t_end`` so that the last event of an exposure is never dropped.

    Returns
    -------
    ndarray of shape (H, W), float64 holding integer values.
    """
    if a >= b:
        raise ValueError(f"empty interval [{a}, {b})")
    if a < stream.t_begin or b > stream.t_end:
        raise ValueError(
            f"interval [{a}, {b}) outside exposure [{stream.t_begin}, {stream.t_end}]"
        )
    mask = stream.interval_mask(a, b)
    out = np.zeros(stream.shape, dtype=np.int64)
    np.add.at(out, (stream.y[mask], stream.x[mask]), stream.p[mask])
    return out.astype(np.float64)


def unit_interval_integrals(stream: EventStream, T: int) -> np.ndarray:
    """Polarity integrals over [i, i+1) for i = 1..T-1, shape (T-1, H, W).

    Entry ``k`` covers the interval starting at frame ``k + 1``.
    """
    T = check_frame_count(T)
    return np.stack([polarity_integral(stream, float(i), float(i + 1)) for i in range(1, T)])


def _check_intervals(intervals):
    bounds = np.asarray(intervals, dtype=np.float64)
    if bounds.ndim != 2 or bounds.shape[1] != 2 or len(bounds) == 0:
        raise ValueError("intervals must be a non-empty list of (start, end) pairs")
    if np.any(bounds[:, 1] <= bounds[:, 0]):
        raise ValueError("every interval must have end > start")
    for (a0, b0), (a1, b1) in zip(bounds[:-1], bounds[1:]):
        if a1 < b0:
            raise ValueError(f"overlapping intervals [{a0}, {b0}) and [{a1}, {b1})")
        if a1 > b0:
            raise ValueError(f"intervals are not contiguous: gap between {b0} and {a1}")
    return bounds


def bin_stacked_frames(stream: EventStream, intervals, chunks: int = DEFAULT_CHUNKS) -> StackedEventFrames:
    """Stack per-chunk polarity sums along the channel axis.

    Each interval is split into ``chunks`` equal-length chunks; channel
    ``i * chunks + j`` holds chunk ``j`` of interval ``i``. Interval
    membership follows :func:`polarity_integral` exactly, so the channel
    sum of an interval always equals its polarity integral.
    """
    if int(chunks) != chunks or chunks < 1:
        raise ValueError(f"chunks must be a positive integer, got {chunks!r}")
    chunks = int(chunks)
    bounds = _check_intervals(intervals)
    H, W = stream.shape
    vol = np.zeros((len(bounds) * chunks, H, W), dtype=np.int64)
    edges = []
    for i, (a, b) in enumerate(bounds):
        edges.append(a + (b - a) * np.arange(chunks + 1) / chunks)
        mask = stream.interval_mask(a, b)
        t = stream.t[mask]
        j = np.clip(np.floor((t - a) / (b - a) * chunks).astype(np.int64), 0, chunks - 1)
        np.add.at(vol, (i * chunks + j, stream.y[mask], stream.x[mask]), stream.p[mask])
    return StackedEventFrames(vol.astype(np.float64), np.array(edges), chunks)


def unit_intervals(T):
    """The T-1 unit intervals [i, i+1) covering [1, T]."""
    return [(float(i), float(i + 1)) for i in range(1, T)]


class StackedEventBinner(TransformerMixin, BaseEstimator):
    """Transformer turning an :class:`EventStream` into stacked event frames.

    Parameters
    ----------
    chunks : int, default 8
        Equal-size chunks per interval.
    intervals : list of (float, float) or None
        Time partition. ``None`` uses the unit intervals of the stream's
        exposure, which must then span integer frame times ``1..T``.
    """

    def __init__(self, chunks=DEFAULT_CHUNKS, intervals=None):
        self.chunks = chunks
        self.intervals = intervals

    def fit(self, X, y=None):
        if not isinstance(X, EventStream):
            raise TypeError(f"expected an EventStream, got {type(X).__name__}")
        if self.intervals is None:
            T = X.t_end
            if X.t_begin != 1.0 or T != int(T) or T < 2:
                raise ValueError("default intervals need a stream normalized to [1, T]")
            self.intervals_ = unit_intervals(int(T))
        else:
            self.intervals_ = [tuple(map(float, iv)) for iv in _check_intervals(self.intervals)]
        self.n_channels_ = self.chunks * len(self.intervals_)
        return self

    def transform(self, X):
        check_is_fitted(self, "intervals_")
        return bin_stacked_frames(X, self.intervals_, self.chunks).data
