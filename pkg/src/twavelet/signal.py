"""Signal containers, window ingestion and radix-2 Fourier analysis."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np
import numpy.typing as npt

from .errors import InvalidInput

FloatArray = npt.NDArray[np.float64]
ComplexArray = npt.NDArray[np.complex128]


def is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def next_power_of_two(n: int) -> int:
    if n < 1:
        raise InvalidInput(f"length must be positive, got {n}")
    return 1 << (n - 1).bit_length()


@dataclass(frozen=True)
class FrequencyBand:
    """Half-open frequency interval ``[f_start_hz, f_end_hz)``."""

    f_start_hz: float
    f_end_hz: float

    def __post_init__(self) -> None:
        if not (self.f_start_hz >= 0 and self.f_end_hz > self.f_start_hz):
            raise InvalidInput(f"invalid band [{self.f_start_hz}, {self.f_end_hz})")

    @property
    def width(self) -> float:
        return self.f_end_hz - self.f_start_hz

    @property
    def mid(self) -> float:
        return 0.5 * (self.f_start_hz + self.f_end_hz)

    def halves(self) -> tuple[FrequencyBand, FrequencyBand]:
        m = self.mid
        return FrequencyBand(self.f_start_hz, m), FrequencyBand(m, self.f_end_hz)

    def contains(self, f: float) -> bool:
        return self.f_start_hz <= f < self.f_end_hz

    def __repr__(self) -> str:
        return f"[{self.f_start_hz:g}, {self.f_end_hz:g})"


@dataclass(frozen=True)
class TimeSeriesWindow:
    """A fixed-length multi-channel slice of sensor signal.

    ``data`` has shape (channels, length) and length is a power of two.
    """

    data: FloatArray
    sample_rate_hz: float
    label: int | None = None

    def __post_init__(self) -> None:
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise InvalidInput("window data must be a (channels, length) matrix")
        c, n = data.shape
        if c < 1 or n < 2 or not is_power_of_two(n):
            raise InvalidInput(f"window shape {data.shape} needs C >= 1 and power-of-two N >= 2")
        if not self.sample_rate_hz > 0:
            raise InvalidInput("sample_rate_hz must be > 0")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def length(self) -> int:
        return self.data.shape[1]

    def with_label(self, label: int | None) -> TimeSeriesWindow:
        return TimeSeriesWindow(self.data, self.sample_rate_hz, label)


@dataclass(frozen=True)
class PowerSpectrum:
    amp: FloatArray
    bin_hz: float
    f_max_hz: float

    def __post_init__(self) -> None:
        amp = np.asarray(self.amp, dtype=np.float64)
        if amp.ndim != 1 or amp.size == 0:
            raise InvalidInput("amp must be a non-empty vector")
        if np.any(amp < 0) or not np.all(np.isfinite(amp)):
            raise InvalidInput("amp must be finite and non-negative")
        if not (self.bin_hz > 0 and self.f_max_hz > 0):
            raise InvalidInput("bin_hz and f_max_hz must be positive")
        if not np.isclose(amp.size * self.bin_hz, self.f_max_hz, rtol=1e-9, atol=0):
            raise InvalidInput("B * bin_hz must equal f_max_hz")
        amp.setflags(write=False)
        object.__setattr__(self, "amp", amp)

    @property
    def num_bins(self) -> int:
        return self.amp.size

    @property
    def freqs(self) -> FloatArray:
        """Bin-center frequencies ``b * bin_hz``."""
        return np.arange(self.num_bins) * self.bin_hz


@dataclass
class WindowSet:
    """A batch of equally shaped windows stored as one (count, C, N) array."""

    data: FloatArray
    labels: npt.NDArray[np.int64]
    sample_rate_hz: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 3:
            raise InvalidInput("WindowSet data must be (count, channels, length)")
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if self.labels.size != self.data.shape[0]:
            raise InvalidInput("one label per window required (-1 for unlabeled)")

    def __len__(self) -> int:
        return self.data.shape[0]

    def __iter__(self) -> Iterator[TimeSeriesWindow]:
        for x, y in zip(self.data, self.labels):
            yield TimeSeriesWindow(x, self.sample_rate_hz, None if y < 0 else int(y))

    @property
    def channels(self) -> int:
        return self.data.shape[1]

    @property
    def length(self) -> int:
        return self.data.shape[2]

    @property
    def labeled(self) -> bool:
        return len(self) > 0 and bool(np.all(self.labels >= 0))

    def subset(self, idx: Sequence[int] | np.ndarray) -> WindowSet:
        idx = np.asarray(idx, dtype=np.int64)
        return WindowSet(self.data[idx], self.labels[idx], self.sample_rate_hz, dict(self.meta))

    @classmethod
    def from_windows(cls, windows: Iterable[TimeSeriesWindow]) -> WindowSet:
        windows = list(windows)
        if not windows:
            raise InvalidInput("no windows")
        _check_conformant(windows)
        data = np.stack([w.data for w in windows])
        labels = [-1 if w.label is None else w.label for w in windows]
        return cls(data, np.array(labels), windows[0].sample_rate_hz)


def ingest_window(raw: npt.ArrayLike, sample_rate_hz: float, label: int | None = None) -> TimeSeriesWindow:
    """Wrap a raw (C, L) matrix as a window, tail-reflecting up to a power of two.

    The pad continues the signal backwards from the last sample, so
    ``[1, 2, 3]`` becomes ``[1, 2, 3, 3]`` and ``[1, 2, 3, 4, 5]`` becomes
    ``[1, 2, 3, 4, 5, 5, 4, 3]``.
    """
    x = np.asarray(raw, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.size == 0:
        raise InvalidInput("raw window must be a non-empty (channels, length) matrix")
    if not np.all(np.isfinite(x)):
        raise InvalidInput("raw window contains non-finite values")
    c, length = x.shape
    if length < 2:
        raise InvalidInput(f"window length must be >= 2, got {length}")
    if not sample_rate_hz > 0:
        raise InvalidInput("sample_rate_hz must be > 0")
    n = next_power_of_two(length)
    if n != length:
        x = np.pad(x, ((0, 0), (0, n - length)), mode="symmetric")
    return TimeSeriesWindow(x, float(sample_rate_hz), label)


def _bit_reverse_indices(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for _ in range(bits):
        rev = (rev << 1) | (idx & 1)
        idx >>= 1
    return rev


def fft(x: npt.ArrayLike) -> ComplexArray:
    """Iterative radix-2 decimation-in-time DFT along the last axis.

    Uses the convention ``X[k] = sum_n x[n] exp(-2j pi k n / N)``.
    Leading axes are treated as a batch.
    """
    a = np.asarray(x, dtype=np.complex128)
    n = a.shape[-1] if a.ndim else 0
    if not is_power_of_two(n):
        raise InvalidInput(f"fft length must be a power of two, got {n}")
    a = a[..., _bit_reverse_indices(n)].copy()
    batch = a.shape[:-1]
    size = 2
    while size <= n:
        half = size // 2
        tw = np.exp(-2j * np.pi * np.arange(half) / size)
        blocks = a.reshape(*batch, n // size, size)
        even = blocks[..., :half].copy()
        odd = blocks[..., half:] * tw
        blocks[..., :half] = even + odd
        blocks[..., half:] = even - odd
        a = blocks.reshape(*batch, n)
        size *= 2
    return a


def ifft(X: npt.ArrayLike) -> ComplexArray:
    X = np.asarray(X, dtype=np.complex128)
    n = X.shape[-1] if X.ndim else 0
    return np.conj(fft(np.conj(X))) / n


def power_spectrum(windows: Sequence[TimeSeriesWindow] | WindowSet) -> PowerSpectrum:
    """Mean DFT magnitude over windows and channels for bins ``0 .. N/2 - 1``."""
    if isinstance(windows, WindowSet):
        if len(windows) == 0:
            raise InvalidInput("power_spectrum needs at least one window")
        data, fs = windows.data, windows.sample_rate_hz
    else:
        windows = list(windows)
        if not windows:
            raise InvalidInput("power_spectrum needs at least one window")
        _check_conformant(windows)
        data, fs = np.stack([w.data for w in windows]), windows[0].sample_rate_hz
    n = data.shape[-1]
    mag = np.abs(fft(data)[..., : n // 2])
    # fixed reduction order: windows first, then channels
    amp = mag.reshape(-1, n // 2).mean(axis=0)
    return PowerSpectrum(amp, fs / n, fs / 2)


def _check_conformant(windows: Sequence[TimeSeriesWindow]) -> None:
    first = windows[0]
    for w in windows[1:]:
        if w.data.shape != first.data.shape or w.sample_rate_hz != first.sample_rate_hz:
            raise InvalidInput(
                f"windows disagree: {w.data.shape}@{w.sample_rate_hz}Hz vs "
                f"{first.data.shape}@{first.sample_rate_hz}Hz"
            )
