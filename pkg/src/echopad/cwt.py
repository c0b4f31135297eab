"""Analytic-wavelet filter bank and scalogram computation.

The bank holds geometrically spaced bandpass filters built from the
generalized Morse spectrum a * w^beta * exp(-w^gamma) (w > 0, zero
otherwise). With gamma = 3 the spectrum is symmetric about its peak;
beta comes from the time-bandwidth product P^2 = beta * gamma.

Filtering is circular: each row of the scalogram is |ifft(fft(x) * filter)|
with no padding, so a circular time shift of the input shifts the columns.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.fft as sfft

from .dsp import CompressedSignal
from .errors import CwtError
from .signal import Waveform


@dataclass(frozen=True)
class MorseParams:
    """Wavelet family and bank layout parameters."""

    gamma: float = 3.0
    time_bandwidth: float = 60.0
    num_filters: int = 10
    top_passband_hz: float = 20000.0
    min_center_hz: float = 2000.0

    def __post_init__(self):
        if self.gamma <= 0:
            raise CwtError(f"gamma must be positive, got {self.gamma}")
        if self.time_bandwidth <= 0:
            raise CwtError(f"time_bandwidth must be positive, got {self.time_bandwidth}")
        if self.num_filters < 1:
            raise CwtError(f"num_filters must be >= 1, got {self.num_filters}")
        if self.num_filters > 1 and not self.min_center_hz < self.top_passband_hz:
            raise CwtError(
                f"min_center_hz ({self.min_center_hz}) must lie below "
                f"top_passband_hz ({self.top_passband_hz})"
            )

    @property
    def beta(self) -> float:
        return self.time_bandwidth / self.gamma

    @property
    def peak_omega(self) -> float:
        """Radian frequency of the unit-scale spectrum maximum: (beta/gamma)^(1/gamma)."""
        return (self.beta / self.gamma) ** (1.0 / self.gamma)


def morse_spectrum(beta: float, gamma: float, omega_grid: np.ndarray) -> np.ndarray:
    """Evaluate the analytic Morse spectrum, normalized to 1 at its maximum.

    The maximum sits at omega = (beta/gamma)^(1/gamma); normalization uses
    the closed form, so grids that contain the peak read exactly 1.0.
    """
    if beta <= 0 or gamma <= 0:
        raise CwtError(f"beta and gamma must be positive, got beta={beta}, gamma={gamma}")
    omega = np.asarray(omega_grid, dtype=np.float64)
    out = np.zeros_like(omega)
    pos = omega > 0
    log_peak = (beta / gamma) * (np.log(beta / gamma) - 1.0)
    out[pos] = np.exp(beta * np.log(omega[pos]) - omega[pos] ** gamma - log_peak)
    return out


class FilterBank:
    """Immutable frequency-domain filter bank tied to one signal length."""

    def __init__(self, params: MorseParams, sample_rate_hz: int, signal_len: int):
        if signal_len < 2:
            raise CwtError(f"signal_len must be >= 2, got {signal_len}")
        nyquist = sample_rate_hz / 2.0
        if params.top_passband_hz >= nyquist:
            raise CwtError(
                f"top passband {params.top_passband_hz} Hz is at or above "
                f"Nyquist ({nyquist} Hz)"
            )
        self.params = params
        self.sample_rate_hz = int(sample_rate_hz)
        self.signal_len = int(signal_len)
        self.center_freqs_hz = _center_frequencies(params)

        freqs = np.fft.fftfreq(signal_len, d=1.0 / sample_rate_hz)
        omega_peak = params.peak_omega
        filters = np.zeros((params.num_filters, signal_len), dtype=np.float64)
        pos = freqs > 0
        for k, fc in enumerate(self.center_freqs_hz):
            filters[k, pos] = morse_spectrum(
                params.beta, params.gamma, omega_peak * freqs[pos] / fc
            )
        self.filters = filters
        self.filters.flags.writeable = False
        self._filters_f32 = None

    def filters_for(self, dtype) -> np.ndarray:
        if np.dtype(dtype) == np.float32:
            if self._filters_f32 is None:
                f32 = self.filters.astype(np.float32)
                f32.flags.writeable = False
                self._filters_f32 = f32
            return self._filters_f32
        return self.filters


def _center_frequencies(params: MorseParams) -> np.ndarray:
    """Descending geometric spacing from the top passband down to the minimum."""
    if params.num_filters == 1:
        return np.array([params.top_passband_hz])
    ratio = params.min_center_hz / params.top_passband_hz
    k = np.arange(params.num_filters, dtype=np.float64)
    return params.top_passband_hz * ratio ** (k / (params.num_filters - 1))


def design_filterbank(params: MorseParams, sample_rate_hz: int, signal_len: int) -> FilterBank:
    return FilterBank(params, sample_rate_hz, signal_len)


@dataclass(frozen=True)
class Scalogram:
    """Per-band magnitude envelopes: one row per filter, one column per sample."""

    magnitudes: np.ndarray
    center_freqs_hz: np.ndarray
    sample_rate_hz: int


def _extract_samples(signal) -> np.ndarray:
    if isinstance(signal, Waveform):
        return signal.samples
    if isinstance(signal, CompressedSignal):
        return signal.values
    return np.asarray(signal)


def transform(signal, bank: FilterBank, allow_redesign: bool = False) -> Scalogram:
    """Run the filter bank over a signal and return the magnitude scalogram.

    The bank is tied to its design length; a mismatched signal raises unless
    ``allow_redesign`` permits rebuilding the bank at the new length.
    Precision follows the input dtype (float32 in, float32 out).
    """
    samples = _extract_samples(signal)
    if samples.ndim != 1:
        raise CwtError(f"expected a 1-D signal, got shape {samples.shape}")
    if samples.size != bank.signal_len:
        if not allow_redesign:
            raise CwtError(
                f"signal length {samples.size} does not match bank design "
                f"length {bank.signal_len} (pass allow_redesign=True to rebuild)"
            )
        bank = FilterBank(bank.params, bank.sample_rate_hz, samples.size)

    single = samples.dtype in (np.float32, np.complex64)
    spectrum = sfft.fft(samples.astype(np.complex64 if single else np.complex128, copy=False))
    filters = bank.filters_for(np.float32 if single else np.float64)
    mags = np.empty((len(bank.center_freqs_hz), samples.size),
                    dtype=np.float32 if single else np.float64)
    for k in range(filters.shape[0]):
        mags[k] = np.abs(sfft.ifft(spectrum * filters[k]))
    return Scalogram(mags, bank.center_freqs_hz.copy(), bank.sample_rate_hz)


def bilinear_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resampling with endpoint alignment (corners map to corners)."""
    if out_h < 1 or out_w < 1:
        raise CwtError(f"output size must be >= 1, got {out_h}x{out_w}")
    img = np.asarray(img)
    h, w = img.shape
    ys = np.linspace(0.0, h - 1.0, out_h) if out_h > 1 else np.zeros(1)
    xs = np.linspace(0.0, w - 1.0, out_w) if out_w > 1 else np.zeros(1)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0).astype(img.dtype, copy=False)[:, None]
    fx = (xs - x0).astype(img.dtype, copy=False)[None, :]
    top = img[np.ix_(y0, x0)] * (1 - fx) + img[np.ix_(y0, x1)] * fx
    bot = img[np.ix_(y1, x0)] * (1 - fx) + img[np.ix_(y1, x1)] * fx
    return top * (1 - fy) + bot * fy


def to_image(scalogram, width: int, height: int) -> np.ndarray:
    """Render a scalogram as a [0, 1] image: normalize, log-compress, resample.

    Min-max normalization runs first so the image is invariant to positive
    amplitude scaling of the input; log1p then compresses dynamics (divided
    by log 2 so the range stays [0, 1]). A constant input maps to all zeros.
    """
    m = scalogram.magnitudes if isinstance(scalogram, Scalogram) else np.asarray(scalogram)
    if m.ndim != 2 or m.size == 0:
        raise CwtError(f"expected a non-empty 2-D matrix, got shape {m.shape}")
    if height < 1 or width < 1:
        raise CwtError(f"output size must be >= 1, got {height}x{width}")
    lo = float(m.min())
    hi = float(m.max())
    if hi == lo:
        return np.zeros((height, width), dtype=m.dtype if m.dtype == np.float32 else np.float64)
    v = (m - lo) / (hi - lo)
    v = np.log1p(v) / np.log(np.asarray(2.0, dtype=v.dtype))
    return bilinear_resize(v, height, width)


def save_scalogram_csv(scalogram: Scalogram, path: str | Path) -> None:
    np.savetxt(str(path), scalogram.magnitudes, delimiter=",")


_BIN_HEADER = struct.Struct("<III")  # rows, cols, sample rate; row-major float64 follows


def save_scalogram_binary(scalogram: Scalogram, path: str | Path) -> None:
    m = np.ascontiguousarray(scalogram.magnitudes, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(_BIN_HEADER.pack(m.shape[0], m.shape[1], scalogram.sample_rate_hz))
        fh.write(m.tobytes())


def load_scalogram_binary(path: str | Path) -> tuple[np.ndarray, int]:
    """Read back a binary dump: (rows x cols float64 matrix, sample rate)."""
    with open(path, "rb") as fh:
        rows, cols, rate = _BIN_HEADER.unpack(fh.read(_BIN_HEADER.size))
        m = np.frombuffer(fh.read(rows * cols * 8), dtype="<f8").reshape(rows, cols)
    return m.copy(), rate
