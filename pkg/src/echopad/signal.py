"""Transmit-pulse synthesis, session timeline, capture segmentation, WAV I/O.

A capture session is four back-to-back windows: listen to the background,
play the pulse, stay idle so the direct path dies out, then record the
reflections. All sample counts derive from the schedule via round-half-up
so window boundaries are deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy.io import wavfile

from .errors import SignalError


def round_half_up(x: float) -> int:
    """Deterministic sample-count rounding (0.5 always rounds up)."""
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class PulseSpec:
    """A fixed-frequency tone under a constant (rectangular) envelope."""

    sample_rate_hz: int = 44100
    carrier_hz: float = 21000.0
    duration_s: float = 2.0
    amplitude: float = 0.9

    def __post_init__(self):
        if self.sample_rate_hz <= 0:
            raise SignalError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        if self.carrier_hz <= 0:
            raise SignalError(f"carrier_hz must be positive, got {self.carrier_hz}")
        if self.carrier_hz >= self.sample_rate_hz / 2:
            raise SignalError(
                f"carrier {self.carrier_hz} Hz is at or above Nyquist "
                f"({self.sample_rate_hz / 2} Hz for rate {self.sample_rate_hz})"
            )
        if self.duration_s < 0:
            raise SignalError(f"duration_s must be non-negative, got {self.duration_s}")
        if not 0 < self.amplitude <= 1:
            raise SignalError(f"amplitude must lie in (0, 1], got {self.amplitude}")

    @property
    def num_samples(self) -> int:
        return round_half_up(self.duration_s * self.sample_rate_hz)


@dataclass(frozen=True)
class SessionSchedule:
    """Window durations in seconds: background, pulse, idle gap, receive."""

    background_s: float = 1.5
    pulse_s: float = 2.0
    idle_s: float = 0.5
    receive_s: float = 1.5

    def __post_init__(self):
        for name in ("background_s", "pulse_s", "idle_s", "receive_s"):
            if getattr(self, name) < 0:
                raise SignalError(f"{name} must be non-negative, got {getattr(self, name)}")

    @property
    def total_s(self) -> float:
        return self.background_s + self.pulse_s + self.idle_s + self.receive_s

    def total_samples(self, sample_rate_hz: int) -> int:
        return session_boundaries(self, sample_rate_hz)[-1].stop


@dataclass(frozen=True)
class Waveform:
    """A mono sample sequence with its sample rate."""

    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        samples = np.asarray(self.samples)
        if samples.ndim != 1:
            raise SignalError(f"waveform must be 1-D, got shape {samples.shape}")
        if samples.size and not np.all(np.isfinite(samples)):
            raise SignalError("waveform contains non-finite samples")
        if self.sample_rate_hz <= 0:
            raise SignalError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz

    @property
    def clipped(self) -> bool:
        """True when any sample exceeds full scale (capture hit the rails)."""
        return bool(self.samples.size and np.max(np.abs(self.samples)) > 1.0)


class Segments(NamedTuple):
    background: Waveform
    echoes: Waveform


def synth_pulse(spec: PulseSpec) -> Waveform:
    """Synthesize the transmit pulse: amplitude * sin(2*pi*f*n/rate).

    The envelope is constant over the whole duration and the phase starts
    at zero, so matched filtering against the same spec is phase-consistent.
    """
    n = np.arange(spec.num_samples, dtype=np.float64)
    samples = spec.amplitude * np.sin(2.0 * np.pi * spec.carrier_hz * n / spec.sample_rate_hz)
    return Waveform(samples, spec.sample_rate_hz)


def session_boundaries(schedule: SessionSchedule, sample_rate_hz: int) -> tuple[range, range, range, range]:
    """Index ranges of the four session windows at the given rate.

    Boundaries come from cumulative durations so the ranges are contiguous,
    non-overlapping, and cover [0, total_samples) exactly.
    """
    if sample_rate_hz <= 0:
        raise SignalError(f"sample_rate_hz must be positive, got {sample_rate_hz}")
    edges_s = np.cumsum([
        0.0, schedule.background_s, schedule.pulse_s, schedule.idle_s, schedule.receive_s,
    ])
    edges = [round_half_up(t * sample_rate_hz) for t in edges_s]
    return tuple(range(a, b) for a, b in zip(edges[:-1], edges[1:]))


def segment_capture(capture: Waveform, schedule: SessionSchedule) -> Segments:
    """Split a recorded session into its background and echo windows."""
    windows = session_boundaries(schedule, capture.sample_rate_hz)
    expected = windows[-1].stop
    if len(capture) != expected:
        raise SignalError(
            f"capture length {len(capture)} does not match schedule: "
            f"expected {expected} samples at {capture.sample_rate_hz} Hz"
        )
    bg, _, _, rx = windows
    return Segments(
        background=Waveform(capture.samples[bg.start:bg.stop], capture.sample_rate_hz),
        echoes=Waveform(capture.samples[rx.start:rx.stop], capture.sample_rate_hz),
    )


def build_session_template(spec: PulseSpec, schedule: SessionSchedule) -> Waveform:
    """Full-session transmit template: the pulse in its window, silence elsewhere."""
    if spec.sample_rate_hz <= 0:
        raise SignalError("pulse spec has invalid sample rate")
    windows = session_boundaries(schedule, spec.sample_rate_hz)
    out = np.zeros(windows[-1].stop, dtype=np.float64)
    pulse = synth_pulse(spec).samples
    pw = windows[1]
    n = min(pulse.size, pw.stop - pw.start)
    out[pw.start:pw.start + n] = pulse[:n]
    return Waveform(out, spec.sample_rate_hz)


def read_wav(path: str | Path) -> Waveform:
    """Read a mono WAV file. PCM16 is scaled to [-1, 1); float32/64 pass through."""
    rate, data = wavfile.read(str(path))
    if data.ndim != 1:
        raise SignalError(f"{path}: expected mono WAV, got shape {data.shape}")
    if data.dtype == np.int16:
        samples = data.astype(np.float32) / 32768.0
    elif data.dtype in (np.float32, np.float64):
        samples = data
    else:
        raise SignalError(f"{path}: unsupported WAV sample format {data.dtype}")
    return Waveform(samples, int(rate))


def write_wav(path: str | Path, waveform: Waveform) -> None:
    """Write a mono float32 WAV file."""
    wavfile.write(str(path), waveform.sample_rate_hz, waveform.samples.astype(np.float32))
