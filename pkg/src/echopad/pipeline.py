"""Session-to-embedding processing chain shared by the protocol runner and CLI.

segment -> background subtraction -> pulse compression -> filter bank ->
embedding backend. Heavy immutable pieces (synthesized pulse, filter bank,
external model handle) are cached per process; batch extraction fans out
over worker processes and preserves input order.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cwt import FilterBank, MorseParams, Scalogram, transform
from .dsp import matched_filter, spectral_subtract, subtract_background
from .embed import EmbedBackendSpec, EmbeddingGrid, ExternalModel, embed_scalogram
from .errors import EchoPadError
from .signal import PulseSpec, SessionSchedule, Waveform, read_wav, segment_capture, synth_pulse

_PULSE_CACHE: dict = {}
_BANK_CACHE: dict = {}
_MODEL_CACHE: dict = {}


@dataclass(frozen=True)
class PipelineConfig:
    pulse: PulseSpec = PulseSpec()
    schedule: SessionSchedule = SessionSchedule()
    morse: MorseParams = MorseParams()
    backend: EmbedBackendSpec = EmbedBackendSpec()
    background_subtraction: bool = True
    subtract_mode: str = "time"      # "time" (default) or "spectral" (ablation extension)
    cwt_source: str = "clean"        # "clean" (receive window) or "compressed" (post pulse-compression)

    def __post_init__(self):
        if self.subtract_mode not in ("time", "spectral"):
            raise EchoPadError(f"unknown subtract_mode {self.subtract_mode!r}")
        if self.cwt_source not in ("compressed", "clean"):
            raise EchoPadError(f"unknown cwt_source {self.cwt_source!r}")


def _cached_pulse(spec: PulseSpec, dtype) -> Waveform:
    key = (spec, np.dtype(dtype).str)
    if key not in _PULSE_CACHE:
        wf = synth_pulse(spec)
        _PULSE_CACHE[key] = Waveform(wf.samples.astype(dtype), wf.sample_rate_hz)
    return _PULSE_CACHE[key]


def _cached_bank(params: MorseParams, rate: int, length: int) -> FilterBank:
    key = (params, rate, length)
    if key not in _BANK_CACHE:
        _BANK_CACHE[key] = FilterBank(params, rate, length)
    return _BANK_CACHE[key]


def _cached_model(spec: EmbedBackendSpec) -> ExternalModel:
    key = (spec.model_path, spec.input_size)
    if key not in _MODEL_CACHE:
        _MODEL_CACHE[key] = ExternalModel(spec.model_path, spec.input_size)
    return _MODEL_CACHE[key]


def scalogram_for_capture(capture: Waveform, cfg: PipelineConfig) -> Scalogram:
    """Run the DSP front half (segment, clean, compress, transform)."""
    seg = segment_capture(capture, cfg.schedule)
    if cfg.background_subtraction:
        if cfg.subtract_mode == "time":
            clean = subtract_background(seg.echoes, seg.background)
        else:
            clean = spectral_subtract(seg.echoes, seg.background)
    else:
        clean = seg.echoes
    if cfg.cwt_source == "compressed":
        pulse = _cached_pulse(cfg.pulse, clean.samples.dtype)
        source = matched_filter(clean, pulse)
        length = len(source)
    else:
        source = clean
        length = len(clean)
    bank = _cached_bank(cfg.morse, capture.sample_rate_hz, length)
    return transform(source, bank)


def features_for_capture(capture: Waveform, cfg: PipelineConfig) -> EmbeddingGrid:
    scal = scalogram_for_capture(capture, cfg)
    model = _cached_model(cfg.backend) if cfg.backend.kind == "external_model" else None
    return embed_scalogram(scal, cfg.backend, model=model)


def _grid_task(task) -> np.ndarray:
    path, cfg = task
    return features_for_capture(read_wav(path), cfg).values


def extract_grids(paths: list[str | Path], cfg: PipelineConfig,
                  jobs: int | None = None) -> np.ndarray:
    """Embed many recorded sessions; returns (N, g, g, d) in input order."""
    tasks = [(str(p), cfg) for p in paths]
    if not tasks:
        raise EchoPadError("no sessions to process")
    if jobs == 1 or len(tasks) == 1:
        grids = [_grid_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            grids = list(pool.map(_grid_task, tasks, chunksize=8))
    return np.stack(grids)
