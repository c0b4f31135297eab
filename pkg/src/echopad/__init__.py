"""Acoustic echo face liveness detection.

Transmit a wide tonal pulse, record the reflections, subtract the sensed
background, compress against the known pulse, extract time-frequency
features with a Morse wavelet filter bank, embed them on a grid, and
classify with a per-cell linear SVM ensemble fused by the sum rule.
Includes ISO 30107-3 style evaluation and an echo simulator so the whole
loop runs without capture hardware.
"""

from .config import RunConfig, load_config
from .cwt import FilterBank, MorseParams, Scalogram, design_filterbank, morse_spectrum, to_image, transform
from .dsp import CompressedSignal, matched_filter, snr_db, spectral_subtract, subtract_background
from .echosim import (
    ASED_PRESET_COUNTS,
    ManifestRecord,
    MaterialProfile,
    SceneSpec,
    default_profiles,
    generate_dataset,
    load_profiles,
    read_manifest,
    simulate_session,
    write_manifest,
)
from .embed import EmbedBackendSpec, EmbeddingGrid, embed_scalogram, external_embed, grid_pool_embed
from .ensemble import (
    Decision,
    EnsembleModel,
    LinearSvm,
    decide,
    load_model,
    save_model,
    score,
    score_batch,
    train_ensemble,
    train_svm,
)
from .errors import EchoPadError
from .metrics import DeerResult, EvalReport, ScoreSet, apcer, bpcer, bpcer_at_apcer, d_eer, det_curve, evaluate
from .pipeline import PipelineConfig, extract_grids, features_for_capture
from .protocol import ProtocolReport, ProtocolSpec, run_matrix, split_manifest
from .signal import (
    PulseSpec,
    SessionSchedule,
    Waveform,
    build_session_template,
    read_wav,
    segment_capture,
    session_boundaries,
    synth_pulse,
    write_wav,
)

__version__ = "0.1.0"
