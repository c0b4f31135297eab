"""Run configuration: flat key-value file, CLI overrides, provenance hash.

The config file is plain ``key = value`` lines (``#`` comments allowed);
keys are the RunConfig field names. Values typed per field: ints, floats,
booleans (true/false), strings. Flags override file values; the fully
resolved config is hashed and embedded in every output for provenance.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

from .cwt import MorseParams
from .embed import EmbedBackendSpec
from .errors import EchoPadError
from .pipeline import PipelineConfig
from .signal import PulseSpec, SessionSchedule


@dataclass(frozen=True)
class RunConfig:
    # transmit pulse
    sample_rate_hz: int = 44100
    carrier_hz: float = 21000.0
    pulse_duration_s: float = 2.0
    pulse_amplitude: float = 0.9
    # session schedule
    background_s: float = 1.5
    pulse_s: float = 2.0
    idle_s: float = 0.5
    receive_s: float = 1.5
    # wavelet filter bank
    gamma: float = 3.0
    time_bandwidth: float = 60.0
    num_filters: int = 10
    top_passband_hz: float = 20000.0
    min_center_hz: float = 2000.0
    # embedding backend
    backend: str = "grid_pool"
    grid_g: int = 7
    cell_px: int = 32
    model_path: str = ""
    # processing switches
    background_subtraction: bool = True
    subtract_mode: str = "time"
    cwt_source: str = "clean"
    # classifier
    c_reg: float = 1.0
    # simulator
    noise_db: float = -60.0
    noise_kind: str = "white"
    distance_min_m: float = 0.20
    distance_max_m: float = 0.45
    profile_file: str = ""
    # run control
    seed: int = 0
    jobs: int = 0  # 0 = one worker per CPU

    def pulse_spec(self) -> PulseSpec:
        return PulseSpec(self.sample_rate_hz, self.carrier_hz,
                         self.pulse_duration_s, self.pulse_amplitude)

    def schedule(self) -> SessionSchedule:
        return SessionSchedule(self.background_s, self.pulse_s, self.idle_s, self.receive_s)

    def morse(self) -> MorseParams:
        return MorseParams(self.gamma, self.time_bandwidth, self.num_filters,
                           self.top_passband_hz, self.min_center_hz)

    def backend_spec(self) -> EmbedBackendSpec:
        if self.backend == "grid_pool":
            return EmbedBackendSpec(kind="grid_pool", g=self.grid_g, cell_px=self.cell_px)
        return EmbedBackendSpec(kind="external_model", model_path=self.model_path or None)

    def pipeline(self) -> PipelineConfig:
        return PipelineConfig(
            pulse=self.pulse_spec(), schedule=self.schedule(), morse=self.morse(),
            backend=self.backend_spec(),
            background_subtraction=self.background_subtraction,
            subtract_mode=self.subtract_mode, cwt_source=self.cwt_source,
        )

    def effective_jobs(self) -> int | None:
        return None if self.jobs == 0 else self.jobs

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def config_hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(canon.encode()).hexdigest()

    def provenance(self) -> dict:
        return {"config": self.to_dict(), "config_hash": self.config_hash()}


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(RunConfig)}


def _coerce(name: str, raw: str):
    if name not in _FIELD_TYPES:
        raise EchoPadError(f"unknown config key {name!r}")
    kind = _FIELD_TYPES[name]
    raw = raw.strip()
    if kind == "bool":
        if raw.lower() in ("true", "1", "yes", "on"):
            return True
        if raw.lower() in ("false", "0", "no", "off"):
            return False
        raise EchoPadError(f"config key {name}: expected true/false, got {raw!r}")
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    return raw


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> RunConfig:
    """Defaults, then file values, then explicit overrides (CLI flags)."""
    values: dict = {}
    if path is not None:
        for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise EchoPadError(f"{path} line {lineno}: expected 'key = value', got {raw!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            values[key] = _coerce(key, value)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in _FIELD_TYPES:
            raise EchoPadError(f"unknown config key {key!r}")
        values[key] = value
    return RunConfig(**values)
