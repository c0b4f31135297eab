"""Synthetic echo sessions and dataset generation.

Physical model, deliberately minimal: one specular echo of the transmit
pulse, delayed by the round trip and attenuated by inverse-square distance,
plus a reverberant tail that decays exponentially. The material acts as a
graphic equalizer over the filter-bank band frequencies on the specular
reflection; the diffuse tail scales with the material's broadband (mean)
reflectivity. Background noise covers the whole session so the background
window records what subtraction later removes.
"""

from __future__ import annotations

import json
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, asdict
from importlib import resources
from pathlib import Path

import numpy as np
import scipy.fft as sfft

from .cwt import MorseParams, _center_frequencies
from .errors import SimulationError, ProtocolError
from .signal import PulseSpec, SessionSchedule, Waveform, round_half_up, session_boundaries, synth_pulse, write_wav

SPEED_OF_SOUND_M_S = 343.0
REFERENCE_DISTANCE_M = 0.3
SPECULAR_GAIN = 0.5        # specular amplitude at reference distance, unit band gain
TAIL_TO_SPECULAR = 1.5     # reverb tail strength per unit mean band gain
TAIL_NOISE_FRACTION = 0.05 # per-session stochastic part of the tail
STATIONARY_TONE_HZ = 21000.0  # periodic over the background->receive offset, so subtractable

MATERIALS = ("bonafide", "display", "print_matte", "print_glossy", "silicone")
NOISE_KINDS = ("white", "stationary_tone", "babble")

# Seed-stream tags keep the independent random uses decorrelated.
_STREAM_SESSION = 0x5E55
_STREAM_SUBJECT = 0x50B7
_STREAM_TEXTURE = 0x7E87
_STREAM_DATASET = 0xDA7A


@dataclass(frozen=True)
class MaterialProfile:
    name: str
    band_gains: tuple[float, ...]
    diffuse_decay: float
    gain_jitter: float

    def __post_init__(self):
        if not self.band_gains:
            raise SimulationError(f"{self.name}: band_gains is empty")
        if any(not 0.0 <= g <= 1.0 for g in self.band_gains):
            raise SimulationError(f"{self.name}: band gains must lie in [0, 1]")
        if self.diffuse_decay < 0:
            raise SimulationError(f"{self.name}: diffuse_decay must be >= 0")
        if self.gain_jitter < 0:
            raise SimulationError(f"{self.name}: gain_jitter must be >= 0")


@dataclass(frozen=True)
class SceneSpec:
    subject_id: int
    material: str
    distance_m: float
    noise_db: float = -60.0
    noise_kind: str = "white"
    seed: int = 0

    def __post_init__(self):
        if not 0.1 <= self.distance_m <= 1.0:
            raise SimulationError(f"distance_m must lie in [0.1, 1.0], got {self.distance_m}")
        if self.noise_kind not in NOISE_KINDS:
            raise SimulationError(f"unknown noise_kind {self.noise_kind!r}, expected one of {NOISE_KINDS}")


def _parse_kv_lines(text: str) -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SimulationError(f"profile file line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def load_profiles(path: str | Path | None = None) -> dict[str, MaterialProfile]:
    """Load material profiles from a key-value config file.

    Without a path, the packaged versioned defaults are used. The schema is
    ``material.<name>.band_gains`` (comma-separated, highest band first),
    ``material.<name>.diffuse_decay`` and ``material.<name>.gain_jitter``,
    plus ``version`` and ``bands`` headers.
    """
    if path is None:
        text = resources.files("echopad.data").joinpath("materials_v1.cfg").read_text()
    else:
        text = Path(path).read_text()
    kv = _parse_kv_lines(text)
    bands = int(kv.get("bands", "10"))
    names = sorted({k.split(".")[1] for k in kv if k.startswith("material.")})
    profiles = {}
    for name in names:
        gains = tuple(float(v) for v in kv[f"material.{name}.band_gains"].split(","))
        if len(gains) != bands:
            raise SimulationError(f"{name}: expected {bands} band gains, got {len(gains)}")
        profiles[name] = MaterialProfile(
            name=name,
            band_gains=gains,
            diffuse_decay=float(kv[f"material.{name}.diffuse_decay"]),
            gain_jitter=float(kv[f"material.{name}.gain_jitter"]),
        )
    return profiles


_default_profiles: dict[str, MaterialProfile] | None = None


def default_profiles() -> dict[str, MaterialProfile]:
    global _default_profiles
    if _default_profiles is None:
        _default_profiles = load_profiles()
    return _default_profiles


def subject_gains(profile: MaterialProfile, subject_id: int) -> np.ndarray:
    """Effective band gains for one subject: jittered, clipped to [0, 1].

    Deterministic in (profile name, subject id) alone, so every session of a
    subject shares the same reflection signature.
    """
    tag = zlib.crc32(profile.name.encode())
    rng = np.random.default_rng(np.random.SeedSequence([_STREAM_SUBJECT, subject_id & 0xFFFFFFFF, tag]))
    z = rng.standard_normal(len(profile.band_gains))
    return np.clip(np.array(profile.band_gains) * (1.0 + profile.gain_jitter * z), 0.0, 1.0)


def subject_phases(subject_id: int, n_bands: int) -> np.ndarray:
    """Frozen per-band phases of one subject's diffuse reflection geometry.

    A static scene scatters each frequency with a fixed phase offset, so the
    phases depend on the subject alone and repeat across their sessions.
    """
    rng = np.random.default_rng(np.random.SeedSequence([_STREAM_TEXTURE, subject_id & 0xFFFFFFFF]))
    return rng.uniform(0.0, 2.0 * np.pi, n_bands)


def band_equalize(x: np.ndarray, sample_rate_hz: int, centers_hz: np.ndarray,
                  gains: np.ndarray) -> np.ndarray:
    """Apply per-band gains as a smooth equalizer over the spectrum.

    Gains interpolate linearly in log-frequency between the band centers and
    hold at the edge values beyond them, so raising every band gain raises
    the output spectrum everywhere.
    """
    spectrum = sfft.rfft(x)
    freqs = np.fft.rfftfreq(x.size, d=1.0 / sample_rate_hz)
    order = np.argsort(centers_hz)
    log_centers = np.log(np.asarray(centers_hz, dtype=np.float64)[order])
    g = np.asarray(gains, dtype=np.float64)[order]
    curve = np.interp(np.log(np.maximum(freqs, 1e-6)), log_centers, g,
                      left=g[0], right=g[-1])
    return sfft.irfft(spectrum * curve, n=x.size)


def _make_noise(kind: str, rms: float, n: int, sample_rate_hz: int,
                rng: np.random.Generator,
                morse_params: MorseParams | None = None) -> np.ndarray:
    if rms <= 0.0 or n == 0:
        return np.zeros(n)
    t = np.arange(n) / sample_rate_hz
    if kind == "white":
        return rms * rng.standard_normal(n)
    if kind == "stationary_tone":
        # Stationary tonal interference: a comb over the analysis bands plus
        # the carrier. Frequencies snap to the 0.25 Hz grid, making every
        # component periodic across the background-to-receive offset of the
        # default schedule, so background subtraction cancels it exactly.
        centers = _center_frequencies(morse_params or MorseParams())
        freqs = np.round(np.append(centers, STATIONARY_TONE_HZ) * 4.0) / 4.0
        freqs = freqs[freqs < sample_rate_hz / 2.0]
        amp = np.sqrt(2.0) * rms / np.sqrt(freqs.size)
        out = np.zeros(n)
        for f in freqs:
            out += amp * np.sin(2.0 * np.pi * f * t + rng.uniform(0.0, 2.0 * np.pi))
        return out
    if kind == "babble":
        # Low-frequency-weighted noise under a slow amplitude modulation.
        x = rng.standard_normal(n)
        spectrum = np.fft.rfft(x)
        freqs = np.fft.rfftfreq(n, d=1.0 / sample_rate_hz)
        spectrum *= 1.0 / (1.0 + (freqs / 500.0) ** 2)
        x = np.fft.irfft(spectrum, n=n)
        mod = 1.0 + 0.5 * np.sin(2.0 * np.pi * 0.8 * t + rng.uniform(0.0, 2.0 * np.pi))
        x *= mod
        return x * (rms / np.sqrt(np.mean(np.square(x))))
    raise SimulationError(f"unknown noise kind {kind!r}")


def simulate_session(pulse: Waveform, schedule: SessionSchedule, scene: SceneSpec,
                     profiles: dict[str, MaterialProfile] | None = None,
                     morse_params: MorseParams | None = None) -> Waveform:
    """Render one full-length capture for a scene; bit-deterministic in the seed."""
    profiles = profiles if profiles is not None else default_profiles()
    if scene.material not in profiles:
        raise SimulationError(
            f"unknown material {scene.material!r}, expected one of {sorted(profiles)}"
        )
    profile = profiles[scene.material]
    rate = pulse.sample_rate_hz
    windows = session_boundaries(schedule, rate)
    total = windows[-1].stop
    # Independent streams for background noise and the echo's stochastic
    # tail, so changing noise settings never perturbs the echo realization.
    noise_seq, tail_seq = np.random.SeedSequence(
        [_STREAM_SESSION, scene.seed & (2**63 - 1)]).spawn(2)
    noise_rng = np.random.default_rng(noise_seq)
    tail_rng = np.random.default_rng(tail_seq)

    pulse_rms = float(np.sqrt(np.mean(np.square(pulse.samples)))) if len(pulse) else 0.0
    if np.isneginf(scene.noise_db) or pulse_rms == 0.0:
        capture = np.zeros(total)
    else:
        noise_rms = pulse_rms * 10.0 ** (scene.noise_db / 20.0)
        capture = _make_noise(scene.noise_kind, noise_rms, total, rate, noise_rng, morse_params)

    rx = windows[3]
    window_len = rx.stop - rx.start
    onset = round_half_up(2.0 * scene.distance_m / SPEED_OF_SOUND_M_S * rate)
    if len(pulse) and window_len > onset:
        centers = _center_frequencies(
            morse_params or MorseParams(num_filters=len(profile.band_gains)))
        gains = subject_gains(profile, scene.subject_id)
        filtered, tail = _echo_components(_waveform_key(pulse), scene.material,
                                          scene.subject_id, window_len, profile,
                                          tuple(centers), pulse)
        m = min(window_len - onset, filtered.size)
        attenuation = (REFERENCE_DISTANCE_M / scene.distance_m) ** 2
        spec_amp = SPECULAR_GAIN * attenuation
        tail_amp = TAIL_TO_SPECULAR * SPECULAR_GAIN * attenuation
        decay_env = np.exp(-profile.diffuse_decay * np.arange(m) / rate)
        echo = filtered[:m] * spec_amp
        echo += tail[:m] * (tail_amp / np.sqrt(len(gains)) * decay_env)
        # Per-session stochastic part of the tail, drawn at the full window
        # length so the realization is independent of the onset.
        tail_noise = band_equalize(tail_rng.standard_normal(window_len), rate, centers, gains)
        echo += tail_noise[:m] * (TAIL_NOISE_FRACTION * tail_amp) * decay_env
        capture[rx.start + onset:rx.start + onset + m] += echo
    return Waveform(capture, rate)


def _waveform_key(w: Waveform) -> tuple:
    return (w.sample_rate_hz, w.samples.size, zlib.crc32(w.samples.tobytes()))


_ECHO_CACHE: dict = {}


def _echo_components(pulse_key, material: str, subject_id: int, window_len: int,
                     profile: MaterialProfile, centers: tuple, pulse: Waveform):
    """Deterministic per-(pulse, material, subject) echo pieces, memoized.

    Returns the band-equalized pulse and the subject's diffuse reverb
    pattern: one tone per band at that band's gain, with the subject's
    frozen phases. Both are pure functions of the key, so cache eviction
    never changes results.
    """
    key = (pulse_key, material, subject_id, window_len, profile, centers)
    hit = _ECHO_CACHE.get(key)
    if hit is not None:
        return hit
    rate = pulse.sample_rate_hz
    gains = subject_gains(profile, subject_id)
    filtered = band_equalize(pulse.samples, rate, np.array(centers), gains)
    phases = subject_phases(subject_id, len(gains))
    t = np.arange(window_len) / rate
    tail = np.zeros(window_len)
    for fc, g, phi in zip(centers, gains, phases):
        tail += g * np.sin(2.0 * np.pi * fc * t + phi)
    if len(_ECHO_CACHE) >= 256:
        _ECHO_CACHE.clear()
    _ECHO_CACHE[key] = (filtered, tail)
    return filtered, tail


@dataclass(frozen=True)
class ManifestRecord:
    path: str
    label: str       # bonafide | attack
    pai_type: str    # none | display | print_matte | print_glossy | silicone
    subject_id: int
    split: str       # train | test


def write_manifest(records: list[ManifestRecord], path: str | Path) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(asdict(rec), sort_keys=True) + "\n")


def read_manifest(path: str | Path) -> list[ManifestRecord]:
    records = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(ManifestRecord(**json.loads(line)))
    return records


# Reference corpus shape: 4807 sessions. The display class count follows the
# corpus-total bookkeeping (1234 samples); its train/test split keeps the
# same proportion as the other per-class splits.
ASED_PRESET_COUNTS: dict[str, tuple[int, int]] = {
    "bonafide": (1003, 430),
    "display": (864, 370),
    "print_matte": (350, 150),
    "print_glossy": (350, 150),
    "silicone": (798, 342),
}

DEFAULT_TRAIN_SUBJECTS = tuple(range(1, 26))
DEFAULT_TEST_SUBJECTS = tuple(range(26, 36))
DEFAULT_TRAIN_MASKS = (9001, 9002)
DEFAULT_TEST_MASKS = (9003, 9004)


_worker_state: dict = {}


def _simulate_task(task) -> ManifestRecord:
    (out_dir, rel_path, pulse_spec, schedule, scene, profiles, morse_params,
     label, pai_type, split) = task
    key = (pulse_spec,)
    if key not in _worker_state:
        _worker_state[key] = synth_pulse(pulse_spec)
    capture = simulate_session(_worker_state[key], schedule, scene, profiles, morse_params)
    out_path = Path(out_dir) / rel_path
    out_path.parent.mkdir(parents=True, exist_ok=True)
    write_wav(out_path, capture)
    return ManifestRecord(path=rel_path, label=label, pai_type=pai_type,
                          subject_id=scene.subject_id, split=split)


def generate_dataset(counts: dict[str, tuple[int, int]],
                     train_subjects, test_subjects,
                     out_dir: str | Path, seed: int, *,
                     profiles: dict[str, MaterialProfile] | None = None,
                     pulse_spec: PulseSpec | None = None,
                     schedule: SessionSchedule | None = None,
                     distance_range: tuple[float, float] = (0.20, 0.45),
                     noise_db: float = -60.0,
                     noise_kind: str = "white",
                     train_masks=DEFAULT_TRAIN_MASKS,
                     test_masks=DEFAULT_TEST_MASKS,
                     morse_params: MorseParams | None = None,
                     jobs: int | None = None) -> list[ManifestRecord]:
    """Write one WAV per requested sample plus a JSON-lines manifest.

    ``counts`` maps material name to (train, test) sample counts. Regular
    subjects are drawn round-robin from the split's ID set; silicone samples
    instead cycle through that split's mask identities, so mask identities
    stay split-disjoint too. Fully deterministic in the seed: re-running
    reproduces every file bit for bit.
    """
    train_subjects = tuple(train_subjects)
    test_subjects = tuple(test_subjects)
    train_ids = set(train_subjects) | set(train_masks)
    test_ids = set(test_subjects) | set(test_masks)
    overlap = train_ids & test_ids
    if overlap:
        raise ProtocolError(f"train/test subject sets overlap: {sorted(overlap)}")
    profiles = profiles if profiles is not None else default_profiles()
    pulse_spec = pulse_spec or PulseSpec()
    schedule = schedule or SessionSchedule()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    tasks = []
    material_order = [m for m in MATERIALS if m in counts] + sorted(set(counts) - set(MATERIALS))
    for class_idx, material in enumerate(material_order):
        n_train, n_test = counts[material]
        for split_idx, (split, n, ids) in enumerate([
            ("train", n_train, train_masks if material == "silicone" else train_subjects),
            ("test", n_test, test_masks if material == "silicone" else test_subjects),
        ]):
            if n > 0 and not ids:
                raise ProtocolError(f"no subject ids available for {material}/{split}")
            for i in range(n):
                rng = np.random.default_rng(
                    np.random.SeedSequence([_STREAM_DATASET, seed & (2**63 - 1), class_idx, split_idx, i])
                )
                scene = SceneSpec(
                    subject_id=int(ids[i % len(ids)]),
                    material=material,
                    distance_m=float(rng.uniform(*distance_range)),
                    noise_db=noise_db,
                    noise_kind=noise_kind,
                    seed=int(rng.integers(2**63 - 1)),
                )
                rel = f"{split}/{material}/{material}_{split}_{i:05d}.wav"
                label = "bonafide" if material == "bonafide" else "attack"
                pai = "none" if material == "bonafide" else material
                tasks.append((str(out_dir), rel, pulse_spec, schedule, scene, profiles,
                              morse_params, label, pai, split))

    if jobs is None or jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_simulate_task, tasks, chunksize=16))
    else:
        records = [_simulate_task(t) for t in tasks]
    write_manifest(records, out_dir / "manifest.jsonl")
    return records
