import numpy as np
import pytest

from echopad.cwt import MorseParams
from echopad.echosim import generate_dataset
from echopad.embed import EmbedBackendSpec
from echopad.pipeline import PipelineConfig
from echopad.signal import PulseSpec, SessionSchedule

# Small-session setup used by the protocol/CLI integration tests: same code
# paths as the defaults, two orders of magnitude cheaper per sample.
FAST_RATE = 16000
FAST_CONFIG_TEXT = """\
sample_rate_hz = 16000
carrier_hz = 6000
pulse_duration_s = 0.2
background_s = 0.15
pulse_s = 0.2
idle_s = 0.05
receive_s = 0.15
top_passband_hz = 5000
min_center_hz = 500
"""


@pytest.fixture(scope="session")
def fast_pulse_spec():
    return PulseSpec(FAST_RATE, 6000.0, 0.2, 0.9)


@pytest.fixture(scope="session")
def fast_schedule():
    return SessionSchedule(0.15, 0.2, 0.05, 0.15)


@pytest.fixture(scope="session")
def fast_morse():
    return MorseParams(top_passband_hz=5000.0, min_center_hz=500.0)


@pytest.fixture(scope="session")
def fast_pipeline(fast_pulse_spec, fast_schedule, fast_morse):
    return PipelineConfig(pulse=fast_pulse_spec, schedule=fast_schedule,
                          morse=fast_morse, backend=EmbedBackendSpec())


@pytest.fixture(scope="session")
def fast_dataset(tmp_path_factory, fast_pulse_spec, fast_schedule, fast_morse):
    """A small five-class dataset under the fast session configuration."""
    out = tmp_path_factory.mktemp("fastdata")
    counts = {m: (12, 8) for m in
              ("bonafide", "display", "print_matte", "print_glossy", "silicone")}
    records = generate_dataset(
        counts, train_subjects=range(1, 26), test_subjects=range(26, 36),
        out_dir=out, seed=13, pulse_spec=fast_pulse_spec, schedule=fast_schedule,
        morse_params=fast_morse, jobs=2,
    )
    return records, out


@pytest.fixture()
def fast_config_file(tmp_path):
    path = tmp_path / "fast.cfg"
    path.write_text(FAST_CONFIG_TEXT)
    return path


@pytest.fixture()
def rng():
    return np.random.default_rng(0xEC40)
