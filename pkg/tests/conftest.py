import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from ProtectionHub.estimation.measurement_model import (  # noqa: E402
    SAMPLE_PERIOD, MeasurementWindow, build_measurement_model, window_controls,
)
from ProtectionHub.models.device_models import make_dc_source, make_rl_branch, make_rl_load  # noqa: E402
from ProtectionHub.models.network_model import ProtectionZone, assemble  # noqa: E402
from ProtectionHub.scenarios.builtin_cases import case_config  # noqa: E402
from ProtectionHub.scenarios.scenario_config import parse_scenario  # noqa: E402
from ProtectionHub.simulation.events import EventSchedule  # noqa: E402
from ProtectionHub.simulation.waveform_sim import simulate, stack_streams  # noqa: E402


@pytest.fixture(autouse=True)
def quiet_logs(monkeypatch, tmp_path):
    monkeypatch.setenv("LOG_TO_FILE", "false")
    monkeypatch.setenv("LOG_LEVEL", "WARNING")
    monkeypatch.setenv("GRIDSENTRY_OUTPUT_DIR", str(tmp_path / "output"))


@pytest.fixture
def dc_rl_network():
    """1 V DC source feeding an RL load (R = 2, L = 0.01) through a small series branch."""
    source = make_dc_source(1.0, "N1.A", name="src")
    feeder = make_rl_branch(0.5, 0.0, "N1.A", "N2.A", name="feeder")
    load = make_rl_load(2.0, 0.01, "N2.A", name="load")
    zones = [ProtectionZone("Z1", ("src",)), ProtectionZone("Z2", ("feeder", "load"))]
    return assemble([source, feeder, load], zones=zones)


@pytest.fixture(scope="session")
def microgrid_data():
    data = case_config("case1")
    data["events"] = []
    data.pop("expectations", None)
    data["name"] = "normal"
    return data


@pytest.fixture(scope="session")
def microgrid(microgrid_data):
    return parse_scenario(microgrid_data)


@pytest.fixture(scope="session")
def microgrid_model(microgrid):
    return build_measurement_model(microgrid.network, microgrid.channel_defs)


def short_case(name, duration=0.5, shift=1.9, **overrides):
    """A built-in case moved earlier in time and cut short, for fast end-to-end runs."""
    data = case_config(name)
    for event in data["events"]:
        event["start"] = round(event["start"] - shift, 6)
        event["end"] = round(min(event["end"] - shift, duration), 6)
    data["duration"] = duration
    data.update(overrides)
    return data


@pytest.fixture(scope="session")
def window_factory():
    """Build measurement windows from a simulated run of a scenario."""
    def make(config, model, seed=3, schedule=None, noise_sigma=None, duration=None):
        streams = simulate(
            config.network,
            schedule if schedule is not None else config.schedule,
            duration or config.duration,
            noise_sigma=config.noise_sigma if noise_sigma is None else noise_sigma,
            seed=seed,
            channel_defs=config.channel_defs,
        )
        times, values = stack_streams(streams, model.column_ids)

        def at(t):
            k = int(round(t / SAMPLE_PERIOD))
            return MeasurementWindow(float(times[k]), values[k - 1:k + 1],
                                     window_controls(config.network, float(times[k])))
        return at
    return make


def empty_schedule():
    return EventSchedule(())


def rng(seed=0):
    return np.random.default_rng(seed)
