"""Shared fixtures: small synthetic sessions and hypothesis limits."""

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from epistate.dataset import Coupling, RegionLabel, Segment, State, SynthConfig, synth_session

settings.register_profile(
    "suite",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


TRAPEZOID = (
    Segment(RegionLabel.RISE, 40, 0.03),
    Segment(RegionLabel.SUSTAIN, 60, 0.0),
    Segment(RegionLabel.DECAY, 40, -0.03),
    Segment(RegionLabel.SUSTAIN, 60, 0.0),
)

COUPLINGS = {
    "inBrL": Coupling("linear", 0.6),
    "inBrR": Coupling("linear", 0.5, 0.05),
    "eyeOL": Coupling("quadratic", 0.5),
    "oLipH": Coupling("sinusoidal", 0.4, 0.0, 0.5),
    "LpCDt": Coupling("linear", 0.4, 0.1),
    "Yaw": Coupling("linear", -0.3),
}


def make_session(seed: int, sigma: float = 0.05, trace_sigma: float = 0.02,
                 start: float = -0.6, session_id: str = ""):
    cfg = SynthConfig(
        n_frames=200, plan=TRAPEZOID, couplings=COUPLINGS,
        sigma=sigma, trace_sigma=trace_sigma, start=start, seed=seed,
        state=State.CONCENTRATION,
        session_id=session_id or f"t{seed:03d}")
    return synth_session(cfg)


@pytest.fixture(scope="session")
def sessions():
    """Five small planted sessions shared by the model-level tests."""
    return [make_session(100 + i, session_id=f"s{i:03d}") for i in range(5)]


@pytest.fixture
def rng():
    return np.random.default_rng(0)
