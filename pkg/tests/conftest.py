import numpy as np
import pytest

from copresence.context import (
    CO_PRESENT,
    NON_CO_PRESENT,
    AudioTrace,
    BeaconSet,
    ContextPair,
    ContextSample,
    Modality,
    PhysicalReadings,
)
from copresence.datagen import generate_pairs, preset

RATE = 16000


def tone(freq, amp=0.5, seconds=1.0, rate=RATE, phase=0.0):
    t = np.arange(int(round(seconds * rate))) / rate
    return AudioTrace(amp * np.sin(2 * np.pi * freq * t + phase), rate)


def sample(audio=None, wifi=None, bt=None, t=22.0, h=40.0, g=1.0, al=180.0):
    return ContextSample(
        audio=audio if audio is not None else tone(440.0, 0.1, 0.25),
        wifi=BeaconSet(Modality.WIFI, wifi or {}),
        bluetooth=BeaconSet(Modality.BLUETOOTH, bt or {}),
        physical=PhysicalReadings(t, h, g, al),
    )


def pair(prover=None, verifier=None, label=NON_CO_PRESENT, pair_id="p0"):
    return ContextPair(prover or sample(), verifier or sample(), label, pair_id)


@pytest.fixture(scope="session")
def benchmark_pairs():
    return generate_pairs(preset("benchmark", seed=42))


@pytest.fixture(scope="session")
def small_pairs():
    return generate_pairs(preset("benchmark", seed=5, n_co=60, n_non=60))




_criteria: list[str] = []


@pytest.fixture(scope="session")
def verdict():
    """``verdict(name, ok, detail)`` prints and records one PASS/FAIL line."""

    def record(name, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'} {name}" + (f": {detail}" if detail else "")
        print(line)
        _criteria.append(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _criteria:
        terminalreporter.section("acceptance criteria")
        for line in _criteria:
            terminalreporter.write_line(line)


__all__ = ["CO_PRESENT", "NON_CO_PRESENT", "RATE", "pair", "sample", "tone"]
