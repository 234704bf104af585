"""Sensed-context data model: audio, radio beacons and physical readings.

Everything here is an immutable value type.  A :class:`ContextPair` is the
unit the rest of the package trains and evaluates on; its label is ground
truth and is never inferred from the sensed data.
"""
from __future__ import annotations

import json
import math
import wave
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Iterator, Mapping

import numpy as np

DEFAULT_SENSING_WINDOW = 10.0  # seconds
RSSI_MIN, RSSI_MAX = -100, 0

CO_PRESENT = "co-present"
NON_CO_PRESENT = "non-co-present"
LABELS = (CO_PRESENT, NON_CO_PRESENT)


class InvalidSample(ValueError):
    """A context sample violates one of the data-model invariants."""


class Modality(str, Enum):
    AUDIO = "Au"
    BLUETOOTH = "B"
    WIFI = "W"
    ALTITUDE = "Al"
    GAS = "G"
    HUMIDITY = "H"
    TEMPERATURE = "T"

    def __repr__(self):
        return self.value

    @property
    def is_radio(self) -> bool:
        return self in RADIO

    @property
    def is_physical(self) -> bool:
        return self in PHYSICAL


# canonical order used by every schema and every printed modality set
MODALITY_ORDER = (
    Modality.AUDIO,
    Modality.BLUETOOTH,
    Modality.WIFI,
    Modality.ALTITUDE,
    Modality.GAS,
    Modality.HUMIDITY,
    Modality.TEMPERATURE,
)
RADIO = frozenset({Modality.BLUETOOTH, Modality.WIFI})
PHYSICAL = frozenset({Modality.ALTITUDE, Modality.GAS, Modality.HUMIDITY, Modality.TEMPERATURE})
ALL_MODALITIES = frozenset(MODALITY_ORDER)


def parse_modalities(text: str | Iterable[str | Modality]) -> frozenset[Modality]:
    """Parse ``"Au,B,W"`` (or an iterable of tags) into a modality set."""
    if isinstance(text, str):
        text = text.strip().strip("{}")
        items = [t.strip() for t in text.split(",") if t.strip()]
    else:
        items = list(text)
    out = set()
    for item in items:
        try:
            out.add(Modality(item))
        except ValueError:
            raise ValueError(f"unknown modality {item!r}") from None
    return frozenset(out)


def sorted_modalities(mods: Iterable[Modality]) -> list[Modality]:
    mods = set(mods)
    return [m for m in MODALITY_ORDER if m in mods]


def format_modalities(mods: Iterable[Modality]) -> str:
    return "{" + ",".join(m.value for m in sorted_modalities(mods)) + "}"


@dataclass(frozen=True, eq=False)
class AudioTrace:
    """Mono audio with amplitudes normalized to [-1, 1]."""

    samples: np.ndarray
    sample_rate: float

    def __post_init__(self):
        arr = np.array(self.samples, dtype=np.float64)
        if arr.ndim != 1:
            raise InvalidSample("audio samples must be one-dimensional")
        arr.flags.writeable = False
        object.__setattr__(self, "samples", arr)
        object.__setattr__(self, "sample_rate", float(self.sample_rate))

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate if self.sample_rate > 0 else 0.0

    def __len__(self):
        return len(self.samples)

    def __eq__(self, other):
        if not isinstance(other, AudioTrace):
            return NotImplemented
        return self.sample_rate == other.sample_rate and np.array_equal(self.samples, other.samples)

    __hash__ = None


@dataclass(frozen=True)
class BeaconSet:
    """Map from beacon identifier to RSSI (integer dBm) for one radio kind."""

    kind: Modality
    beacons: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        kind = Modality(self.kind)
        if kind not in RADIO:
            raise InvalidSample(f"beacon set kind must be B or W, got {kind.value}")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "beacons", MappingProxyType(dict(self.beacons)))

    @classmethod
    def from_pairs(cls, kind, pairs: Iterable[tuple[str, int]]) -> "BeaconSet":
        out: dict[str, int] = {}
        for m, s in pairs:
            m = str(m)
            if m in out:
                raise InvalidSample(f"duplicate beacon identifier {m!r}")
            if isinstance(s, float) and not s.is_integer():
                raise InvalidSample(f"RSSI must be an integer dBm, got {s!r}")
            out[m] = int(s)
        return cls(kind, out)

    def __len__(self):
        return len(self.beacons)

    def __iter__(self) -> Iterator[str]:
        return iter(self.beacons)

    @property
    def ids(self) -> frozenset[str]:
        return frozenset(self.beacons)

    def pairs(self) -> list[tuple[str, int]]:
        return sorted(self.beacons.items())

    def __eq__(self, other):
        if not isinstance(other, BeaconSet):
            return NotImplemented
        return self.kind == other.kind and dict(self.beacons) == dict(other.beacons)

    __hash__ = None


@dataclass(frozen=True)
class PhysicalReadings:
    temperature: float  # degC
    humidity: float  # %RH
    gas_co: float  # ppm
    altitude: float  # m

    def get(self, modality: Modality) -> float:
        return getattr(self, _PHYS_FIELD[modality])

    def with_value(self, modality: Modality, value: float) -> "PhysicalReadings":
        return replace(self, **{_PHYS_FIELD[modality]: float(value)})


_PHYS_FIELD = {
    Modality.TEMPERATURE: "temperature",
    Modality.HUMIDITY: "humidity",
    Modality.GAS: "gas_co",
    Modality.ALTITUDE: "altitude",
}


@dataclass(frozen=True)
class ContextSample:
    audio: AudioTrace
    wifi: BeaconSet
    bluetooth: BeaconSet
    physical: PhysicalReadings
    sensed_at: float = 0.0
    sensing_window: float = DEFAULT_SENSING_WINDOW

    def radio(self, kind: Modality) -> BeaconSet:
        return self.wifi if kind == Modality.WIFI else self.bluetooth

    def with_radio(self, beacons: BeaconSet) -> "ContextSample":
        if beacons.kind == Modality.WIFI:
            return replace(self, wifi=beacons)
        return replace(self, bluetooth=beacons)


@dataclass(frozen=True)
class ContextPair:
    prover: ContextSample
    verifier: ContextSample
    label: str
    pair_id: str = ""

    def __post_init__(self):
        if self.label not in LABELS:
            raise InvalidSample(f"label must be one of {LABELS}, got {self.label!r}")

    @property
    def co_present(self) -> bool:
        return self.label == CO_PRESENT


def validate_sample(sample: ContextSample, sensing_window: float | None = None) -> ContextSample:
    """Check every data-model invariant of ``sample`` and return it unchanged.

    Raises
    ------
    InvalidSample
        On non-finite or out-of-range audio, RSSI outside [-100, 0] dBm,
        humidity outside [0, 100] %RH, negative gas concentration, a
        mis-kinded beacon set, or a sensing window that differs from the
        expected one (when ``sensing_window`` is given).
    """
    a = sample.audio
    if not a.sample_rate > 0:
        raise InvalidSample(f"sample rate must be positive, got {a.sample_rate}")
    if not np.all(np.isfinite(a.samples)):
        raise InvalidSample("audio contains non-finite amplitudes")
    if len(a.samples) and np.max(np.abs(a.samples)) > 1.0:
        raise InvalidSample("audio amplitudes must be normalized to [-1, 1]")
    for kind, bs in ((Modality.WIFI, sample.wifi), (Modality.BLUETOOTH, sample.bluetooth)):
        if bs.kind != kind:
            raise InvalidSample(f"expected {kind.value} beacons, got {bs.kind.value}")
        for m, s in bs.beacons.items():
            if not RSSI_MIN <= s <= RSSI_MAX:
                raise InvalidSample(f"RSSI {s} dBm of {m!r} outside [{RSSI_MIN}, {RSSI_MAX}]")
    p = sample.physical
    for name in ("temperature", "humidity", "gas_co", "altitude"):
        if not math.isfinite(getattr(p, name)):
            raise InvalidSample(f"{name} is not finite")
    if not 0.0 <= p.humidity <= 100.0:
        raise InvalidSample(f"humidity {p.humidity} outside [0, 100]")
    if p.gas_co < 0:
        raise InvalidSample(f"gas concentration {p.gas_co} is negative")
    if sensing_window is not None and sample.sensing_window != sensing_window:
        raise InvalidSample(
            f"sensing window {sample.sensing_window} differs from protocol duration {sensing_window}"
        )
    return sample


def validate_pair(pair: ContextPair) -> ContextPair:
    validate_sample(pair.prover)
    validate_sample(pair.verifier)
    return pair


# -- JSON Lines dataset format ---------------------------------------------


def read_wav(path: str | Path) -> AudioTrace:
    """Read a 16-bit mono PCM WAVE file, normalizing to [-1, 1]."""
    with wave.open(str(path), "rb") as w:
        if w.getnchannels() != 1 or w.getsampwidth() != 2:
            raise InvalidSample(f"{path}: only 16-bit mono PCM is supported")
        rate = w.getframerate()
        raw = w.readframes(w.getnframes())
    ints = np.frombuffer(raw, dtype="<i2")
    return AudioTrace(ints.astype(np.float64) / 32768.0, rate)


def write_wav(path: str | Path, trace: AudioTrace) -> None:
    ints = np.clip(np.round(trace.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(int(round(trace.sample_rate)))
        w.writeframes(ints.tobytes())


def _encode_sample(s: ContextSample, audio_path: str | None) -> dict:
    audio: dict = {"rate": s.audio.sample_rate}
    if audio_path is None:
        audio["samples"] = s.audio.samples.tolist()
    else:
        audio["path"] = audio_path
    return {
        "audio": audio,
        "wifi": [[m, v] for m, v in s.wifi.pairs()],
        "bt": [[m, v] for m, v in s.bluetooth.pairs()],
        "phys": {
            "t": s.physical.temperature,
            "h": s.physical.humidity,
            "g": s.physical.gas_co,
            "al": s.physical.altitude,
        },
        "sensed_at": s.sensed_at,
        "window": s.sensing_window,
    }


def _decode_sample(d: dict, base_dir: Path | None) -> ContextSample:
    a = d["audio"]
    if "samples" in a:
        audio = AudioTrace(a["samples"], a["rate"])
    else:
        path = Path(a["path"])
        if not path.is_absolute() and base_dir is not None:
            path = base_dir / path
        audio = read_wav(path)
        if audio.sample_rate != float(a["rate"]):
            raise InvalidSample(f"{path}: rate {audio.sample_rate} != declared {a['rate']}")
    ph = d["phys"]
    return ContextSample(
        audio=audio,
        wifi=BeaconSet.from_pairs(Modality.WIFI, d.get("wifi", [])),
        bluetooth=BeaconSet.from_pairs(Modality.BLUETOOTH, d.get("bt", [])),
        physical=PhysicalReadings(float(ph["t"]), float(ph["h"]), float(ph["g"]), float(ph["al"])),
        sensed_at=float(d.get("sensed_at", 0.0)),
        sensing_window=float(d.get("window", DEFAULT_SENSING_WINDOW)),
    )


def encode_pair(pair: ContextPair, audio_paths: tuple[str, str] | None = None) -> str:
    """Serialize one pair to a single JSON line (no trailing newline)."""
    pp, vp = audio_paths if audio_paths else (None, None)
    obj = {
        "pair_id": pair.pair_id,
        "label": pair.label,
        "prover": _encode_sample(pair.prover, pp),
        "verifier": _encode_sample(pair.verifier, vp),
    }
    return json.dumps(obj, separators=(",", ":"))


def decode_pair(line: str, base_dir: str | Path | None = None) -> ContextPair:
    d = json.loads(line)
    base = Path(base_dir) if base_dir is not None else None
    pair = ContextPair(
        prover=_decode_sample(d["prover"], base),
        verifier=_decode_sample(d["verifier"], base),
        label=d["label"],
        pair_id=str(d["pair_id"]),
    )
    return validate_pair(pair)


def read_dataset(path: str | Path) -> list[ContextPair]:
    path = Path(path)
    with open(path) as fh:
        return [decode_pair(line, path.parent) for line in fh if line.strip()]


def write_dataset(path: str | Path, pairs: Iterable[ContextPair], audio: str = "inline") -> None:
    """Write pairs as JSON Lines.

    ``audio="wav"`` stores each trace as a 16-bit WAVE file in a sibling
    ``<stem>_audio/`` directory and references it by relative path; the
    traces are quantized to the 16-bit grid in that case.
    """
    path = Path(path)
    if audio not in ("inline", "wav"):
        raise ValueError(f"audio must be 'inline' or 'wav', got {audio!r}")
    audio_dir = path.parent / f"{path.stem}_audio"
    if audio == "wav":
        audio_dir.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w") as fh:
        for pair in pairs:
            paths = None
            if audio == "wav":
                paths = []
                for side, sample in (("p", pair.prover), ("v", pair.verifier)):
                    name = f"{pair.pair_id}_{side}.wav"
                    write_wav(audio_dir / name, sample.audio)
                    paths.append(f"{audio_dir.name}/{name}")
                paths = tuple(paths)
            fh.write(encode_pair(pair, paths) + "\n")
    tmp.replace(path)


def quantize16(samples: np.ndarray) -> np.ndarray:
    """Snap amplitudes onto the 16-bit PCM grid (what a WAVE round trip yields)."""
    return np.clip(np.round(np.asarray(samples) * 32768.0), -32768, 32767) / 32768.0
