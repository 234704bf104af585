"""Seeded synthetic environments and co-presence datasets.

An *environment instance* is one place at one moment: an ambient sound
field, the WiFi/Bluetooth beacons in range and the physical conditions.
Co-present pairs are two devices sensing the same instance; non-co-present
pairs sense two independent instances.  Every constant lives in
``data/profiles.json`` and is synthetic.
"""
from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .context import (
    CO_PRESENT,
    DEFAULT_SENSING_WINDOW,
    NON_CO_PRESENT,
    AudioTrace,
    BeaconSet,
    ContextPair,
    ContextSample,
    Modality,
    PhysicalReadings,
    quantize16,
    write_dataset,
)

AUDIO_CLASSES = ("low", "medium", "high")
PHYS_KEYS = {"Al": Modality.ALTITUDE, "G": Modality.GAS, "H": Modality.HUMIDITY, "T": Modality.TEMPERATURE}


def load_profiles(path: str | Path | None = None) -> dict:
    """The shipped profile/config document, or a user-edited copy."""
    if path is None:
        text = resources.files("copresence").joinpath("data/profiles.json").read_text()
    else:
        text = Path(path).read_text()
    return json.loads(text)


@dataclass(frozen=True)
class EnvironmentProfile:
    name: str
    audio: dict
    wifi: dict
    bluetooth: dict
    physical: dict

    def __post_init__(self):
        for kind in (self.wifi, self.bluetooth):
            lo, hi = kind["count"]
            if lo < 0 or hi < lo:
                raise ValueError(f"{self.name}: beacon count range must be non-negative")
            rlo, rhi = kind["rssi"]
            if not -100 <= rlo <= rhi <= 0:
                raise ValueError(f"{self.name}: RSSI range must lie within [-100, 0] dBm")

    @classmethod
    def from_json(cls, name: str, d: dict) -> "EnvironmentProfile":
        return cls(name, d["audio"], d["wifi"], d["bluetooth"], d["physical"])


@dataclass(frozen=True)
class GenConfig:
    n_co: int = 335
    n_non: int = 203
    seed: int = 42
    profiles: tuple[str, ...] = ("office", "parking-lot", "cafe", "home")
    hardware_variance: bool = True
    noise_scale: float = 1.0
    # share of non-co-present pairs taken in the same building (shared APs)
    nearby_fraction: float = 0.08
    sensing_window: float = DEFAULT_SENSING_WINDOW
    document: dict = field(default_factory=load_profiles, compare=False, repr=False)

    def __post_init__(self):
        if self.n_co <= 0 or self.n_non <= 0:
            raise ValueError("pair counts must be positive")
        unknown = set(self.profiles) - set(self.document["profiles"])
        if unknown:
            raise ValueError(f"unknown profiles {sorted(unknown)}")

    def profile(self, name: str) -> EnvironmentProfile:
        return EnvironmentProfile.from_json(name, self.document["profiles"][name])


PRESETS = {
    # paired-device corpus mixing all four places, 335 co / 203 non
    "benchmark": dict(n_co=335, n_non=203, hardware_variance=True),
    # single-device physical corpus with ~18x more non-co-present samples
    "physical": dict(n_co=40, n_non=720, hardware_variance=False),
}


def preset(name: str, **overrides) -> GenConfig:
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; expected one of {sorted(PRESETS)}")
    return GenConfig(**{**PRESETS[name], **overrides})


# -- environment instances --------------------------------------------------


@dataclass(frozen=True)
class AudioScene:
    klass: str
    freq: float
    tone_amp: float
    noise_amp: float
    signal: np.ndarray  # longer than one clip, so devices can start at different offsets
    sample_rate: float


@dataclass(frozen=True)
class Environment:
    profile: str
    audio: AudioScene
    wifi: dict  # mac -> location RSSI
    bluetooth: dict
    physical: dict  # Modality -> true value


def _band_noise(rng, n, rate, band, amp):
    spec = rng.standard_normal(n // 2 + 1) + 1j * rng.standard_normal(n // 2 + 1)
    freqs = np.fft.rfftfreq(n, 1.0 / rate)
    spec[(freqs < band[0]) | (freqs > band[1])] = 0
    x = np.fft.irfft(spec, n)
    sd = x.std()
    return x * (amp / sd) if sd > 0 else x


def audio_scene(rng: np.random.Generator, doc: dict, klass: str, tone_amp: float, noise_amp: float,
                freq: float | None = None) -> AudioScene:
    a = doc["audio"]
    rate = a["sample_rate"]
    pad = doc["sensor_noise"]["audio_sync_offset"] + 0.3
    n = int(round((a["clip_seconds"] + 2 * pad) * rate))
    spec = a["classes"][klass]
    if freq is None:
        if "mains_hum" in spec and rng.random() < spec["mains_prob"]:
            freq = float(rng.choice(spec["mains_hum"]))
        else:
            freq = float(rng.uniform(*spec["freq"]))
    # low-frequency sources (engines, mains hum, ventilation) tend to be loud
    gain = spec.get("level_gain", 1.0)
    tone_amp, noise_amp = min(gain * tone_amp, 0.5), gain * noise_amp
    t = np.arange(n) / rate
    sig = tone_amp * np.sin(2 * np.pi * freq * t + rng.uniform(0, 2 * np.pi))
    sig += _band_noise(rng, n, rate, spec["noise_band"], noise_amp)
    sig += _band_noise(rng, n, rate, (20, rate / 2), a["broadband_floor"])
    return AudioScene(klass, freq, tone_amp, noise_amp, sig, rate)


def _mac(rng, prefix: str) -> str:
    octets = rng.integers(0, 256, size=5)
    return prefix + ":" + ":".join(f"{o:02x}" for o in octets)


def sample_environment(rng: np.random.Generator, profile: EnvironmentProfile, doc: dict,
                       audio_class: str | None = None) -> Environment:
    pa = profile.audio
    if audio_class is None:
        w = pa["class_weights"]
        probs = np.array([w[c] for c in AUDIO_CLASSES], dtype=float)
        audio_class = AUDIO_CLASSES[int(rng.choice(3, p=probs / probs.sum()))]
    # sound levels spread evenly in dB, hence log-uniform amplitudes
    tone_amp = float(np.exp(rng.uniform(*np.log(pa["tone_amp"]))))
    scene = audio_scene(rng, doc, audio_class, tone_amp,
                        float(rng.uniform(*pa["noise_amp"])))

    def beacons(spec, prefix):
        lo, hi = spec["count"]
        n = int(rng.integers(lo, hi + 1))
        out = {}
        while len(out) < n:
            out[_mac(rng, prefix)] = int(rng.integers(spec["rssi"][0], spec["rssi"][1] + 1))
        return out

    ph = profile.physical
    physical = {
        Modality.TEMPERATURE: float(rng.normal(*ph["temperature"])),
        Modality.HUMIDITY: float(np.clip(rng.normal(*ph["humidity"]), 5.0, 95.0)),
        Modality.GAS: float(rng.uniform(*ph["gas_co"])),
        Modality.ALTITUDE: float(rng.normal(*ph["altitude"])),
    }
    return Environment(profile.name, scene, beacons(profile.wifi, "w"), beacons(profile.bluetooth, "b"), physical)


def nearby_environment(rng: np.random.Generator, env: Environment, profile: EnvironmentProfile,
                       doc: dict) -> Environment:
    """A different room of the same building: independent sound and climate, shared APs."""
    other = sample_environment(rng, profile, doc)
    noise = doc["sensor_noise"]
    share = rng.uniform(*noise["nearby_shared_fraction"])
    wifi = dict(other.wifi)
    for mac, rssi in env.wifi.items():
        if rng.random() < share:
            offset = rng.uniform(*noise["nearby_rssi_offset"]) * rng.choice([-1, 1])
            wifi[mac] = int(np.clip(round(rssi + offset), -100, -20))
    return replace(other, wifi=wifi)


# -- sensing ----------------------------------------------------------------


def _record(rng, scene: AudioScene, doc: dict, scale: float, offset: float,
            pocketed: bool = False) -> AudioTrace:
    a, noise = doc["audio"], doc["sensor_noise"]
    rate = scene.sample_rate
    n = int(round(a["clip_seconds"] * rate))
    pad = noise["audio_sync_offset"] + 0.3
    start = int(round((pad + offset) * rate))
    x = scene.signal[start:start + n].copy()
    if scale > 0:
        gain = rng.uniform(*noise["audio_gain"])
        gain = 1.0 + scale * (gain - 1.0)
        local = _band_noise(rng, n, rate, a["classes"][scene.klass]["noise_band"],
                            scale * noise["audio_local_noise"] * scene.noise_amp)
        x = gain * (x + local)
        if pocketed:
            spec = np.fft.rfft(x)
            spec[np.fft.rfftfreq(n, 1.0 / rate) > noise["pocket_audio_cutoff"]] *= 0.05
            x = noise["pocket_audio_gain"] * np.fft.irfft(spec, n)
        x = x + scale * noise["audio_mic_noise"] * rng.standard_normal(n)
    return AudioTrace(quantize16(np.clip(x, -1.0, 1.0)), rate)


def _scan(rng, located: dict, kind: Modality, doc: dict, scale: float, loss: float = 0.0) -> BeaconSet:
    noise = doc["sensor_noise"]
    if scale == 0:
        return BeaconSet(kind, dict(located))
    if kind == Modality.BLUETOOTH and rng.random() < noise["bt_scan_fail"] * min(scale, 1.0):
        return BeaconSet(kind, {})
    out = {}
    for mac, rssi in located.items():
        if kind == Modality.WIFI:
            p = noise["wifi_detect_strong"] if rssi > noise["weak_rssi"] else noise["wifi_detect_weak"]
        else:
            p = noise["bt_detect"]
        p = 1.0 - scale * (1.0 - p)
        if rng.random() < p:
            s = rssi - loss + scale * noise["rssi_jitter"] * rng.standard_normal()
            if kind == Modality.BLUETOOTH and s < noise["bt_sensitivity"]:
                continue
            out[mac] = int(np.clip(round(s), -100, 0))
    return BeaconSet(kind, out)


def _device_offsets(rng, config: GenConfig) -> dict:
    """Reading offset of the verifier-side device relative to the prover-side one."""
    doc = config.document
    out = {}
    for key, mod in PHYS_KEYS.items():
        if config.hardware_variance:
            modes = doc["hardware_variance"][key]
            mu, sd = modes[int(rng.integers(len(modes)))]
            delta = rng.normal(mu, sd) * rng.choice([-1, 1])
        else:
            delta = rng.normal(0.0, doc["sensor_noise"]["single_device_offset"][key])
        out[mod] = float(delta)
    return out


def _read_physical(rng, truth: dict, offset: dict, doc: dict, scale: float) -> PhysicalReadings:
    jit = doc["sensor_noise"]["physical_jitter"]
    vals = {}
    for key, mod in PHYS_KEYS.items():
        vals[mod] = truth[mod] + scale * (offset[mod] + jit[key] * rng.standard_normal())
    return PhysicalReadings(
        temperature=vals[Modality.TEMPERATURE],
        humidity=float(np.clip(vals[Modality.HUMIDITY], 0.0, 100.0)),
        gas_co=float(max(vals[Modality.GAS], 0.0)),
        altitude=vals[Modality.ALTITUDE],
    )


def sense(rng, env: Environment, config: GenConfig, scale: float, audio_offset: float,
          phys_offset: dict | None, sensed_at: float) -> ContextSample:
    doc = config.document
    noise = doc["sensor_noise"]
    zero = {m: 0.0 for m in PHYS_KEYS.values()}
    # a device in a pocket or bag hears muffled audio and loses weak Bluetooth beacons
    pocketed = scale > 0 and rng.random() < scale * noise["pocket_prob"]
    loss = noise["pocket_radio_loss"] if pocketed else 0.0
    return ContextSample(
        audio=_record(rng, env.audio, doc, scale, audio_offset, pocketed),
        wifi=_scan(rng, env.wifi, Modality.WIFI, doc, scale),
        bluetooth=_scan(rng, env.bluetooth, Modality.BLUETOOTH, doc, scale, loss),
        physical=_read_physical(rng, env.physical, phys_offset or zero, doc, scale),
        sensed_at=sensed_at,
        sensing_window=config.sensing_window,
    )


def sample_copresent_pair(profile: EnvironmentProfile | str, seed, config: GenConfig | None = None,
                          pair_id: str = "", sensed_at: float = 0.0, audio_class: str | None = None) -> ContextPair:
    """Two devices sensing one environment instance.

    With ``config.noise_scale == 0`` both samples are identical.
    """
    config = config or GenConfig()
    if isinstance(profile, str):
        profile = config.profile(profile)
    rng = np.random.default_rng(seed)
    env = sample_environment(rng, profile, config.document, audio_class)
    s = config.noise_scale
    sync = config.document["sensor_noise"]["audio_sync_offset"]
    offset = float(rng.uniform(-sync, sync)) * s
    prover = sense(rng, env, config, s, 0.0, None, sensed_at)
    verifier = sense(rng, env, config, s, offset, _device_offsets(rng, config), sensed_at)
    return ContextPair(prover, verifier, CO_PRESENT, pair_id)


def sample_noncopresent_pair(profile_p: EnvironmentProfile | str, profile_v: EnvironmentProfile | str, seed,
                             config: GenConfig | None = None, pair_id: str = "", sensed_at: float = 0.0,
                             nearby: bool = False, audio_classes: tuple[str | None, str | None] = (None, None)
                             ) -> ContextPair:
    """Two devices in independent environment instances.

    Beacon namespaces are disjoint unless ``nearby`` is set, which places the
    verifier in another room of the prover's building (shared APs, different
    signal strengths).
    """
    pair, _, _ = _noncopresent(profile_p, profile_v, seed, config, pair_id, sensed_at, nearby, audio_classes)
    return pair


def _noncopresent(profile_p, profile_v, seed, config, pair_id, sensed_at, nearby, audio_classes):
    config = config or GenConfig()
    if isinstance(profile_p, str):
        profile_p = config.profile(profile_p)
    if isinstance(profile_v, str):
        profile_v = config.profile(profile_v)
    rng = np.random.default_rng(seed)
    doc = config.document
    env_p = sample_environment(rng, profile_p, doc, audio_classes[0])
    if nearby:
        env_v = nearby_environment(rng, env_p, profile_p, doc)
    else:
        env_v = sample_environment(rng, profile_v, doc, audio_classes[1])
    if rng.random() < doc["sensor_noise"]["shared_broadcast_prob"]:
        env_p, env_v = _shared_broadcast(rng, env_p, env_v)
    s = config.noise_scale
    prover = sense(rng, env_p, config, s, 0.0, None, sensed_at)
    verifier = sense(rng, env_v, config, s, 0.0, _device_offsets(rng, config), sensed_at)
    return ContextPair(prover, verifier, NON_CO_PRESENT, pair_id), env_p, rng


def _shared_broadcast(rng, env_p: Environment, env_v: Environment) -> tuple[Environment, Environment]:
    """Both places play the same live broadcast (radio, TV), louder than their own sounds.

    The copies are offset by up to 50 ms, so the two recordings correlate
    although the devices are apart.
    """
    sp, sv = env_p.audio, env_v.audio
    n = len(sp.signal)
    amp = rng.uniform(1.0, 3.0) * max(sp.tone_amp, sv.tone_amp, 0.01)
    b = _band_noise(rng, n + 800, sp.sample_rate, (300, 6000), amp)
    lag = int(rng.integers(0, 800))
    sp = replace(sp, signal=sp.signal + b[:n])
    sv = replace(sv, signal=sv.signal + b[lag:lag + n])
    return replace(env_p, audio=sp), replace(env_v, audio=sv)


def _make_pair(config: GenConfig, index: int, label: str) -> ContextPair:
    rng = np.random.default_rng([config.seed, index, 7])
    names = config.profiles
    pid = f"pair-{index:05d}"
    t = 1_700_000_000.0 + 60.0 * index
    seed = [config.seed, index]
    if label == CO_PRESENT:
        return sample_copresent_pair(names[int(rng.integers(len(names)))], seed, config, pid, t)
    pp = names[int(rng.integers(len(names)))]
    nearby = bool(rng.random() < config.nearby_fraction)
    pv = pp if nearby else names[int(rng.integers(len(names)))]
    return sample_noncopresent_pair(pp, pv, seed, config, pid, t, nearby=nearby)


def generate_pairs(config: GenConfig, threads: int = 1) -> list[ContextPair]:
    """All pairs of ``config`` in a fixed, seed-determined order."""
    labels = [CO_PRESENT] * config.n_co + [NON_CO_PRESENT] * config.n_non
    np.random.default_rng(config.seed).shuffle(labels)
    jobs = list(enumerate(labels))
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(lambda j: _make_pair(config, *j), jobs))
    return [_make_pair(config, i, lab) for i, lab in jobs]


def gen_dataset(config: GenConfig, path: str | Path, audio: str = "wav", threads: int = 1) -> Path:
    """Generate ``config`` and write it as a JSON Lines dataset."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    write_dataset(path, generate_pairs(config, threads), audio=audio)
    return path


def audio_pair(seed, p_class: str, v_class: str, config: GenConfig | None = None,
               profile: str = "office") -> ContextPair:
    """A non-co-present pair with prescribed prover/verifier audio classes."""
    config = config or GenConfig()
    return sample_noncopresent_pair(profile, profile, seed, config, audio_classes=(p_class, v_class))


def relay_capture(seed, p_class: str, v_class: str, config: GenConfig | None = None,
                  profile: str = "office") -> tuple[ContextPair, AudioTrace]:
    """The pair of :func:`audio_pair` plus the leech's recording next to the prover.

    The leech hears the prover's surroundings through its own microphone,
    so its trace shares the scene but not the prover's sensor noise.
    """
    config = config or GenConfig()
    pair, env_p, rng = _noncopresent(profile, profile, seed, config, "", 0.0, False, (p_class, v_class))
    leech = _record(rng, env_p.audio, config.document, config.noise_scale, 0.0)
    return pair, leech
