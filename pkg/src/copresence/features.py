"""Per-modality similarity/distance features for a pair of context samples.

Audio features are computed on a pre-emphasized signal (first-order
high-pass, coefficient 0.97), so louder high-frequency content dominates
the comparison, as a phone microphone front-end would.  None of the audio
features depend on the two recordings being time-aligned.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .context import (
    MODALITY_ORDER,
    AudioTrace,
    BeaconSet,
    ContextPair,
    Modality,
    PhysicalReadings,
    sorted_modalities,
)

SCHEMA_VERSION = "1"

PRE_EMPHASIS = 0.97
MAX_LAG_SECONDS = 0.2
BAND_LOW_HZ = 50.0
BAND_HIGH_HZ = 8000.0
# relative band energies are floored at -50 dB so empty bands compare equal
BAND_FLOOR = 1e-5

AUDIO_FEATURES = ("xcorr", "lag", "band_dist", "freq_diff")
RADIO_FEATURES = ("jaccard", "common", "rssi_diff", "unique_norm", "count_diff")
PHYSICAL_FEATURE = {
    Modality.ALTITUDE: "d_Al",
    Modality.GAS: "d_G",
    Modality.HUMIDITY: "d_H",
    Modality.TEMPERATURE: "d_T",
}


class RateMismatch(ValueError):
    pass


class EmptyTrace(ValueError):
    pass


class KindMismatch(ValueError):
    pass


class SchemaMismatch(ValueError):
    pass


def feature_names(modality: Modality) -> tuple[str, ...]:
    if modality == Modality.AUDIO:
        return tuple(f"au_{n}" for n in AUDIO_FEATURES)
    if modality.is_radio:
        prefix = "w" if modality == Modality.WIFI else "b"
        return tuple(f"{prefix}_{n}" for n in RADIO_FEATURES)
    return (PHYSICAL_FEATURE[modality],)


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered feature names for a set of modalities."""

    modalities: tuple[Modality, ...]
    version: str = SCHEMA_VERSION

    @classmethod
    def for_modalities(cls, modalities: Iterable[Modality]) -> "FeatureSchema":
        mods = sorted_modalities(modalities)
        if not mods:
            raise ValueError("a feature schema needs at least one modality")
        return cls(tuple(mods))

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(n for m in self.modalities for n in feature_names(m))

    @property
    def modality_of(self) -> dict[str, Modality]:
        return {n: m for m in self.modalities for n in feature_names(m)}

    def columns(self, modalities: Iterable[Modality]) -> list[int]:
        """Indices of the columns that belong to ``modalities``."""
        wanted = set(modalities)
        return [i for i, n in enumerate(self.names) if self.modality_of[n] in wanted]

    @property
    def schema_id(self) -> str:
        blob = json.dumps({"v": self.version, "names": self.names}).encode()
        return hashlib.sha1(blob).hexdigest()[:12]

    def __len__(self):
        return len(self.names)

    def to_json(self) -> dict:
        return {
            "version": self.version,
            "schema_id": self.schema_id,
            "modalities": [m.value for m in self.modalities],
            "names": list(self.names),
        }

    @classmethod
    def from_json(cls, d: dict) -> "FeatureSchema":
        schema = cls(tuple(Modality(m) for m in d["modalities"]), d.get("version", SCHEMA_VERSION))
        if "schema_id" in d and d["schema_id"] != schema.schema_id:
            raise SchemaMismatch(f"stored schema id {d['schema_id']} does not match {schema.schema_id}")
        return schema


@dataclass(frozen=True, eq=False)
class FeatureVector:
    values: np.ndarray
    schema: FeatureSchema

    @property
    def schema_id(self) -> str:
        return self.schema.schema_id

    @property
    def names(self) -> tuple[str, ...]:
        return self.schema.names

    @property
    def modality_of(self) -> dict[str, Modality]:
        return self.schema.modality_of

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.names, self.values.tolist()))

    def __eq__(self, other):
        if not isinstance(other, FeatureVector):
            return NotImplemented
        return self.schema_id == other.schema_id and np.array_equal(self.values, other.values)

    __hash__ = None


# -- audio ------------------------------------------------------------------


def pre_emphasize(x: np.ndarray, coef: float = PRE_EMPHASIS) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if len(x) == 0:
        return x
    return np.concatenate(([x[0]], x[1:] - coef * x[:-1]))


def third_octave_bands(low: float = BAND_LOW_HZ, high: float = BAND_HIGH_HZ) -> np.ndarray:
    """(n, 2) array of [lo, hi) edges for base-10 one-third-octave bands."""
    k_lo = int(np.round(10 * np.log10(low / 1000.0)))
    k_hi = int(np.round(10 * np.log10(high / 1000.0)))
    centers = 1000.0 * 10.0 ** (np.arange(k_lo, k_hi + 1) / 10.0)
    return np.stack([centers * 10 ** (-1 / 20), centers * 10 ** (1 / 20)], axis=1)


def band_log_energies(x: np.ndarray, sample_rate: float) -> np.ndarray:
    """log10 of each band's share of total spectral energy, floored."""
    power = np.abs(np.fft.rfft(x)) ** 2
    freqs = np.fft.rfftfreq(len(x), d=1.0 / sample_rate)
    total = power.sum()
    bands = third_octave_bands()
    out = np.empty(len(bands))
    for i, (lo, hi) in enumerate(bands):
        e = power[(freqs >= lo) & (freqs < hi)].sum()
        out[i] = np.log10((e / total if total > 0 else 0.0) + BAND_FLOOR)
    return out


def dominant_frequency(x: np.ndarray, sample_rate: float) -> float:
    """Frequency (Hz) of the strongest non-DC bin of the emphasized signal."""
    mag = np.abs(np.fft.rfft(pre_emphasize(x)))
    if len(mag) < 2 or not np.any(mag[1:]):
        return 0.0
    k = 1 + int(np.argmax(mag[1:]))
    return k * sample_rate / len(x)


def _xcorr_peak(a: np.ndarray, b: np.ndarray, sample_rate: float, max_lag: float) -> tuple[float, float]:
    a = a - a.mean()
    b = b - b.mean()
    denom = np.sqrt(np.dot(a, a) * np.dot(b, b))
    if denom == 0:
        return 0.0, 0.0
    n = len(a)
    nfft = 1 << int(np.ceil(np.log2(2 * n - 1)))
    # full[k] = sum_t a[t] * b[t + k]; positive k means b lags a
    full = np.fft.irfft(np.conj(np.fft.rfft(a, nfft)) * np.fft.rfft(b, nfft), nfft)
    lim = min(n - 1, int(round(max_lag * sample_rate)))
    lags = np.arange(-lim, lim + 1)
    vals = full[lags % nfft] / denom
    i = int(np.argmax(vals))
    return float(np.clip(vals[i], -1.0, 1.0)), float(lags[i] / sample_rate)


def align_traces(a: AudioTrace, b: AudioTrace) -> tuple[np.ndarray, np.ndarray]:
    """Check rates and truncate both traces to the shorter length."""
    if a.sample_rate != b.sample_rate:
        raise RateMismatch(f"sample rates differ: {a.sample_rate} vs {b.sample_rate}")
    n = min(len(a), len(b))
    if n == 0:
        raise EmptyTrace("cannot compare an empty audio trace")
    return a.samples[:n], b.samples[:n]


def audio_features(a: AudioTrace, b: AudioTrace, max_lag: float = MAX_LAG_SECONDS) -> np.ndarray:
    """Audio similarity features of two recordings.

    Returns ``[xcorr, lag, band_dist, freq_diff]``: peak normalized
    cross-correlation within +-``max_lag`` seconds, the lag of that peak
    (positive when ``b`` lags ``a``), the L1 distance between per-band
    relative log-energies over one-third-octave bands 50 Hz - 8 kHz, and
    the absolute difference of the dominant frequencies in Hz.
    """
    xa, xb = align_traces(a, b)
    rate = a.sample_rate
    ea, eb = pre_emphasize(xa), pre_emphasize(xb)
    corr, lag = _xcorr_peak(ea, eb, rate, max_lag)
    band = float(np.abs(band_log_energies(ea, rate) - band_log_energies(eb, rate)).sum())
    fdiff = abs(dominant_frequency(xa, rate) - dominant_frequency(xb, rate))
    return np.array([corr, lag, band, fdiff])


# -- radio ------------------------------------------------------------------


def radio_features(sa: BeaconSet, sb: BeaconSet) -> np.ndarray:
    """``[jaccard, common, rssi_diff, unique_norm, count_diff]`` for two scans.

    Two empty scans count as a perfect match (all zeros).
    """
    if sa.kind != sb.kind:
        raise KindMismatch(f"cannot compare {sa.kind.value} with {sb.kind.value} beacons")
    ia, ib = sa.ids, sb.ids
    union = ia | ib
    common = ia & ib
    na, nb = len(ia), len(ib)
    if not union:
        return np.zeros(len(RADIO_FEATURES))
    jaccard = 1.0 - len(common) / len(union)
    diff = np.mean([abs(sa.beacons[m] - sb.beacons[m]) for m in common]) if common else 0.0
    unique = sum(abs(sa.beacons[m]) for m in ia - ib) + sum(abs(sb.beacons[m]) for m in ib - ia)
    return np.array([jaccard, float(len(common)), float(diff), unique / (na + nb), float(abs(na - nb))])


# -- physical ---------------------------------------------------------------


def physical_features(pa: PhysicalReadings, pb: PhysicalReadings) -> dict[Modality, float]:
    return {m: abs(pa.get(m) - pb.get(m)) for m in PHYSICAL_FEATURE}


# -- assembly ---------------------------------------------------------------


def modality_features(pair: ContextPair, modality: Modality) -> np.ndarray:
    p, v = pair.prover, pair.verifier
    if modality == Modality.AUDIO:
        return audio_features(p.audio, v.audio)
    if modality.is_radio:
        return radio_features(p.radio(modality), v.radio(modality))
    return np.array([abs(p.physical.get(modality) - v.physical.get(modality))])


def assemble(pair: ContextPair, modalities: Iterable[Modality], schema: FeatureSchema | None = None) -> FeatureVector:
    """Concatenate the feature groups of ``modalities`` in schema order."""
    mods = set(modalities)
    if schema is None:
        schema = FeatureSchema.for_modalities(mods)
    elif set(schema.modalities) != mods:
        raise SchemaMismatch(
            f"schema covers {[m.value for m in schema.modalities]}, requested {[m.value for m in sorted_modalities(mods)]}"
        )
    values = np.concatenate([modality_features(pair, m) for m in schema.modalities])
    return FeatureVector(values, schema)


def feature_matrix(pairs: Sequence[ContextPair], schema: FeatureSchema) -> np.ndarray:
    """Stack :func:`assemble` over many pairs into an (n, d) array."""
    out = np.empty((len(pairs), len(schema)))
    for i, pair in enumerate(pairs):
        out[i] = assemble(pair, schema.modalities, schema).values
    return out


def labels_of(pairs: Sequence[ContextPair]) -> np.ndarray:
    """1 for co-present, 0 for non-co-present."""
    return np.array([1 if p.co_present else 0 for p in pairs], dtype=np.int64)


FULL_SCHEMA = FeatureSchema.for_modalities(MODALITY_ORDER)
