import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from copresence.context import AudioTrace, BeaconSet, Modality, PhysicalReadings
from copresence.features import (
    BAND_FLOOR,
    FULL_SCHEMA,
    EmptyTrace,
    FeatureSchema,
    KindMismatch,
    RateMismatch,
    SchemaMismatch,
    assemble,
    audio_features,
    dominant_frequency,
    feature_matrix,
    physical_features,
    pre_emphasize,
    radio_features,
    third_octave_bands,
)

from conftest import RATE, pair, sample, tone


def goertzel_power(x, bins):
    """|X_k|^2 for the requested DFT bins by the Goertzel recurrence (no FFT)."""
    w = 2 * np.pi * np.asarray(bins, dtype=float) / len(x)
    coeff = 2 * np.cos(w)
    s1 = np.zeros(len(bins))
    s2 = np.zeros(len(bins))
    for v in x:
        s1, s2 = v + coeff * s1 - s2, s1
    return s1 ** 2 + s2 ** 2 - coeff * s1 * s2


def band_energies_oracle(x, rate):
    n = len(x)
    kmax = n // 2
    bins = np.arange(kmax + 1)
    power = goertzel_power(x, bins)
    freqs = bins * rate / n
    total = power.sum()
    out = []
    for lo, hi in third_octave_bands():
        e = power[(freqs >= lo) & (freqs < hi)].sum()
        out.append(np.log10(e / total + BAND_FLOOR))
    return np.array(out)


def test_identical_traces():
    a = tone(440.0, 0.3, 0.5)
    xcorr, lag, band, fdiff = audio_features(a, a)
    assert xcorr == pytest.approx(1.0) and lag == 0.0
    assert band == 0.0 and fdiff == 0.0


def test_scale_invariant_correlation():
    a = tone(440.0, 0.4, 0.5)
    b = AudioTrace(a.samples / 2, a.sample_rate)
    assert audio_features(a, b)[0] == pytest.approx(1.0)


def test_tones_500_and_5000():
    a, b = tone(500.0), tone(5000.0)
    xcorr, lag, band, fdiff = audio_features(a, b)
    assert fdiff == 4500.0
    ea, eb = pre_emphasize(a.samples), pre_emphasize(b.samples)
    expected = np.abs(band_energies_oracle(ea, RATE) - band_energies_oracle(eb, RATE)).sum()
    assert band == pytest.approx(expected, rel=1e-9, abs=1e-9)


def test_lag_recovered_and_antisymmetric():
    rng = np.random.default_rng(0)
    x = rng.normal(0, 0.1, 9000)
    a = AudioTrace(x[800:], RATE)
    b = AudioTrace(x[:-800], RATE)
    fab, fba = audio_features(a, b), audio_features(b, a)
    assert fab[1] == pytest.approx(0.05) and fba[1] == pytest.approx(-0.05)
    assert fab[0] == pytest.approx(fba[0])


def test_audio_errors():
    with pytest.raises(RateMismatch):
        audio_features(tone(440.0, rate=16000), tone(440.0, rate=8000))
    with pytest.raises(EmptyTrace):
        audio_features(AudioTrace([], RATE), tone(440.0))


def test_unequal_lengths_truncated():
    a, b = tone(440.0, seconds=0.5), tone(440.0, seconds=0.7)
    assert audio_features(a, b)[0] == pytest.approx(1.0)


def test_dominant_frequency_of_sum():
    x = tone(100.0, 0.1).samples + tone(5000.0, 0.5).samples
    assert dominant_frequency(x, RATE) == 5000.0


def test_radio_identity():
    s = BeaconSet(Modality.WIFI, {"m1": -40, "m2": -70})
    f = radio_features(s, s)
    assert f[0] == 0.0 and f[2] == 0.0 and f[1] == 2


def test_radio_worked_example():
    sa = BeaconSet(Modality.WIFI, {"m1": -40})
    sb = BeaconSet(Modality.WIFI, {"m1": -60, "m2": -50})
    jac, common, diff, unique, count = radio_features(sa, sb)
    assert (jac, common, diff) == (0.5, 1.0, 20.0)
    assert unique == pytest.approx(50 / 3) and count == 1.0


def test_radio_both_empty():
    e = BeaconSet(Modality.BLUETOOTH, {})
    assert radio_features(e, e).tolist() == [0.0] * 5


def test_radio_kind_mismatch():
    with pytest.raises(KindMismatch):
        radio_features(BeaconSet(Modality.WIFI, {}), BeaconSet(Modality.BLUETOOTH, {}))


def test_physical_features():
    a = PhysicalReadings(26.0, 40.0, 1.0, 100.0)
    assert set(physical_features(a, a).values()) == {0.0}
    d = physical_features(a, PhysicalReadings(35.0, 40.0, 1.0, 113.54))
    assert d[Modality.TEMPERATURE] == 9.0
    assert d[Modality.ALTITUDE] == pytest.approx(13.54)


def test_assemble_projections():
    p = pair()
    assert assemble(p, {Modality.WIFI}).names == ("w_jaccard", "w_common", "w_rssi_diff", "w_unique_norm",
                                                  "w_count_diff")
    assert assemble(p, {Modality.ALTITUDE, Modality.GAS, Modality.HUMIDITY, Modality.TEMPERATURE}).names == (
        "d_Al", "d_G", "d_H", "d_T")
    full = assemble(p, set(Modality))
    assert len(full.values) == 4 + 2 * 5 + 4
    assert full.names == FULL_SCHEMA.names


def test_assemble_rejects_foreign_schema():
    with pytest.raises(SchemaMismatch):
        assemble(pair(), {Modality.WIFI}, FeatureSchema.for_modalities({Modality.BLUETOOTH}))


def test_schema_json_round_trip():
    s = FeatureSchema.for_modalities({Modality.WIFI, Modality.AUDIO})
    assert FeatureSchema.from_json(s.to_json()) == s
    bad = dict(s.to_json(), schema_id="000000000000")
    with pytest.raises(SchemaMismatch):
        FeatureSchema.from_json(bad)


def test_assemble_is_pure(small_pairs):
    a = feature_matrix(small_pairs[:10], FULL_SCHEMA)
    b = feature_matrix(small_pairs[:10], FULL_SCHEMA)
    assert a.tobytes() == b.tobytes()


beacons = st.dictionaries(st.sampled_from([f"m{i}" for i in range(8)]), st.integers(-100, 0), max_size=8)


@settings(max_examples=100, deadline=None)
@given(a=beacons, b=beacons)
def test_radio_symmetry_and_range(a, b):
    sa, sb = BeaconSet(Modality.WIFI, a), BeaconSet(Modality.WIFI, b)
    fab, fba = radio_features(sa, sb), radio_features(sb, sa)
    assert np.array_equal(fab, fba)
    assert 0.0 <= fab[0] <= 1.0


phys = st.floats(-50, 150, allow_nan=False)


@settings(max_examples=100, deadline=None)
@given(a=st.tuples(phys, phys, phys, phys), b=st.tuples(phys, phys, phys, phys))
def test_physical_symmetry_and_sign(a, b):
    pa, pb = PhysicalReadings(*a), PhysicalReadings(*b)
    assert physical_features(pa, pb) == physical_features(pb, pa)
    assert all(v >= 0 for v in physical_features(pa, pb).values())


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), shift=st.integers(-1500, 1500))
def test_audio_xcorr_symmetric_lag_antisymmetric(seed, shift):
    x = np.random.default_rng(seed).normal(0, 0.2, 6000)
    a = AudioTrace(x[2000:5000], RATE)
    b = AudioTrace(x[2000 + shift:5000 + shift], RATE)
    fab, fba = audio_features(a, b), audio_features(b, a)
    assert fab[0] == pytest.approx(fba[0], abs=1e-9)
    assert fab[1] == pytest.approx(-fba[1], abs=1e-12)
    assert fab[2] == pytest.approx(fba[2]) and fab[3] == fba[3]
