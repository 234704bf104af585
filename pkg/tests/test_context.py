import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from copresence.context import (
    CO_PRESENT,
    NON_CO_PRESENT,
    AudioTrace,
    BeaconSet,
    ContextPair,
    InvalidSample,
    Modality,
    PhysicalReadings,
    decode_pair,
    encode_pair,
    format_modalities,
    parse_modalities,
    read_dataset,
    read_wav,
    validate_sample,
    write_dataset,
    write_wav,
)

from conftest import pair, sample, tone


def test_seven_modalities_in_canonical_order():
    assert [m.value for m in Modality] == ["Au", "B", "W", "Al", "G", "H", "T"]


def test_parse_and_format_modalities():
    mods = parse_modalities("{W, Au,B}")
    assert mods == {Modality.AUDIO, Modality.BLUETOOTH, Modality.WIFI}
    assert format_modalities(mods) == "{Au,B,W}"
    assert parse_modalities("") == frozenset()
    with pytest.raises(ValueError):
        parse_modalities("Au,X")


def test_valid_sample_accepted():
    s = sample(wifi={"ap1": -39}, h=55.0)
    assert validate_sample(s) is s


def test_empty_beacon_sets_accepted():
    validate_sample(sample(wifi={}, bt={}))


@pytest.mark.parametrize("kwargs", [
    dict(wifi={"ap1": 10}),
    dict(bt={"b1": -101}),
    dict(h=100.5),
    dict(h=-1.0),
    dict(g=-0.1),
    dict(t=float("nan")),
])
def test_invalid_samples_rejected(kwargs):
    with pytest.raises(InvalidSample):
        validate_sample(sample(**kwargs))


def test_nan_audio_rejected():
    x = np.zeros(100)
    x[3] = np.nan
    with pytest.raises(InvalidSample):
        validate_sample(sample(audio=AudioTrace(x, 16000)))


def test_unnormalized_audio_rejected():
    with pytest.raises(InvalidSample):
        validate_sample(sample(audio=AudioTrace(np.full(10, 1.5), 16000)))


def test_sensing_window_must_match_protocol():
    with pytest.raises(InvalidSample):
        validate_sample(sample(), sensing_window=5.0)


def test_duplicate_beacon_rejected():
    with pytest.raises(InvalidSample):
        BeaconSet.from_pairs(Modality.WIFI, [("m1", -40), ("m1", -50)])


def test_beacon_kind_must_be_radio():
    with pytest.raises(InvalidSample):
        BeaconSet(Modality.AUDIO, {})


def test_label_must_be_known():
    with pytest.raises(InvalidSample):
        ContextPair(sample(), sample(), "maybe")


def test_audio_duration_and_immutability():
    tr = tone(440.0, seconds=0.5)
    assert len(tr) == 8000 and math.isclose(tr.duration, 0.5)
    with pytest.raises(ValueError):
        tr.samples[0] = 1.0


def test_physical_with_value():
    p = PhysicalReadings(20.0, 40.0, 1.0, 100.0)
    assert p.with_value(Modality.GAS, 7.0).get(Modality.GAS) == 7.0
    assert p.get(Modality.GAS) == 1.0


def test_wav_round_trip(tmp_path):
    tr = AudioTrace(np.round(np.linspace(-0.5, 0.5, 101) * 32768) / 32768, 16000)
    write_wav(tmp_path / "a.wav", tr)
    assert read_wav(tmp_path / "a.wav") == tr


beacon_maps = st.dictionaries(st.text("abcdef0123", min_size=1, max_size=6), st.integers(-100, 0), max_size=6)
finite = dict(allow_nan=False, allow_infinity=False)


@settings(max_examples=60, deadline=None)
@given(wifi=beacon_maps, bt=beacon_maps, t=st.floats(-30, 50, **finite), h=st.floats(0, 100, **finite),
       g=st.floats(0, 100, **finite), al=st.floats(-100, 3000, **finite),
       samples=st.lists(st.floats(-1, 1, **finite), min_size=1, max_size=40),
       label=st.sampled_from([CO_PRESENT, NON_CO_PRESENT]))
def test_encode_decode_round_trip(wifi, bt, t, h, g, al, samples, label):
    s = sample(audio=AudioTrace(samples, 8000), wifi=wifi, bt=bt, t=t, h=h, g=g, al=al)
    p = ContextPair(s, sample(), label, "x1")
    assert decode_pair(encode_pair(p)) == p


def test_dataset_round_trip_inline_and_wav(tmp_path):
    tr = AudioTrace(np.round(np.sin(np.arange(400) / 7.0) * 0.3 * 32768) / 32768, 16000)
    pairs = [pair(sample(audio=tr, wifi={"a": -40}), sample(audio=tr), CO_PRESENT, "p1"),
             pair(sample(audio=tr), sample(audio=tr, bt={"b": -70}), NON_CO_PRESENT, "p2")]
    for mode in ("inline", "wav"):
        path = tmp_path / mode / "d.jsonl"
        path.parent.mkdir()
        write_dataset(path, pairs, audio=mode)
        assert read_dataset(path) == pairs
    assert (tmp_path / "wav" / "d_audio" / "p1_p.wav").exists()
