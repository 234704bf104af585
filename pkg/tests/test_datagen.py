import numpy as np
import pytest

from copresence.context import CO_PRESENT, NON_CO_PRESENT, Modality, read_dataset, validate_pair
from copresence.datagen import (
    GenConfig,
    audio_pair,
    gen_dataset,
    generate_pairs,
    load_profiles,
    preset,
    relay_capture,
    sample_copresent_pair,
    sample_environment,
    sample_noncopresent_pair,
)
from copresence.features import FULL_SCHEMA, assemble, dominant_frequency, radio_features

CFG = GenConfig(n_co=1, n_non=1)


def test_noiseless_copresent_pair_is_identical():
    cfg = GenConfig(n_co=1, n_non=1, noise_scale=0.0)
    for seed in range(5):
        p = sample_copresent_pair("office", seed, cfg)
        assert p.prover == p.verifier
        v = assemble(p, set(Modality)).as_dict()
        assert v["au_xcorr"] == pytest.approx(1.0)
        # counts of common beacons are similarities; everything else is a distance
        assert all(x == 0.0 for k, x in v.items() if k not in ("au_xcorr", "b_common", "w_common"))


def test_office_wifi_sets_mostly_shared():
    # generator self-check over a frozen seed range
    hits = 0
    for i in range(1000):
        p = sample_copresent_pair("office", [9, i], CFG)
        hits += radio_features(p.prover.wifi, p.verifier.wifi)[0] <= 0.2
    assert hits / 1000 >= 0.95


def test_hardware_variance_gives_multimodal_altitude_distance():
    d = np.array([abs(sample_copresent_pair("home", [3, i], CFG).prover.physical.altitude
                      - sample_copresent_pair("home", [3, i], CFG).verifier.physical.altitude)
                  for i in range(300)])
    near, far = np.mean(np.abs(d - 3.2) < 2.0), np.mean(np.abs(d - 13.54) < 2.0)
    between = np.mean((d > 6.5) & (d < 10.0))
    assert near > 0.3 and far > 0.3 and between < 0.05


def test_office_and_parking_lot_share_no_beacons():
    for seed in range(20):
        p = sample_noncopresent_pair("office", "parking-lot", seed, CFG)
        assert radio_features(p.prover.wifi, p.verifier.wifi)[0] == 1.0
        assert not p.prover.bluetooth.ids & p.verifier.bluetooth.ids


def test_parking_lot_has_few_access_points():
    doc = load_profiles()
    prof = CFG.profile("parking-lot")
    rng = np.random.default_rng(0)
    assert all(len(sample_environment(rng, prof, doc).wifi) < 5 for _ in range(200))


def test_gas_baselines():
    doc = load_profiles()
    rng = np.random.default_rng(1)
    office = [sample_environment(rng, CFG.profile("office"), doc).physical[Modality.GAS] for _ in range(300)]
    lot = [sample_environment(rng, CFG.profile("parking-lot"), doc).physical[Modality.GAS] for _ in range(300)]
    assert 0.0 <= min(office) and max(office) <= 5.0
    assert np.mean(lot) > 10.0


def test_audio_classes_set_dominant_band():
    cfg = GenConfig(n_co=1, n_non=1, noise_scale=0.0)
    for klass, lo, hi in (("low", 0, 100), ("medium", 300, 700), ("high", 5000, 8000)):
        p = audio_pair(4, klass, klass, cfg)
        f = dominant_frequency(p.prover.audio.samples, p.prover.audio.sample_rate)
        assert lo <= f < hi, (klass, f)


def test_relay_capture_shares_scene_not_samples():
    pair, leech = relay_capture(11, "medium", "low")
    assert pair.label == NON_CO_PRESENT
    assert len(leech) == len(pair.prover.audio)
    assert not np.array_equal(leech.samples, pair.prover.audio.samples)
    corr = np.corrcoef(leech.samples, pair.prover.audio.samples)[0, 1]
    assert corr > 0.5


def test_benchmark_counts_and_validity(benchmark_pairs):
    labels = [p.label for p in benchmark_pairs]
    assert labels.count(CO_PRESENT) == 335 and labels.count(NON_CO_PRESENT) == 203
    for p in benchmark_pairs:
        validate_pair(p)


def test_copresent_pairs_are_not_trivially_identical(benchmark_pairs):
    # label fidelity: with noise on, co-present distances are not all zero
    co = [p for p in benchmark_pairs if p.label == CO_PRESENT][:50]
    assert all(np.any(assemble(p, set(Modality)).values != 0.0) for p in co)


def test_physical_preset_ratio():
    cfg = preset("physical")
    assert cfg.n_non / cfg.n_co == 18


def test_gen_dataset_lines_and_determinism(tmp_path):
    cfg = preset("benchmark", seed=42)
    a = gen_dataset(cfg, tmp_path / "a" / "pairs.jsonl", audio="inline")
    b = gen_dataset(cfg, tmp_path / "b" / "pairs.jsonl", audio="inline")
    assert len(a.read_text().splitlines()) == 538
    assert a.read_bytes() == b.read_bytes()
    assert [p.pair_id for p in read_dataset(a)][:3] == ["pair-00000", "pair-00001", "pair-00002"]


def test_threads_do_not_change_output():
    cfg = preset("benchmark", seed=3, n_co=15, n_non=15)
    assert generate_pairs(cfg, threads=1) == generate_pairs(cfg, threads=4)


def test_config_validation():
    with pytest.raises(ValueError):
        GenConfig(n_co=0)
    with pytest.raises(ValueError):
        GenConfig(profiles=("moon",))
    with pytest.raises(ValueError):
        preset("lab")
