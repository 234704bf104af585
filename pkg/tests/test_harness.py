import math

import numpy as np
import pytest

from copresence.attack import AttackSpec, InfeasibleAttack
from copresence.context import CO_PRESENT, Modality
from copresence.datagen import generate_pairs, preset
from copresence.fusion import DECISIONS_SINGLE, DECISIONS_SUBSETS, FEATURES
from copresence.harness import (
    CHANNELS,
    AttackerConfig,
    EvalReport,
    ExperimentPlan,
    InvalidPlan,
    RelayGridPlan,
    SimulationPlan,
    audio_model,
    audio_radio_attacks,
    run_audio_relay_grid,
    run_matrix,
    session_pool,
    simulate,
    train_session_model,
)

from conftest import tone


def matrix_plan(**kw):
    base = dict(system="audio-radio", fusions=(FEATURES, DECISIONS_SUBSETS), classifiers=("dt",),
                attacks=audio_radio_attacks(), folds=5, seed=3)
    return ExperimentPlan(**{**base, **kw})


@pytest.fixture(scope="module")
def report(small_pairs):
    return run_matrix(matrix_plan(), small_pairs)


def test_report_has_one_row_per_cell(report, small_pairs):
    assert len(report.rows) == 2 * 8
    assert {r.attack for r in report.rows} == {a.name for a in audio_radio_attacks()}
    for r in report.rows:
        # each pair is predicted exactly once per cell
        assert r.metrics.tp + r.metrics.fp + r.metrics.tn + r.metrics.fn == len(small_pairs)
    assert report.fingerprint["rounds"] == 1 and report.fingerprint["pairs"] == len(small_pairs)


def test_eight_attack_rows_for_one_column(small_pairs):
    rep = run_matrix(matrix_plan(fusions=(FEATURES,)), small_pairs)
    assert [r.attack for r in rep.rows] == [a.name for a in audio_radio_attacks()]


def test_attacks_leave_co_present_counts_alone(report):
    for f in ("Fuse-F", "Fuse-D-M"):
        clean = report.cell(f, "", "dt")
        for a in audio_radio_attacks():
            m = report.cell(f, a, "dt")
            assert (m.tp, m.fn) == (clean.tp, clean.fn)


def test_csv_round_trip_and_thread_determinism(report, small_pairs):
    again = run_matrix(matrix_plan(threads=4), small_pairs)
    assert again.to_csv() == report.to_csv()
    assert EvalReport.from_csv(report.to_csv()).to_csv() == report.to_csv()


def test_render_groups(report):
    table = report.render_table()
    lines = table.splitlines()
    assert lines[0].split()[:3] == ["attack", "Fuse-F/DT", "Fuse-D-M/DT"]
    assert [line for line in lines if line.startswith("--")] == [
        "-- zero-modality", "-- single-modality", "-- multi-modality"]
    assert "FNR" in lines[2]


def test_monotonicity_check_detects_drops():
    text = ("system,fusion,attack,classifier,tp,fp,tn,fn,fpr,fnr,f1\n"
            "s,Fuse-F,,dt,9,1,9,1,,,\n"
            "s,Fuse-F,{W},dt,9,0,10,1,,,\n")
    rep = EvalReport.from_csv(text)
    assert rep.monotonicity_violations(Modality.WIFI) == [("Fuse-F", "dt", "", "{W}")]
    assert rep.monotonicity_violations(Modality.AUDIO) == []


def test_write_is_atomic(tmp_path, report):
    report.write(tmp_path / "r.csv", tmp_path / "r.txt")
    assert (tmp_path / "r.csv").read_text() == report.to_csv()
    assert not list(tmp_path.glob("*.tmp"))


def test_undersampling_runs_19_rounds():
    pairs = generate_pairs(preset("physical", seed=1, n_co=20, n_non=360))
    plan = ExperimentPlan(system="physical", fusions=(DECISIONS_SINGLE,), undersample=True, folds=5,
                          attacks=[AttackSpec()], seed=1)
    rep = run_matrix(plan, pairs)
    m = rep.rows[0].metrics
    assert rep.fingerprint["rounds"] == 19
    # every non-co-present pair is tested in 10 rounds, every co-present pair in all 19
    assert m.fp + m.tn == 10 * 360 and m.tp + m.fn == 19 * 20


@pytest.mark.parametrize("kw,err", [
    (dict(system="radio-only"), InvalidPlan),
    (dict(fusions=("stacking",)), InvalidPlan),
    (dict(classifiers=("svm",)), InvalidPlan),
    (dict(folds=1), InvalidPlan),
    (dict(attacks=[]), InvalidPlan),
    (dict(attacks=["W", "W"]), InvalidPlan),
    (dict(attacks=["G"]), InvalidPlan),
    (dict(system="audio-radio-physical", attacks=["Au,Al"]), InfeasibleAttack),
])
def test_plan_validation(kw, err):
    with pytest.raises(err):
        matrix_plan(**kw).validate()


def test_force_allows_hypothetical_attack():
    matrix_plan(system="audio-radio-physical", attacks=["Au,Al"], force=True).validate()


def test_channel_presets_band_limit():
    rng = np.random.default_rng(0)
    lossy = CHANNELS["lossy"]
    out = lossy.apply(tone(6000.0, 0.5), rng)
    assert np.std(out.samples) < 0.05
    assert lossy.response(np.array([1000.0]))[0] > 0.5
    assert CHANNELS["clean"].response(np.array([6000.0]))[0] > lossy.response(np.array([6000.0]))[0]


def test_relay_grid_shape_and_determinism(small_pairs):
    model = audio_model(small_pairs, "dt")
    plan = RelayGridPlan(trials=3, channels=("clean",))
    a = run_audio_relay_grid(plan, model=model)
    b = run_audio_relay_grid(RelayGridPlan(trials=3, channels=("clean",), threads=3), model=model)
    assert len(a.accepted) == 9 and a.to_csv() == b.to_csv()
    assert all(0.0 <= a.rate("clean", p, v) <= 1.0 for (_, p, v) in a.accepted)
    assert len(a.render_table().splitlines()) == 10
    with pytest.raises(InvalidPlan):
        run_audio_relay_grid(RelayGridPlan(channels=("carrier-pigeon",)), model=model)


@pytest.fixture(scope="module")
def session_setup(small_pairs):
    plan = SimulationPlan(seed=3, pool_co=60, pool_non=60)
    return plan, train_session_model(plan, small_pairs), session_pool(plan)


def within_binomial(k, n, p, sigmas=3.0):
    sd = math.sqrt(max(n * p * (1 - p), 0.25))
    return abs(k - n * p) <= sigmas * sd + 1


def test_benign_sessions_match_model_fnr(session_setup):
    plan, model, pool = session_setup
    plan = SimulationPlan(seed=3, benign_fraction=1.0)
    s = simulate(200, plan=plan, model=model, pool=pool)
    assert s.benign == 200 and s.relay == 0
    assert within_binomial(s.benign_accepted, 200, 1 - s.pool_fnr)


def test_relay_sessions_match_model_fpr(session_setup):
    _, model, pool = session_setup
    s = simulate(200, plan=SimulationPlan(seed=3, benign_fraction=0.0), model=model, pool=pool)
    assert s.relay == 200
    assert within_binomial(s.relay_accepted, 200, s.pool_fpr)


def test_full_manipulation_relay_is_accepted(session_setup):
    _, model, pool = session_setup
    attacker = AttackerConfig(spec=AttackSpec.parse("Au,B,W"))
    s = simulate(60, attacker, SimulationPlan(seed=3, benign_fraction=0.0), model=model, pool=pool)
    assert s.relay_acceptance >= 0.9


def test_tampering_modes_never_accepted(session_setup):
    _, model, pool = session_setup
    attacker = AttackerConfig(modes={"forge": 1, "bitflip": 1, "wrong-key": 1, "replay": 1, "drop": 1},
                              spec=AttackSpec.parse("Au,B,W"))
    plan = SimulationPlan(seed=3, benign_fraction=0.0, keep_transcripts=True)
    s = simulate(150, attacker, plan, model=model, pool=pool)
    assert s.relay_accepted == 0 and s.invalid_mac_accepted == 0
    assert set(s.by_mode) == {"forge", "bitflip", "wrong-key", "replay", "drop"}
    assert s.reasons["timeout"] == s.by_mode["drop"][1]
    assert len(s.transcripts) == 150


def test_simulation_validation(session_setup):
    _, model, pool = session_setup
    with pytest.raises(InvalidPlan):
        simulate(1, AttackerConfig(modes={"teleport": 1.0}), model=model, pool=pool)
    with pytest.raises(InvalidPlan):
        simulate(1, AttackerConfig(modes={"relay": 0.0}), model=model, pool=pool)
    with pytest.raises(InfeasibleAttack):
        simulate(1, AttackerConfig(spec=AttackSpec.parse("Al,T")), model=model, pool=pool)
    with pytest.raises(InvalidPlan):
        simulate(1, plan=SimulationPlan(benign_fraction=1.5), model=model, pool=pool)
    with pytest.raises(InvalidPlan):
        simulate(1, model=model, pool=[p for p in pool if p.label == CO_PRESENT])
