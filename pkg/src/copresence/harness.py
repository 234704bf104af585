"""Experiment runner: attack matrices, audio relay grids and protocol simulation.

``run_matrix`` trains every fusion/classifier combination on clean folds,
replaces each test fold's non-co-present pairs by their attacked versions
and sums the confusion counts.  ``run_audio_relay_grid`` measures how often
a relayed audio stream makes an audio-only detector accept, per
(prover class, verifier class) and channel preset.  ``simulate`` runs
whole protocol sessions, benign and adversarial, against a trained model.
"""
from __future__ import annotations

import copy
import csv
import hashlib
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .attack import (
    AttackSpec,
    InfeasibleAttack,
    apply_attack,
    attack_pair,
    check_feasible,
    manipulate_audio,
)
from .context import (
    ALL_MODALITIES,
    NON_CO_PRESENT,
    PHYSICAL,
    AudioTrace,
    ContextPair,
    Modality,
    format_modalities,
    parse_modalities,
    read_dataset,
    sorted_modalities,
)
from .datagen import AUDIO_CLASSES, GenConfig, generate_pairs, load_profiles, preset, relay_capture
from .features import FeatureSchema, feature_matrix, labels_of
from .fusion import FEATURES, FUSION_KINDS, FUSION_LABEL, FusionStrategy, fit_fused
from .learn import CLASSIFIERS, Metrics, stratified_kfold, train_tree, undersample_rounds

SYSTEMS = {
    "audio-only": frozenset({Modality.AUDIO}),
    "audio-radio": frozenset({Modality.AUDIO, Modality.BLUETOOTH, Modality.WIFI}),
    "physical": PHYSICAL,
    "audio-radio-physical": ALL_MODALITIES,
}

CSV_COLUMNS = ("system", "fusion", "attack", "classifier", "tp", "fp", "tn", "fn", "fpr", "fnr", "f1")


class InvalidPlan(ValueError):
    pass


def _derive_seed(*parts: int) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def audio_radio_attacks() -> list[AttackSpec]:
    """Every subset of {Au, B, W}, zero-modality first."""
    names = ["", "Au", "B", "W", "Au,B", "B,W", "Au,W", "Au,B,W"]
    return [AttackSpec.parse(n) for n in names]


@dataclass
class ExperimentPlan:
    """What to evaluate.  ``dataset=None`` generates the benchmark preset."""

    system: str = "audio-radio"
    fusions: tuple = (FEATURES,)
    classifiers: tuple = ("dt",)
    attacks: list = field(default_factory=lambda: [AttackSpec()])
    folds: int = 10
    undersample: bool = False
    n_subsets: int = 19
    per_round: int = 10
    seed: int = 42
    dataset: str | Path | None = None
    generator: str = "benchmark"
    force: bool = False
    threads: int = 1
    params: object = None

    def __post_init__(self):
        if isinstance(self.fusions, str):
            self.fusions = (self.fusions,)
        if isinstance(self.classifiers, str):
            self.classifiers = (self.classifiers,)
        self.fusions = tuple(self.fusions)
        self.classifiers = tuple(self.classifiers)
        self.attacks = [a if isinstance(a, AttackSpec) else AttackSpec.parse(a) for a in self.attacks]

    @property
    def modalities(self) -> frozenset:
        return SYSTEMS[self.system]

    def validate(self) -> None:
        """Raise :class:`InvalidPlan` or :class:`InfeasibleAttack`."""
        if self.system not in SYSTEMS:
            raise InvalidPlan(f"unknown system {self.system!r}; expected one of {tuple(SYSTEMS)}")
        for f in self.fusions:
            if f not in FUSION_KINDS:
                raise InvalidPlan(f"unknown fusion {f!r}; expected one of {FUSION_KINDS}")
        for c in self.classifiers:
            if c not in CLASSIFIERS:
                raise InvalidPlan(f"unknown classifier {c!r}; expected one of {CLASSIFIERS}")
        if self.folds < 2:
            raise InvalidPlan("at least 2 folds are needed")
        if not self.attacks:
            raise InvalidPlan("the plan has no attack specs")
        names = [a.name for a in self.attacks]
        if len(set(names)) != len(names):
            raise InvalidPlan("duplicate attack specs")
        for a in self.attacks:
            extra = a.manipulated - self.modalities
            if extra:
                raise InvalidPlan(f"attack {a.name} manipulates {format_modalities(extra)}, "
                                  f"which the {self.system} system does not sense")
            if not self.force and not check_feasible(a)[0]:
                raise InfeasibleAttack(f"no demonstrated attack manipulates {a.name} jointly; use force")
        for f in self.fusions:
            try:
                FusionStrategy(f).units(self.modalities)
            except ValueError as e:
                raise InvalidPlan(str(e)) from None

    def load_pairs(self) -> list[ContextPair]:
        if self.dataset is not None:
            return read_dataset(self.dataset)
        return generate_pairs(preset(self.generator, seed=self.seed), threads=self.threads)


# -- report -----------------------------------------------------------------


@dataclass(frozen=True)
class EvalRow:
    system: str
    fusion: str
    attack: str
    classifier: str
    metrics: Metrics

    def as_csv(self) -> list[str]:
        m = self.metrics
        return [self.system, self.fusion, self.attack, self.classifier,
                str(m.tp), str(m.fp), str(m.tn), str(m.fn),
                _fmt(m.fpr), _fmt(m.fnr), _fmt(m.f1)]


def _fmt(x: float | None) -> str:
    return "" if x is None else f"{x:.6f}"


def _pct(x: float | None) -> str:
    return "n/a" if x is None else f"{100 * x:.1f}%"


@dataclass
class EvalReport:
    rows: list[EvalRow] = field(default_factory=list)
    fingerprint: dict = field(default_factory=dict)

    def cell(self, fusion: str, attack, classifier: str) -> Metrics:
        name = attack.name if isinstance(attack, AttackSpec) else format_modalities(parse_modalities(attack))
        for r in self.rows:
            if r.fusion == fusion and r.attack == name and r.classifier == classifier:
                return r.metrics
        raise KeyError((fusion, name, classifier))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow(r.as_csv())
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "EvalReport":
        rows = []
        for d in csv.DictReader(io.StringIO(text)):
            m = Metrics(int(d["tp"]), int(d["fp"]), int(d["tn"]), int(d["fn"]))
            rows.append(EvalRow(d["system"], d["fusion"], d["attack"], d["classifier"], m))
        return cls(rows)

    def render_table(self) -> str:
        """Attack rows grouped by the number of manipulated modalities.

        The zero-modality row carries FNR and F1 as well; attacked rows show
        FPR, the attacker's success rate.
        """
        columns = list(dict.fromkeys((r.fusion, r.classifier) for r in self.rows))
        attacks = list(dict.fromkeys(r.attack for r in self.rows))
        lookup = {(r.fusion, r.classifier, r.attack): r.metrics for r in self.rows}
        header = ["attack"] + [f"{FUSION_LABEL.get(f, f)}/{c.upper()}" for f, c in columns]
        body = []
        groups = [("zero-modality", 0), ("single-modality", 1), ("multi-modality", 2)]
        for title, size in groups:
            members = [a for a in attacks if min(len(parse_modalities(a)), 2) == size]
            if not members:
                continue
            body.append([f"-- {title}"])
            for a in members:
                cells = []
                for f, c in columns:
                    m = lookup.get((f, c, a))
                    if m is None:
                        cells.append("")
                    elif size == 0:
                        f1 = "n/a" if m.f1 is None else f"{m.f1:.3f}"
                        cells.append(f"{_pct(m.fpr)} (FNR {_pct(m.fnr)}) (F1 {f1})")
                    else:
                        cells.append(_pct(m.fpr))
                body.append([a] + cells)
        widths = [max(len(r[i]) for r in [header] + body if len(r) > i) for i in range(len(header))]
        lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
        for r in body:
            if len(r) == 1:
                lines.append(r[0])
            else:
                lines.append("  ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip())
        return "\n".join(lines) + "\n"

    def monotonicity_violations(self, modality: Modality) -> list[tuple[str, str, str, str]]:
        """(fusion, classifier, attack, attack + modality) cells where adding ``modality`` lowered FPR."""
        out = []
        lookup = {(r.fusion, r.classifier, r.attack): r.metrics for r in self.rows}
        for (f, c, a), m in lookup.items():
            mods = parse_modalities(a)
            if modality in mods:
                continue
            bigger = format_modalities(mods | {modality})
            m2 = lookup.get((f, c, bigger))
            if m2 is not None and m.fpr is not None and m2.fpr is not None and m2.fpr < m.fpr:
                out.append((f, c, a, bigger))
        return out

    def write(self, csv_path, table_path=None) -> None:
        """Write the CSV (and optionally the text table); nothing is written on failure."""
        text = self.to_csv()
        table = self.render_table() if table_path else None
        _atomic_write(Path(csv_path), text)
        if table_path:
            _atomic_write(Path(table_path), table)


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)


def dataset_digest(pairs: Sequence[ContextPair]) -> str:
    """Content hash of the labels and clean full feature matrix (order-sensitive)."""
    h = hashlib.sha256()
    for p in pairs:
        h.update(f"{p.pair_id}\t{p.label}\n".encode())
    return h.hexdigest()[:16]


# -- attack matrix ----------------------------------------------------------


def dominant_modality(X: np.ndarray, y: np.ndarray, schema: FeatureSchema) -> Modality:
    """Modality of the root split of a tree trained on the whole matrix."""
    tree = train_tree(X, y)
    if tree.root.feature < 0:
        raise ValueError("the data admit no impurity-reducing split")
    return schema.modality_of[schema.names[tree.root.feature]]


def attacked_matrix(pairs: Sequence[ContextPair], X: np.ndarray, schema: FeatureSchema,
                    spec: AttackSpec) -> np.ndarray:
    """Copy of ``X`` whose non-co-present rows hold the features of the attacked pairs.

    Only the columns of manipulated modalities are recomputed.
    """
    out = X.copy()
    mods = spec.manipulated
    if not mods:
        return out
    cols = schema.columns(mods)
    sub = FeatureSchema.for_modalities(mods)
    idx = [i for i, p in enumerate(pairs) if p.label == NON_CO_PRESENT]
    if idx:
        attacked = [attack_pair(pairs[i], spec) for i in idx]
        out[np.ix_(idx, cols)] = feature_matrix(attacked, sub)
    return out


def _cv_task(X, y, schema, mods, train, test, attacked, fusions, classifiers, params, seed):
    """Confusion counts for one train/test split: {(fusion, clf, attack): Metrics}."""
    out = {}
    for f in fusions:
        strategy = FusionStrategy(f)
        for c in classifiers:
            model = fit_fused(X[train], y[train], schema, mods, strategy, c, params, seed=seed)
            for name, Xa in attacked:
                pred = model.predict_matrix(Xa[test], schema)
                t = y[test]
                out[(f, c, name)] = Metrics(
                    tp=int(np.sum((pred == 1) & (t == 1))), fp=int(np.sum((pred == 1) & (t == 0))),
                    tn=int(np.sum((pred == 0) & (t == 0))), fn=int(np.sum((pred == 0) & (t == 1))))
    return out


def run_matrix(plan: ExperimentPlan, pairs: Sequence[ContextPair] | None = None) -> EvalReport:
    """Cross-validated confusion counts for every (fusion, classifier, attack) cell."""
    plan.validate()
    if pairs is None:
        pairs = plan.load_pairs()
    pairs = list(pairs)
    mods = plan.modalities
    schema = FeatureSchema.for_modalities(mods)
    X = feature_matrix(pairs, schema)
    y = labels_of(pairs)
    attacked = [(a.name, attacked_matrix(pairs, X, schema, a)) for a in plan.attacks]

    # each round is a list of row indices into pairs; plain CV is a single round
    if plan.undersample:
        non = [i for i, p in enumerate(pairs) if p.label == NON_CO_PRESENT]
        co = [i for i, p in enumerate(pairs) if p.label != NON_CO_PRESENT]
        rounds = [np.asarray(sorted(r), dtype=np.int64)
                  for r in undersample_rounds(non, co, plan.n_subsets, plan.per_round, seed=plan.seed)]
    else:
        rounds = [np.arange(len(pairs))]

    tasks = []
    for r, rows in enumerate(rounds):
        fold_plan = stratified_kfold(y[rows], k=plan.folds, seed=_derive_seed(plan.seed, r))
        for i in range(fold_plan.k):
            tr, te = fold_plan.train_test(i)
            tasks.append((rows[tr], rows[te], _derive_seed(plan.seed, r, i)))

    def work(t):
        train, test, seed = t
        return _cv_task(X, y, schema, mods, train, test, attacked, plan.fusions,
                        plan.classifiers, plan.params, seed)

    if plan.threads > 1:
        with ThreadPoolExecutor(plan.threads) as ex:
            results = list(ex.map(work, tasks))
    else:
        results = [work(t) for t in tasks]

    report = EvalReport(fingerprint={
        "package": __version__, "numpy": np.__version__, "seed": plan.seed, "system": plan.system,
        "folds": plan.folds, "rounds": len(rounds), "pairs": len(pairs),
        "dataset": dataset_digest(pairs), "schema": schema.schema_id,
    })
    for f in plan.fusions:
        for c in plan.classifiers:
            for a in plan.attacks:
                total = Metrics(0, 0, 0, 0)
                for res in results:
                    total = total + res[(f, c, a.name)]
                report.rows.append(EvalRow(plan.system, FUSION_LABEL[f], a.name, c, total))
    return report


# -- audio relay grid -------------------------------------------------------


@dataclass(frozen=True)
class ChannelPreset:
    """Degradation of the relayed audio stream.

    The stream is band-limited to ``band``, rolled off above
    ``rolloff_hz`` (Butterworth-shaped magnitude of order
    ``rolloff_order``, standing in for codec and loudspeaker response),
    delayed by a latency drawn from ``latency`` seconds (the first samples
    of the verifier's window then carry no relayed sound), scaled by a gain
    drawn from ``gain`` and given white noise of standard deviation
    ``noise``.
    """

    name: str
    band: tuple[float, float]
    latency: tuple[float, float]
    rolloff_hz: float | None = None
    rolloff_order: int = 2
    gain: tuple[float, float] = (0.8, 1.0)
    noise: float = 0.002

    def response(self, freqs: np.ndarray) -> np.ndarray:
        h = ((freqs >= self.band[0]) & (freqs <= self.band[1])).astype(float)
        if self.rolloff_hz is not None:
            h /= np.sqrt(1.0 + (freqs / self.rolloff_hz) ** (2 * self.rolloff_order))
        return h

    def apply(self, trace: AudioTrace, rng: np.random.Generator) -> AudioTrace:
        x = trace.samples
        n, rate = len(x), trace.sample_rate
        y = np.fft.irfft(np.fft.rfft(x) * self.response(np.fft.rfftfreq(n, 1.0 / rate)), n)
        d = min(n, int(round(rng.uniform(*self.latency) * rate)))
        y = np.concatenate([np.zeros(d), y[:n - d]])
        y = rng.uniform(*self.gain) * y + rng.normal(0.0, self.noise, n)
        return AudioTrace(np.clip(y, -1.0, 1.0), rate)


CHANNELS = {
    # wideband voice call over WiFi
    "clean": ChannelPreset("clean", band=(200.0, 7500.0), latency=(0.02, 0.06), rolloff_hz=3500.0),
    # narrowband telephony over a cellular link
    "lossy": ChannelPreset("lossy", band=(300.0, 3400.0), latency=(0.10, 0.25), rolloff_hz=3500.0,
                           gain=(0.5, 0.9), noise=0.01),
}

DEFAULT_PROBE_HZ = 7000.0
DEFAULT_PROBE_AMPLITUDE = 0.1


@dataclass
class RelayGridPlan:
    trials: int = 50
    channels: tuple = ("clean", "lossy")
    classifier: str = "dt"
    seed: int = 42
    profile: str = "office"
    probe: bool = False
    probe_hz: float = DEFAULT_PROBE_HZ
    probe_amplitude: float = DEFAULT_PROBE_AMPLITUDE
    threads: int = 1


@dataclass
class RelayGrid:
    """Acceptance counts keyed by (channel, prover class, verifier class)."""

    accepted: dict
    trials: int
    probe: bool = False

    def rate(self, channel: str, p_class: str, v_class: str) -> float:
        return self.accepted[(channel, p_class, v_class)] / self.trials

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["channel", "prover", "verifier", "trials", "accepted", "rate"])
        for (ch, p, v), k in self.accepted.items():
            w.writerow([ch, p, v, self.trials, k, f"{k / self.trials:.6f}"])
        return buf.getvalue()

    def render_table(self) -> str:
        channels = list(dict.fromkeys(k[0] for k in self.accepted))
        lines = ["prover -> verifier  " + "  ".join(c.ljust(7) for c in channels)]
        for p in AUDIO_CLASSES:
            for v in AUDIO_CLASSES:
                cells = "  ".join(_pct(self.rate(c, p, v)).ljust(7) for c in channels)
                lines.append(f"{p:>6} -> {v:<8}  {cells}")
        return "\n".join(lines) + "\n"


def streaming_setup(seed: int) -> GenConfig:
    """Generator settings for a controlled streaming experiment.

    Devices lie in the open (never muffled) and the two places share no
    broadcast sound, so each grid cell isolates the two audio classes.
    """
    doc = copy.deepcopy(load_profiles())
    doc["sensor_noise"]["pocket_prob"] = 0.0
    doc["sensor_noise"]["shared_broadcast_prob"] = 0.0
    return GenConfig(seed=seed, document=doc)


def audio_model(pairs: Sequence[ContextPair], classifier: str = "rf", seed: int = 42):
    """An audio-only detector trained on every pair of ``pairs``."""
    schema = FeatureSchema.for_modalities([Modality.AUDIO])
    X, y = feature_matrix(pairs, schema), labels_of(pairs)
    return fit_fused(X, y, schema, schema.modalities, FusionStrategy(FEATURES), classifier, seed=seed)


def relay_trial(seed_parts: Sequence[int], p_class: str, v_class: str, channel: ChannelPreset,
                config: GenConfig, profile: str = "office",
                probe: tuple[float, float] | None = None) -> ContextPair:
    """One relayed non-co-present pair.

    The leech records the prover's surroundings, the stream passes
    ``channel`` and is played next to the verifier, whose own recording
    (optionally with a probe tone) then contains both.
    The scene depends on ``seed_parts`` and the classes only, so different
    channels and probe settings see the same environments.
    """
    from .proto import emit_probe_tone

    pair, leech = relay_capture(list(seed_parts), p_class, v_class, config, profile)
    if probe is not None:
        pair = ContextPair(pair.prover, emit_probe_tone(pair.verifier, *probe), pair.label, pair.pair_id)
    rng = np.random.default_rng([*seed_parts, 1])
    return manipulate_audio(pair, channel=lambda t: channel.apply(t, rng), source=leech)


def run_audio_relay_grid(plan: RelayGridPlan, model=None, pairs: Sequence[ContextPair] | None = None) -> RelayGrid:
    """Fraction of relayed pairs the audio-only detector accepts, per cell."""
    if model is None:
        if pairs is None:
            pairs = generate_pairs(preset("benchmark", seed=plan.seed), threads=plan.threads)
        model = audio_model(pairs, plan.classifier, plan.seed)
    for c in plan.channels:
        if c not in CHANNELS:
            raise InvalidPlan(f"unknown channel {c!r}; expected one of {tuple(CHANNELS)}")
    if plan.trials < 1:
        raise InvalidPlan("trials must be positive")
    config = streaming_setup(plan.seed)
    schema = FeatureSchema.for_modalities([Modality.AUDIO])
    probe = (plan.probe_hz, plan.probe_amplitude) if plan.probe else None
    cells = [(ch, pi, p, vi, v) for ch in plan.channels
             for pi, p in enumerate(AUDIO_CLASSES) for vi, v in enumerate(AUDIO_CLASSES)]

    def work(cell):
        ch, pi, p, vi, v = cell
        relayed = [relay_trial((plan.seed, pi, vi, t), p, v, CHANNELS[ch], config, plan.profile, probe)
                   for t in range(plan.trials)]
        return int(model.predict_matrix(feature_matrix(relayed, schema), schema).sum())

    if plan.threads > 1:
        with ThreadPoolExecutor(plan.threads) as ex:
            counts = list(ex.map(work, cells))
    else:
        counts = [work(c) for c in cells]
    accepted = {(ch, p, v): k for (ch, _, p, _, v), k in zip(cells, counts)}
    return RelayGrid(accepted, plan.trials, plan.probe)


# -- protocol simulation ----------------------------------------------------


@dataclass
class AttackerConfig:
    """How adversarial sessions behave.

    ``modes`` weights the attacker behaviours of :mod:`copresence.proto`;
    ``spec`` is the context manipulation applied in every adversarial
    session and ``channel`` names a :data:`CHANNELS` preset for relayed
    audio.
    """

    modes: dict = field(default_factory=lambda: {"relay": 1.0})
    spec: AttackSpec = field(default_factory=AttackSpec)
    channel: str | None = None
    force: bool = False

    def __post_init__(self):
        if not isinstance(self.spec, AttackSpec):
            self.spec = AttackSpec.parse(self.spec)

    def validate(self) -> None:
        from .proto import ATTACK_MODES

        if not self.modes or any(w < 0 for w in self.modes.values()) or sum(self.modes.values()) <= 0:
            raise InvalidPlan("attacker modes need non-negative weights with a positive sum")
        unknown = set(self.modes) - set(ATTACK_MODES)
        if unknown:
            raise InvalidPlan(f"unknown attacker modes {sorted(unknown)}; expected {ATTACK_MODES}")
        if self.channel is not None and self.channel not in CHANNELS:
            raise InvalidPlan(f"unknown channel {self.channel!r}; expected one of {tuple(CHANNELS)}")
        if not self.force and not check_feasible(self.spec)[0]:
            raise InfeasibleAttack(f"no demonstrated attack manipulates {self.spec.name} jointly; use force")


@dataclass
class SimulationPlan:
    """Model and session pool for :func:`simulate`.

    The model is trained on the ``generator`` preset at ``seed``; sessions
    draw their contexts from a separately seeded pool of ``pool_co``
    co-present and ``pool_non`` non-co-present pairs it has never seen.
    """

    system: str = "audio-radio"
    fusion: str = FEATURES
    classifier: str = "dt"
    seed: int = 42
    generator: str = "benchmark"
    benign_fraction: float = 0.5
    pool_co: int = 200
    pool_non: int = 200
    probe: bool = False
    probe_hz: float = DEFAULT_PROBE_HZ
    probe_amplitude: float = DEFAULT_PROBE_AMPLITUDE
    keep_transcripts: bool = False
    threads: int = 1

    def validate(self) -> None:
        if self.system not in SYSTEMS:
            raise InvalidPlan(f"unknown system {self.system!r}; expected one of {tuple(SYSTEMS)}")
        if self.fusion not in FUSION_KINDS:
            raise InvalidPlan(f"unknown fusion {self.fusion!r}; expected one of {FUSION_KINDS}")
        if self.classifier not in CLASSIFIERS:
            raise InvalidPlan(f"unknown classifier {self.classifier!r}; expected one of {CLASSIFIERS}")
        if not 0.0 <= self.benign_fraction <= 1.0:
            raise InvalidPlan("benign_fraction must lie in [0, 1]")


@dataclass
class SessionStats:
    """Session outcomes split by benign and adversarial sessions.

    ``pool_fnr`` and ``pool_fpr`` are the model's error rates on the whole
    session pool, i.e. the acceptance rates the sessions should reproduce
    up to sampling noise.
    """

    benign_accepted: int = 0
    benign_rejected: int = 0
    relay_accepted: int = 0
    relay_rejected: int = 0
    invalid_mac_accepted: int = 0
    by_mode: dict = field(default_factory=dict)  # mode -> [accepted, rejected]
    reasons: dict = field(default_factory=dict)
    pool_fnr: float | None = None
    pool_fpr: float | None = None
    transcripts: list = field(default_factory=list)

    @property
    def benign(self) -> int:
        return self.benign_accepted + self.benign_rejected

    @property
    def relay(self) -> int:
        return self.relay_accepted + self.relay_rejected

    @property
    def benign_acceptance(self) -> float | None:
        return self.benign_accepted / self.benign if self.benign else None

    @property
    def relay_acceptance(self) -> float | None:
        return self.relay_accepted / self.relay if self.relay else None

    def summary(self) -> dict:
        return {
            "benign": {"accepted": self.benign_accepted, "rejected": self.benign_rejected},
            "relay": {"accepted": self.relay_accepted, "rejected": self.relay_rejected},
            "invalid_mac_accepted": self.invalid_mac_accepted,
            "by_mode": {m: {"accepted": a, "rejected": r} for m, (a, r) in sorted(self.by_mode.items())},
            "reasons": dict(sorted(self.reasons.items())),
            "pool_fnr": self.pool_fnr,
            "pool_fpr": self.pool_fpr,
        }


def train_session_model(plan: SimulationPlan, pairs: Sequence[ContextPair] | None = None):
    if pairs is None:
        pairs = generate_pairs(preset(plan.generator, seed=plan.seed), threads=plan.threads)
    mods = SYSTEMS[plan.system]
    schema = FeatureSchema.for_modalities(mods)
    return fit_fused(feature_matrix(pairs, schema), labels_of(pairs), schema, mods,
                     FusionStrategy(plan.fusion), plan.classifier, seed=plan.seed)


def session_pool(plan: SimulationPlan) -> list[ContextPair]:
    """Held-out pairs, seeded apart from the training corpus."""
    config = preset(plan.generator, seed=_derive_seed(plan.seed, 1), n_co=plan.pool_co, n_non=plan.pool_non)
    return generate_pairs(config, threads=plan.threads)


def simulate(sessions: int, attacker: AttackerConfig | None = None, plan: SimulationPlan | None = None,
             model=None, pool: Sequence[ContextPair] | None = None) -> SessionStats:
    """Run ``sessions`` protocol sessions and count the verdicts.

    Each session is benign with probability ``plan.benign_fraction``; a
    benign session replays a co-present pool pair through the protocol,
    an adversarial one a non-co-present pair whose prover is remote, with
    the attacker behaviour drawn from ``attacker.modes``.
    """
    from .proto import COMPARATOR, PROVER, VERIFIER, Attacker, Principal, run_session

    plan = plan or SimulationPlan()
    attacker = attacker or AttackerConfig()
    plan.validate()
    attacker.validate()
    if sessions < 0:
        raise InvalidPlan("session count must be non-negative")
    if model is None:
        model = train_session_model(plan)
    if pool is None:
        pool = session_pool(plan)
    co = [p for p in pool if p.label != NON_CO_PRESENT]
    non = [p for p in pool if p.label == NON_CO_PRESENT]
    if not co or not non:
        raise InvalidPlan("the session pool needs both co-present and non-co-present pairs")

    stats = SessionStats()
    schema = model.schema
    pred_co = model.predict_matrix(feature_matrix(co, schema), schema)
    pred_non = model.predict_matrix(feature_matrix(non, schema), schema)
    stats.pool_fnr = float(1.0 - pred_co.mean())
    stats.pool_fpr = float(pred_non.mean())

    key_rng = np.random.default_rng([plan.seed, 2])
    key, key_v = key_rng.bytes(32), key_rng.bytes(32)
    comparator = Principal(COMPARATOR, key=key, key_v=key_v)
    modes = sorted(attacker.modes)
    weights = np.array([attacker.modes[m] for m in modes], dtype=float)
    weights /= weights.sum()
    draw = np.random.default_rng([plan.seed, 3])
    probe = (plan.probe_hz, plan.probe_amplitude) if plan.probe else None
    channel = CHANNELS[attacker.channel] if attacker.channel else None
    replay_memory: list = []

    for i in range(sessions):
        benign = draw.random() < plan.benign_fraction
        pair = co[int(draw.integers(len(co)))] if benign else non[int(draw.integers(len(non)))]
        prover = Principal(PROVER, key=key, source=pair.prover)
        verifier = Principal(VERIFIER, key_v=key_v, source=pair.verifier)
        adv = None
        if not benign:
            mode = modes[int(draw.choice(len(modes), p=weights))]
            adv = Attacker(mode=mode, spec=attacker.spec, channel=channel, seen=replay_memory)
        t = run_session(prover, verifier, comparator, model, attacker=adv,
                        seed=_derive_seed(plan.seed, 4, i), session=i, probe=probe)
        stats.reasons[t.reason] = stats.reasons.get(t.reason, 0) + 1
        if t.accepted and not t.mac_valid:
            stats.invalid_mac_accepted += 1
        if benign:
            stats.benign_accepted += t.accepted
            stats.benign_rejected += not t.accepted
        else:
            stats.relay_accepted += t.accepted
            stats.relay_rejected += not t.accepted
            counts = stats.by_mode.setdefault(adv.mode, [0, 0])
            counts[0 if t.accepted else 1] += 1
        if plan.keep_transcripts:
            stats.transcripts.append(t)
    return stats
