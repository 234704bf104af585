"""Context-manipulation attacker applied to non-co-present pairs.

The prover side is the remote, attended device; the verifier side is the
unattended device next to the attacker.  Audio and the verifier's physical
readings are manipulated at the verifier only.  Radio beacons (by
spoofing) and gas (by releasing it on either side) can be manipulated on
both sides.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .context import (
    NON_CO_PRESENT,
    PHYSICAL,
    RADIO,
    AudioTrace,
    BeaconSet,
    ContextPair,
    Modality,
    format_modalities,
    parse_modalities,
    sorted_modalities,
)
from .features import RateMismatch

UNIDIRECTIONAL = "unidirectional"
BIDIRECTIONAL = "bidirectional"
ZERO_DISTANCE = "zero-distance"
MODE_SUBSTITUTION = "mode-substitution"

# modal co-presence distances of a paired-device corpus (m, ppm, %RH, degC)
MODE_TABLE = {
    Modality.ALTITUDE: 13.54,
    Modality.GAS: 0.3,
    Modality.HUMIDITY: 6.61,
    Modality.TEMPERATURE: 0.153,
}

_DIRECTION_ALIASES = {"bi": BIDIRECTIONAL, "uni": UNIDIRECTIONAL,
                      BIDIRECTIONAL: BIDIRECTIONAL, UNIDIRECTIONAL: UNIDIRECTIONAL}
_MODE_ALIASES = {"zero": ZERO_DISTANCE, "mode": MODE_SUBSTITUTION,
                 ZERO_DISTANCE: ZERO_DISTANCE, MODE_SUBSTITUTION: MODE_SUBSTITUTION}


class InfeasibleAttack(ValueError):
    pass


class UnknownModality(ValueError):
    pass


@dataclass(frozen=True)
class AttackSpec:
    manipulated: frozenset = frozenset()
    radio_direction: str = BIDIRECTIONAL
    physical_mode: str = ZERO_DISTANCE
    mode_table: Mapping = field(default_factory=lambda: dict(MODE_TABLE))
    gas_direction: str = BIDIRECTIONAL

    def __post_init__(self):
        object.__setattr__(self, "manipulated", parse_modalities(self.manipulated))
        try:
            object.__setattr__(self, "radio_direction", _DIRECTION_ALIASES[self.radio_direction])
            object.__setattr__(self, "gas_direction", _DIRECTION_ALIASES[self.gas_direction])
        except KeyError as e:
            raise ValueError(f"unknown direction {e.args[0]!r}") from None
        try:
            object.__setattr__(self, "physical_mode", _MODE_ALIASES[self.physical_mode])
        except KeyError:
            raise ValueError(f"unknown physical mode {self.physical_mode!r}") from None
        table = {Modality(k): float(v) for k, v in dict(self.mode_table).items()}
        if not set(table) <= PHYSICAL:
            raise ValueError("mode table keys must be physical modalities")
        if any(v < 0 for v in table.values()):
            raise ValueError("mode table values must be non-negative")
        object.__setattr__(self, "mode_table", table)

    @classmethod
    def parse(cls, text: str, **kw) -> "AttackSpec":
        """``AttackSpec.parse("Au,B,W", radio_direction="bi")``; ``""`` is the zero-modality attacker."""
        return cls(parse_modalities(text), **kw)

    @property
    def name(self) -> str:
        return format_modalities(self.manipulated)


# -- audio ------------------------------------------------------------------


def _require_non_co(pair: ContextPair):
    if pair.label != NON_CO_PRESENT:
        raise ValueError(f"attacks apply to non-co-present pairs only (pair {pair.pair_id!r})")


def manipulate_audio(pair: ContextPair, channel: Callable[[AudioTrace], AudioTrace] | None = None,
                     source: AudioTrace | None = None) -> ContextPair:
    """Replay the prover's audio at the verifier.

    The verifier then records its own ambient audio plus the relayed prover
    audio (optionally degraded by ``channel``), clipped to [-1, 1].  Traces
    of unequal length are truncated to the shorter one.  ``source``
    replaces the prover's trace as the streamed audio, e.g. a recording
    made by an attacker's microphone next to the prover.
    """
    _require_non_co(pair)
    va = pair.verifier.audio
    pb = pair.prover.audio if source is None else source
    relayed = channel(pb) if channel is not None else pb
    if va.sample_rate != relayed.sample_rate:
        raise RateMismatch(f"sample rates differ: {va.sample_rate} vs {relayed.sample_rate}")
    n = min(len(va), len(relayed))
    mixed = np.clip(va.samples[:n] + relayed.samples[:n], -1.0, 1.0)
    verifier = replace(pair.verifier, audio=AudioTrace(mixed, va.sample_rate))
    return replace(pair, verifier=verifier)


# -- radio ------------------------------------------------------------------


def spoof_union(target: BeaconSet, source: BeaconSet) -> BeaconSet:
    """Add the beacons of ``source`` that ``target`` lacks; existing entries keep their RSSI."""
    merged = dict(target.beacons)
    for m, s in source.beacons.items():
        merged.setdefault(m, s)
    return BeaconSet(target.kind, merged)


def manipulate_radio(pair: ContextPair, direction: str = BIDIRECTIONAL,
                     kinds: Iterable[Modality] = RADIO) -> ContextPair:
    _require_non_co(pair)
    direction = _DIRECTION_ALIASES[direction]
    prover, verifier = pair.prover, pair.verifier
    for kind in sorted_modalities(kinds):
        if kind not in RADIO:
            raise UnknownModality(f"{kind.value} is not a radio modality")
        p_set, v_set = prover.radio(kind), verifier.radio(kind)
        verifier = verifier.with_radio(spoof_union(v_set, p_set))
        if direction == BIDIRECTIONAL:
            prover = prover.with_radio(spoof_union(p_set, v_set))
    return replace(pair, prover=prover, verifier=verifier)


# -- physical ---------------------------------------------------------------


def _mode_target(reference: float, mode: float, modality: Modality, sign: int) -> float:
    value = reference + sign * mode
    if modality == Modality.HUMIDITY and not 0.0 <= value <= 100.0:
        value = reference - sign * mode
    if modality == Modality.GAS and value < 0:
        value = reference + mode
    return value


def manipulate_physical(pair: ContextPair, modalities: Iterable[Modality], mode: str = ZERO_DISTANCE,
                        mode_table: Mapping | None = None, sign: int = 1,
                        gas_direction: str = BIDIRECTIONAL) -> ContextPair:
    """Set the verifier's physical readings relative to the prover's.

    ``zero-distance`` copies the prover reading; ``mode-substitution``
    offsets it by the table value so the distance feature equals that
    value.  Humidity flips the sign when the target would leave [0, 100].
    Gas, when bidirectional, is only ever raised: the lower side is brought
    up toward the higher one.
    """
    _require_non_co(pair)
    mode = _MODE_ALIASES[mode]
    table = {Modality(k): float(v) for k, v in (mode_table or MODE_TABLE).items()}
    mods = set()
    for m in modalities:
        try:
            m = Modality(m)
        except ValueError:
            raise UnknownModality(f"unknown modality {m!r}") from None
        if m not in PHYSICAL:
            raise UnknownModality(f"{m.value} is not a physical modality")
        mods.add(m)
    p, v = pair.prover.physical, pair.verifier.physical
    for m in sorted_modalities(mods):
        target = 0.0 if mode == ZERO_DISTANCE else table[m]
        pv, vv = p.get(m), v.get(m)
        if m == Modality.GAS and _DIRECTION_ALIASES[gas_direction] == BIDIRECTIONAL:
            hi, lo = max(pv, vv), min(pv, vv)
            if hi - lo >= target:
                new_lo, new_hi = hi - target, hi
            else:
                new_lo, new_hi = lo, lo + target
            if pv <= vv:
                p, v = p.with_value(m, new_lo), v.with_value(m, new_hi)
            else:
                p, v = p.with_value(m, new_hi), v.with_value(m, new_lo)
        elif mode == ZERO_DISTANCE:
            v = v.with_value(m, pv)
        else:
            v = v.with_value(m, _mode_target(pv, target, m, sign))
    return replace(
        pair,
        prover=replace(pair.prover, physical=p),
        verifier=replace(pair.verifier, physical=v),
    )


# -- feasibility ------------------------------------------------------------


@dataclass(frozen=True)
class FeasibilityCatalog:
    """Maximal jointly-manipulable modality sets; every subset is feasible too."""

    feasible_sets: tuple[frozenset, ...]
    notes: tuple[str, ...] = ()

    def check(self, manipulated: Iterable[Modality]) -> tuple[bool, frozenset | None]:
        want = frozenset(manipulated)
        for s in self.feasible_sets:
            if want <= s:
                return True, s
        return False, None

    def __contains__(self, manipulated) -> bool:
        return self.check(manipulated)[0]


DEMONSTRATED = FeasibilityCatalog(
    feasible_sets=(
        parse_modalities("Al,B,W"),
        parse_modalities("Au,B,G,H,W"),
        parse_modalities("Au,B,G,T,W"),
        parse_modalities("Au,B,G,W"),
        parse_modalities("B,G,H,W"),
        parse_modalities("B,G,T,W"),
    ),
    notes=(
        "altitude needs an enclosure, which blocks the other physical sensors",
        "humidity can only be increased alongside audio",
        "temperature can only be decreased alongside audio",
        "",
        "",
        "",
    ),
)


def check_feasible(spec: AttackSpec | Iterable[Modality],
                   catalog: FeasibilityCatalog = DEMONSTRATED) -> tuple[bool, frozenset | None]:
    """``(True, covering_set)`` when the manipulated set fits inside a catalog set."""
    mods = spec.manipulated if isinstance(spec, AttackSpec) else frozenset(spec)
    return catalog.check(mods)


# -- whole pairs and folds --------------------------------------------------


def attack_pair(pair: ContextPair, spec: AttackSpec) -> ContextPair:
    """Apply every manipulation of ``spec`` to one non-co-present pair."""
    mods = spec.manipulated
    if Modality.AUDIO in mods:
        pair = manipulate_audio(pair)
    radio = mods & RADIO
    if radio:
        pair = manipulate_radio(pair, spec.radio_direction, radio)
    phys = mods & PHYSICAL
    if phys:
        pair = manipulate_physical(pair, phys, spec.physical_mode, spec.mode_table,
                                   gas_direction=spec.gas_direction)
    return pair


def apply_attack(fold: Sequence[ContextPair], spec: AttackSpec, force: bool = False,
                 catalog: FeasibilityCatalog = DEMONSTRATED) -> list[ContextPair]:
    """Transform every non-co-present pair of ``fold``; co-present pairs pass through.

    Raises :class:`InfeasibleAttack` when the manipulated set is outside
    the catalog, unless ``force`` is set (hypothetical attackers).
    """
    ok, _ = check_feasible(spec, catalog)
    if not ok and not force:
        raise InfeasibleAttack(f"no demonstrated attack manipulates {spec.name} jointly; pass force=True")
    if not spec.manipulated:
        return list(fold)
    return [attack_pair(p, spec) if p.label == NON_CO_PRESENT else p for p in fold]
