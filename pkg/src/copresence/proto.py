"""Challenge-response authentication with context comparison.

One session: the prover triggers, the verifier answers with a random
challenge, both sides sense their context, the prover returns a MAC over
the challenge together with its MAC-protected context, and the comparator
accepts only when every MAC checks out and the fused classifier labels the
two contexts co-present.  A relay attacker forwards messages between a
remote prover and the verifier and may manipulate the sensed context.

Also here: the two countermeasures, a sudden-beacon anomaly check and a
high-frequency probe tone emitted by the verifier.
"""
from __future__ import annotations

import hashlib
import hmac
import json
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .attack import AttackSpec, attack_pair, manipulate_audio
from .context import (
    CO_PRESENT,
    NON_CO_PRESENT,
    AudioTrace,
    BeaconSet,
    ContextPair,
    ContextSample,
    Modality,
    _encode_sample,
)
from .fusion import FusedModel, fused_predict

PROVER = "prover"
VERIFIER = "verifier"
COMPARATOR = "comparator"
RELAY_ATTACKER = "relay-attacker"
ROLES = (PROVER, VERIFIER, COMPARATOR, RELAY_ATTACKER)

NONCE_BYTES = 16
KEY_BYTES = 32

ACCEPT = "accept"
REJECT = "reject"

# attacker behaviours; only "relay" forwards valid MACs
RELAY = "relay"
FORGE = "forge"
BITFLIP = "bitflip"
WRONG_KEY = "wrong-key"
REPLAY = "replay"
DROP = "drop"
ATTACK_MODES = (RELAY, FORGE, BITFLIP, WRONG_KEY, REPLAY, DROP)


class MacInvalid(Exception):
    pass


class Timeout(Exception):
    pass


def compute_mac(key: bytes, *parts: bytes) -> bytes:
    """HMAC-SHA256 over the length-prefixed concatenation of ``parts``."""
    h = hmac.new(key, digestmod=hashlib.sha256)
    for p in parts:
        h.update(len(p).to_bytes(8, "big"))
        h.update(p)
    return h.digest()


def verify_response(ch: bytes, rsp: bytes, key: bytes) -> bool:
    """Constant-time check that ``rsp`` is the MAC of ``ch`` under ``key``."""
    return hmac.compare_digest(compute_mac(key, b"rsp", ch), rsp)


def context_bytes(sample: ContextSample) -> bytes:
    """Canonical byte encoding of one sensed context."""
    header = _encode_sample(sample, None)
    header["audio"] = {"rate": sample.audio.sample_rate, "n": len(sample.audio)}
    return json.dumps(header, sort_keys=True).encode() + sample.audio.samples.tobytes()


@dataclass
class Principal:
    """A protocol participant.

    ``key`` is the prover-comparator key K, ``key_v`` the
    verifier-comparator key K' (unused when the comparator is integrated
    with the verifier).  ``source`` returns the context the principal
    senses; it is a fixed sample or a callable taking the session rng.
    """

    role: str
    name: str = ""
    key: bytes | None = None
    key_v: bytes | None = None
    source: ContextSample | Callable | None = None

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        if self.role == RELAY_ATTACKER and (self.key or self.key_v):
            raise ValueError("the relay attacker holds no keys")
        if self.role == COMPARATOR and self.key is None:
            raise ValueError("the comparator needs the prover key")
        self.name = self.name or self.role

    def sense(self, rng: np.random.Generator) -> ContextSample:
        if self.source is None:
            raise ValueError(f"{self.name} has no context source")
        return self.source(rng) if callable(self.source) else self.source


@dataclass
class Attacker:
    """A relay attacker (ghost near the verifier, leech near the prover).

    ``mode`` selects what happens to the prover's response: ``relay``
    forwards it untouched, ``forge`` substitutes random bytes, ``bitflip``
    flips one bit, ``wrong-key`` computes a MAC under the attacker's own
    key, ``replay`` resends a response seen in an earlier session and
    ``drop`` withholds it.  ``spec`` manipulates the sensed contexts and
    ``channel`` degrades relayed audio.
    """

    mode: str = RELAY
    spec: AttackSpec = field(default_factory=AttackSpec)
    channel: object = None
    principal: Principal = field(default_factory=lambda: Principal(RELAY_ATTACKER, "attacker"))
    seen: list = field(default_factory=list)

    def __post_init__(self):
        if self.mode not in ATTACK_MODES:
            raise ValueError(f"unknown attacker mode {self.mode!r}; expected one of {ATTACK_MODES}")


@dataclass
class SessionTranscript:
    session: int
    trigger: str
    challenge: bytes = b""
    response: bytes = b""
    payload_mac: bytes = b""
    relayed: bool = False
    attacker_mode: str | None = None
    attack: str = ""
    mac_valid: bool = False
    votes: tuple = ()
    verdict: str = REJECT
    reason: str = ""
    messages: list = field(default_factory=list)

    @property
    def accepted(self) -> bool:
        return self.verdict == ACCEPT

    def to_json(self) -> dict:
        return {
            "session": self.session, "trigger": self.trigger,
            "challenge": self.challenge.hex(), "response": self.response.hex(),
            "payload_mac": self.payload_mac.hex(), "relayed": self.relayed,
            "attacker_mode": self.attacker_mode, "attack": self.attack,
            "mac_valid": self.mac_valid, "votes": list(self.votes),
            "verdict": self.verdict, "reason": self.reason, "messages": self.messages,
        }


class MessageBus:
    """In-process delivery log; drops are decided by the caller."""

    def __init__(self, transcript: SessionTranscript):
        self.transcript = transcript

    def send(self, src: str, dst: str, kind: str, size: int = 0) -> None:
        self.transcript.messages.append({"from": src, "to": dst, "kind": kind, "bytes": size})


def _flip_bit(data: bytes, rng: np.random.Generator) -> bytes:
    b = bytearray(data)
    i = int(rng.integers(len(b) * 8))
    b[i // 8] ^= 1 << (i % 8)
    return bytes(b)


def run_session(prover: Principal, verifier: Principal, comparator: Principal, model: FusedModel,
                attacker: Attacker | None = None, seed=0, session: int = 0,
                probe: tuple[float, float] | None = None, strict: bool = False) -> SessionTranscript:
    """Execute trigger, challenge, sensing, response and comparison.

    Without an attacker prover and verifier are co-located; with one the
    prover is remote and its context reaches the comparator through the
    attacker.  The verdict is accept exactly when the response MAC and the
    payload MAC verify and ``fused_predict`` labels the (possibly attacked)
    context pair co-present.  With ``strict`` a bad MAC raises
    :class:`MacInvalid` and a dropped response raises :class:`Timeout`
    instead of being recorded as a rejection.
    """
    rng = np.random.default_rng(seed)
    t = SessionTranscript(session=session, trigger=prover.name, relayed=attacker is not None,
                          attacker_mode=attacker.mode if attacker else None,
                          attack=attacker.spec.name if attacker else "")
    bus = MessageBus(t)
    hop = attacker.principal.name if attacker else None

    def deliver(src, dst, kind, size=0):
        if hop:
            bus.send(src, hop, kind, size)
            bus.send(hop, dst, kind, size)
        else:
            bus.send(src, dst, kind, size)

    deliver(prover.name, verifier.name, "trigger")
    t.challenge = rng.bytes(NONCE_BYTES)
    deliver(verifier.name, prover.name, "challenge", NONCE_BYTES)

    cp = prover.sense(rng)
    cv = verifier.sense(rng)
    if probe is not None:
        cv = emit_probe_tone(cv, *probe)
        if attacker is None:
            # a co-located prover hears the probe too
            cp = emit_probe_tone(cp, *probe)

    pair = ContextPair(cp, cv, NON_CO_PRESENT if attacker else CO_PRESENT, f"session-{session}")
    if attacker is not None and attacker.spec.manipulated:
        # manipulation acts on the physical surroundings, so it precedes the MACs
        pair = _attack(pair, attacker, rng)
    rsp = compute_mac(prover.key, b"rsp", t.challenge)
    payload_mac = compute_mac(prover.key, b"ctx", t.challenge, context_bytes(pair.prover))

    if attacker is not None:
        mode = attacker.mode
        if mode == DROP:
            t.reason = "timeout"
            if strict:
                raise Timeout("the response never arrived")
            return t
        if mode == FORGE:
            rsp, payload_mac = rng.bytes(len(rsp)), rng.bytes(len(payload_mac))
        elif mode == BITFLIP:
            rsp = _flip_bit(rsp, rng)
        elif mode == WRONG_KEY:
            own = rng.bytes(KEY_BYTES)
            rsp = compute_mac(own, b"rsp", t.challenge)
            payload_mac = compute_mac(own, b"ctx", t.challenge, context_bytes(pair.prover))
        elif mode == REPLAY:
            if attacker.seen:
                rsp, payload_mac = attacker.seen[int(rng.integers(len(attacker.seen)))]
            else:
                rsp = rng.bytes(len(rsp))
        attacker.seen.append((rsp, payload_mac))
    t.response, t.payload_mac = rsp, payload_mac
    deliver(prover.name, verifier.name, "response", len(rsp) + len(payload_mac))
    bus.send(verifier.name, comparator.name, "contexts")

    # comparator: the MACs cover the challenge and the prover's context as received
    t.mac_valid = (verify_response(t.challenge, rsp, comparator.key)
                   and hmac.compare_digest(
                       compute_mac(comparator.key, b"ctx", t.challenge, context_bytes(pair.prover)),
                       payload_mac))
    if not t.mac_valid:
        t.reason = "mac-invalid"
        if strict:
            raise MacInvalid(f"session {session}: response does not verify")
        return t
    label, votes = fused_predict(model, pair)
    t.votes = votes
    t.verdict = ACCEPT if label == CO_PRESENT else REJECT
    t.reason = "co-present" if t.accepted else "not-co-present"
    bus.send(comparator.name, verifier.name, "verdict")
    return t


def _attack(pair: ContextPair, attacker: Attacker, rng) -> ContextPair:
    spec = attacker.spec
    if attacker.channel is None or Modality.AUDIO not in spec.manipulated:
        return attack_pair(pair, spec)
    pair = manipulate_audio(pair, channel=lambda tr: attacker.channel.apply(tr, rng))
    rest = replace(spec, manipulated=spec.manipulated - {Modality.AUDIO})
    return attack_pair(pair, rest) if rest.manipulated else pair


def dump_transcripts(transcripts: Sequence[SessionTranscript]) -> str:
    """JSON Lines, one transcript per line."""
    return "".join(json.dumps(t.to_json(), sort_keys=True) + "\n" for t in transcripts)


# -- countermeasures --------------------------------------------------------


def radio_anomaly_check(history: Sequence[BeaconSet], current: BeaconSet,
                        ratio: float = 2.0, min_new: int = 5) -> bool:
    """Flag a sudden appearance of beacons.

    The current scan is flagged when it holds more than ``ratio`` times
    the beacons of the latest scan in ``history`` and at least ``min_new``
    identifiers never seen in the history.  Shrinking scans are never
    flagged: an attacker can add beacons but cannot suppress them.
    """
    if len(history) == 0:
        raise ValueError("history must be nonempty")
    previous = len(history[-1])
    seen = frozenset().union(*(h.ids for h in history))
    new = len(current.ids - seen)
    return len(current) > ratio * previous and new >= min_new


def emit_probe_tone(target: ContextSample | AudioTrace, freq: float = 7000.0, amplitude: float = 0.1,
                    phase: float = 0.0):
    """Add a sine at ``freq`` Hz to a locally recorded trace (clipped to [-1, 1])."""
    trace = target.audio if isinstance(target, ContextSample) else target
    if freq < 5000.0:
        raise ValueError("the probe must be a high-frequency tone (>= 5000 Hz)")
    if freq >= trace.sample_rate / 2:
        raise ValueError(f"probe frequency {freq} Hz is above the Nyquist limit")
    if amplitude < 0:
        raise ValueError("amplitude must be non-negative")
    if amplitude == 0:
        return target
    n = len(trace)
    tone = amplitude * np.sin(2 * np.pi * freq * np.arange(n) / trace.sample_rate + phase)
    out = AudioTrace(np.clip(trace.samples + tone, -1.0, 1.0), trace.sample_rate)
    if isinstance(target, ContextSample):
        return replace(target, audio=out)
    return out
