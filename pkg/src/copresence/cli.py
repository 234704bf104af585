"""Command-line entry point: ``copresence <subcommand> [options]``.

Exit codes: 0 on success, 2 for an invalid plan or arguments, 3 for an
infeasible attack requested without ``--force``.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .attack import AttackSpec, InfeasibleAttack
from .context import read_dataset
from .datagen import PRESETS, gen_dataset, generate_pairs, preset
from .fusion import FEATURES, FUSION_KINDS, FusionStrategy, load_fused, save_fused, train_fused
from .harness import (
    CHANNELS,
    DEFAULT_PROBE_AMPLITUDE,
    DEFAULT_PROBE_HZ,
    SYSTEMS,
    AttackerConfig,
    EvalReport,
    ExperimentPlan,
    InvalidPlan,
    RelayGridPlan,
    SimulationPlan,
    audio_radio_attacks,
    run_audio_relay_grid,
    run_matrix,
    simulate,
)
from .learn import CLASSIFIERS

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_INFEASIBLE = 3


def _attack_specs(args) -> list[AttackSpec]:
    kw = dict(radio_direction=args.radio_direction, physical_mode=args.physical_mode)
    if args.attack:
        return [AttackSpec.parse(a if a not in ("{}", "none") else "", **kw) for a in args.attack]
    if args.system == "audio-radio":
        return [AttackSpec(a.manipulated, **kw) for a in audio_radio_attacks()]
    mods = sorted(SYSTEMS[args.system], key=lambda m: m.value)
    return [AttackSpec(**kw)] + [AttackSpec(frozenset({m}), **kw) for m in mods]


def _pairs(args):
    if args.dataset:
        return read_dataset(args.dataset)
    return generate_pairs(preset(args.preset, seed=args.seed), threads=args.threads)


def _out(args, name: str) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out / name


def cmd_gen(args) -> int:
    overrides = {"seed": args.seed}
    if args.n_co is not None:
        overrides["n_co"] = args.n_co
    if args.n_non is not None:
        overrides["n_non"] = args.n_non
    path = gen_dataset(preset(args.preset, **overrides), _out(args, "pairs.jsonl"), args.audio, args.threads)
    print(path)
    return EXIT_OK


def cmd_train(args) -> int:
    mods = SYSTEMS[args.system]
    model = train_fused(_pairs(args), mods, FusionStrategy(args.fusion[0]), args.classifier[0],
                        seed=args.seed, threads=args.threads)
    print(save_fused(model, _out(args, "model")))
    return EXIT_OK


def _matrix(args, attacks) -> int:
    plan = ExperimentPlan(system=args.system, fusions=tuple(args.fusion), classifiers=tuple(args.classifier),
                          attacks=attacks, folds=args.folds, undersample=args.undersample, seed=args.seed,
                          dataset=args.dataset, generator=args.preset, force=args.force, threads=args.threads)
    plan.validate()
    report = run_matrix(plan)
    report.write(_out(args, f"{args.name}.csv"), _out(args, f"{args.name}.txt"))
    (Path(args.out) / f"{args.name}.fingerprint.json").write_text(json.dumps(report.fingerprint, indent=2))
    print(report.render_table(), end="")
    return EXIT_OK


def cmd_eval(args) -> int:
    args.name = "eval"
    return _matrix(args, [AttackSpec()])


def cmd_attack_matrix(args) -> int:
    args.name = "attack_matrix"
    return _matrix(args, _attack_specs(args))


def cmd_relay_grid(args) -> int:
    plan = RelayGridPlan(trials=args.trials, channels=tuple(args.channel), classifier=args.classifier[0],
                         seed=args.seed, profile=args.profile, probe=args.probe, probe_hz=args.probe_hz,
                         probe_amplitude=args.probe_amplitude, threads=args.threads)
    pairs = read_dataset(args.dataset) if args.dataset else None
    grid = run_audio_relay_grid(plan, pairs=pairs)
    _out(args, "relay_grid.csv").write_text(grid.to_csv())
    _out(args, "relay_grid.txt").write_text(grid.render_table())
    print(grid.render_table(), end="")
    return EXIT_OK


def _parse_modes(items) -> dict:
    modes = {}
    for item in items or ["relay"]:
        name, _, w = item.partition("=")
        try:
            modes[name] = float(w) if w else 1.0
        except ValueError:
            raise InvalidPlan(f"bad mode weight in {item!r}") from None
    return modes


def cmd_simulate(args) -> int:
    spec = AttackSpec.parse(args.attack[0] if args.attack else "", radio_direction=args.radio_direction,
                            physical_mode=args.physical_mode)
    attacker = AttackerConfig(modes=_parse_modes(args.mode), spec=spec, channel=args.relay_channel,
                              force=args.force)
    plan = SimulationPlan(system=args.system, fusion=args.fusion[0], classifier=args.classifier[0],
                          seed=args.seed, generator=args.preset, benign_fraction=args.benign_fraction,
                          probe=args.probe, probe_hz=args.probe_hz, probe_amplitude=args.probe_amplitude,
                          keep_transcripts=args.transcripts, threads=args.threads)
    plan.validate()
    attacker.validate()
    model = load_fused(args.model) if args.model else None
    stats = simulate(args.sessions, attacker, plan, model=model)
    summary = stats.summary()
    _out(args, "simulation.json").write_text(json.dumps(summary, indent=2))
    if args.transcripts:
        from .proto import dump_transcripts
        _out(args, "transcripts.jsonl").write_text(dump_transcripts(stats.transcripts))
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def cmd_report(args) -> int:
    report = EvalReport.from_csv(Path(args.csv).read_text())
    print(report.render_table(), end="")
    return EXIT_OK


def _globals(suppress: bool) -> argparse.ArgumentParser:
    # the subcommand copies must not overwrite values given before the subcommand
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    g = argparse.ArgumentParser(add_help=False)
    g.add_argument("--seed", type=int, default=d(42))
    g.add_argument("--threads", type=int, default=d(1))
    g.add_argument("--out", default=d("out"), help="output directory")
    return g


def build_parser() -> argparse.ArgumentParser:
    common = _globals(suppress=True)

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--dataset", help="JSON Lines dataset; generated from --preset when omitted")
    data.add_argument("--preset", default="benchmark", choices=sorted(PRESETS))

    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("--system", default="audio-radio", choices=tuple(SYSTEMS))
    model.add_argument("--fusion", action="append", choices=FUSION_KINDS,
                       help="repeatable; default features-fusion")
    model.add_argument("--classifier", action="append", choices=CLASSIFIERS, help="repeatable; default dt")

    attack = argparse.ArgumentParser(add_help=False)
    attack.add_argument("--attack", action="append",
                        help='manipulated modalities, e.g. "Au,B,W"; "{}" is the zero-modality attacker')
    attack.add_argument("--radio-direction", choices=("bi", "uni"), default="bi")
    attack.add_argument("--physical-mode", choices=("zero", "mode"), default="zero")
    attack.add_argument("--force", action="store_true", help="allow attacks outside the feasibility catalog")

    cv = argparse.ArgumentParser(add_help=False)
    cv.add_argument("--folds", type=int, default=10)
    cv.add_argument("--undersample", action="store_true", help="19-subset under-sampling rounds")

    probe = argparse.ArgumentParser(add_help=False)
    probe.add_argument("--probe", action="store_true", help="verifier emits a high-frequency probe tone")
    probe.add_argument("--probe-hz", type=float, default=DEFAULT_PROBE_HZ)
    probe.add_argument("--probe-amplitude", type=float, default=DEFAULT_PROBE_AMPLITUDE)

    p = argparse.ArgumentParser(prog="copresence", description=__doc__.splitlines()[0],
                                parents=[_globals(suppress=False)])
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", parents=[common], help="generate a synthetic dataset")
    g.add_argument("--preset", default="benchmark", choices=sorted(PRESETS))
    g.add_argument("--n-co", type=int)
    g.add_argument("--n-non", type=int)
    g.add_argument("--audio", choices=("wav", "inline"), default="wav")
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("train", parents=[common, data, model], help="train and save a fused model")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", parents=[common, data, model, cv], help="cross-validate without attacks")
    e.set_defaults(func=cmd_eval)

    m = sub.add_parser("attack-matrix", parents=[common, data, model, cv, attack],
                       help="cross-validated FPR under each attack spec")
    m.set_defaults(func=cmd_attack_matrix)

    r = sub.add_parser("relay-grid", parents=[common, probe], help="audio relay acceptance per class pair")
    r.add_argument("--dataset", help="training pairs for the audio model; benchmark when omitted")
    r.add_argument("--trials", type=int, default=50)
    r.add_argument("--channel", action="append", choices=tuple(CHANNELS), help="repeatable; default all")
    r.add_argument("--classifier", action="append", choices=CLASSIFIERS)
    r.add_argument("--profile", default="office")
    r.set_defaults(func=cmd_relay_grid)

    s = sub.add_parser("simulate", parents=[common, model, attack, probe], help="run protocol sessions")
    s.add_argument("--preset", default="benchmark", choices=sorted(PRESETS))
    s.add_argument("--model", help="directory of a saved fused model; trained afresh when omitted")
    s.add_argument("--sessions", type=int, default=1000)
    s.add_argument("--benign-fraction", type=float, default=0.5)
    s.add_argument("--mode", action="append", metavar="MODE[=WEIGHT]",
                   help="attacker behaviour (relay, forge, bitflip, wrong-key, replay, drop); repeatable")
    s.add_argument("--relay-channel", choices=tuple(CHANNELS), help="degrade relayed audio")
    s.add_argument("--transcripts", action="store_true", help="also write transcripts.jsonl")
    s.set_defaults(func=cmd_simulate)

    rep = sub.add_parser("report", parents=[common], help="render a saved CSV report as a text table")
    rep.add_argument("csv")
    rep.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for name, default in (("fusion", [FEATURES]), ("classifier", ["dt"]), ("channel", list(CHANNELS))):
        if hasattr(args, name) and getattr(args, name) is None:
            setattr(args, name, default)
    try:
        return args.func(args)
    except InfeasibleAttack as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (InvalidPlan, ValueError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
