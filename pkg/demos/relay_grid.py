"""Streaming the prover's ambient audio to the verifier, with and without a probe tone.

Each cell relays a scene of one audio class into a place of another and
counts how often an audio-only detector accepts the pair.

    python3 demos/relay_grid.py
"""
from copresence.datagen import generate_pairs, preset
from copresence.harness import RelayGridPlan, audio_model, run_audio_relay_grid


def main():
    model = audio_model(generate_pairs(preset("benchmark", seed=42)), "dt", seed=42)

    grid = run_audio_relay_grid(RelayGridPlan(trials=50, channels=("clean", "lossy")), model=model)
    print("relay acceptance, WiFi-like and cellular-like channels")
    print(grid.render_table())

    # the verifier plays a 7 kHz tone; a remote prover never hears it
    probed = run_audio_relay_grid(RelayGridPlan(trials=50, channels=("clean",), probe=True), model=model)
    print("clean channel, verifier emits a probe tone")
    print(probed.render_table())
    before, after = grid.rate("clean", "high", "low"), probed.rate("clean", "high", "low")
    print(f"high -> low acceptance {before:.0%} -> {after:.0%}")


if __name__ == "__main__":
    main()
