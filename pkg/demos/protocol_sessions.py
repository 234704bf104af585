"""Full challenge-response sessions against a mix of attacker behaviours.

Shows that tampering with the response never gets past the MAC check,
while a relay that equalizes the sensed context is decided by the
classifier alone.

    python3 demos/protocol_sessions.py
"""
import json

from copresence.attack import AttackSpec
from copresence.harness import AttackerConfig, SimulationPlan, session_pool, simulate, train_session_model


def main():
    plan = SimulationPlan(seed=42, benign_fraction=0.3)
    model = train_session_model(plan)
    pool = session_pool(plan)

    honest_relay = AttackerConfig(spec=AttackSpec())
    full_relay = AttackerConfig(spec=AttackSpec.parse("Au,B,W"))
    tamper = AttackerConfig(modes={"forge": 1, "bitflip": 1, "wrong-key": 1, "replay": 1, "drop": 1},
                            spec=AttackSpec.parse("Au,B,W"))

    for name, attacker in (("plain relay", honest_relay), ("relay + {Au,B,W}", full_relay),
                           ("tampering", tamper)):
        stats = simulate(500, attacker, plan, model=model, pool=pool)
        print(f"== {name}")
        print(f"benign accepted {stats.benign_accepted}/{stats.benign} "
              f"(pool FNR {stats.pool_fnr:.3f}); attacks accepted {stats.relay_accepted}/{stats.relay}")
        print(json.dumps(stats.summary()["by_mode"]))


if __name__ == "__main__":
    main()
